"""numpy versions of the compiled kernels, used when the extension is absent."""
import numpy as np

from .splitting import gain_and_scale, pick_split


def bin_columns(X, thresholds, offsets, out):
    for j in range(X.shape[1]):
        t = thresholds[offsets[j]:offsets[j + 1]]
        out[j] = np.searchsorted(t, X[:, j], side="left")


def build_histogram(binned, rows, grad, hess, features, out):
    n_bins = out.shape[1]
    g = grad[rows]
    h = hess[rows]
    for k, f in enumerate(features):
        b = binned[f, rows]
        out[k, :, 0] += np.bincount(b, weights=g, minlength=n_bins)
        out[k, :, 1] += np.bincount(b, weights=h, minlength=n_bins)
        out[k, :, 2] += np.bincount(b, minlength=n_bins)


def scan_histogram(hist, n_thresholds, reg_lambda, gamma, min_child_weight, rtol):
    cum = np.cumsum(hist, axis=1)
    left = cum[:, :-1, :]
    right = cum[:, -1:, :] - left
    GL, HL, CL = left[..., 0], left[..., 1], left[..., 2]
    GR, HR, CR = right[..., 0], right[..., 1], right[..., 2]
    k = np.arange(hist.shape[1] - 1)
    mcw = min_child_weight
    valid = ((k[None, :] < n_thresholds[:, None]) & (CL > 0) & (CR > 0)
             & (HL >= mcw) & (HR >= mcw))
    gain, scale = gain_and_scale(GL, HL, GR, HR, reg_lambda, gamma)
    idx = pick_split(gain, scale, valid, rtol)
    if idx is None:
        return None
    slot, t = divmod(idx, hist.shape[1] - 1)
    return slot, t, float(gain[slot, t])


def partition(binned, rows, feature, split_bin):
    mask = binned[feature, rows] <= split_bin
    return rows[mask], rows[~mask]


def predict_tree(X, feature, threshold, left, right, value, scale, out):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.intp)
    rows = np.arange(n)
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active[r] = feature[node[r]] >= 0
    out += scale * value[node]
