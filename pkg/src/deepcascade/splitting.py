"""Second-order split gain and the candidate selection rule shared by every
split finder (histogram kernels and the exhaustive reference)."""
import numpy as np

# gains closer than this fraction of the largest candidate's term magnitude
# are treated as equal; absorbs summation-order noise between code paths
GAIN_RTOL = 1e-10


def term(G, H, reg_lambda):
    denom = H + reg_lambda
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > 0, G * G / np.where(denom > 0, denom, 1.0), 0.0)


def gain_and_scale(GL, HL, GR, HR, reg_lambda, gamma):
    """Split gain and the magnitude of its three terms (for tolerances)."""
    L = term(GL, HL, reg_lambda)
    R = term(GR, HR, reg_lambda)
    P = term(GL + GR, HL + HR, reg_lambda)
    return 0.5 * (L + R - P) - gamma, L + R + P


def pick_split(gain, scale, valid, rtol=GAIN_RTOL):
    """Index of the winning candidate in scan order, or ``None``.

    The winner is the first valid candidate within tolerance of the best
    gain; nothing is returned unless that gain is clearly positive.
    """
    if not valid.any():
        return None
    best = gain[valid].max()
    tol = rtol * scale[valid].max()
    if best <= tol:
        return None
    return int(np.flatnonzero(valid & (gain >= best - tol))[0])
