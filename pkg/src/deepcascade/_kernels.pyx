# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for histogram tree growing and tree evaluation.

Every routine has a numpy twin in ``_pykernels`` producing bit-identical
results: per-bin sums accumulate in row order and the split scan evaluates
the gain expression in the same operation order.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint16_t
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef fused bin_t:
    uint8_t
    uint16_t


def bin_columns(const double[:, ::1] X, const double[::1] thresholds,
                const cnp.intp_t[::1] offsets, bin_t[:, ::1] out):
    """``out[j, i]`` = number of column-j thresholds strictly below ``X[i, j]``."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, j, cnt, base, half, m
    cdef Py_ssize_t i0, i1, block = 512
    cdef const double* t
    cdef double x
    with nogil:
        i0 = 0
        while i0 < n:
            i1 = min(i0 + block, n)
            for j in range(d):
                cnt = offsets[j + 1] - offsets[j]
                if cnt == 0:
                    for i in range(i0, i1):
                        out[j, i] = 0
                    continue
                t = &thresholds[offsets[j]]
                for i in range(i0, i1):
                    x = X[i, j]
                    # branchless lower bound
                    base = 0
                    m = cnt
                    while m > 1:
                        half = m >> 1
                        base = base + half if t[base + half - 1] < x else base
                        m -= half
                    out[j, i] = <bin_t>(base + (t[base] < x))
            i0 = i1


def build_histogram(const bin_t[:, ::1] binned, const cnp.intp_t[::1] rows,
                    const double[::1] grad, const double[::1] hess,
                    const cnp.intp_t[::1] features, double[:, :, ::1] out):
    """Add (grad, hess, count) of ``rows`` into ``out[slot, bin]``.

    ``binned`` is feature-major: ``binned[feature, row]``.
    """
    cdef Py_ssize_t n = rows.shape[0], nf = features.shape[0]
    cdef Py_ssize_t i, k, b3
    cdef const bin_t* col
    cdef double* hist
    cdef double* g = <double*> malloc(n * sizeof(double))
    cdef double* h = <double*> malloc(n * sizeof(double))
    if (g == NULL or h == NULL) and n > 0:
        free(g)
        free(h)
        raise MemoryError()
    with nogil:
        for i in range(n):
            g[i] = grad[rows[i]]
            h[i] = hess[rows[i]]
        for k in range(nf):
            col = &binned[features[k], 0]
            hist = &out[k, 0, 0]
            for i in range(n):
                b3 = 3 * <Py_ssize_t> col[rows[i]]
                hist[b3] += g[i]
                hist[b3 + 1] += h[i]
                hist[b3 + 2] += 1.0
    free(g)
    free(h)


cdef inline double _term(double G, double H, double lam) nogil:
    cdef double denom = H + lam
    if denom > 0:
        return G * G / denom
    return 0.0


def scan_histogram(const double[:, :, ::1] hist, const cnp.intp_t[::1] n_thresholds,
                   double reg_lambda, double gamma, double min_child_weight, double rtol):
    """Best split over all slots and thresholds: (slot, index, gain) or None."""
    cdef Py_ssize_t nf = hist.shape[0], nb = hist.shape[1], nk = nb - 1
    cdef Py_ssize_t f, k, b, best_f = -1, best_k = -1
    cdef double Gt, Ht, Ct, GL, HL, CL, GR, HR, CR, L, R, P, gain, scale
    cdef double best = 0.0, smax = 0.0, tol
    cdef bint any_valid = False
    if nk <= 0:
        return None
    gains_arr = np.empty((nf, nk))
    valid_arr = np.zeros((nf, nk), dtype=np.uint8)
    cdef double[:, ::1] gains = gains_arr
    cdef uint8_t[:, ::1] valid = valid_arr
    with nogil:
        for f in range(nf):
            Gt = 0.0
            Ht = 0.0
            Ct = 0.0
            for b in range(nb):
                Gt = Gt + hist[f, b, 0]
                Ht = Ht + hist[f, b, 1]
                Ct = Ct + hist[f, b, 2]
            GL = 0.0
            HL = 0.0
            CL = 0.0
            for k in range(nk):
                GL = GL + hist[f, k, 0]
                HL = HL + hist[f, k, 1]
                CL = CL + hist[f, k, 2]
                if k >= n_thresholds[f]:
                    continue
                GR = Gt - GL
                HR = Ht - HL
                CR = Ct - CL
                if not (CL > 0 and CR > 0 and HL >= min_child_weight and HR >= min_child_weight):
                    continue
                L = _term(GL, HL, reg_lambda)
                R = _term(GR, HR, reg_lambda)
                P = _term(GL + GR, HL + HR, reg_lambda)
                gain = 0.5 * (L + R - P) - gamma
                scale = L + R + P
                gains[f, k] = gain
                valid[f, k] = 1
                if not any_valid or gain > best:
                    best = gain
                if not any_valid or scale > smax:
                    smax = scale
                any_valid = True
        if any_valid:
            tol = rtol * smax
            if best > tol:
                for f in range(nf):
                    for k in range(nk):
                        if valid[f, k] and gains[f, k] >= best - tol:
                            best_f = f
                            best_k = k
                            break
                    if best_f >= 0:
                        break
    if best_f < 0:
        return None
    return best_f, best_k, gains[best_f, best_k]


def partition(const bin_t[:, ::1] binned, const cnp.intp_t[::1] rows,
              Py_ssize_t feature, Py_ssize_t split_bin):
    """Stable split of ``rows`` into (bin <= split_bin, bin > split_bin)."""
    cdef Py_ssize_t n = rows.shape[0], i, nl = 0, nr = 0, r
    left_arr = np.empty(n, dtype=np.intp)
    right_arr = np.empty(n, dtype=np.intp)
    cdef cnp.intp_t[::1] left = left_arr
    cdef cnp.intp_t[::1] right = right_arr
    cdef const bin_t* col = &binned[feature, 0]
    with nogil:
        for i in range(n):
            r = rows[i]
            if col[r] <= split_bin:
                left[nl] = r
                nl += 1
            else:
                right[nr] = r
                nr += 1
    return left_arr[:nl], right_arr[:nr]


def predict_tree(const double[:, ::1] X, const cnp.intp_t[::1] feature,
                 const double[::1] threshold, const cnp.intp_t[::1] left,
                 const cnp.intp_t[::1] right, const double[::1] value,
                 double scale, double[::1] out):
    """``out[i] += scale * value[leaf(i)]``, routing ``x <= threshold`` left."""
    cdef Py_ssize_t n = X.shape[0], i, node
    cdef double step
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            step = scale * value[node]
            out[i] += step
