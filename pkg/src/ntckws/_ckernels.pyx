# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; behaviour is identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, INFINITY

cnp.import_array()

BACKEND = "compiled"

cdef enum:
    HI_STATE = 0
    HI_START = 1
    HI_NREAL = 2
    HI_NWILD = 3
    HI_NCLOSED = 4
    HI_CUR = 5
    HI_COUNTED = 6
    HI_PARENT = 7
    HI_COL = 8
    N_HI = 9
    HF_SCORE = 0
    HF_SUM = 1
    HF_BEST = 2
    HF_LP = 3
    N_HF = 4
    COL_BLANK = 0
    COL_REAL = 1
    COL_BYPASS = 3
    TAG_KEYWORD = 1
    TAG_SELF_LOOP = 3
    TAG_BYPASS = 4


cdef inline double _logadd(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def log_sum(values):
    cdef const double[:] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double acc = -INFINITY
    cdef Py_ssize_t i
    for i in range(v.shape[0]):
        acc = _logadd(acc, v[i])
    return acc


def lattice_forward(Py_ssize_t num_states, Py_ssize_t start, arc_src, arc_dst, arc_weight):
    cdef const cnp.int64_t[:] src = np.ascontiguousarray(arc_src, dtype=np.int64)
    cdef const cnp.int64_t[:] dst = np.ascontiguousarray(arc_dst, dtype=np.int64)
    cdef const double[:] w = np.ascontiguousarray(arc_weight, dtype=np.float64)
    out = np.full(num_states, -np.inf)
    cdef double[:] alpha = out
    cdef Py_ssize_t i
    cdef double a
    alpha[start] = 0.0
    with nogil:
        for i in range(src.shape[0]):
            a = alpha[src[i]]
            if a == -INFINITY or w[i] == -INFINITY:
                continue
            alpha[dst[i]] = _logadd(alpha[dst[i]], a + w[i])
    return out


def lattice_backward(Py_ssize_t num_states, arc_src, arc_dst, arc_weight, final_weight):
    cdef const cnp.int64_t[:] src = np.ascontiguousarray(arc_src, dtype=np.int64)
    cdef const cnp.int64_t[:] dst = np.ascontiguousarray(arc_dst, dtype=np.int64)
    cdef const double[:] w = np.ascontiguousarray(arc_weight, dtype=np.float64)
    out = np.array(final_weight, dtype=np.float64, copy=True)
    cdef double[:] beta = out
    cdef Py_ssize_t i
    cdef double b
    with nogil:
        for i in range(src.shape[0] - 1, -1, -1):
            b = beta[dst[i]]
            if b == -INFINITY or w[i] == -INFINITY:
                continue
            beta[src[i]] = _logadd(beta[src[i]], b + w[i])
    return out


def lattice_viterbi(Py_ssize_t num_states, Py_ssize_t start, arc_src, arc_dst, arc_weight):
    cdef const cnp.int64_t[:] src = np.ascontiguousarray(arc_src, dtype=np.int64)
    cdef const cnp.int64_t[:] dst = np.ascontiguousarray(arc_dst, dtype=np.int64)
    cdef const double[:] w = np.ascontiguousarray(arc_weight, dtype=np.float64)
    out_d = np.full(num_states, -np.inf)
    out_b = np.full(num_states, -1, dtype=np.int64)
    cdef double[:] delta = out_d
    cdef cnp.int64_t[:] back = out_b
    cdef Py_ssize_t i
    cdef double a, v
    delta[start] = 0.0
    with nogil:
        for i in range(src.shape[0]):
            a = delta[src[i]]
            if a == -INFINITY or w[i] == -INFINITY:
                continue
            v = a + w[i]
            if v > delta[dst[i]]:
                delta[dst[i]] = v
                back[dst[i]] = i
    return out_d, out_b


def token_pass_step(frame_lp, Py_ssize_t t, hi_in, hf_in, arc_start, arc_col, arc_w, arc_next,
                    arc_tag, col_kind, region, slot_arr):
    cdef const double[:] lp_row = np.ascontiguousarray(frame_lp, dtype=np.float64)
    cdef const cnp.int64_t[:, :] hi = np.ascontiguousarray(hi_in, dtype=np.int64)
    cdef const double[:, :] hf = np.ascontiguousarray(hf_in, dtype=np.float64)
    cdef const cnp.int64_t[:] starts = arc_start
    cdef const cnp.int64_t[:] cols = arc_col
    cdef const double[:] ws = arc_w
    cdef const cnp.int64_t[:] nexts = arc_next
    cdef const cnp.int64_t[:] tags = arc_tag
    cdef const cnp.int64_t[:] kinds = col_kind
    cdef const cnp.int64_t[:] regions = region
    cdef cnp.int64_t[:] slot = slot_arr

    cdef Py_ssize_t n = hi.shape[0]
    cdef Py_ssize_t cap = 0
    cdef Py_ssize_t h, a, s, d, j, c, k, n_out = 0
    for h in range(n):
        s = hi[h, HI_STATE]
        cap += starts[s + 1] - starts[s]
    if cap > slot.shape[0]:
        cap = slot.shape[0]
    oi_arr = np.empty((cap, N_HI), dtype=np.int64)
    of_arr = np.empty((cap, N_HF), dtype=np.float64)
    touched_arr = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[:, :] oi = oi_arr
    cdef double[:, :] of = of_arr
    cdef cnp.int64_t[:] touched = touched_arr

    cdef double score, lp, sc, sm, best
    cdef cnp.int64_t start, nreal, nwild, ncl, cur, counted, tag
    with nogil:
        for h in range(n):
            s = hi[h, HI_STATE]
            score = hf[h, HF_SCORE]
            for a in range(starts[s], starts[s + 1]):
                c = cols[a]
                lp = lp_row[c]
                sc = score + ws[a] + lp
                if sc == -INFINITY:
                    continue
                d = nexts[a]
                j = slot[d]
                if j >= 0 and not sc > of[j, HF_SCORE]:
                    continue
                if regions[s] == 0 and regions[d] == 1:
                    start = t; nreal = 0; nwild = 0; sm = 0.0; ncl = 0; cur = -1; best = 0.0; counted = 0
                else:
                    start = hi[h, HI_START]; nreal = hi[h, HI_NREAL]; nwild = hi[h, HI_NWILD]
                    sm = hf[h, HF_SUM]; ncl = hi[h, HI_NCLOSED]; cur = hi[h, HI_CUR]
                    best = hf[h, HF_BEST]; counted = hi[h, HI_COUNTED]
                if regions[d] == 1:
                    tag = tags[a]
                    if tag == TAG_KEYWORD:
                        nreal += 1
                    elif tag == TAG_SELF_LOOP or tag == TAG_BYPASS:
                        nwild += 1
                    k = kinds[c]
                    if k == COL_BLANK:
                        if cur >= 0 and counted:
                            sm += best
                            ncl += 1
                        cur = -1; best = 0.0; counted = 0
                    elif c == cur:
                        if lp > best:
                            best = lp
                    else:
                        if cur >= 0 and counted:
                            sm += best
                            ncl += 1
                        cur = c; best = lp
                        counted = 1 if (k == COL_REAL or k == COL_BYPASS) else 0
                if j < 0:
                    j = n_out
                    slot[d] = j
                    touched[j] = d
                    n_out += 1
                oi[j, HI_STATE] = d; oi[j, HI_START] = start; oi[j, HI_NREAL] = nreal
                oi[j, HI_NWILD] = nwild; oi[j, HI_NCLOSED] = ncl; oi[j, HI_CUR] = cur
                oi[j, HI_COUNTED] = counted; oi[j, HI_PARENT] = h; oi[j, HI_COL] = c
                of[j, HF_SCORE] = sc; of[j, HF_SUM] = sm; of[j, HF_BEST] = best; of[j, HF_LP] = lp
        for j in range(n_out):
            slot[touched[j]] = -1
    return oi_arr[:n_out].copy(), of_arr[:n_out].copy()
