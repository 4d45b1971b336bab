"""Pure-Python reference kernels. ``_ckernels.pyx`` mirrors these exactly.

Lattice kernels take arc arrays sorted by source state in topological
order. The token-passing step works on packed hypothesis matrices:

``hi`` int64 columns: HI_STATE, HI_START, HI_NREAL, HI_NWILD, HI_NCLOSED,
HI_CUR, HI_COUNTED, HI_PARENT, HI_COL.
``hf`` float64 columns: HF_SCORE, HF_SUM, HF_BEST, HF_LP.
"""

import math

import numpy as np

NEG_INF = -math.inf

HI_STATE, HI_START, HI_NREAL, HI_NWILD, HI_NCLOSED, HI_CUR, HI_COUNTED, HI_PARENT, HI_COL = range(9)
HF_SCORE, HF_SUM, HF_BEST, HF_LP = range(4)
N_HI, N_HF = 9, 4

# column kinds
COL_BLANK, COL_REAL, COL_SELF_LOOP, COL_BYPASS = range(4)
# arc tags, same values as fst.ArcKind
TAG_KEYWORD, TAG_SELF_LOOP, TAG_BYPASS = 1, 3, 4

BACKEND = "python"


def _logadd(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def log_sum(values):
    acc = NEG_INF
    for v in np.asarray(values, dtype=np.float64).tolist():
        acc = _logadd(acc, v)
    return acc


def lattice_forward(num_states, start, arc_src, arc_dst, arc_weight):
    alpha = [NEG_INF] * num_states
    alpha[start] = 0.0
    for s, d, w in zip(arc_src.tolist(), arc_dst.tolist(), arc_weight.tolist()):
        a = alpha[s]
        if a == NEG_INF or w == NEG_INF:
            continue
        alpha[d] = _logadd(alpha[d], a + w)
    return np.asarray(alpha, dtype=np.float64)


def lattice_backward(num_states, arc_src, arc_dst, arc_weight, final_weight):
    beta = final_weight.astype(np.float64).tolist()
    src, dst, wt = arc_src.tolist(), arc_dst.tolist(), arc_weight.tolist()
    for i in range(len(src) - 1, -1, -1):
        b = beta[dst[i]]
        if b == NEG_INF or wt[i] == NEG_INF:
            continue
        beta[src[i]] = _logadd(beta[src[i]], b + wt[i])
    return np.asarray(beta, dtype=np.float64)


def lattice_viterbi(num_states, start, arc_src, arc_dst, arc_weight):
    delta = [NEG_INF] * num_states
    back = [-1] * num_states
    delta[start] = 0.0
    for i, (s, d, w) in enumerate(zip(arc_src.tolist(), arc_dst.tolist(), arc_weight.tolist())):
        a = delta[s]
        if a == NEG_INF or w == NEG_INF:
            continue
        v = a + w
        if v > delta[d]:
            delta[d] = v
            back[d] = i
    return np.asarray(delta, dtype=np.float64), np.asarray(back, dtype=np.int64)


def token_pass_step(frame_lp, t, hi, hf, arc_start, arc_col, arc_w, arc_next, arc_tag,
                    col_kind, region, slot):
    """Extend every hypothesis over one frame and merge by destination state.

    ``slot`` is an int64 scratch array over graph states filled with -1; it
    is restored before returning. Output rows appear in first-arrival order;
    on equal scores the earlier arrival wins.
    """
    lp_row = frame_lp.tolist()
    starts, cols, ws, nexts, tags = (arc_start.tolist(), arc_col.tolist(), arc_w.tolist(),
                                     arc_next.tolist(), arc_tag.tolist())
    kinds, regions = col_kind.tolist(), region.tolist()
    out_i: list = []
    out_f: list = []
    touched: list = []
    for h, (row_i, row_f) in enumerate(zip(hi.tolist(), hf.tolist())):
        s = row_i[HI_STATE]
        score = row_f[HF_SCORE]
        for a in range(starts[s], starts[s + 1]):
            c = cols[a]
            lp = lp_row[c]
            sc = score + ws[a] + lp
            if sc == NEG_INF:
                continue
            d = nexts[a]
            j = slot[d]
            if j >= 0 and not sc > out_f[j][HF_SCORE]:
                continue
            if regions[s] == 0 and regions[d] == 1:
                start, nreal, nwild, sm, ncl, cur, best, counted = t, 0, 0, 0.0, 0, -1, 0.0, 0
            else:
                start, nreal, nwild = row_i[HI_START], row_i[HI_NREAL], row_i[HI_NWILD]
                sm, ncl, cur = row_f[HF_SUM], row_i[HI_NCLOSED], row_i[HI_CUR]
                best, counted = row_f[HF_BEST], row_i[HI_COUNTED]
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
                    cur, best, counted = -1, 0.0, 0
                elif c == cur:
                    if lp > best:
                        best = lp
                else:
                    if cur >= 0 and counted:
                        sm += best
                        ncl += 1
                    cur, best = c, lp
                    counted = 1 if (k == COL_REAL or k == COL_BYPASS) else 0
            new_i = [d, start, nreal, nwild, ncl, cur, counted, h, c]
            new_f = [sc, sm, best, lp]
            if j >= 0:
                out_i[j] = new_i
                out_f[j] = new_f
            else:
                slot[d] = len(out_i)
                touched.append(d)
                out_i.append(new_i)
                out_f.append(new_f)
    for d in touched:
        slot[d] = -1
    if not out_i:
        return np.zeros((0, N_HI), dtype=np.int64), np.zeros((0, N_HF), dtype=np.float64)
    return np.asarray(out_i, dtype=np.int64), np.asarray(out_f, dtype=np.float64)
