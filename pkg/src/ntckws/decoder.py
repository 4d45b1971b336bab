"""Streaming token-passing keyword decoder.

Per frame: extend every active hypothesis along the graph (wildcard
traversals add the decode-time lambda), merge by destination state keeping
the best score, prune to ``max_active``, then look at keyword-final states.
A keyword hit is held while better ones may still arrive and emitted once
``hold_frames`` frames pass with no candidate; the keyword part of the
search is then reset while background hypotheses carry on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .emissions import Posteriorgram
from .fst import NEG_INF, ArcKind, BestPath, Fst, connect
from .graph import BLANK, BYPASS, SELF_LOOP, SearchSpace
from .kernels import (
    HF_BEST, HF_LP, HF_SCORE, HF_SUM, HI_COL, HI_COUNTED, HI_CUR, HI_NCLOSED,
    HI_NREAL, HI_NWILD, HI_PARENT, HI_START, HI_STATE, N_HF, N_HI,
)


class DecoderError(ValueError):
    pass


@dataclass(frozen=True)
class Hypothesis:
    state: int
    score: float
    start_frame: int = -1
    real_token_count: int = 0
    wildcard_count: int = 0
    region: int = 0
    trace: tuple = ()  # (symbol, emission log-prob) per keyword frame


Scorer = Callable[[Hypothesis], float]


@dataclass(frozen=True)
class DecoderConfig:
    max_active: Optional[int] = 20
    lambda_self_loop: float = 4.0
    lambda_bypass: float = 2.0
    confidence_threshold: float = 0.0
    min_real_tokens: int = 1
    hold_frames: int = 10
    max_keyword_frames: Optional[int] = 100
    scorer: Optional[Scorer] = field(default=None, compare=False)

    def __post_init__(self):
        if self.max_active is not None and self.max_active < 1:
            raise ValueError("max_active must be >= 1 (or None for no pruning)")
        if self.hold_frames < 0:
            raise ValueError("hold_frames must be >= 0")
        if self.max_keyword_frames is not None and self.max_keyword_frames < 1:
            raise ValueError("max_keyword_frames must be >= 1 (or None for no limit)")
        if self.min_real_tokens < 1:
            raise ValueError("min_real_tokens must be >= 1")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must lie in [0, 1]")
        for name in ("lambda_self_loop", "lambda_bypass"):
            v = getattr(self, name)
            if math.isnan(v) or v == math.inf:
                raise ValueError(f"{name} must be finite or -inf, got {v}")


@dataclass(frozen=True)
class Detection:
    utt: str
    keyword: str
    start: int
    end: int
    confidence: float
    real_token_count: int
    wildcard_count: int

    def to_dict(self) -> dict:
        return {"utt": self.utt, "keyword": self.keyword, "start": self.start, "end": self.end,
                "score": self.confidence, "real_tokens": self.real_token_count,
                "wildcards": self.wildcard_count}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(str(d["utt"]), str(d["keyword"]), int(d["start"]), int(d["end"]),
                   float(d["score"]), int(d["real_tokens"]), int(d["wildcards"]))


def confidence_score(h: Hypothesis, blank: str = BLANK) -> float:
    """Geometric mean of the best emission probability of each keyword token.

    Tokens are maximal runs of one non-blank symbol in the trace. ``*`` runs
    stand in for the token they skip; ``@`` insertions are not counted.
    """
    logs = []
    cur, best = None, NEG_INF
    for sym, lp in list(h.trace) + [(blank, 0.0)]:
        if sym == cur:
            best = max(best, lp)
            continue
        if cur is not None and cur != SELF_LOOP:
            logs.append(best)
        cur, best = (None, NEG_INF) if sym == blank else (sym, lp)
    if not logs:
        raise DecoderError("hypothesis has no keyword tokens to score")
    return math.exp(sum(logs) / len(logs))


def prune(active: Sequence[Hypothesis], max_active: Optional[int]) -> list[Hypothesis]:
    """Keep the ``max_active`` best.

    Exact ties prefer keyword-region hypotheses (background states are
    interchangeable fillers), then lower state, then earlier start.
    """
    ranked = sorted(active, key=lambda h: (-h.score, -h.region, h.state, h.start_frame))
    return ranked if max_active is None else ranked[:max_active]


def _prune_rows(hi: np.ndarray, hf: np.ndarray, region: np.ndarray, max_active: Optional[int]) -> np.ndarray:
    n = len(hi)
    if max_active is None or n <= max_active:
        keep = np.arange(n)
    else:
        order = np.lexsort((hi[:, HI_START], hi[:, HI_STATE], -region[hi[:, HI_STATE]], -hf[:, HF_SCORE]))
        keep = order[:max_active]
    return keep[np.argsort(hi[keep, HI_STATE], kind="stable")]


class DecodingGraph:
    """Flat CSR form of a search space with decode-time lambdas applied.

    Arcs whose weight becomes -inf are removed and the graph is trimmed and
    renumbered breadth-first, so a wildcard graph decoded at lambda = -inf
    is the same object as the plain graph.
    """

    def __init__(self, space: SearchSpace, lambda_self_loop: float, lambda_bypass: float,
                 symbols: Sequence[str]):
        src = space.fst
        boost = {ArcKind.SELF_LOOP: lambda_self_loop, ArcKind.BYPASS: lambda_bypass}
        tmp = Fst(src.isyms, src.osyms)
        tmp.add_states(src.num_states)
        tmp.set_start(src.start)
        for s in src.states():
            for a in src.arcs(s):
                if a.ilabel == 0:
                    raise DecoderError("search space has epsilon arcs; token passing needs one label per frame")
                w = a.weight + boost.get(a.kind, 0.0)
                if w != NEG_INF:
                    tmp.add_arc(s, a.ilabel, a.olabel, w, a.nextstate, a.kind)
            if src.is_final(s):
                tmp.set_final(s, src.final(s))
        g = connect(tmp)
        if g.num_states == 0:
            raise DecoderError("search space accepts nothing at these lambdas")
        remap = g.meta["state_map"]
        inv = np.empty(g.num_states, dtype=np.int64)
        for old, new in remap.items():
            inv[new] = old

        col_of = {sym: i for i, sym in enumerate(symbols)}
        vocab = space.vocab
        label_col = {}
        for label in g.input_labels():
            sym = vocab.symbol(label)
            if sym not in col_of:
                raise DecoderError(f"posteriorgram has no column for graph token {sym!r}")
            label_col[label] = col_of[sym]

        n = g.num_states
        arc_start = np.zeros(n + 1, dtype=np.int64)
        cols, ws, nexts, tags, labels = [], [], [], [], []
        for s in range(n):
            for a in g.arcs(s):
                cols.append(label_col[a.ilabel])
                ws.append(a.weight)
                nexts.append(a.nextstate)
                tags.append(int(a.kind))
                labels.append(a.ilabel)
            arc_start[s + 1] = len(cols)
        self.num_states = n
        self.start = g.start
        self.arc_start = arc_start
        self.arc_col = np.asarray(cols, dtype=np.int64)
        self.arc_w = np.asarray(ws, dtype=np.float64)
        self.arc_next = np.asarray(nexts, dtype=np.int64)
        self.arc_tag = np.asarray(tags, dtype=np.int64)
        self.arc_label = np.asarray(labels, dtype=np.int64)
        self.region = np.ascontiguousarray(space.region[inv], dtype=np.int64)
        self.keyword_final = np.zeros(n, dtype=bool)
        for s in space.keyword_final:
            if s in remap:
                self.keyword_final[remap[s]] = True
        self.final_weight = np.array([g.final(s) for s in range(n)], dtype=np.float64)
        self.symbols = tuple(symbols)
        self.col_kind = np.array(
            [kernels.COL_BLANK if sym == vocab.blank else kernels.COL_SELF_LOOP if sym == SELF_LOOP
             else kernels.COL_BYPASS if sym == BYPASS else kernels.COL_REAL for sym in symbols],
            dtype=np.int64)
        self.original_state = inv


class KeywordDecoder:
    """One decoder per stream; feed log-posterior rows with :meth:`accept`."""

    def __init__(self, space: SearchSpace, cfg: DecoderConfig, symbols: Sequence[str], *,
                 utt: str = "", record_traces: bool = False, detect: bool = True):
        self.space = space
        self.cfg = cfg
        self.graph = DecodingGraph(space, cfg.lambda_self_loop, cfg.lambda_bypass, symbols)
        self.utt = utt
        self.keyword = " ".join(space.keyword)
        self.record = record_traces or cfg.scorer is not None
        self.detect = detect
        self._slot = np.full(self.graph.num_states, -1, dtype=np.int64)
        self.reset()

    def reset(self) -> None:
        self.frame = 0
        self._t_last = -1
        self.max_active_seen = 1
        self._pending: Optional[tuple] = None
        self._node_prev: list[np.ndarray] = []
        self._node_col: list[np.ndarray] = []
        self._node_lp: list[np.ndarray] = []
        self._n_nodes = 0
        self._seed(0.0)

    def _seed(self, score: float) -> None:
        hi = np.zeros((1, N_HI), dtype=np.int64)
        hi[0, HI_STATE] = self.graph.start
        hi[0, [HI_START, HI_CUR, HI_PARENT, HI_COL]] = -1
        hf = np.zeros((1, N_HF), dtype=np.float64)
        hf[0, HF_SCORE] = score
        self.hi, self.hf = hi, hf
        self.node = np.full(1, -1, dtype=np.int64)

    # ---------------------------------------------------------------- stepping

    def accept(self, log_probs: np.ndarray) -> list[Detection]:
        log_probs = np.asarray(log_probs, dtype=np.float64)
        if log_probs.ndim == 1:
            log_probs = log_probs[None, :]
        if log_probs.shape[1] != len(self.graph.symbols):
            raise DecoderError(f"expected {len(self.graph.symbols)} columns, got {log_probs.shape[1]}")
        g = self.graph
        out: list[Detection] = []
        for row in log_probs:
            hi, hf = kernels.token_pass_step(row, self.frame, self.hi, self.hf, g.arc_start, g.arc_col,
                                             g.arc_w, g.arc_next, g.arc_tag, g.col_kind, g.region, self._slot)
            cap = self.cfg.max_keyword_frames
            if cap is not None:
                # keyword paths may not stretch past the duration cap
                ok = (g.region[hi[:, HI_STATE]] == 0) | (self.frame - hi[:, HI_START] < cap)
                if not ok.all():
                    idx = np.flatnonzero(ok)
                    hi, hf = hi[idx], hf[idx]
            keep = _prune_rows(hi, hf, g.region, self.cfg.max_active)
            parents = hi[keep, HI_PARENT]
            self.hi, self.hf = hi[keep], hf[keep]
            if self.cfg.max_active is not None:
                assert len(self.hi) <= self.cfg.max_active, "beam overflow"
            self.max_active_seen = max(self.max_active_seen, len(self.hi))
            if self.record:
                prev = self.node[parents] if len(parents) else parents
                self._node_prev.append(prev)
                self._node_col.append(self.hi[:, HI_COL].copy())
                self._node_lp.append(self.hf[:, HF_LP].copy())
                self.node = np.arange(self._n_nodes, self._n_nodes + len(keep), dtype=np.int64)
                self._n_nodes += len(keep)
                self._nodes_cache = None
            else:
                self.node = np.full(len(keep), -1, dtype=np.int64)
            self._t_last = self.frame
            if self.detect:
                out.extend(self._check_final())
            self.frame += 1
        return out

    def finish(self) -> list[Detection]:
        out = []
        if self._pending is not None:
            out.append(self._emit())
        return out

    def _confidences(self, rows: np.ndarray) -> np.ndarray:
        hi, hf = self.hi[rows], self.hf[rows]
        open_tok = (hi[:, HI_CUR] >= 0) & (hi[:, HI_COUNTED] == 1)
        num = hf[:, HF_SUM] + np.where(open_tok, hf[:, HF_BEST], 0.0)
        den = hi[:, HI_NCLOSED] + open_tok
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, np.exp(num / np.maximum(den, 1)), -1.0)

    def _check_final(self) -> list[Detection]:
        g = self.graph
        states = self.hi[:, HI_STATE]
        rows = np.flatnonzero(g.keyword_final[states] & (self.hi[:, HI_NREAL] >= self.cfg.min_real_tokens))
        best = None
        if rows.size:
            if self.cfg.scorer is not None:
                conf = np.array([self.cfg.scorer(self.hypothesis(int(r))) for r in rows])
            else:
                conf = self._confidences(rows)
            ok = conf >= self.cfg.confidence_threshold
            ok &= conf >= 0
            for r, c in zip(rows[ok], conf[ok]):
                key = (c, self.hf[r, HF_SCORE])
                if best is None or key > best[0]:
                    best = (key, int(r), float(c))
        if best is not None:
            _, r, c = best
            cand = (c, int(self.hi[r, HI_START]), self.frame, int(self.hi[r, HI_NREAL]), int(self.hi[r, HI_NWILD]))
            if self._pending is None or c > self._pending[0]:
                self._pending = cand
            return []
        if self._pending is not None and self.frame - self._pending[2] > self.cfg.hold_frames:
            return [self._emit()]
        return []

    def _emit(self) -> Detection:
        c, start, end, nreal, nwild = self._pending
        self._pending = None
        det = Detection(self.utt, self.keyword, start, end, min(max(c, 0.0), 1.0), nreal, nwild)
        keep = np.flatnonzero(self.graph.region[self.hi[:, HI_STATE]] == 0)
        if keep.size:
            self.hi, self.hf, self.node = self.hi[keep], self.hf[keep], self.node[keep]
        else:
            self._seed(0.0)
        return det

    # ---------------------------------------------------------------- inspection

    def _nodes(self):
        if getattr(self, "_nodes_cache", None) is None:
            cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)  # noqa: E731
            self._nodes_cache = (cat(self._node_prev, np.int64), cat(self._node_col, np.int64),
                                 cat(self._node_lp, np.float64))
        return self._nodes_cache

    def _trace(self, node: int) -> list[tuple[int, float]]:
        prev, col, lp = self._nodes()
        out = []
        while node >= 0:
            out.append((int(col[node]), float(lp[node])))
            node = int(prev[node])
        out.reverse()
        return out

    def hypothesis(self, row: int) -> Hypothesis:
        """Materialise active row ``row``; the trace covers the keyword part only."""
        if not self.record:
            raise DecoderError("traces were not recorded; construct with record_traces=True")
        hi, hf = self.hi[row], self.hf[row]
        start = int(hi[HI_START])
        full = self._trace(int(self.node[row]))
        # the chain restarts when the search is reseeded
        offset = self._t_last + 1 - len(full)
        keyword_part = full[start - offset:] if start >= 0 else []
        syms = self.graph.symbols
        return Hypothesis(int(self.graph.original_state[hi[HI_STATE]]), float(hf[HF_SCORE]), start,
                          int(hi[HI_NREAL]), int(hi[HI_NWILD]), int(self.graph.region[hi[HI_STATE]]),
                          tuple((syms[c], lp) for c, lp in keyword_part))

    def active(self) -> list[Hypothesis]:
        if self.record:
            return [self.hypothesis(i) for i in range(len(self.hi))]
        reg = self.graph.region
        return [Hypothesis(int(self.graph.original_state[s]), float(sc), int(st), int(nr), int(nw), int(reg[s]))
                for s, sc, st, nr, nw in zip(self.hi[:, HI_STATE], self.hf[:, HF_SCORE], self.hi[:, HI_START],
                                             self.hi[:, HI_NREAL], self.hi[:, HI_NWILD])]

    def best_final(self) -> Optional[BestPath]:
        """Best hypothesis in a final state now (score includes final weight)."""
        fw = self.graph.final_weight[self.hi[:, HI_STATE]]
        total = self.hf[:, HF_SCORE] + fw
        best, row = NEG_INF, -1
        for i, v in enumerate(total):
            if v > best:
                best, row = float(v), i
        if row < 0:
            return None
        alignment: tuple = ()
        if self.record:
            vocab = self.space.vocab
            syms = self.graph.symbols
            alignment = tuple(vocab.label(syms[c]) for c, _ in self._trace(int(self.node[row])))
        return BestPath(alignment, best)


def _check_post(post: Posteriorgram) -> None:
    if post.num_frames == 0:
        raise DecoderError("empty posteriorgram")


def decode_utterance(post: Posteriorgram, space: SearchSpace, cfg: DecoderConfig, utt: str = "") -> list[Detection]:
    _check_post(post)
    dec = KeywordDecoder(space, cfg, post.symbols, utt=utt)
    dets = dec.accept(post.log_probs)
    return dets + dec.finish()


def best_path(post: Posteriorgram, space: SearchSpace, cfg: DecoderConfig) -> Optional[BestPath]:
    """Whole-utterance Viterbi by token passing (no keyword emission)."""
    _check_post(post)
    dec = KeywordDecoder(space, cfg, post.symbols, record_traces=True, detect=False)
    dec.accept(post.log_probs)
    return dec.best_final()


def write_detections(dets: Iterable[Detection], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in dets:
            f.write(d.to_json() + "\n")


def read_detections(path) -> list[Detection]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(Detection.from_dict(json.loads(line)))
    return out
