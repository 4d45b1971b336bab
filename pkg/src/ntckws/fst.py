"""Weighted FST storage, composition and dense-emission lattices.

All weights are natural-log values (higher is better). The log semiring
drives forward scoring, the tropical (max) semiring drives Viterbi.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import kernels

EPSILON = 0
NEG_INF = -math.inf


class FstError(ValueError):
    """Raised for malformed FSTs or incompatible operands."""


class AlphabetMismatchError(FstError):
    def __init__(self, label: int, symbol: Optional[str] = None):
        self.label = label
        self.symbol = symbol
        name = f" ({symbol!r})" if symbol is not None else ""
        super().__init__(
            f"label {label}{name} is produced by the left operand but is not "
            "in the input alphabet of the right operand"
        )


class UnknownLabelError(FstError):
    def __init__(self, label: int, symbol: Optional[str] = None):
        self.label = label
        self.symbol = symbol
        super().__init__(f"graph label {label} ({symbol!r}) has no posteriorgram column")


class LogSemiring:
    zero = NEG_INF
    one = 0.0

    @staticmethod
    def plus(a: float, b: float) -> float:
        if a == NEG_INF:
            return b
        if b == NEG_INF:
            return a
        if a > b:
            return a + math.log1p(math.exp(b - a))
        return b + math.log1p(math.exp(a - b))

    @staticmethod
    def times(a: float, b: float) -> float:
        if a == NEG_INF or b == NEG_INF:
            return NEG_INF
        return a + b


class TropicalSemiring:
    zero = NEG_INF
    one = 0.0

    @staticmethod
    def plus(a: float, b: float) -> float:
        return a if a >= b else b

    times = staticmethod(LogSemiring.times)


class ArcKind(IntEnum):
    """Annotation carried by arcs through composition.

    KEYWORD/BACKGROUND/SELF_LOOP/BYPASS mark grammar-level traversals.
    The *_HOLD kinds mark extra frames spent inside a wildcard token (CTC
    repeats of ``@`` or ``*``); they carry no grammar weight.
    """

    NONE = 0
    KEYWORD = 1
    BACKGROUND = 2
    SELF_LOOP = 3
    BYPASS = 4
    SELF_LOOP_HOLD = 5
    BYPASS_HOLD = 6

    @property
    def is_wildcard(self) -> bool:
        return self >= ArcKind.SELF_LOOP


@dataclass(frozen=True)
class Arc:
    ilabel: int
    olabel: int
    weight: float
    nextstate: int
    kind: ArcKind = ArcKind.NONE


class SymbolTable:
    """Bidirectional symbol <-> id map with ``<eps>`` fixed at id 0."""

    def __init__(self, symbols: Iterable[str] = (), eps: str = "<eps>"):
        self._sym2id: dict[str, int] = {eps: EPSILON}
        self._id2sym: dict[int, str] = {EPSILON: eps}
        for s in symbols:
            self.add(s)

    def add(self, symbol: str, key: Optional[int] = None) -> int:
        if symbol in self._sym2id:
            return self._sym2id[symbol]
        if key is None:
            key = max(self._id2sym) + 1
        if key in self._id2sym:
            raise FstError(f"symbol id {key} already assigned to {self._id2sym[key]!r}")
        self._sym2id[symbol] = key
        self._id2sym[key] = symbol
        return key

    def find(self, key):
        if isinstance(key, str):
            return self._sym2id.get(key, -1)
        return self._id2sym.get(key)

    def __getitem__(self, symbol: str) -> int:
        return self._sym2id[symbol]

    def __contains__(self, item) -> bool:
        if isinstance(item, str):
            return item in self._sym2id
        return item in self._id2sym

    def __len__(self) -> int:
        return len(self._id2sym)

    def __eq__(self, other) -> bool:
        return isinstance(other, SymbolTable) and self._id2sym == other._id2sym

    def items(self) -> list[tuple[str, int]]:
        return sorted(((s, i) for s, i in self._sym2id.items()), key=lambda x: x[1])

    def ids(self) -> set[int]:
        return set(self._id2sym)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for sym, i in self.items():
                f.write(f"{sym} {i}\n")

    @classmethod
    def read(cls, path) -> "SymbolTable":
        table = cls.__new__(cls)
        table._sym2id, table._id2sym = {}, {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FstError(f"{path}:{lineno}: expected 'symbol id', got {line!r}")
            table._sym2id[parts[0]] = int(parts[1])
            table._id2sym[int(parts[1])] = parts[0]
        if EPSILON not in table._id2sym:
            raise FstError(f"{path}: symbol table has no id 0 (epsilon)")
        return table


class Fst:
    """Mutable-while-building weighted transducer.

    Builders populate an instance and hand it out; nothing in this package
    mutates an Fst after returning it, so instances can be shared freely.
    ``meta`` carries builder annotations (grammar core, background state).
    """

    def __init__(self, isyms: Optional[SymbolTable] = None, osyms: Optional[SymbolTable] = None):
        self._arcs: list[list[Arc]] = []
        self._final: dict[int, float] = {}
        self._start = -1
        self.isyms = isyms
        self.osyms = osyms
        self.meta: dict = {}
        self.origins: Optional[list[tuple]] = None

    # construction
    def add_state(self) -> int:
        self._arcs.append([])
        return len(self._arcs) - 1

    def add_states(self, n: int) -> range:
        first = len(self._arcs)
        self._arcs.extend([] for _ in range(n))
        return range(first, first + n)

    def set_start(self, state: int) -> None:
        self._check_state(state)
        self._start = state

    def set_final(self, state: int, weight: float = 0.0) -> None:
        self._check_state(state)
        if weight == NEG_INF:
            self._final.pop(state, None)
        else:
            self._final[state] = float(weight)

    def add_arc(self, state: int, ilabel: int, olabel: int, weight: float, nextstate: int,
                kind: ArcKind = ArcKind.NONE) -> None:
        self._check_state(state)
        self._check_state(nextstate)
        self._arcs[state].append(Arc(int(ilabel), int(olabel), float(weight), int(nextstate), ArcKind(kind)))

    def replace_arc(self, state: int, index: int, arc: Arc) -> None:
        self._check_state(arc.nextstate)
        self._arcs[state][index] = arc

    def _check_state(self, state: int) -> None:
        if not 0 <= state < len(self._arcs):
            raise FstError(f"state {state} does not exist (num_states={len(self._arcs)})")

    # access
    @property
    def start(self) -> int:
        return self._start

    @property
    def num_states(self) -> int:
        return len(self._arcs)

    def states(self) -> range:
        return range(len(self._arcs))

    def arcs(self, state: int) -> list[Arc]:
        return self._arcs[state]

    def final(self, state: int) -> float:
        return self._final.get(state, NEG_INF)

    def is_final(self, state: int) -> bool:
        return state in self._final

    def final_states(self) -> list[int]:
        return sorted(self._final)

    def num_arcs(self, state: Optional[int] = None) -> int:
        if state is None:
            return sum(len(a) for a in self._arcs)
        return len(self._arcs[state])

    def iter_arcs(self) -> Iterator[tuple[int, Arc]]:
        for s, arcs in enumerate(self._arcs):
            for arc in arcs:
                yield s, arc

    def is_acceptor(self) -> bool:
        return all(a.ilabel == a.olabel for _, a in self.iter_arcs())

    def input_labels(self) -> set[int]:
        return {a.ilabel for _, a in self.iter_arcs() if a.ilabel != EPSILON}

    def output_labels(self) -> set[int]:
        return {a.olabel for _, a in self.iter_arcs() if a.olabel != EPSILON}

    def copy(self) -> "Fst":
        out = Fst(self.isyms, self.osyms)
        out._arcs = [list(arcs) for arcs in self._arcs]
        out._final = dict(self._final)
        out._start = self._start
        out.meta = dict(self.meta)
        out.origins = list(self.origins) if self.origins is not None else None
        return out

    def __repr__(self) -> str:
        return f"<Fst states={self.num_states} arcs={self.num_arcs()} start={self.start}>"


# ---------------------------------------------------------------- text I/O


def _fmt_weight(w: float) -> str:
    if w == NEG_INF:
        return "-inf"
    return repr(float(w))


def write_text(fst: Fst, path, *, symbols: bool = False) -> None:
    """Write AT&T text: ``src dst ilabel olabel weight`` and ``state weight``.

    Weights are log-weights, not costs. The start state's lines come first.
    """
    def lab(table, x):
        return table.find(x) if symbols and table is not None else str(x)

    order = [fst.start] + [s for s in fst.states() if s != fst.start] if fst.start >= 0 else []
    lines = []
    for s in order:
        for a in fst.arcs(s):
            lines.append(f"{s}\t{a.nextstate}\t{lab(fst.isyms, a.ilabel)}\t"
                         f"{lab(fst.osyms, a.olabel)}\t{_fmt_weight(a.weight)}")
        if fst.is_final(s):
            lines.append(f"{s}\t{_fmt_weight(fst.final(s))}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_text(path, isyms: Optional[SymbolTable] = None, osyms: Optional[SymbolTable] = None,
              *, acceptor: bool = False) -> Fst:
    """Parse AT&T text. With ``acceptor`` a single label column is expected."""
    fst = Fst(isyms, osyms)

    def parse_label(tok: str, table: Optional[SymbolTable], lineno: int) -> int:
        try:
            return int(tok)
        except ValueError:
            if table is None or tok not in table:
                raise FstError(f"{path}:{lineno}: unknown symbol {tok!r}") from None
            return table[tok]

    def ensure(n: int) -> None:
        while fst.num_states <= n:
            fst.add_state()

    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        nlab = 1 if acceptor else 2
        try:
            src = int(parts[0])
            if len(parts) <= 2:
                ensure(src)
                if fst.start < 0:
                    fst.set_start(src)
                fst.set_final(src, float(parts[1]) if len(parts) == 2 else 0.0)
                continue
            if len(parts) not in (2 + nlab, 3 + nlab):
                raise FstError(f"{path}:{lineno}: cannot parse {line!r}")
            dst = int(parts[1])
            il = parse_label(parts[2], isyms, lineno)
            ol = il if acceptor else parse_label(parts[3], osyms, lineno)
            w = float(parts[2 + nlab]) if len(parts) == 3 + nlab else 0.0
        except ValueError as exc:
            raise FstError(f"{path}:{lineno}: {exc}") from None
        ensure(max(src, dst))
        if fst.start < 0:
            fst.set_start(src)
        fst.add_arc(src, il, ol, w, dst)
    return fst


# ---------------------------------------------------------------- structure


def connect(fst: Fst, *, bfs_order: bool = True) -> Fst:
    """Drop states not on a start-to-final path and renumber.

    With ``bfs_order`` states are renumbered in breadth-first discovery
    order from the start (arcs in insertion order), which gives isomorphic
    graphs with equal arc orders identical numberings.
    """
    n = fst.num_states
    if fst.start < 0 or n == 0:
        return Fst(fst.isyms, fst.osyms)
    access = [False] * n
    order: list[int] = []
    q = deque([fst.start])
    access[fst.start] = True
    while q:
        s = q.popleft()
        order.append(s)
        for a in fst.arcs(s):
            if not access[a.nextstate]:
                access[a.nextstate] = True
                q.append(a.nextstate)
    rev: list[list[int]] = [[] for _ in range(n)]
    for s, a in fst.iter_arcs():
        rev[a.nextstate].append(s)
    coaccess = [False] * n
    q = deque(s for s in fst.final_states())
    for s in q:
        coaccess[s] = True
    while q:
        s = q.popleft()
        for p in rev[s]:
            if not coaccess[p]:
                coaccess[p] = True
                q.append(p)
    keep = [s for s in (order if bfs_order else range(n)) if access[s] and coaccess[s]]
    out = Fst(fst.isyms, fst.osyms)
    out.meta = dict(fst.meta)
    if not keep:
        return out
    remap = {s: i for i, s in enumerate(keep)}
    out.add_states(len(keep))
    out.set_start(remap[fst.start])
    for s in keep:
        for a in fst.arcs(s):
            if a.nextstate in remap:
                out.add_arc(remap[s], a.ilabel, a.olabel, a.weight, remap[a.nextstate], a.kind)
        if fst.is_final(s):
            out.set_final(remap[s], fst.final(s))
    if fst.origins is not None:
        out.origins = [fst.origins[s] for s in keep]
    out.meta["state_map"] = remap
    return out


def project_input(fst: Fst) -> Fst:
    out = fst.copy()
    out._arcs = [[Arc(a.ilabel, a.ilabel, a.weight, a.nextstate, a.kind) for a in arcs]
                 for arcs in fst._arcs]
    out.osyms = fst.isyms
    return out


# ---------------------------------------------------------------- composition


def _alphabet(fst: Fst, side: str) -> set[int]:
    table = fst.osyms if side == "out" else fst.isyms
    if table is not None:
        return table.ids()
    return fst.output_labels() if side == "out" else fst.input_labels()


def compose(a: Fst, b: Fst) -> Fst:
    """Weighted composition with the epsilon-sequencing filter.

    Filter state 0 allows left epsilon-output moves; a right epsilon-input
    move switches to state 1, after which only the right side may move on
    epsilon until a real label is matched. Every pair of component paths
    therefore yields exactly one composed path. Annotations are kept from
    the right operand when set, else from the left. ``origins`` lists the
    ``(a_state, b_state, filter)`` triple of each result state.
    """
    used_out = a.output_labels()
    b_in = _alphabet(b, "in") | {EPSILON}
    declared_out = _alphabet(a, "out")
    for label in sorted((declared_out if a.osyms is not None else used_out) - b_in):
        sym = a.osyms.find(label) if a.osyms is not None else None
        raise AlphabetMismatchError(label, sym)

    out = Fst(a.isyms, b.osyms)
    origins: list[tuple[int, int, int]] = []
    if a.start < 0 or b.start < 0:
        out.origins = origins
        return out

    b_index: list[dict[int, list[Arc]]] = []
    for s in b.states():
        idx: dict[int, list[Arc]] = {}
        for arc in b.arcs(s):
            idx.setdefault(arc.ilabel, []).append(arc)
        b_index.append(idx)

    ids: dict[tuple[int, int, int], int] = {}
    queue: deque[tuple[int, int, int]] = deque()

    def state_of(key: tuple[int, int, int]) -> int:
        sid = ids.get(key)
        if sid is None:
            sid = out.add_state()
            ids[key] = sid
            origins.append(key)
            queue.append(key)
        return sid

    out.set_start(state_of((a.start, b.start, 0)))
    while queue:
        key = queue.popleft()
        sa, sb, f = key
        src = ids[key]
        for arc_a in a.arcs(sa):
            if arc_a.olabel == EPSILON:
                if f == 0:
                    dst = state_of((arc_a.nextstate, sb, 0))
                    out.add_arc(src, arc_a.ilabel, EPSILON, arc_a.weight, dst, arc_a.kind)
                continue
            for arc_b in b_index[sb].get(arc_a.olabel, ()):
                dst = state_of((arc_a.nextstate, arc_b.nextstate, 0))
                kind = arc_b.kind if arc_b.kind != ArcKind.NONE else arc_a.kind
                out.add_arc(src, arc_a.ilabel, arc_b.olabel,
                            LogSemiring.times(arc_a.weight, arc_b.weight), dst, kind)
        for arc_b in b_index[sb].get(EPSILON, ()):
            dst = state_of((sa, arc_b.nextstate, 1))
            out.add_arc(src, EPSILON, arc_b.olabel, arc_b.weight, dst, arc_b.kind)
        if a.is_final(sa) and b.is_final(sb):
            out.set_final(src, LogSemiring.times(a.final(sa), b.final(sb)))
    out.origins = origins
    return out


# ---------------------------------------------------------------- lattices


@dataclass
class Lattice:
    """Frame-unrolled intersection of a graph with a posteriorgram.

    States are numbered topologically (frame layer by layer) and arcs are
    sorted by source state, so one pass over the arc arrays is a valid
    forward sweep. Epsilon arcs carry ``col == -1`` and consume no frame.
    """

    num_frames: int
    num_states: int
    state_frame: np.ndarray
    state_graph: np.ndarray
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_label: np.ndarray
    arc_col: np.ndarray
    arc_frame: np.ndarray
    arc_weight: np.ndarray
    arc_graph_weight: np.ndarray
    arc_kind: np.ndarray
    final_weight: np.ndarray
    start: int = 0
    symbols: tuple = field(default=())

    @property
    def num_arcs(self) -> int:
        return len(self.arc_src)

    def to_fst(self) -> Fst:
        out = Fst()
        out.add_states(self.num_states)
        if self.num_states:
            out.set_start(self.start)
        for i in range(self.num_arcs):
            lab = int(self.arc_label[i])
            out.add_arc(int(self.arc_src[i]), lab, lab, float(self.arc_weight[i]),
                        int(self.arc_dst[i]), ArcKind(int(self.arc_kind[i])))
        for s in np.flatnonzero(np.isfinite(self.final_weight)):
            out.set_final(int(s), float(self.final_weight[s]))
        return out


def label_columns(graph: Fst, symbols: Sequence[str]) -> dict[int, int]:
    """Map each non-epsilon input label of ``graph`` to a posteriorgram column."""
    col_of = {s: i for i, s in enumerate(symbols)}
    mapping = {}
    for label in sorted(graph.input_labels()):
        if graph.isyms is not None:
            sym = graph.isyms.find(label)
            if sym is None or sym not in col_of:
                raise UnknownLabelError(label, sym)
            mapping[label] = col_of[sym]
        else:
            if not 1 <= label <= len(symbols):
                raise UnknownLabelError(label)
            mapping[label] = label - 1
    return mapping


def _layer_order(graph: Fst, seeds: list[int]) -> list[int]:
    """States reachable from ``seeds`` through epsilon arcs, topologically sorted."""
    reach, stack = set(seeds), list(seeds)
    while stack:
        s = stack.pop()
        for a in graph.arcs(s):
            if a.ilabel == EPSILON and a.weight != NEG_INF and a.nextstate not in reach:
                reach.add(a.nextstate)
                stack.append(a.nextstate)
    indeg = {s: 0 for s in reach}
    for s in reach:
        for a in graph.arcs(s):
            if a.ilabel == EPSILON and a.weight != NEG_INF:
                indeg[a.nextstate] += 1
    first_seen = {s: i for i, s in enumerate(seeds)}
    ready = sorted((s for s in reach if indeg[s] == 0), key=lambda s: (first_seen.get(s, len(seeds)), s))
    order: list[int] = []
    q = deque(ready)
    while q:
        s = q.popleft()
        order.append(s)
        for a in graph.arcs(s):
            if a.ilabel == EPSILON and a.weight != NEG_INF:
                indeg[a.nextstate] -= 1
                if indeg[a.nextstate] == 0:
                    q.append(a.nextstate)
    if len(order) != len(reach):
        raise FstError("graph has an epsilon cycle; dense intersection needs epsilon-acyclic graphs")
    return order


def intersect_dense(graph, post) -> Lattice:
    """Intersect an acceptor (or SearchSpace) with a posteriorgram.

    Each frame-``t`` arc weighs graph weight plus ``log P(token | x_t)``.
    Graph arcs of weight -inf are dropped.
    """
    graph = getattr(graph, "fst", graph)
    log_probs = post.log_probs
    n_frames = log_probs.shape[0]
    if n_frames == 0:
        raise FstError("posteriorgram has no frames")
    cols = label_columns(graph, post.symbols)

    state_id: dict[tuple[int, int], int] = {}
    state_frame: list[int] = []
    state_graph: list[int] = []
    src, dst, lab, col, frame, w, gw, kind = ([] for _ in range(8))

    def sid(t: int, s: int) -> int:
        key = (t, s)
        i = state_id.get(key)
        if i is None:
            i = len(state_frame)
            state_id[key] = i
            state_frame.append(t)
            state_graph.append(s)
        return i

    if graph.start < 0:
        raise FstError("graph has no start state")
    seeds = [graph.start]
    for t in range(n_frames + 1):
        layer = _layer_order(graph, seeds)
        for s in layer:
            sid(t, s)
        next_seeds: list[int] = []
        seen_next: set[int] = set()
        for s in layer:
            i = state_id[(t, s)]
            for a in graph.arcs(s):
                if a.weight == NEG_INF:
                    continue
                if a.ilabel == EPSILON:
                    j = state_id[(t, a.nextstate)]
                    src.append(i); dst.append(j); lab.append(EPSILON); col.append(-1)
                    frame.append(t); w.append(a.weight); gw.append(a.weight); kind.append(int(a.kind))
                elif t < n_frames:
                    c = cols[a.ilabel]
                    if a.nextstate not in seen_next:
                        seen_next.add(a.nextstate)
                        next_seeds.append(a.nextstate)
                    src.append(i); dst.append((t + 1, a.nextstate)); lab.append(a.ilabel); col.append(c)
                    frame.append(t); w.append(a.weight + log_probs[t, c]); gw.append(a.weight)
                    kind.append(int(a.kind))
        seeds = next_seeds
        if not seeds and t < n_frames:
            break

    # next-layer states are numbered after the current layer, resolve now
    dst = [d if isinstance(d, int) else state_id.get(d, -1) for d in dst]
    n_states = len(state_frame)
    final_weight = np.full(n_states, NEG_INF)
    for (t, s), i in state_id.items():
        if t == n_frames and graph.is_final(s):
            final_weight[i] = graph.final(s)

    src_a = np.asarray(src, dtype=np.int64)
    order = np.argsort(src_a, kind="stable")
    as_arr = lambda x, dt: np.asarray(x, dtype=dt)[order]  # noqa: E731
    return Lattice(
        num_frames=n_frames,
        num_states=n_states,
        state_frame=np.asarray(state_frame, dtype=np.int64),
        state_graph=np.asarray(state_graph, dtype=np.int64),
        arc_src=src_a[order],
        arc_dst=as_arr(dst, np.int64),
        arc_label=as_arr(lab, np.int64),
        arc_col=as_arr(col, np.int64),
        arc_frame=as_arr(frame, np.int64),
        arc_weight=as_arr(w, np.float64),
        arc_graph_weight=as_arr(gw, np.float64),
        arc_kind=as_arr(kind, np.int64),
        final_weight=final_weight,
        symbols=tuple(post.symbols),
    )


def forward_score(lat: Lattice) -> float:
    """Log-semiring total weight of all complete paths (-inf if none)."""
    if lat.num_states == 0:
        return NEG_INF
    alpha = kernels.lattice_forward(lat.num_states, lat.start, lat.arc_src, lat.arc_dst, lat.arc_weight)
    return kernels.log_sum(alpha + lat.final_weight)


@dataclass(frozen=True)
class BestPath:
    alignment: tuple[int, ...]
    score: float
    arcs: tuple[int, ...] = ()


def viterbi_best_path(lat: Lattice) -> Optional[BestPath]:
    """Max-weight complete path, or None when no path completes.

    Ties resolve to the earliest arc (arc-array order) into each state and
    the lowest-numbered final state.
    """
    if lat.num_states == 0:
        return None
    delta, back = kernels.lattice_viterbi(lat.num_states, lat.start, lat.arc_src, lat.arc_dst, lat.arc_weight)
    total = delta + lat.final_weight
    best = NEG_INF
    best_state = -1
    for s in np.flatnonzero(np.isfinite(total)):
        if total[s] > best:
            best, best_state = float(total[s]), int(s)
    if best_state < 0:
        return None
    arcs: list[int] = []
    s = best_state
    while s != lat.start:
        a = int(back[s])
        arcs.append(a)
        s = int(lat.arc_src[a])
    arcs.reverse()
    alignment = tuple(int(lat.arc_label[a]) for a in arcs if lat.arc_col[a] >= 0)
    return BestPath(alignment, best, tuple(arcs))


def arc_posteriors(lat: Lattice) -> tuple[float, np.ndarray]:
    """Forward-backward: total log weight and per-arc posterior probability."""
    alpha = kernels.lattice_forward(lat.num_states, lat.start, lat.arc_src, lat.arc_dst, lat.arc_weight)
    beta = kernels.lattice_backward(lat.num_states, lat.arc_src, lat.arc_dst, lat.arc_weight, lat.final_weight)
    total = kernels.log_sum(alpha + lat.final_weight)
    if total == NEG_INF:
        return total, np.zeros(lat.num_arcs)
    with np.errstate(invalid="ignore"):
        post = np.exp(alpha[lat.arc_src] + lat.arc_weight + beta[lat.arc_dst] - total)
    post[~np.isfinite(post)] = 0.0
    return total, post
