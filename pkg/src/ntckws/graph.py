"""Token (CTC topology), lexicon and grammar builders, and S = T o L o G.

Label conventions: 0 is epsilon; token label ``i + 1`` is posteriorgram
column ``i`` of the vocabulary order ``[blank, phonemes..., @, *]``.
Grammar labels index the word table returned by :func:`word_table`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .fst import (
    EPSILON,
    ArcKind,
    Fst,
    SymbolTable,
    compose,
    connect,
    project_input,
    read_text,
    write_text,
)

BLANK = "<blk>"
SELF_LOOP = "@"
BYPASS = "*"
WILDCARDS = (SELF_LOOP, BYPASS)


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    phonemes: tuple[str, ...]
    blank: str = BLANK
    wildcards: bool = False

    def __post_init__(self):
        object.__setattr__(self, "phonemes", tuple(self.phonemes))
        if not self.phonemes:
            raise GraphError("vocabulary needs at least one phoneme")
        if len(set(self.phonemes)) != len(self.phonemes):
            raise GraphError("duplicate phonemes in vocabulary")
        reserved = {self.blank, *WILDCARDS, "<eps>"}
        clash = reserved.intersection(self.phonemes)
        if clash:
            raise GraphError(f"reserved symbols used as phonemes: {sorted(clash)}")

    @property
    def symbols(self) -> tuple[str, ...]:
        return (self.blank, *self.phonemes) + (WILDCARDS if self.wildcards else ())

    def __len__(self) -> int:
        return len(self.symbols)

    def label(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol) + 1
        except ValueError:
            raise GraphError(f"unknown token {symbol!r}") from None

    def symbol(self, label: int) -> str:
        return self.symbols[label - 1]

    @property
    def blank_label(self) -> int:
        return 1

    @property
    def self_loop_label(self) -> Optional[int]:
        return self.label(SELF_LOOP) if self.wildcards else None

    @property
    def bypass_label(self) -> Optional[int]:
        return self.label(BYPASS) if self.wildcards else None

    def symbol_table(self) -> SymbolTable:
        return SymbolTable(self.symbols)

    def with_wildcards(self) -> "Vocabulary":
        return Vocabulary(self.phonemes, self.blank, True)

    def without_wildcards(self) -> "Vocabulary":
        return Vocabulary(self.phonemes, self.blank, False)

    @classmethod
    def from_symbols(cls, symbols: Sequence[str]) -> "Vocabulary":
        symbols = list(symbols)
        wild = symbols[-2:] == list(WILDCARDS)
        if wild:
            symbols = symbols[:-2]
        return cls(tuple(symbols[1:]), symbols[0], wild)

    def to_dict(self) -> dict:
        return {"phonemes": list(self.phonemes), "blank": self.blank, "wildcards": self.wildcards}


class Lexicon:
    """Ordered word -> phoneme-sequence map."""

    def __init__(self, entries: Union[dict, Iterable[tuple[str, Sequence[str]]]]):
        items = entries.items() if isinstance(entries, dict) else entries
        self.entries: dict[str, tuple[str, ...]] = {}
        for word, pron in items:
            pron = tuple(pron)
            if not pron:
                raise GraphError(f"empty pronunciation for {word!r}")
            if word in WILDCARDS:
                raise GraphError(f"{word!r} is reserved for wildcard arcs")
            self.entries[word] = pron

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __getitem__(self, word: str) -> tuple[str, ...]:
        return self.entries[word]

    def words(self) -> list[str]:
        return list(self.entries)

    def validate(self, vocab: Vocabulary) -> None:
        known = set(vocab.phonemes)
        for word, pron in self.entries.items():
            for ph in pron:
                if ph not in known:
                    raise GraphError(f"word {word!r} uses unknown phoneme {ph!r}")

    def pronounce(self, words: Sequence[str]) -> list[str]:
        out = []
        for w in words:
            if w not in self.entries:
                raise GraphError(f"word {w!r} not in lexicon")
            out.extend(self.entries[w])
        return out

    @classmethod
    def phone_lexicon(cls, vocab: Vocabulary) -> "Lexicon":
        """Every phoneme is its own word (sub-word grammars)."""
        return cls((p, (p,)) for p in vocab.phonemes)

    @classmethod
    def from_text(cls, text: str) -> "Lexicon":
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise GraphError(f"lexicon line {lineno}: no pronunciation for {parts[0]!r}")
            entries.append((parts[0], parts[1:]))
        return cls(entries)

    @classmethod
    def read(cls, path) -> "Lexicon":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        return "".join(f"{w} {' '.join(p)}\n" for w, p in self.entries.items())

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def word_table(lexicon: Lexicon, vocab: Vocabulary) -> SymbolTable:
    """Grammar alphabet: lexicon words, then the wildcards when enabled."""
    return SymbolTable(lexicon.words() + (list(WILDCARDS) if vocab.wildcards else []))


# ---------------------------------------------------------------- T and L


def build_token_fst(vocab: Vocabulary) -> Fst:
    """CTC topology: one state per token, ``k`` emitted only on entering state k.

    Blank and repeats of the current token output epsilon. Wildcards are
    ordinary non-blank tokens here.
    """
    table = vocab.symbol_table()
    t = Fst(table, table)
    n = len(vocab)
    t.add_states(n)
    t.set_start(0)
    for i in range(n):
        t.set_final(i, 0.0)
    for i in range(n):
        for k in range(n):
            label = k + 1
            out = EPSILON if (k == 0 or k == i) else label
            t.add_arc(i, label, out, 0.0, k)
    t.meta["vocab"] = vocab
    return t


def build_lexicon_fst(lexicon: Lexicon, vocab: Vocabulary) -> Fst:
    """Closure of one branch per entry; word emitted on the first phoneme.

    With a wildcard vocabulary, ``@`` and ``*`` pass through as their own
    words so wildcard grammar arcs survive composition.
    """
    if len(lexicon) == 0:
        raise GraphError("empty lexicon")
    lexicon.validate(vocab)
    words = word_table(lexicon, vocab)
    lx = Fst(vocab.symbol_table(), words)
    root = lx.add_state()
    lx.set_start(root)
    lx.set_final(root, 0.0)
    for word, pron in lexicon.entries.items():
        prev = root
        for i, ph in enumerate(pron):
            nxt = root if i == len(pron) - 1 else lx.add_state()
            lx.add_arc(prev, vocab.label(ph), words[word] if i == 0 else EPSILON, 0.0, nxt)
            prev = nxt
    if vocab.wildcards:
        for w in WILDCARDS:
            lx.add_arc(root, vocab.label(w), words[w], 0.0, root)
    lx.meta["vocab"] = vocab
    return lx


# ---------------------------------------------------------------- grammars


def _split(units: Union[str, Sequence[str]]) -> list[str]:
    return units.split() if isinstance(units, str) else list(units)


def build_linear_grammar(words: Union[str, Sequence[str]], table: SymbolTable, *,
                         entry_weight: float = 0.0) -> Fst:
    """Chain acceptor for one transcript; its states form the grammar core."""
    words = _split(words)
    if not words:
        raise GraphError("empty transcript")
    g = Fst(table, table)
    states = list(g.add_states(len(words) + 1))
    g.set_start(states[0])
    for i, w in enumerate(words):
        label = table.find(w)
        if label < 0:
            raise GraphError(f"word {w!r} not in lexicon")
        g.add_arc(states[i], label, label, entry_weight if i == 0 else 0.0, states[i + 1], ArcKind.KEYWORD)
    g.set_final(states[-1], 0.0)
    g.meta.update(core=tuple(states), core_sources=(), background=None, units=tuple(words))
    return g


def build_kws_grammar(keyword: Union[str, Sequence[str]], lexicon: Lexicon, table: SymbolTable, *,
                      background_path: bool = False, background_weight: float = 0.0,
                      entry_bonus: float = 0.0) -> Fst:
    """Keyword chain, optionally with a background state.

    The background state is entered from the start on any word, loops on
    any word, may enter the keyword on its first word, and is final. This
    lets decoding idle on non-keyword speech before an onset.
    """
    units = _split(keyword)
    if not units:
        raise GraphError("empty keyword")
    for u in units:
        if u not in lexicon:
            raise GraphError(f"keyword word {u!r} not in lexicon")
    g = build_linear_grammar(units, table, entry_weight=entry_bonus)
    core = g.meta["core"]
    if background_path:
        b = g.add_state()
        for w in lexicon.words():
            g.add_arc(core[0], table[w], table[w], background_weight, b, ArcKind.BACKGROUND)
        for w in lexicon.words():
            g.add_arc(b, table[w], table[w], background_weight, b, ArcKind.BACKGROUND)
        first = table[units[0]]
        g.add_arc(b, first, first, entry_bonus, core[1], ArcKind.KEYWORD)
        g.set_final(b, 0.0)
        g.meta.update(core_sources=(b,), background=b)
    g.meta["keyword"] = tuple(units)
    return g


def add_wildcard_arcs(g: Fst, self_loop_weight: float, bypass_weight: float, *,
                      boundary_self_loops: bool = False) -> Fst:
    """Return a copy of ``g`` with ``@`` self-loops and ``*`` bypass arcs.

    Self-loops go on interior core states (between adjacent keyword units;
    also on the first/last core state with ``boundary_self_loops``). Each
    keyword arc ``i -> i+1`` gets a parallel bypass, including the entries
    into the first unit from background states. Existing arcs are kept
    untouched and new arcs are appended after them.
    """
    core = g.meta.get("core")
    if not core or len(core) < 2:
        raise GraphError("grammar has no linear keyword core")
    table = g.isyms
    if table is None or SELF_LOOP not in table or BYPASS not in table:
        raise GraphError("grammar alphabet lacks wildcard symbols; build it from a wildcard vocabulary")
    at, star = table[SELF_LOOP], table[BYPASS]
    out = g.copy()
    loop_states = core if boundary_self_loops else core[1:-1]
    for s in loop_states:
        out.add_arc(s, at, at, self_loop_weight, s, ArcKind.SELF_LOOP)
    for i in range(len(core) - 1):
        sources = (core[i],) + (tuple(g.meta.get("core_sources", ())) if i == 0 else ())
        for src in sources:
            out.add_arc(src, star, star, bypass_weight, core[i + 1], ArcKind.BYPASS)
    out.meta["wildcards"] = (float(self_loop_weight), float(bypass_weight))
    return out


# ---------------------------------------------------------------- search space


@dataclass
class SearchSpace:
    """Compiled acceptor over token labels with decoding metadata.

    ``region[s]`` is 1 for states inside the keyword (after its first unit)
    and 0 for start/background states. ``keyword_final`` holds the final
    states reached by completing the keyword.
    """

    fst: Fst
    vocab: Vocabulary
    keyword: tuple[str, ...]
    keyword_labels: frozenset
    region: np.ndarray
    keyword_final: frozenset
    background: frozenset = field(default_factory=frozenset)

    @property
    def has_wildcards(self) -> bool:
        return any(a.kind in (ArcKind.SELF_LOOP, ArcKind.BYPASS) for _, a in self.fst.iter_arcs())


def compile_search_space(t: Fst, lx: Fst, g: Fst) -> SearchSpace:
    vocab: Vocabulary = t.meta.get("vocab") or Vocabulary.from_symbols(
        [s for s, i in t.isyms.items() if i != EPSILON])
    if not connect(g).num_states:
        raise GraphError("grammar accepts nothing")
    tl = compose(t, lx)
    s = compose(tl, g)
    s = connect(project_input(s))
    if s.num_states == 0:
        raise GraphError("search space is empty")
    core = g.meta.get("core", ())
    kw_region = set(core[1:])
    kw_final_g = core[-1] if core else None
    region = np.zeros(s.num_states, dtype=np.int64)
    keyword_final, background = set(), set()
    for i, (_, gs, _f) in enumerate(s.origins):
        if gs in kw_region:
            region[i] = 1
            if gs == kw_final_g and s.is_final(i):
                keyword_final.add(i)
        else:
            background.add(i)

    if vocab.wildcards:
        hold = {vocab.self_loop_label: ArcKind.SELF_LOOP_HOLD, vocab.bypass_label: ArcKind.BYPASS_HOLD}
        for st in s.states():
            for j, a in enumerate(s.arcs(st)):
                if a.kind == ArcKind.NONE and a.ilabel in hold:
                    s.replace_arc(st, j, replace(a, kind=hold[a.ilabel]))

    units = g.meta.get("keyword", g.meta.get("units", ()))
    labels = {a.ilabel for _, a in s.iter_arcs() if a.kind == ArcKind.KEYWORD}
    s.meta = {"compiled": True}
    return SearchSpace(s, vocab, tuple(units), frozenset(labels), region,
                       frozenset(keyword_final), frozenset(background))


def save_search_space(space: SearchSpace, prefix) -> None:
    """Write ``prefix.fst`` (AT&T), ``prefix.ann`` (``arcid kind``),
    ``prefix.syms`` and ``prefix.json`` (vocabulary, regions)."""
    prefix = str(prefix)
    write_text(space.fst, prefix + ".fst")
    with open(prefix + ".ann", "w", encoding="utf-8") as f:
        for arc_id, (_, a) in enumerate(space.fst.iter_arcs()):
            if a.kind != ArcKind.NONE:
                f.write(f"{arc_id} {a.kind.name.lower()}\n")
    space.vocab.symbol_table().write(prefix + ".syms")
    meta = {
        "vocab": space.vocab.to_dict(),
        "keyword": list(space.keyword),
        "keyword_labels": sorted(space.keyword_labels),
        "region": space.region.tolist(),
        "keyword_final": sorted(space.keyword_final),
        "background": sorted(space.background),
        "start": space.fst.start,
    }
    Path(prefix + ".json").write_text(json.dumps(meta, indent=1), encoding="utf-8")


def load_search_space(prefix) -> SearchSpace:
    prefix = str(prefix)
    meta = json.loads(Path(prefix + ".json").read_text(encoding="utf-8"))
    vocab = Vocabulary(tuple(meta["vocab"]["phonemes"]), meta["vocab"]["blank"], meta["vocab"]["wildcards"])
    table = SymbolTable.read(prefix + ".syms")
    if table != vocab.symbol_table():
        raise GraphError(f"{prefix}.syms does not match the vocabulary in {prefix}.json")
    raw = read_text(prefix + ".fst", table, table)
    # arc ids follow state order, as written
    kinds: dict[int, ArcKind] = {}
    for lineno, line in enumerate(Path(prefix + ".ann").read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        try:
            kinds[int(parts[0])] = ArcKind[parts[1].upper()]
        except (KeyError, ValueError, IndexError):
            raise GraphError(f"{prefix}.ann:{lineno}: bad annotation {line!r}") from None
    fst = Fst(table, table)
    fst.add_states(raw.num_states)
    fst.set_start(meta["start"])
    arc_id = 0
    for st in range(raw.num_states):
        for a in raw.arcs(st):
            fst.add_arc(st, a.ilabel, a.olabel, a.weight, a.nextstate, kinds.get(arc_id, ArcKind.NONE))
            arc_id += 1
        if raw.is_final(st):
            fst.set_final(st, raw.final(st))
    if len(meta["region"]) != fst.num_states:
        raise GraphError("region table does not match the number of states")
    return SearchSpace(fst, vocab, tuple(meta["keyword"]), frozenset(meta["keyword_labels"]),
                       np.asarray(meta["region"], dtype=np.int64), frozenset(meta["keyword_final"]),
                       frozenset(meta["background"]))


def build_search_space(keyword: Union[str, Sequence[str]], lexicon: Lexicon, vocab: Vocabulary, *,
                       wildcards: bool = False, background_path: bool = True,
                       self_loop_weight: float = 0.0, bypass_weight: float = 0.0,
                       boundary_self_loops: bool = False, background_weight: float = 0.0,
                       entry_bonus: float = 0.0) -> SearchSpace:
    """Convenience wrapper building S_ctc (or S_ntc with ``wildcards``)."""
    if wildcards and not vocab.wildcards:
        vocab = vocab.with_wildcards()
    t = build_token_fst(vocab)
    lx = build_lexicon_fst(lexicon, vocab)
    g = build_kws_grammar(keyword, lexicon, lx.osyms, background_path=background_path,
                          background_weight=background_weight, entry_bonus=entry_bonus)
    if wildcards:
        g = add_wildcard_arcs(g, self_loop_weight, bypass_weight, boundary_self_loops=boundary_self_loops)
    return compile_search_space(t, lx, g)


def training_space(transcript: Union[str, Sequence[str]], t: Fst, lx: Fst, *,
                   wildcard_weights: Optional[tuple[float, float]] = None) -> SearchSpace:
    """S for a transcript: T o L o G(y), or T o L o G_ntc(y) with weights."""
    g = build_linear_grammar(transcript, lx.osyms)
    if wildcard_weights is not None:
        g = add_wildcard_arcs(g, *wildcard_weights)
    return compile_search_space(t, lx, g)
