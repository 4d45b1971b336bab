"""Synthetic posteriorgrams and noise-style corruption.

There is no acoustic model here: a clean utterance is a sequence of sharp
token profiles separated by blank frames, and noise is modelled directly
on the posteriorgram (masked frames, substituted tokens, spliced-in
segments). Corruption levels are named after the SNR grid they stand in for.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .emissions import Posteriorgram, save_posteriorgram
from .graph import Vocabulary

VOWELS = ("AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW")
CONSONANTS = ("B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S",
              "SH", "T", "TH", "V", "W", "Y", "Z", "ZH")
ARPABET = tuple(sorted(VOWELS + CONSONANTS))
# CMUdict phone set: vowels carry stress 0/1/2
ARPABET_STRESSED = tuple(sorted(CONSONANTS + tuple(v + str(k) for v in VOWELS for k in range(3))))
DEFAULT_KEYWORD = ("HH", "EY1", "S", "N", "IH1", "P", "S")  # "hey snips"
FRAME_SHIFT = 0.03  # seconds per frame


def default_vocabulary() -> Vocabulary:
    return Vocabulary(ARPABET_STRESSED)


@dataclass(frozen=True)
class CorruptionConfig:
    mask_fraction: float = 0.0
    insertion_rate: float = 0.0
    substitution_rate: float = 0.0
    sharpness: float = 0.95
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError(f"mask_fraction must be in [0, 1], got {self.mask_fraction}")
        if not 0.0 <= self.substitution_rate <= 1.0:
            raise ValueError(f"substitution_rate must be in [0, 1], got {self.substitution_rate}")
        if self.insertion_rate < 0:
            raise ValueError(f"insertion_rate must be >= 0, got {self.insertion_rate}")
        if not 0.0 < self.sharpness <= 1.0:
            raise ValueError(f"sharpness must be in (0, 1], got {self.sharpness}")


# Stand-ins for the -5..20 dB grid, hardest first.
DEFAULT_LEVELS = (
    CorruptionConfig(0.50, 1.5, 0.30, 0.70, name="-5dB"),
    CorruptionConfig(0.35, 1.0, 0.20, 0.80, name="0dB"),
    CorruptionConfig(0.25, 0.6, 0.10, 0.85, name="5dB"),
    CorruptionConfig(0.15, 0.3, 0.05, 0.90, name="10dB"),
    CorruptionConfig(0.08, 0.1, 0.02, 0.93, name="15dB"),
    CorruptionConfig(0.04, 0.05, 0.01, 0.95, name="20dB"),
)


TRAIN_CRITERIA = ("ctc", "ntc")


def train_proxy(level: CorruptionConfig, criterion: str) -> CorruptionConfig:
    """Corruption seen through a model trained with ``criterion``.

    No network is trained here. A noise-aware model is taken to emit
    noise-like rows on interfered tokens instead of confident wrong
    phonemes, so under ``"ntc"`` the substituted share of frames is
    folded into the masked share.
    """
    if criterion not in TRAIN_CRITERIA:
        raise ValueError(f"unknown train criterion {criterion!r}; expected one of {TRAIN_CRITERIA}")
    if criterion == "ctc":
        return level
    masked = level.mask_fraction + level.substitution_rate * (1.0 - level.mask_fraction)
    return replace(level, mask_fraction=min(1.0, masked), substitution_rate=0.0)


def _f32(probs: np.ndarray) -> np.ndarray:
    # keep values exactly representable in the float32 file format
    return probs.astype(np.float32).astype(np.float64)


def _profile(n_cols: int, col: int, sharpness: float) -> np.ndarray:
    row = np.full(n_cols, (1.0 - sharpness) / (n_cols - 1))
    row[col] = sharpness
    return row


def noise_row(n_cols: int, blank_col: int) -> np.ndarray:
    row = np.full(n_cols, 1.0 / (n_cols - 1))
    row[blank_col] = 0.0
    return row


def synth_clean(tokens: Sequence[str], dwell: Union[int, Sequence[int]], vocab: Vocabulary,
                sharpness: float = 0.95, seed: int = 0, *, jitter: float = 0.0) -> Posteriorgram:
    """Token profiles held for ``dwell`` frames with one blank frame between tokens.

    ``jitter`` > 0 mixes a seeded Dirichlet draw into the off-peak mass;
    at the default 0 the remainder is spread uniformly.
    """
    tokens = list(tokens)
    if not tokens:
        raise ValueError("synth_clean needs at least one token")
    dwells = [dwell] * len(tokens) if isinstance(dwell, (int, np.integer)) else list(dwell)
    if len(dwells) != len(tokens) or min(dwells) < 1:
        raise ValueError("dwell must be >= 1 per token")
    if not 0.0 < sharpness <= 1.0:
        raise ValueError("sharpness must be in (0, 1]")
    symbols = vocab.symbols
    n = len(symbols)
    blank = symbols.index(vocab.blank)
    rows = []
    for i, (tok, d) in enumerate(zip(tokens, dwells)):
        if tok not in symbols or tok == vocab.blank:
            raise ValueError(f"unknown token {tok!r}")
        if i:
            rows.append(_profile(n, blank, sharpness))
        rows.extend([_profile(n, symbols.index(tok), sharpness)] * d)
    probs = np.array(rows)
    if jitter > 0 and sharpness < 1:
        rng = np.random.default_rng(seed)
        peak = probs.argmax(axis=1)
        rest = rng.dirichlet(np.ones(n - 1), size=len(probs)) * (1.0 - sharpness)
        mixed = np.empty_like(probs)
        for t, c in enumerate(peak):
            mixed[t] = np.insert(rest[t], c, sharpness)
        probs = (1 - jitter) * probs + jitter * mixed
    return Posteriorgram(_f32(probs), symbols, validate=False)


def token_segments(post: Posteriorgram, span: tuple[int, int], blank: str) -> list[tuple[int, int, int]]:
    """(start, end, column) for each run of one non-blank argmax in ``span``."""
    s, e = span
    peak = post.probs[s:e].argmax(axis=1)
    b = post.symbols.index(blank)
    segs: list[tuple[int, int, int]] = []
    for i, c in enumerate(peak):
        if c == b:
            continue
        if segs and segs[-1][1] == s + i and segs[-1][2] == c:
            segs[-1] = (segs[-1][0], s + i + 1, c)
        else:
            segs.append((s + i, s + i + 1, int(c)))
    return segs


def corrupt(post: Posteriorgram, span: tuple[int, int], cfg: CorruptionConfig, *,
            blank: str = "<blk>") -> tuple[Posteriorgram, tuple[int, int]]:
    """Apply masking, substitution and insertion inside ``span``.

    Returns the corrupted posteriorgram and the keyword span, which grows
    by the number of inserted frames.
    """
    s, e = span
    if not 0 <= s < e <= post.num_frames:
        raise ValueError(f"span {span} outside 0..{post.num_frames}")
    if cfg.mask_fraction == 0 and cfg.insertion_rate == 0 and cfg.substitution_rate == 0:
        return post, span
    rng = np.random.default_rng(cfg.seed)
    probs = np.array(post.probs)
    n = probs.shape[1]
    b = post.symbols.index(blank)
    real_cols = [c for c in range(n) if c != b]
    segs = token_segments(post, span, blank)

    # masking: contiguous blocks about one token long
    n_mask = int(round(cfg.mask_fraction * (e - s)))
    masked = np.zeros(e - s, dtype=bool)
    while masked.sum() < n_mask:
        length = min(int(rng.integers(2, 6)), n_mask - int(masked.sum()))
        start = int(rng.integers(0, e - s - length + 1))
        masked[start:start + length] = True

    # substitution: swap a token's column with another real token's;
    # only tokens left untouched by the mask, so the two effects add up
    for a, z, c in segs:
        if rng.random() < cfg.substitution_rate and not masked[a - s:z - s].any():
            other = real_cols[rng.integers(len(real_cols) - 1)]
            other = other if other != c else real_cols[-1]
            probs[a:z, [c, other]] = probs[a:z, [other, c]]
    probs[s:e][masked] = noise_row(n, b)

    # insertion: spurious token segments spliced at token boundaries
    k = int(rng.poisson(cfg.insertion_rate))
    cuts = sorted(int(z) for _, z, _ in segs[:-1])
    if k and cuts:
        pieces, last = [], 0
        where = sorted(rng.choice(cuts, size=k, replace=True))
        for cut in where:
            pieces.append(probs[last:cut])
            length = int(rng.integers(2, 5))
            col = real_cols[rng.integers(len(real_cols))]
            pieces.append(np.tile(_profile(n, col, cfg.sharpness), (length, 1)))
            e += length
            last = cut
        pieces.append(probs[last:])
        probs = np.concatenate(pieces)
    return Posteriorgram(_f32(probs), post.symbols, validate=False), (s, e)


def contains_run(seq: Sequence[str], sub: Sequence[str]) -> bool:
    m = len(sub)
    return any(tuple(seq[i:i + m]) == tuple(sub) for i in range(len(seq) - m + 1))


def random_tokens(rng: np.random.Generator, n: int, vocab: Vocabulary,
                  avoid: Sequence[str] = ()) -> list[str]:
    """``n`` random phonemes with no immediate repeats and no run equal to ``avoid``."""
    phones = vocab.phonemes
    out: list[str] = []
    while len(out) < n:
        tok = phones[rng.integers(len(phones))]
        if out and tok == out[-1]:
            continue
        out.append(tok)
        if avoid and tuple(out[-len(avoid):]) == tuple(avoid):
            out.pop()
    return out


@dataclass(frozen=True)
class ManifestRow:
    utt: str
    file: str
    label: int
    level: str
    span: Optional[tuple[int, int]]

    def to_json(self) -> str:
        return json.dumps({"utt": self.utt, "file": self.file, "label": self.label,
                           "level": self.level, "span": list(self.span) if self.span else None})

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestRow":
        span = d.get("span")
        return cls(str(d["utt"]), str(d["file"]), int(d["label"]), str(d.get("level", "")),
                   tuple(int(x) for x in span) if span else None)


def write_manifest(rows: Sequence[ManifestRow], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(r.to_json() + "\n")


def read_manifest(path) -> list[ManifestRow]:
    with open(path, encoding="utf-8") as f:
        return [ManifestRow.from_dict(json.loads(line)) for line in f if line.strip()]


@dataclass(frozen=True)
class SynthSettings:
    """Knobs shared by every utterance of a dataset."""

    keyword: tuple[str, ...] = DEFAULT_KEYWORD
    dwell_range: tuple[int, int] = (2, 4)
    filler_range: tuple[int, int] = (2, 6)
    negative_sharpness: float = 0.9
    negative_mask_fraction: float = 0.1
    jitter: float = 0.5


def _seed(base: int, *parts: int) -> int:
    return int(np.random.SeedSequence([base, *parts]).generate_state(1)[0])


def make_positive(vocab: Vocabulary, level: CorruptionConfig, seed: int,
                  settings: SynthSettings = SynthSettings()) -> tuple[Posteriorgram, tuple[int, int]]:
    rng = np.random.default_rng(seed)
    kw = list(settings.keyword)
    lead = random_tokens(rng, int(rng.integers(*settings.filler_range)), vocab, kw)
    tail = random_tokens(rng, int(rng.integers(*settings.filler_range)), vocab, kw)
    tokens = lead + kw + tail
    dw = rng.integers(settings.dwell_range[0], settings.dwell_range[1] + 1, size=len(tokens))
    clean = synth_clean(tokens, [int(d) for d in dw], vocab, level.sharpness,
                        int(rng.integers(2**31)), jitter=settings.jitter)
    s = int(sum(dw[:len(lead)]) + len(lead))
    e = s + int(sum(dw[len(lead):len(lead) + len(kw)])) + len(kw) - 1
    return corrupt(clean, (s, e), replace(level, seed=int(rng.integers(2**31))), blank=vocab.blank)


def make_negative(vocab: Vocabulary, num_frames: int, seed: int,
                  settings: SynthSettings = SynthSettings()) -> Posteriorgram:
    rng = np.random.default_rng(seed)
    # enough tokens that even minimum dwell covers num_frames
    n_tok = int(math.ceil((num_frames + 1) / (settings.dwell_range[0] + 1)))
    tokens = random_tokens(rng, n_tok, vocab, settings.keyword)
    dw = rng.integers(settings.dwell_range[0], settings.dwell_range[1] + 1, size=len(tokens))
    post = synth_clean(tokens, [int(d) for d in dw], vocab, settings.negative_sharpness,
                       int(rng.integers(2**31)), jitter=settings.jitter)
    post = Posteriorgram(post.probs[:num_frames], post.symbols, validate=False)
    if settings.negative_mask_fraction > 0:
        noise = CorruptionConfig(mask_fraction=settings.negative_mask_fraction, seed=int(rng.integers(2**31)))
        post, _ = corrupt(post, (0, num_frames), noise, blank=vocab.blank)
    return post


def _make_one(job):
    kind, idx, level, n_frames, seed, out_dir, settings, vocab = job
    if kind == "pos":
        post, span = make_positive(vocab, level, seed, settings)
        utt = f"pos_{level.name or 'lvl'}_{idx:05d}"
        row = (utt, 1, level.name, span)
    else:
        post = make_negative(vocab, n_frames, seed, settings)
        utt = f"neg_{idx:05d}"
        row = (utt, 0, "", None)
    fname = f"{utt}.post"
    save_posteriorgram(post, Path(out_dir) / fname)
    return ManifestRow(row[0], fname, row[1], row[2], row[3])


def make_dataset(n_pos: int, n_neg: int, neg_duration_frames: int, levels: Sequence[CorruptionConfig],
                 out_dir, seed: int, *, vocab: Optional[Vocabulary] = None,
                 settings: SynthSettings = SynthSettings(), jobs: int = 1) -> list[ManifestRow]:
    """Write ``n_pos`` positives per level plus ``n_neg`` negatives and a manifest.

    Every utterance gets its own seed derived from ``seed`` and its index,
    so output does not depend on ``jobs``.
    """
    if n_pos < 1 or n_neg < 1 or neg_duration_frames < 1:
        raise ValueError("n_pos, n_neg and neg_duration_frames must be >= 1")
    names = [lv.name for lv in levels]
    if len(set(names)) != len(names):
        raise ValueError("level names must be unique")
    vocab = vocab or default_vocabulary()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    todo = []
    for li, level in enumerate(levels):
        lv = level if level.name else replace(level, name=f"level{li}")
        for i in range(n_pos):
            todo.append(("pos", i, lv, 0, _seed(seed, 1, li, i), str(out), settings, vocab))
    for i in range(n_neg):
        todo.append(("neg", i, None, neg_duration_frames, _seed(seed, 2, i), str(out), settings, vocab))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(_make_one, todo, chunksize=64))
    else:
        rows = [_make_one(j) for j in todo]
    rows.sort(key=lambda r: r.utt)
    write_manifest(rows, out / "manifest.jsonl")
    return rows


def settings_dict(s: SynthSettings) -> dict:
    return asdict(s)
