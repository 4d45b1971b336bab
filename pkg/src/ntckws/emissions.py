"""Posteriorgram container, binary/CSV I/O and wildcard-column augmentation."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import BYPASS, SELF_LOOP, WILDCARDS, Vocabulary

MAGIC = b"POST"
VERSION = 1
LOG_FLOOR = float(np.log(1e-10))
ROW_SUM_TOL = 1e-4
_HEADER = struct.Struct("<4sIII")
_LEN = struct.Struct("<I")


class PosteriorgramError(ValueError):
    pass


class PosteriorgramFormatError(PosteriorgramError):
    pass


@dataclass(frozen=True, eq=False)
class Posteriorgram:
    """T x V per-frame token probabilities (linear domain).

    Columns named ``@``/``*`` are synthetic wildcard scores and are left
    out of the row-sum check.
    """

    probs: np.ndarray
    symbols: tuple[str, ...]
    validate: bool = True

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if probs.ndim != 2:
            raise PosteriorgramError(f"expected a 2-D matrix, got shape {probs.shape}")
        if probs.shape[1] != len(self.symbols):
            raise PosteriorgramError(f"{probs.shape[1]} columns but {len(self.symbols)} symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise PosteriorgramError("duplicate column symbols")
        if self.validate:
            self.check()

    def check(self) -> None:
        if self.num_frames < 1:
            raise PosteriorgramError("posteriorgram has no frames")
        bad = ~np.isfinite(self.probs) | (self.probs < 0) | (self.probs > 1)
        if bad.any():
            t, v = np.argwhere(bad)[0]
            raise PosteriorgramError(f"entry out of [0, 1] at frame {t}, column {self.symbols[v]!r}")
        real = [i for i, s in enumerate(self.symbols) if s not in WILDCARDS]
        sums = self.probs[:, real].sum(axis=1)
        off = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if off.size:
            t = int(off[0])
            raise PosteriorgramError(f"row {t} sums to {sums[t]:.6g}, expected 1")

    @property
    def num_frames(self) -> int:
        return self.probs.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.probs.shape[1]

    @property
    def is_augmented(self) -> bool:
        return SELF_LOOP in self.symbols or BYPASS in self.symbols

    @cached_property
    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = np.maximum(np.log(self.probs), LOG_FLOOR)
        out.setflags(write=False)
        return out

    def column(self, symbol: str) -> np.ndarray:
        return self.probs[:, self.symbols.index(symbol)]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Posteriorgram) and self.symbols == other.symbols
                and np.array_equal(self.probs, other.probs))

    __hash__ = None

    @classmethod
    def from_log_probs(cls, log_probs: np.ndarray, symbols: Sequence[str], validate: bool = False):
        return cls(np.exp(log_probs), symbols, validate)


def augment_wildcards(post: Posteriorgram, vocab: Vocabulary) -> Posteriorgram:
    """Append ``@`` and ``*`` columns holding the mean non-blank posterior.

    The mean runs over every non-blank column present (the real phonemes);
    rows are not renormalised afterwards.
    """
    if post.is_augmented:
        raise PosteriorgramError("posteriorgram already has wildcard columns")
    if vocab.blank not in post.symbols:
        raise PosteriorgramError(f"posteriorgram has no blank column {vocab.blank!r}")
    real = [i for i, s in enumerate(post.symbols) if s != vocab.blank]
    if not real:
        raise PosteriorgramError("posteriorgram has no non-blank columns")
    mean = post.probs[:, real].sum(axis=1) / len(real)
    probs = np.concatenate([post.probs, mean[:, None], mean[:, None]], axis=1)
    return Posteriorgram(probs, post.symbols + WILDCARDS, validate=False)


def ensure_augmented(post: Posteriorgram, vocab: Vocabulary) -> Posteriorgram:
    return post if post.is_augmented else augment_wildcards(post, vocab)


def strip_wildcards(post: Posteriorgram) -> Posteriorgram:
    keep = [i for i, s in enumerate(post.symbols) if s not in WILDCARDS]
    return Posteriorgram(post.probs[:, keep], tuple(post.symbols[i] for i in keep), validate=False)


# ---------------------------------------------------------------- binary I/O


def save_posteriorgram(post: Posteriorgram, path) -> None:
    """Binary layout: ``POST`` u32 version, u32 T, u32 V (little-endian),
    T*V float32 row-major, then V length-prefixed UTF-8 symbols."""
    data = np.ascontiguousarray(post.probs, dtype="<f4")
    parts = [_HEADER.pack(MAGIC, VERSION, post.num_frames, post.num_tokens), data.tobytes()]
    for s in post.symbols:
        raw = s.encode("utf-8")
        parts.append(_LEN.pack(len(raw)))
        parts.append(raw)
    Path(path).write_bytes(b"".join(parts))


def read_header(path) -> tuple[int, int]:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise PosteriorgramFormatError(f"{path}: file too short for header ({len(head)} bytes)")
    magic, version, n_frames, n_tokens = _HEADER.unpack(head)
    if magic != MAGIC:
        raise PosteriorgramFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise PosteriorgramFormatError(f"{path}: unsupported version {version}")
    return n_frames, n_tokens


def load_posteriorgram(path, *, validate: bool = True) -> Posteriorgram:
    raw = Path(path).read_bytes()
    n_frames, n_tokens = read_header(path)
    body = _HEADER.size + 4 * n_frames * n_tokens
    if n_frames * n_tokens > (len(raw) // 4) or len(raw) < body:
        raise PosteriorgramFormatError(
            f"{path}: shape {n_frames}x{n_tokens} needs at least {body} bytes, file has {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", count=n_frames * n_tokens, offset=_HEADER.size)
    symbols = []
    pos = body
    for _ in range(n_tokens):
        if pos + _LEN.size > len(raw):
            raise PosteriorgramFormatError(f"{path}: symbol table truncated at byte {pos}")
        (n,) = _LEN.unpack_from(raw, pos)
        pos += _LEN.size
        if pos + n > len(raw):
            raise PosteriorgramFormatError(f"{path}: symbol table truncated at byte {pos}")
        symbols.append(raw[pos:pos + n].decode("utf-8"))
        pos += n
    if pos != len(raw):
        raise PosteriorgramFormatError(f"{path}: {len(raw) - pos} trailing bytes")
    probs = data.astype(np.float64).reshape(n_frames, n_tokens)
    try:
        return Posteriorgram(probs, tuple(symbols), validate=validate)
    except PosteriorgramFormatError:
        raise
    except PosteriorgramError as exc:
        raise PosteriorgramFormatError(f"{path}: {exc}") from None


def save_csv(post: Posteriorgram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(post.symbols)
        for row in post.probs:
            w.writerow([repr(float(x)) for x in row])


def load_csv(path, *, validate: bool = True) -> Posteriorgram:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise PosteriorgramFormatError(f"{path}: empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        probs = np.array([[float(x) for x in r] for r in body], dtype=np.float64).reshape(len(body), len(header))
    except ValueError as exc:
        raise PosteriorgramFormatError(f"{path}: {exc}") from None
    try:
        return Posteriorgram(probs, tuple(header), validate=validate)
    except PosteriorgramError as exc:
        raise PosteriorgramFormatError(f"{path}: {exc}") from None


def load_any(path, *, validate: bool = True) -> Posteriorgram:
    if str(path).endswith(".csv"):
        return load_csv(path, validate=validate)
    return load_posteriorgram(path, validate=validate)
