"""Brute-force references used by the tests.

Everything here enumerates frame alignments directly and never touches
the FST code, so agreement with the library is meaningful.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from ntckws.emissions import Posteriorgram, augment_wildcards
from ntckws.graph import BLANK, BYPASS, SELF_LOOP, Vocabulary


def random_vocab(rng: np.random.Generator, max_phones: int = 3) -> Vocabulary:
    n = int(rng.integers(1, max_phones + 1))
    return Vocabulary(tuple("abc"[:n]))


def random_post(rng: np.random.Generator, vocab: Vocabulary, num_frames: int, alpha: float = 1.0) -> Posteriorgram:
    probs = rng.dirichlet(np.full(len(vocab.phonemes) + 1, alpha), size=num_frames)
    return Posteriorgram(probs, (vocab.blank,) + vocab.phonemes)


def random_instance(rng: np.random.Generator, wildcards: bool):
    """(post, transcript, vocab) with T <= 6, |vocab| <= 4, transcript <= 3 tokens."""
    vocab = random_vocab(rng)
    y = tuple(str(s) for s in rng.choice(vocab.phonemes, size=int(rng.integers(1, 4))))
    post = random_post(rng, vocab, int(rng.integers(1, 7)))
    if wildcards:
        post = augment_wildcards(post, vocab)
    return post, y, vocab


def collapse(seq) -> tuple:
    out = []
    prev = None
    for s in seq:
        if s != prev and s != BLANK:
            out.append(s)
        prev = s
    return tuple(out)


@lru_cache(maxsize=None)
def _alignments(symbols: tuple, num_frames: int):
    idx = np.array(list(itertools.product(range(len(symbols)), repeat=num_frames)), dtype=np.int64)
    idx = idx.reshape(-1, num_frames)
    collapsed = [collapse(symbols[i] for i in row) for row in idx]
    uniq = {}
    inv = np.array([uniq.setdefault(z, len(uniq)) for z in collapsed], dtype=np.int64)
    return idx, list(uniq), inv


def grammar_weight(z: tuple, y: tuple, w_self: float, w_bypass: float, wildcards: bool) -> float:
    """Log weight of the unique grammar path reading ``z``, or -inf.

    The grammar is the transcript chain with, when enabled, a ``*`` arc in
    parallel with each token and ``@`` loops on the interior states.
    """
    state, total = 0, 0.0
    n = len(y)
    for s in z:
        if state < n and s == y[state]:
            state += 1
        elif wildcards and s == BYPASS and state < n:
            state += 1
            total += w_bypass
        elif wildcards and s == SELF_LOOP and 0 < state < n:
            total += w_self
        else:
            return -math.inf
    return total if state == n else -math.inf


def path_scores(post: Posteriorgram, y: tuple, w_self: float = 0.0, w_bypass: float = 0.0) -> np.ndarray:
    """Score of every legal alignment (illegal ones are dropped)."""
    wild = post.is_augmented
    idx, uniq, inv = _alignments(post.symbols, post.num_frames)
    gw = np.array([grammar_weight(z, y, w_self, w_bypass, wild) for z in uniq])[inv]
    lp = post.log_probs
    emit = lp[np.arange(post.num_frames)[None, :], idx].sum(axis=1)
    scores = emit + gw
    return scores[np.isfinite(scores)]


def brute_forward(post, y, w_self=0.0, w_bypass=0.0) -> float:
    s = path_scores(post, y, w_self, w_bypass)
    if s.size == 0:
        return -math.inf
    m = s.max()
    return float(m + math.log(np.exp(s - m).sum()))


def brute_viterbi(post, y, w_self=0.0, w_bypass=0.0) -> float:
    s = path_scores(post, y, w_self, w_bypass)
    return float(s.max()) if s.size else -math.inf
