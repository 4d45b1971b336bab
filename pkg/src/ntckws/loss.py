"""CTC and noise-aware CTC losses with forward-backward gradients.

Gradients are taken with respect to the log-posteriors of the original
(non-wildcard) columns. Wildcard columns are means of the non-blank
columns, so their occupancy is pushed back onto those columns by the chain
rule: d log(mean) / d log p_j = p_j / sum_k p_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .emissions import Posteriorgram, ensure_augmented
from .fst import Fst, arc_posteriors, forward_score, intersect_dense
from .graph import WILDCARDS, SearchSpace, Vocabulary, training_space


class InfiniteLossError(ValueError):
    """No alignment of the transcript fits the posteriorgram."""


@dataclass(frozen=True)
class PenaltySchedule:
    """Wildcard arc log-weights decaying as ``initial * decay ** epoch``."""

    self_loop_initial: float = -4.0
    self_loop_decay: float = 0.999
    bypass_initial: float = -4.0
    bypass_decay: float = 0.975

    def __post_init__(self):
        for name in ("self_loop_decay", "bypass_decay"):
            beta = getattr(self, name)
            if not 0.0 < beta <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {beta}")
        for name in ("self_loop_initial", "bypass_initial"):
            if getattr(self, name) > 0:
                raise ValueError(f"{name} must be <= 0 (a penalty), got {getattr(self, name)}")


def penalty_at_epoch(schedule: PenaltySchedule, epoch: int) -> tuple[float, float]:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return (schedule.self_loop_initial * schedule.self_loop_decay ** epoch,
            schedule.bypass_initial * schedule.bypass_decay ** epoch)


@dataclass(frozen=True)
class LossResult:
    loss: float
    gradient: Optional[np.ndarray] = None
    occupancy: Optional[np.ndarray] = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.loss)


Transcript = Union[str, Sequence[str]]


def _vocab_of(token_fst: Fst) -> Vocabulary:
    vocab = token_fst.meta.get("vocab")
    if vocab is None:
        raise ValueError("token FST was not built by build_token_fst (no vocabulary attached)")
    return vocab


def fold_wildcard_gradient(grad: np.ndarray, post: Posteriorgram, blank: str) -> np.ndarray:
    """Map a gradient over augmented columns onto the original columns."""
    symbols = post.symbols
    keep = [i for i, s in enumerate(symbols) if s not in WILDCARDS]
    wild = [i for i, s in enumerate(symbols) if s in WILDCARDS]
    out = grad[:, keep].copy()
    if not wild:
        return out
    real = [j for j, i in enumerate(keep) if symbols[i] != blank]
    p = post.probs[:, keep][:, real]
    share = p / p.sum(axis=1, keepdims=True)
    out[:, real] += grad[:, wild].sum(axis=1, keepdims=True) * share
    return out


def lattice_loss(post: Posteriorgram, space: SearchSpace, *, gradient: bool = False) -> LossResult:
    """-log of the forward score of ``space`` intersected with ``post``."""
    lat = intersect_dense(space, post)
    if not gradient:
        return LossResult(-forward_score(lat))
    total, arc_post = arc_posteriors(lat)
    if total == -math.inf:
        return LossResult(math.inf)
    occ = np.zeros(post.probs.shape)
    emit = lat.arc_col >= 0
    np.add.at(occ, (lat.arc_frame[emit], lat.arc_col[emit]), arc_post[emit])
    grad = fold_wildcard_gradient(-occ, post, space.vocab.blank)
    return LossResult(-total, grad, occ)


def ctc_loss(post: Posteriorgram, transcript: Transcript, token_fst: Fst, lexicon_fst: Fst, *,
             gradient: bool = False) -> LossResult:
    """CTC loss over T o L o G(y). Infeasible lengths give ``loss = inf``."""
    space = training_space(transcript, token_fst, lexicon_fst)
    return lattice_loss(post, space, gradient=gradient)


def ntc_loss(post: Posteriorgram, transcript: Transcript, token_fst: Fst, lexicon_fst: Fst,
             schedule: PenaltySchedule, epoch: int, *, gradient: bool = False) -> LossResult:
    """Noise-aware CTC loss: G(y) gains ``@``/``*`` arcs weighted by the schedule."""
    vocab = _vocab_of(token_fst)
    if not vocab.wildcards:
        raise ValueError("NTC loss needs a token FST built from a wildcard vocabulary")
    weights = penalty_at_epoch(schedule, epoch)
    space = training_space(transcript, token_fst, lexicon_fst, wildcard_weights=weights)
    return lattice_loss(ensure_augmented(post, vocab), space, gradient=gradient)


def loss_gradient(post: Posteriorgram, transcript: Transcript, token_fst: Fst, lexicon_fst: Fst,
                  schedule: Optional[PenaltySchedule] = None, epoch: int = 0) -> np.ndarray:
    """d loss / d log-posterior over the original columns (CTC if no schedule)."""
    if schedule is None:
        res = ctc_loss(post, transcript, token_fst, lexicon_fst, gradient=True)
    else:
        res = ntc_loss(post, transcript, token_fst, lexicon_fst, schedule, epoch, gradient=True)
    if not res.finite:
        raise InfiniteLossError("loss is infinite; the transcript cannot be aligned to this input")
    return res.gradient
