import math

import numpy as np
import pytest

from oracle import brute_forward, random_post
from ntckws.emissions import Posteriorgram, augment_wildcards
from ntckws.graph import Lexicon, Vocabulary, build_lexicon_fst, build_token_fst
from ntckws.loss import (InfiniteLossError, PenaltySchedule, ctc_loss, loss_gradient, ntc_loss,
                         penalty_at_epoch)

VOCAB = Vocabulary(("a", "b", "c"))
LEX = Lexicon.phone_lexicon(VOCAB)
WV = VOCAB.with_wildcards()


@pytest.fixture(scope="module")
def fsts():
    return (build_token_fst(VOCAB), build_lexicon_fst(LEX, VOCAB),
            build_token_fst(WV), build_lexicon_fst(LEX, WV))


def _one_hot(seq):
    cols = [VOCAB.symbols.index(s) for s in seq]
    p = np.zeros((len(seq), len(VOCAB.symbols)))
    p[np.arange(len(seq)), cols] = 1.0
    return Posteriorgram(p, VOCAB.symbols)


def test_schedule_values():
    s = PenaltySchedule()
    assert penalty_at_epoch(s, 0) == (-4.0, -4.0)
    ws, wb = penalty_at_epoch(s, 100)
    assert ws == pytest.approx(-4.0 * 0.999 ** 100)
    assert wb == pytest.approx(-4.0 * 0.975 ** 100)
    # bypass relaxes faster than self-loop
    assert wb > ws
    with pytest.raises(ValueError):
        penalty_at_epoch(s, -1)


@pytest.mark.parametrize("kw", [dict(bypass_decay=0.0), dict(self_loop_decay=1.5), dict(bypass_initial=1.0)])
def test_schedule_rejects(kw):
    with pytest.raises(ValueError):
        PenaltySchedule(**kw)


def test_one_hot_alignment_costs_nothing(fsts):
    t, lx, _, _ = fsts
    res = ctc_loss(_one_hot(["a", "<blk>", "b", "b", "c"]), "a b c", t, lx)
    assert res.loss == pytest.approx(0.0, abs=1e-8)


def test_infeasible_length_is_infinite(fsts):
    t, lx, wt, wlx = fsts
    post = _one_hot(["a", "a"])  # "a a" needs a blank between, so three frames
    assert ctc_loss(post, "a a", t, lx).loss == math.inf
    assert not ctc_loss(post, "a a", t, lx, gradient=True).finite
    with pytest.raises(InfiniteLossError):
        loss_gradient(post, "a a", t, lx)
    # bypass lets the NTC graph skip a token, so it stays finite
    assert math.isfinite(ntc_loss(post, "a a", wt, wlx, PenaltySchedule(), 0).loss)


def test_ctc_matches_brute_force(fsts):
    t, lx, _, _ = fsts
    rng = np.random.default_rng(4)
    for _ in range(15):
        post = random_post(rng, VOCAB, 5)
        assert ctc_loss(post, "b a", t, lx).loss == pytest.approx(-brute_forward(post, ("b", "a")), abs=1e-10)


def test_ntc_uses_scheduled_weights(fsts):
    _, _, wt, wlx = fsts
    post = random_post(np.random.default_rng(2), VOCAB, 5)
    sched = PenaltySchedule()
    for epoch in (0, 50):
        ws, wb = penalty_at_epoch(sched, epoch)
        want = -brute_forward(augment_wildcards(post, VOCAB), ("a", "c"), ws, wb)
        assert ntc_loss(post, "a c", wt, wlx, sched, epoch).loss == pytest.approx(want, abs=1e-10)


def test_ntc_needs_wildcard_vocab(fsts):
    t, lx, _, _ = fsts
    with pytest.raises(ValueError):
        ntc_loss(_one_hot(["a"]), "a", t, lx, PenaltySchedule(), 0)


def test_ntc_never_exceeds_ctc(fsts):
    t, lx, wt, wlx = fsts
    rng = np.random.default_rng(8)
    for _ in range(10):
        post = random_post(rng, VOCAB, 6)
        assert ntc_loss(post, "a b", wt, wlx, PenaltySchedule(), 0).loss <= ctc_loss(post, "a b", t, lx).loss


@pytest.mark.parametrize("ntc", [False, True])
def test_gradient_rows_and_shape(backend, fsts, ntc):
    t, lx, wt, wlx = fsts
    post = random_post(np.random.default_rng(11), VOCAB, 7)
    if ntc:
        g = loss_gradient(post, "a b c", wt, wlx, PenaltySchedule(), 3)
    else:
        g = loss_gradient(post, "a b c", t, lx)
    assert g.shape == post.probs.shape
    # occupancy per frame sums to one, so the gradient rows sum to -1
    np.testing.assert_allclose(g.sum(axis=1), -1.0, atol=1e-10)
    assert (g <= 1e-12).all()
