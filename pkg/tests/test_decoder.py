import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntckws import kernels
from ntckws.decoder import (DecoderConfig, DecoderError, Detection, Hypothesis, KeywordDecoder, best_path,
                            confidence_score, decode_utterance, prune, read_detections, write_detections)
from ntckws.emissions import Posteriorgram, augment_wildcards
from ntckws.simulation import DEFAULT_KEYWORD, make_negative, synth_clean

L = math.log


def _hyp(trace):
    return Hypothesis(0, 0.0, 0, trace=tuple(trace))


def test_confidence_geometric_mean():
    h = _hyp([("a", L(0.5)), ("a", L(0.9)), ("<blk>", L(0.99)), ("b", L(0.4))])
    assert confidence_score(h) == pytest.approx(0.6)
    assert confidence_score(_hyp([("a", 0.0), ("b", 0.0)])) == 1.0


def test_confidence_counts_bypass_not_self_loop():
    base = [("a", L(0.9)), ("b", L(0.4))]
    with_loop = base[:1] + [("@", L(0.01))] + base[1:]
    assert confidence_score(_hyp(with_loop)) == pytest.approx(0.6)
    skipped = base + [("*", L(0.1))]
    assert confidence_score(_hyp(skipped)) == pytest.approx((0.9 * 0.4 * 0.1) ** (1 / 3))


def test_confidence_repeated_token_after_blank_is_two_tokens():
    h = _hyp([("s", L(0.8)), ("<blk>", 0.0), ("s", L(0.2))])
    assert confidence_score(h) == pytest.approx(0.4)


def test_confidence_needs_tokens():
    with pytest.raises(DecoderError):
        confidence_score(_hyp([("<blk>", 0.0), ("@", L(0.5))]))


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6), st.integers(0, 5), st.floats(1.01, 5.0))
def test_confidence_is_monotone(probs, i, bump):
    i %= len(probs)
    trace = [(f"p{k}", L(p)) for k, p in enumerate(probs)]
    up = list(trace)
    up[i] = (up[i][0], min(0.0, trace[i][1] + L(bump)))
    c0, c1 = confidence_score(_hyp(trace)), confidence_score(_hyp(up))
    assert c1 >= c0
    assert 0.0 < c0 <= 1.0


def test_prune_keeps_best():
    hs = [Hypothesis(s, -float(s), region=s % 2) for s in range(25)]
    kept = prune(hs, 20)
    assert len(kept) == 20
    assert [h.state for h in kept] == list(range(20))
    assert prune(hs, None) == sorted(hs, key=lambda h: -h.score)


def test_prune_tie_break():
    hs = [Hypothesis(3, -1.0, 5, region=0), Hypothesis(7, -1.0, 2, region=1), Hypothesis(2, -1.0, 9, region=0),
          Hypothesis(2, -1.0, 1, region=0)]
    assert [(h.state, h.start_frame) for h in prune(hs, 3)] == [(7, 2), (2, 1), (2, 9)]


def test_detection_json_round_trip(tmp_path):
    d = Detection("u1", "HH EY1", 3, 40, 0.75, 6, 1)
    assert Detection.from_dict(d.to_dict()) == d
    assert '"score": 0.75' in d.to_json()
    write_detections([d, d], tmp_path / "d.jsonl")
    assert read_detections(tmp_path / "d.jsonl") == [d, d]


@pytest.mark.parametrize("kw", [dict(max_active=0), dict(hold_frames=-1), dict(min_real_tokens=0),
                                dict(confidence_threshold=1.5), dict(lambda_bypass=math.inf),
                                dict(lambda_self_loop=math.nan), dict(max_keyword_frames=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DecoderConfig(**kw)


def _keyword_post(vocab, dwell=3, pad=6):
    toks = ["AA1"] * 1 + list(DEFAULT_KEYWORD) + ["AA1"]
    dw = [pad] + [dwell] * len(DEFAULT_KEYWORD) + [pad]
    return synth_clean(toks, dw, vocab, 0.9)


def _replace_token(post, vocab, index, row):
    """Overwrite the frames of keyword token ``index`` with ``row``."""
    probs = post.probs.copy()
    s = 6 + 1 + index * 4
    probs[s:s + 3] = row
    return Posteriorgram(probs, post.symbols, validate=False)


def test_clean_keyword_detected_once(backend, vocab, spaces):
    post = _keyword_post(vocab)
    for space, p in zip(spaces, (post, augment_wildcards(post, vocab))):
        dets = decode_utterance(p, space, DecoderConfig(), "u")
        assert len(dets) == 1
        d = dets[0]
        assert d.confidence == pytest.approx(0.9, abs=1e-6)
        assert d.real_token_count == 7 and d.wildcard_count == 0
        assert d.start == 7 and 31 <= d.end <= 33


def test_substituted_token_fires_only_with_wildcards(backend, vocab, spaces):
    s_ctc, s_ntc = spaces
    n = len(vocab.symbols)
    wrong = np.full(n, 0.1 / (n - 1))
    wrong[vocab.symbols.index("AA1")] = 0.9
    post = _replace_token(_keyword_post(vocab), vocab, 3, wrong)
    cfg = DecoderConfig(confidence_threshold=0.3)
    assert decode_utterance(post, s_ctc, cfg, "u") == []
    dets = decode_utterance(augment_wildcards(post, vocab), s_ntc, cfg, "u")
    assert len(dets) == 1
    assert dets[0].real_token_count == 6 and dets[0].wildcard_count >= 1


def test_streaming_matches_batch(backend, vocab, spaces):
    post = augment_wildcards(make_negative(vocab, 400, seed=5), vocab)
    cfg = DecoderConfig(confidence_threshold=0.0)
    batch = decode_utterance(post, spaces[1], cfg, "s")
    dec = KeywordDecoder(spaces[1], cfg, post.symbols, utt="s")
    got = []
    lp = post.log_probs
    for a in range(0, 400, 37):
        got.extend(dec.accept(lp[a:a + 37]))
    got.extend(dec.finish())
    assert got == batch


def test_best_path_monotone_in_lambda(vocab, spaces):
    post = augment_wildcards(_keyword_post(vocab, dwell=2, pad=2), vocab)
    prev = -math.inf
    for lam in (-math.inf, -2.0, 0.0, 2.0, 4.0):
        cfg = DecoderConfig(max_active=None, lambda_self_loop=lam, lambda_bypass=lam, max_keyword_frames=None)
        bp = best_path(post, spaces[1], cfg)
        assert bp.score >= prev - 1e-9
        prev = bp.score


def test_lambda_neg_inf_reduces_to_ctc(vocab, spaces):
    post = make_negative(vocab, 300, seed=2)
    cfg_ctc = DecoderConfig()
    cfg_off = DecoderConfig(lambda_self_loop=-math.inf, lambda_bypass=-math.inf)
    assert decode_utterance(augment_wildcards(post, vocab), spaces[1], cfg_off, "n") == \
        decode_utterance(post, spaces[0], cfg_ctc, "n")


def test_keyword_duration_cap(vocab, spaces):
    post = _keyword_post(vocab, dwell=16)  # about 118 frames of keyword
    cfg = DecoderConfig(confidence_threshold=0.5)
    assert decode_utterance(post, spaces[0], cfg, "u") == []
    assert len(decode_utterance(post, spaces[0], DecoderConfig(confidence_threshold=0.5, max_keyword_frames=None),
                                "u")) == 1


def test_threshold_filters(vocab, spaces):
    post = _keyword_post(vocab)
    assert decode_utterance(post, spaces[0], DecoderConfig(confidence_threshold=0.95), "u") == []


def test_decoder_input_errors(vocab, spaces):
    dec = KeywordDecoder(spaces[0], DecoderConfig(), vocab.symbols)
    with pytest.raises(DecoderError):
        dec.accept(np.zeros((1, 3)))
    with pytest.raises(DecoderError):
        dec.hypothesis(0)
    empty = Posteriorgram(np.zeros((0, len(vocab.symbols))), vocab.symbols, validate=False)
    with pytest.raises(DecoderError):
        decode_utterance(empty, spaces[0], DecoderConfig())


def test_custom_scorer_sees_traces(vocab, spaces):
    seen = []

    def scorer(h):
        seen.append(h)
        return 0.42

    dets = decode_utterance(_keyword_post(vocab), spaces[0], DecoderConfig(scorer=scorer), "u")
    assert [d.confidence for d in dets] == [0.42]
    assert seen and all(h.trace for h in seen)
    assert {s for s, _ in seen[-1].trace} - {"<blk>"} <= set(DEFAULT_KEYWORD)


def test_active_never_exceeds_limit(vocab, spaces):
    post = augment_wildcards(make_negative(vocab, 200, seed=9), vocab)
    dec = KeywordDecoder(spaces[1], DecoderConfig(max_active=7), post.symbols)
    for row in post.log_probs:
        dec.accept(row)
        assert len(dec.active()) <= 7
    assert dec.max_active_seen <= 7


def test_backends_agree_on_decoding(vocab, spaces):
    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled kernels not built")
    post = augment_wildcards(make_negative(vocab, 600, seed=13), vocab)
    cfg = DecoderConfig(lambda_self_loop=4.0, lambda_bypass=4.0)
    out = {}
    before = kernels.backend()
    try:
        for name in kernels.available_backends():
            kernels.use_backend(name)
            out[name] = decode_utterance(post, spaces[1], cfg, "n")
    finally:
        kernels.use_backend(before)
    assert out["python"] == out["compiled"]
