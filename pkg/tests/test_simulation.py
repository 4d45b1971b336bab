import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntckws.decoder import DecoderConfig, decode_utterance
from ntckws.emissions import load_posteriorgram
from ntckws.simulation import (ARPABET_STRESSED, DEFAULT_KEYWORD, DEFAULT_LEVELS, CorruptionConfig, SynthSettings,
                               contains_run, corrupt, make_dataset, make_negative, make_positive, read_manifest,
                               synth_clean, token_segments, train_proxy)

CLEAN = CorruptionConfig(name="clean")


def test_vocabulary(vocab):
    assert len(vocab.phonemes) == len(ARPABET_STRESSED) == 69
    assert set(DEFAULT_KEYWORD) <= set(vocab.phonemes)


def test_positive_is_deterministic(vocab):
    a, sa = make_positive(vocab, DEFAULT_LEVELS[0], seed=11)
    b, sb = make_positive(vocab, DEFAULT_LEVELS[0], seed=11)
    c, _ = make_positive(vocab, DEFAULT_LEVELS[0], seed=12)
    assert a == b and sa == sb
    assert not a == c


def test_zero_corruption_is_bit_exact(vocab):
    clean = synth_clean(list(DEFAULT_KEYWORD), 3, vocab)
    out, span = corrupt(clean, (0, clean.num_frames), CLEAN)
    assert out is clean and span == (0, clean.num_frames)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(DEFAULT_LEVELS))
def test_positive_rows_and_span(seed, level):
    from ntckws.simulation import default_vocabulary
    vocab = default_vocabulary()
    post, (s, e) = make_positive(vocab, level, seed)
    post.check()
    assert 0 <= s < e <= post.num_frames


def test_masking_uses_uniform_non_blank_rows(vocab):
    clean = synth_clean(list(DEFAULT_KEYWORD), 4, vocab)
    out, _ = corrupt(clean, (0, clean.num_frames), CorruptionConfig(mask_fraction=0.5, seed=3))
    n = len(vocab.symbols)
    masked = np.all(np.isclose(out.probs[:, 1:], 1.0 / (n - 1), atol=1e-7), axis=1)
    assert masked.sum() == round(0.5 * clean.num_frames)
    assert (out.probs[masked, 0] == 0).all()


def test_insertion_lengthens_span(vocab):
    clean = synth_clean(list(DEFAULT_KEYWORD), 3, vocab)
    span = (0, clean.num_frames)
    out, (s, e) = corrupt(clean, span, CorruptionConfig(insertion_rate=3.0, seed=1))
    grown = out.num_frames - clean.num_frames
    assert grown > 0 and e - s == span[1] + grown


def test_substitution_changes_peaks_only(vocab):
    clean = synth_clean(list(DEFAULT_KEYWORD), 3, vocab)
    out, _ = corrupt(clean, (0, clean.num_frames), CorruptionConfig(substitution_rate=1.0, seed=2))
    before = token_segments(clean, (0, clean.num_frames), vocab.blank)
    after = token_segments(out, (0, out.num_frames), vocab.blank)
    assert [(a, z) for a, z, _ in before] == [(a, z) for a, z, _ in after]
    assert all(c0 != c1 for (_, _, c0), (_, _, c1) in zip(before, after))
    np.testing.assert_allclose(np.sort(out.probs, axis=1), np.sort(clean.probs, axis=1))


def test_negatives_avoid_keyword(vocab):
    s = SynthSettings(negative_mask_fraction=0.0)
    post = make_negative(vocab, 3000, seed=4, settings=s)
    assert post.num_frames == 3000
    segs = token_segments(post, (0, post.num_frames), vocab.blank)
    seq = [post.symbols[c] for _, _, c in segs]
    assert not contains_run(seq, DEFAULT_KEYWORD)


def test_corruption_rejects_bad_config():
    for kw in (dict(mask_fraction=1.5), dict(substitution_rate=-0.1), dict(insertion_rate=-1), dict(sharpness=0)):
        with pytest.raises(ValueError):
            CorruptionConfig(**kw)


def test_train_proxy():
    lv = DEFAULT_LEVELS[1]
    assert train_proxy(lv, "ctc") is lv
    p = train_proxy(lv, "ntc")
    assert p.substitution_rate == 0
    assert p.mask_fraction == pytest.approx(lv.mask_fraction + lv.substitution_rate * (1 - lv.mask_fraction))
    assert p.insertion_rate == lv.insertion_rate and p.name == lv.name
    with pytest.raises(ValueError):
        train_proxy(lv, "mse")


def test_dataset_manifest(tmp_path, vocab):
    levels = DEFAULT_LEVELS[:2]
    rows = make_dataset(3, 2, 50, levels, tmp_path / "a", seed=1)
    assert len(rows) == 3 * 2 + 2
    back = read_manifest(tmp_path / "a" / "manifest.jsonl")
    assert back == rows
    assert sum(r.label for r in rows) == 6
    for r in rows:
        post = load_posteriorgram(tmp_path / "a" / r.file)
        if r.label:
            assert r.span is not None and r.span[1] <= post.num_frames
        else:
            assert post.num_frames == 50 and r.span is None
    rows2 = make_dataset(3, 2, 50, levels, tmp_path / "b", seed=1, jobs=2)
    assert rows2 == rows
    for r in rows:
        assert (tmp_path / "a" / r.file).read_bytes() == (tmp_path / "b" / r.file).read_bytes()


def test_dataset_rejects_bad_args(tmp_path):
    with pytest.raises(ValueError):
        make_dataset(0, 1, 10, DEFAULT_LEVELS, tmp_path, 0)
    with pytest.raises(ValueError):
        make_dataset(1, 1, 10, [DEFAULT_LEVELS[0], DEFAULT_LEVELS[0]], tmp_path, 0)


def _recall(vocab, space, level, n=60, seed=0):
    cfg = DecoderConfig(confidence_threshold=0.5)
    hits = 0
    for i in range(n):
        post, _ = make_positive(vocab, level, seed + i)
        hits += bool(decode_utterance(post, space, cfg, "u"))
    return hits / n


def test_clean_recall(vocab, spaces):
    assert _recall(vocab, spaces[0], CLEAN, n=500) >= 0.99


def test_difficulty_is_monotone(vocab, spaces):
    r = [_recall(vocab, spaces[0], lv, n=80) for lv in DEFAULT_LEVELS]
    assert r[0] < r[-1]
    # allow small sampling wiggle between neighbours
    assert all(a <= b + 0.05 for a, b in zip(r, r[1:]))
