import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ntckws.emissions import (LOG_FLOOR, Posteriorgram, PosteriorgramError, PosteriorgramFormatError,
                              augment_wildcards, load_any, load_csv, load_posteriorgram, read_header,
                              save_csv, save_posteriorgram, strip_wildcards)
from ntckws.graph import Vocabulary

VOCAB = Vocabulary(("a", "b", "c"))
SYMS = VOCAB.symbols


def _rows(raw):
    raw = raw + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


posts = st.integers(1, 12).flatmap(
    lambda t: arrays(np.float64, (t, 4), elements=st.floats(0, 1))).map(lambda a: Posteriorgram(_rows(a), SYMS))


@settings(max_examples=50, deadline=None)
@given(posts)
def test_augment_is_mean_of_non_blank(post):
    aug = augment_wildcards(post, VOCAB)
    assert aug.symbols == SYMS + ("@", "*")
    want = post.probs[:, 1:].mean(axis=1)
    np.testing.assert_allclose(aug.column("@"), want, atol=1e-15)
    np.testing.assert_array_equal(aug.column("@"), aug.column("*"))
    np.testing.assert_array_equal(aug.probs[:, :4], post.probs)
    assert strip_wildcards(aug) == post


@settings(max_examples=30, deadline=None)
@given(posts)
def test_binary_round_trip_is_float32(tmp_path_factory, post):
    path = tmp_path_factory.mktemp("b") / "x.post"
    save_posteriorgram(post, path)
    back = load_posteriorgram(path, validate=False)
    assert back.symbols == post.symbols
    np.testing.assert_array_equal(back.probs, post.probs.astype(np.float32).astype(np.float64))
    assert read_header(path) == (post.num_frames, 4)


def test_csv_round_trip_is_exact(tmp_path):
    post = Posteriorgram(_rows(np.random.default_rng(0).random((7, 4))), SYMS)
    p = tmp_path / "x.csv"
    save_csv(post, p)
    assert load_csv(p) == post
    assert load_any(p) == post


def test_augmented_posteriorgram_round_trips(tmp_path):
    aug = augment_wildcards(Posteriorgram(_rows(np.ones((3, 4))), SYMS), VOCAB)
    save_posteriorgram(aug, tmp_path / "a.post")
    back = load_posteriorgram(tmp_path / "a.post")
    assert back.is_augmented and back.symbols == aug.symbols


def test_log_probs_are_floored():
    post = Posteriorgram(np.array([[1.0, 0.0, 0.0, 0.0]]), SYMS)
    assert post.log_probs[0, 0] == 0.0
    assert post.log_probs[0, 1] == LOG_FLOOR


@pytest.mark.parametrize("probs, msg", [
    (np.array([[0.5, 0.6, 0.0, 0.0]]), "sums to"),
    (np.array([[1.5, -0.5, 0.0, 0.0]]), "out of"),
    (np.array([[np.nan, 1.0, 0.0, 0.0]]), "out of"),
    (np.zeros((0, 4)), "no frames"),
])
def test_validation(probs, msg):
    with pytest.raises(PosteriorgramError, match=msg):
        Posteriorgram(probs, SYMS)


def test_shape_errors():
    with pytest.raises(PosteriorgramError):
        Posteriorgram(np.ones(4), SYMS)
    with pytest.raises(PosteriorgramError):
        Posteriorgram(np.ones((1, 3)), SYMS)
    with pytest.raises(PosteriorgramError):
        Posteriorgram(np.full((1, 2), 0.5), ("a", "a"))


def test_augment_errors():
    post = Posteriorgram(_rows(np.ones((2, 4))), SYMS)
    with pytest.raises(PosteriorgramError):
        augment_wildcards(augment_wildcards(post, VOCAB), VOCAB)
    with pytest.raises(PosteriorgramError):
        augment_wildcards(Posteriorgram(np.ones((2, 1)), ("a",)), VOCAB)


def _corrupt(tmp_path, mutate):
    post = Posteriorgram(_rows(np.ones((3, 4))), SYMS)
    p = tmp_path / "x.post"
    save_posteriorgram(post, p)
    raw = bytearray(p.read_bytes())
    p.write_bytes(bytes(mutate(raw)))
    return p


@pytest.mark.parametrize("mutate, msg", [
    (lambda r: b"NOPE" + r[4:], "magic"),
    (lambda r: r[:4] + (9).to_bytes(4, "little") + r[8:], "version"),
    (lambda r: r[:10], "too short"),
    (lambda r: r[:40], "needs at least"),
    (lambda r: r[:-2], "truncated"),
    (lambda r: r + b"xx", "trailing"),
])
def test_binary_format_errors(tmp_path, mutate, msg):
    p = _corrupt(tmp_path, mutate)
    with pytest.raises(PosteriorgramFormatError, match=msg):
        load_posteriorgram(p)


def test_binary_invalid_rows_are_format_errors(tmp_path):
    post = Posteriorgram(np.full((2, 4), 0.5), SYMS, validate=False)
    save_posteriorgram(post, tmp_path / "x.post")
    with pytest.raises(PosteriorgramFormatError):
        load_posteriorgram(tmp_path / "x.post")
    assert load_posteriorgram(tmp_path / "x.post", validate=False).num_frames == 2


def test_csv_format_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("")
    with pytest.raises(PosteriorgramFormatError):
        load_csv(p)
    p.write_text("<blk>,a\n0.5,zz\n")
    with pytest.raises(PosteriorgramFormatError):
        load_csv(p)
