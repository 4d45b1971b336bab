import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntckws.decoder import Detection
from ntckws.emissions import Posteriorgram, save_posteriorgram
from ntckws.evaluation import (EvalError, evaluate, match_detections, negative_hours, operating_point,
                               recall_at_far, sweep, write_curve)
from ntckws.simulation import ManifestRow


def _det(utt, conf, start=0, end=5):
    return Detection(utt, "kw", start, end, conf, 3, 0)


REFS = [ManifestRow("p1", "p1.post", 1, "a", (10, 20)), ManifestRow("p2", "p2.post", 1, "b", (0, 8)),
        ManifestRow("n1", "n1.post", 0, "", None)]


def test_match_utterance_level():
    dets = [_det("p1", 0.9), _det("p1", 0.4), _det("n1", 0.8), _det("n1", 0.3)]
    m = match_detections(dets, REFS)
    assert (m.true_positives, m.false_alarms, m.misses) == (1, 2, 1)
    assert m.hit_utts == {"p1"}


def test_match_with_collar():
    far_off = _det("p1", 0.9, 40, 50)
    near = _det("p1", 0.5, 22, 30)
    assert match_detections([far_off], REFS, collar=0).true_positives == 0
    # misses on positives are not false alarms
    assert match_detections([far_off], REFS, collar=0).false_alarms == 0
    assert match_detections([near], REFS, collar=2).true_positives == 1
    assert match_detections([near], REFS, collar=1).true_positives == 0


def test_match_errors():
    with pytest.raises(EvalError):
        match_detections([_det("zz", 0.5)], REFS)
    with pytest.raises(EvalError):
        match_detections([], REFS + REFS[:1])


def test_sweep_staircase():
    dets = [_det("p1", 0.9), _det("p2", 0.6), _det("n1", 0.7)]
    curve = sweep(dets, REFS, neg_hours=2.0)
    assert [p.threshold for p in curve] == [0.6, 0.7, 0.9, math.inf]
    assert [p.recall for p in curve] == [1.0, 0.5, 0.5, 0.0]
    assert [p.far_per_hour for p in curve] == [0.5, 0.5, 0.0, 0.0]
    assert recall_at_far(curve, 0.0) == 0.5
    assert recall_at_far(curve, 0.5) == 1.0
    assert operating_point(curve, 0.0).threshold == 0.9
    with pytest.raises(EvalError):
        sweep(dets, REFS, 0.0)
    with pytest.raises(EvalError):
        recall_at_far([], 1.0)


confs = st.lists(st.tuples(st.sampled_from(["p1", "p2", "n1"]), st.floats(0, 1)), max_size=12)


@given(confs)
def test_sweep_is_monotone(items):
    dets = [_det(u, c) for u, c in items]
    curve = sweep(dets, REFS, 1.0)
    assert len(curve) == len({c for _, c in items}) + 1
    for a, b in zip(curve, curve[1:]):
        assert a.threshold < b.threshold
        assert a.recall >= b.recall and a.far_per_hour >= b.far_per_hour
    assert curve[-1].recall == 0 and curve[-1].false_alarms == 0


@given(confs, st.floats(0, 5))
def test_recall_at_far_respects_budget(items, far):
    curve = sweep([_det(u, c) for u, c in items], REFS, 1.0)
    r = recall_at_far(curve, far)
    assert any(p.recall == r and p.far_per_hour <= far for p in curve)


def test_negative_hours_from_headers(tmp_path):
    post = Posteriorgram(np.full((1200, 2), 0.5), ("<blk>", "a"))
    save_posteriorgram(post, tmp_path / "n1.post")
    assert negative_hours(REFS, tmp_path) == pytest.approx(1200 * 0.03 / 3600)


def test_evaluate_report(tmp_path):
    dets = [_det("p1", 0.9), _det("p2", 0.6), _det("n1", 0.7)]
    report, curves = evaluate(dets, REFS, 1.0, fars=(0.0, 1.0))
    assert set(curves) == {"a", "b", "all"}
    assert report.recall["all"] == {0.0: 0.5, 1.0: 1.0}
    assert report.recall["b"][0.0] == 0.0
    assert report.counts["all"] == {"positives": 2, "detected": 2, "false_alarms": 1}
    report.write(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["recall"]["a"]["1.0"] == 1.0
    assert d["thresholds"]["b"]["0.0"] == "inf"
    write_curve(curves["all"], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "threshold,far_per_hour,recall"
