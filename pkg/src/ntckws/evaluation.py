"""Detection scoring: matching, threshold sweeps and recall at a fixed FAR."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .decoder import Detection
from .emissions import read_header
from .simulation import FRAME_SHIFT, ManifestRow

DEFAULT_FARS = (0.05, 0.5, 1.0)


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    true_positives: int
    false_alarms: int
    misses: int
    hit_utts: frozenset = frozenset()


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    far_per_hour: float
    recall: float
    true_positives: int
    false_alarms: int


def _index_refs(refs: Sequence[ManifestRow]) -> dict[str, ManifestRow]:
    out: dict[str, ManifestRow] = {}
    for r in refs:
        if r.utt in out:
            raise EvalError(f"duplicate utterance id {r.utt!r} in references")
        out[r.utt] = r
    return out


def _hits(det: Detection, ref: ManifestRow, collar: Optional[int]) -> bool:
    if collar is None or ref.span is None:
        return True
    s, e = ref.span
    return det.start <= e + collar and det.end >= s - collar


def _classify(dets: Sequence[Detection], refs: dict[str, ManifestRow], collar: Optional[int]):
    """Best confidence per hit positive, and every negative detection's confidence."""
    best_hit: dict[str, float] = {}
    fa_conf: list[float] = []
    for d in dets:
        ref = refs.get(d.utt)
        if ref is None:
            raise EvalError(f"detection for unknown utterance {d.utt!r}")
        if ref.label == 0:
            fa_conf.append(d.confidence)
        elif _hits(d, ref, collar):
            best_hit[d.utt] = max(best_hit.get(d.utt, -math.inf), d.confidence)
    return best_hit, fa_conf


def match_detections(dets: Sequence[Detection], refs: Sequence[ManifestRow],
                     collar: Optional[int] = None) -> MatchResult:
    """Utterance-level matching by default; ``collar`` (frames) enables span overlap.

    At most one true positive per positive utterance. Every detection on a
    negative is a false alarm. Detections on a positive that miss its span
    (collar mode) count as neither.
    """
    index = _index_refs(refs)
    best_hit, fa = _classify(dets, index, collar)
    n_pos = sum(r.label == 1 for r in refs)
    return MatchResult(len(best_hit), len(fa), n_pos - len(best_hit), frozenset(best_hit))


def sweep(dets: Sequence[Detection], refs: Sequence[ManifestRow], neg_hours: float,
          collar: Optional[int] = None) -> list[CurvePoint]:
    """Staircase over every distinct confidence plus +inf, thresholds ascending.

    A detection is kept at threshold ``t`` when its confidence is >= ``t``.
    """
    if not neg_hours > 0:
        raise EvalError(f"neg_hours must be > 0, got {neg_hours}")
    index = _index_refs(refs)
    best_hit, fa_conf = _classify(dets, index, collar)
    n_pos = sum(r.label == 1 for r in refs)
    hits = np.sort(np.fromiter(best_hit.values(), dtype=np.float64, count=len(best_hit)))
    fas = np.sort(np.asarray(fa_conf, dtype=np.float64))
    thresholds = np.unique(np.concatenate([[d.confidence for d in dets], [math.inf]]))
    tp = len(hits) - np.searchsorted(hits, thresholds, side="left")
    fa = len(fas) - np.searchsorted(fas, thresholds, side="left")
    return [CurvePoint(float(t), float(f) / neg_hours, (float(p) / n_pos) if n_pos else 0.0, int(p), int(f))
            for t, p, f in zip(thresholds, tp, fa)]


def recall_at_far(curve: Sequence[CurvePoint], far_per_hour: float) -> float:
    """Best recall over operating points whose FAR does not exceed the target."""
    if not curve:
        raise EvalError("empty curve")
    ok = [p.recall for p in curve if p.far_per_hour <= far_per_hour]
    return max(ok) if ok else 0.0


def operating_point(curve: Sequence[CurvePoint], far_per_hour: float) -> CurvePoint:
    ok = [p for p in curve if p.far_per_hour <= far_per_hour]
    if not ok:
        return curve[-1]
    # lowest threshold among the best-recall points
    best = max(p.recall for p in ok)
    return min((p for p in ok if p.recall == best), key=lambda p: p.threshold)


def negative_hours(refs: Sequence[ManifestRow], root=None, frame_shift: float = FRAME_SHIFT) -> float:
    """Negative duration read from the posteriorgram file headers."""
    frames = 0
    for r in refs:
        if r.label == 0:
            path = Path(root) / r.file if root is not None else Path(r.file)
            frames += read_header(path)[0]
    return frames * frame_shift / 3600.0


@dataclass
class EvalReport:
    neg_hours: float
    fars: tuple
    recall: dict = field(default_factory=dict)       # level -> {far: recall}
    thresholds: dict = field(default_factory=dict)   # level -> {far: threshold}
    counts: dict = field(default_factory=dict)       # level -> {"positives", "detected", "false_alarms"}

    def to_dict(self) -> dict:
        return {"neg_hours": self.neg_hours, "fars": list(self.fars),
                "recall": {lv: {str(f): r for f, r in d.items()} for lv, d in self.recall.items()},
                "thresholds": {lv: {str(f): t for f, t in d.items()} for lv, d in self.thresholds.items()},
                "counts": self.counts}

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _finite(x: float):
    return x if math.isfinite(x) else "inf"


def evaluate(dets: Sequence[Detection], refs: Sequence[ManifestRow], neg_hours: float,
             fars: Sequence[float] = DEFAULT_FARS, collar: Optional[int] = None) -> tuple[EvalReport, dict]:
    """Per-level and overall recall at each FAR; returns the report and the curves."""
    _index_refs(refs)
    by_level: dict[str, list[ManifestRow]] = defaultdict(list)
    negs = [r for r in refs if r.label == 0]
    for r in refs:
        if r.label == 1:
            by_level[r.level].append(r)
    groups = {lv: rows for lv, rows in sorted(by_level.items())}
    groups["all"] = [r for r in refs if r.label == 1]
    report = EvalReport(neg_hours, tuple(fars))
    curves = {}
    for lv, pos in groups.items():
        sub = pos + negs
        keep = {r.utt for r in sub}
        d = [x for x in dets if x.utt in keep]
        curve = sweep(d, sub, neg_hours, collar)
        curves[lv] = curve
        report.recall[lv] = {f: recall_at_far(curve, f) for f in fars}
        report.thresholds[lv] = {f: _finite(operating_point(curve, f).threshold) for f in fars}
        m = match_detections(d, sub, collar)
        report.counts[lv] = {"positives": len(pos), "detected": m.true_positives, "false_alarms": m.false_alarms}
    return report, curves


def write_curve(curve: Sequence[CurvePoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "far_per_hour", "recall"])
        for p in curve:
            w.writerow([repr(p.threshold), repr(p.far_per_hour), repr(p.recall)])


def curve_dicts(curve: Sequence[CurvePoint]) -> list[dict]:
    return [asdict(p) for p in curve]
