"""Precision/recall and average-precision metrics, score-ranked and distance-ranked.

Score-side definitions keep a detection when its score is at or above the
threshold. The distance-ranked variants flip the inequality: a detection is
kept when its train2test distance is at or below the threshold, so walking
the thresholds upward admits detections from nearest to farthest.

AP_t2t averages the distance-ranked precision over one threshold per true
positive entry: tied distances contribute one term each, all evaluated at
the shared threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import T2TError, UndefinedMetricError, ValidationError
from .feature_model import (
    DistanceAnnotatedOutcome,
    GaussianTrainModel,
    Kind,
    annotate_distances,
)
from .ingest import DetectionSet, GroundTruthSet
from .matching import IOU_GRID, MatchOutcome, match_detections

# Score thresholds naming the three detection regimes: every candidate with a
# minimal score, the above-medium-confidence subset, and the high-confidence
# subset.
DEFAULT_SCORE_THRESHOLDS: dict[str, float] = {"all": 0.01, "med": 0.1, "high": 0.5}

# AP sums are ratios of small integers. Up to this many entries they are
# accumulated as exact rationals and rounded once at the end, which keeps the
# result independent of summation order; beyond it, float summation.
_EXACT_SUM_LIMIT = 4096


def _ratio_mean(ratios: list[tuple[int, int]], denominator: int) -> float:
    """sum(n/d for n, d in ratios) / denominator, correctly rounded when small."""
    if len(ratios) <= _EXACT_SUM_LIMIT:
        total = sum((Fraction(n, d) for n, d in ratios), Fraction(0))
        return float(total / denominator)
    return float(sum(n / d for n, d in ratios) / denominator)


def _check_unit_interval(value: float, what: str) -> float:
    value = float(value)
    if not np.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ValidationError(f"{what} must lie in [0, 1], got {value}")
    return value


def precision_recall(
    annotated: DistanceAnnotatedOutcome, score_threshold: float
) -> tuple[float | None, float]:
    """Precision and recall over entries with score >= threshold.

    Precision is None when no entry passes the threshold (the undefined 0/0
    case is signalled, not defaulted). Recall over an empty instance set is
    reported as 0.0.
    """
    _check_unit_interval(score_threshold, "score_threshold")
    tp = sum(1 for e in annotated.entries if e.kind is Kind.TP and e.score >= score_threshold)
    fp = sum(1 for e in annotated.entries if e.kind is Kind.FP and e.score >= score_threshold)
    recall = tp / annotated.total_gt if annotated.total_gt > 0 else 0.0
    if tp + fp == 0:
        return None, recall
    return tp / (tp + fp), recall


def t2t_precision_recall(
    annotated: DistanceAnnotatedOutcome, distance_threshold: float
) -> tuple[float | None, float]:
    """Precision and recall over entries with distance <= threshold (inclusive)."""
    if not np.isfinite(distance_threshold) or distance_threshold < 0:
        raise ValidationError(
            f"distance_threshold must be finite and >= 0, got {distance_threshold}"
        )
    tp = sum(1 for e in annotated.entries if e.kind is Kind.TP and e.distance <= distance_threshold)
    fp = sum(1 for e in annotated.entries if e.kind is Kind.FP and e.distance <= distance_threshold)
    recall = tp / annotated.total_gt if annotated.total_gt > 0 else 0.0
    if tp + fp == 0:
        return None, recall
    return tp / (tp + fp), recall


def average_precision(outcome: MatchOutcome) -> float:
    """All-point AP: mean over ground truth of the precision at each TP entry.

    Entries are ranked by descending score, ties broken by detection id. The
    precision at a TP entry in rank position k is (TPs among the first k) / k.
    """
    if outcome.total_gt == 0:
        raise UndefinedMetricError("average precision is undefined without ground truth")
    ranked = [(det.score, det.detection_id, True) for det, _ in outcome.true_positives]
    ranked += [(det.score, det.detection_id, False) for det in outcome.false_positives]
    ranked.sort(key=lambda t: (-t[0], t[1]))
    cum_tp = 0
    terms: list[tuple[int, int]] = []
    for position, (_, _, is_tp) in enumerate(ranked, start=1):
        if is_tp:
            cum_tp += 1
            terms.append((cum_tp, position))
    return _ratio_mean(terms, outcome.total_gt)


def ap_over_iou_range(
    dets: DetectionSet,
    gts: GroundTruthSet,
    score_threshold: float = 0.0,
    iou_thresholds: tuple[float, ...] = IOU_GRID,
) -> float:
    """Mean AP over an IoU threshold grid (default 0.50:0.05:0.95)."""
    if not iou_thresholds:
        raise ValidationError("iou_thresholds must not be empty")
    values = [
        average_precision(match_detections(dets, gts, t, score_threshold))
        for t in iou_thresholds
    ]
    return float(sum(values) / len(values))


def ap_t2t(annotated: DistanceAnnotatedOutcome) -> float:
    """Distance-ranked average precision.

    One precision term per TP entry, evaluated at that entry's distance with
    the inclusive <= rule; the sum is divided by the total instance count.
    Zero TP entries give 0.0; an empty instance set is undefined. The value
    depends on the distances only through their ordering (ties included).
    """
    if annotated.total_gt == 0:
        raise UndefinedMetricError("AP_t2t is undefined without ground truth")
    tp_d = np.sort(annotated.distances(Kind.TP))
    if tp_d.size == 0:
        return 0.0
    all_d = np.sort(np.array([e.distance for e in annotated.entries], dtype=np.float64))
    tp_within = np.searchsorted(tp_d, tp_d, side="right")
    all_within = np.searchsorted(all_d, tp_d, side="right")
    terms = [(int(t), int(a)) for t, a in zip(tp_within, all_within)]
    return _ratio_mean(terms, annotated.total_gt)


class RegimeError(T2TError):
    """At least one score regime failed; successful regimes are preserved.

    Attributes:
        results: regime name -> AP_t2t for the regimes that succeeded.
        failures: regime name -> the exception that stopped that regime.
    """

    def __init__(self, results: dict[str, float], failures: dict[str, T2TError]):
        self.results = results
        self.failures = failures
        detail = "; ".join(f"{name}: {exc}" for name, exc in failures.items())
        super().__init__(f"{len(failures)} regime(s) failed: {detail}")


def ap_t2t_profile(
    model: GaussianTrainModel,
    dets: DetectionSet,
    gts: GroundTruthSet,
    score_thresholds: dict[str, float] | None = None,
    iou_thresholds: tuple[float, ...] = (0.5,),
) -> dict[str, float]:
    """AP_t2t per score regime, each regime rematched at its own threshold.

    The instance count |X| comes from the ground truth alone, so it is the
    same in every regime. With several IoU thresholds the per-regime value is
    the mean over the grid. Regimes are evaluated independently; if any fail,
    a RegimeError carrying the partial results is raised after all regimes
    were attempted.
    """
    thresholds = DEFAULT_SCORE_THRESHOLDS if score_thresholds is None else score_thresholds
    if not thresholds:
        raise ValidationError("score_thresholds must not be empty")
    for name, value in thresholds.items():
        _check_unit_interval(value, f"score threshold {name!r}")
    if not iou_thresholds:
        raise ValidationError("iou_thresholds must not be empty")
    if len(gts.instances) == 0:
        raise UndefinedMetricError("AP_t2t is undefined without ground truth")

    results: dict[str, float] = {}
    failures: dict[str, T2TError] = {}
    for name, score_threshold in thresholds.items():
        try:
            values = []
            for iou_threshold in iou_thresholds:
                outcome = match_detections(dets, gts, iou_threshold, score_threshold)
                values.append(ap_t2t(annotate_distances(model, outcome)))
            results[name] = float(sum(values) / len(values))
        except T2TError as exc:
            failures[name] = exc
    if failures:
        raise RegimeError(results, failures)
    return results


@dataclass(frozen=True)
class MetricReport:
    """Headline numbers of one evaluation run.

    ``ap``, ``ap_5095``, and ``counts`` are computed at the base (lowest)
    score threshold; ``ap_t2t_by_regime`` holds one value per regime.
    """

    ap: float
    ap_5095: float
    ap_t2t_by_regime: dict[str, float] = field(default_factory=dict)
    counts: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self) -> None:
        for what, value in (("ap", self.ap), ("ap_5095", self.ap_5095)):
            _check_unit_interval(value, what)
        for name, value in self.ap_t2t_by_regime.items():
            _check_unit_interval(value, f"ap_t2t[{name}]")
        if len(self.counts) != 3 or any(c < 0 for c in self.counts):
            raise ValidationError(f"counts must be three non-negative ints, got {self.counts}")

    def to_dict(self) -> dict:
        tp, fp, fn = self.counts
        return {
            "ap": self.ap,
            "ap_5095": self.ap_5095,
            "ap_t2t": dict(self.ap_t2t_by_regime),
            "counts": {"tp": tp, "fp": fp, "fn": fn},
        }
