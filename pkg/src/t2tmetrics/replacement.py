"""Accuracy-curve interpolation: how many same-domain images match a target accuracy.

Accuracies are decimal-valued (they arrive as text or as floats printed from
text), so the curve stores them as exact rationals via their shortest decimal
form. Inverse lookups then interpolate in exact arithmetic: a target sitting
on a knot returns that knot's count exactly, and the midpoint of a segment
lands exactly between the counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError

logger = logging.getLogger(__name__)


def _as_accuracy(value: float | str | Fraction, where: str) -> Fraction:
    if isinstance(value, Fraction):
        acc = value
    elif isinstance(value, str):
        try:
            acc = Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"{where}: not a number: {value!r}") from None
    elif isinstance(value, float):
        # repr() is the shortest decimal that round-trips, i.e. the number
        # the user actually wrote.
        acc = Fraction(repr(value))
    elif isinstance(value, int):
        acc = Fraction(value)
    else:
        raise ValidationError(f"{where}: accuracy must be numeric, got {type(value).__name__}")
    if not 0 <= acc <= 1:
        raise ValidationError(f"{where}: accuracy must lie in [0, 1], got {float(acc)}")
    return acc


@dataclass(frozen=True)
class AccuracyCurve:
    """Accuracy as a function of training image count, sorted by count."""

    points: tuple[tuple[int, Fraction], ...]
    label: str = ""

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValidationError(f"a curve needs at least two samples, got {len(self.points)}")
        counts = [c for c, _ in self.points]
        if any(c <= 0 for c in counts):
            raise ValidationError("image counts must be positive")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValidationError("image counts must be strictly increasing after sorting")

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(c for c, _ in self.points)

    @property
    def accuracies(self) -> tuple[float, ...]:
        return tuple(float(a) for _, a in self.points)


def build_accuracy_curve(
    samples: list[tuple[int, float | str | Fraction]], label: str = ""
) -> AccuracyCurve:
    """Validate and sort (count, accuracy) samples into a curve.

    Counts off the usual 5-image grid are accepted with a warning; duplicate
    counts are rejected.
    """
    if len(samples) < 2:
        raise ValidationError(f"a curve needs at least two samples, got {len(samples)}")
    points = []
    for i, (count, acc) in enumerate(samples):
        where = f"curve sample {i}"
        if isinstance(count, bool) or not isinstance(count, int):
            raise ValidationError(f"{where}: image count must be an integer, got {count!r}")
        if count <= 0:
            raise ValidationError(f"{where}: image count must be positive, got {count}")
        points.append((count, _as_accuracy(acc, where)))
    counts = [c for c, _ in points]
    if len(set(counts)) != len(counts):
        dup = sorted(c for c in set(counts) if counts.count(c) > 1)
        raise ValidationError(f"duplicate image counts in curve: {dup}")
    off_grid = sorted(c for c in counts if c % 5 != 0)
    if off_grid:
        logger.warning("curve counts %s are not multiples of 5", off_grid)
    points.sort(key=lambda p: p[0])
    return AccuracyCurve(points=tuple(points), label=label)


def average_runs(curves: list[AccuracyCurve]) -> AccuracyCurve:
    """Pointwise mean of several runs sampled on the identical count grid."""
    if not curves:
        raise ValidationError("average_runs needs at least one curve")
    if len(curves) == 1:
        return curves[0]
    grid = curves[0].counts
    for curve in curves[1:]:
        if curve.counts != grid:
            raise ValidationError(
                f"curves sample different count grids: {grid} vs {curve.counts}"
            )
    n = len(curves)
    points = tuple(
        (count, sum((c.points[i][1] for c in curves), Fraction(0)) / n)
        for i, count in enumerate(grid)
    )
    return AccuracyCurve(points=points, label=f"mean of {n} runs")


@dataclass(frozen=True)
class ReplacementResult:
    """Outcome of one inverse lookup on the same-domain accuracy curve."""

    matched_same_domain_count: float
    saturated: bool
    cross_domain_count: int | None = None


def matching_image_count(
    curve: AccuracyCurve,
    target_accuracy: float | str | Fraction,
    cross_domain_count: int | None = None,
) -> ReplacementResult:
    """Lowest image count at which the interpolated curve reaches the target.

    Piecewise-linear inverse lookup. On non-monotone curves the first
    (lowest-count) crossing wins and a warning reports the others. Targets
    outside the curve's accuracy range clamp to the first or last count with
    ``saturated=True``.
    """
    target = _as_accuracy(target_accuracy, "target accuracy")
    crossings: list[Fraction] = []
    points = curve.points
    for i, (count, acc) in enumerate(points):
        if acc == target:
            if not (crossings and i > 0 and points[i - 1][1] == target):
                crossings.append(Fraction(count))
            continue
        if i + 1 < len(points):
            nxt_count, nxt_acc = points[i + 1]
            if (acc < target < nxt_acc) or (nxt_acc < target < acc):
                w = (target - acc) / (nxt_acc - acc)
                crossings.append(Fraction(count) + w * (nxt_count - count))
    if crossings:
        if len(crossings) > 1:
            logger.warning(
                "target accuracy %s crossed %d times; using the lowest count %s",
                float(target), len(crossings), float(crossings[0]),
            )
        return ReplacementResult(
            matched_same_domain_count=float(crossings[0]),
            saturated=False,
            cross_domain_count=cross_domain_count,
        )
    accs = [a for _, a in points]
    if target > max(accs):
        clamp = points[-1][0]
    else:
        clamp = points[0][0]
    return ReplacementResult(
        matched_same_domain_count=float(clamp),
        saturated=True,
        cross_domain_count=cross_domain_count,
    )


def replacement_gain(
    curve: AccuracyCurve,
    accuracy_with_synth: float | str | Fraction,
    accuracy_without_synth: float | str | Fraction,
) -> float:
    """Image-count gain attributable to synthetic data: matched(with) - matched(without)."""
    with_synth = matching_image_count(curve, accuracy_with_synth)
    without_synth = matching_image_count(curve, accuracy_without_synth)
    return with_synth.matched_same_domain_count - without_synth.matched_same_domain_count
