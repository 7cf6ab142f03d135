"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately written the slow, obvious way (explicit set
construction, nested loops, exact rationals) and shares no code with the
library paths it checks.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from t2tmetrics import AnnotatedEntry, DistanceAnnotatedOutcome, Kind


def ap_t2t_bruteforce(tp_distances, fp_distances, total_gt: int) -> float:
    """Float sweep: one precision term per TP entry, sets built explicitly."""
    total = 0.0
    for d in tp_distances:
        tp_in = sum(1 for x in tp_distances if x <= d)
        fp_in = sum(1 for x in fp_distances if x <= d)
        total += tp_in / (tp_in + fp_in)
    return total / total_gt


def ap_t2t_exact(tp_distances, fp_distances, total_gt: int) -> Fraction:
    """Same sweep in exact rational arithmetic."""
    total = Fraction(0)
    for d in tp_distances:
        tp_in = sum(1 for x in tp_distances if x <= d)
        fp_in = sum(1 for x in fp_distances if x <= d)
        total += Fraction(tp_in, tp_in + fp_in)
    return total / total_gt


def t2t_pr_bruteforce(tp_distances, fp_distances, total_gt: int, threshold: float):
    tp_in = sum(1 for x in tp_distances if x <= threshold)
    fp_in = sum(1 for x in fp_distances if x <= threshold)
    precision = None if tp_in + fp_in == 0 else tp_in / (tp_in + fp_in)
    recall = tp_in / total_gt if total_gt else 0.0
    return precision, recall


def average_precision_enumeration(records, total_gt: int) -> Fraction:
    """records: (score, detection_id, is_tp); exact all-point AP by walking ranks."""
    ordered = sorted(records, key=lambda r: (-r[0], r[1]))
    total = Fraction(0)
    seen_tp = 0
    for rank, (_, _, is_tp) in enumerate(ordered, start=1):
        if is_tp:
            seen_tp += 1
            total += Fraction(seen_tp, rank)
    return total / total_gt


def covariance_twopass(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Textbook two-pass mean and unbiased covariance with explicit loops."""
    n, d = X.shape
    mean = np.zeros(d)
    for i in range(n):
        for j in range(d):
            mean[j] += X[i, j]
    mean /= n
    cov = np.zeros((d, d))
    if n > 1:
        for a in range(d):
            for b in range(d):
                s = 0.0
                for i in range(n):
                    s += (X[i, a] - mean[a]) * (X[i, b] - mean[b])
                cov[a, b] = s / (n - 1)
    return mean, cov


def histogram_recount(values, edges) -> list[int]:
    """Per-bin recount: half-open bins, final bin closed on the right."""
    counts = [0] * (len(edges) - 1)
    for v in values:
        for b in range(len(edges) - 1):
            last = b == len(edges) - 2
            if edges[b] <= v < edges[b + 1] or (last and v == edges[b + 1]):
                counts[b] += 1
                break
    return counts


def make_random_annotated(
    rng: np.random.Generator,
    max_entries: int = 50,
    max_gt: int = 60,
    lattice: bool = False,
    ties: bool = True,
) -> DistanceAnnotatedOutcome:
    """Random annotated outcome; the lattice mode draws distances from k/8 so
    ties are common and downstream arithmetic on them stays exact.

    ``ties=False`` keeps continuous draws as they are (distinct almost
    surely), which matters for the monotone-improvement property: pulling a
    TP out of a tied cluster can legitimately lower its own precision term.
    """
    n_entries = int(rng.integers(1, max_entries + 1))
    n_tp = int(rng.integers(0, n_entries + 1))
    total_gt = int(rng.integers(max(n_tp, 1), max_gt + 1))
    if lattice:
        distances = rng.integers(0, 65, n_entries) / 8.0
    else:
        distances = rng.uniform(0.0, 100.0, n_entries)
        if ties and n_entries > 1 and rng.random() < 0.5:
            # clone a few distances to exercise tie handling
            src = rng.integers(0, n_entries, n_entries // 2)
            dst = rng.integers(0, n_entries, n_entries // 2)
            distances[dst] = distances[src]
    scores = rng.uniform(0.0, 1.0, n_entries)
    entries = tuple(
        AnnotatedEntry(
            detection_id=f"d{i:04d}",
            kind=Kind.TP if i < n_tp else Kind.FP,
            score=float(scores[i]),
            distance=float(distances[i]),
        )
        for i in range(n_entries)
    )
    return DistanceAnnotatedOutcome(entries=entries, total_gt=total_gt, score_threshold=0.0)
