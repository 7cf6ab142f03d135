"""Synthetic detection scenarios with planted geometry and planted distances.

The generator plants a training Gaussian (unit variance around a random
mean) and draws detection features from isotropic Gaussians whose centers
sit at a controlled offset from the training mean. With unit training
variance the expected squared train2test distance of a detection is
``distance_scale * feature_dim``: three quarters of it from the offset, one
quarter from the isotropic jitter.

Boxes live on a grid. Every planted TP box overlaps exactly its own
ground-truth box with IoU >= 0.77; planted FP boxes sit in a separate band
and overlap nothing. Features are quantized to float32 on generation, the
precision of the public container, so in-memory objects and files written
through :meth:`Scenario.write` agree exactly.

All randomness comes from a 64-bit counter-based generator (Philox) seeded
from the scenario seed; the same seed always reproduces byte-identical
files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .feature_model import GaussianTrainModel
from .ingest import (
    BoundingBox,
    Detection,
    DetectionSet,
    FeatureMatrix,
    GroundTruthInstance,
    GroundTruthSet,
    ImageInfo,
    write_detections,
    write_feature_matrix,
    write_ground_truth,
)

_BOX = 32.0
_CELL = 64.0
_GRID_COLS = 5
_GRID_ROWS = 5
_SLOTS_PER_IMAGE = _GRID_COLS * _GRID_ROWS
_FP_BAND_OFFSET = _GRID_ROWS * _CELL + _CELL
_IMAGE_W = int(_GRID_COLS * _CELL + _CELL / 2)
_IMAGE_H = int(_FP_BAND_OFFSET + _GRID_ROWS * _CELL + _CELL / 2)
_MAX_BOX_JITTER = 4.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of a planted scenario."""

    n_gt: int = 40
    n_tp: int = 30
    n_fp: int = 15
    feature_dim: int = 8
    tp_distance_scale: float = 1.0
    fp_distance_scale: float = 9.0
    tp_score_range: tuple[float, float] = (0.5, 1.0)
    fp_score_range: tuple[float, float] = (0.02, 0.8)
    seed: int = 0
    n_train: int = 80

    def __post_init__(self) -> None:
        if self.n_gt < 1:
            raise ValidationError(f"n_gt must be >= 1, got {self.n_gt}")
        if not 0 <= self.n_tp <= self.n_gt:
            raise ValidationError(f"n_tp must lie in [0, n_gt], got {self.n_tp}")
        if self.n_fp < 0:
            raise ValidationError(f"n_fp must be >= 0, got {self.n_fp}")
        if self.feature_dim < 1:
            raise ValidationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.n_train < 2:
            raise ValidationError(f"n_train must be >= 2, got {self.n_train}")
        for name in ("tp_distance_scale", "fp_distance_scale"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValidationError(f"{name} must be finite and > 0, got {value}")
        for name in ("tp_score_range", "fp_score_range"):
            pair = tuple(getattr(self, name))
            if len(pair) != 2 or not all(math.isfinite(v) for v in pair):
                raise ValidationError(f"{name} must be a (min, max) pair")
            lo, hi = pair
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValidationError(f"{name} must satisfy 0 <= min <= max <= 1, got {pair}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @classmethod
    def from_dict(cls, raw: dict) -> ScenarioSpec:
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError(f"unknown scenario spec fields: {', '.join(unknown)}")
        fields = dict(raw)
        for name in ("tp_score_range", "fp_score_range"):
            if name in fields:
                pair = fields[name]
                if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                    raise ValidationError(f"{name} must be a (min, max) pair")
                fields[name] = (float(pair[0]), float(pair[1]))
        return cls(**fields)

    def to_dict(self) -> dict:
        return {
            "n_gt": self.n_gt,
            "n_tp": self.n_tp,
            "n_fp": self.n_fp,
            "feature_dim": self.feature_dim,
            "tp_distance_scale": self.tp_distance_scale,
            "fp_distance_scale": self.fp_distance_scale,
            "tp_score_range": list(self.tp_score_range),
            "fp_score_range": list(self.fp_score_range),
            "seed": self.seed,
            "n_train": self.n_train,
        }


@dataclass(frozen=True, eq=False)
class Scenario:
    """Generated ground truth, detections with bound features, and training rows."""

    spec: ScenarioSpec
    ground_truth: GroundTruthSet
    detections: DetectionSet
    train_features: FeatureMatrix
    test_features: FeatureMatrix
    planted_mean: np.ndarray
    planted_feature_std: float
    tp_detection_ids: frozenset[str]

    def planted_model(self) -> GaussianTrainModel:
        """The exact planted Gaussian (not fitted from the sampled rows)."""
        d = self.spec.feature_dim
        cov = np.eye(d) * self.planted_feature_std**2
        return GaussianTrainModel(
            mean=self.planted_mean.copy(),
            covariance=cov,
            precision=np.eye(d) / self.planted_feature_std**2,
            regularization=0.0,
            sample_count=self.spec.n_train,
        )

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        """Write the four public artifacts; re-running is byte-identical."""
        out_dir = Path(out_dir)
        paths = {
            "ground_truth": out_dir / "ground_truth.json",
            "detections": out_dir / "detections.json",
            "features": out_dir / "features.t2tfeat",
            "train_features": out_dir / "train_features.t2tfeat",
        }
        write_ground_truth(self.ground_truth, paths["ground_truth"])
        write_detections(self.detections, paths["detections"])
        write_feature_matrix(self.test_features, paths["features"])
        write_feature_matrix(self.train_features, paths["train_features"])
        return paths


def _f32(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float32).astype(np.float64)


def _unit_rows(g: np.ndarray) -> np.ndarray:
    if g.size == 0:
        return g
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise NumericalError("degenerate zero-norm direction draw")
    return g / norms


def _slot_box(index: int, n_images: int, band_offset: float) -> tuple[int, BoundingBox]:
    image = index % n_images
    slot = index // n_images
    row, col = divmod(slot, _GRID_COLS)
    x = _CELL / 4 + col * _CELL
    y = _CELL / 4 + row * _CELL + band_offset
    return image, BoundingBox(x=x, y=y, w=_BOX, h=_BOX)


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Deterministically expand a spec into data with known structure."""
    if spec.n_tp + spec.n_fp == 0:
        raise ValidationError("scenario needs at least one detection (n_tp + n_fp >= 1)")
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    dim = spec.feature_dim

    planted_mean = rng.normal(0.0, 1.0, dim)
    train = _f32(planted_mean + rng.normal(0.0, 1.0, (spec.n_train, dim)))

    # Offset norm and jitter sized so the expected squared distance from the
    # planted unit-variance Gaussian is distance_scale * dim.
    def draw_features(n: int, scale: float) -> np.ndarray:
        directions = _unit_rows(rng.normal(0.0, 1.0, (n, dim)))
        jitter = rng.normal(0.0, 1.0, (n, dim))
        offset_len = math.sqrt(0.75 * scale * dim)
        jitter_std = math.sqrt(0.25 * scale)
        return _f32(planted_mean + offset_len * directions + jitter_std * jitter)

    tp_features = draw_features(spec.n_tp, spec.tp_distance_scale)
    tp_jitter = rng.uniform(0.0, _MAX_BOX_JITTER, spec.n_tp)
    tp_scores = rng.uniform(*spec.tp_score_range, spec.n_tp)
    fp_features = draw_features(spec.n_fp, spec.fp_distance_scale)
    fp_scores = rng.uniform(*spec.fp_score_range, spec.n_fp)

    n_images = max(
        1,
        -(-spec.n_gt // _SLOTS_PER_IMAGE),
        -(-spec.n_fp // _SLOTS_PER_IMAGE),
    )
    images = tuple(
        ImageInfo(id=f"img-{i:04d}", file_name=f"img-{i:04d}.png",
                  width=_IMAGE_W, height=_IMAGE_H)
        for i in range(n_images)
    )

    instances = []
    gt_boxes = []
    for i in range(spec.n_gt):
        image, box = _slot_box(i, n_images, band_offset=0.0)
        gt_boxes.append((image, box))
        instances.append(
            GroundTruthInstance(
                image_id=images[image].id, box=box, instance_id=f"gt-{i:05d}"
            )
        )

    detections = []
    for i in range(spec.n_tp):
        image, box = gt_boxes[i]
        shifted = BoundingBox(x=box.x + tp_jitter[i], y=box.y, w=box.w, h=box.h)
        detections.append(
            Detection(
                image_id=images[image].id,
                box=shifted,
                score=float(tp_scores[i]),
                detection_id=f"tp-{i:05d}",
                feature=tp_features[i].copy(),
            )
        )
    for i in range(spec.n_fp):
        image, box = _slot_box(i, n_images, band_offset=_FP_BAND_OFFSET)
        detections.append(
            Detection(
                image_id=images[image].id,
                box=box,
                score=float(fp_scores[i]),
                detection_id=f"fp-{i:05d}",
                feature=fp_features[i].copy(),
            )
        )

    det_set = DetectionSet(detections=tuple(detections))
    test_features = FeatureMatrix(
        data=np.array([d.feature for d in detections], dtype=np.float64),
        row_ids=tuple(d.detection_id for d in detections),
    )

    return Scenario(
        spec=spec,
        ground_truth=GroundTruthSet(images=images, instances=tuple(instances)),
        detections=det_set,
        train_features=FeatureMatrix(
            data=train, row_ids=tuple(f"train-{i:05d}" for i in range(spec.n_train))
        ),
        test_features=test_features,
        planted_mean=planted_mean,
        planted_feature_std=1.0,
        tp_detection_ids=frozenset(f"tp-{i:05d}" for i in range(spec.n_tp)),
    )


def shrink_tp_distances(scenario: Scenario, factor: float) -> Scenario:
    """Move planted TP features toward the training mean.

    Scales every planted TP distance by ``factor`` (up to float32
    quantization): the feature moves to mean + sqrt(factor) * (feature - mean).
    ``factor=1.0`` returns the scenario unchanged; the limit factor -> 0 puts
    every TP feature exactly on the planted mean.
    """
    if not math.isfinite(factor) or not 0.0 <= factor <= 1.0:
        raise ValidationError(f"shrink factor must lie in [0, 1], got {factor}")
    if factor == 1.0:
        return scenario
    s = math.sqrt(factor)
    mean = scenario.planted_mean
    moved = []
    for det in scenario.detections.detections:
        if det.detection_id in scenario.tp_detection_ids:
            new_feature = _f32(mean + s * (det.feature - mean))
            moved.append(dc_replace(det, feature=new_feature))
        else:
            moved.append(det)
    det_set = DetectionSet(detections=tuple(moved))
    test_features = FeatureMatrix(
        data=np.array([d.feature for d in moved], dtype=np.float64),
        row_ids=tuple(d.detection_id for d in moved),
    )
    return Scenario(
        spec=scenario.spec,
        ground_truth=scenario.ground_truth,
        detections=det_set,
        train_features=scenario.train_features,
        test_features=test_features,
        planted_mean=scenario.planted_mean,
        planted_feature_std=scenario.planted_feature_std,
        tp_detection_ids=scenario.tp_detection_ids,
    )
