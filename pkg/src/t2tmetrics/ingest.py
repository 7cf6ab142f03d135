"""Loading, validation, and serialization of ground truth, detections, and features.

File formats
------------
Ground truth is a JSON document::

    {"images":      [{"id": "img-1", "file_name": "a.png", "width": 640, "height": 480}, ...],
     "annotations": [{"id": "gt-1", "image_id": "img-1", "bbox": [x, y, w, h]}, ...]}

Detections are a JSON list::

    [{"detection_id": "d-1", "image_id": "img-1", "bbox": [x, y, w, h], "score": 0.87}, ...]

Feature matrices come in two containers, distinguished by the leading bytes:

* binary: magic ``T2TFEAT\\0`` | u64 row count | u64 dim | rows*dim little-endian
  float32 values (row major) | per row a u32 byte length followed by the UTF-8
  row id;
* CSV fallback: one row per line, first column the row id, remaining columns
  the feature values.

Identifiers may appear as JSON strings or integers; they are normalized to
strings internally and written back as strings. Out-of-range or non-finite
values are rejected with an error naming the offending record, never clamped
or repaired.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BindingError, ParseError, ValidationError
from .fsio import write_bytes, write_text

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"T2TFEAT\x00"

_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")


def _require_finite(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{what} must be finite, got {value!r}")
    return value


def _as_identifier(value: object, what: str) -> str:
    if isinstance(value, str):
        if not value:
            raise ValidationError(f"{what} must be a non-empty string")
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    raise ValidationError(f"{what} must be a string or integer, got {type(value).__name__}")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box as (x, y, w, h) with strictly positive extent."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, _require_finite(getattr(self, name), f"box {name}"))
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"box extent must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class ImageInfo:
    id: str
    file_name: str
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"image {self.id!r} must have positive size")


@dataclass(frozen=True)
class GroundTruthInstance:
    """One annotated object: an image reference, a box, and a unique id."""

    image_id: str
    box: BoundingBox
    instance_id: str


@dataclass(frozen=True, eq=False)
class Detection:
    """One detector output; ``feature`` stays None until bound from a matrix."""

    image_id: str
    box: BoundingBox
    score: float
    detection_id: str
    feature: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "score", _require_finite(self.score, f"detection {self.detection_id!r} score"))
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(
                f"detection {self.detection_id!r} score must lie in [0, 1], got {self.score}"
            )


@dataclass(frozen=True)
class GroundTruthSet:
    images: tuple[ImageInfo, ...]
    instances: tuple[GroundTruthInstance, ...]

    def __post_init__(self) -> None:
        image_ids = [im.id for im in self.images]
        if len(set(image_ids)) != len(image_ids):
            raise ValidationError("duplicate image ids in ground truth")
        known = set(image_ids)
        seen: set[str] = set()
        for inst in self.instances:
            if inst.instance_id in seen:
                raise ValidationError(f"duplicate ground-truth instance id {inst.instance_id!r}")
            seen.add(inst.instance_id)
            if inst.image_id not in known:
                raise ValidationError(
                    f"instance {inst.instance_id!r} references unknown image {inst.image_id!r}"
                )

    def __len__(self) -> int:
        return len(self.instances)

    def instances_by_image(self) -> dict[str, list[GroundTruthInstance]]:
        grouped: dict[str, list[GroundTruthInstance]] = {}
        for inst in self.instances:
            grouped.setdefault(inst.image_id, []).append(inst)
        return grouped


@dataclass(frozen=True)
class DetectionSet:
    detections: tuple[Detection, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for det in self.detections:
            if det.detection_id in seen:
                raise ValidationError(f"duplicate detection id {det.detection_id!r}")
            seen.add(det.detection_id)

    def __len__(self) -> int:
        return len(self.detections)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Row-major feature matrix with one id per row.

    Values are held as float64 regardless of the on-disk container; the
    binary writer quantizes to float32, which is the format's precision.
    """

    data: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValidationError(f"feature data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"feature matrix must be at least 1x1, got shape {data.shape}")
        if data.shape[0] != len(self.row_ids):
            raise ValidationError(
                f"{len(self.row_ids)} row ids for {data.shape[0]} data rows"
            )
        if len(set(self.row_ids)) != len(self.row_ids):
            raise ValidationError("duplicate row ids in feature matrix")
        if not np.isfinite(data).all():
            bad = int(np.argwhere(~np.isfinite(data))[0][0])
            raise ValidationError(f"non-finite feature value in row {self.row_ids[bad]!r}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, row_id: str) -> np.ndarray:
        try:
            idx = self.row_ids.index(row_id)
        except ValueError:
            raise KeyError(row_id) from None
        return self.data[idx].copy()


# ---------------------------------------------------------------- ground truth


def _load_json(path: str | Path) -> object:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 text ({exc.reason})") from exc


def _parse_box(raw: object, where: str) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ParseError(f"{where}: bbox must be a list of four numbers")
    vals = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"{where}: bbox must contain numbers only")
        vals.append(float(v))
    try:
        return BoundingBox(*vals)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def load_ground_truth(path: str | Path) -> GroundTruthSet:
    """Load a ground-truth document, rejecting malformed or invalid records.

    Raises:
        ParseError: structural problems (wrong JSON shape, missing fields).
        ValidationError: well-formed records violating invariants
            (non-positive boxes, duplicate ids, dangling image references).
    """
    doc = _load_json(path)
    if not isinstance(doc, dict) or "images" not in doc or "annotations" not in doc:
        raise ParseError(f"{path}: expected an object with 'images' and 'annotations'")
    if not isinstance(doc["images"], list) or not isinstance(doc["annotations"], list):
        raise ParseError(f"{path}: 'images' and 'annotations' must be lists")

    images = []
    for i, raw in enumerate(doc["images"]):
        where = f"{path}: images[{i}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: expected an object")
        try:
            images.append(
                ImageInfo(
                    id=_as_identifier(raw["id"], f"{where}.id"),
                    file_name=str(raw.get("file_name", "")),
                    width=int(raw["width"]),
                    height=int(raw["height"]),
                )
            )
        except KeyError as exc:
            raise ParseError(f"{where}: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}: {exc}") from None

    instances = []
    for i, raw in enumerate(doc["annotations"]):
        where = f"{path}: annotations[{i}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: expected an object")
        try:
            instances.append(
                GroundTruthInstance(
                    image_id=_as_identifier(raw["image_id"], f"{where}.image_id"),
                    box=_parse_box(raw["bbox"], where),
                    instance_id=_as_identifier(raw["id"], f"{where}.id"),
                )
            )
        except KeyError as exc:
            raise ParseError(f"{where}: missing field {exc.args[0]!r}") from None

    gts = GroundTruthSet(images=tuple(images), instances=tuple(instances))
    logger.info("loaded %d ground-truth instances over %d images from %s",
                len(gts.instances), len(gts.images), path)
    return gts


def write_ground_truth(gts: GroundTruthSet, path: str | Path) -> Path:
    doc = {
        "images": [
            {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
            for im in gts.images
        ],
        "annotations": [
            {"id": inst.instance_id, "image_id": inst.image_id, "bbox": inst.box.to_list()}
            for inst in gts.instances
        ],
    }
    return write_text(path, json.dumps(doc, indent=2) + "\n")


# ----------------------------------------------------------------- detections


def load_detections(path: str | Path) -> DetectionSet:
    """Load a detection list; scores outside [0, 1] are rejected, not clamped."""
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise ParseError(f"{path}: expected a JSON list of detection records")
    dets = []
    for i, raw in enumerate(doc):
        where = f"{path}: detections[{i}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: expected an object")
        try:
            det_id = _as_identifier(raw["detection_id"], f"{where}.detection_id")
            score = raw["score"]
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise ParseError(f"{where}: score must be a number")
            dets.append(
                Detection(
                    image_id=_as_identifier(raw["image_id"], f"{where}.image_id"),
                    box=_parse_box(raw["bbox"], where),
                    score=float(score),
                    detection_id=det_id,
                )
            )
        except KeyError as exc:
            raise ParseError(f"{where}: missing field {exc.args[0]!r}") from None
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    out = DetectionSet(detections=tuple(dets))
    logger.info("loaded %d detections from %s", len(out), path)
    return out


def write_detections(dets: DetectionSet, path: str | Path) -> Path:
    doc = [
        {
            "detection_id": det.detection_id,
            "image_id": det.image_id,
            "bbox": det.box.to_list(),
            "score": det.score,
        }
        for det in dets.detections
    ]
    return write_text(path, json.dumps(doc, indent=2) + "\n")


# ------------------------------------------------------------ feature matrices


def _read_exact(fh: io.BufferedReader, n: int, path: Path, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ParseError(f"{path}: truncated feature file while reading {what}")
    return buf


def _load_features_binary(path: Path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(FEATURE_MAGIC), path, "magic")
        if magic != FEATURE_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        rows = _U64.unpack(_read_exact(fh, 8, path, "row count"))[0]
        dim = _U64.unpack(_read_exact(fh, 8, path, "dimension"))[0]
        if rows < 1 or dim < 1:
            raise ParseError(f"{path}: header declares empty matrix ({rows}x{dim})")
        payload = _read_exact(fh, rows * dim * 4, path, "feature values")
        data = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
        ids = []
        for i in range(rows):
            (length,) = _U32.unpack(_read_exact(fh, 4, path, f"id length of row {i}"))
            raw = _read_exact(fh, length, path, f"id of row {i}")
            try:
                ids.append(raw.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise ParseError(f"{path}: row {i} id is not valid UTF-8 ({exc.reason})") from exc
        trailing = fh.read(1)
        if trailing:
            raise ParseError(f"{path}: trailing bytes after row ids")
    if not np.isfinite(data).all():
        bad = int(np.argwhere(~np.isfinite(data))[0][0])
        raise ValidationError(f"{path}: non-finite feature value in row {ids[bad]!r}")
    return FeatureMatrix(data=data.astype(np.float64), row_ids=tuple(ids))


def _load_features_csv(path: Path) -> FeatureMatrix:
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: neither a feature binary nor UTF-8 CSV ({exc.reason})") from exc
    ids: list[str] = []
    rows: list[list[float]] = []
    width: int | None = None
    for lineno, record in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not record:
            continue
        if len(record) < 2:
            raise ParseError(f"{path}: line {lineno}: expected a row id and at least one value")
        if width is None:
            width = len(record)
        elif len(record) != width:
            raise ParseError(
                f"{path}: line {lineno}: expected {width - 1} values, got {len(record) - 1}"
            )
        row_id = record[0].strip()
        if not row_id:
            raise ParseError(f"{path}: line {lineno}: empty row id")
        values = []
        for col, cell in enumerate(record[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}, column {col}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ValidationError(f"{path}: line {lineno}: non-finite value in row {row_id!r}")
            values.append(v)
        ids.append(row_id)
        rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no feature rows")
    return FeatureMatrix(data=np.array(rows, dtype=np.float64), row_ids=tuple(ids))


def load_feature_matrix(path: str | Path) -> FeatureMatrix:
    """Load a feature matrix, sniffing the binary magic and falling back to CSV."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(len(FEATURE_MAGIC))
    if head == FEATURE_MAGIC:
        fm = _load_features_binary(path)
    else:
        fm = _load_features_csv(path)
    logger.info("loaded %dx%d feature matrix from %s", fm.rows, fm.dim, path)
    return fm


def write_feature_matrix(fm: FeatureMatrix, path: str | Path) -> Path:
    """Write the binary container (float32 payload)."""
    parts = [FEATURE_MAGIC, _U64.pack(fm.rows), _U64.pack(fm.dim)]
    parts.append(np.ascontiguousarray(fm.data, dtype="<f4").tobytes())
    for row_id in fm.row_ids:
        raw = row_id.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
    return write_bytes(path, b"".join(parts))


def bind_features(dets: DetectionSet, features: FeatureMatrix) -> DetectionSet:
    """Attach feature rows to detections by detection id.

    Every detection must have a row; missing rows raise BindingError listing
    the ids. Extra rows are permitted and reported as a warning.
    """
    index = {row_id: i for i, row_id in enumerate(features.row_ids)}
    missing = sorted(d.detection_id for d in dets.detections if d.detection_id not in index)
    if missing:
        shown = ", ".join(missing[:10]) + (", ..." if len(missing) > 10 else "")
        raise BindingError(f"{len(missing)} detections have no feature row: {shown}")
    extra = len(index) - len(dets)
    if extra > 0:
        logger.warning("%d feature rows are not referenced by any detection", extra)
    bound = tuple(
        replace(det, feature=features.data[index[det.detection_id]].copy())
        for det in dets.detections
    )
    return DetectionSet(detections=bound)
