"""Command-line entry points.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .errors import NumericalError, ParseError, T2TError, ValidationError
from .feature_model import annotate_distances, fit_gaussian, load_model, save_model
from .fsio import write_text
from .ingest import (
    bind_features,
    load_detections,
    load_feature_matrix,
    load_ground_truth,
)
from .matching import IOU_GRID, match_detections
from .metrics import (
    DEFAULT_SCORE_THRESHOLDS,
    MetricReport,
    RegimeError,
    ap_over_iou_range,
    ap_t2t_profile,
    average_precision,
)
from .replacement import AccuracyCurve, average_runs, build_accuracy_curve, matching_image_count
from .report import (
    BarChart,
    Histogram,
    Series,
    SeriesPlot,
    distance_histogram,
    export_csv,
    render_svg,
    replacement_rows_csv,
)
from .scenario import ScenarioSpec, generate_scenario

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Resolved run settings; flag values override config-file values."""

    ground_truth: Path | None = None
    detections: Path | None = None
    features: Path | None = None
    train_features: Path | None = None
    model: Path | None = None
    out: Path | None = None
    iou_threshold: float = 0.5
    score_thresholds: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_SCORE_THRESHOLDS)
    )
    epsilon: float | None = None
    bins: int = 30
    seed: int | None = None
    iou_grid: bool = False


_PATH_KEYS = ("ground_truth", "detections", "features", "train_features", "model", "out")


def _parse_score_thresholds(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for part in text.split(","):
        name, sep, value = part.partition("=")
        name = name.strip()
        if not sep or not name:
            raise ValidationError(f"score thresholds must look like name=value, got {part!r}")
        if name in out:
            raise ValidationError(f"duplicate score regime {name!r}")
        try:
            out[name] = float(value)
        except ValueError:
            raise ValidationError(f"score threshold {name!r} is not a number: {value!r}") from None
    if not out:
        raise ValidationError("empty score threshold list")
    return out


def _load_config(path: Path) -> RunConfig:
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    known = {f.name for f in dc_fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(f"{path}: unknown config keys: {', '.join(unknown)}")
    cfg = RunConfig()
    for key, value in raw.items():
        if key in _PATH_KEYS:
            if not isinstance(value, str):
                raise ValidationError(f"{path}: {key} must be a path string")
            setattr(cfg, key, Path(value))
        elif key == "score_thresholds":
            if not isinstance(value, dict) or not value:
                raise ValidationError(f"{path}: score_thresholds must be a non-empty object")
            cfg.score_thresholds = {str(k): float(v) for k, v in value.items()}
        elif key == "iou_grid":
            if not isinstance(value, bool):
                raise ValidationError(f"{path}: iou_grid must be true or false")
            cfg.iou_grid = value
        elif key in ("iou_threshold", "epsilon"):
            setattr(cfg, key, float(value))
        elif key in ("bins", "seed"):
            setattr(cfg, key, int(value))
    return cfg


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = _load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for key in _PATH_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, Path(flag))
    if getattr(args, "iou", None) is not None:
        cfg.iou_threshold = args.iou
    if getattr(args, "score_thresholds", None) is not None:
        cfg.score_thresholds = _parse_score_thresholds(args.score_thresholds)
    if getattr(args, "epsilon", None) is not None:
        cfg.epsilon = args.epsilon
    if getattr(args, "bins", None) is not None:
        cfg.bins = args.bins
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "iou_grid", False):
        cfg.iou_grid = True
    return cfg


def _require(cfg: RunConfig, *keys: str) -> None:
    missing = [k.replace("_", "-") for k in keys if getattr(cfg, k) is None]
    if missing:
        raise ValidationError(f"missing required inputs: --{', --'.join(missing)}")


def _load_model_or_fit(cfg: RunConfig):
    if cfg.model is not None:
        return load_model(cfg.model)
    if cfg.train_features is not None:
        return fit_gaussian(load_feature_matrix(cfg.train_features), cfg.epsilon)
    raise ValidationError("missing required inputs: --model or --train-features")


def _base_regime(thresholds: dict[str, float]) -> str:
    return min(thresholds, key=lambda name: (thresholds[name], name))


# ----------------------------------------------------------------- subcommands


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _require(cfg, "ground_truth", "detections", "features", "out")
    gts = load_ground_truth(cfg.ground_truth)
    dets = bind_features(load_detections(cfg.detections), load_feature_matrix(cfg.features))
    model = _load_model_or_fit(cfg)

    iou_thresholds = IOU_GRID if cfg.iou_grid else (cfg.iou_threshold,)
    profile = ap_t2t_profile(model, dets, gts, cfg.score_thresholds, iou_thresholds)

    base = _base_regime(cfg.score_thresholds)
    base_score = cfg.score_thresholds[base]
    outcome = match_detections(dets, gts, cfg.iou_threshold, base_score)
    annotated = annotate_distances(model, outcome)
    report = MetricReport(
        ap=average_precision(outcome),
        ap_5095=ap_over_iou_range(dets, gts, base_score),
        ap_t2t_by_regime=profile,
        counts=(
            len(outcome.true_positives),
            len(outcome.false_positives),
            len(outcome.false_negatives),
        ),
    )
    hist_tp, hist_fp = distance_histogram(annotated, cfg.bins)

    summary = {
        "base_regime": base,
        "counts": {"tp": report.counts[0], "fp": report.counts[1], "fn": report.counts[2]},
        "detections": len(dets),
        "epsilon": model.regularization,
        "feature_dim": model.dim,
        "histogram_bins": cfg.bins,
        "instances": len(gts),
        "iou_grid": cfg.iou_grid,
        "iou_threshold": cfg.iou_threshold,
        "metrics": report.to_dict(),
        "score_thresholds": dict(cfg.score_thresholds),
        "train_rows": model.sample_count,
    }
    out = Path(cfg.out)
    write_text(out / "metrics.csv", export_csv(report))
    write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_text(out / "distance_hist_tp.csv", export_csv(hist_tp))
    write_text(out / "distance_hist_fp.csv", export_csv(hist_fp))
    write_text(out / "distance_hist_tp.svg", render_svg(hist_tp))
    write_text(out / "distance_hist_fp.svg", render_svg(hist_fp))

    print(f"ap={report.ap:.6g} ap_5095={report.ap_5095:.6g}")
    for name, value in profile.items():
        print(f"ap_t2t[{name}]={value:.6g}")
    print(f"wrote {out}/metrics.csv, summary.json, distance histograms")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _require(cfg, "train_features", "out")
    model = fit_gaussian(load_feature_matrix(cfg.train_features), cfg.epsilon)
    save_model(model, cfg.out)
    print(
        f"fitted {model.dim}-dim model from {model.sample_count} rows "
        f"(epsilon={model.regularization:.6g}); wrote {cfg.out}"
    )
    return 0


def cmd_distances(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _require(cfg, "ground_truth", "detections", "features", "out")
    gts = load_ground_truth(cfg.ground_truth)
    dets = bind_features(load_detections(cfg.detections), load_feature_matrix(cfg.features))
    model = _load_model_or_fit(cfg)
    outcome = match_detections(dets, gts, cfg.iou_threshold, args.score_threshold)
    annotated = annotate_distances(model, outcome)
    write_text(cfg.out, export_csv(annotated))
    print(f"wrote {len(annotated.entries)} distance rows to {cfg.out}")
    return 0


def cmd_ap_t2t(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _require(cfg, "ground_truth", "detections", "features", "out")
    gts = load_ground_truth(cfg.ground_truth)
    dets = bind_features(load_detections(cfg.detections), load_feature_matrix(cfg.features))
    model = _load_model_or_fit(cfg)
    iou_thresholds = IOU_GRID if cfg.iou_grid else (cfg.iou_threshold,)
    profile = ap_t2t_profile(model, dets, gts, cfg.score_thresholds, iou_thresholds)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["regime", "score_threshold", "ap_t2t"])
    for name, value in profile.items():
        writer.writerow([name, format(cfg.score_thresholds[name], ".17g"), format(value, ".17g")])
    out = Path(cfg.out)
    write_text(out / "ap_t2t.csv", buf.getvalue())
    for name, value in profile.items():
        print(f"ap_t2t[{name}]={value:.6g}")
    print(f"wrote {out}/ap_t2t.csv")
    return 0


def _read_curve_file(path: Path) -> list[AccuracyCurve]:
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc.reason})") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise ParseError(f"{path}: empty curve file")

    def looks_like_header(row: list[str]) -> bool:
        try:
            int(row[0])
            return False
        except ValueError:
            return True

    if looks_like_header(rows[0]):
        rows = rows[1:]
    grouped: dict[str, list[tuple[int, str]]] = {}
    for lineno, row in enumerate(rows, start=1):
        if len(row) not in (2, 3):
            raise ParseError(f"{path}: row {lineno}: expected 2 or 3 columns, got {len(row)}")
        try:
            count = int(row[0])
        except ValueError:
            raise ParseError(f"{path}: row {lineno}: image count is not an integer: {row[0]!r}") from None
        run = row[2].strip() if len(row) == 3 else ""
        grouped.setdefault(run, []).append((count, row[1].strip()))
    return [
        build_accuracy_curve(samples, label=run or path.stem)
        for run, samples in grouped.items()
    ]


def _parse_target(text: str) -> tuple[int | None, str, str | None]:
    parts = text.split(":")
    if len(parts) == 1:
        return None, parts[0], None
    if len(parts) in (2, 3):
        try:
            cross = int(parts[0])
        except ValueError:
            raise ValidationError(f"target {text!r}: cross count is not an integer") from None
        if cross <= 0:
            raise ValidationError(f"target {text!r}: cross count must be positive")
        return cross, parts[1], parts[2] if len(parts) == 3 else None
    raise ValidationError(f"target must look like [CROSS:]WITH[:WITHOUT], got {text!r}")


def cmd_replacement(args: argparse.Namespace) -> int:
    curves: list[AccuracyCurve] = []
    for path in args.curve:
        curves.extend(_read_curve_file(Path(path)))
    if not curves:
        raise ValidationError("no curves given")
    curve = curves[0] if len(curves) == 1 else average_runs(curves)
    note = curve.label if len(curves) > 1 else f"curve {curve.label!r}"
    print(f"# same-domain accuracy: {note}, {len(curve.points)} samples")

    rows = []
    bars = []
    for spec in args.target:
        cross, with_acc, without_acc = _parse_target(spec)
        result = matching_image_count(curve, with_acc, cross_domain_count=cross)
        gain = None
        if without_acc is not None:
            baseline = matching_image_count(curve, without_acc)
            gain = result.matched_same_domain_count - baseline.matched_same_domain_count
        rows.append((result, gain))
        label = str(cross) if cross is not None else with_acc
        bars.append((label, gain if gain is not None else result.matched_same_domain_count))
        gain_txt = "" if gain is None else f" gain={gain:.6g}"
        flag = " (saturated)" if result.saturated else ""
        print(f"target {spec}: matched={result.matched_same_domain_count:.6g}{flag}{gain_txt}")

    out = Path(args.out)
    any_gain = any(g is not None for _, g in rows)
    chart = BarChart(
        bars=tuple(bars),
        y_label="replacement gain (images)" if any_gain else "matched same-domain images",
        title="replacement analysis",
    )
    write_text(out / "replacement.csv", replacement_rows_csv(rows))
    write_text(out / "replacement.svg", render_svg(chart))
    print(f"wrote {out}/replacement.csv and replacement.svg")
    return 0


def cmd_scenario(args: argparse.Namespace) -> int:
    raw: dict = {}
    if args.spec is not None:
        spec_path = Path(args.spec)
        if not spec_path.exists():
            raise ParseError(f"no such file: {spec_path}")
        try:
            raw = json.loads(spec_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{spec_path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ParseError(f"{spec_path}: scenario spec must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = ScenarioSpec.from_dict(raw)
    scn = generate_scenario(spec)
    out = Path(args.out)
    paths = scn.write(out)
    write_text(out / "scenario_spec.json", json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    print(
        f"scenario seed={spec.seed}: {spec.n_gt} instances, "
        f"{spec.n_tp} TP + {spec.n_fp} FP detections, dim={spec.feature_dim}"
    )
    for name in ("ground_truth", "detections", "features", "train_features"):
        print(f"wrote {paths[name]}")
    return 0


def _read_report_csv(path: Path) -> list[list[str]]:
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    rows = [r for r in csv.reader(io.StringIO(path.read_text(encoding="utf-8"))) if r]
    if len(rows) < 2:
        raise ParseError(f"{path}: expected a header row and at least one data row")
    return rows


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.input)
    rows = _read_report_csv(path)
    header, body = rows[0], rows[1:]
    title = args.title or ""
    if args.kind == "series":
        if header[:3] != ["series", "x", "y"]:
            raise ParseError(f"{path}: expected columns series,x,y[,floored]")
        groups: dict[str, list[tuple[float, float]]] = {}
        for row in body:
            try:
                groups.setdefault(row[0], []).append((float(row[1]), float(row[2])))
            except ValueError:
                raise ParseError(f"{path}: non-numeric series row: {row!r}") from None
        plot = SeriesPlot(
            series=tuple(Series(label=k, points=tuple(v)) for k, v in groups.items()),
            x_label="training images",
            y_label="AP_t2t",
            y_scale="linear" if args.linear else "log",
            title=title,
        )
        svg = render_svg(plot)
    elif args.kind == "histogram":
        if header != ["bin_lo", "bin_hi", "count"]:
            raise ParseError(f"{path}: expected columns bin_lo,bin_hi,count")
        try:
            edges = [float(body[0][0])] + [float(r[1]) for r in body]
            counts = [int(r[2]) for r in body]
        except ValueError:
            raise ParseError(f"{path}: non-numeric histogram row") from None
        for i, row in enumerate(body[1:], start=1):
            if float(row[0]) != edges[i]:
                raise ParseError(f"{path}: bins are not contiguous at row {i + 1}")
        svg = render_svg(Histogram(edges=tuple(edges), counts=tuple(counts), label=title))
    else:
        if header != ["label", "value"]:
            raise ParseError(f"{path}: expected columns label,value")
        try:
            bars = tuple((r[0], float(r[1])) for r in body)
        except ValueError:
            raise ParseError(f"{path}: non-numeric bar row") from None
        svg = render_svg(BarChart(bars=bars, title=title))
    write_text(args.out, svg)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------- parser


def _add_io_flags(p: argparse.ArgumentParser, *, model: bool = False) -> None:
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")
    p.add_argument("--gt", dest="ground_truth", type=Path, help="ground-truth JSON")
    p.add_argument("--det", dest="detections", type=Path, help="detections JSON")
    p.add_argument("--features", type=Path, help="detection feature matrix")
    p.add_argument("--train-features", dest="train_features", type=Path,
                   help="training feature matrix")
    if model:
        p.add_argument("--model", type=Path, help="fitted model file (instead of --train-features)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="t2t",
        description="Quantify how well a training set represents a test set.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="full pipeline: metrics, AP_t2t profile, histograms")
    _add_io_flags(p, model=True)
    p.add_argument("--iou", type=float, help="IoU threshold for matching (default 0.5)")
    p.add_argument("--score-thresholds", help="regimes, e.g. all=0.01,med=0.1,high=0.5")
    p.add_argument("--epsilon", type=float, help="covariance regularization (default: trace-scaled)")
    p.add_argument("--bins", type=int, help="histogram bin count (default 30)")
    p.add_argument("--iou-grid", action="store_true",
                   help="average AP_t2t over the 0.50:0.05:0.95 IoU grid")
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    p.add_argument("--out", type=Path, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fit", help="fit the training Gaussian and save it")
    _add_io_flags(p)
    p.add_argument("--epsilon", type=float, help="covariance regularization (default: trace-scaled)")
    p.add_argument("--out", type=Path, help="output model file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("distances", help="per-detection train2test distances as CSV")
    _add_io_flags(p, model=True)
    p.add_argument("--iou", type=float, help="IoU threshold for matching (default 0.5)")
    p.add_argument("--score-threshold", type=float, default=0.01,
                   help="drop detections scoring below this (default 0.01)")
    p.add_argument("--out", type=Path, help="output CSV file")
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("ap-t2t", help="AP_t2t per score regime")
    _add_io_flags(p, model=True)
    p.add_argument("--iou", type=float, help="IoU threshold for matching (default 0.5)")
    p.add_argument("--score-thresholds", help="regimes, e.g. all=0.01,med=0.1,high=0.5")
    p.add_argument("--epsilon", type=float, help="covariance regularization (default: trace-scaled)")
    p.add_argument("--iou-grid", action="store_true",
                   help="average AP_t2t over the 0.50:0.05:0.95 IoU grid")
    p.add_argument("--out", type=Path, help="output directory")
    p.set_defaults(func=cmd_ap_t2t)

    p = sub.add_parser("replacement", help="match accuracies to same-domain image counts")
    p.add_argument("--curve", action="append", required=True, type=Path,
                   help="curve CSV (count,accuracy[,run_id]); repeat for multiple runs")
    p.add_argument("--target", action="append", required=True,
                   help="[CROSS:]WITH[:WITHOUT] accuracy target; repeatable")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_replacement)

    p = sub.add_parser("scenario", help="generate a synthetic planted dataset")
    p.add_argument("--spec", type=Path, help="scenario spec JSON (defaults apply)")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("report", help="render an SVG chart from a report CSV")
    p.add_argument("--kind", choices=("series", "histogram", "bars"), required=True)
    p.add_argument("--input", type=Path, required=True, help="report CSV file")
    p.add_argument("--out", type=Path, required=True, help="output SVG file")
    p.add_argument("--title", help="chart title")
    p.add_argument("--linear", action="store_true", help="linear y axis for series")
    p.set_defaults(func=cmd_report)

    return parser


def _exit_code(exc: T2TError) -> int:
    if isinstance(exc, RegimeError):
        if any(isinstance(e, NumericalError) for e in exc.failures.values()):
            return 2
        return 1
    if isinstance(exc, NumericalError):
        return 2
    return 1


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except T2TError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
