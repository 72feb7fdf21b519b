"""Command-line front end: simulate, segment, features, train, eval, predict.

Exit codes: 0 on success, 1 on runtime or data failures, 2 on usage errors.
Any long option may also come from a JSON file given with ``--config``;
keys are option names with dashes or underscores. Flags given on the command
line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from dropmat import datasets, plotting, simulator
from dropmat.errors import (
    DropMatError,
    FormatError,
    InvalidConfigError,
    InvalidDatasetError,
    SegmentationError,
)
from dropmat.features import DEFAULT_MIN_PROMINENCE, FEATURE_NAMES, detect_peaks, extract_features
from dropmat.mlp import MATERIALS, N_CLASSES, TrainConfig, evaluate, predict, train
from dropmat.segmentation import SegmentationConfig, segment_magnitude
from dropmat.signal import magnitude

log = logging.getLogger("dropmat")

REJECT_LIMIT = 0.10

REQUIRED = {
    "simulate": ("reps", "out"),
    "segment": ("input", "out"),
    "features": ("manifest", "out"),
    "train": ("features", "out", "curves"),
    "eval": ("model", "features"),
    "predict": ("model", "input"),
}


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (np.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _int_list(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).split(",") if t.strip()]
    try:
        return tuple(int(t) for t in items)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _counts(text) -> tuple[int, int, int]:
    values = _int_list(text)
    if len(values) != 3 or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("--counts takes three non-negative integers: train,val,test")
    return values  # type: ignore[return-value]


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="dropmat", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    parser.add_argument("--config", help="JSON file supplying option values")
    parser.add_argument("-v", "--verbose", action="store_true")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file supplying option values")

    seg = argparse.ArgumentParser(add_help=False)
    g = seg.add_argument_group("segmentation")
    defaults = SegmentationConfig()
    g.add_argument("--window-size", type=_positive_float, default=defaults.window_size_s, help="power window, s")
    g.add_argument("--step", type=_positive_float, default=defaults.step_s, help="power window stride, s")
    g.add_argument("--fc", type=_positive_float, default=defaults.touchdown_factor_Fc, help="touchdown factor")
    g.add_argument("--fw", type=_positive_float, default=defaults.rest_jitter_Fw, help="rest jitter, m/s^2")
    g.add_argument("--rest-duration", type=_positive_float, default=defaults.rest_duration_s, help="rest window, s")
    g.add_argument("--gravity", type=_positive_float, default=defaults.local_gravity_Gd, help="local gravity, m/s^2")
    g.add_argument("--weightless-ratio", type=_positive_float, default=defaults.weightless_power_ratio,
                   help="free-fall power as a fraction of gravity squared")
    g.add_argument("--min-prominence", type=float, default=DEFAULT_MIN_PROMINENCE,
                   help="minimum peak prominence, m/s^2")

    fit = argparse.ArgumentParser(add_help=False)
    tdef = TrainConfig()
    g = fit.add_argument_group("training")
    g.add_argument("--epochs", type=_positive_int, default=tdef.epochs)
    g.add_argument("--lr", type=_positive_float, default=tdef.learning_rate)
    g.add_argument("--batch-size", type=_positive_int, default=tdef.batch_size)
    g.add_argument("--hidden", type=_int_list, default=tdef.hidden_dims, help="hidden sizes, e.g. 64,32")
    g.add_argument("--activation", choices=("relu", "tanh"), default=tdef.activation)

    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("simulate", parents=[common], help="generate the synthetic drop grid")
    p.add_argument("--reps", type=_positive_int, help="repetitions per condition")
    p.add_argument("--out", help="output directory")
    p.add_argument("--materials", help="JSON file overriding material presets")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_simulate)
    subs["simulate"] = p

    p = sub.add_parser("segment", parents=[common, seg], help="cut one trace")
    p.add_argument("--in", dest="input", help="trace CSV")
    p.add_argument("--out", help="output prefix for PREFIX.csv / PREFIX.json")
    p.add_argument("--plot", action="store_true", help="also render PREFIX.png")
    p.set_defaults(func=cmd_segment)
    subs["segment"] = p

    p = sub.add_parser("features", parents=[common, seg], help="feature table for a manifest")
    p.add_argument("--manifest", help="manifest JSON")
    p.add_argument("--out", help="feature CSV")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_features)
    subs["features"] = p

    p = sub.add_parser("train", parents=[common, fit], help="train the classifier")
    p.add_argument("--features", help="feature CSV")
    p.add_argument("--split-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--counts", type=_counts, default=None, help="explicit train,val,test sizes")
    p.add_argument("--out", help="model JSON")
    p.add_argument("--curves", help="training-curve CSV")
    p.add_argument("--no-figures", action="store_true", help="skip rendering PNG figures")
    p.set_defaults(func=cmd_train)
    subs["train"] = p

    p = sub.add_parser("eval", parents=[common], help="confusion matrix on a split")
    p.add_argument("--model", help="model JSON")
    p.add_argument("--features", help="feature CSV")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--split-seed", type=int, default=None, help="defaults to the seed stored with the model")
    p.add_argument("--counts", type=_counts, default=None)
    p.add_argument("--out", help="confusion-matrix CSV (a PNG is written alongside)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("predict", parents=[common, seg], help="classify one trace")
    p.add_argument("--model", help="model JSON")
    p.add_argument("--in", dest="input", help="trace CSV")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_predict)
    subs["predict"] = p
    return parser, subs


def _apply_config(parser, subs, args, argv) -> argparse.Namespace:
    path = Path(args.config)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        parser.error(f"config {path} must be a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if "in" in cfg:
        cfg["input"] = cfg.pop("in")
    sp = subs[args.command]
    known = {a.dest for a in sp._actions if a.dest not in ("help", "config", "func")}
    unknown = sorted(set(cfg) - known - {"seed", "verbose"})
    if unknown:
        parser.error(f"config {path}: unknown option(s) for {args.command}: {', '.join(unknown)}")
    for action in sp._actions:
        if action.dest in cfg and action.type is not None and isinstance(cfg[action.dest], (str, list)):
            try:
                cfg[action.dest] = action.type(cfg[action.dest])
            except argparse.ArgumentTypeError as exc:
                parser.error(f"config {path}: {action.dest}: {exc}")
    top = {k: cfg.pop(k) for k in ("seed", "verbose") if k in cfg}
    parser.set_defaults(**top)
    sp.set_defaults(**cfg)
    return parser.parse_args(argv)


def _seg_config(args) -> SegmentationConfig:
    return SegmentationConfig(
        window_size_s=args.window_size,
        step_s=args.step,
        touchdown_factor_Fc=args.fc,
        rest_jitter_Fw=args.fw,
        rest_duration_s=args.rest_duration,
        local_gravity_Gd=args.gravity,
        weightless_power_ratio=args.weightless_ratio,
    )


def _validate(args) -> None:
    if hasattr(args, "window_size"):
        args.seg_cfg = _seg_config(args)
        if args.min_prominence < 0:
            raise InvalidConfigError("--min-prominence must be non-negative")
    if hasattr(args, "epochs"):
        args.train_cfg = TrainConfig(
            learning_rate=args.lr,
            epochs=args.epochs,
            batch_size=args.batch_size,
            seed=args.seed,
            hidden_dims=tuple(args.hidden),
            activation=args.activation,
        )
        if not args.train_cfg.hidden_dims or min(args.train_cfg.hidden_dims) < 1:
            raise InvalidConfigError("--hidden needs at least one positive layer size")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        args = _apply_config(parser, subs, args, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    missing = [name for name in REQUIRED[args.command] if getattr(args, name, None) in (None, "")]
    if missing:
        subs[args.command].error("missing required option(s): " + ", ".join(
            "--" + ("in" if m == "input" else m.replace("_", "-")) for m in missing))
    try:
        _validate(args)
    except InvalidConfigError as exc:
        subs[args.command].error(str(exc))
    try:
        return args.func(args) or 0
    except UsageError as exc:
        subs[args.command].error(str(exc))
    except SegmentationError as exc:
        print(f"error: segmentation failed at stage {exc.stage}: {exc}", file=sys.stderr)
    except (DropMatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


# -- simulate -------------------------------------------------------------


def _simulate_one(item):
    trace_id, scenario = item
    return trace_id, simulator.simulate(scenario)


def cmd_simulate(args) -> int:
    materials = simulator.load_materials(args.materials) if args.materials else simulator.DEFAULT_MATERIALS
    scenarios = simulator.grid_scenarios(args.reps, args.seed, materials)
    out = Path(args.out)
    trace_dir = out / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    by_id = dict(scenarios)
    records = []
    per_material = Counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = pool.map(_simulate_one, scenarios, chunksize=16)
            for trace_id, (trace, truth) in results:
                records.append(_write_sim(trace_dir, trace_id, by_id[trace_id], trace, truth))
    else:
        for item in scenarios:
            trace_id, (trace, truth) = _simulate_one(item)
            records.append(_write_sim(trace_dir, trace_id, by_id[trace_id], trace, truth))
    for rec in records:
        per_material[MATERIALS[rec.label] if rec.label < len(MATERIALS) else str(rec.label)] += 1
    datasets.save_manifest(datasets.DatasetManifest(records), out / "manifest.json")
    print(f"{len(records)} traces written to {out}")
    for name, count in sorted(per_material.items()):
        print(f"  {name}: {count}")
    return 0


def _write_sim(trace_dir: Path, trace_id, scenario, trace, truth) -> datasets.ManifestRecord:
    datasets.write_trace_csv(trace, trace_dir / f"{trace_id}.csv")
    return datasets.ManifestRecord(
        trace_id=trace_id,
        file=f"traces/{trace_id}.csv",
        label=scenario.material.label,
        height_m=scenario.height_m,
        pose=scenario.pose,
        seed=scenario.seed,
        ground_truth=truth.as_dict(),
    )


# -- segment --------------------------------------------------------------


def cmd_segment(args) -> int:
    trace = datasets.read_trace_csv(args.input)
    mag = magnitude(trace)
    segment = segment_magnitude(mag, args.seg_cfg)
    prefix = Path(args.out)
    if prefix.parent != Path(""):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    with datasets.exclusive_write(prefix.with_name(prefix.name + ".csv")) as fh:
        fh.write("index,magnitude\n")
        for i, v in enumerate(segment.values, start=segment.t_c):
            fh.write(f"{i},{v!r}\n")
    with datasets.exclusive_write(prefix.with_name(prefix.name + ".json")) as fh:
        json.dump(segment.boundaries(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    if args.plot:
        plotting.plot_segment(mag, segment, prefix.with_name(prefix.name + ".png"), args.seg_cfg)
    fs = mag.sample_rate_hz
    print(f"t_c = {segment.t_c} ({segment.t_c / fs:.3f} s)")
    print(f"t_w = {segment.t_w} ({segment.t_w / fs:.3f} s)")
    print(f"fall duration = {segment.fall_duration_s:.3f} s")
    print(f"cut length = {len(segment.cut)} samples")
    return 0


# -- features -------------------------------------------------------------


def _features_one(job):
    trace_id, path, seg_cfg, min_prominence = job
    try:
        trace = datasets.read_trace_csv(path)
        segment = segment_magnitude(magnitude(trace), seg_cfg)
        fv = extract_features(segment, detect_peaks(segment, min_prominence))
    except SegmentationError as exc:
        return trace_id, None, exc.stage, str(exc)
    except FormatError as exc:
        return trace_id, None, "read", str(exc)
    except DropMatError as exc:
        return trace_id, None, "features", str(exc)
    return trace_id, fv.values, None, None


def cmd_features(args) -> int:
    manifest = datasets.load_manifest(args.manifest)
    if len(manifest) == 0:
        raise UsageError(f"manifest {args.manifest} lists no traces")
    jobs = [(r.trace_id, manifest.path_of(r), args.seg_cfg, args.min_prominence) for r in manifest.records]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_features_one, jobs, chunksize=16))
    else:
        results = [_features_one(j) for j in jobs]
    labels = {r.trace_id: r.label for r in manifest.records}
    ok = sorted((r for r in results if r[1] is not None), key=lambda r: r[0])
    rejects = sorted((r for r in results if r[1] is None), key=lambda r: r[0])
    table = datasets.FeatureTable(
        [r[0] for r in ok],
        np.array([labels[r[0]] for r in ok], dtype=np.int64),
        np.array([r[1] for r in ok]).reshape(-1, len(FEATURE_NAMES)),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    datasets.save_features(table, out)
    reject_path = out.with_name(out.stem + ".rejects.csv")
    with datasets.exclusive_write(reject_path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trace_id", "stage", "message"])
        w.writerows((tid, stage, msg) for tid, _, stage, msg in rejects)
    print(f"{len(ok)} feature rows written to {out}; {len(rejects)} rejects listed in {reject_path}")
    if rejects:
        for stage, count in sorted(Counter(r[2] for r in rejects).items()):
            print(f"  {stage}: {count}")
    if len(rejects) > REJECT_LIMIT * len(results):
        print(f"error: {len(rejects)} of {len(results)} traces rejected (limit {REJECT_LIMIT:.0%})", file=sys.stderr)
        return 1
    return 0


# -- train / eval ---------------------------------------------------------


def _split_arrays(table, tags, name):
    sub = table.subset(tags == name)
    return sub.features, sub.labels


def cmd_train(args) -> int:
    table = datasets.load_features(args.features)
    if args.counts and sum(args.counts) != len(table):
        raise UsageError(f"--counts {args.counts} sum to {sum(args.counts)}, "
                         f"but {args.features} has {len(table)} rows")
    split_seed = args.seed if args.split_seed is None else args.split_seed
    tags = datasets.split_labels(table.labels, split_seed, args.counts)
    train_set = _split_arrays(table, tags, "train")
    val_set = _split_arrays(table, tags, "val")
    model, report = train(train_set, val_set, args.train_cfg)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cfg = args.train_cfg
    metadata = {
        "split_seed": split_seed,
        "counts": list(args.counts) if args.counts else None,
        "train": {
            "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "hidden_dims": list(cfg.hidden_dims),
        },
    }
    datasets.save_model(model, out, metadata)
    curves = Path(args.curves)
    curves.parent.mkdir(parents=True, exist_ok=True)
    with datasets.exclusive_write(curves) as fh:
        fh.write("epoch,val_loss,val_accuracy\n")
        for e, (loss, acc) in enumerate(zip(report.val_loss, report.val_accuracy), start=1):
            fh.write(f"{e},{loss!r},{acc!r}\n")
    if not args.no_figures:
        plotting.plot_training_curves(report, curves.with_suffix(".png"))
    sizes = {name: int(np.sum(tags == name)) for name in datasets.SPLITS}
    print(f"split (seed {split_seed}): train {sizes['train']}, val {sizes['val']}, test {sizes['test']}")
    print(f"final validation loss {report.val_loss[-1]:.4f}, accuracy {100 * report.val_accuracy[-1]:.2f}%")
    print(f"training time {report.train_seconds:.2f} s over {report.epochs} epochs")
    print(f"model written to {out}; curves written to {curves}")
    return 0


def format_confusion(cm) -> str:
    """Per-class counts and accuracy table, one row per true material."""
    names = MATERIALS
    head = f"{'type':<12}{'quantity':>9}" + "".join(f"{n:>9}" for n in names) + f"{'accuracy/%':>12}"
    lines = [head, f"{'':<12}{'':>9}" + "".join(f"{i:>9}" for i in range(N_CLASSES))]
    acc = cm.per_class_accuracy
    for i in range(N_CLASSES):
        row = cm.counts[i]
        a = "n/a" if np.isnan(acc[i]) else f"{100 * acc[i]:.2f}"
        lines.append(f"{names[i] + ' ' + str(i):<12}{int(row.sum()):>9}" + "".join(f"{int(c):>9}" for c in row) + f"{a:>12}")
    col = cm.counts.sum(axis=0)
    lines.append(f"{'total':<12}{cm.total:>9}" + "".join(f"{int(c):>9}" for c in col)
                 + f"{100 * cm.overall_accuracy:>12.2f}")
    return "\n".join(lines)


def write_confusion_csv(cm, path) -> None:
    acc = cm.per_class_accuracy
    with datasets.exclusive_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true_label", "material", "quantity", *(f"pred_{i}" for i in range(N_CLASSES)), "accuracy"])
        for i in range(N_CLASSES):
            row = cm.counts[i]
            w.writerow([i, MATERIALS[i], int(row.sum()), *(int(c) for c in row),
                        "" if np.isnan(acc[i]) else repr(float(acc[i]))])
        w.writerow(["total", "", cm.total, *(int(c) for c in cm.counts.sum(axis=0)),
                    repr(float(cm.overall_accuracy))])


def cmd_eval(args) -> int:
    model, metadata = datasets.load_model_with_metadata(args.model)
    table = datasets.load_features(args.features)
    if args.split == "all":
        x, y = table.features, table.labels
    else:
        split_seed = args.split_seed if args.split_seed is not None else metadata.get("split_seed", args.seed)
        counts = args.counts if args.counts is not None else metadata.get("counts")
        tags = datasets.split_labels(table.labels, split_seed, tuple(counts) if counts else None)
        x, y = _split_arrays(table, tags, args.split)
    if y.size == 0:
        raise InvalidDatasetError(f"split {args.split!r} is empty")
    cm = evaluate(model, (x, y))
    print(format_confusion(cm))
    print(f"identification time {cm.inference_seconds:.4f} s for {cm.total} samples")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_confusion_csv(cm, out)
        if not args.no_figures:
            plotting.plot_confusion(cm, out.with_suffix(".png"))
    return 0


# -- predict --------------------------------------------------------------


def cmd_predict(args) -> int:
    model = datasets.load_model(args.model)
    trace = datasets.read_trace_csv(args.input)
    segment = segment_magnitude(magnitude(trace), args.seg_cfg)
    fv = extract_features(segment, detect_peaks(segment, args.min_prominence))
    label, probs = predict(model, fv.values)
    if args.json:
        print(json.dumps({
            "label": label,
            "material": MATERIALS[label],
            "probabilities": [float(p) for p in probs],
            "t_c": segment.t_c,
            "t_w": segment.t_w,
        }))
    else:
        print(f"{label} {MATERIALS[label]}")
        print("probabilities: " + " ".join(f"{n}={p:.4f}" for n, p in zip(MATERIALS, probs)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
