"""quantcal command-line interface.

Subcommands: quantize, eval, score, fractals, convert-cifar, matrix.
Exit codes: 0 success, 1 runtime failure, 2 usage error / missing input.
Every error prints a single machine-readable line to stderr:
``quantcal: error: <code>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import model_io, plots, quantize
from .accuracy_aware import AccuracyAwareConfig, accuracy_aware_quantize
from .data import (Dataset, generate_fractal_dataset, load_cifar_batches,
                   load_image_dir, sample_per_class, save_image_dir)
from .errors import QuantcalError
from .metrics import accuracy_drop, score_dataset, top1_accuracy
from .reporting import RunManifest, format_table, write_csv, write_json

PROG = "quantcal"


class UsageError(Exception):
    """Bad flags or missing input files (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse errors through our exit-code path
        raise UsageError(message)


def make_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master RNG seed")
    common.add_argument("--threads", type=int, default=1, help="evaluation thread count")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", parents=[common], help="quantize a model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", required=True,
                   help="calibration corpus directory or @gen:seed=S[,count=N,...]")
    p.add_argument("--mode", choices=["default", "accuracy-aware"], default="default")
    p.add_argument("--max-drop", type=float, default=1.0, metavar="PP")
    p.add_argument("--ranking-subset", type=int, default=300, metavar="N")
    p.add_argument("--max-reverts", type=int, default=None, metavar="N")
    p.add_argument("--calibration-samples", type=int, default=5000, metavar="N")
    p.add_argument("--no-fold-bn", dest="fold_bn", action="store_false")

    p = sub.add_parser("eval", parents=[common], help="top-1 accuracy of a model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--quant", type=Path, default=None, help="quantization sidecar")
    p.add_argument("--images", type=Path, required=True, help="labeled corpus directory")

    p = sub.add_parser("score", parents=[common], help="Inception Score of an image set")
    p.add_argument("--classifier", type=Path, required=True)
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--splits", type=int, default=1)

    p = sub.add_parser("fractals", parents=[common], help="generate fractal calibration images")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--size", type=int, default=32)

    p = sub.add_parser("convert-cifar", parents=[common],
                       help="convert CIFAR-10 binary batches to a corpus directory")
    p.add_argument("--in", dest="inputs", type=Path, nargs="+", required=True)
    p.add_argument("--per-class", type=int, default=None,
                   help="optionally subsample to N images per class")

    p = sub.add_parser("matrix", parents=[common],
                       help="run the calibration-dataset x mode experiment grid")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--calib", action="append", required=True, metavar="NAME=SPEC",
                   help="calibration dataset: NAME=DIR or NAME=@gen:seed=S[,count=N,classes=K,size=S]")
    p.add_argument("--eval", dest="eval_dir", type=Path, required=True,
                   help="labeled held-out corpus used to measure accuracy")
    p.add_argument("--modes", default="default,accuracy-aware")
    p.add_argument("--max-drop", type=float, default=1.0, metavar="PP")
    p.add_argument("--ranking-subset", type=int, default=300, metavar="N")
    p.add_argument("--max-reverts", type=int, default=None, metavar="N")
    p.add_argument("--calibration-samples", type=int, default=5000, metavar="N")
    p.add_argument("--no-fold-bn", dest="fold_bn", action="store_false")
    return parser


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise UsageError(f"missing input: {what} {path}")
    return Path(path)


def _resolve_calib(spec: str, model, args) -> Dataset:
    """A calibration SPEC is a corpus directory or '@gen:k=v,...' fractal recipe."""
    if not spec.startswith("@gen:"):
        return load_image_dir(_require(Path(spec), "calibration directory"))
    params = {}
    for item in spec[len("@gen:"):].split(","):
        if not item:
            continue
        key, _, value = item.partition("=")
        if not value:
            raise UsageError(f"bad @gen parameter {item!r} in {spec!r}")
        params[key] = int(value)
    known = {"seed", "count", "classes", "size"}
    if set(params) - known:
        raise UsageError(f"unknown @gen parameter(s) {sorted(set(params) - known)}")
    size = params.get("size", model.input_shape[-1] if len(model.input_shape) == 3 else 32)
    classes = params.get("classes", model.num_classes)
    count = params.get("count", 500)
    return generate_fractal_dataset(count, classes, size, params.get("seed", args.seed))


def _quant_config(args) -> quantize.QuantConfig:
    return quantize.QuantConfig(fold_bn=getattr(args, "fold_bn", True),
                                calibration_samples=args.calibration_samples,
                                seed=args.seed)


def _aa_config(args) -> AccuracyAwareConfig:
    return AccuracyAwareConfig(max_drop_pp=args.max_drop,
                               ranking_subset_size=args.ranking_subset,
                               max_reverts=args.max_reverts)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_quantize(args) -> int:
    model = model_io.load_model(_require(args.model, "model manifest"))
    out_dir = args.out or args.model.parent
    manifest = RunManifest("quantize", _flags(args), args.seed)
    manifest.add_input("model", args.model)
    if not str(args.data).startswith("@gen:"):
        manifest.add_input("calibration", args.data)
    calib = _resolve_calib(str(args.data), model, args)

    if args.mode == "accuracy-aware":
        qm, rep = accuracy_aware_quantize(model, calib, _aa_config(args),
                                          _quant_config(args), threads=args.threads)
        report = {"mode": args.mode, "quantized_layers": list(qm.quantized_layers),
                  **rep.to_dict()}
    else:
        qm = quantize.default_quantize(model, calib, _quant_config(args))
        report = {"mode": args.mode, "quantized_layers": list(qm.quantized_layers),
                  "reverted_layers": [], "layer_weight_ranges": {}, "history": []}
        if calib.fully_labeled:
            fp32 = top1_accuracy(qm.base, calib, threads=args.threads)
            quant = top1_accuracy(qm.base, calib, quant=qm, threads=args.threads)
            report.update(fp32_accuracy=fp32, quantized_accuracy=quant,
                          drop_pp=accuracy_drop(fp32, quant))

    out_dir.mkdir(parents=True, exist_ok=True)
    sidecar = out_dir / (args.model.stem + ".quant.json")
    quantize.save_quantized(qm, sidecar)
    write_json(report, out_dir / "report.json")
    columns = ["metric", "value"]
    rows = [{"metric": k, "value": v} for k, v in sorted(report.items())
            if not isinstance(v, (dict, list))]
    (out_dir / "report.txt").write_text(format_table(rows, columns))
    plots.plot_quantize_report(report, out_dir / "report.png")
    manifest.write(out_dir)
    print(f"wrote {sidecar}")
    return 0


def cmd_eval(args) -> int:
    model = model_io.load_model(_require(args.model, "model manifest"))
    dataset = load_image_dir(_require(args.images, "image directory"))
    result: dict = {}
    if args.quant is not None:
        qm = quantize.load_quantized(model, _require(args.quant, "quant sidecar"))
        fp32 = top1_accuracy(qm.base, dataset, threads=args.threads)
        acc = top1_accuracy(qm.base, dataset, quant=qm, threads=args.threads)
        result = {"accuracy": acc, "drop_pp": accuracy_drop(fp32, acc)}
    else:
        result = {"accuracy": top1_accuracy(model, dataset, threads=args.threads)}
    print_json(result)
    if args.out:
        write_json(result, args.out / "eval.json")
    return 0


def cmd_score(args) -> int:
    classifier = model_io.load_model(_require(args.classifier, "classifier manifest"))
    dataset = load_image_dir(_require(args.images, "image directory"))
    res = score_dataset(classifier, dataset, splits=args.splits, threads=args.threads)
    result = {"mean": res.mean, "std": res.std, "n_images": len(dataset)}
    print_json(result)
    if args.out:
        write_json(result, args.out / "score.json")
    return 0


def cmd_fractals(args) -> int:
    if args.out is None:
        raise UsageError("fractals requires --out")
    manifest = RunManifest("fractals", _flags(args), args.seed)
    dataset = generate_fractal_dataset(args.count, args.classes, args.size, args.seed)
    save_image_dir(dataset, args.out)
    manifest.write(args.out)
    print(f"wrote {args.count} fractal images to {args.out}")
    return 0


def cmd_convert_cifar(args) -> int:
    if args.out is None:
        raise UsageError("convert-cifar requires --out")
    for path in args.inputs:
        _require(path, "CIFAR batch file")
    manifest = RunManifest("convert-cifar", _flags(args), args.seed)
    for i, path in enumerate(args.inputs):
        manifest.add_input(f"batch{i}", path)
    dataset = load_cifar_batches(args.inputs)
    if args.per_class is not None:
        dataset = sample_per_class(dataset, args.per_class, args.seed)
    save_image_dir(dataset, args.out)
    manifest.write(args.out)
    print(f"wrote {len(dataset)} images to {args.out}")
    return 0


def cmd_matrix(args) -> int:
    if args.out is None:
        raise UsageError("matrix requires --out")
    model = model_io.load_model(_require(args.model, "model manifest"))
    eval_set = load_image_dir(_require(args.eval_dir, "evaluation directory"))
    if not eval_set.fully_labeled:
        raise UsageError(f"evaluation corpus {args.eval_dir} must be labeled")
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in ("default", "accuracy-aware"):
            raise UsageError(f"unknown mode {mode!r}")

    manifest = RunManifest("matrix", _flags(args), args.seed)
    manifest.add_input("model", args.model)
    manifest.add_input("eval", args.eval_dir)

    calibs: list[tuple[str, Dataset]] = []
    for item in args.calib:
        name, sep, spec = item.partition("=")
        if not sep or not name:
            raise UsageError(f"--calib takes NAME=SPEC, got {item!r}")
        if not spec.startswith("@gen:"):
            manifest.add_input(f"calib:{name}", spec)
        calibs.append((name, _resolve_calib(spec, model, args)))

    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, calib in calibs:
        for mode in modes:
            row = {"dataset": name, "mode": mode}
            if mode == "accuracy-aware":
                qm, rep = accuracy_aware_quantize(model, calib, _aa_config(args),
                                                  _quant_config(args), threads=args.threads)
                row.update(internal_drop_pp=rep.drop_pp,
                           reverted_layers=";".join(rep.reverted_layers),
                           iterations=rep.iterations, status=rep.status)
            else:
                qm = quantize.default_quantize(model, calib, _quant_config(args))
                row.update(internal_drop_pp=None, reverted_layers="",
                           iterations=0, status="")
            fp32 = top1_accuracy(qm.base, eval_set, threads=args.threads)
            quant_acc = top1_accuracy(qm.base, eval_set, quant=qm, threads=args.threads)
            row.update(fp32_accuracy=fp32, quantized_accuracy=quant_acc,
                       drop_pp=accuracy_drop(fp32, quant_acc))
            quantize.save_quantized(qm, args.out / f"{name}_{mode}.quant.json")
            rows.append(row)

    columns = ["dataset", "mode", "fp32_accuracy", "quantized_accuracy", "drop_pp",
               "internal_drop_pp", "reverted_layers", "iterations", "status"]
    write_json({"rows": rows}, args.out / "report.json")
    write_csv(rows, columns, args.out / "report.csv")
    table = format_table(rows, columns)
    (args.out / "report.txt").write_text(table)
    plots.plot_matrix_report(rows, args.out / "report.png")
    manifest.write(args.out)
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------------------

def print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _flags(args) -> dict:
    def plain(v):
        if isinstance(v, Path):
            return str(v)
        if isinstance(v, list):
            return [plain(item) for item in v]
        return v

    return {k: plain(v) for k, v in sorted(vars(args).items()) if k != "command"}


COMMANDS = {
    "quantize": cmd_quantize,
    "eval": cmd_eval,
    "score": cmd_score,
    "fractals": cmd_fractals,
    "convert-cifar": cmd_convert_cifar,
    "matrix": cmd_matrix,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"{PROG}: error: usage: {exc}\n")
        sys.stderr.write(parser.format_usage())
        return 2
    except QuantcalError as exc:
        sys.stderr.write(f"{PROG}: error: {exc.code}: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"{PROG}: error: io: {exc}\n")
        return 1


def entry() -> None:
    sys.exit(main())
