"""Command-line surface for the full pipeline.

Subcommands cover dataset generation, training, attention-map export,
detection evaluation, parameter counting, and results aggregation. Every
command that writes files puts them under --out together with exactly one
manifest.json recording the resolved flags, and exits 0 only after reading
its own outputs back successfully. Rerunning a command with the flags from
a manifest reproduces the outputs bitwise (timestamps aside).
"""

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .attention import METHOD_IDS, compute_attention
from .checkpoint import checkpoint_to_model, load_checkpoint, save_checkpoint
from .data import (
    generate_grid_dataset,
    load_dataset,
    load_mnist,
    read_pgm,
    save_dataset,
    write_pgm,
)
from .evaluation import (
    bootstrap_fauc,
    curve_from_records,
    detection_record,
    fauc,
    load_froc_csv,
    non_max_suppression,
    operating_point_metrics,
    save_froc_csv,
)
from .models import ArchitectureSpec, build_model, count_parameters
from .training import TASKS, TrainConfig, load_loss_log, save_loss_log, train

ARCH_BY_FLAG = {
    "gp-unet": "gp_unet",
    "gp-unet-no-res": "gp_unet_no_residual",
    "gated": "gated_attention",
    "base": "base",
}
SPLITS = ("train", "val", "test")


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


def _flags_dict(args):
    skip = {"func"}
    out = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _write_manifest(out_dir, command, args, outputs, extras=None):
    manifest = {
        "command": command,
        "version": __version__,
        "created": _utc_now(),
        "flags": _flags_dict(args),
        "outputs": sorted(outputs),
    }
    if extras:
        manifest.update(extras)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_manifest(directory):
    path = Path(directory) / "manifest.json"
    if not path.is_file():
        raise ValueError(f"no manifest.json in {directory}")
    return json.loads(path.read_text())


def _dataset_paths(directory, split):
    directory = Path(directory)
    return directory / f"{split}-images.idx", directory / f"{split}-gt.csv"


def _load_split(directory, split):
    meta = _read_manifest(directory)
    digit = int(meta["flags"]["digit"])
    seed = int(meta["flags"]["seed"])
    images, csv = _dataset_paths(directory, split)
    return load_dataset(images, csv, role=split, target_digit=digit, seed=seed)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args):
    out = _out_dir(args)
    sources = {
        "train": load_mnist("train", args.mnist_dir),
        "val": load_mnist("train", args.mnist_dir),
        # held-out digits so test grids never share source pixels
        "test": load_mnist("test", args.mnist_dir),
    }
    counts = {"train": args.train, "val": args.val, "test": args.test}
    outputs = []
    for split in SPLITS:
        ds = generate_grid_dataset(
            sources[split], args.digit, counts[split], args.seed, role=split
        )
        images, csv = _dataset_paths(out, split)
        save_dataset(ds, images, csv)
        outputs += [images.name, csv.name]
        back = load_dataset(
            images, csv, role=split, target_digit=args.digit, seed=args.seed
        )
        if len(back.samples) != counts[split]:
            raise RuntimeError(f"{split} container failed validation")
        print(f"{split}: {counts[split]} images -> {images.name}, {csv.name}")
    _write_manifest(out, "gen-data", args, outputs)
    return 0


def cmd_train(args):
    out = _out_dir(args)
    train_split = _load_split(args.data, "train")
    val_split = _load_split(args.data, "val")
    spec = ArchitectureSpec(
        ARCH_BY_FLAG[args.arch],
        dims=2,
        blockwise_skips=not args.no_skips,
        global_pool_mode="max" if args.max_pool else "avg",
    )
    model = build_model(spec, seed=args.seed, init=args.init)
    config = TrainConfig(
        task=args.task,
        seed=args.seed,
        batch_size=args.batch_size,
        patience=args.patience,
        max_epochs=args.max_epochs,
        augmentation=not args.no_augment,
        init=args.init,
    )
    ckpt, log = train(model, train_split, val_split, config)
    ckpt_path = out / "checkpoint.wsdn"
    log_path = out / "loss.csv"
    save_checkpoint(ckpt, ckpt_path)
    save_loss_log(log, log_path)
    load_checkpoint(ckpt_path)
    load_loss_log(log_path)
    _write_manifest(out, "train", args, [ckpt_path.name, log_path.name])
    print(
        f"trained {spec} for {len(log)} epochs; best epoch "
        f"{ckpt.metadata['epoch']} with val loss {ckpt.metadata['val_loss']}"
    )
    return 0


def _resolve_image(args):
    if args.image is not None:
        return read_pgm(args.image).astype(np.float64) / 255.0
    if args.data is None or args.index is None:
        raise ValueError("need either --image or both --data and --index")
    split = _load_split(args.data, args.split)
    if not 0 <= args.index < len(split.samples):
        raise ValueError(f"--index out of range (split has {len(split.samples)})")
    return split.samples[args.index].image


def cmd_attention(args):
    out = _out_dir(args)
    if args.method != "intensity" and args.checkpoint is None:
        raise ValueError(f"method {args.method!r} needs --checkpoint")
    image = _resolve_image(args)
    model = None
    if args.checkpoint is not None:
        model = checkpoint_to_model(load_checkpoint(args.checkpoint))
    amap = compute_attention(args.method, model, image)
    path = out / f"{args.method}.pgm"
    write_pgm(path, amap.scores)
    back = read_pgm(path)
    if back.shape != image.shape:
        raise RuntimeError("exported map does not match the input extents")
    _write_manifest(
        out,
        "attention",
        args,
        [path.name],
        extras={"raw_min": amap.raw_min, "raw_max": amap.raw_max},
    )
    print(f"{args.method}: raw range [{amap.raw_min}, {amap.raw_max}] -> {path.name}")
    return 0


def cmd_eval(args):
    out = _out_dir(args)
    ckpt = load_checkpoint(args.checkpoint)
    model = checkpoint_to_model(ckpt)
    task = ckpt.metadata["task"]
    split = _load_split(args.data, args.split)
    if not split.samples:
        raise ValueError("empty test set")

    records = []
    candidate_lists = []
    predictions = []
    for sample in split.samples:
        amap = compute_attention(args.method, model, sample.image)
        cands = non_max_suppression(amap.scores)
        candidate_lists.append(cands)
        records.append(
            detection_record(cands, sample, criterion=args.criterion, radius=args.radius)
        )
        if task == "regression":
            predictions.append(float(model.forward(sample.image).output.values[0]))

    curve = curve_from_records(records)
    boot = bootstrap_fauc(
        records, args.fp_max, n_replicates=args.bootstrap, seed=args.seed
    )
    # the operating point needs a count to round, so it is regression-only
    op = None
    if task == "regression":
        op = operating_point_metrics(
            predictions,
            candidate_lists,
            split.samples,
            criterion=args.criterion,
            radius=args.radius,
        )
    metrics = {
        "method": args.method,
        "arch": ckpt.metadata["arch"],
        "task": task,
        "digit": int(_read_manifest(args.data)["flags"]["digit"]),
        "seed": int(ckpt.metadata["seed"]),
        "fp_max": args.fp_max,
        "fauc": fauc(curve, args.fp_max),
        "fauc_std": boot.std,
        "fauc_ci_low": boot.ci_low,
        "fauc_ci_high": boot.ci_high,
        "sensitivity": op.sensitivity if op else None,
        "fpavg": op.fpavg if op else None,
        "fnavg": op.fnavg if op else None,
        "n_images": curve.n_images,
        "n_gt": curve.n_gt,
    }
    metrics_path = out / "metrics.json"
    froc_path = out / "froc.csv"
    metrics_path.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    save_froc_csv(curve, froc_path)
    json.loads(metrics_path.read_text())
    load_froc_csv(froc_path)
    _write_manifest(out, "eval", args, [metrics_path.name, froc_path.name])
    print(
        f"{args.method} fauc {metrics['fauc']:.1f} "
        f"(ci {boot.ci_low:.1f}-{boot.ci_high:.1f}) over {curve.n_images} images"
    )
    return 0


def cmd_params(args):
    spec = ArchitectureSpec(ARCH_BY_FLAG[args.arch], dims=args.dims)
    print(count_parameters(spec))
    return 0


def _method_order(methods):
    known = [m for m in METHOD_IDS if m in methods]
    return known + sorted(set(methods) - set(METHOD_IDS))


def _table_csv(digits, methods, values):
    lines = ["digit," + ",".join(methods)]
    for digit in digits:
        cells = []
        for method in methods:
            v = values.get((digit, method))
            cells.append("" if v is None else repr(float(v)))
        lines.append(f"{digit}," + ",".join(cells))
    avg_cells = []
    for method in methods:
        col = [values[(d, method)] for d in digits if values.get((d, method)) is not None]
        if col:
            mean = float(np.mean(col))
            std = float(np.std(col))
            avg_cells.append(f"{repr(mean)}±{repr(std)}")
        else:
            avg_cells.append("")
    lines.append("average," + ",".join(avg_cells))
    return "\n".join(lines) + "\n"


def cmd_compare(args):
    out = _out_dir(args)
    entries = []
    for path in args.inputs:
        entries.append(json.loads(Path(path).read_text()))
    fp_maxes = {e["fp_max"] for e in entries}
    if len(fp_maxes) > 1:
        raise ValueError(f"inputs mix fp_max values: {sorted(fp_maxes)}")
    cells = {}
    for e in entries:
        key = (int(e["digit"]), e["method"])
        if key in cells:
            raise ValueError(f"duplicate digit/method pair: {key}")
        cells[key] = e
    digits = sorted({d for d, _ in cells})
    methods = _method_order({m for _, m in cells})
    outputs = []
    for field in ("fauc", "sensitivity", "fpavg", "fnavg"):
        values = {k: e[field] for k, e in cells.items()}
        text = _table_csv(digits, methods, values)
        path = out / f"{field}.csv"
        path.write_text(text, encoding="utf-8")
        outputs.append(path.name)
        if not path.read_text(encoding="utf-8").startswith("digit,"):
            raise RuntimeError(f"{path.name} failed validation")
    _write_manifest(out, "compare", args, outputs)
    print((out / "fauc.csv").read_text(encoding="utf-8"), end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wsdn",
        description="Weakly supervised detection pipeline on digit grids.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate grid dataset containers")
    p.add_argument("--mnist-dir", default=None, help="directory with source IDX files")
    p.add_argument("--digit", type=int, required=True, choices=range(10))
    p.add_argument("--train", type=int, default=400)
    p.add_argument("--val", type=int, default=100)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--arch", required=True, choices=sorted(ARCH_BY_FLAG))
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--data", required=True, help="directory from gen-data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", default="scaled", choices=("scaled", "paper"))
    p.add_argument("--no-skips", action="store_true",
                   help="drop the blockwise skip connections (gp-unet only)")
    p.add_argument("--max-pool", action="store_true",
                   help="use global max pooling (gp-unet only)")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--patience", type=int, default=100)
    p.add_argument("--max-epochs", type=int, default=2000)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attention", help="export one attention map as PGM")
    p.add_argument("--method", required=True, choices=METHOD_IDS)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None, help="directory from gen-data")
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--index", type=int, default=None)
    p.add_argument("--image", default=None, help="PGM file instead of --data/--index")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("eval", help="FROC evaluation of one method on a test split")
    p.add_argument("--method", required=True, choices=METHOD_IDS)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="directory from gen-data")
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--fp-max", type=float, default=5.0)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--criterion", default="box", choices=("box", "radius"))
    p.add_argument("--radius", type=float, default=6.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("params", help="print a parameter count")
    p.add_argument("--arch", required=True, choices=sorted(ARCH_BY_FLAG))
    p.add_argument("--dims", type=int, default=2, choices=(2, 3))
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("compare", help="aggregate metrics JSONs into tables")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
