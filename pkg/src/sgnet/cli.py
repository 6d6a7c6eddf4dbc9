"""Command-line entry point: ``sgnet <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import _runtime
from . import autodiff as ad
from .config import ConfigError, load_config
from .data import (
    ManifestError,
    PhantomError,
    PhantomSpec,
    VolumeFormatError,
    export_overlay,
    foreground_fraction,
    generate_phantom,
    preprocess,
    read_manifest,
    read_volume,
    write_manifest,
    write_volume,
)
from .data.manifest import select
from .metrics import dilate, subject_metrics
from .models import CheckpointError, SpecError, build_model, count_parameters, load_checkpoint, save_checkpoint
from .models.network import KINDS, ArchitectureSpec
from .reports import (
    ReportError,
    comparison,
    comparison_table,
    dumps,
    load_metrics_report,
    metrics_report,
    metrics_table,
    table,
)
from .trainer import NumericError, fit, predict

log = logging.getLogger("sgnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


# ------------------------------------------------------------------ helpers


def _write_report(path, obj, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    path.with_suffix(".txt").write_text(text)


def _load_split(manifest, split: str, target=1.0, p_low=0.5, p_high=99.5):
    entries = select(read_manifest(manifest), split)
    if not entries:
        raise ManifestError(f"{manifest}: no subjects in split {split!r}")
    out = []
    for e in entries:
        vol, msk = preprocess(read_volume(e.image), read_volume(e.mask), target, p_low, p_high)
        out.append((e.subject, vol, msk))
    return out


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _check_divisible(name, dims, div):
    bad = [d for d in dims if d % div]
    if bad:
        raise ConfigError(f"{name} {tuple(dims)} must be divisible by {div} on every axis")


# ----------------------------------------------------------------- commands


def cmd_phantom(args) -> int:
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    records = []
    splits = [("train", args.n_train), ("val", args.n_val), ("test", args.n_test)]
    index = 0
    for split, count in splits:
        for _ in range(count):
            sid = f"sub-{index:03d}"
            spec = PhantomSpec(dims=(args.dim,) * 3, seed=args.seed * 100003 + index)
            vol, msk = generate_phantom(spec)
            write_volume(vol, out / "images" / f"{sid}.sgv")
            write_volume(msk, out / "masks" / f"{sid}.sgv")
            records.append((sid, f"images/{sid}.sgv", f"masks/{sid}.sgv", split))
            log.info("%s %s foreground %.4f", sid, split, foreground_fraction(msk))
            index += 1
    write_manifest(out / "manifest.tsv", records)
    print(f"wrote {index} subjects to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = list(args.set or [])
    if args.arch:
        overrides.append(f"arch = {args.arch}")
    cfg = load_config(args.config, overrides)
    spec = cfg.architecture()
    tcfg = cfg.training()
    div = 2 ** (spec.depth - 1)
    _check_divisible("patch", tcfg.patch, div)
    _check_divisible("window", tcfg.window, div)
    pipe = (cfg.target_spacing, cfg.p_low, cfg.p_high)
    train = [(v, m) for _, v, m in _load_split(args.data, "train", *pipe)]
    val = [(v, m) for _, v, m in _load_split(args.data, "val", *pipe)]
    rundir = Path(args.out)
    rundir.mkdir(parents=True, exist_ok=True)
    (rundir / "config.txt").write_text(cfg.to_text())
    model = build_model(spec, seed=cfg.seed)
    _, tlog = fit(model, train, val, tcfg)
    meta = {
        "best_epoch": tlog.best_epoch,
        "best_val_dice": tlog.best_val_dice,
        "window": list(tcfg.window),
        "overlap": tcfg.overlap,
        "target_spacing": cfg.target_spacing,
        "p_low": cfg.p_low,
        "p_high": cfg.p_high,
    }
    save_checkpoint(model, rundir / "checkpoint.sgck", meta)
    (rundir / "trainlog.jsonl").write_text(tlog.to_jsonl())
    print(f"best val dice {tlog.best_val_dice:.4f} at epoch {tlog.best_epoch} ({tlog.stop_reason}); run dir {rundir}")
    return EXIT_OK


def _inference_settings(args, meta):
    window = tuple(args.window) if args.window else tuple(meta.get("window", (96, 96, 32)))
    overlap = args.overlap if args.overlap is not None else meta.get("overlap", 0.25)
    pipe = (meta.get("target_spacing", 1.0), meta.get("p_low", 0.5), meta.get("p_high", 99.5))
    return window, overlap, pipe


def cmd_evaluate(args) -> int:
    model, meta = load_checkpoint(args.ckpt)
    window, overlap, pipe = _inference_settings(args, meta)
    _check_divisible("window", window, model.required_divisor())
    results = []
    for sid, vol, msk in _load_split(args.data, args.split, *pipe):
        pred = predict(model, vol, window, overlap)
        results.append((sid, subject_metrics(pred, msk, msk.spacing)))
        log.info("%s dice %.4f", sid, results[-1][1].dice)
    info = {
        "name": args.name or model.spec.kind,
        "kind": model.spec.kind,
        "parameters": count_parameters(model)[0],
        "checkpoint_sha256": _sha256(args.ckpt),
    }
    rep = metrics_report(info, args.split, results)
    _write_report(args.report, rep, metrics_table(rep))
    print(metrics_table(rep), end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = [load_metrics_report(p) for p in args.reports]
    cmp = comparison(reports, args.reference, alpha=args.alpha)
    text = comparison_table(cmp)
    _write_report(args.out, cmp, text)
    print(text, end="")
    return EXIT_OK


def parameter_table(models) -> tuple[dict, str]:
    """Per-model totals and per-block breakdown for ``{name: module}``."""
    out = OrderedDict()
    rows = []
    for name, model in models.items():
        total, blocks = count_parameters(model)
        out[name] = {"total": total, "blocks": dict(blocks)}
        rows.append([name, "TOTAL", total])
        rows.extend(["", b, n] for b, n in blocks.items())
    return out, table(["model", "block", "parameters"], rows)


def _time_inference(model, dims, repeats=2) -> float:
    x = ad.Tensor(np.random.default_rng(0).random((1, model.spec.in_channels, *dims)))
    model.eval()
    best = float("inf")
    with ad.no_grad():
        for _ in range(repeats):
            t0 = time.perf_counter()
            model.forward(x)
            best = min(best, time.perf_counter() - t0)
    return best


def cmd_params(args) -> int:
    kinds = KINDS if args.all else [args.arch]
    models = OrderedDict((k, build_model(ArchitectureSpec(kind=k), seed=0)) for k in kinds)
    data, text = parameter_table(models)
    totals = [[k, v["total"]] for k, v in data.items()]
    headers = ["model", "parameters"]
    if args.time:
        dims = tuple(args.time_dims)
        for row, model in zip(totals, models.values()):
            _check_divisible("time-dims", dims, model.required_divisor())
            row.append(f"{_time_inference(model, dims):.3f}")
        headers.append(f"forward_s@{'x'.join(map(str, dims))} (informational)")
    text = table(headers, totals) + "\n" + text
    if args.out:
        _write_report(args.out, {"schema": "sgnet-params", "schema_version": 1, "models": data}, text)
    print(text, end="")
    return EXIT_OK


def _metrics_dict(m):
    return {"dice": m.dice, "precision": m.precision, "recall": m.recall, "hd95": m.hd95, "flags": list(m.flags)}


def paradox_records(pairs, r: int):
    """Metrics of each prediction and of its r-voxel dilation, with deltas.

    ``pairs`` yields ``(subject_id, pred, gt, spacing)``.
    """
    records = []
    for sid, pred, gt, spacing in pairs:
        base = subject_metrics(pred, gt, spacing)
        grown = subject_metrics(dilate(pred, r), gt, spacing)
        b, g = _metrics_dict(base), _metrics_dict(grown)
        delta = {k: g[k] - b[k] for k in ("dice", "precision", "recall", "hd95")}
        records.append({"id": sid, "base": b, "dilated": g, "delta": delta})
    return records


def paradox_report(records, r: int, source: str, split: str) -> dict:
    keys = ("dice", "precision", "recall", "hd95")
    cohort = {k: {"base": float(np.mean([x["base"][k] for x in records])),
                  "dilated": float(np.mean([x["dilated"][k] for x in records])),
                  "delta": float(np.mean([x["delta"][k] for x in records]))} for k in keys}
    cohort["n"] = len(records)
    cohort["recall_non_decreasing"] = sum(x["delta"]["recall"] >= 0 for x in records)
    cohort["precision_decreasing"] = sum(x["delta"]["precision"] < 0 for x in records)
    cohort["hd95_increasing"] = sum(x["delta"]["hd95"] > 0 for x in records)
    return {"schema": "sgnet-paradox", "schema_version": 1, "source": source, "split": split,
            "dilate": r, "subjects": records, "cohort": cohort}


def paradox_table(rep) -> str:
    rows = [[x["id"], x["delta"]["recall"], x["delta"]["precision"], x["delta"]["dice"], x["delta"]["hd95"]]
            for x in rep["subjects"]]
    c = rep["cohort"]
    rows.append(["MEAN", c["recall"]["delta"], c["precision"]["delta"], c["dice"]["delta"], c["hd95"]["delta"]])
    head = f"source={rep['source']} split={rep['split']} dilate={rep['dilate']}\n"
    return head + table(["subject", "d_recall", "d_precision", "d_dice", "d_hd95_mm"], rows)


def cmd_paradox(args) -> int:
    if args.dilate < 0:
        raise ConfigError("--dilate must be >= 0")
    if args.oracle_gt:
        subjects = _load_split(args.data, args.split)
        pairs = ((sid, m.data, m.data, m.spacing) for sid, _, m in subjects)
        source = "oracle-gt"
    else:
        model, meta = load_checkpoint(args.ckpt)
        window, overlap, pipe = _inference_settings(args, meta)
        subjects = _load_split(args.data, args.split, *pipe)
        pairs = ((sid, predict(model, v, window, overlap).data, m.data, m.spacing) for sid, v, m in subjects)
        source = f"checkpoint:{_sha256(args.ckpt)[:16]}"
    rep = paradox_report(paradox_records(pairs, args.dilate), args.dilate, source, args.split)
    text = paradox_table(rep)
    _write_report(args.report, rep, text)
    print(text, end="")
    return EXIT_OK


def cmd_overlay(args) -> int:
    entries = {e.subject: e for e in read_manifest(args.data)}
    if args.subject not in entries:
        raise ManifestError(f"{args.data}: no subject {args.subject!r}")
    e = entries[args.subject]
    pipe = (1.0, 0.5, 99.5)
    pred = None
    if args.ckpt:
        model, meta = load_checkpoint(args.ckpt)
        window, overlap, pipe = _inference_settings(args, meta)
    vol, msk = preprocess(read_volume(e.image), read_volume(e.mask), *pipe)
    if args.ckpt:
        pred = predict(model, vol, window, overlap)
    index = args.slice if args.slice is not None else vol.dims[args.axis] // 2
    export_overlay(vol, msk, pred, args.axis, index, args.out, channel=args.channel)
    print(f"wrote {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _triple(raw: str):
    parts = raw.replace("x", ",").split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {raw!r}")
    return tuple(int(p) for p in parts)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgnet", description="Brain-lesion segmentation experiments on synthetic volumes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", help="generate a synthetic cohort")
    s.add_argument("--out", required=True)
    s.add_argument("--n-train", type=int, default=64)
    s.add_argument("--n-val", type=int, default=9)
    s.add_argument("--n-test", type=int, default=19)
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("train", help="train one architecture")
    s.add_argument("--config")
    s.add_argument("--arch", choices=KINDS)
    s.add_argument("--data", required=True, help="manifest.tsv")
    s.add_argument("--out", required=True, help="run directory")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.set_defaults(func=cmd_train)

    def inference_opts(s):
        s.add_argument("--window", type=_triple, help="override the checkpoint's inference window")
        s.add_argument("--overlap", type=float)

    s = sub.add_parser("evaluate", help="score a checkpoint on a split")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=("train", "val", "test"))
    s.add_argument("--report", required=True)
    s.add_argument("--name", help="model name recorded in the report (default: architecture kind)")
    inference_opts(s)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", help="paired comparison of metric reports")
    s.add_argument("--reports", nargs="+", required=True)
    s.add_argument("--reference", default="sgnet")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("params", help="parameter counts of the default architectures")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--arch", choices=KINDS)
    g.add_argument("--all", action="store_true")
    s.add_argument("--time", action="store_true", help="add an informational forward-pass timing column")
    s.add_argument("--time-dims", type=_triple, default=(32, 32, 32))
    s.add_argument("--out")
    s.set_defaults(func=cmd_params)

    s = sub.add_parser("paradox", help="effect of dilating predictions on the metrics")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--ckpt")
    g.add_argument("--oracle-gt", action="store_true", help="use the ground truth as the prediction")
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=("train", "val", "test"))
    s.add_argument("--dilate", type=int, default=3)
    s.add_argument("--report", required=True)
    inference_opts(s)
    s.set_defaults(func=cmd_paradox)

    s = sub.add_parser("overlay", help="export a slice overlay as a PPM image")
    s.add_argument("--data", required=True)
    s.add_argument("--subject", required=True)
    s.add_argument("--ckpt")
    s.add_argument("--axis", type=int, default=2, choices=(0, 1, 2))
    s.add_argument("--slice", type=int)
    s.add_argument("--channel", type=int, default=0)
    s.add_argument("--out", required=True)
    inference_opts(s)
    s.set_defaults(func=cmd_overlay)
    return p


_CONFIG_ERRORS = (ConfigError, SpecError)
_DATA_ERRORS = (OSError, ManifestError, VolumeFormatError, CheckpointError, ReportError, PhantomError, json.JSONDecodeError)
_NUMERIC_ERRORS = (NumericError, ad.NonFiniteError, FloatingPointError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    _runtime.configure_threads()
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
