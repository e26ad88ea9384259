"""Command-line pipeline: gen, search, retrain, eval, baseline, dm.

Flag defaults pin the reference configuration (search: lr 1e-5, batch 8,
24 epochs, momentum 0.99, 4 blocks; retrain: lr 2.5e-4, batch 64, 300
epochs), so a plain invocation reproduces the headline setup.  Every run
drops a JSON manifest (command, config, seed, paths, version, wall time)
next to its outputs.  All randomness flows from --seed.

Exit codes: 0 success, 2 usage error, 3 missing input file, 4 unreadable
or invalid input (bad magic, truncation, bad values), 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .autodiff import load_weights, save_weights
from .baselines import BASELINE_KINDS, apply_baseline, fit_wem_weights
from .data import (MODE_CHANNELS, dataset_arrays, generate_synthetic,
                   read_dataset, split_timeline, write_dataset, write_raster)
from .metrics import REPORT_COLUMNS, forecast_report, pixel_metric_maps
from .network import (NetworkConfig, SearchNetwork, load_architecture,
                      save_architecture)
from .search import SearchConfig, run_search, write_search_log
from .stats import dm_test, per_sample_mse
from .training import TrainConfig, predict_network, retrain, write_history

__all__ = ["main"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_FORMAT = 4

_EPILOG = """exit codes:
  0  success
  2  usage error (unknown flag or bad invocation)
  3  a referenced input file does not exist
  4  an input file or value failed to parse or validate
  1  any other failure
"""


def _version() -> str:
    try:
        return "rainnas-" + metadata.version("rainnas")
    except metadata.PackageNotFoundError:
        return "rainnas-unpackaged"


def _write_manifest(path: Path, command: str, config: dict, seed,
                    inputs: dict, outputs: dict, started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "version": _version(),
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _out_file(path_str: str) -> Path:
    path = Path(path_str)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _out_dir(path_str: str) -> Path:
    path = Path(path_str)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_split(data_path: str, split: str):
    dataset = read_dataset(data_path)
    train, val = split_timeline(dataset)
    return {"train": train, "val": val, "all": dataset}[split]


def _write_metrics_csv(path: Path, report: dict) -> None:
    header = ",".join(REPORT_COLUMNS)
    row = ",".join(f"{report[c]:.10g}" for c in REPORT_COLUMNS)
    path.write_text(header + "\n" + row + "\n")


def _write_losses_csv(path: Path, dataset, losses: np.ndarray) -> None:
    lines = ["index,timestamp,loss"]
    for i, (sample, loss) in enumerate(zip(dataset.samples, losses)):
        lines.append(f"{i},{sample.timestamp},{loss:.10g}")
    path.write_text("\n".join(lines) + "\n")


def _read_losses_csv(path: str) -> np.ndarray:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split(",")[-1].strip() != "loss":
        raise ValueError(f"{path}: not a loss-series CSV (expected a 'loss' column)")
    try:
        return np.array([float(ln.split(",")[-1]) for ln in lines[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: unparsable loss value: {exc}") from exc


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def _cmd_gen(args) -> int:
    started = time.monotonic()
    mode = {"smod": "Smod", "mmod": "Mmod"}[args.mode]
    dataset = generate_synthetic(args.n, mode, args.seed)
    out = _out_file(args.out)
    write_dataset(dataset, out)
    _write_manifest(Path(str(out) + ".manifest.json"), "gen",
                    {"n": args.n, "mode": mode}, args.seed,
                    {}, {"dataset": out}, started)
    print(f"wrote {len(dataset)} {mode} samples to {out}")
    return EXIT_OK


def _cmd_search(args) -> int:
    started = time.monotonic()
    dataset = read_dataset(args.data)
    train, _ = split_timeline(dataset)
    x, y = dataset_arrays(train)
    cfg = SearchConfig(epochs=args.epochs, num_blocks=args.blocks, u=args.u,
                       momentum=args.momentum, batch_size=args.batch,
                       learning_rate=args.lr, theta_learning_rate=args.theta_lr,
                       crop=args.crop, feature_width=args.feature_width,
                       projector_pool=args.projector_pool,
                       supervised=args.supervised, seed=args.seed)
    result = run_search(x, cfg, y if args.supervised else None)
    out_arch = _out_file(args.out_arch)
    save_architecture(out_arch, result.architecture)
    out_log = _out_file(args.out_log) if args.out_log else out_arch.with_name("search_log.csv")
    write_search_log(out_log, result.log)
    outputs = {"architecture": out_arch, "log": out_log}
    if args.out_ckpt:
        out_ckpt = _out_file(args.out_ckpt)
        save_weights(out_ckpt, result.network.state_dict())
        outputs["checkpoint"] = out_ckpt
    _write_manifest(Path(str(out_arch) + ".manifest.json"), "search",
                    {"epochs": cfg.epochs, "blocks": cfg.num_blocks, "u": cfg.u,
                     "momentum": cfg.momentum, "batch": cfg.batch_size,
                     "lr": cfg.learning_rate, "theta_lr": cfg.theta_learning_rate,
                     "crop": cfg.crop, "feature_width": cfg.feature_width,
                     "projector_pool": cfg.projector_pool,
                     "supervised": cfg.supervised},
                    args.seed, {"data": args.data}, outputs, started)
    print("derived architecture: " + " ".join(result.architecture))
    return EXIT_OK


def _cmd_retrain(args) -> int:
    started = time.monotonic()
    dataset = read_dataset(args.data)
    arch = load_architecture(args.arch)
    init_state = load_weights(args.init_ckpt) if args.init_ckpt else None
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                      epochs=args.epochs, c_h=args.ch, epsilon=args.epsilon,
                      tau=args.tau, feature_width=args.feature_width,
                      projector_pool=args.projector_pool, seed=args.seed)
    network, history = retrain(arch, dataset, cfg, init_state=init_state)
    out_ckpt = _out_file(args.out_ckpt)
    save_weights(out_ckpt, network.state_dict())
    out_hist = (_out_file(args.history) if args.history
                else out_ckpt.with_suffix("").with_name(out_ckpt.stem + ".history.csv"))
    write_history(out_hist, history)
    _write_manifest(Path(str(out_ckpt) + ".manifest.json"), "retrain",
                    {"epochs": cfg.epochs, "lr": cfg.learning_rate,
                     "batch": cfg.batch_size, "ch": cfg.c_h, "tau": cfg.tau,
                     "epsilon": cfg.epsilon, "feature_width": cfg.feature_width,
                     "projector_pool": cfg.projector_pool,
                     "architecture": list(arch)},
                    args.seed, {"data": args.data, "arch": args.arch},
                    {"checkpoint": out_ckpt, "history": out_hist}, started)
    last = history[-1]
    print(f"epoch {last['epoch']}: train_loss={last['train_loss']:.6g}"
          + (f" val_mae={last['val_mae']:.6g}" if "val_mae" in last else ""))
    return EXIT_OK


def _load_network(ckpt_path: str, arch) -> SearchNetwork:
    state = load_weights(ckpt_path)
    if "stem.conv.weight" not in state or "fc.weight" not in state:
        raise ValueError(f"{ckpt_path}: checkpoint lacks the stem or projection head")
    f, c = state["stem.conv.weight"].shape[:2]
    # the head flattens f channels of a p x p pooled map, so p falls out
    pool = int(round((state["fc.weight"].shape[0] / f) ** 0.5))
    net_cfg = NetworkConfig(in_channels=c, feature_width=f, num_blocks=len(arch),
                            projector_pool=pool)
    network = SearchNetwork(net_cfg, rng=np.random.default_rng(0))
    network.load_state_dict(state)
    return network


def _cmd_eval(args) -> int:
    started = time.monotonic()
    part = _load_split(args.data, args.split)
    if len(part) == 0:
        raise ValueError(f"split {args.split!r} of {args.data} is empty")
    arch = load_architecture(args.arch)
    network = _load_network(args.ckpt, arch)
    x, y = dataset_arrays(part)
    pred = predict_network(network, arch, x)
    out = _out_dir(args.out)
    _write_metrics_csv(out / "metrics.csv", forecast_report(y, pred))
    _write_losses_csv(out / "losses.csv", part, per_sample_mse(y, pred))
    for name, grid in pixel_metric_maps(y, pred).items():
        write_raster(out / f"{name}.raster", grid)
    _write_manifest(out / "manifest.json", "eval", {"split": args.split},
                    None, {"data": args.data, "ckpt": args.ckpt, "arch": args.arch},
                    {"out": out}, started)
    report = forecast_report(y, pred)
    print(" ".join(f"{k}={report[k]:.4f}" for k in REPORT_COLUMNS))
    return EXIT_OK


def _cmd_baseline(args) -> int:
    started = time.monotonic()
    part = _load_split(args.data, args.split)
    if len(part) == 0:
        raise ValueError(f"split {args.split!r} of {args.data} is empty")
    x, y = dataset_arrays(part)
    weights = None
    if args.method == "wem":
        train, _ = split_timeline(read_dataset(args.data))
        weights = fit_wem_weights(*dataset_arrays(train))
    pred = apply_baseline(args.method, x, weights=weights)
    out = _out_dir(args.out)
    report = forecast_report(y, pred)
    _write_metrics_csv(out / "metrics.csv", report)
    _write_losses_csv(out / "losses.csv", part, per_sample_mse(y, pred))
    _write_manifest(out / "manifest.json", "baseline",
                    {"method": args.method, "split": args.split,
                     "weights": None if weights is None else [float(w) for w in weights]},
                    None, {"data": args.data}, {"out": out}, started)
    print(" ".join(f"{k}={report[k]:.4f}" for k in REPORT_COLUMNS))
    return EXIT_OK


def _cmd_dm(args) -> int:
    started = time.monotonic()
    loss_a = _read_losses_csv(args.lossA)
    loss_b = _read_losses_csv(args.lossB)
    result = dm_test(loss_a, loss_b, h=args.h)
    print(f"DM={result.statistic:.6g} prob={result.prob:.6g}")
    if args.out:
        out = _out_dir(args.out)
        (out / "dm.csv").write_text(
            f"statistic,prob\n{result.statistic:.10g},{result.prob:.10g}\n")
        _write_manifest(out / "manifest.json", "dm", {"h": args.h}, None,
                        {"lossA": args.lossA, "lossB": args.lossB},
                        {"out": out}, started)
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rainnas",
        description="Architecture search and verification pipeline for "
                    "gridded ensemble rainfall post-processing.",
        epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset file")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--mode", choices=["smod", "mmod"], required=True,
                   help=f"ensemble mode (smod: {MODE_CHANNELS['Smod']} members, "
                        f"mmod: {MODE_CHANNELS['Mmod']})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset path")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("search", help="run the architecture search on the train split")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--epochs", type=int, default=24)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--u", type=int, default=3, help="logit-phase period in epochs")
    p.add_argument("--momentum", type=float, default=0.99, help="EMA momentum")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--theta-lr", dest="theta_lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--crop", type=int, default=24)
    p.add_argument("--feature-width", dest="feature_width", type=int, default=32)
    p.add_argument("--projector-pool", dest="projector_pool", type=int, default=4,
                   help="side of the pooled map feeding the projection head")
    p.add_argument("--supervised", action="store_true",
                   help="swap the contrastive objective for observation MSE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-arch", dest="out_arch", required=True,
                   help="architecture JSON output path")
    p.add_argument("--out-log", dest="out_log", default=None,
                   help="search log CSV (default: search_log.csv beside the architecture)")
    p.add_argument("--out-ckpt", dest="out_ckpt", default=None,
                   help="optionally save the searched online weights")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("retrain", help="train an architecture supervised on the train split")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", required=True, help="architecture JSON file")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=2.5e-4)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--ch", type=float, default=10.0,
                   help="weight of the skill term in the loss")
    p.add_argument("--tau", type=float, default=0.5, help="soft-binning temperature")
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--feature-width", dest="feature_width", type=int, default=32)
    p.add_argument("--projector-pool", dest="projector_pool", type=int, default=4,
                   help="side of the pooled map feeding the projection head")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-ckpt", dest="init_ckpt", default=None,
                   help="warm-start from searched weights")
    p.add_argument("--out-ckpt", dest="out_ckpt", required=True)
    p.add_argument("--history", default=None,
                   help="metric history CSV (default: <ckpt>.history.csv)")
    p.set_defaults(func=_cmd_retrain)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--arch", required=True)
    p.add_argument("--split", choices=["train", "val", "all"], default="val")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="score a statistical baseline on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=list(BASELINE_KINDS), required=True)
    p.add_argument("--split", choices=["train", "val", "all"], default="val")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("dm", help="compare two per-sample loss series")
    p.add_argument("--lossA", required=True, help="losses.csv of the first method")
    p.add_argument("--lossB", required=True, help="losses.csv of the second method")
    p.add_argument("--h", type=int, default=1, help="forecast horizon")
    p.add_argument("--out", default=None, help="optional output directory for dm.csv")
    p.set_defaults(func=_cmd_dm)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_FORMAT
    except Exception as exc:  # pragma: no cover - last-resort mapping
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
