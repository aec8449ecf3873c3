"""Command-line entry point.

Subcommands wrap the pipeline 1:1: simulate, dataset, train-outer,
estimate-id, train-inner, eval, plot. Every flag maps onto a TrainConfig
key (shown in its help string); a JSON config file supplies defaults and
``--set key=value`` overrides any field. SVLAB_RUN_DIR overrides the
output root. Exit codes: 0 ok, 2 training divergence, 3 contract/config
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import models, train
from .dynsys import (SystemSpec, sample_initial_conditions, simulate,
                     trajectory_to_csv)
from .errors import SvlabError, TrainingError
from .idest import dof_round
from .render import Dataset, import_frames_dir
from .rng import Rng
from .train import SYSTEM_DEFAULTS, TrainConfig

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_CONTRACT = 3


def _run_root() -> Path:
    return Path(os.environ.get("SVLAB_RUN_DIR", "runs"))


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file of TrainConfig fields")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE",
                   help="override any config key, e.g. --set beta=17")
    p.add_argument("--system", help="config key: system")
    p.add_argument("--mode", choices=["vectors", "frames"],
                   help="config key: mode")
    p.add_argument("--seed", type=int, help="config key: seed")
    p.add_argument("--trajectories", type=int,
                   help="config key: n_trajectories")
    p.add_argument("--frames", type=int, help="config key: n_frames")
    p.add_argument("--epochs", type=int, help="config key: epochs")
    p.add_argument("--beta", type=float, help="config key: beta")
    p.add_argument("--batch-size", type=int, help="config key: batch_size")
    p.add_argument("--lr", type=float, help="config key: lr")


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(args) -> TrainConfig:
    d = {}
    if args.config is not None:
        with open(args.config) as f:
            d.update(json.load(f))
    flag_map = {"system": "system", "mode": "mode", "seed": "seed",
                "trajectories": "n_trajectories", "frames": "n_frames",
                "epochs": "epochs", "beta": "beta",
                "batch_size": "batch_size", "lr": "lr"}
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    for item in args.overrides:
        if "=" not in item:
            raise SvlabError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        d[key.strip()] = _parse_value(raw.strip())
    return TrainConfig.from_json(d)


def _out_dir(args, default_name: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    return _run_root() / default_name


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args, f"simulate-{cfg.system}-seed{cfg.seed}")
    trajs = train.generate_trajectories(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for i, tr in enumerate(trajs):
        trajectory_to_csv(tr, out / f"trajectory_{i:04d}.csv")
    print(f"wrote {len(trajs)} trajectory CSVs to {out}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args, f"dataset-{cfg.system}-{cfg.mode}-seed{cfg.seed}")
    if args.import_dir is not None:
        import_frames_dir(args.import_dir, cfg.geometry(), cfg.shift, out,
                          split_seed=cfg.seed)
    else:
        train.prepare_dataset(cfg, out)
    print(f"dataset written to {out}")
    return EXIT_OK


def _open_dataset(args, cfg: TrainConfig, out: Path) -> Dataset:
    if args.dataset is not None:
        return Dataset(args.dataset)
    return train.prepare_dataset(cfg, out / "dataset")


def cmd_train_outer(args) -> int:
    cfg = load_config(args)
    if cfg.mode != "frames":
        raise SvlabError("train-outer needs mode=frames")
    out = _out_dir(args, f"outer-{cfg.system}-seed{cfg.seed}")
    ds = _open_dataset(args, cfg, out)
    model, report = train.train_outer(cfg, ds)
    models.save_outer(out / "checkpoints" / "outer.bin", model)
    with open(out / "report.json", "w") as f:
        json.dump({"train": report.to_json()}, f, indent=2)
    print(f"outer val recon {report.final_val_recon:.6f} "
          f"({len(report.history)} epochs) -> {out}")
    return EXIT_OK


def cmd_estimate_id(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args, f"id-{cfg.system}-seed{cfg.seed}")
    ds = _open_dataset(args, cfg, out)
    outer = models.load_outer(args.outer) if args.outer else None
    est = train.estimate_dataset_id(cfg, ds, outer)
    out.mkdir(parents=True, exist_ok=True)
    result = {"id": est.value, "dof_round": dof_round(est.value),
              "k1": est.k1, "k2": est.k2, "per_k": est.per_k,
              "n_used": est.n_used}
    with open(out / "id_estimate.json", "w") as f:
        json.dump(result, f, indent=2)
    with open(out / "id_per_k.csv", "w") as f:
        f.write("k,id_k\n")
        for k, v in zip(range(est.k1, est.k2 + 1), est.per_k):
            f.write(f"{k},{v:.9g}\n")
    print(json.dumps(result))
    return EXIT_OK


def cmd_train_inner(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args, f"{args.variant}-{cfg.system}-seed{cfg.seed}")
    ds = _open_dataset(args, cfg, out)
    outer = models.load_outer(args.outer) if args.outer else None
    if args.variant == "baseline":
        model, report, dof = train.run_baseline(cfg, ds, run_dir=out,
                                                outer_model=outer)
    else:
        model, head, report, dof = train.run_variant(
            cfg, ds, args.variant, run_dir=out, outer_model=outer)
    print(f"{args.variant} {cfg.system}: val recon "
          f"{report.final_val_recon:.6f}, active {dof.active_count}, "
          f"latent {dof.latent_dim}, ground truth {dof.ground_truth_dof}, "
          f"passed={dof.passed} -> {out}")
    return EXIT_OK


def _load_run(run_dir: Path):
    with open(run_dir / "config.json") as f:
        cfg = TrainConfig.from_json(json.load(f))
    with open(run_dir / "report.json") as f:
        report = json.load(f)
    variant = report["dof"]["variant"]
    model = models.load_inner(run_dir / "checkpoints" / f"inner_{variant}.bin")
    head_path = run_dir / "checkpoints" / "hnn.bin"
    head = models.load_hnn(head_path) if head_path.exists() else None
    return cfg, report, model, head


def _trace_ids(ds: Dataset, split: str, count: int):
    return ds.manifest.splits[split]["trajectories"][:count]


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    cfg, report, model, head = _load_run(run_dir)
    ds = Dataset(args.dataset if args.dataset else run_dir / "dataset")
    mask = report["dof"]["active_mask"]
    tids = _trace_ids(ds, "val", args.n_trajectories)
    traces = train.export_traces(model, cfg, ds, tids, split="val",
                                 active_mask=mask)
    out = {"correlations": [train.correlation_report(t) for t in traces]}
    if head is not None:
        series = train.trace_latents_unscaled(model, cfg, ds, tids, "val")
        out["hamiltonian_conservation"] = \
            train.hamiltonian_conservation_metric(head, series)
    with open(run_dir / "eval.json", "w") as f:
        json.dump(out, f, indent=2)
    print(json.dumps(out)[:2000])
    return EXIT_OK


def cmd_plot(args) -> int:
    run_dir = Path(args.run)
    cfg, report, model, head = _load_run(run_dir)
    ds = Dataset(args.dataset if args.dataset else run_dir / "dataset")
    mask = report["dof"]["active_mask"]
    tids = _trace_ids(ds, "val", args.n_trajectories)
    train.export_traces(model, cfg, ds, tids, split="val", run_dir=run_dir,
                        active_mask=mask)
    print(f"traces and SVG plots under {run_dir}/traces and {run_dir}/plots")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="svlab",
        description="Discover degrees of freedom and state variables of "
                    "dynamical systems from observation sequences.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="integrate trajectories to CSV")
    _add_config_flags(sp)
    sp.add_argument("--out", type=Path, help="output directory")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("dataset", help="build a dataset (or import frames)")
    _add_config_flags(sp)
    sp.add_argument("--out", type=Path, help="output directory")
    sp.add_argument("--import-dir", type=Path,
                    help="directory of <traj>_<idx>.pgm|ppm files to import")
    sp.set_defaults(fn=cmd_dataset)

    sp = sub.add_parser("train-outer", help="train the outer conv autoencoder")
    _add_config_flags(sp)
    sp.add_argument("--out", type=Path, help="run directory")
    sp.add_argument("--dataset", type=Path, help="existing dataset directory")
    sp.set_defaults(fn=cmd_train_outer)

    sp = sub.add_parser("estimate-id", help="intrinsic dimension of latents")
    _add_config_flags(sp)
    sp.add_argument("--out", type=Path, help="output directory")
    sp.add_argument("--dataset", type=Path, help="existing dataset directory")
    sp.add_argument("--outer", type=Path, help="outer checkpoint (frames mode)")
    sp.set_defaults(fn=cmd_estimate_id)

    sp = sub.add_parser("train-inner", help="train an inner model variant")
    _add_config_flags(sp)
    sp.add_argument("--variant", required=True,
                    choices=["baseline", "pi-ae", "pi-vae", "hpi-vae"])
    sp.add_argument("--out", type=Path, help="run directory")
    sp.add_argument("--dataset", type=Path, help="existing dataset directory")
    sp.add_argument("--outer", type=Path, help="outer checkpoint (frames mode)")
    sp.set_defaults(fn=cmd_train_inner)

    sp = sub.add_parser("eval", help="correlation and conservation metrics")
    sp.add_argument("--run", type=Path, required=True, help="run directory")
    sp.add_argument("--dataset", type=Path, help="dataset directory")
    sp.add_argument("--n-trajectories", type=int, default=3,
                    help="validation trajectories to evaluate")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("plot", help="export latent traces as CSV + SVG")
    sp.add_argument("--run", type=Path, required=True, help="run directory")
    sp.add_argument("--dataset", type=Path, help="dataset directory")
    sp.add_argument("--n-trajectories", type=int, default=3)
    sp.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SvlabError, FileNotFoundError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
