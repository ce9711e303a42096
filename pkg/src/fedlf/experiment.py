"""End-to-end runs: data -> long-tail subsample -> partition -> training -> reports."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import statistics
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fedlf.config import ExperimentConfig
from fedlf.data import (LabeledDataset, dirichlet_partition, load_cifar10_binary, longtail_counts,
                        split_per_class, subsample_longtail, synth_gaussians)
from fedlf.federation import TrainingResult, run_training
from fedlf.metrics import GroupSpec, classify_groups, emit_reports
from fedlf.model import init_params, save_params

log = logging.getLogger(__name__)


@dataclass
class ExperimentData:
    train: LabeledDataset
    test: LabeledDataset
    shards: list
    groups: GroupSpec


def build_data(cfg: ExperimentConfig) -> ExperimentData:
    if cfg.dataset == "cifar10":
        root = Path(cfg.data_path)
        pool = load_cifar10_binary(root)
        test = load_cifar10_binary(root / "test_batch.bin")
    else:
        per_class = [cfg.n_max + cfg.n_test_per_class] * cfg.num_classes
        full = synth_gaussians(cfg.num_classes, cfg.input_dim, per_class, cfg.class_spread,
                               cfg.data_seed, noise=cfg.noise)
        test, pool = split_per_class(full, cfg.n_test_per_class)
    counts = longtail_counts(cfg.n_max, cfg.num_classes, cfg.imbalance_factor)
    train = subsample_longtail(pool, counts, cfg.data_seed)
    shards = dirichlet_partition(train, cfg.partition())
    groups = classify_groups(train.class_counts, cfg.head_threshold, cfg.tail_threshold)
    return ExperimentData(train, test, shards, groups)


def train(cfg: ExperimentConfig, data: ExperimentData | None = None,
          checkpoint_dir=None) -> tuple[TrainingResult, ExperimentData]:
    data = data or build_data(cfg)
    arch = cfg.arch()
    init = init_params(arch, cfg.seed)
    result = run_training(cfg.fl(), arch, data.train, data.shards, data.test, data.groups, init,
                          checkpoint_dir=checkpoint_dir)
    return result, data


def summary_line(cfg: ExperimentConfig, result: TrainingResult) -> str:
    if not result.reports:
        return f"{cfg.method}: no rounds run"
    r = result.reports[-1]
    return (f"{cfg.method} round {r.round}: all={r.acc_all:.4f} head={r.acc_head:.4f} "
            f"middle={r.acc_middle:.4f} tail={r.acc_tail:.4f}")


def run_experiment(cfg: ExperimentConfig, out=None, format=None, echo=print) -> TrainingResult:
    """Train, write the round reports and a final checkpoint next to them.

    On failure any files this run created are removed before re-raising.
    """
    out = Path(out or cfg.out)
    fmt = format or cfg.format
    ckpt = out.with_name(out.name + ".params")
    ckpt_dir = out.parent if cfg.checkpoint_every else None
    created = [out, ckpt]
    try:
        result, _ = train(cfg, checkpoint_dir=ckpt_dir)
        out.parent.mkdir(parents=True, exist_ok=True)
        emit_reports(result.reports, out, fmt)
        save_params(result.params, ckpt, cfg.arch())
    except BaseException:
        for p in created:
            p.unlink(missing_ok=True)
        raise
    if echo:
        echo(summary_line(cfg, result))
    return result


SUMMARY_COLUMNS = ["lambda", "gamma", "center", "decorrelation", "seeds", "acc_head",
                   "acc_middle", "acc_tail", "acc_all", "status"]


def _median(values):
    vals = [v for v in values if not math.isnan(v)]
    return statistics.median(vals) if vals else math.nan


def run_ablation(base: ExperimentConfig, lambdas, gammas, center=(True,), decorrelation=(True,),
                 seeds=(None,), out_dir="ablation", echo=print) -> list[dict]:
    """Run the cross product of loss weights and component toggles.

    One report file per (cell, seed) plus ``summary.csv`` with the median of
    the final-round accuracies over seeds. A failing cell is recorded with its
    error and the remaining cells still run.
    """
    cells = list(itertools.product(lambdas, gammas, center, decorrelation))
    if not cells or not seeds:
        raise ValueError("ablation matrix is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_cache = {}
    rows = []
    for lam, gamma, c_on, d_on in cells:
        finals = []
        status = "ok"
        for seed in seeds:
            cfg = base.replace(lam=float(lam), gamma=float(gamma), use_center=bool(c_on),
                               use_decorrelation=bool(d_on), method="fedlf",
                               seed=base.seed if seed is None else int(seed))
            tag = (f"lam{lam:g}_gam{gamma:g}_c{'on' if c_on else 'off'}"
                   f"_d{'on' if d_on else 'off'}_s{cfg.seed}")
            try:
                key = (cfg.seed, cfg.data_seed)
                if key not in data_cache:
                    data_cache[key] = build_data(cfg)
                result, _ = train(cfg, data_cache[key])
                emit_reports(result.reports, out_dir / f"{tag}.{base.format}", base.format)
                if result.reports:
                    finals.append(result.reports[-1])
            except Exception as exc:  # one broken cell must not stop the matrix
                log.exception("ablation cell %s failed", tag)
                status = f"error: {exc}"
        row = {"lambda": lam, "gamma": gamma, "center": "on" if c_on else "off",
               "decorrelation": "on" if d_on else "off", "seeds": len(finals),
               "acc_head": _median(r.acc_head for r in finals),
               "acc_middle": _median(r.acc_middle for r in finals),
               "acc_tail": _median(r.acc_tail for r in finals),
               "acc_all": _median(r.acc_all for r in finals), "status": status}
        rows.append(row)
        if echo:
            echo(f"lambda={lam:g} gamma={gamma:g} center={row['center']} "
                 f"decorrelation={row['decorrelation']}: all={row['acc_all']:.4f} "
                 f"tail={row['acc_tail']:.4f} [{status}]")
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) and k.startswith("acc") else v)
                        for k, v in row.items()})
    return rows


def final_accuracies(results) -> np.ndarray:
    return np.array([[r.reports[-1].acc_head, r.reports[-1].acc_middle, r.reports[-1].acc_tail,
                      r.reports[-1].acc_all] for r in results])
