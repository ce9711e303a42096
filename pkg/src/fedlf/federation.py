"""Server loop: client sampling, local SGD, size-weighted aggregation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fedlf.baselines import BaselineConfig, baseline_loss
from fedlf.data import ClientShard, LabeledDataset, round_half_up
from fedlf.errors import InputError, NumericError
from fedlf.losses import (FedLFWeights, LossBreakdown, adjustment_vector, init_class_centers,
                          normalize_distribution, total_loss)
from fedlf.metrics import GroupSpec, RoundReport, group_accuracies
from fedlf.model import ModelArch, ModelParams, forward_features, predict, save_params

log = logging.getLogger(__name__)

# tags keep the sampling stream and the per-client streams disjoint
_SAMPLE_STREAM = 0
_CLIENT_STREAM = 1


@dataclass(frozen=True)
class FLConfig:
    num_rounds: int = 200
    num_clients: int = 20
    online_rate: float = 0.4
    local_epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 0.1
    method: BaselineConfig = field(default_factory=BaselineConfig)
    weights: FedLFWeights = field(default_factory=FedLFWeights)
    seed: int = 0
    checkpoint_every: int = 0
    max_workers: int = 1

    def __post_init__(self):
        if not 0 < self.online_rate <= 1:
            raise InputError("online_rate must lie in (0, 1]")
        if self.num_clients < 1 or self.local_epochs < 0 or self.batch_size < 1:
            raise InputError("num_clients >= 1, local_epochs >= 0, batch_size >= 1 required")
        if self.learning_rate < 0 or self.num_rounds < 0:
            raise InputError("learning_rate and num_rounds must be non-negative")


def num_sampled(num_clients: int, online_rate: float) -> int:
    return min(num_clients, max(1, round_half_up(online_rate * num_clients)))


def sample_clients(num_clients: int, online_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted ids of a uniform random subset of round(online_rate * K) clients (at least 1)."""
    m = num_sampled(num_clients, online_rate)
    return np.sort(rng.choice(num_clients, size=m, replace=False))


def client_rng(seed: int, round_index: int, client_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, _CLIENT_STREAM, client_id])


def local_update(global_params: ModelParams, shard: ClientShard, dataset: LabeledDataset,
                 config: FLConfig, arch: ModelArch, rng: np.random.Generator):
    """Train a private copy of the global model on one client's shard.

    Returns ``(params, trail)`` where ``trail`` holds one mean
    :class:`LossBreakdown` per local epoch. For fedlf the adjustment vector
    and class centers are rebuilt from the shard here and dropped afterwards.
    """
    if shard.size == 0:
        raise InputError(f"client {shard.client_id} has an empty shard")
    params = global_params.copy()
    x = dataset.samples[shard.sample_indices]
    y = dataset.labels[shard.sample_indices]
    n = x.shape[0]
    lr = config.learning_rate
    method = config.method
    fedlf = method.method == "fedlf"
    adist = centers = None
    if fedlf:
        adist = adjustment_vector(normalize_distribution(shard.dist), config.weights.smoothing_factor)
        if config.weights.lam_eff > 0:
            centers = init_class_centers(forward_features(params, x, arch), y, arch.num_classes)

    trail = []
    for _ in range(config.local_epochs):
        order = rng.permutation(n)
        epoch = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if fedlf:
                br, grads, g_centers = total_loss(x[idx], y[idx], params, centers, arch, adist,
                                                  config.weights)
                if centers is not None:
                    centers.centers -= lr * g_centers
            else:
                br, grads = baseline_loss(x[idx], y[idx], params, arch, method, global_params)
            if not np.isfinite(br.total):
                raise NumericError(f"client {shard.client_id}: non-finite loss {br.total}",
                                   location=(shard.client_id, start))
            for k, g in grads.items():
                arr = params[k]
                arr -= lr * g
            epoch.append(br)
        trail.append(LossBreakdown.mean(epoch))
    return params, trail


def aggregate(uploads) -> ModelParams:
    """Size-weighted average of ``[(params, num_samples), ...]``."""
    uploads = list(uploads)
    if not uploads:
        raise InputError("nothing to aggregate")
    sizes = np.array([float(s) for _, s in uploads])
    if np.any(sizes < 0) or sizes.sum() <= 0:
        raise InputError("client sizes must be non-negative with a positive total")
    first = uploads[0][0]
    for p, _ in uploads[1:]:
        if list(p) != list(first) or any(p[k].shape != first[k].shape for k in first):
            raise InputError("uploaded parameters disagree in names or shapes")
    if len(uploads) == 1:
        return first.copy()
    # canonical order + offsets from a reference model: exact for identical
    # uploads and bit-identical under any permutation of the list
    order = sorted(range(len(uploads)),
                   key=lambda i: (sizes[i], uploads[i][0].flat().tobytes()))
    weights = sizes[order] / sizes.sum()
    ref = uploads[order[0]][0]
    out = {}
    for k in first:
        acc = np.zeros_like(ref[k])
        for wgt, i in zip(weights, order):
            acc += wgt * (uploads[i][0][k] - ref[k])
        out[k] = ref[k] + acc
    return ModelParams(out)


@dataclass
class TrainingResult:
    reports: list[RoundReport]
    params: ModelParams


def evaluate(params: ModelParams, eval_set: LabeledDataset, arch: ModelArch, groups: GroupSpec):
    pred = predict(params, eval_set.samples, arch)
    return group_accuracies(pred, eval_set.labels, groups, arch.num_classes)


def run_training(config: FLConfig, arch: ModelArch, dataset: LabeledDataset,
                 shards: list[ClientShard], eval_set: LabeledDataset, groups: GroupSpec,
                 init: ModelParams, checkpoint_dir=None) -> TrainingResult:
    """Run ``config.num_rounds`` rounds; deterministic in ``config.seed``.

    Every random draw comes from a generator seeded by (seed, round, stream,
    client), so results do not depend on ``max_workers``.
    """
    if len(shards) != config.num_clients:
        raise InputError(f"{len(shards)} shards for {config.num_clients} clients")
    if dataset.num_classes != arch.num_classes or eval_set.num_classes != arch.num_classes:
        raise InputError("dataset and model disagree on num_classes")
    w = init.copy()
    reports = []
    pool = ThreadPoolExecutor(config.max_workers) if config.max_workers > 1 else None
    try:
        for t in range(1, config.num_rounds + 1):
            srng = np.random.default_rng([config.seed, t, _SAMPLE_STREAM])
            ids = [int(i) for i in sample_clients(config.num_clients, config.online_rate, srng)]
            active = [i for i in ids if shards[i].size > 0]

            def work(cid, w=w, t=t):
                return local_update(w, shards[cid], dataset, config, arch,
                                    client_rng(config.seed, t, cid))

            results = list(pool.map(work, active)) if pool else [work(c) for c in active]
            if results:
                w = aggregate([(p, shards[c].size) for c, (p, _) in zip(active, results)])
            losses = LossBreakdown.mean(b for _, trail in results for b in trail)
            acc = evaluate(w, eval_set, arch, groups)
            reports.append(RoundReport(t, acc.acc_head, acc.acc_middle, acc.acc_tail, acc.acc_all,
                                       losses.l_a, losses.l_c, losses.l_d, losses.total, ids))
            log.debug("round %d acc_all=%.4f tail=%.4f", t, acc.acc_all, acc.acc_tail)
            if checkpoint_dir and config.checkpoint_every and t % config.checkpoint_every == 0:
                save_params(w, Path(checkpoint_dir) / f"round_{t:04d}.params", arch)
    finally:
        if pool:
            pool.shutdown()
    return TrainingResult(reports, w)
