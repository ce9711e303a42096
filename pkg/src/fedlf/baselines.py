"""Comparison objectives: plain cross-entropy, focal loss and the proximal term."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedlf.errors import InputError
from fedlf.losses import LossBreakdown, _labels, softmax_xent
from fedlf.model import CLASSIFIER, ModelArch, ModelParams, backward_features, forward_features
from fedlf.numgrad import as_matrix, log_softmax

METHODS = ("fedavg", "fedprox", "focal", "fedlf")


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "fedlf"
    focal_gamma: float = 2.0
    prox_mu: float = 0.01

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.focal_gamma < 0 or self.prox_mu < 0:
            raise InputError("focal_gamma and prox_mu must be non-negative")


def loss_cross_entropy(scores, labels):
    z = as_matrix(scores, "scores")
    y = _labels(labels, z.shape[0], z.shape[1])
    if z.shape[0] == 0:
        raise InputError("empty batch")
    return softmax_xent(z, y)


def loss_focal(scores, labels, focal_gamma: float = 2.0):
    """Mean of ``-(1 - p_t)**gamma * log(p_t)``; returns ``(value, grad_scores)``."""
    if focal_gamma < 0:
        raise InputError("focal_gamma must be non-negative")
    z = as_matrix(scores, "scores")
    y = _labels(labels, z.shape[0], z.shape[1])
    n = z.shape[0]
    if n == 0:
        raise InputError("empty batch")
    rows = np.arange(n)
    logp = log_softmax(z)
    s = np.exp(logp)
    logpt = logp[rows, y]
    pt = s[rows, y]
    one_minus = 1.0 - pt
    weight = one_minus ** focal_gamma
    value = float(-(weight * logpt).mean())
    # dL/dlog(p_t) per sample; the gamma term vanishes as p_t -> 1
    if focal_gamma == 0:
        extra = np.zeros(n)
    else:
        safe = np.where(one_minus > 0, one_minus, 1.0)
        extra = np.where(one_minus > 0, focal_gamma * pt * logpt * safe ** (focal_gamma - 1.0), 0.0)
    g_logpt = extra - weight
    # d log p_t / dz_j = onehot_j - s_j
    onehot = np.zeros_like(z)
    onehot[rows, y] = 1.0
    g = -(g_logpt[:, None] * (s - onehot))
    return value, g / n


def prox_term(local: ModelParams, global_ref: ModelParams, prox_mu: float):
    """``mu/2 * ||local - global||^2`` and its gradient w.r.t. ``local``."""
    if prox_mu < 0:
        raise InputError("prox_mu must be non-negative")
    if list(local) != list(global_ref):
        raise InputError("parameter names differ")
    value = 0.0
    grads = {}
    for k, v in local.items():
        ref = global_ref[k]
        if ref.shape != v.shape:
            raise InputError(f"shape mismatch for {k}: {v.shape} vs {ref.shape}")
        diff = v - ref
        value += float((diff * diff).sum())
        grads[k] = prox_mu * diff
    return 0.5 * prox_mu * value, ModelParams(grads)


def baseline_loss(batch, labels, params: ModelParams, arch: ModelArch, cfg: BaselineConfig,
                  global_ref: ModelParams | None = None):
    """Data loss of a baseline method (plus the proximal term for fedprox)."""
    x = as_matrix(batch, "batch")
    feats, cache = forward_features(params, x, arch, return_cache=True)
    w = params[CLASSIFIER]
    scores = feats @ w.T
    if cfg.method == "focal":
        data, g_scores = loss_focal(scores, labels, cfg.focal_gamma)
    elif cfg.method in ("fedavg", "fedprox"):
        data, g_scores = loss_cross_entropy(scores, labels)
    else:
        raise InputError(f"baseline_loss does not handle method {cfg.method!r}")
    grads = backward_features(params, cache, g_scores @ w, arch)
    grads[CLASSIFIER] = g_scores.T @ feats
    grads = ModelParams({k: grads[k] for k in params})
    total = data
    if cfg.method == "fedprox" and global_ref is not None and cfg.prox_mu > 0:
        prox, g_prox = prox_term(params, global_ref, cfg.prox_mu)
        total += prox
        grads = grads + g_prox
    return LossBreakdown(data, 0.0, 0.0, total, 0.0), grads
