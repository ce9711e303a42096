"""Finite-difference checks of every training loss on random tiny instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedlf.baselines import BaselineConfig, baseline_loss
from fedlf.losses import (ClassCenters, FedLFWeights, adjustment_vector, decorrelation_from_features,
                          init_class_centers, loss_adaptive, loss_center, margin_q,
                          normalize_distribution, total_loss)
from fedlf.model import CLASSIFIER, ModelArch, ModelParams, forward_features, init_params
from fedlf.numgrad import GradCheckReport, grad_check


@dataclass
class Instance:
    x: np.ndarray
    y: np.ndarray
    arch: ModelArch
    params: ModelParams
    adist: np.ndarray
    centers: ClassCenters


def random_instance(rng: np.random.Generator, activation: str = "tanh") -> Instance:
    b = int(rng.integers(4, 9))  # >= min_decorrelation_batch, so L includes L_D
    c = int(rng.integers(2, 6))
    d = int(rng.integers(2, 17))
    inp = int(rng.integers(2, 9))
    hidden = tuple(int(w) for w in rng.integers(2, 9, size=int(rng.integers(0, 3))))
    arch = ModelArch(input_dim=inp, feature_dim=d, num_classes=c, hidden_widths=hidden,
                     activation=activation)
    params = init_params(arch, int(rng.integers(0, 2**31)))
    # nonzero biases so the check also covers them
    params = ModelParams({k: v + (0.1 * rng.normal(size=v.shape) if k.endswith("bias") else 0.0)
                          for k, v in params.items()})
    x = rng.normal(size=(b, inp))
    y = rng.integers(0, c, size=b)
    y[: min(b, c)] = rng.permutation(c)[: min(b, c)]
    counts = rng.integers(1, 20, size=c)
    adist = adjustment_vector(normalize_distribution(counts), float(rng.uniform(0.0, 1.0)))
    centers = init_class_centers(forward_features(params, x, arch), y, c)
    centers.centers += 0.3 * rng.normal(size=centers.centers.shape)
    return Instance(x, y, arch, params, adist, centers)


def check_adaptive(inst: Instance, eps=1e-5) -> GradCheckReport:
    h0 = forward_features(inst.params, inst.x, inst.arch)

    def f(p):
        h, w = p["features"], p[CLASSIFIER]
        value, gz = loss_adaptive((h @ w.T) * inst.adist, inst.y)
        gs = gz * inst.adist
        return value, {"features": gs @ w, CLASSIFIER: gs.T @ h}

    return grad_check(f, {"features": h0, CLASSIFIER: inst.params[CLASSIFIER]}, eps)


def check_center(inst: Instance, q: float, eps=1e-5) -> GradCheckReport:
    h0 = forward_features(inst.params, inst.x, inst.arch)
    present = inst.centers.present

    def f(p):
        value, gh, gc = loss_center(p["features"], inst.y, ClassCenters(p["centers"], present), q)
        return value, {"features": gh, "centers": gc}

    return grad_check(f, {"features": h0, "centers": inst.centers.centers}, eps)


def check_decorrelation(inst: Instance, eps=1e-5) -> GradCheckReport:
    h0 = forward_features(inst.params, inst.x, inst.arch)

    def f(p):
        value, g = decorrelation_from_features(p["features"])
        return value, {"features": g}

    return grad_check(f, {"features": h0}, eps)


def check_total(inst: Instance, weights: FedLFWeights, eps=1e-5) -> GradCheckReport:
    present = inst.centers.present
    q = margin_q(inst.centers, weights.tau)
    names = list(inst.params)

    def f(p):
        params = ModelParams({k: p[k] for k in names})
        br, grads, gc = total_loss(inst.x, inst.y, params, ClassCenters(p["centers"], present),
                                   inst.arch, inst.adist, weights, q=q)
        out = dict(grads.items())
        out["centers"] = gc
        return br.total, out

    start = dict(inst.params.items())
    start["centers"] = inst.centers.centers
    return grad_check(f, start, eps)


def check_baseline(inst: Instance, method: str, eps=1e-5) -> GradCheckReport:
    cfg = BaselineConfig(method, focal_gamma=2.0, prox_mu=0.5)
    ref = ModelParams({k: v + 0.05 for k, v in inst.params.items()})

    def f(p):
        br, grads = baseline_loss(inst.x, inst.y, ModelParams(p), inst.arch, cfg, ref)
        return br.total, grads

    return grad_check(f, inst.params, eps)


def run_suite(num_instances: int = 20, seed: int = 0, weights: FedLFWeights | None = None):
    """Return ``[(check name, instance index, GradCheckReport), ...]``.

    The combined-loss check uses enlarged weights so L_C and L_D contribute
    visibly to the gradient being checked.
    """
    rng = np.random.default_rng(seed)
    weights = weights or FedLFWeights(lam=0.5, gamma=0.5, tau=100.0)
    out = []
    for i in range(num_instances):
        inst = random_instance(rng)
        out.append(("L_A", i, check_adaptive(inst)))
        out.append(("L_C (q=0)", i, check_center(inst, 0.0)))
        out.append(("L_C (margin)", i, check_center(inst, margin_q(inst.centers, weights.tau))))
        out.append(("L_D", i, check_decorrelation(inst)))
        out.append(("L total", i, check_total(inst, weights)))
        out.append(("cross-entropy", i, check_baseline(inst, "fedavg")))
        out.append(("focal", i, check_baseline(inst, "focal")))
        out.append(("fedprox", i, check_baseline(inst, "fedprox")))
    return out
