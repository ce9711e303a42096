"""Dense float64 matrix helpers and a central-difference gradient checker.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 with samples
as rows. Every loss in the package returns ``(value, grads)`` where ``grads``
mirrors the parameter mapping it was given; :func:`grad_check` verifies such a
pair against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from fedlf.errors import InputError, NumericError

LossFn = Callable[[Mapping[str, np.ndarray]], "tuple[float, Mapping[str, np.ndarray]]"]


def as_matrix(x, name="matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite entries in {what}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise InputError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return _check_finite(a @ b, "matmul result")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax without validation (hot path)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_log_probs(logits) -> np.ndarray:
    """Row-wise log-softmax, stabilised by subtracting each row's max."""
    z = as_matrix(logits, "logits")
    if z.size == 0:
        raise InputError("softmax_log_probs needs a non-empty matrix")
    _check_finite(z, "logits")
    return _check_finite(log_softmax(z), "log-probabilities")


@dataclass(frozen=True)
class GradCheckReport:
    max_abs_error: float
    max_rel_error: float
    worst_param: tuple[str, int] | None
    num_entries: int

    def passed(self, rel_tol: float = 1e-4) -> bool:
        return self.max_rel_error < rel_tol


def finite_difference(loss: Callable, params: Mapping[str, np.ndarray], epsilon: float = 1e-6):
    """Central-difference gradient of ``loss(params)[0]`` for every entry."""
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    probe = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    rebuild = _rebuilder(params)
    numeric = {}
    for name, arr in probe.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = _probe_value(loss, rebuild(probe), name, i, "+")
            flat[i] = orig - epsilon
            fm = _probe_value(loss, rebuild(probe), name, i, "-")
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * epsilon)
        numeric[name] = g
    return numeric


def grad_check(loss: Callable, params: Mapping[str, np.ndarray], epsilon: float = 1e-6,
               floor: float = 1e-6) -> GradCheckReport:
    """Compare the analytic gradient of ``loss`` with central differences.

    ``loss(params)`` must return ``(value, grads)``. The relative error of an
    entry is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps entries whose
    true gradient is ~0 from reporting rounding noise as huge relative error.
    """
    value, analytic = loss(params)
    if not np.isfinite(value):
        raise NumericError("loss is non-finite at the base point", location=None)
    numeric = finite_difference(loss, params, epsilon)
    max_abs = 0.0
    max_rel = 0.0
    worst = None
    count = 0
    for name, num in numeric.items():
        ana = np.asarray(analytic[name], dtype=np.float64)
        if ana.shape != num.shape:
            raise InputError(f"gradient for {name!r} has shape {ana.shape}, expected {num.shape}")
        diff = np.abs(ana - num).reshape(-1)
        scale = np.maximum(np.maximum(np.abs(ana), np.abs(num)).reshape(-1), floor)
        rel = diff / scale
        count += diff.size
        if diff.size == 0:
            continue
        i = int(np.argmax(rel))
        max_abs = max(max_abs, float(diff.max()))
        if worst is None or rel[i] > max_rel:
            max_rel = float(rel[i])
            worst = (name, i)
    return GradCheckReport(max_abs, max_rel, worst, count)


def _probe_value(loss, params, name, index, sign):
    v = loss(params)[0]
    if not np.isfinite(v):
        raise NumericError(f"non-finite loss probing {name}[{index}] ({sign}eps)",
                           location=(name, index, sign))
    return float(v)


def _rebuilder(params):
    kind = type(params)
    if kind is dict:
        return lambda arrays: dict(arrays)
    return lambda arrays: kind(arrays)
