"""MLP feature extractor plus a bias-free linear classifier.

Parameter names are ``extractor.{i}.weight`` (out x in), ``extractor.{i}.bias``
(1 x out) and ``classifier.weight`` (C x d). Scores are ``features @ W.T``.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from fedlf.container import read_container, write_container
from fedlf.errors import InputError
from fedlf.numgrad import as_matrix

CLASSIFIER = "classifier.weight"
_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelArch:
    input_dim: int
    feature_dim: int = 32
    num_classes: int = 10
    hidden_widths: tuple[int, ...] = (64,)
    activation: str = "relu"
    # apply the activation to the feature layer as well
    activate_features: bool = False
    # std of each weight is init_gain / sqrt(fan_in); None picks sqrt(2) for relu, 1 for tanh
    init_gain: float | None = None

    def validate(self) -> None:
        widths = tuple(self.hidden_widths)
        if self.input_dim < 1 or any(w < 1 for w in widths):
            raise InputError(f"degenerate architecture: input_dim={self.input_dim}, hidden={widths}")
        if self.feature_dim < 1:
            raise InputError("feature_dim must be >= 1")
        if self.num_classes < 2:
            raise InputError("num_classes must be >= 2")
        if self.activation not in _ACTIVATIONS:
            raise InputError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_widths, self.feature_dim]
        return list(zip(dims[:-1], dims[1:]))


class ModelParams(Mapping):
    """Ordered name -> float64 array mapping with elementwise arithmetic."""

    __slots__ = ("_data",)

    def __init__(self, data=()):
        items = data.items() if isinstance(data, Mapping) else data
        self._data = {k: np.asarray(v, dtype=np.float64) for k, v in items}

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __repr__(self):
        shapes = ", ".join(f"{k}: {v.shape}" for k, v in self._data.items())
        return f"ModelParams({shapes})"

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self._data.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams({k: np.zeros_like(v) for k, v in self._data.items()})

    def _check_same(self, other: "ModelParams") -> None:
        if list(self._data) != list(other) or any(
                v.shape != other[k].shape for k, v in self._data.items()):
            raise InputError("parameter names/shapes differ")

    def __add__(self, other):
        self._check_same(other)
        return ModelParams({k: v + other[k] for k, v in self._data.items()})

    def __sub__(self, other):
        self._check_same(other)
        return ModelParams({k: v - other[k] for k, v in self._data.items()})

    def __mul__(self, scalar):
        return ModelParams({k: v * float(scalar) for k, v in self._data.items()})

    __rmul__ = __mul__

    def flat(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self._data.values()]) if self._data \
            else np.zeros(0)

    def equal(self, other) -> bool:
        return list(self._data) == list(other) and all(
            np.array_equal(v, other[k]) for k, v in self._data.items())

    @property
    def classifier(self) -> np.ndarray:
        return self._data[CLASSIFIER]

    def num_layers(self) -> int:
        return sum(1 for k in self._data if k.endswith(".weight") and k.startswith("extractor."))


def init_params(arch: ModelArch, seed: int) -> ModelParams:
    arch.validate()
    rng = np.random.default_rng(seed)
    gain = arch.init_gain
    if gain is None:
        gain = np.sqrt(2.0) if arch.activation == "relu" else 1.0
    params = {}
    for i, (fan_in, fan_out) in enumerate(arch.layer_dims):
        params[f"extractor.{i}.weight"] = rng.normal(0.0, gain / np.sqrt(fan_in), (fan_out, fan_in))
        params[f"extractor.{i}.bias"] = np.zeros((1, fan_out))
    params[CLASSIFIER] = rng.normal(0.0, 1.0 / np.sqrt(arch.feature_dim),
                                    (arch.num_classes, arch.feature_dim))
    return ModelParams(params)


def _act(name, x):
    return np.maximum(x, 0.0) if name == "relu" else np.tanh(x)


def _act_grad(name, pre, post, g):
    if name == "relu":
        return g * (pre > 0)
    return g * (1.0 - post * post)


def forward_features(params: ModelParams, batch, arch: ModelArch, return_cache: bool = False):
    """Map a (B, input_dim) batch to (B, d) features.

    With ``return_cache`` the per-layer inputs/pre-activations needed by
    :func:`backward_features` are returned as a second value.
    """
    x = as_matrix(batch, "batch")
    if x.shape[1] != arch.input_dim:
        raise InputError(f"batch has {x.shape[1]} columns, model expects {arch.input_dim}")
    n = params.num_layers()
    cache = []
    h = x
    for i in range(n):
        w = params[f"extractor.{i}.weight"]
        pre = h @ w.T + params[f"extractor.{i}.bias"]
        last = i == n - 1
        post = _act(arch.activation, pre) if (not last or arch.activate_features) else pre
        cache.append((h, pre, post))
        h = post
    if return_cache:
        return h, cache
    return h


def backward_features(params: ModelParams, cache, grad_features: np.ndarray,
                      arch: ModelArch) -> dict[str, np.ndarray]:
    """Gradients of the extractor parameters given dL/dfeatures."""
    grads = {}
    g = grad_features
    n = len(cache)
    for i in reversed(range(n)):
        inp, pre, post = cache[i]
        if i < n - 1 or arch.activate_features:
            g = _act_grad(arch.activation, pre, post, g)
        w = params[f"extractor.{i}.weight"]
        grads[f"extractor.{i}.weight"] = g.T @ inp
        grads[f"extractor.{i}.bias"] = g.sum(axis=0, keepdims=True)
        if i > 0:
            g = g @ w
    return grads


def classifier_scores(features, w) -> np.ndarray:
    h = as_matrix(features, "features")
    w = as_matrix(w, "classifier weight")
    if h.shape[1] != w.shape[1]:
        raise InputError(f"features have d={h.shape[1]} but classifier has d={w.shape[1]}")
    return h @ w.T


def predict(params: ModelParams, x, arch: ModelArch) -> np.ndarray:
    return classifier_scores(forward_features(params, x, arch), params.classifier).argmax(axis=1)


def save_params(params: ModelParams, path, arch: ModelArch | None = None) -> None:
    meta = {}
    if arch is not None:
        meta["arch"] = {
            "input_dim": arch.input_dim, "feature_dim": arch.feature_dim,
            "num_classes": arch.num_classes, "hidden_widths": list(arch.hidden_widths),
            "activation": arch.activation, "activate_features": arch.activate_features,
        }
    write_container(path, params, "fedlf-params", meta)


def load_params(path) -> tuple[ModelParams, ModelArch | None]:
    tensors, meta = read_container(path, "fedlf-params")
    arch = None
    if "arch" in meta:
        a = dict(meta["arch"])
        a["hidden_widths"] = tuple(a["hidden_widths"])
        arch = ModelArch(**a)
    return ModelParams(tensors), arch
