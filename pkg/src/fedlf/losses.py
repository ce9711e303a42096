"""Local training objective: adjusted-logit cross-entropy, margin class-center
loss and feature decorrelation, each returning its value and gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedlf import kernels
from fedlf.errors import InputError
from fedlf.model import CLASSIFIER, ModelArch, ModelParams, backward_features, forward_features
from fedlf.numgrad import as_matrix, log_softmax

STD_EPS = 1e-8


def _labels(labels, n_rows, num_classes):
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != n_rows:
        raise InputError(f"{y.shape[0]} labels for {n_rows} rows")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise InputError(f"labels must lie in [0, {num_classes})")
    return y


# -- adaptive logit adjustment ---------------------------------------------

def normalize_distribution(counts) -> np.ndarray:
    n = np.asarray(counts, dtype=np.float64).reshape(-1)
    if np.any(n < 0):
        raise InputError("label counts must be non-negative")
    total = n.sum()
    if total < 1:
        raise InputError("label distribution has no samples")
    return n / total


def adjustment_vector(ndist, smoothing_factor: float) -> np.ndarray:
    """Blend ``ndist / max(ndist)`` toward all-ones by ``smoothing_factor``."""
    nd = np.asarray(ndist, dtype=np.float64).reshape(-1)
    if not 0.0 <= smoothing_factor <= 1.0:
        raise InputError("smoothing_factor must lie in [0, 1]")
    if np.any(nd < 0):
        raise InputError("ndist must be non-negative")
    top = nd.max() if nd.size else 0.0
    if top <= 0:
        raise InputError("ndist is all zero: client has no samples")
    return nd / top * (1.0 - smoothing_factor) + smoothing_factor


def adjusted_logits(features, w, adist) -> np.ndarray:
    h = as_matrix(features, "features")
    w = as_matrix(w, "classifier weight")
    a = np.asarray(adist, dtype=np.float64).reshape(-1)
    if h.shape[1] != w.shape[1]:
        raise InputError("features and classifier disagree on d")
    if a.shape[0] != w.shape[0]:
        raise InputError(f"adist has length {a.shape[0]}, expected C={w.shape[0]}")
    return (h @ w.T) * a


def softmax_xent(z: np.ndarray, y: np.ndarray):
    """Mean cross-entropy of logits ``z`` against integer labels, and dL/dz."""
    logp = log_softmax(z)
    n = z.shape[0]
    rows = np.arange(n)
    value = float(-logp[rows, y].mean())
    g = np.exp(logp)
    g[rows, y] -= 1.0
    return value, g / n


def loss_adaptive(z, labels):
    """Cross-entropy on adjusted logits; the label selects its log-probability."""
    z = as_matrix(z, "logits")
    y = _labels(labels, z.shape[0], z.shape[1])
    if z.shape[0] == 0:
        raise InputError("empty batch")
    return softmax_xent(z, y)


# -- class centers ---------------------------------------------------------

@dataclass
class ClassCenters:
    centers: np.ndarray          # (C, d)
    present: np.ndarray          # (C,) bool

    def copy(self) -> "ClassCenters":
        return ClassCenters(self.centers.copy(), self.present.copy())


def init_class_centers(features, labels, num_classes: int) -> ClassCenters:
    h = as_matrix(features, "features")
    y = _labels(labels, h.shape[0], num_classes)
    counts = np.bincount(y, minlength=num_classes).astype(np.float64)
    sums = np.zeros((num_classes, h.shape[1]))
    np.add.at(sums, y, h)
    present = counts > 0
    centers = np.zeros_like(sums)
    centers[present] = sums[present] / counts[present, None]
    return ClassCenters(centers, present)


def margin_q(centers: ClassCenters, tau: float) -> float:
    """min(largest distance between two present centers, tau); 0 with < 2 present."""
    if not tau > 0:
        raise InputError("tau must be positive")
    return min(kernels.max_pairwise_distance(centers.centers, centers.present), float(tau))


def loss_center(features, labels, centers: ClassCenters, q: float):
    """Summed margin contrastive loss; returns ``(value, grad_features, grad_centers)``.

    ``q`` is a constant margin (no gradient flows into it). Absent classes are
    neither positives nor negatives.
    """
    h = as_matrix(features, "features")
    c = centers.centers
    y = _labels(labels, h.shape[0], c.shape[0])
    if q < 0:
        raise InputError("margin q must be non-negative")
    if h.shape[1] != c.shape[1]:
        raise InputError("features and centers disagree on d")
    if y.size and not np.all(centers.present[y]):
        missing = sorted(set(y[~centers.present[y]].tolist()))
        raise InputError(f"samples of classes {missing} have no center")
    value, gh, gc, _ = kernels.center_loss(h, y, c, centers.present, q)
    return value, gh, gc


# -- feature decorrelation -------------------------------------------------

def _standardize(x):
    n = x.shape[0]
    mu = x.mean(axis=0)
    xc = x - mu
    sigma = np.sqrt((xc * xc).sum(axis=0) / n)
    const = sigma < STD_EPS
    sigma = np.where(const, STD_EPS, sigma)
    return xc / sigma, sigma, const


def standardize_features(x) -> np.ndarray:
    """Column-wise (x - mean) / population std; constant columns become 0."""
    x = as_matrix(x, "features")
    if x.shape[0] < 2:
        raise InputError("standardisation needs at least 2 rows")
    return _standardize(x)[0]


def correlation_matrix(x_norm) -> np.ndarray:
    xn = as_matrix(x_norm, "standardized features")
    return xn.T @ xn / xn.shape[0]


def loss_decorrelation(cor, exclude_diagonal: bool = False):
    """Sum of squared correlation entries; returns ``(value, grad_cor)``."""
    c = as_matrix(cor, "correlation matrix")
    if c.shape[0] != c.shape[1]:
        raise InputError(f"correlation matrix must be square, got {c.shape}")
    if exclude_diagonal:
        c = c - np.diag(np.diag(c))
    return float((c * c).sum()), 2.0 * c


def decorrelation_from_features(x, exclude_diagonal: bool = False):
    """Decorrelation loss of a raw feature batch and its gradient w.r.t. the batch.

    Mean and std are differentiated through (batch-norm style backward).
    """
    x = as_matrix(x, "features")
    n = x.shape[0]
    if n < 2:
        raise InputError("decorrelation needs at least 2 rows")
    xn, sigma, const = _standardize(x)
    cor = xn.T @ xn / n
    value, g_cor = loss_decorrelation(cor, exclude_diagonal)
    g_xn = xn @ (g_cor + g_cor.T) / n
    g_x = (g_xn - g_xn.mean(axis=0) - xn * (g_xn * xn).mean(axis=0)) / sigma
    # constant columns: sigma is a fixed floor, only the mean path remains
    if np.any(const):
        g_x[:, const] = (g_xn[:, const] - g_xn[:, const].mean(axis=0)) / STD_EPS
    return value, g_x


def mean_abs_offdiagonal(features) -> float:
    cor = correlation_matrix(standardize_features(features))
    d = cor.shape[0]
    if d < 2:
        return 0.0
    off = cor[~np.eye(d, dtype=bool)]
    return float(np.abs(off).mean())


# -- combined objective ----------------------------------------------------

@dataclass(frozen=True)
class FedLFWeights:
    lam: float = 0.01
    gamma: float = 0.01
    tau: float = 100.0
    smoothing_factor: float = 0.25
    use_center: bool = True
    use_decorrelation: bool = True
    exclude_diagonal: bool = False
    # "mean" divides the summed center loss by the batch size
    center_reduction: str = "mean"
    # batches with fewer rows skip L_D: B rows give a rank <= B-1 correlation
    # estimate whose 1/sigma gradient explodes on near-degenerate columns
    min_decorrelation_batch: int = 4

    def __post_init__(self):
        if self.center_reduction not in ("sum", "mean"):
            raise InputError("center_reduction must be 'sum' or 'mean'")
        if self.min_decorrelation_batch < 2:
            raise InputError("min_decorrelation_batch must be >= 2")

    @property
    def lam_eff(self) -> float:
        return self.lam if self.use_center else 0.0

    @property
    def gamma_eff(self) -> float:
        return self.gamma if self.use_decorrelation else 0.0


@dataclass(frozen=True)
class LossBreakdown:
    l_a: float
    l_c: float
    l_d: float
    total: float
    q_used: float = 0.0

    @staticmethod
    def mean(items) -> "LossBreakdown":
        items = list(items)
        if not items:
            return LossBreakdown(float("nan"), float("nan"), float("nan"), float("nan"), float("nan"))
        a = np.array([[b.l_a, b.l_c, b.l_d, b.total, b.q_used] for b in items])
        return LossBreakdown(*(float(v) for v in a.mean(axis=0)))


def total_loss(batch, labels, params: ModelParams, centers: ClassCenters | None,
               arch: ModelArch, adist, weights: FedLFWeights, q: float | None = None):
    """``L_A + lam * L_C + gamma * L_D`` on one shared forward pass.

    Returns ``(breakdown, grads, grad_centers)``. ``q`` defaults to
    :func:`margin_q` of the current centers and is held constant for the
    gradient. Terms with zero weight are skipped entirely, and L_D is skipped
    for batches smaller than ``weights.min_decorrelation_batch``.
    """
    x = as_matrix(batch, "batch")
    feats, cache = forward_features(params, x, arch, return_cache=True)
    w = params[CLASSIFIER]
    y = _labels(labels, x.shape[0], arch.num_classes)
    a = np.asarray(adist, dtype=np.float64).reshape(-1)
    if a.shape[0] != arch.num_classes:
        raise InputError(f"adist has length {a.shape[0]}, expected {arch.num_classes}")
    if weights.lam < 0 or weights.gamma < 0:
        raise InputError("loss weights must be non-negative")

    scores = feats @ w.T
    l_a, g_z = softmax_xent(scores * a, y)
    g_scores = g_z * a
    g_feats = g_scores @ w
    g_w = g_scores.T @ feats

    l_c = 0.0
    q_used = 0.0
    g_centers = None
    lam = weights.lam_eff
    if centers is not None:
        g_centers = np.zeros_like(centers.centers)
    if lam > 0:
        if centers is None:
            raise InputError("center loss enabled but no class centers given")
        q_used = margin_q(centers, weights.tau) if q is None else float(q)
        l_c, gh, gc = loss_center(feats, y, centers, q_used)
        if weights.center_reduction == "mean":
            n = x.shape[0]
            l_c, gh, gc = l_c / n, gh / n, gc / n
        g_feats = g_feats + lam * gh
        g_centers = lam * gc

    l_d = 0.0
    gamma = weights.gamma_eff
    if gamma > 0 and x.shape[0] >= weights.min_decorrelation_batch:
        l_d, gx = decorrelation_from_features(feats, weights.exclude_diagonal)
        g_feats = g_feats + gamma * gx

    grads = backward_features(params, cache, g_feats, arch)
    grads[CLASSIFIER] = g_w
    grads = ModelParams({k: grads[k] for k in params})
    breakdown = LossBreakdown(l_a, l_c, l_d, l_a + lam * l_c + gamma * l_d, q_used)
    return breakdown, grads, g_centers
