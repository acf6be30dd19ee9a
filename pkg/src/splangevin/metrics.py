"""Sample-based estimators for the convergence diagnostics.

Sign convention: ``entropy_estimate`` returns the differential entropy
``h(mu) = -∫ log(mu) dmu``.  The functional tracked along a run is
``neg_entropy + energy`` with ``neg_entropy = -h = ∫ log(mu) dmu``, so that
it equals ``KL(mu | target)`` up to the additive constant ``-log Z``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .sampler import SampleStore

__all__ = [
    "EmpiricalMeasure",
    "DiagnosticsRecord",
    "wasserstein2_1d",
    "wasserstein2_empirical",
    "entropy_estimate",
    "coordinatewise_entropy",
    "silverman_bandwidth",
    "potential_energy_estimate",
    "kl_vs_known_density",
    "pinsker_tv_bound",
    "histogram_table",
    "histogram_tv_distance",
    "functional_trace",
]

_EXACT_KDE_MAX = 4000
_KDE_GRID = 2**14


def _as_samples(samples) -> np.ndarray:
    """Return samples as an ``(N, d)`` array; a flat array is ``N`` scalars."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim > 2:
        arr = arr.reshape(-1, arr.shape[-1])
    return arr


@dataclass(frozen=True)
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _as_samples(self.points)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (pts.shape[0],):
            raise ValueError("one weight per point is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, samples) -> "EmpiricalMeasure":
        pts = _as_samples(samples)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


def _measure(a) -> EmpiricalMeasure:
    return a if isinstance(a, EmpiricalMeasure) else EmpiricalMeasure.uniform(a)


def wasserstein2_1d(a, b) -> float:
    """Exact squared W2 between two 1-D empirical measures via the quantile coupling."""
    ma, mb = _measure(a), _measure(b)
    if ma.dim != 1 or mb.dim != 1:
        raise ValueError("wasserstein2_1d needs 1-D samples; use wasserstein2_empirical for d > 1")
    oa, ob = np.argsort(ma.points[:, 0], kind="stable"), np.argsort(mb.points[:, 0], kind="stable")
    xa, wa = ma.points[oa, 0], ma.weights[oa]
    xb, wb = mb.points[ob, 0], mb.weights[ob]
    uniform = np.all(wa == wa[0]) and np.all(wb == wb[0])
    if uniform and xa.size == xb.size:
        return float(np.mean((xa - xb) ** 2))
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    right = np.unique(np.concatenate([ca, cb]))
    left = np.concatenate([[0.0], right[:-1]])
    mid = 0.5 * (left + right)
    ia = np.minimum(np.searchsorted(ca, mid), xa.size - 1)
    ib = np.minimum(np.searchsorted(cb, mid), xb.size - 1)
    return float(np.sum((right - left) * (xa[ia] - xb[ib]) ** 2))


def wasserstein2_empirical(
    a,
    b,
    assignment_cap: int = 2000,
    n_projections: int = 64,
    mode: str = "auto",
    seed: int = 0,
) -> tuple[float, str]:
    """Squared W2 for point clouds in any dimension.

    Returns ``(value, method)``.  ``method == "exact"`` solves the assignment
    problem (equal sizes up to ``assignment_cap``).  ``method == "sliced"``
    averages 1-D squared W2 over random unit projections; that is the sliced
    distance, a lower-bound surrogate and not W2 itself.
    """
    pa, pb = _as_samples(a), _as_samples(b)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError("point clouds live in different dimensions")
    if mode not in ("auto", "exact", "sliced"):
        raise ValueError(f"unknown mode {mode!r}")
    exact = mode == "exact" or (mode == "auto" and len(pa) == len(pb) and len(pa) <= assignment_cap)
    if exact:
        if len(pa) != len(pb):
            raise ValueError(f"exact mode needs equal sizes, got {len(pa)} and {len(pb)}")
        cost = np.sum((pa[:, None, :] - pb[None, :, :]) ** 2, axis=-1)
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].mean()), "exact"
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_projections, pa.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = [wasserstein2_1d(pa @ u, pb @ u) for u in dirs]
    return float(np.mean(vals)), "sliced"


def silverman_bandwidth(x: np.ndarray) -> np.ndarray:
    """``1.06 * std * N^(-1/5)`` per column."""
    x = _as_samples(x)
    return 1.06 * np.std(x, axis=0, ddof=1) * x.shape[0] ** (-0.2)


def _kde_loo_exact(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Mean leave-one-out log density per column, exact pairwise sum."""
    n, d = x.shape
    out = np.zeros(d)
    chunk = max(1, int(2e7 // (n * d)))
    norm = np.log((n - 1) * h * math.sqrt(2.0 * math.pi))
    for start in range(0, n, chunk):
        block = x[start : start + chunk]
        z = (block[:, None, :] - x[None, :, :]) / h
        logk = -0.5 * z**2
        idx = np.arange(block.shape[0])
        logk[idx, start + idx, :] = -np.inf
        out += np.sum(logsumexp(logk, axis=1) - norm, axis=0)
    return out / n


def _kde_loo_binned(x: np.ndarray, h: float) -> float:
    """Leave-one-out mean log density for one column with a linearly binned FFT KDE."""
    n = x.size
    lo, hi = x.min() - 6 * h, x.max() + 6 * h
    m = _KDE_GRID
    delta = (hi - lo) / (m - 1)
    pos = (x - lo) / delta
    left = np.floor(pos).astype(np.int64)
    frac = pos - left
    counts = np.bincount(left, weights=1.0 - frac, minlength=m + 1)[: m + 1]
    counts += np.bincount(left + 1, weights=frac, minlength=m + 1)[: m + 1]
    counts = counts[:m]
    offsets = np.arange(-(m - 1), m) * delta
    kernel = np.exp(-0.5 * (offsets / h) ** 2) / (h * math.sqrt(2 * math.pi))
    size = 1 << int(math.ceil(math.log2(3 * m)))
    conv = np.fft.irfft(np.fft.rfft(counts, size) * np.fft.rfft(kernel, size), size)
    dens = conv[m - 1 : 2 * m - 1]
    at_x = (1.0 - frac) * dens[np.minimum(left, m - 1)] + frac * dens[np.minimum(left + 1, m - 1)]
    self_term = 1.0 / (h * math.sqrt(2 * math.pi))
    loo = (at_x - self_term) / (n - 1)
    logp = np.log(np.maximum(loo, 1e-300))
    # isolated points lose their density to cancellation; redo them exactly
    weak = np.flatnonzero(loo * (n - 1) < 1e-4 * self_term)
    for i in weak:
        z = np.delete(x, i) - x[i]
        logp[i] = logsumexp(-0.5 * (z / h) ** 2) - math.log((n - 1) * h * math.sqrt(2 * math.pi))
    return float(np.mean(logp))


def _check_spread(x: np.ndarray) -> None:
    if x.shape[0] < 2:
        raise ValueError("entropy estimation needs at least 2 samples")


def entropy_estimate(samples, method: str = "kde_gaussian", bandwidth: float | None = None, bins: int = 200) -> float:
    """Differential entropy of 1-D samples.

    ``kde_gaussian``: ``-(1/N) sum_i log p_{-i}(x_i)`` with a leave-one-out
    Gaussian KDE (Silverman bandwidth unless given).  Above a few thousand
    samples the KDE is evaluated on a linearly binned FFT grid.
    ``histogram``: plug-in entropy of bin frequencies plus ``log(bin width)``
    over ``[min - 3 std, max + 3 std]``.
    """
    x = _as_samples(samples)
    if x.shape[1] != 1:
        raise ValueError("entropy_estimate is 1-D; use coordinatewise_entropy for d > 1")
    _check_spread(x)
    if method == "kde_gaussian":
        h = np.atleast_1d(bandwidth if bandwidth is not None else silverman_bandwidth(x))
        if not h[0] > 0:
            raise ValueError("zero KDE bandwidth: all samples are identical")
        if x.shape[0] <= _EXACT_KDE_MAX:
            return float(-_kde_loo_exact(x, h)[0])
        return -_kde_loo_binned(x[:, 0], float(h[0]))
    if method == "histogram":
        col = x[:, 0]
        spread = np.std(col, ddof=1)
        counts, edges = np.histogram(col, bins=bins, range=(col.min() - 3 * spread, col.max() + 3 * spread))
        width = edges[1] - edges[0]
        if width <= 0:
            raise ValueError("all samples are identical")
        p = counts[counts > 0] / col.size
        return float(-np.sum(p * np.log(p)) + math.log(width))
    raise ValueError(f"unknown entropy method {method!r}")


def coordinatewise_entropy(samples, method: str = "kde_gaussian", bins: int = 200) -> float:
    """Sum of per-coordinate entropies: the entropy under an independence surrogate.

    Exact for product measures and an upper bound otherwise.  Used for
    graph-sized dimensions where a joint density estimate is hopeless.
    """
    x = _as_samples(samples)
    _check_spread(x)
    if method == "kde_gaussian" and x.shape[0] <= _EXACT_KDE_MAX:
        h = silverman_bandwidth(x)
        if np.any(h <= 0):
            raise ValueError("zero KDE bandwidth in at least one coordinate")
        return float(-np.sum(_kde_loo_exact(x, h)))
    return float(sum(entropy_estimate(x[:, j], method=method, bins=bins) for j in range(x.shape[1])))


def potential_energy_estimate(samples, U: Callable[[np.ndarray], np.ndarray]) -> float:
    """Sample mean of ``U``; ``U`` takes an ``(N, d)`` array and returns ``N`` values."""
    x = _as_samples(samples)
    vals = np.asarray(U(x), dtype=np.float64).reshape(-1)
    if vals.shape != (x.shape[0],):
        raise ValueError(f"U returned shape {vals.shape}, expected ({x.shape[0]},)")
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise ValueError(f"U is not finite at sample index {bad[0]}")
    return float(vals.mean())


def kl_vs_known_density(
    samples,
    log_density: Callable[[np.ndarray], np.ndarray],
    entropy_method: str = "kde_gaussian",
    bandwidth: float | None = None,
) -> float:
    """``KL(samples | target)`` as ``-h - mean(log target(x_i))``.

    ``log_density`` must be normalized.  The estimate can dip below zero
    through estimator noise; it is not clamped.
    """
    x = _as_samples(samples)
    h = entropy_estimate(x, method=entropy_method, bandwidth=bandwidth)
    logp = np.asarray(log_density(x), dtype=np.float64).reshape(-1)
    return float(-h - logp.mean())


def kl_from_functional(energy: float, neg_entropy: float, target_energy: float, target_entropy: float) -> float:
    """``KL = (E_U + H)(mu) - (E_U + H)(target)`` given the target's differential entropy."""
    return (energy + neg_entropy) - (target_energy - target_entropy)


def pinsker_tv_bound(kl: float) -> float:
    """``sqrt(KL / 2)``; negative inputs (estimator noise) are clamped to 0."""
    if kl < 0:
        warnings.warn(f"negative KL estimate {kl:.3g} clamped to 0", RuntimeWarning, stacklevel=2)
        kl = 0.0
    return math.sqrt(kl / 2.0)


def histogram_table(samples, bins: int, value_range: tuple[float, float], density: Callable | None = None) -> np.ndarray:
    """Rows ``(bin_left, bin_right, frequency, true_density_at_center)``.

    ``frequency`` is normalized as a density (count / (N * width)) so it is
    directly comparable with the true density column.
    """
    x = _as_samples(samples)[:, 0]
    counts, edges = np.histogram(x, bins=bins, range=value_range)
    width = np.diff(edges)
    freq = counts / (x.size * width)
    centers = 0.5 * (edges[:-1] + edges[1:])
    truth = density(centers) if density is not None else np.full(bins, np.nan)
    return np.column_stack([edges[:-1], edges[1:], freq, truth])


def histogram_tv_distance(samples, cdf: Callable[[np.ndarray], np.ndarray], bins: int = 200, value_range=(-10.0, 10.0)) -> float:
    """Total-variation distance between binned samples and the binned target law.

    Mass outside ``value_range`` counts as one extra bin on each side.
    """
    x = _as_samples(samples)[:, 0]
    edges = np.linspace(value_range[0], value_range[1], bins + 1)
    counts = np.histogram(x, bins=edges)[0]
    below, above = np.sum(x < edges[0]), np.sum(x > edges[-1])
    emp = np.concatenate([[below], counts, [above]]) / x.size
    c = cdf(edges)
    true = np.concatenate([[c[0]], np.diff(c), [1.0 - c[-1]]])
    return float(0.5 * np.sum(np.abs(emp - true)))


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Diagnostics at one checkpoint.  ``functional`` is ``neg_entropy + energy``."""

    iteration: int
    neg_entropy: float
    energy: float
    w2: float | None = None
    kl: float | None = None
    cpu_seconds: float = 0.0
    entropy_method: str = "kde_gaussian"
    surrogate: bool = False

    @property
    def functional(self) -> float:
        return self.neg_entropy + self.energy


def functional_trace(
    store: SampleStore,
    U: Callable[[np.ndarray], np.ndarray],
    replicates: int = 5,
    tag: str = "x",
    entropy_method: str = "kde_gaussian",
    min_iteration: int = 0,
) -> list[DiagnosticsRecord]:
    """Estimate ``H + E_U`` at each recorded iteration from ``replicates`` chains.

    The store must come from an ensemble run whose points have shape
    ``(m, d)`` with ``m >= replicates``; the first ``replicates`` rows are used.
    For ``d > 1`` the entropy is the coordinatewise surrogate.  Checkpoints
    before ``min_iteration`` are skipped (a common deterministic start has
    no density).
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    out = []
    for k, cpu, point in zip(store.iterations(tag), store.cpu_seconds(tag), store.points(tag)):
        if k < min_iteration:
            continue
        chains = np.atleast_2d(point)
        if chains.shape[0] < replicates:
            raise ValueError(f"{chains.shape[0]} chains recorded but {replicates} replicates requested")
        sample = chains[:replicates]
        surrogate = sample.shape[1] > 1
        if surrogate:
            h = coordinatewise_entropy(sample, method=entropy_method)
        else:
            h = entropy_estimate(sample, method=entropy_method)
        out.append(
            DiagnosticsRecord(
                iteration=int(k),
                neg_entropy=-h,
                energy=potential_energy_estimate(sample, U),
                cpu_seconds=float(cpu),
                entropy_method=entropy_method,
                surrogate=surrogate,
            )
        )
    return out
