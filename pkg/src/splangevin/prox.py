"""Proximal operators and the convex-analysis identities built on them.

Every point is a float64 array whose last axis holds the coordinates, so a
single point has shape ``(d,)`` and a batch of independent chains has shape
``(m, d)``.  Functions of a point reduce over the last axis only, which lets
the same term act on one chain or on a whole ensemble.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ProxFunction",
    "ProxChain",
    "OracleError",
    "NonFiniteError",
    "soft_threshold",
    "prox_abs_shifted",
    "edge_prox",
    "moreau_envelope",
    "yosida",
    "apply_prox_chain",
    "numerical_prox_oracle",
    "zero",
    "absolute",
    "shifted_absolute",
    "quadratic",
    "edge_term",
]


class OracleError(RuntimeError):
    """Raised when the brute-force prox oracle does not converge."""


class NonFiniteError(FloatingPointError):
    """A sampler stage produced a NaN or infinite coordinate."""

    def __init__(self, stage: str, iteration: int | None = None):
        self.stage = stage
        self.iteration = iteration
        where = "" if iteration is None else f" at iteration {iteration}"
        super().__init__(f"non-finite value in stage '{stage}'{where}")


def soft_threshold(y, t):
    """Prox of ``t * |.|``, elementwise: ``sign(y) * max(|y| - t, 0)``."""
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


def prox_abs_shifted(y, gamma, s):
    """Prox of ``gamma * (|u| + u * s)`` at ``y``."""
    return soft_threshold(y - gamma * s, gamma)


def _check_edge(x: np.ndarray, v, w) -> None:
    d = x.shape[-1]
    v_arr, w_arr = np.asarray(v), np.asarray(w)
    if np.any(v_arr == w_arr):
        raise ValueError(f"degenerate edge: v == w ({v!r})")
    for idx in (v_arr, w_arr):
        if np.any(idx < 0) or np.any(idx >= d):
            raise IndexError(f"vertex index {idx!r} out of range for dimension {d}")


def edge_prox(x, v, w, t) -> np.ndarray:
    """Prox of ``t * |u(v) - u(w)|``; only coordinates ``v`` and ``w`` move.

    The two coordinates are pulled together by ``min(t, |d| / 2)`` where
    ``d = x(v) - x(w)``.  For a batch ``x`` of shape ``(m, d)``, ``v`` and
    ``w`` may be scalars or per-row index arrays of shape ``(m,)``.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_edge(x, v, w)
    out = x.copy()
    if x.ndim == 1:
        diff = x[v] - x[w]
        delta = np.sign(diff) * min(t, abs(diff) / 2.0)
        out[v] -= delta
        out[w] += delta
        return out
    rows = np.arange(x.shape[0])
    diff = x[rows, v] - x[rows, w]
    delta = np.sign(diff) * np.minimum(t, np.abs(diff) / 2.0)
    out[rows, v] -= delta
    out[rows, w] += delta
    return out


@dataclass(frozen=True)
class ProxFunction:
    """A convex term ``g`` with its prox, minimal subgradient and bound.

    ``lipschitz_bound``, when known, bounds ``|min_subgradient(x)|`` for
    every ``x``; it feeds the constant of the non-asymptotic bounds.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    prox: Callable[[np.ndarray, float], np.ndarray]
    min_subgradient: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float | None = None
    name: str = "g"

    def __call__(self, x):
        return self.eval(x)


def moreau_envelope(g: ProxFunction, x, gamma: float):
    """Value of the Moreau envelope ``g^gamma`` at ``x``, evaluated at the prox point."""
    x = np.asarray(x, dtype=np.float64)
    p = g.prox(x, gamma)
    return np.sum((p - x) ** 2, axis=-1) / (2.0 * gamma) + g.eval(p)


def yosida(g: ProxFunction, x, gamma: float) -> np.ndarray:
    """Yosida approximation ``(x - prox(x, gamma)) / gamma``, the gradient of the envelope."""
    x = np.asarray(x, dtype=np.float64)
    return (x - g.prox(x, gamma)) / gamma


@dataclass(frozen=True)
class ProxChain:
    """Ordered terms applied one prox after another, as in one sampler step."""

    terms: Sequence[ProxFunction] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.terms)

    def apply(self, y0, gamma: float, keep_intermediates: bool = False, check_finite: bool = False):
        y = np.asarray(y0, dtype=np.float64)
        path = []
        for i, term in enumerate(self.terms, start=1):
            y = term.prox(y, gamma)
            if check_finite and not np.all(np.isfinite(y)):
                raise NonFiniteError(f"prox {i}")
            if keep_intermediates:
                path.append(y)
        return y, path

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros(x.shape[:-1])
        for term in self.terms:
            total = total + term.eval(x)
        return total

    def subgradient_sum(self, x) -> np.ndarray:
        """Sum of the minimal subgradients of every term, all taken at ``x``."""
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros_like(x)
        for term in self.terms:
            total += term.min_subgradient(x)
        return total


def apply_prox_chain(chain: ProxChain, y0, gamma: float):
    """Run ``y_i = prox_{gamma g_i}(y_{i-1})`` and return ``(y_n, [y_1, ..., y_n])``."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    y, path = chain.apply(y0, gamma, keep_intermediates=True)
    return y, path


# --- catalogue -------------------------------------------------------------


def zero() -> ProxFunction:
    return ProxFunction(
        eval=lambda x: np.zeros(np.shape(x)[:-1]),
        prox=lambda x, gamma: np.array(x, dtype=np.float64),
        min_subgradient=lambda x: np.zeros(np.shape(x)),
        lipschitz_bound=0.0,
        name="zero",
    )


def absolute(weight: float = 1.0, dim: int = 1) -> ProxFunction:
    """``weight * ||x||_1``; the minimal section at 0 is 0."""
    return ProxFunction(
        eval=lambda x: weight * np.sum(np.abs(x), axis=-1),
        prox=lambda x, gamma: soft_threshold(np.asarray(x, dtype=np.float64), gamma * weight),
        min_subgradient=lambda x: weight * np.sign(x),
        lipschitz_bound=weight * math.sqrt(dim),
        name="abs",
    )


def shifted_absolute(s, dim: int = 1) -> ProxFunction:
    """``sum |x_j| + s * sum x_j``, one realization of the Laplace-toy term.

    ``s`` broadcasts against the point, so a batch may carry one shift per row
    as an array of shape ``(m, 1)``.
    """
    s = np.asarray(s, dtype=np.float64)

    def min_subgradient(x):
        x = np.asarray(x, dtype=np.float64)
        # at x = 0 the subdifferential is [s - 1, s + 1]; project 0 onto it
        at_kink = np.clip(0.0, s - 1.0, s + 1.0)
        return np.where(x == 0.0, at_kink, np.sign(x) + s)

    return ProxFunction(
        eval=lambda x: np.sum(np.abs(x) + np.asarray(x) * s, axis=-1),
        prox=lambda x, gamma: prox_abs_shifted(np.asarray(x, dtype=np.float64), gamma, s),
        min_subgradient=min_subgradient,
        lipschitz_bound=float(np.max(1.0 + np.abs(s))) * math.sqrt(dim),
        name="shifted_abs",
    )


def quadratic(center=0.0, variance: float = 1.0) -> ProxFunction:
    """``||x - center||^2 / (2 variance)``."""
    if variance <= 0:
        raise ValueError("variance must be positive")
    c = np.asarray(center, dtype=np.float64)
    return ProxFunction(
        eval=lambda x: np.sum((np.asarray(x) - c) ** 2, axis=-1) / (2.0 * variance),
        prox=lambda x, gamma: (variance * np.asarray(x, dtype=np.float64) + gamma * c) / (variance + gamma),
        min_subgradient=lambda x: (np.asarray(x, dtype=np.float64) - c) / variance,
        lipschitz_bound=None,
        name="quadratic",
    )


def edge_term(v, w, weight: float = 1.0) -> ProxFunction:
    """``weight * |x(v) - x(w)|`` for one edge (or one edge per batch row)."""
    if weight < 0:
        raise ValueError("edge weight must be nonnegative")

    def value(x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return weight * abs(x[v] - x[w])
        rows = np.arange(x.shape[0])
        return weight * np.abs(x[rows, v] - x[rows, w])

    def min_subgradient(x):
        x = np.asarray(x, dtype=np.float64)
        _check_edge(x, v, w)
        out = np.zeros_like(x)
        if x.ndim == 1:
            sgn = np.sign(x[v] - x[w])
            out[v] += weight * sgn
            out[w] -= weight * sgn
            return out
        rows = np.arange(x.shape[0])
        sgn = np.sign(x[rows, v] - x[rows, w])
        out[rows, v] += weight * sgn
        out[rows, w] -= weight * sgn
        return out

    return ProxFunction(
        eval=value,
        prox=lambda x, gamma: edge_prox(x, v, w, gamma * weight),
        min_subgradient=min_subgradient,
        lipschitz_bound=math.sqrt(2.0) * weight,
        name="edge",
    )


# --- brute-force oracle ----------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _line_minimize(phi: Callable[[float], float], scale: float, tol: float) -> float:
    """Minimize a convex 1-D function; the bracket grows until it holds the minimizer."""
    half = scale
    for _ in range(60):
        lo, hi = -half, half
        a = hi - _GOLDEN * (hi - lo)
        b = lo + _GOLDEN * (hi - lo)
        fa, fb = phi(a), phi(b)
        for _ in range(200):
            if hi - lo < tol:
                break
            if fa <= fb:
                hi, b, fb = b, a, fa
                a = hi - _GOLDEN * (hi - lo)
                fa = phi(a)
            else:
                lo, a, fa = a, b, fb
                b = lo + _GOLDEN * (hi - lo)
                fb = phi(b)
        t = 0.5 * (lo + hi)
        if abs(t) < half - 2 * tol:
            break
        half *= 4.0
    else:
        raise OracleError("line search bracket kept growing")
    # Golden section only resolves the minimizer to ~sqrt(machine eps); on a
    # locally quadratic piece a three-point parabola fit does much better.
    h = max(1e3 * tol, 1e-6 * scale)
    f0, fm, fp = phi(t), phi(t - h), phi(t + h)
    curv = fp - 2.0 * f0 + fm
    if curv > 0:
        cand = t - h * (fp - fm) / (2.0 * curv)
        if abs(cand - t) <= h and phi(cand) <= f0:
            t, f0 = cand, phi(cand)
    # the bracket never samples 0 itself; at a kink "stay" can beat every interior point
    return t if f0 < phi(0.0) else 0.0


def numerical_prox_oracle(
    g,
    x,
    gamma: float,
    tol: float = 1e-8,
    max_sweeps: int = 500,
) -> np.ndarray:
    """Minimize ``g(u) + |u - x|^2 / (2 gamma)`` by exact line searches.

    Test oracle for dimension <= 4.  Each sweep line-minimizes along every
    direction in ``{-1, 0, 1}^d`` (up to sign): the coordinate axes plus the
    diagonals along which coupled kinks such as ``|u_i - u_j|`` can be
    traversed.  ``g`` is a plain callable or a :class:`ProxFunction`.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = x.size
    if d > 4:
        raise ValueError(f"oracle supports dimension <= 4, got {d}")
    if gamma <= 0 or tol <= 0:
        raise ValueError("gamma and tol must be positive")
    if isinstance(g, ProxFunction):
        fun = g.eval
        slope = float(np.linalg.norm(g.min_subgradient(x)))
    else:
        fun = g
        slope = 0.0
    scale = 10.0 * gamma * (1.0 + slope)

    def objective(u):
        return float(fun(u)) + float(np.dot(u - x, u - x)) / (2.0 * gamma)

    directions = []
    for combo in itertools.product((-1.0, 0.0, 1.0), repeat=d):
        vec = np.array(combo)
        nz = np.flatnonzero(vec)
        if nz.size and vec[nz[0]] > 0:
            directions.append(vec / np.linalg.norm(vec))
    # axes last, so a separable smooth objective is solved exactly within one sweep
    directions.sort(key=lambda vec: np.count_nonzero(vec) == 1)

    u = x.copy()
    best = objective(u)
    # later sweeps only need to search near the previous move along each direction
    spans = [scale] * len(directions)
    stalls = 0
    for _ in range(max_sweeps):
        moved = 0.0
        start = u
        for i, direction in enumerate(directions):
            t = _line_minimize(lambda s: objective(u + s * direction), spans[i], tol * 0.1)
            u = u + t * direction
            moved = max(moved, abs(t))
            spans[i] = max(4.0 * abs(t), 100.0 * tol)
        # extrapolate along the net displacement of the sweep; cuts the zig-zag of cyclic searches
        shift = u - start
        length = float(np.linalg.norm(shift))
        if length > 0:
            direction = shift / length
            t = _line_minimize(lambda s: objective(u + s * direction), 4.0 * length, tol * 0.1)
            u = u + t * direction
            moved = max(moved, abs(t))
        value = objective(u)
        # below ~sqrt(eps) moves stop changing the objective in floating point
        stalls = stalls + 1 if best - value <= 8 * np.finfo(float).eps * max(1.0, abs(value)) else 0
        best = min(best, value)
        if moved < tol or (stalls >= 3 and moved < 10 * tol):
            return u
    raise OracleError(f"no convergence after {max_sweeps} sweeps (last move {moved:.3e})")
