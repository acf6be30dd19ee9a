"""Step-size rules, iteration counts and averaging indices for the SPLA bounds.

All rules share the noise constant ``K = 2 sigma_F^2 + 2 L d + C``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .sampler import StepPlan

__all__ = [
    "UnsupportedConstantError",
    "noise_constant",
    "compute_C",
    "plan_convex",
    "plan_strongly_convex",
    "uniform_index",
    "geometric_weights",
    "geometric_index",
]


class UnsupportedConstantError(ValueError):
    """The bound constant has no closed form for the requested term structure."""


def compute_C(lipschitz_bounds: Sequence[float | None], independent: bool = False) -> float:
    """Constant ``C`` contributed by the nonsmooth terms.

    One term gives ``L_G1^2``.  Two terms, or any number of terms driven by
    independent noise components, give ``n * sum_i L_Gi^2``.  Three or more
    terms sharing one noise draw have no closed form and are rejected.
    """
    bounds = list(lipschitz_bounds)
    if any(b is None for b in bounds):
        raise ValueError("every term needs a lipschitz_bound to compute C")
    n = len(bounds)
    squares = sum(float(b) ** 2 for b in bounds)
    if n <= 1:
        return squares
    if n == 2 or independent:
        return n * squares
    raise UnsupportedConstantError(
        f"C is only known in closed form for n <= 2 or independent terms (got n = {n})"
    )


def noise_constant(sigma_F: float, L: float, d: int, C: float) -> float:
    return 2.0 * sigma_F**2 + 2.0 * L * d + C


def _inv(L: float) -> float:
    return math.inf if L == 0 else 1.0 / L


def plan_convex(eps: float, L: float, sigma_F: float, d: int, C: float, w0_sq: float = 1.0) -> StepPlan:
    """Step size and iteration count for ``KL(averaged iterate) <= eps`` with convex ``F``.

    ``w0_sq`` is the caller's bound on the squared Wasserstein distance
    between the initial law and the target.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    K = noise_constant(sigma_F, L, d, C)
    gamma = min(_inv(L), eps / K if K > 0 else math.inf)
    if math.isinf(gamma):
        raise ValueError("all constants vanish; the step size is unbounded")
    iterations = math.ceil(max(L / eps, K / eps**2) * w0_sq)
    return StepPlan(gamma=gamma, iterations=max(iterations, 1), regime="convex")


def plan_strongly_convex(
    eps: float,
    L: float,
    alpha: float,
    sigma_F: float,
    d: int,
    C: float,
    target: str = "w2",
    w0_sq: float = 1.0,
) -> StepPlan:
    """Plans for strongly convex ``F``.

    ``target="w2"`` aims at ``W^2(law of x^k, target) <= eps``;
    ``target="kl"`` at ``KL(geometrically averaged iterate) <= alpha * eps``.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    K = noise_constant(sigma_F, L, d, C)
    if target == "w2":
        gamma = min(_inv(L), eps * alpha / (2.0 * K) if K > 0 else math.inf)
        rate = max(L / alpha, 2.0 * K / (eps * alpha**2))
        log_term = math.log(2.0 * w0_sq / eps) if w0_sq > 0 else 0.0
        regime = "strongly_convex_w2"
    elif target == "kl":
        gamma = min(_inv(L), eps * alpha / K if K > 0 else math.inf)
        rate = max(L / alpha, K / (eps * alpha**2))
        log_term = math.log(2.0 * max(1.0, w0_sq / eps))
        regime = "strongly_convex_kl"
    else:
        raise ValueError(f"target must be 'w2' or 'kl', got {target!r}")
    if math.isinf(gamma):
        raise ValueError("all constants vanish; the step size is unbounded")
    iterations = math.ceil(rate * max(log_term, 0.0))
    return StepPlan(gamma=gamma, iterations=max(iterations, 1), regime=regime)


def uniform_index(k: int, rng: np.random.Generator) -> int:
    """Index uniform on ``{0, ..., k}``; pass a generator separate from the chain's."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return int(rng.integers(0, k + 1))


def geometric_weights(k: int, gamma: float, alpha: float) -> np.ndarray:
    """Normalized weights ``P(j = r) ∝ (1 - gamma alpha)^(-r)`` for ``r = 0..k``."""
    rate = gamma * alpha
    if not 0.0 < rate < 1.0:
        raise ValueError(f"gamma * alpha must lie in (0, 1), got {rate}")
    # relative to the largest weight (r = k) so that large k cannot overflow
    log_w = (k - np.arange(k + 1)) * math.log1p(-rate)
    w = np.exp(log_w)
    return w / w.sum()


def geometric_index(k: int, gamma: float, alpha: float, rng: np.random.Generator) -> int:
    if k < 0:
        raise ValueError("k must be nonnegative")
    return int(rng.choice(k + 1, p=geometric_weights(k, gamma, alpha)))
