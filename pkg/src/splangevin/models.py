"""Ready-made potentials for the one-dimensional experiments."""

from __future__ import annotations

import math

import numpy as np

from .prox import ProxChain, shifted_absolute
from .sampler import CompositePotential

__all__ = [
    "laplace_toy_potential",
    "laplace_log_density",
    "laplace_quantiles",
    "gaussian_potential",
    "gaussian_log_density",
    "pure_diffusion_potential",
    "LAPLACE_ENTROPY",
    "GAUSSIAN_ENTROPY",
]

LAPLACE_ENTROPY = 1.0 + math.log(2.0)
GAUSSIAN_ENTROPY = 0.5 * math.log(2.0 * math.pi * math.e)


def _laplace_noise(rng: np.random.Generator, batch: int | None):
    if batch is None:
        return rng.standard_normal()
    return rng.standard_normal((batch, 1))


def laplace_toy_potential() -> CompositePotential:
    """``U(x) = |x| = E(|x| + x xi)`` with standard Gaussian ``xi``; target ``exp(-|x|) / 2``.

    ``F = 0`` and one stochastic term, so ``C = L_G1^2 = E(1 + xi)^2 = 2``.
    """
    return CompositePotential(
        dim=1,
        prox_terms=lambda s: ProxChain((shifted_absolute(s),)),
        sample_noise=_laplace_noise,
        value=lambda x: np.sum(np.abs(x), axis=-1),
        lipschitz_bounds=(math.sqrt(2.0),),
    )


def laplace_log_density(x):
    return -np.abs(np.asarray(x, dtype=np.float64)).reshape(len(x), -1).sum(axis=-1) - math.log(2.0)


def laplace_quantiles(n: int) -> np.ndarray:
    """Midpoint quantiles of the standard Laplace law, a deterministic stand-in sample."""
    u = (np.arange(n) + 0.5) / n
    return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))


def gaussian_potential(dim: int = 1, center=0.0, variance: float = 1.0) -> CompositePotential:
    """Smooth-only potential ``|x - center|^2 / (2 variance)`` with exact gradients."""
    c = np.asarray(center, dtype=np.float64)
    return CompositePotential(
        dim=dim,
        smooth_grad=lambda x, _xi: (x - c) / variance,
        L=1.0 / variance,
        alpha=1.0 / variance,
        value=lambda x: np.sum((np.asarray(x) - c) ** 2, axis=-1) / (2.0 * variance),
    )


def gaussian_log_density(center: float = 0.0, variance: float = 1.0):
    def log_density(x):
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        return np.sum(-((x - center) ** 2) / (2 * variance) - 0.5 * math.log(2 * math.pi * variance), axis=-1)

    return log_density


def pure_diffusion_potential(dim: int = 1) -> CompositePotential:
    """``U = 0``: every algorithm reduces to a Gaussian random walk."""
    return CompositePotential(dim=dim, value=lambda x: np.zeros(np.shape(x)[:-1]))
