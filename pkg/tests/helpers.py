"""Shared generators for property tests."""

from __future__ import annotations

import numpy as np

from splangevin import prox as P


class ZeroNormals:
    """Stand-in generator whose Gaussian draws are all zero."""

    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)


def random_term(rng: np.random.Generator, dim: int) -> P.ProxFunction:
    """A random catalogue term acting on ``dim`` coordinates."""
    kinds = ["zero", "abs", "shifted", "quadratic"] + (["edge"] if dim >= 2 else [])
    kind = kinds[rng.integers(len(kinds))]
    if kind == "zero":
        return P.zero()
    if kind == "abs":
        return P.absolute(weight=float(rng.uniform(0.1, 3.0)), dim=dim)
    if kind == "shifted":
        return P.shifted_absolute(float(rng.normal()), dim=dim)
    if kind == "quadratic":
        return P.quadratic(center=rng.normal(size=dim), variance=float(rng.uniform(0.2, 4.0)))
    v, w = rng.choice(dim, size=2, replace=False)
    return P.edge_term(int(v), int(w), weight=float(rng.uniform(0.1, 3.0)))


def random_point(rng: np.random.Generator, dim: int) -> np.ndarray:
    x = rng.normal(scale=3.0, size=dim)
    # exercise the kinks: sometimes land exactly on zero or on a tie
    if rng.random() < 0.1:
        x[rng.integers(dim)] = 0.0
    if dim >= 2 and rng.random() < 0.1:
        x[1] = x[0]
    return x
