"""Langevin iterations for composite potentials ``U = F + G_1 + ... + G_n``.

``spla_step`` takes a stochastic gradient step on ``F``, injects Gaussian
noise, then runs the realized prox chain.  ``ssla_step`` swaps the prox chain
for minimal subgradients taken at the current point, ``proxla_step`` applies
one full prox of the nonsmooth sum, and ``la_step`` ignores the nonsmooth
terms altogether.

Per step the chain's generator produces the noise draw ``xi`` first and the
Gaussian vector second.  A state may hold a single point of shape ``(d,)`` or
an ensemble of shape ``(m, d)``; ensembles share one generator and draw all
rows at once.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .prox import NonFiniteError, ProxChain

__all__ = [
    "CompositePotential",
    "ChainState",
    "SampleStore",
    "StoreConfig",
    "StepPlan",
    "Record",
    "ALGORITHMS",
    "spla_step",
    "ssla_step",
    "proxla_step",
    "la_step",
    "run",
]

ALGORITHMS = ("spla", "ssla", "proxla", "la")

_EMPTY_CHAIN = ProxChain(())


@dataclass(frozen=True)
class CompositePotential:
    """``U = F + sum_i G_i`` given through stochastic oracles.

    ``smooth_grad(x, xi)`` returns the gradient of ``f(., xi)`` (``None`` means
    ``F = 0``).  ``prox_terms(xi)`` returns the realized :class:`ProxChain`.
    ``sample_noise(rng, batch)`` draws ``xi`` for one chain (``batch=None``) or
    for ``batch`` chains at once; ``None`` means the potential is deterministic
    and no draw is made.

    ``lipschitz_bounds`` are the constants ``L_Gi`` bounding the second moment
    of each term's minimal subgradient; ``independent_terms`` says the terms
    are driven by independent components of ``xi``.
    """

    dim: int
    smooth_grad: Callable[[np.ndarray, Any], np.ndarray] | None = None
    prox_terms: Callable[[Any], ProxChain] | None = None
    sample_noise: Callable[[np.random.Generator, int | None], Any] | None = None
    L: float = 0.0
    alpha: float = 0.0
    sigma_F: float = 0.0
    value: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz_bounds: tuple[float, ...] | None = None
    independent_terms: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if min(self.L, self.alpha, self.sigma_F) < 0:
            raise ValueError("smoothness constants must be nonnegative")
        if self.L > 0 and self.alpha > self.L:
            raise ValueError(f"strong convexity {self.alpha} exceeds smoothness {self.L}")

    def draw(self, rng: np.random.Generator, batch: int | None):
        if self.sample_noise is None:
            return None
        return self.sample_noise(rng, batch)

    def grad(self, x: np.ndarray, xi) -> np.ndarray:
        if self.smooth_grad is None:
            return np.zeros_like(x)
        return np.asarray(self.smooth_grad(x, xi), dtype=np.float64)

    def chain(self, xi) -> ProxChain:
        if self.prox_terms is None:
            return _EMPTY_CHAIN
        return self.prox_terms(xi)


@dataclass
class ChainState:
    """Current iterate ``x^k``, counter ``k`` and the chain's generator.

    The generator is advanced in place by every step; ``rng_state`` gives a
    serializable snapshot and :meth:`restore` rebuilds a state from one.
    """

    x: np.ndarray
    k: int
    rng: np.random.Generator

    @classmethod
    def from_seed(cls, x0, seed: int) -> "ChainState":
        return cls(np.array(x0, dtype=np.float64), 0, np.random.default_rng(seed))

    @property
    def batch(self) -> int | None:
        return None if self.x.ndim == 1 else self.x.shape[0]

    @property
    def rng_state(self) -> dict:
        return self.rng.bit_generator.state

    @classmethod
    def restore(cls, x, k: int, rng_state: dict) -> "ChainState":
        bitgen = getattr(np.random, rng_state["bit_generator"])()
        bitgen.state = rng_state
        return cls(np.array(x, dtype=np.float64), k, np.random.Generator(bitgen))


def _finite(arr: np.ndarray, stage: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(stage)


def _forward_noise(state: ChainState, pot: CompositePotential, gamma: float):
    xi = pot.draw(state.rng, state.batch)
    z = state.x - gamma * pot.grad(state.x, xi)
    _finite(z, "gradient")
    y0 = z + math.sqrt(2.0 * gamma) * state.rng.standard_normal(state.x.shape)
    _finite(y0, "noise")
    return xi, y0


def _checked(step):
    @functools.wraps(step)
    def wrapper(state, pot, gamma, *args, **kwargs):
        if gamma <= 0:
            raise ValueError(f"step size must be positive, got {gamma}")
        try:
            return step(state, pot, gamma, *args, **kwargs)
        except NonFiniteError as exc:
            exc.iteration = state.k
            exc.args = (f"non-finite value in stage '{exc.stage}' at iteration {state.k}",)
            raise

    return wrapper


@_checked
def spla_step(state: ChainState, pot: CompositePotential, gamma: float):
    """One SPLA iteration; returns ``(next_state, y0)``."""
    xi, y0 = _forward_noise(state, pot, gamma)
    x_next, _ = pot.chain(xi).apply(y0, gamma, check_finite=True)
    return ChainState(x_next, state.k + 1, state.rng), y0


@_checked
def ssla_step(state: ChainState, pot: CompositePotential, gamma: float):
    """Subgradient variant: every minimal subgradient is taken at ``x^k``."""
    x = state.x
    xi = pot.draw(state.rng, state.batch)
    z = x - gamma * pot.grad(x, xi)
    _finite(z, "gradient")
    subgradient = pot.chain(xi).subgradient_sum(x)
    y0 = z + math.sqrt(2.0 * gamma) * state.rng.standard_normal(x.shape)
    _finite(y0, "noise")
    x_next = y0 - gamma * subgradient
    _finite(x_next, "subgradient")
    return ChainState(x_next, state.k + 1, state.rng), y0


@_checked
def proxla_step(
    state: ChainState,
    pot: CompositePotential,
    gamma: float,
    full_prox: Callable[[np.ndarray, float], np.ndarray],
):
    """Langevin step on ``F`` followed by one full prox of the nonsmooth sum."""
    _, y0 = _forward_noise(state, pot, gamma)
    x_next = np.asarray(full_prox(y0, gamma), dtype=np.float64)
    _finite(x_next, "prox 1")
    return ChainState(x_next, state.k + 1, state.rng), y0


@_checked
def la_step(state: ChainState, pot: CompositePotential, gamma: float):
    """Plain Langevin step on ``F``; the nonsmooth terms are ignored."""
    _, y0 = _forward_noise(state, pot, gamma)
    return ChainState(y0, state.k + 1, state.rng), y0


class Record(NamedTuple):
    k: int
    tag: str
    point: np.ndarray
    cpu_seconds: float


@dataclass
class SampleStore:
    """Recorded iterates, tagged ``"x"`` (for ``x^k``) or ``"y0"`` (for ``y_0^k``)."""

    thinning: int = 1
    records: list[Record] = field(default_factory=list)
    error: str | None = None
    _last: dict = field(default_factory=dict, repr=False)

    @property
    def failed(self) -> bool:
        return self.error is not None

    def add(self, k: int, tag: str, point, cpu_seconds: float = 0.0) -> None:
        last = self._last.get(tag)
        if last is not None and k <= last:
            raise ValueError(f"records for tag {tag!r} must increase in k ({k} after {last})")
        self._last[tag] = k
        self.records.append(Record(k, tag, np.array(point, dtype=np.float64), cpu_seconds))

    def _select(self, tag: str) -> list[Record]:
        return [r for r in self.records if r.tag == tag]

    def iterations(self, tag: str = "x") -> np.ndarray:
        return np.array([r.k for r in self._select(tag)], dtype=np.int64)

    def cpu_seconds(self, tag: str = "x") -> np.ndarray:
        return np.array([r.cpu_seconds for r in self._select(tag)])

    def points(self, tag: str = "x") -> np.ndarray:
        """Stacked points, shape ``(records,) + point_shape``."""
        recs = self._select(tag)
        if not recs:
            return np.empty((0,))
        return np.stack([r.point for r in recs])

    def at(self, k: int, tag: str = "x") -> np.ndarray:
        for r in self._select(tag):
            if r.k == k:
                return r.point
        raise KeyError(f"no {tag!r} record at iteration {k}")

    def pooled(self, tag: str = "y0", upto: int | None = None) -> np.ndarray:
        """All recorded points with ``k <= upto`` as rows of one ``(N, d)`` array.

        This is the uniform mixture of the recorded marginals, i.e. the law of
        the uniformly averaged iterate.
        """
        pts = [r.point for r in self._select(tag) if upto is None or r.k <= upto]
        if not pts:
            raise KeyError(f"no {tag!r} records")
        d = pts[0].shape[-1]
        return np.concatenate([p.reshape(-1, d) for p in pts])


@dataclass(frozen=True)
class StoreConfig:
    tags: tuple[str, ...] = ("x",)
    thinning: int = 1
    checkpoints: Sequence[int] | None = None
    _wanted: frozenset | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.checkpoints is not None:
            object.__setattr__(self, "_wanted", frozenset(int(k) for k in self.checkpoints))
        if self.thinning < 1:
            raise ValueError("thinning must be a positive integer")
        unknown = set(self.tags) - {"x", "y0"}
        if unknown:
            raise ValueError(f"unknown record tags {sorted(unknown)}")

    def wants(self, k: int) -> bool:
        if self._wanted is not None:
            return k in self._wanted
        return k % self.thinning == 0


@dataclass(frozen=True)
class StepPlan:
    gamma: float
    iterations: int
    regime: str = "convex"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.regime not in ("convex", "strongly_convex_w2", "strongly_convex_kl"):
            raise ValueError(f"unknown regime {self.regime!r}")

    def check(self, L: float) -> None:
        if L > 0 and self.gamma > 1.0 / L * (1 + 1e-12):
            raise ValueError(f"gamma = {self.gamma} exceeds 1/L = {1.0 / L}")


def run(
    algorithm: str,
    pot: CompositePotential,
    plan: StepPlan,
    seed: int,
    store_config: StoreConfig | None = None,
    x0=None,
    full_prox: Callable[[np.ndarray, float], np.ndarray] | None = None,
) -> SampleStore:
    """Run ``plan.iterations`` steps of ``algorithm`` from ``x0``.

    ``x0`` defaults to the origin; pass an ``(m, d)`` array to advance ``m``
    chains together.  A numerical failure stops the run and the partial store
    is returned with ``error`` set.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    if algorithm == "proxla" and full_prox is None:
        raise ValueError("proxla needs a full_prox subroutine")
    plan.check(pot.L)
    cfg = store_config or StoreConfig()
    if x0 is None:
        x0 = np.zeros(pot.dim)
    x0 = np.array(x0, dtype=np.float64)
    if x0.shape[-1] != pot.dim or x0.ndim > 2:
        raise ValueError(f"x0 of shape {x0.shape} does not match dimension {pot.dim}")

    step = {"spla": spla_step, "ssla": ssla_step, "la": la_step}.get(algorithm)
    state = ChainState.from_seed(x0, seed)
    store = SampleStore(thinning=cfg.thinning)
    start = time.process_time()
    if "x" in cfg.tags:
        store.add(0, "x", state.x, 0.0)
    for k in range(plan.iterations):
        try:
            if step is None:
                state, y0 = proxla_step(state, pot, plan.gamma, full_prox)
            else:
                state, y0 = step(state, pot, plan.gamma)
        except NonFiniteError as exc:
            store.error = str(exc)
            break
        if "y0" in cfg.tags and cfg.wants(k):
            store.add(k, "y0", y0, time.process_time() - start)
        if "x" in cfg.tags and (cfg.wants(state.k) or state.k == plan.iterations):
            store.add(state.k, "x", state.x, time.process_time() - start)
    return store
