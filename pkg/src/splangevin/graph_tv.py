"""Graph trend filtering: graphs, total variation, edge-batch potentials and the full TV prox."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .prox import NonFiniteError, edge_term
from .sampler import ALGORITHMS, CompositePotential, SampleStore, StepPlan, StoreConfig, run

__all__ = [
    "Graph",
    "GtfProblem",
    "EdgeProxChain",
    "ProxConvergenceError",
    "load_snap_edge_list",
    "write_vertex_map",
    "make_grid_graph",
    "tv_energy",
    "balanced_lambda",
    "gtf_potential",
    "full_tv_prox_dual",
    "run_gtf",
]


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices ``0..num_vertices-1``.

    ``edges`` is an ``(E, 2)`` integer array with ``v < w`` in every row and no
    repeated rows.  ``vertex_ids`` maps dense indices back to the ids of the
    source file, when there was one.
    """

    num_vertices: int
    edges: np.ndarray
    vertex_ids: np.ndarray | None = None
    dropped_self_loops: int = 0
    dropped_duplicates: int = 0

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", edges)
        if self.num_vertices < 1:
            raise ValueError("a graph needs at least one vertex")
        if edges.size:
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValueError("edges must satisfy v < w (no self-loops)")
            if edges.min() < 0 or edges.max() >= self.num_vertices:
                raise ValueError("edge endpoint out of range")
            if np.unique(edges, axis=0).shape[0] != edges.shape[0]:
                raise ValueError("duplicate edges")

    @classmethod
    def from_pairs(cls, num_vertices: int, pairs, **kwargs) -> "Graph":
        """Build from arbitrary pairs, dropping self-loops and duplicates."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        loops = pairs[:, 0] == pairs[:, 1]
        kept = np.sort(pairs[~loops], axis=1)
        unique = np.unique(kept, axis=0)
        return cls(
            num_vertices,
            unique,
            dropped_self_loops=int(loops.sum()),
            dropped_duplicates=int(kept.shape[0] - unique.shape[0]),
            **kwargs,
        )

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_vertices)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.num_edges else 0

    @cached_property
    def adjacency(self) -> list[np.ndarray]:
        both = np.concatenate([self.edges, self.edges[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        splits = np.searchsorted(both[:, 0], np.arange(1, self.num_vertices))
        return np.split(both[:, 1], splits)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Signed ``E x V`` operator ``D`` with ``(D x)_e = x(v) - x(w)``."""
        e = self.num_edges
        rows = np.repeat(np.arange(e), 2)
        cols = self.edges.ravel()
        vals = np.tile([1.0, -1.0], e)
        return sp.csr_matrix((vals, (rows, cols)), shape=(e, self.num_vertices))


def load_snap_edge_list(path) -> Graph:
    """Read a SNAP edge list: one whitespace-separated id pair per line, ``#`` comments.

    Ids are remapped to dense indices in increasing id order; self-loops and
    repeated (including reversed) pairs are dropped and counted on the graph.
    """
    path = Path(path)
    pairs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two vertex ids, got {text!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: vertex ids must be integers, got {text!r}") from None
    if not pairs:
        raise ValueError(f"{path}: no edges found")
    raw = np.array(pairs, dtype=np.int64)
    loops = raw[:, 0] == raw[:, 1]
    if loops.all():
        raise ValueError(f"{path}: only self-loops found")
    ids, dense = np.unique(raw[~loops], return_inverse=True)
    dense = dense.reshape(-1, 2)
    graph = Graph.from_pairs(ids.size, dense, vertex_ids=ids)
    return replace(graph, dropped_self_loops=int(loops.sum()))


def write_vertex_map(graph: Graph, path) -> None:
    ids = graph.vertex_ids if graph.vertex_ids is not None else np.arange(graph.num_vertices)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dense_index", "original_id"])
        writer.writerows(zip(range(graph.num_vertices), ids.tolist()))


def make_grid_graph(rows: int, cols: int) -> Graph:
    """4-neighbour lattice; vertex ``r * cols + c``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"grid dimensions must be positive, got {rows}x{cols}")
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    edges = np.concatenate([horiz, vert])
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return Graph(rows * cols, edges)


def tv_energy(x, graph: Graph, lam: float = 1.0):
    """``lam * sum over edges |x(v) - x(w)|``; batches reduce over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != graph.num_vertices:
        raise ValueError(f"signal has {x.shape[-1]} entries, graph has {graph.num_vertices} vertices")
    v, w = graph.edges[:, 0], graph.edges[:, 1]
    return lam * np.sum(np.abs(x[..., v] - x[..., w]), axis=-1)


@dataclass(frozen=True)
class GtfProblem:
    """Posterior ``exp(-|x - Y|^2 / (2 sigma^2) - lam * TV(x))`` sampled with edge batches."""

    graph: Graph
    Y: np.ndarray
    sigma: float = 1.0
    lam: float = 1.0
    n_batch: int = 400

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.float64)
        object.__setattr__(self, "Y", Y)
        if Y.shape != (self.graph.num_vertices,):
            raise ValueError(f"Y has shape {Y.shape}, expected ({self.graph.num_vertices},)")
        if not (self.sigma > 0 and self.lam > 0):
            raise ValueError("sigma and lam must be positive")
        if self.n_batch < 1:
            raise ValueError("n_batch must be positive")
        if self.graph.num_edges == 0:
            raise ValueError("graph has no edges")

    @property
    def edge_weight(self) -> float:
        return self.lam * self.graph.num_edges / self.n_batch

    def potential_value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.sum((x - self.Y) ** 2, axis=-1) / (2 * self.sigma**2) + tv_energy(x, self.graph, self.lam)


def balanced_lambda(Y, graph: Graph, sigma: float = 1.0) -> float:
    """``lam = |Y|^2 / (2 sigma^2 TV(Y))``, putting likelihood and TV on the same scale."""
    tv = float(tv_energy(Y, graph))
    if tv == 0:
        raise ValueError("Y is constant on every edge; cannot balance lambda")
    return float(np.dot(Y, Y)) / (2 * sigma**2 * tv)


class EdgeProxChain:
    """A realized batch of edge terms ``weight * |x(v_i) - x(w_i)|``, applied in order.

    ``v`` and ``w`` have shape ``(n,)`` for one chain or ``(m, n)`` for an
    ensemble (row ``r`` drives chain ``r``).
    """

    def __init__(self, v, w, weight: float, dim: int):
        self.v = np.asarray(v, dtype=np.int64)
        self.w = np.asarray(w, dtype=np.int64)
        self.weight = float(weight)
        self.dim = dim

    def __len__(self) -> int:
        return self.v.shape[-1]

    @property
    def terms(self):
        if self.v.ndim == 1:
            return tuple(edge_term(int(a), int(b), self.weight) for a, b in zip(self.v, self.w))
        return tuple(edge_term(self.v[:, i], self.w[:, i], self.weight) for i in range(len(self)))

    @staticmethod
    def _sweep(values: list, vs: list, ws: list, t: float) -> None:
        for a, b in zip(vs, ws):
            d = values[a] - values[b]
            if d > 0:
                delta = t if t < 0.5 * d else 0.5 * d
            elif d < 0:
                delta = -t if t < -0.5 * d else 0.5 * d
            else:
                continue
            values[a] -= delta
            values[b] += delta

    def apply(self, y0, gamma: float, keep_intermediates: bool = False, check_finite: bool = False):
        y = np.array(y0, dtype=np.float64)
        t = gamma * self.weight
        if keep_intermediates:
            path = []
            for term in self.terms:
                y = term.prox(y, gamma)
                path.append(y)
            return y, path
        if y.ndim == 1:
            vals = y.tolist()
            self._sweep(vals, self.v.tolist(), self.w.tolist(), t)
            y = np.array(vals)
        else:
            for r in range(y.shape[0]):
                vals = y[r].tolist()
                self._sweep(vals, self.v[r].tolist(), self.w[r].tolist(), t)
                y[r] = vals
        if check_finite and not np.all(np.isfinite(y)):
            raise NonFiniteError("prox chain")
        return y, []

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.weight * np.sum(np.abs(x[self.v] - x[self.w]))
        rows = np.arange(x.shape[0])[:, None]
        return self.weight * np.sum(np.abs(x[rows, self.v] - x[rows, self.w]), axis=-1)

    def subgradient_sum(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            sgn = self.weight * np.sign(x[self.v] - x[self.w])
            return np.bincount(self.v, sgn, self.dim) - np.bincount(self.w, sgn, self.dim)
        m = x.shape[0]
        rows = np.arange(m)[:, None]
        sgn = (self.weight * np.sign(x[rows, self.v] - x[rows, self.w])).ravel()
        offset = (rows * self.dim + np.zeros_like(self.v)).ravel()
        size = m * self.dim
        flat = np.bincount(self.v.ravel() + offset, sgn, size) - np.bincount(self.w.ravel() + offset, sgn, size)
        return flat.reshape(m, self.dim)


def gtf_potential(problem: GtfProblem) -> CompositePotential:
    """Composite potential whose noise draw is a batch of ``n_batch`` uniform edges.

    Edges are drawn independently with replacement; each realized term has
    weight ``lam * |E| / n_batch`` so the batch sum is unbiased for ``lam * TV``.
    """
    g = problem.graph
    Y, var = problem.Y, problem.sigma**2
    weight = problem.edge_weight

    def sample_noise(rng: np.random.Generator, batch: int | None):
        size = problem.n_batch if batch is None else (batch, problem.n_batch)
        return rng.integers(0, g.num_edges, size=size)

    def prox_terms(idx):
        return EdgeProxChain(g.edges[idx, 0], g.edges[idx, 1], weight, g.num_vertices)

    return CompositePotential(
        dim=g.num_vertices,
        smooth_grad=lambda x, _xi: (x - Y) / var,
        prox_terms=prox_terms,
        sample_noise=sample_noise,
        L=1.0 / var,
        alpha=1.0 / var,
        sigma_F=0.0,
        value=problem.potential_value,
        lipschitz_bounds=(math.sqrt(2.0) * weight,) * problem.n_batch,
        independent_terms=True,
    )


class ProxConvergenceError(RuntimeError):
    def __init__(self, iterate: np.ndarray, residual: float, iterations: int):
        self.iterate = iterate
        self.residual = residual
        super().__init__(f"dual TV prox did not reach tolerance after {iterations} iterations (last change {residual:.3e})")


def full_tv_prox_dual(
    x,
    graph: Graph,
    t: float,
    max_iters: int = 20000,
    tol: float = 1e-8,
    p0: np.ndarray | None = None,
    return_dual: bool = False,
):
    """``argmin_u t * TV(u) + |u - x|^2 / 2`` by projected gradient on the dual.

    The dual variable lives on edges, ``p in [-t, t]^E``, and the primal is
    recovered as ``u = x - D^T p``.  The step is ``1 / (2 * max_degree)``,
    which bounds the largest eigenvalue of ``D D^T``.  Stops once the primal
    iterate moves less than ``tol`` (sup norm).
    """
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != graph.num_vertices:
        raise ValueError("signal length does not match the graph")
    if graph.num_edges == 0:
        u = X.copy()
        out = u[0] if single else u
        return (out, np.zeros((X.shape[0], 0))) if return_dual else out
    D = graph.incidence
    DT = D.T.tocsr()
    step = 1.0 / (2.0 * graph.max_degree)
    P = np.zeros((X.shape[0], graph.num_edges)) if p0 is None else np.array(p0, dtype=np.float64).reshape(X.shape[0], -1)
    U = X - (DT @ P.T).T
    change = math.inf
    for it in range(1, max_iters + 1):
        P = np.clip(P + step * (D @ U.T).T, -t, t)
        U_new = X - (DT @ P.T).T
        change = float(np.max(np.abs(U_new - U)))
        U = U_new
        if change < tol:
            break
    else:
        raise ProxConvergenceError(U[0] if single else U, change, max_iters)
    out = U[0] if single else U
    if return_dual:
        return out, (P[0] if single else P)
    return out


def run_gtf(
    algorithm: str,
    problem: GtfProblem,
    gamma: float,
    iterations: int,
    seed: int,
    chains: int = 5,
    x0=None,
    store_config: StoreConfig | None = None,
    prox_tol: float = 1e-6,
    prox_max_iters: int = 20000,
    warm_start: bool = False,
) -> SampleStore:
    """Sample the GTF posterior with ``chains`` chains advanced together.

    For ``proxla`` the full prox is ``prox_{gamma * lam * TV}`` solved by the
    dual method each step (cold start unless ``warm_start``).
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    pot = gtf_potential(problem)
    if x0 is None:
        x0 = np.zeros((chains, problem.graph.num_vertices))
    full_prox = None
    if algorithm == "proxla":
        dual = {"p": None}

        def full_prox(y, step):
            u, p = full_tv_prox_dual(
                y, problem.graph, step * problem.lam, max_iters=prox_max_iters, tol=prox_tol,
                p0=dual["p"], return_dual=True,
            )
            if warm_start:
                dual["p"] = p
            return u

    cfg = store_config or StoreConfig(thinning=10)
    return run(algorithm, pot, StepPlan(gamma, iterations), seed, cfg, x0=x0, full_prox=full_prox)
