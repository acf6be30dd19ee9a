"""Batch experiments behind the ``splangevin`` command.

Each ``cmd_*`` function takes a resolved :class:`ExperimentConfig`, writes CSV
files plus ``manifest.txt`` into ``cfg.out`` and returns an exit code:
0 on success, 1 on a configuration or input error, 2 on a numerical failure.
"""

from __future__ import annotations

import csv
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import __version__
from .config import ConfigError, ExperimentConfig, write_manifest
from .graph_tv import (
    GtfProblem,
    ProxConvergenceError,
    balanced_lambda,
    load_snap_edge_list,
    make_grid_graph,
    run_gtf,
    write_vertex_map,
)
from .metrics import (
    entropy_estimate,
    functional_trace,
    histogram_table,
    histogram_tv_distance,
    pinsker_tv_bound,
    potential_energy_estimate,
    wasserstein2_1d,
)
from .models import gaussian_potential, laplace_log_density, laplace_toy_potential
from .planning import noise_constant
from .prox import NonFiniteError, soft_threshold
from .sampler import StepPlan, StoreConfig, run

__all__ = [
    "CSV_SCHEMA_VERSION",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NUMERIC",
    "checkpoint_schedule",
    "write_csv",
    "cmd_laplace_toy",
    "cmd_gaussian_strong",
    "cmd_gtf",
    "run_experiment",
]

CSV_SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

HIST_RANGE = (-10.0, 10.0)
# data draws use their own stream so the chain seed and the observation stay decoupled
_DATA_STREAM = 0x5EED


def checkpoint_schedule(iterations: int, tail_points: int = 20) -> list[int]:
    """Powers of two up to ``iterations`` merged with a uniform tail stride and the end point."""
    if iterations <= 0:
        return []
    points = set()
    k = 1
    while k <= iterations:
        points.add(k)
        k *= 2
    stride = max(1, iterations // tail_points)
    points.update(range(stride, iterations + 1, stride))
    points.add(iterations)
    return sorted(points)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, kind: str, header: Sequence[str], rows) -> None:
    """CSV with a versioned ``#`` comment line; floats use ``repr`` so output is bit-stable."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# splangevin {__version__} csv-schema {CSV_SCHEMA_VERSION} {kind}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _err(msg: str) -> None:
    print(f"splangevin: {msg}", file=sys.stderr)


def _x0(cfg: ExperimentConfig, dim: int) -> np.ndarray:
    if cfg.chains == 1:
        return np.full(dim, cfg.x0)
    return np.full((cfg.chains, dim), cfg.x0)


def _laplace_cdf(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(x, 0.0)))


def _laplace_density(x):
    return 0.5 * np.exp(-np.abs(x))


def cmd_laplace_toy(cfg: ExperimentConfig) -> int:
    """Sample ``exp(-|x|)/2`` through the stochastic split ``|x| + x xi``.

    Diagnostics describe the averaged measure, i.e. the pooled ``y_0`` draws
    up to each checkpoint.  Outputs per algorithm:
    ``laplace_<algo>_trace.csv`` and ``laplace_<algo>_hist.csv``, plus one
    ``laplace_summary.csv`` row per algorithm (final KL, histogram TV).
    """
    out = Path(cfg.out)
    write_manifest(cfg, out)
    pot = laplace_toy_potential()
    checkpoints = checkpoint_schedule(cfg.iterations)
    status = EXIT_OK
    summary = []
    for algo in cfg.algorithms:
        store = run(
            algo,
            pot,
            StepPlan(cfg.gamma, cfg.iterations),
            cfg.seed,
            StoreConfig(tags=("x", "y0"), thinning=cfg.thinning),
            x0=_x0(cfg, 1),
            full_prox=lambda y, g: soft_threshold(y, g),
        )
        if store.failed:
            _err(f"{algo}: {store.error}")
            status = EXIT_NUMERIC
            continue
        rows = []
        for k in checkpoints:
            sample = store.pooled("y0", upto=k - 1)
            if sample.shape[0] < 2 or np.ptp(sample) == 0:
                continue
            h = entropy_estimate(sample, method=cfg.entropy_method)
            energy = potential_energy_estimate(sample, lambda x: np.abs(x[:, 0]))
            kl = -h - float(np.mean(laplace_log_density(sample)))
            rows.append((k, -h, energy, -h + energy, kl, pinsker_tv_bound(max(kl, 0.0))))
        if not np.all(np.isfinite(np.array(rows, dtype=np.float64))):
            _err(f"{algo}: diagnostics overflowed (iterates too large to estimate)")
            status = EXIT_NUMERIC
        write_csv(
            out / f"laplace_{algo}_trace.csv",
            "laplace_trace",
            ("iteration", "neg_entropy", "potential_energy", "functional", "kl", "tv_bound"),
            rows,
        )
        final = store.pooled("y0") if cfg.iterations > 0 else store.pooled("x")
        table = histogram_table(final, cfg.bins, HIST_RANGE, density=_laplace_density)
        write_csv(
            out / f"laplace_{algo}_hist.csv",
            "laplace_histogram",
            ("bin_left", "bin_right", "frequency", "true_density_at_center"),
            table.tolist(),
        )
        tv = histogram_tv_distance(final, _laplace_cdf, bins=cfg.bins, value_range=HIST_RANGE)
        final_kl = rows[-1][4] if rows else math.nan
        summary.append((algo, final_kl, tv))
        print(f"{algo}: histogram TV to target {tv:.4f}, final KL {final_kl:.4f}")
    write_csv(out / "laplace_summary.csv", "laplace_summary", ("algorithm", "final_kl", "histogram_tv"), summary)
    return status


def cmd_gaussian_strong(cfg: ExperimentConfig) -> int:
    """``cfg.chains`` chains on ``x^2/2``; squared W2 to ``N(0, 1)`` against the contraction bound.

    The bound column is ``(1 - gamma alpha)^k W0^2 + gamma K / alpha`` with
    ``W0^2 = x0^2 + 1``, the exact squared distance from the point mass at
    ``x0`` to ``N(0, 1)``.
    """
    out = Path(cfg.out)
    pot = gaussian_potential(1)
    if cfg.gamma > 1.0 / pot.L:
        raise ConfigError(f"gamma must be <= 1/L = {1.0 / pot.L}, got {cfg.gamma}")
    write_manifest(cfg, out)
    K = noise_constant(pot.sigma_F, pot.L, pot.dim, 0.0)
    w0_sq = cfg.x0**2 + 1.0
    reference = stats.norm.ppf((np.arange(cfg.chains) + 0.5) / cfg.chains)
    status = EXIT_OK
    for algo in cfg.algorithms:
        store = run(
            algo,
            pot,
            StepPlan(cfg.gamma, cfg.iterations),
            cfg.seed,
            StoreConfig(tags=("x",), thinning=cfg.thinning),
            x0=np.full((cfg.chains, 1), cfg.x0),
            full_prox=lambda y, g: y,
        )
        if store.failed:
            _err(f"{algo}: {store.error}")
            status = EXIT_NUMERIC
            continue
        q = 1.0 - cfg.gamma * pot.alpha
        rows = []
        for k, point in zip(store.iterations("x"), store.points("x")):
            w2 = wasserstein2_1d(point[:, 0], reference)
            bound = q**k * w0_sq + cfg.gamma * K / pot.alpha
            rows.append((int(k), w2, bound))
        write_csv(out / f"gaussian_{algo}_w2.csv", "gaussian_w2", ("k", "w2", "bound"), rows)
    return status


def _load_graph(cfg: ExperimentConfig):
    if cfg.graph is not None:
        path = Path(cfg.graph)
        if not path.is_file():
            raise ConfigError(f"graph file not found: {path}")
        graph = load_snap_edge_list(path)
        if graph.dropped_self_loops or graph.dropped_duplicates:
            print(
                f"graph: dropped {graph.dropped_self_loops} self-loops and "
                f"{graph.dropped_duplicates} duplicate edges"
            )
        return graph
    rows, cols = cfg.grid if cfg.grid is not None else (20, 20)
    return make_grid_graph(rows, cols)


def gtf_observation(num_vertices: int, seed: int, inpaint: bool) -> np.ndarray:
    """``Y ~ N(0, I)``; with ``inpaint`` a seeded half of the coordinates is zeroed."""
    rng = np.random.default_rng([_DATA_STREAM, seed])
    Y = rng.standard_normal(num_vertices)
    if inpaint:
        hidden = rng.permutation(num_vertices)[: num_vertices // 2]
        Y[hidden] = 0.0
    return Y


def cmd_gtf(cfg: ExperimentConfig) -> int:
    """Graph trend filtering posterior: one functional trace per algorithm.

    Writes ``gtf_<algo>_trace.csv``, ``observation.csv`` and, for edge-list
    input, ``vertex_map.csv``.  ``lam`` defaults to the balancing value and
    is recorded in the manifest.
    """
    out = Path(cfg.out)
    graph = _load_graph(cfg)
    Y = gtf_observation(graph.num_vertices, cfg.seed, cfg.inpaint)
    lam = cfg.lam if cfg.lam is not None else balanced_lambda(Y, graph, cfg.sigma)
    problem = GtfProblem(graph, Y, sigma=cfg.sigma, lam=lam, n_batch=cfg.n_batch)
    write_manifest(cfg, out, extra={"lam": lam})
    if cfg.graph is not None:
        write_vertex_map(graph, out / "vertex_map.csv")
    write_csv(out / "observation.csv", "gtf_observation", ("vertex", "y"), enumerate(Y.tolist()))
    print(f"graph: {graph.num_vertices} vertices, {graph.num_edges} edges, lam = {lam:.6g}")

    status = EXIT_OK
    for algo in cfg.algorithms:
        if algo == "proxla" and graph.num_edges > cfg.proxla_edge_cap:
            _err(
                f"proxla skipped: {graph.num_edges} edges exceed proxla_edge_cap = {cfg.proxla_edge_cap} "
                "(the full TV prox is solved iteratively each step); raise the cap to force it"
            )
            continue
        try:
            store = run_gtf(
                algo,
                problem,
                cfg.gamma,
                cfg.iterations,
                cfg.seed,
                chains=cfg.chains,
                x0=np.full((cfg.chains, graph.num_vertices), cfg.x0),
                store_config=StoreConfig(tags=("x",), thinning=cfg.thinning),
                prox_tol=cfg.prox_tol,
            )
        except ProxConvergenceError as exc:
            _err(f"{algo}: {exc}")
            status = EXIT_NUMERIC
            continue
        if store.failed:
            _err(f"{algo}: {store.error}")
            status = EXIT_NUMERIC
        trace = functional_trace(
            store, problem.potential_value, replicates=cfg.replicates,
            entropy_method=cfg.entropy_method, min_iteration=1,
        )
        write_csv(
            out / f"gtf_{algo}_trace.csv",
            "gtf_trace",
            ("iteration", "cpu_seconds", "neg_entropy_surrogate", "potential_energy", "functional"),
            [(r.iteration, r.cpu_seconds, r.neg_entropy, r.energy, r.functional) for r in trace],
        )
        if not all(math.isfinite(r.functional) for r in trace):
            _err(f"{algo}: non-finite functional estimate")
            status = EXIT_NUMERIC
        if trace:
            print(f"{algo}: final functional {trace[-1].functional:.4f} at k = {trace[-1].iteration}")
    return status


_COMMANDS = {"laplace_toy": cmd_laplace_toy, "gaussian_strong": cmd_gaussian_strong, "gtf": cmd_gtf}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Dispatch ``cfg.experiment`` and map failures onto exit codes."""
    try:
        return _COMMANDS[cfg.experiment](cfg)
    except (ConfigError, FileNotFoundError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except (NonFiniteError, ProxConvergenceError, FloatingPointError) as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except ValueError as exc:
        # malformed inputs (edge lists, inconsistent sizes) surface as ValueError
        _err(str(exc))
        return EXIT_CONFIG
