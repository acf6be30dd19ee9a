"""Experiment configuration: ``key = value`` files, flag overrides and run manifests."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from . import __version__
from .sampler import ALGORITHMS

__all__ = ["ConfigError", "ExperimentConfig", "EXPERIMENTS", "parse_config", "write_manifest"]

EXPERIMENTS = ("laplace_toy", "gaussian_strong", "gtf")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Resolved settings of one run.  ``None`` fields take experiment defaults."""

    experiment: str = "laplace_toy"
    algorithms: tuple[str, ...] | None = None
    gamma: float | None = None
    iterations: int | None = None
    seed: int = 0
    chains: int | None = None
    x0: float | None = None
    thinning: int | None = None
    out: str = "runs"
    graph: str | None = None
    grid: tuple[int, int] | None = None
    lam: float | None = None
    sigma: float = 1.0
    n_batch: int = 400
    inpaint: bool = False
    replicates: int | None = None
    proxla_edge_cap: int = 20000
    prox_tol: float = 1e-6
    entropy_method: str = "kde_gaussian"
    bins: int = 200


_DEFAULTS = {
    "laplace_toy": dict(algorithms=("spla", "ssla"), gamma=0.05, iterations=100_000, chains=1, x0=0.0, thinning=1),
    "gaussian_strong": dict(algorithms=("spla",), gamma=0.1, iterations=200, chains=10_000, x0=4.0, thinning=1),
    "gtf": dict(algorithms=("spla", "ssla", "proxla"), gamma=0.05, iterations=2000, chains=5, x0=0.0, thinning=10),
}

_KEYS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().replace(" ", "").split("x")
    if len(parts) != 2:
        raise ValueError(f"grid must look like RxC, got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_algorithms(text: str) -> tuple[str, ...]:
    algos = tuple(a.strip() for a in text.split(",") if a.strip())
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad or not algos:
        raise ValueError(f"algorithms must be a comma list from {', '.join(ALGORITHMS)}; got {text!r}")
    return algos


_PARSERS = {
    "experiment": str,
    "algorithms": _parse_algorithms,
    "gamma": float,
    "iterations": int,
    "seed": int,
    "chains": int,
    "x0": float,
    "thinning": int,
    "out": str,
    "graph": str,
    "grid": _parse_grid,
    "lam": float,
    "sigma": float,
    "n_batch": int,
    "inpaint": _parse_bool,
    "replicates": int,
    "proxla_edge_cap": int,
    "prox_tol": float,
    "entropy_method": str,
    "bins": int,
}


def _convert(key: str, raw: Any, where: str):
    if key not in _KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}; valid keys: {', '.join(sorted(_KEYS))}")
    if not isinstance(raw, str):
        return raw
    try:
        return _PARSERS[key](raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def _read_file(path: Path) -> dict[str, Any]:
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        values[key] = _convert(key, raw, f"{path}:{lineno}")
    return values


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {cfg.experiment!r}")
    if not cfg.gamma > 0:
        raise ConfigError(f"gamma must be > 0, got {cfg.gamma}")
    if cfg.iterations < 0:
        raise ConfigError(f"iterations must be >= 0, got {cfg.iterations}")
    if cfg.chains < 1:
        raise ConfigError(f"chains must be >= 1, got {cfg.chains}")
    if cfg.thinning < 1:
        raise ConfigError(f"thinning must be >= 1, got {cfg.thinning}")
    if cfg.replicates < 1 or cfg.replicates > cfg.chains:
        raise ConfigError(f"replicates must lie in [1, chains={cfg.chains}], got {cfg.replicates}")
    if not cfg.sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {cfg.sigma}")
    if cfg.lam is not None and not cfg.lam > 0:
        raise ConfigError(f"lam must be > 0, got {cfg.lam}")
    if cfg.n_batch < 1:
        raise ConfigError(f"n_batch must be >= 1, got {cfg.n_batch}")
    if cfg.entropy_method not in ("kde_gaussian", "histogram"):
        raise ConfigError(f"entropy_method must be kde_gaussian or histogram, got {cfg.entropy_method!r}")
    if cfg.graph is not None and cfg.grid is not None:
        raise ConfigError("give either graph or grid, not both")


def parse_config(path=None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Merge file values, then flag overrides, then experiment defaults, and validate.

    ``overrides`` may hold raw strings (as typed on a command line) or
    already-typed values; ``None`` entries are ignored.
    """
    values: dict[str, Any] = {}
    if path is not None:
        values.update(_read_file(Path(path)))
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = _convert(key, raw, "command line")
    cfg = ExperimentConfig(**values)
    if cfg.experiment in _DEFAULTS:
        for key, default in _DEFAULTS[cfg.experiment].items():
            if getattr(cfg, key) is None:
                setattr(cfg, key, default)
    if cfg.replicates is None:
        cfg.replicates = min(5, cfg.chains) if cfg.experiment == "gtf" else cfg.chains
    _validate(cfg)
    return cfg


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple) and value and all(isinstance(v, int) for v in value) and len(value) == 2:
        return f"{value[0]}x{value[1]}"
    if isinstance(value, tuple):
        return ",".join(value)
    return repr(value) if isinstance(value, float) else str(value)


def write_manifest(cfg: ExperimentConfig, out_dir: Path, extra: dict[str, Any] | None = None) -> Path:
    """Write the resolved config as a re-runnable ``key = value`` file."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"# splangevin {__version__} run manifest; rerun with --config manifest.txt"]
    resolved = dataclasses.asdict(cfg)
    resolved.update(extra or {})
    for key in _KEYS:
        value = resolved[key]
        if value is not None:
            lines.append(f"{key} = {_format(value)}")
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
