"""Stochastic proximal Langevin sampling for composite potentials."""

__version__ = "0.1.0"

from .prox import (  # noqa: E402
    NonFiniteError,
    OracleError,
    ProxChain,
    ProxFunction,
    apply_prox_chain,
    edge_prox,
    moreau_envelope,
    numerical_prox_oracle,
    prox_abs_shifted,
    soft_threshold,
    yosida,
)
from .sampler import (  # noqa: E402
    ALGORITHMS,
    ChainState,
    CompositePotential,
    SampleStore,
    StepPlan,
    StoreConfig,
    la_step,
    proxla_step,
    run,
    spla_step,
    ssla_step,
)

__all__ = [
    "__version__",
    "ALGORITHMS",
    "ChainState",
    "CompositePotential",
    "NonFiniteError",
    "OracleError",
    "ProxChain",
    "ProxFunction",
    "SampleStore",
    "StepPlan",
    "StoreConfig",
    "apply_prox_chain",
    "edge_prox",
    "la_step",
    "moreau_envelope",
    "numerical_prox_oracle",
    "prox_abs_shifted",
    "proxla_step",
    "run",
    "soft_threshold",
    "spla_step",
    "ssla_step",
    "yosida",
]
