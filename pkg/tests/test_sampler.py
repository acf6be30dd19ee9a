import math

import numpy as np
import pytest
from scipy import stats

from helpers import ZeroNormals
from splangevin import prox as P
from splangevin.metrics import wasserstein2_1d
from splangevin.models import gaussian_potential, laplace_quantiles, laplace_toy_potential, pure_diffusion_potential
from splangevin.planning import compute_C, noise_constant
from splangevin.sampler import (
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


def abs_potential():
    return CompositePotential(dim=1, prox_terms=lambda _xi: P.ProxChain((P.absolute(),)))


def scalar_laplace_reference(x0: float, gamma: float, steps: int, seed: int) -> list[float]:
    """Hand-written SPLA on U(x) = E(|x| + x s): draw s, then W, shift, soft-threshold."""
    rng = np.random.default_rng(seed)
    x, out = x0, [x0]
    for _ in range(steps):
        s = rng.standard_normal()
        w = rng.standard_normal()
        y = x + math.sqrt(2 * gamma) * w - gamma * s
        x = math.copysign(max(abs(y) - gamma, 0.0), y) if y != 0 else 0.0
        out.append(x)
    return out


def test_pure_diffusion_step():
    state = ChainState.from_seed(np.zeros(1), 5)
    w = np.random.default_rng(5).standard_normal(1)
    nxt, y0 = spla_step(state, pure_diffusion_potential(), 0.5)
    np.testing.assert_array_equal(nxt.x, w)
    np.testing.assert_array_equal(y0, w)
    assert nxt.k == 1


def test_gaussian_step_without_noise():
    state = ChainState(np.array([4.0]), 0, ZeroNormals())
    nxt, _ = spla_step(state, gaussian_potential(1), 1.0)
    assert nxt.x[0] == 0.0


def test_ssla_examples():
    nxt, _ = ssla_step(ChainState(np.array([3.0]), 0, ZeroNormals()), abs_potential(), 1.0)
    assert nxt.x[0] == 2.0
    state = ChainState.from_seed(np.zeros(1), 9)
    w = np.random.default_rng(9).standard_normal(1)
    nxt, _ = ssla_step(state, abs_potential(), 0.7)
    np.testing.assert_allclose(nxt.x, math.sqrt(1.4) * w, rtol=0, atol=0)


def test_spla_matches_scalar_reference():
    ref = scalar_laplace_reference(0.3, 0.05, 500, seed=21)
    store = run("spla", laplace_toy_potential(), StepPlan(0.05, 500), seed=21, x0=np.array([0.3]))
    got = store.points("x")[:, 0]
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)


def test_ensemble_matches_independent_draw_layout():
    # m chains advanced together consume xi (m draws) then W (m draws) per step
    pot = laplace_toy_potential()
    x0 = np.array([[0.0], [1.0], [-2.0]])
    state = ChainState.from_seed(x0, 4)
    nxt, _ = spla_step(state, pot, 0.1)
    rng = np.random.default_rng(4)
    s = rng.standard_normal((3, 1))
    w = rng.standard_normal((3, 1))
    expected = P.soft_threshold(x0 + math.sqrt(0.2) * w - 0.1 * s, 0.1)
    np.testing.assert_allclose(nxt.x, expected, atol=1e-15)


def test_proxla_with_identity_is_la():
    pot = gaussian_potential(2, center=[1.0, -1.0], variance=2.0)
    a = ChainState.from_seed(np.array([3.0, 0.5]), 8)
    b = ChainState.from_seed(np.array([3.0, 0.5]), 8)
    for _ in range(20):
        a, _ = proxla_step(a, pot, 0.3, lambda y, g: y)
        b, _ = la_step(b, pot, 0.3)
        np.testing.assert_array_equal(a.x, b.x)


def test_spla_reduces_to_la_without_prox_terms():
    pot = gaussian_potential(1)
    a = ChainState.from_seed(np.array([2.0]), 1)
    b = ChainState.from_seed(np.array([2.0]), 1)
    for _ in range(50):
        a, _ = spla_step(a, pot, 0.2)
        b, _ = la_step(b, pot, 0.2)
        np.testing.assert_array_equal(a.x, b.x)


def test_spla_single_deterministic_term_is_prox_langevin():
    pot = CompositePotential(
        dim=1, smooth_grad=lambda x, _xi: x, L=1.0, alpha=1.0,
        prox_terms=lambda _xi: P.ProxChain((P.absolute(0.5),)),
    )
    state = ChainState.from_seed(np.array([1.5]), 2)
    rng = np.random.default_rng(2)
    x = np.array([1.5])
    for _ in range(30):
        state, _ = spla_step(state, pot, 0.25)
        x = P.soft_threshold(x - 0.25 * x + math.sqrt(0.5) * rng.standard_normal(1), 0.125)
        np.testing.assert_allclose(state.x, x, atol=1e-15)


def test_nonfinite_reports_stage_and_iteration():
    pot = CompositePotential(dim=1, smooth_grad=lambda x, _xi: x * np.inf, L=1.0)
    store = run("spla", pot, StepPlan(0.5, 5), seed=0, x0=np.ones(1))
    assert store.failed and "gradient" in store.error and "iteration 0" in store.error
    with pytest.raises(P.NonFiniteError) as info:
        spla_step(ChainState.from_seed(np.ones(1), 0), pot, 0.5)
    assert info.value.stage == "gradient"


def test_step_rejects_nonpositive_gamma():
    with pytest.raises(ValueError):
        spla_step(ChainState.from_seed(np.zeros(1), 0), pure_diffusion_potential(), 0.0)


def test_run_zero_iterations_keeps_x0_only():
    store = run("spla", laplace_toy_potential(), StepPlan(0.1, 0), seed=0, x0=np.array([2.0]))
    assert store.iterations("x").tolist() == [0]
    np.testing.assert_array_equal(store.at(0), [2.0])


def test_run_is_deterministic():
    cfg = StoreConfig(tags=("x", "y0"), thinning=3)
    a = run("ssla", laplace_toy_potential(), StepPlan(0.2, 200), seed=5, store_config=cfg)
    b = run("ssla", laplace_toy_potential(), StepPlan(0.2, 200), seed=5, store_config=cfg)
    for ra, rb in zip(a.records, b.records):
        assert (ra.k, ra.tag) == (rb.k, rb.tag)
        np.testing.assert_array_equal(ra.point, rb.point)


def test_chain_state_restore_resumes_trajectory():
    pot = laplace_toy_potential()
    state = ChainState.from_seed(np.zeros(1), 3)
    for _ in range(10):
        state, _ = spla_step(state, pot, 0.1)
    snapshot = ChainState.restore(state.x, state.k, state.rng_state)
    a, b = state, snapshot
    for _ in range(10):
        a, _ = spla_step(a, pot, 0.1)
        b, _ = spla_step(b, pot, 0.1)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.k == b.k == 20


def test_store_orders_records_and_thins():
    store = SampleStore()
    store.add(0, "x", [0.0])
    with pytest.raises(ValueError):
        store.add(0, "x", [1.0])
    res = run("spla", laplace_toy_potential(), StepPlan(0.1, 25), seed=0, store_config=StoreConfig(thinning=10))
    assert res.iterations("x").tolist() == [0, 10, 20, 25]


def test_pooled_uses_requested_prefix():
    res = run("spla", laplace_toy_potential(), StepPlan(0.1, 30), seed=0, store_config=StoreConfig(tags=("y0",)))
    assert res.pooled("y0", upto=9).shape == (10, 1)
    assert res.pooled("y0").shape == (30, 1)


def test_plan_guards_step_size():
    with pytest.raises(ValueError):
        run("la", gaussian_potential(1), StepPlan(2.0, 1), seed=0)
    with pytest.raises(ValueError):
        StepPlan(-1.0, 3)
    with pytest.raises(ValueError):
        CompositePotential(dim=1, L=1.0, alpha=2.0)


def test_pure_diffusion_law():
    gamma, k, m = 0.5, 20, 10_000
    store = run("spla", pure_diffusion_potential(), StepPlan(gamma, k), seed=17, x0=np.full((m, 1), 1.0))
    xk = store.at(k)[:, 0]
    var = 2 * gamma * k
    assert abs(xk.mean() - 1.0) <= 5 * math.sqrt(var / m)
    assert abs(xk.var(ddof=1) - var) <= 5 * var * math.sqrt(2 / (m - 1))


def test_gaussian_target_contracts():
    m = 10_000
    store = run("spla", gaussian_potential(1), StepPlan(0.1, 200), seed=2, x0=np.full((m, 1), 4.0))
    ref = stats.norm.ppf((np.arange(m) + 0.5) / m)
    assert wasserstein2_1d(store.at(200)[:, 0], ref) <= 0.2 + 0.05


def test_laplace_recursion_bound():
    gamma, m, steps = 0.05, 10_000, 200
    pot = laplace_toy_potential()
    K = noise_constant(0.0, 0.0, 1, compute_C(pot.lipschitz_bounds))
    store = run("spla", pot, StepPlan(gamma, steps), seed=4, x0=np.full((m, 1), 3.0),
                store_config=StoreConfig(thinning=10))
    target = laplace_quantiles(m)
    w0 = wasserstein2_1d(np.full(m, 3.0), target)
    for k, pts in zip(store.iterations("x"), store.points("x")):
        assert wasserstein2_1d(pts[:, 0], target) <= w0 + k * gamma**2 * K + 0.05


def test_ssla_and_spla_differ_but_stay_finite():
    a = run("spla", laplace_toy_potential(), StepPlan(0.05, 2000), seed=1)
    b = run("ssla", laplace_toy_potential(), StepPlan(0.05, 2000), seed=1)
    assert not a.failed and not b.failed
    assert not np.array_equal(a.at(2000), b.at(2000))
