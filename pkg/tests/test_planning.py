import math

import numpy as np
import pytest

from splangevin.planning import (
    UnsupportedConstantError,
    compute_C,
    geometric_index,
    geometric_weights,
    plan_convex,
    plan_strongly_convex,
    uniform_index,
)
from splangevin.models import laplace_toy_potential
from splangevin.sampler import StepPlan, run


def test_convex_plan_laplace_step():
    assert plan_convex(0.1, L=0.0, sigma_F=0.0, d=1, C=2.0).gamma == pytest.approx(0.05)


def test_convex_plan_one_over_L_branch():
    assert plan_convex(1.0, L=1.0, sigma_F=0.0, d=0, C=0.0).gamma == 1.0


def test_convex_plan_iterations_scale():
    a = plan_convex(0.1, L=0.0, sigma_F=0.0, d=1, C=2.0, w0_sq=2.0)
    b = plan_convex(0.05, L=0.0, sigma_F=0.0, d=1, C=2.0, w0_sq=2.0)
    assert a.iterations == math.ceil(2.0 / 0.01 * 2.0)
    assert b.iterations >= 4 * a.iterations


def test_convex_plan_rejects_bad_eps():
    with pytest.raises(ValueError):
        plan_convex(0.0, 1.0, 0.0, 1, 0.0)


def test_strongly_convex_w2_step():
    plan = plan_strongly_convex(0.4, L=1.0, alpha=1.0, sigma_F=0.0, d=1, C=0.0, target="w2")
    assert plan.gamma == pytest.approx(0.1)
    assert plan.regime == "strongly_convex_w2"
    assert plan.iterations == math.ceil(max(1.0, 2 * 2 / (0.4 * 1.0)) * math.log(2 * 1.0 / 0.4))


def test_strongly_convex_large_eps_hits_one_over_L():
    assert plan_strongly_convex(1e6, L=2.0, alpha=1.0, sigma_F=0.0, d=1, C=0.0).gamma == 0.5


def test_kl_target_doubles_step():
    kw = dict(L=1.0, alpha=0.5, sigma_F=1.0, d=3, C=2.0)
    w2 = plan_strongly_convex(0.1, target="w2", **kw)
    kl = plan_strongly_convex(0.1, target="kl", **kw)
    assert kl.gamma == pytest.approx(2 * w2.gamma, rel=1e-15)


def test_strongly_convex_rejects_bad_alpha():
    with pytest.raises(ValueError):
        plan_strongly_convex(0.1, L=1.0, alpha=0.0, sigma_F=0.0, d=1, C=0.0)


def test_compute_C_rules():
    assert compute_C(laplace_toy_potential().lipschitz_bounds) == pytest.approx(2.0)
    assert compute_C([1.0, 1.0]) == 4.0
    bounds = np.linspace(0.1, 1.0, 400)
    assert compute_C(bounds, independent=True) == pytest.approx(400 * np.sum(bounds**2))
    with pytest.raises(UnsupportedConstantError):
        compute_C([1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        compute_C([1.0, None])


def test_uniform_index():
    rng = np.random.default_rng(0)
    assert uniform_index(0, rng) == 0
    draws = np.array([uniform_index(9, rng) for _ in range(100_000)])
    np.testing.assert_allclose(np.bincount(draws, minlength=10) / draws.size, 0.1, atol=0.01)


def test_index_stream_does_not_touch_chain():
    pot = laplace_toy_potential()
    a = run("spla", pot, StepPlan(0.1, 50), seed=3)
    side = np.random.default_rng(99)
    b_store = run("spla", pot, StepPlan(0.1, 50), seed=3)
    uniform_index(50, side)
    np.testing.assert_array_equal(a.at(50), b_store.at(50))


def test_geometric_weights():
    w = geometric_weights(10, 1e-9, 1.0)
    assert np.max(np.abs(w - 1 / 11)) < 1e-6
    w = geometric_weights(1, 0.5, 1.0)
    assert w[1] / w[0] == pytest.approx(2.0, rel=1e-15)
    assert np.all(np.isfinite(geometric_weights(100_000, 0.1, 1.0)))
    with pytest.raises(ValueError):
        geometric_weights(5, 1.0, 1.0)


def test_geometric_index_frequencies():
    rng = np.random.default_rng(1)
    k, rate, n = 50, 0.1, 100_000
    draws = np.array([geometric_index(k, rate, 1.0, rng) for _ in range(n)])
    p_top = 0.1 / (1 - 0.9 ** (k + 1))
    freq = np.mean(draws == k)
    assert abs(freq - p_top) <= 4 * math.sqrt(p_top * (1 - p_top) / n)
