import math

import numpy as np
import pytest

from helpers import random_point, random_term
from splangevin import prox as P


def test_soft_threshold_examples():
    assert P.soft_threshold(3.0, 1.0) == 2.0
    assert P.soft_threshold(-0.5, 1.0) == 0.0
    assert P.soft_threshold(0.0, 1.0) == 0.0
    np.testing.assert_array_equal(P.soft_threshold(np.array([-4.0, 0.2, 5.0]), 2.0), [-2.0, 0.0, 3.0])


def test_prox_abs_shifted_examples():
    # argmin |u| + u s + (u - y)^2 / (2 gamma)
    assert P.prox_abs_shifted(3.0, 1.0, 0.0) == 2.0
    assert P.prox_abs_shifted(3.0, 1.0, 1.0) == 1.0
    assert P.prox_abs_shifted(0.5, 1.0, -0.2) == 0.0


def test_edge_prox_examples():
    np.testing.assert_array_equal(P.edge_prox(np.array([4.0, 0.0]), 0, 1, 1.0), [3.0, 1.0])
    np.testing.assert_array_equal(P.edge_prox(np.array([1.0, 0.0]), 0, 1, 10.0), [0.5, 0.5])
    np.testing.assert_array_equal(P.edge_prox(np.array([2.0, 2.0, 7.0]), 0, 1, 1.0), [2.0, 2.0, 7.0])


def test_edge_prox_only_moves_its_endpoints():
    x = np.arange(5.0)
    out = P.edge_prox(x, 4, 1, 0.5)
    np.testing.assert_array_equal(out[[0, 2, 3]], x[[0, 2, 3]])
    assert out[4] + out[1] == pytest.approx(x[4] + x[1])


def test_edge_prox_batched_rows():
    x = np.array([[4.0, 0.0, 1.0], [0.0, 1.0, 5.0]])
    out = P.edge_prox(x, np.array([0, 2]), np.array([1, 0]), 1.0)
    np.testing.assert_array_equal(out, [[3.0, 1.0, 1.0], [1.0, 1.0, 4.0]])


def test_edge_prox_rejects_bad_indices():
    with pytest.raises(IndexError):
        P.edge_prox(np.zeros(2), 0, 2, 1.0)
    with pytest.raises(ValueError):
        P.edge_prox(np.zeros(2), 1, 1, 1.0)


def test_quadratic_prox_closed_form():
    g = P.quadratic(center=0.0, variance=1.0)
    assert g.prox(np.array([4.0]), 1.0)[0] == 2.0


def test_minimal_subgradient_at_kink():
    assert P.absolute().min_subgradient(np.array([0.0]))[0] == 0.0
    assert P.shifted_absolute(0.4).min_subgradient(np.array([0.0]))[0] == 0.0
    assert P.shifted_absolute(1.5).min_subgradient(np.array([0.0]))[0] == pytest.approx(0.5)
    assert P.shifted_absolute(-2.0).min_subgradient(np.array([0.0]))[0] == pytest.approx(-1.0)


def test_oracle_examples():
    assert P.numerical_prox_oracle(P.absolute(), np.array([3.0]), 1.0, tol=1e-8)[0] == pytest.approx(2.0, abs=1e-8)
    x = np.array([1.7, -0.3])
    np.testing.assert_allclose(P.numerical_prox_oracle(P.zero(), x, 0.7), x, atol=1e-8)
    half_square = lambda u: 0.5 * float(np.dot(u, u))
    assert P.numerical_prox_oracle(half_square, np.array([4.0]), 1.0)[0] == pytest.approx(2.0, abs=1e-7)


def test_oracle_handles_coupled_kink():
    # coordinate descent alone stalls at (0, 0) here
    out = P.numerical_prox_oracle(P.edge_term(0, 1), np.array([1.0, 0.0]), 10.0)
    np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-7)


def test_oracle_rejects_large_dimension():
    with pytest.raises(ValueError):
        P.numerical_prox_oracle(P.zero(), np.zeros(5), 1.0)


def test_oracle_raises_without_convergence():
    with pytest.raises(P.OracleError):
        P.numerical_prox_oracle(P.absolute(), np.array([3.0, -2.0]), 1.0, tol=1e-8, max_sweeps=1)


def test_nonexpansive():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        g = random_term(rng, d)
        a, b = random_point(rng, d), random_point(rng, d)
        gamma = float(rng.uniform(0.01, 5.0))
        lhs = np.linalg.norm(g.prox(a, gamma) - g.prox(b, gamma))
        assert lhs <= np.linalg.norm(a - b) + 1e-12


def test_moreau_upper_bound_and_minimality():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        g = random_term(rng, d)
        x, u = random_point(rng, d), random_point(rng, d)
        gamma = float(rng.uniform(0.01, 5.0))
        env = P.moreau_envelope(g, x, gamma)
        assert env <= g(x) + 1e-9
        assert env <= g(u) + np.dot(u - x, u - x) / (2 * gamma) + 1e-9


def test_yosida_is_subgradient_at_prox_point():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        g = random_term(rng, d)
        x, y = random_point(rng, d), random_point(rng, d)
        gamma = float(rng.uniform(0.01, 5.0))
        p = g.prox(x, gamma)
        assert g(y) >= g(p) + np.dot(P.yosida(g, x, gamma), y - p) - 1e-9


def test_prox_chain_records_intermediates_in_order():
    chain = P.ProxChain((P.absolute(), P.quadratic(0.0, 1.0)))
    y, path = P.apply_prox_chain(chain, np.array([5.0]), 1.0)
    np.testing.assert_allclose(path[0], [4.0])
    np.testing.assert_allclose(path[1], [2.0])
    np.testing.assert_allclose(y, [2.0])
    assert chain.value(np.array([2.0])) == pytest.approx(4.0)
    np.testing.assert_allclose(chain.subgradient_sum(np.array([2.0])), [3.0])


def test_prox_chain_flags_non_finite():
    bad = P.ProxFunction(eval=lambda x: 0.0, prox=lambda x, g: x * math.inf, min_subgradient=lambda x: 0 * x)
    with pytest.raises(P.NonFiniteError, match="prox 2"):
        P.ProxChain((P.zero(), bad)).apply(np.array([1.0]), 1.0, check_finite=True)


def test_batched_term_matches_row_by_row():
    rng = np.random.default_rng(3)
    s = rng.normal(size=(6, 1))
    x = rng.normal(size=(6, 1))
    batched = P.shifted_absolute(s).prox(x, 0.3)
    rows = [P.shifted_absolute(s[i]).prox(x[i], 0.3) for i in range(6)]
    np.testing.assert_array_equal(batched, np.array(rows))
