import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from implicit_rcis.lp import (ChebyshevWorkspace, LpStatus, LpWorkspace, chebyshev_center,
                              solve_lp)


def highs(c, G, h):
    """Reference solver: maximize c.z s.t. G z <= h."""
    res = linprog(-np.asarray(c), A_ub=G, b_ub=h, bounds=[(None, None)] * len(c), method="highs")
    return res


def random_lp(seed, m, dim, bounded=True):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(m, dim))
    h = rng.uniform(0.1, 2.0, size=m)
    if bounded:
        G = np.vstack([G, np.eye(dim), -np.eye(dim)])
        h = np.r_[h, 5 * np.ones(2 * dim)]
    return rng.normal(size=dim), G, h


@given(seed=st.integers(0, 10_000), m=st.integers(1, 40), dim=st.integers(1, 8))
def test_optimum_matches_highs(seed, m, dim):
    c, G, h = random_lp(seed, m, dim)
    ref = highs(c, G, h)
    res = solve_lp(c, G, h)
    assert res.optimal
    assert res.objective == pytest.approx(-ref.fun, abs=1e-6)
    assert np.all(G @ res.primal - h <= 1e-7)


@given(seed=st.integers(0, 10_000), dim=st.integers(2, 6))
def test_degenerate_integer_lp_matches_highs(seed, dim):
    # many constraints through the same vertices: stresses anti-cycling
    rng = np.random.default_rng(seed)
    G = rng.integers(-2, 3, size=(6 * dim, dim)).astype(float)
    h = np.abs(rng.integers(0, 2, size=6 * dim)).astype(float)
    G = np.vstack([G, np.eye(dim), -np.eye(dim)])
    h = np.r_[h, np.ones(2 * dim)]
    c = rng.integers(-3, 4, size=dim).astype(float)
    ref = highs(c, G, h)
    res = solve_lp(c, G, h)
    if ref.status == 2:
        assert res.status is LpStatus.INFEASIBLE
    else:
        assert res.optimal
        assert res.objective == pytest.approx(-ref.fun, abs=1e-6)


def test_infeasible_and_unbounded():
    G = np.array([[1.0], [-1.0]])
    assert solve_lp([1.0], G, [0.0, -1.0]).status is LpStatus.INFEASIBLE
    assert solve_lp([1.0], np.array([[-1.0]]), [0.0]).status is LpStatus.UNBOUNDED
    assert solve_lp([1.0, 0.0], np.zeros((0, 2)), np.zeros(0)).status is LpStatus.UNBOUNDED


def test_status_matches_highs_on_open_sets():
    for seed in range(30):
        c, G, h = random_lp(seed, 3, 3, bounded=False)
        ref = highs(c, G, h)
        res = solve_lp(c, G, h)
        expected = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}[ref.status]
        assert res.status is expected


def test_chebyshev_center_unit_square():
    G = np.vstack([np.eye(2), -np.eye(2)])
    z, r = chebyshev_center(G, [1, 1, 0, 0])
    assert r == pytest.approx(0.5)
    assert np.allclose(z, [0.5, 0.5])


def test_chebyshev_radius_negative_when_empty():
    _, r = chebyshev_center(np.array([[1.0], [-1.0]]), [0.0, -1.0])
    assert r < -1e-7


@given(seed=st.integers(0, 10_000))
def test_workspace_warm_equals_cold(seed):
    rng = np.random.default_rng(seed)
    _, G, h = random_lp(seed, 25, 5)
    ws = LpWorkspace(G)
    for _ in range(6):
        c = rng.normal(size=5)
        hh = h + rng.uniform(0, 0.5, size=h.size)
        warm = ws.maximize(c, hh)
        cold = solve_lp(c, G, hh)
        assert warm.optimal and cold.optimal
        assert warm.objective == pytest.approx(cold.objective, abs=1e-7)


@given(seed=st.integers(0, 10_000))
def test_chebyshev_workspace_matches_direct(seed):
    rng = np.random.default_rng(seed)
    _, G, h = random_lp(seed, 15, 4)
    ws = ChebyshevWorkspace(G)
    for _ in range(5):
        hh = h + rng.normal(scale=0.5, size=h.size)
        _, r1 = ws.center(hh)
        _, r2 = chebyshev_center(G, hh)
        assert r1 == pytest.approx(r2, abs=1e-7)
