import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from implicit_rcis.errors import DimensionMismatch, NotNilpotent, UnboundedCsub
from implicit_rcis.linsys import LinearSystem
from implicit_rcis.mealy import MealyMachine, simple_loop, tree_machine
from implicit_rcis.oracle import invariance_audit, maximal_rcis
from implicit_rcis.polytope import Polytope, contains, equal
from implicit_rcis.rcis import (EMPTY, LAMBDA, SINGLE_CSUB, AugmentedSystem, ImplicitRcis, build_csub,
                                compute_implicit_rcis, enumerate_reachable, explicit_projection,
                                fiber_check, membership)

BOX3 = Polytope.from_box(-np.ones(3), np.ones(3))


def shift_plant(dv=0.1):
    """A^2 = 0 double integrator-like plant with two disturbance vertices."""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    return LinearSystem(A, B, np.array([[0.0, dv], [0.0, -dv]]), BOX3)


def scalar_plant(vertices, S=None):
    S = Polytope.from_box([-1, -1], [1, 1]) if S is None else S
    return LinearSystem(np.array([[0.0]]), np.array([[1.0]]), np.array(vertices, float).reshape(-1, 1), S)


def no_dominance_machine():
    return MealyMachine(("a", "b"), [[0, 0, 0], [1, 1, 1]], [[0, 0, 1], [2, 3, 3]], 4)


def simulate_numeric(plant, machine, s0, x, theta, depth):
    """Brute force: every (machine state, plant state) visited within ``depth`` steps."""
    m = plant.m
    seen = {(s0, tuple(np.round(x, 9)))}
    frontier = [(s0, x)]
    for _ in range(depth):
        nxt = []
        for q, z in frontier:
            for j, d in enumerate(plant.D_v):
                k = machine.output[q, j]
                u = theta[k * m:(k + 1) * m]
                z2 = plant.A @ z + plant.B @ u + d
                q2 = int(machine.transition[q, j])
                key = (q2, tuple(np.round(z2, 9)))
                if key not in seen:
                    seen.add(key)
                    nxt.append((q2, z2))
        frontier = nxt
    return seen


def test_example_reachable_set_has_seven_elements():
    aug = AugmentedSystem(shift_plant(), tree_machine(1, 2))
    assert len(enumerate_reachable(aug, 0)) == 7


def test_trivial_reachable_set():
    plant = LinearSystem(np.zeros((1, 1)), np.ones((1, 1)), np.zeros((1, 1)),
                         Polytope.from_box([-1, -1], [1, 1]))
    assert len(enumerate_reachable(AugmentedSystem(plant, simple_loop(1, 1)), 0)) == 2


@given(seed=st.integers(0, 10_000), L=st.integers(1, 3))
def test_symbolic_reachable_set_matches_simulation(seed, L):
    rng = np.random.default_rng(seed)
    plant = shift_plant()
    machine = tree_machine(L, 2)
    aug = AugmentedSystem(plant, machine)
    reach = enumerate_reachable(aug, 0)
    x = rng.normal(size=2)
    theta = rng.normal(size=aug.n_theta)
    symbolic = {(st_.auto_state, tuple(np.round(st_.evaluate(x, theta), 9))) for st_ in reach}
    depth = max(st_.depth for st_ in reach) + 2
    assert symbolic == simulate_numeric(plant, machine, 0, x, theta, depth)


def _safe_forever(plant, machine, x, theta, depth=12):
    for q, z in simulate_numeric(plant, machine, 0, x, theta, depth):
        for j in range(plant.D_v.shape[0]):
            k = machine.output[q, j]
            u = theta[k * plant.m:(k + 1) * plant.m]
            if not plant.S.contains_point(np.r_[z, u], tol=1e-9):
                return False
    return True


@given(seed=st.integers(0, 10_000))
def test_csub_equals_closed_loop_safety(seed):
    rng = np.random.default_rng(seed)
    plant = shift_plant(0.2)
    machine = tree_machine(1, 2)
    C = build_csub(AugmentedSystem(plant, machine), 0, prune=False)
    for _ in range(20):
        z = rng.uniform(-1.2, 1.2, size=C.dim)
        slack = np.min(C.h - C.G @ z)
        if abs(slack) < 1e-6:
            continue
        assert (slack > 0) == _safe_forever(plant, machine, z[:2], z[2:])


def test_single_csub_kind_and_dims(n2):
    r = n2.rcis
    assert r.kind == SINGLE_CSUB and r.s_dom == "s0"
    assert r.polytope.dim == 2 + 30
    assert membership(r, [0.0, 0.0])
    assert not membership(r, [2.0, 0.0])


def test_pruned_and_unpruned_sets_agree(n2):
    raw = compute_implicit_rcis(n2.design_plant, n2.machine, prune=False)
    assert raw.polytope.n_rows > n2.rcis.polytope.n_rows
    assert equal(raw.polytope, n2.rcis.polytope, tol=1e-7)


def test_projection_methods_agree(n2):
    r = compute_implicit_rcis(n2.design_plant, tree_machine(2, 2))
    fm = explicit_projection(r, method="fm")
    sup = explicit_projection(r, method="support")
    assert equal(fm, sup, tol=1e-6)


def test_json_round_trip(n2):
    data = json.loads(json.dumps(n2.rcis.to_dict()))
    back = ImplicitRcis.from_dict(data)
    assert back.kind == n2.rcis.kind
    for x in ([0.0, 0.0], [0.9, -0.5], [1.0, 1.0]):
        assert membership(back, x) == membership(n2.rcis, x)


def test_certificate_is_feasible(n2):
    res = fiber_check(n2.rcis, [0.3, -0.2])
    assert res.member
    z = np.r_[[0.3, -0.2], res.certificate]
    assert n2.rcis.polytope.contains_point(z)


def test_dimension_mismatch(n2):
    with pytest.raises(DimensionMismatch):
        fiber_check(n2.rcis, [0.0, 0.0, 0.0])


def test_not_nilpotent():
    plant = LinearSystem(np.eye(1), np.ones((1, 1)), np.zeros((1, 1)), Polytope.from_box([-1, -1], [1, 1]))
    with pytest.raises(NotNilpotent):
        AugmentedSystem(plant, simple_loop(1, 1))


def test_point_state_set_with_measured_disturbance_is_nonempty():
    # u = -d keeps x at the origin
    S = Polytope.from_box([0.0, -1.0], [0.0, 1.0])
    r = compute_implicit_rcis(scalar_plant([[-0.1], [0.1]], S), tree_machine(2, 2))
    assert r.kind == SINGLE_CSUB and membership(r, [0.0])


def test_point_safe_set_gives_empty_set():
    # (x, u) pinned to the origin cannot absorb a nonzero disturbance
    S = Polytope.from_box([0.0, 0.0], [0.0, 0.0])
    r = compute_implicit_rcis(scalar_plant([[-0.1], [0.1]], S), tree_machine(2, 2))
    assert r.kind == EMPTY and r.is_empty
    assert not membership(r, [0.0])
    assert explicit_projection(r).dim == 1


def test_lambda_path_matches_oracle():
    plant = scalar_plant([[-0.1], [0.0], [0.1]])
    r = compute_implicit_rcis(plant, no_dominance_machine())
    assert r.kind == LAMBDA and r.q0 == ("a", "b")
    # (x, theta) plus two blocks of (x_i, theta_i) plus two lambdas
    assert r.polytope.dim == 5 * 3 + 2
    C = explicit_projection(r)
    assert equal(C, maximal_rcis(plant).set)
    assert invariance_audit(r, plant, 200, seed=1).violations == 0


def test_lambda_path_unbounded_block():
    S = Polytope(np.array([[0.0, 1.0], [0.0, -1.0]]), [1.0, 1.0])
    with pytest.raises(UnboundedCsub):
        compute_implicit_rcis(scalar_plant([[-0.1], [0.0], [0.1]], S), no_dominance_machine())


def test_explicit_projection_is_contained_in_oracle(n2, n2_oracle):
    assert contains(n2_oracle.set, explicit_projection(n2.rcis))


def random_nilpotent_plant(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    A = P @ np.array([[0.0, 1.0], [0.0, 0.0]]) @ np.linalg.inv(P)
    B = rng.normal(size=(2, 1))
    dv = rng.uniform(0.0, 0.2, size=2)
    S = Polytope.from_box([-1, -1, -2], [1, 1, 2])
    return LinearSystem(A, B, np.array([dv, -dv]), S)


@settings(max_examples=10)
@given(seed=st.integers(0, 10_000), L=st.integers(1, 3))
def test_implicit_set_is_invariant(seed, L):
    plant = random_nilpotent_plant(seed)
    r = compute_implicit_rcis(plant, tree_machine(L, 2), prune=False)
    if r.is_empty:
        return
    report = invariance_audit(r, plant, 100, seed=seed)
    assert report.violations == 0


@settings(max_examples=10)
@given(seed=st.integers(0, 10_000))
def test_implicit_set_inside_maximal_set(seed):
    plant = random_nilpotent_plant(seed)
    r = compute_implicit_rcis(plant, tree_machine(2, 2))
    if r.is_empty:
        return
    assert contains(maximal_rcis(plant).set, explicit_projection(r), tol=1e-6)
