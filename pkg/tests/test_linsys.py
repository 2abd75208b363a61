import numpy as np
import pytest
from hypothesis import given, strategies as st

from implicit_rcis.errors import ConfigError, DimensionMismatch, NotControllable
from implicit_rcis.linsys import (NON_MEASURABLE, FeedbackTransform, LinearSystem, apply_prefeedback,
                                  chain_of_integrators, deadbeat_gain, disturbance_embedding,
                                  disturbance_vertices, lane_keeping_standin, lift_nonmeasurable,
                                  nilpotency_index, system_from_config, system_to_config)
from implicit_rcis.polytope import Polytope


def test_nilpotency_index():
    assert nilpotency_index(np.zeros((2, 2))) == 1
    assert nilpotency_index(np.eye(3, k=1)) == 3
    assert nilpotency_index(np.eye(2) + np.eye(2, k=1)) is None


def test_chain_of_integrators_matrices():
    sys_ = chain_of_integrators(3)
    assert np.array_equal(sys_.A, np.eye(3) + np.eye(3, k=1))
    assert np.array_equal(sys_.B.ravel(), [0, 0, 1])
    assert sorted(sys_.D_v[:, 2]) == pytest.approx([-0.1, 0.1])
    assert sys_.S.contains_point(np.r_[np.ones(3), 1.0])
    assert not sys_.S.contains_point(np.r_[np.ones(3), 1.01])


def _controllable_pair(seed, n, m):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, n)), rng.normal(size=(n, m))


@given(seed=st.integers(0, 10_000), n=st.integers(1, 5), m=st.integers(1, 3))
def test_deadbeat_gain_makes_closed_loop_nilpotent(seed, n, m):
    A, B = _controllable_pair(seed, n, m)
    K = deadbeat_gain(A, B).K
    Acl = A + B @ K
    assert np.linalg.norm(np.linalg.matrix_power(Acl, n)) <= 1e-6 * max(1.0, np.linalg.norm(Acl)) ** n


def test_deadbeat_gain_on_integrator_single_input():
    sys_ = chain_of_integrators(4)
    K = deadbeat_gain(sys_.A, sys_.B).K
    assert nilpotency_index(sys_.A + sys_.B @ K, 1e-7) == 4


def test_deadbeat_zero_when_already_nilpotent():
    K = deadbeat_gain(np.eye(2, k=1), np.array([[0.0], [1.0]])).K
    assert np.array_equal(K, np.zeros((1, 2)))


def test_not_controllable():
    with pytest.raises(NotControllable) as exc:
        deadbeat_gain(np.eye(2), np.array([[1.0], [0.0]]))
    assert exc.value.rank == 1 and exc.value.n == 2


def test_prefeedback_rewrites_safe_set(rng):
    sys_ = chain_of_integrators(2)
    fb = deadbeat_gain(sys_.A, sys_.B)
    pre = apply_prefeedback(sys_, fb)
    for _ in range(200):
        x, v = rng.uniform(-1.5, 1.5, 2), rng.uniform(-2, 2, 1)
        u = fb.K @ x + v
        assert pre.S.contains_point(np.r_[x, v]) == sys_.S.contains_point(np.r_[x, u])
        assert np.allclose(pre.step(x, v, 0 * x), sys_.step(x, u, 0 * x))


def test_lift_structure():
    base = LinearSystem(np.array([[0.5]]), np.array([[1.0]]), np.array([[-0.1], [0.1]]),
                        Polytope.from_box([-1, -1], [1, 1]), NON_MEASURABLE)
    lift = lift_nonmeasurable(base)
    assert lift.measurable and lift.n == 2 and lift.n_report == 1
    assert np.allclose(lift.A, [[0.5, 1.0], [0.0, 0.0]])
    assert np.allclose(lift.B, [[0.0], [1.0]])
    assert np.allclose(lift.D_v, [[-0.1, 0.0], [0.1, 0.0]])
    assert lift.S.dim == 3
    assert np.array_equal(disturbance_embedding(1, 1), [[1.0], [0.0]])
    with pytest.raises(ValueError):
        lift_nonmeasurable(lift)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        LinearSystem(np.eye(2), np.ones((3, 1)), np.zeros((1, 2)), Polytope.from_box(-np.ones(3), np.ones(3)))
    with pytest.raises(DimensionMismatch):
        apply_prefeedback(chain_of_integrators(2), FeedbackTransform(np.zeros((1, 3))))


def test_config_round_trip():
    sys_ = chain_of_integrators(2)
    cfg = system_to_config(sys_)
    back, pf = system_from_config(cfg)
    assert pf == "auto"
    assert back.fingerprint() == sys_.fingerprint()


def test_config_with_disturbance_polytope():
    cfg = system_to_config(chain_of_integrators(1))
    cfg["D"] = {"polytope": {"G": [[1.0], [-1.0]], "h": [0.1, 0.1]}}
    sys_, _ = system_from_config(cfg)
    assert sorted(sys_.D_v.ravel()) == pytest.approx([-0.1, 0.1])
    with pytest.raises(ConfigError):
        system_from_config({"A": [[0.0]]})
    with pytest.raises(ConfigError):
        system_from_config({**cfg, "prefeedback": "sometimes"})


def test_disturbance_vertices_square():
    assert len(disturbance_vertices(Polytope.from_box([-1, -1], [1, 1]))) == 4


def test_lane_keeping_standin_shape():
    sys_ = lane_keeping_standin()
    assert sys_.n == 4 and sys_.m == 1 and sys_.D_v.shape == (2, 4)
    assert np.allclose(sys_.D_v[0], [0, 0, -0.0015, 0])
    assert sys_.S.contains_point([0.9, 1.2, 0.05, 0.3, np.pi / 2])
