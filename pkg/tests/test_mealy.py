import numpy as np
import pytest
from hypothesis import given, strategies as st

from implicit_rcis.errors import ConfigError, StateCountExceedsCap
from implicit_rcis.mealy import (MealyMachine, dominance_matrix, dominance_report, dominates,
                                 dominates_naive, find_dominant, machine_from_config, maximal_partition,
                                 maximal_states, nested_output, nested_transition, product,
                                 simple_loop, tree_machine, tree_state_count)


def no_dominance_machine():
    """Two self-looping states whose action partitions are incomparable."""
    return MealyMachine(("a", "b"), [[0, 0, 0], [1, 1, 1]], [[0, 0, 1], [2, 3, 3]], 4)


def test_tree_L1_K2():
    M = tree_machine(1, 2)
    assert M.n_states == 3 and M.n_symbols == 2
    # output depends only on the last action, from every state
    for s in range(3):
        assert list(M.output[s]) == [0, 1]


def test_tree_L3_K2_structure():
    M = tree_machine(3, 2)
    assert M.n_states == 15 and M.n_symbols == 14
    assert M.states[0] == "s0"
    assert M.states[nested_transition(M, 0, [0, 1, 1])] == "d122"
    # sliding window: after four actions only the last three are remembered
    assert M.states[nested_transition(M, 0, [0, 1, 1, 0])] == "d221"
    assert nested_output(M, 0, [1, 0]) == M.states.index("d21") - 1


@given(L=st.integers(1, 4), K=st.integers(1, 4))
def test_tree_state_count(L, K):
    assert tree_machine(L, K).n_states == tree_state_count(L, K) == sum(K ** i for i in range(L + 1))


def test_tree_cap():
    with pytest.raises(StateCountExceedsCap):
        tree_machine(10, 4, cap=1000)


def test_simple_loop_structure():
    M = simple_loop(4, 3)
    assert M.n_states == 4 and M.n_symbols == 4
    assert list(M.transition[:, 0]) == [1, 2, 3, 0]
    assert np.array_equal(M.output, M.transition)


def test_simple_loop_all_mutually_dominant():
    M = simple_loop(5, 2)
    assert dominance_matrix(M).all()
    rep = dominance_report(M)
    assert rep["dominant"] == "s1" and rep["all_mutually_dominant"]


def test_tree_root_dominates():
    M = tree_machine(2, 2)
    assert all(dominates(M, 0, s) for s in range(M.n_states))
    assert find_dominant(M) == 0


def test_no_dominance_machine():
    M = no_dominance_machine()
    assert not dominates(M, "a", "b") and not dominates(M, "b", "a")
    assert find_dominant(M) is None
    assert maximal_states(M) == [0, 1]
    assert maximal_partition(M) == [0, 1]
    rep = dominance_report(M)
    assert rep["dominant"] is None and rep["Q0"] == ["a", "b"]


def test_maximal_partition_merges_comparable_states():
    # c is dominated by a; a and b are mutually dominant
    M = MealyMachine(("a", "b", "c"), [[0, 0], [1, 1], [2, 2]], [[0, 1], [2, 3], [4, 4]], 5)
    assert dominates(M, "a", "b") and dominates(M, "b", "a")
    assert dominates(M, "a", "c") and not dominates(M, "c", "a")
    assert maximal_partition(M) == [0]


def random_machine(draw_seed, nq, K, n_sym):
    rng = np.random.default_rng(draw_seed)
    T = rng.integers(0, nq, size=(nq, K))
    O = rng.integers(0, n_sym, size=(nq, K))
    return MealyMachine(tuple(f"q{i}" for i in range(nq)), T, O, n_sym)


@given(seed=st.integers(0, 100_000), nq=st.integers(1, 7), K=st.integers(1, 3), n_sym=st.integers(1, 4))
def test_dominance_agrees_with_sequence_enumeration(seed, nq, K, n_sym):
    M = random_machine(seed, nq, K, n_sym)
    for a in range(nq):
        for b in range(nq):
            assert dominates(M, a, b) == dominates_naive(M, a, b)


@given(seed=st.integers(0, 100_000), nq=st.integers(1, 6))
def test_dominance_is_a_preorder(seed, nq):
    D = dominance_matrix(random_machine(seed, nq, 2, 3))
    assert D.diagonal().all()
    # transitivity
    for a in range(nq):
        for b in range(nq):
            for c in range(nq):
                if D[a, b] and D[b, c]:
                    assert D[a, c]


def test_product_reachable_and_cap():
    M = tree_machine(1, 2)
    P = product(M)
    assert len(P.states) == 9
    assert (0, 0) in P.reachable((0, 0))
    with pytest.raises(StateCountExceedsCap):
        product(tree_machine(3, 2), cap=100)


def test_machine_from_config():
    assert machine_from_config({"kind": "tree", "L": 2}, 2).n_states == 7
    assert machine_from_config({"kind": "simple_loop", "L": 3}, 2).n_states == 3
    M = machine_from_config({"kind": "custom", "transition": [[0, 0, 0], [1, 1, 1]],
                             "output": [[0, 0, 1], [2, 3, 3]]}, 3)
    assert M.n_symbols == 4 and M.states == ("s1", "s2")
    with pytest.raises(ConfigError):
        machine_from_config({"kind": "custom", "transition": [[0, 0]], "output": [[0, 0]]}, 3)
    with pytest.raises(ConfigError):
        machine_from_config({"kind": "ring", "L": 2}, 2)


def test_invalid_tables():
    with pytest.raises(ValueError):
        MealyMachine(("a",), [[1]], [[0]], 1)
    with pytest.raises(ValueError):
        MealyMachine(("a",), [[0]], [[2]], 1)
    with pytest.raises(ValueError):
        nested_output(tree_machine(1, 2), 0, [])


def test_unused_symbols():
    M = MealyMachine(("a",), [[0]], [[1]], 3)
    assert M.unused_symbols() == [0, 2]
