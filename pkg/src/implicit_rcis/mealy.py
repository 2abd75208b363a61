"""Mealy-machine disturbance-feedback controllers and the dominance preorder.

Output symbols are ids only; the real-valued parameters attached to them live
in :mod:`implicit_rcis.rcis`.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StateCountExceedsCap

STATE_CAP = 100_000
NAIVE_SEQUENCE_BUDGET = 300_000


@dataclass(frozen=True, eq=False)
class MealyMachine:
    """Finite machine with ``transition[q, d] -> q'`` and ``output[q, d] -> symbol``."""
    states: tuple
    transition: np.ndarray
    output: np.ndarray
    n_symbols: int
    m: int = 1
    kind: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=np.int64)
        O = np.asarray(self.output, dtype=np.int64)
        nq = len(self.states)
        if T.ndim != 2 or T.shape[0] != nq or O.shape != T.shape:
            raise ValueError("transition and output must be |Q| x |D| tables")
        if T.size and (T.min() < 0 or T.max() >= nq):
            raise ValueError("transition references an unknown state")
        if O.size and (O.min() < 0 or O.max() >= self.n_symbols):
            raise ValueError("output references an unknown symbol")
        T.setflags(write=False)
        O.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "output", O)
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_params(self) -> int:
        return self.m * self.n_symbols

    def unused_symbols(self) -> list[int]:
        return sorted(set(range(self.n_symbols)) - set(self.output.ravel().tolist()))

    def index(self, state) -> int:
        """Index of a state given by label or index."""
        if isinstance(state, (int, np.integer)):
            return int(state)
        return self.states.index(state)

    def to_dict(self) -> dict:
        if self.kind in ("simple_loop", "tree"):
            return {"kind": self.kind, "L": self.params[0]}
        return {"kind": "custom", "states": [str(s) for s in self.states],
                "transition": self.transition.tolist(), "output": self.output.tolist(),
                "n_symbols": self.n_symbols}


def simple_loop(L: int, num_actions: int, m: int = 1) -> MealyMachine:
    """Cycle ``s_1 -> s_2 -> ... -> s_L -> s_1``, ignoring the action.

    State ``s_i`` emits symbol ``u_{i+1}`` (``u_1`` at ``s_L``).
    """
    if L < 1 or num_actions < 1:
        raise ValueError("L and num_actions must be positive")
    nxt = [(i + 1) % L for i in range(L)]
    T = np.repeat(np.array(nxt)[:, None], num_actions, axis=1)
    return MealyMachine(tuple(f"s{i + 1}" for i in range(L)), T, T.copy(), L, m,
                        "simple_loop", (L,))


def tree_state_count(L: int, K: int) -> int:
    return 1 + sum(K ** i for i in range(1, L + 1))


def tree_machine(L: int, num_actions: int, m: int = 1, cap: int = STATE_CAP) -> MealyMachine:
    """Memory of the last ``L`` actions.

    States are ``s0`` and every action string of length ``1..L`` (ordered by
    length, then lexicographically).  Reading ``d`` appends it, dropping the
    oldest action once the window is full.  Every non-root state ``s`` owns one
    symbol ``u(s)`` and ``o(s, d) = u(T(s, d))``.
    """
    K = num_actions
    if L < 1 or K < 1:
        raise ValueError("L and num_actions must be positive")
    count = tree_state_count(L, K)
    if count > cap:
        raise StateCountExceedsCap(f"tree machine would have {count} states (cap {cap})")
    words = [()]
    for length in range(1, L + 1):
        words.extend(itertools.product(range(K), repeat=length))
    where = {w: i for i, w in enumerate(words)}
    T = np.empty((count, K), dtype=np.int64)
    for i, w in enumerate(words):
        for d in range(K):
            nxt = (w + (d,)) if len(w) < L else (w[1:] + (d,))
            T[i, d] = where[nxt]
    labels = ["s0"] + ["d" + "".join(str(a + 1) for a in w) for w in words[1:]]
    return MealyMachine(tuple(labels), T, T - 1, count - 1, m, "tree", (L,))


def machine_from_config(cfg: dict, num_actions: int, m: int = 1) -> MealyMachine:
    kind = cfg.get("kind")
    if kind == "simple_loop":
        return simple_loop(int(cfg["L"]), num_actions, m)
    if kind == "tree":
        return tree_machine(int(cfg["L"]), num_actions, m)
    if kind == "custom":
        T = np.asarray(cfg["transition"], dtype=np.int64)
        O = np.asarray(cfg["output"], dtype=np.int64)
        if T.shape[1] != num_actions:
            raise ConfigError(f"custom machine has {T.shape[1]} actions but the plant has "
                              f"{num_actions} disturbance vertices")
        n_sym = int(cfg.get("n_symbols", O.max() + 1))
        states = cfg.get("states") or [f"s{i + 1}" for i in range(T.shape[0])]
        return MealyMachine(tuple(states), T, O, n_sym, m, "custom")
    raise ConfigError(f"unknown machine kind {kind!r}")


def nested_transition(machine: MealyMachine, s, dseq) -> int:
    q = machine.index(s)
    for d in dseq:
        q = int(machine.transition[q, d])
    return q


def nested_output(machine: MealyMachine, s, dseq) -> int:
    """Symbol emitted at the last action of ``dseq`` when started in ``s``."""
    if len(dseq) == 0:
        raise ValueError("action sequence must be nonempty")
    q = nested_transition(machine, s, dseq[:-1])
    return int(machine.output[q, dseq[-1]])


@dataclass(frozen=True)
class ProductMachine:
    base: MealyMachine

    @property
    def states(self):
        nq = self.base.n_states
        return [(i, j) for i in range(nq) for j in range(nq)]

    def transition(self, pair, d):
        T = self.base.transition
        return int(T[pair[0], d]), int(T[pair[1], d])

    def output(self, pair, d):
        O = self.base.output
        return int(O[pair[0], d]), int(O[pair[1], d])

    def reachable(self, start):
        seen = {start}
        queue = deque([start])
        while queue:
            p = queue.popleft()
            for d in range(self.base.n_actions):
                q = self.transition(p, d)
                if q not in seen:
                    seen.add(q)
                    queue.append(q)
        return seen


def product(machine: MealyMachine, cap: int = STATE_CAP) -> ProductMachine:
    if machine.n_states ** 2 > cap:
        raise StateCountExceedsCap(f"product machine would have {machine.n_states ** 2} states")
    return ProductMachine(machine)


def _emitted_pairs(machine: MealyMachine, i: int, j: int) -> set:
    prod = ProductMachine(machine)
    pairs = set()
    for p in prod.reachable((i, j)):
        for d in range(machine.n_actions):
            pairs.add(prod.output(p, d))
    return pairs


def _is_function(pairs) -> bool:
    image = {}
    for a, b in pairs:
        if image.setdefault(a, b) != b:
            return False
    return True


def dominates(machine: MealyMachine, s1, s2) -> bool:
    """``s1 >= s2`` in the dominance preorder.

    Every action sequence drives the synchronized product from ``(s1, s2)``
    to a reachable pair and emits a symbol pair.  ``s1`` dominates ``s2``
    exactly when those pairs define a function from ``s1``-symbols to
    ``s2``-symbols: equal outputs from ``s1`` never separate from ``s2``.
    """
    return _is_function(_emitted_pairs(machine, machine.index(s1), machine.index(s2)))


def dominates_naive(machine: MealyMachine, s1, s2, budget: int = NAIVE_SEQUENCE_BUDGET) -> bool:
    """Reference check by explicit enumeration of action sequences.

    Sequences of length ``1 .. |Q|^2 + 1`` are enumerated, truncated once the
    number of sequences at a length would exceed ``budget``.
    """
    i, j = machine.index(s1), machine.index(s2)
    K = machine.n_actions
    T, O = machine.transition, machine.output
    max_len = machine.n_states ** 2 + 1
    first: dict[int, int] = {}
    q1 = np.array([i])
    q2 = np.array([j])
    for _ in range(max_len):
        if q1.size * K > budget:
            break
        codes = np.unique(O[q1].ravel() * machine.n_symbols + O[q2].ravel())
        for a, b in zip((codes // machine.n_symbols).tolist(), (codes % machine.n_symbols).tolist()):
            if first.setdefault(a, b) != b:
                return False
        q1 = T[q1].ravel()
        q2 = T[q2].ravel()
    return True


def dominance_matrix(machine: MealyMachine) -> np.ndarray:
    nq = machine.n_states
    M = np.zeros((nq, nq), dtype=bool)
    for a in range(nq):
        for b in range(nq):
            M[a, b] = a == b or dominates(machine, a, b)
    return M


def find_dominant(machine: MealyMachine):
    """Lowest-index state dominating every state, or None."""
    for s in range(machine.n_states):
        if all(t == s or dominates(machine, s, t) for t in range(machine.n_states)):
            return s
    return None


def maximal_states(machine: MealyMachine, dom: np.ndarray | None = None) -> list[int]:
    dom = dominance_matrix(machine) if dom is None else dom
    nq = machine.n_states
    return [s for s in range(nq) if all(dom[s, t] for t in range(nq) if dom[t, s])]


def maximal_partition(machine: MealyMachine) -> list[int]:
    """One representative (lowest index) per component of the maximal states.

    Components are the transitive closure of "one dominates the other"
    restricted to the maximal states.
    """
    dom = dominance_matrix(machine)
    qmax = maximal_states(machine, dom)
    parent = {s: s for s in qmax}

    def find(s):
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    for a in qmax:
        for b in qmax:
            if dom[a, b] or dom[b, a]:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    return sorted({find(s) for s in qmax})


def dominance_report(machine: MealyMachine) -> dict:
    dom_state = find_dominant(machine)
    report = {"kind": machine.kind, "n_states": machine.n_states,
              "n_actions": machine.n_actions, "n_symbols": machine.n_symbols,
              "unused_symbols": machine.unused_symbols()}
    if dom_state is not None:
        report["dominant"] = machine.states[dom_state]
        dom = dominance_matrix(machine) if machine.n_states <= 64 else None
        if dom is not None:
            report["all_mutually_dominant"] = bool(dom.all())
        report["Q0"] = [machine.states[dom_state]]
    else:
        report["dominant"] = None
        report["Q0"] = [machine.states[s] for s in maximal_partition(machine)]
    return report
