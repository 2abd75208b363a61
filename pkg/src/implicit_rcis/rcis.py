"""Closed-form implicit robust controlled invariant sets.

A Mealy machine closes the loop around a plant with nilpotent ``A``.  The
reachable set of the augmented system from any ``(x, theta, s)`` is finite
and affine in ``(x, theta)``, so requiring it to stay safe is a finite list of
linear inequalities: the polytope ``C_sub(s)``.  Its projection onto ``x`` (or
the projection of the convex-combination lift ``C_lambda`` built from several
of them) is a robust controlled invariant set.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotNilpotent, ReachSetExceedsCap, UnboundedCsub, UnboundedDirection
from .linsys import LinearSystem
from .lp import EPS_FEAS, ChebyshevWorkspace, chebyshev_center
from .mealy import MealyMachine, find_dominant, maximal_partition
from .polytope import (Box, Polytope, bounding_box, is_empty, project, project_support,
                       remove_redundancy, _normalized_unique)

EPS_DEDUP = 1e-9
REACH_CAP = 1_000_000
# eliminate at most this many coordinates by Fourier-Motzkin in explicit_projection
FM_AUTO_ELIM = 6

SINGLE_CSUB = "SingleCsub"
LAMBDA = "Lambda"
EMPTY = "Empty"


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    plant: LinearSystem
    machine: MealyMachine

    def __post_init__(self):
        if self.plant.h_nilp is None:
            raise NotNilpotent("plant A must be nilpotent (apply a deadbeat pre-feedback first)")
        if self.machine.n_actions != self.plant.D_v.shape[0]:
            raise DimensionMismatch(
                f"machine has {self.machine.n_actions} actions, plant has "
                f"{self.plant.D_v.shape[0]} disturbance vertices")
        if self.machine.m != self.plant.m:
            raise DimensionMismatch("machine input dimension differs from the plant's")

    @property
    def n(self):
        return self.plant.n

    @property
    def m(self):
        return self.plant.m

    @property
    def L(self):
        return self.machine.n_symbols

    @property
    def n_theta(self):
        return self.m * self.L


@dataclass(frozen=True, eq=False)
class SymbolicReachState:
    """Plant state ``Cx x + Ctheta theta + c`` paired with a machine state."""
    auto_state: int
    Cx: np.ndarray
    Ctheta: np.ndarray
    c: np.ndarray
    depth: int = 0

    def evaluate(self, x, theta):
        return self.Cx @ x + self.Ctheta @ theta + self.c


def _key(q, Cx, Ct, c):
    blob = np.concatenate([Cx.ravel(), Ct.ravel(), c])
    return q, np.round(blob / EPS_DEDUP).astype(np.int64).tobytes()


def enumerate_reachable(aug: AugmentedSystem, s0, cap: int = REACH_CAP) -> list[SymbolicReachState]:
    """All distinct symbolic states reachable from ``(x, theta, s0)``, BFS order."""
    A, B, Dv = aug.plant.A, aug.plant.B, aug.plant.D_v
    T, O = aug.machine.transition, aug.machine.output
    n, m = aug.n, aug.m
    q0 = aug.machine.index(s0)
    start = SymbolicReachState(q0, np.eye(n), np.zeros((n, aug.n_theta)), np.zeros(n), 0)
    seen = {_key(q0, start.Cx, start.Ctheta, start.c)}
    out = [start]
    queue = deque([start])
    while queue:
        st = queue.popleft()
        ACx = A @ st.Cx
        ACt = A @ st.Ctheta
        Ac = A @ st.c
        for j in range(Dv.shape[0]):
            k = O[st.auto_state, j]
            Ct = ACt.copy()
            Ct[:, k * m:(k + 1) * m] += B
            c = Ac + Dv[j]
            q = int(T[st.auto_state, j])
            key = _key(q, ACx, Ct, c)
            if key in seen:
                continue
            seen.add(key)
            nxt = SymbolicReachState(q, ACx, Ct, c, st.depth + 1)
            out.append(nxt)
            queue.append(nxt)
            if len(out) > cap:
                raise ReachSetExceedsCap(f"more than {cap} symbolic reachable states")
    return out


def csub_rows(aug: AugmentedSystem, reach: list[SymbolicReachState]):
    """Raw safety rows over ``(x, theta)`` for every reachable state and action."""
    Gx, Gu, hS = aug.plant.safe_split()
    m = aug.m
    O = aug.machine.output
    nd = aug.plant.D_v.shape[0]
    Gs, hs = [], []
    for st in reach:
        base_x = Gx @ st.Cx
        base_t = Gx @ st.Ctheta
        rhs = hS - Gx @ st.c
        for k in sorted({int(O[st.auto_state, j]) for j in range(nd)}):
            Gt = base_t.copy()
            Gt[:, k * m:(k + 1) * m] += Gu
            Gs.append(np.hstack([base_x, Gt]))
            hs.append(rhs)
    return np.vstack(Gs), np.concatenate(hs)


def build_csub(aug: AugmentedSystem, s_i, prune: bool = True, report: dict | None = None) -> Polytope:
    """``C_sub(s_i)``: pairs ``(x, theta)`` whose closed-loop trajectories stay safe."""
    t0 = time.perf_counter()
    reach = enumerate_reachable(aug, s_i)
    G, h = csub_rows(aug, reach)
    dim = aug.n + aug.n_theta
    raw_rows = G.shape[0]
    norm = _normalized_unique(G, h)
    if norm is None:
        poly = Polytope.empty(dim)
    else:
        poly = Polytope(norm[0], norm[1], dim)
        unique_rows = poly.n_rows
        if prune:
            poly = remove_redundancy(poly)
    if report is not None:
        report.update({
            "state": aug.machine.states[aug.machine.index(s_i)],
            "reachable_states": len(reach),
            "rows_raw": raw_rows,
            "rows_unique": unique_rows if norm is not None else 0,
            "rows_final": poly.n_rows,
            "seconds": time.perf_counter() - t0,
        })
    return poly


def build_clambda(csubs: list[Polytope], boxes: list[Box]) -> Polytope:
    """Convex-hull lift of the boxed blocks ``B_i & C_sub_i``.

    Variable layout: ``(z, z_1, ..., z_q, lambda_1, ..., lambda_q)`` where each
    ``z`` is a point of the common block space.
    """
    if not csubs:
        raise ValueError("need at least one block")
    if len(boxes) != len(csubs):
        raise ValueError("one box per block is required")
    p = csubs[0].dim
    q = len(csubs)
    dim = p * (1 + q) + q
    rows, rhs = [], []
    for i, (C, box) in enumerate(zip(csubs, boxes)):
        if C.dim != p or box.dim != p:
            raise DimensionMismatch("all blocks must share one ambient dimension")
        Cb = Polytope(np.vstack([C.G, box.to_polytope().G]), np.r_[C.h, box.to_polytope().h], p)
        blk = np.zeros((Cb.n_rows, dim))
        blk[:, p * (1 + i):p * (2 + i)] = Cb.G
        blk[:, p * (1 + q) + i] = -Cb.h
        rows.append(blk)
        rhs.append(np.zeros(Cb.n_rows))
    lam = np.zeros((q, dim))
    lam[np.arange(q), p * (1 + q) + np.arange(q)] = -1.0
    rows.append(lam)
    rhs.append(np.zeros(q))
    eq = np.zeros((1 + p, dim))
    eq[0, p * (1 + q):] = 1.0
    eq[1:, :p] = -np.eye(p)
    for i in range(q):
        eq[1:, p * (1 + i):p * (2 + i)] = np.eye(p)
    eq_rhs = np.r_[1.0, np.zeros(p)]
    rows.extend([eq, -eq])
    rhs.extend([eq_rhs, -eq_rhs])
    return Polytope(np.vstack(rows), np.concatenate(rhs), dim)


@dataclass(frozen=True, eq=False)
class ImplicitRcis:
    """Implicit invariant set: ``x`` is a member iff its fiber in ``polytope`` is nonempty.

    The first ``n_state`` coordinates of ``polytope`` are the reported state;
    every other coordinate is existentially quantified.
    """
    kind: str
    n_state: int
    n_plant: int
    m: int
    L: int
    polytope: Polytope
    s_dom: str | None = None
    q0: tuple = ()
    blocks: tuple = ()
    provenance: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return self.kind == EMPTY

    def split(self):
        """``(G_x, G_w, h)``: ``x`` is a member iff ``G_x x + G_w w <= h`` for some ``w``."""
        G = self.polytope.G
        return G[:, :self.n_state], G[:, self.n_state:], self.polytope.h

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "n_state": self.n_state, "n_plant": self.n_plant,
            "m": self.m, "L": self.L, "s_dom": self.s_dom, "q0": list(self.q0),
            "polytope": self.polytope.to_dict(),
            "blocks": [b.to_dict() for b in self.blocks],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImplicitRcis":
        return cls(
            kind=data["kind"], n_state=int(data["n_state"]), n_plant=int(data["n_plant"]),
            m=int(data["m"]), L=int(data["L"]),
            polytope=Polytope.from_dict(data["polytope"]),
            s_dom=data.get("s_dom"), q0=tuple(data.get("q0", ())),
            blocks=tuple(Polytope.from_dict(b) for b in data.get("blocks", ())),
            provenance=data.get("provenance", {}),
        )


def _pin_free_coordinates(C: Polytope, n: int) -> Polytope:
    """Fix parameter coordinates that no row mentions (symbols a state never emits) at 0.

    They are unconstrained, so pinning them leaves every projection unchanged
    and keeps the block bounded.  State coordinates are never pinned.
    """
    free = n + np.nonzero(np.all(np.abs(C.G[:, n:]) <= 1e-12, axis=0))[0]
    if free.size == 0:
        return C
    E = np.zeros((free.size, C.dim))
    E[np.arange(free.size), free] = 1.0
    return Polytope(np.vstack([C.G, E, -E]), np.r_[C.h, np.zeros(2 * free.size)], C.dim)


def compute_implicit_rcis(plant: LinearSystem, machine: MealyMachine, prune: bool = True) -> ImplicitRcis:
    """Dominant-state fast path, else the ``C_lambda`` lift over one maximal state per component."""
    if not plant.measurable:
        raise ValueError("compute_implicit_rcis expects a measurable-disturbance plant; "
                         "lift non-measurable plants first")
    t0 = time.perf_counter()
    aug = AugmentedSystem(plant, machine)
    n_state = plant.n_report
    prov = {"machine": machine.to_dict(), "plant": plant.fingerprint(), "plant_name": plant.name}
    report: dict = {"blocks": []}
    s_dom = find_dominant(machine)
    report["dominance_seconds"] = time.perf_counter() - t0
    common = dict(n_state=n_state, n_plant=plant.n, m=plant.m, L=machine.n_symbols, provenance=prov)
    if s_dom is not None:
        blk: dict = {}
        C = build_csub(aug, s_dom, prune=prune, report=blk)
        report["blocks"].append(blk)
        report["seconds"] = time.perf_counter() - t0
        label = machine.states[s_dom]
        if is_empty(C):
            return ImplicitRcis(EMPTY, polytope=Polytope.empty(C.dim), s_dom=label,
                                q0=(label,), report=report, **common)
        return ImplicitRcis(SINGLE_CSUB, polytope=C, s_dom=label, q0=(label,),
                            report=report, **common)
    q0 = maximal_partition(machine)
    kept, boxes, labels = [], [], []
    for s in q0:
        blk = {}
        C = build_csub(aug, s, prune=prune, report=blk)
        report["blocks"].append(blk)
        if is_empty(C):
            blk["empty"] = True
            continue
        C = _pin_free_coordinates(C, aug.n)
        try:
            box = bounding_box(C)
        except UnboundedDirection as exc:
            raise UnboundedCsub(f"C_sub({machine.states[s]}) is unbounded along coordinate "
                                f"{exc.coordinate}; the safe set must be bounded") from exc
        kept.append(C)
        boxes.append(box)
        labels.append(machine.states[s])
    report["seconds"] = time.perf_counter() - t0
    all_q0 = tuple(machine.states[s] for s in q0)
    if not kept:
        dim = aug.n + aug.n_theta
        return ImplicitRcis(EMPTY, polytope=Polytope.empty(dim), q0=all_q0, report=report, **common)
    lam = build_clambda(kept, boxes)
    blocks = tuple(Polytope(np.vstack([C.G, b.to_polytope().G]), np.r_[C.h, b.to_polytope().h])
                   for C, b in zip(kept, boxes))
    return ImplicitRcis(LAMBDA, polytope=lam, q0=tuple(labels), blocks=blocks,
                        report=report, **common)


@dataclass(frozen=True)
class Membership:
    member: bool
    slack: float
    certificate: np.ndarray | None


def fiber_check(rcis: ImplicitRcis, x, workspace: ChebyshevWorkspace | None = None) -> Membership:
    """Existential LP over the non-state coordinates with ``x`` pinned.

    Pass a :func:`fiber_workspace` to warm-start repeated queries.
    """
    x = np.asarray(x, float)
    if x.size != rcis.n_state:
        raise DimensionMismatch(f"point has length {x.size}, expected {rcis.n_state}")
    if rcis.kind == EMPTY:
        return Membership(False, -np.inf, None)
    Gx, Gw, h = rcis.split()
    rhs = h - Gx @ x
    if Gw.shape[1] == 0:
        slack = float(np.min(rhs / np.maximum(np.linalg.norm(Gx, axis=1), 1e-12)))
        return Membership(slack >= -EPS_FEAS, slack, np.zeros(0))
    if workspace is None:
        w, r = chebyshev_center(Gw, rhs)
    else:
        w, r = workspace.center(rhs)
    if not np.isfinite(r):
        return Membership(False, r, None)
    return Membership(r >= -EPS_FEAS, r, w)


def fiber_workspace(rcis: ImplicitRcis) -> ChebyshevWorkspace:
    return ChebyshevWorkspace(rcis.split()[1])


def membership(rcis: ImplicitRcis, x) -> bool:
    return fiber_check(rcis, x).member


def batch_membership(rcis: ImplicitRcis, X) -> np.ndarray:
    """Vectorized-interface membership for an ``(N, n_state)`` array."""
    X = np.atleast_2d(np.asarray(X, float))
    if rcis.kind == EMPTY:
        return np.zeros(X.shape[0], dtype=bool)
    ws = fiber_workspace(rcis) if rcis.polytope.dim > rcis.n_state else None
    return np.array([fiber_check(rcis, x, ws).member for x in X], dtype=bool)


def explicit_projection(rcis: ImplicitRcis, prune: bool = True, method: str = "auto") -> Polytope:
    """State-space H-representation of the invariant set.

    ``method`` is ``"fm"`` (Fourier-Motzkin, guarded by the row cap),
    ``"support"`` (exact hull refinement by support LPs) or ``"auto"``, which
    uses Fourier-Motzkin only when few coordinates are eliminated.
    """
    if rcis.kind == EMPTY:
        return Polytope.empty(rcis.n_state)
    keep = range(rcis.n_state)
    if method not in ("auto", "fm", "support"):
        raise ValueError(f"unknown projection method {method!r}")
    n_elim = rcis.polytope.dim - rcis.n_state
    if method == "fm" or (method == "auto" and (n_elim <= FM_AUTO_ELIM or rcis.n_state == 1)):
        return project(rcis.polytope, keep, prune=prune)
    return project_support(rcis.polytope, keep)
