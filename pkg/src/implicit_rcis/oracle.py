"""Reference computations: the iterative maximal RCIS, Monte-Carlo volume
ratios, hit-and-run sampling and brute-force invariance audits."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalFailure, UnboundedDirection
from .linsys import LinearSystem
from .lp import EPS_FEAS, ChebyshevWorkspace, chebyshev_center
from .polytope import (Box, Polytope, bounding_box, contains, is_empty, project,
                       remove_redundancy)
from .rcis import batch_membership

MAX_ITER = 200
BURN_IN = 50


@dataclass(frozen=True, eq=False)
class OracleResult:
    """Last iterate of the fixed-point iteration.

    When ``converged`` is False the set is only an outer bound of the maximal
    RCIS.
    """
    set: Polytope
    iterations: int
    converged: bool
    wall_time: float
    sizes: tuple = ()


@dataclass(frozen=True)
class VolumeEstimate:
    ratio: float
    samples: int
    seed: int
    half_width: float
    hits_a: int = 0
    hits_b: int = 0
    degenerate: bool = False


def _state_box(plant: LinearSystem, box: Box | None) -> Polytope:
    C0 = project(plant.S, range(plant.n))
    if box is not None:
        C0 = remove_redundancy(C0 & box.to_polytope())
    return C0


def _preimage_block(plant: LinearSystem, C: Polytope, d) -> tuple[np.ndarray, np.ndarray]:
    """Rows over ``(x, u)`` of ``(x, u) in S`` and ``A x + B u + d in C``."""
    G = np.vstack([plant.S.G, np.hstack([C.G @ plant.A, C.G @ plant.B])])
    h = np.r_[plant.S.h, C.h - C.G @ d]
    return G, h


def preimage(plant: LinearSystem, C: Polytope) -> Polytope:
    """One backward step ``{x : for all d in D_v exists u ...}`` of the iteration.

    Measurable disturbances get an independent ``u`` per vertex, so each
    vertex is projected on its own and the results are intersected.  For
    non-measurable ones a single ``u`` serves every vertex.
    """
    n = plant.n
    if plant.measurable:
        parts = []
        for d in plant.D_v:
            G, h = _preimage_block(plant, C, d)
            parts.append(project(Polytope(G, h, n + plant.m), range(n)))
        G = np.vstack([p.G for p in parts])
        h = np.concatenate([p.h for p in parts])
        return remove_redundancy(Polytope(G, h, n))
    blocks = [_preimage_block(plant, C, d) for d in plant.D_v]
    G = np.vstack([b[0] for b in blocks])
    h = np.concatenate([b[1] for b in blocks])
    return project(Polytope(G, h, n + plant.m), range(n))


def maximal_rcis(plant: LinearSystem, max_iter: int = MAX_ITER, box: Box | None = None,
                 tol: float = EPS_FEAS) -> OracleResult:
    """Greatest fixed point of :func:`preimage` starting from ``Proj_x(S)``.

    Iterates decrease monotonically (checked every step).  Convergence is
    detected by containment ``C_{k+1} >= C_k``, not by comparing rows.
    ``box`` bounds an ``S`` that is unbounded in ``x``.
    """
    t0 = time.perf_counter()
    C = _state_box(plant, box)
    try:
        bounding_box(C)
    except UnboundedDirection as exc:
        raise ValueError("safe set is unbounded in x; pass a bounding box") from exc
    sizes = [C.n_rows]
    for k in range(1, max_iter + 1):
        if is_empty(C):
            return OracleResult(Polytope.empty(plant.n), k - 1, True,
                                time.perf_counter() - t0, tuple(sizes))
        nxt = preimage(plant, C)
        if not contains(C, nxt, tol):
            raise NumericalFailure(f"oracle iterate {k} is not contained in iterate {k - 1}")
        sizes.append(nxt.n_rows)
        if is_empty(nxt):
            return OracleResult(Polytope.empty(plant.n), k, True,
                                time.perf_counter() - t0, tuple(sizes))
        if contains(nxt, C, tol):
            return OracleResult(nxt, k, True, time.perf_counter() - t0, tuple(sizes))
        C = nxt
    return OracleResult(C, max_iter, False, time.perf_counter() - t0, tuple(sizes))


# Monte Carlo

def mc_volume_ratio(member_a, member_b, box: Box, N: int = 10_000, seed: int = 0) -> VolumeEstimate:
    """``#hits(a) / #hits(b)`` over ``N`` uniform samples of ``box``.

    Predicates take an ``(N, dim)`` array and return a boolean array.  The
    half width is the binomial 95% interval ``1.96 sqrt(p (1 - p) / N)`` at
    ``p = min(ratio, 1)``.  With no hits in ``b`` the ratio is reported as 0
    and flagged degenerate.
    """
    rng = np.random.default_rng(seed)
    X = box.sample(rng, N)
    a = np.asarray(member_a(X), dtype=bool)
    b = np.asarray(member_b(X), dtype=bool)
    ha, hb = int(a.sum()), int(b.sum())
    if hb == 0:
        return VolumeEstimate(0.0, N, seed, 0.0, ha, hb, True)
    ratio = ha / hb
    p = min(ratio, 1.0)
    return VolumeEstimate(ratio, N, seed, 1.96 * np.sqrt(p * (1.0 - p) / N), ha, hb)


def polytope_predicate(P: Polytope, tol: float = EPS_FEAS):
    return lambda X: P.contains_points(X, tol)


def hit_and_run(P: Polytope, n: int, rng, burn_in: int = BURN_IN, thin: int = 1,
                start=None) -> np.ndarray:
    """Approximately uniform samples of a bounded, full-dimensional polytope."""
    G, h = np.asarray(P.G), np.asarray(P.h)
    if start is None:
        start, r = chebyshev_center(G, h)
        if r <= 0:
            raise ValueError("hit-and-run needs a polytope with nonempty interior")
    x = np.array(start, float)
    out = np.empty((n, P.dim))
    k = 0
    for it in range(burn_in + n * thin):
        d = rng.normal(size=P.dim)
        d /= np.linalg.norm(d)
        rate = G @ d
        slack = np.maximum(h - G @ x, 0.0)
        with np.errstate(divide="ignore"):
            t = slack / rate
        hi = np.min(t[rate > 1e-14], initial=np.inf)
        lo = np.max(t[rate < -1e-14], initial=-np.inf)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError("hit-and-run needs a bounded polytope")
        x = x + rng.uniform(lo, hi) * d
        if it >= burn_in and (it - burn_in) % thin == thin - 1:
            out[k] = x
            k += 1
    return out


def sample_members(rcis, plant_n: int, n: int, seed: int = 0, explicit: Polytope | None = None,
                   box: Box | None = None, member=None) -> np.ndarray:
    """Member states of a set.

    Uses hit-and-run in ``explicit`` when given; otherwise hit-and-run in the
    lifted polytope of ``rcis`` keeping the state coordinates (every such
    point is a member); otherwise rejection from ``box`` with ``member``.
    """
    rng = np.random.default_rng(seed)
    if explicit is not None:
        if is_empty(explicit):
            return np.zeros((0, explicit.dim))
        return hit_and_run(explicit, n, rng)
    if rcis is not None:
        if rcis.is_empty:
            return np.zeros((0, rcis.n_state))
        P = rcis.polytope
        _, r = chebyshev_center(P.G, P.h)
        if r > 1e-9:
            return hit_and_run(P, n, rng, thin=2)[:, :rcis.n_state]
        if box is None:
            full = bounding_box(P)
            box = Box(full.lower[:rcis.n_state], full.upper[:rcis.n_state])
        if member is None:
            member = lambda X: batch_membership(rcis, X)
    if box is None or member is None:
        raise ValueError("rejection sampling needs a box and a membership predicate")
    got = []
    total = 0
    while total < n:
        X = box.sample(rng, 4 * n)
        X = X[np.asarray(member(X), dtype=bool)]
        got.append(X)
        total += X.shape[0]
        if total == 0 and len(got) > 50:
            return np.zeros((0, plant_n))
    return np.vstack(got)[:n]


# invariance audit

@dataclass
class AuditReport:
    samples: int
    checks: int
    violations: int
    worst_slack: float
    seed: int
    seconds: float
    failing: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"samples": self.samples, "checks": self.checks, "violations": self.violations,
                "worst_slack": self.worst_slack, "seed": self.seed, "seconds": self.seconds,
                "failing": [list(map(float, x)) for x in self.failing[:20]]}


def _next_state_rows(plant: LinearSystem, Gx, Gw, h):
    """Feasibility rows over ``(u, w)`` for one vertex, as ``(M, rhs(x, d))``."""
    Su, Sx, hS = plant.S.G[:, plant.n:], plant.S.G[:, :plant.n], plant.S.h
    Mu = np.vstack([Su, Gx @ plant.B])
    Mw = np.vstack([np.zeros((Su.shape[0], Gw.shape[1])), Gw])

    def rhs(x, d):
        return np.r_[hS - Sx @ x, h - Gx @ (plant.A @ x + d)]
    return np.hstack([Mu, Mw]), rhs


def invariance_audit(target, plant: LinearSystem, n_samples: int = 1000, seed: int = 0,
                     samples=None, explicit: Polytope | None = None) -> AuditReport:
    """Check ``for all x in C, d in D_v: exists u with (x,u) in S, Ax+Bu+d in C``.

    ``target`` is an :class:`~implicit_rcis.rcis.ImplicitRcis` or an explicit
    :class:`Polytope` over ``x``.  Each check is a Chebyshev LP over ``u`` and
    the target's existential coordinates; a negative radius beyond tolerance
    is a violation.  For non-measurable plants one ``u`` must serve every
    vertex (with separate existential copies per vertex).
    """
    t0 = time.perf_counter()
    if isinstance(target, Polytope):
        Gx, Gw, h = target.G, np.zeros((target.n_rows, 0)), target.h
        empty = is_empty(target)
        if samples is None and not empty:
            samples = sample_members(None, plant.n, n_samples, seed, explicit=target)
    else:
        empty = target.is_empty
        if not empty:
            Gx, Gw, h = target.split()
        if samples is None and not empty:
            samples = sample_members(target, plant.n, n_samples, seed, explicit=explicit)
    if empty:
        return AuditReport(0, 0, 0, np.inf, seed, time.perf_counter() - t0)
    X = np.atleast_2d(np.asarray(samples, float))
    if X.shape[1] != plant.n:
        raise DimensionMismatch(f"samples have {X.shape[1]} coordinates, plant has {plant.n}")
    M, rhs = _next_state_rows(plant, Gx, Gw, h)
    m, nw = plant.m, Gw.shape[1]
    checks = violations = 0
    worst = np.inf
    failing = []
    if plant.measurable:
        ws = ChebyshevWorkspace(M)
        for x in X:
            bad = False
            for d in plant.D_v:
                _, r = ws.center(rhs(x, d))
                checks += 1
                worst = min(worst, r)
                bad |= r < -EPS_FEAS
            violations += bad
            if bad:
                failing.append(x)
    else:
        K = plant.D_v.shape[0]
        big = np.zeros((K * M.shape[0], m + K * nw))
        for j in range(K):
            rows = slice(j * M.shape[0], (j + 1) * M.shape[0])
            big[rows, :m] = M[:, :m]
            big[rows, m + j * nw:m + (j + 1) * nw] = M[:, m:]
        ws = ChebyshevWorkspace(big)
        for x in X:
            _, r = ws.center(np.concatenate([rhs(x, d) for d in plant.D_v]))
            checks += 1
            worst = min(worst, r)
            if r < -EPS_FEAS:
                violations += 1
                failing.append(x)
    return AuditReport(X.shape[0], checks, int(violations), float(worst), seed,
                       time.perf_counter() - t0, failing)


def convex_combination_check(plant: LinearSystem, C: Polytope, x, alpha, U) -> bool:
    """For an interior disturbance ``sum alpha_j d_j``, ``u = sum alpha_j U_j`` works.

    ``U[j]`` is a feasible input for vertex ``j``; the claim follows from the
    convexity of ``S`` and ``C``.
    """
    alpha = np.asarray(alpha, float)
    u = alpha @ np.atleast_2d(U)
    d = alpha @ plant.D_v
    ok_s = plant.S.contains_point(np.r_[x, u])
    return bool(ok_s and C.contains_point(plant.A @ x + plant.B @ u + d))
