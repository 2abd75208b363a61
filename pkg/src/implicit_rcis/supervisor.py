"""Minimal-correction supervision of nominal inputs and closed-loop rollouts.

Each step solves ``min ||u - u_d||^2`` over ``u`` and the existential
coordinates of the invariant set, subject to ``(x, u) in S`` and membership of
the successor ``A x + B u + d``.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractBreach, DimensionMismatch, NumericalFailure
from .linsys import LinearSystem
from .lp import EPS_FEAS, chebyshev_center
from .polytope import Polytope
from .rcis import EMPTY, ImplicitRcis

TOL_QP = 1e-7


class QpStatus(enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class QpResult:
    status: QpStatus
    z: np.ndarray | None = None
    objective: float = float("nan")
    multipliers: np.ndarray | None = None
    iterations: int = 0


def _null_space(M, n, tol=1e-10):
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol * max(1.0, s.max(initial=0.0))))
    return vt[rank:].T


def qp_solve(H, f, ineq: Polytope | None = None, eq=None, x0=None,
             max_iter: int = 1000, tol: float = TOL_QP) -> QpResult:
    """Primal active-set method for ``min 1/2 z'Hz + f'z`` with ``H`` PSD.

    ``ineq`` holds ``G z <= h``; ``eq`` is an optional pair ``(A, b)`` for
    ``A z = b``.  Starting from a feasible point (the Chebyshev center when
    ``x0`` is not given), each iteration solves the equality-constrained
    subproblem on the working set.  Where ``H`` is singular on that subspace
    the method follows a zero-curvature descent direction until a constraint
    blocks it.
    """
    H = np.atleast_2d(np.asarray(H, float))
    f = np.asarray(f, float)
    n = f.size
    if H.shape != (n, n):
        raise DimensionMismatch(f"H has shape {H.shape}, expected {(n, n)}")
    G = np.zeros((0, n)) if ineq is None else np.asarray(ineq.G)
    h = np.zeros(0) if ineq is None else np.asarray(ineq.h)
    Aeq, beq = (np.zeros((0, n)), np.zeros(0)) if eq is None else (
        np.atleast_2d(np.asarray(eq[0], float)), np.asarray(eq[1], float))
    norms = np.linalg.norm(G, axis=1)
    zero = norms <= 1e-14
    if np.any(h[zero] < -EPS_FEAS):
        return QpResult(QpStatus.INFEASIBLE)
    kept = np.nonzero(~zero)[0]
    norms = norms[kept]
    G, h = G[kept] / norms[:, None], h[kept] / norms
    if x0 is None:
        Gall = np.vstack([G, Aeq, -Aeq])
        hall = np.r_[h, beq, -beq]
        if Gall.shape[0] == 0:
            z = np.zeros(n)
        else:
            z, r = chebyshev_center(Gall, hall)
            if r < -EPS_FEAS:
                return QpResult(QpStatus.INFEASIBLE)
    else:
        z = np.array(x0, float)
    work: list[int] = [int(i) for i in np.nonzero(G @ z - h > -1e-12)[0]] if x0 is not None else []
    # keep the initial working set linearly independent
    indep: list[int] = []
    for i in work:
        rows = np.vstack([Aeq, G[indep + [i]]])
        if np.linalg.matrix_rank(rows, tol=1e-9) == rows.shape[0]:
            indep.append(i)
    work = indep
    n_eq = Aeq.shape[0]
    at_min = False
    for it in range(max_iter):
        g = H @ z + f
        Aw = np.vstack([Aeq, G[work]])
        k = Aw.shape[0]
        if at_min or (k >= n and np.linalg.matrix_rank(Aw, tol=1e-9) >= n):
            # subspace minimizer: only the multipliers are needed
            p = np.zeros(n)
            lam = np.linalg.lstsq(Aw.T, -g, rcond=None)[0] if k else np.zeros(0)
            step_cap = 1.0
        else:
            K = np.block([[H, Aw.T], [Aw, np.zeros((k, k))]])
            rhs = np.r_[-g, np.zeros(k)]
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            if np.linalg.norm(K @ sol - rhs) <= 1e-9 * (1.0 + np.linalg.norm(rhs)):
                p, lam, step_cap = sol[:n], sol[n:], 1.0
            else:
                N = _null_space(np.vstack([H, Aw]), n)
                p, lam, step_cap = -N @ (N.T @ g), None, np.inf
        at_min = False
        if np.linalg.norm(p) <= 1e-12 * (1.0 + np.linalg.norm(z)):
            if lam is None:
                lam = np.linalg.lstsq(Aw.T, -g, rcond=None)[0] if k else np.zeros(0)
            lam_in = lam[n_eq:]
            if lam_in.size == 0 or lam_in.min() >= -tol:
                mult = np.zeros(zero.size)
                mult[kept[work]] = lam_in / norms[work]
                return QpResult(QpStatus.FEASIBLE, z, float(0.5 * z @ H @ z + f @ z),
                                mult, it)
            work.pop(int(np.argmin(lam_in)))
            continue
        rate = G @ p
        slack = np.maximum(h - G @ z, 0.0)
        inactive = np.ones(G.shape[0], dtype=bool)
        inactive[work] = False
        cand = np.nonzero(inactive & (rate > 1e-12))[0]
        alpha = step_cap
        block = -1
        if cand.size:
            t = slack[cand] / rate[cand]
            j = int(np.argmin(t))
            if t[j] < alpha:
                alpha, block = float(t[j]), int(cand[j])
        if not np.isfinite(alpha):
            raise NumericalFailure("QP is unbounded below")
        z = z + alpha * p
        if block >= 0:
            work.append(block)
        else:
            at_min = step_cap == 1.0
    raise NumericalFailure("active-set QP iteration cap reached")


# supervision

@dataclass(frozen=True)
class SupervisionStep:
    t: int
    x: np.ndarray
    d: np.ndarray
    u_nominal: np.ndarray
    u_applied: np.ndarray | None
    correction_norm: float
    qp_status: QpStatus
    certificate: np.ndarray | None = None


def _successor_rows(plant: LinearSystem, Gx, Gw, h, x, d):
    """Rows over ``(u, w)``: ``(x, u) in S`` and ``(A x + B u + d, w)`` in the set."""
    n = plant.n
    Sx, Su, hS = plant.S.G[:, :n], plant.S.G[:, n:], plant.S.h
    top = np.hstack([Su, np.zeros((Su.shape[0], Gw.shape[1]))])
    bot = np.hstack([Gx @ plant.B, Gw])
    return np.vstack([top, bot]), np.r_[hS - Sx @ x, h - Gx @ (plant.A @ x + d)]


def _nonmeasurable_rows(plant: LinearSystem, Gx, Gw, h, x):
    """One ``u`` for every vertex, with an existential copy per vertex."""
    m, nw = plant.m, Gw.shape[1]
    K = plant.D_v.shape[0]
    blocks, rhs = [], []
    for j, d in enumerate(plant.D_v):
        M, r = _successor_rows(plant, Gx, Gw, h, x, d)
        big = np.zeros((M.shape[0], m + K * nw))
        big[:, :m] = M[:, :m]
        big[:, m + j * nw:m + (j + 1) * nw] = M[:, m:]
        blocks.append(big)
        rhs.append(r)
    return np.vstack(blocks), np.concatenate(rhs)


def _supervise(plant: LinearSystem, Gx, Gw, h, x, u_d, d, t: int) -> SupervisionStep:
    x = np.asarray(x, float)
    u_d = np.atleast_1d(np.asarray(u_d, float))
    d = np.asarray(d, float)
    if x.size != plant.n or u_d.size != plant.m or d.size != plant.n:
        raise DimensionMismatch("x, u_d and d must match the plant dimensions")
    if plant.measurable:
        M, r = _successor_rows(plant, Gx, Gw, h, x, d)
    else:
        M, r = _nonmeasurable_rows(plant, Gx, Gw, h, x)
    m = plant.m
    nz = M.shape[1]
    # zero-correction fast path: keep u_d exactly when it is admissible
    if nz > m:
        w, rad = chebyshev_center(M[:, m:], r - M[:, :m] @ u_d)
        if rad >= -EPS_FEAS:
            return SupervisionStep(t, x, d, u_d, u_d.copy(), 0.0, QpStatus.FEASIBLE, w)
    else:
        scale = np.maximum(np.linalg.norm(M, axis=1), 1e-12)
        if np.all((M @ u_d - r) / scale <= EPS_FEAS):
            return SupervisionStep(t, x, d, u_d, u_d.copy(), 0.0, QpStatus.FEASIBLE, np.zeros(0))
    Hq = np.zeros((nz, nz))
    Hq[:m, :m] = 2.0 * np.eye(m)
    fq = np.r_[-2.0 * u_d, np.zeros(nz - m)]
    res = qp_solve(Hq, fq, Polytope(M, r, nz))
    if res.status is QpStatus.INFEASIBLE:
        return SupervisionStep(t, x, d, u_d, None, np.inf, QpStatus.INFEASIBLE)
    u = res.z[:m]
    return SupervisionStep(t, x, d, u_d, u, float(np.linalg.norm(u - u_d)),
                           QpStatus.FEASIBLE, res.z[m:])


def supervise(rcis: ImplicitRcis, plant: LinearSystem, x, u_d, d, t: int = 0) -> SupervisionStep:
    """Minimal correction of ``u_d`` against the implicit set.

    ``plant`` is the system the inputs act on (before any pre-feedback); the
    set's state coordinates are the same ``x``.  For non-measurable plants
    ``d`` is used only to report the step.
    """
    if rcis.kind == EMPTY:
        return SupervisionStep(t, np.asarray(x, float), np.asarray(d, float),
                               np.atleast_1d(u_d), None, np.inf, QpStatus.INFEASIBLE)
    if rcis.n_state != plant.n:
        raise DimensionMismatch(f"set has {rcis.n_state} state coordinates, plant has {plant.n}")
    Gx, Gw, h = rcis.split()
    return _supervise(plant, Gx, Gw, h, x, u_d, d, t)


def supervise_explicit(C: Polytope, plant: LinearSystem, x, u_d, d, t: int = 0) -> SupervisionStep:
    """Minimal correction of ``u_d`` against an explicit set over ``x``."""
    if C.dim != plant.n:
        raise DimensionMismatch(f"set has dim {C.dim}, plant has {plant.n}")
    return _supervise(plant, C.G, np.zeros((C.n_rows, 0)), C.h, x, u_d, d, t)


# rollouts

@dataclass
class Trajectory:
    steps: list = field(default_factory=list)
    plant_hash: str = ""
    scenario: str = ""

    def states(self) -> np.ndarray:
        return np.array([s.x for s in self.steps])

    def inputs(self) -> np.ndarray:
        return np.array([s.u_applied for s in self.steps])

    def corrections(self) -> np.ndarray:
        return np.array([s.correction_norm for s in self.steps])

    def to_csv(self, path=None) -> str:
        if not self.steps:
            return ""
        n = self.steps[0].x.size
        m = self.steps[0].u_nominal.size
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"d{i + 1}" for i in range(n)]
                   + [f"u_nominal{i + 1}" for i in range(m)] + [f"u_applied{i + 1}" for i in range(m)]
                   + ["correction_norm", "qp_status"])
        for s in self.steps:
            ua = s.u_applied if s.u_applied is not None else np.full(m, np.nan)
            w.writerow([s.t] + [repr(float(v)) for v in np.r_[s.x, s.d, s.u_nominal, ua]]
                       + [repr(float(s.correction_norm)), s.qp_status.value])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _policy_fn(policy):
    if callable(policy):
        return policy
    arr = np.asarray(policy, float)
    if arr.ndim == 2:
        return lambda t, x: arr @ x
    raise ValueError("policy must be a callable (t, x) -> u or a gain matrix K (u = K x)")


def simulate(plant: LinearSystem, policy, rcis: ImplicitRcis | None, d_trace, T: int, x0,
             scenario: str = "", explicit: Polytope | None = None) -> Trajectory:
    """Closed-loop rollout supervising ``policy`` at every step.

    ``d_trace`` is a ``(T, n)`` array of disturbances (points of conv(D_v)).
    With ``explicit`` given, the explicit-set arm is run instead.  Raises
    :class:`ContractBreach` on the first infeasible step.
    """
    pol = _policy_fn(policy)
    d_trace = np.atleast_2d(np.asarray(d_trace, float))
    if d_trace.shape[0] < T:
        raise ValueError(f"d_trace has {d_trace.shape[0]} rows, need {T}")
    traj = Trajectory(plant_hash=plant.fingerprint(), scenario=scenario)
    x = np.asarray(x0, float)
    for t in range(T):
        u_d = np.atleast_1d(pol(t, x))
        if explicit is not None:
            step = supervise_explicit(explicit, plant, x, u_d, d_trace[t], t)
        else:
            step = supervise(rcis, plant, x, u_d, d_trace[t], t)
        traj.steps.append(step)
        if step.qp_status is QpStatus.INFEASIBLE:
            raise ContractBreach(f"supervision infeasible at t={t}, x={x.tolist()}")
        x = plant.step(x, step.u_applied, d_trace[t])
    return traj


def vertex_switching_trace(plant: LinearSystem, T: int, rng, hold: int = 1) -> np.ndarray:
    """Random switching among disturbance vertices, each held ``hold`` steps."""
    idx = np.repeat(rng.integers(0, plant.D_v.shape[0], size=-(-T // hold)), hold)[:T]
    return plant.D_v[idx]


def plot_trajectories(trajectories, path, labels=None, bounds=None, dt: float = 1.0,
                      state_names=None):
    """Static SVG of state traces (with optional safe bands) and inputs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "implicit-rcis"
    n = trajectories[0].states().shape[1]
    names = state_names or [f"x{i + 1}" for i in range(n)]
    labels = labels or [tr.scenario or f"run {k}" for k, tr in enumerate(trajectories)]
    fig, axes = plt.subplots(n + 1, 1, figsize=(7, 1.8 * (n + 1)), sharex=True)
    for tr, lab in zip(trajectories, labels):
        X = tr.states()
        t = np.arange(X.shape[0]) * dt
        for i in range(n):
            axes[i].plot(t, X[:, i], label=lab)
        axes[n].step(t, tr.inputs()[:, 0], where="post", label=lab)
    for i in range(n):
        axes[i].set_ylabel(names[i])
        if bounds is not None:
            axes[i].axhspan(bounds[0][i], bounds[1][i], color="0.9", zorder=0)
    axes[n].set_ylabel("u")
    axes[n].set_xlabel("t")
    axes[0].legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
