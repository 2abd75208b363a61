"""Plant model ``x+ = A x + B u + d`` and its transformations."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, DimensionMismatch, NotControllable, NumericalFailure
from .polytope import Polytope, vertices

EPS_NILP = 1e-9
MEASURABLE = "measurable"
NON_MEASURABLE = "non_measurable"


def _scaled_eps(A, power, eps):
    return eps * max(1.0, np.linalg.norm(A, np.inf) ** power)


def nilpotency_index(A, eps_nilp: float = EPS_NILP) -> int | None:
    """Smallest ``h <= n`` with ``||A^h||_inf <= eps`` (scaled), or None."""
    A = np.asarray(A, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch("A must be square")
    P = np.eye(A.shape[0])
    for k in range(1, A.shape[0] + 1):
        P = P @ A
        if np.linalg.norm(P, np.inf) <= _scaled_eps(A, k, eps_nilp):
            return k
    return None


@dataclass(frozen=True)
class FeedbackTransform:
    """Pre-feedback ``u = K x + v``; ``S_original`` is kept for reporting."""
    K: np.ndarray
    S_original: Polytope | None = None


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    D_v: np.ndarray
    S: Polytope
    disturbance_mode: str = MEASURABLE
    feedback: FeedbackTransform | None = None
    # number of leading state coordinates an invariant set is projected onto
    # (smaller than n only for one-step-delay lifts)
    n_report: int | None = None
    name: str = ""

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        B = np.asarray(self.B, float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        Dv = np.atleast_2d(np.asarray(self.D_v, float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if Dv.shape[1] != n:
            raise DimensionMismatch(f"disturbance vertices have length {Dv.shape[1]}, expected {n}")
        if self.S.dim != n + B.shape[1]:
            raise DimensionMismatch(f"safe set has dim {self.S.dim}, expected {n + B.shape[1]}")
        if self.disturbance_mode not in (MEASURABLE, NON_MEASURABLE):
            raise ValueError(f"unknown disturbance mode {self.disturbance_mode!r}")
        for name, val in (("A", A), ("B", B), ("D_v", Dv)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if self.n_report is None:
            object.__setattr__(self, "n_report", n)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def h_nilp(self) -> int | None:
        return nilpotency_index(self.A)

    @property
    def measurable(self) -> bool:
        return self.disturbance_mode == MEASURABLE

    def step(self, x, u, d):
        return self.A @ np.asarray(x, float) + self.B @ np.atleast_1d(u) + np.asarray(d, float)

    def safe_split(self):
        """``(G_x, G_u, h)`` of the safe set."""
        return self.S.G[:, :self.n], self.S.G[:, self.n:], self.S.h

    def fingerprint(self) -> str:
        payload = json.dumps({
            "A": self.A.tolist(), "B": self.B.tolist(), "D_v": self.D_v.tolist(),
            "S": self.S.to_dict(), "mode": self.disturbance_mode,
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def controllability_matrix(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _rank(M, tol=1e-9):
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def _cyclic_start(A, B, tol=1e-9):
    """Heymann's construction: ``K0, j`` with ``(A + B K0, B e_j)`` controllable."""
    n, m = B.shape
    j0 = int(np.argmax(np.linalg.norm(B, axis=0)))
    xs = [B[:, j0]]
    us = []
    while len(xs) < n:
        basis = np.column_stack(xs)
        nxt = A @ xs[-1]
        u = np.zeros(m)
        if _rank(np.column_stack([basis, nxt]), tol) == len(xs):
            for j in range(m):
                if _rank(np.column_stack([basis, B[:, j]]), tol) > len(xs):
                    u[j] = 1.0
                    nxt = nxt + B[:, j]
                    break
            else:
                raise NumericalFailure("cyclic construction stalled")
        us.append(u)
        xs.append(nxt)
    us.append(np.zeros(m))
    X = np.column_stack(xs)
    K0 = np.column_stack(us) @ np.linalg.inv(X)
    return K0, j0


def _ackermann_deadbeat(A, b):
    n = A.shape[0]
    C = controllability_matrix(A, b.reshape(-1, 1))
    last = np.linalg.solve(C.T, np.eye(n)[:, -1])
    return -(last @ np.linalg.matrix_power(A, n)).reshape(1, -1)


def deadbeat_gain(A, B, eps_nilp: float = EPS_NILP) -> FeedbackTransform:
    """Gain ``K`` with ``A + B K`` nilpotent.

    Single input uses Ackermann's formula with characteristic polynomial
    ``lambda^n``.  Multi-input first applies a feedback making one input
    column cyclic (Heymann), then Ackermann on that column.  The gain is not
    unique; any nilpotent-producing ``K`` is acceptable.
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n, m = B.shape
    rank = _rank(controllability_matrix(A, B))
    if rank < n:
        raise NotControllable(rank, n)
    if nilpotency_index(A, eps_nilp) is not None:
        return FeedbackTransform(np.zeros((m, n)))
    if m == 1:
        K = _ackermann_deadbeat(A, B[:, 0])
    else:
        K0, j = _cyclic_start(A, B)
        k1 = _ackermann_deadbeat(A + B @ K0, B[:, j])
        K = K0.copy()
        K[j] += k1[0]
    Acl = A + B @ K
    residual = np.linalg.norm(np.linalg.matrix_power(Acl, n), np.inf)
    if residual > max(eps_nilp, 1e-9) * max(1.0, np.linalg.norm(Acl, np.inf) ** n) * 1e3:
        raise NumericalFailure(f"deadbeat gain leaves ||(A+BK)^n|| = {residual:.3e}")
    return FeedbackTransform(K)


def apply_prefeedback(sys: LinearSystem, fb: FeedbackTransform) -> LinearSystem:
    """Substitute ``u = K x + v``; the safe set is rewritten on (x, v)."""
    K = np.atleast_2d(np.asarray(fb.K, float))
    if K.shape != (sys.m, sys.n):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(sys.m, sys.n)}")
    Gx, Gu, h = sys.safe_split()
    S = Polytope(np.hstack([Gx + Gu @ K, Gu]), h, sys.n + sys.m)
    return replace(sys, A=sys.A + sys.B @ K, S=S,
                   feedback=FeedbackTransform(K, sys.S))


def disturbance_vertices(D: Polytope) -> np.ndarray:
    return np.array(vertices(D))


def lift_nonmeasurable(sys: LinearSystem) -> LinearSystem:
    """One-step-delay lift: state ``(x, u)``, input ``v``, measurable disturbance.

    ``x+ = A x + B u + d``, ``u+ = v``.  The safe set is ``S x R^m``; an
    invariant set of the lift is reported through its first ``n`` coordinates.
    """
    if sys.disturbance_mode != NON_MEASURABLE:
        raise ValueError("lift_nonmeasurable expects a non-measurable plant")
    n, m = sys.n, sys.m
    A2 = np.block([[sys.A, sys.B], [np.zeros((m, n)), np.zeros((m, m))]])
    B2 = np.vstack([np.zeros((n, m)), np.eye(m)])
    D2 = np.hstack([sys.D_v, np.zeros((sys.D_v.shape[0], m))])
    S2 = Polytope(np.hstack([sys.S.G, np.zeros((sys.S.n_rows, m))]), sys.S.h, n + 2 * m)
    return LinearSystem(A2, B2, D2, S2, MEASURABLE, sys.feedback, n_report=n,
                        name=f"{sys.name}+delay" if sys.name else "delay-lift")


def disturbance_embedding(n: int, m: int) -> np.ndarray:
    """``E`` of the lifted system, ``[I_n; 0]``: lifted vertices are ``E d``."""
    return np.vstack([np.eye(n), np.zeros((m, n))])


# presets

def chain_of_integrators(n: int, d_max: float = 0.1, x_max: float = 1.0,
                         u_max: float = 1.0) -> LinearSystem:
    """``x+ = (I + shift) x + e_n (u + d)`` with box safe set."""
    A = np.eye(n) + np.eye(n, k=1)
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    Dv = np.array([B[:, 0] * d_max, -B[:, 0] * d_max])
    S = Polytope.from_box(np.r_[-x_max * np.ones(n), -u_max], np.r_[x_max * np.ones(n), u_max])
    return LinearSystem(A, B, Dv, S, MEASURABLE, name=f"integrator-{n}")


def lane_keeping_standin(rd_max: float = 0.015, speed: float = 30.0, dt: float = 0.1,
                         mode: str = MEASURABLE) -> LinearSystem:
    """Discretized linear bicycle lateral model, state ``(y, v, dPsi, r)``.

    A stand-in with generic passenger-car parameters, so results on it are
    qualitative only.  Safe bounds are
    ``|y| <= 0.9, |v| <= 1.2, |dPsi| <= 0.05, |r| <= 0.3, |u| <= pi/2`` and the
    disturbance is ``(0, 0, -r_d dt, 0)`` with ``|r_d| <= rd_max``.
    """
    mass, Iz, a, b = 1650.0, 2315.0, 1.11, 1.59
    Cf, Cr = 133000.0, 98800.0
    u0 = speed
    Ac = np.array([
        [0.0, 1.0, u0, 0.0],
        [0.0, -(Cf + Cr) / (mass * u0), 0.0, (b * Cr - a * Cf) / (mass * u0) - u0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, (b * Cr - a * Cf) / (Iz * u0), 0.0, -(a * a * Cf + b * b * Cr) / (Iz * u0)],
    ])
    Bc = np.array([[0.0], [Cf / mass], [0.0], [a * Cf / Iz]])
    M = sla.expm(np.block([[Ac, Bc], [np.zeros((1, 5))]]) * dt)
    A, B = M[:4, :4], M[:4, 4:]
    d = np.array([0.0, 0.0, -rd_max * dt, 0.0])
    upper = np.array([0.9, 1.2, 0.05, 0.3, np.pi / 2])
    S = Polytope.from_box(-upper, upper)
    return LinearSystem(A, B, np.array([d, -d]), S, mode, name="lane-keeping-standin")


def system_from_config(cfg: dict) -> tuple[LinearSystem, object]:
    """Build a plant from the system config; returns ``(plant, prefeedback)``.

    ``prefeedback`` is ``"auto"``, ``"none"`` or a :class:`FeedbackTransform`.
    """
    try:
        A = np.atleast_2d(np.asarray(cfg["A"], float))
        B = np.asarray(cfg["B"], float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        S = Polytope.from_dict(cfg["S"])
        D = cfg["D"]
        if "vertices" in D:
            Dv = np.atleast_2d(np.asarray(D["vertices"], float))
        else:
            Dv = disturbance_vertices(Polytope.from_dict(D["polytope"]))
        mode = cfg.get("disturbance", MEASURABLE)
        pf = cfg.get("prefeedback", "auto")
    except KeyError as exc:
        raise ConfigError(f"system config is missing key {exc}") from exc
    if isinstance(pf, dict):
        pf = FeedbackTransform(np.atleast_2d(np.asarray(pf["K"], float)))
    elif pf not in ("auto", "none"):
        raise ConfigError(f"prefeedback must be 'auto', 'none' or {{'K': ...}}, got {pf!r}")
    return LinearSystem(A, B, Dv, S, mode, name=cfg.get("name", "")), pf


def system_to_config(sys: LinearSystem) -> dict:
    return {
        "A": sys.A.tolist(), "B": sys.B.tolist(),
        "D": {"vertices": sys.D_v.tolist()},
        "S": {"G": sys.S.G.tolist(), "h": sys.S.h.tolist()},
        "disturbance": sys.disturbance_mode,
    }
