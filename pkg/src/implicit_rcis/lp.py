"""Dense simplex core for small inequality-form LPs.

Every LP in this package has the shape ``max c.z  s.t.  G z <= h`` with ``z``
free, few columns and possibly many rows.  We never build the primal tableau.
Instead the revised simplex runs on the dual

    min h.y   s.t.   G^T y = c,  y >= 0

whose basis is only ``dim x dim``.  The simplex multipliers of an optimal
dual basis are an optimal primal point.  Pricing is Dantzig's rule; after a
run of degenerate pivots the method switches to Bland's rule, which cannot
cycle.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure

EPS_FEAS = 1e-7
_TOL_RC = 1e-10
_TOL_PIV = 1e-9
_DEGENERATE_SWITCH = 50
_REFACTOR = 40
# relative size of the anti-degeneracy shift used in phase 2
_PERTURB = 1e-7
_HARRIS = 1e-9


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    primal: np.ndarray | None = None
    objective: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Unbounded(Exception):
    pass


def _normalize(G, h):
    """Scale rows to unit norm; returns (G, h) or None when a zero row is violated."""
    norms = np.linalg.norm(G, axis=1)
    zero = norms <= 1e-14
    if np.any(h[zero] < -EPS_FEAS):
        return None
    keep = ~zero
    return G[keep] / norms[keep, None], h[keep] / norms[keep]


class _DualSimplex:
    """Revised simplex on ``min b.y, A y = rhs, y >= 0`` with artificial start.

    ``A`` is passed transposed (``At`` is ``M x n``).  The basis inverse is
    kept explicitly and refreshed every ``_REFACTOR`` pivots.
    """

    def __init__(self, At, b, rhs, max_iter):
        M, n = At.shape
        self.n, self.M = n, M
        self.sign = np.where(rhs < 0, -1.0, 1.0)
        self.At = At * self.sign[None, :]
        self.rhs = np.abs(rhs)
        self.b = b
        self.basis = np.arange(M, M + n)
        self.Binv = np.eye(n)
        self.max_iter = max_iter

    def _column(self, j):
        if j < self.M:
            return self.At[j]
        e = np.zeros(self.n)
        e[j - self.M] = 1.0
        return e

    def _refactor(self):
        B = np.column_stack([self._column(j) for j in self.basis])
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular simplex basis") from exc

    def _run(self, cost_orig, cost_art):
        degenerate = 0
        since = 0
        cost_full = np.r_[cost_orig, np.full(self.n, cost_art)]
        tol_rc = _TOL_RC * (1.0 + np.abs(cost_orig))
        in_basis = np.zeros(self.M, dtype=bool)
        in_basis[self.basis[self.basis < self.M]] = True
        blocked = np.zeros(self.M, dtype=bool)
        for _ in range(self.max_iter):
            if since >= _REFACTOR:
                self._refactor()
                since = 0
            Binv = self.Binv
            xB = Binv @ self.rhs
            pi = cost_full[self.basis] @ Binv
            reduced = cost_orig - self.At @ pi
            reduced[in_basis | blocked] = 0.0
            neg = reduced < -tol_rc
            if not neg.any():
                return pi, xB
            if degenerate > _DEGENERATE_SWITCH:
                j = int(np.argmax(neg))
            else:
                j = int(np.argmin(np.where(neg, reduced, 0.0)))
            w = Binv @ self.At[j]
            pos = np.nonzero(w > _TOL_PIV * max(1.0, np.abs(w).max()))[0]
            if pos.size == 0:
                if since > 0:
                    since = _REFACTOR
                    continue
                if cost_art > 0:
                    # phase 1 is bounded below, so this ray is rounding noise
                    blocked[j] = True
                    continue
                raise _Unbounded
            xp = np.maximum(xB[pos], 0.0)
            ratios = xp / w[pos]
            best = ratios.min()
            if degenerate > _DEGENERATE_SWITCH:
                ties = pos[ratios <= best + 1e-12]
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                # Harris two-pass test: largest pivot among rows within the slack bound
                bound = ((xp + _HARRIS) / w[pos]).min()
                ties = pos[ratios <= bound]
                r = int(ties[np.argmax(w[ties])])
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            old = self.basis[r]
            if old < self.M:
                in_basis[old] = False
            in_basis[j] = True
            self.basis[r] = j
            pivot_row = Binv[r] / w[r]
            Binv -= np.outer(w, pivot_row)
            Binv[r] = pivot_row
            since += 1
        raise NumericalFailure("simplex iteration cap reached")

    def _drive_out_artificials(self):
        self._refactor()
        for r in np.nonzero(self.basis >= self.M)[0]:
            row = self.At @ self.Binv[r]
            row[self.basis[self.basis < self.M]] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-8:
                self.basis[r] = j
                self._refactor()

    def _perturb(self):
        """Shift ``rhs`` by ``B eps`` so the current basis stays feasible and nondegenerate."""
        rng = np.random.default_rng(12345)
        scale = _PERTURB * (1.0 + np.abs(self.rhs).max(initial=0.0))
        eps = scale * (1.0 + rng.random(self.n))
        B = np.column_stack([self._column(j) for j in self.basis])
        return self.rhs + B @ eps

    def _dual_cleanup(self):
        """Dual simplex pivots restoring primal feasibility after the perturbation."""
        tol = 1e-11 * (1.0 + np.abs(self.rhs).max(initial=0.0))
        in_basis = np.zeros(self.M, dtype=bool)
        in_basis[self.basis[self.basis < self.M]] = True
        cost_full = np.r_[self.b, np.zeros(self.n)]
        for _ in range(self.max_iter):
            Binv = self.Binv
            xB = Binv @ self.rhs
            r = int(np.argmin(xB))
            if xB[r] >= -tol:
                return True
            pi = cost_full[self.basis] @ Binv
            reduced = np.maximum(self.b - self.At @ pi, 0.0)
            alpha = self.At @ Binv[r]
            alpha[in_basis] = 0.0
            cand = np.nonzero(alpha < -_TOL_PIV * max(1.0, np.abs(alpha).max()))[0]
            if cand.size == 0:
                return False
            ratios = reduced[cand] / -alpha[cand]
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12]
            j = int(ties[np.argmin(alpha[ties])])
            old = self.basis[r]
            if old < self.M:
                in_basis[old] = False
            in_basis[j] = True
            self.basis[r] = j
            w = Binv @ self.At[j]
            pivot_row = Binv[r] / w[r]
            Binv -= np.outer(w, pivot_row)
            Binv[r] = pivot_row
        raise NumericalFailure("dual cleanup iteration cap reached")

    def _phase2(self):
        rhs = self.rhs
        self.rhs = self._perturb()
        try:
            self._run(self.b, 0.0)
        finally:
            self.rhs = rhs
        self._refactor()
        self._dual_cleanup()
        self._refactor()
        pi = np.r_[self.b, np.zeros(self.n)][self.basis] @ self.Binv
        return pi * self.sign

    def solve(self):
        """Returns ('optimal', pi) | ('infeasible', None) | ('unbounded', None)."""
        zero = np.zeros(self.M)
        _, xB = self._run(zero, 1.0)
        infeas = float(np.sum(xB[self.basis >= self.M]))
        if infeas > 1e-9 * (1.0 + np.abs(self.rhs).max(initial=0.0)):
            return "infeasible", None
        self._drive_out_artificials()
        try:
            return "optimal", self._phase2()
        except _Unbounded:
            return "unbounded", None

    def solve_warm(self, basis):
        """Restart from a previous optimal basis; None when a cold start is needed."""
        self.basis = np.array(basis)
        self._refactor()
        scale = 1.0 + np.abs(self.rhs).max(initial=0.0)
        xB = self.Binv @ self.rhs
        if xB.min() < -1e-11 * scale:
            pi = np.r_[self.b, np.zeros(self.n)][self.basis] @ self.Binv
            reduced = self.b - self.At @ pi
            reduced[self.basis[self.basis < self.M]] = 0.0
            if reduced.min() < -1e-9 or not self._dual_cleanup():
                return None
            self._refactor()
            xB = self.Binv @ self.rhs
        if np.any(xB[self.basis >= self.M] > 1e-9 * scale):
            return None
        try:
            return self._phase2()
        except _Unbounded:
            return None


def _dual_route(c, G, h, max_iter):
    ds = _DualSimplex(G, h, c, max_iter)
    return ds.solve()


def chebyshev_center(G, h, max_iter=100000, radius_cap=1.0):
    """Deepest point of ``{G z <= h}`` (radius capped).

    Returns ``(z, r)``; the set is empty iff ``r < -EPS_FEAS``.  A negative
    radius is the least possible worst-case violation over all ``z``.
    """
    G = np.asarray(G, float)
    h = np.asarray(h, float)
    dim = G.shape[1]
    norm = _normalize(G, h)
    if norm is None:
        return np.zeros(dim), -np.inf
    Gn, hn = norm
    if Gn.shape[0] == 0:
        return np.zeros(dim), radius_cap
    Ga = np.hstack([Gn, np.ones((Gn.shape[0], 1))])
    Ga = np.vstack([Ga, np.r_[np.zeros(dim), 1.0]])
    ha = np.r_[hn, radius_cap]
    c = np.r_[np.zeros(dim), 1.0]
    status, z = _dual_route(c, Ga, ha, max_iter)
    if status != "optimal":
        raise NumericalFailure(f"Chebyshev LP returned {status}")
    return z[:dim], float(z[dim])


def solve_lp(c, G, h, max_iter=100000) -> LpResult:
    """Maximize ``c.z`` subject to ``G z <= h``."""
    c = np.asarray(c, float)
    G = np.asarray(G, float).reshape(-1, c.size)
    h = np.asarray(h, float)
    norm = _normalize(G, h)
    if norm is None:
        return LpResult(LpStatus.INFEASIBLE)
    Gn, hn = norm
    if Gn.shape[0] == 0:
        if np.any(c != 0):
            return LpResult(LpStatus.UNBOUNDED)
        return LpResult(LpStatus.OPTIMAL, np.zeros(c.size), 0.0)
    status, z = _dual_route(c, Gn, hn, max_iter)
    if status == "optimal":
        return LpResult(LpStatus.OPTIMAL, z, float(c @ z))
    if status == "unbounded":
        return LpResult(LpStatus.INFEASIBLE)
    _, r = chebyshev_center(Gn, hn, max_iter)
    if r < -EPS_FEAS:
        return LpResult(LpStatus.INFEASIBLE)
    return LpResult(LpStatus.UNBOUNDED)


class LpWorkspace:
    """Repeated ``max c.z s.t. G z <= h`` over one fixed ``G``, warm-started.

    Only ``c`` or ``h`` change between calls.  The last optimal basis stays
    dual feasible when only ``c`` changes and primal feasible when only ``h``
    changes, so a restart usually needs few pivots.  Not thread-safe: use one
    workspace per thread.
    """

    def __init__(self, G, max_iter: int = 100000):
        G = np.asarray(G, float)
        norms = np.linalg.norm(G, axis=1)
        self._zero = norms <= 1e-14
        self._norms = norms[~self._zero]
        self._Gn = G[~self._zero] / self._norms[:, None]
        self.dim = G.shape[1]
        self.max_iter = max_iter
        self._basis = None
        self._last = None

    def _warm(self, c, hn):
        ds = _DualSimplex(self._Gn, hn, c, self.max_iter)
        try:
            z = ds.solve_warm(self._basis)
        except NumericalFailure:
            return None
        if z is not None:
            self._basis = ds.basis.copy()
            self._last = (c, hn)
        return z

    def maximize(self, c, h) -> LpResult:
        c = np.asarray(c, float)
        h = np.asarray(h, float)
        if np.any(h[self._zero] < -EPS_FEAS):
            return LpResult(LpStatus.INFEASIBLE)
        hn = h[~self._zero] / self._norms
        Gn = self._Gn
        if Gn.shape[0] == 0:
            return solve_lp(c, Gn, hn)
        if self._basis is not None:
            last_c, last_h = self._last
            if not np.array_equal(c, last_c) and not np.array_equal(hn, last_h):
                # both changed: move h first (primal pivots), then c (dual pivots)
                self._warm(last_c, hn)
            z = self._warm(c, hn)
            if z is not None:
                return LpResult(LpStatus.OPTIMAL, z, float(c @ z))
        ds = _DualSimplex(Gn, hn, c, self.max_iter)
        status, z = ds.solve()
        if status == "optimal":
            self._basis = ds.basis.copy()
            self._last = (c, hn)
            return LpResult(LpStatus.OPTIMAL, z, float(c @ z))
        return solve_lp(c, Gn, hn, self.max_iter)


class ChebyshevWorkspace:
    """Chebyshev-center queries ``{G z <= h}`` for a fixed ``G`` and varying ``h``."""

    def __init__(self, G, radius_cap: float = 1.0, max_iter: int = 100000):
        G = np.asarray(G, float)
        self.dim = G.shape[1]
        norms = np.linalg.norm(G, axis=1)
        self._zero = norms <= 1e-14
        self._norms = norms[~self._zero]
        Gn = G[~self._zero] / self._norms[:, None]
        Ga = np.hstack([Gn, np.ones((Gn.shape[0], 1))])
        self._ws = LpWorkspace(np.vstack([Ga, np.r_[np.zeros(self.dim), 1.0]]), max_iter)
        self._c = np.r_[np.zeros(self.dim), 1.0]
        self.radius_cap = radius_cap

    def center(self, h):
        h = np.asarray(h, float)
        if np.any(h[self._zero] < -EPS_FEAS):
            return np.zeros(self.dim), -np.inf
        if self._norms.size == 0:
            return np.zeros(self.dim), self.radius_cap
        res = self._ws.maximize(self._c, np.r_[h[~self._zero] / self._norms, self.radius_cap])
        if not res.optimal:
            raise NumericalFailure(f"Chebyshev LP returned {res.status.value}")
        return res.primal[:self.dim], float(res.primal[self.dim])
