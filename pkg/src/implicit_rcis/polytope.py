"""H-representation polytopes ``{z : G z <= h}``.

All operations are pure.  A polytope with zero rows is the whole space; an
empty polytope is represented by the single row ``0.z <= -1``.
"""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionMismatch, DimensionTooHigh, ExplosionLimit, NumericalFailure,
                     UnboundedDirection, UnboundedPolytope)
from .lp import EPS_FEAS, LpResult, LpStatus, LpWorkspace, chebyshev_center, solve_lp

EPS_RED = 1e-8
EPS_VERT = 1e-7
ROW_CAP = 100_000
VERTEX_ENUM_DIM_CAP = 4


def row_cap() -> int:
    return int(os.environ.get("RCIS_ROW_CAP", ROW_CAP))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Polytope:
    G: np.ndarray
    h: np.ndarray
    dim: int = field(default=-1)

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        h = np.asarray(self.h, dtype=float).reshape(-1)
        dim = self.dim
        if G.ndim == 1 and G.size == 0:
            if dim < 1:
                raise ValueError("a zero-row polytope needs an explicit dim")
            G = G.reshape(0, dim)
        if G.ndim != 2:
            raise ValueError("G must be a matrix")
        if dim < 0:
            dim = G.shape[1]
        if G.shape[1] != dim or dim < 1:
            raise DimensionMismatch(f"G has {G.shape[1]} columns, dim is {dim}")
        if G.shape[0] != h.shape[0]:
            raise DimensionMismatch(f"G has {G.shape[0]} rows but h has {h.shape[0]}")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(h))):
            raise ValueError("polytope data must be finite")
        object.__setattr__(self, "G", _readonly(G))
        object.__setattr__(self, "h", _readonly(h))
        object.__setattr__(self, "dim", int(dim))

    # construction helpers
    @classmethod
    def whole(cls, dim: int) -> "Polytope":
        return cls(np.zeros((0, dim)), np.zeros(0), dim)

    @classmethod
    def empty(cls, dim: int) -> "Polytope":
        return cls(np.zeros((1, dim)), np.array([-1.0]), dim)

    @classmethod
    def from_box(cls, lower, upper) -> "Polytope":
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        eye = np.eye(lower.size)
        return cls(np.vstack([eye, -eye]), np.r_[upper, -lower])

    @classmethod
    def from_dict(cls, data: dict, dim: int | None = None) -> "Polytope":
        G = np.asarray(data["G"], dtype=float)
        if G.size == 0:
            d = data.get("dim", dim)
            if d is None:
                raise ValueError("zero-row polytope JSON needs 'dim'")
            return cls.whole(int(d))
        return cls(G, data["h"])

    def to_dict(self) -> dict:
        return {"G": self.G.tolist(), "h": self.h.tolist(), "dim": self.dim}

    @classmethod
    def from_json(cls, text: str) -> "Polytope":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]

    def contains_point(self, z, tol: float = EPS_FEAS) -> bool:
        z = np.asarray(z, float)
        if self.n_rows == 0:
            return True
        norms = np.maximum(np.linalg.norm(self.G, axis=1), 1.0)
        return bool(np.all(self.G @ z - self.h <= tol * norms))

    def contains_points(self, Z, tol: float = EPS_FEAS) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, float))
        if self.n_rows == 0:
            return np.ones(Z.shape[0], dtype=bool)
        norms = np.maximum(np.linalg.norm(self.G, axis=1), 1.0)
        return np.all(Z @ self.G.T - self.h <= tol * norms, axis=1)

    def __and__(self, other: "Polytope") -> "Polytope":
        return intersect(self, other)

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.n_rows})"


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _readonly(self.lower)
        up = _readonly(self.upper)
        if lo.shape != up.shape:
            raise DimensionMismatch("box bounds differ in length")
        if np.any(lo > up):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        return self.lower.size

    def to_polytope(self) -> Polytope:
        return Polytope.from_box(self.lower, self.upper)

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))


def lp_solve(objective, poly: Polytope, sense: str = "min") -> LpResult:
    """Optimize a linear objective over ``poly``; ``sense`` is 'min' or 'max'."""
    c = np.asarray(objective, float)
    if c.size != poly.dim:
        raise DimensionMismatch(f"objective length {c.size} != polytope dim {poly.dim}")
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    sign = 1.0 if sense == "max" else -1.0
    res = solve_lp(sign * c, poly.G, poly.h)
    if res.optimal:
        return LpResult(res.status, res.primal, float(c @ res.primal))
    return res


def is_empty(poly: Polytope) -> bool:
    if poly.n_rows == 0:
        return False
    _, r = chebyshev_center(poly.G, poly.h)
    return r < -EPS_FEAS


def interior_point(poly: Polytope):
    """Deepest point and its (capped) inscribed radius; radius < 0 means empty."""
    return chebyshev_center(poly.G, poly.h)


def _check_dims(a: Polytope, b: Polytope):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {b.dim}")


def intersect(a: Polytope, b: Polytope) -> Polytope:
    _check_dims(a, b)
    return Polytope(np.vstack([a.G, b.G]), np.r_[a.h, b.h], a.dim)


def contains(outer: Polytope, inner: Polytope, tol: float = EPS_FEAS) -> bool:
    """True iff ``inner`` is a subset of ``outer`` (one LP per outer facet)."""
    _check_dims(outer, inner)
    if is_empty(inner):
        return True
    ws = LpWorkspace(inner.G)
    for g, hv in zip(outer.G, outer.h):
        nrm = np.linalg.norm(g)
        if nrm <= 1e-14:
            if hv < -tol:
                return False
            continue
        res = ws.maximize(g / nrm, inner.h)
        if res.status is LpStatus.UNBOUNDED:
            return False
        if res.status is LpStatus.INFEASIBLE:
            return True
        if res.objective > hv / nrm + tol:
            return False
    return True


def equal(a: Polytope, b: Polytope, tol: float = EPS_FEAS) -> bool:
    return contains(a, b, tol) and contains(b, a, tol)


def _normalized_unique(G, h):
    """Unit-norm rows, zero rows resolved, near-duplicate directions merged."""
    norms = np.linalg.norm(G, axis=1)
    zero = norms <= 1e-12
    if np.any(h[zero] < -EPS_FEAS):
        return None
    G = G[~zero] / norms[~zero, None]
    h = h[~zero] / norms[~zero]
    if G.shape[0] == 0:
        return G, h
    key = np.round(G, 10)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    best = np.full(inv.max() + 1, np.inf)
    np.minimum.at(best, inv, h)
    first = np.full(best.size, -1)
    for i in range(inv.size - 1, -1, -1):
        first[inv[i]] = i
    order = np.sort(first)
    return G[order], best[inv[order]]


def _redundant_against(G, h, i, others) -> bool:
    res = solve_lp(G[i], G[others], h[others])
    if res.status is LpStatus.UNBOUNDED:
        return False
    if res.status is LpStatus.INFEASIBLE:
        return True
    return res.objective <= h[i] + EPS_RED


def _sequential_prune(G, h):
    alive = np.ones(G.shape[0], dtype=bool)
    for i in range(G.shape[0]):
        alive[i] = False
        if not _redundant_against(G, h, i, np.nonzero(alive)[0]):
            alive[i] = True
    return alive


def _ray_hits(G, slack, n_rays: int | None = None, seed: int = 0):
    """Rows hit first (and uniquely) by random rays from an interior point.

    Each such row supports a facet, so it is essential without any LP.
    """
    M, dim = G.shape
    rng = np.random.default_rng(seed)
    n_rays = min(2 * M, 4000) if n_rays is None else n_rays
    hit = np.zeros(M, dtype=bool)
    for start in range(0, n_rays, 2048):
        D = rng.normal(size=(min(2048, n_rays - start), dim))
        rate = G @ D.T
        with np.errstate(divide="ignore"):
            t = np.where(rate > 1e-12, slack[:, None] / rate, np.inf)
        order = np.argpartition(t, 1, axis=0)[:2]
        cols = np.arange(t.shape[1])
        t1, t2 = t[order[0], cols], t[order[1], cols]
        unique = np.isfinite(t1) & (t2 > t1 * (1 + 1e-7) + 1e-12)
        hit[order[0, unique]] = True
    return hit


def _clarkson_prune(G, h, center):
    """Clarkson's output-sensitive redundancy removal from an interior point."""
    M = G.shape[0]
    slack0 = h - G @ center
    essential = _ray_hits(G, slack0)
    redundant = np.zeros(M, dtype=bool)
    for i in range(M):
        while not (essential[i] or redundant[i]):
            rows = np.nonzero(essential)[0]
            Gs = np.vstack([G[rows], G[i]])
            hs = np.r_[h[rows], h[i] + 1.0]
            res = solve_lp(G[i], Gs, hs)
            if not res.optimal:
                essential[i] = True
                break
            if res.objective <= h[i] + EPS_RED:
                redundant[i] = True
                break
            direction = res.primal - center
            rate = G @ direction
            cand = np.nonzero((rate > 1e-12) & ~redundant)[0]
            t = slack0[cand] / rate[cand]
            tmin = t.min()
            ties = cand[t <= tmin * (1 + 1e-9) + 1e-12]
            if ties.size == 1:
                essential[ties[0]] = True
                continue
            alive = np.nonzero(~redundant)[0]
            for j in ties:
                if essential[j]:
                    continue
                if _redundant_against(G, h, j, alive[alive != j]):
                    redundant[j] = True
                    alive = alive[alive != j]
                else:
                    essential[j] = True
    return essential


def remove_redundancy(poly: Polytope) -> Polytope:
    """Same point set with every retained facet certified non-redundant by LP."""
    norm = _normalized_unique(poly.G, poly.h)
    if norm is None:
        return Polytope.empty(poly.dim)
    G, h = norm
    if G.shape[0] == 0:
        return Polytope.whole(poly.dim)
    center, r = chebyshev_center(G, h)
    if r < -EPS_FEAS:
        return Polytope.empty(poly.dim)
    if G.shape[0] == 1:
        return Polytope(G, h, poly.dim)
    if r > 1e-6:
        keep = _clarkson_prune(G, h, center)
    else:
        keep = _sequential_prune(G, h)
    return Polytope(G[keep], h[keep], poly.dim)


def _fm_step(G, h, j):
    col = G[:, j]
    scale = np.abs(G).max(axis=1)
    tol = 1e-12 * np.maximum(scale, 1.0)
    pos = col > tol
    neg = col < -tol
    zero = ~(pos | neg)
    Gp, hp, cp = G[pos], h[pos], col[pos]
    Gn, hn, cn = G[neg], h[neg], -col[neg]
    newG = (Gp[:, None, :] * cn[None, :, None] + Gn[None, :, :] * cp[:, None, None])
    newh = hp[:, None] * cn[None, :] + hn[None, :] * cp[:, None]
    Gz = G[zero].copy()
    Gz[:, j] = 0.0
    newG = newG.reshape(-1, G.shape[1])
    newG[:, j] = 0.0
    return np.vstack([Gz, newG]), np.r_[h[zero], newh.reshape(-1)]


def project(poly: Polytope, keep, prune: bool = True, cap: int | None = None) -> Polytope:
    """Fourier-Motzkin projection onto the coordinates listed in ``keep``.

    The result's coordinates follow the order of ``keep``.
    """
    keep = [int(k) for k in keep]
    if not keep or len(set(keep)) != len(keep) or min(keep) < 0 or max(keep) >= poly.dim:
        raise ValueError(f"invalid coordinate selection {keep} for dim {poly.dim}")
    cap = row_cap() if cap is None else cap
    G, h = np.array(poly.G), np.array(poly.h)
    if is_empty(poly):
        return Polytope.empty(len(keep))
    elim = [j for j in range(poly.dim) if j not in keep]
    while elim:
        counts = []
        for j in elim:
            p = int(np.sum(G[:, j] > 1e-12))
            n = int(np.sum(G[:, j] < -1e-12))
            counts.append(p * n - p - n)
        j = elim.pop(int(np.argmin(counts)))
        p = int(np.sum(G[:, j] > 1e-12))
        n = int(np.sum(G[:, j] < -1e-12))
        if G.shape[0] - p - n + p * n > cap:
            raise ExplosionLimit(
                f"eliminating coordinate {j} would create {G.shape[0] - p - n + p * n} rows (cap {cap})")
        G, h = _fm_step(G, h, j)
        reduced = (remove_redundancy(Polytope(G, h, poly.dim)) if prune
                   else _normalized(G, h, poly.dim))
        G, h = np.array(reduced.G), np.array(reduced.h)
    out = Polytope(G[:, keep], h, len(keep))
    return remove_redundancy(out) if prune else out


def _normalized(G, h, dim):
    norm = _normalized_unique(G, h)
    if norm is None:
        return Polytope.empty(dim)
    return Polytope(norm[0], norm[1], dim)


def bounding_box(poly: Polytope, margin: float = 1 + 1e-6) -> Box:
    """Tight coordinate bounds via ``2 dim`` LPs, padded by ``margin``."""
    lower = np.empty(poly.dim)
    upper = np.empty(poly.dim)
    if is_empty(poly):
        raise UnboundedPolytope("bounding box of an empty polytope is undefined")
    ws = LpWorkspace(poly.G)
    for k in range(poly.dim):
        e = np.zeros(poly.dim)
        e[k] = 1.0
        hi = ws.maximize(e, poly.h)
        lo = ws.maximize(-e, poly.h)
        if hi.status is LpStatus.UNBOUNDED or lo.status is LpStatus.UNBOUNDED:
            raise UnboundedDirection(k)
        upper[k], lower[k] = hi.objective, -lo.objective
    pad = (margin - 1.0) * (1.0 + upper - lower)
    return Box(lower - pad, upper + pad)


def vertices(poly: Polytope, dim_cap: int = VERTEX_ENUM_DIM_CAP) -> list[np.ndarray]:
    """All vertices by facet-subset enumeration (low dimensions only)."""
    if poly.dim > dim_cap:
        raise DimensionTooHigh(f"vertex enumeration is capped at dim {dim_cap}, got {poly.dim}")
    if is_empty(poly):
        return []
    try:
        bounding_box(poly, margin=1.0)
    except UnboundedDirection as exc:
        raise UnboundedPolytope(str(exc)) from exc
    red = remove_redundancy(poly)
    G, h = red.G, red.h
    out: list[np.ndarray] = []
    for rows in itertools.combinations(range(G.shape[0]), poly.dim):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        v = np.linalg.solve(sub, h[list(rows)])
        if np.any(G @ v - h > EPS_VERT):
            continue
        if any(np.max(np.abs(v - w)) <= EPS_VERT for w in out):
            continue
        out.append(v)
    if not out:
        # a point set: redundancy removal may leave fewer than dim independent rows
        z, _ = chebyshev_center(G, h)
        out.append(z)
    return out


def _support_point(ws: LpWorkspace, h, sel, direction):
    """Maximizer of ``direction . z[sel]`` over ``{G z <= h}``, restricted to ``sel``."""
    c = np.zeros(ws.dim)
    c[sel] = direction
    res = ws.maximize(c, h)
    if res.status is LpStatus.UNBOUNDED:
        raise UnboundedPolytope(f"projection is unbounded along {direction}")
    if not res.optimal:
        raise UnboundedPolytope("support query on an empty polytope")
    return res.primal[sel]


def project_support(poly: Polytope, keep, tol: float = 1e-9, max_rounds: int = 10_000) -> Polytope:
    """Exact projection of a bounded polytope by refining an inner hull with LPs.

    Starting from support points along the coordinate axes, every facet of
    the current hull of support points is pushed outward by an LP over the
    lifted polytope.  A facet whose support value does not exceed its offset
    is a facet of the projection; otherwise the new support point is added.
    Cost grows with the number of output facets, not with the number of
    eliminated coordinates.  Needs a full-dimensional projection of dim >= 2.
    """
    from scipy.spatial import ConvexHull, QhullError

    keep = [int(k) for k in keep]
    if not keep or len(set(keep)) != len(keep) or min(keep) < 0 or max(keep) >= poly.dim:
        raise ValueError(f"invalid coordinate selection {keep} for dim {poly.dim}")
    d = len(keep)
    if is_empty(poly):
        return Polytope.empty(d)
    ws, h = LpWorkspace(poly.G), poly.h
    if d == 1:
        hi = _support_point(ws, h, keep, np.ones(1))
        lo = _support_point(ws, h, keep, -np.ones(1))
        return Polytope.from_box(lo, hi)
    pts = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        pts.append(_support_point(ws, h, keep, e))
        pts.append(_support_point(ws, h, keep, -e))
    pts = np.array(pts)
    for _ in range(4 * d):
        centered = pts - pts.mean(axis=0)
        _, sv, vt = np.linalg.svd(centered)
        if sv[-1] > 1e-9 * max(1.0, sv[0]):
            break
        # flat so far: probe the missing direction both ways
        extra = [_support_point(ws, h, keep, s * vt[-1]) for s in (1.0, -1.0)]
        if max(abs((p - pts.mean(axis=0)) @ vt[-1]) for p in extra) <= 1e-9:
            raise DimensionTooHigh("projection is not full-dimensional; use Fourier-Motzkin")
        pts = np.vstack([pts] + extra)
    certified: set = set()
    for _ in range(max_rounds):
        try:
            hull = ConvexHull(pts)
        except QhullError as exc:
            raise NumericalFailure(f"hull of support points failed: {exc}") from exc
        pts = pts[hull.vertices]
        hull = ConvexHull(pts)
        added = []
        for eq in hull.equations:
            a, b = eq[:-1], -eq[-1]
            key = tuple(np.round(np.r_[a, b], 9))
            if key in certified:
                continue
            p = _support_point(ws, h, keep, a)
            if a @ p > b + tol * (1.0 + abs(b)):
                added.append(p)
            else:
                certified.add(key)
        if not added:
            out = _normalized(hull.equations[:, :-1], -hull.equations[:, -1], d)
            return remove_redundancy(out)
        pts = np.vstack([pts] + added)
    raise NumericalFailure("support-hull projection did not converge")
