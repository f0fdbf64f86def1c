"""Exact linear-algebra oracle on finite lattice regions.

Everything here is a direct solve: Green's matrices ``(I - P_K)^{-1}``,
hitting probabilities, harmonic extensions and the identities they satisfy.
Regions outside the solved domain are killing (absorbing with value 0).
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Ball, Region, enumerate_region, inner_boundary, outer_boundary
from .lattice import LatticeSpec

DEFAULT_STATE_CAP = 200_000
DENSE_MAX = 5_000


class TooLarge(ValueError):
    pass


class SingularSystem(RuntimeError):
    pass


class OverlappingAbsorbers(ValueError):
    pass


class ZeroConditioning(ValueError):
    pass


def as_point_array(obj, spec: LatticeSpec | None = None) -> np.ndarray:
    """Sorted, duplicate-free ``(N, 2)`` int array from a region or point iterable."""
    if isinstance(obj, Region):
        if spec is None:
            raise ValueError("a spec is needed to enumerate a region")
        return enumerate_region(obj, spec)
    arr = np.asarray(list(obj) if not isinstance(obj, np.ndarray) else obj, dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if len(arr) == 0:
        return arr
    return np.unique(arr, axis=0)


class PointIndex:
    """Vectorized point -> row lookup through a dense box."""

    def __init__(self, points: np.ndarray, margin: int = 0):
        self.points = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        if len(self.points):
            lo = self.points.min(axis=0) - margin
            hi = self.points.max(axis=0) + margin
        else:
            lo = np.zeros(2, dtype=np.int64)
            hi = np.zeros(2, dtype=np.int64)
        self.lo = lo
        self.shape = tuple((hi - lo + 1).tolist())
        self.table = np.full(self.shape, -1, dtype=np.int64)
        if len(self.points):
            rel = self.points - lo
            self.table[rel[:, 0], rel[:, 1]] = np.arange(len(self.points))

    def __len__(self):
        return len(self.points)

    def lookup(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        rel = pts - self.lo
        ok = (rel >= 0).all(axis=1) & (rel[:, 0] < self.shape[0]) & (rel[:, 1] < self.shape[1])
        out = np.full(len(pts), -1, dtype=np.int64)
        out[ok] = self.table[rel[ok, 0], rel[ok, 1]]
        return out

    def row(self, x) -> int:
        return int(self.lookup([x])[0])


def transition_matrix(points: np.ndarray, spec: LatticeSpec, index: PointIndex | None = None) -> sp.csr_matrix:
    """Transition probabilities restricted to ``points`` (substochastic)."""
    index = index or PointIndex(points)
    n = len(points)
    rows, cols, vals = [], [], []
    for s, ps in zip(spec.steps, spec.step_probs):
        j = index.lookup(points + s)
        ok = j >= 0
        rows.append(np.nonzero(ok)[0])
        cols.append(j[ok])
        vals.append(np.full(ok.sum(), ps))
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    P.sum_duplicates()
    return P


def _mass_into(points: np.ndarray, target: PointIndex, spec: LatticeSpec) -> sp.csr_matrix:
    """``M[i, a] = p(points_i, target_a)``."""
    n = len(points)
    rows, cols, vals = [], [], []
    for s, ps in zip(spec.steps, spec.step_probs):
        j = target.lookup(points + s)
        ok = j >= 0
        rows.append(np.nonzero(ok)[0])
        cols.append(j[ok])
        vals.append(np.full(ok.sum(), ps))
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, max(len(target), 1)),
    )
    M.sum_duplicates()
    return M


class _Solver:
    """Solve ``(I - P) x = b`` by dense LU or sparse LU depending on size."""

    def __init__(self, A: sp.csr_matrix):
        self.n = A.shape[0]
        if self.n == 0:
            self.kind = "empty"
        elif self.n <= DENSE_MAX:
            self.kind = "dense"
            try:
                self.lu = sla.lu_factor(A.toarray(), check_finite=False)
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise SingularSystem(str(exc)) from exc
        else:
            self.kind = "sparse"
            try:
                self.lu = spla.splu(A.tocsc())
            except RuntimeError as exc:
                raise SingularSystem(str(exc)) from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.kind == "empty":
            return b.copy()
        if self.kind == "dense":
            return sla.lu_solve(self.lu, b, check_finite=False)
        return self.lu.solve(b)


def _check_size(n: int, cap: int):
    if n > cap:
        raise TooLarge(f"{n} states exceed the cap of {cap}")


@dataclass(eq=False)
class GreenTable:
    """Green's function ``G_K(x, y)`` on a finite set ``K``.

    Dense for up to 5000 states; above that columns are solved on demand
    from a sparse LU factorization.  Off-``K`` arguments follow the literal
    visit-count definition: the time-0 visit counts, so ``G(x, x) = 1`` for
    ``x`` outside ``K``.
    """

    points: np.ndarray
    spec: LatticeSpec
    region: Region | None = None
    index: PointIndex = field(init=False, repr=False)
    P: sp.csr_matrix = field(init=False, repr=False)
    _dense: np.ndarray | None = field(default=None, init=False, repr=False)
    _solver: _Solver | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        self.index = PointIndex(self.points)
        self.P = transition_matrix(self.points, self.spec, self.index)
        n = len(self.points)
        A = (sp.identity(n, format="csr") - self.P).tocsr()
        self._solver = _Solver(A)
        if self._solver.kind == "dense":
            self._dense = self._solver.solve(np.eye(n))

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def G(self) -> np.ndarray:
        if self._dense is None:
            raise TooLarge("dense matrix not materialized for this size")
        return self._dense

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    def columns(self, rows: np.ndarray) -> np.ndarray:
        """``G[:, rows]`` (equal to ``G[rows, :].T`` by symmetry)."""
        rows = np.asarray(rows, dtype=np.int64)
        if self._dense is not None:
            return self._dense[:, rows]
        b = np.zeros((self.size, len(rows)))
        b[rows, np.arange(len(rows))] = 1.0
        return self._solver.solve(b)

    def _row_of(self, x) -> int:
        return self.index.row(x)

    def __call__(self, x, y) -> float:
        x = tuple(int(c) for c in x)
        y = tuple(int(c) for c in y)
        ix, iy = self._row_of(x), self._row_of(y)
        if iy < 0:
            return 1.0 if x == y else 0.0
        if ix >= 0:
            return float(self.columns(np.array([iy]))[ix, 0])
        # x outside K: time-0 visit plus one step into K
        total = 1.0 if x == y else 0.0
        col = self.columns(np.array([iy]))[:, 0]
        nb = self.index.lookup(np.asarray(x) + self.spec.steps)
        for j, ps in zip(nb, self.spec.step_probs):
            if j >= 0:
                total += ps * col[j]
        return total

    def diag(self, x) -> float:
        return self(x, x)

    def residual(self) -> float:
        """``max |(I - P_K) G - I|``."""
        n = self.size
        if n == 0:
            return 0.0
        if self._dense is not None:
            R = self._dense - self.P @ self._dense - np.eye(n)
            return float(np.abs(R).max())
        rows = np.unique(np.linspace(0, n - 1, min(n, 16)).astype(np.int64))
        C = self.columns(rows)
        E = np.zeros_like(C)
        E[rows, np.arange(len(rows))] = 1.0
        return float(np.abs(C - self.P @ C - E).max())

    def asymmetry(self) -> float:
        if self._dense is None:
            rows = np.arange(min(self.size, 16))
            C = self.columns(rows)
            return float(np.abs(C[rows, :] - C[rows, :].T).max())
        return float(np.abs(self._dense - self._dense.T).max())

    def restricted_green(self, removed: np.ndarray) -> "np.ndarray":
        """Dense Green matrix of ``K`` minus the rows ``removed``, by Schur complement."""
        G = self.G
        keep = np.setdiff1d(np.arange(self.size), removed)
        if len(removed) == 0:
            return G[np.ix_(keep, keep)]
        Gaa = G[np.ix_(removed, removed)]
        Gka = G[np.ix_(keep, removed)]
        return G[np.ix_(keep, keep)] - Gka @ np.linalg.solve(Gaa, Gka.T)


def green(K, spec: LatticeSpec, cap: int = DEFAULT_STATE_CAP) -> GreenTable:
    """Green's table for a finite region or explicit point set."""
    pts = as_point_array(K, spec)
    _check_size(len(pts), cap)
    return GreenTable(points=pts, spec=spec, region=K if isinstance(K, Region) else None)


def green_value(K, x, y, spec: LatticeSpec) -> float:
    """``G(x, y; K)`` by a single solve (literal convention off ``K``)."""
    pts = as_point_array(K, spec)
    if len(pts) == 0:
        return 1.0 if tuple(x) == tuple(y) else 0.0
    index = PointIndex(pts)
    iy = index.row(y)
    if iy < 0:
        return 1.0 if tuple(x) == tuple(y) else 0.0
    P = transition_matrix(pts, spec, index)
    A = (sp.identity(len(pts), format="csc") - P).tocsc()
    b = np.zeros(len(pts))
    b[iy] = 1.0
    col = spla.spsolve(A, b) if len(pts) > 1 else b / A.toarray()[0, 0]
    col = np.atleast_1d(col)
    ix = index.row(x)
    if ix >= 0:
        return float(col[ix])
    total = 1.0 if tuple(x) == tuple(y) else 0.0
    nb = index.lookup(np.asarray(x) + spec.steps)
    for j, ps in zip(nb, spec.step_probs):
        if j >= 0:
            total += ps * col[j]
    return total


# ------------------------------------------------------------------- hitting


@dataclass(eq=False)
class HittingSolution:
    """``h(z) = P_z[hit K1 before K2]`` with killing off ``domain``."""

    spec: LatticeSpec
    free: np.ndarray
    values: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    free_index: PointIndex = field(repr=False)
    k1_index: PointIndex = field(repr=False)
    k2_index: PointIndex = field(repr=False)

    def __call__(self, z) -> float:
        return float(self.evaluate(np.asarray(z).reshape(1, 2))[0])

    def evaluate(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        out = np.zeros(len(pts))
        j = self.free_index.lookup(pts)
        out[j >= 0] = self.values[j[j >= 0]]
        out[self.k1_index.lookup(pts) >= 0] = 1.0
        return out

    def laplacian_residual(self) -> float:
        """``max |h(x) - sum_y p(x, y) h(y)|`` over free points."""
        if len(self.free) == 0:
            return 0.0
        acc = np.zeros(len(self.free))
        for s, ps in zip(self.spec.steps, self.spec.step_probs):
            acc += ps * self.evaluate(self.free + s)
        return float(np.abs(self.values - acc).max())

    def step_weights(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Conditioned kernel ``p(x, y) h(y) / h(x)`` at ``x``: (steps, probs)."""
        hx = self(x)
        if hx <= 0:
            raise ZeroConditioning(f"h({tuple(x)}) = 0")
        hy = self.evaluate(np.asarray(x) + self.spec.steps)
        return self.spec.steps, self.spec.step_probs * hy / hx


def hitting(K1, K2, domain, spec: LatticeSpec, cap: int = DEFAULT_STATE_CAP) -> HittingSolution:
    """Solve for ``P_z[xi_bar(K1) < xi_bar(K2)]`` on a finite domain.

    ``K1``/``K2`` are finite regions or point sets; states outside
    ``domain`` that are not in ``K1`` are killing.
    """
    k1 = as_point_array(K1, spec)
    k2 = as_point_array(K2, spec)
    dom = as_point_array(domain, spec)
    k1i, k2i = PointIndex(k1), PointIndex(k2)
    if len(k1) and len(k2) and (k2i.lookup(k1) >= 0).any():
        raise OverlappingAbsorbers("K1 and K2 intersect")
    keep = (k1i.lookup(dom) < 0) & (k2i.lookup(dom) < 0)
    free = dom[keep]
    _check_size(len(free), cap)
    fi = PointIndex(free)
    P = transition_matrix(free, spec, fi)
    b = np.asarray(_mass_into(free, k1i, spec).sum(axis=1)).ravel() if len(k1) else np.zeros(len(free))
    A = (sp.identity(len(free), format="csr") - P).tocsr()
    h = _Solver(A).solve(b) if len(free) else np.zeros(0)
    h = np.clip(h, 0.0, 1.0)
    return HittingSolution(spec=spec, free=free, values=h, k1=k1, k2=k2,
                           free_index=fi, k1_index=k1i, k2_index=k2i)


class EscapeSolver:
    """Exact ``P_x[S[1, sigma] misses A]`` for a fixed region and varying sets ``A``.

    ``sigma`` is the first exit of the region; an exit step landing on a point
    of ``A`` counts as a hit.  The transition matrix is assembled once and each
    query is one sparse solve with the points of ``A`` made absorbing.
    """

    def __init__(self, region, spec: LatticeSpec, cap: int = DEFAULT_STATE_CAP):
        self.spec = spec
        self.points = as_point_array(region, spec)
        _check_size(len(self.points), cap)
        self.index = PointIndex(self.points)
        P = transition_matrix(self.points, spec, self.index)
        self.out_mass = 1.0 - np.asarray(P.sum(axis=1)).ravel()
        self.A = (sp.identity(len(self.points), format="csr") - P).tocsr()

    def escape(self, start, avoid) -> float:
        spec = self.spec
        avoid = np.asarray(avoid, dtype=np.int64).reshape(-1, 2)
        rows = self.index.lookup(avoid)
        free = np.ones(len(self.points), dtype=bool)
        free[rows[rows >= 0]] = False
        b = self.out_mass.copy()
        outside = avoid[rows < 0]
        for s, ps in zip(spec.steps, spec.step_probs):
            r = self.index.lookup(outside - s)
            np.subtract.at(b, r[r >= 0], ps)
        u = np.zeros(len(self.points))
        if free.any():
            A = self.A[free][:, free]
            u[free] = spla.spsolve(A.tocsc(), b[free]) if A.shape[0] > 1 else b[free] / A.toarray()[0, 0]
        bad_out = set(map(tuple, outside.tolist()))
        esc = 0.0
        start = np.asarray(start, dtype=np.int64).reshape(2)
        for s, ps in zip(spec.steps, spec.step_probs):
            y = start + s
            r = self.index.row(y)
            if r >= 0:
                esc += ps * u[r]
            elif tuple(y.tolist()) not in bad_out:
                esc += ps
        return float(min(max(esc, 0.0), 1.0))


def exit_distribution(z, K, spec: LatticeSpec) -> dict[tuple[int, int], float]:
    """``P_z[S(sigma_K) = y]`` for every ``y`` in the outer boundary of ``K``."""
    pts = as_point_array(K, spec)
    out_b = np.array(sorted(outer_boundary(K, spec) if isinstance(K, Region) else _outer_of(pts, spec)),
                     dtype=np.int64).reshape(-1, 2)
    fi = PointIndex(pts)
    oi = PointIndex(out_b)
    P = transition_matrix(pts, spec, fi)
    M = _mass_into(pts, oi, spec).toarray()
    A = (sp.identity(len(pts), format="csr") - P).tocsr()
    H = _Solver(A).solve(M)
    z = np.asarray(z, dtype=np.int64)
    row = np.zeros(len(out_b))
    for s, ps in zip(spec.steps, spec.step_probs):
        w = z + s
        j = fi.row(w)
        if j >= 0:
            row += ps * H[j]
        else:
            k = oi.row(w)
            if k >= 0:
                row[k] += ps
    return {tuple(map(int, y)): float(v) for y, v in zip(out_b, row)}


def _outer_of(pts: np.ndarray, spec: LatticeSpec) -> set[tuple[int, int]]:
    own = set(map(tuple, pts.tolist()))
    out = set()
    for s in spec.support:
        for p in pts.tolist():
            q = (p[0] + s[0], p[1] + s[1])
            if q not in own:
                out.add(q)
    return out


# --------------------------------------------------------- identity checks


@dataclass(frozen=True)
class DecompositionCheck:
    lhs: float
    rhs: float
    residual: float
    truncation_mass: float


def _strict_hit_from(y, target_free_solution: HittingSolution, spec: LatticeSpec) -> float:
    """``P_y[xi_target < xi_absorb]`` with ``j >= 1`` from a weak-hitting solution."""
    vals = target_free_solution.evaluate(np.asarray(y) + spec.steps)
    return float(np.dot(spec.step_probs, vals))


def verify_rwdecomp(z, K1, K2, domain, spec: LatticeSpec) -> DecompositionCheck:
    """Evaluate both sides of the last-exit factorization of ``P_z[xi_K1 < xi_K2]``.

    Each factor is computed by its own linear solve on ``domain`` with killing
    outside it.
    """
    z = tuple(int(c) for c in z)
    k1 = as_point_array(K1, spec)
    k2 = as_point_array(K2, spec)
    dom = as_point_array(domain, spec)
    k1set = set(map(tuple, k1.tolist()))
    k2set = set(map(tuple, k2.tolist()))
    if k1set & k2set:
        raise OverlappingAbsorbers("K1 and K2 intersect")
    if z in k1set:
        return DecompositionCheck(1.0, 1.0, 0.0, 0.0)
    if z in k2set:
        return DecompositionCheck(0.0, 0.0, 0.0, 0.0)
    dom_set = set(map(tuple, dom.tolist())) | {z}
    dom = np.array(sorted(dom_set), dtype=np.int64)

    lhs = hitting(k1, k2, dom, spec)(z)

    both = np.array(sorted((dom_set - k1set - k2set)), dtype=np.int64)
    not1 = np.array(sorted(dom_set - k1set), dtype=np.int64)
    g_both = green_value(both, z, z, spec)
    g_not1 = green_value(not1, z, z, spec)

    # harmonic measure of K1 from z, killing off the domain
    fi = PointIndex(not1)
    ki = PointIndex(k1)
    P = transition_matrix(not1, spec, fi)
    M = _mass_into(not1, ki, spec).toarray()
    H = _Solver((sp.identity(len(not1), format="csr") - P).tocsr()).solve(M)
    harm = H[fi.row(z)]

    inner = inner_boundary_points(k1, spec)
    zarr = np.array([z], dtype=np.int64)
    to_z_avoid_1 = hitting(zarr, k1, dom, spec)
    to_z_avoid_12 = hitting(zarr, np.vstack([k1, k2]) if len(k2) else k1, dom, spec)
    total = 0.0
    for y in inner:
        a = ki.row(y)
        if harm[a] == 0.0:
            continue
        den = _strict_hit_from(y, to_z_avoid_1, spec)
        if den <= 0:
            continue
        num = _strict_hit_from(y, to_z_avoid_12, spec)
        total += (num / den) * harm[a]
    rhs = g_both / g_not1 * total

    union = np.vstack([k1, k2]) if len(k2) else k1
    escape = 1.0 - hitting(union, np.zeros((0, 2), dtype=np.int64), dom, spec)(z)
    return DecompositionCheck(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs), truncation_mass=escape)


def inner_boundary_points(pts: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    own = PointIndex(pts)
    hit = np.zeros(len(pts), dtype=bool)
    for s in spec.support:
        hit |= own.lookup(pts + np.asarray(s)) < 0
    return pts[hit]


@dataclass(frozen=True)
class GreenConditionCheck:
    max_residual: float
    diag_residual: float
    h_min: float


def verify_greencondit(K, K1, K2, spec: LatticeSpec, domain=None) -> GreenConditionCheck:
    """Compare the conditioned chain's Green matrix with ``h(y)/h(x) G^X``.

    ``h(z) = P_z[xi_bar(K1) < xi_bar(K2)]`` is solved on ``domain`` (a ball
    enclosing all sets by default), outside of which the walk is killed.  The
    conditioned kernel is assembled explicitly on ``K`` and inverted.
    """
    kp = as_point_array(K, spec)
    k1 = as_point_array(K1, spec)
    k2 = as_point_array(K2, spec)
    if domain is None:
        allp = np.vstack([kp, k1, k2]) if len(k2) else np.vstack([kp, k1])
        R = float(np.sqrt(spec.norm2(allp).max())) + 4 * spec.range + 1
        domain = Ball(R)
    hs = hitting(k1, k2, domain, spec)
    h = hs.evaluate(kp)
    if (h <= 0).any():
        raise ZeroConditioning("h vanishes on part of K")
    idx = PointIndex(kp)
    P = transition_matrix(kp, spec, idx).toarray()
    PY = P * (h[None, :] / h[:, None])
    n = len(kp)
    GX = np.linalg.solve(np.eye(n) - P, np.eye(n))
    GY = np.linalg.solve(np.eye(n) - PY, np.eye(n))
    pred = GX * (h[None, :] / h[:, None])
    return GreenConditionCheck(
        max_residual=float(np.abs(GY - pred).max()),
        diag_residual=float(np.abs(np.diag(GY) - np.diag(GX)).max()),
        h_min=float(h.min()),
    )


def htransform_log_ratio(path, hs: HittingSolution, spec: LatticeSpec) -> tuple[float, float]:
    """Return ``(log p^Y(path), log[h(end)/h(start) p(path)])`` for the conditioned kernel."""
    pts = np.asarray(path, dtype=np.int64).reshape(-1, 2)
    hv = hs.evaluate(pts)
    logy = 0.0
    logx = 0.0
    for a in range(len(pts) - 1):
        p = spec.step_prob(pts[a + 1] - pts[a])
        logx += math.log(p)
        logy += math.log(p * hv[a + 1] / hv[a])
    return logy, logx + math.log(hv[-1]) - math.log(hv[0])


# ---------------------------------------------------------------- Dirichlet


_T = math.sqrt(2.0) - 1.0


def dirichlet_h(z) -> np.ndarray | float:
    """Harmonic function on the unit disk with boundary data ``1{|arg| <= pi/4}``."""
    z = np.asarray(z, dtype=complex)
    a = np.abs(1 + z) ** 2
    d = 1 - np.abs(z) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        v = (np.arctan((_T * a + 2 * z.imag) / d) + np.arctan((_T * a - 2 * z.imag) / d)) / np.pi
    return float(v) if v.ndim == 0 else v


def poisson_kernel(z, theta) -> np.ndarray | float:
    z = np.asarray(z, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    v = (1 - np.abs(z) ** 2) / np.abs(np.exp(1j * theta) - z) ** 2
    return float(v) if np.ndim(v) == 0 else v


def dirichlet_h_poisson(z, nodes: int = 4001) -> float:
    """Same function by quadrature of the Poisson kernel (independent route)."""
    from scipy.integrate import quad

    val, _ = quad(lambda t: poisson_kernel(z, t), -math.pi / 4, math.pi / 4,
                  epsabs=1e-13, epsrel=1e-13, limit=200)
    return val / (2 * math.pi)


@dataclass(eq=False)
class DiscreteDirichlet:
    """Discrete harmonic extension of ``h(x/n)`` from the outer boundary of ``B_{rn}``."""

    n: float
    r: float
    points: np.ndarray
    values: np.ndarray
    continuum: np.ndarray
    radii: np.ndarray

    def max_error(self, within: float | None = None) -> float:
        within = self.r * self.n / 2 if within is None else within
        sel = self.radii < within
        return float(np.abs(self.values[sel] - self.continuum[sel]).max())


def dirichlet_htilde(n: float, spec: LatticeSpec, r: float = 0.5) -> DiscreteDirichlet:
    ball = Ball(r * n)
    pts = enumerate_region(ball, spec)
    bnd = np.array(sorted(outer_boundary(ball, spec)), dtype=np.int64)
    fi = PointIndex(pts)
    bi = PointIndex(bnd)
    P = transition_matrix(pts, spec, fi)
    M = _mass_into(pts, bi, spec)
    hb = dirichlet_h(spec.embed_complex(bnd) / n)
    b = M @ hb
    vals = _Solver((sp.identity(len(pts), format="csr") - P).tocsr()).solve(b)
    cont = dirichlet_h(spec.embed_complex(pts) / n)
    return DiscreteDirichlet(n=n, r=r, points=pts, values=vals, continuum=cont,
                             radii=np.sqrt(spec.norm2(pts)))


# -------------------------------------------------------------- binary cache

_MAGIC = b"LERWGT\x00\x01"


def region_hash(points: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(points, dtype=np.int64).tobytes()).hexdigest()[:16]


def cache_key(table: GreenTable) -> str:
    return f"{region_hash(table.points)}-{table.spec.fingerprint}"


def save_green_table(table: GreenTable, path: str | Path) -> Path:
    """Write ``magic | u32 header length | JSON header | row-major float64``."""
    path = Path(path)
    header = json.dumps({
        "version": 1,
        "region_hash": region_hash(table.points),
        "spec_fingerprint": table.spec.fingerprint,
        "n": table.size,
        "points": table.points.tolist(),
    }).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(table.G, dtype="<f8").tobytes())
    tmp.replace(path)
    return path


def load_green_table(path: str | Path, spec: LatticeSpec) -> GreenTable:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a Green table cache file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        if header["spec_fingerprint"] != spec.fingerprint:
            raise ValueError("cache was built for a different lattice spec")
        n = header["n"]
        G = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
    table = GreenTable.__new__(GreenTable)
    table.points = np.asarray(header["points"], dtype=np.int64).reshape(-1, 2)
    table.spec = spec
    table.region = None
    table.index = PointIndex(table.points)
    table.P = transition_matrix(table.points, spec, table.index)
    table._dense = G
    table._solver = None
    return table
