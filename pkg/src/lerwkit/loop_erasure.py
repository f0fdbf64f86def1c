"""Chronological loop erasure, LERW samplers and exact LERW laws.

Exact probabilities of loop-erased paths are products of Green's functions
of shrinking sets, evaluated through a dense Green table of the ambient set
and Schur complements (or, for cross-checks, independent direct solves).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .exact import GreenTable, PointIndex, as_point_array, green, green_value, hitting
from .geometry import Ball, ExplicitSet, Region, enumerate_region, outer_boundary
from .lattice import LatticeSpec
from .rng import numba_seed_from
from .walks import (
    ExitOf,
    LatticePath,
    ZeroConditioning,
    board_for,
    conditioned_sampler,
    default_cap,
    run_walk,
    step_arrays,
)

Point = tuple[int, int]


class NotSelfAvoiding(ValueError):
    pass


class MalformedPath(ValueError):
    pass


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LoopErasedPath:
    points: np.ndarray
    source_fingerprint: str = ""
    walk_steps: int = 0
    truncated: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)

    @property
    def step_count(self) -> int:
        return len(self.points) - 1

    def __len__(self) -> int:
        return len(self.points)

    def tuples(self) -> tuple[Point, ...]:
        return tuple(map(tuple, self.points.tolist()))

    def to_json(self) -> list:
        return self.points.tolist()


def _tuples(path) -> list[Point]:
    if isinstance(path, (LatticePath, LoopErasedPath)):
        path = path.points
    arr = np.asarray(path, dtype=np.int64).reshape(-1, 2)
    return [(int(a), int(b)) for a, b in arr]


def loop_erase(path) -> LoopErasedPath:
    """Chronological loop erasure by the last-visit recursion.

    ``s_0`` is the last visit to the start; ``s_i`` is the last visit to the
    point following ``s_{i-1}``; stop when ``s_i`` is the final index.
    """
    pts = _tuples(path)
    if not pts:
        raise MalformedPath("empty path")
    last: dict[Point, int] = {}
    for j, p in enumerate(pts):
        last[p] = j
    m = len(pts) - 1
    s = last[pts[0]]
    out = [pts[s]]
    while s < m:
        s = last[pts[s + 1]]
        out.append(pts[s])
    fp = path.spec_fingerprint if isinstance(path, LatticePath) else ""
    return LoopErasedPath(np.array(out, dtype=np.int64), fp)


def is_self_avoiding(path) -> bool:
    pts = _tuples(path)
    return len(set(pts)) == len(pts)


# ------------------------------------------------------------------ sampling


@dataclass
class LerwWorkspace:
    """Reusable buffers for repeated LERW sampling in one bounded region."""

    region: Region
    spec: LatticeSpec
    board: object = field(init=False)
    grid: np.ndarray = field(init=False)
    px: np.ndarray = field(init=False)
    py: np.ndarray = field(init=False)
    cap: int = field(init=False)

    def __post_init__(self):
        self.board = board_for(self.region, self.spec)
        self.grid = self.board.blank_grid()
        size = self.board.npoints + 2
        self.px = np.empty(size, dtype=np.int64)
        self.py = np.empty(size, dtype=np.int64)
        b = self.region.bound(self.spec)
        self.cap = default_cap(b[1])

    def run(self, start=(0, 0)) -> tuple[int, int, bool]:
        """Sample into the buffers, leaving the grid marked; returns ``(k, steps, truncated)``."""
        sa = step_arrays(self.spec)
        return K.lerw_exit(int(start[0]), int(start[1]), self.board.mask, self.board.ox, self.board.oy,
                           sa.sx, sa.sy, sa.cdf, self.cap, self.grid, self.px, self.py)

    def clear(self, k: int):
        K.clear_stack(self.grid, self.board.ox, self.board.oy, self.px, self.py, k)

    def path(self, k: int) -> np.ndarray:
        return np.stack([self.px[: k + 1], self.py[: k + 1]], axis=1).copy()


@lru_cache(maxsize=16)
def _workspace(region: Region, spec: LatticeSpec) -> LerwWorkspace:
    return LerwWorkspace(region, spec)


def sample_lerw(K_region: Region, start, spec: LatticeSpec, rng: np.random.Generator) -> LoopErasedPath:
    """Loop erasure of the walk from ``start`` stopped at its first exit of ``K_region``."""
    ws = LerwWorkspace(K_region, spec)
    K.seed_numba(numba_seed_from(rng))
    k, steps, trunc = ws.run(start)
    pts = ws.path(k)
    ws.clear(k)
    return LoopErasedPath(pts, spec.fingerprint, steps, trunc)


def sample_infinite_lerw_restricted(l: float, rho: float, spec: LatticeSpec,
                                    rng: np.random.Generator) -> LoopErasedPath:
    """LERW in ``B_{rho l}`` cut at its first exit of ``B_l``."""
    if rho < 4:
        raise ValueError("rho must be at least 4")
    full = sample_lerw(Ball(rho * l), (0, 0), spec, rng)
    return LoopErasedPath(truncate_at_exit(full.points, l, spec), spec.fingerprint,
                          full.walk_steps, full.truncated)


def truncate_at_exit(points: np.ndarray, l: float, spec: LatticeSpec) -> np.ndarray:
    """Prefix up to the first index ``j >= 1`` outside ``B_l``."""
    out = ~spec.inside(points[1:], l)
    if not out.any():
        return points.copy()
    return points[: int(np.argmax(out)) + 2].copy()


# --------------------------------------------------------------- exact laws


def _green_table(K_region, spec: LatticeSpec) -> GreenTable:
    return _cached_table(K_region, spec) if isinstance(K_region, Region) else green(K_region, spec)


@lru_cache(maxsize=32)
def _cached_table(K_region: Region, spec: LatticeSpec) -> GreenTable:
    return green(K_region, spec)


def path_probability(path, spec: LatticeSpec) -> float:
    pts = np.asarray(_tuples(path), dtype=np.int64)
    p = 1.0
    for a in range(len(pts) - 1):
        p *= spec.step_prob(pts[a + 1] - pts[a])
    return p


def green_product(omega: Sequence[Point], table: GreenTable) -> float:
    """``prod_j G(omega_j; K minus {omega_0..omega_{j-1}})`` by sequential Schur complements.

    Points outside ``K`` contribute the literal factor 1.
    """
    G = table.G
    rows = table.index.lookup(np.asarray(omega, dtype=np.int64).reshape(-1, 2))
    used: list[int] = []
    prod = 1.0
    for r in rows:
        if r < 0:
            continue
        if used:
            Gaa = G[np.ix_(used, used)]
            g = G[used, r]
            val = G[r, r] - g @ np.linalg.solve(Gaa, g)
        else:
            val = G[r, r]
        prod *= val
        used.append(int(r))
    return prod


def green_product_direct(omega: Sequence[Point], K_region, spec: LatticeSpec) -> float:
    """Same product with a fresh solve on each shrunken set."""
    pts = as_point_array(K_region, spec)
    own = set(map(tuple, pts.tolist()))
    removed: set[Point] = set()
    prod = 1.0
    for w in omega:
        w = tuple(w)
        rest = np.array(sorted(own - removed), dtype=np.int64).reshape(-1, 2)
        prod *= green_value(rest, w, w, spec) if w in own else 1.0
        removed.add(w)
    return prod


def escape_from_path(omega: Sequence[Point], table: GreenTable) -> float:
    """``P_{omega_k}[sigma_K < xi_omega]`` for a path inside ``K``.

    Escape probabilities of a set ``A`` solve ``G_K[A, A] e = 1``.
    """
    rows = table.index.lookup(np.asarray(omega, dtype=np.int64).reshape(-1, 2))
    if (rows < 0).any():
        raise MalformedPath("initial segment must lie inside K")
    uniq, first = np.unique(rows, return_index=True)
    order = uniq[np.argsort(first)]
    Gaa = table.G[np.ix_(order, order)]
    e = np.linalg.solve(Gaa, np.ones(len(order)))
    return float(e[list(order).index(rows[-1])])


def exact_lerw_prob(omega, K_region, spec: LatticeSpec, table: GreenTable | None = None) -> float:
    """Exact probability that the LERW in ``K`` from ``omega_0`` starts with ``omega``.

    For a complete path (last point outside ``K``) this is ``p(omega) G_K(omega)``;
    for an initial segment inside ``K`` the escape factor from its tip is included.
    Interior points must lie in ``K``.
    """
    pts = _tuples(omega)
    if len(set(pts)) != len(pts):
        raise NotSelfAvoiding("path has a repeated point")
    for a in range(len(pts) - 1):
        if spec.step_prob(np.subtract(pts[a + 1], pts[a])) <= 0:
            raise MalformedPath("consecutive points are not a step of the walk")
    table = table or _green_table(K_region, spec)
    inside = table.index.lookup(np.asarray(pts, dtype=np.int64)) >= 0
    if not inside[:-1].all():
        raise MalformedPath("interior points must lie in K")
    p = path_probability(pts, spec)
    if p == 0:
        return 0.0
    if not inside[-1]:
        return p * green_product(pts[:-1], table)
    return p * green_product(pts, table) * escape_from_path(pts, table)


def enumerate_exit_paths(K_region, spec: LatticeSpec, start: Point = (0, 0),
                         max_paths: int = 2_000_000) -> list[tuple[Point, ...]]:
    """All self-avoiding paths from ``start`` inside ``K`` whose last point is outside ``K``."""
    pts = as_point_array(K_region, spec)
    own = set(map(tuple, pts.tolist()))
    steps = sorted(spec.support)
    out: list[tuple[Point, ...]] = []
    path = [tuple(start)]
    on = {tuple(start)}

    def dfs():
        x = path[-1]
        for s in steps:
            y = (x[0] + s[0], x[1] + s[1])
            if y in on:
                continue
            if y not in own:
                out.append(tuple(path) + (y,))
                if len(out) > max_paths:
                    raise BudgetExceeded("too many exit paths")
                continue
            path.append(y)
            on.add(y)
            dfs()
            path.pop()
            on.discard(y)

    if tuple(start) not in own:
        return [tuple(path)]
    dfs()
    return out


def enumerate_omega(l: float, spec: LatticeSpec) -> list[tuple[Point, ...]]:
    """``Omega_l``: paths from 0 inside ``B_l`` ending on its outer boundary."""
    return enumerate_exit_paths(Ball(l), spec)


def exact_lerw_law(K_region, spec: LatticeSpec) -> dict[tuple[Point, ...], float]:
    table = _green_table(K_region, spec)
    return {w: exact_lerw_prob(w, K_region, spec, table) for w in enumerate_exit_paths(K_region, spec)}


# ------------------------------------------------------------- decomposition


@dataclass(frozen=True)
class PathDecomposition:
    eta1: tuple[Point, ...]
    eta_star: tuple[Point, ...]
    eta2: tuple[Point, ...]
    k1: int
    k2: int

    def concat(self) -> tuple[Point, ...]:
        return self.eta1 + self.eta_star + self.eta2


def decompose(eta, l: float, m: float, n: float, spec: LatticeSpec) -> PathDecomposition:
    """Split a path from 0 to the outside of ``B_n`` at ``k1`` and ``k2``.

    ``k1`` is the first ``j >= 1`` outside ``B_l``; ``k2`` the last ``j >= 1``
    inside ``B_m`` (0 if there is none).  ``eta1 = eta[0..k1]``,
    ``eta_star = eta[k1+1..k2]`` and ``eta2 = eta[k2+1..]``, with ``eta_star``
    empty when ``k2 <= k1``.
    """
    if not l <= m <= n:
        raise MalformedPath("need l <= m <= n")
    pts = _tuples(eta)
    arr = np.asarray(pts, dtype=np.int64)
    in_n = spec.inside(arr, n)
    if len(pts) < 2 or in_n[-1] or not in_n[1:-1].all():
        raise MalformedPath("path must stay in B_n until its final point outside")
    out_l = np.nonzero(~spec.inside(arr[1:], l))[0]
    if len(out_l) == 0:
        raise MalformedPath("path never exits B_l")
    k1 = int(out_l[0]) + 1
    in_m = np.nonzero(spec.inside(arr[1:], m))[0]
    k2 = int(in_m[-1]) + 1 if len(in_m) else 0
    eta1 = tuple(pts[: k1 + 1])
    if k2 > k1:
        return PathDecomposition(eta1, tuple(pts[k1 + 1: k2 + 1]), tuple(pts[k2 + 1:]), k1, k2)
    return PathDecomposition(eta1, (), tuple(pts[k1 + 1:]), k1, k2)


def eta2_start(points: np.ndarray, m: float, spec: LatticeSpec) -> int:
    """Index where ``eta2`` starts, ``k2 + 1``."""
    in_m = np.nonzero(spec.inside(points[1:], m))[0]
    return int(in_m[-1]) + 2 if len(in_m) else 1


# ------------------------------------------------------------ domain Markov


def avoid_path_sampler(omega: Sequence[Point], K_region: Region, spec: LatticeSpec):
    """Sampler of the walk from the tip of ``omega`` conditioned to exit ``K`` before returning to ``omega``."""
    pts = _tuples(omega)
    own = set(map(tuple, enumerate_region(K_region, spec).tolist()))
    exits = sorted(set(outer_boundary(K_region, spec)) - set(pts))
    return conditioned_sampler(exits, pts, K_region, spec), exits


def domain_markov_sample(omega, K_region: Region, spec: LatticeSpec,
                         rng: np.random.Generator) -> LoopErasedPath:
    """Continuation of a LERW in ``K`` given its first steps ``omega``.

    Runs the walk from the tip conditioned to leave ``K`` without returning to
    ``omega``, erases its loops and drops the starting point.
    """
    pts = _tuples(omega)
    own = set(map(tuple, enumerate_region(K_region, spec).tolist()))
    if pts[-1] not in own:
        return LoopErasedPath(np.zeros((0, 2), dtype=np.int64), spec.fingerprint)
    sampler, _ = avoid_path_sampler(pts, K_region, spec)
    tip = np.asarray(pts[-1], dtype=np.int64)
    hy = sampler.solution.evaluate(tip + spec.steps)
    w = spec.step_probs * hy
    if w.sum() <= 0:
        raise ZeroConditioning("no continuation avoids the given segment")
    w = w / w.sum()
    first = tip + spec.steps[int(np.searchsorted(np.cumsum(w), rng.random(), side="right").clip(0, len(w) - 1))]
    rest = sampler.sample(first, rng)
    walk = np.vstack([tip.reshape(1, 2), rest.points])
    erased = loop_erase(walk)
    return LoopErasedPath(erased.points[1:], spec.fingerprint)


# ---------------------------------------------------------------- reversal


def find_reversal_witness(spec: LatticeSpec, max_len: int = 6) -> tuple[Point, ...] | None:
    """Shortest-first search for a walk path with ``L(reverse) != reverse(L)``."""
    steps = sorted(spec.support)
    frontier: list[tuple[Point, ...]] = [((0, 0),)]
    for _ in range(max_len):
        nxt = []
        for p in frontier:
            x = p[-1]
            for s in steps:
                q = p + ((x[0] + s[0], x[1] + s[1]),)
                a = loop_erase(q).tuples()[::-1]
                b = loop_erase(q[::-1]).tuples()
                if a != b:
                    return q
                nxt.append(q)
        frontier = nxt
    return None


@dataclass(frozen=True)
class ReversalCheck:
    statistic: float
    dof: int
    p_value: float
    trials: int
    witness: tuple[Point, ...] | None


def _two_sample_chi2(c1: Counter, c2: Counter, min_expected: float = 5.0) -> tuple[float, int, float]:
    keys = sorted(set(c1) | set(c2))
    a = np.array([c1.get(k, 0) for k in keys], dtype=float)
    b = np.array([c2.get(k, 0) for k in keys], dtype=float)
    order = np.argsort(-(a + b))
    a, b = a[order], b[order]
    na, nb = a.sum(), b.sum()
    tot = a + b
    big = tot * min(na, nb) / (na + nb) >= min_expected
    rows = [np.r_[a[big], a[~big].sum()], np.r_[b[big], b[~big].sum()]]
    table = np.array(rows)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 0.0, 0, 1.0
    chi2, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(chi2), int(dof), float(p)


def reversal_distribution_check(K_region: Region, spec: LatticeSpec, rng: np.random.Generator,
                                trials: int) -> ReversalCheck:
    """Compare the laws of ``reverse(L(lambda))`` and ``L(reverse(lambda))``.

    The two samples come from independent walks from 0 stopped on leaving ``K``.
    """
    fwd: Counter = Counter()
    bwd: Counter = Counter()
    for i in range(trials):
        lam = run_walk((0, 0), ExitOf(K_region), spec, rng).points
        if i % 2 == 0:
            fwd[loop_erase(lam).tuples()[::-1]] += 1
        else:
            bwd[loop_erase(lam[::-1]).tuples()] += 1
    chi2, dof, p = _two_sample_chi2(fwd, bwd)
    return ReversalCheck(chi2, dof, p, trials, find_reversal_witness(spec))


def chi_square_gof(counts: Counter, law: dict, min_expected: float = 5.0) -> tuple[float, int, float]:
    """Goodness of fit of observed counts to an exact law, pooling sparse cells."""
    n = sum(counts.values())
    keys = sorted(law, key=lambda k: -law[k])
    exp = np.array([law[k] * n for k in keys])
    obs = np.array([counts.get(k, 0) for k in keys], dtype=float)
    extra = n - obs.sum()
    big = exp >= min_expected
    e = np.r_[exp[big], exp[~big].sum()]
    o = np.r_[obs[big], obs[~big].sum() + extra]
    if e[-1] == 0:
        e, o = e[:-1], o[:-1]
    stat = float(((o - e) ** 2 / e).sum())
    dof = len(e) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))


# -------------------------------------------------------------- loop measure


@dataclass(frozen=True)
class UnrootedLoop:
    """Cyclic class of a rooted loop, stored as its minimal rotation."""

    canonical: tuple[Point, ...]
    alpha: int

    @property
    def length(self) -> int:
        return len(self.canonical)

    @property
    def period(self) -> int:
        return self.length // self.alpha

    @staticmethod
    def from_rooted(points: Sequence[Point]) -> "UnrootedLoop":
        """``points`` is ``[eta_0, ..., eta_{k-1}]`` (closing point omitted)."""
        pts = tuple(tuple(p) for p in points)
        rots = {pts[i:] + pts[:i] for i in range(len(pts))}
        return UnrootedLoop(min(rots), len(rots))

    def weight(self, spec: LatticeSpec) -> float:
        return self.alpha * loop_probability(self.canonical, spec) / self.length


def loop_probability(cyc: Sequence[Point], spec: LatticeSpec) -> float:
    p = 1.0
    k = len(cyc)
    for i in range(k):
        a, b = cyc[i], cyc[(i + 1) % k]
        p *= spec.step_prob((b[0] - a[0], b[1] - a[1]))
    return p


def enumerate_unrooted_loops(K_region, length: int, spec: LatticeSpec) -> list[UnrootedLoop]:
    """Every unrooted loop of exactly ``length`` steps inside ``K``."""
    pts = sorted(map(tuple, as_point_array(K_region, spec).tolist()))
    own = set(pts)
    steps = [tuple(map(int, s)) for s in spec.steps]
    found: dict[tuple[Point, ...], UnrootedLoop] = {}
    for root in pts:
        seq = [root]

        def dfs():
            if len(seq) == length:
                x = seq[-1]
                if (root[0] - x[0], root[1] - x[1]) in steps_set:
                    loop = UnrootedLoop.from_rooted(seq)
                    if loop.canonical[0] == root and loop.canonical not in found:
                        found[loop.canonical] = loop
                return
            x = seq[-1]
            for s in steps:
                y = (x[0] + s[0], x[1] + s[1])
                if y in own and y >= root:
                    seq.append(y)
                    dfs()
                    seq.pop()

        steps_set = set(steps)
        dfs()
    return list(found.values())


@dataclass(frozen=True)
class LoopMeasureResult:
    value: float
    last_increment: float
    per_length: tuple[float, ...]
    method: str

    @property
    def exp_value(self) -> float:
        return math.exp(self.value)


def loop_measure_truncated(K_region, omega, L_max: int, spec: LatticeSpec, method: str = "trace",
                           max_sites: int = 16, max_length: int = 14) -> LoopMeasureResult:
    """Mass of unrooted loops in ``K`` of length at most ``L_max`` that meet ``omega``.

    ``method="trace"`` sums ``(tr P_K^L - tr P_{K minus omega}^L) / L``, which
    counts each unrooted loop ``alpha`` times with weight ``p / L``;
    ``method="enumerate"`` lists canonical loops explicitly.
    """
    pts = as_point_array(K_region, spec)
    if len(pts) > max_sites or L_max > max_length:
        raise BudgetExceeded(f"|K| = {len(pts)}, L_max = {L_max} over budget")
    wset = set(_tuples(omega))
    per: list[float] = []
    if method == "trace":
        from .exact import transition_matrix

        P = transition_matrix(pts, spec).toarray()
        keep = np.array([tuple(p) not in wset for p in pts.tolist()])
        Q = P[np.ix_(keep, keep)]
        A = np.eye(len(P))
        B = np.eye(len(Q))
        for L in range(1, L_max + 1):
            A = A @ P
            B = B @ Q
            per.append((np.trace(A) - np.trace(B)) / L)
    elif method == "enumerate":
        for L in range(1, L_max + 1):
            tot = 0.0
            for loop in enumerate_unrooted_loops(pts, L, spec):
                if wset.intersection(loop.canonical):
                    tot += loop.weight(spec)
            per.append(tot)
    else:
        raise ValueError(f"unknown method {method!r}")
    return LoopMeasureResult(float(sum(per)), float(per[-1]) if per else 0.0, tuple(per), method)


def green_of_path(K_region, omega, spec: LatticeSpec) -> float:
    """``G_K(omega)`` restricted to the points of ``omega`` inside ``K``."""
    return green_product(_tuples(omega), green(K_region, spec))


# ------------------------------------------------------------- mu measures


def measure_mu(l: float, K_region, spec: LatticeSpec, K2=None) -> dict[tuple[Point, ...], float]:
    """Exact law of the LERW restricted to its first exit of ``B_l``.

    With ``K2`` given, the walk is conditioned to leave ``K_region`` before
    ``K2`` (exits of ``K1 & K2`` straight into the complement of both count
    as failures) and the law is that of the conditioned walk's loop erasure.
    """
    omegas = enumerate_omega(l, spec)
    if K2 is None:
        table = _green_table(K_region, spec)
        return {w: exact_lerw_prob(w, K_region, spec, table) for w in omegas}
    k1 = set(map(tuple, as_point_array(K_region, spec).tolist()))
    k2 = set(map(tuple, as_point_array(K2, spec).tolist()))
    both = np.array(sorted(k1 & k2), dtype=np.int64)
    table = green(both, spec)
    from .exact import _outer_of

    good = [p for p in _outer_of(both, spec) if p in k2 and p not in k1]
    bad = [p for p in _outer_of(both, spec) if not (p in k2 and p not in k1)]
    h0 = hitting(good, bad, both, spec)((0, 0))
    if h0 <= 0:
        raise ZeroConditioning("cannot leave K1 before K2")
    out = {}
    for w in omegas:
        rows = table.index.lookup(np.asarray(w, dtype=np.int64))
        if (rows < 0).any():
            raise MalformedPath("B_l must lie inside K1 & K2")
        pw = path_probability(w, spec) * green_product(w, table)
        tip_exit = hitting(good, bad + [p for p in w], both, spec)
        tip = np.asarray(w[-1])
        vals = tip_exit.evaluate(tip + spec.steps)
        # weak solution gives 1 on good exits and 0 on path points and bad exits
        esc_good = float(np.dot(spec.step_probs, vals))
        out[w] = pw * esc_good / h0
    return out


def max_ratio(mu_a: dict, mu_b: dict) -> float:
    """``max_w max(mu_a/mu_b, mu_b/mu_a)`` over the common support."""
    r = 1.0
    for w, a in mu_a.items():
        b = mu_b[w]
        if a > 0 and b > 0:
            r = max(r, a / b, b / a)
    return r
