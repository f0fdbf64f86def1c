"""Monte Carlo estimators for LERW escape, growth and separation statistics.

Every estimator takes a master seed (or a generator from which one is drawn)
and fans trials out in fixed-size chunks through :func:`lerwkit.rng.chunked_map`.
Chunks return sufficient statistics that are merged in chunk order, so the
result is bit-identical for any worker count.

Escape-type quantities are two-level expectations: a LERW is sampled, then the
inner probability that an independent walk misses it is either computed
exactly (small ``n``) or estimated from ``walks`` independent walks.  The
per-LERW values are the batches behind the reported standard error.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .exact import EscapeSolver, green_value, inner_boundary_points
from .geometry import Ball
from .lattice import LatticeSpec
from .loop_erasure import LerwWorkspace, eta2_start
from .rng import chunked_map
from .walks import conditioned_sampler, default_cap, step_arrays

EXACT_MAX_N = 64


class NonPositiveEstimate(ValueError):
    pass


class InsufficientConditionedSamples(RuntimeError):
    pass


# ----------------------------------------------------------------- reports


@dataclass(frozen=True)
class EstimatorReport:
    quantity: str
    params: dict
    estimate: float
    stderr: float
    trials: int
    truncations: int
    seed: int
    spec_fingerprint: str
    duration_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.params.get("n", self.params.get("k"))

    @property
    def m(self):
        return self.params.get("m")

    def to_json(self) -> dict:
        return {
            "quantity": self.quantity,
            "params": dict(self.params),
            "estimate": self.estimate,
            "stderr": self.stderr,
            "trials": self.trials,
            "truncations": self.truncations,
            "seed": self.seed,
            "spec_fingerprint": self.spec_fingerprint,
            "duration_s": self.duration_s,
            "extra": dict(self.extra),
        }


@dataclass(frozen=True)
class ExponentFit:
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float
    r2: float

    def to_json(self) -> dict:
        return {
            "points": [[float(a), float(b), float(c)] for a, b, c in zip(self.x, self.y, self.w)],
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "r2": self.r2,
        }


def fit_exponent(points: Sequence[tuple[float, float, float]]) -> ExponentFit:
    """Weighted least squares of ``log estimate`` on ``log scale``.

    Weights are ``(estimate / stderr)^2``, the inverse variances of the logs
    to first order; all weights fall back to 1 when no standard error is
    positive.
    """
    pts = [(float(a), float(b), float(c)) for a, b, c in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if any(b <= 0 or a <= 0 for a, b, _ in pts):
        raise NonPositiveEstimate("estimates and scales must be positive")
    x = np.log([a for a, _, _ in pts])
    y = np.log([b for _, b, _ in pts])
    se = np.array([c for _, _, c in pts])
    if (se > 0).all():
        w = (np.exp(y) / se) ** 2
    else:
        w = np.ones(len(pts))
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    if sxx == 0:
        raise ValueError("scales must not all coincide")
    slope = float((w * (x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - intercept - slope * x
    syy = (w * (y - ym) ** 2).sum()
    r2 = float(1 - (w * resid**2).sum() / syy) if syy > 0 else 1.0
    if (se > 0).all():
        slope_se = math.sqrt(1 / sxx)
    elif len(pts) > 2:
        slope_se = math.sqrt((w * resid**2).sum() / (len(pts) - 2) / sxx)
    else:
        slope_se = 0.0
    return ExponentFit(x, y, w, slope, intercept, slope_se, r2)


# --------------------------------------------------------------- plumbing


@dataclass
class _Moments:
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    truncations: int = 0

    def add(self, v: float):
        self.count += 1
        self.total += v
        self.total_sq += v * v

    def merge(self, other: "_Moments"):
        self.count += other.count
        self.total += other.total
        self.total_sq += other.total_sq
        self.truncations += other.truncations

    def mean_se(self) -> tuple[float, float]:
        if self.count == 0:
            return float("nan"), float("nan")
        mean = self.total / self.count
        if self.count < 2:
            return mean, float("nan")
        var = max(self.total_sq - self.count * mean * mean, 0.0) / (self.count - 1)
        return mean, math.sqrt(var / self.count)


def _master(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2**63 - 1))
    return int(seed)


def _qform(spec: LatticeSpec) -> tuple[float, float, float]:
    Q = spec.quadratic_form
    return float(Q[0, 0]), float(Q[0, 1]), float(Q[1, 1])


def _report(quantity, params, mom: _Moments, seed, spec, t0, extra=None, clip=True) -> EstimatorReport:
    est, se = mom.mean_se()
    if clip and not math.isnan(est):
        est = min(max(est, 0.0), 1.0)
    return EstimatorReport(quantity, dict(params), float(est), float(se), mom.count, mom.truncations,
                           seed, spec.fingerprint, time.perf_counter() - t0, dict(extra or {}))


def _merge(parts) -> _Moments:
    out = _Moments()
    for p in parts:
        out.merge(p)
    return out


@lru_cache(maxsize=16)
def _escape_solver(n: float, spec: LatticeSpec) -> EscapeSolver:
    return EscapeSolver(Ball(n), spec)


class _Scanner:
    """Independent walks from a start point until the exit of ``B_n``, scanned against a marked grid."""

    def __init__(self, ws: LerwWorkspace, n: float, cap: int):
        self.ws = ws
        self.inside = _inside_mask(ws.board, float(n), ws.spec)
        self.sa = step_arrays(ws.spec)
        self.q = _qform(ws.spec)
        self.cap = cap

    def run(self, start=(0, 0), stop_at=0, tip=(0, 0)):
        b = self.ws.board
        return K.walk_scan(int(start[0]), int(start[1]), self.inside, b.ox, b.oy, self.sa.sx, self.sa.sy,
                           self.sa.cdf, self.cap, self.ws.grid, stop_at, int(tip[0]), int(tip[1]), *self.q)


@lru_cache(maxsize=16)
def _board_points_cached(shape, ox, oy):
    xs = np.arange(shape[0]) - ox
    ys = np.arange(shape[1]) - oy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def _board_points(board) -> np.ndarray:
    return _board_points_cached(board.mask.shape, board.ox, board.oy)


@lru_cache(maxsize=32)
def _inside_cached(shape, ox, oy, n, spec):
    return Ball(n).contains(_board_points_cached(shape, ox, oy), spec).reshape(shape)


def _inside_mask(board, n: float, spec: LatticeSpec) -> np.ndarray:
    """``B_n`` painted on ``board``."""
    return _inside_cached(board.mask.shape, board.ox, board.oy, float(n), spec)


# ----------------------------------------------------------- escape family


def _check_n(n):
    if n < 1:
        raise ValueError("n must be at least 1")


def estimate_es(n: float, trials: int, spec: LatticeSpec, rng, *, walks: int = 16,
                exact: bool | None = None, exact_max_n: float = EXACT_MAX_N,
                workers: int = 1) -> EstimatorReport:
    """``Es(n)``: probability that a walk from 0 leaves ``B_n`` without meeting an independent LERW.

    ``exact=None`` picks the exact inner probability when ``n <= exact_max_n``.
    """
    _check_n(n)
    seed = _master(rng)
    use_exact = (n <= exact_max_n) if exact is None else bool(exact)
    t0 = time.perf_counter()
    region = Ball(n)

    def chunk(g, size, idx):
        ws = LerwWorkspace(region, spec)
        mom = _Moments()
        scan = None if use_exact else _Scanner(ws, n, default_cap(n))
        solver = _escape_solver(n, spec) if use_exact else None
        for _ in range(size):
            k, _steps, trunc = ws.run()
            if trunc:
                mom.truncations += 1
                ws.clear(k)
                continue
            if use_exact:
                mom.add(solver.escape((0, 0), ws.path(k)))
            else:
                ok = 0
                for _w in range(walks):
                    st, *_ = scan.run(stop_at=0)
                    if st == 1:
                        ok += 1
                    elif st < 0:
                        mom.truncations += 1
                mom.add(ok / walks)
            ws.clear(k)
        return mom

    mom = _merge(chunked_map(chunk, trials, seed, ("es", spec.fingerprint, float(n), use_exact, walks),
                             workers))
    return _report("Es", {"n": n, "route": "exact" if use_exact else "indicator", "walks": walks},
                   mom, seed, spec, t0)


def _annulus_chunks(ms: Sequence[float], n: float, trials: int, spec, seed, walks, use_exact, workers, tag):
    region = Ball(n)
    ms = [float(m) for m in ms]

    def chunk(g, size, idx):
        ws = LerwWorkspace(region, spec)
        moms = [_Moments() for _ in ms]
        scan = None if use_exact else _Scanner(ws, n, default_cap(n))
        solver = _escape_solver(n, spec) if use_exact else None
        for _ in range(size):
            k, _steps, trunc = ws.run()
            if trunc:
                for mo in moms:
                    mo.truncations += 1
                ws.clear(k)
                continue
            pts = ws.path(k)
            starts = [eta2_start(pts, m, spec) for m in ms]
            if use_exact:
                for mo, s0 in zip(moms, starts):
                    mo.add(solver.escape((0, 0), pts[s0:]))
            else:
                ok = np.zeros(len(ms))
                stop = max(starts)
                for _w in range(walks):
                    st, _j, best, *_ = scan.run(stop_at=stop)
                    if st < 0:
                        for mo in moms:
                            mo.truncations += 1
                        continue
                    # window of radius m is eta2 = path[s0:], met iff best >= s0
                    ok += np.array([best < s0 for s0 in starts], dtype=float)
                for mo, v in zip(moms, ok):
                    mo.add(v / walks)
            ws.clear(k)
        return moms

    parts = chunked_map(chunk, trials, seed, tag, workers)
    out = [_Moments() for _ in ms]
    for p in parts:
        for o, q in zip(out, p):
            o.merge(q)
    return out


def estimate_es_annulus(m: float, n: float, trials: int, spec: LatticeSpec, rng, *, walks: int = 16,
                        exact: bool | None = None, exact_max_n: float = EXACT_MAX_N,
                        workers: int = 1) -> EstimatorReport:
    """``Es(m, n)``: the walk from 0 must only miss the terminal segment ``eta2`` of the LERW.

    When the LERW never re-enters ``B_m`` after leaving ``B_l`` the terminal
    segment is the whole path after its start (``k2 = 0``); for ``m = n`` it is
    the final exit point alone.
    """
    return estimate_es_annulus_sweep([m], n, trials, spec, rng, walks=walks, exact=exact,
                                     exact_max_n=exact_max_n, workers=workers)[0]


def estimate_es_annulus_sweep(ms: Sequence[float], n: float, trials: int, spec: LatticeSpec, rng, *,
                              walks: int = 16, exact: bool | None = None,
                              exact_max_n: float = EXACT_MAX_N, workers: int = 1) -> list[EstimatorReport]:
    """``Es(m, n)`` for several ``m`` from shared LERW samples and shared walks."""
    _check_n(n)
    for m in ms:
        if not 1 <= m <= n:
            raise ValueError("need 1 <= m <= n")
    seed = _master(rng)
    use_exact = (n <= exact_max_n) if exact is None else bool(exact)
    t0 = time.perf_counter()
    moms = _annulus_chunks(ms, n, trials, spec, seed, walks, use_exact, workers,
                           ("es_annulus", spec.fingerprint, float(n), tuple(float(m) for m in ms),
                            use_exact, walks))
    return [_report("Es_annulus", {"n": n, "m": m, "route": "exact" if use_exact else "indicator",
                                   "walks": walks}, mo, seed, spec, t0)
            for m, mo in zip(ms, moms)]


def _infinite_truncated(ws: LerwWorkspace, n: float, spec: LatticeSpec):
    """Sample in ``B_{rho n}``, unmark everything after the first exit of ``B_n``; returns ``(k, j)``."""
    k, _steps, trunc = ws.run()
    pts = ws.path(k)
    out = ~spec.inside(pts[1:], n)
    j = int(np.argmax(out)) + 1 if out.any() else k
    if j < k:
        K.clear_stack(ws.grid, ws.board.ox, ws.board.oy, ws.px[j + 1:], ws.py[j + 1:], k - j - 1)
    return k, j, trunc


def _clear_prefix(ws: LerwWorkspace, j: int):
    K.clear_stack(ws.grid, ws.board.ox, ws.board.oy, ws.px, ws.py, j)


def estimate_es_tilde(n: float, trials: int, spec: LatticeSpec, rng, *, rho: float = 8.0,
                      walks: int = 16, workers: int = 1) -> EstimatorReport:
    """Escape probability past the infinite-LERW approximant cut at its first exit of ``B_n``."""
    _check_n(n)
    if rho < 4:
        raise ValueError("rho must be at least 4")
    seed = _master(rng)
    t0 = time.perf_counter()
    region = Ball(rho * n)

    def chunk(g, size, idx):
        ws = LerwWorkspace(region, spec)
        scan = _Scanner(ws, n, default_cap(n))
        mom = _Moments()
        for _ in range(size):
            k, j, trunc = _infinite_truncated(ws, n, spec)
            if trunc:
                mom.truncations += 1
                _clear_prefix(ws, j)
                continue
            ok = 0
            for _w in range(walks):
                st, *_ = scan.run(stop_at=0)
                ok += st == 1
                mom.truncations += st < 0
            mom.add(ok / walks)
            _clear_prefix(ws, j)
        return mom

    mom = _merge(chunked_map(chunk, trials, seed, ("es_tilde", spec.fingerprint, float(n), float(rho), walks),
                             workers))
    return _report("Es_tilde", {"n": n, "rho": rho, "walks": walks}, mom, seed, spec, t0)


def estimate_growth(n: float, trials: int, spec: LatticeSpec, rng, *, workers: int = 1) -> EstimatorReport:
    """``Gr(n)``: mean number of steps of the LERW from 0 to the first exit of ``B_n``."""
    _check_n(n)
    seed = _master(rng)
    t0 = time.perf_counter()
    region = Ball(n)

    def chunk(g, size, idx):
        ws = LerwWorkspace(region, spec)
        mom = _Moments()
        for _ in range(size):
            k, _steps, trunc = ws.run()
            if trunc:
                mom.truncations += 1
            else:
                mom.add(float(k))
            ws.clear(k)
        return mom

    mom = _merge(chunked_map(chunk, trials, seed, ("growth", spec.fingerprint, float(n)), workers))
    return _report("Gr", {"n": n}, mom, seed, spec, t0, clip=False)


# ------------------------------------------------------------ point on path


@dataclass(frozen=True)
class PointOnPath:
    direct: EstimatorReport
    formula: EstimatorReport
    green: float

    @property
    def joint_stderr(self) -> float:
        return math.hypot(self.direct.stderr, self.formula.stderr)


def point_on_path_prob(z, n: float, trials: int, spec: LatticeSpec, rng, *, walks: int = 8,
                       workers: int = 1) -> PointOnPath:
    """``P[z on the LERW in B_n]`` directly and through the last-exit decomposition.

    The second route multiplies ``G_n(0, z)`` by the probability that a walk
    from ``z`` leaves ``B_n`` without meeting the loop erasure of a walk from
    ``z`` conditioned to reach 0 before leaving ``B_n``.
    """
    z = (int(z[0]), int(z[1]))
    if z == (0, 0) or not Ball(n).contains([z], spec)[0]:
        raise ValueError("z must be a nonzero point of B_n")
    seed = _master(rng)
    t0 = time.perf_counter()
    region = Ball(n)

    def direct_chunk(g, size, idx):
        ws = LerwWorkspace(region, spec)
        mom = _Moments()
        zx, zy = z[0] + ws.board.ox, z[1] + ws.board.oy
        for _ in range(size):
            k, _steps, trunc = ws.run()
            if trunc:
                mom.truncations += 1
            else:
                mom.add(1.0 if ws.grid[zx, zy] > 0 else 0.0)
            ws.clear(k)
        return mom

    direct = _merge(chunked_map(direct_chunk, trials, seed, ("pop_direct", spec.fingerprint, float(n), z),
                                workers))
    t1 = time.perf_counter()
    G = green_value(region, (0, 0), z, spec)
    sampler = conditioned_sampler([(0, 0)], [], region, spec)
    board = sampler.board
    inside = Ball(n).contains(_board_points(board), spec).reshape(board.mask.shape)
    sa = step_arrays(spec)
    cap = default_cap(n)
    q = _qform(spec)

    def formula_chunk(g, size, idx):
        grid = board.blank_grid()
        px = np.empty(board.npoints + 2, dtype=np.int64)
        py = np.empty(board.npoints + 2, dtype=np.int64)
        mom = _Moments()
        for _ in range(size):
            k, _steps, trunc = K.conditioned_lerw(z[0], z[1], sampler.hfield, sampler.target, board.ox,
                                                  board.oy, sa.sx, sa.sy, sa.pr, cap, grid, px, py)
            if trunc:
                mom.truncations += 1
                K.clear_stack(grid, board.ox, board.oy, px, py, k)
                continue
            ok = 0
            for _w in range(walks):
                st, *_ = K.walk_scan(z[0], z[1], inside, board.ox, board.oy, sa.sx, sa.sy, sa.cdf, cap,
                                     grid, 0, z[0], z[1], *q)
                ok += st == 1
                mom.truncations += st < 0
            mom.add(ok / walks)
            K.clear_stack(grid, board.ox, board.oy, px, py, k)
        return mom

    formula = _merge(chunked_map(formula_chunk, trials, seed, ("pop_formula", spec.fingerprint, float(n), z),
                                 workers))
    params = {"n": n, "z": list(z)}
    rd = _report("point_on_path_direct", params, direct, seed, spec, t0)
    est, se = formula.mean_se()
    rf = EstimatorReport("point_on_path_formula", dict(params, walks=walks), float(G * est), float(G * se),
                         formula.count, formula.truncations, seed, spec.fingerprint,
                         time.perf_counter() - t1, {"green": G, "escape": est})
    return PointOnPath(rd, rf, G)


# ------------------------------------------------------------ decomposition


@dataclass(frozen=True)
class DecompositionRatio:
    m: float
    n: float
    ratio: float
    stderr: float
    es_n: EstimatorReport
    es_m: EstimatorReport
    es_mn: EstimatorReport

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        return self.ratio - z * self.stderr, self.ratio + z * self.stderr


def decomposition_ratio(m: float, n: float, trials: int, spec: LatticeSpec, rng, *, walks: int = 16,
                        exact_max_n: float = EXACT_MAX_N, workers: int = 1) -> DecompositionRatio:
    """``Es(n) / (Es(m) Es(m, n))`` with a delta-method standard error (independent runs)."""
    if not 1 <= m <= n / 2:
        raise ValueError("need 1 <= m <= n/2")
    seed = _master(rng)
    kw = dict(walks=walks, exact_max_n=exact_max_n, workers=workers)
    a = estimate_es(n, trials, spec, seed, **kw)
    b = estimate_es(m, trials, spec, seed + 1, **kw)
    c = estimate_es_annulus(m, n, trials, spec, seed + 2, **kw)
    r = a.estimate / (b.estimate * c.estimate)
    rel = math.sqrt(sum((x.stderr / x.estimate) ** 2 for x in (a, b, c)))
    return DecompositionRatio(m, n, r, r * rel, a, b, c)


# --------------------------------------------------------------- separation


@dataclass(frozen=True)
class SeparationTable:
    k: float
    c_grid: tuple[float, ...]
    probabilities: tuple[float, ...]
    stderrs: tuple[float, ...]
    conditioned: int
    trials: int
    walks: int
    truncations: int
    seed: int
    spec_fingerprint: str
    reverse: bool = False
    distances: np.ndarray = field(default=None, repr=False)

    def at(self, c: float) -> tuple[float, float]:
        i = self.c_grid.index(c)
        return self.probabilities[i], self.stderrs[i]

    def reports(self) -> list[EstimatorReport]:
        name = "separation_reverse" if self.reverse else "separation"
        return [EstimatorReport(name, {"k": self.k, "c": c, "walks": self.walks}, p, s, self.trials,
                                self.truncations, self.seed, self.spec_fingerprint,
                                extra={"conditioned": self.conditioned})
                for c, p, s in zip(self.c_grid, self.probabilities, self.stderrs)]


def _ratio_table(groups: list[np.ndarray], c_grid, min_conditioned):
    """Cluster-robust ratio estimates of ``P[D >= c | A]`` from per-LERW groups of distances."""
    a = np.array([len(gp) for gp in groups], dtype=float)
    total = a.sum()
    if total < min_conditioned:
        raise InsufficientConditionedSamples(f"{int(total)} conditioned samples (< {min_conditioned})")
    probs, ses = [], []
    N = len(groups)
    for c in c_grid:
        b = np.array([float((gp >= c).sum()) for gp in groups])
        R = b.sum() / total
        var = ((b - R * a) ** 2).sum() / total**2 * (N / max(N - 1, 1))
        probs.append(float(R))
        ses.append(float(math.sqrt(var)))
    return tuple(probs), tuple(ses)


def _min_qdist(points: np.ndarray, target, spec: LatticeSpec) -> float:
    d = points - np.asarray(target)
    return float(np.sqrt(spec.norm2(d).min()))


def separation_statistics(k: float, c_grid: Sequence[float], trials: int, spec: LatticeSpec, rng, *,
                          rho: float = 4.0, walks: int = 32, min_conditioned: int = 100,
                          workers: int = 1) -> SeparationTable:
    """Conditional law of the normalized separation ``D_k`` given non-intersection ``A_k``.

    Each trial samples the infinite-LERW approximant (in ``B_{rho k}``) cut at
    its first exit of ``B_k`` and ``walks`` independent walks from 0 to the
    exit of ``B_k``; every walk that misses the path is a conditioned sample.
    """
    if k < 4:
        raise ValueError("k must be at least 4")
    c_grid = tuple(float(c) for c in c_grid)
    if any(not 0 < c < 1 for c in c_grid):
        raise ValueError("c_grid must lie in (0, 1)")
    seed = _master(rng)
    region = Ball(rho * k)
    A = spec.embedding

    def chunk(g, size, idx):
        ws = LerwWorkspace(region, spec)
        scan = _Scanner(ws, k, default_cap(k))
        groups = []
        trunc_count = 0
        for _ in range(size):
            kk, j, trunc = _infinite_truncated(ws, k, spec)
            if trunc:
                trunc_count += 1
                _clear_prefix(ws, j)
                continue
            pts = ws.path(j)
            tip = pts[-1]
            tree = cKDTree(pts @ A.T)
            ds = []
            for _w in range(walks):
                st, _steps, _best, d2, ex, ey = scan.run(stop_at=0, tip=tip)
                if st < 0:
                    trunc_count += 1
                elif st == 1:
                    d_walk_end = tree.query(A @ np.array([ex, ey], dtype=float))[0]
                    ds.append(min(d_walk_end, math.sqrt(d2)) / k)
            groups.append(np.array(ds))
            _clear_prefix(ws, j)
        return groups, trunc_count

    parts = chunked_map(chunk, trials, seed, ("separation", spec.fingerprint, float(k), float(rho), walks),
                        workers)
    groups = [gp for p in parts for gp in p[0]]
    truncs = sum(p[1] for p in parts)
    probs, ses = _ratio_table(groups, c_grid, min_conditioned)
    allds = np.concatenate(groups) if groups else np.zeros(0)
    return SeparationTable(k, c_grid, probs, ses, len(allds), trials, walks, truncs, seed, spec.fingerprint,
                           False, allds)


def reverse_separation_statistics(k: float, c_grid: Sequence[float], trials: int, spec: LatticeSpec, rng, *,
                                  n: float | None = None, walks: int = 32, min_conditioned: int = 100,
                                  workers: int = 1) -> SeparationTable:
    """Reverse variant: processes run inward from the boundary of ``B_n`` (default ``n = 2k``).

    The reversed LERW ``X`` and a walk started uniformly on the inner boundary
    of ``B_n`` and conditioned to hit 0 before leaving ``B_n`` both stop at
    their first entrance to ``B_{n-k}``.  Distances are normalized by ``k``.
    """
    n = float(2 * k if n is None else n)
    if k < 4 or k >= n:
        raise ValueError("need 4 <= k < n")
    c_grid = tuple(float(c) for c in c_grid)
    seed = _master(rng)
    region = Ball(n)
    sampler = conditioned_sampler([(0, 0)], [], region, spec)
    board = sampler.board
    bpts = _board_points(board)
    inside_n = region.contains(bpts, spec).reshape(board.mask.shape)
    starts = inner_boundary_points(region.points(spec), spec)
    sa = step_arrays(spec)
    cap = default_cap(n)
    q = _qform(spec)
    A = spec.embedding
    inner = Ball(n - k)
    target = inner.contains(bpts, spec).reshape(board.mask.shape)

    def chunk(g, size, idx):
        grid = board.blank_grid()
        px = np.empty(board.npoints + 2, dtype=np.int64)
        py = np.empty(board.npoints + 2, dtype=np.int64)
        groups = []
        truncs = 0
        for _ in range(size):
            kk, _steps, trunc = K.lerw_exit(0, 0, inside_n, board.ox, board.oy, sa.sx, sa.sy, sa.cdf, cap,
                                            grid, px, py)
            if trunc:
                truncs += 1
                K.clear_stack(grid, board.ox, board.oy, px, py, kk)
                continue
            pts = np.stack([px[: kk + 1], py[: kk + 1]], axis=1)
            in_inner = np.nonzero(inner.contains(pts, spec))[0]
            i0 = int(in_inner[-1])
            seg = pts[i0:]
            tip = pts[i0]
            tree = cKDTree(seg @ A.T)
            ds = []
            picks = g.integers(0, len(starts), size=walks)
            for p in picks:
                s0 = starts[p]
                st, _j, d2, ex, ey = K.conditioned_scan(int(s0[0]), int(s0[1]), sampler.hfield, target,
                                                        board.ox, board.oy, sa.sx, sa.sy, sa.pr, cap, grid,
                                                        i0, kk, int(tip[0]), int(tip[1]), *q)
                if st < 0:
                    truncs += 1
                elif st == 1:
                    d_end = tree.query(A @ np.array([ex, ey], dtype=float))[0]
                    ds.append(min(d_end, math.sqrt(d2)) / k)
            groups.append(np.array(ds))
            K.clear_stack(grid, board.ox, board.oy, px, py, kk)
        return groups, truncs

    parts = chunked_map(chunk, trials, seed, ("separation_rev", spec.fingerprint, float(k), n, walks), workers)
    groups = [gp for p in parts for gp in p[0]]
    truncs = sum(p[1] for p in parts)
    probs, ses = _ratio_table(groups, c_grid, min_conditioned)
    allds = np.concatenate(groups) if groups else np.zeros(0)
    return SeparationTable(k, c_grid, probs, ses, len(allds), trials, walks, truncs, seed, spec.fingerprint,
                           True, allds)
