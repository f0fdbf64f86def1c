"""Random walks to stopping times, h-transformed walks and Brownian paths."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .exact import HittingSolution, ZeroConditioning, hitting
from .geometry import Ball, Complement, Region, UnboundedRegion, enumerate_region
from .lattice import LatticeSpec
from .rng import numba_seed_from

_SEGMENT = 1 << 20


class CapExceeded(RuntimeError):
    pass


class DegenerateCurve(ValueError):
    pass


class UnboundedDomain(ValueError):
    pass


def default_cap(n: float) -> int:
    """``64 n^2 log(n + 2)`` steps for a radius-``n`` experiment."""
    n = max(float(n), 1.0)
    return int(64 * n * n * math.log(n + 2)) + 64


@dataclass(frozen=True)
class StepArrays:
    sx: np.ndarray
    sy: np.ndarray
    cdf: np.ndarray
    pr: np.ndarray


@lru_cache(maxsize=64)
def step_arrays(spec: LatticeSpec) -> StepArrays:
    s = spec.steps
    return StepArrays(
        sx=np.ascontiguousarray(s[:, 0]),
        sy=np.ascontiguousarray(s[:, 1]),
        cdf=np.ascontiguousarray(spec.step_cdf),
        pr=np.ascontiguousarray(spec.step_probs),
    )


@dataclass(frozen=True, eq=False)
class Board:
    """Dense boolean picture of a bounded region with a step-sized margin.

    Point ``(x, y)`` lives at ``mask[x + ox, y + oy]``.
    """

    mask: np.ndarray
    ox: int
    oy: int
    npoints: int

    def blank_grid(self) -> np.ndarray:
        return np.zeros(self.mask.shape, dtype=np.int32)

    def blank_field(self) -> np.ndarray:
        return np.zeros(self.mask.shape, dtype=np.float64)

    def cells(self, pts) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        return pts[:, 0] + self.ox, pts[:, 1] + self.oy

    def covers(self, pts) -> np.ndarray:
        ix, iy = self.cells(pts)
        return (ix >= 0) & (iy >= 0) & (ix < self.mask.shape[0]) & (iy < self.mask.shape[1])

    def paint(self, pts, value=True) -> np.ndarray:
        out = np.zeros(self.mask.shape, dtype=bool)
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        if len(pts):
            ix, iy = self.cells(pts)
            out[ix, iy] = value
        return out


@lru_cache(maxsize=64)
def board_for(region: Region, spec: LatticeSpec, extra_radius: float = 0.0) -> Board:
    """Board of a bounded region; the box also covers ``extra_radius`` around the origin."""
    pts = enumerate_region(region, spec)
    b = region.bound(spec)
    if b is None:
        raise UnboundedRegion(f"{region!r} is not bounded")
    margin = spec.max_step + 1
    lo = pts.min(axis=0) if len(pts) else np.zeros(2, dtype=np.int64)
    hi = pts.max(axis=0) if len(pts) else np.zeros(2, dtype=np.int64)
    if extra_radius > 0:
        hw = spec.box_halfwidth(extra_radius)
        lo = np.minimum(lo, -hw)
        hi = np.maximum(hi, hw)
    lo = np.minimum(lo, 0) - margin
    hi = np.maximum(hi, 0) + margin
    shape = tuple((hi - lo + 1).tolist())
    mask = np.zeros(shape, dtype=bool)
    if len(pts):
        mask[pts[:, 0] - lo[0], pts[:, 1] - lo[1]] = True
    return Board(mask=mask, ox=int(-lo[0]), oy=int(-lo[1]), npoints=len(pts))


def board_for_points(pts: np.ndarray, spec: LatticeSpec, also=None) -> Board:
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
    allp = pts if also is None else np.vstack([pts, np.asarray(also, dtype=np.int64).reshape(-1, 2)])
    margin = spec.max_step + 1
    lo = np.minimum(allp.min(axis=0), 0) - margin
    hi = np.maximum(allp.max(axis=0), 0) + margin
    mask = np.zeros(tuple((hi - lo + 1).tolist()), dtype=bool)
    mask[pts[:, 0] - lo[0], pts[:, 1] - lo[1]] = True
    return Board(mask=mask, ox=int(-lo[0]), oy=int(-lo[1]), npoints=len(pts))


# ------------------------------------------------------------------ paths


@dataclass(frozen=True, eq=False)
class LatticePath:
    points: np.ndarray
    spec_fingerprint: str = ""
    truncated: bool = False

    @property
    def step_count(self) -> int:
        return len(self.points) - 1

    def __len__(self) -> int:
        return len(self.points)

    def tuples(self) -> tuple[tuple[int, int], ...]:
        return tuple(map(tuple, self.points.tolist()))

    def to_json(self) -> list:
        return self.points.tolist()


@dataclass(frozen=True)
class StoppingRule:
    """``exit``: first ``j >= 1`` outside; ``hit``: first ``j >= 1`` inside;
    ``exit_weak``/``hit_weak`` also allow ``j = 0``."""

    kind: str
    region: Region
    cap: int | None = None

    def __post_init__(self):
        if self.kind not in ("exit", "hit", "exit_weak", "hit_weak"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if self.cap is not None and self.cap <= 0:
            raise ValueError("cap must be positive")


def ExitOf(region: Region, cap: int | None = None) -> StoppingRule:
    return StoppingRule("exit", region, cap)


def HitOf(region: Region, cap: int | None = None) -> StoppingRule:
    return StoppingRule("hit", region, cap)


def ExitOfWeak(region: Region, cap: int | None = None) -> StoppingRule:
    return StoppingRule("exit_weak", region, cap)


def HitOfWeak(region: Region, cap: int | None = None) -> StoppingRule:
    return StoppingRule("hit_weak", region, cap)


def _indicator(region: Region, spec: LatticeSpec) -> tuple[Board, np.ndarray, bool]:
    """``(board, values, outside_value)`` with the region's indicator on the board."""
    if isinstance(region, Complement) and region.region.bound(spec) is not None:
        board = board_for(region.region, spec)
        return board, ~board.mask, True
    if region.bound(spec) is None:
        raise UnboundedRegion(f"{region!r} has no finite description")
    board = board_for(region, spec)
    return board, board.mask, False


def run_walk(start, rule: StoppingRule, spec: LatticeSpec, rng: np.random.Generator) -> LatticePath:
    """Run the walk from ``start`` until ``rule`` fires.

    A walk that reaches the step cap is returned with ``truncated=True``.
    """
    start = np.asarray(start, dtype=np.int64).reshape(2)
    board, ind, outside = _indicator(rule.region, spec)
    stop_when = rule.kind.startswith("hit")
    here = bool(ind[start[0] + board.ox, start[1] + board.oy]) if board.covers(start)[0] else outside
    if rule.kind.endswith("weak") and here == stop_when:
        return LatticePath(start.reshape(1, 2).copy(), spec.fingerprint)
    cap = rule.cap
    if cap is None:
        b = rule.region.bound(spec) if not isinstance(rule.region, Complement) else rule.region.region.bound(spec)
        cap = default_cap(b[1] if b else 16.0)
    sa = step_arrays(spec)
    K.seed_numba(numba_seed_from(rng))
    chunks = []
    x, y = int(start[0]), int(start[1])
    used = 0
    truncated = True
    while used < cap:
        seg = min(_SEGMENT, cap - used)
        px = np.empty(seg + 1, dtype=np.int64)
        py = np.empty(seg + 1, dtype=np.int64)
        n, trunc = K.run_walk_mask(x, y, ind, board.ox, board.oy, outside, stop_when,
                                   sa.sx, sa.sy, sa.cdf, seg, px, py)
        chunks.append(np.stack([px[: n + 1], py[: n + 1]], axis=1) if not chunks
                      else np.stack([px[1: n + 1], py[1: n + 1]], axis=1))
        used += n
        x, y = int(px[n]), int(py[n])
        if not trunc:
            truncated = False
            break
    return LatticePath(np.vstack(chunks), spec.fingerprint, truncated)


# ------------------------------------------------------------ conditioning


@dataclass(frozen=True, eq=False)
class ConditionedSampler:
    """Exact ``h``-transform sampler for hitting ``K1`` before ``K2``."""

    solution: HittingSolution
    board: Board
    hfield: np.ndarray
    target: np.ndarray
    spec: LatticeSpec

    def h(self, z) -> float:
        return self.solution(z)

    def sample(self, start, rng: np.random.Generator, cap: int | None = None) -> LatticePath:
        start = np.asarray(start, dtype=np.int64).reshape(2)
        if self.target[start[0] + self.board.ox, start[1] + self.board.oy]:
            return LatticePath(start.reshape(1, 2).copy(), self.spec.fingerprint)
        if self.h(start) <= 0:
            raise ZeroConditioning(f"h({tuple(start)}) = 0")
        cap = cap or default_cap(max(self.board.mask.shape))
        sa = step_arrays(self.spec)
        K.seed_numba(numba_seed_from(rng))
        px = np.empty(cap + 1, dtype=np.int64)
        py = np.empty(cap + 1, dtype=np.int64)
        n, trunc = K.conditioned_walk_kernel(int(start[0]), int(start[1]), self.hfield, self.target,
                                             self.board.ox, self.board.oy, sa.sx, sa.sy, sa.pr,
                                             cap, px, py)
        return LatticePath(np.stack([px[: n + 1], py[: n + 1]], axis=1), self.spec.fingerprint, trunc)


def conditioned_sampler(target_first, avoid_until, domain, spec: LatticeSpec) -> ConditionedSampler:
    """Build the exact ``h`` for ``P_z[xi_bar(K1) < xi_bar(K2)]`` on ``domain``.

    States outside ``domain`` and ``K1`` are killing, so ``h`` is zero there.
    """
    if isinstance(domain, Region) and domain.bound(spec) is None:
        raise UnboundedDomain("conditioning needs a finite domain")
    sol = hitting(target_first, avoid_until, domain, spec)
    k1 = sol.k1
    allp = np.vstack([sol.free, k1, sol.k2]) if len(sol.k2) else np.vstack([sol.free, k1])
    board = board_for_points(allp, spec)
    hfield = board.blank_field()
    if len(sol.free):
        ix, iy = board.cells(sol.free)
        hfield[ix, iy] = sol.values
    ix, iy = board.cells(k1)
    hfield[ix, iy] = 1.0
    target = board.paint(k1)
    return ConditionedSampler(sol, board, hfield, target, spec)


def conditioned_walk(start, target_first, avoid_until, domain, spec: LatticeSpec,
                     rng: np.random.Generator, cap: int | None = None) -> LatticePath:
    """Walk conditioned to hit ``target_first`` before ``avoid_until`` (exact h-transform)."""
    return conditioned_sampler(target_first, avoid_until, domain, spec).sample(start, rng, cap)


# ---------------------------------------------------------------- Brownian


@dataclass(frozen=True, eq=False)
class BrownianPath:
    samples: np.ndarray
    dt: float
    seed: int | None = None

    def at(self, t: float) -> complex:
        """Linear interpolation between grid samples."""
        if len(self.samples) == 1 or self.dt == 0:
            return complex(self.samples[0])
        u = t / self.dt
        i = min(int(math.floor(u)), len(self.samples) - 2)
        f = u - i
        return complex((1 - f) * self.samples[i] + f * self.samples[i + 1])


def sample_brownian(T: float, dt: float, rng: np.random.Generator) -> BrownianPath:
    """Complex Brownian motion from 0 on a uniform grid of step ``dt``."""
    if T == 0:
        return BrownianPath(np.zeros(1, dtype=complex), 0.0)
    if not 0 < dt <= T:
        raise ValueError("need 0 < dt <= T")
    n = int(round(T / dt))
    inc = rng.normal(0.0, math.sqrt(dt), size=(n, 2))
    z = np.concatenate([[0j], np.cumsum(inc[:, 0] + 1j * inc[:, 1])])
    return BrownianPath(z, dt)


def bm_escape_probability(curve: np.ndarray, trials: int, rng: np.random.Generator,
                          eps: float = 1e-6, max_steps: int = 100_000) -> tuple[float, float]:
    """Probability that Brownian motion from 0 leaves the unit disk before meeting ``curve``.

    Uses walk-on-spheres (exact in law for the exit problem up to the ``eps``
    stopping shell).  Returns ``(estimate, stderr)``.
    """
    c = np.asarray(curve, dtype=complex).ravel()
    K.seed_numba(numba_seed_from(rng))
    esc, lost = K.wos_escape_many(np.ascontiguousarray(c.real), np.ascontiguousarray(c.imag),
                                  len(c), eps, max_steps, trials)
    p = esc / trials
    return p, math.sqrt(max(p * (1 - p), 0.0) / trials)


def rw_escape_probability(curve: np.ndarray, n: float, spec: LatticeSpec, trials: int,
                          rng: np.random.Generator, eps: float = 1e-9) -> tuple[float, float, int]:
    """Scaled walk (mesh ``1/n``) from 0 avoiding the interpolated curve until leaving the disk."""
    c = np.asarray(curve, dtype=complex).ravel()
    sa = step_arrays(spec)
    K.seed_numba(numba_seed_from(rng))
    cap = default_cap(n)
    ok = 0
    trunc = 0
    cx = np.ascontiguousarray(c.real)
    cy = np.ascontiguousarray(c.imag)
    emb = np.ascontiguousarray(spec.embedding)
    for _ in range(trials):
        s = K.scaled_walk_avoids(sa.sx, sa.sy, sa.cdf, float(n), emb, cx, cy, len(c), eps, cap)
        if s == 1:
            ok += 1
        elif s < 0:
            trunc += 1
    m = trials - trunc
    p = ok / m if m else float("nan")
    return p, math.sqrt(max(p * (1 - p), 0.0) / max(m, 1)), trunc


@dataclass(frozen=True)
class AvoidanceGap:
    n: float
    rw: float
    rw_stderr: float
    bm: float
    bm_stderr: float
    truncations: int

    @property
    def gap(self) -> float:
        return abs(self.rw - self.bm)

    @property
    def gap_stderr(self) -> float:
        return math.hypot(self.rw_stderr, self.bm_stderr)


def rw_bm_avoidance_gap(curve, n: float, trials: int, rng: np.random.Generator,
                        spec: LatticeSpec | None = None, bm_trials: int | None = None) -> AvoidanceGap:
    """Escape probabilities from 0 of the scaled walk and of Brownian motion past ``curve``."""
    from .lattice import simple_random_walk

    spec = spec or simple_random_walk()
    c = np.asarray(curve, dtype=complex).ravel()
    if len(c) < 2 or np.max(np.abs(c - c[0])) == 0:
        raise DegenerateCurve("curve needs two distinct points")
    rw, rw_se, tr = rw_escape_probability(c, n, spec, trials, rng)
    bm, bm_se = bm_escape_probability(c, bm_trials or trials, rng)
    return AvoidanceGap(n, rw, rw_se, bm, bm_se, tr)


def radial_slit_escape(a: float, b: float = 1.0) -> float:
    """Brownian escape probability from 0 past the radial slit from ``a`` to ``b = 1`` on the real axis.

    Closed form from the radial slit map: ``1 - (2/pi) arccos(sqrt(4 k(a)))``
    with ``k(z) = z / (1 + z)^2``.
    """
    if b != 1.0:
        raise ValueError("only slits reaching the unit circle have a closed form")
    ka = a / (1 + a) ** 2
    return 1 - 2 / math.pi * math.acos(math.sqrt(4 * ka))
