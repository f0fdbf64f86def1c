"""Radial Loewner evolution and the Brownian avoidance exponent of radial SLE.

The driver ``U_t = exp(i sqrt(kappa) B_t)`` is sampled on a uniform grid and
held constant on each step.  For a constant driver the radial Loewner flow is
an explicit slit map, so the hull of a discretized driver is a composition of
exact slit maps: tips are obtained by composing inverse maps and the image of
the unit circle is tracked in closed form.  The forward ODE is integrated
separately with RK4 and serves as an independent check.

Brownian avoidance of the hull from 0 equals the harmonic measure from 0 of
the part of the unit circle still exposed, which the Loewner map sends to a
set of arcs whose total length over ``2 pi`` is exactly that probability.
Walk-on-spheres against the tip polyline is the sampled alternative.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .exponents import EstimatorReport, _master, _Moments
from .geometry import Ball
from .lattice import LatticeSpec, simple_random_walk
from .loop_erasure import LerwWorkspace
from .rng import chunked_map

DEFAULT_DT = 1e-3
DEFAULT_STRIDE = 2
WOS_EPS = 1e-6


class StepTooLarge(RuntimeError):
    pass


class IntegratorFailure(RuntimeError):
    pass


class TraceBudgetExceeded(RuntimeError):
    pass


# ------------------------------------------------------------------ drivers


@dataclass(frozen=True, eq=False)
class DrivingFunction:
    """Grid driver ``U_k = exp(i angles[k])`` at times ``k dt``."""

    kappa: float
    dt: float
    angles: np.ndarray
    seed: int | None = None

    @property
    def steps(self) -> int:
        return len(self.angles) - 1

    @property
    def T(self) -> float:
        return self.steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.angles)) * self.dt

    @property
    def values(self) -> np.ndarray:
        return np.exp(1j * self.angles)

    def extended(self, extra_steps: int, rng: np.random.Generator) -> "DrivingFunction":
        inc = rng.normal(0.0, math.sqrt(self.kappa * self.dt), extra_steps)
        ang = np.concatenate([self.angles, self.angles[-1] + np.cumsum(inc)])
        return DrivingFunction(self.kappa, self.dt, ang, self.seed)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "arg_U"])
            for t, a in zip(self.times, self.angles):
                w.writerow([repr(float(t)), repr(float(a))])
        return path


def sample_driving(kappa: float, T: float, dt: float, rng: np.random.Generator,
                   theta0: float = 0.0) -> DrivingFunction:
    """Brownian argument with variance ``kappa dt`` per step, started at ``theta0``."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if not 0 < dt <= T:
        raise ValueError("need 0 < dt <= T")
    n = int(round(T / dt))
    inc = rng.normal(0.0, math.sqrt(kappa * dt), n) if kappa > 0 else np.zeros(n)
    ang = np.concatenate([[theta0], theta0 + np.cumsum(inc)])
    return DrivingFunction(float(kappa), float(dt), ang)


# ------------------------------------------------------------------- traces


@dataclass(frozen=True, eq=False)
class LoewnerTrace:
    times: np.ndarray
    points: np.ndarray
    dt: float
    kappa: float
    settings: dict = field(default_factory=dict)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "re", "im"])
            for t, z in zip(self.times, self.points):
                w.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])
        return path


def _us(U: DrivingFunction) -> np.ndarray:
    return np.ascontiguousarray(U.values)


def trace_points(U: DrivingFunction, times: Sequence[float] | None = None) -> LoewnerTrace:
    """``gamma(t)`` at grid times: the preimage of the driver under the composed slit maps."""
    if times is None:
        idx = np.arange(U.steps + 1)
    else:
        idx = np.rint(np.asarray(times, dtype=float) / U.dt).astype(np.int64)
        if (np.abs(idx * U.dt - np.asarray(times, dtype=float)) > 1e-9 * max(U.T, 1.0)).any():
            raise ValueError("times must lie on the driver grid")
        if (idx < 0).any() or (idx > U.steps).any():
            raise ValueError("times outside the driver range")
    us = _us(U)
    pts = np.array([K.tip_at(us, U.dt, int(k)) for k in idx], dtype=complex)
    if not np.isfinite(pts).all():
        raise IntegratorFailure("non-finite trace point")
    return LoewnerTrace(idx * U.dt, pts, U.dt, U.kappa, {"scheme": "slit-composition"})


@dataclass(frozen=True)
class FlowResult:
    values: np.ndarray
    swallow_time: float | None

    def at(self, k: int) -> complex:
        return complex(self.values[k])


def forward_flow(U: DrivingFunction, z: complex, swallow_tol: float = 1e-3,
                 min_step: float = 1e-14) -> FlowResult:
    """``g_t(z)`` on the driver grid by RK4, stopping when ``|g_t(z) - U_t| < swallow_tol``.

    Values after the swallow time are NaN.  ``g_t(0) = 0`` is returned exactly.
    """
    z = complex(z)
    if abs(z) >= 1:
        raise ValueError("z must lie in the open unit disk")
    if z == 0:
        return FlowResult(np.zeros(U.steps + 1, dtype=complex), None)
    vals, ts, status = K.forward_flow_kernel(z, np.ascontiguousarray(U.angles), U.dt, swallow_tol, min_step)
    if status == 1:
        raise StepTooLarge(f"step size exhausted near t = {ts:.6g}")
    return FlowResult(vals, None if ts < 0 else float(ts))


def capacity_derivative(U: DrivingFunction, probe: float = 1e-6) -> np.ndarray:
    """``g_t'(0)`` on the grid from a small real probe, to compare with ``exp(t)``."""
    return np.real(forward_flow(U, complex(probe)).values / probe)


def exposed_fraction(U: DrivingFunction, steps: int | None = None) -> np.ndarray:
    """Harmonic measure from 0 of the exposed unit circle after each step."""
    steps = U.steps if steps is None else int(steps)
    return K.free_arc_length(np.ascontiguousarray(U.angles), U.dt, steps) / (2 * math.pi)


# ------------------------------------------------------------- avoidance


def _first_entries(U: DrivingFunction, radii: np.ndarray, stride: int):
    first, tips, count = K.tip_scan(np.ascontiguousarray(U.angles), U.dt, radii, stride, U.steps)
    return first, tips[:count]


def _trace_until(kappa, radii, rng, dt, stride, T_max):
    """Driver long enough for the trace to enter every disk; extended geometrically up to ``T_max``."""
    T = min(T_max, 2.0 * -math.log(float(radii.min())) + 3.0)
    U = sample_driving(kappa, T, dt, rng)
    while True:
        first, tips = _first_entries(U, radii, stride)
        if (first >= 0).all():
            return U, first, tips
        if U.T >= T_max - 1e-12:
            raise TraceBudgetExceeded(f"trace did not reach radius {radii.min()} by T = {T_max}")
        extra = int(round(min(U.T, T_max - U.T) / dt))
        U = U.extended(max(extra, 1), rng)


def _polyline_to(U, tips, stride, k) -> np.ndarray:
    pts = tips[: k // stride + 1]
    return np.concatenate([pts, [K.tip_at(_us(U), U.dt, int(k))]])


def bm_sle_avoidance(kappa: float, r: float | Sequence[float], trials: int, rng, *, dt: float = DEFAULT_DT,
                     stride: int = DEFAULT_STRIDE, method: str = "harmonic", bm_per_trace: int = 16,
                     eps: float = WOS_EPS, T_max: float = 40.0,
                     workers: int = 1) -> EstimatorReport | list[EstimatorReport]:
    """``P[W[0, tau_D] misses gamma[0, tau_r]]`` for radial SLE from 1 and Brownian motion from 0.

    ``method="harmonic"`` uses the exact exposed-circle fraction of each
    sampled hull; ``method="bm"`` runs ``bm_per_trace`` walk-on-spheres
    Brownian motions against the tip polyline.  A sequence of radii is
    evaluated on the same traces and returns one report per radius.
    """
    scalar = np.isscalar(r)
    rs = np.array([r] if scalar else list(r), dtype=float)
    if ((rs <= 0) | (rs >= 1)).any():
        raise ValueError("radii must lie in (0, 1)")
    if method not in ("harmonic", "bm"):
        raise ValueError("method is 'harmonic' or 'bm'")
    order = np.argsort(-rs)
    radii = np.ascontiguousarray(rs[order])
    seed = _master(rng)
    t0 = time.perf_counter()

    def chunk(g, size, idx):
        moms = [_Moments() for _ in radii]
        for _ in range(size):
            U, first, tips = _trace_until(kappa, radii, g, dt, stride, T_max)
            if method == "harmonic":
                free = exposed_fraction(U, int(first.max()))
                for mo, k in zip(moms, first):
                    mo.add(float(free[k]))
            else:
                for mo, k in zip(moms, first):
                    pl = _polyline_to(U, tips, stride, int(k))
                    esc, lost = K.wos_escape_many(np.ascontiguousarray(pl.real), np.ascontiguousarray(pl.imag),
                                                  len(pl), eps, 1_000_000, bm_per_trace)
                    mo.truncations += lost
                    mo.add(esc / max(bm_per_trace - lost, 1))
        return moms

    parts = chunked_map(chunk, trials, seed, ("sle_nu", float(kappa), tuple(radii.tolist()), method, dt, stride,
                                              bm_per_trace), workers)
    moms = [_Moments() for _ in radii]
    for p in parts:
        for a, b in zip(moms, p):
            a.merge(b)
    reports = {}
    for rr, mo in zip(radii, moms):
        est, se = mo.mean_se()
        reports[float(rr)] = EstimatorReport(
            "sle_avoidance", {"kappa": kappa, "r": float(rr), "method": method, "dt": dt, "stride": stride},
            float(est), float(se), mo.count, mo.truncations, seed, f"sle{kappa:g}",
            time.perf_counter() - t0)
    out = [reports[float(x)] for x in rs]
    return out[0] if scalar else out


# ------------------------------------------------------------ curve metric


def densify(poly, spacing: float) -> np.ndarray:
    """Insert points so that consecutive vertices are at most ``spacing`` apart."""
    p = np.asarray(poly, dtype=complex).ravel()
    if len(p) < 2 or spacing <= 0:
        return p.copy()
    out = [p[:1]]
    for a, b in zip(p[:-1], p[1:]):
        m = max(int(math.ceil(abs(b - a) / spacing)), 1)
        out.append(a + (b - a) * np.arange(1, m + 1) / m)
    return np.concatenate(out)


def curve_distance(alpha, beta, spacing: float | None = None) -> float:
    """Upper estimate of the curve distance: discrete Frechet distance of densified polylines.

    With ``spacing`` ``None`` the vertices are used as given.
    """
    a = np.asarray(alpha, dtype=complex).ravel()
    b = np.asarray(beta, dtype=complex).ravel()
    if len(a) == 0 or len(b) == 0:
        raise ValueError("polylines must be nonempty")
    if spacing is not None:
        a = densify(a, spacing)
        b = densify(b, spacing)
    return float(K.discrete_frechet(np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag),
                                    np.ascontiguousarray(b.real), np.ascontiguousarray(b.imag)))


# ------------------------------------------------------ LERW versus SLE


@dataclass(frozen=True)
class ComparisonRow:
    r: float
    lerw: float
    lerw_stderr: float
    sle: float
    sle_stderr: float

    @property
    def difference(self) -> float:
        return self.lerw - self.sle

    @property
    def joint_stderr(self) -> float:
        return math.hypot(self.lerw_stderr, self.sle_stderr)

    @property
    def z(self) -> float:
        return abs(self.difference) / self.joint_stderr if self.joint_stderr > 0 else float("inf")


@dataclass(frozen=True)
class ComparisonSummary:
    n: float
    kappa: float
    samples: int
    rows: tuple[ComparisonRow, ...]
    seed: int

    def row(self, r: float) -> ComparisonRow:
        for x in self.rows:
            if abs(x.r - r) < 1e-12:
                return x
        raise KeyError(r)

    def reports(self) -> list[EstimatorReport]:
        out = []
        for x in self.rows:
            out.append(EstimatorReport("lerw_avoidance", {"n": self.n, "r": x.r}, x.lerw, x.lerw_stderr,
                                       self.samples, 0, self.seed, ""))
            out.append(EstimatorReport("sle_avoidance", {"n": self.n, "r": x.r, "kappa": self.kappa}, x.sle,
                                       x.sle_stderr, self.samples, 0, self.seed, f"sle{self.kappa:g}"))
        return out


def rescaled_reversed_lerw(points: np.ndarray, n: float, spec: LatticeSpec, r: float) -> np.ndarray:
    """Reverse a LERW path, map it to the normalized plane scaled by ``1/n`` and cut at ``|z| <= r``."""
    e = spec.embed_complex(points[::-1]) / n
    inside = np.nonzero(np.abs(e) <= r)[0]
    return e[: inside[0] + 1] if len(inside) else e


def lerw_sle_comparison(n: float, kappa: float = 2.0, samples: int = 1000, rng=0, *,
                        r_grid: Sequence[float] = (0.25, 0.9), spec: LatticeSpec | None = None,
                        bm_per_curve: int = 16, dt: float = DEFAULT_DT, stride: int = DEFAULT_STRIDE,
                        workers: int = 1) -> ComparisonSummary:
    """Brownian avoidance of the rescaled reversed LERW versus radial SLE at matching radii."""
    if n > 512 or samples > 10_000:
        raise ValueError("n <= 512 and samples <= 10^4")
    spec = spec or simple_random_walk()
    seed = _master(rng)
    rs = [float(r) for r in r_grid]
    region = Ball(n)

    def chunk(g, size, idx):
        ws = LerwWorkspace(region, spec)
        moms = [_Moments() for _ in rs]
        for _ in range(size):
            k, _steps, trunc = ws.run()
            pts = ws.path(k)
            ws.clear(k)
            for mo, r in zip(moms, rs):
                c = rescaled_reversed_lerw(pts, n, spec, r)
                esc, lost = K.wos_escape_many(np.ascontiguousarray(c.real), np.ascontiguousarray(c.imag), len(c),
                                              WOS_EPS, 1_000_000, bm_per_curve)
                mo.add(esc / max(bm_per_curve - lost, 1))
        return moms

    parts = chunked_map(chunk, samples, seed, ("lerw_vs_sle", spec.fingerprint, float(n), tuple(rs),
                                               bm_per_curve), workers)
    lm = [_Moments() for _ in rs]
    for p in parts:
        for a, b in zip(lm, p):
            a.merge(b)
    sle = bm_sle_avoidance(kappa, rs, samples, seed + 1, dt=dt, stride=stride, workers=workers)
    rows = []
    for r, mo, rep in zip(rs, lm, sle):
        est, se = mo.mean_se()
        rows.append(ComparisonRow(r, est, se, rep.estimate, rep.stderr))
    return ComparisonSummary(n, kappa, samples, tuple(rows), seed)
