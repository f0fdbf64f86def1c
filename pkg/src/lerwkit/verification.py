"""Randomized exact-identity suites built on the linear-algebra oracle.

Each suite draws its instances from a seeded generator, evaluates an identity
exactly, and reports the worst residual against a threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import exact as E
from .exact import ZeroConditioning
from .geometry import Annulus, Ball, ExplicitSet
from .lattice import LatticeSpec
from .loop_erasure import green_of_path, loop_measure_truncated, measure_mu
from .rng import stream
from .walks import conditioned_sampler


@dataclass(frozen=True)
class SuiteResult:
    name: str
    instances: int
    value: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "instances": self.instances, "value": self.value,
                "threshold": self.threshold, "passed": self.passed, "details": self.details}


def _subset(points: np.ndarray, frac: float, rng: np.random.Generator) -> np.ndarray:
    keep = rng.random(len(points)) < frac
    return points[keep]


def rwdecomp_suite(spec: LatticeSpec, instances: int = 50, seed: int = 0, tol: float = 1e-8,
                   radius: float = 6.0, domain_radius: float = 8.0) -> SuiteResult:
    """Last-exit factorization of ``P_z[xi_K1 < xi_K2]`` on random disjoint sets."""
    rng = stream(seed, "rwdecomp")
    pts = Ball(radius).points(spec)
    dom = Ball(domain_radius)
    worst = 0.0
    done = 0
    while done < instances:
        perm = rng.permutation(len(pts))
        n1 = int(rng.integers(1, 6))
        n2 = int(rng.integers(0, 6))
        k1 = pts[perm[:n1]]
        k2 = pts[perm[n1:n1 + n2]]
        z = pts[perm[n1 + n2]]
        chk = E.verify_rwdecomp(z, k1, k2, dom, spec)
        worst = max(worst, chk.residual)
        done += 1
    return SuiteResult("rwdecomp", done, worst, tol, worst < tol)


def greencondit_suite(spec: LatticeSpec, instances: int = 50, seed: int = 0, tol: float = 1e-8) -> SuiteResult:
    """Green's function of the conditioned chain against ``h(y)/h(x) G`` on random sets."""
    rng = stream(seed, "greencondit")
    inner = Ball(4).points(spec)
    ring = Annulus(5, 7).points(spec)
    worst = 0.0
    worst_diag = 0.0
    done = 0
    attempts = 0
    while done < instances:
        attempts += 1
        K = _subset(inner, 0.7, rng)
        if len(K) == 0:
            continue
        perm = rng.permutation(len(ring))
        n1 = int(rng.integers(1, 8))
        n2 = int(rng.integers(1, 8))
        try:
            chk = E.verify_greencondit(K, ring[perm[:n1]], ring[perm[n1:n1 + n2]], spec)
        except ZeroConditioning:
            continue
        worst = max(worst, chk.max_residual)
        worst_diag = max(worst_diag, chk.diag_residual)
        done += 1
    value = max(worst, worst_diag)
    return SuiteResult("greencondit", done, value, tol, value < tol,
                       {"max_residual": worst, "diag_residual": worst_diag, "attempts": attempts})


def lerw_mass_suite(spec: LatticeSpec, instances: int = 50, seed: int = 0, tol: float = 1e-8,
                    l: float = 2.0) -> SuiteResult:
    """Total mass of the exact LERW law over the full enumeration of ``Omega_l`` for random ``K``."""
    rng = stream(seed, "lerw_mass")
    core = Ball(l).points(spec)
    extra = Ball(3 * l + 1).points(spec)
    worst = 0.0
    for _ in range(instances):
        K = np.unique(np.vstack([core, _subset(extra, 0.6, rng)]), axis=0)
        mu = measure_mu(l, ExplicitSet(map(tuple, K.tolist())), spec)
        worst = max(worst, abs(sum(mu.values()) - 1.0))
    return SuiteResult("lerw_mass", instances, worst, tol, worst < tol)


def htransform_suite(spec: LatticeSpec, instances: int = 50, seed: int = 0, tol: float = 1e-8,
                     paths_per_instance: int = 4) -> SuiteResult:
    """Telescoping of the conditioned kernel along sampled conditioned paths."""
    rng = stream(seed, "htransform")
    ring = Annulus(4, 6).points(spec)
    dom = Ball(6)
    worst = 0.0
    done = 0
    while done < instances:
        perm = rng.permutation(len(ring))
        n1 = int(rng.integers(1, 6))
        n2 = int(rng.integers(0, 6))
        k1, k2 = ring[perm[:n1]], ring[perm[n1:n1 + n2]]
        sampler = conditioned_sampler(k1, k2, dom, spec)
        if sampler.h((0, 0)) <= 0:
            continue
        for _ in range(paths_per_instance):
            path = sampler.sample((0, 0), rng)
            if path.truncated:
                continue
            a, b = E.htransform_log_ratio(path.points, sampler.solution, spec)
            worst = max(worst, abs(a - b))
        done += 1
    return SuiteResult("htransform", done, worst, tol, worst < tol)


def loop_measure_suite(spec: LatticeSpec, lengths=(6, 10, 14), final_tol: float = 0.02,
                       K=None, omega=((0, 0),)) -> SuiteResult:
    """Gap between ``G_K(omega)`` and the exponential of the truncated loop measure."""
    K = K or ExplicitSet([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)])
    target = green_of_path(K, list(omega), spec)
    gaps = []
    for L in lengths:
        m = loop_measure_truncated(K, list(omega), L, spec)
        gaps.append(abs(target - math.exp(m.value)))
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    return SuiteResult("loop_measure", len(lengths), gaps[-1], final_tol, decreasing and gaps[-1] < final_tol,
                       {"lengths": list(lengths), "gaps": gaps, "decreasing": decreasing, "green": target})


def dirichlet_suite(spec: LatticeSpec, ns=(32, 64, 128), fd_step: float = 1e-5,
                    deriv_tol: float = 1e-6) -> SuiteResult:
    """Closed-form constants of the half-plane-like harmonic function and its discrete approximation."""
    h0 = float(E.dirichlet_h(0j))
    dx = (float(E.dirichlet_h(fd_step + 0j)) - float(E.dirichlet_h(-fd_step + 0j))) / (2 * fd_step)
    dy = (float(E.dirichlet_h(1j * fd_step)) - float(E.dirichlet_h(-1j * fd_step))) / (2 * fd_step)
    errs = [E.dirichlet_htilde(n, spec).max_error() for n in ns]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    dev = max(abs(h0 - 0.25), abs(dx - math.sqrt(2) / math.pi), abs(dy))
    ok = abs(h0 - 0.25) < 1e-12 and abs(dx - math.sqrt(2) / math.pi) < deriv_tol and abs(dy) < deriv_tol
    return SuiteResult("dirichlet", len(ns), dev, deriv_tol, ok and decreasing,
                       {"h0": h0, "dh_dx": dx, "dh_dy": dy, "ns": list(ns), "max_errors": errs,
                        "decreasing": decreasing})


def run_all(spec: LatticeSpec, instances: int = 50, seed: int = 0, tol: float = 1e-8) -> list[SuiteResult]:
    return [
        rwdecomp_suite(spec, instances, seed, tol),
        greencondit_suite(spec, instances, seed, tol),
        lerw_mass_suite(spec, instances, seed, tol),
        htransform_suite(spec, instances, seed, tol),
        loop_measure_suite(spec),
        dirichlet_suite(spec),
    ]
