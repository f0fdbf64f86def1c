"""Lattice regions, boundaries and path-space membership.

Regions are immutable and hashable.  Radii and angles are measured in the
normalized embedding of the walk (identity covariance), and every region
knows how to test membership of integer points and, when bounded, how to
enumerate its points.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .lattice import LatticeSpec


class UnboundedRegion(ValueError):
    pass


Point = tuple[int, int]


def _as_points(pts) -> np.ndarray:
    a = np.asarray(pts, dtype=np.int64)
    return a.reshape(-1, 2)


class Region:
    """Base class; subclasses implement ``contains`` and ``bound``."""

    def contains(self, pts, spec: LatticeSpec) -> np.ndarray:
        raise NotImplementedError

    def bound(self, spec: LatticeSpec) -> tuple[np.ndarray, float] | None:
        """``(center_int, normalized_radius)`` of a disk containing the region."""
        raise NotImplementedError

    def __contains__(self, item):
        raise TypeError("use region.contains(points, spec)")

    def __and__(self, other: "Region") -> "Region":
        return Intersection((self, other))

    def __or__(self, other: "Region") -> "Region":
        return Union((self, other))

    def __sub__(self, other: "Region") -> "Region":
        return Intersection((self, Complement(other)))

    def __invert__(self) -> "Region":
        return Complement(self)

    def points(self, spec: LatticeSpec, within: "Region | None" = None) -> np.ndarray:
        """Sorted ``(N, 2)`` array of lattice points in the region."""
        return enumerate_region(self if within is None else Intersection((self, within)), spec)

    def point_set(self, spec: LatticeSpec, within: "Region | None" = None) -> frozenset[Point]:
        return frozenset(map(tuple, self.points(spec, within).tolist()))

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(Region):
    """``B_n(z) = {x : |x - z| < radius}`` (strict inequality)."""

    radius: float
    center: Point = (0, 0)

    def contains(self, pts, spec):
        pts = _as_points(pts)
        return spec.inside(pts - np.asarray(self.center), self.radius)

    def bound(self, spec):
        return np.asarray(self.center, dtype=np.int64), float(self.radius)

    def to_json(self):
        return {"kind": "ball", "radius": self.radius, "center": list(self.center)}


@dataclass(frozen=True)
class Annulus(Region):
    """``A_{m,n} = B_n \\ B_m``."""

    inner: float
    outer: float

    def contains(self, pts, spec):
        pts = _as_points(pts)
        return ~spec.inside(pts, self.inner) & spec.inside(pts, self.outer)

    def bound(self, spec):
        return np.zeros(2, dtype=np.int64), float(self.outer)

    def to_json(self):
        return {"kind": "annulus", "inner": self.inner, "outer": self.outer}


def _wrap(theta):
    """Wrap angles into (-pi, pi]."""
    out = np.mod(np.asarray(theta) + np.pi, 2 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


@dataclass(frozen=True)
class HalfWedge(Region):
    """``r_min <= |x| <= r_max`` and ``angle_lo <= arg(x) - reference_arg <= angle_hi``."""

    r_min: float
    r_max: float
    angle_lo: float
    angle_hi: float
    reference_arg: float = 0.0

    def contains(self, pts, spec):
        pts = _as_points(pts)
        r2 = spec.norm2(pts)
        e = spec.embed(pts)
        dtheta = _wrap(np.arctan2(e[:, 1], e[:, 0]) - self.reference_arg)
        ok = ~spec.inside(pts, self.r_min) & (r2 <= self.r_max**2 * (1 + 1e-10))
        ok &= (dtheta >= self.angle_lo) & (dtheta <= self.angle_hi)
        # the origin has no argument; include it only when r_min == 0
        ok &= (r2 > 0) | (self.r_min <= 0)
        return ok

    def bound(self, spec):
        return np.zeros(2, dtype=np.int64), float(self.r_max) + 1e-9

    def to_json(self):
        return {
            "kind": "half_wedge",
            "r_min": self.r_min,
            "r_max": self.r_max,
            "angle_lo": self.angle_lo,
            "angle_hi": self.angle_hi,
            "reference_arg": self.reference_arg,
        }


@dataclass(frozen=True)
class ExplicitSet(Region):
    pts: frozenset[Point]

    def __init__(self, points: Iterable[Sequence[int]]):
        object.__setattr__(self, "pts", frozenset((int(p[0]), int(p[1])) for p in points))

    def contains(self, pts, spec):
        pts = _as_points(pts)
        return np.array([(int(a), int(b)) in self.pts for a, b in pts], dtype=bool)

    def bound(self, spec):
        if not self.pts:
            return np.zeros(2, dtype=np.int64), 0.0
        arr = np.array(sorted(self.pts), dtype=np.int64)
        return np.zeros(2, dtype=np.int64), float(np.sqrt(spec.norm2(arr).max())) + 1e-9

    def to_json(self):
        return {"kind": "explicit", "points": [list(p) for p in sorted(self.pts)]}

    def __len__(self):
        return len(self.pts)


@dataclass(frozen=True)
class Complement(Region):
    region: Region

    def contains(self, pts, spec):
        return ~self.region.contains(pts, spec)

    def bound(self, spec):
        return None

    def to_json(self):
        return {"kind": "complement", "region": self.region.to_json()}


@dataclass(frozen=True)
class Intersection(Region):
    regions: tuple[Region, ...]

    def contains(self, pts, spec):
        pts = _as_points(pts)
        ok = np.ones(len(pts), dtype=bool)
        for r in self.regions:
            ok &= r.contains(pts, spec)
        return ok

    def bound(self, spec):
        bounds = [b for b in (r.bound(spec) for r in self.regions) if b is not None]
        if not bounds:
            return None
        return min(bounds, key=lambda b: b[1])

    def to_json(self):
        return {"kind": "intersection", "regions": [r.to_json() for r in self.regions]}


@dataclass(frozen=True)
class Union(Region):
    regions: tuple[Region, ...]

    def contains(self, pts, spec):
        pts = _as_points(pts)
        ok = np.zeros(len(pts), dtype=bool)
        for r in self.regions:
            ok |= r.contains(pts, spec)
        return ok

    def bound(self, spec):
        bounds = [r.bound(spec) for r in self.regions]
        if any(b is None for b in bounds):
            return None
        radius = 0.0
        for c, rad in bounds:
            radius = max(radius, float(np.sqrt(spec.norm2(c))) + rad)
        return np.zeros(2, dtype=np.int64), radius

    def to_json(self):
        return {"kind": "union", "regions": [r.to_json() for r in self.regions]}


def region_from_json(obj: dict | str) -> Region:
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj["kind"]
    if kind == "ball":
        return Ball(obj["radius"], tuple(obj.get("center", (0, 0))))
    if kind == "annulus":
        return Annulus(obj["inner"], obj["outer"])
    if kind == "half_wedge":
        return HalfWedge(obj["r_min"], obj["r_max"], obj["angle_lo"], obj["angle_hi"],
                         obj.get("reference_arg", 0.0))
    if kind == "explicit":
        return ExplicitSet(obj["points"])
    if kind == "complement":
        return Complement(region_from_json(obj["region"]))
    if kind == "intersection":
        return Intersection(tuple(region_from_json(r) for r in obj["regions"]))
    if kind == "union":
        return Union(tuple(region_from_json(r) for r in obj["regions"]))
    raise ValueError(f"unknown region kind {kind!r}")


def enumerate_region(region: Region, spec: LatticeSpec) -> np.ndarray:
    return _enumerate_cached(region, spec).copy()


@lru_cache(maxsize=256)
def _enumerate_cached(region: Region, spec: LatticeSpec) -> np.ndarray:
    if isinstance(region, ExplicitSet):
        return np.array(sorted(region.pts), dtype=np.int64).reshape(-1, 2)
    b = region.bound(spec)
    if b is None:
        raise UnboundedRegion(f"{region!r} has no finite enumeration")
    center, radius = b
    hw = spec.box_halfwidth(radius)
    xs = np.arange(center[0] - hw[0], center[0] + hw[0] + 1)
    ys = np.arange(center[1] - hw[1], center[1] + hw[1] + 1)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    return grid[region.contains(grid, spec)]


def _neighbors(pts: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    steps = np.array(sorted(spec.support), dtype=np.int64).reshape(-1, 2)
    return (pts[:, None, :] + steps[None, :, :]).reshape(-1, 2)


@lru_cache(maxsize=256)
def _outer_cached(region: Region, support: frozenset, spec: LatticeSpec) -> frozenset[Point]:
    pts = _enumerate_cached(region, spec)
    if len(pts) == 0:
        return frozenset()
    nb = np.unique(_neighbors(pts, spec), axis=0)
    nb = nb[~region.contains(nb, spec)]
    return frozenset(map(tuple, nb.tolist()))


@lru_cache(maxsize=256)
def _inner_cached(region: Region, support: frozenset, spec: LatticeSpec) -> frozenset[Point]:
    pts = _enumerate_cached(region, spec)
    if len(pts) == 0:
        return frozenset()
    nsteps = len(spec.support)
    nb = _neighbors(pts, spec)
    outside = ~region.contains(nb, spec)
    hit = outside.reshape(len(pts), nsteps).any(axis=1)
    return frozenset(map(tuple, pts[hit].tolist()))


def outer_boundary(K: Region, spec: LatticeSpec) -> frozenset[Point]:
    """``{x not in K : p(x, y) > 0 for some y in K}``."""
    return _outer_cached(K, spec.support, spec)


def inner_boundary(K: Region, spec: LatticeSpec) -> frozenset[Point]:
    """``{x in K : p(x, y) > 0 for some y not in K}``."""
    return _inner_cached(K, spec.support, spec)


@dataclass(frozen=True)
class BoundarySet:
    outer: frozenset[Point]
    inner: frozenset[Point]
    parent: Region


def boundaries(K: Region, spec: LatticeSpec) -> BoundarySet:
    return BoundarySet(outer_boundary(K, spec), inner_boundary(K, spec), K)


def is_path(seq, spec: LatticeSpec) -> bool:
    """True iff every increment has positive step probability."""
    pts = _as_points(seq)
    if len(pts) == 0:
        return False
    allowed = set(spec.support)
    if spec.hold > 0:
        allowed.add((0, 0))
    return all((int(a), int(b)) in allowed for a, b in np.diff(pts, axis=0))


def in_omega_l(path, l: float, spec: LatticeSpec) -> bool:
    """Path from 0 staying in ``B_l`` until its last point, which lies on ``dB_l``."""
    pts = _as_points(path)
    if len(pts) < 2 or tuple(pts[0]) != (0, 0) or not is_path(pts, spec):
        return False
    ball = Ball(l)
    inside = ball.contains(pts, spec)
    if not inside[:-1].all():
        return False
    return tuple(pts[-1].tolist()) in outer_boundary(ball, spec)


def in_omega_tilde(path, m: float, n: float, spec: LatticeSpec) -> bool:
    """Path starting on ``dB_m``, inside ``A_{m,n}`` until it ends on ``dB_n``."""
    pts = _as_points(path)
    if len(pts) < 2 or not is_path(pts, spec):
        return False
    if tuple(pts[0].tolist()) not in outer_boundary(Ball(m), spec):
        return False
    if not Annulus(m, n).contains(pts[:-1], spec).all():
        return False
    return tuple(pts[-1].tolist()) in outer_boundary(Ball(n), spec)


def as_tuple_path(path) -> tuple[Point, ...]:
    return tuple((int(a), int(b)) for a, b in _as_points(path))


def arg(pts, spec: LatticeSpec) -> np.ndarray:
    e = spec.embed(_as_points(pts))
    return np.arctan2(e[:, 1], e[:, 0])


def norm(pts, spec: LatticeSpec) -> np.ndarray:
    return np.sqrt(spec.norm2(_as_points(pts)))


def ball_floor(m: float) -> int:
    return int(math.floor(m))
