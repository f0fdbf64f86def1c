"""Two-dimensional lattices carrying an irreducible bounded symmetric walk.

A walk is specified by a generating set ``V`` of real vectors (first nonzero
component positive) and weights ``kappa(x)`` in (0, 1) with total mass at
most one.  The full step law is ``p(x) = p(-x) = kappa(x) / 2`` with the
remaining mass put on the zero step.

Lattice points are stored as integer coefficient vectors in a computed
lattice basis.  All geometry (radii, angles) goes through the normalized
embedding ``A^{-1} B``, where ``B`` holds the basis vectors as columns and
``A`` is the symmetric square root of the step covariance, so that the
normalized walk has identity covariance.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Iterable, Sequence

import numpy as np

_ZERO_TOL = 1e-12
_RATIONAL_TOL = 1e-9
_BOUNDARY_RTOL = 1e-10


class LatticeSpecError(ValueError):
    """Base class for rejected lattice specifications."""


class WeightSumExceedsOne(LatticeSpecError):
    pass


class NonGeneratingSet(LatticeSpecError):
    pass


class BadGeneratorOrientation(LatticeSpecError):
    pass


class WeightOutOfRange(LatticeSpecError):
    pass


class NotPositiveDefinite(LatticeSpecError):
    pass


def _as_weight(w: Any) -> Fraction | float:
    if isinstance(w, dict):
        return Fraction(int(w["num"]), int(w["den"]))
    if isinstance(w, Fraction):
        return w
    if isinstance(w, int):
        return Fraction(w)
    if isinstance(w, str):
        return Fraction(w)
    return float(w)


def _weight_to_json(w: Fraction | float) -> Any:
    if isinstance(w, Fraction):
        return {"num": w.numerator, "den": w.denominator}
    return w


def _first_nonzero_positive(v: np.ndarray) -> bool:
    for c in v:
        if abs(c) > _ZERO_TOL:
            return c > 0
    return False


def _integer_column_basis(cols: list[list[int]]) -> np.ndarray:
    """Basis (as 2x2 integer columns) of the integer lattice spanned by ``cols``.

    Column operations only (Euclid on each row), so the result spans the same
    group as the input.
    """
    cols = [list(c) for c in cols if c[0] != 0 or c[1] != 0]
    basis = []
    for row in (0, 1):
        while True:
            nz = [c for c in cols if c[row] != 0]
            if len(nz) <= 1:
                break
            pivot = min(nz, key=lambda c: abs(c[row]))
            for c in nz:
                if c is pivot:
                    continue
                q = c[row] // pivot[row]
                c[0] -= q * pivot[0]
                c[1] -= q * pivot[1]
            cols = [c for c in cols if c[0] != 0 or c[1] != 0]
        nz = [c for c in cols if c[row] != 0]
        if not nz:
            raise NonGeneratingSet("generators span a rank-1 group")
        basis.append(nz[0])
        cols = [c for c in cols if c is not nz[0]]
    return np.array(basis, dtype=np.int64).T


@dataclass(frozen=True)
class CovarianceNormalizer:
    """Symmetric positive-definite square root ``A`` of a covariance ``gamma``."""

    gamma: np.ndarray
    A: np.ndarray
    A_inv: np.ndarray

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.A_inv.T


def normalizing_transform(gamma: np.ndarray) -> CovarianceNormalizer:
    """Compute ``A = gamma^{1/2}`` by eigendecomposition."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2, 2) or not np.allclose(gamma, gamma.T, atol=1e-14):
        raise NotPositiveDefinite("covariance must be a symmetric 2x2 matrix")
    evals, evecs = np.linalg.eigh(gamma)
    if np.any(evals <= 0):
        raise NotPositiveDefinite(f"covariance eigenvalues {evals} not all positive")
    root = np.sqrt(evals)
    A = (evecs * root) @ evecs.T
    A_inv = (evecs / root) @ evecs.T
    A = 0.5 * (A + A.T)
    A_inv = 0.5 * (A_inv + A_inv.T)
    return CovarianceNormalizer(gamma=gamma, A=A, A_inv=A_inv)


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Validated walk specification.  Build with :func:`validate_spec`."""

    generators: tuple[tuple[float, float], ...]
    weights: tuple[Fraction | float, ...]
    basis: np.ndarray = field(repr=False)
    generator_coords: np.ndarray = field(repr=False)
    hold: Fraction | float = 0

    # full step law, integer coords; order: +g0, -g0, +g1, -g1, ..., [0]
    @cached_property
    def steps(self) -> np.ndarray:
        out = []
        for c in self.generator_coords:
            out.append(c)
            out.append(-c)
        if self.hold > 0:
            out.append(np.zeros(2, dtype=np.int64))
        return np.array(out, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def step_probs(self) -> np.ndarray:
        out = []
        for w in self.weights:
            out.extend([float(w) / 2, float(w) / 2])
        if self.hold > 0:
            out.append(float(self.hold))
        return np.array(out)

    @cached_property
    def step_cdf(self) -> np.ndarray:
        cdf = np.cumsum(self.step_probs)
        cdf[-1] = 1.0
        return cdf

    @cached_property
    def support(self) -> frozenset[tuple[int, int]]:
        """Nonzero steps with positive probability."""
        return frozenset(tuple(int(v) for v in s) for s in self.steps if s.any())

    @cached_property
    def covariance(self) -> np.ndarray:
        return covariance(self)

    @cached_property
    def normalizer(self) -> CovarianceNormalizer:
        return normalizing_transform(self.covariance)

    @cached_property
    def embedding(self) -> np.ndarray:
        """Matrix taking integer coords to the normalized real plane."""
        return self.normalizer.A_inv @ self.basis

    @cached_property
    def quadratic_form(self) -> np.ndarray:
        """``Q`` with ``|x|^2 = c^T Q c`` in the normalized embedding."""
        # B^T Gamma^{-1} B avoids the square root, keeping rational specs exact to rounding
        Q = self.basis.T @ np.linalg.solve(self.covariance, self.basis)
        return 0.5 * (Q + Q.T)

    @cached_property
    def max_step(self) -> np.ndarray:
        """Largest absolute integer coordinate of any step, per axis."""
        return np.abs(self.steps).max(axis=0)

    @cached_property
    def range(self) -> float:
        """Largest normalized step length."""
        return float(np.sqrt(max(self.norm2(s) for s in self.steps)))

    def norm2(self, pts: Any) -> Any:
        pts = np.asarray(pts, dtype=float)
        Q = self.quadratic_form
        x, y = pts[..., 0], pts[..., 1]
        return Q[0, 0] * x * x + 2 * Q[0, 1] * x * y + Q[1, 1] * y * y

    def inside(self, pts: Any, radius: float) -> Any:
        """Strict test ``|x| < radius``; exact ties (up to rounding) count as outside."""
        return self.norm2(pts) < radius * radius * (1 - _BOUNDARY_RTOL)

    def embed(self, pts: Any) -> np.ndarray:
        """Normalized real coordinates of integer points, shape ``(..., 2)``."""
        return np.asarray(pts, dtype=float) @ self.embedding.T

    def embed_complex(self, pts: Any) -> Any:
        e = self.embed(pts)
        return e[..., 0] + 1j * e[..., 1]

    def real_coords(self, pts: Any) -> np.ndarray:
        """Un-normalized real coordinates (generator units)."""
        return np.asarray(pts, dtype=float) @ self.basis.T

    def box_halfwidth(self, radius: float) -> np.ndarray:
        """Integer half-widths enclosing the normalized disk of ``radius``."""
        Qinv = np.linalg.inv(self.quadratic_form)
        return np.ceil(radius * np.sqrt(np.diag(Qinv)) + 1e-9).astype(np.int64)

    def step_prob(self, dx: Sequence[int]) -> float:
        dx = np.asarray(dx, dtype=np.int64)
        hits = np.all(self.steps == dx, axis=1)
        return float(self.step_probs[hits].sum())

    def to_json(self) -> dict:
        return {
            "generators": [list(g) for g in self.generators],
            "weights": [_weight_to_json(w) for w in self.weights],
        }

    @cached_property
    def fingerprint(self) -> str:
        """Order-independent hash of generators and weights."""
        items = sorted(
            (tuple(round(c, 12) for c in g), str(w))
            for g, w in zip(self.generators, self.weights)
        )
        return hashlib.sha256(json.dumps(items).encode()).hexdigest()[:16]

    def __repr__(self) -> str:
        ws = ", ".join(str(w) for w in self.weights)
        return f"LatticeSpec(generators={list(self.generators)}, weights=[{ws}])"


def validate_spec(generators: Iterable[Sequence[float]], weights: Iterable[Any]) -> LatticeSpec:
    """Validate a generator/weight list and return a :class:`LatticeSpec`.

    Irreducibility is certified by checking that the generators span a
    rank-2 discrete group: two are linearly independent and every generator
    has rational coordinates with respect to them.
    """
    gens = [tuple(float(c) for c in g) for g in generators]
    ws = [_as_weight(w) for w in weights]
    if not gens:
        raise NonGeneratingSet("empty generator list")
    if len(gens) != len(ws):
        raise LatticeSpecError("generators and weights differ in length")
    if len(set(gens)) != len(gens):
        raise LatticeSpecError("duplicate generators")
    for g in gens:
        if len(g) != 2:
            raise LatticeSpecError("generators must be 2D vectors")
        if not _first_nonzero_positive(np.array(g)):
            raise BadGeneratorOrientation(f"first nonzero component of {g} must be positive")
    for w in ws:
        if not 0 < w < 1:
            raise WeightOutOfRange(f"weight {w} not in (0, 1)")

    if all(isinstance(w, Fraction) for w in ws):
        total = sum(ws, Fraction(0))
        if total > 1:
            raise WeightSumExceedsOne(f"weights sum to {total}")
        hold: Fraction | float = 1 - total
    else:
        total_f = math.fsum(float(w) for w in ws)
        if total_f > 1 + _ZERO_TOL:
            raise WeightSumExceedsOne(f"weights sum to {total_f}")
        hold = 1.0 - total_f
        if abs(hold) < _ZERO_TOL:
            hold = 0.0

    G = np.array(gens, dtype=float)
    pivot = None
    for j in range(1, len(G)):
        if abs(np.linalg.det(np.array([G[0], G[j]]))) > 1e-10:
            pivot = j
            break
    if pivot is None:
        raise NonGeneratingSet("generators do not span the plane (rank < 2)")
    C = np.array([G[0], G[pivot]]).T
    coeffs = np.linalg.solve(C, G.T).T
    fracs = []
    for row in coeffs:
        fr = [Fraction(float(c)).limit_denominator(10**6) for c in row]
        if any(abs(float(f) - c) > _RATIONAL_TOL for f, c in zip(fr, row)):
            raise NonGeneratingSet("generators do not span a discrete lattice")
        fracs.append(fr)
    den = 1
    for fr in fracs:
        for f in fr:
            den = den * f.denominator // math.gcd(den, f.denominator)
    int_cols = [[int(f * den) for f in fr] for fr in fracs]
    ibasis = _integer_column_basis(int_cols)
    basis = C @ (ibasis.astype(float) / den)
    coords = np.linalg.solve(basis, G.T).T
    icoords = np.rint(coords).astype(np.int64)
    if np.abs(coords - icoords).max() > 1e-8:
        raise NonGeneratingSet("internal: generator not an integer combination of basis")

    spec = LatticeSpec(
        generators=tuple(gens),
        weights=tuple(ws),
        basis=basis,
        generator_coords=icoords,
        hold=hold,
    )
    normalizing_transform(spec.covariance)
    return spec


def covariance(spec: LatticeSpec) -> np.ndarray:
    """Step covariance ``sum_x p(x) x x^T`` over the full symmetric law."""
    gamma = np.zeros((2, 2))
    for g, w in zip(spec.generators, spec.weights):
        v = np.array(g, dtype=float)
        # p(x) + p(-x) = kappa(x)
        gamma += float(w) * np.outer(v, v)
    return gamma


def sample_step(spec: LatticeSpec, rng: np.random.Generator) -> np.ndarray:
    """One step of the walk (integer coords), including the zero step."""
    i = int(np.searchsorted(spec.step_cdf, rng.random(), side="right"))
    return spec.steps[min(i, len(spec.steps) - 1)].copy()


def spec_from_json(obj: dict | str) -> LatticeSpec:
    if isinstance(obj, str):
        obj = json.loads(obj)
    return validate_spec(obj["generators"], obj["weights"])


def spec_to_json(spec: LatticeSpec) -> str:
    return json.dumps(spec.to_json(), sort_keys=True)


def simple_random_walk() -> LatticeSpec:
    """Simple random walk on Z^2."""
    return validate_spec([(1, 0), (0, 1)], [Fraction(1, 2), Fraction(1, 2)])


def lazy_random_walk(hold: Fraction = Fraction(1, 2)) -> LatticeSpec:
    w = (1 - hold) / 2
    return validate_spec([(1, 0), (0, 1)], [w, w])


def triangular_walk() -> LatticeSpec:
    """Walk on Z^2 with the diagonal generator (1, 1); triangular-lattice geometry."""
    third = Fraction(1, 3)
    return validate_spec([(1, 0), (0, 1), (1, 1)], [third, third, third])
