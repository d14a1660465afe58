"""Closed-form spectra of Delta + c*Scal on flat tori, round spheres, products and unions.

A ModelSpectrum lists distinct eigenvalues with multiplicities.  ``certified_to``
is an exclusive bound: every eigenvalue strictly below it is listed, so queries
at or above it are refused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product as iproduct
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoefficientMismatchError,
    DimensionMismatchError,
    InvalidLatticeError,
    TruncationError,
)

GROUP_RTOL = 1e-12


@dataclass(frozen=True)
class ModelSpectrum:
    dim: int
    c: float
    levels: tuple[tuple[float, int], ...]
    certified_to: float = math.inf  # inf: the list is the complete spectrum
    scal_constant: float | None = None  # None means non-constant

    def __post_init__(self):
        object.__setattr__(self, "certified_to", float(self.certified_to))
        vals = [v for v, _ in self.levels]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("eigenvalue levels must be strictly ascending")
        if any(m < 1 for _, m in self.levels):
            raise ValueError("multiplicities must be positive")

    @property
    def values(self) -> list[float]:
        return [v for v, _ in self.levels]

    @property
    def total(self) -> int:
        return sum(m for _, m in self.levels)

    def expanded(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        return np.array([v for v, m in self.levels for _ in range(m)], dtype=float)


@dataclass(frozen=True)
class Lattice:
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if b.shape[0] != b.shape[1]:
            raise InvalidLatticeError("lattice basis must be square")
        if abs(np.linalg.det(b)) < 1e-14 * max(1.0, np.abs(b).max() ** b.shape[0]):
            raise InvalidLatticeError("lattice basis is singular")
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def cubic(cls, n: int, side: float = 1.0) -> "Lattice":
        return cls(side * np.eye(n))


def _group(values: Iterable[tuple[float, int]]) -> list[tuple[float, int]]:
    out: list[list] = []
    for v, m in sorted(values):
        if out and math.isclose(v, out[-1][0], rel_tol=GROUP_RTOL, abs_tol=GROUP_RTOL):
            out[-1][1] += m
        else:
            out.append([v, m])
    return [(float(v), int(m)) for v, m in out]


def _truncate(
    levels: Sequence[tuple[float, int]], count: int, bound: float
) -> tuple[list[tuple[float, int]], float]:
    """Smallest prefix of levels reaching ``count``, and its exclusive certified bound."""
    out, total = [], 0
    for v, m in levels:
        if total >= count:
            return out, v
        out.append((v, m))
        total += m
    if total < count:
        raise TruncationError(f"only {total} eigenvalues certified, {count} requested")
    return out, bound


def torus_spectrum(lat: Lattice, c: float, count: int) -> ModelSpectrum:
    """Laplace spectrum 4 pi^2 |k*|^2 over the dual lattice (Scal = 0)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    dual = np.linalg.inv(lat.basis).T
    smin = 1.0 / np.linalg.norm(lat.basis, 2)  # smallest singular value of dual
    R = 1
    while True:
        # every dual vector of length < R * smin has coefficients inside the box
        rng = range(-R, R + 1)
        vecs = np.array(list(iproduct(rng, repeat=lat.dim)), dtype=float) @ dual.T
        sq = np.sort(np.einsum("ij,ij->i", vecs, vecs))
        cover = (R * smin) ** 2
        inside = sq[sq < cover]
        if inside.size >= count:
            ev = 4 * np.pi**2 * inside
            # all dual vectors below the coverage radius are enumerated, so
            # every returned level is complete
            levels, bound = _truncate(_group((float(v), 1) for v in ev), count, 4 * np.pi**2 * cover)
            return ModelSpectrum(lat.dim, float(c), tuple(levels), bound, 0.0)
        R *= 2


def sphere_spectrum(n: int, radius: float, c: float, count: int) -> ModelSpectrum:
    if n < 2:
        raise DimensionMismatchError("sphere dimension must be >= 2")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if count < 1:
        raise ValueError("count must be >= 1")
    scal = n * (n - 1) / radius**2

    def level(k: int) -> float:
        return k * (k + n - 1) / radius**2 + c * scal

    levels, total, k = [], 0, 0
    while total < count:
        mult = math.comb(n + k, n) - (math.comb(n + k - 2, n) if k >= 2 else 0)
        levels.append((level(k), mult))
        total += mult
        k += 1
    return ModelSpectrum(n, float(c), tuple(levels), level(k), scal)


def _check_compatible(parts: Sequence[ModelSpectrum], same_dim: bool) -> None:
    c0 = parts[0].c
    if any(not math.isclose(p.c, c0, rel_tol=1e-15, abs_tol=1e-15) for p in parts):
        raise CoefficientMismatchError("spectra carry different coefficients c")
    if same_dim and any(p.dim != parts[0].dim for p in parts):
        raise DimensionMismatchError("spectra have different dimensions")


def product_spectrum(a: ModelSpectrum, b: ModelSpectrum, count: int) -> ModelSpectrum:
    """Spectrum of the Riemannian product: pairwise sums of eigenvalues.

    With L = Delta + c*Scal and Scal additive on products, eigenvalues add.
    """
    _check_compatible([a, b], same_dim=False)
    mu_a, mu_b = a.levels[0][0], b.levels[0][0]
    cert = min(a.certified_to + mu_b, b.certified_to + mu_a)
    sums = [(va + vb, ma * mb) for va, ma in a.levels for vb, mb in b.levels if va + vb < cert]
    levels, bound = _truncate(_group(sums), count, cert)
    scal = None
    if a.scal_constant is not None and b.scal_constant is not None:
        scal = a.scal_constant + b.scal_constant
    return ModelSpectrum(a.dim + b.dim, a.c, tuple(levels), bound, scal)


def disjoint_union_spectrum(parts: Sequence[ModelSpectrum], count: int | None = None) -> ModelSpectrum:
    if not parts:
        raise ValueError("need at least one part")
    _check_compatible(parts, same_dim=True)
    cert = min(p.certified_to for p in parts)
    merged = _group((v, m) for p in parts for v, m in p.levels if v < cert)
    if count is not None:
        merged, cert = _truncate(merged, count, cert)
    scals = {p.scal_constant for p in parts}
    scal = scals.pop() if len(scals) == 1 else None
    return ModelSpectrum(parts[0].dim, parts[0].c, tuple(merged), cert, scal)


def counting_function(s: ModelSpectrum, lam: float) -> int:
    """Number of eigenvalues <= lam, with multiplicity."""
    if lam >= s.certified_to:
        raise TruncationError(f"lambda={lam} exceeds certified range {s.certified_to}")
    return sum(m for v, m in s.levels if v <= lam)
