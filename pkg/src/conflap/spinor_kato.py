"""Pointwise Clifford algebra: the Kato projection on R^n (x) Sigma and the constant C(n, l).

Gamma matrices come from the Jordan-Wigner construction.  Clifford
multiplication by e_j is i * gamma_j, so e_j e_k + e_k e_j = -2 delta_jk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from .errors import UnsupportedDimensionError

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats)


@dataclass(frozen=True)
class CliffordRep:
    n: int
    e: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def d(self) -> int:
        return self.e[0].shape[0]


def build_clifford(n: int) -> CliffordRep:
    if not 3 <= n <= 8:
        raise UnsupportedDimensionError("Clifford representations are built for 3 <= n <= 8")
    m = n // 2
    gammas = []
    for k in range(m):
        left = [_Z] * k
        right = [_I2] * (m - k - 1)
        gammas.append(_kron_all(left + [_X] + right))
        gammas.append(_kron_all(left + [_Y] + right))
    if n % 2 == 1:
        gammas.append(_kron_all([_Z] * m))
    e = tuple(1j * g for g in gammas[:n])
    return CliffordRep(n, e)


def _blocks(n: int, d: int, entries) -> np.ndarray:
    out = np.zeros((n * d, n * d), dtype=complex)
    for (j, k), blk in entries:
        out[j * d : (j + 1) * d, k * d : (k + 1) * d] = blk
    return out


def kato_projection(rep: CliffordRep, rotation: np.ndarray | None = None) -> np.ndarray:
    """Matrix of pi(X (x) psi) = -(1/n) sum_j e_j (x) e_j X psi on C^n (x) Sigma.

    The R^n factor is expressed in the standard basis; ``rotation`` (orthogonal,
    columns = new frame) builds pi from the rotated frame f_j = sum_k R_kj e_k
    instead, which must give the same matrix.
    """
    n, d = rep.n, rep.d
    R = np.eye(n) if rotation is None else np.asarray(rotation, dtype=float)
    frame = [sum(R[k, j] * rep.e[k] for k in range(n)) for j in range(n)]
    # block (a, b) = -(1/n) sum_j R[a, j] f_j e_b   (component a of the frame vector f_j)
    entries = []
    for a in range(n):
        for b in range(n):
            blk = sum(R[a, j] * frame[j] for j in range(n)) @ rep.e[b]
            entries.append(((a, b), -blk / n))
    return _blocks(n, d, entries)


def complementary_norm(rep: CliffordRep, X: np.ndarray, psi: np.ndarray, pi: np.ndarray | None = None) -> float:
    """|pi'(X (x) psi)|^2 where pi' = 1 - pi."""
    if pi is None:
        pi = kato_projection(rep)
    v = np.kron(np.asarray(X, dtype=complex), np.asarray(psi, dtype=complex))
    w = v - pi @ v
    return float(np.vdot(w, w).real)


def complementary_norm_check(rep: CliffordRep, X: np.ndarray, psi: np.ndarray, pi: np.ndarray | None = None) -> float:
    """Deviation of |pi'(X (x) psi)|^2 from (n-1)/n |X|^2 |psi|^2."""
    val = complementary_norm(rep, X, psi, pi)
    target = (rep.n - 1) / rep.n * float(np.dot(X, X)) * float(np.vdot(psi, psi).real)
    return abs(val - target)


def random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))[None, :]
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@dataclass(frozen=True)
class RationalConstant:
    value: Fraction

    @property
    def numerator(self) -> int:
        return self.value.numerator

    @property
    def denominator(self) -> int:
        return self.value.denominator

    def __float__(self) -> float:
        return float(self.value)


def C_constant(n: int, l: int) -> RationalConstant:
    """C(n, l) = 8 (l+1)^2 (n-1)^2 / (n (n-2)) - 1, exactly."""
    if n < 3 or l < 1:
        raise ValueError("need n >= 3 and l >= 1")
    return RationalConstant(Fraction(8 * (l + 1) ** 2 * (n - 1) ** 2, n * (n - 2)) - 1)


@dataclass(frozen=True)
class KatoLower:
    value: int
    applicable: bool


def ahat_kappa_lower(ahat: int, n: int) -> KatoLower:
    """ceil(|Ahat| / 2^(2m-1)) for n = 4m; zero and flagged otherwise."""
    if n % 4 != 0 or n < 4:
        return KatoLower(0, False)
    m = n // 4
    den = 2 ** (2 * m - 1)
    return KatoLower(-(-abs(int(ahat)) // den), True)
