"""Lowest eigenpairs of (S + P) u = mu M u, inertia counting, and two diagnostics.

Small problems go to a dense symmetric solver.  Larger ones use a block
iteration preconditioned by a sparse factorization of A - sigma M, with sigma
below the spectrum, a seeded start block and a final Rayleigh-Ritz pass so the
returned vectors are M-orthonormal.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    DisconnectedError,
    RayleighExceedsError,
    ScalBelowS0Error,
    SolverError,
)
from .operator_assembly import DiscreteOperator
from .metric_field import ScalarField

DENSE_LIMIT = 2000
CLUSTER_RTOL = 1e-8
SEED = 20240601


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    meta: dict = field(default_factory=dict)

    def clusters(self) -> list[tuple[float, int]]:
        """Group eigenvalues within 1e-8 (1 + |mu|) into (mean, multiplicity)."""
        out: list[list[float]] = []
        for mu in self.eigenvalues:
            if out and abs(mu - out[-1][-1]) <= CLUSTER_RTOL * (1 + abs(mu)):
                out[-1].append(float(mu))
            else:
                out.append([float(mu)])
        return [(float(np.mean(c)), len(c)) for c in out]

    def to_json(self) -> str:
        return json.dumps(
            {
                "eigenvalues": [float(x) for x in self.eigenvalues],
                "residuals": [float(x) for x in self.residuals],
                "meta": self.meta,
            },
            sort_keys=True,
        )


def _factorize(K: sp.spmatrix):
    """Sparse LU of a symmetric matrix without row pivoting (an LDL^T in effect)."""
    return spla.splu(
        sp.csc_matrix(K),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )


def _residuals(A: sp.spmatrix, M: np.ndarray, vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    R = A @ vecs - vecs * M[:, None] * vals[None, :]
    return np.sqrt(np.sum(R**2 / M[:, None], axis=0))


def _dense(op: DiscreteOperator, k: int) -> tuple[np.ndarray, np.ndarray, dict]:
    A = op.A.toarray()
    mh = 1.0 / np.sqrt(op.M)
    B = mh[:, None] * A * mh[None, :]
    B = 0.5 * (B + B.T)
    w, V = sla.eigh(B, subset_by_index=[0, k - 1])
    return w, mh[:, None] * V, {"mode": "dense", "iterations": 0}


def _rayleigh_ritz(A: sp.spmatrix, M: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    G = X.T @ (M[:, None] * X)
    H = X.T @ (A @ X)
    w, Y = sla.eigh(0.5 * (H + H.T), 0.5 * (G + G.T))
    return w, X @ Y


def _iterative(op: DiscreteOperator, k: int, tol: float) -> tuple[np.ndarray, np.ndarray, dict]:
    """Block iteration preconditioned by the exact shift-inverted operator.

    With K = A - sigma M factorized once, each step applies K^-1 to a block of
    residuals, so the search space is a block shift-invert Krylov space.  A
    block (rather than a single start vector) resolves clustered eigenvalues.
    The iteration runs on M^-1/2 A M^-1/2, whose Euclidean residual is the
    M^-1 residual of the original pencil.  If it stalls short of ``tol``, block
    inverse iteration with the same factorization finishes the job.
    """
    N = op.N
    A = op.A
    sq = np.sqrt(op.M)
    Mh = sp.diags(1.0 / sq)
    At = (Mh @ A @ Mh).tocsr()
    At = 0.5 * (At + At.T)
    sigma = -op.shift() - 10.0 * tol
    lu = _factorize(A - sigma * sp.diags(op.M))

    def precond(x):
        x = x.reshape(N, -1)
        return sq[:, None] * lu.solve(np.ascontiguousarray(sq[:, None] * x))

    P = spla.LinearOperator((N, N), matvec=precond, matmat=precond, dtype=float)
    nev = min(N // 5, k + max(4, k // 2))
    X = np.random.default_rng(SEED).standard_normal((N, nev))
    maxiter = int(10 * k * math.sqrt(N))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        _, X, hist = spla.lobpcg(
            At, X, M=P, largest=False, tol=0.1 * tol, maxiter=maxiter, retResidualNormsHistory=True
        )
    iterations = len(hist)
    w, V = _rayleigh_ritz(A, op.M, X / sq[:, None])
    polish = 0
    while polish < maxiter:
        res = _residuals(A, op.M, w[:k], V[:, :k])
        if np.all(res <= 0.5 * tol * (1 + np.abs(w[:k]))):
            break
        V = lu.solve(np.ascontiguousarray(op.M[:, None] * V))
        w, V = _rayleigh_ritz(A, op.M, V)
        polish += 1
    meta = {"mode": "iterative", "iterations": iterations, "polish": polish, "sigma": sigma, "block": nev}
    return w[:k], V[:, :k], meta


def solve_lowest(op: DiscreteOperator, k: int, tol: float = 1e-8) -> SpectrumResult:
    N = op.N
    if not 1 <= k <= N:
        raise ValueError(f"k must lie in [1, {N}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if N <= DENSE_LIMIT:
        w, V, meta = _dense(op, k)
    else:
        w, V, meta = _iterative(op, k, tol)
    order = np.argsort(w, kind="stable")
    w, V = w[order], V[:, order]
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[idx, np.arange(V.shape[1])])[None, :]
    res = _residuals(op.A, op.M, w, V)
    meta = dict(meta, N=N, k=k, tol=tol)
    if np.any(res > tol * (1 + np.abs(w))):
        raise SolverError("eigenpair residuals exceed tolerance", w, res)
    return SpectrumResult(w, V, res, meta)


@dataclass(frozen=True)
class CountResult:
    count: int
    ambiguous: bool

    def __int__(self) -> int:
        return self.count

    def __eq__(self, other):
        if isinstance(other, (int, np.integer)):
            return self.count == other
        return NotImplemented if not isinstance(other, CountResult) else (
            self.count == other.count and self.ambiguous == other.ambiguous
        )

    __hash__ = None  # type: ignore[assignment]


def _inertia_below(op: DiscreteOperator, lam: float) -> int:
    K = op.A - lam * sp.diags(op.M)
    if op.N <= DENSE_LIMIT:
        return int(np.sum(np.linalg.eigvalsh(K.toarray()) < 0))
    lu = _factorize(K)
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise SolverError("factorization pivoted off the diagonal; inertia unavailable")
    d = lu.U.diagonal()
    if np.any(d == 0):
        raise SolverError("zero pivot in inertia factorization")
    return int(np.sum(d < 0))


def counting(op: DiscreteOperator, lam: float, tol: float = 1e-8) -> CountResult:
    """Number of discrete eigenvalues <= lam (Sylvester inertia of A - lam M)."""
    if not math.isfinite(lam):
        raise ValueError("lambda must be finite")
    scale = tol * (1 + abs(lam))
    lo = _inertia_below(op, lam - scale)
    hi = _inertia_below(op, lam + scale)
    if lo != hi:
        warnings.warn(f"lambda={lam} lies within {scale:g} of an eigenvalue", RuntimeWarning)
        return CountResult(hi, True)
    return CountResult(hi, False)


@dataclass(frozen=True)
class LocalizationResult:
    measured: float
    bound: float
    slack: float

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound + self.slack


def localization_bound(S0: float, S1: float, lam2: float, c: float) -> float:
    """(Lambda^2 / c - S0) / (S1 - S0)."""
    if not S0 < S1:
        raise ValueError("need S0 < S1")
    if c <= 0:
        raise ValueError("need c > 0")
    return (lam2 / c - S0) / (S1 - S0)


def localization_check(
    op: DiscreteOperator,
    scal: ScalarField | np.ndarray,
    u: ScalarField | np.ndarray,
    S0: float,
    S1: float,
    lam2: float,
    c: float,
    slack_factor: float = 10.0,
) -> LocalizationResult:
    """Mass fraction of u on {Scal >= S1} against the localization bound."""
    s = scal.flat() if isinstance(scal, ScalarField) else np.asarray(scal, dtype=float).reshape(-1)
    v = u.flat() if isinstance(u, ScalarField) else np.asarray(u, dtype=float).reshape(-1)
    bound = localization_bound(S0, S1, lam2, c)
    if np.any(s < S0 - 1e-12 * max(1.0, abs(S0))):
        raise ScalBelowS0Error(f"min Scal {s.min()} is below S0 = {S0}")
    mass = op.M * v**2
    total = mass.sum()
    rq = op.quadratic(v) / total
    if rq > lam2 * (1 + 1e-12) + 1e-12:
        raise RayleighExceedsError(f"Rayleigh quotient {rq} exceeds Lambda^2 = {lam2}")
    measured = float(mass[s >= S1].sum() / total)
    return LocalizationResult(measured, float(bound), slack_factor * op.h**2)


def cheeger_sweep(volumes, areas, return_index: bool = False):
    """min_j areas[j] / min(V_left, V_right) over cuts between consecutive cells.

    ``volumes`` has one entry per cell, ``areas[j]`` is the area of the cut
    between cells j and j+1.
    """
    vol = np.asarray(volumes, dtype=float)
    area = np.asarray(areas, dtype=float)
    if area.size != vol.size - 1:
        raise ValueError("need one area per interior cut")
    if np.any(area <= 0):
        raise DisconnectedError("a cut of zero area separates the model")
    left = np.cumsum(vol)[:-1]
    right = vol.sum() - left
    ratio = area / np.minimum(left, right)
    j = int(np.argmin(ratio))
    if return_index:
        return float(ratio[j]), j
    return float(ratio[j])
