"""Discrete quadratic forms for L_g = Delta_g + c*Scal_g on a periodic grid.

The stiffness form uses forward differences with midpoint-averaged weights on
the diagonal metric entries and central differences on the mixed entries.  The
pure central form would leave the grid checkerboard in its kernel; this one
keeps only constants there.

Two potential forms are offered.  ``pointwise`` multiplies by nodal Scal.
``weak`` integrates the second-derivative part of Scal by parts,

    sqrt(g) Scal = d_l (sqrt(g) V^l) + sqrt(g) Q,

so that only g and its first differences enter.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .errors import (
    CoefficientError,
    InvalidConformalFactorError,
    UnsupportedDimensionError,
    ZeroVectorError,
)
from .metric_field import (
    MetricField,
    PeriodicGrid,
    ScalarField,
    _check_same_grid,
    christoffel,
    conformal_deform,
    scalar_curvature,
)

Mode = Literal["pointwise", "weak"]


def conformal_coefficient(n: int) -> float:
    """c_n = (n - 2) / (4 (n - 1))."""
    if n < 3:
        raise UnsupportedDimensionError("the conformal coefficient needs n >= 3")
    return (n - 2) / (4.0 * (n - 1))


@dataclass(frozen=True)
class DiscreteOperator:
    S: sp.csr_matrix
    P: sp.csr_matrix
    M: np.ndarray
    c: float
    mode: str
    grid: PeriodicGrid | None = None
    h: float = 0.0  # largest grid spacing, for slack estimates
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.M <= 0):
            raise ValueError("mass form must be strictly positive")

    @property
    def N(self) -> int:
        return self.M.size

    @property
    def A(self) -> sp.csr_matrix:
        return (self.S + self.P).tocsr()

    def quadratic(self, u: np.ndarray) -> float:
        return float(u @ (self.S @ u) + u @ (self.P @ u))

    def mass(self, u: np.ndarray) -> float:
        return float(u @ (self.M * u))

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Strong form M^-1 (S + P) u."""
        return (self.S @ u + self.P @ u) / self.M

    def shift(self) -> float:
        """|min c*Scal| + 1, a value making the operator plus shift positive."""
        pot = self.P.diagonal() / self.M
        return float(abs(min(pot.min(), 0.0)) + 1.0)

    def to_coo_text(self, which: str = "A") -> str:
        mat = {"A": self.A, "S": self.S, "P": self.P, "M": sp.diags(self.M)}[which].tocoo()
        order = np.lexsort((mat.col, mat.row))
        buf = io.StringIO()
        for i in order:
            buf.write(f"{mat.row[i]} {mat.col[i]} {mat.data[i]:.17g}\n")
        return buf.getvalue()


def coo_from_text(text: str, shape: tuple[int, int]) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for line in text.splitlines():
        if line.strip():
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def _periodic_1d(n: int, h: float, kind: str) -> sp.csr_matrix:
    eye = sp.eye(n, format="csr")
    up = sp.diags([np.ones(n - 1), [1.0]], [1, -(n - 1)], shape=(n, n), format="csr")
    if kind == "forward":
        return (up - eye) / h
    return (up - up.T) / (2.0 * h)


def difference_operator(grid: PeriodicGrid, axis: int, kind: str) -> sp.csr_matrix:
    """Periodic forward or central difference along ``axis`` on the flattened grid."""
    mats = [
        _periodic_1d(s, h, kind) if a == axis else sp.eye(s, format="csr")
        for a, (s, h) in enumerate(zip(grid.shape, grid.spacing))
    ]
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def stiffness(grid: PeriodicGrid, weights: np.ndarray) -> sp.csr_matrix:
    """Form for sum_ab w^ab du_a du_b; ``weights`` has shape (*shape, n, n)."""
    n = grid.dim
    N = grid.n_nodes
    S = sp.csr_matrix((N, N))
    for a in range(n):
        w = weights[..., a, a]
        mid = 0.5 * (w + np.roll(w, -1, axis=a))
        Dp = difference_operator(grid, a, "forward")
        S = S + Dp.T @ sp.diags(mid.reshape(-1)) @ Dp
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            w = weights[..., a, b]
            if not np.any(w):
                continue
            Da = difference_operator(grid, a, "central")
            Db = difference_operator(grid, b, "central")
            S = S + Da.T @ sp.diags(w.reshape(-1)) @ Db
    S = S.tocsr()
    return ((S + S.T) * 0.5).tocsr()


def weak_scal_parts(g: MetricField) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(V, Q)`` with sqrt(g) Scal = d_l(sqrt(g) V^l) + sqrt(g) Q.

    V^l = g^ik G^l_ik - g^il G^k_ik and Q = g^ik (G^m_il G^l_km - G^l_ik G^m_lm).
    Only first derivatives of g are used.
    """
    ginv = g.inverse()
    gamma, _ = christoffel(ginv, g.derivatives())
    V = np.einsum("...ik,...lik->...l", ginv, gamma) - np.einsum("...il,...kik->...l", ginv, gamma)
    Q = np.einsum("...ik,...mil,...lkm->...", ginv, gamma, gamma)
    Q -= np.einsum("...ik,...lik,...mlm->...", ginv, gamma, gamma)
    return V, Q


def assemble(g: MetricField, c: float, mode: Mode = "pointwise") -> DiscreteOperator:
    grid = g.grid
    cv = grid.cell_volume
    sqrtg = g.sqrt_det()
    weights = g.inverse() * (sqrtg * cv)[..., None, None]
    S = stiffness(grid, weights)
    M = (sqrtg * cv).reshape(-1)
    N = grid.n_nodes
    if c == 0:
        P = sp.csr_matrix((N, N))
    elif mode == "pointwise":
        scal = scalar_curvature(g).flat()
        P = sp.diags(c * scal * M, format="csr")
    elif mode == "weak":
        V, Q = weak_scal_parts(g)
        P = sp.diags((Q * sqrtg * cv).reshape(-1))
        for l in range(g.dim):
            al = sp.diags((V[..., l] * sqrtg * cv).reshape(-1))
            cross = al @ difference_operator(grid, l, "central")
            P = P - cross - cross.T
        P = (c * P).tocsr()
    else:
        raise ValueError(f"unknown assembly mode {mode!r}")
    return DiscreteOperator(S, P, M, float(c), mode, grid, max(grid.spacing))


def rayleigh(op: DiscreteOperator, u: ScalarField | np.ndarray) -> float:
    v = u.flat() if isinstance(u, ScalarField) else np.asarray(u, dtype=float).reshape(-1)
    den = op.mass(v)
    if den == 0 or not np.any(v):
        raise ZeroVectorError("Rayleigh quotient of the zero vector")
    return op.quadratic(v) / den


def _conformal_pre(g: MetricField, f: ScalarField) -> None:
    _check_same_grid(g.grid, f.grid)
    if g.dim < 3:
        raise UnsupportedDimensionError("conformal change requires n >= 3")
    if np.any(f.values <= 0):
        raise InvalidConformalFactorError("conformal factor must be positive")


def conformal_covariance_residual(
    g: MetricField,
    f: ScalarField,
    u: ScalarField,
    c: float | None = None,
    mode: Mode = "pointwise",
) -> float:
    """Relative mismatch of L_gbar u and f^-(n+2)/(n-2) L_g(f u) in the gbar mass norm."""
    _conformal_pre(g, f)
    n = g.dim
    cn = conformal_coefficient(n)
    if c is None:
        c = cn
    if not np.isclose(c, cn, rtol=1e-14, atol=0):
        raise CoefficientError(f"conformal covariance holds only at c = c_n = {cn}")
    gbar = conformal_deform(g, f)
    op = assemble(g, cn, mode)
    opbar = assemble(gbar, cn, mode)
    fv, uv = f.flat(), u.flat()
    lhs = opbar.apply(uv)
    rhs = fv ** (-(n + 2) / (n - 2)) * op.apply(fv * uv)
    num = np.sqrt(np.sum(opbar.M * (lhs - rhs) ** 2))
    den = np.sqrt(np.sum(opbar.M * lhs**2))
    if den == 0:
        return float(num)
    return float(num / den)


def subcritical_identity_residual(
    g: MetricField, l: ScalarField, t: float, c: float, u: ScalarField
) -> tuple[float, float]:
    """Compare both sides of the subcritical energy identity for f = exp(t*l).

    Left:  int u (Delta_gbar + c Scal_gbar) u dV_gbar.
    Right: int |f du + (c/c_n) u df|^2 + [(c/c_n)(1 - c/c_n)|df|^2 + c Scal_g f^2] u^2 dV_g.

    Returns the relative mismatch and the nodal minimum of the bracket.
    """
    _check_same_grid(g.grid, l.grid)
    _check_same_grid(g.grid, u.grid)
    n = g.dim
    cn = conformal_coefficient(n)
    if not 0 < c < cn:
        raise CoefficientError(f"c must lie in (0, c_n) = (0, {cn})")
    grid = g.grid
    f = ScalarField(grid, np.exp(t * l.values))
    uv, fv = u.flat(), f.flat()

    lhs = assemble(conformal_deform(g, f), c, "pointwise").quadratic(uv)

    cv = grid.cell_volume
    sqrtg = g.sqrt_det()
    ginv = g.inverse()
    wts = ginv * (sqrtg * cv)[..., None, None]
    grad_term = uv @ (stiffness(grid, wts * (f.values**2)[..., None, None]) @ uv)
    du = np.stack([difference_operator(grid, a, "central") @ uv for a in range(n)], -1)
    df = np.stack([difference_operator(grid, a, "central") @ fv for a in range(n)], -1)
    ginv_flat = ginv.reshape(-1, n, n)
    du_df = np.einsum("pab,pa,pb->p", ginv_flat, du, df)
    df_df = np.einsum("pab,pa,pb->p", ginv_flat, df, df)
    scal = scalar_curvature(g).flat()
    vol = (sqrtg * cv).reshape(-1)
    ratio = c / cn
    bracket = ratio * (1 - ratio) * df_df + c * scal * fv**2
    square_rest = 2 * ratio * fv * uv * du_df + ratio**2 * df_df * uv**2
    rhs = grad_term + np.sum(vol * (square_rest + bracket * uv**2))
    resid = abs(lhs - rhs) / max(abs(lhs), np.finfo(float).tiny)
    return float(resid), float(bracket.min())
