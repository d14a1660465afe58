"""Riemannian metrics sampled on a periodic coordinate grid (a torus chart).

All derivatives are second-order central differences with periodic wrap.
Arrays are laid out as ``(*shape, n, n)`` for tensors and ``shape`` for
scalars; the first grid axis varies slowest when flattened.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    GridMismatchError,
    InvalidConformalFactorError,
    InvalidMetricError,
    UnsupportedDimensionError,
)

SPD_RELATIVE_TOL = 1e-10
MIN_POINTS_PER_AXIS = 8


@dataclass(frozen=True)
class PeriodicGrid:
    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "lengths", tuple(float(l) for l in self.lengths))
        if len(self.shape) != len(self.lengths):
            raise GridMismatchError("shape and lengths disagree in dimension")
        if any(s < MIN_POINTS_PER_AXIS for s in self.shape):
            raise InvalidMetricError(
                f"every grid axis needs at least {MIN_POINTS_PER_AXIS} points, got {self.shape}"
            )
        if any(l <= 0 for l in self.lengths):
            raise InvalidMetricError("box lengths must be positive")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / s for l, s in zip(self.lengths, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def coordinates(self) -> tuple[np.ndarray, ...]:
        axes = [np.arange(s) * h for s, h in zip(self.shape, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))


def central_diff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * h)


def second_diff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(a, -1, axis=axis) - 2.0 * a + np.roll(a, 1, axis=axis)) / (h * h)


@dataclass(frozen=True)
class ScalarField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn: Callable[..., np.ndarray]) -> "ScalarField":
        vals = np.broadcast_to(np.asarray(fn(*grid.coordinates()), dtype=float), grid.shape)
        return cls(grid, np.array(vals))

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __mul__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values * other.values)


@dataclass(frozen=True)
class MetricField:
    grid: PeriodicGrid
    g: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        n = self.grid.dim
        if not 2 <= n <= 4:
            raise UnsupportedDimensionError(f"metric fields support 2 <= n <= 4, got {n}")
        if g.shape != self.grid.shape + (n, n):
            raise GridMismatchError(f"metric array shape {g.shape} does not fit grid {self.grid.shape}")
        if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=0, atol=1e-14 * max(1.0, np.abs(g).max())):
            raise InvalidMetricError("nodal matrices are not symmetric")
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        eig = np.linalg.eigvalsh(g.reshape(-1, n, n))
        if np.any(eig[:, 0] <= SPD_RELATIVE_TOL * eig[:, -1]):
            raise InvalidMetricError("metric is not positive definite at some node")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn: Callable[..., np.ndarray]) -> "MetricField":
        """``fn(*coords)`` must return an array broadcastable to ``(*shape, n, n)``."""
        n = grid.dim
        vals = np.broadcast_to(np.asarray(fn(*grid.coordinates()), dtype=float), grid.shape + (n, n))
        return cls(grid, np.array(vals))

    @classmethod
    def flat(cls, grid: PeriodicGrid) -> "MetricField":
        n = grid.dim
        return cls(grid, np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy())

    @classmethod
    def conformally_flat(cls, grid: PeriodicGrid, factor: np.ndarray) -> "MetricField":
        n = grid.dim
        return cls(grid, np.asarray(factor)[..., None, None] * np.eye(n))

    @property
    def dim(self) -> int:
        return self.grid.dim

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.g))

    def derivatives(self) -> np.ndarray:
        """First derivatives ``dg[..., a, i, j] = d_a g_ij``."""
        h = self.grid.spacing
        return np.stack([central_diff(self.g, a, h[a]) for a in range(self.dim)], axis=-3)

    def second_derivatives(self) -> np.ndarray:
        """``ddg[..., a, b, i, j] = d_a d_b g_ij``; compact stencil on the diagonal."""
        n, h = self.dim, self.grid.spacing
        out = np.empty(self.grid.shape + (n, n, n, n))
        for a in range(n):
            out[..., a, a, :, :] = second_diff(self.g, a, h[a])
            da = central_diff(self.g, a, h[a])
            for b in range(a + 1, n):
                dab = central_diff(da, b, h[b])
                out[..., a, b, :, :] = dab
                out[..., b, a, :, :] = dab
        return out

    def to_json(self) -> str:
        n = self.dim
        nodes = self.g.reshape(-1, n * n).tolist()
        return json.dumps(
            {"dim": n, "shape": list(self.grid.shape), "lengths": list(self.grid.lengths), "g": nodes}
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricField":
        data = json.loads(text)
        n = int(data["dim"])
        grid = PeriodicGrid(tuple(data["shape"]), tuple(data["lengths"]))
        g = np.asarray(data["g"], dtype=float).reshape(grid.shape + (n, n))
        return cls(grid, g)


def _check_same_grid(a: PeriodicGrid, b: PeriodicGrid) -> None:
    if a != b:
        raise GridMismatchError(f"grid descriptors differ: {a} vs {b}")


def christoffel(ginv: np.ndarray, dg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Gamma, B)`` with ``Gamma[k,i,j] = 1/2 g^kl B[i,j,l]``."""
    B = (
        dg
        + np.swapaxes(dg, -3, -2)
        - np.moveaxis(dg, -3, -1)
    )
    gamma = 0.5 * np.einsum("...kl,...ijl->...kij", ginv, B)
    return gamma, B


def scalar_curvature(g: MetricField) -> ScalarField:
    ginv = g.inverse()
    dg = g.derivatives()
    ddg = g.second_derivatives()
    gamma, B = christoffel(ginv, dg)
    dginv = -np.einsum("...ka,...mab,...bl->...mkl", ginv, dg, ginv)

    # d_k Gamma^k_ij and d_j Gamma^k_ik contracted with g^ij
    t1 = 0.5 * np.einsum("...kkl,...ijl,...ij->...", dginv, B, ginv)
    t1 += 0.5 * np.einsum(
        "...ij,...kl,...kijl->...", ginv, ginv, ddg + np.swapaxes(ddg, -3, -2)
    )
    t1 -= 0.5 * np.einsum("...ij,...kl,...klij->...", ginv, ginv, ddg)
    t2 = 0.5 * np.einsum("...jkl,...ikl,...ij->...", dginv, B, ginv)
    t2 += 0.5 * np.einsum("...ij,...kl,...jikl->...", ginv, ginv, ddg)
    t2 += 0.5 * np.einsum("...ij,...kl,...jkil->...", ginv, ginv, ddg)
    t2 -= 0.5 * np.einsum("...ij,...kl,...jlik->...", ginv, ginv, ddg)
    quad = np.einsum("...ij,...kkl,...lij->...", ginv, gamma, gamma)
    quad -= np.einsum("...ij,...kjl,...lik->...", ginv, gamma, gamma)
    return ScalarField(g.grid, t1 - t2 + quad)


def leading_term(g: MetricField) -> ScalarField:
    """Part of Scal linear in the second derivatives of g.

    1/2 g^ac g^bd (d_b d_c g_ad + d_a d_d g_bc - d_b d_d g_ac - d_a d_c g_bd)
    """
    ginv = g.inverse()
    ddg = g.second_derivatives()
    # ddg[..., p, q, i, j] = d_p d_q g_ij
    val = np.einsum("...ac,...bd,...bcad->...", ginv, ginv, ddg)
    val += np.einsum("...ac,...bd,...adbc->...", ginv, ginv, ddg)
    val -= np.einsum("...ac,...bd,...bdac->...", ginv, ginv, ddg)
    val -= np.einsum("...ac,...bd,...acbd->...", ginv, ginv, ddg)
    return ScalarField(g.grid, 0.5 * val)


def first_order_remainder(g: MetricField) -> ScalarField:
    """Scal minus its leading second-derivative term; depends on g and dg only."""
    return ScalarField(g.grid, scalar_curvature(g).values - leading_term(g).values)


def conformal_exponent(n: int) -> float:
    return 4.0 / (n - 2)


def _check_conformal_factor(g: MetricField, f: ScalarField) -> None:
    _check_same_grid(g.grid, f.grid)
    if g.dim < 3:
        raise UnsupportedDimensionError("conformal deformation requires n >= 3")
    if np.any(f.values <= 0):
        raise InvalidConformalFactorError("conformal factor must be positive")


def conformal_deform(g: MetricField, f: ScalarField) -> MetricField:
    """Return f^(4/(n-2)) g."""
    _check_conformal_factor(g, f)
    scale = f.values ** conformal_exponent(g.dim)
    return MetricField(g.grid, scale[..., None, None] * g.g)


def scal_conformal_residual(g: MetricField, f: ScalarField, mode: str = "pointwise") -> float:
    """Max-norm mismatch between Scal of f^(4/(n-2)) g and 4(n-1)/(n-2) f^-(n+2)/(n-2) L_g f."""
    from .operator_assembly import assemble, conformal_coefficient

    _check_conformal_factor(g, f)
    n = g.dim
    lhs = scalar_curvature(conformal_deform(g, f)).flat()
    op = assemble(g, conformal_coefficient(n), mode)
    fv = f.flat()
    rhs = 4.0 * (n - 1) / (n - 2) * fv ** (-(n + 2) / (n - 2)) * op.apply(fv)
    return float(np.max(np.abs(lhs - rhs)))


def c1_distance(g: MetricField, other: MetricField) -> float:
    """sup |g - g'| + sup |d(g - g')| over nodes, components and directions."""
    _check_same_grid(g.grid, other.grid)
    diff = g.g - other.g
    h = g.grid.spacing
    deriv = max(float(np.max(np.abs(central_diff(diff, a, h[a])))) for a in range(g.dim))
    return float(np.max(np.abs(diff))) + deriv


def random_smooth_field(grid: PeriodicGrid, rng: np.random.Generator, max_mode: int = 2) -> ScalarField:
    """Random real trigonometric polynomial with wavenumbers up to ``max_mode`` per axis."""
    coords = grid.coordinates()
    vals = np.zeros(grid.shape)
    modes = np.stack(
        np.meshgrid(*[np.arange(-max_mode, max_mode + 1)] * grid.dim, indexing="ij"), -1
    ).reshape(-1, grid.dim)
    for k in modes:
        phase = sum(2 * np.pi * k[a] * coords[a] / grid.lengths[a] for a in range(grid.dim))
        a_cos, a_sin = rng.standard_normal(2) / (1.0 + np.dot(k, k))
        vals += a_cos * np.cos(phase) + a_sin * np.sin(phase)
    return ScalarField(grid, vals)


def bump_metric(grid: PeriodicGrid, amplitude: float = 0.1) -> MetricField:
    """Smooth non-conformally-flat test metric with off-diagonal terms."""
    n = grid.dim
    x = grid.coordinates()
    L = grid.lengths
    g = np.zeros(grid.shape + (n, n))
    for a in range(n):
        g[..., a, a] = 1.0 + amplitude * np.cos(2 * np.pi * x[(a + 1) % n] / L[(a + 1) % n])
    for a in range(n - 1):
        off = 0.5 * amplitude * np.sin(2 * np.pi * x[(a + 2) % n] / L[(a + 2) % n])
        g[..., a, a + 1] = off
        g[..., a + 1, a] = off
    return MetricField(grid, g)


def as_scalar(grid: PeriodicGrid, values: Sequence[float] | np.ndarray) -> ScalarField:
    return ScalarField(grid, np.asarray(values, dtype=float).reshape(grid.shape))
