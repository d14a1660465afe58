"""Rotationally symmetric dumbbells dt^2 + phi(t)^2 g_{S^{n-1}} and their 1-D reduction.

Construction of the dumbbell half profile: phi = sin t near the pole, then

    phi'' = -phi + B * eta(t) * phi^(-(n-2)/2 - 1)

with eta a smooth 0 -> 1 ramp on [pi/4, pi/2].  The repulsive term bends phi
back up before it reaches zero; B is tuned so the first minimum (the throat)
has height r.  The half profile is mirrored about the throat.  phi, phi' and
phi'' come from the ODE itself, so Scal is evaluated without differencing.

Functions on the profile live on cell centres t_i = (i + 1/2) h.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

from .eigensolver import SpectrumResult, cheeger_sweep, localization_check, solve_lowest
from .errors import GeometryRangeError, InvalidProfileError, SingularProfileError
from .operator_assembly import DiscreteOperator

RAMP_START = math.pi / 4
RAMP_END = math.pi / 2
MOLLIFIER_CELLS = 4
_T0 = 0.05  # ODE start; phi = sin t exactly before RAMP_START


def smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step, 0 for x <= 0 and 1 for x >= 1, with max slope 2 at x = 1/2."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    a = np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
    return a / (a + b)


def smooth_step_derivative(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    da = a / xi**2
    db = -b / (1.0 - xi) ** 2
    out[inner] = (da * b - a * db) / (a + b) ** 2
    return out


def sphere_area(n: int) -> float:
    """Volume of the unit S^(n-1)."""
    return 2.0 * math.pi ** (n / 2) / float(gamma_fn(n / 2))


@dataclass(frozen=True)
class NeckProfile:
    n: int
    T: float
    t: np.ndarray = field(repr=False)  # cell centres
    phi: np.ndarray = field(repr=False)
    dphi: np.ndarray = field(repr=False)
    ddphi: np.ndarray = field(repr=False)
    phi_faces: np.ndarray = field(repr=False)  # interior faces t = h, ..., (N-1) h
    r: float
    kind: str = "dumbbell"
    B: float = 0.0

    @property
    def samples(self) -> int:
        return self.t.size

    @property
    def h(self) -> float:
        return self.T / self.samples

    @property
    def centre(self) -> float:
        return 0.5 * self.T

    def distance_to_neck(self) -> np.ndarray:
        return np.abs(self.t - self.centre)

    def cell_volumes(self) -> np.ndarray:
        return sphere_area(self.n) * self.phi ** (self.n - 1) * self.h

    def face_areas(self) -> np.ndarray:
        return sphere_area(self.n) * self.phi_faces ** (self.n - 1)


def _half_ode(B: float, beta: float):
    def rhs(t, y):
        eta = smooth_step((t - RAMP_START) / (RAMP_END - RAMP_START))
        return [y[1], -y[0] + B * eta * max(y[0], 1e-9) ** (-beta - 1)]

    def minimum(t, y):
        return y[1]

    minimum.terminal = True
    minimum.direction = 1

    def collapse(t, y):
        return y[0] - 1e-6

    collapse.terminal = True
    sol = solve_ivp(
        rhs,
        [_T0, 10.0],
        [math.sin(_T0), math.cos(_T0)],
        events=[minimum, collapse],
        rtol=1e-12,
        atol=1e-14,
        dense_output=True,
    )
    if sol.t_events[0].size == 0:
        return 0.0, None
    return float(sol.y_events[0][0][0]), sol


def _tune(n: int, r: float):
    beta = (n - 2) / 2.0
    grid = np.linspace(math.log(1e-14), math.log(4.0), 49)
    prev = None
    for lb in grid:
        val = _half_ode(math.exp(lb), beta)[0] - r
        if prev is not None and prev[1] < 0 <= val:
            lb = brentq(
                lambda x: _half_ode(math.exp(x), beta)[0] - r, prev[0], lb, xtol=1e-14
            )
            B = math.exp(lb)
            throat, sol = _half_ode(B, beta)
            return B, sol
        prev = (lb, val)
    raise InvalidProfileError(f"no smooth neck of radius {r} exists for n={n}")


def _half_eval(sol, B: float, beta: float, s: np.ndarray) -> tuple[np.ndarray, ...]:
    """phi, phi', phi'' on the half profile at distances s from the pole."""
    phi = np.sin(s)
    dphi = np.cos(s)
    ddphi = -np.sin(s)
    late = s >= _T0
    if np.any(late):
        y = sol.sol(s[late])
        eta = smooth_step((s[late] - RAMP_START) / (RAMP_END - RAMP_START))
        phi[late] = y[0]
        dphi[late] = y[1]
        ddphi[late] = -y[0] + B * eta * y[0] ** (-beta - 1)
    return phi, dphi, ddphi


def _mollify_near(values: np.ndarray, centres: Sequence[int], width: int) -> np.ndarray:
    """Replace values within 2*width cells of each centre by a smooth local average."""
    k = np.arange(-width, width + 1)
    kern = np.exp(-1.0 / np.maximum(1.0 - (k / (width + 1.0)) ** 2, 1e-300))
    kern /= kern.sum()
    out = values.copy()
    for c in centres:
        lo, hi = max(c - 2 * width, width), min(c + 2 * width, values.size - width - 1)
        for i in range(lo, hi + 1):
            out[i] = np.dot(kern, values[i - width : i + width + 1])
    return out


def make_dumbbell(n: int, r: float, T: float | None = None, samples: int = 4096) -> NeckProfile:
    """Two unit-sphere caps joined by a smooth neck whose minimal radius is r.

    ``T=None`` uses the natural length of the construction.  A longer T inserts a
    cylinder of radius r at the throat; the two junctions are mollified over a
    fixed 4-cell window.
    """
    if n < 3:
        raise InvalidProfileError("surgery dumbbells need n >= 3")
    if not 0 < r < 0.5:
        raise InvalidProfileError("neck radius must lie in (0, 0.5)")
    if samples < 512:
        raise InvalidProfileError("need at least 512 samples")
    beta = (n - 2) / 2.0
    B, sol = _tune(n, r)
    half = float(sol.t_events[0][0])
    natural = 2.0 * half
    if T is None:
        T = natural
    if T < natural * (1 - 1e-12):
        raise InvalidProfileError(f"T={T} is shorter than the natural neck length {natural}")
    h = T / samples
    t = (np.arange(samples) + 0.5) * h
    faces = np.arange(1, samples) * h
    insert = T - natural

    def evaluate(x):
        s = np.minimum(x, T - x)  # distance from the nearer pole
        sign = np.where(x < 0.5 * T, 1.0, -1.0)
        in_cyl = s >= half
        phi, dphi, ddphi = _half_eval(sol, B, beta, np.minimum(s, half))
        phi = np.where(in_cyl, r, phi)
        dphi = np.where(in_cyl, 0.0, dphi * sign)
        ddphi = np.where(in_cyl & (insert > 0), 0.0, ddphi)
        return phi, dphi, ddphi

    phi, dphi, ddphi = evaluate(t)
    phi_f = evaluate(faces)[0]
    if insert > 0:
        j = int(half / h)
        junctions = [j, samples - 1 - j]
        phi = _mollify_near(phi, junctions, MOLLIFIER_CELLS)
        dphi = _mollify_near(dphi, junctions, MOLLIFIER_CELLS)
        ddphi = _mollify_near(ddphi, junctions, MOLLIFIER_CELLS)
        phi_f = _mollify_near(phi_f, [j, samples - 2 - j], MOLLIFIER_CELLS)
    return NeckProfile(n, float(T), t, phi, dphi, ddphi, phi_f, float(r), "dumbbell", B)


def cap_profile(n: int, samples: int = 4096) -> NeckProfile:
    """Round unit S^n as a warped product over [0, pi]."""
    T = math.pi
    h = T / samples
    t = (np.arange(samples) + 0.5) * h
    faces = np.arange(1, samples) * h
    return NeckProfile(n, T, t, np.sin(t), np.cos(t), -np.sin(t), np.sin(faces), 1.0, "cap")


def cylinder_profile(n: int, radius: float, length: float, samples: int = 1024) -> NeckProfile:
    """Constant warp: [0, length] x S^(n-1)(radius), free (Neumann) ends."""
    h = length / samples
    t = (np.arange(samples) + 0.5) * h
    one = np.ones(samples)
    return NeckProfile(
        n, float(length), t, radius * one, 0 * one, 0 * one, radius * np.ones(samples - 1),
        float(radius), "cylinder",
    )


def warped_product_scal(n: int, phi, dphi, ddphi, fiber_scal=None) -> np.ndarray:
    """Scal of dt^2 + phi^2 h for an (n-1)-dim fiber metric h with scalar curvature fiber_scal."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 1e-12):
        raise SingularProfileError("warp function vanishes at an interior sample")
    if fiber_scal is None:
        fiber_scal = (n - 1) * (n - 2)
    return (
        np.asarray(fiber_scal) / phi**2
        - 2 * (n - 1) * np.asarray(ddphi) / phi
        - (n - 1) * (n - 2) * np.asarray(dphi) ** 2 / phi**2
    )


def warped_scal(p: NeckProfile) -> np.ndarray:
    return warped_product_scal(p.n, p.phi, p.dphi, p.ddphi)


def reduce_to_sturm_liouville(p: NeckProfile, c: float) -> DiscreteOperator:
    """Forms of -phi^(1-n) (phi^(n-1) u')' + c Scal u with weight phi^(n-1).

    Pole conditions are natural: the face weight vanishes with phi.
    """
    if np.any(p.phi <= 0) or np.any(p.phi_faces <= 0):
        raise SingularProfileError("warp function must be positive at all samples")
    n, h = p.n, p.h
    w = p.face_areas() / h
    mass = p.cell_volumes()
    N = p.samples
    diag = np.zeros(N)
    diag[:-1] += w
    diag[1:] += w
    S = sp.diags([diag, -w, -w], [0, 1, -1], format="csr")
    P = sp.diags(c * warped_scal(p) * mass, format="csr") if c != 0 else sp.csr_matrix((N, N))
    return DiscreteOperator(S, P, mass, float(c), "sturm-liouville", None, h, {"n": n, "kind": p.kind})


def invariant_sphere_values(n: int, c: float, levels: int) -> list[float]:
    """Rotationally invariant eigenvalues of Delta + c Scal on the unit S^n (one per level)."""
    return [k * (k + n - 1) + c * n * (n - 1) for k in range(levels)]


def cutoff_chi(p: NeckProfile, r: float) -> tuple[np.ndarray, np.ndarray]:
    """chi_r and its t-derivative: 0 within distance r of the neck, 1 beyond 2r."""
    if r <= 0 or 2 * r >= p.centre:
        raise GeometryRangeError("the cut-off region does not fit in the profile")
    d = p.distance_to_neck()
    x = (d - r) / r
    chi = smooth_step(x)
    dchi = smooth_step_derivative(x) / r * np.sign(p.t - p.centre)
    return chi, dchi


@dataclass(frozen=True)
class AnnulusResult:
    ratio: float
    flux_ok: bool
    bound: float

    @property
    def holds(self) -> bool:
        """The estimate is only claimed when the flux hypothesis is met."""
        return (not self.flux_ok) or self.ratio <= self.bound


def annulus_mass_ratio(p: NeckProfile, u: np.ndarray, r: float) -> AnnulusResult:
    """||u||^2 on A(r, 2r) over ||u||^2 on A(r, (2r)^(1/11)), with the flux condition."""
    outer = (2 * r) ** (1 / 11)
    if r <= 0 or outer >= p.centre:
        raise GeometryRangeError("annulus exceeds the profile")
    u = np.asarray(u, dtype=float)
    d = p.distance_to_neck()
    vol = p.cell_volumes()
    mass = vol * u**2
    inner = mass[(d >= r) & (d <= 2 * r)].sum()
    total = mass[(d >= r) & (d <= outer)].sum()
    ratio = float(inner / total) if total > 0 else 0.0

    # flux through S_N(rho): both sides, normal pointing away from the neck
    faces = np.arange(1, p.samples) * p.h
    du = np.diff(u) / p.h
    ubar = 0.5 * (u[:-1] + u[1:])
    density = p.face_areas() * ubar * du * np.sign(faces - p.centre)
    rho = np.abs(faces - p.centre)
    flux_ok = True
    for k in np.nonzero((rho >= r) & (rho <= outer) & (faces > p.centre))[0]:
        mirror = np.argmin(np.abs(faces - (2 * p.centre - faces[k])))
        flux = density[k] + density[mirror]
        scale = p.face_areas()[k] * (ubar[k] ** 2 + ubar[mirror] ** 2) / max(rho[k], p.h)
        if flux < -1e-12 * max(scale, 1e-300):
            flux_ok = False
            break
    return AnnulusResult(ratio, flux_ok, 10.0 * r**2.5)


@dataclass(frozen=True)
class ProfileDiagnostics:
    S0: float
    S1: float
    C1: float
    C2: float
    h_sweep: float


def profile_diagnostics(p: NeckProfile, res: SpectrumResult) -> ProfileDiagnostics:
    scal = warped_scal(p)
    near = p.distance_to_neck() <= 2 * p.r
    C1 = float(np.sqrt(np.max(np.sum(res.eigenvectors**2, axis=1))))
    C2 = float(p.cell_volumes()[near].sum() / p.r**p.n)
    h_sw = cheeger_sweep(p.cell_volumes(), p.face_areas())
    return ProfileDiagnostics(float(scal.min()), float(scal[near].min()), C1, C2, h_sw)


@dataclass(frozen=True)
class SweepRow:
    r: float
    mu: np.ndarray
    gaps: np.ndarray
    diag: ProfileDiagnostics
    localization_ok: bool
    localization_checks: int = 0


@dataclass(frozen=True)
class NeckSweepReport:
    n: int
    c: float
    k: int
    baseline: np.ndarray
    rows: tuple[SweepRow, ...]
    note: str = (
        "only rotationally invariant modes are computed; the baseline lists the "
        "invariant eigenvalues of each sphere, doubled for the two components"
    )

    def monotone_threshold(self) -> float | None:
        """Largest swept r from which every gap is non-increasing to the end."""
        gaps = np.array([row.gaps for row in self.rows])
        radii = [row.r for row in self.rows]
        start = len(radii) - 1
        while start > 0 and np.all(gaps[start] <= gaps[start - 1]):
            start -= 1
        return radii[start] if len(radii) else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "j", "mu_j", "gap_j", "S0", "S1", "C1", "C2", "h_sweep"])
        for row in self.rows:
            d = row.diag
            for j in range(self.k + 1):
                w.writerow(
                    [_fmt(row.r), j, _fmt(row.mu[j]), _fmt(row.gaps[j]),
                     _fmt(d.S0), _fmt(d.S1), _fmt(d.C1), _fmt(d.C2), _fmt(d.h_sweep)]
                )
        return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _localization_levels(scal: np.ndarray, S0: float, S1_neck: float) -> list[float]:
    """Thresholds above S0: the neck minimum when it exceeds S0, plus quartiles of the Scal range.

    On a fat neck the neck minimum equals the global one and only the quartile
    levels remain.
    """
    levels = [float(S0 + q * (scal.max() - S0)) for q in (0.25, 0.5, 0.75)]
    if S1_neck > S0:
        levels.insert(0, float(S1_neck))
    return [s for s in levels if s > S0]


def neck_sweep(
    n: int, c: float, radii: Sequence[float], k: int, samples: int = 4096
) -> NeckSweepReport:
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly descending")
    if any(not 0 < r < 0.5 for r in radii):
        raise InvalidProfileError("radii must lie in (0, 0.5)")
    if not 0 <= k <= 6:
        raise ValueError("k must lie in 0..6")
    single = invariant_sphere_values(n, c, k + 1)
    baseline = np.sort(np.array(single + single))[: k + 1]
    rows = []
    for r in radii:
        p = make_dumbbell(n, r, samples=samples)
        op = reduce_to_sturm_liouville(p, c)
        res = solve_lowest(op, k + 1)
        diag = profile_diagnostics(p, res)
        scal = warped_scal(p)
        ok, checks = True, 0
        for S1 in _localization_levels(scal, diag.S0, diag.S1):
            for j in range(k + 1):
                chk = localization_check(
                    op, scal, res.eigenvectors[:, j], diag.S0, S1,
                    max(res.eigenvalues[j], 0.0) * (1 + 1e-10) + 1e-12, c,
                )
                ok = ok and chk.holds
                checks += 1
        rows.append(SweepRow(r, res.eigenvalues.copy(), np.abs(res.eigenvalues - baseline), diag, ok, checks))
    return NeckSweepReport(n, float(c), k, baseline, tuple(rows))
