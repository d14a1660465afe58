"""Named experiments shared by the command line and the acceptance tests.

Each experiment takes a validated parameter dict and returns an
ExperimentResult holding a CSV table, named checks and an optional JSON
payload.  Nothing here depends on wall-clock time, so tables are reproducible.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import eigensolver as es
from . import kappa_bounds as kb
from . import metric_field as mf
from . import model_spectra as ms
from . import neck_surgery as ns
from . import operator_assembly as oa
from . import spinor_kato as sk
from .errors import InconsistentFlagsError, NormalizationError, RangeError


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    relation: str  # "<=", "<", ">=", ">" or "=="

    @property
    def passed(self) -> bool:
        v, l = self.value, self.limit
        if isinstance(v, float) and math.isnan(v):
            return False
        return {
            "<=": v <= l,
            "<": v < l,
            ">=": v >= l,
            ">": v > l,
            "==": v == l,
        }[self.relation]

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": _plain(self.value),
            "limit": _plain(self.limit),
            "relation": self.relation,
            "passed": bool(self.passed),
        }


@dataclass
class ExperimentResult:
    name: str
    statement: str
    header: list[str]
    rows: list[list[Any]]
    checks: list[Check]
    payload: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "experiment": self.name,
            "statement": self.statement,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
        }


def fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _plain(v: Any) -> Any:
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def fitted_order(h: list[float], err: list[float]) -> float:
    """Least-squares slope of log(err) against log(h)."""
    x, y = np.log(np.asarray(h, dtype=float)), np.log(np.asarray(err, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------- parameters

PARAMS: dict[str, dict[str, tuple[type, Any]]] = {
    "spectrum": {
        "model": (str, "torus"),
        "grid": (int, 32),
        "k": (int, None),
        "c": (float, 0.125),
        "samples": (int, 4096),
        "tol": (float, None),
    },
    "conformal-check": {
        "grids": (list, [16, 32, 64]),
        "amplitude": (float, 0.2),
        "max_residual": (float, 5e-2),
        "min_order": (float, 1.8),
    },
    "neck-sweep": {
        "n": (int, 3),
        "c": (float, 0.125),
        "radii": (list, [0.3, 0.2, 0.1, 0.05, 0.025]),
        "k": (int, 1),
        "samples": (int, 4096),
        "final_gap": (float, 0.05),
    },
    "c1-continuity": {
        "grid": (int, 16),
        "deltas": (list, [1e-1, 1e-2, 1e-3]),
        "k": (int, 7),
        "c": (float, 0.125),
        "tol": (float, 1e-2),
    },
    "kato": {
        "dims": (list, [3, 4, 5, 6, 7, 8]),
        "samples": (int, 1000),
        "seed": (int, 0),
        "tol": (float, 1e-12),
    },
    "kappa": {
        "n": (int, 8),
        "ahat": (int, None),
        "alpha": (int, None),
        "spin": (bool, True),
        "simply_connected": (bool, True),
    },
    "subcritical": {
        "grids": (list, [16, 32, 64]),
        "cross": (int, 16),
        "t": (float, 1.0),
        "c": (float, 1.0 / 16),
        "seed": (int, 0),
        "mu_grid": (int, 256),
        "mu_tol": (float, 2e-2),
        "min_order": (float, 1.8),
    },
    "cheeger": {
        "n": (int, 3),
        "radii": (list, [0.3, 0.2, 0.1, 0.05, 0.025]),
        "samples": (int, 4096),
    },
}


class ParameterError(ValueError):
    pass


def validate(name: str, params: dict) -> dict:
    if name not in PARAMS:
        raise ParameterError(f"unknown experiment {name!r}")
    spec = PARAMS[name]
    unknown = set(params) - set(spec)
    if unknown:
        raise ParameterError(f"unknown fields for {name}: {sorted(unknown)}")
    out = {}
    for key, (typ, default) in spec.items():
        val = params.get(key, default)
        if val is not None:
            try:
                if typ is list:
                    if not isinstance(val, (list, tuple)):
                        raise TypeError
                    val = list(val)
                elif typ is bool:
                    if not isinstance(val, bool):
                        raise TypeError
                elif typ is int:
                    if isinstance(val, bool) or int(val) != val:
                        raise TypeError
                    val = int(val)
                else:
                    val = typ(val)
            except (TypeError, ValueError):
                raise ParameterError(f"field {key!r} of {name} must be {typ.__name__}") from None
        out[key] = val
    _preconditions(name, out)
    return out


def _preconditions(name: str, p: dict) -> None:
    def need(cond: bool, msg: str):
        if not cond:
            raise ParameterError(f"{name}: {msg}")

    if name == "spectrum":
        need(p["model"] in ("torus", "sphere"), "model must be torus or sphere")
        need(p["grid"] >= 8, "grid must be >= 8")
        need(p["samples"] >= 512, "samples must be >= 512")
        need(p["k"] is None or p["k"] >= 1, "k must be >= 1")
    elif name in ("conformal-check", "subcritical"):
        need(len(p["grids"]) >= 2 and all(int(g) >= 8 for g in p["grids"]), "need >= 2 grids of size >= 8")
        need(list(p["grids"]) == sorted(p["grids"]), "grids must ascend")
        if name == "subcritical":
            need(0 < p["c"] < oa.conformal_coefficient(3), "c must lie in (0, c_3)")
            need(p["cross"] >= 8 and p["mu_grid"] >= 8, "grid sizes must be >= 8")
    elif name in ("neck-sweep", "cheeger"):
        r = [float(x) for x in p["radii"]]
        need(len(r) >= 1 and all(0 < x < 0.5 for x in r), "radii must lie in (0, 0.5)")
        need(all(b < a for a, b in zip(r, r[1:])), "radii must descend")
        need(p["n"] >= 3, "n must be >= 3")
        need(p["samples"] >= 512, "samples must be >= 512")
        if name == "neck-sweep":
            need(0 <= p["k"] <= 6, "k must lie in 0..6")
    elif name == "c1-continuity":
        d = [float(x) for x in p["deltas"]]
        need(len(d) >= 2 and all(x > 0 for x in d), "need >= 2 positive deltas")
        need(all(b < a for a, b in zip(d, d[1:])), "deltas must descend")
        need(p["grid"] >= 8 and p["k"] >= 1, "grid >= 8 and k >= 1")
    elif name == "kato":
        need(all(3 <= int(n) <= 8 for n in p["dims"]), "dims must lie in 3..8")
        need(p["samples"] >= 1, "samples must be >= 1")
    elif name == "kappa":
        need(p["n"] >= 3, "n must be >= 3")
        # the flag combination is checked by the report itself, which is cheap
        try:
            kb.kappa_bounds(
                p["n"], ahat=p["ahat"], alpha=p["alpha"], spin=p["spin"], simply_connected=p["simply_connected"]
            )
        except (InconsistentFlagsError, NormalizationError, RangeError) as exc:
            raise ParameterError(f"{name}: {exc}") from None


# ---------------------------------------------------------------- experiments


def run_spectrum(p: dict) -> ExperimentResult:
    c = p["c"]
    if p["model"] == "torus":
        k = p["k"] or 7
        tol = p["tol"] if p["tol"] is not None else 0.015
        grid = mf.PeriodicGrid((p["grid"],) * 3, (1.0, 1.0, 1.0))
        res = es.solve_lowest(oa.assemble(mf.MetricField.flat(grid), c), k)
        model = ms.torus_spectrum(ms.Lattice.cubic(3), c, k).expanded()[:k]
        statement = "discrete flat-torus spectrum against 4 pi^2 |k*|^2 over the dual lattice"
    else:
        k = p["k"] or 2
        tol = p["tol"] if p["tol"] is not None else 0.005
        op = ns.reduce_to_sturm_liouville(ns.cap_profile(3, p["samples"]), c)
        res = es.solve_lowest(op, k)
        model = np.array(ns.invariant_sphere_values(3, c, k))
        statement = "rotationally invariant S^3 spectrum k(k+2) + 6c from the 1-D reduction"
    rows, gaps = [], []
    for j, (d, m) in enumerate(zip(res.eigenvalues, model)):
        gap = abs(d - m) / max(abs(m), 1.0)
        gaps.append(gap)
        rows.append([j, float(d), float(m), gap])
    checks = [Check("max relative gap", max(gaps), tol, "<=")]
    return ExperimentResult("spectrum", statement, ["j", "discrete", "model", "rel_gap"], rows, checks)


def run_conformal_check(p: dict) -> ExperimentResult:
    rows, hs, e1, e2 = [], [], [], []
    for N in p["grids"]:
        grid = mf.PeriodicGrid((int(N),) * 3, (1.0, 1.0, 1.0))
        x = grid.coordinates()
        g = mf.MetricField.flat(grid)
        f = mf.ScalarField(grid, np.exp(p["amplitude"] * np.cos(2 * np.pi * x[0])))
        u = mf.ScalarField(grid, np.cos(2 * np.pi * x[1]))
        r1 = oa.conformal_covariance_residual(g, f, u)
        r2 = mf.scal_conformal_residual(g, f)
        h = grid.spacing[0]
        hs.append(h)
        e1.append(r1)
        e2.append(r2)
        rows.append([int(N), h, r1, r2])
    small = mf.PeriodicGrid((int(p["grids"][0]),) * 3, (1.0, 1.0, 1.0))
    gflat = mf.MetricField.flat(small)
    const = mf.ScalarField.constant(small, 2.0 ** 0.25)
    u = mf.ScalarField(small, np.cos(2 * np.pi * small.coordinates()[1]))
    ref = 32 if 32 in p["grids"] else p["grids"][len(p["grids"]) // 2]
    checks = [
        Check(f"covariance residual at {ref}", e1[list(p["grids"]).index(ref)], p["max_residual"], "<="),
        Check("covariance order", fitted_order(hs, e1), p["min_order"], ">="),
        Check("scalar curvature law order", fitted_order(hs, e2), p["min_order"], ">="),
        Check("covariance residual, constant f", oa.conformal_covariance_residual(gflat, const, u), 1e-10, "<="),
        Check("scalar curvature law, constant f", mf.scal_conformal_residual(gflat, const), 1e-10, "<="),
    ]
    statement = (
        "L_gbar u = f^-(n+2)/(n-2) L_g(f u) and Scal_gbar = 4(n-1)/(n-2) f^-(n+2)/(n-2) L_g f "
        "for gbar = f^(4/(n-2)) g"
    )
    return ExperimentResult(
        "conformal-check", statement, ["grid", "h", "covariance_residual", "scal_law_residual"], rows, checks
    )


def run_neck_sweep(p: dict) -> ExperimentResult:
    rep = ns.neck_sweep(p["n"], p["c"], p["radii"], p["k"], p["samples"])
    header = ["r", "j", "mu_j", "gap_j", "S0", "S1", "C1", "C2", "h_sweep"]
    rows = []
    for row in rep.rows:
        d = row.diag
        for j in range(rep.k + 1):
            rows.append([row.r, j, row.mu[j], row.gaps[j], d.S0, d.S1, d.C1, d.C2, d.h_sweep])
    gaps = np.array([row.gaps for row in rep.rows])
    checks = []
    tail = gaps[-3:]
    for j in range(rep.k + 1):
        worst = float(np.max(np.diff(tail[:, j]))) if len(tail) > 1 else 0.0
        checks.append(Check(f"gap_{j} increments over last radii", worst, 0.0, "<"))
        checks.append(Check(f"final gap_{j} / mu_inf", float(gaps[-1, j] / rep.baseline[j]), p["final_gap"], "<="))
    checks.append(Check("mass localization bound on all eigenpairs", float(all(r.localization_ok for r in rep.rows)), 1.0, "=="))
    checks.append(Check("fewest localization checks on a profile", float(min(r.localization_checks for r in rep.rows)), 1.0, ">="))
    statement = (
        "after surgery of codimension >= 3 the first k+1 eigenvalues approach those of the "
        "disjoint union (two round spheres joined by a neck of radius r)"
    )
    return ExperimentResult(
        "neck-sweep", statement, header, rows, checks, {"baseline": [float(b) for b in rep.baseline],
                                                        "monotone_from_r": rep.monotone_threshold(),
                                                        "note": rep.note}
    )


def c1_perturbation(grid: mf.PeriodicGrid, delta: float) -> mf.MetricField:
    """Flat metric plus eps cos(2 pi x1) Id with eps chosen so the C1 size is delta."""
    x = grid.coordinates()[0]
    eps = delta / (1 + 2 * np.pi)
    return mf.MetricField.conformally_flat(grid, 1 + eps * np.cos(2 * np.pi * x / grid.lengths[0]))


def run_c1_continuity(p: dict) -> ExperimentResult:
    grid = mf.PeriodicGrid((p["grid"],) * 3, (1.0, 1.0, 1.0))
    g = mf.MetricField.flat(grid)
    k = p["k"]
    base = es.solve_lowest(oa.assemble(g, p["c"]), k).eigenvalues
    rows, worst, rel = [], [], []
    for delta in p["deltas"]:
        gp = c1_perturbation(grid, float(delta))
        mu = es.solve_lowest(oa.assemble(gp, p["c"]), k).eigenvalues
        diff = np.abs(mu - base)
        worst.append(float(diff.max()))
        rel.append(float(np.max(diff / (1 + np.abs(base)))))
        rows.append([float(delta), mf.c1_distance(g, gp), worst[-1], rel[-1]])
    checks = [
        Check("max |mu_j - mu_j'| increments as delta shrinks", float(np.max(np.diff(worst))), 0.0, "<"),
        Check("max |mu_j - mu_j'| / (1 + |mu_j|) at smallest delta", rel[-1], p["tol"], "<="),
    ]
    statement = "eigenvalues of L_g depend continuously on g in the C1 topology"
    return ExperimentResult(
        "c1-continuity", statement, ["delta", "c1_distance", "max_abs_gap", "max_rel_gap"], rows, checks
    )


def run_kato(p: dict) -> ExperimentResult:
    rng = np.random.default_rng(p["seed"])
    rows, checks = [], []
    for n in p["dims"]:
        n = int(n)
        rep = sk.build_clifford(n)
        pi = sk.kato_projection(rep)
        proj = float(np.abs(pi @ pi - pi).max())
        adj = float(np.abs(pi - pi.conj().T).max())
        rot = float(np.abs(sk.kato_projection(rep, sk.random_rotation(n, rng)) - pi).max())
        unit_dev = 0.0
        general_dev = 0.0
        measured = math.nan
        for _ in range(p["samples"]):
            X = rng.standard_normal(n)
            psi = rng.standard_normal(rep.d) + 1j * rng.standard_normal(rep.d)
            general_dev = max(general_dev, sk.complementary_norm_check(rep, X, psi, pi) / (
                np.dot(X, X) * np.vdot(psi, psi).real))
            X /= np.linalg.norm(X)
            psi /= np.linalg.norm(psi)
            unit_dev = max(unit_dev, sk.complementary_norm_check(rep, X, psi, pi))
            measured = sk.complementary_norm(rep, X, psi, pi)
        trace = float(np.trace(pi).real)
        rows.append([n, rep.d, trace, proj, adj, rot, unit_dev, general_dev, measured, (n - 1) / n])
        for label, val in (("projection", proj), ("self-adjoint", adj), ("rotation", rot),
                           ("norm identity", unit_dev), ("norm identity, scaled", general_dev)):
            checks.append(Check(f"n={n} {label}", val, p["tol"], "<="))
        checks.append(Check(f"n={n} trace - d", abs(trace - rep.d), 1e-10, "<="))
    statement = "pi = -(1/n) sum e_j (x) e_j is an orthogonal projection and |(1-pi)(X (x) psi)|^2 = (n-1)/n |X|^2 |psi|^2"
    header = ["n", "d", "trace", "projection_err", "adjoint_err", "rotation_err", "norm_dev", "scaled_norm_dev", "complementary_norm", "expected"]
    return ExperimentResult("kato", statement, header, rows, checks)


def run_kappa(p: dict) -> ExperimentResult:
    rep = kb.kappa_bounds(
        p["n"], ahat=p["ahat"], alpha=p["alpha"], spin=p["spin"], simply_connected=p["simply_connected"]
    )
    upper = "unknown" if rep.upper is None else rep.upper
    exact = "" if rep.exact is None else rep.exact
    rows = [[rep.n, "" if rep.alpha is None else rep.alpha, rep.lower, upper, exact]]
    checks = [Check("witnesses verify", float(all(w.verify() for w in rep.witnesses)), 1.0, "==")]
    if rep.upper is not None:
        checks.append(Check("lower <= upper", float(rep.lower), float(rep.upper), "<="))
    statement = "kappa from the Ahat lower bound and catalog realizations of the alpha-genus"
    return ExperimentResult(
        "kappa", statement, ["n", "alpha", "lower", "upper", "exact"], rows, checks, {"report": rep.to_dict()}
    )


def run_subcritical(p: dict) -> ExperimentResult:
    rows, hs, errs = [], [], []
    cross = p["cross"]
    for N in p["grids"]:
        grid = mf.PeriodicGrid((int(N), cross, cross), (1.0, 1.0, 1.0))
        x = grid.coordinates()
        l = mf.ScalarField(grid, np.cos(2 * np.pi * x[0]))
        u = mf.random_smooth_field(grid, np.random.default_rng(p["seed"]))
        r, bmin = oa.subcritical_identity_residual(mf.MetricField.flat(grid), l, p["t"], p["c"], u)
        hs.append(grid.spacing[0])
        errs.append(r)
        rows.append([int(N), grid.spacing[0], r, bmin])
    grid = mf.PeriodicGrid((p["mu_grid"], 8, 8), (1.0, 1.0, 1.0))
    x = grid.coordinates()[0]
    f = mf.ScalarField(grid, np.exp(p["t"] * np.cos(2 * np.pi * x)))
    gbar = mf.conformal_deform(mf.MetricField.flat(grid), f)
    mu_sub = float(es.solve_lowest(oa.assemble(gbar, p["c"]), 1).eigenvalues[0])
    mu_crit = float(es.solve_lowest(oa.assemble(gbar, oa.conformal_coefficient(3)), 1).eigenvalues[0])
    checks = [
        Check("identity order", fitted_order(hs, errs), p["min_order"], ">="),
        Check("mu_0 subcritical", mu_sub, 0.0, ">"),
        Check("|mu_0| at c = c_n", abs(mu_crit), p["mu_tol"], "<="),
    ]
    statement = (
        "for 0 < c < c_n the form of Delta_gbar + c Scal_gbar equals "
        "|f du + (c/c_n) u df|^2 + [(c/c_n)(1 - c/c_n)|df|^2 + c Scal_g f^2] u^2"
    )
    return ExperimentResult(
        "subcritical", statement, ["grid", "h", "identity_residual", "bracket_min"], rows, checks,
        {"mu0_subcritical": mu_sub, "mu0_critical": mu_crit},
    )


def run_cheeger(p: dict) -> ExperimentResult:
    n = p["n"]
    cap = ns.cap_profile(n, p["samples"])
    h_cap = es.cheeger_sweep(cap.cell_volumes(), cap.face_areas())
    rows, checks, hvals = [], [], []
    for r in p["radii"]:
        prof = ns.make_dumbbell(n, float(r), samples=p["samples"])
        h_sw = es.cheeger_sweep(prof.cell_volumes(), prof.face_areas())
        mu1 = float(es.solve_lowest(ns.reduce_to_sturm_liouville(prof, 0.0), 2).eigenvalues[1])
        rows.append([float(r), h_sw, mu1, h_sw**2 / 4])
        hvals.append(h_sw)
        checks.append(Check(f"r={r} h^2/4 - mu_1", h_sw**2 / 4 - mu1, 10 * prof.h**2, "<="))
    checks.append(Check("h_sweep increments as r shrinks", float(np.max(np.diff(hvals))) if len(hvals) > 1 else -1.0, 0.0, "<="))
    if n == 3:
        checks.append(Check("|h(S^3) - 4/pi|", abs(h_cap - 4 / np.pi), 1e-3, "<="))
    statement = "h^2/4 <= mu_1(Delta) with h estimated over the coordinate spheres of the profile"
    return ExperimentResult(
        "cheeger", statement, ["r", "h_sweep", "mu1_laplacian", "h_sq_over_4"], rows, checks,
        {"h_round_sphere": h_cap},
    )


EXPERIMENTS: dict[str, Callable[[dict], ExperimentResult]] = {
    "spectrum": run_spectrum,
    "conformal-check": run_conformal_check,
    "neck-sweep": run_neck_sweep,
    "c1-continuity": run_c1_continuity,
    "kato": run_kato,
    "kappa": run_kappa,
    "subcritical": run_subcritical,
    "cheeger": run_cheeger,
}


def run(name: str, params: dict | None = None) -> ExperimentResult:
    return EXPERIMENTS[name](validate(name, params or {}))
