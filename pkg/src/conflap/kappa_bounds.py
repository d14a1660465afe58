"""Integer bounds on kappa from dimension, spin/simply-connected flags and alpha/Ahat data.

Witness manifolds are disjoint unions of products of named scalar-flat blocks.
The catalog is closed-world: only the blocks listed in CATALOG are used, so any
minimum found by search is exact only relative to that catalog.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InconsistentFlagsError, InexactKappaError, NormalizationError, RangeError
from .spinor_kato import ahat_kappa_lower


@dataclass(frozen=True)
class BuildingBlock:
    name: str
    dim: int
    ahat: int | None  # None for the circle, whose alpha is a mod-2 class
    tag: str
    connected: bool = True


def _catalog(max_quaternionic: int = 8) -> dict[str, BuildingBlock]:
    blocks = [BuildingBlock("K3", 4, 2, "K3")]
    blocks += [BuildingBlock(f"V{i}", 8, i, "Ricci-flat 8-manifold") for i in range(5)]
    blocks += [BuildingBlock(f"H{i}", 4 * i, i + 1, "Sp") for i in range(1, max_quaternionic + 1)]
    blocks.append(BuildingBlock("B", 8, 1, "Spin(7)"))
    blocks.append(BuildingBlock("S1", 1, None, "circle"))
    return {b.name: b for b in blocks}


CATALOG = _catalog()


def block(name: str) -> BuildingBlock:
    if name in CATALOG:
        return CATALOG[name]
    if name.startswith("H") and name[1:].isdigit() and int(name[1:]) >= 1:
        i = int(name[1:])
        return BuildingBlock(name, 4 * i, i + 1, "Sp")
    raise KeyError(f"unknown building block {name!r}")


@dataclass(frozen=True)
class Component:
    """A connected product of catalog blocks."""

    factors: tuple[str, ...]

    @property
    def dim(self) -> int:
        return sum(block(f).dim for f in self.factors)

    @property
    def ahat(self) -> int | None:
        vals = [block(f).ahat for f in self.factors]
        if any(v is None for v in vals):
            return None
        return math.prod(vals)

    def label(self) -> str:
        if not self.factors:
            return "pt"
        parts = []
        for name in dict.fromkeys(self.factors):
            k = self.factors.count(name)
            parts.append(name if k == 1 else f"{name}^{k}")
        return " x ".join(parts)


def product(*groups: tuple[str, int]) -> Component:
    """product(("V4", 2), ("V1", 1)) -> V4 x V4 x V1."""
    out: list[str] = []
    for name, k in groups:
        out += [name] * k
    return Component(tuple(out))


@dataclass(frozen=True)
class Witness:
    components: tuple[Component, ...]
    cite: str
    dim: int
    ahat_total: int | None

    @property
    def count(self) -> int:
        return len(self.components)

    def verify(self) -> bool:
        if any(c.dim != self.dim for c in self.components):
            return False
        if self.ahat_total is None:
            return True
        return sum(c.ahat for c in self.components) == self.ahat_total

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "blocks": [c.label() for c in self.components],
            "cite": self.cite,
        }


def _check_witness(w: Witness) -> Witness:
    if not w.verify():
        raise AssertionError(f"witness failed verification: {w}")
    return w


def _split_dim(n: int) -> tuple[int, bool]:
    """Return (l, plus_four) with n = 8l or 8l + 4."""
    if n % 4 != 0:
        raise RangeError(f"n = {n} is not divisible by 4")
    return n // 8, n % 8 == 4


def alpha_from_Ahat(n: int, ahat: int) -> int:
    """alpha = Ahat if n = 8l, Ahat / 2 if n = 8l + 4."""
    _, plus_four = _split_dim(n)
    if not plus_four:
        return int(ahat)
    if ahat % 2:
        raise NormalizationError(f"Ahat must be even in dimension {n}")
    return int(ahat) // 2


def ahat_from_alpha(n: int, alpha: int) -> int:
    _, plus_four = _split_dim(n)
    return 2 * int(alpha) if plus_four else int(alpha)


def _lift(comp: Component, plus_four: bool) -> Component:
    return Component(("K3",) + comp.factors) if plus_four else comp


def pn_upper(n: int, a: int) -> tuple[int, Witness]:
    """p + min{q, l} for |a| = 4^l p + q, with the witness realizing it."""
    l, plus_four = _split_dim(n)
    if l < 1:
        raise RangeError("need n = 8l or 8l + 4 with l >= 1")
    a = abs(int(a))
    p, q = divmod(a, 4**l)
    cite = "upper bound p + min{q, l} on the minimal number of scalar-flat components"
    comps: list[Component] = [_lift(product(("V4", l)), plus_four) for _ in range(p)]
    if q <= l:
        comps += [_lift(product(("V1", l)), plus_four) for _ in range(q)]
        bound = p + q
    else:
        digits = [(q // 4**i) % 4 for i in range(l)]
        for i, qi in enumerate(digits):
            w_i = product((f"V{qi}", 1), ("V4", i), ("V1", l - 1 - i))
            comps.append(_lift(w_i, plus_four))
        bound = p + l
    w = _check_witness(Witness(tuple(comps), cite, n, ahat_from_alpha(n, a)))
    assert w.count == bound
    return bound, w


def _achievable(n: int) -> dict[int, dict[int, Component]]:
    """For each dim d <= n (multiple of 4), the Ahat values of connected catalog products."""
    names = [b.name for b in CATALOG.values() if b.ahat is not None and b.dim <= n]
    names += [f"H{i}" for i in range(len([k for k in CATALOG if k.startswith("H")]) + 1, n // 4 + 1)]
    table: dict[int, dict[int, Component]] = {0: {1: Component(())}}
    for d in range(4, n + 1, 4):
        vals: dict[int, Component] = {}
        for name in names:
            b = block(name)
            if b.dim > d or (d - b.dim) not in table:
                continue
            for v, comp in table[d - b.dim].items():
                key = v * b.ahat
                if key not in vals:
                    vals[key] = Component(tuple(sorted(comp.factors + (name,))))
        table[d] = vals
    return table


def pn_bruteforce_witness(n: int, a: int, max_components: int = 8) -> Witness | None:
    """Fewest catalog components realizing alpha = a in dimension n, or None if > max_components."""
    if n % 4 != 0:
        raise RangeError("catalog search needs n divisible by 4")
    if not 0 <= max_components <= 8:
        raise RangeError("max_components must lie in 0..8")
    a = abs(int(a))
    target = ahat_from_alpha(n, a) if n >= 8 else (2 * a if n == 4 else a)
    cite = "minimum over disjoint unions of catalog products (catalog-exact)"
    if a == 0:
        return Witness((), cite, n, 0)
    values = {v: c for v, c in _achievable(n)[n].items() if 0 < v <= target}
    INF = max_components + 1
    best = [0] + [INF] * target
    choice = [0] * (target + 1)
    for s in range(1, target + 1):
        for v in values:
            if v <= s and best[s - v] + 1 < best[s]:
                best[s] = best[s - v] + 1
                choice[s] = v
    if best[target] > max_components:
        return None
    comps, s = [], target
    while s:
        comps.append(values[choice[s]])
        s -= choice[s]
    return _check_witness(Witness(tuple(comps), cite, n, target))


def pn_bruteforce(n: int, a: int, max_components: int = 8) -> int | str:
    w = pn_bruteforce_witness(n, a, max_components)
    return "exceeds" if w is None else w.count


def stable_exponent(n: int, ahat: int) -> tuple[int, Witness | None]:
    """Smallest p from the factorization recipe with kappa(M x B^p) <= 1, and its witness."""
    l, plus_four = _split_dim(n)
    if l < 1:
        raise RangeError("need n = 8l or 8l + 4 with l >= 1")
    ahat = abs(int(ahat))
    if ahat == 0:
        return 0, None
    odd = ahat
    if plus_four:
        if ahat % 2:
            raise NormalizationError(f"Ahat must be even in dimension {n}")
        odd //= 2
    a = (odd & -odd).bit_length() - 1
    b = (odd >> a) // 2
    groups: list[tuple[str, int]] = []
    if a + b <= l:
        p = 0
        groups.append(("V1", l - a - b))
    else:
        p = a + b - l
    groups.append(("V2", a))
    if b:
        groups.append((f"H{2 * b}", 1))
    comp = _lift(product(*groups), plus_four)
    cite = "Ahat = 2^a (2b+1) realized by a connected product of V1, V2 and H_2b"
    w = _check_witness(Witness((comp,), cite, n + 8 * p, ahat))
    return p, w


@dataclass(frozen=True)
class KappaReport:
    n: int
    alpha: int | None
    lower: int
    upper: int | None
    witnesses: tuple[Witness, ...] = ()
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.upper is not None and self.lower > self.upper:
            raise AssertionError("lower bound exceeds upper bound")

    @property
    def exact(self) -> int | None:
        return self.lower if self.upper is not None and self.lower == self.upper else None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "lower": self.lower,
            "upper": "unknown" if self.upper is None else self.upper,
            "exact": self.exact,
            "witnesses": [w.as_dict() for w in self.witnesses],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


KAPPA_PRIME_NOTE = (
    "kappa' (minimal number of non-positive eigenvalues) satisfies kappa' <= kappa; "
    "no lower bound for kappa' is claimed"
)
CATALOG_NOTE = "upper bounds use only the named scalar-flat building blocks (closed catalog)"
PSC_NOTE = "simply connected, n >= 5 and non-spin or alpha = 0: a positive scalar curvature metric exists"


def kappa_bounds(
    n: int,
    *,
    ahat: int | None = None,
    alpha: int | None = None,
    spin: bool = True,
    simply_connected: bool = True,
) -> KappaReport:
    if n < 3:
        raise RangeError("kappa bounds need n >= 3")
    if not spin and (ahat is not None or alpha is not None):
        raise InconsistentFlagsError("alpha and Ahat data require a spin manifold")
    notes = [KAPPA_PRIME_NOTE]
    residue = n % 8
    sc5 = simply_connected and n >= 5

    if not spin:
        if sc5:
            return KappaReport(n, None, 0, 0, (), tuple(notes + [PSC_NOTE]))
        return KappaReport(n, None, 0, None, (), tuple(notes + ["no bound available without simple connectivity"]))

    if residue in (3, 5, 6, 7):
        if ahat or alpha:
            raise InconsistentFlagsError(f"alpha vanishes identically in dimension {n}")
        if sc5:
            return KappaReport(n, 0, 0, 0, (), tuple(notes + [PSC_NOTE]))
        return KappaReport(n, 0, 0, None, (), tuple(notes))

    if residue in (1, 2):
        if ahat is not None:
            raise InconsistentFlagsError("Ahat is not the relevant invariant in dimension 8l+1, 8l+2")
        a = 1 if alpha else 0
        notes.append("alpha is a mod-2 class here; |alpha| is 0 or 1")
        lower = a  # nonzero alpha obstructs positive scalar curvature
        if sc5 and n >= 9:
            if a == 0:
                return KappaReport(n, 0, 0, 0, (), tuple(notes + [PSC_NOTE]))
            l, extra = divmod(n, 8)
            comp = product(("V1", l), ("S1", extra))
            w = _check_witness(
                Witness((comp,), "V1^l x (S1)^a with the non-bounding circle realizes alpha", n, None)
            )
            return KappaReport(n, 1, 1, 1, (w,), tuple(notes + [CATALOG_NOTE]))
        return KappaReport(n, a, lower, None, (), tuple(notes))

    # n divisible by 4
    if ahat is None and alpha is None:
        raise InconsistentFlagsError("dimension divisible by 4 requires ahat or alpha")
    if ahat is not None and ahat < 0 or alpha is not None and alpha < 0:
        notes.append("negative genus: orientation reversed, absolute value used")
    if ahat is not None:
        ahat = abs(int(ahat))
        a = alpha_from_Ahat(n, ahat) if n >= 8 else (ahat // 2 if ahat % 2 == 0 else None)
        if alpha is not None and a is not None and abs(int(alpha)) != a:
            raise InconsistentFlagsError("alpha and Ahat disagree")
    else:
        a = abs(int(alpha))
        ahat = ahat_from_alpha(n, a) if n >= 8 else 2 * a
    lower = max(ahat_kappa_lower(ahat, n).value, 1 if ahat else 0)
    if not sc5:
        return KappaReport(n, a, lower, None, (), tuple(notes))
    if a == 0:
        return KappaReport(n, 0, 0, 0, (), tuple(notes + [PSC_NOTE]))
    bound, w_digits = pn_upper(n, a)
    witnesses = [w_digits]
    upper = bound
    w_cat = pn_bruteforce_witness(n, a, max_components=min(8, bound))
    if w_cat is not None and w_cat.count < upper:
        upper = w_cat.count
        witnesses.append(w_cat)
    return KappaReport(n, a, lower, upper, tuple(witnesses), tuple(notes + [CATALOG_NOTE]))


def kappa_disjoint_union(parts: Iterable[int | KappaReport | None]) -> int:
    """kappa is additive over disjoint unions; every part must be known exactly."""
    total = 0
    for p in parts:
        val = p.exact if isinstance(p, KappaReport) else p
        if val is None:
            raise InexactKappaError("every part must have an exact kappa")
        total += int(val)
    return total


@dataclass(frozen=True)
class Sandwich:
    lower: int
    upper: int

    @property
    def exact(self) -> int | None:
        return self.lower if self.lower == self.upper else None


def k3_connected_sum(k: int) -> Sandwich:
    """kappa of the k-fold connected sum of K3.

    Lower: Ahat = 2k in dimension 4.  Upper: the sum arises from k disjoint
    copies of K3 by surgery of codimension 4, which cannot raise kappa, and the
    disjoint union has kappa = k * kappa(K3) = k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    lower = ahat_kappa_lower(2 * k, 4).value
    upper = kappa_disjoint_union([1] * k)
    return Sandwich(lower, upper)


@dataclass(frozen=True)
class CoveringExample:
    name: str
    steps: tuple[tuple[str, str], ...]  # (claim, justification)
    kappa_base: tuple[int, int | None]  # (lower, upper) for M
    kappa_cover: tuple[int, int | None]  # (lower, upper) for the cover
    trend: str

    def holds(self) -> bool:
        (bl, bu), (cl, cu) = self.kappa_base, self.kappa_cover
        if self.trend == "unchanged":
            return bl == bu == cl == cu
        if self.trend == "increases":
            return bu is not None and cl > bu
        if self.trend == "decreases":
            return cu is not None and cu < bl
        return False


def covering_examples(k_cover: int = 3, exotic_order: int = 2, n_exotic: int = 9) -> tuple[CoveringExample, ...]:
    """The three covering scenarios: kappa unchanged, increased, decreased."""
    if k_cover < 3:
        raise ValueError("the increasing example needs a cover of degree >= 3")
    if n_exotic % 8 != 1 or n_exotic < 9:
        raise RangeError("the exotic sphere needs dimension 8l+1, l >= 1")
    if exotic_order < 2:
        raise ValueError("the exotic sphere order must be >= 2")
    torus = CoveringExample(
        "torus",
        (
            ("kappa(T^n) <= 1", "flat and connected, so mu_0 = 0 and mu_1 > 0"),
            ("kappa(T^n) >= 1", "the torus carries no metric of positive scalar curvature"),
            ("every finite cover of T^n is again T^n", "lattice covers"),
        ),
        (1, 1),
        (1, 1),
        "unchanged",
    )
    upper_base = kappa_disjoint_union([1, 1])
    cover_lower = ahat_kappa_lower(k_cover * 2, 4).value
    k3_torus = CoveringExample(
        "K3 # T^4",
        (
            (f"kappa(K3 # T^4) <= kappa(K3 + T^4) = {upper_base}", "surgery monotonicity and additivity"),
            (f"{k_cover}-fold cover is #{k_cover} K3 # T^4 with Ahat = {2 * k_cover}", "cover of the torus summand"),
            (f"kappa(cover) >= {cover_lower}", "Ahat lower bound in dimension 4"),
        ),
        (0, upper_base),
        (cover_lower, None),
        "increases",
    )
    quotient = CoveringExample(
        f"(S^3/Z_{exotic_order} x S^{n_exotic - 3}) # Sigma^{n_exotic}",
        (
            ("alpha(M) = alpha(Sigma) != 0", "exotic sphere with nontrivial alpha in dimension 8l+1"),
            ("kappa(M) >= 1", "spin with nonzero alpha: no positive scalar curvature metric"),
            (
                f"universal cover = (S^3 x S^{n_exotic - 3}) # {exotic_order} Sigma = S^3 x S^{n_exotic - 3}",
                f"Sigma has order {exotic_order}",
            ),
            ("kappa(cover) = 0", "S^3 x S^(n-3) carries positive scalar curvature"),
        ),
        (1, None),
        (0, 0),
        "decreases",
    )
    return torus, k3_torus, quotient
