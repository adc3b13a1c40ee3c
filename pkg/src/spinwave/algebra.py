"""Exact formal power series in T with sparse field monomials.

A monomial is phi^p u^pt (grad phi)^q for finitely supported multi-indices:
p maps sites to powers, pt maps (site, transverse component) to powers, q
maps (site, axis) to powers. A series assigns an exact rational coefficient
to each monomial per order of T. Floats never enter this module; they first
appear downstream when Green values multiply in.

Component indices are 0-based here (0 .. N-3 for the N-2 transverse modes);
the observable JSON uses the 1-based physics convention 1..N where N is the
longitudinal component, N-1 the angular one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .lattice import Site

# ---------------------------------------------------------------------------
# coefficient tables


def c_r(r: int) -> Fraction:
    """(-1)^{r+1} / (2r+2)!  — weights of the gradient blocks."""
    return Fraction((-1) ** (r + 1), math.factorial(2 * r + 2))


def c_prime_r(r: int) -> Fraction:
    """(-1)^{r+1} / (2r+1)!"""
    return Fraction((-1) ** (r + 1), math.factorial(2 * r + 1))


def half_binomial(p: int) -> Fraction:
    """binom(1/2, p) as an exact rational."""
    num = Fraction(1)
    for i in range(p):
        num *= Fraction(1, 2) - i
    return num / math.factorial(p)


def c_tilde(p: int) -> Fraction:
    """(-1)^p binom(1/2, p): Taylor weights of sqrt(1 - z)."""
    return (-1) ** p * half_binomial(p)


# ---------------------------------------------------------------------------
# monomials


def _norm_items(entries: Optional[Mapping], width: int) -> tuple:
    if not entries:
        return ()
    out = []
    for key, power in entries.items():
        if power == 0:
            continue
        if power < 0:
            raise ValueError(f"negative power {power} for {key}")
        if width == 1:
            out.append((tuple(key), int(power)))
        else:
            site, extra = key
            out.append((tuple(site), int(extra), int(power)))
    out.sort()
    return tuple(out)


@dataclass(frozen=True)
class Monomial:
    """phi^p u^pt (grad phi)^q with sparse sorted index tuples."""

    phi: tuple = ()
    u: tuple = ()
    grad: tuple = ()

    @staticmethod
    def build(
        phi: Optional[Mapping[Site, int]] = None,
        u: Optional[Mapping[tuple[Site, int], int]] = None,
        grad: Optional[Mapping[tuple[Site, int], int]] = None,
    ) -> "Monomial":
        return Monomial(_norm_items(phi, 1), _norm_items(u, 2), _norm_items(grad, 2))

    @property
    def is_one(self) -> bool:
        return not self.phi and not self.u and not self.grad

    def phi_dict(self) -> dict[Site, int]:
        return {x: w for x, w in self.phi}

    def u_dict(self) -> dict[tuple[Site, int], int]:
        return {(x, k): w for x, k, w in self.u}

    def phi_degree(self) -> int:
        return sum(w for _, w in self.phi)

    def u_degree(self) -> int:
        return sum(w for *_, w in self.u)

    def u_component_degrees(self) -> dict[int, int]:
        deg: dict[int, int] = {}
        for _, k, w in self.u:
            deg[k] = deg.get(k, 0) + w
        return deg

    def sites(self) -> set[Site]:
        out = {x for x, _ in self.phi}
        out |= {x for x, _, _ in self.u}
        out |= {x for x, _, _ in self.grad}
        return out

    def translate(self, shift: Site) -> "Monomial":
        mv = lambda x: tuple(a + b for a, b in zip(x, shift))
        return Monomial(
            tuple(sorted((mv(x), w) for x, w in self.phi)),
            tuple(sorted((mv(x), k, w) for x, k, w in self.u)),
            tuple(sorted((mv(x), k, w) for x, k, w in self.grad)),
        )

    def __mul__(self, other: "Monomial") -> "Monomial":
        phi = self.phi_dict()
        for x, w in other.phi:
            phi[x] = phi.get(x, 0) + w
        u = self.u_dict()
        for x, k, w in other.u:
            u[(x, k)] = u.get((x, k), 0) + w
        grad = {(x, k): w for x, k, w in self.grad}
        for x, k, w in other.grad:
            grad[(x, k)] = grad.get((x, k), 0) + w
        return Monomial.build(phi, u, grad)


ONE = Monomial()


def canonicalize(m: Monomial) -> tuple[Monomial, Optional[Site]]:
    """Translation- and component-permutation-normal form.

    Returns (key, shift) with key = m translated by -shift and with the
    transverse components relabeled along a deterministic profile order;
    monomials related by translation or component permutation share keys.
    shift is None for the empty monomial.
    """
    if m.is_one:
        return m, None
    shift = min(m.sites())
    moved = m.translate(tuple(-a for a in shift))
    comps = moved.u_component_degrees()
    if comps:
        profile = {
            k: tuple(sorted((x, w) for x, kk, w in moved.u if kk == k))
            for k in comps
        }
        order = sorted(comps, key=lambda k: (-comps[k], profile[k]))
        relabel = {old: new for new, old in enumerate(order)}
        moved = Monomial(
            moved.phi,
            tuple(sorted((x, relabel[k], w) for x, k, w in moved.u)),
            moved.grad,
        )
    return moved, shift


# ---------------------------------------------------------------------------
# series


@dataclass
class FormalSeries:
    """Orders 0..max_order, each a map Monomial -> exact coefficient."""

    terms: dict[int, dict[Monomial, Fraction]] = field(default_factory=dict)
    max_order: int = 0

    @staticmethod
    def constant(value: Fraction | int = 1, max_order: int = 0) -> "FormalSeries":
        value = Fraction(value)
        terms = {0: {ONE: value}} if value else {}
        return FormalSeries(terms, max_order)

    @staticmethod
    def of_monomial(m: Monomial, coeff: Fraction | int = 1, order: int = 0,
                    max_order: Optional[int] = None) -> "FormalSeries":
        return FormalSeries({order: {m: Fraction(coeff)}},
                            order if max_order is None else max_order)

    def coefficient(self, order: int, m: Monomial) -> Fraction:
        return self.terms.get(order, {}).get(m, Fraction(0))

    def items(self) -> Iterator[tuple[int, Monomial, Fraction]]:
        for s in sorted(self.terms):
            for m, c in sorted(self.terms[s].items(), key=lambda kv: repr(kv[0])):
                yield s, m, c

    def add_term(self, order: int, m: Monomial, coeff: Fraction) -> None:
        if coeff == 0 or order > self.max_order:
            return
        bucket = self.terms.setdefault(order, {})
        new = bucket.get(m, Fraction(0)) + coeff
        if new:
            bucket[m] = new
        else:
            bucket.pop(m, None)
            if not bucket:
                self.terms.pop(order, None)

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        out = FormalSeries({}, max(self.max_order, other.max_order))
        for src in (self, other):
            for s, m, c in src.items():
                out.add_term(s, m, c)
        return out

    def scaled(self, factor: Fraction | int) -> "FormalSeries":
        factor = Fraction(factor)
        out = FormalSeries({}, self.max_order)
        if factor:
            for s, m, c in self.items():
                out.add_term(s, m, c * factor)
        return out

    def order_shifted(self, shift: int, max_order: int) -> "FormalSeries":
        out = FormalSeries({}, max_order)
        for s, m, c in self.items():
            out.add_term(s + shift, m, c)
        return out


def series_mul(a: FormalSeries, b: FormalSeries, n: int) -> FormalSeries:
    """Cauchy product truncated at order n; exact arithmetic throughout."""
    out = FormalSeries({}, n)
    for sa in sorted(a.terms):
        if sa > n:
            continue
        for sb in sorted(b.terms):
            s = sa + sb
            if s > n:
                break
            for ma, ca in a.terms[sa].items():
                for mb, cb in b.terms[sb].items():
                    out.add_term(s, ma * mb, ca * cb)
    return out


def series_product(factors: Sequence[FormalSeries], n: int) -> FormalSeries:
    out = FormalSeries.constant(1, n)
    for f in factors:
        out = series_mul(out, f, n)
    return out


# ---------------------------------------------------------------------------
# norm powers and the model's structure polynomials


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def norm_power(x: Site, j: int, n_comp: int) -> dict[Monomial, Fraction]:
    """||u_x||^{2j} expanded multinomially into component monomials."""
    if j == 0:
        return {ONE: Fraction(1)}
    if n_comp == 0:
        return {}
    out: dict[Monomial, Fraction] = {}
    fact_j = math.factorial(j)
    for combo in _compositions(j, n_comp):
        coeff = Fraction(fact_j)
        for jk in combo:
            coeff /= math.factorial(jk)
        mono = Monomial.build(u={(x, k): 2 * jk for k, jk in enumerate(combo) if jk})
        out[mono] = out.get(mono, Fraction(0)) + coeff
    return out


def _poly_mul(a: dict[Monomial, Fraction], b: dict[Monomial, Fraction]) -> dict[Monomial, Fraction]:
    out: dict[Monomial, Fraction] = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = ma * mb
            c = out.get(m, Fraction(0)) + ca * cb
            if c:
                out[m] = c
            else:
                out.pop(m, None)
    return out


def g_polynomial(p_prime: int, x: Site, axis: int, n_comp: int) -> dict[Monomial, Fraction]:
    """The degree-p' norm polynomial attached to the bond (x, x+e).

    sum_{l+m=p'} c~_l c~_m ||u_x||^{2l} ||u_{x+e}||^{2m}, expanded into
    component monomials. p'=0 gives the constant 1.
    """
    if p_prime < 0:
        raise ValueError("p_prime must be >= 0")
    y = tuple(a + (1 if k == axis else 0) for k, a in enumerate(x))
    out: dict[Monomial, Fraction] = {}
    for l in range(p_prime + 1):
        mm = p_prime - l
        weight = c_tilde(l) * c_tilde(mm)
        for mono, coeff in _poly_mul(norm_power(x, l, n_comp),
                                     norm_power(y, mm, n_comp)).items():
            c = out.get(mono, Fraction(0)) + weight * coeff
            if c:
                out[mono] = c
            else:
                out.pop(mono, None)
    return out


def _sin_ratio_series(x: Site, n: int) -> FormalSeries:
    """sum_i T^i (-1)^i phi_x^{2i} / (2i+1)!  (the sin factor over its leading phi)."""
    out = FormalSeries({}, n)
    for i in range(n + 1):
        out.add_term(i, Monomial.build(phi={x: 2 * i}),
                     Fraction((-1) ** i, math.factorial(2 * i + 1)))
    return out


def _cos_series(x: Site, n: int) -> FormalSeries:
    out = FormalSeries({}, n)
    for i in range(n + 1):
        out.add_term(i, Monomial.build(phi={x: 2 * i}),
                     Fraction((-1) ** i, math.factorial(2 * i)))
    return out


def _sqrt_series(x: Site, n: int, n_comp: int) -> FormalSeries:
    """sqrt(1 - T ||u_x||^2) = sum_j T^j c~_j ||u_x||^{2j}, expanded."""
    out = FormalSeries({}, n)
    for j in range(n + 1):
        cj = c_tilde(j)
        for mono, coeff in norm_power(x, j, n_comp).items():
            out.add_term(j, mono, cj * coeff)
    return out


def f_tilde_series(p_tilde_1: Mapping[Site, int], n: int, n_comp: int) -> FormalSeries:
    """Substitution series for a power of the first transverse component.

    Replaces (u^1)^{p~1} after rotating it into the angular slot: each site
    factor becomes phi_x * (sin ratio) * (sqrt factor), raised to the site's
    power, and everything is multiplied out to order n. At n=0 the result is
    exactly phi^{p~1}.
    """
    entries = {tuple(x): int(w) for x, w in p_tilde_1.items() if w}
    if not entries:
        raise ValueError("p_tilde_1 must be nonzero")
    factors: list[FormalSeries] = []
    for x in sorted(entries):
        a = entries[x]
        if a < 0:
            raise ValueError(f"negative power at {x}")
        factors.append(FormalSeries.of_monomial(
            Monomial.build(phi={x: a}), 1, 0, n))
        for _ in range(a):
            factors.append(_sin_ratio_series(x, n))
            factors.append(_sqrt_series(x, n, n_comp))
    return series_product(factors, n)


# ---------------------------------------------------------------------------
# spin observables


class ParityError(ValueError):
    """An observable with odd total power in some transverse component."""

    def __init__(self, component: int, total: int):
        self.component = component
        self.total = total
        super().__init__(
            f"component {component} has odd total power {total}; "
            "transverse correlations of odd degree vanish identically"
        )


def compile_spin_observable(
    alpha: Mapping[tuple[Site, int], int], n: int, n_vector: int, d: int
) -> FormalSeries:
    """Taylor coefficients in T of a product of spin components.

    alpha maps (site, component) -> power with 1-based components: k <= N-2
    are the transverse modes, N-1 the angular slot, N the longitudinal one.
    Requires even total power in every component below N. Each order-s term
    satisfies ||p||_1 + ||pt||_1 = 2s.
    """
    if n_vector < 2:
        raise ValueError("N must be >= 2")
    n_comp = n_vector - 2
    clean: dict[tuple[Site, int], int] = {}
    for (site, comp), power in alpha.items():
        site = tuple(int(c) for c in site)
        if len(site) != d:
            raise ValueError(f"site {site} does not have dimension {d}")
        if not 1 <= comp <= n_vector:
            raise ValueError(f"component {comp} outside 1..{n_vector}")
        if power < 0:
            raise ValueError(f"negative power for {site}, component {comp}")
        if power:
            clean[(site, comp)] = clean.get((site, comp), 0) + int(power)

    for k in range(1, n_vector):
        total = sum(w for (_, comp), w in clean.items() if comp == k)
        if total % 2:
            raise ParityError(k, total)

    half_powers = sum(w for (_, comp), w in clean.items() if comp < n_vector)
    t_shift = half_powers // 2
    if t_shift > n:
        return FormalSeries({}, n)
    budget = n - t_shift

    factors: list[FormalSeries] = []
    for (site, comp) in sorted(clean):
        a = clean[(site, comp)]
        if comp <= n_comp:
            factors.append(FormalSeries.of_monomial(
                Monomial.build(u={(site, comp - 1): a}), 1, 0, budget))
        elif comp == n_vector - 1:
            factors.append(FormalSeries.of_monomial(
                Monomial.build(phi={site: a}), 1, 0, budget))
            for _ in range(a):
                factors.append(_sin_ratio_series(site, budget))
                factors.append(_sqrt_series(site, budget, n_comp))
        else:
            for _ in range(a):
                factors.append(_cos_series(site, budget))
                factors.append(_sqrt_series(site, budget, n_comp))
    body = series_product(factors, budget)
    out = body.order_shifted(t_shift, n)

    for s, m, _ in out.items():
        degree = m.phi_degree() + m.u_degree()
        assert degree == 2 * s, (
            f"parity bookkeeping broke: order {s} term with field degree {degree}"
        )
    return out


# ---------------------------------------------------------------------------
# JSON forms


def observable_from_json(doc) -> dict[tuple[Site, int], int]:
    """[{"site": [...], "component": k, "power": a}, ...] -> alpha map."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    if not isinstance(doc, list):
        raise ValueError("observable JSON must be an array of term objects")
    alpha: dict[tuple[Site, int], int] = {}
    for item in doc:
        unknown = set(item) - {"site", "component", "power"}
        if unknown:
            raise ValueError(f"unknown observable keys: {sorted(unknown)}")
        key = (tuple(int(c) for c in item["site"]), int(item["component"]))
        alpha[key] = alpha.get(key, 0) + int(item["power"])
    return alpha


def observable_to_json(alpha: Mapping[tuple[Site, int], int]) -> list[dict]:
    return [
        {"site": list(site), "component": comp, "power": power}
        for (site, comp), power in sorted(alpha.items())
        if power
    ]


def series_to_json(series: FormalSeries) -> dict:
    orders = {}
    for s in sorted(series.terms):
        orders[str(s)] = [
            {
                "num": c.numerator,
                "den": c.denominator,
                "phi": [[list(x), w] for x, w in m.phi],
                "u": [[list(x), k, w] for x, k, w in m.u],
                "grad": [[list(x), k, w] for x, k, w in m.grad],
            }
            for m, c in sorted(series.terms[s].items(), key=lambda kv: repr(kv[0]))
        ]
    return {"max_order": series.max_order, "orders": orders}


def series_from_json(doc: dict) -> FormalSeries:
    out = FormalSeries({}, int(doc["max_order"]))
    for s, terms in doc["orders"].items():
        for t in terms:
            m = Monomial(
                tuple((tuple(x), w) for x, w in t["phi"]),
                tuple((tuple(x), k, w) for x, k, w in t["u"]),
                tuple((tuple(x), k, w) for x, k, w in t["grad"]),
            )
            out.add_term(int(s), m, Fraction(t["num"], t["den"]))
    return out
