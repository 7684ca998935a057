"""Variational calculus on the jet space.

Provides the Euler operator, the total-divergence decision procedure, the
canonical reduction of single-time-slice densities modulo total x-derivatives,
and functional derivatives.

Total-divergence detection uses the kernel characterization of the Euler
operator (no antiderivative search): a density with vanishing Euler image for
every field is a total divergence up to a field-free remainder, which is then
tested against the smear-sector Euler operators and its constant part.

``reduce_mod_dx`` computes a canonical representative of a density modulo
im(d_x) by saturating the finite monomial space reachable from the input
under "lower one derivative / re-derive" moves and Gauss-reducing against the
image of d_x inside it.  The result is a projector; a density reduces to zero
exactly when it is a total x-derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Mapping

from .errors import UnknownField
from .jetexpr import FieldSymbol, JetExpr, SmearSymbol, partial, term_sort_key


@dataclass(frozen=True)
class Density:
    """A parity-homogeneous local density."""

    expr: JetExpr

    def __post_init__(self):
        self.expr.require_homogeneous("density")

    @property
    def parity(self) -> str:
        return self.expr.parity()


@dataclass
class Obstruction:
    """Nonzero Euler images witnessing that a density is not a divergence."""

    images: dict = dc_field(default_factory=dict)
    constant: Fraction = Fraction(0)

    def is_zero(self) -> bool:
        return not self.images and not self.constant

    def __bool__(self) -> bool:
        return not self.is_zero()

    def __str__(self) -> str:
        if self.is_zero():
            return "0"
        parts = [f"delta/delta {n}: {e}" for n, e in sorted(self.images.items())]
        if self.constant:
            parts.append(f"constant: {self.constant}")
        return "; ".join(parts)


def _jet_orders(expr: JetExpr, name: str, fermionic: bool):
    """All (ax, at) jet orders of one symbol occurring in expr."""
    orders = set()
    for key in expr.terms:
        params, smears, expf, bjets, fatoms = key
        if fermionic:
            for kind, nm, ax, at in fatoms:
                if kind == "field" and nm == name:
                    orders.add((ax, at))
        else:
            for (nm, ax, at), _ in bjets:
                if nm == name:
                    orders.add((ax, at))
            for nm, _ in expf:
                if nm == name:
                    orders.add((0, 0))
    return orders


def _smear_jet_orders(expr: JetExpr, name: str, fermionic: bool):
    orders = set()
    for key in expr.terms:
        params, smears, expf, bjets, fatoms = key
        if fermionic:
            for kind, nm, ax, at in fatoms:
                if kind == "smear" and nm == name:
                    orders.add((ax, at))
        else:
            for (nm, ax, at), _ in smears:
                if nm == name:
                    orders.add((ax, at))
    return orders


def euler(expr: JetExpr, symbol, variables: str = "xt", side: str = "left") -> JetExpr:
    """Euler operator sum_{a,b} (-d_x)^a (-d_t)^b dL/d(jet) for one symbol.

    ``variables`` is "xt" for the two-variable operator or "x" for the
    single-time-slice one.  Fermionic partials are left derivatives by
    default.  Works for field and smear symbols alike (smears are treated as
    jet coordinates of their own, which is what the divergence test needs).
    """
    if isinstance(symbol, FieldSymbol):
        orders = _jet_orders(expr, symbol.name, symbol.is_fermionic)
    elif isinstance(symbol, SmearSymbol):
        orders = _smear_jet_orders(expr, symbol.name, symbol.is_fermionic)
    else:
        raise UnknownField(f"not a field or smear symbol: {symbol!r}")
    out = JetExpr()
    for ax, at in sorted(orders):
        if variables == "x" and at:
            raise ValueError("x-only Euler operator applied to a density with time jets")
        p = partial(expr, symbol, ax, at, side=side)
        term = p.dx(ax) if ax else p
        term = term.dt(at) if at else term
        sign = -1 if (ax + at) % 2 else 1
        out = out + sign * term
    return out


def is_total_divergence(
    expr: JetExpr,
    fields,
    smears=(),
    chirality: Mapping[str, int] | None = None,
):
    """Decide whether expr = d_x A + d_t B identically on the jet space.

    ``fields`` lists the dynamical FieldSymbols, ``smears`` the SmearSymbols
    occurring as coefficients.  ``chirality`` maps smear names to +1/-1 when
    d_t s = sign * d_x s is imposed; the input is expected to be already
    reduced to x-jets of those smears, and the test is performed in the
    constrained algebra.  Returns True or an :class:`Obstruction`.
    """
    chirality = dict(chirality or {})
    if chirality:
        expr = expr.substitute_smear_chirality(chirality)
    obstruction = Obstruction()
    for f in fields:
        image = euler(expr, f, variables="xt")
        if chirality:
            image = image.substitute_smear_chirality(chirality)
        if image:
            obstruction.images[f.name] = image
    remainder = expr.field_free_part()
    if remainder:
        for s in smears:
            if s.name in chirality:
                image = euler(remainder, s, variables="x")
            else:
                image = euler(remainder, s, variables="xt")
            if image:
                obstruction.images[s.name] = image
        # parameter-only terms (no smears, no fields) are never divergences
        leftover = JetExpr(
            {k: c for k, c in remainder.terms.items() if not k[1] and not k[4]}
        )
        if leftover:
            obstruction.constant = leftover.constant_part()
            if leftover != JetExpr.const(obstruction.constant):
                obstruction.images["<constants>"] = leftover
    if obstruction.is_zero():
        return True
    return obstruction


def func_deriv(density: JetExpr, f: FieldSymbol, side: str = "left") -> JetExpr:
    """Functional derivative of the circle integral of ``density``.

    This is the x-only Euler operator (left fermionic derivative by
    default); the density must not contain time jets of the fields.
    """
    if not isinstance(f, FieldSymbol):
        raise UnknownField(f"not a field symbol: {f!r}")
    return euler(density, f, variables="x", side=side)


# --- canonical reduction modulo d_x ------------------------------------------


def _assert_x_only(expr: JetExpr):
    for key in expr.terms:
        _, smears, _, bjets, fatoms = key
        for (nm, ax, at), _ in list(smears) + list(bjets):
            if at:
                raise ValueError("reduce_mod_dx expects a single-time-slice density")
        for _, nm, ax, at in fatoms:
            if at:
                raise ValueError("reduce_mod_dx expects a single-time-slice density")


def _field_degree(key):
    _, _, _, bjets, fatoms = key
    return sum(n for _, n in bjets) + sum(1 for kind, *_ in fatoms if kind == "field")


def _weight(key):
    _, smears, _, bjets, fatoms = key
    w = sum(ax * n for (nm, ax, at), n in bjets)
    w += sum(ax * n for (nm, ax, at), n in smears)
    w += sum(ax for kind, nm, ax, at in fatoms)
    return w


def _lower_candidates(key, caps):
    """Monomials m such that d_x(m) can contain the monomial ``key``.

    ``caps`` maps the exponential-factor part of the key to the pair
    (max field degree, max weight) any antiderivative monomial of that
    sector can have; candidates outside the caps are discarded.  Within a
    fixed exponential sector, d_x raises the weight by exactly one and the
    field degree by zero (jet bump) or one (exp chain rule), and
    multiplication by the chain-rule jet is injective, so the caps lose no
    antiderivatives while keeping the search space finite.
    """
    params, smears, expf, bjets, fatoms = key
    fcap, wcap = caps[expf]
    out = set()

    def keep(k):
        if _field_degree(k) <= fcap and _weight(k) <= wcap:
            out.add(k)

    bj = dict(bjets)
    for (nm, ax, at), n in bjets:
        if ax >= 1:
            low = dict(bj)
            low[(nm, ax, at)] = n - 1
            if not low[(nm, ax, at)]:
                del low[(nm, ax, at)]
            low[(nm, ax - 1, at)] = low.get((nm, ax - 1, at), 0) + 1
            keep((params, smears, expf, tuple(sorted(low.items())), fatoms))
    sm = dict(smears)
    for (nm, ax, at), n in smears:
        if ax >= 1:
            low = dict(sm)
            low[(nm, ax, at)] = n - 1
            if not low[(nm, ax, at)]:
                del low[(nm, ax, at)]
            low[(nm, ax - 1, at)] = low.get((nm, ax - 1, at), 0) + 1
            keep((params, tuple(sorted(low.items())), expf, bjets, fatoms))
    for i, (kind, nm, ax, at) in enumerate(fatoms):
        if ax >= 1:
            atom = (kind, nm, ax - 1, at)
            if atom in fatoms:
                continue
            newf = tuple(sorted(fatoms[:i] + (atom,) + fatoms[i + 1:]))
            keep((params, smears, expf, bjets, newf))
    for fname, q in expf:
        n = bj.get((fname, 1, 0), 0)
        if n:
            low = dict(bj)
            low[(fname, 1, 0)] = n - 1
            if not low[(fname, 1, 0)]:
                del low[(fname, 1, 0)]
            keep((params, smears, expf, tuple(sorted(low.items())), fatoms))
    return out


def _column_order(keys):
    return sorted(keys, key=lambda k: (term_sort_key(k), k))


class DxReducer:
    """Reduction modulo im(d_x) on the span of a seed monomial set.

    Saturates the seed monomials under "lower one derivative" moves (with
    the per-exponential-sector degree/weight caps that keep the search
    finite and lose no antiderivatives), Gauss-reduces the d_x images of the
    candidate antiderivatives to reduced row echelon form, and then reduces
    any expression supported on the saturated span.  Reduction is linear on
    that span.
    """

    def __init__(self, seed_exprs):
        monomials = set()
        caps: dict = {}
        for e in seed_exprs:
            _assert_x_only(e)
            for key in e.terms:
                monomials.add(key)
                fdeg, wt = _field_degree(key), _weight(key)
                fcap, wcap = caps.get(key[2], (0, 0))
                caps[key[2]] = (max(fcap, fdeg), max(wcap, wt - 1))

        antiderivs: set = set()
        rows = []
        frontier = set(monomials)
        while frontier:
            new_v = set()
            for w in frontier:
                if w[2] not in caps:
                    continue
                new_v |= _lower_candidates(w, caps)
            new_v -= antiderivs
            frontier = set()
            for v in new_v:
                antiderivs.add(v)
                image = JetExpr({v: Fraction(1)}).derive("x")
                rows.append(dict(image.terms))
                for k in image.terms:
                    if k not in monomials:
                        monomials.add(k)
                        frontier.add(k)

        # Column order: monomials carrying more derivatives on fields come
        # first and are eliminated first, so representatives push derivatives
        # onto the smearing symbols (integration by parts off the fields).
        self._order = {k: i for i, k in enumerate(_column_order(monomials))}
        order = self._order

        def axpy(vec, factor, row):
            for k, c in row.items():
                s = vec.get(k, Fraction(0)) - factor * c
                if s:
                    vec[k] = s
                else:
                    vec.pop(k, None)

        self._axpy = axpy
        basis: dict = {}
        for vec in sorted(rows, key=lambda v: min(order[k] for k in v) if v else 0):
            vec = dict(vec)
            while vec:
                p = min(vec, key=order.__getitem__)
                if p not in basis:
                    inv = Fraction(1) / vec[p]
                    basis[p] = {k: c * inv for k, c in vec.items()}
                    break
                axpy(vec, vec[p], basis[p])
        # one ascending sweep suffices: every row's columns are >= its pivot
        for p in sorted(basis, key=order.__getitem__):
            for q, row in basis.items():
                if q != p and p in row:
                    axpy(row, row[p], basis[p])
        self._basis = basis

    def reduce(self, expr: JetExpr) -> JetExpr:
        for key in expr.terms:
            if key not in self._order:
                raise ValueError("expression outside the reducer's monomial span")
        target = dict(expr.terms)
        for p in sorted(self._basis, key=self._order.__getitem__):
            if p in target:
                self._axpy(target, target[p], self._basis[p])
        return JetExpr(target)


def reduce_mod_dx(expr: JetExpr) -> JetExpr:
    """Canonical representative of a density modulo total x-derivatives.

    Linear on a fixed monomial span, idempotent, and complete:
    ``reduce_mod_dx(e.dx()) == 0`` for every x-jet expression e, and two
    densities have equal integrals over the circle iff their difference
    reduces to zero.
    """
    if expr.is_zero():
        _assert_x_only(expr)
        return expr
    return DxReducer([expr]).reduce(expr)


def functionals_equal(d1: JetExpr, d2: JetExpr) -> bool:
    """Equality of circle integrals: the difference is a total x-derivative.

    Field- and smear-free constants are NOT divergences on the circle (they
    integrate to 2*PI*R times the constant), and reduce_mod_dx keeps them.
    """
    return reduce_mod_dx(d1 - d2).is_zero()
