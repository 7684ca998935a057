"""Equal-time graded Poisson brackets of local densities and functionals.

The bracket of two circle integrals F = \\oint A and G = \\oint B is

    {F, G} = sum_ij \\oint\\oint (dR F/d Phi_i)(x) K_ij(x, y) (dL G/d Phi_j)(y)

with the *right* functional derivative on the first slot and the *left* one
on the second (the unique slot assignment satisfying the graded Jacobi
identity together with graded antisymmetry), and the kernel table
K_ij(x, y) = sum_k c^k_ij d_y^k delta(x-y) with constant (parameter-valued)
coefficients.  Charges are normalized by the generator convention
delta(Phi) = {Q[eps], Phi}.  With these conventions a Witt-type family
closes as

    {Q[f], Q[g]} = -Q[f g' - f' g] + central,

which is the smeared form of the mode relation {L_n, L_m} = (n-m) L_{n+m}
for L_n = \\oint z^(n+1) T (the map from smearings to charges is an
anti-homomorphism onto the algebra of transformations).

At density level the bracket of A(x) and B(y) expands by the graded Leibniz
rule over jet occurrences,

    {A(x), B(y)} = sum (dR A/d u_i,a)(x) (dL B/d u_j,b)(y)
                           * (-1)^a c^k_ij d_y^(a+b+k) delta(x-y),

and every x-located coefficient is transported to y with the finite binomial
re-expansion F(x) d_y^m delta = sum_r C(m, r) (d^r F)(y) d_y^(m-r) delta,
yielding a :class:`DistExpr` in normal form (all coefficients at y).

Integrating a DistExpr against smearings already contained in the densities
kills every k >= 1 component, so the smeared bracket is read off from the
k = 0 coefficient; its field-free part is the central term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from math import comb
from typing import Iterable, Mapping

from .errors import MissingKernelEntry, NonConstantCentralCandidate
from .jetexpr import FieldSymbol, JetExpr, SmearSymbol, partial, render_expr
from .varcalc import euler, reduce_mod_dx


def _as_expr(obj) -> JetExpr:
    return obj.expr if hasattr(obj, "expr") else obj


def _x_jet_orders(expr: JetExpr, name: str, fermionic: bool):
    orders = set()
    for key in expr.terms:
        _, _, expf, bjets, fatoms = key
        if fermionic:
            for kind, nm, ax, at in fatoms:
                if kind == "field" and nm == name:
                    if at:
                        raise ValueError("equal-time bracket requires x-jets only")
                    orders.add(ax)
        else:
            for (nm, ax, at), _ in bjets:
                if nm == name:
                    if at:
                        raise ValueError("equal-time bracket requires x-jets only")
                    orders.add(ax)
            for nm, _ in expf:
                if nm == name:
                    orders.add(0)
    return orders


class BracketKernel:
    """The equal-time bracket table {Phi_i(x), Phi_j(y)} = sum_k c^k_ij d_y^k delta.

    Coefficients are parameter polynomials (exact, field independent).
    Entries absent from the table are zero; fields absent from the table are
    unknown to the bracket and raise :class:`MissingKernelEntry` when used.
    """

    def __init__(self, fields: Iterable[FieldSymbol], entries: Mapping | None = None):
        self.fields = list(fields)
        self._by_name = {f.name: f for f in self.fields}
        if len(self._by_name) != len(self.fields):
            raise ValueError("duplicate field names in kernel")
        self.entries: dict = {}
        for (i, j), table in (entries or {}).items():
            for k, coeff in table.items():
                self.set_entry(i, j, k, coeff)

    def set_entry(self, i, j, k: int, coeff):
        i = i.name if isinstance(i, FieldSymbol) else i
        j = j.name if isinstance(j, FieldSymbol) else j
        if i not in self._by_name or j not in self._by_name:
            raise MissingKernelEntry(f"kernel entry for unknown field pair ({i}, {j})")
        coeff = JetExpr.const(coeff) if isinstance(coeff, (int, Fraction)) else coeff
        if coeff.field_names() or coeff.smear_names():
            raise ValueError("kernel coefficients must be parameter polynomials")
        if k < 0:
            raise ValueError("kernel derivative order must be non-negative")
        if coeff:
            self.entries.setdefault((i, j), {})[k] = coeff

    def field(self, name: str) -> FieldSymbol:
        try:
            return self._by_name[name]
        except KeyError:
            raise MissingKernelEntry(f"field {name} not covered by the kernel") from None

    def pair(self, i: str, j: str) -> dict:
        return self.entries.get((i, j), {})

    def antisymmetry_violations(self) -> list[str]:
        """Graded antisymmetry: c^k_ji = -(-1)^(|i||j|) (-1)^k c^k_ij."""
        out = []
        pairs = {(i, j) for (i, j) in self.entries} | {(j, i) for (i, j) in self.entries}
        for i, j in sorted(pairs):
            fi, fj = self.field(i), self.field(j)
            sign_stat = -1 if (fi.is_fermionic and fj.is_fermionic) else 1
            tij, tji = self.pair(i, j), self.pair(j, i)
            for k in sorted(set(tij) | set(tji)):
                lhs = tji.get(k, JetExpr())
                rhs = tij.get(k, JetExpr()) * (-sign_stat) * ((-1) ** k)
                if lhs != rhs:
                    out.append(
                        f"kernel antisymmetry violated at ({i},{j}) k={k}: "
                        f"{render_expr(lhs)} vs required {render_expr(rhs)}"
                    )
        return out

    def scaled(self, factor) -> "BracketKernel":
        factor = JetExpr.const(factor) if isinstance(factor, (int, Fraction)) else factor
        out = BracketKernel(self.fields)
        for (i, j), table in self.entries.items():
            for k, coeff in table.items():
                out.set_entry(i, j, k, coeff * factor)
        return out

    def to_json(self):
        out = []
        for (i, j) in sorted(self.entries):
            for k in sorted(self.entries[(i, j)]):
                out.append({"i": i, "j": j, "k": k, "coeff": render_expr(self.entries[(i, j)][k])})
        return out


@dataclass
class DistExpr:
    """sum_k C_k(y) d_y^k delta(x - y) with JetExpr coefficients at y."""

    coeffs: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = {k: c for k, c in self.coeffs.items() if c}

    def at(self, k: int) -> JetExpr:
        return self.coeffs.get(k, JetExpr())

    def add(self, k: int, coeff: JetExpr):
        s = self.coeffs.get(k, JetExpr()) + coeff
        if s:
            self.coeffs[k] = s
        else:
            self.coeffs.pop(k, None)

    def __add__(self, other: "DistExpr") -> "DistExpr":
        out = DistExpr(dict(self.coeffs))
        for k, c in other.coeffs.items():
            out.add(k, c)
        return out

    def __mul__(self, scalar) -> "DistExpr":
        return DistExpr({k: c * scalar for k, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "DistExpr":
        return DistExpr({k: -c for k, c in self.coeffs.items()})

    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, other) -> bool:
        if not isinstance(other, DistExpr):
            return NotImplemented
        return self.coeffs == other.coeffs

    def max_order(self) -> int:
        return max(self.coeffs, default=-1)

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for k in sorted(self.coeffs, reverse=True):
            d = "delta" if k == 0 else (f"dy^{k}(delta)" if k > 1 else "dy(delta)")
            parts.append(f"[{render_expr(self.coeffs[k])}] * {d}")
        return " + ".join(parts)

    def to_json(self):
        return [
            {"k": k, "coeff": render_expr(self.coeffs[k])}
            for k in sorted(self.coeffs, reverse=True)
        ]

    def json_str(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass
class LocalFunctional:
    """A circle integral \\oint dx (smear * density), modulo d_x-exact terms."""

    density: JetExpr
    smear: SmearSymbol | None = None
    name: str = ""

    def smeared_density(self) -> JetExpr:
        if self.smear is None:
            return self.density
        return JetExpr.smear(self.smear) * self.density

    def parity(self) -> str:
        return self.smeared_density().require_homogeneous("functional density")

    def __eq__(self, other) -> bool:
        if not isinstance(other, LocalFunctional):
            return NotImplemented
        return reduce_mod_dx(self.smeared_density() - other.smeared_density()).is_zero()

    def is_zero(self) -> bool:
        return reduce_mod_dx(self.smeared_density()).is_zero()

    def __str__(self) -> str:
        body = render_expr(self.density)
        if self.smear is not None:
            body = f"{self.smear.name} * ({body})"
        return f"oint[{body}]"


@dataclass
class CentralPart:
    """Field-independent part of a smeared bracket: \\oint of smears * parameters."""

    density: JetExpr

    def __post_init__(self):
        if not self.density.is_field_free():
            raise ValueError("central part must be field independent")

    def is_zero(self) -> bool:
        return reduce_mod_dx(self.density).is_zero()

    def constant_value(self, circumference: JetExpr) -> JetExpr | None:
        """For smear-free central densities, the exact value of the integral."""
        if self.density.smear_names():
            return None
        return self.density * circumference

    def __str__(self) -> str:
        return f"oint[{render_expr(self.density)}]"


def density_bracket(a, b, kernel: BracketKernel) -> DistExpr:
    """Equal-time bracket {A(x), B(y)} of two densities as a DistExpr."""
    a = _as_expr(a)
    b = _as_expr(b)
    a.require_homogeneous("first bracket density")
    b.require_homogeneous("second bracket density")
    for name in a.field_names() | b.field_names():
        kernel.field(name)

    out = DistExpr()
    for fi in kernel.fields:
        a_orders = _x_jet_orders(a, fi.name, fi.is_fermionic)
        if not a_orders:
            continue
        for fj in kernel.fields:
            table = kernel.pair(fi.name, fj.name)
            if not table:
                continue
            b_orders = _x_jet_orders(b, fj.name, fj.is_fermionic)
            if not b_orders:
                continue
            for ax in a_orders:
                left = partial(a, fi, ax, 0, side="right")
                if left.is_zero():
                    continue
                for bx in b_orders:
                    right = partial(b, fj, bx, 0, side="left")
                    if right.is_zero():
                        continue
                    for k, coeff in table.items():
                        m = ax + bx + k
                        sign = -1 if ax % 2 else 1
                        scale = coeff * sign
                        for r in range(m + 1):
                            c = left.dx(r) * right * scale * comb(m, r)
                            if c:
                                out.add(m - r, c)
    return out


def smeared_bracket(f: LocalFunctional, g: LocalFunctional, kernel: BracketKernel):
    """Bracket of two functionals: (functional part, central part).

    The smearing symbols of the two slots must differ (when present); the
    result of integrating the density bracket against them keeps only the
    k = 0 transport coefficient, split into its field-dependent part (a
    local functional) and its field-free central part.
    """
    if f.smear is not None and g.smear is not None and f.smear.name == g.smear.name:
        raise ValueError("smeared_bracket needs distinct smearing symbols")
    dist = density_bracket(f.smeared_density(), g.smeared_density(), kernel)
    c0 = dist.at(0)
    return (
        LocalFunctional(c0.field_dependent_part()),
        CentralPart(c0.field_free_part()),
    )


def generator_action(f: LocalFunctional, probe: FieldSymbol, kernel: BracketKernel) -> JetExpr:
    """{Q[eps], Phi(y)} for a point probe Phi: the k = 0 transport coefficient."""
    dist = density_bracket(f.smeared_density(), JetExpr.field(probe), kernel)
    return dist.at(0)


def contraction_bracket(f: LocalFunctional, g: LocalFunctional, kernel: BracketKernel) -> JetExpr:
    """Independent route to the smeared bracket via functional derivatives.

    Returns the density sum_ijk c^k_ij D^k(dR F/d Phi_i) (dL G/d Phi_j) at y,
    equal to the density of smeared_bracket modulo total x-derivatives.
    """
    fa = f.smeared_density()
    gb = g.smeared_density()
    out = JetExpr()
    for fi in kernel.fields:
        dlf = euler(fa, fi, variables="x", side="right")
        if dlf.is_zero():
            continue
        for fj in kernel.fields:
            table = kernel.pair(fi.name, fj.name)
            if not table:
                continue
            drg = euler(gb, fj, variables="x", side="left")
            if drg.is_zero():
                continue
            for k, coeff in table.items():
                out = out + dlf.dx(k) * drg * coeff
    return out


def central_coeff(dist: DistExpr) -> JetExpr:
    """Field-independent coefficient of d_y^3 delta in a density bracket."""
    c3 = dist.at(3)
    bad = c3.field_dependent_part()
    if bad:
        raise NonConstantCentralCandidate(
            f"delta''' coefficient depends on the fields: {render_expr(bad)}"
        )
    return c3


def central_charge(dist: DistExpr) -> JetExpr:
    """Central charge c = 12 * (coefficient of d_y^3 delta)."""
    return central_coeff(dist) * 12


@dataclass
class JacobiResult:
    densities: tuple
    ok: bool
    residual_density: JetExpr
    residual_central: JetExpr

    def __str__(self):
        status = "pass" if self.ok else "FAIL"
        return f"jacobi {status}: ({', '.join(render_expr(_as_expr(d)) for d in self.densities)})"


_JACOBI_SMEARS = (SmearSymbol("jc_f"), SmearSymbol("jc_g"), SmearSymbol("jc_h"))


def check_jacobi(kernel: BracketKernel, probes) -> list[JacobiResult]:
    """Verify the graded Jacobi identity on density triples.

    Each triple (A, B, C) is smeared with fresh even test functions and the
    combination (-1)^(|A||C|) {A, {B, C}} + cyclic is required to vanish
    exactly (functional part modulo d_x, central part modulo d_x).
    """
    results = []
    for triple in probes:
        a, b, c = (_as_expr(d) for d in triple)
        for e in (a, b, c):
            e.require_homogeneous("jacobi probe")
            if set(e.smear_names()) & {s.name for s in _JACOBI_SMEARS}:
                raise ValueError("probe uses a reserved smearing symbol")
        funcs = [
            LocalFunctional(a, _JACOBI_SMEARS[0]),
            LocalFunctional(b, _JACOBI_SMEARS[1]),
            LocalFunctional(c, _JACOBI_SMEARS[2]),
        ]
        par = [1 if fcn.parity() == "odd" else 0 for fcn in funcs]
        total_density = JetExpr()
        total_central = JetExpr()
        for i in range(3):
            fi, gj, hk = funcs[i], funcs[(i + 1) % 3], funcs[(i + 2) % 3]
            inner_func, inner_central = smeared_bracket(gj, hk, kernel)
            # centrals have no field content: {X, central} = 0 structurally
            outer_func, outer_central = smeared_bracket(fi, inner_func, kernel)
            sign = -1 if (par[i] * par[(i + 2) % 3]) % 2 else 1
            total_density = total_density + sign * outer_func.density
            total_central = total_central + sign * outer_central.density
        rd = reduce_mod_dx(total_density)
        rc = reduce_mod_dx(total_central)
        results.append(JacobiResult(tuple(triple), rd.is_zero() and rc.is_zero(), rd, rc))
    return results
