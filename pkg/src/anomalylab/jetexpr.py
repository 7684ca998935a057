"""Exact symbolic expressions on the jet space of a 1+1 dimensional field theory.

A :class:`JetExpr` is a finite sum of terms

    rational * parameter monomial * smear monomial * exp(sum k_i * field_i)
             * monomial in jet variables d_x^a d_t^b Phi_i ,

held in a unique normal form with exact :class:`fractions.Fraction`
coefficients.  Jet variables of bosonic fields and even smearing symbols
commute; jet variables of fermionic fields and odd smearing symbols
anticommute among themselves (Grassmann grading), and a squared odd variable
is zero.  Exponential factors are restricted to rational linear combinations
of *undifferentiated bosonic* fields, which keeps differentiation and
bracket operations closed.

Conventions fixed here and used by every other module:

* the explicit coordinates x and t never appear; all coordinate dependence
  is carried by smearing symbols, which are closed under the total
  derivatives d_x and d_t;
* light-cone derivatives are d_pm = (d_x +- d_t) / 2;
* fermionic partial derivatives are *left* derivatives (the right variants
  exist as internal helpers for the bracket engine).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import (
    CyclicRule,
    GrassmannExponent,
    MixedParity,
    ParityMismatch,
)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*\Z")

BOSON = "boson"
FERMION = "fermion"

_SUBST_SWEEP_LIMIT = 100


def _check_ident(name: str) -> str:
    if not _IDENT.match(name):
        raise ValueError(f"not a valid identifier: {name!r}")
    return name


@dataclass(frozen=True)
class FieldSymbol:
    """A dynamical field, bosonic or fermionic."""

    name: str
    statistics: str = BOSON

    def __post_init__(self):
        _check_ident(self.name)
        if self.statistics not in (BOSON, FERMION):
            raise ValueError(f"bad statistics {self.statistics!r}")

    @property
    def is_fermionic(self) -> bool:
        return self.statistics == FERMION


@dataclass(frozen=True)
class Parameter:
    """A commuting constant (coupling, radius, ...).

    ``degree`` records how the parameter scales when all fields are rescaled
    by alpha: the parameter picks up alpha**degree.
    """

    name: str
    degree: int = 0

    def __post_init__(self):
        _check_ident(self.name)


# The circle constant; the spatial circle has circumference 2*PI*R.
PI = Parameter("PI", 0)


@dataclass(frozen=True)
class SmearSymbol:
    """A non-dynamical smearing (test) function.

    Even smears commute with everything; odd smears are Grassmann.  All
    brackets of smears with fields vanish.  Smears are closed under d_x and
    d_t; the derivatives are tracked as independent jet orders.
    """

    name: str
    statistics: str = BOSON

    def __post_init__(self):
        _check_ident(self.name)
        if self.statistics not in (BOSON, FERMION):
            raise ValueError(f"bad statistics {self.statistics!r}")

    @property
    def is_fermionic(self) -> bool:
        return self.statistics == FERMION


# --- term keys -------------------------------------------------------------
#
# A term is keyed by the 5-tuple
#   (params, smears, expf, bjets, fatoms)
# with
#   params : tuple[(name, int exponent)]            sorted, exponent != 0
#   smears : tuple[((name, ax, at), exponent)]      even smear jets, exp > 0
#   expf   : tuple[(field name, Fraction)]          exponential factor
#   bjets  : tuple[((name, ax, at), exponent)]      bosonic field jets
#   fatoms : tuple[(kind, name, ax, at)]            odd atoms, strictly sorted
# where kind is "field" or "smear".  The coefficient of the monomial with the
# empty key is the constant part.

_EMPTY = ((), (), (), (), ())


def _merge_powmaps(a, b):
    out = dict(a)
    for k, n in b:
        m = out.get(k, 0) + n
        if m:
            out[k] = m
        else:
            out.pop(k, None)
    return tuple(sorted(out.items()))


def _merge_expf(a, b):
    out = dict(a)
    for k, q in b:
        m = out.get(k, Fraction(0)) + q
        if m:
            out[k] = m
        else:
            out.pop(k, None)
    return tuple(sorted(out.items()))


def _merge_odd(a, b):
    """Concatenate two strictly sorted odd tuples; return (sign, merged) or None."""
    if not a:
        return 1, b
    if not b:
        return 1, a
    merged = []
    sign = 1
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            return None
        if a[i] < b[j]:
            merged.append(a[i])
            i += 1
        else:
            # b[j] jumps over the remaining len(a) - i elements of a
            if (len(a) - i) % 2:
                sign = -sign
            merged.append(b[j])
            j += 1
    merged.extend(a[i:])
    merged.extend(b[j:])
    return sign, tuple(merged)


def _mul_keys(k1, k2):
    """Product of two term keys; returns (sign, key) or None if it vanishes."""
    odd = _merge_odd(k1[4], k2[4])
    if odd is None:
        return None
    sign, fatoms = odd
    return sign, (
        _merge_powmaps(k1[0], k2[0]),
        _merge_powmaps(k1[1], k2[1]),
        _merge_expf(k1[2], k2[2]),
        _merge_powmaps(k1[3], k2[3]),
        fatoms,
    )


class JetExpr:
    """Immutable normal-form expression; see the module docstring."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping | None = None):
        t = {}
        if terms:
            for k, c in terms.items():
                c = Fraction(c)
                if c:
                    t[k] = c
        object.__setattr__(self, "_terms", t)

    # -- constructors -------------------------------------------------

    @classmethod
    def const(cls, value) -> "JetExpr":
        value = Fraction(value)
        return cls({_EMPTY: value}) if value else cls()

    @classmethod
    def param(cls, p: Parameter, power: int = 1) -> "JetExpr":
        if power == 0:
            return cls.const(1)
        return cls({(((p.name, power),), (), (), (), ()): Fraction(1)})

    @classmethod
    def field(cls, f: FieldSymbol, dx: int = 0, dt: int = 0) -> "JetExpr":
        if dx < 0 or dt < 0:
            raise ValueError("negative derivative order")
        if f.is_fermionic:
            key = ((), (), (), (), (("field", f.name, dx, dt),))
        else:
            key = ((), (), (), (((f.name, dx, dt), 1),), ())
        return cls({key: Fraction(1)})

    @classmethod
    def smear(cls, s: SmearSymbol, dx: int = 0, dt: int = 0) -> "JetExpr":
        if dx < 0 or dt < 0:
            raise ValueError("negative derivative order")
        if s.is_fermionic:
            key = ((), (), (), (), (("smear", s.name, dx, dt),))
        else:
            key = ((), (((s.name, dx, dt), 1),), (), (), ())
        return cls({key: Fraction(1)})

    @classmethod
    def exponential(cls, exponent: Iterable[tuple[FieldSymbol, Fraction]]) -> "JetExpr":
        """exp(sum q_i * field_i) for undifferentiated bosonic fields."""
        acc = {}
        for f, q in exponent:
            if f.is_fermionic:
                raise GrassmannExponent(f"fermionic field {f.name} in exponential")
            q = Fraction(q)
            if q:
                acc[f.name] = acc.get(f.name, Fraction(0)) + q
        expf = tuple(sorted((n, q) for n, q in acc.items() if q))
        return cls({((), (), expf, (), ()): Fraction(1)})

    # -- basic protocol -------------------------------------------------

    @property
    def terms(self):
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, JetExpr):
            return self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self == JetExpr.const(other)
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __add__(self, other) -> "JetExpr":
        if isinstance(other, (int, Fraction)):
            other = JetExpr.const(other)
        if not isinstance(other, JetExpr):
            return NotImplemented
        out = dict(self._terms)
        for k, c in other._terms.items():
            s = out.get(k, Fraction(0)) + c
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        e = JetExpr.__new__(JetExpr)
        object.__setattr__(e, "_terms", out)
        return e

    __radd__ = __add__

    def __neg__(self) -> "JetExpr":
        e = JetExpr.__new__(JetExpr)
        object.__setattr__(e, "_terms", {k: -c for k, c in self._terms.items()})
        return e

    def __sub__(self, other) -> "JetExpr":
        if isinstance(other, (int, Fraction)):
            other = JetExpr.const(other)
        if not isinstance(other, JetExpr):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "JetExpr":
        return (-self) + other

    def __mul__(self, other) -> "JetExpr":
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            if not c:
                return JetExpr()
            e = JetExpr.__new__(JetExpr)
            object.__setattr__(e, "_terms", {k: v * c for k, v in self._terms.items()})
            return e
        if not isinstance(other, JetExpr):
            return NotImplemented
        out = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                prod = _mul_keys(k1, k2)
                if prod is None:
                    continue
                sign, key = prod
                c = out.get(key, Fraction(0)) + sign * c1 * c2
                if c:
                    out[key] = c
                else:
                    out.pop(key, None)
        e = JetExpr.__new__(JetExpr)
        object.__setattr__(e, "_terms", out)
        return e

    def __rmul__(self, other) -> "JetExpr":
        if isinstance(other, (int, Fraction)):
            return self * other
        return NotImplemented

    def __pow__(self, n: int) -> "JetExpr":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        out = JetExpr.const(1)
        for _ in range(n):
            out = out * self
        return out

    # -- grading ---------------------------------------------------------

    def parity(self) -> str:
        """'even', 'odd', or 'mixed' ('even' for the zero expression)."""
        seen = set()
        for k in self._terms:
            seen.add(len(k[4]) % 2)
            if len(seen) > 1:
                return "mixed"
        if not seen:
            return "even"
        return "odd" if seen.pop() else "even"

    def require_homogeneous(self, what: str = "expression") -> str:
        p = self.parity()
        if p == "mixed":
            raise MixedParity(f"{what} mixes bosonic and fermionic terms")
        return p

    # -- inspection -------------------------------------------------------

    def field_jets(self):
        """All field jet variables, as (name, ax, at, fermionic?)."""
        out = set()
        for k in self._terms:
            for (name, ax, at), _ in k[3]:
                out.add((name, ax, at, False))
            for kind, name, ax, at in k[4]:
                if kind == "field":
                    out.add((name, ax, at, True))
        return out

    def field_names(self):
        out = set()
        for k in self._terms:
            for (name, _, _), _ in k[3]:
                out.add(name)
            for fname, _ in k[2]:
                out.add(fname)
            for kind, name, _, _ in k[4]:
                if kind == "field":
                    out.add(name)
        return out

    def smear_names(self):
        out = set()
        for k in self._terms:
            for (name, _, _), _ in k[1]:
                out.add(name)
            for kind, name, _, _ in k[4]:
                if kind == "smear":
                    out.add(name)
        return out

    def param_names(self):
        out = set()
        for k in self._terms:
            for name, _ in k[0]:
                out.add(name)
        return out

    def max_dt_order(self) -> int:
        m = 0
        for k in self._terms:
            for (_, _, at), _ in list(k[1]) + list(k[3]):
                m = max(m, at)
            for _, _, _, at in k[4]:
                m = max(m, at)
        return m

    def is_field_free(self) -> bool:
        """True when no term contains a field jet or exponential factor."""
        for k in self._terms:
            if k[2] or k[3]:
                return False
            if any(kind == "field" for kind, *_ in k[4]):
                return False
        return True

    def field_free_part(self) -> "JetExpr":
        out = {}
        for k, c in self._terms.items():
            if not k[2] and not k[3] and not any(kind == "field" for kind, *_ in k[4]):
                out[k] = c
        return JetExpr(out)

    def field_dependent_part(self) -> "JetExpr":
        return self - self.field_free_part()

    def constant_part(self) -> Fraction:
        return self._terms.get(_EMPTY, Fraction(0))

    # -- calculus ---------------------------------------------------------

    def derive(self, direction: str) -> "JetExpr":
        """Total derivative d_x or d_t; an even derivation (graded Leibniz)."""
        if direction not in ("x", "t"):
            raise ValueError("direction must be 'x' or 't'")
        dx, dt = (1, 0) if direction == "x" else (0, 1)
        out = JetExpr()
        for key, coeff in self._terms.items():
            params, smears, expf, bjets, fatoms = key
            base = JetExpr({key: coeff})
            # even smear factors
            for (sk, n) in smears:
                lowered = _powmap_dec(smears, sk)
                bumped = JetExpr(
                    {(params, (), (), (), ()): coeff * n}
                ) * JetExpr({((), lowered, expf, bjets, fatoms): Fraction(1)})
                jet = JetExpr({((), (((sk[0], sk[1] + dx, sk[2] + dt), 1),), (), (), ()): Fraction(1)})
                out = out + bumped * jet
            # exponential factor
            for (fname, q) in expf:
                jet = JetExpr({((), (), (), (((fname, dx, dt), 1),), ()): Fraction(1)})
                out = out + base * q * jet
            # bosonic jets
            for (bk, n) in bjets:
                lowered = _powmap_dec(bjets, bk)
                rest = JetExpr({(params, smears, expf, lowered, fatoms): coeff * n})
                jet = JetExpr({((), (), (), (((bk[0], bk[1] + dx, bk[2] + dt), 1),), ()): Fraction(1)})
                out = out + rest * jet
            # odd atoms, replaced in position
            for i, atom in enumerate(fatoms):
                prefix = JetExpr({(params, smears, expf, bjets, fatoms[:i]): coeff})
                datom = JetExpr(
                    {((), (), (), (), ((atom[0], atom[1], atom[2] + dx, atom[3] + dt),)): Fraction(1)}
                )
                suffix = JetExpr({((), (), (), (), fatoms[i + 1:]): Fraction(1)})
                out = out + prefix * datom * suffix
        return out

    def dx(self, n: int = 1) -> "JetExpr":
        e = self
        for _ in range(n):
            e = e.derive("x")
        return e

    def dt(self, n: int = 1) -> "JetExpr":
        e = self
        for _ in range(n):
            e = e.derive("t")
        return e

    def dplus(self) -> "JetExpr":
        return (self.derive("x") + self.derive("t")) * Fraction(1, 2)

    def dminus(self) -> "JetExpr":
        return (self.derive("x") - self.derive("t")) * Fraction(1, 2)

    # -- substitutions ------------------------------------------------------

    def substitute_params(self, values: Mapping[str, Fraction]) -> "JetExpr":
        """Pin parameters to exact rational values."""
        out = JetExpr()
        for key, coeff in self._terms.items():
            params, rest = key[0], key[1:]
            c = coeff
            kept = []
            for name, exp in params:
                if name in values:
                    v = Fraction(values[name])
                    if exp < 0 and v == 0:
                        raise ZeroDivisionError(f"parameter {name} pinned to 0 with negative power")
                    c *= v ** exp
                else:
                    kept.append((name, exp))
            if c:
                out = out + JetExpr({(tuple(kept),) + rest: c})
        return out

    def substitute_smear_chirality(self, signs: Mapping[str, int]) -> "JetExpr":
        """Impose d_t s = sign * d_x s on the listed smear symbols.

        Every smear jet (s, a, b) with b > 0 becomes sign**b * (s, a+b, 0).
        """
        out = JetExpr()
        for key, coeff in self._terms.items():
            params, smears, expf, bjets, fatoms = key
            c = coeff
            newsmears = []
            for (name, ax, at), n in smears:
                if name in signs and at:
                    c *= Fraction(signs[name]) ** (at * n)
                    newsmears.append(((name, ax + at, 0), n))
                else:
                    newsmears.append(((name, ax, at), n))
            smears2 = _powmap_renorm(newsmears)
            if smears2 is None:
                continue
            term = JetExpr({(params, smears2, expf, bjets, ()): c})
            dead = False
            for atom in fatoms:
                kind, name, ax, at = atom
                if kind == "smear" and name in signs and at:
                    term = term * Fraction(signs[name]) ** at
                    atom = (kind, name, ax + at, 0)
                term = term * JetExpr({((), (), (), (), (atom,)): Fraction(1)})
                if term.is_zero():
                    dead = True
                    break
            if not dead:
                out = out + term
        return out

    def substitute(self, rules: Mapping) -> "JetExpr":
        """Eliminate time derivatives of fields via evolution rules.

        ``rules`` maps a field (or ``(field, 0, b0)`` jet) to the expression
        for its b0-th time derivative; b0 defaults to 1.  All induced
        derivatives are rewritten automatically.  Raises ParityMismatch if a
        rule changes parity and CyclicRule if rewriting does not terminate.
        """
        table = {}
        for lhs, rhs in rules.items():
            if isinstance(lhs, FieldSymbol):
                fld, ax, at = lhs, 0, 1
            else:
                fld, ax, at = lhs
            if ax != 0 or at < 1:
                raise ValueError("rules must target pure time-derivative jets d_t^b Phi")
            want = "odd" if fld.is_fermionic else "even"
            got = rhs.require_homogeneous(f"rule for {fld.name}")
            if rhs and got != want:
                raise ParityMismatch(f"rule for {fld.name} has parity {got}, field is {want}")
            table[fld.name] = (fld.is_fermionic, at, rhs)
        if not table:
            return self

        expr = self
        for _ in range(_SUBST_SWEEP_LIMIT):
            expr2 = _subst_sweep(expr, table)
            if expr2 is None:
                return expr
            expr = expr2
        raise CyclicRule("substitution rules did not terminate")

    def rescale_fields(self, factor: "JetExpr") -> "JetExpr":
        """Multiply every field jet by ``factor`` (a parameter monomial).

        Exponential factors exp(q*phi) are not supported here; rescale them
        by pinning the scale to a rational first.
        """
        out = JetExpr()
        for key, coeff in self._terms.items():
            params, smears, expf, bjets, fatoms = key
            if expf:
                raise ValueError("cannot symbolically rescale exponential factors")
            degree = sum(n for _, n in bjets) + sum(1 for kind, *_ in fatoms if kind == "field")
            out = out + JetExpr({key: coeff}) * factor ** degree
        return out

    # -- rendering ----------------------------------------------------------

    def __str__(self) -> str:
        return render_expr(self)

    def __repr__(self) -> str:
        return f"JetExpr({render_expr(self)})"


def _powmap_dec(powmap, key):
    out = []
    for k, n in powmap:
        if k == key:
            if n > 1:
                out.append((k, n - 1))
        else:
            out.append((k, n))
    return tuple(out)


def _powmap_renorm(items):
    acc = {}
    for k, n in items:
        acc[k] = acc.get(k, 0) + n
    return tuple(sorted((k, n) for k, n in acc.items() if n))


def _subst_sweep(expr: JetExpr, table) -> JetExpr | None:
    """Rewrite one offending jet occurrence per term; None when clean."""
    out = JetExpr()
    changed = False
    for key, coeff in expr._terms.items():
        params, smears, expf, bjets, fatoms = key
        hit = None
        for (name, ax, at), n in bjets:
            if name in table and at >= table[name][1]:
                hit = ("b", (name, ax, at))
                break
        if hit is None:
            for i, (kind, name, ax, at) in enumerate(fatoms):
                if kind == "field" and name in table and at >= table[name][1]:
                    hit = ("f", i)
                    break
        if hit is None:
            out = out + JetExpr({key: coeff})
            continue
        changed = True
        if hit[0] == "b":
            name, ax, at = hit[1]
            _, b0, rhs = table[name]
            value = rhs.dt(at - b0).dx(ax)
            lowered = _powmap_dec(bjets, (name, ax, at))
            rest = JetExpr({(params, smears, expf, lowered, fatoms): coeff})
            out = out + rest * value
        else:
            i = hit[1]
            kind, name, ax, at = fatoms[i]
            _, b0, rhs = table[name]
            value = rhs.dt(at - b0).dx(ax)
            prefix = JetExpr({(params, smears, expf, bjets, fatoms[:i]): coeff})
            suffix = JetExpr({((), (), (), (), fatoms[i + 1:]): Fraction(1)})
            out = out + prefix * value * suffix
    return out if changed else None


# --- partial derivatives ----------------------------------------------------


def _jet_of(symbol, dx, dt):
    if isinstance(symbol, FieldSymbol):
        return ("field", symbol.name, dx, dt, symbol.is_fermionic)
    if isinstance(symbol, SmearSymbol):
        return ("smear", symbol.name, dx, dt, symbol.is_fermionic)
    raise TypeError(f"not a field or smear: {symbol!r}")


def partial(expr: JetExpr, symbol, dx: int = 0, dt: int = 0, side: str = "left") -> JetExpr:
    """Partial derivative with respect to one jet variable.

    For odd variables ``side`` selects the left or right derivative; they
    differ by the sign (-1)**(len-1) of the position count.  For bosonic
    jets, undifferentiated fields also couple to exponential factors:
    d/dphi exp(q*phi) = q exp(q*phi).
    """
    kind, name, ax, at, fermionic = _jet_of(symbol, dx, dt)
    out = JetExpr()
    for key, coeff in expr._terms.items():
        params, smears, expf, bjets, fatoms = key
        if fermionic:
            atom = (kind, name, ax, at)
            if atom in fatoms:
                i = fatoms.index(atom)
                pos = i if side == "left" else len(fatoms) - 1 - i
                sign = -1 if pos % 2 else 1
                newf = fatoms[:i] + fatoms[i + 1:]
                out = out + JetExpr({(params, smears, expf, bjets, newf): coeff * sign})
        else:
            if kind == "field":
                n = dict(bjets).get((name, ax, at), 0)
                if n:
                    lowered = _powmap_dec(bjets, (name, ax, at))
                    out = out + JetExpr({(params, smears, expf, lowered, fatoms): coeff * n})
                if ax == 0 and at == 0:
                    q = dict(expf).get(name)
                    if q:
                        out = out + JetExpr({key: coeff * q})
            else:
                n = dict(smears).get((name, ax, at), 0)
                if n:
                    lowered = _powmap_dec(smears, (name, ax, at))
                    out = out + JetExpr({(params, lowered, expf, bjets, fatoms): coeff * n})
    return out


def normal_form(expr: JetExpr) -> JetExpr:
    """Verify parity homogeneity and return the (already canonical) form.

    Arithmetic on JetExpr keeps every intermediate result in normal form;
    this entry point is where parity mixing is rejected.
    """
    expr.require_homogeneous()
    return expr


def variation(expr: JetExpr, rules: Mapping[str, JetExpr], fermionic: Mapping[str, bool]) -> JetExpr:
    """First variation delta(expr) for delta(Phi) given on base fields.

    The variation is prolonged to all jets, delta(d_x^a d_t^b Phi) =
    d_x^a d_t^b delta(Phi), and acts as an even derivation (delta(Phi) must
    carry the parity of Phi).  Fields without a rule are held fixed.
    """
    dcache: dict[tuple[str, int, int], JetExpr] = {}

    def dvalue(name, ax, at):
        k = (name, ax, at)
        if k not in dcache:
            dcache[k] = rules[name].dx(ax).dt(at)
        return dcache[k]

    out = JetExpr()
    for key, coeff in expr._terms.items():
        params, smears, expf, bjets, fatoms = key
        for (name, ax, at), n in bjets:
            if name not in rules:
                continue
            lowered = _powmap_dec(bjets, (name, ax, at))
            rest = JetExpr({(params, smears, expf, lowered, fatoms): coeff * n})
            out = out + rest * dvalue(name, ax, at)
        for fname, q in expf:
            if fname not in rules:
                continue
            out = out + JetExpr({key: coeff * q}) * dvalue(fname, 0, 0)
        for i, (kind, name, ax, at) in enumerate(fatoms):
            if kind != "field" or name not in rules:
                continue
            prefix = JetExpr({(params, smears, expf, bjets, fatoms[:i]): coeff})
            suffix = JetExpr({((), (), (), (), fatoms[i + 1:]): Fraction(1)})
            out = out + prefix * dvalue(name, ax, at) * suffix
    return out


# --- rendering ---------------------------------------------------------------


def _render_jet(name: str, ax: int, at: int) -> str:
    s = name
    if at:
        s = f"dt({s})" if at == 1 else f"dt^{at}({s})"
    if ax:
        s = f"dx({s})" if ax == 1 else f"dx^{ax}({s})"
    return s


def _render_factor(base: str, exp) -> str:
    if exp == 1:
        return base
    return f"{base}^{exp}"


def _render_term(key, coeff: Fraction) -> tuple[int, str]:
    params, smears, expf, bjets, fatoms = key
    factors = []
    for name, exp in params:
        factors.append(_render_factor(name, exp))
    for (name, ax, at), exp in smears:
        factors.append(_render_factor(_render_jet(name, ax, at), exp))
    if expf:
        inner = []
        for fname, q in expf:
            mag = abs(q)
            piece = fname if mag == 1 else f"{mag}*{fname}"
            inner.append(("- " if q < 0 else "+ ") + piece)
        joined = " ".join(inner)
        body = joined[2:] if joined.startswith("+ ") else "-" + joined[2:]
        factors.append(f"exp({body})")
    for (name, ax, at), exp in bjets:
        factors.append(_render_factor(_render_jet(name, ax, at), exp))
    for kind, name, ax, at in fatoms:
        factors.append(_render_jet(name, ax, at))
    sign = -1 if coeff < 0 else 1
    mag = abs(coeff)
    if not factors:
        return sign, str(mag)
    if mag != 1:
        factors.insert(0, str(mag))
    return sign, "*".join(factors)


def term_sort_key(key):
    params, smears, expf, bjets, fatoms = key
    weight = sum((ax + at) * n for (name, ax, at), n in bjets)
    weight += sum(ax + at for kind, name, ax, at in fatoms if kind == "field")
    degree = sum(n for _, n in bjets) + len(fatoms)
    return (-weight, -degree, bjets, fatoms, expf, smears, params)


def render_expr(expr: JetExpr) -> str:
    if expr.is_zero():
        return "0"
    parts = []
    for key in sorted(expr._terms, key=term_sort_key):
        sign, body = _render_term(key, expr._terms[key])
        if not parts:
            parts.append(body if sign > 0 else f"-{body}")
        else:
            parts.append(("+ " if sign > 0 else "- ") + body)
    return " ".join(parts)
