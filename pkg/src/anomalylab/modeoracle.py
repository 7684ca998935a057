"""Truncated Fourier-mode oracle for cross-validating the symbolic brackets.

Fields on the circle of circumference ell = 2*pi*R are expanded in modes
e_n(x) = exp(i n x / R), |n| <= N.  Charges become polynomials in the mode
variables with exact coefficients in the ring Q(i)[ell, 1/ell] (R is pinned
to a rational; the circumference ell stays symbolic so results like
{G, G} = 2*ell = 4*pi*R are exact).  The kernel table induces the mode
pairing

    {Phi_i[m1], Phi_j[m2]} = (1/ell) * sum_k c^k_ij (i m2 / R)^k  if m1+m2=0,

and brackets of mode polynomials contract right-derivatives against
left-derivatives exactly as the symbolic engine does.

Truncation discipline: mode_charge is exact; a bracket of truncated charges
agrees with the projection of the untruncated bracket on every monomial
whose modes stay below N - max(|n|, |m|, |n+m|).  cross_validate therefore
drops monomials beyond that safe band before comparing with the symbolic
prediction; enlarging N never changes results already inside the band.

Bosonic sectors are additionally spot-checked numerically at random phase
space points (complex modes with the reality constraint); the fermionic
sector is exact exterior algebra throughout.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from .errors import CutoffExceeded, NonPolynomialDensity
from .jetexpr import JetExpr, PI
from .noether import _pin, _pinned_kernel
from .pbracket import density_bracket


class LC:
    """Laurent polynomial in ell over the Gaussian rationals."""

    __slots__ = ("c",)

    def __init__(self, c=None):
        self.c = {}
        if c:
            for p, (re, im) in c.items():
                if re or im:
                    self.c[p] = (Fraction(re), Fraction(im))

    @classmethod
    def real(cls, value, ellpow: int = 0) -> "LC":
        return cls({ellpow: (Fraction(value), Fraction(0))})

    @classmethod
    def gauss(cls, re, im, ellpow: int = 0) -> "LC":
        return cls({ellpow: (Fraction(re), Fraction(im))})

    def is_zero(self) -> bool:
        return not self.c

    def __bool__(self):
        return bool(self.c)

    def __add__(self, other: "LC") -> "LC":
        out = dict(self.c)
        for p, (re, im) in other.c.items():
            r0, i0 = out.get(p, (Fraction(0), Fraction(0)))
            r, i = r0 + re, i0 + im
            if r or i:
                out[p] = (r, i)
            else:
                out.pop(p, None)
        z = LC.__new__(LC)
        z.c = out
        return z

    def __neg__(self) -> "LC":
        z = LC.__new__(LC)
        z.c = {p: (-re, -im) for p, (re, im) in self.c.items()}
        return z

    def __sub__(self, other: "LC") -> "LC":
        return self + (-other)

    def __mul__(self, other: "LC") -> "LC":
        out = {}
        for p1, (r1, i1) in self.c.items():
            for p2, (r2, i2) in other.c.items():
                p = p1 + p2
                r = r1 * r2 - i1 * i2
                i = r1 * i2 + i1 * r2
                r0, i0 = out.get(p, (Fraction(0), Fraction(0)))
                r, i = r0 + r, i0 + i
                if r or i:
                    out[p] = (r, i)
                else:
                    out.pop(p, None)
        z = LC.__new__(LC)
        z.c = out
        return z

    def scale(self, q) -> "LC":
        q = Fraction(q)
        z = LC.__new__(LC)
        z.c = {p: (re * q, im * q) for p, (re, im) in self.c.items()} if q else {}
        return z

    def __eq__(self, other) -> bool:
        return isinstance(other, LC) and self.c == other.c

    def __hash__(self):
        return hash(frozenset(self.c.items()))

    def to_complex(self, ell: float) -> complex:
        return sum(complex(re, im) * ell ** p for p, (re, im) in self.c.items()) or 0j

    def __repr__(self):
        if not self.c:
            return "0"
        parts = []
        for p in sorted(self.c):
            re, im = self.c[p]
            parts.append(f"({re}{'+' if im >= 0 else ''}{im}i)*ell^{p}")
        return " + ".join(parts)


def _ipow(m: int, k: int, rinv: Fraction) -> tuple[Fraction, Fraction]:
    """(i*m/R)^k as a Gaussian rational, rinv = 1/R."""
    re, im = Fraction(1), Fraction(0)
    base = Fraction(m) * rinv
    for _ in range(k):
        re, im = -im * base, re * base
    return re, im


# mode polynomial: dict monomial -> LC; monomial is a tuple of (field, n)
# pairs, sorted (non-decreasing for bosons; strictly increasing for fermions,
# with reordering signs folded into the coefficient).


def _merge_monomial(mono1, mono2, fermionic: bool):
    if not fermionic:
        return 1, tuple(sorted(mono1 + mono2))
    sign = 1
    merged = []
    i = j = 0
    a, b = mono1, mono2
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            return None
        if a[i] < b[j]:
            merged.append(a[i])
            i += 1
        else:
            if (len(a) - i) % 2:
                sign = -sign
            merged.append(b[j])
            j += 1
    merged.extend(a[i:])
    merged.extend(b[j:])
    return sign, tuple(merged)


def poly_add(p, q):
    out = dict(p)
    for mono, c in q.items():
        s = out.get(mono)
        s = c if s is None else s + c
        if s:
            out[mono] = s
        else:
            out.pop(mono, None)
    return out


def poly_scale(p, c: LC):
    out = {}
    for mono, v in p.items():
        s = v * c
        if s:
            out[mono] = s
    return out


def poly_mul(p, q, fermionic: bool):
    out = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            merged = _merge_monomial(m1, m2, fermionic)
            if merged is None:
                continue
            sign, mono = merged
            c = c1 * c2
            if sign < 0:
                c = -c
            s = out.get(mono)
            s = c if s is None else s + c
            if s:
                out[mono] = s
            else:
                out.pop(mono, None)
    return out


def poly_partial(p, var, fermionic: bool, side: str):
    out = {}
    for mono, c in p.items():
        if var not in mono:
            continue
        if fermionic:
            i = mono.index(var)
            pos = i if side == "left" else len(mono) - 1 - i
            cc = -c if pos % 2 else c
            mono2 = mono[:i] + mono[i + 1:]
        else:
            mult = mono.count(var)
            cc = c.scale(mult)
            i = mono.index(var)
            mono2 = mono[:i] + mono[i + 1:]
        s = out.get(mono2)
        s = cc if s is None else s + cc
        if s:
            out[mono2] = s
        else:
            out.pop(mono2, None)
    return out


def poly_drop_high_modes(p, cutoff: int):
    return {mono: c for mono, c in p.items() if all(abs(n) <= cutoff for _, n in mono)}


@dataclass
class ModeTruncation:
    """Fourier truncation of a model's phase space at |n| <= N."""

    model: object
    cutoff: int
    radius: Fraction = Fraction(1)
    param_values: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        stats = {f.is_fermionic for f in self.model.fields}
        if len(stats) > 1:
            raise NonPolynomialDensity("mode oracle supports single-statistics models")
        self.fermionic = stats.pop() if stats else False
        self.rinv = Fraction(1) / Fraction(self.radius)
        pins = dict(self.model.pinned)
        for name, p in self.model.parameters.items():
            if name == self.model.radius.name:
                pins[name] = Fraction(self.radius)
            elif pins.get(name) is None:
                pins[name] = Fraction(self.param_values.get(name, 1))
        pins.update({k: Fraction(v) for k, v in self.param_values.items()})
        self.pins = pins

    def pin(self, expr: JetExpr) -> JetExpr:
        return expr.substitute_params(self.pins)

    def kernel_pairing(self):
        """(i, j) -> list of (k, Fraction c^k_ij) with numeric coefficients."""
        out = {}
        for (i, j), table in self.model.kernel.entries.items():
            entries = []
            for k, coeff in table.items():
                c = coeff.substitute_params(self.pins)
                if c.field_names() or c.smear_names() or c.param_names() - {"PI"}:
                    raise NonPolynomialDensity("kernel coefficients must pin to rationals")
                entries.append((k, c.constant_part()))
            out[(i, j)] = entries
        return out


def mode_charge(trunc: ModeTruncation, density: JetExpr, n: int):
    """\\oint e_n(x) * density(x) dx as an exact mode polynomial.

    Raises NonPolynomialDensity for exponential factors and CutoffExceeded
    when |n| exceeds the truncation.
    """
    if abs(n) > trunc.cutoff:
        raise CutoffExceeded(f"smearing mode {n} beyond cutoff {trunc.cutoff}")
    density = trunc.pin(density)
    out = {}
    rinv = trunc.rinv
    cutoff = trunc.cutoff
    for key, coeff in density.terms.items():
        params, smears, expf, bjets, fatoms = key
        if expf:
            raise NonPolynomialDensity("density contains exponential factors")
        if smears:
            raise ValueError("mode_charge expects an unsmeared density")
        if params and set(dict(params)) - {"PI"}:
            raise ValueError(f"unpinned parameters {dict(params)} in density")
        factors = []
        for (name, ax, at), mult in bjets:
            if at:
                raise ValueError("mode_charge expects x-jets only")
            factors.extend([(name, ax)] * mult)
        for kind, name, ax, at in fatoms:
            if kind == "smear":
                raise ValueError("mode_charge expects an unsmeared density")
            if at:
                raise ValueError("mode_charge expects x-jets only")
            factors.append((name, ax))
        pi_pow = dict(params).get("PI", 0)
        if pi_pow:
            raise ValueError("PI cannot appear in mode densities")
        # convolve: dict (mode sum, ordered monomial) -> LC
        acc = {(0, ()): LC.real(coeff)}
        for fname, ax in factors:
            nxt = {}
            for (msum, mono), c in acc.items():
                for k in range(-cutoff, cutoff + 1):
                    re, im = _ipow(k, ax, rinv)
                    factor_c = c * LC.gauss(re, im)
                    if not factor_c:
                        continue
                    merged = _merge_monomial(mono, ((fname, k),), trunc.fermionic)
                    if merged is None:
                        continue
                    sign, mono2 = merged
                    if sign < 0:
                        factor_c = -factor_c
                    key2 = (msum + k, mono2)
                    s = nxt.get(key2)
                    s = factor_c if s is None else s + factor_c
                    if s:
                        nxt[key2] = s
                    else:
                        nxt.pop(key2, None)
            acc = nxt
        ell = LC.real(1, 1)
        for (msum, mono), c in acc.items():
            if msum + n == 0:
                s = out.get(mono)
                v = c * ell
                s = v if s is None else s + v
                if s:
                    out[mono] = s
                else:
                    out.pop(mono, None)
    return out


def mode_bracket(trunc: ModeTruncation, p, q):
    """{P, Q} via the kernel-induced mode pairing (exact)."""
    pairing = trunc.kernel_pairing()
    fields = {f.name for f in trunc.model.fields}
    vars_p = sorted({v for mono in p for v in mono})
    vars_q = sorted({v for mono in q for v in mono})
    out = {}
    inv_ell = LC.real(1, -1)
    for v1 in vars_p:
        i, m1 = v1
        if i not in fields:
            continue
        dp = poly_partial(p, v1, trunc.fermionic, "right")
        if not dp:
            continue
        for v2 in vars_q:
            j, m2 = v2
            if m1 + m2 != 0:
                continue
            entries = pairing.get((i, j))
            if not entries:
                continue
            dq = poly_partial(q, v2, trunc.fermionic, "left")
            if not dq:
                continue
            w = LC()
            for k, c in entries:
                re, im = _ipow(m2, k, trunc.rinv)
                w = w + LC.gauss(re, im).scale(c)
            w = w * inv_ell
            if not w:
                continue
            prod = poly_mul(dp, dq, trunc.fermionic)
            out = poly_add(out, poly_scale(prod, w))
    return out


def poly_eval(p, values: dict, ell: float) -> complex:
    total = 0j
    for mono, c in p.items():
        v = c.to_complex(ell)
        for var in mono:
            v *= values[var]
        total += v
    return total


def random_point(trunc: ModeTruncation, rng: random.Random, active_cutoff: int) -> dict:
    """Random bosonic phase-space point with the reality constraint; modes
    beyond active_cutoff are zero."""
    values = {}
    for f in trunc.model.fields:
        for k in range(0, trunc.cutoff + 1):
            if k > active_cutoff:
                z = 0j
            elif k == 0:
                z = complex(rng.uniform(-1, 1), 0)
            else:
                z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            values[(f.name, k)] = z
            values[(f.name, -k)] = z.conjugate()
    return values


@dataclass
class OracleReport:
    model: str
    family: str
    cutoff: int
    seed: int
    radius: str
    param_values: dict
    trials: int
    max_rel_dev: float
    fitted_central: dict
    symbolic_central: dict
    exact_matches: int
    ok: bool
    message: str = ""

    def to_json(self):
        return {
            "model": self.model,
            "family": self.family,
            "N": self.cutoff,
            "seed": self.seed,
            "R": self.radius,
            "param_values": {k: str(v) for k, v in sorted(self.param_values.items())},
            "trials": self.trials,
            "max_rel_dev": self.max_rel_dev,
            "fitted_central": self.fitted_central,
            "symbolic_central": self.symbolic_central,
            "exact_matches": self.exact_matches,
            "pass": self.ok,
            "message": self.message,
        }


def _central_prediction(trunc: ModeTruncation, t_density: JetExpr, n: int) -> LC:
    """Symbolic central term of {L_n, L_-n} from the field-free DistExpr parts:
    ell * sum_k C_k (i n / R)^k."""
    kernel = _pinned_kernel_numeric(trunc)
    dist = density_bracket(t_density, t_density, kernel)
    total = LC()
    for k in sorted(dist.coeffs):
        free = trunc.pin(dist.at(k)).field_free_part()
        if not free:
            continue
        c = free.constant_part()
        re, im = _ipow(n, k, trunc.rinv)
        total = total + LC.gauss(re, im, 1).scale(c)
    return total


def _pinned_kernel_numeric(trunc: ModeTruncation):
    from .pbracket import BracketKernel

    kernel = BracketKernel(trunc.model.kernel.fields)
    for (i, j), table in trunc.model.kernel.entries.items():
        for k, coeff in table.items():
            kernel.set_entry(i, j, k, coeff.substitute_params(trunc.pins))
    return kernel


def _self_closure_coefficient(model, trunc: ModeTruncation, fam) -> Fraction:
    """Coefficient w in {Q[f], Q[g]} = w Q[fg'-f'g] (+ central), symbolically."""
    from .errors import NonPolynomialDensity as _NPD
    from .jetexpr import SmearSymbol
    from .noether import match_closure
    from .pbracket import LocalFunctional, smeared_bracket

    pinned_model = model.with_pinned(
        {name: trunc.pins[name] for name in model.parameters if name in trunc.pins}
    )
    s1 = fam.smear
    s2 = SmearSymbol(s1.name + "_b", s1.statistics)
    t = trunc.pin(fam.charge_density)
    func, _cent = smeared_bracket(
        LocalFunctional(t, s1), LocalFunctional(t, s2), _pinned_kernel_numeric(trunc)
    )
    coeffs, residual = match_closure(pinned_model, [fam], func.density, s1, s2)
    if coeffs is None:
        raise _NPD(f"family {fam.name}: self-bracket does not close on its own charge span")
    witt_key = (fam.name, "fg'-f'g")
    extra = {k: v for k, v in coeffs.items() if k != witt_key}
    if extra:
        raise _NPD(f"family {fam.name}: closure involves patterns beyond fg'-f'g: {extra}")
    return coeffs.get(witt_key, Fraction(0))


def cross_validate(
    model,
    family_name: str,
    cutoff: int = 16,
    trials: int = 50,
    seed: int = 0,
    tol: float = 1e-9,
    radius: Fraction = Fraction(1),
    param_values: dict | None = None,
) -> OracleReport:
    """Numerically witness the closure and central term of one family.

    For random |n|, |m| <= cutoff/4 the oracle compares {L_n, L_m} computed
    through the mode pairing with the symbolic prediction

        w * i (m - n)/R * L_{n+m}  +  delta_{n+m,0} * central(n),

    where w is the engine's closure coefficient on the pattern f g' - f' g
    (w = -1, the smeared form of the (n - m) mode algebra) and central(n)
    is read off the field-free part of the symbolic density bracket.
    Fermionic sectors compare exactly; bosonic sectors are also evaluated at
    random points in float arithmetic, reporting the max relative deviation.
    """
    fam = model.family(family_name)
    trunc = ModeTruncation(model, cutoff, Fraction(radius), dict(param_values or {}))
    t_density = trunc.pin(fam.charge_density)
    if any(key[2] for key in t_density.terms):
        raise NonPolynomialDensity(
            f"family {family_name} of {model.name} has a non-polynomial charge density"
        )
    rng = random.Random(seed)
    nmax = max(1, cutoff // 4)
    pairs = [(1, -1), (2, -2), (1, 1), (2, -1)]
    while len(pairs) < max(8, trials):
        pairs.append((rng.randint(-nmax, nmax), rng.randint(-nmax, nmax)))

    # symbolic self-closure coefficient on fg'-f'g: the prediction under test.
    # w = -1 is the smeared form of the (n-m) L_{n+m} mode algebra; w = 0 is
    # a purely central (shift-type) family.
    closure_w = _self_closure_coefficient(model, trunc, fam)
    max_rel = 0.0
    exact_matches = 0
    fitted = {}
    symbolic = {}
    ell_float = float(2 * 3.141592653589793 * radius)
    ok = True
    message = ""

    charges = {}
    pair_cache = {}

    def charge(k):
        if k not in charges:
            charges[k] = mode_charge(trunc, t_density, k)
        return charges[k]

    def pair_data(n, m):
        if (n, m) in pair_cache:
            return pair_cache[(n, m)]
        band = trunc.cutoff - max(abs(n), abs(m), abs(n + m), 1)
        lhs = mode_bracket(trunc, charge(n), charge(m))
        re, im = _ipow(m - n, 1, trunc.rinv)
        factor = LC.gauss(re, im).scale(closure_w)
        rhs = poly_scale(charge(n + m), factor)
        lhs_band = poly_drop_high_modes(lhs, band)
        rhs_band = poly_drop_high_modes(rhs, band)
        central_pred = _central_prediction(trunc, t_density, n) if n + m == 0 else LC()
        diff = poly_add(lhs_band, {mono: -c for mono, c in rhs_band.items()})
        fitted_c = diff.pop((), LC())
        data = (band, lhs_band, rhs_band, central_pred, diff, fitted_c)
        pair_cache[(n, m)] = data
        return data

    done = 0
    for n, m in pairs:
        if done >= trials and (n, m) in pair_cache:
            break
        band, lhs_band, rhs_band, central_pred, diff, fitted_c = pair_data(n, m)
        if band <= 0:
            continue
        if n + m == 0 and str(n) not in fitted:
            fitted[str(n)] = repr(fitted_c)
            symbolic[str(n)] = repr(central_pred)
        if fitted_c != central_pred:
            got = fitted_c.to_complex(ell_float)
            want = central_pred.to_complex(ell_float)
            scale = max(abs(got), abs(want), 1.0)
            if abs(got - want) / scale > tol:
                ok = False
                message = f"central mismatch at (n,m)=({n},{m}): {fitted_c!r} vs {central_pred!r}"
        if trunc.fermionic:
            if diff:
                ok = False
                message = f"exact closure mismatch at (n,m)=({n},{m})"
            else:
                exact_matches += 1
            done += 1
        else:
            point = random_point(trunc, rng, band)
            lv = poly_eval(lhs_band, point, ell_float)
            rv = poly_eval(rhs_band, point, ell_float) + central_pred.to_complex(ell_float)
            scale = max(abs(lv), abs(rv), 1.0)
            rel = abs(lv - rv) / scale
            max_rel = max(max_rel, rel)
            done += 1
            if not diff:
                exact_matches += 1
    if max_rel > tol:
        ok = False
        message = message or f"max relative deviation {max_rel} exceeds {tol}"
    return OracleReport(
        model=model.name,
        family=family_name,
        cutoff=cutoff,
        seed=seed,
        radius=str(Fraction(radius)),
        param_values={k: Fraction(v) for k, v in (param_values or {}).items()},
        trials=done,
        max_rel_dev=max_rel,
        fitted_central=fitted,
        symbolic_central=symbolic,
        exact_matches=exact_matches,
        ok=ok,
        message=message,
    )
