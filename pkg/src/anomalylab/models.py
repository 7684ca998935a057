"""Model registry, validation, and the plain-text model-definition format.

A :class:`Model` bundles a phase space (fields + equal-time bracket kernel),
a Hamiltonian, evolution rules d_t Phi = {H, Phi}, an optional Lagrangian
(two-variable jets, possibly over auxiliary fields related to the phase
space by spatial-derivative aliases), declared symmetry families with their
Noether charge densities, and named stress densities.

Builtins: ``chiral_fermion``, ``free_boson``, ``fj_chiral_boson``,
``liouville``.  The chiral-boson model is stored in the derivative field
u = d_x phi, for which the bracket is local; only derivatives of phi enter
its charges, so nothing is lost (the zero mode of phi is dropped).

The text format is line oriented: sections ``model``, ``[fields]``,
``[parameters]``, ``[radius]``, ``[bracket]``, ``[lagrangian_fields]``,
``[hamiltonian]``, ``[lagrangian]``, ``[eom]``, ``[symmetry <name>]``,
``[density <name>]``; ``#`` starts a comment.  Expressions use ``+ - *``,
``^`` powers, rationals ``p/q``, ``dx^k(...)``, ``dt^k(...)``, and
``exp(q1*field1 + ...)``.  The canonical renderer is bit-stable and
round-trips through the parser.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from .errors import (
    MissingKernelEntry,
    ModelSyntaxError,
    UnknownModel,
    ValidationError,
)
from .jetexpr import (
    BOSON,
    FERMION,
    PI,
    FieldSymbol,
    JetExpr,
    Parameter,
    SmearSymbol,
    render_expr,
)
from .noether import SymmetryFamily, _pin, _pinned_kernel, eliminate_time
from .pbracket import BracketKernel, LocalFunctional, check_jacobi, generator_action
from .varcalc import euler


@dataclass
class Model:
    """A 1+1 dimensional field theory with Hamiltonian and Lagrangian data."""

    name: str
    fields: list
    parameters: dict
    pinned: dict
    radius: Parameter
    kernel: BracketKernel
    hamiltonian: LocalFunctional
    eom: dict
    families: list = dc_field(default_factory=list)
    lagrangian: JetExpr | None = None
    lagrangian_fields: list = dc_field(default_factory=list)
    derivative_aliases: dict = dc_field(default_factory=dict)
    stress: dict = dc_field(default_factory=dict)

    def field(self, name: str) -> FieldSymbol:
        for f in self.fields:
            if f.name == name:
                return f
        for f in self.lagrangian_fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def all_fields(self):
        return list(self.fields) + [
            f for f in self.lagrangian_fields if f.name not in {g.name for g in self.fields}
        ]

    def circumference(self) -> JetExpr:
        return 2 * JetExpr.param(PI) * JetExpr.param(self.radius)

    def family(self, name: str) -> SymmetryFamily:
        for fam in self.families:
            if fam.name == name:
                return fam
        raise KeyError(name)

    def copy(self) -> "Model":
        return Model(
            name=self.name,
            fields=list(self.fields),
            parameters=dict(self.parameters),
            pinned=dict(self.pinned),
            radius=self.radius,
            kernel=self.kernel,
            hamiltonian=self.hamiltonian,
            eom=dict(self.eom),
            families=list(self.families),
            lagrangian=self.lagrangian,
            lagrangian_fields=list(self.lagrangian_fields),
            derivative_aliases=dict(self.derivative_aliases),
            stress=dict(self.stress),
        )

    def with_pinned(self, overrides) -> "Model":
        m = self.copy()
        pinned = dict(m.pinned)
        for name, value in overrides.items():
            if name not in m.parameters:
                raise KeyError(f"model {m.name} has no parameter {name}")
            pinned[name] = None if value is None else Fraction(value)
        m.pinned = pinned
        return m

    def symbol_table(self) -> dict:
        table = {}
        for f in self.all_fields():
            table[f.name] = f
        for p in self.parameters.values():
            table[p.name] = p
        table[PI.name] = PI
        for fam in self.families:
            table[fam.smear.name] = fam.smear
        return table

    def __eq__(self, other) -> bool:
        if not isinstance(other, Model):
            return NotImplemented
        return (
            self.name == other.name
            and self.fields == other.fields
            and self.parameters == other.parameters
            and self.pinned == other.pinned
            and self.radius == other.radius
            and self.kernel.entries == other.kernel.entries
            and [f.name for f in self.kernel.fields] == [f.name for f in other.kernel.fields]
            and self.hamiltonian.density == other.hamiltonian.density
            and self.eom == other.eom
            and self.lagrangian == other.lagrangian
            and self.lagrangian_fields == other.lagrangian_fields
            and self.derivative_aliases == other.derivative_aliases
            and self.stress == other.stress
            and len(self.families) == len(other.families)
            and all(
                a.name == b.name
                and a.smear == b.smear
                and a.chirality == b.chirality
                and a.transforms == b.transforms
                and a.charge_density == b.charge_density
                for a, b in zip(self.families, other.families)
            )
        )


# --- validation ---------------------------------------------------------------


def _apply_aliases(model: Model, expr: JetExpr) -> JetExpr | None:
    """Rewrite jets of aliased Lagrangian fields into phase-space jets.

    The alias ``aux -> (field, order)`` means field = d_x^order(aux); a jet
    d_x^a d_t^b aux with a >= order becomes d_x^(a-order) d_t^b field.
    Returns None when a term cannot be rewritten (insufficient x-order).
    """
    if not model.derivative_aliases:
        return expr
    out = JetExpr()
    for key, coeff in expr.terms.items():
        params, smears, expf, bjets, fatoms = key
        new_b = []
        ok = True
        for (nm, ax, at), n in bjets:
            if nm in model.derivative_aliases:
                target, order = model.derivative_aliases[nm]
                if ax < order:
                    ok = False
                    break
                new_b.append(((target, ax - order, at), n))
            else:
                new_b.append(((nm, ax, at), n))
        if not ok:
            return None
        for fname, _ in expf:
            if fname in model.derivative_aliases:
                return None
        # odd atoms are renamed in place; re-sorting signs are handled by
        # rebuilding the monomial as an ordered product
        term = JetExpr({(params, smears, expf, tuple(sorted(new_b)), ()): coeff})
        for kind, nm, ax, at in fatoms:
            if kind == "field" and nm in model.derivative_aliases:
                target, order = model.derivative_aliases[nm]
                if ax < order:
                    return None
                atom = (kind, target, ax - order, at)
            else:
                atom = (kind, nm, ax, at)
            term = term * JetExpr({((), (), (), (), (atom,)): Fraction(1)})
        out = out + term
    return out


def _jacobi_probes(model: Model):
    probes = []
    quads = []
    for f in model.fields:
        e = JetExpr.field(f)
        if f.is_fermionic:
            quads.append(e * JetExpr.field(f, dx=1))
        else:
            quads.append(e * e)
            quads.append(e * JetExpr.field(f, dx=1))
    if not quads:
        return probes
    probes.append((quads[0], quads[-1], quads[0]))
    if len(quads) >= 3:
        probes.append((quads[0], quads[1], quads[2]))
    h = _pin(model.hamiltonian.density, model.pinned)
    probes.append((h, quads[0], quads[-1]))
    if model.fields[0].is_fermionic:
        probes.append((quads[0], quads[0], JetExpr.field(model.fields[0])))
    return probes


def validate(model: Model) -> list:
    """All structural invariants; returns a list of violations (empty = ok)."""
    violations = []
    names = [f.name for f in model.fields]
    if len(set(names)) != len(names):
        violations.append("duplicate field names")
    if {f.name for f in model.kernel.fields} != set(names):
        violations.append("kernel fields differ from model fields")
    violations.extend(model.kernel.antisymmetry_violations())

    h = model.hamiltonian.density
    if h.parity() not in ("even",):
        violations.append("Hamiltonian density must be parity even")
    if h.max_dt_order():
        violations.append("Hamiltonian density must contain x-jets only")
    if model.lagrangian is not None and model.lagrangian.parity() != "even":
        violations.append("Lagrangian density must be parity even")

    kernel = _pinned_kernel(model)
    h_pinned = _pin(h, model.pinned)

    for f in model.fields:
        rule = model.eom.get(f.name)
        if rule is None:
            violations.append(f"missing evolution rule for {f.name}")
            continue
        if rule.max_dt_order():
            violations.append(f"evolution rule for {f.name} must contain x-jets only")
            continue
        want = "odd" if f.is_fermionic else "even"
        if rule and rule.parity() != want:
            violations.append(f"evolution rule for {f.name} has the wrong parity")
            continue
        flow = generator_action(LocalFunctional(h_pinned), f, kernel)
        if flow != _pin(rule, model.pinned):
            violations.append(
                f"EOMInconsistent: {{H, {f.name}}} = {render_expr(flow)} "
                f"differs from declared d_t {f.name} = {render_expr(rule)}"
            )

    if model.lagrangian is not None:
        lag_fields = model.lagrangian_fields or model.fields
        lagrangian = _pin(model.lagrangian, model.pinned)
        for f in lag_fields:
            image = euler(lagrangian, f, variables="xt")
            mapped = _apply_aliases(model, image)
            if mapped is None:
                violations.append(
                    f"Euler image for {f.name} not expressible in phase-space fields"
                )
                continue
            residual = eliminate_time(model, mapped)
            if residual:
                violations.append(
                    f"Lagrangian EOM for {f.name} disagrees with the Hamiltonian flow: "
                    f"residual {render_expr(residual)}"
                )

    for fam in model.families:
        for fname, rule in fam.transforms.items():
            try:
                fld = model.field(fname)
            except KeyError:
                violations.append(f"family {fam.name}: rule for unknown field {fname}")
                continue
            want = "odd" if fld.is_fermionic else "even"
            got = rule.parity()
            if rule and got != want:
                violations.append(
                    f"family {fam.name}: delta({fname}) has parity {got}, field is {want}"
                )
        if fam.charge_density.max_dt_order():
            violations.append(f"family {fam.name}: charge density must contain x-jets only")

    for probe in _jacobi_probes(model):
        try:
            results = check_jacobi(kernel, [probe])
        except Exception as exc:
            violations.append(f"jacobi probe failed to evaluate: {exc}")
            continue
        for r in results:
            if not r.ok:
                violations.append(f"kernel fails the Jacobi identity on a probe: {r}")
    return violations


# --- builtins -------------------------------------------------------------------


def _boson_family_plus(eps_name, lam: Parameter, phi, pi_):
    eps = SmearSymbol(eps_name)
    dplus_phi = (JetExpr.field(phi, dx=1) + JetExpr.field(phi, dt=1)) * Fraction(1, 2)
    dplus_eps = (JetExpr.smear(eps, dx=1) + JetExpr.smear(eps, dt=1)) * Fraction(1, 2)
    delta_phi = JetExpr.smear(eps) * dplus_phi + JetExpr.param(lam) * dplus_eps
    return eps, delta_phi


def _boson_family_minus(eps_name, lam: Parameter, phi, pi_):
    eps = SmearSymbol(eps_name)
    dminus_phi = (JetExpr.field(phi, dx=1) - JetExpr.field(phi, dt=1)) * Fraction(1, 2)
    dminus_eps = (JetExpr.smear(eps, dx=1) - JetExpr.smear(eps, dt=1)) * Fraction(1, 2)
    delta_phi = JetExpr.smear(eps) * dminus_phi + JetExpr.param(lam) * dminus_eps
    return eps, delta_phi


def _make_chiral_fermion() -> Model:
    psi = FieldSymbol("psi", FERMION)
    radius = Parameter("R", 0)
    kernel = BracketKernel([psi])
    kernel.set_entry("psi", "psi", 0, Fraction(1, 2))
    p = JetExpr.field(psi)
    px = JetExpr.field(psi, dx=1)
    pt = JetExpr.field(psi, dt=1)
    t_density = -(p * px)
    hamiltonian = LocalFunctional(t_density)
    lagrangian = Fraction(1, 2) * (p * px) - Fraction(1, 2) * (p * pt)  # psi d_- psi
    eps = SmearSymbol("eps")
    kappa = SmearSymbol("kappa", FERMION)
    witt = SymmetryFamily(
        name="witt",
        smear=eps,
        transforms={
            "psi": JetExpr.smear(eps) * px + Fraction(1, 2) * JetExpr.smear(eps, dx=1) * p
        },
        charge_density=t_density,
        chirality="plus",
    )
    shift = SymmetryFamily(
        name="shift",
        smear=kappa,
        transforms={"psi": JetExpr.smear(kappa)},
        charge_density=2 * p,
        chirality="plus",
    )
    return Model(
        name="chiral_fermion",
        fields=[psi],
        parameters={"R": radius},
        pinned={},
        radius=radius,
        kernel=kernel,
        hamiltonian=hamiltonian,
        eom={"psi": px},
        families=[witt, shift],
        lagrangian=lagrangian,
        lagrangian_fields=[psi],
        stress={"T": t_density},
    )


def _boson_stress(phi, pi_, lam: Parameter, sign: int) -> JetExpr:
    """Stress density (d_pm phi)^2 - 2 lam d_pm^2 phi in phase-space jets."""
    px = JetExpr.field(phi, dx=1)
    p2 = JetExpr.field(phi, dx=2)
    pim = JetExpr.field(pi_)
    pix = JetExpr.field(pi_, dx=1)
    lamE = JetExpr.param(lam)
    quad = Fraction(1, 4) * (pim ** 2 + px ** 2 + 2 * sign * pim * px)
    linear = lamE * (p2 + sign * pix)
    return sign * quad - sign * linear


def _make_free_boson() -> Model:
    phi = FieldSymbol("phi")
    pi_ = FieldSymbol("pi")
    radius = Parameter("R", 0)
    lam_p = Parameter("lambda_plus", 1)
    lam_m = Parameter("lambda_minus", 1)
    kernel = BracketKernel([phi, pi_])
    kernel.set_entry("pi", "phi", 0, 1)
    kernel.set_entry("phi", "pi", 0, -1)
    px = JetExpr.field(phi, dx=1)
    pim = JetExpr.field(pi_)
    hamiltonian = LocalFunctional(Fraction(1, 2) * pim ** 2 + Fraction(1, 2) * px ** 2)
    lagrangian = Fraction(1, 2) * JetExpr.field(phi, dt=1) ** 2 - Fraction(1, 2) * px ** 2
    t_plus = _boson_stress(phi, pi_, lam_p, +1)
    t_minus = _boson_stress(phi, pi_, lam_m, -1)
    eps_p, delta_p = _boson_family_plus("eps", lam_p, phi, pi_)
    eps_m, delta_m = _boson_family_minus("epsbar", lam_m, phi, pi_)
    fam_p = SymmetryFamily(
        name="virasoro_plus",
        smear=eps_p,
        transforms={"phi": delta_p},
        charge_density=t_plus,
        chirality="plus",
    )
    fam_m = SymmetryFamily(
        name="virasoro_minus",
        smear=eps_m,
        transforms={"phi": delta_m},
        charge_density=t_minus,
        chirality="minus",
    )
    return Model(
        name="free_boson",
        fields=[phi, pi_],
        parameters={"R": radius, "lambda_plus": lam_p, "lambda_minus": lam_m},
        pinned={},
        radius=radius,
        kernel=kernel,
        hamiltonian=hamiltonian,
        eom={"phi": pim, "pi": JetExpr.field(phi, dx=2)},
        families=[fam_p, fam_m],
        lagrangian=lagrangian,
        lagrangian_fields=[phi],
        stress={"T": t_plus, "Tbar": t_minus},
    )


def _make_fj_chiral_boson() -> Model:
    u = FieldSymbol("u")
    phi = FieldSymbol("phi")
    radius = Parameter("R", 0)
    lam = Parameter("lam", 1)
    kernel = BracketKernel([u])
    kernel.set_entry("u", "u", 1, 1)
    uu = JetExpr.field(u)
    ux = JetExpr.field(u, dx=1)
    lamE = JetExpr.param(lam)
    t_density = Fraction(1, 2) * uu ** 2 - lamE * ux
    hamiltonian = LocalFunctional(Fraction(1, 2) * uu ** 2)
    px = JetExpr.field(phi, dx=1)
    lagrangian = JetExpr.field(phi, dt=1) * px - px ** 2
    eps = SmearSymbol("eps")
    delta_phi = JetExpr.smear(eps) * px + lamE * JetExpr.smear(eps, dx=1)
    delta_u = (
        JetExpr.smear(eps) * ux
        + JetExpr.smear(eps, dx=1) * uu
        + lamE * JetExpr.smear(eps, dx=2)
    )
    fam = SymmetryFamily(
        name="virasoro",
        smear=eps,
        transforms={"phi": delta_phi, "u": delta_u},
        charge_density=t_density,
        chirality="plus",
    )
    return Model(
        name="fj_chiral_boson",
        fields=[u],
        parameters={"R": radius, "lam": lam},
        pinned={},
        radius=radius,
        kernel=kernel,
        hamiltonian=hamiltonian,
        eom={"u": ux},
        families=[fam],
        lagrangian=lagrangian,
        lagrangian_fields=[phi],
        derivative_aliases={"phi": ("u", 1)},
        stress={"T": t_density},
    )


def _liouville_stress(phi, pi_, lam: Parameter, sign: int) -> JetExpr:
    px = JetExpr.field(phi, dx=1)
    p2 = JetExpr.field(phi, dx=2)
    pim = JetExpr.field(pi_)
    pix = JetExpr.field(pi_, dx=1)
    lamE = JetExpr.param(lam)
    e2 = JetExpr.exponential([(phi, Fraction(2))])
    quad = Fraction(1, 4) * (pim ** 2 + px ** 2 + 2 * sign * pim * px)
    linear = lamE * (p2 + sign * pix)
    return sign * (quad + lamE * e2) - sign * linear


def _make_liouville() -> Model:
    phi = FieldSymbol("phi")
    pi_ = FieldSymbol("pi")
    radius = Parameter("R", 0)
    lam_p = Parameter("lambda_plus", 1)
    lam_m = Parameter("lambda_minus", 1)
    kernel = BracketKernel([phi, pi_])
    kernel.set_entry("pi", "phi", 0, 1)
    kernel.set_entry("phi", "pi", 0, -1)
    px = JetExpr.field(phi, dx=1)
    pim = JetExpr.field(pi_)
    e2 = JetExpr.exponential([(phi, Fraction(2))])
    hamiltonian = LocalFunctional(
        Fraction(1, 2) * pim ** 2 + Fraction(1, 2) * px ** 2 + e2
    )
    lagrangian = (
        Fraction(1, 2) * JetExpr.field(phi, dt=1) ** 2 - Fraction(1, 2) * px ** 2 - e2
    )
    t_plus = _liouville_stress(phi, pi_, lam_p, +1)
    t_minus = _liouville_stress(phi, pi_, lam_m, -1)
    eps_p, delta_p = _boson_family_plus("eps", lam_p, phi, pi_)
    eps_m, delta_m = _boson_family_minus("epsbar", lam_m, phi, pi_)
    fam_p = SymmetryFamily(
        name="virasoro_plus",
        smear=eps_p,
        transforms={"phi": delta_p},
        charge_density=t_plus,
        chirality="plus",
    )
    fam_m = SymmetryFamily(
        name="virasoro_minus",
        smear=eps_m,
        transforms={"phi": delta_m},
        charge_density=t_minus,
        chirality="minus",
    )
    return Model(
        name="liouville",
        fields=[phi, pi_],
        parameters={"R": radius, "lambda_plus": lam_p, "lambda_minus": lam_m},
        pinned={"lambda_plus": Fraction(1, 2), "lambda_minus": Fraction(1, 2)},
        radius=radius,
        kernel=kernel,
        hamiltonian=hamiltonian,
        eom={
            "phi": pim,
            "pi": JetExpr.field(phi, dx=2) - 2 * e2,
        },
        families=[fam_p, fam_m],
        lagrangian=lagrangian,
        lagrangian_fields=[phi],
        stress={"T": t_plus, "Tbar": t_minus},
    )


_BUILTINS = {
    "chiral_fermion": _make_chiral_fermion,
    "free_boson": _make_free_boson,
    "fj_chiral_boson": _make_fj_chiral_boson,
    "liouville": _make_liouville,
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def builtin(name: str) -> Model:
    try:
        make = _BUILTINS[name]
    except KeyError:
        raise UnknownModel(
            f"unknown model {name!r}; available: {', '.join(BUILTIN_NAMES)}"
        ) from None
    return make()


# --- expression grammar ---------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:/\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*^(),={}])|(?P<bad>\S))"
)


class _Tokens:
    def __init__(self, text: str, line: int = 1, col_offset: int = 0):
        self.items = []
        self.line = line
        for m in _TOKEN_RE.finditer(text):
            col = m.start() + 1 + col_offset
            if m.lastgroup == "bad":
                raise ModelSyntaxError(f"unexpected character {m.group('bad')!r}", line, col)
            self.items.append((m.lastgroup, m.group(m.lastgroup), col))
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, None, -1)

    def next(self):
        tok = self.peek()
        if tok[0] is None:
            raise ModelSyntaxError("unexpected end of expression", self.line, -1)
        self.pos += 1
        return tok

    def expect(self, value):
        kind, val, col = self.next()
        if val != value:
            raise ModelSyntaxError(f"expected {value!r}, found {val!r}", self.line, col)
        return val

    def done(self) -> bool:
        return self.pos >= len(self.items)


def _parse_sum(toks: _Tokens, symbols) -> JetExpr:
    sign = 1
    kind, val, _ = toks.peek()
    if val in ("+", "-"):
        toks.next()
        sign = -1 if val == "-" else 1
    expr = sign * _parse_product(toks, symbols)
    while True:
        kind, val, _ = toks.peek()
        if val == "+":
            toks.next()
            expr = expr + _parse_product(toks, symbols)
        elif val == "-":
            toks.next()
            expr = expr - _parse_product(toks, symbols)
        else:
            return expr


def _parse_product(toks: _Tokens, symbols) -> JetExpr:
    expr = _parse_factor(toks, symbols)
    while toks.peek()[1] == "*":
        toks.next()
        expr = expr * _parse_factor(toks, symbols)
    return expr


def _parse_factor(toks: _Tokens, symbols) -> JetExpr:
    sign = 1
    while toks.peek()[1] == "-":
        toks.next()
        sign = -sign
    base, base_symbol = _parse_atom(toks, symbols)
    if toks.peek()[1] == "^":
        toks.next()
        neg = False
        if toks.peek()[1] == "-":
            toks.next()
            neg = True
        kind, val, col = toks.next()
        if kind != "number" or "/" in val:
            raise ModelSyntaxError("exponent must be an integer", toks.line, col)
        n = int(val)
        if neg:
            if isinstance(base_symbol, Parameter):
                base = JetExpr.param(base_symbol, -n)
            else:
                raise ModelSyntaxError(
                    "negative powers are only defined for parameters", toks.line, col
                )
        else:
            base = base ** n
    return sign * base


def _parse_atom(toks: _Tokens, symbols):
    kind, val, col = toks.next()
    if kind == "number":
        return JetExpr.const(Fraction(val)), None
    if val == "(":
        inner = _parse_sum(toks, symbols)
        toks.expect(")")
        return inner, None
    if kind != "ident":
        raise ModelSyntaxError(f"unexpected token {val!r}", toks.line, col)
    if val in ("dx", "dt"):
        power = 1
        if toks.peek()[1] == "^":
            toks.next()
            k2, v2, c2 = toks.next()
            if k2 != "number" or "/" in v2:
                raise ModelSyntaxError("derivative order must be an integer", toks.line, c2)
            power = int(v2)
        toks.expect("(")
        inner = _parse_sum(toks, symbols)
        toks.expect(")")
        for _ in range(power):
            inner = inner.derive(val[1])
        return inner, None
    if val == "exp":
        toks.expect("(")
        pairs = []
        sign = 1
        if toks.peek()[1] in ("+", "-"):
            sign = -1 if toks.next()[1] == "-" else 1
        while True:
            q = Fraction(sign)
            kind2, val2, col2 = toks.next()
            if kind2 == "number":
                q *= Fraction(val2)
                toks.expect("*")
                kind2, val2, col2 = toks.next()
            if kind2 != "ident":
                raise ModelSyntaxError("exp() expects rational * field terms", toks.line, col2)
            sym = symbols.get(val2)
            if not isinstance(sym, FieldSymbol):
                raise ModelSyntaxError(f"exp() argument {val2!r} is not a field", toks.line, col2)
            pairs.append((sym, q))
            nxt = toks.next()
            if nxt[1] == ")":
                break
            if nxt[1] not in ("+", "-"):
                raise ModelSyntaxError("malformed exp() argument", toks.line, nxt[2])
            sign = -1 if nxt[1] == "-" else 1
        return JetExpr.exponential(pairs), None
    sym = symbols.get(val)
    if sym is None:
        raise ModelSyntaxError(f"unknown symbol {val!r}", toks.line, col)
    if isinstance(sym, FieldSymbol):
        return JetExpr.field(sym), sym
    if isinstance(sym, SmearSymbol):
        return JetExpr.smear(sym), sym
    if isinstance(sym, Parameter):
        return JetExpr.param(sym), sym
    raise ModelSyntaxError(f"cannot use {val!r} in an expression", toks.line, col)


def parse_expr(text: str, symbols, line: int = 1) -> JetExpr:
    """Parse one expression against a symbol table name -> symbol object."""
    toks = _Tokens(text, line)
    expr = _parse_sum(toks, symbols)
    if not toks.done():
        kind, val, col = toks.peek()
        raise ModelSyntaxError(f"trailing input {val!r}", line, col)
    return expr


# --- kernel lines ----------------------------------------------------------------


def _parse_bracket_line(text: str, symbols, line: int):
    """{a, b} = sum of coeff*dy^k(delta) terms."""
    toks = _Tokens(text, line)
    toks.expect("{")
    _, i, col = toks.next()
    toks.expect(",")
    _, j, _ = toks.next()
    toks.expect("}")
    toks.expect("=")
    table = {}
    sign = 1
    if toks.peek()[1] in ("+", "-"):
        sign = -1 if toks.next()[1] == "-" else 1
    while True:
        coeff = JetExpr.const(sign)
        while True:
            kind, val, col = toks.peek()
            if val == "delta" or val == "dy":
                break
            factor, sym = _parse_atom(toks, symbols)
            if toks.peek()[1] == "^":
                toks.next()
                neg = toks.peek()[1] == "-"
                if neg:
                    toks.next()
                k2, v2, c2 = toks.next()
                n = int(v2)
                factor = JetExpr.param(sym, -n if neg else n) if isinstance(sym, Parameter) and neg else factor ** n
            coeff = coeff * factor
            if toks.peek()[1] == "*":
                toks.next()
            else:
                raise ModelSyntaxError("kernel term must end in delta or dy^k(delta)", line, toks.peek()[2])
        kind, val, col = toks.next()
        if val == "delta":
            k = 0
        else:
            k = 1
            if toks.peek()[1] == "^":
                toks.next()
                k2, v2, c2 = toks.next()
                k = int(v2)
            toks.expect("(")
            kind2, val2, col2 = toks.next()
            if val2 != "delta":
                raise ModelSyntaxError("expected delta inside dy^k(...)", line, col2)
            toks.expect(")")
        table[k] = table.get(k, JetExpr()) + coeff
        if toks.done():
            break
        kind, val, col = toks.next()
        if val not in ("+", "-"):
            raise ModelSyntaxError(f"unexpected {val!r} in kernel line", line, col)
        sign = -1 if val == "-" else 1
    return i, j, table


def _render_kernel_line(i: str, j: str, table: dict) -> str:
    parts = []
    for k in sorted(table):
        coeff = table[k]
        d = "delta" if k == 0 else ("dy(delta)" if k == 1 else f"dy^{k}(delta)")
        body = render_expr(coeff)
        if body == "1":
            piece = d
        elif body == "-1":
            piece = f"-{d}"
        else:
            piece = f"{body}*{d}"
        parts.append(piece)
    joined = " + ".join(parts).replace("+ -", "- ")
    return f"{{{i}, {j}}} = {joined}"


# --- model definition files -------------------------------------------------------


def render_model(model: Model) -> str:
    """Canonical text rendering; parse_model round-trips it."""
    out = [f"model {model.name}", ""]
    out.append("[fields]")
    for f in model.fields:
        out.append(f"{f.name} {f.statistics}")
    out.append("")
    if model.lagrangian_fields and [f.name for f in model.lagrangian_fields] != [
        f.name for f in model.fields
    ]:
        out.append("[lagrangian_fields]")
        for f in model.lagrangian_fields:
            alias = model.derivative_aliases.get(f.name)
            if alias:
                out.append(f"{f.name} {f.statistics} alias={alias[0]} order={alias[1]}")
            else:
                out.append(f"{f.name} {f.statistics}")
        out.append("")
    out.append("[parameters]")
    for name in sorted(model.parameters):
        p = model.parameters[name]
        line = f"{p.name} degree={p.degree}"
        if model.pinned.get(name) is not None:
            line += f" pinned={model.pinned[name]}"
        out.append(line)
    out.append("")
    out.append("[radius]")
    out.append(model.radius.name)
    out.append("")
    out.append("[bracket]")
    for (i, j) in sorted(model.kernel.entries):
        out.append(_render_kernel_line(i, j, model.kernel.entries[(i, j)]))
    out.append("")
    out.append("[hamiltonian]")
    out.append(render_expr(model.hamiltonian.density))
    out.append("")
    if model.lagrangian is not None:
        out.append("[lagrangian]")
        out.append(render_expr(model.lagrangian))
        out.append("")
    out.append("[eom]")
    for name in sorted(model.eom):
        out.append(f"dt({name}) = {render_expr(model.eom[name])}")
    out.append("")
    for fam in model.families:
        out.append(f"[symmetry {fam.name}]")
        out.append(
            f"smear {fam.smear.name} {fam.smear.statistics} chirality={fam.chirality}"
        )
        for fname in sorted(fam.transforms):
            out.append(f"delta({fname}) = {render_expr(fam.transforms[fname])}")
        out.append(f"charge = {render_expr(fam.charge_density)}")
        out.append("")
    for name in sorted(model.stress):
        out.append(f"[density {name}]")
        out.append(render_expr(model.stress[name]))
        out.append("")
    return "\n".join(out).rstrip() + "\n"


def parse_model(text: str, check: bool = True) -> Model:
    """Parse a model definition document; validates unless ``check=False``."""
    sections = []
    current = None
    model_name = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("model "):
            model_name = stripped[len("model "):].strip()
            if not re.match(r"[A-Za-z_][A-Za-z_0-9]*\Z", model_name):
                raise ModelSyntaxError(f"bad model name {model_name!r}", lineno, 7)
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ModelSyntaxError("unterminated section header", lineno, len(line))
            current = (stripped[1:-1].strip(), lineno, [])
            sections.append(current)
            continue
        if current is None:
            raise ModelSyntaxError(f"content outside any section: {stripped!r}", lineno, 1)
        current[2].append((lineno, stripped))
    if model_name is None:
        raise ModelSyntaxError("missing 'model <name>' header", 1, 1)

    fields: list = []
    lag_fields: list = []
    aliases: dict = {}
    parameters: dict = {}
    pinned: dict = {}
    radius = None
    kernel_lines: list = []
    hamiltonian_src = None
    lagrangian_src = None
    eom_src: list = []
    family_sections: list = []
    density_sections: list = []

    def single_expr(lines, what, header_line):
        if not lines:
            raise ModelSyntaxError(f"empty {what} section", header_line, 1)
        return " ".join(s for _, s in lines), lines[0][0]

    for name, header_line, lines in sections:
        if name == "fields":
            for lineno, s in lines:
                parts = s.split()
                if len(parts) != 2 or parts[1] not in (BOSON, FERMION):
                    raise ModelSyntaxError(
                        "field line must be '<name> boson|fermion'", lineno, 1
                    )
                fields.append(FieldSymbol(parts[0], parts[1]))
        elif name == "lagrangian_fields":
            for lineno, s in lines:
                parts = s.split()
                if len(parts) < 2 or parts[1] not in (BOSON, FERMION):
                    raise ModelSyntaxError(
                        "lagrangian field line must be '<name> boson|fermion [alias=.. order=..]'",
                        lineno,
                        1,
                    )
                lag_fields.append(FieldSymbol(parts[0], parts[1]))
                opts = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
                if "alias" in opts:
                    aliases[parts[0]] = (opts["alias"], int(opts.get("order", 1)))
        elif name == "parameters":
            for lineno, s in lines:
                parts = s.split()
                pname = parts[0]
                opts = dict(p.split("=", 1) for p in parts[1:] if "=" in p)
                parameters[pname] = Parameter(pname, int(opts.get("degree", 0)))
                if "pinned" in opts:
                    pinned[pname] = Fraction(opts["pinned"])
        elif name == "radius":
            src, lineno = single_expr(lines, "radius", header_line)
            radius = src.strip()
        elif name == "bracket":
            kernel_lines.extend(lines)
        elif name == "hamiltonian":
            hamiltonian_src = single_expr(lines, "hamiltonian", header_line)
        elif name == "lagrangian":
            lagrangian_src = single_expr(lines, "lagrangian", header_line)
        elif name == "eom":
            eom_src.extend(lines)
        elif name.startswith("symmetry"):
            fam_name = name[len("symmetry"):].strip()
            if not fam_name:
                raise ModelSyntaxError("symmetry section needs a name", header_line, 1)
            family_sections.append((fam_name, header_line, lines))
        elif name.startswith("density"):
            d_name = name[len("density"):].strip()
            if not d_name:
                raise ModelSyntaxError("density section needs a name", header_line, 1)
            density_sections.append((d_name, header_line, lines))
        else:
            raise ModelSyntaxError(f"unknown section [{name}]", header_line, 1)

    if radius is None or radius not in parameters:
        raise ModelSyntaxError("radius must name a declared parameter", 1, 1)

    symbols: dict = {f.name: f for f in fields}
    for f in lag_fields:
        symbols.setdefault(f.name, f)
    for p in parameters.values():
        symbols[p.name] = p
    symbols[PI.name] = PI

    kernel = BracketKernel(fields)
    for lineno, s in kernel_lines:
        i, j, table = _parse_bracket_line(s, symbols, lineno)
        for k, coeff in table.items():
            try:
                kernel.set_entry(i, j, k, coeff)
            except MissingKernelEntry as exc:
                raise ModelSyntaxError(str(exc), lineno, 1) from None

    if hamiltonian_src is None:
        raise ModelSyntaxError("missing [hamiltonian] section", 1, 1)
    hamiltonian = LocalFunctional(parse_expr(hamiltonian_src[0], symbols, hamiltonian_src[1]))
    lagrangian = None
    if lagrangian_src is not None:
        lagrangian = parse_expr(lagrangian_src[0], symbols, lagrangian_src[1])

    eom = {}
    eom_re = re.compile(r"dt\((?P<f>[A-Za-z_][A-Za-z_0-9]*)\)\s*=\s*(?P<rhs>.*)\Z")
    for lineno, s in eom_src:
        m = eom_re.match(s)
        if not m:
            raise ModelSyntaxError("evolution line must be 'dt(<field>) = <expr>'", lineno, 1)
        eom[m.group("f")] = parse_expr(m.group("rhs"), symbols, lineno)

    families = []
    for fam_name, header_line, lines in family_sections:
        smear = None
        chirality = "none"
        transforms = {}
        charge = None
        local = dict(symbols)
        delta_re = re.compile(r"delta\((?P<f>[A-Za-z_][A-Za-z_0-9]*)\)\s*=\s*(?P<rhs>.*)\Z")
        for lineno, s in lines:
            if s.startswith("smear "):
                parts = s.split()
                if len(parts) < 3 or parts[2] not in (BOSON, FERMION):
                    raise ModelSyntaxError(
                        "smear line must be 'smear <name> boson|fermion [chirality=..]'",
                        lineno,
                        1,
                    )
                smear = SmearSymbol(parts[1], parts[2])
                opts = dict(p.split("=", 1) for p in parts[3:] if "=" in p)
                chirality = opts.get("chirality", "none")
                local[smear.name] = smear
            elif s.startswith("delta("):
                m = delta_re.match(s)
                if not m:
                    raise ModelSyntaxError("malformed delta(...) line", lineno, 1)
                transforms[m.group("f")] = parse_expr(m.group("rhs"), local, lineno)
            elif s.startswith("charge"):
                _, _, rhs = s.partition("=")
                charge = parse_expr(rhs.strip(), local, lineno)
            else:
                raise ModelSyntaxError(f"unknown symmetry line {s!r}", lineno, 1)
        if smear is None or charge is None:
            raise ModelSyntaxError(
                f"symmetry {fam_name} needs a smear and a charge", header_line, 1
            )
        families.append(
            SymmetryFamily(fam_name, smear, transforms, charge, chirality)
        )

    stress = {}
    for d_name, header_line, lines in density_sections:
        src, lineno = single_expr(lines, f"density {d_name}", header_line)
        stress[d_name] = parse_expr(src, symbols, lineno)

    model = Model(
        name=model_name,
        fields=fields,
        parameters=parameters,
        pinned=pinned,
        radius=parameters[radius],
        kernel=kernel,
        hamiltonian=hamiltonian,
        eom=eom,
        families=families,
        lagrangian=lagrangian,
        lagrangian_fields=lag_fields or list(fields),
        derivative_aliases=aliases,
        stress=stress,
    )
    if check:
        violations = validate(model)
        if violations:
            raise ValidationError(violations)
    return model
