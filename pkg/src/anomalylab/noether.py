"""Symmetry analysis: invariance checks, generator checks, charge algebra.

Ties the variational layer to the bracket layer:

* ``check_action_symmetry`` prolongs a declared transformation to all jets,
  varies the Lagrangian, imposes the chirality constraint on the smearing
  (d_t eps = +- d_x eps), and decides off-shell invariance with the Euler
  kernel test;
* ``check_generator`` verifies delta(Phi) = {Q[eps], Phi} exactly after the
  time derivatives in delta(Phi) are eliminated through the Hamiltonian
  evolution rules (equal-time brackets know only x-jets);
* ``charge_algebra`` computes all pairwise smeared charge brackets, matches
  the functional parts against the span of the declared charges smeared by a
  finite catalog of two-smear patterns with exact rational coefficients,
  extracts the field-independent central terms, and classifies each family.

Closure orientation: with the generator normalization delta(Phi) =
{Q[eps], Phi}, a Witt-type family closes as {Q[f], Q[g]} = -Q[fg' - f'g],
which is the smeared form of {L_n, L_m} = +(n - m) L_{n+m} for the modes
L_n = \\oint z^(n+1) T (smearings map to transformations through an
anti-homomorphism).  Reports carry the signed coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Mapping

from .errors import ClosureFailure, UnknownSymbol
from .jetexpr import (
    FieldSymbol,
    JetExpr,
    Parameter,
    SmearSymbol,
    render_expr,
    variation,
)
from .pbracket import (
    BracketKernel,
    LocalFunctional,
    central_coeff,
    density_bracket,
    generator_action,
    smeared_bracket,
)
from .varcalc import DxReducer, Obstruction, is_total_divergence, reduce_mod_dx

CHIRAL_SIGN = {"plus": 1, "minus": -1}


@dataclass
class SymmetryFamily:
    """A one-parameter family of symmetry transformations with its charge.

    ``transforms`` maps field names to delta(Phi) rules written with the
    family's smearing symbol; rules for Lagrangian-only fields drive the
    action check, rules for phase-space fields drive the generator check.
    ``charge_density`` is the density T with Q[eps] = \\oint eps * T.
    """

    name: str
    smear: SmearSymbol
    transforms: dict
    charge_density: JetExpr
    chirality: str = "none"

    def __post_init__(self):
        if self.chirality not in ("plus", "minus", "none"):
            raise ValueError(f"bad chirality {self.chirality!r}")

    def charge(self) -> LocalFunctional:
        return LocalFunctional(self.charge_density, self.smear, name=self.name)

    def chirality_signs(self) -> dict:
        if self.chirality == "none":
            return {}
        return {self.smear.name: CHIRAL_SIGN[self.chirality]}


def _pin(expr: JetExpr, pinned: Mapping[str, Fraction], keep=()) -> JetExpr:
    values = {k: v for k, v in pinned.items() if v is not None and k not in keep}
    return expr.substitute_params(values) if values else expr


def _pinned_kernel(model, keep=()) -> BracketKernel:
    kernel = BracketKernel(model.kernel.fields)
    for (i, j), table in model.kernel.entries.items():
        for k, coeff in table.items():
            kernel.set_entry(i, j, k, _pin(coeff, model.pinned, keep))
    return kernel


def _check_rule_symbols(model, family):
    known_fields = {f.name for f in model.all_fields()}
    known_params = set(model.parameters) | {"PI"}
    for fname, rule in family.transforms.items():
        if fname not in known_fields:
            raise UnknownSymbol(f"transformation for unknown field {fname}")
        if not rule.field_names() <= known_fields:
            raise UnknownSymbol(
                f"rule for {fname} uses unknown fields {rule.field_names() - known_fields}"
            )
        if not rule.param_names() <= known_params:
            raise UnknownSymbol(
                f"rule for {fname} uses unknown parameters {rule.param_names() - known_params}"
            )
        extra = rule.smear_names() - {family.smear.name}
        if extra:
            raise UnknownSymbol(f"rule for {fname} uses foreign smearings {extra}")


def check_action_symmetry(model, family, symbolic=()):
    """Off-shell invariance of the action under the family's transformation.

    Returns True or an :class:`Obstruction`.  Parameters pinned by the model
    are substituted first; names listed in ``symbolic`` stay symbolic (used
    to exhibit obstructions as functions of a coupling).
    """
    if model.lagrangian is None:
        raise ValueError(f"model {model.name} has no Lagrangian")
    _check_rule_symbols(model, family)
    lag_fields = model.lagrangian_fields or model.fields
    rules = {}
    stats = {}
    for f in lag_fields:
        if f.name in family.transforms:
            rules[f.name] = _pin(family.transforms[f.name], model.pinned, symbolic)
            stats[f.name] = f.is_fermionic
    lagrangian = _pin(model.lagrangian, model.pinned, symbolic)
    delta_l = variation(lagrangian, rules, stats)
    signs = family.chirality_signs()
    if signs:
        delta_l = delta_l.substitute_smear_chirality(signs)
    return is_total_divergence(delta_l, lag_fields, [family.smear], signs)


def eliminate_time(model, expr: JetExpr) -> JetExpr:
    """Rewrite time derivatives of phase-space fields through the evolution rules."""
    rules = {model.field(name): rhs for name, rhs in model.eom.items()}
    return expr.substitute(rules)


def check_generator(model, family) -> dict:
    """delta(Phi) = {Q[eps], Phi} for every phase-space field with a rule.

    Returns a mapping field name -> True or the mismatch expression
    {Q, Phi} - delta(Phi).
    """
    _check_rule_symbols(model, family)
    kernel = _pinned_kernel(model)
    charge = LocalFunctional(_pin(family.charge_density, model.pinned), family.smear)
    signs = family.chirality_signs()
    results = {}
    for f in model.fields:
        if f.name not in family.transforms:
            continue
        lhs = generator_action(charge, f, kernel)
        rhs = _pin(family.transforms[f.name], model.pinned)
        rhs = eliminate_time(model, rhs)
        if signs:
            rhs = rhs.substitute_smear_chirality(signs)
            lhs = lhs.substitute_smear_chirality(signs)
        diff = lhs - rhs
        results[f.name] = True if diff.is_zero() else diff
    return results


def time_derivative(model, density: JetExpr) -> JetExpr:
    """d_t of a phase-space density through the Hamiltonian evolution rules."""
    return eliminate_time(model, density.derive("t"))


def check_chirality(model, density: JetExpr, sign: str):
    """On-shell chirality d_-/d_+ D = 0 for a phase-space density.

    ``sign`` 'plus' checks d_- D = 0 (D depends on z_+ only), 'minus'
    checks d_+ D = 0.  Returns True or the nonzero residual.
    """
    density = _pin(density, model.pinned)
    dt = time_derivative(model, density)
    dx = density.derive("x")
    s = CHIRAL_SIGN[sign]
    residual = (dx - s * dt) * Fraction(1, 2)
    return True if residual.is_zero() else residual


def check_conservation(model, family):
    """d/dt Q[eps] = 0 modulo total x-derivatives, using the chiral smearing."""
    density = _pin(family.charge_density, model.pinned)
    smear = family.smear
    signs = family.chirality_signs()
    total = JetExpr.smear(smear, dt=1) * density + JetExpr.smear(smear) * time_derivative(model, density)
    if signs:
        total = total.substitute_smear_chirality(signs)
    residual = reduce_mod_dx(total)
    return True if residual.is_zero() else residual


# --- charge algebra ----------------------------------------------------------

# Two-smear patterns for closure matching, in canonical priority order.
# Each entry is (label, ((d^a f, d^b g, coefficient), ...)).
_PATTERNS = (
    ("fg'-f'g", ((0, 1, 1), (1, 0, -1))),
    ("fg", ((0, 0, 1),)),
    ("f'g'", ((1, 1, 1),)),
    ("fg'+f'g", ((0, 1, 1), (1, 0, 1))),
    ("fg''-f''g", ((0, 2, 1), (2, 0, -1))),
    ("fg''+f''g", ((0, 2, 1), (2, 0, 1))),
    ("f'g''-f''g'", ((1, 2, 1), (2, 1, -1))),
    ("fg'''-f'''g", ((0, 3, 1), (3, 0, -1))),
)


def _pattern_expr(spec, s1: SmearSymbol, s2: SmearSymbol) -> JetExpr:
    out = JetExpr()
    for a, b, c in spec:
        out = out + Fraction(c) * JetExpr.smear(s1, dx=a) * JetExpr.smear(s2, dx=b)
    return out


@dataclass
class ClosureEntry:
    """{Q_first[f], Q_second[g]} expressed over the declared charge span."""

    first: str
    second: str
    coefficients: dict  # (family name, pattern label) -> Fraction
    ok: bool
    residual: str = ""

    def to_json(self):
        coeffs = {
            f"{fam}|{pat}": str(c) for (fam, pat), c in sorted(self.coefficients.items())
        }
        return {
            "first": self.first,
            "second": self.second,
            "closes": self.ok,
            "coefficients": coeffs,
            "residual": self.residual,
        }


def match_closure(model, families, func_density: JetExpr, s1: SmearSymbol, s2: SmearSymbol):
    """Express a bracket's functional part over the charges, exactly.

    Solves  func = sum_{family c, pattern p} x_{c,p} * oint p(f, g) T_c
    modulo d_x with rational x; returns (coefficients, residual JetExpr).
    The returned solution is the reduced-echelon particular solution with
    the pattern priority order, so reports are deterministic.
    """
    candidates = []
    for fam in families:
        t_c = _pin(fam.charge_density, model.pinned)
        for label, spec in _PATTERNS:
            cand = _pattern_expr(spec, s1, s2) * t_c
            if cand:
                candidates.append(((fam.name, label), cand))
    reducer = DxReducer([func_density] + [c for _, c in candidates])
    target = reducer.reduce(func_density)
    if target.is_zero():
        return {}, JetExpr()
    vectors = [(key, reducer.reduce(cand)) for key, cand in candidates]
    vectors = [(key, v) for key, v in vectors if v]

    # Solve sum_i x_i v_i = target exactly: one linear equation per monomial,
    # Gaussian elimination choosing the lowest candidate index as pivot so the
    # particular solution prefers patterns early in the priority order.
    eqs: dict = {}
    for idx, (_, v) in enumerate(vectors):
        for mono, c in v.terms.items():
            eqs.setdefault(mono, {})[idx] = c
    uncovered = {m: c for m, c in target.terms.items() if m not in eqs}
    if uncovered:
        return None, JetExpr(uncovered)

    reduced: list = []  # (coeff vector over unknowns, rhs value)
    pivots: list = []
    for mono in sorted(eqs):
        vec = dict(eqs[mono])
        val = target.terms.get(mono, Fraction(0))
        for lead, (pvec, pval) in zip(pivots, reduced):
            if lead in vec:
                f = vec[lead] / pvec[lead]
                for k, c in pvec.items():
                    s = vec.get(k, Fraction(0)) - f * c
                    if s:
                        vec[k] = s
                    else:
                        vec.pop(k, None)
                val -= f * pval
        if vec:
            pivots.append(min(vec))
            reduced.append((vec, val))
        elif val:
            return None, target  # inconsistent: outside the candidate span

    solution = {i: Fraction(0) for i in range(len(vectors))}
    for (vec, val), lead in reversed(list(zip(reduced, pivots))):
        s = val
        for k, c in vec.items():
            if k != lead:
                s -= c * solution[k]
        solution[lead] = s / vec[lead]

    coefficients = {}
    residual_check = target
    for idx, (key, v) in enumerate(vectors):
        if solution[idx]:
            coefficients[key] = solution[idx]
            residual_check = residual_check - solution[idx] * v
    if residual_check:
        return None, residual_check
    return coefficients, JetExpr()


@dataclass
class FamilyReport:
    name: str
    chirality: str
    smear: str
    action_symmetry: bool = False
    action_obstruction: str = ""
    generator: dict = dc_field(default_factory=dict)
    conservation: bool = False
    conservation_residual: str = ""
    chirality_ok: bool | None = None
    chirality_residual: str = ""
    central_by_k: dict = dc_field(default_factory=dict)  # k -> JetExpr (field-free)
    central_delta3: JetExpr = dc_field(default_factory=JetExpr)
    central_charge: JetExpr = dc_field(default_factory=JetExpr)
    central_constant: JetExpr | None = None  # oint value for the k=0 central
    central_note: str = ""
    classification: str = "not anomalous"

    def generator_ok(self) -> bool:
        return all(v is True for v in self.generator.values())

    def to_json(self):
        return {
            "family": self.name,
            "chirality": self.chirality,
            "smear": self.smear,
            "action_symmetry": self.action_symmetry,
            "action_obstruction": self.action_obstruction,
            "generator": {k: (v if v is True else render_expr(v)) for k, v in self.generator.items()},
            "conservation": self.conservation,
            "chirality_check": self.chirality_ok,
            "central_by_k": {str(k): render_expr(v) for k, v in sorted(self.central_by_k.items())},
            "central_delta3": render_expr(self.central_delta3),
            "central_charge": render_expr(self.central_charge),
            "central_constant": None if self.central_constant is None else render_expr(self.central_constant),
            "classification": self.classification,
        }


@dataclass
class AnomalyReport:
    model: str
    families: list = dc_field(default_factory=list)
    closures: list = dc_field(default_factory=list)

    def family(self, name: str) -> FamilyReport:
        for f in self.families:
            if f.name == name:
                return f
        raise KeyError(name)

    def closure(self, first: str, second: str) -> ClosureEntry:
        for c in self.closures:
            if c.first == first and c.second == second:
                return c
        raise KeyError((first, second))

    def all_ok(self) -> bool:
        return all(
            f.action_symmetry and f.generator_ok() and f.conservation for f in self.families
        ) and all(c.ok for c in self.closures)

    def to_json(self):
        return {
            "model": self.model,
            "families": [f.to_json() for f in self.families],
            "closures": [c.to_json() for c in self.closures],
        }


def _fresh_smear(base: SmearSymbol, taken) -> SmearSymbol:
    name = base.name
    while name in taken:
        name += "_b"
    return SmearSymbol(name, base.statistics)


def charge_algebra(model, families=None) -> AnomalyReport:
    """Full pairwise charge algebra with central extraction and classification.

    Every family is expected to pass the action-symmetry and generator
    checks first (the report records them).  A family is classified
    classically anomalous iff its self-bracket has a nonzero field-free
    central term (as a parameter polynomial at the model's pinned values).
    """
    families = list(model.families if families is None else families)
    kernel = _pinned_kernel(model)
    report = AnomalyReport(model=model.name)

    for fam in families:
        fr = FamilyReport(name=fam.name, chirality=fam.chirality, smear=fam.smear.name)
        if model.lagrangian is not None:
            inv = check_action_symmetry(model, fam)
            fr.action_symmetry = inv is True
            if inv is not True:
                fr.action_obstruction = str(inv)
        else:
            fr.action_symmetry = True
        fr.generator = check_generator(model, fam)
        cons = check_conservation(model, fam)
        fr.conservation = cons is True
        if cons is not True:
            fr.conservation_residual = render_expr(cons)
        if fam.chirality != "none":
            chir = check_chirality(model, fam.charge_density, fam.chirality)
            fr.chirality_ok = chir is True
            if chir is not True:
                fr.chirality_residual = render_expr(chir)

        t_pinned = _pin(fam.charge_density, model.pinned)
        dist = density_bracket(t_pinned, t_pinned, kernel)
        for k in sorted(dist.coeffs):
            free = dist.at(k).field_free_part()
            if free:
                fr.central_by_k[k] = free
        try:
            fr.central_delta3 = central_coeff(dist)
        except Exception as exc:  # NonConstantCentralCandidate: report, don't drop
            fr.central_note = str(exc)
            fr.central_delta3 = dist.at(3).field_free_part()
        fr.central_charge = fr.central_delta3 * 12
        k0_free = fr.central_by_k.get(0)
        if k0_free is not None:
            fr.central_constant = k0_free * model.circumference()
        anomalous = bool(fr.central_by_k)
        fr.classification = "classically anomalous" if anomalous else "not anomalous"
        report.families.append(fr)

    taken = {f.smear.name for f in families}
    for f in families:
        taken |= f.charge_density.smear_names()
    for i, fam_a in enumerate(families):
        for fam_b in families[i:]:
            s1 = fam_a.smear
            s2 = _fresh_smear(fam_b.smear, taken | {s1.name})
            qa = LocalFunctional(_pin(fam_a.charge_density, model.pinned), s1)
            qb = LocalFunctional(_pin(fam_b.charge_density, model.pinned), s2)
            func, _cent = smeared_bracket(qa, qb, kernel)
            coeffs, residual = match_closure(model, families, func.density, s1, s2)
            if coeffs is None:
                report.closures.append(
                    ClosureEntry(fam_a.name, fam_b.name, {}, False, render_expr(residual))
                )
            else:
                report.closures.append(ClosureEntry(fam_a.name, fam_b.name, coeffs, True))
    return report


def require_closure(report: AnomalyReport):
    bad = [c for c in report.closures if not c.ok]
    if bad:
        c = bad[0]
        raise ClosureFailure(
            f"{{{c.first}, {c.second}}} is not in the declared charge span: {c.residual}",
            residual=c.residual,
        )


# --- rescaling ----------------------------------------------------------------


@dataclass
class RescaleReport:
    alpha: str
    central_before: dict
    central_after: dict
    alpha_exponents: dict

    def to_json(self):
        return {
            "alpha": self.alpha,
            "central_before": self.central_before,
            "central_after": self.central_after,
            "alpha_exponents": self.alpha_exponents,
        }


def _scale_expr(expr: JetExpr, alpha, parameters: Mapping[str, Parameter]) -> JetExpr:
    """alpha * expr with all field jets scaled by 1/alpha and every parameter
    of scaling degree d replaced by itself * alpha^(-d).

    ``alpha`` is a Parameter (symbolic; exponential factors unsupported) or
    an exact nonzero Fraction (full support).
    """
    if isinstance(alpha, Parameter):
        inv = JetExpr.param(alpha, -1)
        fwd = JetExpr.param(alpha, 1)
        rational = None
    else:
        rational = Fraction(alpha)
        if not rational:
            raise ValueError("rescaling by zero")
        inv = JetExpr.const(1 / rational)
        fwd = JetExpr.const(rational)
    out = JetExpr()
    for key, coeff in expr.terms.items():
        params, smears, expf, bjets, fatoms = key
        if expf and rational is None:
            raise ValueError("symbolic rescaling of exponential factors; use a rational alpha")
        degree = sum(n for _, n in bjets) + sum(1 for kind, *_ in fatoms if kind == "field")
        twist = 0
        for name, e in params:
            p = parameters.get(name)
            if p is not None and p.degree:
                twist += p.degree * e
        if rational is None:
            factor = JetExpr.param(alpha, 1 - degree - twist)
            out = out + JetExpr({key: coeff}) * factor
        else:
            newexpf = tuple((fn, q / rational) for fn, q in expf)
            newkey = (params, smears, newexpf, bjets, fatoms)
            out = out + JetExpr({newkey: coeff * rational ** (1 - degree - twist)})
    return out


def rescale_model(model, alpha):
    """Simultaneous rescaling Phi -> alpha Phi with bracket renormalized by 1/alpha.

    The net effect on the stored data: the kernel table picks up one factor
    of alpha, every field-valued quantity X (Hamiltonian and charge
    densities, transformation rules, evolution rules) becomes
    alpha * X(jets/alpha), and parameters of scaling degree d represent the
    rescaled couplings alpha^d * old.  This keeps the evolution rules, the
    generator property and the Witt structure constants intact while the
    central terms transform; the report records the measured alpha exponent
    of each family's delta''' coefficient.
    """
    params = model.parameters
    if isinstance(alpha, Parameter):
        alpha_expr = JetExpr.param(alpha)
        alpha_name = alpha.name
    else:
        alpha = Fraction(alpha)
        alpha_expr = JetExpr.const(alpha)
        alpha_name = str(alpha)

    def scale(e):
        return _scale_expr(e, alpha, params)

    new_model = model.copy()
    new_model.name = f"{model.name}_rescaled"
    new_model.kernel = model.kernel.scaled(alpha_expr)
    new_model.hamiltonian = LocalFunctional(scale(model.hamiltonian.density))
    new_model.eom = {name: scale(rhs) for name, rhs in model.eom.items()}
    if model.lagrangian is not None:
        new_model.lagrangian = scale(model.lagrangian)
    new_model.stress = {name: scale(t) for name, t in model.stress.items()}
    new_model.families = [
        SymmetryFamily(
            name=f.name,
            smear=f.smear,
            transforms={k: scale(r) for k, r in f.transforms.items()},
            charge_density=scale(f.charge_density),
            chirality=f.chirality,
        )
        for f in model.families
    ]
    new_pinned = {}
    for name, value in model.pinned.items():
        d = params[name].degree if name in params else 0
        if value is None or d == 0:
            new_pinned[name] = value
        elif isinstance(alpha, Parameter):
            new_pinned[name] = None  # pin lost under symbolic rescaling
        else:
            new_pinned[name] = value * alpha ** d
    new_model.pinned = new_pinned
    if isinstance(alpha, Parameter):
        new_model.parameters = dict(params)
        new_model.parameters[alpha.name] = alpha

    before = {}
    after = {}
    exponents = {}
    kernel_old = _pinned_kernel(model)
    kernel_new = _pinned_kernel(new_model)
    for old_f, new_f in zip(model.families, new_model.families):
        t_old = _pin(old_f.charge_density, model.pinned)
        t_new = _pin(new_f.charge_density, new_model.pinned)
        c_old = central_coeff(density_bracket(t_old, t_old, kernel_old))
        c_new = central_coeff(density_bracket(t_new, t_new, kernel_new))
        before[old_f.name] = render_expr(c_old)
        after[old_f.name] = render_expr(c_new)
        exponents[old_f.name] = _alpha_exponent(c_old, c_new, alpha, params)
    return new_model, RescaleReport(alpha_name, before, after, exponents)


def _alpha_exponent(c_old: JetExpr, c_new: JetExpr, alpha, params) -> str:
    """Exponent q with c_new = alpha^q * c_old after re-expressing the
    rescaled couplings in terms of the original values (lambda_new =
    alpha^d lambda_old)."""
    if c_old.is_zero() and c_new.is_zero():
        return "0"
    if not isinstance(alpha, Parameter):
        return "n/a (rational alpha)"
    # rewrite c_new with lambda -> alpha^d lambda
    rewritten = JetExpr()
    for key, coeff in c_new.terms.items():
        pmon, rest = key[0], key[1:]
        extra = 0
        for name, e in pmon:
            p = params.get(name)
            if p is not None and p.degree:
                extra += p.degree * e
        merged = dict(pmon)
        merged[alpha.name] = merged.get(alpha.name, 0) + extra
        if not merged[alpha.name]:
            del merged[alpha.name]
        rewritten = rewritten + JetExpr({(tuple(sorted(merged.items())),) + rest: coeff})
    # extract the single alpha power relating rewritten to c_old
    for q in range(-6, 7):
        scaled = c_old * JetExpr.param(alpha, q) if q else c_old
        if rewritten == scaled:
            return str(q)
    # fall back: report the raw rewritten form
    return f"non-monomial: {render_expr(rewritten)}"
