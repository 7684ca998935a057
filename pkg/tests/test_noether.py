from fractions import Fraction as F

import pytest

from anomalylab.jetexpr import PI, JetExpr, Parameter, SmearSymbol, variation
from anomalylab.models import builtin, validate
from anomalylab.noether import (
    charge_algebra,
    check_action_symmetry,
    check_chirality,
    check_conservation,
    check_generator,
    match_closure,
    rescale_model,
)
from anomalylab.pbracket import LocalFunctional, density_bracket, generator_action, smeared_bracket
from anomalylab.noether import _pin, _pinned_kernel

ALL_MODELS = ("chiral_fermion", "free_boson", "fj_chiral_boson", "liouville")


@pytest.fixture(scope="module")
def models():
    return {name: builtin(name) for name in ALL_MODELS}


@pytest.fixture(scope="module")
def reports(models):
    return {name: charge_algebra(m) for name, m in models.items()}


def test_all_families_fully_checked(models):
    for name, m in models.items():
        for fam in m.families:
            assert check_action_symmetry(m, fam) is True, (name, fam.name)
            gen = check_generator(m, fam)
            assert all(v is True for v in gen.values()), (name, fam.name, gen)
            assert check_conservation(m, fam) is True, (name, fam.name)
            if fam.chirality != "none":
                assert check_chirality(m, fam.charge_density, fam.chirality) is True


def test_liouville_obstruction_proportional_to_lambda_minus_half(models):
    m = models["liouville"]
    obs = check_action_symmetry(m, m.family("virasoro_plus"), symbolic=("lambda_plus",))
    assert obs is not True
    image = obs.images["phi"]
    assert image.substitute_params({"lambda_plus": F(1, 2)}).is_zero()
    assert not image.substitute_params({"lambda_plus": F(1, 3)}).is_zero()
    # the minus family shows the same structure
    obs2 = check_action_symmetry(m, m.family("virasoro_minus"), symbolic=("lambda_minus",))
    assert obs2 is not True
    assert obs2.images["phi"].substitute_params({"lambda_minus": F(1, 2)}).is_zero()


def test_boson_invariance_for_all_lambda(models):
    m = models["free_boson"]
    assert check_action_symmetry(m, m.family("virasoro_plus"), symbolic=("lambda_plus",)) is True
    assert check_action_symmetry(m, m.family("virasoro_minus"), symbolic=("lambda_minus",)) is True


def test_momentum_is_not_chiral(models):
    m = models["free_boson"]
    res = check_chirality(m, JetExpr.field(m.field("pi")), "plus")
    assert res is not True


def test_fermion_report(reports, models):
    rep = reports["chiral_fermion"]
    witt = rep.family("witt")
    assert witt.classification == "not anomalous"
    assert witt.central_delta3.is_zero() and not witt.central_by_k
    shift = rep.family("shift")
    assert shift.classification == "classically anomalous"
    m = models["chiral_fermion"]
    assert shift.central_constant == 4 * JetExpr.param(PI) * JetExpr.param(m.radius)
    # Witt closure: single fg'-f'g pattern (mode form (n-m) L_{n+m})
    c = rep.closure("witt", "witt")
    assert c.ok and c.coefficients == {("witt", "fg'-f'g"): F(-1)}
    # the shift family closes onto itself under the Witt action
    c2 = rep.closure("witt", "shift")
    assert c2.ok and set(fam for fam, _ in c2.coefficients) == {"shift"}
    c3 = rep.closure("shift", "shift")
    assert c3.ok and not c3.coefficients


def test_boson_report(reports):
    rep = reports["free_boson"]
    lam_p, lam_m = Parameter("lambda_plus", 1), Parameter("lambda_minus", 1)
    plus = rep.family("virasoro_plus")
    assert plus.central_delta3 == -2 * JetExpr.param(lam_p) ** 2
    assert plus.central_charge == -24 * JetExpr.param(lam_p) ** 2
    assert plus.classification == "classically anomalous"
    minus = rep.family("virasoro_minus")
    assert minus.central_delta3 == 2 * JetExpr.param(lam_m) ** 2
    cross = rep.closure("virasoro_plus", "virasoro_minus")
    assert cross.ok and not cross.coefficients  # {T, Tbar} = 0
    for fam in ("virasoro_plus", "virasoro_minus"):
        c = rep.closure(fam, fam)
        assert c.coefficients == {(fam, "fg'-f'g"): F(-1)}


def test_boson_pinned_zero_not_anomalous():
    m = builtin("free_boson").with_pinned({"lambda_plus": 0, "lambda_minus": 0})
    rep = charge_algebra(m)
    for fr in rep.families:
        assert fr.classification == "not anomalous"
        assert fr.central_delta3.is_zero()


def test_fj_report(reports):
    rep = reports["fj_chiral_boson"]
    fam = rep.family("virasoro")
    lam = Parameter("lam", 1)
    assert fam.central_delta3 == -JetExpr.param(lam) ** 2
    assert fam.classification == "classically anomalous"
    c = rep.closure("virasoro", "virasoro")
    assert c.coefficients == {("virasoro", "fg'-f'g"): F(-1)}


def test_liouville_report(reports):
    rep = reports["liouville"]
    assert rep.family("virasoro_plus").central_charge == JetExpr.const(-6)
    assert rep.family("virasoro_minus").central_charge == JetExpr.const(6)
    assert rep.closure("virasoro_plus", "virasoro_minus").coefficients == {}
    for fam in ("virasoro_plus", "virasoro_minus"):
        assert rep.family(fam).classification == "classically anomalous"
        assert rep.family(fam).chirality_ok is True


def test_nilpotency_contrast(models):
    # applying the shift twice with independent odd smears annihilates psi,
    # while {G, G} = 4 PI R is nonzero
    m = models["chiral_fermion"]
    kap1 = SmearSymbol("kap1", "fermion")
    kap2 = SmearSymbol("kap2", "fermion")
    first = variation(JetExpr.field(m.field("psi")), {"psi": JetExpr.smear(kap2)}, {"psi": True})
    second = variation(first, {"psi": JetExpr.smear(kap1)}, {"psi": True})
    assert second.is_zero()
    rep = charge_algebra(m)
    assert not rep.family("shift").central_constant.is_zero()


def test_central_part_brackets_vanish(models, reports):
    for name, m in models.items():
        kernel = _pinned_kernel(m)
        for fam in m.families:
            if reports[name].family(fam.name).classification != "classically anomalous":
                continue
            s2 = SmearSymbol(fam.smear.name + "_b", fam.smear.statistics)
            q1 = LocalFunctional(_pin(fam.charge_density, m.pinned), fam.smear)
            q2 = LocalFunctional(_pin(fam.charge_density, m.pinned), s2)
            _, cent = smeared_bracket(q1, q2, kernel)
            for f in m.fields:
                assert density_bracket(cent.density, JetExpr.field(f), kernel).is_zero()


def test_double_bracket_identity(models):
    # {Q_a, {Q_b, phi}} - {Q_b, {Q_a, phi}} = {{Q_a, Q_b}, phi} exactly,
    # central parts dropping out
    for name, m in models.items():
        kernel = _pinned_kernel(m)
        for fam in m.families:
            s1 = fam.smear
            s2 = SmearSymbol(s1.name + "_b", s1.statistics)
            t = _pin(fam.charge_density, m.pinned)
            qa = LocalFunctional(t, s1)
            qb = LocalFunctional(t, s2)
            for fld in m.fields:
                if fld.name not in fam.transforms:
                    continue
                inner_b = generator_action(qb, fld, kernel)
                lhs1 = density_bracket(qa.smeared_density(), inner_b, kernel).at(0)
                inner_a = generator_action(qa, fld, kernel)
                lhs2 = density_bracket(qb.smeared_density(), inner_a, kernel).at(0)
                func, cent = smeared_bracket(qa, qb, kernel)
                rhs = density_bracket(func.density, JetExpr.field(fld), kernel).at(0)
                rhs_central = density_bracket(cent.density, JetExpr.field(fld), kernel).at(0) if cent.density else JetExpr()
                assert rhs_central.is_zero()
                assert (lhs1 - lhs2 - rhs).is_zero(), (name, fam.name, fld.name)


def test_match_closure_failure_reports_residual(models):
    m = models["free_boson"]
    fam = m.families[0]
    s1, s2 = fam.smear, SmearSymbol("g2")
    # a density outside the charge span
    bad = JetExpr.smear(s1) * JetExpr.smear(s2) * JetExpr.field(m.field("phi")) ** 4
    coeffs, residual = match_closure(m, [fam], bad, s1, s2)
    assert coeffs is None and not residual.is_zero()


# --- rescaling -------------------------------------------------------------------


def test_rescale_kernel_and_identity():
    m = builtin("free_boson")
    alpha = Parameter("alpha", 0)
    m2, rep = rescale_model(m, alpha)
    # {pi, phi} = alpha delta after the rescale
    assert m2.kernel.pair("pi", "phi")[0] == JetExpr.param(alpha)
    assert validate(m2) == []
    m3, _ = rescale_model(m, F(1))
    assert m3.kernel.entries == m.kernel.entries
    assert m3.hamiltonian.density == m.hamiltonian.density
    assert m3.families[0].charge_density == m.families[0].charge_density


def test_rescale_preserves_generators_and_witt():
    m = builtin("free_boson")
    alpha = Parameter("alpha", 0)
    m2, rep = rescale_model(m, alpha)
    for fam in m2.families:
        gen = check_generator(m2, fam)
        assert all(v is True for v in gen.values())
    rep2 = charge_algebra(m2)
    for fam in ("virasoro_plus", "virasoro_minus"):
        assert rep2.closure(fam, fam).coefficients == {(fam, "fg'-f'g"): F(-1)}


def test_rescale_exponent_measured():
    m = builtin("free_boson")
    alpha = Parameter("alpha", 0)
    _, rep = rescale_model(m, alpha)
    # at fixed original couplings the delta''' coefficient scales as alpha^1
    assert rep.alpha_exponents == {"virasoro_plus": "1", "virasoro_minus": "1"}
    assert rep.central_after["virasoro_plus"] == "-2*alpha^-1*lambda_plus^2"


def test_rescale_liouville_rational():
    m = builtin("liouville")
    m2, rep = rescale_model(m, F(2))
    assert validate(m2) == []
    assert rep.central_before["virasoro_plus"] == "-1/2"
    assert rep.central_after["virasoro_plus"] == "-1"
    for fam in m2.families:
        gen = check_generator(m2, fam)
        assert all(v is True for v in gen.values())


def test_rescale_reaches_any_prescribed_central():
    # there is a rational (lambda, alpha) making the central coefficient any
    # prescribed nonzero rational while the Witt constants are unchanged
    for target in (F(5, 7), F(-3), F(1)):
        base = builtin("free_boson").with_pinned({"lambda_plus": 1, "lambda_minus": 1})
        m2, _ = rescale_model(base, -target / 2)
        rep = charge_algebra(m2)
        assert rep.family("virasoro_plus").central_delta3 == JetExpr.const(target)
        assert rep.closure("virasoro_plus", "virasoro_plus").coefficients == {
            ("virasoro_plus", "fg'-f'g"): F(-1)
        }


def test_rescale_symbolic_exp_rejected():
    m = builtin("liouville")
    with pytest.raises(ValueError):
        rescale_model(m, Parameter("alpha", 0))
