import random
from fractions import Fraction as F

import pytest

from anomalylab.errors import MissingKernelEntry, NonConstantCentralCandidate
from anomalylab.jetexpr import FERMION, FieldSymbol, JetExpr, Parameter, SmearSymbol
from anomalylab.pbracket import (
    BracketKernel,
    CentralPart,
    DistExpr,
    LocalFunctional,
    central_charge,
    central_coeff,
    check_jacobi,
    contraction_bracket,
    density_bracket,
    generator_action,
    smeared_bracket,
)
from anomalylab.varcalc import functionals_equal, reduce_mod_dx

phi = FieldSymbol("phi")
pi_ = FieldSymbol("pi")
psi = FieldSymbol("psi", FERMION)
u = FieldSymbol("u")
fx = SmearSymbol("f")
gx = SmearSymbol("g")
lam = Parameter("lambda_plus", 1)
LAM = JetExpr.param(lam)

PH, PI_ = JetExpr.field(phi), JetExpr.field(pi_)
PHX = JetExpr.field(phi, dx=1)
PS, PSX = JetExpr.field(psi), JetExpr.field(psi, dx=1)
U, UX = JetExpr.field(u), JetExpr.field(u, dx=1)
E2 = JetExpr.exponential([(phi, F(2))])

WITT_PATTERN = JetExpr.smear(fx) * JetExpr.smear(gx, dx=1) - JetExpr.smear(fx, dx=1) * JetExpr.smear(gx)


def boson_kernel():
    k = BracketKernel([phi, pi_])
    k.set_entry("pi", "phi", 0, 1)
    k.set_entry("phi", "pi", 0, -1)
    return k


def fermion_kernel():
    k = BracketKernel([psi])
    k.set_entry("psi", "psi", 0, F(1, 2))
    return k


def u_kernel():
    k = BracketKernel([u])
    k.set_entry("u", "u", 1, 1)
    return k


def boson_T(lam_expr=LAM):
    return F(1, 4) * (PI_ ** 2 + PHX ** 2 + 2 * PI_ * PHX) - lam_expr * (
        JetExpr.field(phi, dx=2) + JetExpr.field(pi_, dx=1)
    )


def test_kernel_antisymmetry():
    assert boson_kernel().antisymmetry_violations() == []
    assert fermion_kernel().antisymmetry_violations() == []
    assert u_kernel().antisymmetry_violations() == []
    bad = BracketKernel([phi, pi_])
    bad.set_entry("pi", "phi", 0, 1)
    bad.set_entry("phi", "pi", 0, 1)  # must be -1
    assert bad.antisymmetry_violations()


def test_missing_kernel_entry():
    k = boson_kernel()
    with pytest.raises(MissingKernelEntry):
        density_bracket(PS, PS, k)


def test_fundamental_brackets():
    assert density_bracket(PI_, PH, boson_kernel()) == DistExpr({0: JetExpr.const(1)})
    assert density_bracket(PS, PS, fermion_kernel()) == DistExpr({0: JetExpr.const(F(1, 2))})


def test_hamiltonian_flow_smeared():
    k = boson_kernel()
    h = LocalFunctional(F(1, 2) * PI_ ** 2 + F(1, 2) * PHX ** 2)
    func, cent = smeared_bracket(h, LocalFunctional(PH, fx), k)
    assert func == LocalFunctional(JetExpr.smear(fx) * PI_)
    assert cent.is_zero()


def test_boson_stress_self_bracket():
    d = density_bracket(boson_T(), boson_T(), boson_kernel())
    assert d.at(3) == -2 * LAM ** 2
    assert d.at(2).is_zero()
    assert d.at(1) == 2 * boson_T()
    assert d.at(0) == boson_T().derive("x")
    assert central_coeff(d) == -2 * LAM ** 2
    assert central_charge(d) == -24 * LAM ** 2


def test_boson_t_tbar_vanishes():
    lm = Parameter("lambda_minus", 1)
    LM = JetExpr.param(lm)
    tbar = -F(1, 4) * (PI_ ** 2 + PHX ** 2 - 2 * PI_ * PHX) + LM * (
        JetExpr.field(phi, dx=2) - JetExpr.field(pi_, dx=1)
    )
    assert density_bracket(boson_T(), tbar, boson_kernel()).is_zero()
    d = density_bracket(tbar, tbar, boson_kernel())
    assert d.at(3) == 2 * LM ** 2


def test_liouville_stress_self_bracket():
    t = (
        F(1, 4) * (PI_ ** 2 + PHX ** 2 + 2 * PI_ * PHX)
        + F(1, 2) * E2
        - F(1, 2) * (JetExpr.field(phi, dx=2) + JetExpr.field(pi_, dx=1))
    )
    d = density_bracket(t, t, boson_kernel())
    assert d.at(3) == JetExpr.const(F(-1, 2))
    assert d.at(1) == 2 * t
    assert d.at(0) == t.derive("x")
    assert central_charge(d) == JetExpr.const(-6)


def test_fj_stress_self_bracket():
    lamu = Parameter("lam", 1)
    t = F(1, 2) * U ** 2 - JetExpr.param(lamu) * UX
    d = density_bracket(t, t, u_kernel())
    assert d.at(3) == -JetExpr.param(lamu) ** 2
    assert d.at(1) == 2 * t
    assert d.at(0) == t.derive("x")


def test_fermion_generators_and_witt():
    k = fermion_kernel()
    t = -(PS * PSX)
    assert generator_action(LocalFunctional(t), psi, k) == PSX
    act = generator_action(LocalFunctional(t, fx), psi, k)
    assert act == JetExpr.smear(fx) * PSX + F(1, 2) * JetExpr.smear(fx, dx=1) * PS
    func, cent = smeared_bracket(LocalFunctional(t, fx), LocalFunctional(t, gx), k)
    assert cent.is_zero()
    assert func == LocalFunctional(-WITT_PATTERN * t)
    # unsmeared self-bracket has no delta''' at all
    assert central_coeff(density_bracket(t, t, k)).is_zero()


def test_shift_charge_central():
    k = fermion_kernel()
    g = LocalFunctional(2 * PS)
    dist = density_bracket(2 * PS, 2 * PS, k)
    assert dist == DistExpr({0: JetExpr.const(2)})
    func, cent = smeared_bracket(g, g, k)
    assert func.density.is_zero()
    assert cent.density == JetExpr.const(2)
    # charge level: oint gives 2 * (2 PI R) = 4 PI R
    from anomalylab.jetexpr import PI as PI_CONST

    r = Parameter("R", 0)
    value = cent.constant_value(2 * JetExpr.param(PI_CONST) * JetExpr.param(r))
    assert value == 4 * JetExpr.param(PI_CONST) * JetExpr.param(r)


def test_kappa_shift_generator():
    k = fermion_kernel()
    kap = SmearSymbol("kappa", FERMION)
    q = LocalFunctional(2 * PS, kap)
    assert generator_action(q, psi, k) == JetExpr.smear(kap)


def test_central_part_requires_field_free():
    with pytest.raises(ValueError):
        CentralPart(PH)


def test_non_constant_central_candidate():
    d = DistExpr({3: PH})
    with pytest.raises(NonConstantCentralCandidate):
        central_coeff(d)


def test_distexpr_json():
    d = DistExpr({3: JetExpr.const(F(-1, 2)), 0: PH})
    js = d.to_json()
    assert js[0] == {"k": 3, "coeff": "-1/2"}
    assert js[1] == {"k": 0, "coeff": "phi"}


def test_jacobi_probes():
    res = check_jacobi(boson_kernel(), [(PI_ ** 2, PH ** 2, PI_ * PH), (boson_T(), boson_T(), PI_ * PH)])
    assert all(r.ok for r in res)
    res = check_jacobi(fermion_kernel(), [(PS * PSX, PS * PSX, PS)])
    assert all(r.ok for r in res)
    res = check_jacobi(u_kernel(), [(U ** 2, U * UX, F(1, 2) * U ** 2)])
    assert all(r.ok for r in res)


BOSON_POOL = [PI_ ** 2, PH * PI_, PHX * PH, PI_, boson_T(), PH ** 2, E2]
FERMI_POOL = [PS, PSX, PS * PSX, 2 * PS]


def test_graded_antisymmetry_randomized():
    k, kf = boson_kernel(), fermion_kernel()
    rng = random.Random(17)
    for _ in range(40):
        a, b = rng.choice(BOSON_POOL), rng.choice(BOSON_POOL)
        f1, c1 = smeared_bracket(LocalFunctional(a, fx), LocalFunctional(b, gx), k)
        f2, c2 = smeared_bracket(LocalFunctional(b, gx), LocalFunctional(a, fx), k)
        assert reduce_mod_dx(f1.density + f2.density).is_zero()
        assert reduce_mod_dx(c1.density + c2.density).is_zero()
    for _ in range(30):
        a, b = rng.choice(FERMI_POOL), rng.choice(FERMI_POOL)
        sign = 1 if (a.parity() == "odd" and b.parity() == "odd") else -1
        f1, c1 = smeared_bracket(LocalFunctional(a, fx), LocalFunctional(b, gx), kf)
        f2, c2 = smeared_bracket(LocalFunctional(b, gx), LocalFunctional(a, fx), kf)
        assert reduce_mod_dx(f1.density - sign * f2.density).is_zero()
        assert reduce_mod_dx(c1.density - sign * c2.density).is_zero()


def test_route_equivalence_randomized():
    k, kf = boson_kernel(), fermion_kernel()
    rng = random.Random(23)
    for _ in range(40):
        a, b = rng.choice(BOSON_POOL), rng.choice(BOSON_POOL)
        fa, gb = LocalFunctional(a, fx), LocalFunctional(b, gx)
        f1, c1 = smeared_bracket(fa, gb, k)
        other = contraction_bracket(fa, gb, k)
        assert reduce_mod_dx(f1.density + c1.density - other).is_zero()
    for _ in range(20):
        a, b = rng.choice(FERMI_POOL), rng.choice(FERMI_POOL)
        fa, gb = LocalFunctional(a, fx), LocalFunctional(b, gx)
        f1, c1 = smeared_bracket(fa, gb, kf)
        other = contraction_bracket(fa, gb, kf)
        assert reduce_mod_dx(f1.density + c1.density - other).is_zero()


def test_centrals_are_central():
    # the central part of any smeared bracket has no field content, so its
    # bracket with anything vanishes identically
    k = boson_kernel()
    _, cent = smeared_bracket(LocalFunctional(boson_T(), fx), LocalFunctional(boson_T(), gx), k)
    assert not cent.density.field_names()
    assert density_bracket(cent.density, PH, k).is_zero()
    assert density_bracket(cent.density, boson_T(), k).is_zero()
