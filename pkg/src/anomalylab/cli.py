"""Command line driver.

Verbs: ``models``, ``validate``, ``report``, ``bracket``, ``oracle``,
``parse``.  Models are builtin names or paths to model-definition files.
``--set name=p/q`` pins parameters to exact rationals; ``--format text|json``
selects the output; the default oracle seed comes from ANOMALYLAB_SEED.

Exit codes: 0 all checks pass; 2 validation failure; 3 check failure;
4 parse error; 5 non-polynomial model passed to the oracle.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import __version__
from .errors import (
    AnomalyLabError,
    ModelSyntaxError,
    NonPolynomialDensity,
    UnknownModel,
    ValidationError,
)
from .jetexpr import render_expr
from .models import BUILTIN_NAMES, Model, builtin, parse_expr, parse_model, render_model, validate
from .modeoracle import cross_validate
from .noether import charge_algebra
from .pbracket import central_charge, central_coeff, density_bracket
from .varcalc import reduce_mod_dx

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CHECK = 3
EXIT_PARSE = 4
EXIT_NONPOLYNOMIAL = 5

CONVENTIONS = {
    "light_cone": "d_pm = (d_x +- d_t) / 2, z_pm = x +- t",
    "circle": "spatial circle of circumference 2*PI*R; oint dx 1 = 2*PI*R",
    "bracket": (
        "{F, G} = oint oint (dR F/dPhi_i)(x) K_ij(x,y) (dL G/dPhi_j)(y); "
        "right derivative on the first slot, left on the second"
    ),
    "generator": "delta(Phi) = {Q[eps], Phi}",
    "fermions": "left-derivative convention for all public functional derivatives",
    "central_charge": "c = 12 * coefficient of dy^3(delta) in the stress self-bracket",
    "witt_closure": (
        "{Q[f], Q[g]} = -Q[fg'-f'g], the smeared form of "
        "{L_n, L_m} = (n-m) L_{n+m} for L_n = oint z^(n+1) T"
    ),
    "fj_model": "chiral boson stored in u = dx(phi); the zero mode of phi is dropped",
}


def _fail_parse(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_PARSE


def _resolve_model(name: str) -> Model:
    if name in BUILTIN_NAMES:
        return builtin(name)
    if os.path.exists(name):
        with open(name, "r", encoding="utf-8") as fh:
            return parse_model(fh.read())
    raise UnknownModel(f"no builtin model or file named {name!r}")


def _apply_sets(model: Model, sets) -> Model:
    overrides = {}
    for item in sets or ():
        name, _, value = item.partition("=")
        if not _ or not name or not value:
            raise ValueError(f"--set expects name=p/q, got {item!r}")
        overrides[name.strip()] = Fraction(value.strip())
    return model.with_pinned(overrides) if overrides else model


def _emit(payload: dict, text_lines, fmt: str):
    if fmt == "json":
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        for line in text_lines:
            print(line)


def cmd_models(args) -> int:
    payload = {"version": __version__, "models": list(BUILTIN_NAMES)}
    _emit(payload, BUILTIN_NAMES, args.format)
    return EXIT_OK


def cmd_validate(args) -> int:
    model = _apply_sets(_resolve_model(args.model), args.set)
    violations = validate(model)
    payload = {
        "version": __version__,
        "model": model.name,
        "ok": not violations,
        "violations": violations,
    }
    lines = [f"model {model.name}: " + ("ok" if not violations else "INVALID")]
    lines += [f"  - {v}" for v in violations]
    _emit(payload, lines, args.format)
    return EXIT_OK if not violations else EXIT_VALIDATION


def _report_payload(model: Model, include_oracle: bool, args):
    violations = validate(model)
    payload = {
        "version": __version__,
        "model": model.name,
        "conventions": CONVENTIONS,
        "pinned": {k: str(v) for k, v in sorted(model.pinned.items()) if v is not None},
        "validation": violations,
    }
    if violations:
        return payload, EXIT_VALIDATION
    report = charge_algebra(model)
    payload["families"] = [fr.to_json() for fr in report.families]
    payload["closures"] = [c.to_json() for c in report.closures]
    ok = report.all_ok()
    if include_oracle:
        oracle_reports = []
        for fam in model.families:
            try:
                rep = cross_validate(
                    model,
                    fam.name,
                    cutoff=args.modes,
                    trials=args.trials,
                    seed=args.seed,
                    tol=args.tol,
                )
            except NonPolynomialDensity as exc:
                oracle_reports.append({"family": fam.name, "skipped": str(exc)})
                continue
            oracle_reports.append(rep.to_json())
            ok = ok and rep.ok
        payload["oracle"] = oracle_reports
    return payload, (EXIT_OK if ok else EXIT_CHECK)


def _report_text(payload) -> list:
    lines = [f"anomalylab {payload['version']} — model {payload['model']}"]
    lines.append("conventions:")
    for key in sorted(payload["conventions"]):
        lines.append(f"  {key}: {payload['conventions'][key]}")
    if payload.get("pinned"):
        lines.append("pinned: " + ", ".join(f"{k}={v}" for k, v in sorted(payload["pinned"].items())))
    if payload["validation"]:
        lines.append("VALIDATION FAILED:")
        lines += [f"  - {v}" for v in payload["validation"]]
        return lines
    for fam in payload["families"]:
        lines.append(f"family {fam['family']} (chirality {fam['chirality']}, smear {fam['smear']}):")
        lines.append(f"  action symmetry: {'yes' if fam['action_symmetry'] else 'NO: ' + fam['action_obstruction']}")
        gen = fam["generator"]
        ok = all(v is True for v in gen.values())
        lines.append(f"  generator delta(Phi) = {{Q[eps], Phi}}: {'yes' if ok else gen}")
        lines.append(f"  conservation: {'yes' if fam['conservation'] else 'NO'}")
        if fam["chirality_check"] is not None:
            lines.append(f"  chirality of T: {'yes' if fam['chirality_check'] else 'NO'}")
        if fam["central_by_k"]:
            lines.append(f"  central terms by delta-derivative order: {fam['central_by_k']}")
        lines.append(f"  delta''' coefficient: {fam['central_delta3']}  =>  c = {fam['central_charge']}")
        if fam["central_constant"]:
            lines.append(f"  charge-level central value: {fam['central_constant']}")
        lines.append(f"  classification: {fam['classification']}")
    for c in payload["closures"]:
        status = "closes" if c["closes"] else f"FAILS: {c['residual']}"
        coeffs = ", ".join(f"{k} -> {v}" for k, v in sorted(c["coefficients"].items())) or "0"
        lines.append(f"closure {{{c['first']}, {c['second']}}}: {status} [{coeffs}]")
    for orc in payload.get("oracle", []):
        if "skipped" in orc:
            lines.append(f"oracle {orc['family']}: skipped ({orc['skipped']})")
        else:
            lines.append(
                f"oracle {orc['family']}: N={orc['N']} seed={orc['seed']} "
                f"max_rel_dev={orc['max_rel_dev']:.3e} pass={orc['pass']}"
            )
    return lines


def cmd_report(args) -> int:
    model = _apply_sets(_resolve_model(args.model), args.set)
    payload, code = _report_payload(model, args.oracle, args)
    _emit(payload, _report_text(payload), args.format)
    return code


def cmd_bracket(args) -> int:
    model = _apply_sets(_resolve_model(args.model), args.set)
    symbols = model.symbol_table()
    pins = {k: v for k, v in model.pinned.items() if v is not None}

    def resolve(text):
        # declared stress densities can be referenced by name
        if text in model.stress:
            return model.stress[text].substitute_params(pins)
        return parse_expr(text, symbols).substitute_params(pins)

    a = resolve(args.density_a)
    b = resolve(args.density_b)
    from .noether import _pinned_kernel

    dist = density_bracket(a, b, _pinned_kernel(model))
    payload = {
        "version": __version__,
        "model": model.name,
        "A": args.density_a,
        "B": args.density_b,
        "bracket": dist.to_json(),
    }
    lines = [f"{{A(x), B(y)}} = {dist}"]
    stress_match = a == b and any(
        a == s.substitute_params(pins) for s in model.stress.values()
    )
    if stress_match:
        c3 = central_coeff(dist)
        payload["central_delta3"] = render_expr(c3)
        payload["central_charge"] = render_expr(central_charge(dist))
        lines.append(f"delta''' coefficient: {render_expr(c3)}  =>  c = {render_expr(c3 * 12)}")
    k0_free = dist.at(0).field_free_part()
    if k0_free:
        value = k0_free * model.circumference()
        payload["charge_level_central"] = render_expr(value)
        lines.append(f"charge-level central (after oint oint): {render_expr(value)}")
    _emit(payload, lines, args.format)
    return EXIT_OK


def cmd_oracle(args) -> int:
    model = _apply_sets(_resolve_model(args.model), args.set)
    families = [model.family(args.family)] if args.family else model.families
    reports = []
    ok = True
    for fam in families:
        rep = cross_validate(
            model, fam.name, cutoff=args.modes, trials=args.trials, seed=args.seed, tol=args.tol
        )
        reports.append(rep)
        ok = ok and rep.ok
    payload = {
        "version": __version__,
        "model": model.name,
        "reports": [r.to_json() for r in reports],
    }
    lines = []
    for r in reports:
        lines.append(
            f"{r.model}/{r.family}: N={r.cutoff} seed={r.seed} trials={r.trials} "
            f"max_rel_dev={r.max_rel_dev:.3e} exact={r.exact_matches} pass={r.ok}"
            + (f" ({r.message})" if r.message else "")
        )
        for n in sorted(r.fitted_central):
            lines.append(f"  central(n={n}): fitted {r.fitted_central[n]} vs symbolic {r.symbolic_central[n]}")
    _emit(payload, lines, args.format)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_parse(args) -> int:
    with open(args.file, "r", encoding="utf-8") as fh:
        text = fh.read()
    model = parse_model(text)
    payload = {"version": __version__, "model": model.name, "canonical": render_model(model)}
    _emit(payload, [render_model(model).rstrip()], args.format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anomalylab",
        description="Detect classical anomalies of 1+1 dimensional field theories.",
    )
    parser.add_argument("--version", action="version", version=f"anomalylab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    default_seed = int(os.environ.get("ANOMALYLAB_SEED", "0"))

    def add_common(p, with_sets=True):
        p.add_argument("--format", choices=("text", "json"), default="text")
        if with_sets:
            p.add_argument(
                "--set",
                action="append",
                metavar="NAME=P/Q",
                help="pin a parameter to an exact rational (repeatable)",
            )

    p = sub.add_parser("models", help="list builtin models")
    add_common(p, with_sets=False)
    p.set_defaults(func=cmd_models)

    p = sub.add_parser("validate", help="check the structural invariants of a model")
    p.add_argument("model")
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="full anomaly report for a model")
    p.add_argument("model")
    add_common(p)
    p.add_argument("--oracle", action="store_true", help="also run the mode oracle")
    p.add_argument("--modes", type=int, default=16)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=default_seed)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bracket", help="equal-time bracket of two densities")
    p.add_argument("model")
    p.add_argument("density_a")
    p.add_argument("density_b")
    add_common(p)
    p.set_defaults(func=cmd_bracket)

    p = sub.add_parser("oracle", help="numeric mode-truncation cross-validation")
    p.add_argument("model")
    p.add_argument("--family", default=None)
    p.add_argument("--modes", type=int, default=16)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=default_seed)
    p.add_argument("--tol", type=float, default=1e-9)
    add_common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("parse", help="parse a model file and print its canonical form")
    p.add_argument("file")
    add_common(p, with_sets=False)
    p.set_defaults(func=cmd_parse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonPolynomialDensity as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONPOLYNOMIAL
    except (ModelSyntaxError, UnknownModel) as exc:
        return _fail_parse(str(exc))
    except ValidationError as exc:
        print(f"error: model invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        return _fail_parse(str(exc))
    except (AnomalyLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
