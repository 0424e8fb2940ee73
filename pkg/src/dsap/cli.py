"""Command line: ``dsap run|compare|certify|reproduce``.

Exit codes: 0 success (for ``run``: converged), 1 input error,
2 ``run`` hit the iteration cap before converging (and, for ``reproduce``,
a closed-form check failed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .diagnostics import (DiagnosticsError, lemma_precondition, levelset_verdict,
                          necessary_init_check, negative_certificate)
from .harness import RunFailed, compare, reproduce_example, run_legs
from .problem import ProblemError, load_problem
from .strings import StringPlan, dsap_run
from .superiorize import superiorized_run

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _emit(text: str, path: str | None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args):
    cfg = load_problem(args.problem)
    if args.max_outer is not None or args.feas_tol is not None:
        cfg.stop = dataclasses.replace(
            cfg.stop,
            max_outer=cfg.stop.max_outer if args.max_outer is None else args.max_outer,
            feas_tol=cfg.stop.feas_tol if args.feas_tol is None else args.feas_tol)
    if args.seed is not None:
        if cfg.plan.mode != "seeded_random":
            print(f"warning: --seed ignored for a {cfg.plan.mode} plan", file=sys.stderr)
        else:
            cfg.plan = StringPlan.seeded_random(cfg.plan.m, args.seed, cfg.plan.constraints,
                                                cfg.plan.max_strings)
    return cfg


def _csv_context(cfg):
    if cfg.diagnostics is None:
        return {}
    return {"c_hat": cfg.diagnostics.c_hat, "r": cfg.diagnostics.r}


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.unperturbed:
        trace = dsap_run(cfg.family, cfg.plan, cfg.y0, cfg.stop, objective=cfg.objective)
    else:
        trace = superiorized_run(cfg.family, cfg.objective, cfg.plan, cfg.schedule, cfg.y0, cfg.stop)
    if args.trace_out:
        Path(args.trace_out).write_text(trace.to_csv(**_csv_context(cfg)))
    _emit(_dump(trace.summary()), args.report_out)
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def cmd_compare(args) -> int:
    cfg = _load(args)
    sup, base = run_legs(cfg)
    report = compare(cfg, attach_traces=args.attach_traces, legs=(sup, base))
    if args.trace_out:
        ctx = _csv_context(cfg)
        out = Path(args.trace_out)
        out.write_text(sup.to_csv(**ctx))
        out.with_name(out.stem + "_unperturbed" + out.suffix).write_text(base.to_csv(**ctx))
    _emit(_dump(report.to_dict()), args.report_out)
    return EXIT_OK


def certify_document(cfg) -> dict:
    inp = cfg.diagnostics
    doc = {
        "input": inp.to_dict(),
        "lemma_precondition": dataclasses.asdict(lemma_precondition(inp)),
        "negative_certificate": negative_certificate(inp).to_dict(),
        "necessary_init_check": [dataclasses.asdict(q) for q in necessary_init_check(inp)],
    }
    if cfg.x_star is not None:
        trace = superiorized_run(cfg.family, cfg.objective, cfg.plan, cfg.schedule, cfg.y0, cfg.stop)
        doc["levelset_verdict"] = levelset_verdict(cfg.x_star, trace, inp, cfg.objective, cfg.family,
                                                   cfg.stop.feas_tol).to_dict()
    return doc


def _render_certify(doc: dict) -> str:
    def row(q):
        status = {True: "satisfied", False: "violated", None: "not applicable"}[q["satisfied"]]
        return f"  {q['name']:<32} {q['lhs']:>24.17g} {q['relation']:>2} {q['rhs']:<24.17g} {status}"

    lines = ["drift-bound precondition", row(doc["lemma_precondition"])]
    lines.append(f"negative certificate: {doc['negative_certificate']['verdict']}")
    lines += [row(q) for q in doc["negative_certificate"]["checked_inequalities"]]
    app, cond = doc["necessary_init_check"]
    lines.append("necessary initialization check"
                 + ("" if app["satisfied"] else " (not applicable: distance does not exceed total)"))
    lines += [row(app), row(cond)]
    if "levelset_verdict" in doc:
        lv = doc["levelset_verdict"]
        lines.append(f"level-set verdict: {lv['verdict']}")
        lines += [row(q) for q in lv["checked_inequalities"]]
        lines += ["  cross-check" + row(q)[1:] for q in lv["cross_checks"]]
        lines += ["  note: " + n for n in lv["notes"]]
    return "\n".join(lines) + "\n"


def cmd_certify(args) -> int:
    cfg = _load(args)
    if cfg.diagnostics is None:
        print(f"error: {args.problem} has no diagnostics section", file=sys.stderr)
        return EXIT_INPUT
    doc = certify_document(cfg)
    if args.report_out:
        Path(args.report_out).write_text(_dump(doc))
    sys.stdout.write(_render_certify(doc))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    trace, checks = reproduce_example(args.variant)
    if args.trace_out:
        Path(args.trace_out).write_text(trace.to_csv())
    failed = [c for c in checks if not c.passed]
    out = {
        "variant": args.variant,
        "outer_iterations": trace.n_outer,
        "y_final": trace.y_final.tolist(),
        "checks_passed": len(checks) - len(failed),
        "checks_total": len(checks),
        "first_failure": None if not failed else dataclasses.asdict(failed[0]),
    }
    _emit(_dump(out), args.report_out)
    return EXIT_OK if not failed else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def problem_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("problem", help="YAML problem file")
        p.add_argument("--trace-out", metavar="PATH", help="write the per-iterate CSV here")
        p.add_argument("--report-out", metavar="PATH", help="write the JSON output here instead of stdout")
        p.add_argument("--max-outer", type=int, metavar="N")
        p.add_argument("--feas-tol", type=float, metavar="X")
        p.add_argument("--seed", type=int, metavar="S", help="override the seed of a seeded_random plan")
        return p

    p = problem_cmd("run", "run the superiorized method (or plain DSAP with --unperturbed)")
    p.add_argument("--unperturbed", action="store_true")
    p.set_defaults(func=cmd_run)
    p = problem_cmd("compare", "perturbed vs unperturbed run from the same start")
    p.add_argument("--attach-traces", action="store_true", help="embed both traces in the report")
    p.set_defaults(func=cmd_compare)
    problem_cmd("certify", "evaluate the negative-condition certificates").set_defaults(func=cmd_certify)

    p = sub.add_parser("reproduce", help="rerun the 1-D counterexample against its closed form")
    p.add_argument("variant", choices=["A", "B"])
    p.add_argument("--trace-out", metavar="PATH")
    p.add_argument("--report-out", metavar="PATH")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ProblemError, DiagnosticsError, RunFailed, ValueError, ArithmeticError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
