import json

import numpy as np
import pytest

from dsap import (ExperimentConfig, Linear, PerturbationSchedule, StopRule, compare, dsap_run,
                  generate_halfspace_problem, max_violation, reproduce_example)
from dsap.harness import (RunFailed, cyclic_plan, example_config, random_plan, run_legs,
                          superiority_verdict, trace_digest)
from dsap import ComparisonReport


def test_verdict_tolerance():
    assert superiority_verdict(1.0, 1.0 + 5e-11) == "equal"
    assert superiority_verdict(1.0, 2.0) == "superior"
    assert superiority_verdict(2.0, 1.0) == "inferior"


def test_compare_example_a():
    cfg = example_config("A")
    cfg.x_star = np.array([10.0])  # the unperturbed limit
    rep = compare(cfg)
    assert rep.x_star_run == [10.0]
    assert rep.y_star[0] == pytest.approx(9.0, abs=1e-9)
    assert rep.phi_x_star_run == 100.0 and rep.phi_y_star == pytest.approx(81.0, abs=1e-7)
    assert rep.verdict == "superior"
    # D is all of C here, so nothing can be certified
    assert rep.certificates["levelset"].verdict == "inconclusive"


def test_compare_null_schedule_is_equal():
    fam = generate_halfspace_problem(3, 4, seed=8)
    cfg = ExperimentConfig(fam, Linear([1, -2, 0.5]), random_plan(4, 8),
                           PerturbationSchedule.geometric(1e-300, 0.5, 1), np.array([7.0, 7.0, -9.0]))
    assert compare(cfg).verdict == "equal"


def test_compare_smoke_and_round_trip():
    fam = generate_halfspace_problem(2, 3, seed=21)
    cfg = ExperimentConfig(fam, Linear([1, 2]), cyclic_plan(3),
                           PerturbationSchedule.geometric(1.0, 0.8, 2), np.array([50.0, -40.0]))
    rep = compare(cfg, attach_traces=True)
    assert rep.verdict in ("superior", "equal", "inferior")
    assert rep.residuals["perturbed_max_violation"] <= 1e-9
    text = json.dumps(rep.to_dict())
    back = ComparisonReport.from_dict(json.loads(text))
    assert back.to_dict() == rep.to_dict()
    small = compare(cfg, attach_traces=True, max_attached=3)
    assert small.traces is None and "traces_omitted" in small.hints


def test_unperturbed_leg_matches_standalone_run():
    fam = generate_halfspace_problem(4, 6, seed=3)
    cfg = ExperimentConfig(fam, Linear([1, 0, 0, 1]), random_plan(6, 3),
                           PerturbationSchedule.geometric(0.7, 0.6, 2), np.array([9.0, -9.0, 4.0, 1.0]))
    _, base = run_legs(cfg)
    alone = dsap_run(fam, random_plan(6, 3), cfg.y0, cfg.stop, objective=cfg.objective)
    assert trace_digest(base) == trace_digest(alone)


def test_run_errors_are_labelled():
    fam = generate_halfspace_problem(2, 3, seed=1)
    cfg = ExperimentConfig(fam, Linear([1, 2, 3]), cyclic_plan(3),
                           PerturbationSchedule.geometric(), np.array([1.0, 1.0]))
    with pytest.raises(RunFailed, match="perturbed"):
        compare(cfg)


def test_reproduce_closed_form():
    tr, checks = reproduce_example("A")
    assert tr.iterates[3][0] == 9.25
    assert all(c.passed for c in checks)
    assert checks[-1].name == "limit" and abs(checks[-1].actual - 9.0) <= 1e-9
    trb, checks_b = reproduce_example("B")
    assert all(c.passed for c in checks_b) and abs(trb.y_final[0] - 0.5) <= 1e-9
    with pytest.raises(ValueError):
        reproduce_example("C")


def test_generator():
    fam = generate_halfspace_problem(2, 3, seed=7)
    assert max_violation(fam, [0.0, 0.0]) == 0.0
    for h in generate_halfspace_problem(5, 8, seed=1, witness_margin=1.0).sets:
        assert h.b / np.linalg.norm(h.a) >= 1.0
    a, b = generate_halfspace_problem(3, 4, 11), generate_halfspace_problem(3, 4, 11)
    assert all(np.array_equal(s.a, t.a) and s.b == t.b for s, t in zip(a.sets, b.sets))
    with pytest.raises(ValueError):
        generate_halfspace_problem(2, 3, 1, witness_margin=0)


def test_stop_rule_validation():
    with pytest.raises(ValueError):
        StopRule(max_outer=0)
    with pytest.raises(ValueError):
        StopRule(feas_tol=-1)
