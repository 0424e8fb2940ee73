"""Paired perturbed/unperturbed experiments, the 1-D counterexample, generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (Certificate, NegativeConditionInput, init_hint, levelset_verdict,
                          necessary_init_check, negative_certificate)
from .geometry import Box, Halfspace, SetFamily, as_vector
from .strings import PlanConstraints, PlanStage, StringPlan, dsap_run
from .superiorize import Objective, PerturbationSchedule, QuadraticDiag, superiorized_run
from .trace import RunTrace, StopRule

EQUAL_TOL = 1e-10
MAX_ATTACHED_ITERATES = 100_000


class RunFailed(RuntimeError):
    def __init__(self, label: str, err: Exception):
        super().__init__(f"{label} run failed: {err}")
        self.label = label


@dataclass
class ExperimentConfig:
    family: SetFamily
    objective: Objective
    plan: StringPlan
    schedule: PerturbationSchedule
    y0: np.ndarray
    stop: StopRule = field(default_factory=StopRule)
    diagnostics: NegativeConditionInput | None = None
    x_star: np.ndarray | None = None


@dataclass
class ComparisonReport:
    y_star: list
    x_star_run: list
    phi_y_star: float
    phi_x_star_run: float
    residuals: dict
    verdict: str
    certificates: dict = field(default_factory=dict)
    hints: dict = field(default_factory=dict)
    traces: dict | None = None

    def to_dict(self) -> dict:
        return {
            "y_star": self.y_star,
            "x_star_run": self.x_star_run,
            "phi_y_star": self.phi_y_star,
            "phi_x_star_run": self.phi_x_star_run,
            "residuals": self.residuals,
            "verdict": self.verdict,
            "certificates": {k: c.to_dict() for k, c in self.certificates.items()},
            "hints": self.hints,
            "traces": self.traces,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        d = dict(d)
        d["certificates"] = {k: Certificate.from_dict(c) for k, c in d.get("certificates", {}).items()}
        return cls(**d)


def superiority_verdict(phi_y: float, phi_x: float, tol: float = EQUAL_TOL) -> str:
    diff = phi_x - phi_y
    if abs(diff) <= tol:
        return "equal"
    return "superior" if diff > 0 else "inferior"


def run_legs(config: ExperimentConfig) -> tuple[RunTrace, RunTrace]:
    """(perturbed, unperturbed) traces from the same y0 and stage stream."""
    try:
        sup = superiorized_run(config.family, config.objective, config.plan, config.schedule,
                               config.y0, config.stop)
    except Exception as err:
        raise RunFailed("perturbed", err) from err
    try:
        base = dsap_run(config.family, config.plan, config.y0, config.stop, objective=config.objective)
    except Exception as err:
        raise RunFailed("unperturbed", err) from err
    return sup, base


def compare(config: ExperimentConfig, attach_traces: bool = False,
            max_attached: int = MAX_ATTACHED_ITERATES, legs=None) -> ComparisonReport:
    """Superiorized run against the same DSAP run without perturbations.

    ``legs`` takes the output of :func:`run_legs` to avoid rerunning.
    """
    sup, base = legs if legs is not None else run_legs(config)
    phi_y, phi_x = float(sup.phi[-1]), float(base.phi[-1])
    report = ComparisonReport(
        y_star=sup.y_final.tolist(), x_star_run=base.y_final.tolist(),
        phi_y_star=phi_y, phi_x_star_run=phi_x,
        residuals={
            "perturbed_max_violation": float(sup.violation[-1]),
            "unperturbed_max_violation": float(base.violation[-1]),
            "perturbed_schedule_tail": sup.tail_mass(),
            "perturbed_stop_reason": sup.stop_reason,
            "unperturbed_stop_reason": base.stop_reason,
            "perturbed_outer_iterations": sup.n_outer,
            "unperturbed_outer_iterations": base.n_outer,
        },
        verdict=superiority_verdict(phi_y, phi_x),
    )
    inp = config.diagnostics
    if inp is not None:
        report.certificates["negative_certificate"] = negative_certificate(inp)
        if config.x_star is not None:
            report.certificates["levelset"] = levelset_verdict(
                config.x_star, sup, inp, config.objective, config.family, config.stop.feas_tol)
        hint = init_hint(inp)
        if hint is not None:
            report.hints["min_init_distance_avoiding_levelset_failure"] = hint
    if attach_traces:
        n = len(sup.iterates) + len(base.iterates)
        if n <= max_attached:
            report.traces = {"perturbed": sup.to_dict(), "unperturbed": base.to_dict()}
        else:
            report.hints["traces_omitted"] = f"{n} iterates exceed the limit of {max_attached}"
    return report


# -- the 1-D counterexample ---------------------------------------------------

EXAMPLE_VARIANTS = {
    # upper end of C, c_hat, limit of the perturbed run
    "A": (10.0, 8.0, 9.0),
    "B": (1.5, 1.0, 0.5),
}


def example_config(variant: str = "A", y0: float = 13.0) -> ExperimentConfig:
    """phi(x) = x^2 on C = [0, U], beta_{k,0} = 2^-k, D = {0}."""
    upper, c_hat, _ = EXAMPLE_VARIANTS[variant]
    family = SetFamily([Box([0.0], [upper])])
    plan = StringPlan.repeated(PlanStage([(1,)], [1.0]), 1, PlanConstraints(delta=0.5, qbar=1))
    schedule = PerturbationSchedule.geometric(a=1.0, ratio=0.5, inner_lengths=1)
    diag = NegativeConditionInput.from_schedule(c_hat=[c_hat], r=1.0, dist_to_D_lb=c_hat,
                                                schedule=schedule, y0=[y0])
    return ExperimentConfig(family=family, objective=QuadraticDiag([1.0], [0.0]), plan=plan,
                            schedule=schedule, y0=as_vector([y0]), stop=StopRule(),
                            diagnostics=diag, x_star=as_vector([0.0]))


@dataclass
class Check:
    name: str
    expected: float
    actual: float
    tol: float

    @property
    def passed(self) -> bool:
        return abs(self.actual - self.expected) <= self.tol


def reproduce_example(variant: str = "A", n_outer: int = 60, formula_upto: int = 50):
    """Run the counterexample and compare against ``y^k = U - sum_{l=1}^{k-1} 2^-l``.

    Returns ``(trace, checks)``; ``checks`` holds one entry per k <= formula_upto
    (tolerance 1e-12) and one for the limit (tolerance 1e-9).
    """
    if variant not in EXAMPLE_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected A or B")
    upper, _, limit = EXAMPLE_VARIANTS[variant]
    cfg = example_config(variant)
    # min_beta_tail=0 never fires, so the run takes exactly n_outer steps.
    stop = StopRule(feas_tol=1e-9, max_outer=n_outer, min_beta_tail=0.0)
    trace = superiorized_run(cfg.family, cfg.objective, cfg.plan, cfg.schedule, cfg.y0, stop)
    checks = []
    for k in range(1, min(formula_upto, trace.n_outer) + 1):
        expected = upper - math.fsum(2.0 ** -l for l in range(1, k))
        checks.append(Check(f"y^{k}", expected, float(trace.iterates[k][0]), 1e-12))
    checks.append(Check("limit", limit, float(trace.y_final[0]), 1e-9))
    return trace, checks


# -- generators ---------------------------------------------------------------


def generate_halfspace_problem(dim: int, m: int, seed: int, witness_margin: float = 1.0) -> SetFamily:
    """m random halfspaces whose bounding hyperplanes are at least ``witness_margin`` from the origin."""
    if dim < 1 or m < 1:
        raise ValueError("dim and m must be >= 1")
    if not witness_margin > 0:
        raise ValueError("witness_margin must be positive")
    rng = np.random.default_rng(seed)
    sets = []
    for _ in range(m):
        a = rng.standard_normal(dim)
        while np.linalg.norm(a) < 1e-3:
            a = rng.standard_normal(dim)
        slack = witness_margin * (1.0 + rng.uniform(0.0, 1.0))
        sets.append(Halfspace(a, float(np.linalg.norm(a)) * slack))
    return SetFamily(sets, intersection_witness=np.zeros(dim))


def random_plan(m: int, seed: int, delta: float | None = None) -> StringPlan:
    delta = 0.5 / m if delta is None else delta
    return StringPlan.seeded_random(m, seed, PlanConstraints(delta=delta, qbar=m))


def cyclic_plan(m: int) -> StringPlan:
    """Sequential projections: one string visiting every set once, then the reverse."""
    fwd = PlanStage([tuple(range(1, m + 1))], [1.0])
    bwd = PlanStage([tuple(range(m, 0, -1))], [1.0])
    return StringPlan.cyclic([fwd, bwd] if m > 1 else [fwd], m, PlanConstraints(delta=0.5 / m, qbar=m))


def trace_digest(trace: RunTrace) -> bytes:
    """Byte image of a trace for determinism checks."""
    return trace.iterates.tobytes() + trace.violation.tobytes() + \
        (b"" if trace.phi is None else trace.phi.tobytes()) + trace.stop_reason.encode()
