"""Certificates that a superiorized run cannot end in a target set D.

All inequalities are evaluated exactly as stated, with no slack, except for
:func:`verify_claim_i`, which is a bug detector on floating-point traces.
Distances to D enter only through a caller-certified lower bound, which
keeps every strict ">" certificate sound.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import ConvexSet, SetFamily, as_vector, max_violation
from .superiorize import Objective, PerturbationSchedule
from .trace import DEFAULT_FEAS_TOL, DEFAULT_TAIL_TOL, RunTrace

log = logging.getLogger(__name__)

HOLDS = "negative_condition_holds"
INCONCLUSIVE = "inconclusive"
# Relative slack for the per-step bound check; the bound itself is exact in
# real arithmetic.
CLAIM_REL_SLACK = 1e-12


class DiagnosticsError(ValueError):
    pass


@dataclass(frozen=True)
class NegativeConditionInput:
    c_hat: np.ndarray
    r: float
    dist_to_D_lb: float
    schedule_total: float
    head0: float
    y0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c_hat", as_vector(self.c_hat, "c_hat"))
        object.__setattr__(self, "y0", as_vector(self.y0, "y0"))
        if self.c_hat.size != self.y0.size:
            raise DiagnosticsError("c_hat and y0 have different dimensions")
        if not self.r >= 1:
            raise DiagnosticsError(f"r must be >= 1, got {self.r}")
        if not self.dist_to_D_lb >= 0:
            raise DiagnosticsError(f"distance lower bound must be >= 0, got {self.dist_to_D_lb}")
        if not (self.schedule_total > 0 and math.isfinite(self.schedule_total)):
            raise DiagnosticsError("schedule total must be positive and finite")
        if not 0 < self.head0 <= self.schedule_total:
            raise DiagnosticsError("first-step mass must lie in (0, schedule total]")
        for name in ("r", "dist_to_D_lb", "schedule_total", "head0"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_schedule(cls, c_hat, r, dist_to_D_lb, schedule: PerturbationSchedule, y0):
        return cls(c_hat=c_hat, r=r, dist_to_D_lb=dist_to_D_lb, schedule_total=schedule.total(),
                   head0=schedule.head(1), y0=y0)

    def check_feasible(self, family: SetFamily, tol: float = DEFAULT_FEAS_TOL):
        viol = max_violation(family, self.c_hat)
        if viol > tol:
            raise DiagnosticsError(f"c_hat is not in C: max violation {viol:.17g} > {tol:g}")

    @property
    def init_gap(self) -> float:
        """||y0 - c_hat||"""
        return float(np.linalg.norm(self.y0 - self.c_hat))

    def to_dict(self):
        return {"c_hat": self.c_hat.tolist(), "r": self.r, "dist_to_D_lb": self.dist_to_D_lb,
                "schedule_total": self.schedule_total, "head0": self.head0, "y0": self.y0.tolist()}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class Inequality:
    """``lhs <relation> rhs``; ``satisfied`` is None when not applicable."""

    name: str
    lhs: float
    relation: str
    rhs: float
    satisfied: bool | None

    @classmethod
    def evaluate(cls, name, lhs, relation, rhs):
        ops = {"<=": lhs <= rhs, "<": lhs < rhs, ">=": lhs >= rhs, ">": lhs > rhs}
        return cls(name, float(lhs), relation, float(rhs), bool(ops[relation]))

    @property
    def applicable(self) -> bool:
        return self.satisfied is not None

    def __bool__(self):
        return bool(self.satisfied)

    def render(self) -> str:
        status = {True: "satisfied", False: "violated", None: "not applicable"}[self.satisfied]
        return f"{self.name}: {self.lhs:.17g} {self.relation} {self.rhs:.17g} -> {status}"


@dataclass
class Certificate:
    verdict: str
    checked_inequalities: list
    provenance: dict
    notes: list = field(default_factory=list)
    cross_checks: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_dict(self):
        return {"verdict": self.verdict,
                "checked_inequalities": [asdict(q) for q in self.checked_inequalities],
                "cross_checks": [asdict(q) for q in self.cross_checks],
                "notes": list(self.notes), "provenance": dict(self.provenance)}

    @classmethod
    def from_dict(cls, d):
        return cls(verdict=d["verdict"],
                   checked_inequalities=[Inequality(**q) for q in d["checked_inequalities"]],
                   provenance=d["provenance"], notes=list(d.get("notes", [])),
                   cross_checks=[Inequality(**q) for q in d.get("cross_checks", [])])

    def render(self) -> str:
        lines = [f"verdict: {self.verdict}"]
        lines += ["  " + q.render() for q in self.checked_inequalities]
        lines += ["  cross-check " + q.render() for q in self.cross_checks]
        lines += ["  note: " + n for n in self.notes]
        return "\n".join(lines)


def _certificate(inequalities, inp: NegativeConditionInput, **extra) -> Certificate:
    ok = all(q.satisfied is True for q in inequalities)
    return Certificate(verdict=HOLDS if ok else INCONCLUSIVE, checked_inequalities=list(inequalities),
                       provenance={"input_sha256": inp.digest(), **extra})


# -- the bound on how far the iterates drift from c_hat -----------------------


def lemma_precondition(inp: NegativeConditionInput) -> Inequality:
    """``||y0 - c_hat|| <= (r - 1) * (first-step mass)``"""
    return Inequality.evaluate("init_within_budget", inp.init_gap, "<=", (inp.r - 1.0) * inp.head0)


@dataclass
class ClaimReport:
    rows: list  # (k, ||y^k - c_hat||, r * head(k), holds)
    first_violation: int | None
    precondition: Inequality

    @property
    def ok(self) -> bool:
        return self.first_violation is None


def verify_claim_i(trace: RunTrace, inp: NegativeConditionInput) -> ClaimReport:
    """Check ``||y^k - c_hat|| <= r * head(k)`` at every k >= 1 of the trace.

    A violation under a satisfied precondition is an implementation bug: the
    bound follows from nonexpansiveness and the triangle inequality alone.
    """
    sched = trace.schedule
    if sched is None:
        raise DiagnosticsError("claim check needs a perturbed trace")
    if not math.isclose(sched.total(), inp.schedule_total, rel_tol=1e-15) or \
            not math.isclose(sched.head(1), inp.head0, rel_tol=1e-15):
        raise DiagnosticsError("schedule in the trace does not match the input's totals")
    if not np.array_equal(trace.iterates[0], inp.y0):
        raise DiagnosticsError("trace does not start at the input's y0")
    pre = lemma_precondition(inp)
    rows = []
    first = None
    for k in range(1, len(trace.iterates)):
        lhs = float(np.linalg.norm(trace.iterates[k] - inp.c_hat))
        rhs = inp.r * sched.head(k)
        ok = lhs <= rhs * (1.0 + CLAIM_REL_SLACK)
        rows.append((k, lhs, rhs, ok))
        if not ok and first is None:
            first = k
    if first is not None and pre.satisfied:
        log.error("drift bound violated at k=%d under a satisfied precondition", first)
    return ClaimReport(rows=rows, first_violation=first, precondition=pre)


def negative_certificate(inp: NegativeConditionInput) -> Certificate:
    """Holds iff the precondition holds and ``d(c_hat, D) > r * total``."""
    return _certificate([
        lemma_precondition(inp),
        Inequality.evaluate("distance_exceeds_scaled_total", inp.dist_to_D_lb, ">",
                            inp.r * inp.schedule_total),
    ], inp, check="negative_certificate")


def _threshold(inp: NegativeConditionInput) -> float:
    return (inp.dist_to_D_lb / inp.schedule_total - 1.0) * inp.head0


def necessary_init_check(inp: NegativeConditionInput) -> list:
    """Necessary condition on y0 for a run to converge into D.

    Returns ``[applicability, condition]``. The condition
    ``||y0 - c_hat|| >= (d / total - 1) * head0`` is only meaningful when
    ``d > total``; otherwise it is reported with ``satisfied=None``.
    A violated condition rules out convergence into D.
    """
    app = Inequality.evaluate("distance_exceeds_total", inp.dist_to_D_lb, ">", inp.schedule_total)
    cond = Inequality.evaluate("necessary_init", inp.init_gap, ">=", _threshold(inp))
    if not app.satisfied:
        cond.satisfied = None
    return [app, cond]


def init_hint(inp: NegativeConditionInput) -> float | None:
    """Smallest ||y0 - c_hat|| at which the level-set certificate stops applying.

    Starting at least this far from c_hat (for the given schedule) avoids the
    failure the level-set certificate describes; None when it never applies.
    """
    if not inp.dist_to_D_lb > inp.schedule_total:
        return None
    return _threshold(inp)


def levelset_verdict(x_star, trace: RunTrace | None, inp: NegativeConditionInput,
                     objective: Objective, family: SetFamily | None = None,
                     feas_tol: float = DEFAULT_FEAS_TOL) -> Certificate:
    """Certify ``phi(y*) > phi(x_star)`` for the limit y* of a superiorized run.

    D is the level set ``{c in C : phi(c) <= phi(x_star)}`` and
    ``inp.dist_to_D_lb`` must be a certified lower bound on d(c_hat, D). The
    verdict holds iff ``d > total`` and
    ``||y0 - c_hat|| < (d / total - 1) * head0``, both strict. With a trace,
    the final objective value is cross-checked against phi(x_star).
    """
    x_star = as_vector(x_star, "x_star")
    if family is not None:
        viol = max_violation(family, x_star)
        if viol > feas_tol:
            raise DiagnosticsError(f"x_star is not in C: max violation {viol:.17g}")
        inp.check_feasible(family, feas_tol)
    cert = _certificate([
        Inequality.evaluate("distance_exceeds_total", inp.dist_to_D_lb, ">", inp.schedule_total),
        Inequality.evaluate("init_below_threshold", inp.init_gap, "<", _threshold(inp)),
    ], inp, check="levelset_verdict", x_star=x_star.tolist())
    phi_star = objective.value(x_star)
    if trace is not None and cert.holds:
        y = trace.y_final
        xc = Inequality.evaluate("phi_final_exceeds_phi_x_star", objective.value(y), ">", phi_star)
        cert.cross_checks.append(xc)
        tail = trace.tail_mass()
        viol = float(trace.violation[-1])
        cert.notes.append(f"final iterate residuals: max_violation={viol:.17g}, "
                          f"schedule_tail={tail:.17g}")
        if viol > feas_tol or tail > DEFAULT_TAIL_TOL:
            cert.notes.append("trace has not reached its limit to the required tolerances")
        elif not xc.satisfied:
            cert.notes.append("CONTRADICTION: certified run ended inside D (implementation bug)")
            log.error("level-set certificate contradicted by trace ending at %s", y.tolist())
    return cert


def distance_lower_bound(point, D: ConvexSet | None = None, *, objective: Objective | None = None,
                         level: float | None = None) -> float:
    """Certified lower bound on d(point, D).

    ``D`` may be an explicit set (singleton, box as interval, ball, ...) whose
    distance is exact, or a level set ``{phi <= level}`` of a built-in
    objective, whose bound is closed form. Intersecting the level set with C
    can only increase the distance, so the bound remains valid for
    ``{c in C : phi(c) <= level}``.
    """
    if D is not None:
        return D.distance(point)
    if objective is None or level is None:
        raise ValueError("give either a set D or an objective and a level")
    return objective.level_set_distance_lb(level, point)


# -- Fejer monotonicity -------------------------------------------------------


@dataclass
class FejerReport:
    reference_point: list
    c0_used: float
    per_k: list  # (k, ||y^k - x||^2, decrement, required)
    k0_detected: int | None

    def to_dict(self):
        return asdict(self)


def fejer_analyze(trace: RunTrace, x_ref, c0: float, schedule: PerturbationSchedule | None = None,
                  family: SetFamily | None = None, tol: float = 1e-12) -> FejerReport:
    """Find k0 from which ``d_{k+1} <= d_k - c0 * sum_{1 <= n < N_k} beta_{k,n}``.

    ``d_k`` is the squared distance from y^k to ``x_ref``. The required
    decrement skips the first inner step (n = 0), so with single-step inner
    loops it is zero and the check reduces to plain monotonicity. ``tol``
    absorbs round-off in the comparison. k0 is None when the last recorded
    step fails.
    """
    if not 0 < c0 < 1:
        raise ValueError("c0 must lie in (0, 1)")
    x = as_vector(x_ref, "x_ref")
    if family is not None:
        viol = max_violation(family, x)
        if viol > DEFAULT_FEAS_TOL:
            raise DiagnosticsError(f"reference point is not in C: max violation {viol:.17g}")
    diff = trace.iterates - x
    sq = np.einsum("ij,ij->i", diff, diff)
    rows = []
    for k in range(len(sq) - 1):
        betas = schedule.betas(k)[1:] if schedule is not None else ()
        required = c0 * math.fsum(betas)
        rows.append((k, float(sq[k]), float(sq[k] - sq[k + 1]), required))
    k0 = 0
    for k, _, dec, req in rows:
        if dec < req - tol:
            k0 = k + 1
    if rows and k0 == len(rows):
        k0 = None
    return FejerReport(reference_point=x.tolist(), c0_used=float(c0), per_k=rows, k0_detected=k0)


# -- Lipschitz witness --------------------------------------------------------


@dataclass
class LipschitzWitness:
    """Local Lipschitz claim ``|phi(x) - phi(y)| <= L_bar ||x - y||``.

    ``centers`` are points of the reference subset of minimizers; sampled
    partners y lie within ``r0`` of a center. ``pairs`` are checked as given.
    """

    r0: float
    L_bar: float
    centers: list = field(default_factory=list)
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.r0 <= 1:
            raise ValueError("r0 must lie in (0, 1]")
        if not self.L_bar >= 1:
            raise ValueError("L_bar must be >= 1")


@dataclass
class LipschitzResult:
    passed: bool
    worst_ratio: float
    worst_pair: tuple | None
    n_checked: int


def lipschitz_check(objective: Objective, witness: LipschitzWitness, n_samples: int = 1000,
                    seed: int = 0) -> LipschitzResult:
    rng = np.random.default_rng(seed)
    pairs = [(as_vector(x), as_vector(y)) for x, y in witness.pairs]
    centers = [as_vector(c) for c in witness.centers]
    if centers and n_samples > 0:
        dim = centers[0].size
        for i in range(n_samples):
            x = centers[i % len(centers)]
            u = rng.standard_normal(dim)
            u /= np.linalg.norm(u)
            rad = witness.r0 * rng.uniform(0.0, 1.0)
            pairs.append((x, x + rad * u))
    if not pairs:
        raise ValueError("no pairs to check: supply centers with n_samples > 0, or explicit pairs")
    worst, worst_pair = 0.0, None
    for x, y in pairs:
        gap = float(np.linalg.norm(x - y))
        if gap == 0.0:
            continue
        ratio = abs(objective.value(x) - objective.value(y)) / gap
        if ratio > worst or worst_pair is None:
            worst, worst_pair = ratio, (x.tolist(), y.tolist())
    return LipschitzResult(passed=worst <= witness.L_bar * (1 + 1e-9), worst_ratio=worst,
                           worst_pair=worst_pair, n_checked=len(pairs))
