"""String operators, averaged stages and the dynamic string-averaging run.

Constraint indices inside index vectors are 1-based: ``(1, 3)`` means
"project onto the first set, then onto the third".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import DimensionError, SetFamily, as_vector, max_violation
from .trace import NonFiniteIterateError, RunTrace, StopRule

WEIGHT_SUM_TOL = 1e-12

IndexVector = tuple  # tuple[int, ...], each entry in 1..m


class InadmissibleStageError(ValueError):
    def __init__(self, reasons: Sequence[str]):
        super().__init__("stage is not admissible: " + "; ".join(reasons))
        self.reasons = list(reasons)


@dataclass(frozen=True)
class PlanConstraints:
    """Bounds defining the admissible stages: weights >= delta, lengths <= qbar."""

    delta: float
    qbar: int

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1/m), got {self.delta}")
        if int(self.qbar) != self.qbar or self.qbar < 1:
            raise ValueError(f"qbar must be a positive integer, got {self.qbar}")

    def to_dict(self):
        return {"delta": self.delta, "qbar": int(self.qbar)}


@dataclass(frozen=True)
class PlanStage:
    """One (Omega, w) pair: index vectors and their averaging weights."""

    strings: tuple
    weights: tuple

    def __post_init__(self):
        strings = tuple(tuple(int(i) for i in t) for t in self.strings)
        weights = tuple(float(w) for w in self.weights)
        if len(strings) != len(weights):
            raise ValueError(f"{len(strings)} index vectors but {len(weights)} weights")
        object.__setattr__(self, "strings", strings)
        object.__setattr__(self, "weights", weights)

    def to_dict(self):
        return {"strings": [list(t) for t in self.strings], "weights": list(self.weights)}


@dataclass
class Admissibility:
    ok: bool
    reasons: list

    def __bool__(self):
        return self.ok


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _structural_reasons(stage: PlanStage, m: int) -> list:
    # Clauses that do not depend on (Δ, q̄).
    reasons = []
    if not stage.strings:
        reasons.append("Ω is empty")
    seen = set()
    covered = set()
    for t, w in zip(stage.strings, stage.weights):
        if not t:
            reasons.append("empty index vector")
            continue
        if t in seen:
            reasons.append(f"index vector {t} appears twice")
        seen.add(t)
        bad = [i for i in t if not 1 <= i <= m]
        if bad:
            reasons.append(f"index vector {t} has entries outside [1, {m}]: {bad}")
        covered.update(t)
        if not (math.isfinite(w) and w > 0):
            reasons.append(f"w(t)={_fmt(w)} is not positive for t={t}")
    missing = [i for i in range(1, m + 1) if i not in covered]
    if missing:
        reasons.append("not fit: " + ", ".join(f"index {i} missing" for i in missing))
    total = math.fsum(stage.weights)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        reasons.append(f"weights sum to {_fmt(total)}, not 1 (tolerance {WEIGHT_SUM_TOL:g})")
    return reasons


def _constraint_reasons(constraints: PlanConstraints, m: int) -> list:
    reasons = []
    if not constraints.delta < 1.0 / m:
        reasons.append(f"Δ={_fmt(constraints.delta)} is not below 1/m={_fmt(1.0 / m)}")
    if constraints.qbar < m:
        reasons.append(f"q̄={constraints.qbar} is below m={m}")
    return reasons


def is_admissible(stage: PlanStage, constraints: PlanConstraints, m: int) -> Admissibility:
    """Check every clause of stage admissibility and collect the failures.

    A stage is admissible when its index vectors cover 1..m, its weights are
    positive and sum to one, every weight is at least ``delta`` and every
    index vector has length at most ``qbar``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    reasons = _constraint_reasons(constraints, m) + _structural_reasons(stage, m)
    for t, w in zip(stage.strings, stage.weights):
        if len(t) > constraints.qbar:
            reasons.append(f"ℓ(t)={len(t)} > q̄={constraints.qbar} for t={t}")
        if math.isfinite(w) and 0 < w < constraints.delta:
            reasons.append(f"w(t)={_fmt(w)} < Δ={_fmt(constraints.delta)} for t={t}")
    return Admissibility(not reasons, reasons)


def apply_string(t: IndexVector, family: SetFamily, x) -> np.ndarray:
    """Project onto C_{t_1}, then C_{t_2}, ..., ending with C_{t_q}."""
    y = as_vector(x)
    m = family.m
    for i in t:
        if not 1 <= i <= m:
            raise IndexError(f"constraint index {i} outside [1, {m}]")
    if y.size != family.dim:
        raise DimensionError(f"family lives in R^{family.dim}, got length {y.size}")
    for i in t:
        y = family.sets[i - 1]._project(y)
    return y


def _apply_stage(stage: PlanStage, family: SetFamily, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    for t, w in zip(stage.strings, stage.weights):
        y = x
        for i in t:
            y = family.sets[i - 1]._project(y)
        out += w * y
    return out


def apply_stage(stage: PlanStage, family: SetFamily, x, constraints: PlanConstraints | None = None) -> np.ndarray:
    """Weighted average of the string end-points.

    The stage is checked against ``constraints`` when given; otherwise only
    the clauses that do not involve (Δ, q̄) are enforced.
    """
    x = as_vector(x)
    if x.size != family.dim:
        raise DimensionError(f"family lives in R^{family.dim}, got length {x.size}")
    if constraints is None:
        reasons = _structural_reasons(stage, family.m)
    else:
        reasons = is_admissible(stage, constraints, family.m).reasons
    if reasons:
        raise InadmissibleStageError(reasons)
    return _apply_stage(stage, family, x)


class StringPlan:
    """Deterministic source of stages (Omega_k, w_k), k = 0, 1, 2, ...

    Modes:

    * ``cyclic`` -- the given stages in order, wrapping around;
    * ``repeated`` -- one stage used at every step;
    * ``seeded_random`` -- stage k is drawn from a generator seeded with
      ``(seed, k)``, so any stage can be regenerated on its own.

    Every stage is checked against ``constraints`` before it is handed out.
    """

    MODES = ("cyclic", "repeated", "seeded_random")

    def __init__(self, mode: str, m: int, constraints: PlanConstraints,
                 stages: Iterable[PlanStage] = (), seed: int | None = None,
                 max_strings: int | None = None):
        if mode not in self.MODES:
            raise ValueError(f"unknown plan mode {mode!r}; expected one of {self.MODES}")
        self.mode = mode
        self.m = int(m)
        self.constraints = constraints
        self.stages = tuple(stages)
        self.seed = seed
        self.max_strings = max_strings
        if mode in ("cyclic", "repeated"):
            if not self.stages:
                raise ValueError(f"{mode} plan needs at least one stage")
            if mode == "repeated" and len(self.stages) != 1:
                raise ValueError("repeated plan takes exactly one stage")
            for stage in self.stages:
                adm = is_admissible(stage, constraints, self.m)
                if not adm:
                    raise InadmissibleStageError(adm.reasons)
        else:
            if seed is None:
                raise ValueError("seeded_random plan needs a seed")
            bad = _constraint_reasons(constraints, self.m)
            if bad:
                raise InadmissibleStageError(bad)
            cap = int(math.floor(1.0 / constraints.delta))
            if max_strings is not None:
                if max_strings < 1:
                    raise ValueError("max_strings must be >= 1")
                cap = min(cap, int(max_strings))
            self._cap = max(1, min(cap, self.m))

    @classmethod
    def repeated(cls, stage: PlanStage, m: int, constraints: PlanConstraints):
        return cls("repeated", m, constraints, stages=[stage])

    @classmethod
    def cyclic(cls, stages, m: int, constraints: PlanConstraints):
        return cls("cyclic", m, constraints, stages=stages)

    @classmethod
    def seeded_random(cls, m: int, seed: int, constraints: PlanConstraints, max_strings=None):
        return cls("seeded_random", m, constraints, seed=seed, max_strings=max_strings)

    def stage(self, k: int) -> PlanStage:
        if self.mode == "repeated":
            return self.stages[0]
        if self.mode == "cyclic":
            return self.stages[k % len(self.stages)]
        return self._random_stage(k)

    def _random_stage(self, k: int) -> PlanStage:
        # Random partition of a permutation of 1..m into s contiguous strings;
        # each string is no longer than m <= qbar, weights are Δ plus a
        # Dirichlet share of the remaining mass.
        rng = np.random.default_rng([int(self.seed), int(k)])
        s = int(rng.integers(1, self._cap + 1))
        perm = rng.permutation(self.m) + 1
        cuts = np.sort(rng.choice(np.arange(1, self.m), size=s - 1, replace=False)) if s > 1 else []
        strings = [tuple(int(i) for i in part) for part in np.split(perm, cuts)]
        delta = self.constraints.delta
        share = rng.dirichlet(np.ones(s)) * (1.0 - s * delta)
        weights = [delta + float(p) for p in share]
        weights[-1] = 1.0 - math.fsum(weights[:-1])
        stage = PlanStage(strings, weights)
        adm = is_admissible(stage, self.constraints, self.m)
        if not adm:  # pragma: no cover - construction guarantees admissibility
            raise InadmissibleStageError(adm.reasons)
        return stage

    def describe(self) -> dict:
        d = {"mode": self.mode, "m": self.m, **self.constraints.to_dict()}
        if self.mode == "seeded_random":
            d["seed"] = int(self.seed)
            if self.max_strings is not None:
                d["max_strings"] = int(self.max_strings)
        else:
            d["stages"] = [s.to_dict() for s in self.stages]
        return d

    def __repr__(self):
        return f"StringPlan({self.describe()!r})"


def _check_inputs(family: SetFamily, plan: StringPlan, x0) -> np.ndarray:
    x = as_vector(x0, "x0")
    if x.size != family.dim:
        raise DimensionError(f"family lives in R^{family.dim}, initial point has length {x.size}")
    if plan.m != family.m:
        raise ValueError(f"plan is for {plan.m} sets but the family has {family.m}")
    return x


def dsap_run(family: SetFamily, plan: StringPlan, x0, stop: StopRule | None = None,
             objective=None) -> RunTrace:
    """Unperturbed iteration x^{k+1} = P_{Omega_k, w_k}(x^k).

    Stops as soon as the current iterate is within ``stop.feas_tol`` of every
    set, or after ``stop.max_outer`` stages.
    """
    stop = stop or StopRule()
    x = _check_inputs(family, plan, x0)
    iterates = [x]
    viol = [max_violation(family, x)]
    reason = "max_outer"
    for k in range(stop.max_outer + 1):
        if viol[-1] <= stop.feas_tol:
            reason = "converged"
            break
        if k == stop.max_outer:
            break
        x = _apply_stage(plan.stage(k), family, x)
        if not np.all(np.isfinite(x)):
            raise NonFiniteIterateError(k + 1)
        iterates.append(x)
        viol.append(max_violation(family, x))
    its = np.array(iterates)
    its.setflags(write=False)
    phi = None if objective is None else np.array([objective.value(y) for y in its])
    return RunTrace(iterates=its, violation=np.array(viol), phi=phi, stop_reason=reason,
                    perturbed=False, plan=plan.describe())
