"""Objective oracles, summable step sizes and the superiorized loop.

Each outer step first runs an inner loop of N_k normalized negative
subgradient steps y <- y + beta * v and then applies one averaged string
stage to the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import DimensionError, SetFamily, as_vector, max_violation
from .strings import StringPlan, _apply_stage, _check_inputs
from .trace import InnerStep, NonFiniteIterateError, RunTrace, StopRule

ZERO_TOL = 1e-12


# -- objectives ---------------------------------------------------------------


class Objective:
    """Convex continuous function with a deterministic subgradient selection."""

    kind = "abstract"
    # True when subgradient() returns an exact zero whenever 0 is a subgradient.
    exact_zero = True

    def value(self, x) -> float:
        raise NotImplementedError

    def subgradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def level_set_distance_lb(self, level: float, point) -> float:
        """Lower bound on the distance from ``point`` to ``{x : value(x) <= level}``."""
        raise NotImplementedError(f"no level-set distance for {self.kind} objectives")

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class QuadraticDiag(Objective):
    """``sum_i Q_i (x_i - c_i)^2`` with ``Q >= 0``."""

    Q: np.ndarray
    c: np.ndarray
    kind = "quadratic_diag"

    def __post_init__(self):
        Q, c = as_vector(self.Q, "Q"), as_vector(self.c, "c")
        if Q.size != c.size:
            raise DimensionError("Q and c have different lengths")
        if np.any(Q < 0):
            raise ValueError("quadratic_diag needs Q >= 0 to stay convex")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.c
        return float(np.sum(self.Q * d * d))

    def subgradient(self, x):
        return 2.0 * self.Q * (np.asarray(x, dtype=float) - self.c)

    def level_set_distance_lb(self, level, point):
        # The level set sits inside a cylinder over the ball of radius
        # sqrt(level / min positive Q) in the coordinates where Q > 0.
        p = as_vector(point)
        if level < 0:
            return math.inf
        pos = self.Q > 0
        if not np.any(pos):
            return 0.0
        radius = math.sqrt(level / float(self.Q[pos].min()))
        return max(float(np.linalg.norm((p - self.c)[pos])) - radius, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "Q": self.Q.tolist(), "c": self.c.tolist()}


@dataclass(frozen=True, eq=False)
class Linear(Objective):
    """``<g, x>``"""

    g: np.ndarray
    kind = "linear"

    def __post_init__(self):
        object.__setattr__(self, "g", as_vector(self.g, "g"))

    def value(self, x):
        return float(self.g @ np.asarray(x, dtype=float))

    def subgradient(self, x):
        return self.g.copy()

    def level_set_distance_lb(self, level, point):
        nrm = float(np.linalg.norm(self.g))
        if nrm == 0.0:
            return 0.0 if level >= 0 else math.inf
        return max(float(self.g @ as_vector(point)) - level, 0.0) / nrm

    def to_dict(self):
        return {"kind": self.kind, "g": self.g.tolist()}


class Norm1(Objective):
    """``||x||_1``; the subgradient is the sign vector, zero where x_i = 0."""

    kind = "norm1"

    def value(self, x):
        return float(np.sum(np.abs(x)))

    def subgradient(self, x):
        return np.sign(np.asarray(x, dtype=float))

    def level_set_distance_lb(self, level, point):
        if level < 0:
            return math.inf
        p = as_vector(point)
        # l1 ball of radius level is inside the l2 ball of the same radius,
        # and ||x - p||_1 <= sqrt(n) ||x - p||_2.
        return max(float(np.linalg.norm(p)) - level,
                   (float(np.sum(np.abs(p))) - level) / math.sqrt(p.size), 0.0)

    def to_dict(self):
        return {"kind": self.kind}


class Norm2Sq(Objective):
    """``||x||_2^2``"""

    kind = "norm2sq"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ x)

    def subgradient(self, x):
        return 2.0 * np.asarray(x, dtype=float)

    def level_set_distance_lb(self, level, point):
        if level < 0:
            return math.inf
        return max(float(np.linalg.norm(as_vector(point))) - math.sqrt(level), 0.0)

    def to_dict(self):
        return {"kind": self.kind}


class UserObjective(Objective):
    """Wraps user callables.

    ``subgradient`` must return an element of the subdifferential; returning
    ``None`` or an exact zero vector signals that 0 is a subgradient.
    """

    kind = "user"
    exact_zero = False

    def __init__(self, value: Callable, subgradient: Callable,
                 level_set_distance_lb: Callable | None = None):
        self._value = value
        self._subgradient = subgradient
        self._lsd = level_set_distance_lb

    def value(self, x):
        return float(self._value(x))

    def subgradient(self, x):
        s = self._subgradient(np.array(x, dtype=float))
        if s is None:
            return np.zeros(np.size(x))
        return np.asarray(s, dtype=float).reshape(-1)

    def level_set_distance_lb(self, level, point):
        if self._lsd is None:
            return super().level_set_distance_lb(level, point)
        return float(self._lsd(level, point))

    def to_dict(self):
        raise TypeError("user objectives cannot be serialized")


_OBJECTIVES = {"quadratic_diag": QuadraticDiag, "linear": Linear, "norm1": Norm1, "norm2sq": Norm2Sq}


def objective_from_dict(d: dict) -> Objective:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _OBJECTIVES:
        raise ValueError(f"unknown objective kind {kind!r}; expected one of {sorted(_OBJECTIVES)}")
    return _OBJECTIVES[kind](**d)


def direction(objective: Objective, y, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Normalized negative subgradient at ``y``, or zero when 0 is a subgradient."""
    y = as_vector(y, "y")
    s = np.asarray(objective.subgradient(y), dtype=float).reshape(-1)
    if s.size != y.size:
        raise DimensionError(f"subgradient has length {s.size}, expected {y.size}")
    if not np.all(np.isfinite(s)):
        raise ArithmeticError(f"subgradient oracle returned non-finite values at {y.tolist()}")
    nrm = float(np.linalg.norm(s))
    if nrm <= zero_tol:
        return np.zeros_like(y)
    return -s / nrm


# -- step sizes ---------------------------------------------------------------


class PerturbationSchedule:
    """Step sizes beta_{k,n} for n < N_k, with a finite total.

    ``geometric``: one stream a, a*ratio, a*ratio^2, ... consumed in order, so
    beta_{k,n} = a * ratio^(M_k + n) with M_k = N_0 + ... + N_{k-1}. Inner
    lengths are a constant or a tuple repeated cyclically.

    ``explicit``: ``table[k]`` lists beta_{k,0..N_k-1}; once the table runs
    out there are no more perturbation steps.
    """

    def __init__(self, kind: str, *, a: float = 1.0, ratio: float = 0.5,
                 inner_lengths: int | Sequence[int] = 1, table: Sequence[Sequence[float]] = ()):
        self.kind = kind
        if kind == "geometric":
            if not 0 < a <= 1:
                raise ValueError(f"geometric schedule needs 0 < a <= 1, got a={a}")
            if not 0 < ratio < 1:
                raise ValueError(f"geometric schedule needs 0 < ratio < 1, got {ratio}")
            lengths = (inner_lengths,) if np.isscalar(inner_lengths) else tuple(inner_lengths)
            if not lengths or any(int(n) != n or n < 1 for n in lengths):
                raise ValueError(f"inner lengths must be integers >= 1, got {inner_lengths}")
            self.a = float(a)
            self.ratio = float(ratio)
            self.lengths = tuple(int(n) for n in lengths)
            self._cycle = sum(self.lengths)
            self._prefix = np.concatenate([[0], np.cumsum(self.lengths)]).astype(int)
        elif kind == "explicit":
            rows = [tuple(float(b) for b in row) for row in table]
            if not rows:
                raise ValueError("explicit schedule table is empty")
            for k, row in enumerate(rows):
                if not row:
                    raise ValueError(f"explicit schedule row {k} is empty")
                for n, b in enumerate(row):
                    if not (math.isfinite(b) and 0 < b <= 1):
                        raise ValueError(f"beta[{k}][{n}]={b} outside (0, 1]")
            self.table = tuple(rows)
            self._heads = [0.0]
            for k in range(len(rows)):
                self._heads.append(math.fsum(b for row in rows[:k + 1] for b in row))
        else:
            raise ValueError(f"unknown schedule kind {kind!r}")

    @classmethod
    def geometric(cls, a=1.0, ratio=0.5, inner_lengths=1):
        return cls("geometric", a=a, ratio=ratio, inner_lengths=inner_lengths)

    @classmethod
    def explicit(cls, table):
        return cls("explicit", table=table)

    @property
    def max_inner(self) -> int:
        """N, the largest inner length."""
        if self.kind == "geometric":
            return max(self.lengths)
        return max(len(row) for row in self.table)

    def inner_length(self, k: int) -> int:
        if self.kind == "geometric":
            return self.lengths[k % len(self.lengths)]
        return len(self.table[k]) if k < len(self.table) else 0

    def _offset(self, k: int) -> int:
        q, rem = divmod(k, len(self.lengths))
        return q * self._cycle + int(self._prefix[rem])

    def betas(self, k: int) -> np.ndarray:
        if self.kind == "geometric":
            start = self._offset(k)
            return np.array([self.a * self.ratio ** (start + n) for n in range(self.inner_length(k))])
        return np.array(self.table[k]) if k < len(self.table) else np.zeros(0)

    def total(self) -> float:
        if self.kind == "geometric":
            return self.a / (1.0 - self.ratio)
        return self._heads[-1]

    def head(self, k: int) -> float:
        """Mass of all steps taken before outer index k."""
        if k <= 0:
            return 0.0
        if self.kind == "geometric":
            return self.a * (1.0 - self.ratio ** self._offset(k)) / (1.0 - self.ratio)
        return self._heads[min(k, len(self.table))]

    def tail(self, k: int) -> float:
        """Mass of all steps at outer indices >= k."""
        if self.kind == "geometric":
            return self.a * self.ratio ** self._offset(max(k, 0)) / (1.0 - self.ratio)
        if k >= len(self.table):
            return 0.0
        return math.fsum(b for row in self.table[max(k, 0):] for b in row)

    def to_dict(self) -> dict:
        if self.kind == "geometric":
            lengths = self.lengths[0] if len(self.lengths) == 1 else list(self.lengths)
            return {"kind": "geometric", "a": self.a, "ratio": self.ratio, "N": lengths,
                    "total": self.total()}
        return {"kind": "explicit", "table": [list(r) for r in self.table], "total": self.total()}

    def __eq__(self, other):
        if not isinstance(other, PerturbationSchedule):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"PerturbationSchedule({self.to_dict()!r})"


def schedule_from_dict(d: dict) -> PerturbationSchedule:
    d = dict(d)
    d.pop("total", None)
    kind = d.pop("kind", None)
    if kind == "geometric":
        return PerturbationSchedule.geometric(a=d.get("a", 1.0), ratio=d.get("ratio", 0.5),
                                              inner_lengths=d.get("N", 1))
    if kind == "explicit":
        return PerturbationSchedule.explicit(d.get("table", ()))
    raise ValueError(f"unknown schedule kind {kind!r}")


def schedule_total(schedule: PerturbationSchedule) -> float:
    return schedule.total()


def schedule_head(schedule: PerturbationSchedule, k: int) -> float:
    return schedule.head(k)


# -- the superiorized loop ----------------------------------------------------


def _inner(objective, schedule, k, y, zero_tol, record):
    for n, beta in enumerate(schedule.betas(k)):
        v = direction(objective, y, zero_tol)
        if record is not None:
            record.append(InnerStep(k, n, y, v, float(beta)))
        y = y + beta * v
        if not np.all(np.isfinite(y)):
            raise NonFiniteIterateError(k, n + 1)
    return y


def inner_loop(objective: Objective, schedule: PerturbationSchedule, k: int, y_k,
               zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Return y^{k,N_k}: N_k perturbation steps starting from ``y_k``."""
    return _inner(objective, schedule, k, as_vector(y_k, "y_k"), zero_tol, None)


def superiorized_run(family: SetFamily, objective: Objective, plan: StringPlan,
                     schedule: PerturbationSchedule, y0, stop: StopRule | None = None,
                     record_inner: bool = False, zero_tol: float = ZERO_TOL) -> RunTrace:
    """Alternate perturbation inner loops with one averaged string stage.

    Stops once y^k is within ``stop.feas_tol`` of every set and the schedule
    mass remaining from step k on is at most ``stop.min_beta_tail``.
    """
    stop = stop or StopRule()
    y = _check_inputs(family, plan, y0)
    inner = [] if record_inner else None
    iterates = [y]
    viol = [max_violation(family, y)]
    reason = "max_outer"
    for k in range(stop.max_outer + 1):
        tail_ok = stop.min_beta_tail is None or schedule.tail(k) <= stop.min_beta_tail
        if viol[-1] <= stop.feas_tol and tail_ok:
            reason = "converged"
            break
        if k == stop.max_outer:
            break
        z = _inner(objective, schedule, k, y, zero_tol, inner)
        y = _apply_stage(plan.stage(k), family, z)
        if not np.all(np.isfinite(y)):
            raise NonFiniteIterateError(k + 1)
        iterates.append(y)
        viol.append(max_violation(family, y))
    its = np.array(iterates)
    its.setflags(write=False)
    meta = {}
    if not objective.exact_zero:
        meta["subgradient_selection"] = "user oracle"
    elif isinstance(objective, Norm1):
        meta["subgradient_selection"] = "componentwise sign, zero at kinks"
    return RunTrace(iterates=its, violation=np.array(viol),
                    phi=np.array([objective.value(v) for v in its]), stop_reason=reason,
                    perturbed=True, plan=plan.describe(), schedule=schedule, inner=inner,
                    meta=meta)


def replay_step(trace: RunTrace, k: int, family: SetFamily, objective: Objective,
                plan: StringPlan, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Recompute iterate k+1 of a recorded trace from iterate k."""
    y = trace.iterates[k]
    if trace.perturbed:
        y = _inner(objective, trace.schedule, k, y, zero_tol, None)
    return _apply_stage(plan.stage(k), family, y)
