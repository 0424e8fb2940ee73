"""Run records shared by the feasibility-seeking and superiorized loops."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any

import numpy as np

DEFAULT_FEAS_TOL = 1e-9
DEFAULT_MAX_OUTER = 100_000
DEFAULT_TAIL_TOL = 1e-12

CSV_HEADER = ("k", "phi", "max_violation", "dist_to_c_hat", "head_sum_bound")


class NonFiniteIterateError(ArithmeticError):
    def __init__(self, k: int, n: int | None = None):
        where = f"outer iterate {k}" if n is None else f"inner iterate ({k}, {n})"
        super().__init__(f"non-finite value encountered at {where}")
        self.k = k
        self.n = n


@dataclass(frozen=True)
class StopRule:
    """When to stop an otherwise infinite iteration.

    ``min_beta_tail`` only affects superiorized runs: they stop once the
    iterate is feasible to ``feas_tol`` *and* the perturbation mass not yet
    spent is at most ``min_beta_tail``. ``None`` means feasibility alone.
    """

    feas_tol: float = DEFAULT_FEAS_TOL
    max_outer: int = DEFAULT_MAX_OUTER
    min_beta_tail: float | None = DEFAULT_TAIL_TOL

    def __post_init__(self):
        if not self.feas_tol >= 0:
            raise ValueError("feas_tol must be >= 0")
        if int(self.max_outer) != self.max_outer or self.max_outer < 1:
            raise ValueError("max_outer must be an integer >= 1")
        if self.min_beta_tail is not None and not self.min_beta_tail >= 0:
            raise ValueError("min_beta_tail must be >= 0")

    def to_dict(self):
        return {"feas_tol": self.feas_tol, "max_outer": int(self.max_outer),
                "min_beta_tail": self.min_beta_tail}


@dataclass(frozen=True)
class InnerStep:
    k: int
    n: int
    y: np.ndarray  # y^{k,n}, the point the direction was computed at
    v: np.ndarray
    beta: float


@dataclass
class RunTrace:
    """Iterate history of one run.

    ``iterates[k]`` is the outer iterate y^k (x^k for unperturbed runs).
    ``phi`` is filled when an objective was supplied. ``inner`` holds every
    perturbation step when the run was asked to record them.
    """

    iterates: np.ndarray
    violation: np.ndarray
    phi: np.ndarray | None
    stop_reason: str
    perturbed: bool
    plan: dict
    schedule: Any = None  # PerturbationSchedule for perturbed runs
    inner: list[InnerStep] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_outer(self) -> int:
        """Number of outer steps taken (K for iterates y^0..y^K)."""
        return len(self.iterates) - 1

    @property
    def y_final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"

    def tail_mass(self) -> float:
        """Perturbation mass not yet spent after the last outer step."""
        if self.schedule is None:
            return 0.0
        return self.schedule.tail(self.n_outer)

    def summary(self) -> dict:
        return {
            "perturbed": self.perturbed,
            "stop_reason": self.stop_reason,
            "outer_iterations": self.n_outer,
            "y_final": self.y_final.tolist(),
            "phi_final": None if self.phi is None else float(self.phi[-1]),
            "max_violation_final": float(self.violation[-1]),
            "schedule_tail_mass": self.tail_mass(),
            "plan": self.plan,
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
            **({"meta": self.meta} if self.meta else {}),
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["iterates"] = self.iterates.tolist()
        d["violation"] = self.violation.tolist()
        d["phi"] = None if self.phi is None else self.phi.tolist()
        return d

    def csv_rows(self, c_hat=None, r: float | None = None):
        """Per-iterate rows matching :data:`CSV_HEADER`.

        ``head_sum_bound`` is r times the perturbation mass spent before step
        k (r = 1 when not given); blank for unperturbed runs.
        """
        c = None if c_hat is None else np.asarray(c_hat, dtype=float)
        scale = 1.0 if r is None else float(r)
        for k, y in enumerate(self.iterates):
            yield (
                k,
                None if self.phi is None else float(self.phi[k]),
                float(self.violation[k]),
                None if c is None else float(np.linalg.norm(y - c)),
                None if self.schedule is None else scale * self.schedule.head(k),
            )

    def to_csv(self, c_hat=None, r: float | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.csv_rows(c_hat, r):
            w.writerow(["" if v is None else (v if isinstance(v, int) else format(v, ".17g"))
                        for v in row])
        return buf.getvalue()
