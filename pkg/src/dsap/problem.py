"""YAML problem files -> ExperimentConfig.

Layout (every section is a mapping unless noted)::

    space: {dim: 1}
    sets:                       # list, C_1 first
      - {kind: box, lo: [0], hi: [10]}
    objective: {kind: quadratic_diag, Q: [1], c: [0]}
    plan:
      mode: repeated            # repeated | cyclic | seeded_random
      delta: 0.5
      qbar: 1
      stages:
        - {strings: [[1]], weights: [1.0]}
    schedule: {kind: geometric, a: 1.0, ratio: 0.5, N: 1}
    init: {y0: [13]}
    stop: {feas_tol: 1.0e-9, max_outer: 100000, min_beta_tail: 1.0e-12}
    diagnostics:                # optional
      c_hat: [8]
      r: 1
      x_star: [0]
      dist_lb: 8                # or D: {kind: singleton, p: [0]}, or D: levelset

Errors carry the line and column of the offending node.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import DiagnosticsError, NegativeConditionInput, distance_lower_bound
from .geometry import SetFamily, as_vector, set_from_dict
from .harness import ExperimentConfig
from .strings import InadmissibleStageError, PlanConstraints, PlanStage, StringPlan
from .superiorize import objective_from_dict, schedule_from_dict
from .trace import StopRule

SECTIONS = ("space", "sets", "objective", "plan", "schedule", "init", "stop", "diagnostics")
REQUIRED = ("space", "sets", "objective", "plan", "schedule", "init")


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-9`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


class ProblemError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None, col: int | None = None,
                 source: str = "<problem>"):
        self.path, self.line, self.col, self.source = path, line, col, source
        where = source
        if line is not None:
            where += f":{line}:{col}"
        if path:
            where += f": {path}"
        super().__init__(f"{where}: {message}")


def _fmt_path(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Doc:
    """Parsed data plus the node tree, so errors can point at lines."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            self.root = yaml.compose(text, Loader=_Loader)
            self.data = yaml.load(text, Loader=_Loader)
        except yaml.MarkedYAMLError as err:
            mark = err.problem_mark
            raise ProblemError(f"YAML syntax error: {err.problem}", line=mark.line + 1 if mark else None,
                               col=mark.column + 1 if mark else None, source=source) from None
        if not isinstance(self.data, dict):
            raise ProblemError("top level must be a mapping of sections", line=1, col=1, source=source)

    def mark(self, path):
        node = self.root
        for p in path:
            nxt = None
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == p:
                        nxt = v
                        break
            elif isinstance(node, yaml.SequenceNode) and isinstance(p, int) and p < len(node.value):
                nxt = node.value[p]
            if nxt is None:
                break
            node = nxt
        m = node.start_mark
        return m.line + 1, m.column + 1

    def error(self, path, message) -> ProblemError:
        line, col = self.mark(path)
        return ProblemError(message, _fmt_path(path), line, col, self.source)

    def get(self, path, kind=None, default=...):
        cur = self.data
        for p in path:
            try:
                cur = cur[p]
            except (KeyError, IndexError, TypeError):
                if default is not ...:
                    return default
                raise self.error(path[:-1], f"missing required field {_fmt_path(path)!r}") from None
        if kind is not None and not isinstance(cur, kind):
            names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            raise self.error(path, f"expected {names}, got {type(cur).__name__}")
        return cur


def _call(doc: _Doc, path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ProblemError:
        raise
    except InadmissibleStageError as err:
        raise doc.error(path, "stage violates the admissibility constraints: "
                        + "; ".join(err.reasons)) from None
    except (ValueError, TypeError, ArithmeticError) as err:
        raise doc.error(path, str(err)) from None


def _vector(doc, path, dim):
    raw = doc.get(path, list)
    v = _call(doc, path, as_vector, raw, _fmt_path(path))
    if v.size != dim:
        raise doc.error(path, f"expected {dim} coordinates, got {v.size}")
    return v


def _mapping(doc, path, required=True):
    return doc.get(path, dict, ... if required else None)


def _plan(doc, m):
    sec = _mapping(doc, ["plan"])
    mode = doc.get(["plan", "mode"], str)
    constraints = _call(doc, ["plan"], PlanConstraints, delta=doc.get(["plan", "delta"], (int, float)),
                        qbar=doc.get(["plan", "qbar"], int))
    if mode == "seeded_random":
        return _call(doc, ["plan"], StringPlan.seeded_random, m, doc.get(["plan", "seed"], int),
                     constraints, sec.get("max_strings"))
    raw = doc.get(["plan", "stages"], list)
    stages = []
    for i in range(len(raw)):
        p = ["plan", "stages", i]
        strings = doc.get(p + ["strings"], list)
        weights = doc.get(p + ["weights"], list)
        stage = _call(doc, p, PlanStage, strings, weights)
        _call(doc, p, StringPlan, "cyclic", m, constraints, [stage])
        stages.append(stage)
    return _call(doc, ["plan"], StringPlan, mode, m, constraints, stages)


def _known_keys(doc, path, allowed):
    sec = doc.get(path, dict)
    for key in sec:
        if key not in allowed:
            raise doc.error(path + [key], f"unknown field {key!r}; expected one of {sorted(allowed)}")


def parse_problem(text: str, source: str = "<problem>") -> ExperimentConfig:
    doc = _Doc(text, source)
    for key in doc.data:
        if key not in SECTIONS:
            raise doc.error([key], f"unknown section {key!r}; expected one of {list(SECTIONS)}")
    for key in REQUIRED:
        if key not in doc.data:
            raise ProblemError(f"missing required section {key!r}", line=1, col=1, source=source)

    dim = doc.get(["space", "dim"], int)
    if dim < 1:
        raise doc.error(["space", "dim"], "dim must be >= 1")

    sets = []
    for i, raw in enumerate(doc.get(["sets"], list)):
        p = ["sets", i]
        _mapping(doc, p)
        cset = _call(doc, p, set_from_dict, raw)
        if cset.dim != dim:
            raise doc.error(p, f"set lives in R^{cset.dim} but space.dim is {dim}")
        sets.append(cset)
    family = _call(doc, ["sets"], SetFamily, sets)

    _mapping(doc, ["objective"])
    objective = _call(doc, ["objective"], objective_from_dict, doc.data["objective"])
    probe = np.zeros(dim)
    _call(doc, ["objective"], objective.value, probe)
    if np.size(objective.subgradient(probe)) != dim:
        raise doc.error(["objective"], f"objective does not act on R^{dim}")

    plan = _plan(doc, family.m)

    _mapping(doc, ["schedule"])
    _known_keys(doc, ["schedule"], {"kind", "a", "ratio", "N", "table"})
    schedule = _call(doc, ["schedule"], schedule_from_dict, doc.data["schedule"])

    _known_keys(doc, ["init"], {"y0"})
    y0 = _vector(doc, ["init", "y0"], dim)

    stop = StopRule()
    if "stop" in doc.data:
        _known_keys(doc, ["stop"], {"feas_tol", "max_outer", "min_beta_tail"})
        stop = _call(doc, ["stop"], StopRule, **doc.data["stop"])

    diagnostics = x_star = None
    if doc.data.get("diagnostics") is not None:
        diagnostics, x_star = _diagnostics(doc, dim, family, objective, schedule, y0)

    return ExperimentConfig(family=family, objective=objective, plan=plan, schedule=schedule,
                            y0=y0, stop=stop, diagnostics=diagnostics, x_star=x_star)


def _diagnostics(doc, dim, family, objective, schedule, y0):
    base = ["diagnostics"]
    _known_keys(doc, base, {"c_hat", "r", "x_star", "dist_lb", "D"})
    sec = doc.data["diagnostics"]
    c_hat = _vector(doc, base + ["c_hat"], dim)
    x_star = _vector(doc, base + ["x_star"], dim) if "x_star" in sec else None
    if "dist_lb" in sec:
        dist = doc.get(base + ["dist_lb"], (int, float))
    elif isinstance(sec.get("D"), dict):
        D = _call(doc, base + ["D"], set_from_dict, sec["D"])
        dist = _call(doc, base + ["D"], distance_lower_bound, c_hat, D)
    elif sec.get("D", "levelset") == "levelset" and x_star is not None:
        level = objective.value(x_star)
        dist = _call(doc, base, distance_lower_bound, c_hat, objective=objective, level=level)
    else:
        raise doc.error(base, "need dist_lb, a set D, or x_star for the level-set D")
    inp = _call(doc, base, NegativeConditionInput.from_schedule, c_hat=c_hat,
                r=doc.get(base + ["r"], (int, float), 1.0), dist_to_D_lb=dist,
                schedule=schedule, y0=y0)
    try:
        inp.check_feasible(family)
    except DiagnosticsError as err:
        raise doc.error(base + ["c_hat"], str(err)) from None
    return inp, x_star


def load_problem(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ProblemError(f"cannot read problem file: {err.strerror}", source=str(path)) from None
    return parse_problem(text, source=str(path))
