"""Closed convex sets with exact metric projections.

Every set here has a closed-form projection, so the nonexpansiveness that the
string-averaging analysis relies on holds up to floating-point round-off only.
Vectors are plain 1-D float64 numpy arrays; :func:`as_vector` is the single
entry point that validates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Halfspace/hyperplane normals shorter than this are rejected at construction.
MIN_NORMAL = 1e-14
# Witness membership tolerance for SetFamily.
WITNESS_TOL = 1e-12


class DimensionError(ValueError):
    """Raised when a vector does not live in the set's ambient space."""


def as_vector(x, name: str = "x") -> np.ndarray:
    """Return ``x`` as a read-only 1-D float64 array, rejecting NaN/Inf."""
    v = np.array(x, dtype=np.float64, copy=True)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite coordinates: {v.tolist()}")
    v.setflags(write=False)
    return v


def _frozen(v: np.ndarray) -> np.ndarray:
    v.setflags(write=False)
    return v


class ConvexSet:
    """Base class: a nonempty closed convex subset of R^dim."""

    kind: str = "abstract"
    dim: int

    def _check(self, x) -> np.ndarray:
        v = as_vector(x)
        if v.size != self.dim:
            raise DimensionError(f"{self.kind} lives in R^{self.dim}, got a vector of length {v.size}")
        return v

    def project(self, x) -> np.ndarray:
        return _frozen(self._project(self._check(x)))

    def distance(self, x) -> float:
        return float(self._distance(self._check(x)))

    def contains(self, x, tol: float = 0.0) -> bool:
        if tol < 0:
            raise ValueError("tol must be nonnegative")
        return self.distance(x) <= tol

    def _project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _distance(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self._project(x)))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """``{x : <a, x> <= b}``"""

    a: np.ndarray
    b: float
    kind = "halfspace"

    def __post_init__(self):
        a = as_vector(self.a, "a")
        nrm = float(np.linalg.norm(a))
        if nrm < MIN_NORMAL:
            raise ValueError(f"{self.kind} normal has norm {nrm:.3g} < {MIN_NORMAL}")
        if not math.isfinite(self.b):
            raise ValueError("b must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "_nsq", float(a @ a))
        object.__setattr__(self, "_norm", nrm)

    @property
    def dim(self) -> int:
        return self.a.size

    def _residual(self, x: np.ndarray) -> float:
        return max(float(self.a @ x) - self.b, 0.0)

    def _project(self, x):
        res = self._residual(x)
        if res == 0.0:
            return x.copy()
        return x - (res / self._nsq) * self.a

    def _distance(self, x):
        return self._residual(x) / self._norm

    def to_dict(self):
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Hyperplane(Halfspace):
    """``{x : <a, x> = b}``"""

    kind = "hyperplane"

    def _residual(self, x):
        return float(self.a @ x) - self.b

    def _project(self, x):
        res = self._residual(x)
        if res == 0.0:
            return x.copy()
        return x - (res / self._nsq) * self.a

    def _distance(self, x):
        return abs(self._residual(x)) / self._norm


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """Axis-aligned box ``lo <= x <= hi`` (componentwise)."""

    lo: np.ndarray
    hi: np.ndarray
    kind = "box"

    def __post_init__(self):
        lo, hi = as_vector(self.lo, "lo"), as_vector(self.hi, "hi")
        if lo.size != hi.size:
            raise DimensionError("box bounds have different lengths")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def _project(self, x):
        return np.clip(x, self.lo, self.hi)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    """Closed Euclidean ball."""

    center: np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, "center"))
        if not (math.isfinite(self.radius) and self.radius >= 0):
            raise ValueError("ball radius must be finite and >= 0")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def _project(self, x):
        d = x - self.center
        nrm = float(np.linalg.norm(d))
        if nrm <= self.radius:
            return x.copy()
        return self.center + (self.radius / nrm) * d

    def _distance(self, x):
        return max(float(np.linalg.norm(x - self.center)) - self.radius, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Singleton(ConvexSet):
    p: np.ndarray
    kind = "singleton"

    def __post_init__(self):
        object.__setattr__(self, "p", as_vector(self.p, "p"))

    @property
    def dim(self) -> int:
        return self.p.size

    def _project(self, x):
        return self.p.copy()

    def _distance(self, x):
        return float(np.linalg.norm(x - self.p))

    def to_dict(self):
        return {"kind": self.kind, "p": self.p.tolist()}


@dataclass(frozen=True, eq=False)
class CallbackSet(ConvexSet):
    """A set known only through a user projection oracle.

    The caller is responsible for the oracle being the exact metric projection
    onto a nonempty closed convex set. Not expressible in problem files.
    """

    dim: int
    projector: Callable[[np.ndarray], np.ndarray]
    kind = "callback"

    def _project(self, x):
        y = as_vector(self.projector(x.copy()), "projection")
        if y.size != self.dim:
            raise DimensionError("projection oracle changed the dimension")
        return y

    def to_dict(self):
        raise TypeError("callback sets cannot be serialized")


_KINDS = {cls.kind: cls for cls in (Halfspace, Hyperplane, Box, Ball, Singleton)}


def set_from_dict(d: dict) -> ConvexSet:
    """Inverse of ``ConvexSet.to_dict``."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown set kind {kind!r}; expected one of {sorted(_KINDS)}")
    return _KINDS[kind](**d)


@dataclass(frozen=True)
class SetFamily:
    """Ordered constraint sets C_1..C_m; indices are 1-based in string plans."""

    sets: tuple
    intersection_witness: np.ndarray | None = field(default=None)

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise ValueError("a set family needs at least one set")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise DimensionError(f"sets live in different dimensions: {sorted(dims)}")
        object.__setattr__(self, "sets", sets)
        if self.intersection_witness is not None:
            w = as_vector(self.intersection_witness, "intersection_witness")
            if w.size != sets[0].dim:
                raise DimensionError("witness dimension does not match the family")
            viol = max(s.distance(w) for s in sets)
            if viol > WITNESS_TOL:
                raise ValueError(f"intersection witness violates the family by {viol:.3g}")
            object.__setattr__(self, "intersection_witness", w)

    @property
    def m(self) -> int:
        return len(self.sets)

    @property
    def dim(self) -> int:
        return self.sets[0].dim

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, i):
        return self.sets[i]


def project(cset: ConvexSet, x) -> np.ndarray:
    """Nearest point of ``cset`` to ``x``."""
    return cset.project(x)


def distance(cset: ConvexSet, x) -> float:
    return cset.distance(x)


def contains(cset: ConvexSet, x, tol: float = 0.0) -> bool:
    return cset.contains(x, tol)


def max_violation(family: SetFamily | Sequence[ConvexSet], x) -> float:
    """Largest distance from ``x`` to any member of the family."""
    sets = family.sets if isinstance(family, SetFamily) else tuple(family)
    x = as_vector(x)
    return max(s.distance(x) for s in sets)
