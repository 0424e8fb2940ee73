"""Random instance builders shared by the test modules."""

import numpy as np

from dsap import Ball, Box, Halfspace, Hyperplane, PlanConstraints, PlanStage, Singleton


def random_set(rng, dim):
    kind = rng.integers(5)
    if kind == 0:
        return Halfspace(rng.standard_normal(dim) + 0.1, rng.normal())
    if kind == 1:
        return Hyperplane(rng.standard_normal(dim) + 0.1, rng.normal())
    if kind == 2:
        lo = rng.normal(size=dim)
        return Box(lo, lo + rng.exponential(size=dim))
    if kind == 3:
        return Ball(rng.normal(size=dim), rng.exponential())
    return Singleton(rng.normal(size=dim))


def random_point(rng, dim, scale=3.0):
    return rng.normal(scale=scale, size=dim)


def random_stage(rng, m):
    """An admissible stage for constraints (0.5/m, m): strings cover 1..m."""
    s = int(rng.integers(1, m + 1))
    perm = rng.permutation(m) + 1
    cuts = np.sort(rng.choice(np.arange(1, m), size=s - 1, replace=False)) if s > 1 else []
    strings = [tuple(int(i) for i in part) for part in np.split(perm, cuts)]
    # repeat some indices inside strings, within length m
    strings = [t + t[: max(0, min(len(t), m - len(t)))] if rng.random() < 0.3 else t for t in strings]
    delta = 0.5 / m
    w = delta + rng.dirichlet(np.ones(s)) * (1 - s * delta)
    w[-1] = 1.0 - sum(w[:-1])
    return PlanStage(strings, w), PlanConstraints(delta=delta, qbar=m)
