import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsap import (Box, Linear, Norm1, Norm2Sq, PerturbationSchedule, QuadraticDiag, SetFamily,
                  StopRule, UserObjective, direction, dsap_run, generate_halfspace_problem,
                  inner_loop, schedule_head, schedule_total, superiorized_run)
from dsap.harness import example_config, random_plan, trace_digest
from dsap.superiorize import objective_from_dict, replay_step, schedule_from_dict
from dsap.trace import NonFiniteIterateError


def test_direction_examples():
    sq = QuadraticDiag([1.0], [0.0])
    assert direction(sq, [13]).tolist() == [-1.0]
    assert direction(sq, [0]).tolist() == [0.0]
    np.testing.assert_allclose(direction(Linear([3, 4]), [7, -1]), [-0.6, -0.8], rtol=0, atol=1e-16)


def test_direction_rejects_bad_oracle():
    bad = UserObjective(lambda x: 0.0, lambda x: np.array([np.nan]))
    with pytest.raises(ArithmeticError):
        direction(bad, [1.0])


def test_user_oracle_zero_case():
    obj = UserObjective(lambda x: float(abs(x[0])), lambda x: None if x[0] == 0 else np.sign(x))
    assert direction(obj, [0.0]).tolist() == [0.0]
    assert direction(obj, [2.0]).tolist() == [-1.0]


def test_norm1_selection():
    np.testing.assert_array_equal(Norm1().subgradient([0.0, -2.0, 3.0]), [0.0, -1.0, 1.0])
    assert direction(Norm1(), [0.0, 0.0]).tolist() == [0.0, 0.0]


def test_inner_loop_examples():
    sq = QuadraticDiag([1.0], [0.0])
    sched = PerturbationSchedule.geometric(1.0, 0.5, 1)
    assert inner_loop(sq, sched, 0, [13]).tolist() == [12.0]
    assert inner_loop(sq, sched, 0, [0]).tolist() == [0.0]
    two = PerturbationSchedule.explicit([[0.5, 0.25]])
    assert inner_loop(Linear([1, 0]), two, 0, [0, 0]).tolist() == [-0.75, 0.0]


def test_schedule_totals_and_heads():
    ex = PerturbationSchedule.geometric(1.0, 0.5, 1)
    assert schedule_total(ex) == 2.0
    assert schedule_head(ex, 1) == 1.0
    assert schedule_head(ex, 0) == 0.0
    assert schedule_total(PerturbationSchedule.explicit([[0.7]])) == 0.7


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.05, 0.95),
       st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_geometric_head_matches_brute_force(a, ratio, lengths):
    sched = PerturbationSchedule.geometric(a, ratio, lengths)
    acc = []
    for k in range(40):
        assert len(sched.betas(k)) == lengths[k % len(lengths)]
        assert all(0 < b <= 1 for b in sched.betas(k))
        acc.extend(sched.betas(k))
        head = sched.head(k + 1)
        assert math.isclose(head, math.fsum(acc), rel_tol=1e-12)
        assert head <= sched.total() * (1 + 1e-15)
        assert math.isclose(sched.tail(k + 1), sched.total() - head, rel_tol=1e-9, abs_tol=1e-15)
    # the stream is consumed in order: a, a*r, a*r^2, ...
    assert math.isclose(acc[5], a * ratio ** 5, rel_tol=1e-15)


def test_explicit_schedule_runs_out():
    sched = PerturbationSchedule.explicit([[0.5, 0.25], [0.125]])
    assert sched.inner_length(2) == 0 and sched.betas(5).size == 0
    assert sched.head(1) == 0.75 and sched.head(2) == 0.875 and sched.head(10) == 0.875
    assert sched.tail(1) == 0.125 and sched.tail(2) == 0.0


@pytest.mark.parametrize("kwargs", [
    dict(kind="geometric", a=1.5), dict(kind="geometric", a=0.0), dict(kind="geometric", ratio=1.0),
    dict(kind="geometric", inner_lengths=0), dict(kind="explicit", table=[[1.2]]),
    dict(kind="explicit", table=[]), dict(kind="explicit", table=[[0.0]]),
])
def test_schedule_validation(kwargs):
    with pytest.raises(ValueError):
        PerturbationSchedule(**kwargs)


def test_schedule_serialization():
    for s in (PerturbationSchedule.geometric(0.3, 0.7, [1, 3]), PerturbationSchedule.explicit([[0.2]])):
        assert schedule_from_dict(s.to_dict()) == s


def test_example_variants():
    for variant, upper, limit in (("A", 10.0, 9.0), ("B", 1.5, 0.5)):
        cfg = example_config(variant)
        tr = superiorized_run(cfg.family, cfg.objective, cfg.plan, cfg.schedule, cfg.y0)
        for k in range(1, tr.n_outer + 1):
            assert tr.iterates[k][0] == pytest.approx(upper - sum(2.0 ** -l for l in range(1, k)), abs=1e-12)
        assert abs(tr.y_final[0] - limit) <= 1e-9
        assert tr.converged and tr.tail_mass() <= 1e-12


def test_vanishing_schedule_matches_plain_run():
    fam = generate_halfspace_problem(3, 4, seed=2)
    plan = random_plan(4, 2)
    y0 = [9.0, -4.0, 6.0]
    tiny = PerturbationSchedule.geometric(1e-300, 0.5, 2)
    sup = superiorized_run(fam, Linear([1, 1, 1]), plan, tiny, y0)
    base = dsap_run(fam, plan, y0)
    np.testing.assert_array_equal(sup.iterates, base.iterates)


def _random_problem(seed):
    rng = np.random.default_rng(seed)
    dim, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    fam = generate_halfspace_problem(dim, m, seed)
    obj = [Linear(rng.normal(size=dim)), Norm1(), Norm2Sq(),
           QuadraticDiag(rng.exponential(size=dim), rng.normal(size=dim))][seed % 4]
    sched = PerturbationSchedule.geometric(float(rng.uniform(0.1, 1)), float(rng.uniform(0.3, 0.9)),
                                           int(rng.integers(1, 4)))
    return fam, obj, random_plan(m, seed), sched, rng.normal(scale=10, size=dim)


@pytest.mark.parametrize("seed", range(20))
def test_recorded_perturbations(seed):
    fam, obj, plan, sched, y0 = _random_problem(seed)
    tr = superiorized_run(fam, obj, plan, sched, y0, StopRule(max_outer=300), record_inner=True)
    for step in tr.inner:
        assert np.linalg.norm(step.v) in (0.0,) or abs(np.linalg.norm(step.v) - 1) <= 1e-15
        assert step.beta == sched.betas(step.k)[step.n]
    for k in range(tr.n_outer):
        # displacement of the inner loop is bounded by its step mass
        z = inner_loop(obj, sched, k, tr.iterates[k])
        assert np.linalg.norm(z - tr.iterates[k]) <= sched.betas(k).sum() + 1e-12
        # replay reproduces the next iterate bit for bit
        np.testing.assert_array_equal(replay_step(tr, k, fam, obj, plan), tr.iterates[k + 1])


def test_replay_determinism():
    fam, obj, plan, sched, y0 = _random_problem(7)
    a = superiorized_run(fam, obj, plan, sched, y0)
    b = superiorized_run(fam, obj, plan, sched, y0)
    assert trace_digest(a) == trace_digest(b)


def test_nonascent_small_steps_on_quadratic():
    rng = np.random.default_rng(11)
    for _ in range(500):
        dim = int(rng.integers(1, 6))
        obj = QuadraticDiag(rng.exponential(size=dim), rng.normal(size=dim))
        y = rng.normal(scale=3, size=dim)
        beta = float(rng.uniform(0, 1e-4))
        v = direction(obj, y)
        assert obj.value(y + beta * v) <= obj.value(y) + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_subgradient_inequality(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 6))
    objs = [Linear(rng.normal(size=dim)), Norm1(), Norm2Sq(),
            QuadraticDiag(rng.exponential(size=dim), rng.normal(size=dim))]
    x = rng.normal(size=dim)
    x[rng.random(dim) < 0.3] = 0.0  # kinks of the l1 norm
    for obj in objs:
        s = obj.subgradient(x)
        for _ in range(5):
            z = rng.normal(scale=3, size=dim)
            assert obj.value(z) >= obj.value(x) + s @ (z - x) - 1e-9


def test_level_set_bounds_against_sampling():
    rng = np.random.default_rng(5)
    for _ in range(200):
        dim = int(rng.integers(1, 4))
        obj = [Linear(rng.normal(size=dim)), Norm1(), Norm2Sq(),
               QuadraticDiag(rng.exponential(size=dim), rng.normal(size=dim))][int(rng.integers(4))]
        p = rng.normal(scale=4, size=dim)
        level = abs(obj.value(rng.normal(size=dim)))
        lb = obj.level_set_distance_lb(level, p)
        # no sampled point of the level set may be closer than the bound
        pts = p + rng.normal(scale=5, size=(400, dim))
        inside = [q for q in pts if obj.value(q) <= level]
        if inside:
            assert lb <= min(np.linalg.norm(q - p) for q in inside) + 1e-12


def test_objective_serialization():
    for o in (Linear([1, 2]), Norm1(), Norm2Sq(), QuadraticDiag([1, 0], [2, 3])):
        o2 = objective_from_dict(o.to_dict())
        assert o2.value([0.5, -1]) == o.value([0.5, -1])
    with pytest.raises(ValueError):
        QuadraticDiag([-1], [0])


class _Blowup(Box):
    """A box whose projection overflows; stands in for a broken user set."""

    def _project(self, x):
        return np.full_like(x, np.inf)


def test_non_finite_iterate_reported():
    fam = SetFamily([_Blowup([0], [10])])
    cfg = example_config("A")
    with pytest.raises(NonFiniteIterateError) as err:
        superiorized_run(fam, cfg.objective, cfg.plan, cfg.schedule, [13.0])
    assert err.value.k == 1
    with pytest.raises(NonFiniteIterateError):
        dsap_run(fam, cfg.plan, [13.0])
