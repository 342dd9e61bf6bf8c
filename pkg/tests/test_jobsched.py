from fractions import Fraction as F

import pytest
from hypothesis import given, settings

from bequiset.checks import job_trace_problems
from bequiset.jobsched import (
    Batch,
    ConstructionError,
    PolicyContractError,
    SeqParJob,
    build_jdoubleprime,
    build_jprime,
    construct_delayed_schedule,
    feasible_for,
    simulate_equi,
    simulate_equi_compose_a,
)

from strategies import batch_lists


def J(id, s, p, sticky=False):
    return SeqParJob(id, F(s), F(p), sticky)


def test_job_validation():
    with pytest.raises(ValueError):
        J("x", -1, 0)
    with pytest.raises(ValueError):
        Batch("b", 0, ())
    with pytest.raises(ValueError):
        Batch("b", 0, (J("x", 0, 1), J("x", 1, 1)))


def test_equi_single_job():
    tr = simulate_equi([(0, J("a", 1, 2))], 1)
    assert tr.job_completion["a"] == 3 and tr.flow == 3


def test_equi_two_parallel_jobs():
    tr = simulate_equi([(0, J("a", 0, 1)), (0, J("b", 0, 1))], 1)
    assert tr.alloc[0] == {"a": F(1, 2), "b": F(1, 2)}
    assert tr.flow == 4


def test_equi_sequential_jobs_ignore_allocation():
    tr = simulate_equi([(0, J("a", 1, 0)), (0, J("b", 1, 0))], 1)
    assert tr.job_completion == {"a": 1, "b": 1} and tr.flow == 2


def test_compose_minidx_example():
    batch = Batch("B1", 0, (J("J1", 1, 1), J("J2", 2, 0)))
    tr = simulate_equi_compose_a([batch], 1, "minidx")
    assert tr.job_completion[("B1", "J1")] == 2
    assert tr.batch_completion["B1"] == 2 and tr.flow == 2
    assert tr.integrate([("B1", "J1")], F(1), F(2)) == 1
    (jp,) = build_jprime([batch], tr)
    assert (jp[1].seq_work, jp[1].par_work) == (2, 0)
    assert simulate_equi(build_jprime([batch], tr), 1).flow == 2


def test_compose_single_job_matches_equi():
    batch = Batch("B", F(1, 2), (J("x", 1, F(3, 2)),))
    a = simulate_equi_compose_a([batch], 1)
    b = simulate_equi([(F(1, 2), J("B", 1, F(3, 2)))], 1)
    assert a.flow == b.flow
    (jp,) = build_jprime([batch], a)
    assert (jp[1].seq_work, jp[1].par_work) == (1, F(3, 2))


def test_compose_two_batches():
    batches = [Batch("B1", 0, (J("x", 0, 1),)), Batch("B2", 0, (J("x", 0, 1),))]
    tr = simulate_equi_compose_a(batches, 1)
    assert tr.flow == 4
    assert [(j.seq_work, j.par_work) for _, j in build_jprime(batches, tr)] == [(0, 1), (0, 1)]


def test_compose_policy_contract():
    batch = Batch("B", 0, (J("x", 0, 1), J("y", 0, 1)))
    with pytest.raises(PolicyContractError):
        simulate_equi_compose_a([batch], 1, lambda b, alive, share, t: {alive[0].id: share / 2})


def test_sticky_job_keeps_batch_alive():
    batches = [Batch("B1", 0, (J("x", 0, 0, sticky=True),)), Batch("B2", 0, (J("y", 0, 1),))]
    tr = simulate_equi_compose_a(batches, 1, releases={("B1", "x"): F(3)})
    assert tr.batch_completion == {"B1": 3, "B2": 2}
    with pytest.raises(ValueError):
        simulate_equi_compose_a(batches, 1)


def test_jdoubleprime():
    batches = [
        Batch("B1", 0, (J("a", 1, 1), J("b", 2, 0))),
        Batch("B2", 0, (J("a", 0, 1), J("b", 0, 1), J("c", 0, 1))),
        Batch("B3", 1, (J("a", F(1, 2), F(1, 4)),)),
    ]
    got = [(a, j.seq_work, j.par_work) for a, j in build_jdoubleprime(batches)]
    assert got == [(0, 2, 1), (0, 0, 3), (1, F(1, 2), F(1, 4))]


def test_feasible_for():
    jobs = [(0, J("a", 0, 1)), (0, J("b", 1, 1))]
    tr = simulate_equi(jobs, 1)
    assert feasible_for(tr, jobs)
    heavier = [(0, J("a", 0, 2)), (0, J("b", 1, 1))]
    v = feasible_for(tr, heavier)
    assert not v and "job 0" in v.violation
    with pytest.raises(ValueError):
        feasible_for(tr, jobs[:1])


def test_delayed_single_job():
    tr = construct_delayed_schedule([(0, J("a", 0, 3))], [(3, 3)], 1)
    assert tr.job_completion["a"] == F(9, 2)
    assert tr.alloc[-1] == {"a": 2}
    assert tr.flow <= 2 * 3


def test_delayed_zero_parallel_work():
    tr = construct_delayed_schedule([(1, J("a", 2, 0))], [(4, 3)], F(1, 3))
    assert tr.job_completion["a"] == 3


def test_delayed_two_batches_hand_optimum():
    # one processor: B1 (work 1 at 0) then B2 (work 2 at 0): completions 1 and 3, flow 4
    jdp = [(0, J("B1", 0, 1)), (0, J("B2", 0, 2))]
    tr = construct_delayed_schedule(jdp, [(1, 1), (3, 3)], 1)
    assert job_trace_problems(tr) == []
    assert tr.flow <= 2 * 4


def test_delayed_rejects_inconsistent_summary():
    with pytest.raises(ConstructionError):
        construct_delayed_schedule([(0, J("a", 0, 1))], [(2, 1)], 1)
    with pytest.raises(ConstructionError):
        construct_delayed_schedule([(0, J("a", 3, 1))], [(2, 2)], 1)


@settings(max_examples=80, deadline=None)
@given(batch_lists())
def test_jprime_equality(batches):
    for inner in ("equi", "minidx"):
        tr = simulate_equi_compose_a(batches, 1, inner)
        assert job_trace_problems(tr) == []
        jp = build_jprime(batches, tr)
        tr2 = simulate_equi(jp, 1)
        assert tr.flow == tr2.flow
        for b in batches:
            assert tr.batch_completion[b.id] == tr2.job_completion[b.id]


@settings(max_examples=60, deadline=None)
@given(batch_lists())
def test_jdoubleprime_dominates_jprime(batches):
    tr = simulate_equi_compose_a(batches, 1, "minidx")
    for (_, a), (_, b) in zip(build_jprime(batches, tr), build_jdoubleprime(batches)):
        assert a.seq_work == b.seq_work and a.par_work <= b.par_work
    assert feasible_for(simulate_equi(build_jdoubleprime(batches), 1), build_jprime(batches, tr))


@settings(max_examples=40, deadline=None)
@given(batch_lists())
def test_sequential_immunity(batches):
    a = simulate_equi_compose_a(batches, 1, "equi")
    b = simulate_equi_compose_a(batches, 1, "minidx")
    for bt in batches:
        for j in bt.jobs:
            if j.par_work == 0:
                key = (bt.id, j.id)
                assert a.job_completion[key] == b.job_completion[key] == bt.arrival + j.seq_work
