from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from bequiset.broadcast_sim import simulate_b_equiset
from bequiset.checks import job_trace_problems, reference_trace
from bequiset.core import RateSchedule, build_trace, make_instance
from bequiset.jobsched import min_idx_jobs
from bequiset.oracle import brute_force_bopt, discrete_trace, greedy_upper_bound
from bequiset.reduction import (
    ReductionError,
    build_batch_instance,
    construct_upsilon2,
    mirror_policy,
    replay_mirror,
)

from strategies import instances


@pytest.fixture
def fig_reduction(figure1):
    e = simulate_b_equiset(figure1, F(3, 2))
    _, sched = brute_force_bopt(figure1, F(1, 2), 14)
    return build_batch_instance(figure1, e, discrete_trace(figure1, sched))


def test_figure1_batches(fig_reduction):
    red = fig_reduction
    assert [b.id for b in red.batches] == ["S1", "S2", "S3", "S4"]
    (job,) = red.batches[1].jobs
    o = red.origins[("S2", "A")]
    assert job.seq_work == o.o_begin - 1
    assert job.par_work == red.e_trace.schedule.integrate(("S2", "A"), o.o_begin, o.e_end)
    for (rid, item), o in red.origins.items():
        assert o.seq_work == min(o.e_end, o.o_begin) - o.arrival
        if o.e_end <= o.o_begin:
            assert o.par_work == 0 and (rid, item) not in red.releases
        else:
            assert red.releases[(rid, item)] == o.e_end


def test_figure1_mirror_reproduces_b_equiset(fig_reduction):
    tr = replay_mirror(fig_reduction)
    assert tr.flow == F(44, 3)
    assert tr.batch_completion == dict(fig_reduction.e_trace.completions)


def test_figure1_upsilon2(fig_reduction):
    ups = construct_upsilon2(fig_reduction)
    assert ups.flow <= 11
    assert job_trace_problems(ups) == []
    for rid, c in fig_reduction.o_trace.completions.items():
        assert ups.batch_completion[rid] <= c


def test_class_report(fig_reduction):
    report = fig_reduction.class_report()
    assert set(report) == {"A", "B", "C"}
    for classes in report.values():
        for c in classes:
            assert set(c["minus"]) | set(c["plus"]) <= set(c["members"])


def test_served_before_reference_starts():
    inst = make_instance([("A", 1)], [("S", 0, "A")])
    e = simulate_b_equiset(inst, 2)
    late = build_trace(RateSchedule((0, 3, 4), ({}, {(None, "A"): F(1)}), 1), inst)
    red = build_batch_instance(inst, e, late)
    (job,) = red.batches[0].jobs
    assert (job.seq_work, job.par_work, job.sticky_alive) == (F(1, 2), 0, False)


def test_served_after_reference_starts():
    inst = make_instance([("A", 1)], [("S", 0, "A")])
    e = simulate_b_equiset(inst, F(1, 2))
    _, o = reference_trace(inst)
    red = build_batch_instance(inst, e, o)
    (job,) = red.batches[0].jobs
    assert job.seq_work == 0 and job.par_work == 1 and job.sticky_alive


def test_single_request_mirror_is_minidx():
    inst = make_instance([("A", 1)], [("S", F(1, 2), "A")])
    e = simulate_b_equiset(inst, F(1, 2))
    _, o = reference_trace(inst)
    red = build_batch_instance(inst, e, o)
    policy = mirror_policy(red)
    alive = list(red.batches[0].jobs)
    for t in (F(1, 2), F(1), F(2)):
        assert policy("S", alive, F(1, 2), t) == min_idx_jobs("S", alive, F(1, 2), t)
    with pytest.raises(ReductionError):
        policy("S", alive, F(1, 2), F(100))


def test_rejects_unverified_trace(figure1):
    e = simulate_b_equiset(figure1, F(3, 2))
    o = discrete_trace(figure1, brute_force_bopt(figure1)[1])
    fake = type(o)(o.schedule, o.broadcasts, o.completions, o.flow - 1)
    with pytest.raises(ReductionError):
        build_batch_instance(figure1, e, fake)
    with pytest.raises(ReductionError):
        # a 3/2-speed trace is not a unit-speed reference
        build_batch_instance(figure1, e, e)


def test_zero_parallel_class_is_empty_packing():
    inst = make_instance([("A", 1)], [("S", 0, "A")])
    e = simulate_b_equiset(inst, 4)
    late = build_trace(RateSchedule((0, 1, 2), ({}, {(None, "A"): F(1)}), 1), inst)
    red = build_batch_instance(inst, e, late)
    assert red.classes["A"][0].w_minus == red.classes["A"][0].w_plus == 0
    ups = construct_upsilon2(red)
    assert all(not a for a in ups.alloc)


small = instances(max_items=3, max_requests=4, lengths=st.sampled_from([F(1, 2), F(1), F(3, 2)]),
                  arrivals=st.sampled_from([F(k, 2) for k in range(5)]))


@settings(max_examples=40, deadline=None)
@given(small, st.sampled_from([F(1), F(3, 2), F(5), F(10)]), st.booleans())
def test_reduction_chain(inst, speed, use_greedy):
    if not inst.requests:
        return
    e = simulate_b_equiset(inst, speed)
    if use_greedy:
        o = discrete_trace(inst, greedy_upper_bound(inst)[1])
    else:
        o = reference_trace(inst)[1]
    red = build_batch_instance(inst, e, o)
    for item, classes in red.classes.items():
        members = [m for c in classes for m in c.members]
        assert sorted(members) == sorted(r.id for r in inst.requests if item in r.items)
        for c in classes:
            assert c.w_minus + c.w_plus <= 2 * c.length
            positive = {rid for rid in c.members if red.origins[(rid, item)].par_work > 0}
            assert set(c.minus) | set(c.plus) == positive and not set(c.minus) & set(c.plus)
    mirror = replay_mirror(red)
    assert mirror.flow == e.flow
    assert mirror.batch_completion == dict(e.completions)
    ups = construct_upsilon2(red)
    assert job_trace_problems(ups) == []
    assert ups.flow <= o.flow
