"""Property checks shared by the test suite and ``bequiset verify``.

Each check returns a :class:`Verdict`; an oracle running out of budget yields a
``skipped`` verdict instead of a failure.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .broadcast_sim import simulate_b_equiset, simulate_b_equiset_edf, simulate_ignore_deps
from .core import BroadcastInstance, BroadcastTrace, first_broadcast_after
from .jobsched import (
    Batch,
    ConstructionError,
    JobTrace,
    build_jdoubleprime,
    build_jprime,
    construct_delayed_schedule,
    feasible_for,
    simulate_equi,
    simulate_equi_compose_a,
)
from .oracle import (
    OracleScaleError,
    ScheduleViolation,
    batch_micro_optimum,
    brute_force_bopt,
    discrete_trace,
    greedy_upper_bound,
    priority_batch_schedule,
    verify_schedule,
)
from .reduction import build_batch_instance, construct_upsilon2, replay_mirror
from .workloads import gen_fact1_adversarial, gen_random_batches, gen_random_correlated


@dataclass
class Verdict:
    ok: bool
    detail: str = ""
    skipped: bool = False

    @property
    def label(self) -> str:
        return "skipped (scale)" if self.skipped else ("pass" if self.ok else "fail")


def _fail(msg: str) -> Verdict:
    return Verdict(False, msg)


def job_trace_problems(trace: JobTrace) -> list[str]:
    """Recheck a job trace against its own job specs."""
    out = []
    if not trace.capacity_ok():
        out.append("processor capacity exceeded")
    for key in trace.order:
        sp = trace.specs[key]
        done = trace.job_completion[key]
        if done < sp.par_start:
            out.append(f"{key}: completes before its sequential phase ends")
        area = trace.integrate([key], sp.par_start, done)
        if area < sp.par_work:
            out.append(f"{key}: parallel area {area} < work {sp.par_work}")
    return out


# --- batch world --------------------------------------------------------------


def check_jprime_equality(batches: Sequence[Batch], inner: str, p=1) -> Verdict:
    tr = simulate_equi_compose_a(batches, p, inner)
    bad = job_trace_problems(tr)
    if bad:
        return _fail("; ".join(bad))
    jp = build_jprime(batches, tr)
    tr2 = simulate_equi(jp, p)
    if tr.flow != tr2.flow:
        return _fail(f"Equi∘A flow {tr.flow} != Equi(J') flow {tr2.flow}")
    for b in batches:
        if tr.batch_completion[b.id] != tr2.job_completion[b.id]:
            return _fail(f"batch {b.id}: {tr.batch_completion[b.id]} != {tr2.job_completion[b.id]}")
    return Verdict(True, f"flow={tr.flow}")


def check_jdoubleprime_transfer(batches: Sequence[Batch], inner: str, p=1, delta=1) -> Verdict:
    jp = build_jprime(batches, simulate_equi_compose_a(batches, p, inner))
    jdp = build_jdoubleprime(batches)
    equi = simulate_equi(jdp, p)
    verdict = feasible_for(equi, jp)
    if not verdict:
        return _fail(f"Equi(J'') schedule: {verdict.violation}")
    # any feasible one-processor schedule can feed the construction
    fifo = priority_batch_schedule(batches, [b.id for b in batches])
    summary = [(fifo.batch_completion[b.id], fifo.batch_completion[b.id] - b.arrival) for b in batches]
    delayed = construct_delayed_schedule(jdp, summary, delta)
    verdict = feasible_for(delayed, jp)
    if not verdict:
        return _fail(f"delayed schedule: {verdict.violation}")
    return Verdict(True)


def check_delayed_schedule(batches: Sequence[Batch], deltas=(Fraction(1, 2), Fraction(1), Fraction(2))) -> Verdict:
    opt_flow, opt = batch_micro_optimum(batches)
    summary = [(opt.batch_completion[b.id], opt.batch_completion[b.id] - b.arrival) for b in batches]
    jdp = build_jdoubleprime(batches)
    for delta in deltas:
        try:
            tr = construct_delayed_schedule(jdp, summary, delta)
        except ConstructionError as exc:
            return _fail(f"delta={delta}: {exc}")
        bad = job_trace_problems(tr)
        if bad:
            return _fail(f"delta={delta}: " + "; ".join(bad))
        if tr.flow > (1 + 1 / Fraction(delta)) * opt_flow:
            return _fail(f"delta={delta}: flow {tr.flow} > bound")
    return Verdict(True, f"opt={opt_flow}")


# --- broadcast world ----------------------------------------------------------


def reference_trace(inst: BroadcastInstance, budget: int | None = None) -> tuple[Fraction, BroadcastTrace]:
    """Oracle optimum over slot-aligned schedules, as a verified trace."""
    kw = {} if budget is None else {"budget": budget}
    flow, sched = brute_force_bopt(inst, **kw)
    trace = discrete_trace(inst, sched)
    assert trace.flow == flow
    return flow, trace


def check_mirror_replay(inst: BroadcastInstance, speed, o_trace: BroadcastTrace) -> Verdict:
    e = simulate_b_equiset(inst, speed)
    red = build_batch_instance(inst, e, o_trace)
    tr = replay_mirror(red)
    if e.flow > tr.flow:
        return _fail(f"B-EquiSet flow {e.flow} > Equi∘mirror flow {tr.flow}")
    for req in inst.requests:
        if tr.batch_completion[req.id] < e.completions[req.id]:
            return _fail(f"batch {req.id} finishes before its request")
    return Verdict(True, f"flow={e.flow}")


def check_upsilon2(inst: BroadcastInstance, speed, o_trace: BroadcastTrace) -> Verdict:
    e = simulate_b_equiset(inst, speed)
    red = build_batch_instance(inst, e, o_trace)
    for item, classes in red.classes.items():
        for c in classes:
            if not c.capacity_ok:
                return _fail(f"{item} class {c.index}: W-+W+ = {c.w_minus + c.w_plus} > {2 * c.length}")
    try:
        ups = construct_upsilon2(red)
    except ConstructionError as exc:
        return _fail(str(exc))
    bad = job_trace_problems(ups)
    if bad:
        return _fail("; ".join(bad))
    if ups.flow > o_trace.flow:
        return _fail(f"Υ2 flow {ups.flow} > reference flow {o_trace.flow}")
    return Verdict(True, f"upsilon2={ups.flow} ref={o_trace.flow}")


def check_competitive_ratio(inst: BroadcastInstance, eps=1, delta=1, budget: int | None = None) -> Verdict:
    eps, delta = Fraction(eps), Fraction(delta)
    try:
        opt, _ = reference_trace(inst, budget)
    except OracleScaleError as exc:
        return Verdict(True, str(exc), skipped=True)
    speed = (4 + eps) * (1 + delta)
    bound = (2 + 8 / eps) * (1 + 1 / delta)
    flow = simulate_b_equiset(inst, speed).flow
    if flow > bound * opt:
        return _fail(f"flow {flow} > {bound} x oracle {opt}")
    return Verdict(True, f"ratio={flow / opt if opt else 0}")


def check_edf(inst: BroadcastInstance, eps=1, delta=1) -> Verdict:
    res = simulate_b_equiset_edf(inst, eps, delta)
    for a, b, _, items in res.trace.schedule.intervals():
        if sum(1 for v in items.values() if v > 0) > 1:
            return _fail(f"two items broadcast on [{a}, {b})")
    for k, job in enumerate(res.jobs):
        if k not in res.finish or res.finish[k] > job.deadline:
            return _fail(f"virtual broadcast {k} ({job.item}) misses deadline {job.deadline}")
    if res.misses:
        return _fail(f"misses reported: {res.misses}")
    if res.preemptions > res.n_broadcasts:
        return _fail(f"{res.preemptions} preemptions > {res.n_broadcasts} broadcasts")
    return Verdict(True, f"preemptions={res.preemptions} broadcasts={res.n_broadcasts}")


def trace_problems(trace: BroadcastTrace, inst: BroadcastInstance, full_rate: bool) -> list[str]:
    """Conservation, interval integrals, completions and verifier round trip."""
    out = []
    sched = trace.schedule
    lengths = inst.lengths
    for a, b, pairs, items in sched.intervals():
        total = sum(items.values(), Fraction(0))
        if total > sched.speed:
            out.append(f"[{a},{b}) uses {total} > {sched.speed}")
        if full_rate:
            alive = any(r.arrival <= a < trace.completions[r.id] for r in inst.requests)
            if alive and total != sched.speed:
                out.append(f"[{a},{b}) uses {total} while requests are alive")
    for item, ivs in trace.broadcasts.items():
        for b, c in ivs:
            got = sched.integrate(item, b, c)
            if got != lengths[item]:
                out.append(f"{item} broadcast [{b},{c}] integrates to {got}")
    for req in inst.requests:
        c = max(first_broadcast_after(trace, i, req.arrival)[1] for i in req.items)
        if c != trace.completions[req.id]:
            out.append(f"{req.id}: recomputed completion {c} != {trace.completions[req.id]}")
    try:
        again = verify_schedule(sched, inst, sched.speed)
    except ScheduleViolation as exc:
        return out + [f"verifier: {exc}"]
    if again.flow != trace.flow:
        out.append(f"verifier flow {again.flow} != {trace.flow}")
    return out


SIMULATORS: dict[str, Callable[[BroadcastInstance], tuple[BroadcastTrace, bool]]] = {
    "b-equiset/equi": lambda inst: (simulate_b_equiset(inst, Fraction(3, 2), "equi"), True),
    "b-equiset/minidx": lambda inst: (simulate_b_equiset(inst, 2, "minidx"), True),
    "ignore-deps/equi": lambda inst: (simulate_ignore_deps(inst, 1, "equi-per-item"), True),
    "ignore-deps/rr": lambda inst: (simulate_ignore_deps(inst, 1, "round-robin"), True),
    "b-equiset-edf": lambda inst: (simulate_b_equiset_edf(inst, 1, 1).trace, False),
}


def check_conservation(inst: BroadcastInstance) -> Verdict:
    for name, run in SIMULATORS.items():
        trace, full = run(inst)
        bad = trace_problems(trace, inst, full)
        if bad:
            return _fail(f"{name}: " + "; ".join(bad[:3]))
    return Verdict(True)


def check_adversarial_gap(n: int) -> Verdict:
    r = math.isqrt(n)
    inst = gen_fact1_adversarial(n, 1).instance
    flow = simulate_ignore_deps(inst, 1).flow
    greedy = greedy_upper_bound(inst)[0]
    lower = (r + 1) * (n - r)
    upper = n + Fraction(r * (r + 1), 2)
    if flow < lower:
        return _fail(f"baseline flow {flow} < {lower}")
    if greedy > upper:
        return _fail(f"greedy {greedy} > {upper}")
    return Verdict(True, f"baseline={flow} greedy={greedy} ratio={float(flow / greedy):.6f}")


# --- random trial sources -----------------------------------------------------


def random_batches(seed: int) -> list[Batch]:
    """At most five batches of at most four jobs, works on the 1/4 grid."""
    n = random.Random(seed).randint(1, 5)
    return gen_random_batches(n, max_jobs=4, seed=seed)


def micro_batches(seed: int) -> list[Batch]:
    n = random.Random(seed).randint(1, 2)
    return gen_random_batches(n, max_jobs=3, seed=seed)


def oracle_sized_instance(seed: int) -> BroadcastInstance:
    """At most three items and four requests, everything on the 1/2 grid."""
    rng = random.Random(seed)
    n_items = rng.randint(1, 3)
    return gen_random_correlated(
        n_items,
        rng.randint(1, 4),
        zipf_theta=1,
        max_set=n_items,
        length_range=(Fraction(1, 2), Fraction(3, 2)),
        horizon=2,
        seed=seed,
        grid=Fraction(1, 2),
    )


def fuzz_instance(seed: int) -> BroadcastInstance:
    rng = random.Random(seed)
    n_items = rng.randint(1, 5)
    return gen_random_correlated(
        n_items,
        rng.randint(0, 6),
        zipf_theta=rng.choice([0, 1, 2]),
        max_set=rng.randint(1, n_items),
        length_range=(Fraction(1, 4), Fraction(2)),
        horizon=rng.choice([0, 2, 6]),
        seed=seed,
    )
