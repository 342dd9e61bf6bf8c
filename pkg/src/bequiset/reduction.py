"""From broadcast schedules to Seq-Par batches and back.

``build_batch_instance`` turns a broadcast instance, a B-EquiSet trace ``E``
and a unit-speed reference trace ``O`` into one batch per request with one job
per requested item.  ``mirror_policy`` replays ``E``'s bandwidth split inside
Equi∘A, and ``construct_upsilon2`` packs the parallel work of the batches into
twice the bandwidth ``O`` spends on each broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import BroadcastInstance, BroadcastTrace, first_broadcast_after, format_rational
from .jobsched import (
    Batch,
    CapacityProfile,
    ConstructionError,
    JobTrace,
    SeqParJob,
    batch_specs,
    simulate_equi_compose_a,
    trace_from_segments,
)
from .oracle import ScheduleViolation, verify_schedule


class ReductionError(RuntimeError):
    pass


@dataclass(frozen=True)
class JobOrigin:
    """Where job (request, item) comes from in the two broadcast traces."""

    request: str
    item: str
    arrival: Fraction
    e_begin: Fraction
    e_end: Fraction
    o_begin: Fraction
    o_end: Fraction
    seq_work: Fraction
    par_work: Fraction

    @property
    def sticky(self) -> bool:
        return self.e_end > self.o_begin


@dataclass(frozen=True)
class ItemClass:
    item: str
    index: int
    begin: Fraction
    end: Fraction
    members: tuple[str, ...]
    minus: tuple[str, ...]
    plus: tuple[str, ...]
    w_minus: Fraction
    w_plus: Fraction
    length: Fraction

    @property
    def capacity_ok(self) -> bool:
        return self.w_minus + self.w_plus <= 2 * self.length


@dataclass
class ReductionOutput:
    inst: BroadcastInstance
    e_trace: BroadcastTrace
    o_trace: BroadcastTrace
    processors: Fraction
    batches: list[Batch]
    releases: dict[tuple[str, str], Fraction]
    origins: dict[tuple[str, str], JobOrigin]
    classes: dict[str, list[ItemClass]] = field(default_factory=dict)

    def class_report(self) -> dict:
        """JSON-ready class partition per item."""
        out = {}
        for item, classes in self.classes.items():
            out[item] = [
                {
                    "k": c.index,
                    "broadcast": [format_rational(c.begin), format_rational(c.end)],
                    "members": list(c.members),
                    "minus": list(c.minus),
                    "plus": list(c.plus),
                    "w_minus": format_rational(c.w_minus),
                    "w_plus": format_rational(c.w_plus),
                    "capacity": format_rational(2 * c.length),
                }
                for c in classes
            ]
        return out


def _checked(trace: BroadcastTrace, inst: BroadcastInstance, speed, label: str) -> None:
    try:
        again = verify_schedule(trace.schedule, inst, speed)
    except ScheduleViolation as exc:
        raise ReductionError(f"{label} trace rejected: {exc}") from exc
    if again.flow != trace.flow or dict(again.completions) != dict(trace.completions):
        raise ReductionError(f"{label} trace does not match its own schedule")


def build_batch_instance(
    inst: BroadcastInstance, e_trace: BroadcastTrace, o_trace: BroadcastTrace
) -> ReductionOutput:
    _checked(e_trace, inst, e_trace.schedule.speed, "algorithm")
    _checked(o_trace, inst, 1, "reference")
    sched = e_trace.schedule
    batches = []
    releases: dict = {}
    origins: dict = {}
    for req in inst.requests:
        jobs = []
        for item in req.items:
            e_hit = first_broadcast_after(e_trace, item, req.arrival)
            o_hit = first_broadcast_after(o_trace, item, req.arrival)
            if e_hit is None or o_hit is None:
                raise ReductionError(f"request {req.id!r} is not served item {item!r}")
            e_end, o_begin = e_hit[1], o_hit[0]
            seq = min(e_end, o_begin) - req.arrival
            par = Fraction(0)
            sticky = e_end > o_begin
            if sticky:
                par = sched.integrate((req.id, item), o_begin, e_end)
                releases[(req.id, item)] = e_end
            origins[(req.id, item)] = JobOrigin(
                req.id, item, req.arrival, e_hit[0], e_end, o_begin, o_hit[1], seq, par
            )
            jobs.append(SeqParJob(item, seq, par, sticky_alive=sticky))
        batches.append(Batch(req.id, req.arrival, tuple(jobs)))
    out = ReductionOutput(inst, e_trace, o_trace, sched.speed, batches, releases, origins)
    out.classes = _partition(out)
    return out


def _partition(red: ReductionOutput) -> dict[str, list[ItemClass]]:
    lengths = red.inst.lengths
    classes: dict[str, list[ItemClass]] = {}
    for item in lengths:
        bcasts = red.o_trace.broadcasts[item]
        groups: list[list[JobOrigin]] = [[] for _ in bcasts]
        for req in red.inst.requests:
            if item not in req.items:
                continue
            o = red.origins[(req.id, item)]
            k = next(k for k, (b, _) in enumerate(bcasts) if o.arrival <= b)
            lower = bcasts[k - 1][0] if k > 0 else None
            assert lower is None or lower < o.arrival
            groups[k].append(o)
        out = []
        for k, ((b, c), members) in enumerate(zip(bcasts, groups)):
            minus = [o for o in members if o.par_work > 0 and o.e_begin < b]
            plus = [o for o in members if o.par_work > 0 and o.e_begin >= b]
            out.append(
                ItemClass(
                    item, k + 1, b, c,
                    tuple(o.request for o in members),
                    tuple(o.request for o in minus),
                    tuple(o.request for o in plus),
                    sum((o.par_work for o in minus), Fraction(0)),
                    sum((o.par_work for o in plus), Fraction(0)),
                    lengths[item],
                )
            )
        classes[item] = out
    return classes


def mirror_policy(red: ReductionOutput):
    """Inner policy giving job (request, item) the bandwidth E gave that pair.

    If the replayed rates of the alive jobs do not add up to the batch share,
    they are rescaled to it (or split evenly when all are zero), so the policy
    is fully active whatever the caller does with it.
    """
    sched = red.e_trace.schedule

    def policy(batch_id, alive, share, t):
        if t < sched.breakpoints[0] or t >= sched.horizon:
            raise ReductionError(f"time {t} outside the recorded horizon")
        rates = sched.rates[sched.interval_at(t)]
        got = {j.id: rates.get((batch_id, j.id), Fraction(0)) for j in alive}
        total = sum(got.values(), Fraction(0))
        if total == share:
            return got
        if total > 0:
            return {jid: v * share / total for jid, v in got.items()}
        part = share / len(alive)
        return {j.id: part for j in alive}

    return policy


def replay_mirror(red: ReductionOutput) -> JobTrace:
    """Equi∘mirror on the batch instance with E's processors and release times."""
    return simulate_equi_compose_a(
        red.batches,
        red.processors,
        mirror_policy(red),
        red.releases,
        checkpoints=red.e_trace.schedule.breakpoints,
    )


def construct_upsilon2(red: ReductionOutput, o_trace: Optional[BroadcastTrace] = None) -> JobTrace:
    """Two-processor batch schedule bounded by the reference trace.

    Each class of item i is packed inside the reference broadcast that serves
    it, at rate twice the reference rate of i, earliest arrival first.
    Sequential phases hold no processors.  Jobs complete when their parallel
    work is done; release times only matter to Equi∘A.
    """
    o_trace = red.o_trace if o_trace is None else o_trace
    sched = o_trace.schedule
    specs, order = batch_specs(red.batches)
    segments: dict = {}
    completion: dict = {}
    for item, classes in red.classes.items():
        for cls in classes:
            if not cls.capacity_ok:
                raise ConstructionError(
                    f"item {item!r} class {cls.index}: W- + W+ = {cls.w_minus + cls.w_plus} > {2 * cls.length}"
                )
            profile = CapacityProfile(Fraction(2))
            for x in sched.breakpoints:
                if cls.begin < x < cls.end:
                    profile.cut(x)

            def cap(a, b, item=item):
                return 2 * sched.item_rates[sched.interval_at(a)].get(item, Fraction(0))

            members = sorted(
                (red.origins[(rid, item)] for rid in cls.members),
                key=lambda o: (o.arrival, red.inst.requests.index(red.inst.request(o.request))),
            )
            for o in members:
                key = (o.request, item)
                if o.par_work == 0:
                    completion[key] = o.arrival + o.seq_work
                    continue
                segs = profile.pack(o.par_work, cls.begin, cls.end, rate_cap=cap)
                if segs is None:
                    raise ConstructionError(f"job {key} does not fit its reference broadcast")
                segments[key] = segs
                completion[key] = segs[-1][1]
    trace = trace_from_segments(Fraction(2), specs, order, segments, completion)
    if not trace.capacity_ok():
        raise ConstructionError("two-processor capacity exceeded")
    return trace
