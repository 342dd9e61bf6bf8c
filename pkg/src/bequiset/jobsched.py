"""Non-clairvoyant Seq-Par batch scheduling: Equi, Equi∘A, the J'/J'' reductions.

A Seq-Par job first runs a sequential phase that progresses at unit rate no
matter how many processors it holds, then a parallel phase that progresses at
the rate of its processor allocation.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Mapping, Optional, Sequence


class PolicyContractError(RuntimeError):
    """An inner job policy did not hand out exactly its share."""


class ConstructionError(RuntimeError):
    """A constructive schedule could not be built within its guaranteed window."""


@dataclass(frozen=True)
class SeqParJob:
    id: str
    seq_work: Fraction
    par_work: Fraction
    sticky_alive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "seq_work", Fraction(self.seq_work))
        object.__setattr__(self, "par_work", Fraction(self.par_work))
        if self.seq_work < 0 or self.par_work < 0:
            raise ValueError(f"negative work in job {self.id!r}")


@dataclass(frozen=True)
class Batch:
    id: str
    arrival: Fraction
    jobs: tuple[SeqParJob, ...]

    def __post_init__(self):
        object.__setattr__(self, "arrival", Fraction(self.arrival))
        object.__setattr__(self, "jobs", tuple(self.jobs))
        if not self.jobs:
            raise ValueError(f"batch {self.id!r} is empty")
        if len({j.id for j in self.jobs}) != len(self.jobs):
            raise ValueError(f"duplicate job ids in batch {self.id!r}")
        if self.arrival < 0:
            raise ValueError(f"negative arrival for batch {self.id!r}")


@dataclass(frozen=True)
class JobSpec:
    batch: Hashable
    arrival: Fraction
    seq_work: Fraction
    par_work: Fraction
    sticky: bool = False

    @property
    def par_start(self) -> Fraction:
        return self.arrival + self.seq_work


@dataclass(eq=False)
class JobTrace:
    """Allocation history plus completion times of one batch/job schedule.

    ``alloc[k]`` holds the constant processor amounts on
    ``[breakpoints[k], breakpoints[k+1])``.  For plain job lists each job is
    its own batch and keys are job ids; for batches keys are
    ``(batch id, job id)``.
    """

    processors: Fraction
    breakpoints: tuple[Fraction, ...]
    alloc: tuple[dict, ...]
    specs: dict[Hashable, JobSpec]
    order: tuple[Hashable, ...]
    job_completion: dict[Hashable, Fraction]
    batch_completion: dict[Hashable, Fraction]
    batch_arrival: dict[Hashable, Fraction]
    flow: Fraction = field(init=False)

    def __post_init__(self):
        self.flow = sum(
            (self.batch_completion[b] - a for b, a in self.batch_arrival.items()), Fraction(0)
        )

    def intervals(self):
        for k, a in enumerate(self.alloc):
            yield self.breakpoints[k], self.breakpoints[k + 1], a

    def integrate(self, keys, t0: Fraction, t1: Fraction) -> Fraction:
        keys = set(keys)
        total = Fraction(0)
        for a, b, alloc in self.intervals():
            lo, hi = max(a, t0), min(b, t1)
            if lo < hi:
                total += sum((v for k, v in alloc.items() if k in keys), Fraction(0)) * (hi - lo)
        return total

    def batch_keys(self, batch) -> list:
        return [k for k in self.order if self.specs[k].batch == batch]

    def capacity_ok(self) -> bool:
        return all(sum(a.values(), Fraction(0)) <= self.processors for a in self.alloc)


def trace_from_segments(
    processors: Fraction,
    specs: Mapping[Hashable, JobSpec],
    order: Sequence[Hashable],
    segments: Mapping[Hashable, Sequence[tuple[Fraction, Fraction, Fraction]]],
    completion: Mapping[Hashable, Fraction],
) -> JobTrace:
    """Assemble a JobTrace from per-job ``(start, end, rate)`` pieces."""
    points = {Fraction(0)}
    for segs in segments.values():
        for a, b, _ in segs:
            points.update((a, b))
    points.update(completion.values())
    bps = sorted(points)
    alloc = [dict() for _ in bps[:-1]]
    index = {t: k for k, t in enumerate(bps)}
    for key, segs in segments.items():
        for a, b, r in segs:
            if r == 0 or a == b:
                continue
            for k in range(index[a], index[b]):
                alloc[k][key] = alloc[k].get(key, Fraction(0)) + r
    batch_arrival: dict = {}
    batch_completion: dict = {}
    for key in order:
        sp = specs[key]
        batch_arrival[sp.batch] = sp.arrival
        batch_completion[sp.batch] = max(batch_completion.get(sp.batch, sp.arrival), completion[key])
    return JobTrace(
        Fraction(processors),
        tuple(bps),
        tuple(alloc),
        dict(specs),
        tuple(order),
        dict(completion),
        batch_completion,
        batch_arrival,
    )


# allocate(t, alive keys grouped by batch in input order, remaining parallel work) -> processors per key
_Allocator = Callable[[Fraction, dict, dict], dict]


def simulate_jobs(
    specs: dict[Hashable, JobSpec],
    order: Sequence[Hashable],
    p: Fraction,
    allocate: _Allocator,
    releases: Optional[Mapping[Hashable, Fraction]] = None,
    checkpoints: Sequence[Fraction] = (),
) -> JobTrace:
    """Event-driven run of ``allocate`` until every job completes.

    ``checkpoints`` are extra times at which the allocation is recomputed.
    """
    releases = dict(releases or {})
    checkpoints = sorted(Fraction(c) for c in checkpoints)
    for key in order:
        if specs[key].sticky and key not in releases:
            raise ValueError(f"sticky job {key!r} needs a release time")
    remaining = {k: specs[k].par_work for k in order}
    done: dict[Hashable, Fraction] = {}
    t = Fraction(0)
    bps = [t]
    allocs: list[dict] = []

    def finished(k) -> bool:
        sp = specs[k]
        if t < sp.par_start or remaining[k] > 0:
            return False
        return not sp.sticky or t >= releases[k]

    while True:
        alive = []
        for k in order:
            if k in done or specs[k].arrival > t:
                continue
            if finished(k):
                done[k] = t
            else:
                alive.append(k)
        if len(done) == len(order):
            break
        grouped: dict = {}
        for k in alive:
            grouped.setdefault(specs[k].batch, []).append(k)
        alloc = allocate(t, grouped, remaining) if grouped else {}
        if sum(alloc.values(), Fraction(0)) > p:
            raise PolicyContractError(f"allocation exceeds {p} processors at {t}")
        events = [specs[k].arrival for k in order if specs[k].arrival > t]
        events.extend(c for c in checkpoints[bisect_right(checkpoints, t):][:1])
        for k in alive:
            sp = specs[k]
            if sp.par_start > t:
                events.append(sp.par_start)
            elif remaining[k] > 0 and alloc.get(k, 0) > 0:
                events.append(t + remaining[k] / alloc[k])
            if sp.sticky and releases[k] > t:
                events.append(releases[k])
        if not events:
            raise RuntimeError(f"schedule stalled at {t} with alive jobs {alive}")
        t_next = min(events)
        for k in alive:
            if specs[k].par_start <= t and remaining[k] > 0:
                remaining[k] -= alloc.get(k, 0) * (t_next - t)
        allocs.append({k: v for k, v in alloc.items() if v > 0})
        bps.append(t_next)
        t = t_next

    batch_arrival: dict = {}
    batch_completion: dict = {}
    for k in order:
        b = specs[k].batch
        batch_arrival[b] = specs[k].arrival
        batch_completion[b] = max(batch_completion.get(b, specs[k].arrival), done[k])
    return JobTrace(
        Fraction(p), tuple(bps), tuple(allocs), dict(specs), tuple(order),
        done, batch_completion, batch_arrival,
    )


def _job_specs(jobs: Sequence[tuple]) -> tuple[dict, list]:
    specs: dict = {}
    order = []
    for arrival, job in jobs:
        if job.id in specs:
            raise ValueError(f"duplicate job id {job.id!r}")
        specs[job.id] = JobSpec(job.id, Fraction(arrival), job.seq_work, job.par_work, job.sticky_alive)
        order.append(job.id)
    return specs, order


def simulate_equi(jobs: Sequence[tuple], p, releases=None) -> JobTrace:
    """Equi on ``(arrival, SeqParJob)`` pairs: every uncompleted job gets p/N processors."""
    p = Fraction(p)
    if p <= 0:
        raise ValueError("processor count must be positive")
    specs, order = _job_specs(jobs)

    def allocate(t, grouped, remaining):
        keys = [k for ks in grouped.values() for k in ks]
        part = p / len(keys)
        return {k: part for k in keys}

    return simulate_jobs(specs, order, p, allocate, releases)


# inner(batch_id, alive jobs, share, t) -> processors per job id
JobPolicy = Callable[[str, Sequence[SeqParJob], Fraction, Fraction], Mapping[str, Fraction]]


def equi_jobs(batch_id, alive: Sequence[SeqParJob], share: Fraction, t) -> dict[str, Fraction]:
    part = share / len(alive)
    return {j.id: part for j in alive}


def min_idx_jobs(batch_id, alive: Sequence[SeqParJob], share: Fraction, t) -> dict[str, Fraction]:
    return {alive[0].id: share}


JOB_POLICIES: dict[str, JobPolicy] = {"equi": equi_jobs, "minidx": min_idx_jobs}


def batch_specs(batches: Sequence[Batch]) -> tuple[dict, list]:
    if len({b.id for b in batches}) != len(batches):
        raise ValueError("duplicate batch ids")
    specs: dict = {}
    order = []
    for b in batches:
        for j in b.jobs:
            key = (b.id, j.id)
            specs[key] = JobSpec(b.id, b.arrival, j.seq_work, j.par_work, j.sticky_alive)
            order.append(key)
    return specs, order


def simulate_equi_compose_a(
    batches: Sequence[Batch],
    p,
    inner: JobPolicy | str = "equi",
    releases: Optional[Mapping[tuple, Fraction]] = None,
    checkpoints: Sequence[Fraction] = (),
) -> JobTrace:
    """Equi∘A: p/|R(t)| processors per alive batch, split inside the batch by ``inner``.

    ``releases`` maps ``(batch id, job id)`` of sticky jobs to the time they
    may complete.
    """
    p = Fraction(p)
    if p <= 0:
        raise ValueError("processor count must be positive")
    if isinstance(inner, str):
        inner = JOB_POLICIES[inner]
    specs, order = batch_specs(batches)
    by_key = {(b.id, j.id): j for b in batches for j in b.jobs}

    def allocate(t, grouped, remaining):
        share = p / len(grouped)
        alloc = {}
        for bid, keys in grouped.items():
            alive = [by_key[k] for k in keys]
            split = inner(bid, alive, share, t)
            ids = {j.id for j in alive}
            if any(v < 0 for v in split.values()) or not set(split) <= ids:
                raise PolicyContractError(f"invalid split for batch {bid!r} at {t}")
            if sum((Fraction(v) for v in split.values()), Fraction(0)) != share:
                raise PolicyContractError(f"batch {bid!r} share not fully allotted at {t}")
            for jid, v in split.items():
                alloc[(bid, jid)] = Fraction(v)
        return alloc

    return simulate_jobs(specs, order, p, allocate, releases, checkpoints)


def build_jprime(batches: Sequence[Batch], trace: JobTrace) -> list[tuple[Fraction, SeqParJob]]:
    """One job per batch: longest sequential phase, then the batch's allocation after it."""
    out = []
    for b in batches:
        if b.id not in trace.batch_completion:
            raise ValueError(f"trace has no batch {b.id!r}")
        seq = max(j.seq_work for j in b.jobs)
        keys = [(b.id, j.id) for j in b.jobs]
        if any(k not in trace.specs for k in keys):
            raise ValueError(f"trace does not match batch {b.id!r}")
        par = trace.integrate(keys, b.arrival + seq, trace.batch_completion[b.id])
        out.append((b.arrival, SeqParJob(b.id, seq, par)))
    return out


def build_jdoubleprime(batches: Sequence[Batch]) -> list[tuple[Fraction, SeqParJob]]:
    """One job per batch: longest sequential phase, then all of the batch's parallel work."""
    return [
        (
            b.arrival,
            SeqParJob(
                b.id,
                max(j.seq_work for j in b.jobs),
                sum((j.par_work for j in b.jobs), Fraction(0)),
            ),
        )
        for b in batches
    ]


@dataclass
class Feasibility:
    ok: bool
    violation: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


def feasible_for(schedule: JobTrace, jobs: Sequence[tuple]) -> Feasibility:
    """Can ``schedule``'s allocation history, reused job by job, complete ``jobs``?"""
    if len(jobs) != len(schedule.order):
        raise ValueError("schedule and job list are not index-aligned")
    for idx, (key, (arrival, job)) in enumerate(zip(schedule.order, jobs)):
        sp = schedule.specs[key]
        if Fraction(arrival) != sp.arrival:
            raise ValueError(f"arrival mismatch at index {idx}")
        start = sp.arrival + job.seq_work
        if start > sp.par_start:
            return Feasibility(False, f"job {idx}: sequential phase ends after recorded parallel start")
        area = schedule.integrate([key], start, schedule.job_completion[key])
        if area < job.par_work:
            return Feasibility(False, f"job {idx}: parallel area {area} < work {job.par_work}")
    return Feasibility(True)


class CapacityProfile:
    """Piecewise-constant processor usage with a fixed capacity."""

    def __init__(self, capacity: Fraction):
        self.capacity = capacity
        self.bps: list[Fraction] = []
        self.used: list[Fraction] = []

    def cut(self, x: Fraction) -> None:
        if not self.bps:
            self.bps = [x]
            return
        if x in self.bps:
            return
        if x < self.bps[0]:
            self.bps.insert(0, x)
            self.used.insert(0, Fraction(0))
        elif x > self.bps[-1]:
            self.bps.append(x)
            self.used.append(Fraction(0))
        else:
            k = max(i for i, b in enumerate(self.bps) if b < x)
            self.bps.insert(k + 1, x)
            self.used.insert(k + 1, self.used[k])

    def pack(self, work: Fraction, lo: Fraction, hi: Fraction, rate_cap=None):
        """Left-pack ``work`` into ``[lo, hi]``; returns segments or None if it does not fit.

        ``rate_cap(a, b)`` optionally bounds the rate usable on ``[a, b)``.
        """
        segs = []
        if work == 0:
            return segs
        self.cut(lo)
        self.cut(hi)
        k = self.bps.index(lo)
        while work > 0 and self.bps[k] < hi:
            a, b = self.bps[k], self.bps[k + 1]
            avail = self.capacity - self.used[k]
            if rate_cap is not None:
                avail = min(avail, rate_cap(a, b))
            if avail > 0:
                if avail * (b - a) > work:
                    end = a + work / avail
                    self.cut(end)
                    b = end
                self.used[k] += avail
                segs.append((a, b, avail))
                work -= avail * (b - a)
            k += 1
        if work > 0:
            return None
        return segs


def construct_delayed_schedule(
    jdp: Sequence[tuple[Fraction, SeqParJob]],
    batch_opt: Sequence[tuple[Fraction, Fraction]],
    delta,
) -> JobTrace:
    """Schedule J'' on 1+delta processors, each parallel phase inside ``[t_j, t_j + f_j/delta]``.

    ``batch_opt[j] = (t_j, f_j)`` summarises a feasible one-processor batch
    schedule.  Jobs are placed by non-increasing arrival, each left-packed at
    the largest free capacity of its window.
    """
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if len(jdp) != len(batch_opt):
        raise ValueError("J'' and batch summary are not aligned")
    cap = 1 + delta
    specs, order = _job_specs(jdp)
    profile = CapacityProfile(cap)
    segments: dict = {}
    completion: dict = {}
    ranked = sorted(range(len(jdp)), key=lambda k: (-Fraction(jdp[k][0]), k))
    for k in ranked:
        arrival, job = jdp[k]
        t_j, f_j = (Fraction(x) for x in batch_opt[k])
        if f_j != t_j - arrival:
            raise ConstructionError(f"job {job.id!r}: flow {f_j} inconsistent with completion {t_j}")
        if arrival + job.seq_work > t_j:
            raise ConstructionError(f"job {job.id!r}: sequential phase ends after t_j")
        segs = profile.pack(job.par_work, t_j, t_j + f_j / delta)
        if segs is None:
            raise ConstructionError(f"job {job.id!r}: parallel work does not fit before its deadline")
        segments[job.id] = segs
        completion[job.id] = segs[-1][1] if segs else arrival + job.seq_work
    trace = trace_from_segments(cap, specs, order, segments, completion)
    assert trace.capacity_ok()
    bound = (1 + 1 / delta) * sum((Fraction(f) for _, f in batch_opt), Fraction(0))
    if trace.flow > bound:
        raise ConstructionError(f"flow {trace.flow} exceeds (1+1/delta) bound {bound}")
    return trace
