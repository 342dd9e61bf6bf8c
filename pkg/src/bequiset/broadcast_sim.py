"""Event-driven simulators for B-EquiSet, B-EquiSet-Edf and dependency-blind baselines.

Rates only change at request arrivals and broadcast completions (plus slice
expiries for the round-robin baseline), so the simulation jumps from event to
event and integrates constant rates in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

from .core import (
    BroadcastInstance,
    BroadcastTrace,
    PairKey,
    RateSchedule,
    build_trace,
    require_valid,
)

InnerPolicy = Callable[[Sequence[str], Fraction], Mapping[str, Fraction]]


class PolicyError(RuntimeError):
    """An inner split policy broke its contract."""


class SimulationError(RuntimeError):
    pass


def equi_within(alive_items: Sequence[str], share: Fraction) -> dict[str, Fraction]:
    """Split a request's share evenly over its alive items."""
    part = share / len(alive_items)
    return {i: part for i in alive_items}


def min_idx(alive_items: Sequence[str], share: Fraction) -> dict[str, Fraction]:
    """Give the whole share to the lowest-indexed alive item."""
    return {alive_items[0]: share}


POLICIES: dict[str, InnerPolicy] = {"equi": equi_within, "minidx": min_idx}


def resolve_policy(policy) -> InnerPolicy:
    if policy is None:
        return equi_within
    if isinstance(policy, str):
        try:
            return POLICIES[policy]
        except KeyError:
            raise ValueError(f"unknown inner policy {policy!r}") from None
    return policy


@dataclass
class SimState:
    """Mutable state of a broadcast simulation at ``time``.

    ``need[r][i]`` is the ordinal of the broadcast of item ``i`` that will serve
    request ``r``; an item is alive for ``r`` while that entry exists.
    """

    time: Fraction
    lengths: dict[str, Fraction]
    order: dict[str, int]
    arrivals: list = field(default_factory=list)
    cum: dict[str, Fraction] = field(default_factory=dict)
    begin: dict[str, Optional[Fraction]] = field(default_factory=dict)
    done: dict[str, int] = field(default_factory=dict)
    need: dict[str, dict[str, int]] = field(default_factory=dict)

    @classmethod
    def initial(cls, inst: BroadcastInstance) -> "SimState":
        lengths = inst.lengths
        arrivals = sorted(
            enumerate(inst.requests), key=lambda p: (p[1].arrival, p[0])
        )
        return cls(
            time=Fraction(0),
            lengths=dict(lengths),
            order=inst.item_index,
            arrivals=[r for _, r in arrivals],
            cum={i: Fraction(0) for i in lengths},
            begin={i: None for i in lengths},
            done={i: 0 for i in lengths},
        )

    def alive_items(self, rid: str) -> list[str]:
        return sorted(self.need[rid], key=self.order.__getitem__)

    def admit_arrivals(self) -> None:
        while self.arrivals and self.arrivals[0].arrival <= self.time:
            req = self.arrivals.pop(0)
            # a broadcast already under way began before the arrival: wait for the next one
            self.need[req.id] = {
                i: self.done[i] + (2 if self.cum[i] > 0 else 1) for i in req.items
            }


def next_event(state: SimState, rates: Mapping[str, Fraction]) -> Optional[Fraction]:
    """Earliest arrival or broadcast completion under constant ``rates``; None if none."""
    best: Optional[Fraction] = None
    if state.arrivals:
        best = state.arrivals[0].arrival
    for item, r in rates.items():
        if r > 0:
            t = state.time + (state.lengths[item] - state.cum[item]) / r
            if best is None or t < best:
                best = t
    return best


# allocate(state) -> (pair rates, optional extra event time)
Allocator = Callable[[SimState], tuple[dict[PairKey, Fraction], Optional[Fraction]]]


def _run(inst: BroadcastInstance, speed: Fraction, allocate: Allocator) -> BroadcastTrace:
    state = SimState.initial(inst)
    breakpoints = [Fraction(0)]
    intervals: list[dict[PairKey, Fraction]] = []
    bcasts: dict[str, list[tuple[Fraction, Fraction]]] = {i: [] for i in state.lengths}
    completions: dict[str, Fraction] = {}

    while True:
        state.admit_arrivals()
        if not state.need and not state.arrivals:
            break
        # nothing alive: idle until the next arrival
        pairs, extra = allocate(state) if state.need else ({}, None)
        item_rates: dict[str, Fraction] = {}
        for (_, item), v in pairs.items():
            if v > 0:
                item_rates[item] = item_rates.get(item, Fraction(0)) + v
        total = sum(item_rates.values(), Fraction(0))
        if total > speed:
            raise SimulationError(f"allocation {total} exceeds speed {speed} at {state.time}")
        for item, r in item_rates.items():
            if state.begin[item] is None:
                state.begin[item] = state.time
        t_next = next_event(state, item_rates)
        if extra is not None and (t_next is None or extra < t_next):
            t_next = extra
        if t_next is None:
            raise SimulationError(f"alive requests but no bandwidth at time {state.time}")
        dt = t_next - state.time
        if breakpoints[-1] != state.time:
            raise SimulationError("internal clock drift")
        breakpoints.append(t_next)
        intervals.append({k: v for k, v in pairs.items() if v > 0})
        for item, r in item_rates.items():
            state.cum[item] += r * dt
        state.time = t_next
        for item in sorted(item_rates, key=state.order.__getitem__):
            if state.cum[item] == state.lengths[item]:
                bcasts[item].append((state.begin[item], t_next))
                state.done[item] += 1
                state.cum[item] = Fraction(0)
                state.begin[item] = None
                for rid in list(state.need):
                    alive = state.need[rid]
                    if alive.get(item) == state.done[item]:
                        del alive[item]
                        if not alive:
                            del state.need[rid]
                            completions[rid] = t_next

    schedule = RateSchedule(tuple(breakpoints), tuple(intervals), speed)
    flow = sum((completions[r.id] - r.arrival for r in inst.requests), Fraction(0))
    return BroadcastTrace(
        schedule, {i: tuple(v) for i, v in bcasts.items()}, completions, flow
    )


def _check_split(split: Mapping[str, Fraction], alive: Sequence[str], share: Fraction):
    if any(v < 0 for v in split.values()):
        raise PolicyError("inner policy returned a negative rate")
    if any(i not in alive for i in split):
        raise PolicyError("inner policy allotted bandwidth to a non-alive item")
    if sum(split.values(), Fraction(0)) != share:
        raise PolicyError("inner policy rates do not sum to the request share")


def simulate_b_equiset(
    inst: BroadcastInstance, speed, policy: InnerPolicy | str | None = None
) -> BroadcastTrace:
    """Run B-EquiSet: each alive request gets ``speed/|R(t)|``, split by ``policy``.

    Bandwidth a request gives to an item always feeds that item's current
    broadcast, even when the request arrived too late to download it.
    """
    require_valid(inst)
    speed = Fraction(speed)
    if speed <= 0:
        raise ValueError("speed must be positive")
    split_fn = resolve_policy(policy)

    def allocate(state: SimState):
        share = speed / len(state.need)
        pairs: dict[PairKey, Fraction] = {}
        for rid in state.need:
            alive = state.alive_items(rid)
            split = {i: Fraction(v) for i, v in split_fn(tuple(alive), share).items()}
            _check_split(split, alive, share)
            for item, v in split.items():
                pairs[(rid, item)] = v
        return pairs, None

    return _run(inst, speed, allocate)


def simulate_ignore_deps(
    inst: BroadcastInstance, speed, baseline: str = "equi-per-item", quantum=1
) -> BroadcastTrace:
    """Schedule items as if every (request, item) demand were independent.

    ``equi-per-item`` splits bandwidth evenly over items with an outstanding
    demand; ``round-robin`` cycles through them at full rate, one slice of
    ``quantum`` time units (or one completed broadcast) at a time.  Request
    completions still follow the set semantics.
    """
    require_valid(inst)
    speed = Fraction(speed)
    quantum = Fraction(quantum)
    if speed <= 0 or quantum <= 0:
        raise ValueError("speed and quantum must be positive")

    def alive_items(state: SimState) -> list[str]:
        found = {i for alive in state.need.values() for i in alive}
        return sorted(found, key=state.order.__getitem__)

    if baseline in ("equi-per-item", "equi"):

        def allocate(state: SimState):
            items = alive_items(state)
            part = speed / len(items)
            return {(None, i): part for i in items}, None

    elif baseline in ("round-robin", "rr"):
        rr = {"item": None, "until": None, "done": None}

        def allocate(state: SimState):
            items = alive_items(state)
            cur = rr["item"]
            fresh = (
                cur is None
                or cur not in items
                or state.time >= rr["until"]
                or state.done[cur] != rr["done"]
            )
            if fresh:
                if cur is None:
                    nxt = items[0]
                else:
                    k = state.order[cur]
                    later = [i for i in items if state.order[i] > k]
                    nxt = later[0] if later else items[0]
                rr.update(item=nxt, until=state.time + quantum, done=state.done[nxt])
            return {(None, rr["item"]): speed}, rr["until"]

    else:
        raise ValueError(f"unknown baseline {baseline!r}")

    return _run(inst, speed, allocate)


@dataclass(frozen=True)
class VirtualBroadcast:
    item: str
    release: Fraction
    deadline: Fraction
    internal_begin: Fraction


@dataclass(eq=False)
class EdfResult:
    trace: BroadcastTrace
    preemptions: int
    internal: BroadcastTrace
    jobs: tuple[VirtualBroadcast, ...]
    finish: dict[int, Fraction]
    misses: list[int]
    speed: Fraction

    @property
    def n_broadcasts(self) -> int:
        return sum(len(v) for v in self.trace.broadcasts.values())


def simulate_b_equiset_edf(
    inst: BroadcastInstance,
    eps,
    delta,
    policy: InnerPolicy | str | None = None,
    idle_fill: bool = False,
) -> EdfResult:
    """B-EquiSet-Edf: replay B-EquiSet at speed s/(1+delta) and EDF-schedule its broadcasts.

    With ``s = (4+eps)(1+delta)^2`` every completed internal broadcast of an
    item (begun at ``t'``, done at ``t``) releases a virtual broadcast of the
    same length with deadline ``t + (t-t')/delta``.  Virtual broadcasts run one
    at a time at rate ``s``, earliest deadline first, with preemption.

    With ``idle_fill`` the channel, when no virtual broadcast is pending, works
    ahead on the lowest-indexed item whose internal broadcast is in progress;
    that work is credited to the virtual broadcast it will release.
    """
    require_valid(inst)
    eps, delta = Fraction(eps), Fraction(delta)
    if eps <= 0 or delta <= 0:
        raise ValueError("eps and delta must be positive")
    s = (4 + eps) * (1 + delta) ** 2
    internal = simulate_b_equiset(inst, s / (1 + delta), policy)
    lengths = inst.lengths
    order = inst.item_index

    raw = []
    for item, ivs in internal.broadcasts.items():
        for b, c in ivs:
            raw.append(VirtualBroadcast(item, c, c + (c - b) / delta, b))
    jobs = tuple(sorted(raw, key=lambda j: (j.release, order[j.item])))
    remaining = [lengths[j.item] for j in jobs]
    finish: dict[int, Fraction] = {}

    t = Fraction(0)
    breakpoints = [t]
    intervals: list[dict[PairKey, Fraction]] = []
    preemptions = 0
    running: Optional[int] = None
    nxt_release = 0

    def fill_target(now: Fraction) -> Optional[int]:
        cands = [
            k
            for k, j in enumerate(jobs)
            if j.internal_begin <= now < j.release and remaining[k] > 0
        ]
        if not cands:
            return None
        return min(cands, key=lambda k: (order[jobs[k].item], jobs[k].release))

    while True:
        while nxt_release < len(jobs) and jobs[nxt_release].release <= t:
            if remaining[nxt_release] == 0:
                finish[nxt_release] = jobs[nxt_release].release
            nxt_release += 1
        ready = [k for k in range(nxt_release) if remaining[k] > 0]
        if not ready and nxt_release == len(jobs):
            break
        events = []
        if nxt_release < len(jobs):
            events.append(jobs[nxt_release].release)
        chosen: Optional[int] = None
        if ready:
            chosen = min(ready, key=lambda k: (jobs[k].deadline, jobs[k].release, order[jobs[k].item]))
            if running is not None and running != chosen and remaining[running] > 0:
                preemptions += 1
            running = chosen
        elif idle_fill:
            chosen = fill_target(t)
            # an internal broadcast starting later may become a better fill target
            later = [j.internal_begin for j in jobs if j.internal_begin > t]
            if later:
                events.append(min(later))
        if chosen is not None:
            events.append(t + remaining[chosen] / s)
        t_next = min(events)
        if chosen is not None:
            item = jobs[chosen].item
            remaining[chosen] -= s * (t_next - t)
            if remaining[chosen] == 0 and chosen < nxt_release:
                finish[chosen] = t_next
            rates = {(None, item): s}
        else:
            rates = {}
        if intervals and intervals[-1] == rates:
            breakpoints[-1] = t_next
        else:
            breakpoints.append(t_next)
            intervals.append(rates)
        t = t_next

    misses = [k for k, j in enumerate(jobs) if finish.get(k, j.deadline + 1) > j.deadline]
    schedule = RateSchedule(tuple(breakpoints), tuple(intervals), s)
    trace = build_trace(schedule, inst)
    return EdfResult(trace, preemptions, internal, jobs, finish, misses, s)
