"""Reference schedules: the universal verifier, a branch-and-bound optimum over
slot-aligned one-item-at-a-time schedules, a greedy upper bound, and exact
one-processor optima for tiny batch instances.

The branch-and-bound value is the optimum of a discrete class (full-rate,
slot-aligned broadcasts), so it is an upper bound on the continuous optimum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .core import (
    BroadcastInstance,
    BroadcastTrace,
    RateSchedule,
    build_trace,
    rational_gcd,
    require_valid,
)
from .jobsched import Batch, JobTrace, batch_specs, simulate_jobs

DEFAULT_BUDGET = 2_000_000
MAX_DEFAULT_SLOTS = 24


class ScheduleViolation(RuntimeError):
    pass


class OracleScaleError(RuntimeError):
    """The search exceeded its node budget or slot cap."""


class OracleInfeasible(RuntimeError):
    """No schedule within the horizon serves every request."""


def verify_schedule(rates: RateSchedule, inst: BroadcastInstance, speed=None) -> BroadcastTrace:
    """Recompute broadcasts, completions and flow from raw rates.

    Raises :class:`ScheduleViolation` when the total rate exceeds ``speed`` on
    some interval or a request is never served within the horizon.
    """
    require_valid(inst)
    speed = Fraction(rates.speed if speed is None else speed)
    for a, b, _, items in rates.intervals():
        total = sum(items.values(), Fraction(0))
        if total > speed:
            raise ScheduleViolation(f"capacity exceeded on [{a}, {b}): {total} > {speed}")
        unknown = set(items) - set(inst.lengths)
        if unknown:
            raise ScheduleViolation(f"rates for unknown items {sorted(unknown)}")
    try:
        return build_trace(rates, inst)
    except RuntimeError as exc:
        raise ScheduleViolation(str(exc)) from exc


@dataclass(frozen=True)
class DiscreteSchedule:
    """One item (or None for idle) per slot, broadcast at full rate 1."""

    slot: Fraction
    slots: tuple[Optional[str], ...]

    @property
    def horizon(self) -> int:
        return len(self.slots)

    def to_rate_schedule(self) -> RateSchedule:
        bps = [Fraction(0)]
        rates: list[dict] = []
        for k, item in enumerate(self.slots):
            r = {} if item is None else {(None, item): Fraction(1)}
            end = (k + 1) * self.slot
            if rates and rates[-1] == r:
                bps[-1] = end
            else:
                rates.append(r)
                bps.append(end)
        return RateSchedule(tuple(bps), tuple(rates), Fraction(1))


class _SlotModel:
    """Instance rescaled to integer slots."""

    def __init__(self, inst: BroadcastInstance, slot: Fraction):
        require_valid(inst)
        self.inst = inst
        self.slot = slot
        self.item_ids = [it.id for it in inst.items]
        idx = inst.item_index
        self.L = []
        for it in inst.items:
            q = it.length / slot
            if q.denominator != 1:
                raise ValueError(f"length of {it.id!r} is not a multiple of slot {slot}")
            self.L.append(int(q))
        self.arr = []
        self.sets = []
        for r in inst.requests:
            q = r.arrival / slot
            if q.denominator != 1:
                raise ValueError(f"arrival of {r.id!r} is not on the slot grid")
            self.arr.append(int(q))
            self.sets.append(tuple(sorted(idx[i] for i in r.items)))
        self.by_arrival: dict[int, list[int]] = {}
        for j, a in enumerate(self.arr):
            self.by_arrival.setdefault(a, []).append(j)
        self.last_arrival = max(self.arr, default=-1)
        self.future_cost = {}
        acc = 0
        for t in range(self.last_arrival + 1, -1, -1):
            self.future_cost[t] = acc
            for j in self.by_arrival.get(t, ()):
                acc += sum(self.L[i] for i in self.sets[j])
        # future_cost[t]: work of requests arriving strictly after t

    def admit(self, t: int, prog: tuple, pend: frozenset) -> frozenset:
        new = self.by_arrival.get(t)
        if not new:
            return pend
        pend = set(pend)
        for j in new:
            for i in self.sets[j]:
                pend.add((j, i, 1 if prog[i] > 0 else 0))
        return frozenset(pend)

    def step(self, prog: tuple, pend: frozenset, choice: Optional[int]):
        if choice is None:
            return prog, pend
        p = list(prog)
        p[choice] += 1
        if p[choice] < self.L[choice]:
            return tuple(p), pend
        p[choice] = 0
        out = set()
        for j, i, k in pend:
            if i != choice:
                out.add((j, i, k))
            elif k == 1:
                out.add((j, i, 0))
        return tuple(p), frozenset(out)

    def lower_bound(self, t: int, prog: tuple, pend: frozenset) -> int:
        lb = 0
        for _, i, k in pend:
            lb += self.L[i] - prog[i] + (self.L[i] if k else 0)
        return lb + self.future_cost.get(t, 0)

    def evaluate(self, seq: Sequence[Optional[int]]) -> Optional[int]:
        """Flow in slots of a full slot sequence, or None if someone is unserved."""
        prog = tuple(0 for _ in self.L)
        pend: frozenset = frozenset()
        cost = 0
        for t, choice in enumerate(seq):
            pend = self.admit(t, prog, pend)
            cost += len({j for j, _, _ in pend})
            prog, pend = self.step(prog, pend, choice)
        pend = self.admit(len(seq), prog, pend)
        if pend or self.last_arrival > len(seq):
            return None
        return cost


def default_slot(inst: BroadcastInstance) -> Fraction:
    return rational_gcd(
        [it.length for it in inst.items] + [r.arrival for r in inst.requests]
    )


def default_horizon(inst: BroadcastInstance, slot: Fraction) -> int:
    last = max((r.arrival for r in inst.requests), default=Fraction(0))
    total = sum((it.length for it in inst.items), Fraction(0))
    needed = int((last + total) / slot)
    greedy_slots = greedy_upper_bound(inst)[1].horizon
    return max(needed, greedy_slots)


def _to_schedule(model: _SlotModel, seq) -> DiscreteSchedule:
    return DiscreteSchedule(
        model.slot, tuple(None if c is None else model.item_ids[c] for c in seq)
    )


def brute_force_bopt(
    inst: BroadcastInstance,
    slot=None,
    horizon: Optional[int] = None,
    budget: int = DEFAULT_BUDGET,
) -> tuple[Fraction, DiscreteSchedule]:
    """Minimum flow over slot-aligned unit-speed schedules of ``horizon`` slots.

    Depth-first branch and bound: children are ordered by how many alive
    requests the item's next completion serves, pruned by the channel-work
    lower bound and by a transposition table keyed on the full search state.
    """
    if slot is None:
        slot = default_slot(inst)
        model = _SlotModel(inst, Fraction(slot))
        if horizon is None:
            horizon = default_horizon(inst, model.slot)
        if horizon > MAX_DEFAULT_SLOTS:
            raise OracleScaleError(f"horizon of {horizon} slots exceeds cap {MAX_DEFAULT_SLOTS}")
    else:
        model = _SlotModel(inst, Fraction(slot))
        if horizon is None:
            horizon = default_horizon(inst, model.slot)
    n = len(model.L)
    if not inst.requests:
        return Fraction(0), DiscreteSchedule(model.slot, ())

    best = [math.inf, None]
    seen: dict = {}
    nodes = [0]
    path: list[Optional[int]] = []

    def dfs(t: int, prog: tuple, pend: frozenset, g: int) -> None:
        nodes[0] += 1
        if nodes[0] > budget:
            raise OracleScaleError(f"node budget {budget} exceeded")
        pend = model.admit(t, prog, pend)
        if not pend and t > model.last_arrival:
            if g < best[0]:
                best[0] = g
                best[1] = list(path)
            return
        if t >= horizon:
            return
        key = (t, prog, pend)
        if seen.get(key, math.inf) <= g:
            return
        seen[key] = g
        if g + model.lower_bound(t, prog, pend) >= best[0]:
            return
        alive = len({j for j, _, _ in pend})
        ready = [0] * n
        waiting = [False] * n
        for j, i, k in pend:
            waiting[i] = True
            if k == 0:
                ready[i] += 1
        choices = [i for i in range(n) if prog[i] > 0 or waiting[i]]
        # a broadcast nobody is waiting for can be idled away without loss
        choices.sort(key=lambda i: (-ready[i], -prog[i], i))
        for c in choices + [None]:
            nprog, npend = model.step(prog, pend, c)
            path.append(c)
            dfs(t + 1, nprog, npend, g + alive)
            path.pop()

    dfs(0, tuple(0 for _ in range(n)), frozenset(), 0)
    if best[1] is None:
        raise OracleInfeasible(f"no schedule within {horizon} slots serves every request")
    seq = best[1]
    return Fraction(best[0]) * model.slot, _to_schedule(model, seq)


def exhaustive_bopt(inst: BroadcastInstance, slot, horizon: int) -> tuple[Fraction, DiscreteSchedule]:
    """Enumerate every slot sequence without any pruning (micro instances only)."""
    model = _SlotModel(inst, Fraction(slot))
    if not inst.requests:
        return Fraction(0), DiscreteSchedule(model.slot, ())
    choices = list(range(len(model.L))) + [None]
    best, arg = None, None
    for seq in itertools.product(choices, repeat=horizon):
        v = model.evaluate(seq)
        if v is not None and (best is None or v < best):
            best, arg = v, seq
    if best is None:
        raise OracleInfeasible(f"no schedule within {horizon} slots serves every request")
    return Fraction(best) * model.slot, _to_schedule(model, arg)


def greedy_upper_bound(inst: BroadcastInstance) -> tuple[Fraction, DiscreteSchedule]:
    """Non-preemptive greedy: serve the alive request with the least remaining length.

    Within that request the item wanted by the most alive requests goes first.
    Every broadcast runs to completion at rate 1.
    """
    require_valid(inst)
    slot = default_slot(inst)
    lengths = inst.lengths
    order = inst.item_index
    reqs = sorted(enumerate(inst.requests), key=lambda p: (p[1].arrival, p[0]))
    pending: dict[int, set[str]] = {}
    arrival = {k: r.arrival for k, r in enumerate(inst.requests)}
    t = Fraction(0)
    seq: list[Optional[str]] = []
    flow = Fraction(0)
    nxt = 0
    while True:
        while nxt < len(reqs) and reqs[nxt][1].arrival <= t:
            k, r = reqs[nxt]
            pending[k] = set(r.items)
            nxt += 1
        if not pending:
            if nxt == len(reqs):
                break
            gap = reqs[nxt][1].arrival - t
            seq.extend([None] * int(gap / slot))
            t = reqs[nxt][1].arrival
            continue
        target = min(
            pending,
            key=lambda k: (sum(lengths[i] for i in pending[k]), len(pending[k]), arrival[k], k),
        )
        item = min(
            pending[target],
            key=lambda i: (-sum(1 for s in pending.values() if i in s), order[i]),
        )
        served = [k for k, s in pending.items() if item in s]
        t += lengths[item]
        seq.extend([item] * int(lengths[item] / slot))
        for k in served:
            pending[k].discard(item)
            if not pending[k]:
                del pending[k]
                flow += t - arrival[k]
    return flow, DiscreteSchedule(slot, tuple(seq))


def discrete_trace(inst: BroadcastInstance, sched: DiscreteSchedule) -> BroadcastTrace:
    return verify_schedule(sched.to_rate_schedule(), inst, 1)


def priority_batch_schedule(batches: Sequence[Batch], priority: Sequence[str], p=1) -> JobTrace:
    """All processors go to the first available parallel work in ``priority`` order."""
    p = Fraction(p)
    specs, order = batch_specs(batches)
    rank = {b: k for k, b in enumerate(priority)}

    def allocate(t, grouped, remaining):
        for bid in sorted(grouped, key=rank.__getitem__):
            for key in grouped[bid]:
                if specs[key].par_start <= t and remaining[key] > 0:
                    return {key: p}
        return {}

    return simulate_jobs(specs, order, p, allocate)


def batch_micro_optimum(batches: Sequence[Batch], p=1) -> tuple[Fraction, JobTrace]:
    """Best strict-priority schedule over all batch orders.

    For at most two batches this is the exact optimum: in any schedule the
    batch that finishes first can be given absolute priority without delaying
    it, and the other batch then ends at the work-conserving makespan or its
    own sequential bound, both of which any schedule must also respect.
    """
    best = None
    for perm in itertools.permutations([b.id for b in batches]):
        tr = priority_batch_schedule(batches, perm, p)
        if best is None or tr.flow < best[0]:
            best = (tr.flow, tr)
    return best
