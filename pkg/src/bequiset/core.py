"""Exact-time foundation: instances, rate schedules, broadcast traces and flow time.

Every time, length and rate is a :class:`fractions.Fraction`.  Nothing in this
package rounds.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

Rational = Fraction

_RATIONAL_RE = re.compile(r"^\s*(-?\d+)(?:\s*/\s*(\d+))?\s*$")


class InstanceError(ValueError):
    """Raised when an instance or schedule is structurally invalid."""


class UnservedRequestError(RuntimeError):
    """A request has no completion time within the trace horizon."""


def parse_rational(text) -> Fraction:
    """Parse ``"p/q"`` or ``"n"``; ints and Fractions pass through."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int) and not isinstance(text, bool):
        return Fraction(text)
    if not isinstance(text, str):
        raise InstanceError(f"expected a rational string, got {text!r}")
    m = _RATIONAL_RE.match(text)
    if m is None:
        raise InstanceError(f"malformed rational {text!r}")
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        raise InstanceError(f"zero denominator in {text!r}")
    return Fraction(num, den)


def format_rational(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class Item:
    id: str
    length: Fraction


@dataclass(frozen=True)
class Request:
    id: str
    arrival: Fraction
    items: tuple[str, ...]


@dataclass(frozen=True)
class BroadcastInstance:
    items: tuple[Item, ...]
    requests: tuple[Request, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "requests", tuple(self.requests))

    @property
    def item_index(self) -> dict[str, int]:
        return {it.id: k for k, it in enumerate(self.items)}

    @property
    def lengths(self) -> dict[str, Fraction]:
        return {it.id: it.length for it in self.items}

    def request(self, rid: str) -> Request:
        for r in self.requests:
            if r.id == rid:
                return r
        raise KeyError(rid)


def make_instance(items: Iterable, requests: Iterable) -> BroadcastInstance:
    """Build an instance from loose tuples.

    ``items`` holds ``(id, length)`` pairs and ``requests`` holds
    ``(id, arrival, item_ids)`` triples; numbers may be ints, Fractions or
    rational strings.
    """
    its = tuple(Item(str(i), parse_rational(l)) for i, l in items)
    reqs = tuple(
        Request(str(r), parse_rational(a), tuple(str(x) for x in s)) for r, a, s in requests
    )
    return BroadcastInstance(its, reqs)


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self) -> bool:
        return self.ok


def validate_instance(inst: BroadcastInstance) -> ValidationReport:
    report = ValidationReport()
    seen: set[str] = set()
    for it in inst.items:
        if it.id in seen:
            report.problems.append(f"duplicate item id {it.id!r}")
        seen.add(it.id)
        if it.length <= 0:
            report.problems.append(f"non-positive length for item {it.id!r}")
    rseen: set[str] = set()
    for r in inst.requests:
        if r.id in rseen:
            report.problems.append(f"duplicate request id {r.id!r}")
        rseen.add(r.id)
        if r.arrival < 0:
            report.problems.append(f"negative arrival for request {r.id!r}")
        if not r.items:
            report.problems.append(f"empty set in request {r.id!r}")
        if len(set(r.items)) != len(r.items):
            report.problems.append(f"repeated item in request {r.id!r}")
        for x in r.items:
            if x not in seen:
                report.problems.append(f"dangling reference {x!r} in request {r.id!r}")
    return report


def require_valid(inst: BroadcastInstance) -> None:
    report = validate_instance(inst)
    if not report.ok:
        raise InstanceError("; ".join(report.problems))


# (request id, item id); request id None marks bandwidth not attributed to a request
PairKey = tuple[Optional[str], str]


@dataclass(frozen=True, eq=False)
class RateSchedule:
    """Piecewise-constant bandwidth allocation.

    ``rates[k]`` holds the constant rates on ``[breakpoints[k], breakpoints[k+1])``.
    """

    breakpoints: tuple[Fraction, ...]
    rates: tuple[Mapping[PairKey, Fraction], ...]
    speed: Fraction

    def __post_init__(self):
        bps = tuple(Fraction(b) for b in self.breakpoints)
        rates = tuple(dict(r) for r in self.rates)
        if not bps:
            bps = (Fraction(0),)
        if len(rates) != len(bps) - 1:
            raise InstanceError("need exactly one rate map per interval")
        for a, b in zip(bps, bps[1:]):
            if not a < b:
                raise InstanceError("breakpoints must be strictly increasing")
        for r in rates:
            for key, v in r.items():
                if v < 0:
                    raise InstanceError(f"negative rate for {key}")
        item_rates = []
        for r in rates:
            agg: dict[str, Fraction] = {}
            for (_, item), v in r.items():
                agg[item] = agg.get(item, Fraction(0)) + v
            item_rates.append(agg)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "speed", Fraction(self.speed))
        object.__setattr__(self, "item_rates", tuple(item_rates))

    @property
    def horizon(self) -> Fraction:
        return self.breakpoints[-1]

    def intervals(self):
        """Yield ``(start, end, pair_rates, item_rates)`` per interval."""
        bps = self.breakpoints
        for k, r in enumerate(self.rates):
            yield bps[k], bps[k + 1], r, self.item_rates[k]

    def interval_at(self, t: Fraction) -> int:
        """Index of the interval containing ``t`` (half-open on the right)."""
        k = bisect_right(self.breakpoints, t) - 1
        if k < 0 or k >= len(self.rates):
            raise ValueError(f"time {t} outside schedule horizon")
        return k

    def integrate(self, key, t0: Fraction, t1: Fraction) -> Fraction:
        """Integral over ``[t0, t1]`` of an item rate (str key) or pair rate (tuple key)."""
        total = Fraction(0)
        for a, b, pairs, items in self.intervals():
            lo, hi = max(a, t0), min(b, t1)
            if lo >= hi:
                continue
            v = items.get(key, 0) if isinstance(key, str) else pairs.get(key, 0)
            total += v * (hi - lo)
        return total

    def max_total_rate(self) -> Fraction:
        return max((sum(r.values(), Fraction(0)) for r in self.item_rates), default=Fraction(0))

    def merged(self) -> "RateSchedule":
        """Same schedule with adjacent identical intervals fused."""
        if not self.rates:
            return self
        bps = [self.breakpoints[0]]
        rates: list[dict] = []
        for a, b, pairs, _ in self.intervals():
            clean = {k: v for k, v in pairs.items() if v != 0}
            if rates and rates[-1] == clean:
                bps[-1] = b
            else:
                rates.append(clean)
                bps.append(b)
        return RateSchedule(tuple(bps), tuple(rates), self.speed)


@dataclass(frozen=True, eq=False)
class BroadcastTrace:
    schedule: RateSchedule
    broadcasts: Mapping[str, tuple[tuple[Fraction, Fraction], ...]]
    completions: Mapping[str, Fraction]
    flow: Fraction


def derive_broadcasts(
    schedule: RateSchedule, lengths: Mapping[str, Fraction]
) -> dict[str, list[tuple[Fraction, Fraction]]]:
    """Completed broadcast intervals of every item, recomputed from raw rates.

    A broadcast begins at the first instant after the previous completion where
    the item's rate is positive, and ends once its accumulated rate reaches the
    item length.  A trailing unfinished broadcast is dropped.
    """
    out: dict[str, list[tuple[Fraction, Fraction]]] = {i: [] for i in lengths}
    for item, length in lengths.items():
        cum = Fraction(0)
        begin: Optional[Fraction] = None
        for a, b, _, items in schedule.intervals():
            r = items.get(item, 0)
            if r == 0:
                continue
            t = a
            while t < b:
                if begin is None:
                    begin = t
                finish = t + (length - cum) / r
                if finish <= b:
                    out[item].append((begin, finish))
                    cum = Fraction(0)
                    begin = None
                    t = finish
                else:
                    cum += r * (b - t)
                    t = b
    return out


def _first_after(intervals: Sequence[tuple[Fraction, Fraction]], t: Fraction):
    for b, c in intervals:
        if b >= t:
            return b, c
    return None


def first_broadcast_after(trace: BroadcastTrace, item: str, t: Fraction):
    """First broadcast ``(begin, end)`` of ``item`` with ``begin >= t``, or None."""
    if item not in trace.broadcasts:
        raise KeyError(f"unknown item id {item!r}")
    return _first_after(trace.broadcasts[item], Fraction(t))


def completions_from_broadcasts(
    inst: BroadcastInstance, broadcasts: Mapping[str, Sequence[tuple[Fraction, Fraction]]]
) -> dict[str, Fraction]:
    """Per-request completion ``max_i C(I_i, a_j)``; raises on unserved requests."""
    out = {}
    for req in inst.requests:
        done = Fraction(req.arrival)
        for item in req.items:
            hit = _first_after(broadcasts.get(item, ()), req.arrival)
            if hit is None:
                raise UnservedRequestError(f"request {req.id!r} never receives item {item!r}")
            done = max(done, hit[1])
        out[req.id] = done
    return out


def build_trace(schedule: RateSchedule, inst: BroadcastInstance) -> BroadcastTrace:
    bcasts = derive_broadcasts(schedule, inst.lengths)
    comps = completions_from_broadcasts(inst, bcasts)
    flow = sum((comps[r.id] - r.arrival for r in inst.requests), Fraction(0))
    return BroadcastTrace(
        schedule,
        {i: tuple(v) for i, v in bcasts.items()},
        comps,
        flow,
    )


def flow_time(trace: BroadcastTrace, inst: BroadcastInstance) -> Fraction:
    total = Fraction(0)
    for req in inst.requests:
        if req.id not in trace.completions:
            raise UnservedRequestError(f"unserved request {req.id!r}")
        total += trace.completions[req.id] - req.arrival
    return total


def rational_gcd(values: Iterable[Fraction]) -> Fraction:
    """Largest rational ``g`` such that every value is an integer multiple of ``g``."""
    from math import gcd, lcm

    vals = [Fraction(v) for v in values if v != 0]
    if not vals:
        return Fraction(1)
    den = lcm(*(v.denominator for v in vals))
    num = gcd(*(int(v * den) for v in vals))
    return Fraction(num, den)
