"""Instance generators.

All randomness comes from :class:`random.Random` (Mersenne Twister MT19937)
seeded with the caller's integer, so a seed pins the instance down on any
CPython.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .broadcast_sim import simulate_ignore_deps
from .core import BroadcastInstance, BroadcastTrace, first_broadcast_after, make_instance
from .jobsched import Batch, SeqParJob

GRID = Fraction(1, 4)


def gen_figure1() -> BroadcastInstance:
    return make_instance(
        [("A", "3/2"), ("B", "3/2"), ("C", "3/2")],
        [("S1", 0, "ABC"), ("S2", 1, "A"), ("S3", 2, "B"), ("S4", 3, "C")],
    )


def _root(n: int) -> int:
    r = math.isqrt(n)
    if n < 4 or r * r != n:
        raise ValueError(f"n must be a perfect square >= 4, got {n}")
    return r


def _unit_items(n: int) -> list[tuple[str, int]]:
    return [(f"I{k}", 1) for k in range(1, n + 1)]


def independent_demands(n: int) -> BroadcastInstance:
    """n unit items, each wanted by its own singleton request at time 0."""
    return make_instance(_unit_items(n), [(f"D{k}", 0, [f"I{k}"]) for k in range(1, n + 1)])


@dataclass(frozen=True)
class AdversaryReport:
    instance: BroadcastInstance
    probe_time: Fraction
    probe: dict[str, Fraction]
    big_set: tuple[str, ...]


def gen_fact1_adversarial(n: int, s=1, baseline: str = "equi-per-item") -> AdversaryReport:
    """Adaptive instance against a dependency-ignoring baseline.

    The baseline is run on independent unit demands; at ``(n - sqrt n)/s`` the
    ``n - sqrt n`` items with the most accumulated service form one big request
    and each remaining item becomes a singleton.  Ties go to the lower index.
    """
    r = _root(n)
    s = Fraction(s)
    probe_time = Fraction(n - r) / s
    runs = [simulate_ignore_deps(independent_demands(n), s, baseline) for _ in range(2)]
    vectors = [
        {f"I{k}": tr.schedule.integrate(f"I{k}", Fraction(0), probe_time) for k in range(1, n + 1)}
        for tr in runs
    ]
    if vectors[0] != vectors[1]:
        raise RuntimeError("baseline is not deterministic")
    probe = vectors[0]
    ranked = sorted(range(1, n + 1), key=lambda k: (-probe[f"I{k}"], k))
    big = sorted(ranked[: n - r])
    rest = sorted(ranked[n - r :])
    requests = [("S0", 0, [f"I{k}" for k in big])]
    requests += [(f"S{m}", 0, [f"I{k}"]) for m, k in enumerate(rest, start=1)]
    return AdversaryReport(
        make_instance(_unit_items(n), requests),
        probe_time,
        probe,
        tuple(f"I{k}" for k in big),
    )


def gen_fact1_randomized(n: int, seed: int) -> BroadcastInstance:
    """A uniform random (n - sqrt n)-subset request plus singletons on the complement."""
    r = _root(n)
    rng = random.Random(seed)
    big = sorted(rng.sample(range(1, n + 1), n - r))
    rest = sorted(set(range(1, n + 1)) - set(big))
    requests = [("S0", 0, [f"I{k}" for k in big])]
    requests += [(f"S{m}", 0, [f"I{k}"]) for m, k in enumerate(rest, start=1)]
    return make_instance(_unit_items(n), requests)


def unsatisfied_singletons(inst: BroadcastInstance, trace: BroadcastTrace, t) -> int:
    """Singleton requests not yet served at time ``t`` under ``trace``."""
    t = Fraction(t)
    count = 0
    for req in inst.requests:
        if len(req.items) != 1:
            continue
        hit = first_broadcast_after(trace, req.items[0], req.arrival)
        if hit is None or hit[1] > t:
            count += 1
    return count


def zipf_sample(rng: random.Random, n: int, k: int, theta) -> list[int]:
    """``k`` distinct indices from ``range(n)``, index ``i`` weighted ``1/(i+1)**theta``.

    Draws one index at a time proportionally to the remaining weights.
    """
    if not 0 <= k <= n:
        raise ValueError("sample size out of range")
    theta = float(theta)
    pool = list(range(n))
    weights = [1.0 / (i + 1) ** theta for i in pool]
    out = []
    for _ in range(k):
        (pick,) = rng.choices(range(len(pool)), weights=weights)
        out.append(pool.pop(pick))
        weights.pop(pick)
    return out


def _grid_uniform(rng: random.Random, lo: Fraction, hi: Fraction, step: Fraction) -> Fraction:
    first = math.ceil(lo / step)
    last = math.floor(hi / step)
    if first > last:
        raise ValueError(f"no multiple of {step} in [{lo}, {hi}]")
    return rng.randint(first, last) * step


def gen_random_correlated(
    n_items: int,
    n_requests: int,
    zipf_theta=0,
    max_set: int = 3,
    length_range: Sequence = (Fraction(1, 4), Fraction(2)),
    horizon=4,
    seed: int = 0,
    grid=GRID,
) -> BroadcastInstance:
    """Random instance with Zipf item popularity; all numbers lie on ``grid``.

    Requests are named R1, R2, ... in order of arrival.
    """
    if n_items < 1 or n_requests < 0 or max_set < 1:
        raise ValueError("n_items and max_set must be positive")
    if max_set > n_items:
        raise ValueError("max_set cannot exceed n_items")
    if Fraction(zipf_theta) < 0 or Fraction(horizon) < 0:
        raise ValueError("zipf_theta and horizon must be non-negative")
    grid = Fraction(grid)
    lo, hi = (Fraction(x) for x in length_range)
    if lo <= 0 or hi < lo:
        raise ValueError("invalid length range")
    rng = random.Random(seed)
    items = [(f"I{k}", _grid_uniform(rng, lo, hi, grid)) for k in range(1, n_items + 1)]
    raw = []
    for _ in range(n_requests):
        size = rng.randint(1, max_set)
        members = sorted(zipf_sample(rng, n_items, size, zipf_theta))
        arrival = _grid_uniform(rng, Fraction(0), Fraction(horizon), grid)
        raw.append((arrival, [f"I{m + 1}" for m in members]))
    raw.sort(key=lambda p: p[0])
    requests = [(f"R{k}", a, s) for k, (a, s) in enumerate(raw, start=1)]
    return make_instance(items, requests)


def gen_random_batches(
    n_batches: int,
    max_jobs: int = 4,
    seed: int = 0,
    max_work=2,
    horizon=4,
    grid=GRID,
) -> list[Batch]:
    """Random Seq-Par batches with works and arrivals on ``grid``."""
    rng = random.Random(seed)
    grid = Fraction(grid)
    zero = Fraction(0)
    out = []
    for b in range(1, n_batches + 1):
        jobs = []
        for j in range(1, rng.randint(1, max_jobs) + 1):
            seq = _grid_uniform(rng, zero, Fraction(max_work), grid)
            par = _grid_uniform(rng, zero, Fraction(max_work), grid)
            jobs.append(SeqParJob(f"J{j}", seq, par))
        out.append(Batch(f"B{b}", _grid_uniform(rng, zero, Fraction(horizon), grid), tuple(jobs)))
    return out
