"""JSON file formats.  Every rational is written as ``"p/q"`` or ``"n"``."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .core import (
    BroadcastInstance,
    BroadcastTrace,
    InstanceError,
    RateSchedule,
    build_trace,
    format_rational as fr,
    make_instance,
    parse_rational,
)
from .jobsched import Batch, JobTrace, SeqParJob


def _exact_keys(obj, allowed: set, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise InstanceError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise InstanceError(f"{where}: unknown fields {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise InstanceError(f"{where}: missing fields {sorted(missing)}")


def instance_to_json(inst: BroadcastInstance) -> dict:
    return {
        "items": [{"id": it.id, "length": fr(it.length)} for it in inst.items],
        "requests": [
            {"id": r.id, "arrival": fr(r.arrival), "items": list(r.items)} for r in inst.requests
        ],
    }


def instance_from_json(doc) -> BroadcastInstance:
    _exact_keys(doc, {"items", "requests"}, {"items", "requests"}, "instance")
    items = []
    for k, it in enumerate(doc["items"]):
        _exact_keys(it, {"id", "length"}, {"id", "length"}, f"items[{k}]")
        items.append((it["id"], parse_rational(it["length"])))
    reqs = []
    for k, r in enumerate(doc["requests"]):
        _exact_keys(r, {"id", "arrival", "items"}, {"id", "arrival", "items"}, f"requests[{k}]")
        if not isinstance(r["items"], list):
            raise InstanceError(f"requests[{k}].items must be a list")
        reqs.append((r["id"], parse_rational(r["arrival"]), r["items"]))
    return make_instance(items, reqs)


def _pair_key(key) -> str:
    rid, item = key
    return f"{'' if rid is None else rid}:{item}"


def _split_pair(text: str):
    rid, sep, item = text.partition(":")
    if not sep:
        raise InstanceError(f"rate key {text!r} is not 'request:item'")
    return (rid or None, item)


def trace_to_json(trace: BroadcastTrace) -> dict:
    """Unattributed bandwidth is keyed ``":item"``."""
    sched = trace.schedule
    return {
        "speed": fr(sched.speed),
        "breakpoints": [fr(b) for b in sched.breakpoints],
        "rates": [
            {_pair_key(k): fr(v) for k, v in sorted(r.items(), key=lambda kv: _pair_key(kv[0]))}
            for r in sched.rates
        ],
        "broadcasts": {i: [[fr(b), fr(c)] for b, c in v] for i, v in trace.broadcasts.items()},
        "completions": {r: fr(c) for r, c in trace.completions.items()},
        "flow": fr(trace.flow),
    }


def trace_from_json(doc, inst: BroadcastInstance) -> BroadcastTrace:
    """Rebuild a trace from its rates and check the stored summaries against it."""
    fields = {"speed", "breakpoints", "rates", "broadcasts", "completions", "flow"}
    _exact_keys(doc, fields, {"breakpoints", "rates"}, "trace")
    sched = RateSchedule(
        tuple(parse_rational(b) for b in doc["breakpoints"]),
        tuple({_split_pair(k): parse_rational(v) for k, v in r.items()} for r in doc["rates"]),
        parse_rational(doc.get("speed", "1")),
    )
    trace = build_trace(sched, inst)
    if "flow" in doc and parse_rational(doc["flow"]) != trace.flow:
        raise InstanceError("stored flow disagrees with the rates")
    if "completions" in doc:
        stored = {r: parse_rational(c) for r, c in doc["completions"].items()}
        if stored != dict(trace.completions):
            raise InstanceError("stored completions disagree with the rates")
    return trace


def batches_to_json(batches: Sequence[Batch], processors) -> dict:
    return {
        "processors": fr(processors),
        "batches": [
            {
                "id": b.id,
                "arrival": fr(b.arrival),
                "jobs": [
                    {"id": j.id, "seq": fr(j.seq_work), "par": fr(j.par_work)}
                    | ({"sticky": True} if j.sticky_alive else {})
                    for j in b.jobs
                ],
            }
            for b in batches
        ],
    }


def batches_from_json(doc) -> tuple[list[Batch], Fraction]:
    _exact_keys(doc, {"processors", "batches"}, {"processors", "batches"}, "batch instance")
    out = []
    for k, b in enumerate(doc["batches"]):
        _exact_keys(b, {"id", "arrival", "jobs"}, {"id", "arrival", "jobs"}, f"batches[{k}]")
        jobs = []
        for m, j in enumerate(b["jobs"]):
            _exact_keys(j, {"id", "seq", "par", "sticky"}, {"id", "seq", "par"}, f"batches[{k}].jobs[{m}]")
            jobs.append(
                SeqParJob(j["id"], parse_rational(j["seq"]), parse_rational(j["par"]), bool(j.get("sticky", False)))
            )
        out.append(Batch(b["id"], parse_rational(b["arrival"]), tuple(jobs)))
    return out, parse_rational(doc["processors"])


def _job_key(key) -> str:
    return ":".join(key) if isinstance(key, tuple) else str(key)


def job_trace_to_json(trace: JobTrace) -> dict:
    return {
        "processors": fr(trace.processors),
        "breakpoints": [fr(b) for b in trace.breakpoints],
        "rates": [{_job_key(k): fr(v) for k, v in a.items()} for a in trace.alloc],
        "job_completions": {_job_key(k): fr(trace.job_completion[k]) for k in trace.order},
        "completions": {str(b): fr(c) for b, c in trace.batch_completion.items()},
        "flow": fr(trace.flow),
    }


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_instance(path) -> BroadcastInstance:
    return instance_from_json(read_json(path))
