"""Command-line front end.

Exit codes: 0 success, 1 property failure, 2 input error, 3 infeasible or
unserved.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import checks
from .broadcast_sim import (
    POLICIES,
    simulate_b_equiset,
    simulate_b_equiset_edf,
    simulate_ignore_deps,
)
from .core import InstanceError, UnservedRequestError, format_rational as fr, parse_rational, require_valid
from .formats import (
    batches_to_json,
    dumps,
    instance_to_json,
    load_instance,
    trace_to_json,
    write_json,
)
from .oracle import (
    OracleInfeasible,
    OracleScaleError,
    brute_force_bopt,
    discrete_trace,
    greedy_upper_bound,
)
from .reduction import build_batch_instance
from .workloads import (
    gen_fact1_adversarial,
    gen_fact1_randomized,
    gen_figure1,
    gen_random_correlated,
)

OK, PROPERTY_FAILURE, INPUT_ERROR, INFEASIBLE = 0, 1, 2, 3
ALGOS = ("b-equiset", "b-equiset-edf", "ignore-deps")
ORACLE_NOTE = "oracle values are discrete-class optima, an upper bound on the unit-speed optimum"


class InputError(Exception):
    pass


def rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except InstanceError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def positive(text: str) -> Fraction:
    x = rational(text)
    if x <= 0:
        raise argparse.ArgumentTypeError(f"{text} must be positive")
    return x


def _emit(doc_text: str, out) -> None:
    if out:
        Path(out).write_text(doc_text, encoding="utf-8")
    else:
        sys.stdout.write(doc_text)


def _load(path):
    if not path:
        raise InputError("--instance is required")
    try:
        inst = load_instance(path)
        require_valid(inst)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return inst


def run_algorithm(inst, algo: str, speed=None, inner="equi", eps=1, delta=1, baseline="equi-per-item"):
    """Returns ``(trace, speed)`` for one of the built-in simulators."""
    if algo == "b-equiset":
        speed = Fraction(1) if speed is None else speed
        return simulate_b_equiset(inst, speed, inner), speed
    if algo == "b-equiset-edf":
        res = simulate_b_equiset_edf(inst, eps, delta, inner)
        return res.trace, res.speed
    if algo == "ignore-deps":
        speed = Fraction(1) if speed is None else speed
        return simulate_ignore_deps(inst, speed, baseline), speed
    raise InputError(f"unknown algorithm {algo!r}")


def cmd_simulate(args) -> int:
    inst = _load(args.instance)
    trace, speed = run_algorithm(
        inst, args.algo, args.speed, args.inner, args.eps, args.delta, args.baseline
    )
    if args.out:
        write_json(args.out, trace_to_json(trace))
    print(f"flow={fr(trace.flow)} requests={len(inst.requests)} speed={fr(speed)}")
    return OK


def _digest(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def cmd_gen(args) -> int:
    if args.deterministic and args.kind in ("randomized", "random") and args.seed is None:
        raise InputError("--seed is required in deterministic mode")
    seed = 0 if args.seed is None else args.seed
    try:
        if args.kind == "figure1":
            inst = gen_figure1()
        elif args.kind == "adversarial":
            inst = gen_fact1_adversarial(args.n, args.speed or 1, args.baseline).instance
        elif args.kind == "randomized":
            inst = gen_fact1_randomized(args.n, seed)
        else:
            inst = gen_random_correlated(
                args.items, args.requests, args.theta, args.max_set,
                (args.min_length, args.max_length), args.horizon, seed,
            )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    require_valid(inst)
    doc = instance_to_json(inst)
    _emit(dumps(doc), args.out)
    print(
        f"valid items={len(inst.items)} requests={len(inst.requests)} digest={_digest(doc)}",
        file=sys.stderr if not args.out else sys.stdout,
    )
    return OK


def _trial(which: str, seed: int, args) -> checks.Verdict:
    eps, delta = args.eps, args.delta
    if which == "lemma1":
        batches = checks.random_batches(seed)
        v = checks.check_jprime_equality(batches, "equi")
        return v if not v.ok else checks.check_jprime_equality(batches, "minidx")
    if which == "lemma2":
        batches = checks.random_batches(seed)
        v = checks.check_jdoubleprime_transfer(batches, "equi")
        return v if not v.ok else checks.check_jdoubleprime_transfer(batches, "minidx")
    if which == "lemma3":
        return checks.check_delayed_schedule(checks.micro_batches(seed))
    if which in ("lemma4", "upsilon2"):
        inst = checks.oracle_sized_instance(seed)
        try:
            _, ref = checks.reference_trace(inst, args.budget)
        except OracleScaleError as exc:
            return checks.Verdict(True, str(exc), skipped=True)
        speed = args.speed or (4 + eps) * (1 + delta)
        check = checks.check_mirror_replay if which == "lemma4" else checks.check_upsilon2
        return check(inst, speed, ref)
    if which == "theorem1":
        return checks.check_competitive_ratio(checks.oracle_sized_instance(seed), eps, delta, args.budget)
    if which == "edf-preemption":
        return checks.check_edf(checks.fuzz_instance(seed), eps, delta)
    if which == "conservation":
        return checks.check_conservation(checks.fuzz_instance(seed))
    if which == "fact1-gap":
        return checks.check_adversarial_gap((4, 6, 8, 10)[seed % 4] ** 2)
    raise InputError(f"unknown check {which!r}")


VERIFY_CHOICES = (
    "lemma1", "lemma2", "lemma3", "lemma4", "upsilon2",
    "theorem1", "edf-preemption", "fact1-gap", "conservation",
)


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise InputError("--trials must be at least 1")
    if args.which == "theorem1":
        print(f"# {ORACLE_NOTE}; exceeding the bound against it is a real failure")
    failed = 0
    report = []
    for k in range(args.trials):
        seed = args.seed + k
        v = _trial(args.which, seed, args)
        failed += not v.ok
        report.append({"trial": k, "seed": seed, "verdict": v.label, "detail": v.detail})
        print(f"trial {k} seed={seed} {v.label}" + (f" {v.detail}" if v.detail else ""))
    print(f"{args.which}: {args.trials - failed}/{args.trials} ok")
    if args.out:
        write_json(args.out, report)
    return PROPERTY_FAILURE if failed else OK


def _oracle_bound(inst, budget):
    """Branch-and-bound value when in scale, otherwise the greedy bound."""
    try:
        kw = {} if budget is None else {"budget": budget}
        return brute_force_bopt(inst, **kw)[0], "oracle"
    except OracleScaleError:
        return greedy_upper_bound(inst)[0], "greedy"


def _parse_algo(spec: str):
    name, _, speed = spec.partition("@")
    if name not in ALGOS:
        raise InputError(f"unknown algorithm {name!r}")
    return name, (parse_rational(speed) if speed else None)


def cmd_bench(args) -> int:
    cases = []
    for path in args.instance or []:
        cases.append((Path(path).stem, _load(path)))
    for n in args.fact1 or []:
        cases.append((f"fact1-n{n}", gen_fact1_adversarial(n, 1).instance))
    if not cases:
        raise InputError("bench needs --instance or --fact1")
    algos = [_parse_algo(a) for a in (args.algo or ["b-equiset"])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "algorithm", "speed", "flow", "oracle_bound", "ratio", "ratio_exact", "wall_ms"])
    errors = 0
    for name, inst in cases:
        bound = _oracle_bound(inst, args.budget)[0] if args.oracle else None
        for algo, speed in algos:
            start = time.perf_counter()
            try:
                trace, used = run_algorithm(inst, algo, speed, args.inner, args.eps, args.delta, args.baseline)
            except Exception as exc:  # recorded per row
                errors += 1
                w.writerow([name, algo, fr(speed) if speed else "", f"error: {exc}", "", "", "", ""])
                continue
            wall = 0 if args.deterministic else round((time.perf_counter() - start) * 1000)
            ratio = exact = ""
            if bound:
                q = trace.flow / bound
                ratio, exact = f"~{float(q):.6f}", fr(q)
            w.writerow([name, algo, fr(used), fr(trace.flow), fr(bound) if bound is not None else "", ratio, exact, wall])
    _emit(buf.getvalue(), args.out)
    if args.oracle:
        print(f"# {ORACLE_NOTE}", file=sys.stderr)
    return PROPERTY_FAILURE if errors else OK


def cmd_oracle(args) -> int:
    inst = _load(args.instance)
    kw = {} if args.budget is None else {"budget": args.budget}
    flow, sched = brute_force_bopt(inst, slot=args.slot, horizon=args.horizon, **kw)
    if args.out:
        write_json(args.out, trace_to_json(discrete_trace(inst, sched)))
    print(f"flow={fr(flow)} requests={len(inst.requests)} speed=1 ({ORACLE_NOTE})")
    return OK


def cmd_reduce(args) -> int:
    inst = _load(args.instance)
    speed = args.speed or Fraction(1)
    e = simulate_b_equiset(inst, speed, args.inner)
    kw = {} if args.budget is None else {"budget": args.budget}
    _, sched = brute_force_bopt(inst, **kw)
    red = build_batch_instance(inst, e, discrete_trace(inst, sched))
    _emit(dumps(batches_to_json(red.batches, red.processors)), args.out)
    if args.classes:
        write_json(args.classes, red.class_report())
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bequiset", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, instance=True):
        if instance:
            p.add_argument("--instance", help="instance JSON file")
        p.add_argument("--speed", type=positive)
        p.add_argument("--eps", type=positive, default=Fraction(1))
        p.add_argument("--delta", type=positive, default=Fraction(1))
        p.add_argument("--inner", choices=sorted(POLICIES), default="equi")
        p.add_argument("--budget", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--deterministic", action="store_true")

    p = sub.add_parser("simulate", help="run a simulator on an instance")
    common(p)
    p.add_argument("--algo", choices=ALGOS, default="b-equiset")
    p.add_argument("--baseline", choices=("equi-per-item", "round-robin"), default="equi-per-item")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen", help="write a generated instance")
    common(p, instance=False)
    p.add_argument("kind", choices=("figure1", "adversarial", "randomized", "random"))
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--baseline", choices=("equi-per-item", "round-robin"), default="equi-per-item")
    p.add_argument("--items", type=int, default=4)
    p.add_argument("--requests", type=int, default=6)
    p.add_argument("--theta", type=rational, default=Fraction(1))
    p.add_argument("--max-set", type=int, default=3)
    p.add_argument("--min-length", type=positive, default=Fraction(1, 4))
    p.add_argument("--max-length", type=positive, default=Fraction(2))
    p.add_argument("--horizon", type=rational, default=Fraction(4))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", help="run a property chain on random trials")
    common(p, instance=False)
    p.add_argument("which", choices=VERIFY_CHOICES)
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="CSV of flows and oracle ratios")
    common(p, instance=False)
    p.add_argument("--instance", action="append", help="instance JSON file (repeatable)")
    p.add_argument("--fact1", type=int, action="append", help="adversarial instance size n (repeatable)")
    p.add_argument("--algo", action="append", help="algorithm[@speed], repeatable")
    p.add_argument("--oracle", action="store_true", help="add the oracle bound and ratio columns")
    p.add_argument("--baseline", choices=("equi-per-item", "round-robin"), default="equi-per-item")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="branch-and-bound optimum over slot-aligned schedules")
    common(p)
    p.add_argument("--slot", type=positive)
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("reduce", help="emit the batch instance and class report")
    common(p)
    p.add_argument("--classes", help="write the class-partition report here")
    p.set_defaults(func=cmd_reduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and args.command == "verify":
        args.seed = 0
    try:
        return args.func(args)
    except (InputError, InstanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except (UnservedRequestError, OracleInfeasible) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return INFEASIBLE
    except OracleScaleError as exc:
        print(f"oracle scale exceeded: {exc}", file=sys.stderr)
        return INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
