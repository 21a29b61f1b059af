"""Command-line harness.

Subcommands: calibrate, bench, overhead, replay, model.  Traces are JSON
lines (one record per line), summaries are CSV.  Exit codes: 0 success,
1 runtime failure, 2 usage error.

RATE_SCOPE_TIMEREF=virtual|platform overrides the clock used by bench
and ground-truth runs; virtual runs are deterministic given --seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
from dataclasses import asdict
from typing import IO, Sequence

from .ique import TransactionSnapshot
from .monitor import (
    MonitorConfig,
    QObservation,
    RateEstimate,
    RatePipeline,
    StatusEvent,
)
from .qmodel import sweep
from .timebase import SleepProbe, calibrate_period, measure_resolution
from .workload import (
    GroundTruth,
    PhaseSchedule,
    ServiceSpec,
    classify_dual_phase,
    ground_truth_rate,
    run_benchmark,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


# ---------------------------------------------------------------------------
# trace records
# ---------------------------------------------------------------------------


def snapshot_record(run_id: str, snap: TransactionSnapshot, side: str) -> dict:
    return {
        "run_id": run_id,
        "kind": "snapshot",
        "period_index": snap.period_index,
        "tc_head": snap.tc_head,
        "tc_tail": snap.tc_tail,
        "head_blocked": snap.head_blocked,
        "tail_blocked": snap.tail_blocked,
        "realized_ns": snap.realized_period_ns,
        "side": side,
    }


def event_record(run_id: str, ev) -> dict:
    if isinstance(ev, RateEstimate):
        rec = {"run_id": run_id, "kind": "estimate"}
        rec.update(ev.to_json_dict())
        return rec
    if isinstance(ev, QObservation):
        return {
            "run_id": run_id,
            "kind": "q",
            "period_index": ev.period_index,
            "value": ev.q,
            "q_bar": ev.q_bar,
            "n_q": ev.n_q,
        }
    if isinstance(ev, StatusEvent):
        return {
            "run_id": run_id,
            "kind": "status",
            "period_index": ev.period_index,
            "status": ev.status,
            "nonblocked_fraction": ev.nonblocked_fraction,
            "horizon": ev.horizon,
        }
    raise TypeError(f"unknown event {ev!r}")


def parse_snapshot_record(rec: dict) -> TransactionSnapshot:
    return TransactionSnapshot(
        period_index=rec["period_index"],
        tc_head=rec["tc_head"],
        tc_tail=rec["tc_tail"],
        head_blocked=rec["head_blocked"],
        tail_blocked=rec["tail_blocked"],
        realized_period_ns=rec["realized_ns"],
    )


class TraceParseError(ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"trace line {line_number}: {message}")
        self.line_number = line_number


def read_trace(fh: IO[str]) -> list[dict]:
    records = []
    for i, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise TraceParseError(i, str(e)) from e
    return records


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _timeref(args) -> str:
    if getattr(args, "timeref", None):
        return args.timeref
    return os.environ.get("RATE_SCOPE_TIMEREF", "platform")


def _load_config(path: str | None) -> MonitorConfig:
    if path is None:
        return MonitorConfig()
    with open(path) as fh:
        return MonitorConfig.from_json_dict(json.load(fh))


def _open_out(path: str | None) -> IO[str]:
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    tr = measure_resolution(args.samples)
    probe = SleepProbe()
    cal = calibrate_period(
        tr,
        probe,
        k=args.k,
        j=args.j,
        epsilon=args.epsilon,
        ceiling_ns=int(args.ceiling_ms * 1e6),
    )
    out = cal.to_json_dict()
    out["resolution"] = {
        "min_ns": tr.resolution_min_ns,
        "mean_ns": tr.resolution_mean_ns,
        "p95_ns": tr.resolution_p95_ns,
    }
    fh = _open_out(args.out)
    json.dump(out, fh, indent=2)
    fh.write("\n")
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK if cal.stable else EXIT_RUNTIME


def _phase_schedule(rates: list[float], dist: str, item_size: int,
                    seed: int, items_per_phase: list[int]) -> PhaseSchedule:
    from .workload import Phase

    phases = []
    for idx, (r, n) in enumerate(zip(rates, items_per_phase)):
        phases.append(
            Phase(
                ServiceSpec(
                    distribution=dist, mean_rate=r,
                    item_size=item_size, seed=seed + idx,
                ),
                n,
            )
        )
    return PhaseSchedule(tuple(phases))


def cmd_bench(args) -> int:
    if args.repeats < 1:
        print("error: --repeats must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    timeref = _timeref(args)
    cfg = _load_config(args.config)
    if args.period_ms is not None:
        cfg.period_ns = int(args.period_ms * 1e6)
    if cfg.period_ns is None:
        cfg.period_ns = 4_000_000
    if args.tolerance is not None:
        cfg.tolerance = args.tolerance
    if args.epsilon is not None:
        cfg.epsilon = args.epsilon

    if args.dual_phase:
        rates = [float(x) for x in args.dual_phase.split(",")]
        if len(rates) != 2:
            print("error: --dual-phase needs two rates", file=sys.stderr)
            return EXIT_USAGE
    else:
        rates = [args.consumer_rate]

    duration = args.duration
    trace_fh = open(args.trace, "w") if args.trace else None
    out_fh = _open_out(args.out)
    csv_fh = open(args.csv, "w", newline="") if args.csv else None
    writer = None
    if csv_fh is not None:
        writer = csv.writer(csv_fh)
        writer.writerow(
            ["run", "seed", "set_rates", "ground_truths", "estimates",
             "pct_diff_first", "classification", "rho", "nonblocked_fraction"]
        )

    exit_code = EXIT_OK
    for rep in range(args.repeats):
        seed = args.seed + rep * 7919
        items_per_phase = [max(1, int(round(r * duration))) for r in rates]
        consumer = _phase_schedule(
            rates, args.dist, args.item_size, seed, items_per_phase
        )
        prod_rate = args.producer_rate or rates[0] * 2.0
        producer = PhaseSchedule.single(
            ServiceSpec(
                distribution=args.producer_dist, mean_rate=prod_rate,
                item_size=args.item_size, seed=seed + 104729,
            ),
            consumer.total_items,
        )
        truths = [
            ground_truth_rate(p.spec, max(10_000, p.item_count), timeref)
            for p in consumer.phases
        ]
        report = run_benchmark(
            producer, consumer, args.capacity, cfg,
            timeref=timeref,
            stop_after_estimates=args.stop_after,
            record_snapshots=trace_fh is not None,
        )
        run_id = f"run{rep}"
        if trace_fh is not None:
            for snap in report.snapshots:
                trace_fh.write(
                    json.dumps(snapshot_record(run_id, snap, "head")) + "\n"
                )
        classification = ""
        if len(rates) == 2:
            cls = classify_dual_phase(
                report, truths[0].items_per_sec, truths[1].items_per_sec
            )
            classification = cls.category + ("?" if cls.unreliable else "")
        pct_diff = ""
        if report.estimates:
            est = report.estimates[0].rate_items_per_sec
            set_rate = truths[0].items_per_sec
            pct_diff = (est - set_rate) / set_rate * 100.0
        doc = report.to_json_dict()
        doc["run_id"] = run_id
        doc["seed"] = seed
        doc["ground_truths"] = [asdict(t) for t in truths]
        doc["classification"] = classification
        doc["pct_diff_first"] = pct_diff
        out_fh.write(json.dumps(doc) + "\n")
        if writer is not None:
            writer.writerow(
                [
                    run_id, seed,
                    ";".join(str(r) for r in rates),
                    ";".join(f"{t.items_per_sec:.6g}" for t in truths),
                    ";".join(
                        f"{e.rate_items_per_sec:.6g}" for e in report.estimates
                    ),
                    pct_diff, classification, f"{report.rho:.4f}",
                    f"{report.nonblocked_fraction:.4f}",
                ]
            )
        if not report.usable:
            exit_code = EXIT_RUNTIME
    if trace_fh is not None:
        trace_fh.close()
    if csv_fh is not None:
        csv_fh.close()
    if out_fh is not sys.stdout:
        out_fh.close()
    return exit_code


def cmd_overhead(args) -> int:
    if args.repeats < 1:
        print("error: --repeats must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    cfg = MonitorConfig(period_ns=int(args.period_ms * 1e6))
    items = max(1, int(round(args.rate * args.duration)))
    spec_c = ServiceSpec("deterministic", args.rate, seed=args.seed)
    spec_p = ServiceSpec("deterministic", args.rate * 2.0, seed=args.seed + 1)
    consumer = PhaseSchedule.single(spec_c, items)
    producer = PhaseSchedule.single(spec_p, items)

    on_times: list[float] = []
    off_times: list[float] = []
    for _ in range(args.repeats):
        for monitored, bucket in ((True, on_times), (False, off_times)):
            r = run_benchmark(
                producer, consumer, args.capacity, cfg,
                timeref="platform", monitoring=monitored,
            )
            bucket.append(r.wall_time_s)

    result = {
        "repeats": args.repeats,
        "instrumented_mean_s": statistics.mean(on_times),
        "uninstrumented_mean_s": statistics.mean(off_times),
        "ratio": statistics.mean(on_times) / statistics.mean(off_times),
        "insufficient_samples": args.repeats < 2,
    }
    if args.repeats >= 2:
        s_on = statistics.stdev(on_times)
        s_off = statistics.stdev(off_times)
        m_off = statistics.mean(off_times)
        # delta-method CI for the ratio of means
        se = result["ratio"] * math.sqrt(
            (s_on / (statistics.mean(on_times) * math.sqrt(args.repeats))) ** 2
            + (s_off / (m_off * math.sqrt(args.repeats))) ** 2
        )
        result["ci95"] = [result["ratio"] - 1.96 * se, result["ratio"] + 1.96 * se]
    fh = _open_out(args.out)
    json.dump(result, fh, indent=2)
    fh.write("\n")
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _load_config(args.config)
    if args.period_ns is not None:
        cfg.period_ns = args.period_ns
    if cfg.period_ns is None:
        print("error: replay needs --period-ns or a config file with period_ns",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        with open(args.trace) as fh:
            records = read_trace(fh)
    except TraceParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    out_fh = _open_out(args.out)
    by_run: dict[str, RatePipeline] = {}
    for rec in records:
        if rec.get("kind") != "snapshot":
            continue
        run_id = rec.get("run_id", "run0")
        pipe = by_run.get(run_id)
        if pipe is None:
            pipe = RatePipeline(cfg, rec.get("side", "head"))
            by_run[run_id] = pipe
        snap = parse_snapshot_record(rec)
        for ev in pipe.process(snap):
            out_fh.write(json.dumps(event_record(run_id, ev)) + "\n")
    if out_fh is not sys.stdout:
        out_fh.close()
    return EXIT_OK


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x] if text else []


def cmd_model(args) -> int:
    rows = sweep(
        _floats(args.mu),
        _floats(args.rho),
        [int(x) for x in args.capacity.split(",") if x] if args.capacity else [],
        _floats(args.period),
    )
    fh = _open_out(args.out)
    writer = csv.writer(fh)
    writer.writerow(["mu_s", "T", "rho", "C", "k", "pr_read", "pr_write"])
    for row in rows:
        writer.writerow(
            [row["mu_s"], row["T"], row["rho"], row["C"], row["k"],
             repr(row["pr_read"]), repr(row["pr_write"])]
        )
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ratescope",
        description="Online non-blocking service rate estimation harness",
    )
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="measure clock and calibrate period")
    c.add_argument("--samples", type=int, default=1000)
    c.add_argument("--epsilon", type=float, default=0.05)
    c.add_argument("--k", type=int, default=16)
    c.add_argument("--j", type=int, default=16)
    c.add_argument("--ceiling-ms", type=float, default=100.0)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_calibrate)

    b = sub.add_parser("bench", help="run seeded micro-benchmarks")
    b.add_argument("--consumer-rate", type=float, default=1e4)
    b.add_argument("--producer-rate", type=float, default=None)
    b.add_argument("--dist", choices=["deterministic", "exponential"],
                   default="exponential")
    b.add_argument("--producer-dist",
                   choices=["deterministic", "exponential"],
                   default="exponential")
    b.add_argument("--dual-phase", default=None,
                   help="two consumer rates 'A,B' with a mid-run shift")
    b.add_argument("--capacity", type=int, default=256)
    b.add_argument("--item-size", type=int, default=8)
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--duration", type=float, default=8.0,
                   help="nominal seconds of consumer work per phase")
    b.add_argument("--period-ms", type=float, default=None)
    b.add_argument("--tolerance", type=float, default=None)
    b.add_argument("--epsilon", type=float, default=None)
    b.add_argument("--stop-after", type=int, default=None)
    b.add_argument("--timeref", choices=["platform", "virtual"], default=None)
    b.add_argument("--config", default=None)
    b.add_argument("--trace", default=None)
    b.add_argument("--csv", default=None)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("overhead", help="measure monitoring overhead")
    o.add_argument("--repeats", type=int, default=20)
    o.add_argument("--rate", type=float, default=4000.0)
    o.add_argument("--duration", type=float, default=1.0)
    o.add_argument("--capacity", type=int, default=256)
    o.add_argument("--period-ms", type=float, default=4.0)
    o.add_argument("--seed", type=int, default=1)
    o.add_argument("--out", default=None)
    o.set_defaults(func=cmd_overhead)

    r = sub.add_parser("replay", help="recompute estimates from a trace")
    r.add_argument("trace")
    r.add_argument("--config", default=None)
    r.add_argument("--period-ns", type=int, default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_replay)

    m = sub.add_parser("model", help="M/M/1 observation probability table")
    m.add_argument("--mu", default="", help="comma list of service rates")
    m.add_argument("--rho", default="", help="comma list of utilizations")
    m.add_argument("--capacity", default="", help="comma list of capacities")
    m.add_argument("--period", default="", help="comma list of T seconds")
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_model)

    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
