"""Synthetic micro-benchmark: producer and consumer kernels joined by one
instrumented queue, with configurable service-time distributions and an
optional mid-run phase shift.

Two interchangeable engines drive the same queue, pipeline and report
format:

* ``platform``: real producer/consumer/monitor threads paced against the
  platform clock by busy-waiting each item to a cumulative deadline.
  Wall-clock results; used for overhead measurement and stress.
* ``virtual``: a discrete-event engine advancing a virtual clock, exactly
  reproducible for a given seed and configuration.  This is what makes
  seeded benchmark runs deterministic end to end.

Service-time randomness comes from a seeded Mersenne Twister with the
inverse-CDF exponential transform (``random.Random.expovariate``); the
generator is recorded in every report.
"""
from __future__ import annotations

import random
import sys
import threading
import time
from dataclasses import dataclass, field, asdict
from typing import Literal

from .ique import IQueue, Side
from .monitor import (
    Monitor,
    MonitorConfig,
    MonitorEvent,
    QObservation,
    RateEstimate,
    RatePipeline,
    StatusEvent,
)
from .ique import TransactionSnapshot

RNG_ALGORITHM = "mt19937/inverse-cdf-exponential"

Distribution = Literal["deterministic", "exponential"]
TimeRefMode = Literal["platform", "virtual"]


@dataclass(frozen=True)
class ServiceSpec:
    """Service-time process of one kernel."""

    distribution: Distribution
    mean_rate: float          # items/sec
    item_size: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mean_rate <= 0:
            raise ValueError("mean_rate must be > 0")
        if self.item_size < 1:
            raise ValueError("item_size must be >= 1")
        if self.distribution not in ("deterministic", "exponential"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    def service_times_ns(self, n: int) -> list[int]:
        """The first n service times, reproducible for a given seed."""
        if self.distribution == "deterministic":
            dt = max(1, int(round(1e9 / self.mean_rate)))
            return [dt] * n
        rng = random.Random(self.seed)
        return [
            max(1, int(round(rng.expovariate(self.mean_rate) * 1e9)))
            for _ in range(n)
        ]


@dataclass(frozen=True)
class Phase:
    spec: ServiceSpec
    item_count: int

    def __post_init__(self) -> None:
        if self.item_count <= 0:
            raise ValueError("item_count must be > 0")


@dataclass(frozen=True)
class PhaseSchedule:
    phases: tuple[Phase, ...]

    def __post_init__(self) -> None:
        if not self.phases:
            raise ValueError("at least one phase required")

    @property
    def total_items(self) -> int:
        return sum(p.item_count for p in self.phases)

    @classmethod
    def single(cls, spec: ServiceSpec, items: int) -> "PhaseSchedule":
        return cls(phases=(Phase(spec, items),))

    def service_times_ns(self, n: int) -> list[int]:
        """Concatenated per-phase service times, truncated/extended to n.

        The last phase's process continues if n exceeds the schedule.
        """
        out: list[int] = []
        for phase in self.phases:
            if len(out) >= n:
                break
            take = min(phase.item_count, n - len(out))
            out.extend(phase.spec.service_times_ns(phase.item_count)[:take])
        while len(out) < n:
            extra = self.phases[-1].spec.service_times_ns(n - len(out))
            out.extend(extra)
        return out[:n]


@dataclass(frozen=True)
class GroundTruth:
    items_per_sec: float
    bytes_per_sec: float
    items: int


@dataclass(frozen=True)
class PhaseClassification:
    category: Literal["Neither", "A", "B", "Both"]
    unreliable: bool


@dataclass
class BenchReport:
    """Everything one benchmark run produced."""

    config: dict
    estimates: list[RateEstimate] = field(default_factory=list)
    statuses: list[StatusEvent] = field(default_factory=list)
    q_count: int = 0
    wall_time_s: float = 0.0
    items_transferred: int = 0
    achieved_items_per_sec: float = 0.0
    nonblocked_fraction: float = 0.0
    rho: float = 0.0
    usable: bool = True
    rng_algorithm: str = RNG_ALGORITHM
    timeref: str = "platform"
    snapshots: list[TransactionSnapshot] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "estimates": [e.to_json_dict() for e in self.estimates],
            "statuses": [asdict(s) for s in self.statuses],
            "q_count": self.q_count,
            "wall_time_s": self.wall_time_s,
            "items_transferred": self.items_transferred,
            "achieved_items_per_sec": self.achieved_items_per_sec,
            "nonblocked_fraction": self.nonblocked_fraction,
            "rho": self.rho,
            "usable": self.usable,
            "rng_algorithm": self.rng_algorithm,
            "timeref": self.timeref,
        }


def _utilization(producer: PhaseSchedule, consumer: PhaseSchedule) -> float:
    """Server (consumer) utilization: arrivals over service capacity.

    Uses the first phase's nominal rates, clamped to (0, 1].
    """
    lam = producer.phases[0].spec.mean_rate
    mu = consumer.phases[0].spec.mean_rate
    return max(1e-12, min(1.0, lam / mu))


# ---------------------------------------------------------------------------
# virtual (discrete-event) engine
# ---------------------------------------------------------------------------


def _run_virtual(
    producer: PhaseSchedule,
    consumer: PhaseSchedule,
    capacity: int,
    cfg: MonitorConfig,
    side: Side,
    stop_after_estimates: int | None,
    record_snapshots: bool,
) -> BenchReport:
    total = producer.total_items
    q = IQueue(capacity, item_size=consumer.phases[0].spec.item_size)
    pipeline = RatePipeline(cfg, side)
    T = cfg.period_ns

    prod_dt = producer.service_times_ns(total)
    cons_dt = consumer.service_times_ns(total)

    estimates: list[RateEstimate] = []
    statuses: list[StatusEvent] = []
    snapshots: list[TransactionSnapshot] = []
    q_count = 0

    # Actor state: next action times in virtual ns.
    t_prod = prod_dt[0] if total else 0   # producer finishes working item 0
    t_cons = 0                            # consumer ready to pop immediately
    t_mon = T
    pushed = 0
    popped = 0
    prod_waiting = False   # blocked on full queue
    cons_waiting = False   # blocked on empty queue
    period_index = 0
    prev_harvest = 0
    done = False

    while popped < total and not done:
        # Choose the earliest runnable actor; ties run producer, consumer,
        # then monitor so data movement precedes sampling at an instant.
        candidates: list[tuple[int, int]] = []
        if pushed < total and not prod_waiting:
            candidates.append((t_prod, 0))
        if not cons_waiting:
            candidates.append((t_cons, 1))
        candidates.append((t_mon, 2))
        t_next, actor = min(candidates)

        if actor == 0:
            # Producer finished simulating work; push the item.
            if q.try_push(pushed):
                pushed += 1
                if cons_waiting:
                    cons_waiting = False
                    t_cons = t_next  # consumer retries as data arrives
                if pushed < total:
                    t_prod = t_next + prod_dt[pushed]
            else:
                prod_waiting = True
        elif actor == 1:
            ok, _ = q.try_pop()
            if ok:
                if prod_waiting:
                    prod_waiting = False
                    t_prod = t_next  # pending item retries its push now
                dt = cons_dt[popped]
                popped += 1
                t_cons = t_next + dt
            else:
                cons_waiting = True
        else:
            snap = q.harvest(side, period_index, t_next - prev_harvest)
            prev_harvest = t_next
            if record_snapshots:
                snapshots.append(snap)
            for ev in pipeline.process(snap, timestamp_ns=t_next):
                if isinstance(ev, RateEstimate):
                    estimates.append(ev)
                    if (
                        stop_after_estimates is not None
                        and len(estimates) >= stop_after_estimates
                    ):
                        done = True
                elif isinstance(ev, StatusEvent):
                    statuses.append(ev)
                elif isinstance(ev, QObservation):
                    q_count += 1
            period_index += 1
            t_mon += T

    end_time = max(t_cons, t_mon)
    report = BenchReport(
        config={},
        estimates=estimates,
        statuses=statuses,
        q_count=q_count,
        wall_time_s=end_time / 1e9,
        items_transferred=popped,
        achieved_items_per_sec=popped / (end_time / 1e9) if end_time else 0.0,
        nonblocked_fraction=pipeline.nonblocked_fraction,
        rho=_utilization(producer, consumer),
        timeref="virtual",
        snapshots=snapshots,
    )
    return report


# ---------------------------------------------------------------------------
# platform (threaded) engine
# ---------------------------------------------------------------------------


_SLEEP_MARGIN_NS = 20_000


def _spin_until(deadline: int) -> int:
    # Sleep through coarse slack so concurrent paced threads fit on one
    # CPU, then spin out the remainder for precision.
    now = time.perf_counter_ns()
    while deadline - now > _SLEEP_MARGIN_NS:
        time.sleep((deadline - now - _SLEEP_MARGIN_NS) / 1e9)
        now = time.perf_counter_ns()
    while now < deadline:
        now = time.perf_counter_ns()
    return now


def _run_platform(
    producer: PhaseSchedule,
    consumer: PhaseSchedule,
    capacity: int,
    cfg: MonitorConfig,
    side: Side,
    stop_after_estimates: int | None,
    record_snapshots: bool,
    monitoring: bool,
) -> BenchReport:
    total = producer.total_items
    q = IQueue(capacity, item_size=consumer.phases[0].spec.item_size)
    prod_dt = producer.service_times_ns(total)
    cons_dt = consumer.service_times_ns(total)

    stop = threading.Event()
    estimates: list[RateEstimate] = []
    statuses: list[StatusEvent] = []
    q_events = [0]

    def sink(ev: MonitorEvent) -> None:
        if isinstance(ev, RateEstimate):
            estimates.append(ev)
            if (
                stop_after_estimates is not None
                and len(estimates) >= stop_after_estimates
            ):
                stop.set()
        elif isinstance(ev, StatusEvent):
            statuses.append(ev)
        else:
            q_events[0] += 1

    def produce() -> None:
        deadline = time.perf_counter_ns()
        i = 0
        while i < total and not stop.is_set():
            deadline += prod_dt[i]
            now = time.perf_counter_ns()
            if now < deadline:
                _spin_until(deadline)
            if not q.try_push(i):
                while not q.try_push(i):
                    if stop.is_set():
                        return
                    time.sleep(0)
                # a blocked wait is not pacing debt; restart the schedule
                deadline = time.perf_counter_ns()
            i += 1

    popped_box = [0]

    def consume() -> None:
        deadline = time.perf_counter_ns()
        i = 0
        while i < total and not stop.is_set():
            deadline += cons_dt[i]
            now = time.perf_counter_ns()
            if now < deadline:
                _spin_until(deadline)
            ok, _ = q.try_pop()
            while not ok:
                if stop.is_set():
                    popped_box[0] = i
                    return
                time.sleep(0)
                ok, _ = q.try_pop()
                if ok:
                    deadline = time.perf_counter_ns()
            i += 1
        popped_box[0] = i

    mon: Monitor | None = None
    if monitoring:
        mon = Monitor(q, side, None, cfg, sink)
        mon.record_snapshots = record_snapshots

    old_interval = sys.getswitchinterval()
    sys.setswitchinterval(1e-4)
    t0 = time.perf_counter_ns()
    try:
        tp = threading.Thread(target=produce, daemon=True)
        tc = threading.Thread(target=consume, daemon=True)
        if mon is not None:
            mon.start()
        tp.start()
        tc.start()
        tc.join()
        stop.set()
        tp.join()
        if mon is not None:
            mon.stop()
            mon.join()
    finally:
        sys.setswitchinterval(old_interval)
    wall = (time.perf_counter_ns() - t0) / 1e9

    report = BenchReport(
        config={},
        estimates=estimates,
        statuses=statuses,
        q_count=q_events[0],
        wall_time_s=wall,
        items_transferred=popped_box[0],
        achieved_items_per_sec=popped_box[0] / wall if wall > 0 else 0.0,
        nonblocked_fraction=(
            mon.pipeline.nonblocked_fraction if mon is not None else 0.0
        ),
        rho=_utilization(producer, consumer),
        timeref="platform",
        snapshots=list(mon.snapshots) if mon is not None else [],
    )
    return report


def run_benchmark(
    producer: PhaseSchedule,
    consumer: PhaseSchedule,
    capacity: int,
    monitor_cfg: MonitorConfig,
    side: Side = "head",
    timeref: TimeRefMode = "platform",
    stop_after_estimates: int | None = None,
    record_snapshots: bool = False,
    monitoring: bool = True,
) -> BenchReport:
    """Run one producer/queue/consumer benchmark and collect estimates.

    The head (departure) side is instrumented by default.  ``monitoring``
    False keeps the counters in place but never harvests them, which is
    the baseline arm of overhead measurement.
    """
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    if monitor_cfg.period_ns is None:
        raise ValueError("monitor_cfg.period_ns must be set for benchmarks")
    cfg = MonitorConfig(**monitor_cfg.to_json_dict())
    cfg.item_size = consumer.phases[0].spec.item_size
    if timeref == "virtual":
        if not monitoring:
            raise ValueError("virtual engine always monitors; disable via platform")
        report = _run_virtual(
            producer, consumer, capacity, cfg, side,
            stop_after_estimates, record_snapshots,
        )
    else:
        report = _run_platform(
            producer, consumer, capacity, cfg, side,
            stop_after_estimates, record_snapshots, monitoring,
        )
    report.config = {
        "producer": _schedule_dict(producer),
        "consumer": _schedule_dict(consumer),
        "capacity": capacity,
        "side": side,
        "monitor": cfg.to_json_dict(),
        "timeref": timeref,
    }
    return report


def _schedule_dict(s: PhaseSchedule) -> dict:
    return {
        "phases": [
            {"spec": asdict(p.spec), "item_count": p.item_count}
            for p in s.phases
        ]
    }


def ground_truth_rate(
    spec: ServiceSpec,
    items: int,
    timeref: TimeRefMode = "platform",
) -> GroundTruth:
    """Offline rate of a kernel loop that is never starved nor blocked.

    Platform mode actually runs the pacing loop against the real clock;
    virtual mode sums the same service draws analytically.
    """
    if items < 10_000:
        raise ValueError(f"items must be >= 10000, got {items}")
    dts = spec.service_times_ns(items)
    if timeref == "virtual":
        total_ns = sum(dts)
    else:
        t0 = time.perf_counter_ns()
        deadline = t0
        for dt in dts:
            deadline += dt
            if time.perf_counter_ns() < deadline:
                _spin_until(deadline)
        total_ns = time.perf_counter_ns() - t0
    rate = items / (total_ns / 1e9)
    return GroundTruth(
        items_per_sec=rate,
        bytes_per_sec=rate * spec.item_size,
        items=items,
    )


def classify_dual_phase(
    report: BenchReport,
    truth_a: float,
    truth_b: float,
    tolerance: float = 0.20,
) -> PhaseClassification:
    """Did the run's estimates find phase A, B, both, or neither?

    Rates are compared in items/sec.  When the two truths are themselves
    within the tolerance of each other the answer cannot distinguish the
    phases and is flagged unreliable.
    """
    if truth_a <= 0 or truth_b <= 0:
        raise ValueError("truth rates must be positive")
    unreliable = abs(truth_a - truth_b) / max(truth_a, truth_b) <= tolerance
    found_a = any(
        abs(e.rate_items_per_sec - truth_a) / truth_a <= tolerance
        for e in report.estimates
    )
    found_b = any(
        abs(e.rate_items_per_sec - truth_b) / truth_b <= tolerance
        for e in report.estimates
    )
    if found_a and found_b:
        cat = "Both"
    elif found_a:
        cat = "A"
    elif found_b:
        cat = "B"
    else:
        cat = "Neither"
    return PhaseClassification(category=cat, unreliable=unreliable)
