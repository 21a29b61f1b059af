"""Per-queue rate monitor.

Every sampling period the monitor harvests one queue end, keeps the count
only if the period was clean (no blockage, realized length within the
period guard), and slides it into the sample window.  Once the window is
full each new period produces a quantile estimate q of the well-behaved
maximum count; successive q values feed a running mean q-bar whose
dispersion signal, run through a Laplacian-of-Gaussian filter, flags
convergence.  A converged q-bar is emitted as a rate estimate and the
statistics restart so phase changes are tracked.

The arithmetic lives in ``RatePipeline`` which is a pure function of the
snapshot sequence: live monitoring, benchmarks and trace replay all share
it, so recorded runs replay bit-identically.
"""
from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field, asdict
from typing import Callable, Iterable, Literal

from .ique import IQueue, Side, TransactionSnapshot
from .streamstat import (
    OnlineMoments,
    SampleWindow,
    convolve_valid,
    gaussian_kernel,
    log_kernel,
    quantile95,
)
from .timebase import Clock, PeriodCalibration, SystemClock, CalibrationError


@dataclass
class MonitorConfig:
    """Tunables for one monitor instance.

    ``period_ns`` overrides the calibrated period when set.  The
    convergence tolerance applies to the LoG-filtered, mean-normalized
    standard error of q-bar and is therefore dimensionless.
    """

    period_ns: int | None = None
    window: int = 64
    gaussian_radius: int = 2
    normalize_gaussian: bool = True
    log_sigma: float = 0.5
    log_radius: int = 1
    convergence_window: int = 16
    tolerance: float = 5e-7
    epsilon: float = 0.05
    min_nonblocked_fraction: float = 0.01
    status_horizon: int = 256
    item_size: int = 8

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "MonitorConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class RateEstimate:
    """A converged service-rate estimate for one execution phase."""

    q_bar: float
    d: int
    T_ns: int
    rate_items_per_sec: float
    rate_bytes_per_sec: float
    n_q: int
    wall_clock_at_convergence_ns: int
    phase_index: int
    period_index: int

    def to_json_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class QObservation:
    period_index: int
    q: float
    q_bar: float
    n_q: int


@dataclass(frozen=True)
class StatusEvent:
    """Emitted instead of an estimate when the rate is unobservable."""

    period_index: int
    status: str
    nonblocked_fraction: float
    horizon: int


MonitorEvent = RateEstimate | QObservation | StatusEvent


class ConvergenceTracker:
    """Detects flattening of q-bar's error via a LoG-filtered signal.

    The dispersion signal is the standard error of the q mean, normalized
    by the running mean of q (coefficient-of-variation form) so the
    tolerance is scale-free.  Convergence requires a full window of
    LoG-filtered values whose min and max are both within tolerance of
    zero.
    """

    def __init__(
        self,
        tolerance: float = 5e-7,
        window: int = 16,
        log_sigma: float = 0.5,
        log_radius: int = 1,
    ):
        self.tolerance = tolerance
        self.window = window
        self._kernel = log_kernel(log_sigma, log_radius)
        self.q_moments = OnlineMoments()
        self.dispersion_series: deque[float] = deque(maxlen=2 * log_radius + 1)
        self.log_filtered: deque[float] = deque(maxlen=window)
        self.phase_index = 0
        self._converged = False

    @property
    def n_q(self) -> int:
        return self.q_moments.n

    @property
    def q_bar(self) -> float:
        return self.q_moments.mean

    def observe(self, new_q: float) -> bool:
        """Fold in one q value; return True when q-bar has converged."""
        self.q_moments.update(new_q)
        n = self.q_moments.n
        if n >= 2:
            mean = self.q_moments.mean
            scale = abs(mean) if mean != 0.0 else 1.0
            stderr = self.q_moments.stddev / (scale * (n**0.5))
            self.dispersion_series.append(stderr)
            if len(self.dispersion_series) == self.dispersion_series.maxlen:
                vals = list(self.dispersion_series)
                acc = 0.0
                for v, w in zip(vals, self._kernel.weights):
                    acc += v * w
                self.log_filtered.append(acc)
        self._converged = (
            len(self.log_filtered) == self.window
            and max(abs(v) for v in self.log_filtered) < self.tolerance
        )
        return self._converged

    @property
    def converged(self) -> bool:
        return self._converged

    def reset(self) -> None:
        """Restart after convergence; advances the phase index."""
        if not self._converged:
            raise RuntimeError("reset requested before convergence")
        self.q_moments.reset()
        self.dispersion_series.clear()
        self.log_filtered.clear()
        self.phase_index += 1
        self._converged = False


def check_convergence(tracker: ConvergenceTracker, new_q: float) -> bool:
    return tracker.observe(new_q)


def reset_after_convergence(tracker: ConvergenceTracker) -> ConvergenceTracker:
    tracker.reset()
    return tracker


class RatePipeline:
    """Deterministic snapshot-to-estimate transform (one monitored side)."""

    def __init__(self, cfg: MonitorConfig, side: Side = "head"):
        if cfg.period_ns is None:
            raise ValueError("pipeline requires a resolved sampling period")
        self.cfg = cfg
        self.side = side
        self.window = SampleWindow(cfg.window)
        self.gauss = gaussian_kernel(cfg.gaussian_radius, cfg.normalize_gaussian)
        self.tracker = ConvergenceTracker(
            tolerance=cfg.tolerance,
            window=cfg.convergence_window,
            log_sigma=cfg.log_sigma,
            log_radius=cfg.log_radius,
        )
        self._horizon_seen = 0
        self._horizon_clean = 0
        self.periods_seen = 0
        self.periods_accepted = 0

    def _blocked(self, snap: TransactionSnapshot) -> bool:
        return snap.head_blocked if self.side == "head" else snap.tail_blocked

    def _count(self, snap: TransactionSnapshot) -> int:
        return snap.tc_head if self.side == "head" else snap.tc_tail

    @property
    def nonblocked_fraction(self) -> float:
        if self.periods_seen == 0:
            return 0.0
        return self.periods_accepted / self.periods_seen

    def process(
        self, snap: TransactionSnapshot, timestamp_ns: int = 0
    ) -> list[MonitorEvent]:
        """Fold one harvested snapshot; return any events it produced."""
        cfg = self.cfg
        events: list[MonitorEvent] = []
        self.periods_seen += 1
        self._horizon_seen += 1
        T = cfg.period_ns
        period_ok = (
            not self._blocked(snap)
            and abs(snap.realized_period_ns - T) <= cfg.epsilon * T
        )
        if period_ok:
            self.periods_accepted += 1
            self._horizon_clean += 1
            self.window.push(float(self._count(snap)))
            if self.window.full:
                filtered = self.window.filtered(self.gauss)
                moments = OnlineMoments()
                moments.update_many(filtered)
                q = quantile95(moments)
                converged = self.tracker.observe(q)
                events.append(
                    QObservation(
                        period_index=snap.period_index,
                        q=q,
                        q_bar=self.tracker.q_bar,
                        n_q=self.tracker.n_q,
                    )
                )
                if converged:
                    events.append(self._make_estimate(snap, timestamp_ns))
                    self.tracker.reset()
        if self._horizon_seen >= cfg.status_horizon:
            frac = self._horizon_clean / self._horizon_seen
            if frac < cfg.min_nonblocked_fraction:
                events.append(
                    StatusEvent(
                        period_index=snap.period_index,
                        status="rate undeterminable",
                        nonblocked_fraction=frac,
                        horizon=self._horizon_seen,
                    )
                )
            self._horizon_seen = 0
            self._horizon_clean = 0
        return events

    def _make_estimate(
        self, snap: TransactionSnapshot, timestamp_ns: int
    ) -> RateEstimate:
        T = self.cfg.period_ns
        q_bar = self.tracker.q_bar
        t_sec = T / 1e9
        return RateEstimate(
            q_bar=q_bar,
            d=self.cfg.item_size,
            T_ns=T,
            rate_items_per_sec=q_bar / t_sec,
            rate_bytes_per_sec=q_bar * self.cfg.item_size / t_sec,
            n_q=self.tracker.n_q,
            wall_clock_at_convergence_ns=timestamp_ns,
            phase_index=self.tracker.phase_index,
            period_index=snap.period_index,
        )

    def process_all(
        self, snaps: Iterable[TransactionSnapshot]
    ) -> list[MonitorEvent]:
        out: list[MonitorEvent] = []
        for s in snaps:
            out.extend(self.process(s))
        return out


class Monitor:
    """Thread that drives a RatePipeline off a live queue.

    Harvests on an absolute deadline schedule so realized periods average
    the nominal T; a period more than one T late resynchronizes rather
    than bursting to catch up.
    """

    def __init__(
        self,
        queue: IQueue,
        side: Side,
        cal: PeriodCalibration | None,
        cfg: MonitorConfig,
        sink: Callable[[MonitorEvent], None],
        clock: Clock | None = None,
    ):
        period = cfg.period_ns if cfg.period_ns is not None else (
            cal.T_ns if cal is not None else None
        )
        if cal is not None and not cal.stable and cfg.period_ns is None:
            raise CalibrationError(
                "calibration is unstable; refusing to start monitor"
            )
        if period is None or period <= 0:
            raise ValueError("no usable sampling period configured")
        resolved = MonitorConfig(**{**cfg.to_json_dict(), "period_ns": period})
        resolved.item_size = queue.item_size
        self.cfg = resolved
        self.pipeline = RatePipeline(resolved, side)
        self.queue = queue
        self.side: Side = side
        self.sink = sink
        self.clock = clock or SystemClock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.snapshots: list[TransactionSnapshot] = []
        self.record_snapshots = False

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    def _run(self) -> None:
        T = self.cfg.period_ns
        clock = self.clock
        deadline = clock.now_ns()
        prev = deadline
        period_index = 0
        while not self._stop.is_set():
            deadline += T
            remaining = deadline - clock.now_ns()
            if remaining > 0:
                time.sleep(remaining / 1e9)
            now = clock.now_ns()
            if now > deadline + T:
                deadline = now  # lost the schedule; resynchronize
            snap = self.queue.harvest(
                self.side, period_index, max(1, now - prev)
            )
            prev = now
            if self.record_snapshots:
                self.snapshots.append(snap)
            for ev in self.pipeline.process(snap, timestamp_ns=now):
                self.sink(ev)
            period_index += 1


def run_monitor(
    queue: IQueue,
    side: Side,
    cal: PeriodCalibration | None,
    cfg: MonitorConfig,
    sink: Callable[[MonitorEvent], None],
    stop_event: threading.Event | None = None,
    clock: Clock | None = None,
) -> Monitor:
    """Start a monitor thread; returns the handle (caller stops/joins)."""
    m = Monitor(queue, side, cal, cfg, sink, clock)
    if stop_event is not None:
        m._stop = stop_event
    m.start()
    return m
