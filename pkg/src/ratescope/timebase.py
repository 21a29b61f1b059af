"""Monotonic time reference, its measured resolution, and sampling-period
calibration.

The clock is injectable so tests can drive everything from a deterministic
virtual clock; production uses the platform's highest-resolution monotonic
counter (``time.perf_counter_ns``).

Calibration searches for the widest sampling period a monitor can realize
reliably: starting at the clock's resolution floor and walking a geometric
schedule of multiples, a period qualifies when recent probe periods saw no
queue blockage and were realized within a relative tolerance.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol


class CalibrationError(RuntimeError):
    """Fatal problem with the time reference or calibration preconditions."""


class Clock(Protocol):
    def now_ns(self) -> int: ...


class SystemClock:
    """Platform monotonic high-resolution counter."""

    def now_ns(self) -> int:
        return time.perf_counter_ns()


class VirtualClock:
    """Deterministic clock advancing a fixed step per read.

    ``advance`` moves time explicitly; each ``now_ns`` read also advances
    by ``step_ns`` to model read latency.
    """

    def __init__(self, step_ns: int = 50, start_ns: int = 0):
        self.step_ns = int(step_ns)
        self._now = int(start_ns)

    def now_ns(self) -> int:
        self._now += self.step_ns
        return self._now

    def advance(self, delta_ns: int) -> None:
        self._now += int(delta_ns)


@dataclass(frozen=True)
class TimeRef:
    """Measured characteristics of the time reference."""

    resolution_min_ns: int
    resolution_mean_ns: float
    resolution_p95_ns: int
    monotonic_origin_ns: int

    @property
    def floor_ns(self) -> int:
        return self.resolution_min_ns


def measure_resolution(samples: int, clock: Clock | None = None) -> TimeRef:
    """Measure back-to-back read latency of the time reference.

    Returns min/mean/p95 over ``samples`` consecutive read pairs.  A
    backwards step is fatal: the reference is unusable for monitoring.
    """
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")
    clock = clock or SystemClock()
    origin = clock.now_ns()
    diffs = []
    prev = clock.now_ns()
    for _ in range(samples):
        cur = clock.now_ns()
        d = cur - prev
        if d < 0:
            raise CalibrationError("non-monotonic time reference reads")
        diffs.append(d)
        prev = cur
    diffs.sort()
    positive = [d for d in diffs if d > 0]
    if not positive:
        raise CalibrationError("time reference never advanced between reads")
    # Zero diffs mean reads outpaced clock granularity; the floor is the
    # smallest observed advance.
    return TimeRef(
        resolution_min_ns=positive[0],
        resolution_mean_ns=sum(diffs) / len(diffs),
        resolution_p95_ns=diffs[min(len(diffs) - 1, int(len(diffs) * 0.95))],
        monotonic_origin_ns=origin,
    )


class BlockageProbe(Protocol):
    """Runs one candidate sampling period and reports how it went."""

    def run_period(self, requested_ns: int) -> tuple[int, bool]:
        """Return (realized_ns, blocked) for one period of requested length."""
        ...


class SleepProbe:
    """Host probe: waits out each requested period against the real clock.

    Sleeps the bulk of the period and reports the realized length.  Never
    observes blockage (there is no queue during standalone calibration).
    """

    def __init__(self, clock: Clock | None = None):
        self._clock = clock or SystemClock()

    def run_period(self, requested_ns: int) -> tuple[int, bool]:
        # Sleep through coarse slack, spin out the rest: sleep wakeups on a
        # loaded host overshoot far more than the spin loop's read latency.
        margin = 250_000
        start = self._clock.now_ns()
        deadline = start + requested_ns
        now = start
        while deadline - now > margin:
            time.sleep((deadline - now - margin) / 1e9)
            now = self._clock.now_ns()
        while now < deadline:
            now = self._clock.now_ns()
        return now - start, False


class ScriptedProbe:
    """Test probe replaying a fixed script of (realized_factor, blocked).

    ``realized_factor`` multiplies the requested period; the script cycles.
    """

    def __init__(self, script: list[tuple[float, bool]]):
        if not script:
            raise ValueError("script must be non-empty")
        self._script = script
        self._i = 0

    def run_period(self, requested_ns: int) -> tuple[int, bool]:
        factor, blocked = self._script[self._i % len(self._script)]
        self._i += 1
        return max(1, int(round(requested_ns * factor))), blocked


@dataclass
class PeriodCalibration:
    """Outcome of the sampling-period search."""

    T_ns: int
    multiple: int
    stable: bool
    floor_ns: int
    history: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "floor_ns": self.floor_ns,
            "chosen_T_ns": self.T_ns,
            "multiple": self.multiple,
            "stable": self.stable,
            "history": self.history,
        }


def calibrate_period(
    tr: TimeRef,
    probe: BlockageProbe,
    k: int = 16,
    j: int = 16,
    epsilon: float = 0.05,
    ceiling_ns: int = 100_000_000,
) -> PeriodCalibration:
    """Find the widest sampling period the probe can realize reliably.

    Candidate periods are floor * {1, 2, 4, ...} up to ``ceiling_ns``.  A
    candidate T qualifies when, over max(k, j) probe periods, the last k
    saw no blockage and the last j were realized within epsilon * T.  The
    widest qualifying candidate is returned; if none qualifies the result
    is marked unstable and must not be used to start a monitor.

    The low end of the schedule may sit below what the platform can
    realize at all; failures there do not abort the search.
    """
    if k < 1 or j < 1:
        raise ValueError("k and j must be >= 1")
    if not (0 <= epsilon < 1):
        raise ValueError("epsilon must be in [0, 1)")
    floor = max(1, tr.floor_ns)
    history: list[dict] = []
    best_t = 0
    best_multiple = 0
    multiple = 1
    periods_per_candidate = max(k, j)
    while True:
        t_ns = floor * multiple
        if t_ns > ceiling_ns:
            break
        results = []
        for _ in range(periods_per_candidate):
            realized, blocked = probe.run_period(t_ns)
            results.append((realized, blocked))
            history.append(
                {"requested_ns": t_ns, "realized_ns": realized, "blocked": blocked}
            )
        no_blockage = all(not b for _, b in results[-k:])
        tol = epsilon * t_ns
        period_stable = all(abs(r - t_ns) <= tol for r, _ in results[-j:])
        if no_blockage and period_stable:
            best_t = t_ns
            best_multiple = multiple
        multiple *= 2
    if best_t == 0:
        return PeriodCalibration(
            T_ns=0, multiple=0, stable=False, floor_ns=floor, history=history
        )
    return PeriodCalibration(
        T_ns=best_t,
        multiple=best_multiple,
        stable=True,
        floor_ns=floor,
        history=history,
    )
