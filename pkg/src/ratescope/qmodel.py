"""Analytic M/M/1 observation-probability model.

Predicts how likely a monitor is to observe a fully non-blocking read or
write during one sampling period, for a Poisson server with a single
in-bound and out-bound queue.  Used for experiment design and to explain
failures at low utilization; the estimation heuristic itself never
consumes these numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

# Forgive float dust in products like 1000 * 0.001 before taking ceilings.
_CEIL_REL_TOL = 1e-9


def _ceil_tol(x: float) -> int:
    nearest = round(x)
    if abs(x - nearest) <= _CEIL_REL_TOL * max(1.0, abs(x)):
        return int(nearest)
    return math.ceil(x)


@dataclass(frozen=True)
class ObservationScenario:
    """One (service rate, utilization, capacity, period) combination.

    rho = 1 is admitted as a boundary value for plotting.
    """

    mu_s: float       # mean service rate, items/sec
    rho: float        # server utilization, (0, 1]
    C: int            # output queue capacity, items
    T: float          # sampling period, seconds

    def __post_init__(self) -> None:
        if self.mu_s <= 0:
            raise ValueError("mu_s must be > 0")
        if not (0 < self.rho <= 1):
            raise ValueError("rho must be in (0, 1]")
        if self.C < 1:
            raise ValueError("C must be >= 1")
        if self.T <= 0:
            raise ValueError("T must be > 0")


def items_needed(scn: ObservationScenario) -> int:
    """Items the server consumes (or produces) during one period T."""
    return _ceil_tol(scn.mu_s * scn.T)


def pr_nonblocking_read(scn: ObservationScenario) -> float:
    """P(in-bound queue holds at least the k items needed during T)."""
    return scn.rho ** items_needed(scn)


def pr_nonblocking_write(scn: ObservationScenario) -> float:
    """P(out-bound queue has room for the whole period's output).

    Zero when the queue cannot even hold one period's worth of items.
    """
    demand = scn.mu_s * scn.T
    if scn.C + _CEIL_REL_TOL * max(1.0, demand) < demand:
        return 0.0
    k = items_needed(scn)
    return 1.0 - scn.rho ** (scn.C - k + 1)


def sweep(
    mu_s_values: list[float],
    rho_values: list[float],
    c_values: list[int],
    t_values: list[float],
) -> list[dict]:
    """Cartesian probability table, one row per combination."""
    rows = []
    for mu in mu_s_values:
        for rho in rho_values:
            for c in c_values:
                for t in t_values:
                    scn = ObservationScenario(mu_s=mu, rho=rho, C=c, T=t)
                    rows.append(
                        {
                            "mu_s": mu,
                            "T": t,
                            "rho": rho,
                            "C": c,
                            "k": items_needed(scn),
                            "pr_read": pr_nonblocking_read(scn),
                            "pr_write": pr_nonblocking_write(scn),
                        }
                    )
    return rows
