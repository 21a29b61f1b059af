"""Instrumented bounded SPSC queue.

A ring buffer shared by exactly three threads: one producer (try_push),
one consumer (try_pop) and one monitor (harvest).  Each end keeps a
monotone count of successful non-blocking transactions and of blocked
attempts; the monitor harvests per-period deltas against baselines only
it touches, so producer and consumer are never slowed by sampling.

CPython note: every counter has a single writer and attribute load/store
is atomic under the GIL, which gives the same observable semantics as a
lock-free copy-and-zero exchange without the read-modify-write race a
literal zeroing would introduce.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Literal

Side = Literal["head", "tail"]


@dataclass(frozen=True)
class TransactionSnapshot:
    """Counts harvested from one queue end over one sampling period."""

    period_index: int
    tc_head: int
    tc_tail: int
    head_blocked: bool
    tail_blocked: bool
    realized_period_ns: int

    def __post_init__(self) -> None:
        if self.tc_head < 0 or self.tc_tail < 0:
            raise ValueError("transaction counts must be non-negative")
        if self.realized_period_ns <= 0:
            raise ValueError("realized period must be positive")


def _round_up_pow2(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return p


class IQueue:
    """Bounded single-producer/single-consumer queue with transaction counters.

    Capacity is rounded up to a power of two (the actual value is exposed
    as ``capacity``).  Item payloads are opaque; ``item_size`` records the
    nominal bytes per item used for rate conversion.
    """

    def __init__(self, capacity: int, item_size: int = 8):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if item_size < 1:
            raise ValueError("item_size must be >= 1")
        self.capacity = _round_up_pow2(capacity)
        self.item_size = item_size
        self._mask = self.capacity - 1
        self._buf: list[Any] = [None] * self.capacity
        # Monotone counters; writer noted per field.
        self._pushes = 0        # producer
        self._pops = 0          # consumer
        self._push_blocks = 0   # producer
        self._pop_blocks = 0    # consumer
        # Harvest baselines; monitor only.
        self._h_pushes = 0
        self._h_pops = 0
        self._h_push_blocks = 0
        self._h_pop_blocks = 0

    # -- producer side -----------------------------------------------------

    def try_push(self, item: Any) -> bool:
        """Enqueue without waiting; on a full queue record the blockage."""
        if self._pushes - self._pops >= self.capacity:
            self._push_blocks += 1
            return False
        self._buf[self._pushes & self._mask] = item
        self._pushes += 1
        return True

    # -- consumer side -----------------------------------------------------

    def try_pop(self) -> tuple[bool, Any]:
        """Dequeue without waiting; returns (ok, item)."""
        if self._pops == self._pushes:
            self._pop_blocks += 1
            return False, None
        idx = self._pops & self._mask
        item = self._buf[idx]
        self._buf[idx] = None
        self._pops += 1
        return True, item

    # -- shared observations -------------------------------------------------

    @property
    def occupancy(self) -> int:
        return self._pushes - self._pops

    @property
    def tail_counter(self) -> int:
        """Non-blocking writes since the last tail harvest."""
        return self._pushes - self._h_pushes

    @property
    def head_counter(self) -> int:
        """Non-blocking reads since the last head harvest."""
        return self._pops - self._h_pops

    @property
    def tail_blocked(self) -> bool:
        return self._push_blocks > self._h_push_blocks

    @property
    def head_blocked(self) -> bool:
        return self._pop_blocks > self._h_pop_blocks

    @property
    def total_pushes(self) -> int:
        return self._pushes

    @property
    def total_pops(self) -> int:
        return self._pops

    # -- monitor side --------------------------------------------------------

    def harvest(
        self,
        side: Side,
        period_index: int = 0,
        realized_period_ns: int = 1,
    ) -> TransactionSnapshot:
        """Copy-and-reset one end's counters for the period just ended.

        Only the monitor thread may call this.  An increment racing the
        harvest lands in one period or the next, never lost.
        """
        if side == "tail":
            count = self._pushes - self._h_pushes
            self._h_pushes += count
            blocks = self._push_blocks - self._h_push_blocks
            self._h_push_blocks += blocks
            return TransactionSnapshot(
                period_index=period_index,
                tc_head=0,
                tc_tail=count,
                head_blocked=False,
                tail_blocked=blocks > 0,
                realized_period_ns=realized_period_ns,
            )
        if side == "head":
            count = self._pops - self._h_pops
            self._h_pops += count
            blocks = self._pop_blocks - self._h_pop_blocks
            self._h_pop_blocks += blocks
            return TransactionSnapshot(
                period_index=period_index,
                tc_head=count,
                tc_tail=0,
                head_blocked=blocks > 0,
                tail_blocked=False,
                realized_period_ns=realized_period_ns,
            )
        raise ValueError(f"side must be 'head' or 'tail', got {side!r}")
