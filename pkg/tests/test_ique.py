import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratescope.ique import IQueue


class TestBasics:
    def test_capacity_rounds_to_power_of_two(self):
        assert IQueue(10).capacity == 16
        assert IQueue(16).capacity == 16
        assert IQueue(1).capacity == 1

    def test_bad_capacity(self):
        with pytest.raises(ValueError):
            IQueue(0)

    def test_fifo_order(self):
        q = IQueue(8)
        for i in range(5):
            assert q.try_push(i)
        got = []
        while True:
            ok, item = q.try_pop()
            if not ok:
                break
            got.append(item)
        assert got == [0, 1, 2, 3, 4]

    def test_push_fails_when_full(self):
        q = IQueue(2)
        assert q.try_push("a") and q.try_push("b")
        assert not q.try_push("c")
        assert q.tail_blocked

    def test_pop_fails_when_empty(self):
        q = IQueue(2)
        ok, item = q.try_pop()
        assert not ok and item is None
        assert q.head_blocked

    def test_occupancy(self):
        q = IQueue(8)
        assert q.occupancy == 0
        q.try_push(1)
        q.try_push(2)
        assert q.occupancy == 2
        q.try_pop()
        assert q.occupancy == 1


class TestCounters:
    def test_counters_track_successes_only(self):
        q = IQueue(2)
        q.try_push(1)
        q.try_push(2)
        q.try_push(3)  # fails: full
        assert q.tail_counter == 2
        q.try_pop()
        assert q.head_counter == 1

    def test_harvest_resets_window_counts(self):
        q = IQueue(8)
        for i in range(5):
            q.try_push(i)
        snap = q.harvest("tail", period_index=0, realized_period_ns=1_000)
        assert snap.tc_tail == 5
        assert snap.tc_head == 0
        assert q.tail_counter == 0  # window restarts after harvest
        q.try_push(99)
        assert q.tail_counter == 1
        assert q.total_pushes == 6  # lifetime totals keep accumulating

    def test_harvest_clears_blocked_flag(self):
        q = IQueue(1)
        q.try_push(1)
        q.try_push(2)  # blocked
        snap = q.harvest("tail")
        assert snap.tail_blocked
        assert not q.harvest("tail").tail_blocked

    def test_harvest_sides_independent(self):
        q = IQueue(8)
        q.try_push(1)
        q.try_push(2)
        q.try_pop()
        tail = q.harvest("tail")
        head = q.harvest("head")
        assert tail.tc_tail == 2 and head.tc_head == 1
        assert not tail.head_blocked and not head.tail_blocked

    def test_harvest_bad_side(self):
        with pytest.raises(ValueError):
            IQueue(2).harvest("middle")

    def test_snapshot_metadata(self):
        q = IQueue(4)
        q.try_push(1)
        snap = q.harvest("tail", period_index=7, realized_period_ns=5_000)
        assert snap.period_index == 7
        assert snap.realized_period_ns == 5_000

    def test_snapshot_rejects_nonpositive_period(self):
        q = IQueue(4)
        with pytest.raises(ValueError):
            q.harvest("tail", realized_period_ns=0)


class TestConservation:
    @given(st.lists(st.sampled_from(["push", "pop", "harvest"]), max_size=300))
    @settings(max_examples=200)
    def test_pushes_equal_pops_plus_occupancy(self, ops):
        q = IQueue(4)
        next_item = 0
        popped = 0
        harvested_tail = 0
        harvested_head = 0
        for op in ops:
            if op == "push":
                if q.try_push(next_item):
                    next_item_pushed = True
                    next_item += 1
            elif op == "pop":
                ok, _ = q.try_pop()
                if ok:
                    popped += 1
            else:
                snap = q.harvest("tail")
                harvested_tail += snap.tc_tail
                harvested_head += q.harvest("head").tc_head
        harvested_tail += q.tail_counter
        harvested_head += q.head_counter
        assert q.total_pushes == q.total_pops + q.occupancy
        assert harvested_tail == q.total_pushes
        assert harvested_head == q.total_pops

    def test_threaded_transfer_no_losses(self):
        q = IQueue(64)
        n = 50_000
        out = []

        def produce():
            i = 0
            while i < n:
                if q.try_push(i):
                    i += 1

        def consume():
            while len(out) < n:
                ok, item = q.try_pop()
                if ok:
                    out.append(item)

        threads = [threading.Thread(target=produce), threading.Thread(target=consume)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert out == list(range(n))
        assert q.total_pushes == n and q.total_pops == n and q.occupancy == 0

    def test_concurrent_harvest_conserves_counts(self):
        # monitor harvests while producer/consumer run; harvested window
        # counts plus the residual window must equal the lifetime totals
        q = IQueue(32)
        n = 30_000
        done = threading.Event()
        tallies = {"tail": 0, "head": 0}

        def produce():
            i = 0
            while i < n:
                if q.try_push(i):
                    i += 1

        def consume():
            got = 0
            while got < n:
                ok, _ = q.try_pop()
                if ok:
                    got += 1
            done.set()

        def monitor():
            while not done.is_set():
                tallies["tail"] += q.harvest("tail").tc_tail
                tallies["head"] += q.harvest("head").tc_head

        threads = [
            threading.Thread(target=produce),
            threading.Thread(target=consume),
            threading.Thread(target=monitor),
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        tallies["tail"] += q.tail_counter
        tallies["head"] += q.head_counter
        assert tallies["tail"] == n
        assert tallies["head"] == n
