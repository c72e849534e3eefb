import pytest

from repsim.errors import InvalidArgument, NotFound
from repsim.simnet import FaultInjection, LinkConfig, Simulator


class TestScheduling:
    def test_same_time_fires_in_schedule_order(self):
        sim = Simulator()
        fired = []
        sim.schedule(0, lambda: fired.append("a"))
        sim.schedule(0, lambda: fired.append("b"))
        sim.run_until_idle()
        assert fired == ["a", "b"]

    def test_earlier_delay_fires_first(self):
        sim = Simulator()
        fired = []
        sim.schedule(5, lambda: fired.append("late"))
        sim.schedule(3, lambda: fired.append("early"))
        sim.run_until_idle()
        assert fired == ["early", "late"]

    def test_negative_delay_rejected(self):
        sim = Simulator()
        with pytest.raises(InvalidArgument):
            sim.schedule(-1, lambda: None)

    def test_run_until_stops_exactly_at_time(self):
        sim = Simulator()
        fired = []
        sim.schedule(10, lambda: fired.append(10))
        sim.schedule(20, lambda: fired.append(20))
        assert sim.run_until(15) == 1
        assert sim.now == 15
        assert fired == [10]

    def test_empty_queue_runs_zero_events(self):
        sim = Simulator()
        assert sim.run_until_idle() == 0

    def test_clock_never_goes_backward(self):
        sim = Simulator()
        times = []
        for delay in (7, 3, 3, 9, 0):
            sim.schedule(delay, lambda: times.append(sim.now))
        sim.run_until_idle()
        assert times == sorted(times)

    def test_daemon_events_do_not_block_idle(self):
        sim = Simulator()

        def tick():
            sim.schedule(100, tick, daemon=True)

        sim.schedule(100, tick, daemon=True)
        sim.schedule(5, lambda: None)
        sim.run_until_idle()
        assert sim.now == 5  # the daemon tick at t=100 never needed to fire


class TestLinks:
    def test_fixed_latency_delivery(self):
        sim = Simulator()
        sim.add_link(LinkConfig("l", latency_ms=50))
        got = []
        sim.send("l", lambda: got.append(sim.now))
        sim.run_until_idle()
        assert got == [50.0]

    def test_fifo_order_with_jitter(self):
        # Jitter may delay the head of the queue but never reorders.
        sim = Simulator(seed=3)
        sim.add_link(LinkConfig("l", latency_ms=5, jitter_ms=20))
        got = []
        for n in range(30):
            sim.send("l", lambda n=n: got.append(n))
        sim.run_until_idle()
        assert got == list(range(30))

    def test_partition_holds_then_heals_in_order(self):
        sim = Simulator()
        sim.add_link(LinkConfig("p", latency_ms=1, partitioned=True))
        got = []
        for n in range(5):
            sim.send("p", lambda n=n: got.append(n))
        sim.run_until(100)
        assert got == []
        sim.inject(FaultInjection("partition", "p", at_time=100,
                                  params={"partitioned": False}))
        sim.run_until_idle()
        assert got == [0, 1, 2, 3, 4]

    def test_drop_pattern_is_seed_reproducible(self):
        def run(seed):
            sim = Simulator(seed=seed)
            sim.add_link(LinkConfig("d", latency_ms=1, drop_probability=0.5))
            outcomes = [sim.send("d", lambda: None) for _ in range(40)]
            return outcomes

        assert run(9) == run(9)
        assert run(9) != run(10)

    def test_unknown_link(self):
        sim = Simulator()
        with pytest.raises(NotFound):
            sim.send("ghost", lambda: None)

    def test_bad_link_config(self):
        sim = Simulator()
        with pytest.raises(InvalidArgument):
            sim.add_link(LinkConfig("bad", drop_probability=1.0))


class TestFaults:
    def test_site_failure_marks_site(self):
        sim = Simulator()
        sim.inject(FaultInjection("site_failure", "main", at_time=10))
        sim.run_until(9)
        assert sim.site_ok("main")
        sim.run_until(10)
        assert not sim.site_ok("main")

    def test_delay_change_applies_at_time(self):
        sim = Simulator()
        sim.add_link(LinkConfig("l", latency_ms=1))
        got = []
        sim.send("l", lambda: got.append(sim.now))
        sim.inject(FaultInjection("delay_change", "l", at_time=10,
                                  params={"latency_ms": 50}))
        sim.run_until(20)
        sim.send("l", lambda: got.append(sim.now))
        sim.run_until_idle()
        assert got == [1.0, 70.0]

    def test_unknown_fault_target(self):
        sim = Simulator()
        with pytest.raises(NotFound):
            sim.inject(FaultInjection("site_failure", "moon", at_time=0))
        with pytest.raises(NotFound):
            sim.inject(FaultInjection("partition", "nolink", at_time=0))

    def test_past_fault_rejected(self):
        sim = Simulator()
        sim.run_until(100)
        with pytest.raises(InvalidArgument):
            sim.inject(FaultInjection("site_failure", "main", at_time=50))


class TestDeterminism:
    def _trace(self, seed: int) -> list[str]:
        sim = Simulator(seed=seed, trace=True)
        sim.add_link(LinkConfig("l", latency_ms=3, jitter_ms=4, drop_probability=0.2))
        for n in range(25):
            sim.schedule(n, lambda n=n: sim.send("l", lambda: None, label=f"m{n}"))
        sim.run_until_idle()
        return sim.trace_lines

    def test_same_seed_same_trace(self):
        assert self._trace(5) == self._trace(5)

    def test_different_seed_different_trace(self):
        assert self._trace(5) != self._trace(6)

    def test_trace_line_format(self):
        lines = self._trace(5)
        assert lines, "expected trace output"
        for line in lines:
            assert line.startswith("t=")
            assert " ev=" in line and " detail=" in line
