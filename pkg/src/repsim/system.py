"""Wires one complete two-site simulation: event loop, block store,
replication engine, storage plugin, control plane, and workloads."""

from __future__ import annotations

from dataclasses import dataclass

from .blockstore import BlockStore
from .controlplane import ControlPlane, StoragePlugin
from .errors import InvalidArgument, Unavailable
from .replication import GROUPED, ReplicationEngine
from .simnet import MAIN, Simulator
from .workload_verify import TransactionWorkload


@dataclass
class SystemConfig:
    seed: int = 0
    rtt_ms: float = 100.0  # inter-site round trip; one-way latency is half
    block_size: int = 4096
    journal_capacity: int = 4096
    default_mode: str = GROUPED
    think_time_ms: float = 1.0
    trace: bool = False


class System:
    def __init__(self, config: SystemConfig | None = None):
        self.config = config or SystemConfig()
        self.sim = Simulator(seed=self.config.seed, trace=self.config.trace)
        self.store = BlockStore()
        self.engine = ReplicationEngine(
            self.sim, self.store,
            inter_site_latency_ms=self.config.rtt_ms / 2.0,
            journal_capacity=self.config.journal_capacity)
        self.plugin = StoragePlugin(self.engine)
        self.controlplane = ControlPlane(
            self.sim, self.store, self.plugin,
            block_size=self.config.block_size,
            default_mode=self.config.default_mode)
        self.controlplane.attach()
        self.feed: list[str] = []
        self.workloads: dict[str, TransactionWorkload] = {}
        self._workload_counter = 0

    # -- write routing -------------------------------------------------------

    def issue_write(self, volume_id: str, block_index: int, data: bytes,
                    on_ack) -> None:
        """Route a write through the volume's consistency group when one
        exists; otherwise apply directly at the main site (pre-tag writes
        are picked up later by the baseline copy)."""
        group_id = self.engine.group_for_volume(volume_id)
        if group_id is not None:
            self.engine.group_write(group_id, volume_id, block_index, data, on_ack)
            return
        if not self.sim.site_ok(MAIN):
            raise Unavailable("main site failed")
        self.store.apply_write(MAIN, volume_id, block_index, data)
        if on_ack is not None:
            self.sim.schedule(0.0, lambda: on_ack(0, 0.0), label="ack")

    # -- workloads ----------------------------------------------------------

    def start_workload(self, app_id: str, count: int, seed: int,
                       think_time_ms: float | None = None) -> TransactionWorkload:
        volumes = self.controlplane.app_volumes(app_id)
        if len(volumes) != 2:
            raise InvalidArgument(
                f"app {app_id} needs exactly 2 bound volumes, has {len(volumes)}")
        sales, stock = volumes
        sales_vol = self.store.volume(MAIN, sales)
        stock_vol = self.store.volume(MAIN, stock)
        self._workload_counter += 1
        workload = TransactionWorkload(
            self.sim, self.issue_write,
            sales_volume=sales, stock_volume=stock,
            sales_capacity=sales_vol.block_count,
            stock_capacity=stock_vol.block_count,
            block_size=self.config.block_size,
            count=count, seed=seed,
            think_time_ms=self.config.think_time_ms if think_time_ms is None else think_time_ms,
            workload_id=f"w{self._workload_counter}",
            feed=self.feed)
        self.workloads[workload.workload_id] = workload
        workload.start()
        return workload

    # -- run helpers ----------------------------------------------------------

    def advance(self, ms: float) -> int:
        return self.sim.run_until(self.sim.now + ms)

    def run_until_idle(self, max_events: int = 5_000_000) -> int:
        """Drain all pending work; raises if the system will not settle
        (for example a permanently partitioned link keeps retransmitting)."""
        return self.sim.run_until_idle(max_events)

    def run_steps(self, n: int) -> int:
        return self.sim.run_steps(n)

    def write_trace(self, path: str) -> None:
        with open(path, "w") as f:
            for line in self.sim.trace_lines:
                f.write(line + "\n")
