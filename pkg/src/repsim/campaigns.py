"""Seeded measurement campaigns over the full operator-to-verifier path.

Each run builds a fresh two-site system, drives it through the control
plane (namespace, app, tag, reconcile), runs the transactional workload,
forces a failover at a chosen event index, and audits the promoted backup.
The campaigns here back both the acceptance suite and the report CLI.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import workload_verify as wv
from .simnet import FaultInjection, MAIN
from .system import System, SystemConfig

NAMESPACE = "shop"
APP = "trader"
APP_ID = f"{NAMESPACE}/{APP}"
SALES_CLAIM = "sales"
STOCK_CLAIM = "stock"


@dataclass
class RunResult:
    seed: int
    event_cut: int
    committed: int
    incomplete: int
    torn: int
    prefix_ok: bool
    lost_entries: int
    recovered_applied_seq: int
    completed_tx: int

    def row(self) -> list:
        return [self.seed, self.event_cut, self.committed, self.incomplete,
                self.torn, self.prefix_ok, self.lost_entries,
                self.recovered_applied_seq, self.completed_tx]

    HEADER = ["seed", "event_cut", "committed", "incomplete", "torn",
              "prefix_ok", "lost_entries", "recovered_applied_seq", "completed_tx"]


def build_tagged_system(seed: int, tag_value: str = "ConsistentCopyToCloud",
                        rtt_ms: float = 100.0, think_time_ms: float = 1.0,
                        sales_blocks: int = 1024, stock_blocks: int = 1024,
                        block_size: int = 64,
                        link_latencies: dict[str, float] | None = None,
                        trace: bool = False) -> tuple[System, str]:
    """Provision namespace + app, tag it, and settle until the group is
    consistent. Returns (system, group_id). link_latencies maps claim name
    (sales/stock) to a one-way latency override for per_volume runs."""
    system = System(SystemConfig(seed=seed, rtt_ms=rtt_ms, block_size=block_size,
                                 think_time_ms=think_time_ms, trace=trace))
    cp = system.controlplane
    cp.create_namespace(NAMESPACE)
    cp.create_app(NAMESPACE, APP, [
        {"name": SALES_CLAIM, "blocks": sales_blocks},
        {"name": STOCK_CLAIM, "blocks": stock_blocks},
    ])
    cp.tag_namespace(NAMESPACE, "backup-policy", tag_value)
    system.run_until_idle()
    cr = cp.cr_for(NAMESPACE)
    assert cr is not None and cr.status == "bound", f"CR did not bind: {cr}"
    group_id = cr.observed_group_id
    if link_latencies:
        for claim, latency in link_latencies.items():
            volume_id = f"{NAMESPACE}-{APP}-{claim}"
            link = f"repl-{group_id}-{volume_id}"
            system.sim.inject(FaultInjection("delay_change", link,
                                             at_time=system.sim.now,
                                             params={"latency_ms": latency}))
        system.advance(0.0)
    return system, group_id


def probe_run_events(count: int, tag_value: str, rtt_ms: float = 100.0,
                     link_latencies: dict[str, float] | None = None) -> int:
    """Total events a clean run fires after the workload starts; used to
    spread failover cuts uniformly over whole runs."""
    system, _ = build_tagged_system(0, tag_value, rtt_ms=rtt_ms,
                                    link_latencies=link_latencies)
    system.start_workload(APP_ID, count, seed=1)
    return system.run_until_idle()


def failover_run(seed: int, count: int, event_cut: int, tag_value: str,
                 rtt_ms: float = 100.0,
                 link_latencies: dict[str, float] | None = None) -> RunResult:
    """One seeded run cut by a forced failover after event_cut events."""
    system, group_id = build_tagged_system(seed, tag_value, rtt_ms=rtt_ms,
                                           link_latencies=link_latencies)
    workload = system.start_workload(APP_ID, count, seed=seed * 7919 + 1)
    system.run_steps(event_cut)
    system.sim.failed_sites.add(MAIN)  # site dies at the cut; failover is forced
    result = system.engine.failover(group_id)
    report = wv.verify_backup(system.engine, system.store, group_id)
    return RunResult(
        seed=seed, event_cut=event_cut,
        committed=len(report.committed_txids),
        incomplete=len(report.incomplete_txids),
        torn=len(report.torn_txids),
        prefix_ok=report.prefix_ok,
        lost_entries=result["lost_entries"],
        recovered_applied_seq=result["recovered_applied_seq"],
        completed_tx=workload.completed_tx)


def run_failover_campaign(runs: int, count: int, tag_value: str,
                          rtt_ms: float = 100.0,
                          link_latencies: dict[str, float] | None = None,
                          base_seed: int = 0) -> list[RunResult]:
    total_events = probe_run_events(count, tag_value, rtt_ms=rtt_ms,
                                    link_latencies=link_latencies)
    results = []
    for i in range(runs):
        seed = base_seed + i
        cut = random.Random(seed).randint(1, total_events)
        results.append(failover_run(seed, count, cut, tag_value,
                                    rtt_ms=rtt_ms, link_latencies=link_latencies))
    return results


def measure_workload_latency(tag_value: str, rtt_ms: float, count: int = 200,
                             seed: int = 1) -> float:
    """Mean per-write ack latency of a full workload run."""
    system, _ = build_tagged_system(seed, tag_value, rtt_ms=rtt_ms)
    workload = system.start_workload(APP_ID, count, seed=seed)
    system.run_until_idle()
    return workload.summary()["mean_ack_latency"]


def sample_lag_timeline(count: int = 300, seed: int = 2, rtt_ms: float = 100.0,
                        sample_every_ms: float = 5.0) -> list[tuple[float, int]]:
    """(sim_time, lag_entries) samples across one grouped run; shows the
    asynchronous pipe filling and draining."""
    system, group_id = build_tagged_system(seed, "ConsistentCopyToCloud", rtt_ms=rtt_ms)
    system.start_workload(APP_ID, count, seed=seed)
    samples = []
    while system.sim._pending_work > 0:
        system.advance(sample_every_ms)
        status = system.engine.status(group_id)
        samples.append((system.sim.now, status["lag_entries"]))
    return samples
