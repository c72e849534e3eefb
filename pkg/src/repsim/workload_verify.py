"""Transactional workload and its crash-consistency auditor.

The workload writes fixed-layout transactions against a sales and a stock
volume: sales data at block i, stock data at block i, then a commit marker
on the sales volume at block capacity/2 + i, strictly one ack at a time.
That makes the ack order sales -> stock -> commit for every transaction,
so any backup state equal to a prefix of the ack order can never show a
commit without both data records.

The auditor scans raw blocks, classifies transactions as committed,
incomplete (data without commit: legal) or torn (commit without valid
data: unrecoverable), and checks the scanned state against an independent
journal-replay oracle.
"""

from __future__ import annotations

import random
import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable

from .blockstore import BlockStore
from .errors import InvalidArgument, Unavailable
from .replication import PER_VOLUME, JournalEntry, ReplicationEngine
from .simnet import BACKUP, Simulator

ROLE_SALES = 1
ROLE_STOCK = 2
ROLE_COMMIT = 3
ROLE_NAMES = {ROLE_SALES: "sales_data", ROLE_STOCK: "stock_data", ROLE_COMMIT: "commit"}

_RECORD = struct.Struct(">IIII")  # txid, role, amount, crc32 over the first 12 bytes


@dataclass(frozen=True)
class TransactionRecord:
    txid: int
    role: int
    amount: int


def encode_record(txid: int, role: int, amount: int, block_size: int) -> bytes:
    if txid < 1:
        raise InvalidArgument("txid must be >= 1")
    head = struct.pack(">III", txid, role, amount)
    record = head + struct.pack(">I", zlib.crc32(head))
    return record.ljust(block_size, b"\0")


def decode_block(block: bytes) -> tuple[str, TransactionRecord | None]:
    """Classify one block: ('empty', None), ('record', rec), or ('corrupt', None)."""
    if not any(block):
        return "empty", None
    txid, role, amount, checksum = _RECORD.unpack_from(block)
    head = block[:12]
    if txid >= 1 and role in ROLE_NAMES and zlib.crc32(head) == checksum \
            and not any(block[16:]):
        return "record", TransactionRecord(txid, role, amount)
    return "corrupt", None


# -- workload ----------------------------------------------------------------

Writer = Callable[[str, int, bytes, Callable[[int, float], None]], None]


class TransactionWorkload:
    """Event-driven transaction generator: issue, await ack, next write."""

    def __init__(self, sim: Simulator, writer: Writer,
                 sales_volume: str, stock_volume: str,
                 sales_capacity: int, stock_capacity: int, block_size: int,
                 count: int, seed: int, think_time_ms: float = 1.0,
                 workload_id: str = "w1",
                 feed: list[str] | None = None,
                 on_done: Callable[[dict], None] | None = None):
        if count < 0:
            raise InvalidArgument("count must be >= 0")
        if count > stock_capacity or count > sales_capacity // 2:
            raise InvalidArgument(
                f"count {count} exceeds capacity (sales {sales_capacity}, stock {stock_capacity})")
        self.sim = sim
        self.writer = writer
        self.sales_volume = sales_volume
        self.stock_volume = stock_volume
        self.commit_base = sales_capacity // 2
        self.block_size = block_size
        self.count = count
        self.think_time_ms = think_time_ms
        self.workload_id = workload_id
        self.rng = random.Random(seed)
        self.feed = feed if feed is not None else []
        self.on_done = on_done
        self.acked_count = 0
        self.latency_sum = 0.0
        self.completed_tx = 0
        self.issued_tx = 0
        self.stopped = False
        self.done = False
        self._txid = 0
        self._amount = 0

    def start(self) -> None:
        if self.count == 0:
            self._finish()
            return
        self.sim.schedule(0.0, self._begin_tx, label=f"tx:{self.workload_id}")

    def _begin_tx(self) -> None:
        if self.stopped:
            return
        self._txid += 1
        if self._txid > self.count:
            self._finish()
            return
        self.issued_tx += 1
        self._amount = self.rng.randint(1, 1000)
        self._issue(self.sales_volume, self._txid - 1, ROLE_SALES, self._amount)

    def _issue(self, volume_id: str, block_index: int, role: int, amount: int) -> None:
        data = encode_record(self._txid, role, amount, self.block_size)
        try:
            self.writer(volume_id, block_index, data,
                        lambda seq, latency, r=role: self._acked(r, latency))
        except Unavailable:
            self._stop()

    def _acked(self, role: int, latency: float) -> None:
        if self.stopped:
            return
        self.acked_count += 1
        self.latency_sum += latency
        self.feed.append(f"txid={self._txid} phase={ROLE_NAMES[role]} t={self.sim.now:g}")
        if role == ROLE_SALES:
            self._issue(self.stock_volume, self._txid - 1, ROLE_STOCK, 0)
        elif role == ROLE_STOCK:
            self._issue(self.sales_volume, self.commit_base + self._txid - 1, ROLE_COMMIT, 0)
        else:
            self.completed_tx += 1
            self.sim.schedule(self.think_time_ms, self._begin_tx,
                              label=f"tx:{self.workload_id}")

    def _stop(self) -> None:
        self.stopped = True
        self._finish()

    def _finish(self) -> None:
        if self.done:
            return
        self.done = True
        if self.on_done is not None:
            self.on_done(self.summary())

    def summary(self) -> dict:
        mean = self.latency_sum / self.acked_count if self.acked_count else 0.0
        return {
            "workload_id": self.workload_id,
            "acked_count": self.acked_count,
            "mean_ack_latency": mean,
            "completed_tx": self.completed_tx,
            "issued_tx": self.issued_tx,
            "stopped": self.stopped,
            "done": self.done,
        }


# -- replay oracle ----------------------------------------------------------------

def replay_oracle(entries: list[JournalEntry], up_to_seq: int,
                  baseline: dict[str, list[bytes]]) -> dict[str, list[bytes]]:
    """Brute-force reapplication of the recorded ack log over a baseline image.

    Deliberately independent of the engine's applier: it never looks at
    journals, links, or counters, only at the recorded entries.
    """
    if up_to_seq < 0 or up_to_seq > len(entries):
        raise InvalidArgument(f"no gapless dump through {up_to_seq} (have {len(entries)})")
    images = {vid: list(blocks) for vid, blocks in baseline.items()}
    for entry in entries[:up_to_seq]:
        images[entry.volume_id][entry.block_index] = entry.payload
    return images


# -- verification ----------------------------------------------------------------

@dataclass
class VerificationReport:
    checked_site_or_snapshot: str
    committed_txids: set[int] = field(default_factory=set)
    incomplete_txids: set[int] = field(default_factory=set)
    torn_txids: set[int] = field(default_factory=set)
    prefix_ok: bool = True
    max_recovered_txid: int = 0

    def to_record(self) -> dict:
        return {
            "checked_site_or_snapshot": self.checked_site_or_snapshot,
            "committed_txids": sorted(self.committed_txids),
            "incomplete_txids": sorted(self.incomplete_txids),
            "torn_txids": sorted(self.torn_txids),
            "prefix_ok": self.prefix_ok,
            "max_recovered_txid": self.max_recovered_txid,
        }


def classify_images(images: dict[str, list[bytes]]) -> VerificationReport:
    """Scan raw blocks and classify every transaction id found."""
    present: dict[int, set[int]] = {}
    for blocks in images.values():
        for block in blocks:
            kind, rec = decode_block(block)
            if kind == "record":
                present.setdefault(rec.txid, set()).add(rec.role)
    report = VerificationReport(checked_site_or_snapshot="")
    for txid, roles in present.items():
        if ROLE_COMMIT in roles:
            if ROLE_SALES in roles and ROLE_STOCK in roles:
                report.committed_txids.add(txid)
            else:
                report.torn_txids.add(txid)
        else:
            report.incomplete_txids.add(txid)
    if report.committed_txids:
        report.max_recovered_txid = max(report.committed_txids)
    return report


def _group_baseline(engine: ReplicationEngine, group_id: str) -> dict[str, list[bytes]]:
    g = engine.group(group_id)
    return {vid: list(blocks) for vid, blocks in g.baseline_images.items()}


def _prefix_check(engine: ReplicationEngine, group_id: str,
                  target_images: dict[str, list[bytes]]) -> bool:
    """Does the target equal some single cut of the group's global ack order?

    Grouped/synchronous streams apply one shared sequence, so the cut is the
    stream's applied position. per_volume streams each apply their own
    prefix; the combined state matches a global cut only when one prefix of
    the ack log contains exactly the applied count of every member.
    """
    g = engine.group(group_id)
    applied_total = sum(s.backup_applied for s in g.streams.values())
    if g.mode == PER_VOLUME:
        want = {vid: g.streams[vid].backup_applied for vid in g.member_volume_ids}
        got: dict[str, int] = {vid: 0 for vid in g.member_volume_ids}
        for entry in g.ack_log[:applied_total]:
            got[entry.volume_id] += 1
        if got != want:
            return False
    oracle = replay_oracle(g.ack_log, applied_total, _group_baseline(engine, group_id))
    return all(oracle[vid] == target_images[vid] for vid in g.member_volume_ids)


def verify_backup(engine: ReplicationEngine, store: BlockStore,
                  group_id: str) -> VerificationReport:
    """Recovery scan of the backup member volumes of one group."""
    g = engine.group(group_id)
    images = {vid: list(store.volume(BACKUP, vid).blocks) for vid in g.member_volume_ids}
    report = classify_images(images)
    report.checked_site_or_snapshot = f"backup:{group_id}"
    report.prefix_ok = _prefix_check(engine, group_id, images)
    return report


def verify_snapshot_group(engine: ReplicationEngine, store: BlockStore,
                          snapshot_group_id: str) -> VerificationReport:
    sg = engine.snapshot_group(snapshot_group_id)
    g = engine.group(sg.group_id)
    images = {vid: store.snapshot_blocks(sid)
              for vid, sid in sg.member_snapshot_ids.items()}
    report = classify_images(images)
    report.checked_site_or_snapshot = f"snapshot:{snapshot_group_id}"
    oracle = replay_oracle(g.ack_log, sg.at_seq, _group_baseline(engine, sg.group_id))
    report.prefix_ok = all(oracle[vid] == images[vid] for vid in g.member_volume_ids)
    return report


def analytics_report(engine: ReplicationEngine, store: BlockStore,
                     snapshot_group_id: str) -> dict:
    """Aggregate committed sales visible in a snapshot group."""
    sg = engine.snapshot_group(snapshot_group_id)
    images = {vid: store.snapshot_blocks(sid)
              for vid, sid in sg.member_snapshot_ids.items()}
    agg = aggregate_sales(images)
    agg["snapshot_group_id"] = snapshot_group_id
    agg["at_seq"] = sg.at_seq
    return agg


def oracle_analytics(engine: ReplicationEngine, group_id: str, at_seq: int) -> dict:
    """Main-site aggregate over the journal prefix: the analytics oracle."""
    g = engine.group(group_id)
    images = replay_oracle(g.ack_log, at_seq, _group_baseline(engine, group_id))
    return aggregate_sales(images)


def aggregate_sales(images: dict[str, list[bytes]]) -> dict:
    committed = classify_images(images).committed_txids
    total = 0
    for blocks in images.values():
        for block in blocks:
            kind, rec = decode_block(block)
            if kind == "record" and rec.role == ROLE_SALES and rec.txid in committed:
                total += rec.amount
    return {"committed_count": len(committed), "total_sales_amount": total}
