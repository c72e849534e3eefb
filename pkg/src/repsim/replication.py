"""Journal-volume replication engine.

Writes at the main site are sequenced into a per-group journal and
acknowledged locally (asynchronous modes) or after the backup applies
(synchronous mode). Entries ship over simnet links to the backup journal
and are applied strictly in sequence with no gaps, so the backup state is
always a prefix of the main site's ack order. Groups start with a fuzzy
baseline copy: every written block streams once while concurrent writes
keep flowing through the journal, and the group becomes consistent when
the applier passes the barrier sequence recorded at stream completion.

Message-loss handling is go-back-N: the sender re-ships everything past
the last cumulative acknowledgement whenever progress stalls for one
retransmit interval. Re-sent baseline blocks re-read the live volume, so
any payload handed to a link reflects all writes acknowledged before the
send instant; combined with FIFO links this keeps stale content from ever
overwriting newer applied state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .blockstore import BlockStore, blocks_digest
from .errors import (AlreadyExists, Conflict, FailedPrecondition, InvalidArgument,
                     NotFound, Unavailable, Unsupported)
from .simnet import BACKUP, MAIN, LinkConfig, Simulator

GROUPED = "grouped"
PER_VOLUME = "per_volume"
SYNCHRONOUS = "synchronous"
MODES = (GROUPED, PER_VOLUME, SYNCHRONOUS)

BASELINE_COPY = "baseline_copy"
CATCHING_UP = "catching_up"
CONSISTENT = "consistent"
FAILED_OVER = "failed_over"
_PHASE_RANK = {BASELINE_COPY: 0, CATCHING_UP: 1, CONSISTENT: 2}

AckCallback = Callable[[int, float], None]  # (group_seq, ack_latency_ms)


@dataclass
class JournalEntry:
    group_seq: int
    volume_id: str
    block_index: int
    payload: bytes
    logical_time: float


class Journal:
    """Sequenced entry window; retains only what has not been trimmed."""

    def __init__(self, site: str, group_id: str, capacity: int):
        self.site = site
        self.group_id = group_id
        self.capacity = capacity
        self.by_seq: dict[int, JournalEntry] = {}
        self.trimmed_below = 1  # lowest retained group_seq

    def __len__(self) -> int:
        return len(self.by_seq)

    def add(self, entry: JournalEntry) -> None:
        self.by_seq[entry.group_seq] = entry

    def trim_through(self, seq: int) -> None:
        for s in range(self.trimmed_below, seq + 1):
            self.by_seq.pop(s, None)
        self.trimmed_below = max(self.trimmed_below, seq + 1)

    def entries(self) -> list[JournalEntry]:
        return [self.by_seq[s] for s in sorted(self.by_seq)]


class _Stream:
    """One sequenced replication pipe: the whole group in grouped/synchronous
    mode, one per member volume in per_volume mode."""

    def __init__(self, group: "ConsistencyGroup", stream_id: str, volumes: list[str],
                 link_id: str, capacity: int):
        self.group = group
        self.stream_id = stream_id
        self.volumes = volumes
        self.link_id = link_id
        self.ack_link_id = link_id + "-ack"
        self.main_journal = Journal(MAIN, group.group_id, capacity)
        self.backup_journal = Journal(BACKUP, group.group_id, capacity)
        self.next_seq = 1
        self.acked_seq = 0          # sequenced + applied at main
        self.sent_up_to = 0         # highest seq handed to the link
        self.shipped_seq = 0        # highest receipt-confirmed at main
        self.confirmed_applied = 0  # highest apply-confirmed at main
        self.backup_recv_contig = 0
        self.backup_applied = 0
        self.phase = BASELINE_COPY
        self.barrier_seq: int | None = None
        self.copy_plan: list[tuple[str, int]] = []
        self.copy_sent = 0       # plan positions handed to the link
        self.copy_confirmed = 0  # cumulative receiver confirmation
        self.copy_recv_contig = 0
        self.copy_started = False
        self.pending_writes: list = []  # backpressure queue
        self.sync_waiters: list[tuple[int, float, AckCallback | None]] = []
        self.ship_scheduled = False
        self.heartbeat_scheduled = False
        self.ack_pending = False
        self.progress_mark = (-1, -1)
        self.backpressure_delays = 0

    def outstanding(self) -> bool:
        if self.acked_seq > self.shipped_seq:
            return True
        return self.copy_started and self.copy_confirmed < len(self.copy_plan)


@dataclass
class ConsistencyGroup:
    group_id: str
    mode: str
    member_volume_ids: list[str]
    journal_capacity: int
    streams: dict[str, _Stream] = field(default_factory=dict)  # stream_id -> stream
    ack_log: list[JournalEntry] = field(default_factory=list)  # global ack order, never trimmed
    # Member images at creation time (block refs are immutable, so a shallow
    # copy is a faithful snapshot): the replay oracle's starting point.
    baseline_images: dict[str, list[bytes]] = field(default_factory=dict)
    failed_over: bool = False
    promoted: bool = False
    lost_on_failover: int | None = None
    acked_at_failure: int | None = None

    def stream_for(self, volume_id: str) -> _Stream:
        if self.mode == PER_VOLUME:
            return self.streams[volume_id]
        return self.streams[self.group_id]

    @property
    def phase(self) -> str:
        if self.failed_over:
            return FAILED_OVER
        return min((s.phase for s in self.streams.values()),
                   key=lambda p: _PHASE_RANK[p])


@dataclass
class SnapshotGroup:
    snapshot_group_id: str
    group_id: str
    at_seq: int
    member_snapshot_ids: dict[str, str]  # volume_id -> snapshot_id
    created_at: float


class ReplicationEngine:
    def __init__(self, sim: Simulator, store: BlockStore,
                 inter_site_latency_ms: float = 50.0,
                 journal_capacity: int = 4096,
                 ship_batch_limit: int = 128,
                 retransmit_interval_ms: float = 10.0):
        self.sim = sim
        self.store = store
        self.inter_site_latency_ms = inter_site_latency_ms
        self.default_journal_capacity = journal_capacity
        self.ship_batch_limit = ship_batch_limit
        self.retransmit_interval_ms = retransmit_interval_ms
        self.groups: dict[str, ConsistencyGroup] = {}
        self.snapshot_groups: dict[str, SnapshotGroup] = {}
        self._volume_group: dict[str, str] = {}
        self._group_counter = 0
        self._sg_counter = 0

    # -- group lifecycle -----------------------------------------------------

    def create_group(self, member_volume_ids: list[str], mode: str = GROUPED,
                     journal_capacity: int | None = None,
                     group_id: str | None = None) -> str:
        if mode not in MODES:
            raise InvalidArgument(f"unknown mode {mode!r}")
        if not member_volume_ids:
            raise InvalidArgument("a group needs at least one member volume")
        for vid in member_volume_ids:
            if not self.store.has_volume(MAIN, vid):
                raise NotFound(f"volume {vid} on site main")
            if vid in self._volume_group:
                raise Conflict(f"volume {vid} already in group {self._volume_group[vid]}")
        if group_id is None:
            self._group_counter += 1
            group_id = f"cg-{self._group_counter}"
        if group_id in self.groups:
            raise AlreadyExists(f"group {group_id}")

        capacity = journal_capacity or self.default_journal_capacity
        group = ConsistencyGroup(group_id=group_id, mode=mode,
                                 member_volume_ids=list(member_volume_ids),
                                 journal_capacity=capacity)
        for vid in member_volume_ids:
            main_vol = self.store.volume(MAIN, vid)
            if self.store.has_volume(BACKUP, vid):
                peer = self.store.volume(BACKUP, vid)
                if (peer.block_count, peer.block_size) != (main_vol.block_count, main_vol.block_size):
                    raise Conflict(f"backup peer {vid} exists with a different shape")
            else:
                self.store.create_volume(BACKUP, main_vol.block_count,
                                         main_vol.block_size, volume_id=vid)

        if mode == PER_VOLUME:
            for vid in member_volume_ids:
                link_id = f"repl-{group_id}-{vid}"
                self._add_link_pair(link_id)
                group.streams[vid] = _Stream(group, vid, [vid], link_id, capacity)
        else:
            link_id = f"repl-{group_id}"
            self._add_link_pair(link_id)
            group.streams[group_id] = _Stream(group, group_id, list(member_volume_ids),
                                              link_id, capacity)

        for vid in member_volume_ids:
            group.baseline_images[vid] = list(self.store.volume(MAIN, vid).blocks)
        self.groups[group_id] = group
        for vid in member_volume_ids:
            self._volume_group[vid] = group_id
        self.sim.schedule(0.0, lambda: self.run_baseline_copy(group_id),
                          label=f"baseline:{group_id}")
        return group_id

    def _add_link_pair(self, link_id: str) -> None:
        self.sim.add_link(LinkConfig(link_id, latency_ms=self.inter_site_latency_ms))
        self.sim.add_link(LinkConfig(link_id + "-ack", latency_ms=self.inter_site_latency_ms))

    def group(self, group_id: str) -> ConsistencyGroup:
        g = self.groups.get(group_id)
        if g is None:
            raise NotFound(f"group {group_id}")
        return g

    def group_for_volume(self, volume_id: str) -> str | None:
        return self._volume_group.get(volume_id)

    # -- write path ------------------------------------------------------------

    def group_write(self, group_id: str, volume_id: str, block_index: int,
                    data: bytes, on_ack: AckCallback | None = None) -> int | None:
        """Sequence a write. Asynchronous modes ack before any transfer and
        return the sequence; synchronous mode returns None and acks via
        on_ack once the backup has applied. Journal-full writes are delayed
        behind the journal (backpressure), never dropped."""
        g = self.group(group_id)
        if g.failed_over:
            raise Unavailable(f"group {group_id} is failed over")
        if not self.sim.site_ok(MAIN):
            raise Unavailable("main site failed")
        if volume_id not in g.member_volume_ids:
            raise InvalidArgument(f"volume {volume_id} is not a member of {group_id}")
        stream = g.stream_for(volume_id)
        if len(stream.main_journal) >= stream.main_journal.capacity:
            stream.pending_writes.append((volume_id, block_index, bytes(data),
                                          self.sim.now, on_ack))
            stream.backpressure_delays += 1
            return None
        return self._sequence_write(g, stream, volume_id, block_index, data,
                                    self.sim.now, on_ack)

    def _sequence_write(self, g: ConsistencyGroup, stream: _Stream, volume_id: str,
                        block_index: int, data: bytes, issued_at: float,
                        on_ack: AckCallback | None) -> int | None:
        seq = stream.next_seq
        entry = JournalEntry(seq, volume_id, block_index, bytes(data), self.sim.now)
        stream.main_journal.add(entry)
        g.ack_log.append(entry)
        self.store.apply_write(MAIN, volume_id, block_index, data)
        stream.next_seq += 1
        stream.acked_seq = seq
        if g.mode == SYNCHRONOUS:
            stream.sync_waiters.append((seq, issued_at, on_ack))
            self._kick_shipper(stream)
            return None
        # The ack event is scheduled before the ship tick, so the writer sees
        # its ack strictly before any network transfer of the entry.
        if on_ack is not None:
            latency = self.sim.now - issued_at
            self.sim.schedule(0.0, lambda: on_ack(seq, latency), label="ack")
        self._kick_shipper(stream)
        return seq

    def _drain_pending_writes(self, g: ConsistencyGroup, stream: _Stream) -> None:
        while stream.pending_writes and len(stream.main_journal) < stream.main_journal.capacity:
            volume_id, block_index, data, issued_at, on_ack = stream.pending_writes.pop(0)
            self._sequence_write(g, stream, volume_id, block_index, data, issued_at, on_ack)

    # -- baseline copy -----------------------------------------------------------

    def run_baseline_copy(self, group_id: str) -> int:
        """Start the initial full copy for every stream still in baseline
        phase. Returns the number of blocks planned for streaming."""
        g = self.group(group_id)
        if g.phase != BASELINE_COPY:
            raise FailedPrecondition(f"group {group_id} is {g.phase}, not baseline_copy")
        planned = 0
        for stream in g.streams.values():
            if stream.phase != BASELINE_COPY or stream.copy_started:
                continue
            stream.copy_started = True
            plan: list[tuple[str, int]] = []
            for vid in stream.volumes:
                vol = self.store.volume(MAIN, vid)
                plan.extend((vid, i) for i in sorted(vol.written))
            stream.copy_plan = plan
            planned += len(plan)
            if plan:
                self._ship_copy(stream)
                self._ensure_heartbeat(stream)
            else:
                self._baseline_complete(stream)
        return planned

    def _ship_copy(self, stream: _Stream) -> int:
        link = self.sim.link(stream.link_id)
        if link.partitioned:
            return 0
        sent = 0
        while stream.copy_sent < len(stream.copy_plan):
            idx = stream.copy_sent
            vid, blk = stream.copy_plan[idx]
            # Content is read at send time: the payload carries every write
            # acknowledged so far, which keeps retransmits from going stale.
            payload = self.store.volume(MAIN, vid).blocks[blk]
            self.sim.send(stream.link_id,
                          self._make_copy_receiver(stream, idx + 1, vid, blk, payload),
                          label=f"copy {stream.stream_id} #{idx + 1}")
            stream.copy_sent = idx + 1
            sent += 1
        return sent

    def _make_copy_receiver(self, stream: _Stream, copy_index: int, vid: str,
                            blk: int, payload: bytes) -> Callable[[], None]:
        def receive() -> None:
            if stream.group.failed_over:
                return
            self.store.apply_write(BACKUP, vid, blk, payload)
            if copy_index == stream.copy_recv_contig + 1:
                stream.copy_recv_contig = copy_index
            self._queue_backup_ack(stream)
        return receive

    def _baseline_complete(self, stream: _Stream) -> None:
        stream.barrier_seq = stream.acked_seq
        stream.phase = CATCHING_UP
        self.sim.trace("baseline-done", f"{stream.stream_id} barrier={stream.barrier_seq}")
        self._check_consistent(stream)

    def _check_consistent(self, stream: _Stream) -> None:
        if stream.phase == CATCHING_UP and stream.confirmed_applied >= (stream.barrier_seq or 0):
            stream.phase = CONSISTENT
            self.sim.trace("consistent", stream.stream_id)

    # -- shipping ------------------------------------------------------------

    def _kick_shipper(self, stream: _Stream) -> None:
        if stream.ship_scheduled or stream.group.failed_over:
            return
        stream.ship_scheduled = True

        def tick() -> None:
            stream.ship_scheduled = False
            if stream.group.failed_over or not self.sim.site_ok(MAIN):
                return
            self._ship_stream(stream, self.ship_batch_limit)
            self._ensure_heartbeat(stream)

        self.sim.schedule(0.0, tick, label=f"ship:{stream.stream_id}")

    def _ship_stream(self, stream: _Stream, batch_limit: int) -> int:
        link = self.sim.link(stream.link_id)
        if link.partitioned:
            return 0
        start = max(stream.sent_up_to, stream.shipped_seq) + 1
        end = min(stream.acked_seq, start + batch_limit - 1)
        shipped = 0
        for seq in range(start, end + 1):
            entry = stream.main_journal.by_seq.get(seq)
            if entry is None:  # trimmed: backup already confirmed it
                continue
            self.sim.send(stream.link_id, self._make_entry_receiver(stream, entry),
                          label=f"jrnl {stream.stream_id} seq={seq}")
            stream.sent_up_to = seq
            shipped += 1
        if end < stream.acked_seq:
            self._kick_shipper(stream)  # more batches pending
        return shipped

    def ship_entries(self, group_id: str, batch_limit: int | None = None) -> int:
        """Ship up to batch_limit unshipped entries per stream right now."""
        g = self.group(group_id)
        if g.failed_over:
            raise FailedPrecondition(f"group {group_id} is failed over")
        limit = batch_limit if batch_limit is not None else self.ship_batch_limit
        if limit < 1:
            raise InvalidArgument("batch_limit must be >= 1")
        total = 0
        for stream in g.streams.values():
            total += self._ship_stream(stream, limit)
            self._ensure_heartbeat(stream)
        return total

    def _make_entry_receiver(self, stream: _Stream, entry: JournalEntry) -> Callable[[], None]:
        def receive() -> None:
            if stream.group.failed_over:
                return
            bj = stream.backup_journal
            if entry.group_seq > stream.backup_applied and entry.group_seq not in bj.by_seq:
                if len(bj) < bj.capacity:
                    bj.add(entry)
            # Advance the contiguous-receipt mark past anything buffered or applied.
            contig = max(stream.backup_recv_contig, stream.backup_applied)
            while contig + 1 in bj.by_seq:
                contig += 1
            stream.backup_recv_contig = contig
            self._apply_stream(stream)
            self._queue_backup_ack(stream)
        return receive

    # -- backup apply + acknowledgement ------------------------------------------

    def _apply_stream(self, stream: _Stream) -> int:
        """Apply the gapless prefix sitting in the backup journal."""
        bj = stream.backup_journal
        applied = 0
        while (nxt := stream.backup_applied + 1) in bj.by_seq:
            entry = bj.by_seq.pop(nxt)
            self.store.apply_write(BACKUP, entry.volume_id, entry.block_index, entry.payload)
            stream.backup_applied = nxt
            applied += 1
        if applied:
            stream.backup_recv_contig = max(stream.backup_recv_contig, stream.backup_applied)
        return applied

    def apply_entries(self, group_id: str) -> int:
        g = self.group(group_id)
        total = 0
        for stream in g.streams.values():
            total += self._apply_stream(stream)
        return total

    def _queue_backup_ack(self, stream: _Stream) -> None:
        if stream.ack_pending:
            return
        stream.ack_pending = True

        def send_ack() -> None:
            stream.ack_pending = False
            recv = stream.backup_recv_contig
            applied = stream.backup_applied
            copy_recv = stream.copy_recv_contig
            self.sim.send(stream.ack_link_id,
                          lambda: self._receive_ack(stream, recv, applied, copy_recv),
                          label=f"ack {stream.stream_id} a={applied}")

        self.sim.schedule(0.0, send_ack, label=f"backack:{stream.stream_id}")

    def _receive_ack(self, stream: _Stream, recv_contig: int, applied: int,
                     copy_recv: int) -> None:
        if stream.group.failed_over or not self.sim.site_ok(MAIN):
            return
        g = stream.group
        stream.shipped_seq = max(stream.shipped_seq, recv_contig)
        if copy_recv > stream.copy_confirmed:
            stream.copy_confirmed = copy_recv
            if stream.phase == BASELINE_COPY and stream.copy_confirmed >= len(stream.copy_plan):
                self._baseline_complete(stream)
        if applied > stream.confirmed_applied:
            stream.confirmed_applied = applied
            stream.main_journal.trim_through(applied)
            self._drain_pending_writes(g, stream)
            self._resolve_sync_waiters(stream)
            self._check_consistent(stream)
        if stream.outstanding():
            self._kick_shipper(stream)
            self._ensure_heartbeat(stream)

    def _resolve_sync_waiters(self, stream: _Stream) -> None:
        while stream.sync_waiters and stream.sync_waiters[0][0] <= stream.confirmed_applied:
            seq, issued_at, on_ack = stream.sync_waiters.pop(0)
            if on_ack is not None:
                latency = self.sim.now - issued_at
                self.sim.schedule(0.0, lambda cb=on_ack, s=seq, l=latency: cb(s, l),
                                  label="ack")

    # -- retransmission -----------------------------------------------------------

    def _ensure_heartbeat(self, stream: _Stream) -> None:
        if stream.heartbeat_scheduled or not stream.outstanding():
            return
        stream.heartbeat_scheduled = True
        self.sim.schedule(self.retransmit_interval_ms, lambda: self._heartbeat(stream),
                          label=f"retx:{stream.stream_id}")

    def _heartbeat(self, stream: _Stream) -> None:
        stream.heartbeat_scheduled = False
        if stream.group.failed_over or not self.sim.site_ok(MAIN):
            return
        if not stream.outstanding():
            return
        mark = (stream.shipped_seq, stream.copy_confirmed)
        if mark == stream.progress_mark:
            # Stalled for a full interval: go-back-N from the cumulative acks.
            stream.sent_up_to = stream.shipped_seq
            stream.copy_sent = stream.copy_confirmed
            self._ship_copy(stream)
            self._ship_stream(stream, self.ship_batch_limit)
        stream.progress_mark = mark
        self._ensure_heartbeat(stream)

    # -- snapshot groups ------------------------------------------------------------

    def create_snapshot_group(self, group_id: str) -> SnapshotGroup:
        g = self.group(group_id)
        if g.mode == PER_VOLUME:
            raise Unsupported("per_volume groups have no group-consistent point")
        if g.phase != CONSISTENT:
            raise FailedPrecondition(f"group {group_id} is {g.phase}, not consistent")
        stream = g.streams[g.group_id]
        # Commands run between events, so the applier is at an entry boundary.
        members = {vid: self.store.create_snapshot(BACKUP, vid)
                   for vid in g.member_volume_ids}
        self._sg_counter += 1
        sg = SnapshotGroup(snapshot_group_id=f"sg-{self._sg_counter}",
                           group_id=group_id, at_seq=stream.backup_applied,
                           member_snapshot_ids=members, created_at=self.sim.now)
        self.snapshot_groups[sg.snapshot_group_id] = sg
        self.sim.trace("snapshot-group", f"{sg.snapshot_group_id} at_seq={sg.at_seq}")
        return sg

    def snapshot_group(self, snapshot_group_id: str) -> SnapshotGroup:
        sg = self.snapshot_groups.get(snapshot_group_id)
        if sg is None:
            raise NotFound(f"snapshot group {snapshot_group_id}")
        return sg

    # -- failover ------------------------------------------------------------

    def failover(self, group_id: str) -> dict:
        """Promote the backup: apply every gapless entry already received,
        count everything else as lost. In-flight deliveries are discarded."""
        g = self.group(group_id)
        if g.failed_over:
            raise Conflict(f"group {group_id} already failed over")
        writer_acked = 0
        for stream in g.streams.values():
            if g.mode == SYNCHRONOUS:
                writer_acked += stream.confirmed_applied  # unconfirmed writes never acked
            else:
                writer_acked += stream.acked_seq
        g.acked_at_failure = sum(s.acked_seq for s in g.streams.values())
        g.failed_over = True  # receivers ignore anything still in flight
        recovered = 0
        for stream in g.streams.values():
            self._apply_stream(stream)
            recovered += stream.backup_applied
            stream.confirmed_applied = stream.backup_applied
            stream.shipped_seq = max(stream.shipped_seq, stream.backup_applied)
        lost = max(0, writer_acked - recovered)
        g.lost_on_failover = lost
        g.promoted = True
        self.sim.trace("failover", f"{group_id} recovered={recovered} lost={lost}")
        return {"recovered_applied_seq": recovered, "lost_entries": lost}

    # -- observability ------------------------------------------------------------

    def status(self, group_id: str) -> dict:
        """Counters as ReplicationStatus: exactly those field names."""
        g = self.group(group_id)
        acked = sum(s.acked_seq for s in g.streams.values())
        shipped = sum(s.shipped_seq for s in g.streams.values())
        applied = sum(s.confirmed_applied for s in g.streams.values())
        rec = {
            "group_id": g.group_id,
            "phase": g.phase,
            "acked_seq": acked,
            "shipped_seq": shipped,
            "applied_seq": applied,
            "lag_entries": acked - applied,
        }
        if g.lost_on_failover is not None:
            rec["lost_on_failover"] = g.lost_on_failover
        return rec

    def describe(self, group_id: str) -> dict:
        g = self.group(group_id)
        rec = self.status(group_id)
        rec["mode"] = g.mode
        rec["member_volume_ids"] = list(g.member_volume_ids)
        rec["snapshot_groups"] = [sg.snapshot_group_id
                                  for sg in self.snapshot_groups.values()
                                  if sg.group_id == group_id]
        return rec

    def journal_dump(self, group_id: str) -> list[str]:
        """Ack-order dump, one line per entry (oracle/debug surface)."""
        import hashlib
        g = self.group(group_id)
        lines = []
        for n, e in enumerate(g.ack_log, start=1):
            sha = hashlib.sha256(e.payload).hexdigest()
            lines.append(f"seq={n} vol={e.volume_id} blk={e.block_index} "
                         f"sha={sha} t={e.logical_time:g}")
        return lines

    def backup_digests(self, group_id: str) -> dict[str, str]:
        g = self.group(group_id)
        return {vid: blocks_digest(self.store.volume(BACKUP, vid).blocks)
                for vid in g.member_volume_ids}
