"""In-memory block-addressed volumes with copy-on-write snapshots.

The storage substrate for both sites. Volumes hold whole blocks only;
unwritten blocks read as zeros. Snapshots are read-only and preserve the
original content of a block at its first overwrite after snapshot creation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AlreadyExists, InvalidArgument, NotFound
from .simnet import SITES

MIN_BLOCK_SIZE = 16  # one transaction record header must fit


@dataclass
class Volume:
    volume_id: str
    site: str
    block_count: int
    block_size: int
    blocks: list[bytes]
    generation: int = 0
    written: set[int] = field(default_factory=set)
    snapshot_ids: list[str] = field(default_factory=list)


@dataclass
class Snapshot:
    snapshot_id: str
    site: str
    source_volume_id: str
    created_at_generation: int
    saved_blocks: dict[int, bytes] = field(default_factory=dict)
    frozen: bool = True


class BlockStore:
    def __init__(self):
        self._volumes: dict[tuple[str, str], Volume] = {}
        self._snapshots: dict[str, Snapshot] = {}
        self._vol_counter = 0
        self._snap_counter = 0

    # -- volumes ------------------------------------------------------------

    def create_volume(self, site: str, block_count: int, block_size: int,
                      volume_id: str | None = None) -> str:
        if site not in SITES:
            raise InvalidArgument(f"unknown site {site!r}")
        if block_count < 1:
            raise InvalidArgument(f"block_count must be >= 1, got {block_count}")
        if block_size < MIN_BLOCK_SIZE:
            raise InvalidArgument(f"block_size must be >= {MIN_BLOCK_SIZE}, got {block_size}")
        if volume_id is None:
            self._vol_counter += 1
            volume_id = f"vol-{self._vol_counter}"
        if (site, volume_id) in self._volumes:
            raise AlreadyExists(f"volume {volume_id} on site {site}")
        zero = bytes(block_size)
        self._volumes[(site, volume_id)] = Volume(
            volume_id=volume_id, site=site,
            block_count=block_count, block_size=block_size,
            blocks=[zero] * block_count,
        )
        return volume_id

    def volume(self, site: str, volume_id: str) -> Volume:
        vol = self._volumes.get((site, volume_id))
        if vol is None:
            raise NotFound(f"volume {volume_id} on site {site}")
        return vol

    def has_volume(self, site: str, volume_id: str) -> bool:
        return (site, volume_id) in self._volumes

    def apply_write(self, site: str, volume_id: str, block_index: int, data: bytes) -> int:
        vol = self.volume(site, volume_id)
        if not 0 <= block_index < vol.block_count:
            raise InvalidArgument(f"block index {block_index} out of range")
        if len(data) != vol.block_size:
            raise InvalidArgument(f"data length {len(data)} != block_size {vol.block_size}")
        # Copy-on-write: save the original before the overwrite, first time only.
        if vol.snapshot_ids:
            original = vol.blocks[block_index]
            for sid in vol.snapshot_ids:
                saved = self._snapshots[sid].saved_blocks
                if block_index not in saved:
                    saved[block_index] = original
        vol.blocks[block_index] = bytes(data)
        vol.written.add(block_index)
        vol.generation += 1
        return vol.generation

    def read_block(self, site: str, volume_id: str, block_index: int) -> bytes:
        vol = self.volume(site, volume_id)
        if not 0 <= block_index < vol.block_count:
            raise InvalidArgument(f"block index {block_index} out of range")
        return vol.blocks[block_index]

    # -- snapshots ------------------------------------------------------------

    def create_snapshot(self, site: str, volume_id: str) -> str:
        vol = self.volume(site, volume_id)
        self._snap_counter += 1
        snapshot_id = f"snap-{self._snap_counter}"
        self._snapshots[snapshot_id] = Snapshot(
            snapshot_id=snapshot_id, site=site,
            source_volume_id=volume_id,
            created_at_generation=vol.generation,
        )
        vol.snapshot_ids.append(snapshot_id)
        return snapshot_id

    def snapshot(self, snapshot_id: str) -> Snapshot:
        snap = self._snapshots.get(snapshot_id)
        if snap is None:
            raise NotFound(f"snapshot {snapshot_id}")
        return snap

    def read_snapshot(self, snapshot_id: str, block_index: int) -> bytes:
        snap = self.snapshot(snapshot_id)
        vol = self.volume(snap.site, snap.source_volume_id)
        if not 0 <= block_index < vol.block_count:
            raise InvalidArgument(f"block index {block_index} out of range")
        saved = snap.saved_blocks.get(block_index)
        return saved if saved is not None else vol.blocks[block_index]

    def snapshot_blocks(self, snapshot_id: str) -> list[bytes]:
        """Full point-in-time image of the snapshotted volume."""
        snap = self.snapshot(snapshot_id)
        vol = self.volume(snap.site, snap.source_volume_id)
        saved = snap.saved_blocks
        return [saved.get(i, vol.blocks[i]) for i in range(vol.block_count)]

    # -- digests ------------------------------------------------------------

    def digest_volume(self, site: str, volume_id: str) -> str:
        return blocks_digest(self.volume(site, volume_id).blocks)

    def digest_snapshot(self, snapshot_id: str) -> str:
        return blocks_digest(self.snapshot_blocks(snapshot_id))

    # -- persistence -----------------------------------------------------------

    def save_volume(self, site: str, volume_id: str, directory: str | Path) -> Path:
        vol = self.volume(site, volume_id)
        path = Path(directory) / f"{site}-{volume_id}.vol"
        path.write_bytes(b"".join(vol.blocks))
        return path

    def load_volume(self, site: str, volume_id: str, block_size: int,
                    directory: str | Path) -> str:
        path = Path(directory) / f"{site}-{volume_id}.vol"
        if not path.exists():
            raise NotFound(f"volume file {path}")
        raw = path.read_bytes()
        if block_size < MIN_BLOCK_SIZE or len(raw) % block_size != 0:
            raise InvalidArgument(f"file size {len(raw)} not a multiple of block_size")
        blocks = [raw[i:i + block_size] for i in range(0, len(raw), block_size)]
        vid = self.create_volume(site, len(blocks), block_size, volume_id=volume_id)
        vol = self.volume(site, vid)
        zero = bytes(block_size)
        for i, blk in enumerate(blocks):
            if blk != zero:
                vol.blocks[i] = blk
                vol.written.add(i)
        return vid


def blocks_digest(blocks: list[bytes]) -> str:
    """Deterministic 256-bit digest of full block contents in index order."""
    h = hashlib.sha256()
    for blk in blocks:
        h.update(blk)
    return h.hexdigest()
