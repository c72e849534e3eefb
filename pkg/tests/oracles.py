"""Independent oracles shared across test modules.

These deliberately avoid the production code paths they check: the
snapshot oracle copies whole volumes eagerly, and the schedule enumerator
builds backup states straight from write lists.
"""

from __future__ import annotations

from repsim.workload_verify import (ROLE_COMMIT, ROLE_SALES, ROLE_STOCK,
                                    classify_images, encode_record)


class FullCopySnapshotOracle:
    """Snapshot by copying the entire volume at creation time."""

    def __init__(self):
        self.copies: dict[str, list[bytes]] = {}

    def snapshot(self, snapshot_id: str, blocks: list[bytes]) -> None:
        self.copies[snapshot_id] = list(blocks)

    def read(self, snapshot_id: str, block_index: int) -> bytes:
        return self.copies[snapshot_id][block_index]


def four_write_schedule(block_size: int = 32):
    """The minimal two-volume schedule that can tear: tx1's three writes
    plus tx2's first, split into per-volume streams.

    sales stream: [tx1 sales data, tx1 commit, tx2 sales data]
    stock stream: [tx1 stock data]
    """
    sales_capacity = 4
    commit_base = sales_capacity // 2
    sales_stream = [
        (0, encode_record(1, ROLE_SALES, 500, block_size)),
        (commit_base, encode_record(1, ROLE_COMMIT, 0, block_size)),
        (1, encode_record(2, ROLE_SALES, 700, block_size)),
    ]
    stock_stream = [
        (0, encode_record(1, ROLE_STOCK, 0, block_size)),
    ]
    return sales_capacity, sales_stream, stock_stream


def enumerate_four_write_cuts(block_size: int = 32):
    """Every reachable backup state of the 4-write schedule under
    per-volume delivery: each stream applies some prefix independently.
    Returns [( (sales_cut, stock_cut), VerificationReport ), ...]."""
    sales_capacity, sales_stream, stock_stream = four_write_schedule(block_size)
    zero = bytes(block_size)
    outcomes = []
    for i in range(len(sales_stream) + 1):
        for j in range(len(stock_stream) + 1):
            sales = [zero] * sales_capacity
            stock = [zero] * 2
            for blk, data in sales_stream[:i]:
                sales[blk] = data
            for blk, data in stock_stream[:j]:
                stock[blk] = data
            report = classify_images({"sales": sales, "stock": stock})
            outcomes.append(((i, j), report))
    return outcomes
