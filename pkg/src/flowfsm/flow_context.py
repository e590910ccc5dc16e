"""Per-flow context storage.

Exact-match contexts live in a d-left hash table: d independent subtables,
each hashed with its own seed, with insertion going to the least-loaded
candidate bucket (leftmost subtable on ties). A small ternary table
handles wildcard fallbacks, mainly to seed protocol-specific default
states. A lookup miss is not an error: the default context (state 0, all
registers zero) is synthesized on the fly, and an entry is only allocated
when a non-default context is written back, so idle traffic costs no
table space.

Housekeeping reclaims stale entries with a two-step activity flag: a
periodic scan demotes ACTIVE entries to INACTIVE and deletes entries that
stayed INACTIVE a full cycle (i.e. were not touched by any lookup or
write-back in between).
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .tcam import TernaryTable

DEFAULT_STATE = 0
NUM_FLOW_REGISTERS = 4
KEY_WIDTH = 128


class Activity(enum.IntEnum):
    INACTIVE = 0
    ACTIVE = 1
    DELETED = 2  # reported for cells that were reclaimed


@dataclass(slots=True)
class FlowContext:
    """State label plus the four per-flow registers."""

    state: int = DEFAULT_STATE
    r: list[int] = field(default_factory=lambda: [0] * NUM_FLOW_REGISTERS)
    activity: Activity = Activity.ACTIVE


@dataclass(frozen=True)
class FallbackEntry:
    """Wildcard context: state plus optional initial register values."""

    state: int
    registers: tuple[int, ...] = (0,) * NUM_FLOW_REGISTERS


class FlowContextTable:
    """d-left hash store of flow contexts with ternary fallback.

    One engine instance owns one table; there is no internal locking.
    Hash seeds are fixed per instance and exposed for reproducibility.
    """

    def __init__(
        self,
        *,
        subtables: int = 4,
        buckets: int = 1024,
        bucket_depth: int = 1,
        seed: int = 0,
        fallback_capacity: int = 32,
        num_registers: int = NUM_FLOW_REGISTERS,
    ):
        if subtables < 1 or buckets < 1 or bucket_depth < 1:
            raise ValueError("table geometry must be positive")
        self.subtables = subtables
        self.buckets = buckets
        self.bucket_depth = bucket_depth
        self.num_registers = num_registers
        self.capacity = subtables * buckets * bucket_depth
        self.seeds = tuple(
            (seed ^ (0x9E3779B9 * (i + 1))) & 0xFFFFFFFFFFFFFFFF
            for i in range(subtables)
        )
        self._seed_bytes = [s.to_bytes(8, "little") for s in self.seeds]
        # cells[sub][bucket] is a list of bucket_depth slots, each either
        # None or a (key, FlowContext) pair
        self._cells: list[list[list[Optional[tuple[int, FlowContext]]]]] = [
            [[None] * bucket_depth for _ in range(buckets)] for _ in range(subtables)
        ]
        self._candidates: dict[int, tuple[int, ...]] = {}
        # exact-match accelerator: key -> (bucket cell list, slot); the
        # cells themselves stay authoritative for geometry and housekeeping
        self._index: dict[int, tuple[list, int]] = {}
        self.fallback = TernaryTable(width=KEY_WIDTH, capacity=fallback_capacity)
        self.occupancy = 0
        self.high_water = 0
        self.evictions = 0
        self.table_full_drops = 0

    def _positions(self, key: int) -> tuple[int, ...]:
        pos = self._candidates.get(key)
        if pos is None:
            kb = key.to_bytes(16, "big")
            pos = tuple(
                int.from_bytes(
                    hashlib.blake2b(kb, digest_size=8, key=sb).digest(), "little"
                )
                % self.buckets
                for sb in self._seed_bytes
            )
            self._candidates[key] = pos
        return pos

    def _find(self, key: int) -> Optional[tuple[int, FlowContext]]:
        pos = self._index.get(key)
        if pos is None:
            return None
        return pos[0][pos[1]]

    def add_fallback(
        self,
        value: int,
        mask: int,
        priority: int,
        state: int,
        registers: Optional[Sequence[int]] = None,
    ) -> int:
        """Install a wildcard context rule matched on lookup misses."""
        regs = tuple(registers) if registers is not None else ()
        if len(regs) > self.num_registers:
            raise ValueError(f"fallback allows {self.num_registers} register values")
        regs += (0,) * (self.num_registers - len(regs))
        return self.fallback.insert(value, mask, priority, FallbackEntry(state, regs))

    def lookup_context(self, key: int) -> FlowContext:
        """Context for a flow key; never fails.

        Exact hits are touched ACTIVE. Misses fall through to the wildcard
        table and finally to the default context; neither allocates. The
        returned object is owned by the table on exact hits: callers must
        treat it as read-only and publish changes via write_back.
        """
        cell = self._find(key)
        if cell is not None:
            ctx = cell[1]
            ctx.activity = Activity.ACTIVE
            return ctx
        entry = self.fallback.lookup(key)
        if entry is not None:
            return FlowContext(entry.state, list(entry.registers))
        return FlowContext(r=[0] * self.num_registers)

    def write_back(self, key: int, state: int, registers: Sequence[int]) -> bool:
        """Store a context under a key.

        Existing entries are updated in place. A default-valued context
        (state 0, all registers zero) is not allocated for an absent key,
        so flows that never leave the default state occupy nothing. When
        all candidate cells are taken the context is dropped and counted;
        processing continues.
        """
        cell = self._find(key)
        if cell is not None:
            ctx = cell[1]
            ctx.state = state
            ctx.r[:] = registers
            ctx.activity = Activity.ACTIVE
            return True
        if state == DEFAULT_STATE and not any(registers):
            return True
        positions = self._positions(key)
        best_sub = -1
        best_load = self.bucket_depth
        for sub, bucket in enumerate(positions):
            load = sum(1 for c in self._cells[sub][bucket] if c is not None)
            if load < best_load:
                best_load = load
                best_sub = sub
        if best_sub < 0:
            self.table_full_drops += 1
            return False
        bucket_cells = self._cells[best_sub][positions[best_sub]]
        slot = next(i for i, c in enumerate(bucket_cells) if c is None)
        bucket_cells[slot] = (key, FlowContext(state, list(registers)))
        self._index[key] = (bucket_cells, slot)
        self.occupancy += 1
        if self.occupancy > self.high_water:
            self.high_water = self.occupancy
        return True

    def housekeep(self, now: int = 0) -> int:
        """One management scan: demote ACTIVE, reclaim INACTIVE.

        Returns the number of entries evicted. ``now`` is informational
        (the scan is flag-driven, not timestamp-driven).
        """
        evicted = 0
        for sub_cells in self._cells:
            for bucket_cells in sub_cells:
                for i, cell in enumerate(bucket_cells):
                    if cell is None:
                        continue
                    ctx = cell[1]
                    if ctx.activity == Activity.ACTIVE:
                        ctx.activity = Activity.INACTIVE
                    else:
                        bucket_cells[i] = None
                        del self._index[cell[0]]
                        evicted += 1
        self.occupancy -= evicted
        self.evictions += evicted
        return evicted

    def get(self, key: int) -> Optional[FlowContext]:
        """Exact-match peek without touching the activity flag."""
        cell = self._find(key)
        return cell[1] if cell is not None else None

    def __len__(self) -> int:
        return self.occupancy
