"""The boundary map: boundary voxels stacked in columns along one axis.

Only voxels on either side of the free-space surface are stored. Occupancy
of any other voxel is recovered from its column: interior records whose
lower (upper) neighbor along the projection axis is non-free open (close) a
run of free voxels, and a voxel strictly inside such a run is free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

from boundmap import _kernels as K
from boundmap.core import AXES, OccupancyState, VoxelKey


class MapCorruptionError(RuntimeError):
    """Raised when a column's free-run markers no longer alternate."""


class BoundaryClass(IntEnum):
    INTERIOR = K.INTERIOR
    EXTERIOR_UNKNOWN = K.EXTERIOR_UNKNOWN
    EXTERIOR_OCCUPIED = K.EXTERIOR_OCCUPIED

    @property
    def state(self) -> OccupancyState:
        return OccupancyState(int(K.CLASS_STATE[self.value]))

    @property
    def token(self) -> str:
        return _CLASS_TOKENS[self]


_CLASS_TOKENS = {
    BoundaryClass.INTERIOR: "int",
    BoundaryClass.EXTERIOR_UNKNOWN: "ukn",
    BoundaryClass.EXTERIOR_OCCUPIED: "occ",
}
_TOKEN_CLASSES = {v: k for k, v in _CLASS_TOKENS.items()}


class BoundaryRecord(NamedTuple):
    key: VoxelKey
    cls: BoundaryClass
    nonfree_mask: int


# key (3 x int32) + class and mask packed into one byte
BYTES_PER_RECORD = 13
# column key (2 x int32) + offset and length into the record store (2 x int32)
BYTES_PER_COLUMN = 16


def compute_boundary_status(
    self_state: OccupancyState, neighbor_states: Sequence[OccupancyState]
) -> tuple[BoundaryClass, int] | None:
    """Classify a voxel from its own state and its six neighbors' states.

    ``neighbor_states`` follows the ``six_neighbors`` order. The mask has bit
    ``n`` set when neighbor ``n`` is not free. Returns None for voxels that
    are not on the boundary.
    """
    if len(neighbor_states) != 6:
        raise ValueError("need exactly six neighbor states")
    nb = np.array([int(s) for s in neighbor_states], dtype=np.int8)
    cls, mask = K.boundary_status(int(self_state), nb)
    if cls == K.NOT_BOUNDARY:
        return None
    return BoundaryClass(cls), int(mask)


@dataclass
class RecordArray:
    """Columnar batch of boundary records in ascending key order."""

    keys: NDArray[np.int64]
    cls: NDArray[np.uint8]
    mask: NDArray[np.uint8]

    @classmethod
    def empty(cls) -> RecordArray:
        return cls(np.empty((0, 3), np.int64), np.empty(0, np.uint8), np.empty(0, np.uint8))

    @classmethod
    def from_packed(cls, packed: NDArray[np.int64], classes, masks) -> RecordArray:
        return cls(K.unpack_array(packed), np.asarray(classes, np.uint8), np.asarray(masks, np.uint8))

    @classmethod
    def from_records(cls, records: Iterable[BoundaryRecord]) -> RecordArray:
        recs = sorted(records, key=lambda r: tuple(r.key))
        if not recs:
            return cls.empty()
        return cls(
            np.array([r.key for r in recs], dtype=np.int64),
            np.array([int(r.cls) for r in recs], dtype=np.uint8),
            np.array([r.nonfree_mask for r in recs], dtype=np.uint8),
        )

    @property
    def packed(self) -> NDArray[np.int64]:
        return K.pack_array(self.keys)

    def __len__(self) -> int:
        return len(self.cls)

    def __getitem__(self, n: int) -> BoundaryRecord:
        i, j, k = (int(v) for v in self.keys[n])
        return BoundaryRecord(VoxelKey(i, j, k), BoundaryClass(int(self.cls[n])), int(self.mask[n]))

    def __iter__(self) -> Iterator[BoundaryRecord]:
        for n in range(len(self)):
            yield self[n]

    def to_set(self) -> set[BoundaryRecord]:
        return set(self)

    def equals(self, other: RecordArray) -> bool:
        return (
            np.array_equal(self.keys, other.keys)
            and np.array_equal(self.cls, other.cls)
            and np.array_equal(self.mask, other.mask)
        )


def _to_map(key: Sequence[int], axis: int) -> tuple[int, int, int]:
    i, j, k = key
    if axis == 2:
        return i, j, k
    if axis == 0:
        return j, k, i
    return i, k, j


def _from_map(a: int, b: int, c: int, axis: int) -> VoxelKey:
    if axis == 2:
        return VoxelKey(a, b, c)
    if axis == 0:
        return VoxelKey(c, a, b)
    return VoxelKey(a, c, b)


@dataclass
class ColumnCell:
    """Boundary records sharing one column, sorted by position along the axis."""

    column: tuple[int, int]
    k: NDArray[np.int64]
    cls: NDArray[np.uint8]
    mask: NDArray[np.uint8]
    axis: int = 2

    def __len__(self) -> int:
        return len(self.k)

    @property
    def records(self) -> list[BoundaryRecord]:
        a, b = self.column
        return [
            BoundaryRecord(_from_map(a, b, int(c), self.axis), BoundaryClass(int(s)), int(m))
            for c, s, m in zip(self.k, self.cls, self.mask)
        ]


@dataclass(frozen=True)
class MemoryStats:
    column_count: int
    record_count: int
    interior: int
    exterior_unknown: int
    exterior_occupied: int
    estimated_bytes: int


class BoundaryMap:
    """Boundary records grouped by column, sorted along the projection axis.

    Records live in three parallel arrays sorted by packed map key, whose
    high bits are the column and low bits the position along the axis. Each
    column is therefore one contiguous, sorted slice found by binary search.
    ``columns`` exposes the same data as a dict of ColumnCell views.
    """

    def __init__(self, d: float, projection_axis: str = "z"):
        if not d > 0:
            raise ValueError("resolution must be positive")
        self.d = d
        self.axis = AXES.index(projection_axis)
        self._flat: tuple[NDArray, NDArray, NDArray] = (
            np.empty(0, np.int64),
            np.empty(0, np.uint8),
            np.empty(0, np.uint8),
        )
        self._columns: dict[tuple[int, int], ColumnCell] | None = None

    @property
    def record_count(self) -> int:
        return len(self._flat[0])

    def _set_flat(self, flat) -> None:
        self._flat = flat
        self._columns = None

    @property
    def columns(self) -> dict[tuple[int, int], ColumnCell]:
        if self._columns is None:
            mkeys, cls, mask = self._flat
            cols, starts = np.unique(mkeys >> K.COL_SHIFT, return_index=True)
            stops = np.append(starts[1:], len(mkeys))
            self._columns = {}
            for col, lo, hi in zip(cols.tolist(), starts.tolist(), stops.tolist()):
                ab = self._column_of(col)
                self._columns[ab] = ColumnCell(
                    ab, (mkeys[lo:hi] & K.FIELD) - K.BIAS, cls[lo:hi], mask[lo:hi], self.axis
                )
        return self._columns

    @property
    def column_count(self) -> int:
        mkeys = self._flat[0]
        if len(mkeys) == 0:
            return 0
        col = mkeys >> K.COL_SHIFT
        return int(np.count_nonzero(col[1:] != col[:-1])) + 1

    @property
    def projection_axis(self) -> str:
        return AXES[self.axis]

    @property
    def marker_bits(self) -> tuple[int, int]:
        """Mask bits of the lower and upper neighbor along the projection axis."""
        return 1 << (2 * self.axis), 1 << (2 * self.axis + 1)

    # -- point edits ------------------------------------------------------

    def insert_record(self, record: BoundaryRecord) -> None:
        mkeys, cls, mask = self._flat
        mkey = K.to_map_key(K.pack(*record.key), self.axis)
        pos = int(np.searchsorted(mkeys, mkey))
        if pos < len(mkeys) and mkeys[pos] == mkey:
            raise ValueError(f"record for {tuple(record.key)} already present")
        self._set_flat(
            (
                np.insert(mkeys, pos, mkey),
                np.insert(cls, pos, int(record.cls)),
                np.insert(mask, pos, record.nonfree_mask),
            )
        )

    def remove_records_in(self, keys: Iterable[Sequence[int]]) -> int:
        packed = np.array([K.pack(*k) for k in keys], np.int64)
        if len(packed) == 0:
            return 0
        mkeys, cls, mask = self._flat
        drop = K.sorted_member(np.sort(K.to_map_keys(packed, self.axis)), mkeys)
        removed = int(drop.sum())
        if removed:
            keep = ~drop
            self._set_flat((mkeys[keep], cls[keep], mask[keep]))
        return removed

    # -- queries ------------------------------------------------------------

    def flat(self) -> tuple[NDArray[np.int64], NDArray[np.uint8], NDArray[np.uint8]]:
        """All records as (packed map keys, classes, masks) sorted by map key."""
        return self._flat

    def query_state(self, v: Sequence[int]) -> OccupancyState:
        mkeys, cls, mask = self.flat()
        s = K.query_one(mkeys, cls, mask, K.pack(*v), self.axis)
        if s == K.CORRUPT:
            raise MapCorruptionError(f"run markers do not alternate in the column of {tuple(v)}")
        return OccupancyState(int(s))

    def query_packed(self, keys: NDArray[np.int64]) -> NDArray[np.int8]:
        """States for a batch of packed world keys."""
        mkeys, cls, mask = self.flat()
        out = K.query_many(mkeys, cls, mask, np.ascontiguousarray(keys, np.int64), self.axis)
        if (out == K.CORRUPT).any():
            raise MapCorruptionError("run markers do not alternate")
        return out

    def get(self, v: Sequence[int]) -> BoundaryRecord | None:
        mkeys, cls, mask = self._flat
        mkey = K.to_map_key(K.pack(*v), self.axis)
        pos = int(np.searchsorted(mkeys, mkey))
        if pos < len(mkeys) and mkeys[pos] == mkey:
            return BoundaryRecord(VoxelKey(*v), BoundaryClass(int(cls[pos])), int(mask[pos]))
        return None

    def __contains__(self, v: Sequence[int]) -> bool:
        return self.get(v) is not None

    def __len__(self) -> int:
        return self.record_count

    def record_array(self) -> RecordArray:
        """All records in ascending world-key order."""
        mkeys, cls, mask = self.flat()
        world = K.from_map_keys(mkeys, self.axis)
        order = np.argsort(world, kind="stable") if self.axis != 2 else slice(None)
        return RecordArray.from_packed(world[order], cls[order], mask[order])

    def records(self) -> Iterator[BoundaryRecord]:
        return iter(self.record_array())

    def memory_stats(self) -> MemoryStats:
        _, cls, _ = self.flat()
        counts = np.bincount(cls, minlength=4)
        return MemoryStats(
            column_count=self.column_count,
            record_count=self.record_count,
            interior=int(counts[K.INTERIOR]),
            exterior_unknown=int(counts[K.EXTERIOR_UNKNOWN]),
            exterior_occupied=int(counts[K.EXTERIOR_OCCUPIED]),
            estimated_bytes=self.record_count * BYTES_PER_RECORD + self.column_count * BYTES_PER_COLUMN,
        )

    def check(self) -> None:
        """Raise MapCorruptionError if any column's run markers fail to alternate."""
        mkeys, cls, mask = self.flat()
        cols = np.unique(mkeys >> K.COL_SHIFT)
        bad = K.check_columns(mkeys, cls, mask, cols, self.axis)
        if bad >= 0:
            raise MapCorruptionError(f"run markers do not alternate in column {self._column_of(cols[bad])}")

    # -- bulk replacement -----------------------------------------------------

    def replace_region(self, region: NDArray[np.int64], new: RecordArray | tuple) -> tuple[int, int]:
        """Drop every record whose key is in ``region`` and insert ``new``.

        ``region`` holds sorted packed world keys; ``new`` must lie inside it.
        The result is checked for marker alternation in every touched column
        before it is committed. Returns (records added, records removed).
        """
        if isinstance(new, RecordArray):
            new_keys, new_cls, new_mask = new.packed, new.cls, new.mask
        else:
            new_keys, new_cls, new_mask = new
        mkeys, cls, mask = self.flat()
        region_m = K.to_map_keys(region, self.axis)
        new_m = K.to_map_keys(new_keys, self.axis)
        if self.axis != 2:
            region_m = np.sort(region_m)
        drop = K.sorted_member(region_m, mkeys)
        removed = int(drop.sum())
        keep = ~drop
        keys = np.concatenate((mkeys[keep], new_m))
        order = np.argsort(keys, kind="stable")
        flat = (keys[order], np.concatenate((cls[keep], new_cls))[order], np.concatenate((mask[keep], new_mask))[order])

        touched = np.unique(region_m >> K.COL_SHIFT)
        bad = K.check_columns(*flat, touched, self.axis)
        if bad >= 0:
            raise MapCorruptionError(f"update broke run alternation in column {self._column_of(touched[bad])}")

        self._set_flat(flat)
        return len(new_m), removed

    @staticmethod
    def _column_of(col: int) -> tuple[int, int]:
        col = int(col)
        return (col >> 21) - K.BIAS, (col & K.FIELD) - K.BIAS

    @classmethod
    def from_records(cls, d: float, records: RecordArray | Iterable[BoundaryRecord], projection_axis: str = "z"):
        bmap = cls(d, projection_axis)
        if not isinstance(records, RecordArray):
            records = RecordArray.from_records(records)
        packed = np.sort(records.packed) if len(records) else np.empty(0, np.int64)
        bmap.replace_region(packed, records)
        return bmap

    # -- text export ----------------------------------------------------------

    def export(self, path: str | Path) -> None:
        """Write ``<i> <j> <k> <class> <mask>`` lines in ascending key order."""
        recs = self.record_array()
        with open(path, "w") as fh:
            for (i, j, k), c, m in zip(recs.keys.tolist(), recs.cls.tolist(), recs.mask.tolist()):
                fh.write(f"{i} {j} {k} {_CLASS_TOKENS[BoundaryClass(c)]} {m}\n")

    @classmethod
    def load(cls, path: str | Path, d: float, projection_axis: str = "z") -> BoundaryMap:
        records = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                try:
                    i, j, k = (int(p) for p in parts[:3])
                    c = _TOKEN_CLASSES[parts[3]]
                    m = int(parts[4])
                    if len(parts) != 5 or not 0 <= m < 64:
                        raise ValueError
                except (ValueError, KeyError, IndexError):
                    raise ValueError(f"{path}:{lineno}: malformed record line {line.strip()!r}") from None
                records.append(BoundaryRecord(VoxelKey(i, j, k), c, m))
        return cls.from_records(d, records, projection_axis)
