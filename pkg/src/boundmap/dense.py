"""Dense hash-grid mapper with full per-ray traversal.

This is the classical baseline: every ray clears every voxel it crosses.
It doubles as the ground truth the boundary map is checked against.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import types
from numba.typed import Dict
from numpy.typing import NDArray

from boundmap import _kernels as K
from boundmap.boundary import BoundaryRecord, RecordArray
from boundmap.core import MapConfig, OccupancyState, Scan, VoxelKey, filter_scan
from boundmap.depth_image import generate_depth_image
from boundmap.raycast import UpdateSet, classical_update_set
from boundmap.report import UpdateReport

# packed key (int64) + state byte
BYTES_PER_VOXEL = 13

_STATE_TOKENS = {OccupancyState.FREE: "free", OccupancyState.OCCUPIED: "occupied"}


class DenseGrid:
    """Observed voxels in a hash map; absent keys are unknown."""

    def __init__(self, d: float):
        if not d > 0:
            raise ValueError("resolution must be positive")
        self.d = d
        self.store = Dict.empty(key_type=types.int64, value_type=types.int8)

    def __len__(self) -> int:
        return len(self.store)

    def state(self, v: Sequence[int]) -> OccupancyState:
        key = K.pack(*v)
        return OccupancyState(int(self.store[key])) if key in self.store else OccupancyState.UNKNOWN

    def set_state(self, v: Sequence[int], state: OccupancyState) -> None:
        key = K.pack(*v)
        if state == OccupancyState.UNKNOWN:
            self.store.pop(key, None)
        else:
            self.store[key] = np.int8(state)

    def apply(self, update: UpdateSet) -> None:
        K.dense_apply(self.store, update.keys, update.states)

    def states_of(self, keys: NDArray[np.int64]) -> NDArray[np.int8]:
        return K.dense_lookup(self.store, np.ascontiguousarray(keys, np.int64))

    def items(self) -> tuple[NDArray[np.int64], NDArray[np.int8]]:
        """Stored (packed key, state) pairs in ascending key order."""
        if len(self.store) == 0:
            return np.empty(0, np.int64), np.empty(0, np.int8)
        return K.dense_items(self.store)

    def bounds(self) -> tuple[NDArray[np.int64], NDArray[np.int64]] | None:
        """Inclusive index bounding box of the stored voxels."""
        keys, _ = self.items()
        if len(keys) == 0:
            return None
        idx = K.unpack_array(keys)
        return idx.min(axis=0), idx.max(axis=0)

    def estimated_bytes(self) -> int:
        return len(self.store) * BYTES_PER_VOXEL

    def export(self, path: str | Path) -> None:
        """Write ``<i> <j> <k> <state>`` lines in ascending key order."""
        keys, states = self.items()
        with open(path, "w") as fh:
            for (i, j, k), s in zip(K.unpack_array(keys).tolist(), states.tolist()):
                fh.write(f"{i} {j} {k} {_STATE_TOKENS[OccupancyState(s)]}\n")


def dda_traverse(origin: Sequence[float], end: Sequence[float], d: float) -> list[VoxelKey]:
    """Voxels pierced by the segment from ``origin`` to ``end``, in order.

    Both end voxels are included. Where the segment crosses an edge or a
    corner exactly, the axes are stepped one at a time, x before y before z.
    """
    o = np.asarray(origin, np.float64)
    e = np.asarray(end, np.float64).reshape(1, 3)
    if np.array_equal(o, e[0]):
        raise ValueError("zero-length ray")
    free, end_keys, _ = K.classical_rays(o, e, d, 0, 1)
    keys = K.unpack_array(np.concatenate((free, end_keys)))
    return [VoxelKey(*k) for k in keys.tolist()]


def scan_rays(scan: Scan, config: MapConfig) -> tuple[NDArray[np.float64], float]:
    """Ray ends of a scan, one per depth-image pixel (nearest return).

    Returns (ends, seconds spent building the depth image).
    """
    t0 = time.perf_counter()
    image = generate_depth_image(scan, config.psi)
    ends = image.ray_ends()
    return ends, time.perf_counter() - t0


def integrate_scan_classical(
    grid: DenseGrid,
    scan: Scan,
    config: MapConfig,
    *,
    per_point: bool = False,
    threads: int = 1,
    scan_index: int = 0,
) -> UpdateReport:
    """Clear every voxel along each ray and mark each return voxel occupied.

    Rays are the nearest return of each depth-image pixel, or every raw point
    with ``per_point``. Within the scan occupied beats free; the scan's
    verdicts overwrite whatever the grid held before.
    """
    t_start = time.perf_counter()
    scan = filter_scan(scan, config)
    if per_point:
        ends, t_depth = np.ascontiguousarray(scan.points), 0.0
    else:
        ends, t_depth = scan_rays(scan, config)
    t0 = time.perf_counter()
    update = classical_update_set(scan.origin, ends, config.d, threads)
    t1 = time.perf_counter()
    grid.apply(update)
    t2 = time.perf_counter()
    return UpdateReport(
        scan_index=scan_index,
        n_points=len(scan),
        n_rays=len(ends),
        traversed=update.traversed_count,
        L_size=len(update),
        record_count=len(grid),
        t_depth_us=int(t_depth * 1e6),
        t_raycast_us=int((t1 - t0) * 1e6),
        t_update_us=int((t2 - t1) * 1e6),
        t_total_us=int((t2 - t_start) * 1e6),
    )


def audit_boundary_array(grid: DenseGrid) -> RecordArray:
    """Boundary records of a dense grid, by exhaustive classification."""
    if len(grid.store) == 0:
        return RecordArray.empty()
    keys, cls, mask = K.dense_audit(grid.store)
    return RecordArray.from_packed(keys, cls, mask)


def audit_boundary(grid: DenseGrid) -> set[BoundaryRecord]:
    return audit_boundary_array(grid).to_set()


class DenseMapper:
    """Scan-by-scan driver around a DenseGrid."""

    def __init__(self, config: MapConfig, *, per_point: bool = False, threads: int = 1):
        self.config = config
        self.grid = DenseGrid(config.d)
        self.per_point = per_point
        self.threads = threads
        self.reports: list[UpdateReport] = []

    def integrate(self, scan: Scan) -> UpdateReport:
        rep = integrate_scan_classical(
            self.grid, scan, self.config, per_point=self.per_point, threads=self.threads, scan_index=len(self.reports)
        )
        self.reports.append(rep)
        return rep
