"""Per-scan update of the boundary map, with no intermediate 3D grid."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from boundmap import _kernels as K
from boundmap.boundary import BoundaryMap, MapCorruptionError, RecordArray
from boundmap.core import SQRT3, MapConfig, OccupancyState, Scan, VoxelKey, filter_scan, six_neighbors, world_to_voxel
from boundmap.depth_image import generate_depth_image, populate_candidates
from boundmap.raycast import UpdateSet, truncated_ray_casting
from boundmap.report import UpdateReport


def _pack2(a: NDArray[np.int64], b: NDArray[np.int64]) -> NDArray[np.int64]:
    return ((a + K.BIAS) << K.COL_SHIFT) | (b + K.BIAS)


def _plane(xyz, axis: int) -> tuple[float, float]:
    """The two coordinates spanning the plane orthogonal to ``axis``, in map order."""
    if axis == 2:
        return xyz[0], xyz[1]
    if axis == 0:
        return xyz[1], xyz[2]
    return xyz[0], xyz[2]


class CellsList:
    """Columns under the circular footprint of the sensing ball.

    Membership is every column whose center lies within ``R + d`` of the
    sensor, measured in the projection plane. Cells are packed column keys
    in ascending order.
    """

    def __init__(self, d: float, R: float):
        self.d = d
        self.R = R
        self.packed = np.empty(0, np.int64)
        self.last_center: tuple[float, float] | None = None

    def __len__(self) -> int:
        return len(self.packed)

    def __contains__(self, cell) -> bool:
        key = _pack2(np.int64(cell[0]), np.int64(cell[1]))
        n = np.searchsorted(self.packed, key)
        return bool(n < len(self.packed) and self.packed[n] == key)

    @property
    def cells(self) -> set[tuple[int, int]]:
        a = (self.packed >> K.COL_SHIFT) - K.BIAS
        b = (self.packed & K.FIELD) - K.BIAS
        return set(zip(a.tolist(), b.tolist()))

    def disk(self, center: tuple[float, float]) -> NDArray[np.int64]:
        d, reach = self.d, self.R + self.d
        cx, cy = center
        ia = np.arange(math.floor((cx - reach) / d) - 1, math.floor((cx + reach) / d) + 2, dtype=np.int64)
        ib = np.arange(math.floor((cy - reach) / d) - 1, math.floor((cy + reach) / d) + 2, dtype=np.int64)
        A, B = np.meshgrid(ia, ib, indexing="ij")
        inside = ((A + 0.5) * d - cx) ** 2 + ((B + 0.5) * d - cy) ** 2 <= reach * reach
        return np.sort(_pack2(A[inside], B[inside]))


def update_cells_list(cells: CellsList, origin_xy: tuple[float, float], R: float | None = None) -> tuple[int, int]:
    """Slide the footprint to ``origin_xy``. Returns (cells added, cells removed)."""
    if R is not None and R != cells.R:
        cells.R = R
        cells.last_center = None
    center = (float(origin_xy[0]), float(origin_xy[1]))
    if cells.last_center == center:
        return 0, 0
    new = cells.disk(center)
    added = np.setdiff1d(new, cells.packed, assume_unique=True)
    removed = np.setdiff1d(cells.packed, new, assume_unique=True)
    if len(added) or len(removed):
        keep = cells.packed[~np.isin(cells.packed, removed, assume_unique=True)]
        cells.packed = np.union1d(keep, added)
    cells.last_center = center
    return len(added), len(removed)


def get_boundary_voxels_in_fov(
    bmap: BoundaryMap, cells: CellsList, origin, R: float, d: float
) -> RecordArray:
    """Records in the listed columns whose centers lie within ``R + sqrt(3) d / 2`` of the origin.

    The margin keeps voxels whose centers sit just past the sensing range but
    whose cubes still overlap in-range rays. Result is in ascending key order.
    """
    mkeys, cls, mask = bmap.flat()
    if len(mkeys) == 0:
        return RecordArray.empty()
    in_k = K.sorted_member(cells.packed, mkeys >> K.COL_SHIFT)
    mk = mkeys[in_k]
    world = K.from_map_keys(mk, bmap.axis)
    keys = K.unpack_array(world)
    centers = (keys + 0.5) * d - np.asarray(origin, np.float64)
    reach = R + 0.5 * SQRT3 * d
    near = np.einsum("ij,ij->i", centers, centers) <= reach * reach
    keys, c, m = keys[near], cls[in_k][near], mask[in_k][near]
    if bmap.axis != 2:
        order = np.argsort(world[near], kind="stable")
        keys, c, m = keys[order], c[order], m[order]
    return RecordArray(np.ascontiguousarray(keys), c, m)


@dataclass
class BoundaryDelta:
    effective: int
    F_size: int
    records_added: int
    records_removed: int


def update_boundary_map(bmap: BoundaryMap, update: UpdateSet) -> BoundaryDelta:
    """Patch the boundary around the voxels whose state the update changes.

    Entries that repeat a voxel's current state are dropped first; only the
    remaining voxels and their six neighbors (the inflated space F) can change
    boundary status. Every status is computed against the map as it stood
    before the update, then the records in F are swapped out in one step.
    """
    if len(update) == 0:
        return BoundaryDelta(0, 0, 0, 0)
    mkeys, cls, mask = bmap.flat()
    l_keys, l_states, corrupt = K.effective_updates(update.keys, update.states, mkeys, cls, mask, bmap.axis)
    if corrupt:
        raise MapCorruptionError("run markers do not alternate in an updated column")
    if len(l_keys) == 0:
        return BoundaryDelta(0, 0, 0, 0)
    f_keys = K.inflate(l_keys)
    new_k, new_c, new_m, corrupt = K.recompute_status(f_keys, l_keys, l_states, mkeys, cls, mask, bmap.axis)
    if corrupt:
        raise MapCorruptionError("run markers do not alternate next to an updated voxel")
    added, removed = bmap.replace_region(f_keys, (new_k, new_c, new_m))
    return BoundaryDelta(len(l_keys), len(f_keys), added, removed)


@dataclass
class InflatedUpdateSpace:
    voxels: set[VoxelKey]
    state_cache: dict[VoxelKey, OccupancyState]


def inflated_update_space(bmap: BoundaryMap, update: UpdateSet) -> InflatedUpdateSpace:
    """Explicit F and its state snapshot, for inspection.

    ``state_cache`` covers F and one ring beyond it, reading the update set
    first and the unmodified map otherwise.
    """
    entries = update.entries
    voxels: set[VoxelKey] = set()
    for key in entries:
        voxels.add(key)
        voxels.update(six_neighbors(key))
    domain = set(voxels)
    for key in voxels:
        domain.update(six_neighbors(key))
    cache = {v: entries[v] if v in entries else bmap.query_state(v) for v in domain}
    return InflatedUpdateSpace(voxels, cache)


def integrate_scan(
    bmap: BoundaryMap,
    scan: Scan,
    config: MapConfig,
    cells: CellsList | None = None,
    *,
    threads: int = 1,
    scan_index: int = 0,
) -> UpdateReport:
    """Integrate one scan into the boundary map."""
    t_start = time.perf_counter()
    scan = filter_scan(scan, config)
    if cells is None:
        cells = CellsList(config.d, config.R)
    origin = scan.origin
    update_cells_list(cells, _plane(origin, bmap.axis), config.R)
    fov = get_boundary_voxels_in_fov(bmap, cells, origin, config.R, config.d)

    t0 = time.perf_counter()
    image = generate_depth_image(scan, config.psi)
    t1 = time.perf_counter()
    populate_candidates(image, fov, origin, config)
    t2 = time.perf_counter()
    origin_state = bmap.query_state(world_to_voxel(origin, config.d))
    update = truncated_ray_casting(fov, origin, image, config, origin_state, threads=threads)
    t3 = time.perf_counter()
    delta = update_boundary_map(bmap, update)
    t4 = time.perf_counter()
    return UpdateReport(
        scan_index=scan_index,
        n_points=len(scan),
        n_rays=update.n_rays,
        traversed=update.traversed_count,
        L_size=len(update),
        F_size=delta.F_size,
        records_added=delta.records_added,
        records_removed=delta.records_removed,
        record_count=bmap.record_count,
        t_depth_us=int((t1 - t0) * 1e6),
        t_candidates_us=int((t2 - t1) * 1e6),
        t_raycast_us=int((t3 - t2) * 1e6),
        t_update_us=int((t4 - t3) * 1e6),
        t_total_us=int((t4 - t_start) * 1e6),
    )


class BoundaryMapper:
    """Scan-by-scan driver holding the boundary map and its cells list."""

    def __init__(self, config: MapConfig, *, threads: int = 1):
        self.config = config
        self.map = BoundaryMap(config.d, config.projection_axis)
        self.cells = CellsList(config.d, config.R)
        self.threads = threads
        self.reports: list[UpdateReport] = []

    def integrate(self, scan: Scan) -> UpdateReport:
        rep = integrate_scan(
            self.map, scan, self.config, self.cells, threads=self.threads, scan_index=len(self.reports)
        )
        self.reports.append(rep)
        return rep
