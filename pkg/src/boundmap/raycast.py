"""Truncated ray casting: traverse only the parts of each ray outside the boundary."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from boundmap import _kernels as K
from boundmap.boundary import BoundaryClass, BoundaryRecord, RecordArray
from boundmap.core import MapConfig, OccupancyState, VoxelKey, world_to_voxel
from boundmap.depth_image import DepthImage


class RaySegmentState(Enum):
    INTERIOR = "interior"
    EXTERIOR = "exterior"


@dataclass
class UpdateSet:
    """Deduplicated state changes of one scan, occupied winning over free.

    ``keys`` are packed voxel keys in ascending order.
    """

    keys: NDArray[np.int64]
    states: NDArray[np.int8]
    traversed_count: int = 0
    n_rays: int = 0

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def entries(self) -> dict[VoxelKey, OccupancyState]:
        return {
            VoxelKey(*k): OccupancyState(int(s))
            for k, s in zip(K.unpack_array(self.keys).tolist(), self.states.tolist())
        }

    @classmethod
    def empty(cls) -> UpdateSet:
        return cls(np.empty(0, np.int64), np.empty(0, np.int8))


def slab_intersect(
    origin: Sequence[float], direction: Sequence[float], box_min: Sequence[float], box_max: Sequence[float]
) -> tuple[float, float] | None:
    """Entry and exit parameters of the ray ``origin + t * direction`` through a box.

    Returns None when the ray misses the box or the box lies entirely behind
    the origin. Axes with a zero direction component only check that the
    origin lies within that slab.
    """
    t_in, t_out = -math.inf, math.inf
    for o, dv, lo, hi in zip(origin, direction, box_min, box_max):
        if dv == 0.0:
            if o < lo or o > hi:
                return None
            continue
        t1 = (lo - o) / dv
        t2 = (hi - o) / dv
        if t1 > t2:
            t1, t2 = t2, t1
        t_in = max(t_in, t1)
        t_out = min(t_out, t2)
        if t_in > t_out:
            return None
    if t_out < 0.0:
        return None
    return t_in, t_out


def _record_arrays(records: Sequence[BoundaryRecord]) -> tuple[NDArray[np.int64], NDArray[np.uint8]]:
    keys = np.array([r.key for r in records], dtype=np.int64).reshape(-1, 3)
    cls = np.array([int(r.cls) for r in records], dtype=np.uint8)
    return keys, cls


def refine_and_sort(
    candidates: Sequence[BoundaryRecord],
    origin: Sequence[float],
    direction: Sequence[float],
    segment_length: float,
    d: float,
) -> list[tuple[BoundaryRecord, float]]:
    """Drop candidates the segment does not pierce and order the rest along it.

    The segment runs from ``origin`` to ``origin + segment_length * direction``.
    Voxels entered after the voxel holding the segment end are dropped too.
    Returns (record, entry distance in meters) pairs by entry distance, ties
    broken by key.
    """
    if not candidates:
        return []
    recs = sorted(candidates, key=lambda r: tuple(r.key))
    keys, cls = _record_arrays(recs)
    o = np.asarray(origin, np.float64)
    end = o + segment_length * np.asarray(direction, np.float64)
    D = end - o
    e = world_to_voxel(end, d)
    t_end, _ = K.voxel_slab(o[0], o[1], o[2], D[0], D[1], D[2], e[0], e[1], e[2], d)
    ts, idx = K.refine_candidates(
        o[0], o[1], o[2], D[0], D[1], D[2], d, t_end, np.arange(len(recs), dtype=np.int64), keys, cls
    )
    return [(recs[q], float(t) * segment_length) for t, q in zip(ts, idx)]


@dataclass
class RayTrace:
    traversed: list[VoxelKey]
    endpoint: VoxelKey
    visited: int
    exterior_segments: int


def trace_ray(
    refined: Sequence[tuple[BoundaryRecord, float]] | Sequence[BoundaryRecord],
    origin: Sequence[float],
    return_point: Sequence[float],
    origin_state: OccupancyState,
    d: float,
) -> RayTrace:
    """Run the interior/exterior state machine along one ray.

    ``refined`` is the output of ``refine_and_sort`` (or just its records, in
    order). The ray starts inside when the origin voxel is free, otherwise it
    starts outside at the origin voxel.
    """
    recs = [r[0] if isinstance(r, tuple) and not isinstance(r, BoundaryRecord) else r for r in refined]
    o = np.asarray(origin, np.float64)
    p = np.asarray(return_point, np.float64)
    D = p - o
    keys, cls = _record_arrays(recs)
    ts = np.array(
        [K.voxel_slab(o[0], o[1], o[2], D[0], D[1], D[2], k[0], k[1], k[2], d)[0] for k in keys], dtype=np.float64
    )
    buf = np.empty(64, np.int64)
    buf, pos, visited, segments = K.walk_exterior(
        o[0], o[1], o[2], p[0], p[1], p[2], d, origin_state == OccupancyState.FREE, ts, keys, cls, buf, 0
    )
    traversed = [VoxelKey(*k) for k in K.unpack_array(buf[:pos]).tolist()]
    return RayTrace(traversed, world_to_voxel(p, d), int(visited), int(segments))


def process_ray(
    refined: Sequence[tuple[BoundaryRecord, float]] | Sequence[BoundaryRecord],
    origin: Sequence[float],
    return_point: Sequence[float],
    origin_state: OccupancyState,
    d: float,
) -> tuple[list[VoxelKey], VoxelKey]:
    """Voxels cleared by one ray and the voxel holding its return."""
    t = trace_ray(refined, origin, return_point, origin_state, d)
    return t.traversed, t.endpoint


# --------------------------------------------------------------------------
# Whole-scan casting


def run_chunked(kernel: Callable, n_rays: int, threads: int, *args):
    """Run a per-ray-range kernel over ``n_rays`` split into ``threads`` chunks.

    Chunk outputs are concatenated in ray order, so the result does not
    depend on the thread count.
    """
    threads = max(1, min(threads, n_rays))
    if threads == 1:
        return kernel(*args, 0, n_rays)
    bounds = np.linspace(0, n_rays, threads + 1).astype(np.int64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda b: kernel(*args, int(b[0]), int(b[1])), zip(bounds[:-1], bounds[1:])))
    return tuple(np.concatenate([p[n] for p in parts]) for n in range(3))


def _to_update_set(free, ends, visited) -> UpdateSet:
    keys, states = K.merge_verdicts(free, ends)
    return UpdateSet(keys, states, int(visited.sum()), len(ends))


def classical_update_set(origin: NDArray[np.float64], ends: NDArray[np.float64], d: float, threads: int = 1) -> UpdateSet:
    """Full traversal of every ray from ``origin`` to each row of ``ends``."""
    if len(ends) == 0:
        return UpdateSet.empty()
    free, end_keys, visited = run_chunked(K.classical_rays, len(ends), threads, np.asarray(origin, np.float64), ends, d)
    return _to_update_set(free, end_keys, visited)


def truncated_ray_casting(
    boundary_in_fov: RecordArray,
    origin: Sequence[float],
    depth_image: DepthImage,
    config: MapConfig,
    origin_state: OccupancyState = OccupancyState.FREE,
    threads: int = 1,
) -> UpdateSet:
    """Cast one truncated ray per non-empty pixel of ``depth_image``.

    Candidates must already be populated from ``boundary_in_fov``. Traversed
    voxels become free and return voxels occupied.
    """
    pixels = depth_image.ray_pixels()
    if len(pixels) == 0:
        return UpdateSet.empty()
    if depth_image.cand_off is None:
        raise ValueError("populate_candidates must run before truncated_ray_casting")
    ends = depth_image.ray_ends(pixels)
    free, end_keys, visited = run_chunked(
        K.truncated_rays,
        len(ends),
        threads,
        np.asarray(origin, np.float64),
        ends,
        pixels,
        depth_image.cand_off,
        depth_image.cand_idx,
        np.ascontiguousarray(boundary_in_fov.keys, np.int64),
        np.ascontiguousarray(boundary_in_fov.cls, np.uint8),
        config.d,
        origin_state == OccupancyState.FREE,
    )
    return _to_update_set(free, end_keys, visited)
