"""Boundary-surface occupancy mapping with truncated ray casting.

The persistent map stores only voxels straddling the surface that separates
free space from unknown/occupied space. Each scan is integrated by casting
rays only along the parts that leave that surface, and the surface is then
patched in place around the changed voxels.
"""

from boundmap.core import (
    MapConfig,
    OccupancyState,
    Scan,
    SphericalCoord,
    VoxelKey,
    cartesian_to_spherical,
    filter_scan,
    read_scan_log,
    six_neighbors,
    spherical_to_cartesian,
    voxel_center,
    world_to_voxel,
    write_scan_log,
)
from boundmap.boundary import (
    BoundaryClass,
    BoundaryMap,
    BoundaryRecord,
    ColumnCell,
    MapCorruptionError,
    compute_boundary_status,
)
from boundmap.dense import DenseGrid, audit_boundary, dda_traverse, integrate_scan_classical
from boundmap.update import BoundaryMapper, CellsList, UpdateReport, integrate_scan

__all__ = [
    "BoundaryClass",
    "BoundaryMap",
    "BoundaryMapper",
    "BoundaryRecord",
    "CellsList",
    "ColumnCell",
    "DenseGrid",
    "MapConfig",
    "MapCorruptionError",
    "OccupancyState",
    "Scan",
    "SphericalCoord",
    "UpdateReport",
    "VoxelKey",
    "audit_boundary",
    "cartesian_to_spherical",
    "compute_boundary_status",
    "dda_traverse",
    "filter_scan",
    "integrate_scan",
    "integrate_scan_classical",
    "read_scan_log",
    "six_neighbors",
    "spherical_to_cartesian",
    "voxel_center",
    "world_to_voxel",
    "write_scan_log",
]
