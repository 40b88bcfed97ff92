"""Voxel indexing, occupancy states, scans and the scan-log text format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)

AXES = ("x", "y", "z")


class OccupancyState(IntEnum):
    # Ordered so that max() implements "occupied wins" when merging verdicts.
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


class VoxelKey(NamedTuple):
    i: int
    j: int
    k: int


class SphericalCoord(NamedTuple):
    r: float
    theta: float
    phi: float


@dataclass(frozen=True)
class MapConfig:
    """Mapping parameters.

    Attributes:
        d: voxel edge length in meters.
        R: sensing range in meters; returns farther than this are dropped.
        psi: angular resolution of the depth image in radians.
        inflation: scale of the projected voxel footprint, in units of ``d``.
            ``sqrt(3)`` bounds the whole cube; ``sqrt(2)`` only a face.
        projection_axis: axis the boundary columns are stacked along.
    """

    d: float = 0.25
    R: float = 20.0
    psi: float = 0.01
    inflation: float = SQRT3
    projection_axis: str = "z"

    def __post_init__(self) -> None:
        if not self.d > 0:
            raise ValueError(f"resolution must be positive, got {self.d}")
        if not self.R > self.d:
            raise ValueError(f"range {self.R} must exceed resolution {self.d}")
        if not self.psi > 0:
            raise ValueError(f"psi must be positive, got {self.psi}")
        if not self.inflation > 0:
            raise ValueError(f"inflation must be positive, got {self.inflation}")
        if self.projection_axis not in AXES:
            raise ValueError(f"projection_axis must be one of {AXES}")

    @property
    def axis_index(self) -> int:
        return AXES.index(self.projection_axis)

    @property
    def min_range(self) -> float:
        """Near-field cutoff; closer returns are discarded at ingestion."""
        return self.d / 10.0


@dataclass(frozen=True)
class Scan:
    origin: NDArray[np.float64]
    points: NDArray[np.float64]
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        points = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        origin.setflags(write=False)
        points.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)


def world_to_voxel(p: Sequence[float], d: float) -> VoxelKey:
    return VoxelKey(*(math.floor(c / d) for c in p))


def voxel_center(v: Sequence[int], d: float) -> tuple[float, float, float]:
    return ((v[0] + 0.5) * d, (v[1] + 0.5) * d, (v[2] + 0.5) * d)


def cartesian_to_spherical(p: Sequence[float]) -> SphericalCoord:
    """Range, azimuth in [-pi, pi) and elevation in [-pi/2, pi/2] of ``p``."""
    x, y, z = (float(c) for c in p)
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        raise ValueError("cannot convert a zero-length vector to spherical coordinates")
    theta = math.atan2(y, x)
    if theta >= math.pi:
        theta -= 2.0 * math.pi
    phi = math.asin(max(-1.0, min(1.0, z / r)))
    return SphericalCoord(r, theta, phi)


def spherical_to_cartesian(s: SphericalCoord) -> tuple[float, float, float]:
    r, theta, phi = s
    c = math.cos(phi)
    return (r * c * math.cos(theta), r * c * math.sin(theta), r * math.sin(phi))


_NEIGHBOR_OFFSETS = ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))


def six_neighbors(v: Sequence[int]) -> list[VoxelKey]:
    """Face neighbors in the fixed order -x, +x, -y, +y, -z, +z."""
    i, j, k = v
    return [VoxelKey(i + a, j + b, k + c) for a, b, c in _NEIGHBOR_OFFSETS]


def filter_scan(scan: Scan, config: MapConfig) -> Scan:
    """Drop returns closer than ``d/10`` or farther than the sensing range."""
    if len(scan.points) == 0:
        return scan
    r = np.linalg.norm(scan.points - scan.origin, axis=1)
    keep = (r >= config.min_range) & (r <= config.R)
    if keep.all():
        return scan
    return Scan(scan.origin, scan.points[keep], scan.timestamp)


# Scan-log format ----------------------------------------------------------
#
#   FRAME <timestamp> <ox> <oy> <oz>
#   <px> <py> <pz>
#   ...
#
# Lines starting with '#' are comments. A "# psi <radians>" comment records
# the angular spacing of the pattern that produced the log.


class ScanLogError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def write_scan_log(path: str | Path, scans: Iterable[Scan], psi: float | None = None) -> None:
    with open(path, "w") as fh:
        if psi is not None:
            fh.write(f"# psi {_fmt(psi)}\n")
        for scan in scans:
            ox, oy, oz = scan.origin
            fh.write(f"FRAME {_fmt(scan.timestamp)} {_fmt(ox)} {_fmt(oy)} {_fmt(oz)}\n")
            fh.writelines(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n" for x, y, z in scan.points)


def scan_log_psi(path: str | Path) -> float | None:
    """Return the pattern spacing recorded in a scan log header, if any."""
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                return None
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "psi":
                return float(parts[1])
    return None


def iter_scan_log(path: str | Path) -> Iterator[Scan]:
    header: tuple[float, list[float]] | None = None
    rows: list[list[float]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "FRAME":
                    if len(parts) != 5:
                        raise ValueError("FRAME needs timestamp and 3 origin coordinates")
                    if header is not None:
                        yield Scan(header[1], np.array(rows).reshape(-1, 3), header[0])
                    header = (float(parts[1]), [float(v) for v in parts[2:]])
                    rows = []
                else:
                    if header is None:
                        raise ValueError("point line before first FRAME header")
                    if len(parts) != 3:
                        raise ValueError(f"expected 3 coordinates, got {len(parts)}")
                    rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise ScanLogError(f"{path}:{lineno}: {exc}") from None
    if header is not None:
        yield Scan(header[1], np.array(rows).reshape(-1, 3), header[0])


def read_scan_log(path: str | Path) -> list[Scan]:
    return list(iter_scan_log(path))
