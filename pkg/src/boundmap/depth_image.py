"""Spherical depth raster of a scan and boundary-voxel candidate binning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

from boundmap import _kernels as K
from boundmap.boundary import BoundaryRecord, RecordArray
from boundmap.core import SQRT3, MapConfig, Scan, voxel_center


def image_size(psi: float) -> tuple[int, int]:
    """(width, height) of the raster: azimuth columns by elevation rows."""
    return math.ceil(2.0 * math.pi / psi), math.ceil(math.pi / psi)


@dataclass
class DepthImage:
    """Nearest return per pixel plus the boundary voxels binned onto each pixel.

    Pixel ``(u, v)`` covers azimuth ``[u psi - pi, (u + 1) psi - pi)`` and
    elevation ``[v psi - pi/2, (v + 1) psi - pi/2)``. Pixels are stored flat
    as ``v * width + u``. Empty pixels have infinite depth.
    """

    psi: float
    width: int
    height: int
    origin: NDArray[np.float64]
    depth: NDArray[np.float64]
    point_index: NDArray[np.int64]
    points: NDArray[np.float64]
    records: RecordArray = field(default_factory=RecordArray.empty)
    cand_off: NDArray[np.int64] | None = None
    cand_idx: NDArray[np.int64] | None = None

    def pixel_id(self, u: int, v: int) -> int:
        return v * self.width + u

    def return_depth(self, u: int, v: int) -> float | None:
        r = self.depth[self.pixel_id(u, v)]
        return None if math.isinf(r) else float(r)

    def return_point(self, u: int, v: int) -> NDArray[np.float64] | None:
        n = self.point_index[self.pixel_id(u, v)]
        return None if n < 0 else self.points[n]

    def ray_pixels(self) -> NDArray[np.int64]:
        """Flat ids of the pixels holding a return, ascending."""
        return np.flatnonzero(self.point_index >= 0)

    def ray_ends(self, pixels: NDArray[np.int64] | None = None) -> NDArray[np.float64]:
        if pixels is None:
            pixels = self.ray_pixels()
        return np.ascontiguousarray(self.points[self.point_index[pixels]])

    @property
    def n_returns(self) -> int:
        return int((self.point_index >= 0).sum())

    def candidates(self, u: int, v: int) -> list[BoundaryRecord]:
        if self.cand_off is None:
            return []
        px = self.pixel_id(u, v)
        return [self.records[int(q)] for q in self.cand_idx[self.cand_off[px] : self.cand_off[px + 1]]]

    def candidate_count(self) -> int:
        return 0 if self.cand_idx is None else len(self.cand_idx)

    def write_pgm(self, path: str | Path, max_depth: float | None = None) -> None:
        """8-bit PGM of the depths; empty pixels black, near returns bright."""
        depth = self.depth.reshape(self.height, self.width)[::-1]
        finite = np.isfinite(depth)
        top = max_depth or (float(depth[finite].max()) if finite.any() else 1.0)
        img = np.zeros(depth.shape, np.uint8)
        img[finite] = np.clip(255.0 * (1.0 - depth[finite] / top), 1, 255).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{self.width} {self.height}\n255\n".encode())
            fh.write(img.tobytes())


def generate_depth_image(scan: Scan, psi: float) -> DepthImage:
    width, height = image_size(psi)
    points = np.ascontiguousarray(scan.points, dtype=np.float64)
    depth, index = K.rasterize_points(points, scan.origin, psi, width, height)
    return DepthImage(psi, width, height, scan.origin, depth, index, points)


class Footprint(NamedTuple):
    """Pixel rows ``rows[0]..rows[1]`` and one or two inclusive column ranges."""

    rows: tuple[int, int]
    cols: list[tuple[int, int]]

    def pixels(self) -> set[tuple[int, int]]:
        return {(u, v) for v in range(self.rows[0], self.rows[1] + 1) for lo, hi in self.cols for u in range(lo, hi + 1)}


def project_boundary_voxel(
    record: BoundaryRecord | Sequence[int],
    origin: Sequence[float],
    psi: float,
    inflation: float,
    d: float,
    exact_cap: bool = True,
) -> Footprint:
    """Pixel rectangle covering a boundary voxel seen from ``origin``.

    The voxel is replaced by a ball of diameter ``inflation * d`` around its
    center. With ``exact_cap=False`` the half-angle is
    ``arctan(inflation * d / (2 r))`` on both axes. The default uses the
    ball's true angular radius and widens the azimuth range by
    ``1 / cos(elevation)``, collapsing to the full azimuth near the poles, so
    the rectangle always covers the ball.
    """
    key = record.key if isinstance(record, BoundaryRecord) else record
    c = np.subtract(voxel_center(key, d), origin)
    r = float(np.linalg.norm(c))
    if r <= d:
        raise ValueError(f"voxel {tuple(key)} is within one voxel of the origin")
    width, height = image_size(psi)
    v0, v1, u0, u1, u2, u3 = K.footprint(c[0], c[1], c[2], 0.5 * inflation * d, psi, width, height, exact_cap)
    cols = [(int(u0), int(u1))]
    if u2 <= u3:
        cols.append((int(u2), int(u3)))
    return Footprint((int(v0), int(v1)), cols)


def populate_candidates(
    image: DepthImage,
    boundary_in_fov: RecordArray,
    origin: Sequence[float] | None = None,
    config: MapConfig | None = None,
    *,
    inflation: float | None = None,
    d: float | None = None,
    exact_cap: bool = True,
) -> None:
    """Bin boundary voxels onto the pixels whose rays they may block.

    A voxel is attached to a non-empty pixel of its footprint when its center
    is nearer than the pixel's return plus half the voxel diagonal, which
    keeps the voxel holding the return itself.
    """
    if config is not None:
        inflation = config.inflation if inflation is None else inflation
        d = config.d if d is None else d
    if inflation is None or d is None:
        raise ValueError("need a config or explicit inflation and d")
    origin = image.origin if origin is None else np.asarray(origin, np.float64)
    keys = np.ascontiguousarray(boundary_in_fov.keys, dtype=np.int64)
    off, idx = K.build_candidates(
        keys,
        origin,
        d,
        image.psi,
        image.width,
        image.height,
        image.depth,
        0.5 * inflation * d,
        0.5 * SQRT3 * d,
        exact_cap,
    )
    image.records = boundary_in_fov
    image.cand_off = off
    image.cand_idx = idx
