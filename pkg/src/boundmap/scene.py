"""Box worlds and a spinning-LiDAR simulator for reproducible test sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

from boundmap.core import Scan


class SceneError(ValueError):
    pass


class Box(NamedTuple):
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def contains(self, p: Sequence[float]) -> bool:
        return all(a <= c <= b for a, c, b in zip(self.lo, p, self.hi))

    def inflated(self, margin: float) -> Box:
        return Box(tuple(float(c - margin) for c in self.lo), tuple(float(c + margin) for c in self.hi))


def _box(lo: Sequence[float], hi: Sequence[float]) -> Box:
    lo = tuple(float(c) for c in lo)
    hi = tuple(float(c) for c in hi)
    if not all(a < b for a, b in zip(lo, hi)):
        raise SceneError(f"degenerate box {lo} - {hi}")
    return Box(lo, hi)


@dataclass
class Scene:
    """Static boxes plus boxes present only for scans in ``[first, last)``."""

    static_boxes: list[Box] = field(default_factory=list)
    dynamic_boxes: list[tuple[Box, tuple[int, int]]] = field(default_factory=list)
    bounds: Box | None = None

    def __post_init__(self) -> None:
        boxes = self.static_boxes + [b for b, _ in self.dynamic_boxes]
        if self.bounds is None and boxes:
            self.bounds = _box(
                [min(b.lo[a] for b in boxes) for a in range(3)],
                [max(b.hi[a] for b in boxes) for a in range(3)],
            )
        if self.bounds is not None:
            for b in boxes:
                if not (self.bounds.contains(b.lo) and self.bounds.contains(b.hi)):
                    raise SceneError(f"box {b} outside scene bounds {self.bounds}")

    def visible_boxes(self, scan_index: int) -> list[Box]:
        return self.static_boxes + [b for b, (a, z) in self.dynamic_boxes if a <= scan_index < z]


class ScanPattern(NamedTuple):
    """Regular azimuth x elevation ray lattice, symmetric about the horizon."""

    n_azimuth: int = 128
    n_elevation: int = 32
    elevation_span: float = math.pi / 2
    max_range: float = 20.0

    def validate(self) -> None:
        if self.n_azimuth < 4:
            raise SceneError("pattern needs at least 4 azimuth steps")
        if self.n_elevation < 2:
            raise SceneError("pattern needs at least 2 elevation steps")
        if not 0 < self.elevation_span <= math.pi:
            raise SceneError("elevation span must lie in (0, pi]")
        if not self.max_range > 0:
            raise SceneError("max range must be positive")

    @property
    def spacing(self) -> float:
        """The finer of the azimuth and elevation steps, in radians."""
        return min(2.0 * math.pi / self.n_azimuth, self.elevation_span / self.n_elevation)

    def directions(self, yaw: float = 0.0) -> NDArray[np.float64]:
        # Half-step offsets keep rays off the coordinate axes and planes.
        az = yaw - math.pi + (np.arange(self.n_azimuth) + 0.5) * (2.0 * math.pi / self.n_azimuth)
        el = -0.5 * self.elevation_span + (np.arange(self.n_elevation) + 0.5) * (
            self.elevation_span / self.n_elevation
        )
        A, E = np.meshgrid(az, el, indexing="ij")
        A, E = A.ravel(), E.ravel()
        c = np.cos(E)
        return np.stack((c * np.cos(A), c * np.sin(A), np.sin(E)), axis=1)


class Pose(NamedTuple):
    t: float
    x: float
    y: float
    z: float
    yaw: float = 0.0

    @property
    def position(self) -> NDArray[np.float64]:
        return np.array([self.x, self.y, self.z])


def ray_box_hits(origin: NDArray, dirs: NDArray, box: Box) -> NDArray[np.float64]:
    """Distance along each ray to where it enters ``box``, inf on a miss."""
    t_in = np.full(len(dirs), -np.inf)
    t_out = np.full(len(dirs), np.inf)
    for a in range(3):
        o, D = origin[a], dirs[:, a]
        lo, hi = box.lo[a], box.hi[a]
        moving = D != 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(moving, (lo - o) / D, np.where(lo <= o, -np.inf, np.inf))
            t2 = np.where(moving, (hi - o) / D, np.where(o <= hi, np.inf, -np.inf))
        t_in = np.maximum(t_in, np.minimum(t1, t2))
        t_out = np.minimum(t_out, np.maximum(t1, t2))
    hit = (t_in <= t_out) & (t_in >= 0.0)
    return np.where(hit, t_in, np.inf)


def simulate_scan(scene: Scene, pose: Pose, pattern: ScanPattern, scan_index: int = 0) -> Scan:
    """Exact returns of every lattice ray against the boxes visible at ``scan_index``.

    Rays that hit nothing within the pattern's range produce no point.
    """
    pattern.validate()
    origin = pose.position
    if scene.bounds is not None and not scene.bounds.contains(origin):
        raise SceneError(f"pose {tuple(origin)} outside scene bounds")
    boxes = scene.visible_boxes(scan_index)
    for b in boxes:
        if b.contains(origin):
            raise SceneError(f"pose {tuple(origin)} inside box {b}")
    dirs = pattern.directions(pose.yaw)
    best = np.full(len(dirs), np.inf)
    for b in boxes:
        np.minimum(best, ray_box_hits(origin, dirs, b), out=best)
    hit = best <= pattern.max_range
    points = origin + best[hit, None] * dirs[hit]
    return Scan(origin, points, pose.t)


def simulate_sequence(scene: Scene, trajectory: Sequence[Pose], pattern: ScanPattern) -> list[Scan]:
    return [simulate_scan(scene, pose, pattern, n) for n, pose in enumerate(trajectory)]


# --------------------------------------------------------------------------
# Files


def _floats(parts: Sequence[str], where: str) -> list[float]:
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise SceneError(f"{where}: expected numbers, got {' '.join(parts)!r}") from None


def load_scene(path: str | Path) -> Scene:
    """Parse ``BOX x0 y0 z0 x1 y1 z1 [first last]`` lines (and optional ``BOUNDS``)."""
    static, dynamic, bounds = [], [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            where = f"{path}:{lineno}"
            tag, args = parts[0], parts[1:]
            if tag == "BOX" and len(args) in (6, 8):
                v = _floats(args[:6], where)
                try:
                    box = _box(v[:3], v[3:])
                except SceneError as exc:
                    raise SceneError(f"{where}: {exc}") from None
                if len(args) == 8:
                    try:
                        first, last = int(args[6]), int(args[7])
                    except ValueError:
                        raise SceneError(f"{where}: scan interval must be integers") from None
                    dynamic.append((box, (first, last)))
                else:
                    static.append(box)
            elif tag == "BOUNDS" and len(args) == 6:
                v = _floats(args, where)
                bounds = _box(v[:3], v[3:])
            else:
                raise SceneError(f"{where}: malformed line {line.strip()!r}")
    try:
        return Scene(static, dynamic, bounds)
    except SceneError as exc:
        raise SceneError(f"{path}: {exc}") from None


def save_scene(path: str | Path, scene: Scene) -> None:
    with open(path, "w") as fh:
        if scene.bounds is not None:
            fh.write("BOUNDS " + " ".join(repr(float(c)) for c in scene.bounds.lo + scene.bounds.hi) + "\n")
        for b in scene.static_boxes:
            fh.write("BOX " + " ".join(repr(float(c)) for c in b.lo + b.hi) + "\n")
        for b, (first, last) in scene.dynamic_boxes:
            fh.write("BOX " + " ".join(repr(float(c)) for c in b.lo + b.hi) + f" {first} {last}\n")


def load_trajectory(path: str | Path) -> list[Pose]:
    poses = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] != "POSE" or len(parts) != 6:
                raise SceneError(f"{path}:{lineno}: expected 'POSE t x y z yaw'")
            poses.append(Pose(*_floats(parts[1:], f"{path}:{lineno}")))
    if not poses:
        raise SceneError(f"{path}: trajectory has no poses")
    return poses


def save_trajectory(path: str | Path, poses: Sequence[Pose]) -> None:
    with open(path, "w") as fh:
        for p in poses:
            fh.write("POSE " + " ".join(repr(float(c)) for c in p) + "\n")


# --------------------------------------------------------------------------
# Generators


def room_walls(lo: Sequence[float], hi: Sequence[float], thickness: float = 0.3) -> list[Box]:
    """Six slabs enclosing the interior ``lo..hi``."""
    lo, hi, t = np.asarray(lo, float), np.asarray(hi, float), thickness
    walls = []
    for a in range(3):
        for side in (0, 1):
            blo, bhi = lo - t, hi + t
            if side == 0:
                bhi = bhi.copy()
                bhi[a] = lo[a]
            else:
                blo = blo.copy()
                blo[a] = hi[a]
            walls.append(_box(blo, bhi))
    return walls


def closed_room(size: Sequence[float], offset: Sequence[float] = (0.0137, 0.0291, 0.0173), thickness: float = 0.3) -> Scene:
    """Empty closed room; the default offset keeps walls off the voxel lattice."""
    lo = np.asarray(offset, float)
    hi = lo + np.asarray(size, float)
    walls = room_walls(lo, hi, thickness)
    return Scene(walls, [], _box(lo - thickness, hi + thickness))


def random_room_scene(
    seed: int,
    size: Sequence[float] = (30.0, 30.0, 10.0),
    n_boxes: tuple[int, int] = (3, 8),
    n_poses: int = 10,
    step: float = 0.6,
    clearance: float = 0.6,
) -> tuple[Scene, list[Pose]]:
    """A closed room with random obstacle boxes and a short random-walk trajectory."""
    rng = np.random.default_rng(seed)
    size = np.asarray(size, float)
    lo = rng.uniform(0.0, 1.0, 3) * 0.37 + 0.011
    hi = lo + size

    pos = lo + size * np.array([0.5, 0.5, 0.0]) + np.array([0.0, 0.0, 1.5]) + rng.uniform(-1.0, 1.0, 3) * [2.0, 2.0, 0.3]
    heading = rng.uniform(-math.pi, math.pi)
    poses = []
    for n in range(n_poses):
        poses.append(Pose(float(n), *(float(c) for c in pos), float(rng.uniform(-math.pi, math.pi))))
        heading += rng.normal(0.0, 0.4)
        pos = pos + step * np.array([math.cos(heading), math.sin(heading), 0.0])
        pos[2] = np.clip(pos[2] + rng.normal(0.0, 0.05), lo[2] + 1.0, hi[2] - 1.0)

    count = int(rng.integers(n_boxes[0], n_boxes[1] + 1))
    boxes: list[Box] = []
    while len(boxes) < count:
        extent = rng.uniform([0.5, 0.5, 0.5], [4.0, 4.0, min(4.0, size[2] - 0.5)])
        blo = lo + rng.uniform(0.0, 1.0, 3) * (size - extent)
        box = _box(blo, blo + extent)
        grown = box.inflated(clearance)
        if any(grown.contains(p.position) for p in poses):
            continue
        boxes.append(box)
    walls = room_walls(lo, hi)
    return Scene(walls + boxes, [], _box(lo - 0.3, hi + 0.3)), poses
