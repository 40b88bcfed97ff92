"""Command-line entry point: generate scan logs, run either mapper, compare them."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from boundmap import _kernels as K
from boundmap.boundary import MapCorruptionError, RecordArray
from boundmap.core import MapConfig, OccupancyState, Scan, ScanLogError, iter_scan_log, scan_log_psi, write_scan_log
from boundmap.dense import DenseMapper, audit_boundary_array
from boundmap.report import UpdateReport, summarize, write_csv
from boundmap.scene import (
    ScanPattern,
    SceneError,
    load_scene,
    load_trajectory,
    random_room_scene,
    save_scene,
    save_trajectory,
    simulate_scan,
)
from boundmap.update import BoundaryMapper

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunSummary:
    reports: list[UpdateReport]
    aggregates: dict[str, dict[str, float]]
    peak_record_count: int
    estimated_bytes: int
    memory: dict[str, int] = field(default_factory=dict)

    @property
    def ratio_vs_scan1(self) -> list[float]:
        first = self.reports[0].traversed if self.reports else 0
        return [r.traversed / first if first else math.nan for r in self.reports]


def make_mapper(kind: str, config: MapConfig, threads: int = 1):
    if kind == "dense":
        return DenseMapper(config, threads=threads)
    if kind == "boundary":
        return BoundaryMapper(config, threads=threads)
    raise UsageError(f"unknown mapper {kind!r}")


def summarize_run(mapper) -> RunSummary:
    reports = mapper.reports
    if isinstance(mapper, BoundaryMapper):
        stats = mapper.map.memory_stats()
        memory = {k: v for k, v in vars(stats).items()}
        nbytes = stats.estimated_bytes
    else:
        nbytes = mapper.grid.estimated_bytes()
        memory = {"voxel_count": len(mapper.grid), "estimated_bytes": nbytes}
    return RunSummary(
        reports=list(reports),
        aggregates=summarize(reports),
        peak_record_count=max((r.record_count for r in reports), default=0),
        estimated_bytes=nbytes,
        memory=memory,
    )


def run_sequence(scans: Iterable[Scan], config: MapConfig, kind: str = "boundary", threads: int = 1):
    """Integrate every scan; returns (mapper, summary)."""
    mapper = make_mapper(kind, config, threads)
    for scan in scans:
        mapper.integrate(scan)
    return mapper, summarize_run(mapper)


def write_run_csv(out: IO[str], summary: RunSummary) -> None:
    ratios = [f"{r:.6f}" for r in summary.ratio_vs_scan1]
    write_csv(out, summary.reports, {"ratio_vs_scan1": ratios})
    out.write(f"# scans {len(summary.reports)}\n")
    for col in ("traversed", "L_size", "F_size", "t_raycast_us", "t_update_us", "t_total_us"):
        agg = summary.aggregates.get(col, {"mean": 0.0, "median": 0.0})
        out.write(f"# {col} mean {agg['mean']:.1f} median {agg['median']:.1f}\n")
    out.write(f"# peak_record_count {summary.peak_record_count}\n")
    for k, v in summary.memory.items():
        out.write(f"# memory {k} {v}\n")


# --------------------------------------------------------------------------
# Comparison


@dataclass
class Comparison:
    checked: int
    mismatches: dict[tuple[str, str], int]
    examples: list[tuple[tuple[int, int, int], str, str]]
    audit_failures: list[int] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.mismatches.values())

    @property
    def ok(self) -> bool:
        return self.total == 0 and not self.audit_failures


def materialize_and_compare(dense: DenseMapper, boundary: BoundaryMapper, limit: int = 20) -> Comparison:
    """Query the boundary map over the oracle's bounding box grown by 2 voxels."""
    bounds = dense.grid.bounds()
    if bounds is None:
        if boundary.map.record_count:
            return Comparison(0, {("unknown", "records"): boundary.map.record_count}, [])
        return Comparison(0, {}, [])
    lo, hi = bounds[0] - 2, bounds[1] + 2
    keys = K.box_keys(lo, hi)
    expected = dense.grid.states_of(keys)
    got = boundary.map.query_packed(keys)
    diff = np.flatnonzero(expected != got)
    names = {int(s): s.name.lower() for s in OccupancyState}
    counts: dict[tuple[str, str], int] = {}
    for e, g in zip(expected[diff].tolist(), got[diff].tolist()):
        counts[(names[e], names[g])] = counts.get((names[e], names[g]), 0) + 1
    examples = [
        (tuple(K.unpack_array(keys[n : n + 1])[0].tolist()), names[int(expected[n])], names[int(got[n])])
        for n in diff[:limit]
    ]
    return Comparison(len(keys), counts, examples)


def inject_fault(boundary: BoundaryMapper) -> None:
    """Test hook: drop one occupied record so the map disagrees with the oracle."""
    recs = boundary.map.record_array()
    occ = np.flatnonzero(recs.cls == K.EXTERIOR_OCCUPIED)
    if len(occ) == 0:
        occ = np.arange(len(recs))
    if len(occ) == 0:
        return
    key = recs.packed[occ[:1]]
    boundary.map.replace_region(key, RecordArray.empty())


def compare_sequence(
    scans: Iterable[Scan], config: MapConfig, *, threads: int = 1, audit: bool = False, fault: bool = False
) -> Comparison:
    dense = DenseMapper(config, threads=threads)
    boundary = BoundaryMapper(config, threads=threads)
    failures = []
    for n, scan in enumerate(scans):
        dense.integrate(scan)
        boundary.integrate(scan)
        if audit and not audit_boundary_array(dense.grid).equals(boundary.map.record_array()):
            failures.append(n)
    if fault:
        inject_fault(boundary)
    result = materialize_and_compare(dense, boundary)
    result.audit_failures = failures
    return result


# --------------------------------------------------------------------------
# Commands


def _config(args, psi_default: float | None) -> MapConfig:
    psi = args.psi if args.psi is not None else psi_default
    if psi is None:
        raise UsageError("no --psi given and the scan log has no '# psi' header")
    try:
        return MapConfig(
            d=args.resolution,
            R=args.range,
            psi=psi,
            inflation=args.inflation,
            projection_axis=args.axis,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_scans(path: str) -> tuple[list[Scan], float | None]:
    try:
        return list(iter_scan_log(path)), scan_log_psi(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w"), True


def cmd_gen(args) -> int:
    pattern = ScanPattern(args.n_azimuth, args.n_elevation, math.radians(args.elevation_span), args.range)
    pattern.validate()
    if args.scene and args.trajectory:
        scene, poses = load_scene(args.scene), load_trajectory(args.trajectory)
    elif args.scene or args.trajectory:
        raise UsageError("give both a scene and a trajectory, or neither with --seed")
    else:
        scene, poses = random_room_scene(args.seed, n_poses=args.poses)
        if args.save_scene:
            save_scene(args.save_scene, scene)
        if args.save_trajectory:
            save_trajectory(args.save_trajectory, poses)
    scans = (simulate_scan(scene, pose, pattern, n) for n, pose in enumerate(poses))
    write_scan_log(args.output, scans, psi=pattern.spacing)
    return EXIT_OK


def cmd_run(args) -> int:
    scans, psi = _load_scans(args.scanlog)
    config = _config(args, psi)
    mapper = make_mapper(args.mapper, config, args.threads)
    for n, scan in enumerate(scans):
        mapper.integrate(scan)
        if args.depth_pgm and n == len(scans) - 1:
            from boundmap.core import filter_scan
            from boundmap.depth_image import generate_depth_image

            generate_depth_image(filter_scan(scan, config), config.psi).write_pgm(args.depth_pgm)
    summary = summarize_run(mapper)
    out, close = _open_out(args.csv)
    try:
        write_run_csv(out, summary)
    finally:
        if close:
            out.close()
    if args.export:
        (mapper.map if args.mapper == "boundary" else mapper.grid).export(args.export)
    return EXIT_OK


def cmd_compare(args) -> int:
    scans, psi = _load_scans(args.scanlog)
    config = _config(args, psi)
    result = compare_sequence(scans, config, threads=args.threads, audit=args.audit, fault=args.inject_fault)
    print(f"checked {result.checked} voxels over {len(scans)} scans")
    print(f"mismatches {result.total}")
    for (e, g), n in sorted(result.mismatches.items()):
        print(f"  expected {e} got {g}: {n}")
    for key, e, g in result.examples:
        print(f"  voxel {key[0]} {key[1]} {key[2]}: expected {e} got {g}")
    if args.audit:
        print(f"audit failures {len(result.audit_failures)}" + (f" at scans {result.audit_failures}" if result.audit_failures else ""))
    return EXIT_OK if result.ok else EXIT_MISMATCH


def _map_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("scanlog", help="scan log file")
    p.add_argument("--resolution", type=float, default=0.25, help="voxel edge in meters (default 0.25)")
    p.add_argument("--range", type=float, default=20.0, help="sensing range in meters (default 20)")
    p.add_argument("--psi", type=float, default=None, help="depth-image pixel size in radians (default: scan log header)")
    p.add_argument("--inflation", type=float, default=math.sqrt(3.0), help="candidate ball diameter in voxels (default sqrt 3)")
    p.add_argument("--axis", choices=("x", "y", "z"), default="z", help="projection axis of the columns")
    p.add_argument("--threads", type=int, default=1, help="worker threads for ray casting")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boundmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="simulate a scan log from a scene and trajectory")
    g.add_argument("scene", nargs="?", help="scene file (omit to generate a random room)")
    g.add_argument("trajectory", nargs="?", help="trajectory file")
    g.add_argument("-o", "--output", required=True, help="scan log to write")
    g.add_argument("--seed", type=int, default=0, help="seed for the random room")
    g.add_argument("--poses", type=int, default=10, help="poses in the random trajectory")
    g.add_argument("--save-scene", help="write the generated scene here")
    g.add_argument("--save-trajectory", help="write the generated trajectory here")
    g.add_argument("--n-azimuth", type=int, default=128)
    g.add_argument("--n-elevation", type=int, default=32)
    g.add_argument("--elevation-span", type=float, default=90.0, help="degrees")
    g.add_argument("--range", type=float, default=20.0, help="sensor max range in meters")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="integrate a scan log and print per-scan stats as CSV")
    _map_flags(r)
    r.add_argument("--mapper", choices=("dense", "boundary"), default="boundary")
    r.add_argument("--csv", help="write the CSV here instead of stdout")
    r.add_argument("--export", help="write the final map here")
    r.add_argument("--depth-pgm", help="write the last scan's depth image as PGM")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="check the boundary map against the dense oracle")
    _map_flags(c)
    c.add_argument("--audit", action="store_true", help="also check boundary records after every scan")
    c.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except (UsageError, ScanLogError, SceneError) as exc:
        print(f"boundmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"boundmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MapCorruptionError as exc:
        print(f"boundmap: map corruption: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
