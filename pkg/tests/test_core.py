import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boundmap.core import (
    MapConfig,
    OccupancyState,
    Scan,
    ScanLogError,
    SphericalCoord,
    VoxelKey,
    cartesian_to_spherical,
    filter_scan,
    read_scan_log,
    scan_log_psi,
    six_neighbors,
    spherical_to_cartesian,
    voxel_center,
    world_to_voxel,
    write_scan_log,
)


@pytest.mark.parametrize(
    "p, d, expected",
    [
        ((0.0, 0.0, 0.0), 0.5, (0, 0, 0)),
        ((-0.01, 0.99, 0.5), 0.5, (-1, 1, 1)),
        ((1.25, 1.25, 1.25), 0.25, (5, 5, 5)),
    ],
)
def test_world_to_voxel(p, d, expected):
    assert world_to_voxel(p, d) == expected


@pytest.mark.parametrize(
    "v, d, expected",
    [
        ((0, 0, 0), 0.5, (0.25, 0.25, 0.25)),
        ((-1, 0, 0), 0.5, (-0.25, 0.25, 0.25)),
        ((5, 5, 5), 0.25, (1.375, 1.375, 1.375)),
    ],
)
def test_voxel_center(v, d, expected):
    assert voxel_center(v, d) == pytest.approx(expected, abs=1e-12)


def test_default_state_is_unknown():
    assert OccupancyState(0) == OccupancyState.UNKNOWN
    assert max(OccupancyState.FREE, OccupancyState.OCCUPIED) == OccupancyState.OCCUPIED


keys = st.tuples(*(st.integers(-100_000, 100_000),) * 3)


@given(keys, st.sampled_from([0.1, 0.25, 0.5]))
def test_center_roundtrip(v, d):
    assert world_to_voxel(voxel_center(v, d), d) == v


@pytest.mark.parametrize(
    "p, expected",
    [
        ((1, 0, 0), (1.0, 0.0, 0.0)),
        ((0, 0, 2), (2.0, 0.0, math.pi / 2)),
        ((1, 1, 0), (math.sqrt(2), math.pi / 4, 0.0)),
    ],
)
def test_cartesian_to_spherical(p, expected):
    assert tuple(cartesian_to_spherical(p)) == pytest.approx(expected, abs=1e-12)


def test_spherical_zero_vector_rejected():
    with pytest.raises(ValueError):
        cartesian_to_spherical((0.0, 0.0, 0.0))


def test_azimuth_half_open():
    s = cartesian_to_spherical((-1.0, 0.0, 0.0))
    assert -math.pi <= s.theta < math.pi


@given(
    st.floats(0.1, 100.0),
    st.floats(-math.pi, math.pi, exclude_max=True),
    st.floats(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6),
)
def test_spherical_roundtrip(r, theta, phi):
    p = spherical_to_cartesian(SphericalCoord(r, theta, phi))
    q = spherical_to_cartesian(cartesian_to_spherical(p))
    assert np.linalg.norm(np.subtract(p, q)) <= 1e-9 * r


def test_six_neighbors_order():
    assert six_neighbors((0, 0, 0)) == [
        (-1, 0, 0),
        (1, 0, 0),
        (0, -1, 0),
        (0, 1, 0),
        (0, 0, -1),
        (0, 0, 1),
    ]
    nb = six_neighbors((2, 3, 4))
    assert (2, 3, 5) in nb and (2, 3, 3) in nb


@given(keys)
def test_six_neighbors_properties(v):
    nb = six_neighbors(v)
    assert len(set(nb)) == 6
    for u in nb:
        assert sum(abs(a - b) for a, b in zip(u, v)) == 1
        assert VoxelKey(*v) in six_neighbors(u)


def test_config_validation():
    MapConfig()
    for bad in (dict(d=0), dict(R=0.1, d=0.25), dict(psi=0), dict(projection_axis="w")):
        with pytest.raises(ValueError):
            MapConfig(**bad)
    assert MapConfig(d=0.3).min_range == pytest.approx(0.03)


def test_filter_scan_range():
    cfg = MapConfig(d=0.5, R=10.0)
    scan = Scan((0, 0, 0), [(0.01, 0, 0), (0.05, 0, 0), (5, 0, 0), (10, 0, 0), (10.5, 0, 0)])
    kept = filter_scan(scan, cfg)
    assert kept.points[:, 0].tolist() == [0.05, 5, 10]


def test_scan_is_immutable():
    scan = Scan((0, 0, 0), [(1, 2, 3)])
    with pytest.raises(ValueError):
        scan.points[0, 0] = 5.0


def test_scan_log_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    scans = [Scan(rng.normal(size=3), rng.normal(size=(n, 3)), float(n)) for n in (3, 0, 5)]
    path = tmp_path / "log.txt"
    write_scan_log(path, scans, psi=0.02)
    back = read_scan_log(path)
    assert scan_log_psi(path) == 0.02
    assert len(back) == 3
    for a, b in zip(scans, back):
        assert np.array_equal(a.origin, b.origin)
        assert np.array_equal(a.points, b.points)
        assert a.timestamp == b.timestamp


def test_scan_log_two_frame_example(tmp_path):
    path = tmp_path / "log.txt"
    path.write_text("FRAME 0.0 0 0 0\n1 0 0\n0 2 0\nFRAME 0.1 0.5 0 0\n3 3 3\n")
    scans = read_scan_log(path)
    assert [len(s) for s in scans] == [2, 1]
    assert scans[1].origin.tolist() == [0.5, 0, 0]
    assert scan_log_psi(path) is None


@pytest.mark.parametrize(
    "text, line",
    [("1 2 3\n", 1), ("FRAME 0 0 0 0\n1 2\n", 2), ("FRAME 0 0 0\n", 1), ("FRAME 0 0 0 0\n1 2 x\n", 2)],
)
def test_scan_log_errors(tmp_path, text, line):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ScanLogError, match=f":{line}:"):
        read_scan_log(path)
