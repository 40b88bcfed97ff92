import math

import numpy as np
import pytest

from boundmap.core import read_scan_log, write_scan_log
from boundmap.scene import (
    Box,
    Pose,
    ScanPattern,
    Scene,
    SceneError,
    closed_room,
    load_scene,
    load_trajectory,
    random_room_scene,
    save_scene,
    save_trajectory,
    simulate_scan,
    simulate_sequence,
)


def test_empty_scene_no_returns():
    scan = simulate_scan(Scene(), Pose(0, 0, 0, 0), ScanPattern(8, 4))
    assert len(scan) == 0


def test_center_of_closed_room():
    scene = closed_room((4.0, 4.0, 4.0), offset=(0.0, 0.0, 0.0))
    pat = ScanPattern(32, 16, math.pi, 20.0)
    pose = Pose(0.0, 2.0, 2.0, 2.0, 0.0)
    scan = simulate_scan(scene, pose, pat)
    assert len(scan) == 32 * 16
    dirs = pat.directions(0.0)
    expected = 2.0 / np.abs(dirs).max(axis=1)
    got = np.linalg.norm(scan.points - scan.origin, axis=1)
    assert np.allclose(got, expected, atol=1e-12)


def _on_surface(p, boxes, tol=1e-9):
    for b in boxes:
        lo, hi = np.array(b.lo), np.array(b.hi)
        if np.all(p >= lo - tol) and np.all(p <= hi + tol):
            if np.any(np.abs(p - lo) <= tol) or np.any(np.abs(p - hi) <= tol):
                return True
    return False


def test_returns_lie_on_box_surfaces():
    scene, poses = random_room_scene(11, n_poses=2)
    scan = simulate_scan(scene, poses[1], ScanPattern(64, 16), 1)
    assert len(scan) > 0
    for p in scan.points[::7]:
        assert _on_surface(p, scene.static_boxes)


def test_dynamic_interval():
    box = Box((2.0, -1.0, -1.0), (3.0, 1.0, 1.0))
    scene = Scene([], [(box, (0, 3))], Box((-5, -5, -5), (5, 5, 5)))
    pat = ScanPattern(16, 8)
    pose = Pose(0, 0.01, 0.02, 0.03)
    assert len(simulate_scan(scene, pose, pat, 2)) > 0
    assert len(simulate_scan(scene, pose, pat, 3)) == 0


def test_pose_inside_box_rejected():
    scene = Scene([Box((0, 0, 0), (1, 1, 1))])
    with pytest.raises(SceneError):
        simulate_scan(scene, Pose(0, 0.5, 0.5, 0.5), ScanPattern(8, 4))


def test_pattern_validation():
    with pytest.raises(SceneError):
        simulate_scan(Scene(), Pose(0, 0, 0, 0), ScanPattern(8, 1))
    with pytest.raises(SceneError):
        ScanPattern(3, 4).validate()


def test_pattern_avoids_axis_directions():
    dirs = ScanPattern(64, 32, math.pi).directions(0.0)
    assert np.all(np.abs(dirs) > 1e-6)


def test_degenerate_box_rejected(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("BOX 0 0 0 1 1 1\nBOX 0 0 0 0 1 1\n")
    with pytest.raises(SceneError, match=":2:"):
        load_scene(path)


def test_minimal_scene_file(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("# one box\nBOX 0 0 0 1 2 3\n")
    scene = load_scene(path)
    assert scene.static_boxes == [Box((0.0, 0.0, 0.0), (1.0, 2.0, 3.0))]
    assert scene.dynamic_boxes == []


def test_scene_parse_errors(tmp_path):
    path = tmp_path / "s.txt"
    for text, line in [("BOX 0 0 0 1 1\n", 1), ("BOX 0 0 0 1 1 1\nBOX a 0 0 1 1 1\n", 2), ("BOX 0 0 0 1 1 1 0 x\n", 1)]:
        path.write_text(text)
        with pytest.raises(SceneError, match=f":{line}:"):
            load_scene(path)


def test_scene_roundtrip(tmp_path):
    scene, poses = random_room_scene(5)
    scene.dynamic_boxes.append((Box((1.1, 1.2, 1.3), (2.1, 2.2, 2.3)), (0, 4)))
    save_scene(tmp_path / "s.txt", scene)
    save_trajectory(tmp_path / "t.txt", poses)
    back = load_scene(tmp_path / "s.txt")
    assert back.static_boxes == scene.static_boxes
    assert back.dynamic_boxes == scene.dynamic_boxes
    assert back.bounds == scene.bounds
    assert load_trajectory(tmp_path / "t.txt") == poses


def test_empty_trajectory(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("# nothing\n")
    with pytest.raises(SceneError):
        load_trajectory(path)
    path.write_text("POSE 0 1 2 3\n")
    with pytest.raises(SceneError, match=":1:"):
        load_trajectory(path)


def test_random_room_constraints():
    for seed in range(5):
        scene, poses = random_room_scene(seed)
        obstacles = scene.static_boxes[6:]
        assert 3 <= len(obstacles) <= 8 and len(poses) == 10
        for p in poses:
            assert scene.bounds.contains(p.position)
            assert not any(b.contains(p.position) for b in scene.static_boxes)


def test_deterministic_logs(tmp_path):
    scene, poses = random_room_scene(9, n_poses=3)
    pat = ScanPattern(32, 8)
    for name in ("a", "b"):
        write_scan_log(tmp_path / name, simulate_sequence(scene, poses, pat), psi=pat.spacing)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert len(read_scan_log(tmp_path / "a")) == 3
