import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajgan import data
from trajgan.data import (Segment, TrackPoint, augment, augment_segment,
                          build_segments, parse_trajectory_file, rotation_matrix,
                          to_absolute, to_displacements, transform_points)
from trajgan.grid import FeatureGrid, GridTransform


def _track(agent, frames, fx=lambda t: float(t), fy=lambda t: 0.0):
    return [TrackPoint(f, agent, fx(f), fy(f)) for f in frames]


def test_parse_line(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("10\t3\t4.5\t-2.0\n")
    pts = parse_trajectory_file(p)
    assert pts == [TrackPoint(10, 3, 4.5, -2.0)]


def test_parse_empty_file(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("")
    assert parse_trajectory_file(p) == []


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("10 3 4.5\n")
    with pytest.raises(ValueError, match=r":1:"):
        parse_trajectory_file(p)


def test_parse_missing_file():
    with pytest.raises(OSError):
        parse_trajectory_file("/nonexistent/file.txt")


def test_roundtrip_write_parse(tmp_path):
    pts = [TrackPoint(0, 1, 0.1234567890123, -9.87), TrackPoint(1, 1, 2.5, 3.5)]
    p = tmp_path / "t.txt"
    data.write_trajectory_file(pts, p)
    assert parse_trajectory_file(p) == pts


def test_build_segments_window_count():
    ds = build_segments(_track(1, range(25)))
    assert len(ds.segments) == 6  # 25 - 20 + 1


def test_build_segments_below_window_length():
    ds = build_segments(_track(1, range(19)))
    assert len(ds.segments) == 0


def test_build_segments_partial_agent_excluded():
    pts = _track(1, range(20)) + _track(2, range(10))
    ds = build_segments(pts)
    assert len(ds.segments) == 1
    assert list(ds.segments[0].agent_ids) == [1]


def test_build_segments_shapes_and_verbatim():
    pts = _track(5, range(22), fy=lambda t: t * 0.5)
    ds = build_segments(pts)
    seg = ds.segments[0]
    assert seg.observed.shape == (1, 8, 2)
    assert seg.future.shape == (1, 12, 2)
    # windowing never fabricates data
    source = {(p.frame, p.agent_id): (p.x, p.y) for p in pts}
    for t in range(8):
        assert tuple(seg.observed[0, t]) == source[(seg.start_frame + t, 5)]
    for t in range(12):
        assert tuple(seg.future[0, t]) == source[(seg.start_frame + 8 + t, 5)]


def test_build_segments_rejects_bad_lengths():
    with pytest.raises(ValueError):
        build_segments([], obs_len=0)


def test_agents_sorted_canonically():
    pts = _track(9, range(20)) + _track(2, range(20), fy=lambda t: 1.0)
    ds = build_segments(pts)
    assert list(ds.segments[0].agent_ids) == [2, 9]


# ---------------------------------------------------------------------------
# augmentation


def test_rotate_90_about_origin():
    out = transform_points(np.array([[1.0, 0.0]]), rotation_matrix(np.pi / 2),
                           np.zeros(2))
    np.testing.assert_allclose(out, [[0.0, 1.0]], atol=1e-12)


def test_flip_x():
    out = transform_points(np.array([[1.0, 2.0]]), data.FLIP_X, np.zeros(2))
    np.testing.assert_array_equal(out, [[-1.0, 2.0]])


def _segment(rng, agents=3):
    obs = rng.uniform(-3, 3, (agents, 8, 2))
    fut = rng.uniform(-3, 3, (agents, 12, 2))
    return Segment("s", 0, np.arange(agents, dtype=np.int64), obs, fut)


@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 2 * np.pi))
@settings(max_examples=25, deadline=None)
def test_augment_isometry(seed, angle):
    rng = np.random.default_rng(seed)
    seg = _segment(rng)
    m = rotation_matrix(angle)
    if seed % 2:
        m = m @ data.FLIP_X
    out = augment_segment(seg, m, np.array([1.0, -2.0]))
    pts = seg.observed.reshape(-1, 2)
    pts2 = out.observed.reshape(-1, 2)
    d1 = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
    d2 = np.linalg.norm(pts2[:, None] - pts2[None, :], axis=-1)
    assert np.max(np.abs(d1 - d2)) < 1e-9


def test_augment_joint_grid_reindexing_exact_for_rot90():
    rng = np.random.default_rng(3)
    values = rng.normal(size=(4, 6, 2))
    grid = FeatureGrid(values=values,
                       transform=GridTransform.from_origin(0.0, 0.0, 1.0, 1.0))
    seg = Segment("s", 0, np.array([1]),
                  np.tile([[2.3, 1.7]], (1, 8, 1)).reshape(1, 8, 2),
                  np.tile([[2.3, 1.7]], (1, 12, 1)).reshape(1, 12, 2))
    seg2, grid2 = augment(seg, grid, "rot90")
    assert grid2.values.shape == (6, 4, 2)
    # the feature under any transformed point matches the original cell
    probe = np.array([[2.3, 1.7], [0.2, 0.1], [5.9, 3.9]])
    center = grid.transform.grid_to_world(np.array([3.0, 2.0]))
    moved = transform_points(probe, rotation_matrix(np.pi / 2), center)
    r1, c1 = grid.transform.cell_index(probe)
    r2, c2 = grid2.transform.cell_index(moved)
    np.testing.assert_array_equal(grid.values[r1, c1], grid2.values[r2, c2])
    # and the segment moved with the same transform
    np.testing.assert_allclose(seg2.observed[0, 0], moved[0], atol=1e-12)


def test_augment_named_and_angle_transforms():
    grid = FeatureGrid(values=np.zeros((2, 2, 1)),
                       transform=GridTransform.from_origin(0.0, 0.0, 1.0, 1.0))
    seg = _segment(np.random.default_rng(0), agents=2)
    for tr in ("flip_x", "rot180", 0.7):
        seg2, grid2 = augment(seg, grid, tr)
        d1 = np.linalg.norm(seg.observed[0] - seg.observed[1], axis=-1)
        d2 = np.linalg.norm(seg2.observed[0] - seg2.observed[1], axis=-1)
        assert np.max(np.abs(d1 - d2)) < 1e-9
    with pytest.raises(ValueError):
        augment(seg, grid, "rot45")


# ---------------------------------------------------------------------------
# displacements


def test_displacements_constant_velocity():
    disp = to_displacements(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
    np.testing.assert_array_equal(disp, [[1.0, 0.0], [1.0, 0.0]])


def test_displacements_zero_motion():
    disp = to_displacements(np.array([[3.0, 4.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(disp, [[0.0, 0.0]])


def test_displacements_require_two_points():
    with pytest.raises(ValueError):
        to_displacements(np.zeros((1, 2)))


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=25, deadline=None)
def test_roundtrip_random_walk(seed):
    rng = np.random.default_rng(seed)
    steps = rng.normal(size=(9, 2))
    positions = np.concatenate([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
    rebuilt = to_absolute(positions[0], to_displacements(positions))
    np.testing.assert_array_equal(rebuilt, positions[1:])


# ---------------------------------------------------------------------------
# dataset cache


def test_dataset_cache_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    ds = build_segments(_track(1, range(21), fy=lambda t: rng.uniform(-5, 5)))
    path = tmp_path / "cache.json"
    data.save_dataset(ds, path)
    back = data.load_dataset(path)
    assert len(back.segments) == len(ds.segments)
    for a, b in zip(ds.segments, back.segments):
        np.testing.assert_array_equal(a.observed, b.observed)
        np.testing.assert_array_equal(a.future, b.future)
        np.testing.assert_array_equal(a.agent_ids, b.agent_ids)


def test_dataset_cache_rejects_bad_version(tmp_path):
    path = tmp_path / "cache.json"
    path.write_text('{"format_version": 99, "segments": []}')
    with pytest.raises(ValueError, match="version"):
        data.load_dataset(path)
