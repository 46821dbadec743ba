import numpy as np
import pytest

from trajgan.data import rotation_matrix, transform_points
from trajgan.metrics import (ade, best_of_k_segment, collision_pct, evaluate,
                             fde, linear_baseline)
from trajgan.verify import build_micro_setup


def test_ade_fde_zero_when_equal():
    gt = np.random.default_rng(0).uniform(-2, 2, (3, 12, 2))
    assert ade(gt, gt) == 0.0
    assert fde(gt, gt) == 0.0


def test_ade_fde_constant_offset():
    gt = np.zeros((2, 12, 2))
    pred = gt + np.array([0.5, 0.0])
    assert ade(pred, gt) == pytest.approx(0.5, abs=1e-12)
    assert fde(pred, gt) == pytest.approx(0.5, abs=1e-12)


def test_ade_fde_final_step_only():
    gt = np.zeros((1, 12, 2))
    pred = gt.copy()
    pred[0, -1, 0] = 1.0
    assert ade(pred, gt) == pytest.approx(1.0 / 12.0, abs=1e-12)
    assert fde(pred, gt) == pytest.approx(1.0, abs=1e-12)


def test_ade_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        ade(np.zeros((1, 12, 2)), np.zeros((2, 12, 2)))


def test_metric_isometry():
    rng = np.random.default_rng(1)
    pred = rng.uniform(-3, 3, (4, 12, 2))
    gt = rng.uniform(-3, 3, (4, 12, 2))
    m = rotation_matrix(0.83) @ np.array([[-1.0, 0.0], [0.0, 1.0]])
    center = np.array([0.7, -1.1])
    pred2 = transform_points(pred, m, center)
    gt2 = transform_points(gt, m, center)
    assert abs(ade(pred, gt) - ade(pred2, gt2)) < 1e-9
    assert abs(fde(pred, gt) - fde(pred2, gt2)) < 1e-9


# ---------------------------------------------------------------------------
# collisions


def test_collision_two_close_pedestrians():
    frames = [np.array([[0.0, 0.0], [0.05, 0.0]])]
    assert collision_pct(frames) == pytest.approx(100.0, abs=1e-12)


def test_collision_none_when_far():
    rng = np.random.default_rng(2)
    frames = [np.stack([np.arange(5) * 0.2 + f, np.zeros(5)], axis=1)
              for f in range(4)]
    assert collision_pct(frames) == 0.0


def test_collision_counts_pedestrians_not_pairs():
    # three pedestrians, two of them close: 2/3 involved
    frames = [np.array([[0.0, 0.0], [0.05, 0.0], [9.0, 9.0]])]
    assert collision_pct(frames) == pytest.approx(200.0 / 3.0, abs=1e-9)


def test_collision_threshold_validation():
    with pytest.raises(ValueError):
        collision_pct([], threshold=0.0)


def test_collision_is_pure_function_of_positions():
    frames = [np.array([[0.0, 0.0], [0.5, 0.0]])]
    assert collision_pct(frames) == collision_pct([f.copy() for f in frames])


# ---------------------------------------------------------------------------
# linear baseline


def test_linear_baseline_exact_on_line():
    obs = np.stack([np.arange(8.0), np.zeros(8)], axis=1)
    pred = linear_baseline(obs)
    expected = np.stack([np.arange(8.0, 20.0), np.zeros(12)], axis=1)
    assert ade(pred, expected) < 1e-9


def test_linear_baseline_constant_position():
    obs = np.tile([[2.0, -1.0]], (8, 1))
    pred = linear_baseline(obs)
    np.testing.assert_allclose(pred, np.tile([[2.0, -1.0]], (12, 1)), atol=1e-9)


def test_linear_baseline_unit_speed_hand_case():
    obs = np.stack([np.arange(8.0), np.zeros(8)], axis=1)
    pred = linear_baseline(obs)
    np.testing.assert_allclose(pred[:, 0], np.arange(8.0, 20.0), atol=1e-9)


def test_linear_baseline_needs_two_points():
    with pytest.raises(ValueError):
        linear_baseline(np.zeros((1, 2)))


def test_linear_baseline_batch_shape():
    obs = np.random.default_rng(3).uniform(-1, 1, (4, 8, 2))
    assert linear_baseline(obs).shape == (4, 12, 2)


# ---------------------------------------------------------------------------
# best-of-k


def _fixture():
    model, batch, rasters, z = build_micro_setup(seed=21)
    from trajgan.data import Segment
    rng = np.random.default_rng(5)
    obs = np.cumsum(rng.normal(0, 0.2, (2, 8, 2)), axis=1)
    fut = obs[:, -1:, :] + np.cumsum(rng.normal(0, 0.2, (2, 12, 2)), axis=1)
    seg = Segment("micro", 0, np.array([1, 2]), obs, fut)
    return model, seg, rasters


def test_best_of_k_one_equals_single_sample():
    model, seg, rasters = _fixture()
    a1, f1, pred = best_of_k_segment(model, seg, rasters, k=1, seed=3)
    assert a1 == ade(pred, seg.future)
    assert f1 == fde(pred, seg.future)


def test_best_of_k_monotone_in_k_nested_draws():
    model, seg, rasters = _fixture()
    prev = np.inf
    for k in (1, 3, 8, 20):
        a_k, _, _ = best_of_k_segment(model, seg, rasters, k=k, seed=4)
        assert a_k <= prev + 1e-15
        prev = a_k


def test_best_of_k_deterministic():
    model, seg, rasters = _fixture()
    r1 = best_of_k_segment(model, seg, rasters, k=5, seed=9)
    r2 = best_of_k_segment(model, seg, rasters, k=5, seed=9)
    assert r1[0] == r2[0] and r1[1] == r2[1]
    np.testing.assert_array_equal(r1[2], r2[2])


def test_best_of_k_rejects_zero():
    model, seg, rasters = _fixture()
    with pytest.raises(ValueError):
        best_of_k_segment(model, seg, rasters, k=0, seed=0)


def test_evaluate_report_fields():
    from trajgan.data import Dataset
    model, seg, rasters = _fixture()
    ds = Dataset(segments=[seg])
    report = evaluate(model, ds, rasters, k=2, seed=1)
    assert report.k == 2 and report.segments == 1
    assert report.ade >= 0 and report.fde >= 0
    assert 0 <= report.collision_pct <= 100
    assert "micro" in report.per_scene
    scaled = report.scaled(10.0, "pixels")
    assert scaled.ade == pytest.approx(report.ade * 10.0)
    assert scaled.collision_pct == report.collision_pct
    assert "ADE" in report.lines()
