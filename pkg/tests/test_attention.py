import numpy as np
import pytest

from trajgan import autodiff as ad
from trajgan.attention import (PhysicalAttention, SocialAttention,
                               uniform_physical_context, uniform_social_context)
from trajgan.autodiff import Tensor
from trajgan.features import SocialFeatures, social_features
from trajgan.gradcheck import finite_difference_check
from trajgan.grid import FeatureGrid, GridTransform, SceneFeatureGrid


def _rng(seed=0):
    return np.random.default_rng(seed)


def _scene_grid(values):
    return SceneFeatureGrid(features=Tensor(np.asarray(values, dtype=np.float64)),
                            transform=GridTransform.from_origin(0, 0, 1, 1))


def _social(seed, a=3, m=5, d=4, counts=None):
    rng = _rng(seed)
    counts = np.array(counts if counts is not None else [m - 1] * a, dtype=np.intp)
    vals = np.zeros((a, m, d))
    for i, k in enumerate(counts):
        vals[i, :k] = rng.normal(size=(k, d))
    return SocialFeatures(values=Tensor(vals), counts=counts,
                          neighbor_order=[np.arange(k) for k in counts])


# ---------------------------------------------------------------------------
# physical attention


def test_uniform_grid_gives_uniform_weights():
    att = PhysicalAttention(_rng(1), grid_channels=6, dec_dim=8)
    grid = _scene_grid(np.ones((3, 4, 6)) * 0.37)
    cells = att.cell_embeddings(grid)
    h_dec = Tensor(_rng(2).normal(size=(2, 8)))
    context, weights = att(cells, h_dec)
    assert weights.shape == (2, 12)
    np.testing.assert_allclose(weights.data, np.full((2, 12), 1.0 / 12), atol=1e-15)
    assert np.all(weights.data == weights.data[:, :1])  # exactly equal per row


def test_physical_weights_sum_to_one_random():
    att = PhysicalAttention(_rng(3), grid_channels=5, dec_dim=8)
    grid = _scene_grid(_rng(4).normal(size=(4, 4, 5)))
    cells = att.cell_embeddings(grid)
    weights = att(cells, Tensor(_rng(5).normal(size=(6, 8))))[1]
    np.testing.assert_allclose(weights.data.sum(axis=1), np.ones(6), atol=1e-9)
    assert np.all(weights.data >= 0)


def test_physical_channel_mismatch_errors():
    att = PhysicalAttention(_rng(6), grid_channels=5)
    with pytest.raises(Exception, match="channels"):
        att.cell_embeddings(_scene_grid(np.zeros((2, 2, 3))))


def test_physical_attention_gradient_check():
    att = PhysicalAttention(_rng(7), grid_channels=3, proj_dim=4, embed_dim=4,
                            dec_dim=6)
    grid_vals = _rng(8).uniform(-1, 1, (3, 3, 3))
    h_dec_vals = _rng(9).uniform(-1, 1, (2, 6))
    proj = _rng(10).uniform(-1, 1, (2, 4))

    def f(params):
        cells = att.cell_embeddings(_scene_grid(grid_vals))
        context, _ = att(cells, Tensor(h_dec_vals))
        return ad.sum_all(ad.mul(context, Tensor(proj)))

    report = finite_difference_check(f, att.params("phys"), tol=1e-3)
    assert report.passed, report.summary()


def test_uniform_physical_context_is_cell_mean():
    att = PhysicalAttention(_rng(11), grid_channels=4, embed_dim=5, dec_dim=3)
    grid = _scene_grid(_rng(12).normal(size=(2, 3, 4)))
    cells = att.cell_embeddings(grid)
    ctx, w = uniform_physical_context(cells, n_agents=3, embed_dim=5)
    np.testing.assert_allclose(ctx.data, np.tile(cells.data.mean(axis=0), (3, 1)),
                               atol=1e-12)
    np.testing.assert_array_equal(w.data, np.full((3, 6), 1.0 / 6))


# ---------------------------------------------------------------------------
# social attention


def test_single_neighbor_weight_exactly_one():
    att = SocialAttention(_rng(13), row_dim=4, dec_dim=6)
    social = _social(14, a=1, m=5, d=4, counts=[1])
    _, weights = att(social, Tensor(_rng(15).normal(size=(1, 6))))
    assert weights.data[0, 0] == 1.0
    np.testing.assert_array_equal(weights.data[0, 1:], np.zeros(4))


def test_two_identical_rows_half_half():
    att = SocialAttention(_rng(16), row_dim=4, dec_dim=6)
    row = _rng(17).normal(size=4)
    vals = np.zeros((1, 4, 4))
    vals[0, 0] = row
    vals[0, 1] = row
    social = SocialFeatures(values=Tensor(vals), counts=np.array([2]),
                            neighbor_order=[np.arange(2)])
    _, weights = att(social, Tensor(_rng(18).normal(size=(1, 6))))
    np.testing.assert_allclose(weights.data[0, :2], [0.5, 0.5], atol=1e-15)


def test_masked_weights_sum_to_one_and_zero_on_padding():
    att = SocialAttention(_rng(19), row_dim=4, dec_dim=6)
    social = _social(20, a=4, m=6, d=4, counts=[5, 2, 0, 3])
    _, weights = att(social, Tensor(_rng(21).normal(size=(4, 6))))
    for i, k in enumerate([5, 2, 0, 3]):
        np.testing.assert_array_equal(weights.data[i, k:], np.zeros(6 - k))
        if k:
            assert abs(weights.data[i, :k].sum() - 1.0) < 1e-9
    # empty neighborhood -> zero context
    ctx, _ = att(social, Tensor(_rng(22).normal(size=(4, 6))))
    np.testing.assert_array_equal(ctx.data[2], np.zeros(4))


def test_appending_dummy_rows_bit_identical():
    att = SocialAttention(_rng(23), row_dim=4, dec_dim=6)
    rng = _rng(24)
    k = 3
    rows = rng.normal(size=(k, 4))
    h_dec = Tensor(rng.normal(size=(1, 6)))

    def run(m):
        vals = np.zeros((1, m, 4))
        vals[0, :k] = rows
        social = SocialFeatures(values=Tensor(vals), counts=np.array([k]),
                                neighbor_order=[np.arange(k)])
        ctx, w = att(social, h_dec)
        return ctx.data.copy(), w.data.copy()

    ctx_a, w_a = run(k)
    ctx_b, w_b = run(k + 5)
    np.testing.assert_array_equal(ctx_a, ctx_b)  # bit identical
    np.testing.assert_array_equal(w_a[0], w_b[0, :k])
    np.testing.assert_array_equal(w_b[0, k:], np.zeros(5))


def test_social_attention_gradient_check():
    att = SocialAttention(_rng(25), row_dim=4, dec_dim=6)
    social = _social(26, a=3, m=4, d=4, counts=[3, 1, 2])
    h_vals = _rng(27).uniform(-1, 1, (3, 6))
    proj = _rng(28).uniform(-1, 1, (3, 4))

    def f(params):
        ctx, _ = att(social, Tensor(h_vals))
        return ad.sum_all(ad.mul(ctx, Tensor(proj)))

    report = finite_difference_check(f, att.params("soc"), tol=1e-3)
    assert report.passed, report.summary()


def test_uniform_social_context_masked_mean():
    social = _social(29, a=2, m=4, d=3, counts=[2, 0])
    ctx, w = uniform_social_context(social)
    np.testing.assert_allclose(ctx.data[0], social.values.data[0, :2].mean(axis=0),
                               atol=1e-12)
    np.testing.assert_array_equal(ctx.data[1], np.zeros(3))
    np.testing.assert_array_equal(w.data[0], [0.5, 0.5, 0.0, 0.0])


def test_attention_mlp_width_contract():
    att = SocialAttention(_rng(30), row_dim=32, dec_dim=32)
    widths = [l.w.shape for l in att.mlp.layers]
    assert widths == [(64, 64), (64, 128), (128, 64), (64, 1)]


def test_masked_softmax_uses_real_rows_only():
    # identical real rows differing only in padding must give identical weights
    att = SocialAttention(_rng(31), row_dim=4, dec_dim=6)
    vals_a = np.zeros((1, 4, 4))
    vals_b = np.zeros((1, 4, 4))
    rows = _rng(32).normal(size=(2, 4))
    vals_a[0, :2] = rows
    vals_b[0, :2] = rows
    vals_b[0, 2:] = 99.0  # garbage beyond the mask
    h = Tensor(_rng(33).normal(size=(1, 6)))
    sa = SocialFeatures(Tensor(vals_a), np.array([2]), [np.arange(2)])
    sb = SocialFeatures(Tensor(vals_b), np.array([2]), [np.arange(2)])
    np.testing.assert_array_equal(att(sa, h)[0].data, att(sb, h)[0].data)
