"""End-to-end gradient verification on a deterministic micro-batch.

Builds a 2-agent segment, a small random scene grid, and a full model,
then finite-difference checks the combined two-player objective against
the analytic gradients of every trainable tensor.
"""

from __future__ import annotations

import numpy as np

from .data import Segment
from .gradcheck import GradCheckReport, finite_difference_check
from .grid import FeatureGrid, GridTransform
from .losses import paired_objective
from .model import ModelConfig, TrajGanModel, make_batch
from .grid import ConvGridProvider


def build_micro_setup(seed: int = 0, mode: str = "T_A+I_A",
                      grid_shape: tuple[int, int] = (3, 4)):
    """Deterministic 2-agent fixture: (model, batch, rasters, z)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA11CE]))
    t_total = 20
    t = np.arange(t_total)[:, None] * 0.4
    track_a = np.concatenate([0.5 + t, 2.0 + 0.15 * np.sin(t)], axis=1)
    track_b = np.concatenate([0.8 + 0.9 * t, 3.0 - 0.2 * t], axis=1)
    tracks = np.stack([track_a, track_b])
    tracks += rng.normal(0.0, 0.01, size=tracks.shape)
    segment = Segment(
        scene_id="micro", start_frame=0,
        agent_ids=np.array([1, 2], dtype=np.int64),
        observed=tracks[:, :8, :], future=tracks[:, 8:, :],
    )
    gh, gw = grid_shape
    raster = FeatureGrid(
        values=rng.normal(0.0, 0.5, size=(gh, gw, 3)),
        transform=GridTransform.from_origin(0.0, 0.0, 10.0 / gw, 6.0 / gh),
    )
    config = ModelConfig(mode=mode, grid_channels=8, conv_hidden=4)
    provider = ConvGridProvider(rng, in_channels=3, hidden_channels=config.conv_hidden,
                                out_channels=config.grid_channels)
    model = TrajGanModel(config, rng, provider=provider)
    batch = make_batch([segment], config)
    z = rng.standard_normal((batch.num_agents, config.z_dim))
    return model, batch, {"micro": raster}, z


def micro_objective_check(seed: int = 0, samples_per_param: int = 4,
                          tol: float = 1e-3, h: float = 1e-5) -> GradCheckReport:
    """Finite-difference check of the full objective on the micro fixture."""
    model, batch, rasters, z = build_micro_setup(seed)
    sample_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xFD]))

    def objective(_params):
        gen = model.generate(batch, z, rasters)
        real_logits = model.discriminate_steps(model.real_steps(batch))
        fake_logits = model.discriminate_steps(model.fake_steps(batch, gen))
        return paired_objective(real_logits, fake_logits, gen.step_tensors,
                                batch.fut_steps)

    return finite_difference_check(objective, model.params(), h=h, tol=tol,
                                   samples_per_param=samples_per_param,
                                   rng=sample_rng)
