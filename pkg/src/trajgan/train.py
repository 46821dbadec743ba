"""Alternating GAN training: one discriminator then one generator update
per mini-batch, both with Adam.

The discriminator sees detached generator samples; the generator's update
combines the non-saturating adversarial term with lambda times the L2
term. All randomness is drawn from named substreams of the master seed so
runs are exactly reproducible.
"""

from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import save_params
from .data import Dataset
from .grid import FeatureGrid
from .losses import discriminator_loss, generator_loss
from .metrics import ade
from .model import Batch, ModelConfig, TrajGanModel, make_batch
from .optim import Adam


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Named, independent random stream derived from the master seed."""
    return np.random.default_rng(
        np.random.SeedSequence([int(master_seed), zlib.crc32(name.encode("utf-8"))]))


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 0.001
    lambda_l2: float = 1.0
    seed: int = 0
    augment: bool = False
    checkpoint_every: int = 0   # epochs; 0 = final checkpoint only
    log_every: int = 1


@dataclass
class EpochStats:
    epoch: int
    d_loss: float
    g_loss: float
    g_adv: float
    g_l2: float
    train_ade: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    generator_steps: int = 0

    @property
    def final(self) -> EpochStats | None:
        return self.epochs[-1] if self.epochs else None


def _check_finite(value: float, what: str, epoch: int, batch_idx: int) -> None:
    if not math.isfinite(value):
        raise RuntimeError(f"non-finite {what} ({value}) at epoch {epoch}, "
                           f"batch {batch_idx}; aborting")


def _augment_batch(batch: Batch, rng: np.random.Generator) -> Batch:
    """Random right-angle rotation/flip of the motion representation.

    Applied to the model-space step arrays only; the paired grids stay
    fixed because right-angle transforms of the synthetic corridor are not
    re-rasterized here (training-time augmentation is disabled by default
    and exercised through the data-level augment op in tests).
    """
    k = rng.integers(0, 4)
    flip = rng.random() < 0.5
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][k]
    m = np.array([[c, -s], [s, c]], dtype=np.float64)
    if flip:
        m = m @ np.array([[-1.0, 0.0], [0.0, 1.0]])

    def rot(arr):
        return arr @ m.T

    return Batch(
        enc_steps=rot(batch.enc_steps), prev_step=rot(batch.prev_step),
        last_pos=rot(batch.last_pos), fut_abs=rot(batch.fut_abs),
        fut_steps=rot(batch.fut_steps), obs_steps=rot(batch.obs_steps),
        agent_ids=batch.agent_ids, seg_bounds=batch.seg_bounds,
        scene_ids=batch.scene_ids,
    )


def train(model: TrajGanModel, dataset: Dataset,
          rasters: dict[str, FeatureGrid] | None,
          config: TrainConfig,
          max_generator_steps: int | None = None,
          log_path: str | Path | None = None,
          checkpoint_dir: str | Path | None = None) -> TrainLog:
    """Run the alternating loop; returns the per-epoch log.

    The model is updated in place. With ``checkpoint_dir`` set, numbered
    checkpoints are written every ``checkpoint_every`` epochs plus a final
    ``checkpoint_final.bin``.
    """
    if not dataset.segments:
        raise ValueError("train: dataset is empty")
    shuffle_rng = substream(config.seed, "data")
    z_rng = substream(config.seed, "z")
    aug_rng = substream(config.seed, "augment")
    opt_g = Adam(model.generator_params(), lr=config.lr)
    opt_d = Adam(model.discriminator_params(), lr=config.lr)
    cfg: ModelConfig = model.config
    needs_grid = model.gates.physical_stream
    log = TrainLog()
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    def write_checkpoint(name: str) -> None:
        if ckpt_dir:
            save_params(model.params(), ckpt_dir / name,
                        meta={"model": cfg.to_dict(), "seed": config.seed})

    n = len(dataset.segments)
    try:
        done = False
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(n)
            sums = {"d": 0.0, "g": 0.0, "adv": 0.0, "l2": 0.0, "ade": 0.0}
            batches = 0
            for b0 in range(0, n, config.batch_size):
                seg_idx = order[b0:b0 + config.batch_size]
                segments = [dataset.segments[i] for i in seg_idx]
                batch = make_batch(segments, cfg)
                if config.augment:
                    batch = _augment_batch(batch, aug_rng)
                grids = rasters if needs_grid else None
                z = z_rng.standard_normal((batch.num_agents, cfg.z_dim))

                # discriminator update on detached samples
                gen = model.generate(batch, z, grids)
                real_logits = model.discriminate_steps(model.real_steps(batch))
                fake_logits = model.discriminate_steps(
                    model.fake_steps(batch, gen, detach=True))
                d_loss = discriminator_loss(real_logits, fake_logits)
                d_loss_val = float(d_loss.data)
                _check_finite(d_loss_val, "discriminator loss", epoch, batches)
                opt_d.zero_grad()
                opt_g.zero_grad()
                ad.backward(d_loss)
                opt_d.step()
                # release this phase's graph so its buffers are reused
                del gen, real_logits, fake_logits, d_loss

                # generator update on a fresh forward pass
                z = z_rng.standard_normal((batch.num_agents, cfg.z_dim))
                gen = model.generate(batch, z, grids)
                fake_logits = model.discriminate_steps(model.fake_steps(batch, gen))
                g_total, g_adv, g_l2 = generator_loss(
                    fake_logits, gen.step_tensors, batch.fut_steps, config.lambda_l2)
                g_vals = (float(g_total.data), float(g_adv.data), float(g_l2.data))
                _check_finite(g_vals[0], "generator loss", epoch, batches)
                opt_g.zero_grad()
                opt_d.zero_grad()
                ad.backward(g_total)
                opt_g.step()
                log.generator_steps += 1

                sums["d"] += d_loss_val
                sums["g"] += g_vals[0]
                sums["adv"] += g_vals[1]
                sums["l2"] += g_vals[2]
                sums["ade"] += ade(gen.pred_abs(), batch.fut_abs)
                del gen, fake_logits, g_total, g_adv, g_l2
                batches += 1
                if max_generator_steps and log.generator_steps >= max_generator_steps:
                    done = True
                    break
            stats = EpochStats(
                epoch=epoch,
                d_loss=sums["d"] / batches,
                g_loss=sums["g"] / batches,
                g_adv=sums["adv"] / batches,
                g_l2=sums["l2"] / batches,
                train_ade=sums["ade"] / batches,
                seconds=time.perf_counter() - t0,
            )
            log.epochs.append(stats)
            if log_fh and (epoch % config.log_every == 0 or done):
                log_fh.write(stats.to_json() + "\n")
                log_fh.flush()
            if (config.checkpoint_every and ckpt_dir
                    and (epoch + 1) % config.checkpoint_every == 0):
                write_checkpoint(f"checkpoint_epoch_{epoch + 1:04d}.bin")
            if done:
                break
        write_checkpoint("checkpoint_final.bin")
    finally:
        if log_fh:
            log_fh.close()
    return log
