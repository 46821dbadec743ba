"""Generator and discriminator assembly with ablation gating.

The generator encodes each agent's observed motion, builds sorted social
rows, and decodes 12 future steps with an LSTM whose per-step input is
[embedded previous step, social context, physical context, z]. The noise
vector z is drawn once per trajectory. The decoder state is initialized
from the agent's encoder state. The discriminator is a separate LSTM over
the full observed+future step sequence and never sees the attention
modules.

Ablation modes gate the streams: trajectory features are always present;
``T_O`` replaces social attention by a uniform mean over real neighbor
rows, ``I_O`` replaces physical attention by a uniform mean over cells,
``I`` absent (mode T_A) feeds a constant zero physical context so the
scene grid cannot influence the output. All components are constructed in
every mode, so the parameter set and initialization draws are identical
across modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .attention import (PhysicalAttention, SocialAttention,
                        uniform_physical_context, uniform_social_context)
from .data import Segment, to_displacements
from .features import SocialFeatures, TrajectoryEncoder, social_features
from .grid import FeatureGrid
from .nn import Linear, LSTMCell, Module

ABLATION_MODES = ("T_A", "T_O+I_O", "T_O+I_A", "T_A+I_O", "T_A+I_A")


@dataclass(frozen=True)
class AblationGates:
    social_attention: bool
    physical_stream: bool
    physical_attention: bool


def parse_mode(mode: str) -> AblationGates:
    table = {
        "T_A": AblationGates(True, False, False),
        "T_O+I_O": AblationGates(False, True, False),
        "T_O+I_A": AblationGates(False, True, True),
        "T_A+I_O": AblationGates(True, True, False),
        "T_A+I_A": AblationGates(True, True, True),
    }
    if mode not in table:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {ABLATION_MODES}")
    return table[mode]


@dataclass
class ModelConfig:
    mode: str = "T_A+I_A"
    embed_dim: int = 16
    enc_hidden: int = 32
    dec_hidden: int = 32
    dis_hidden: int = 64
    z_dim: int = 8
    n_max: int = 32
    grid_channels: int = 64
    conv_hidden: int = 16
    raster_channels: int = 3
    phys_proj: int = 32
    phys_embed: int = 16
    provider: str = "conv"              # conv | file
    representation: str = "relative"    # relative | absolute
    attention_recompute: str = "per_step"  # per_step | once
    dis_per_step: bool = False
    obs_len: int = 8
    pred_len: int = 12

    def validate(self) -> None:
        parse_mode(self.mode)
        if self.representation not in ("relative", "absolute"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.attention_recompute not in ("per_step", "once"):
            raise ValueError(f"unknown attention_recompute {self.attention_recompute!r}")
        if self.provider not in ("conv", "file"):
            raise ValueError(f"unknown provider {self.provider!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Batch:
    """Flattened per-agent arrays for a list of segments."""

    enc_steps: np.ndarray          # (A, T_enc, 2) encoder inputs
    prev_step: np.ndarray          # (A, 2) decoder's first position input
    last_pos: np.ndarray           # (A, 2) last observed absolute position
    fut_abs: np.ndarray            # (A, pred_len, 2)
    fut_steps: np.ndarray          # (A, pred_len, 2) model-space future steps
    obs_steps: np.ndarray          # (A, T_enc, 2) same space as enc_steps
    agent_ids: np.ndarray          # (A,)
    seg_bounds: list[tuple[int, int]]
    scene_ids: list[str]           # per segment

    @property
    def num_agents(self) -> int:
        return self.enc_steps.shape[0]


def make_batch(segments: list[Segment], config: ModelConfig) -> Batch:
    """Concatenate segments into one agent-major batch.

    In relative mode the model space is per-step displacements (7 encoder
    steps); in absolute mode it is positions translated so each agent's
    last observed point is the origin (8 encoder steps).
    """
    enc_list, fut_list, prev_list = [], [], []
    last_list, fut_abs_list, ids = [], [], []
    bounds, scene_ids = [], []
    row = 0
    for seg in segments:
        obs, fut = seg.observed, seg.future
        last = obs[:, -1, :]
        if config.representation == "relative":
            enc = to_displacements(obs)
            fut_steps = to_displacements(np.concatenate([obs[:, -1:, :], fut], axis=1))
            prev = obs[:, -1, :] - obs[:, -2, :]
        else:
            enc = obs - last[:, None, :]
            fut_steps = fut - last[:, None, :]
            prev = np.zeros_like(last)  # last observed point in normalized frame
        enc_list.append(enc)
        fut_list.append(fut_steps)
        prev_list.append(prev)
        last_list.append(last)
        fut_abs_list.append(fut)
        ids.append(seg.agent_ids)
        bounds.append((row, row + seg.num_agents))
        scene_ids.append(seg.scene_id)
        row += seg.num_agents
    return Batch(
        enc_steps=np.concatenate(enc_list, axis=0),
        prev_step=np.concatenate(prev_list, axis=0),
        last_pos=np.concatenate(last_list, axis=0),
        fut_abs=np.concatenate(fut_abs_list, axis=0),
        fut_steps=np.concatenate(fut_list, axis=0),
        obs_steps=np.concatenate(enc_list, axis=0),
        agent_ids=np.concatenate(ids, axis=0),
        seg_bounds=bounds,
        scene_ids=scene_ids,
    )


@dataclass
class GenOutput:
    step_tensors: list[Tensor]       # pred_len tensors (A, 2), model space
    abs_tensors: list[Tensor]        # pred_len tensors (A, 2), scene space
    social: SocialFeatures | None
    social_weights: list[np.ndarray] = field(default_factory=list)
    physical_weights: list[np.ndarray] = field(default_factory=list)

    def pred_abs(self) -> np.ndarray:
        return np.stack([t.data for t in self.abs_tensors], axis=1)

    def pred_steps(self) -> np.ndarray:
        return np.stack([t.data for t in self.step_tensors], axis=1)


class TrajGanModel(Module):
    """Complete model: encoder, attention, decoder, discriminator, provider."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 provider: Module | None = None):
        config.validate()
        self.config = config
        self.gates = parse_mode(config.mode)
        c = config
        self.encoder = TrajectoryEncoder(rng, c.embed_dim, c.enc_hidden)
        self.social_att = SocialAttention(rng, c.enc_hidden, c.dec_hidden)
        self.phys_att = PhysicalAttention(rng, c.grid_channels, c.phys_proj,
                                          c.phys_embed, c.dec_hidden)
        self.dec_embed = Linear(rng, 2, c.embed_dim)
        dec_in = c.embed_dim + c.enc_hidden + c.phys_embed + c.z_dim
        self.decoder = LSTMCell(rng, dec_in, c.dec_hidden)
        self.head = Linear(rng, c.dec_hidden, 2)
        self.dis_embed = Linear(rng, 2, c.embed_dim)
        self.dis_lstm = LSTMCell(rng, c.embed_dim, c.dis_hidden)
        self.dis_head = Linear(rng, c.dis_hidden, 1)
        self.provider = provider

    # parameter groups ------------------------------------------------

    def generator_params(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.encoder.params("gen.encoder"))
        out.update(self.social_att.params("gen.social_att"))
        out.update(self.phys_att.params("gen.phys_att"))
        out.update(self.dec_embed.params("gen.dec_embed"))
        out.update(self.decoder.params("gen.decoder"))
        out.update(self.head.params("gen.head"))
        if self.provider is not None:
            out.update(self.provider.params("gen.provider"))
        return out

    def discriminator_params(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.dis_embed.params("dis.embed"))
        out.update(self.dis_lstm.params("dis.lstm"))
        out.update(self.dis_head.params("dis.head"))
        return out

    def params(self) -> dict[str, Tensor]:
        out = self.generator_params()
        out.update(self.discriminator_params())
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.params()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        for name, p in params.items():
            if p.data.shape != arrays[name].shape:
                raise ShapeError(f"checkpoint {name}: shape {arrays[name].shape} "
                                 f"vs model {p.data.shape}")
            p.data = arrays[name].astype(np.float64).copy()

    # forward passes ---------------------------------------------------

    def scene_cells(self, rasters: dict[str, FeatureGrid],
                    scene_ids: list[str]) -> tuple[Tensor, dict[str, int], int]:
        """Embed every needed scene's grid; returns (cells, row offsets, block)."""
        unique = list(dict.fromkeys(scene_ids))
        blocks, offsets = [], {}
        block_size = None
        row = 0
        for sid in unique:
            if sid not in rasters:
                raise KeyError(f"no scene grid for scene {sid!r}")
            grid = self.provider(rasters[sid])
            cells = self.phys_att.cell_embeddings(grid)
            if block_size is None:
                block_size = cells.shape[0]
            elif cells.shape[0] != block_size:
                raise ShapeError("all scene grids in a batch must share one shape")
            blocks.append(cells)
            offsets[sid] = row
            row += cells.shape[0]
        cells_all = blocks[0] if len(blocks) == 1 else ad.concat(blocks, axis=0)
        return cells_all, offsets, block_size

    def encode(self, batch: Batch) -> tuple[Tensor, Tensor]:
        expected = self.config.obs_len - 1 if self.config.representation == "relative" \
            else self.config.obs_len
        return self.encoder(batch.enc_steps, expected_len=expected)

    def social_rows(self, enc_h: Tensor, batch: Batch) -> SocialFeatures:
        return social_features(enc_h, batch.last_pos, batch.agent_ids,
                               n_max=self.config.n_max, groups=batch.seg_bounds)

    def generate(self, batch: Batch, z: np.ndarray,
                 rasters: dict[str, FeatureGrid] | None = None,
                 export_attention: bool = False) -> GenOutput:
        """Decode pred_len future steps for every agent in the batch.

        z: (A, z_dim), one draw per agent trajectory, constant across steps.
        """
        cfg = self.config
        a = batch.num_agents
        if z.shape != (a, cfg.z_dim):
            raise ShapeError(f"generate: z {z.shape}, expected {(a, cfg.z_dim)}")
        enc_h, enc_c = self.encode(batch)
        social = self.social_rows(enc_h, batch)

        cells = cell_offsets = block = None
        if self.gates.physical_stream:
            if rasters is None:
                raise ValueError("physical stream enabled but no scene grids given")
            cells, offsets, block = self.scene_cells(rasters, batch.scene_ids)
            per_agent = np.empty(a, dtype=np.intp)
            for (lo, hi), sid in zip(batch.seg_bounds, batch.scene_ids):
                per_agent[lo:hi] = offsets[sid]
            cell_offsets = per_agent

        z_t = Tensor(z)
        zero_phys = Tensor(np.zeros((a, cfg.phys_embed)))
        h_dec, c_dec = enc_h, enc_c
        prev = Tensor(batch.prev_step)
        pos = Tensor(batch.last_pos)
        out = GenOutput(step_tensors=[], abs_tensors=[], social=social)
        c_so = c_ph = None
        for step in range(cfg.pred_len):
            recompute = cfg.attention_recompute == "per_step" or step == 0
            if recompute:
                if self.gates.social_attention:
                    c_so, w_so = self.social_att(social, h_dec)
                else:
                    c_so, w_so = uniform_social_context(social)
                if not self.gates.physical_stream:
                    c_ph, w_ph = zero_phys, None
                elif self.gates.physical_attention:
                    c_ph, w_ph = self.phys_att(cells, h_dec, block, cell_offsets)
                else:
                    c_ph, w_ph = uniform_physical_context(cells, a, cfg.phys_embed,
                                                          block, cell_offsets)
                if export_attention:
                    out.social_weights.append(w_so.data.copy())
                    if w_ph is not None:
                        out.physical_weights.append(w_ph.data.copy())
            dec_in = ad.concat([self.dec_embed(prev), c_so, c_ph, z_t], axis=-1)
            h_dec, c_dec = self.decoder.step(dec_in, h_dec, c_dec)
            step_out = self.head(h_dec)
            out.step_tensors.append(step_out)
            if cfg.representation == "relative":
                pos = ad.add(pos, step_out)
            else:
                pos = ad.add(step_out, Tensor(batch.last_pos))
            out.abs_tensors.append(pos)
            prev = step_out
        return out

    # discriminator -----------------------------------------------------

    def _dis_expected_len(self) -> int:
        total = self.config.obs_len + self.config.pred_len
        return total - 1 if self.config.representation == "relative" else total

    def discriminate_steps(self, steps: list[Tensor]) -> Tensor:
        """Score a model-space step sequence; returns logits (A,).

        With dis_per_step the mean of per-step logits is returned so every
        prefix contributes to the score.
        """
        expected = self._dis_expected_len()
        if len(steps) != expected:
            raise ShapeError(f"discriminator: expected {expected} steps, got {len(steps)}")
        a = steps[0].shape[0]
        h, c = self.dis_lstm.initial_state(a)
        per_step = []
        for s in steps:
            h, c = self.dis_lstm.step(self.dis_embed(s), h, c)
            if self.config.dis_per_step:
                per_step.append(self.dis_head(h))
        if self.config.dis_per_step:
            # per-prefix variant: average of the per-step logits
            stacked = ad.concat(per_step, axis=-1)
            logits = ad.matmul(stacked, Tensor(np.full((len(per_step), 1), 1.0 / len(per_step))))
        else:
            logits = self.dis_head(h)
        return ad.reshape(logits, (a,))

    def real_steps(self, batch: Batch) -> list[Tensor]:
        seq = np.concatenate([batch.obs_steps, batch.fut_steps], axis=1)
        return [Tensor(seq[:, t, :]) for t in range(seq.shape[1])]

    def fake_steps(self, batch: Batch, gen: GenOutput, detach: bool = False) -> list[Tensor]:
        obs = [Tensor(batch.obs_steps[:, t, :]) for t in range(batch.obs_steps.shape[1])]
        fut = [Tensor(t.data.copy()) if detach else t for t in gen.step_tensors]
        return obs + fut

    def discriminate_trajectory(self, trajectory: np.ndarray) -> np.ndarray:
        """Score (A, obs+pred, 2) absolute trajectories; returns sigmoid scores."""
        traj = np.asarray(trajectory, dtype=np.float64)
        if traj.ndim == 2:
            traj = traj[None]
        total = self.config.obs_len + self.config.pred_len
        if traj.ndim != 3 or traj.shape[1] != total or traj.shape[2] != 2:
            raise ShapeError(f"discriminate: expected (A, {total}, 2), got {traj.shape}")
        if self.config.representation == "relative":
            seq = to_displacements(traj)
        else:
            seq = traj - traj[:, self.config.obs_len - 1:self.config.obs_len, :]
        steps = [Tensor(seq[:, t, :]) for t in range(seq.shape[1])]
        logits = self.discriminate_steps(steps)
        return 1.0 / (1.0 + np.exp(-logits.data))


def predict_segment(model: TrajGanModel, segment: Segment,
                    rasters: dict[str, FeatureGrid] | None,
                    z: np.ndarray, export_attention: bool = False
                    ) -> tuple[np.ndarray, GenOutput]:
    """Convenience single-segment forward; returns (A, pred_len, 2) positions."""
    batch = make_batch([segment], model.config)
    gen = model.generate(batch, z, rasters, export_attention=export_attention)
    return gen.pred_abs(), gen
