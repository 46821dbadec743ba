"""Traversability maps: sample the generator, validate with the
discriminator, accumulate accepted trajectory points on the scene grid.

Seed histories are observed windows drawn from a dataset; each seed
produces a batch of fresh-noise samples, a sample is accepted when its
full-horizon discriminator score exceeds the threshold, and every accepted
position is splatted into its nearest grid cell. Before normalization the
map mass is exactly pred_len times the number of accepted trajectories
(points are clamped to the grid border, never dropped).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .grid import FeatureGrid
from .model import TrajGanModel, make_batch
from .train import substream


@dataclass
class TraversabilityMap:
    counts: np.ndarray            # (H, W) nonnegative accumulation
    threshold: float
    n_seeds: int
    samples_per_seed: int
    accepted: int
    total: int
    empty_warning: bool = False
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return float(self.counts.sum())

    def normalized(self) -> np.ndarray:
        total = self.counts.sum()
        if total <= 0:
            return np.zeros_like(self.counts)
        return self.counts / total

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.total if self.total else 0.0


def _splat(counts: np.ndarray, grid: FeatureGrid, points: np.ndarray,
           bilinear: bool = False) -> None:
    h, w = counts.shape
    if bilinear:
        g = grid.transform.world_to_grid(points.reshape(-1, 2)) - 0.5
        c0 = np.floor(g[:, 0]).astype(int)
        r0 = np.floor(g[:, 1]).astype(int)
        fc = g[:, 0] - c0
        fr = g[:, 1] - r0
        for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                            (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
            rr = np.clip(r0 + dr, 0, h - 1)
            cc = np.clip(c0 + dc, 0, w - 1)
            np.add.at(counts, (rr, cc), wgt)
    else:
        rows, cols = grid.transform.cell_index(points.reshape(-1, 2))
        rows = np.clip(rows, 0, h - 1)
        cols = np.clip(cols, 0, w - 1)
        np.add.at(counts, (rows, cols), 1.0)


def build_map(model: TrajGanModel, dataset: Dataset,
              rasters: dict[str, FeatureGrid],
              n_seeds: int = 30, samples_per_seed: int = 100,
              threshold: float = 0.5, seed: int = 0,
              bilinear: bool = False) -> TraversabilityMap:
    """Accumulate accepted generator samples from random seed agents.

    Seed agents (segment/agent pairs) are drawn without replacement when
    possible; each sample re-generates the whole segment so social context
    is present, but only the seed agent's trajectory is scored and
    splatted.
    """
    if n_seeds < 1:
        raise ValueError("build_map: need at least one seed agent")
    if samples_per_seed < 1:
        raise ValueError("build_map: samples_per_seed must be >= 1")
    if not dataset.segments:
        raise ValueError("build_map: empty dataset")
    rng = substream(seed, "traversability")
    pairs = [(si, ai) for si, seg in enumerate(dataset.segments)
             for ai in range(seg.num_agents)]
    replace = len(pairs) < n_seeds
    chosen = rng.choice(len(pairs), size=n_seeds, replace=replace)

    first_scene = dataset.segments[0].scene_id
    ref = rasters[first_scene]
    counts = np.zeros((ref.height, ref.width))
    accepted = total = 0
    for pick in chosen:
        si, ai = pairs[pick]
        seg = dataset.segments[si]
        batch = make_batch([seg], model.config)
        obs_abs = seg.observed[ai]
        for _ in range(samples_per_seed):
            z = rng.standard_normal((batch.num_agents, model.config.z_dim))
            gen = model.generate(batch, z, rasters if model.gates.physical_stream else None)
            pred = gen.pred_abs()[ai]
            traj = np.concatenate([obs_abs, pred], axis=0)
            score = float(model.discriminate_trajectory(traj)[0])
            total += 1
            if score > threshold:
                accepted += 1
                _splat(counts, rasters[seg.scene_id], pred, bilinear=bilinear)
    return TraversabilityMap(
        counts=counts, threshold=threshold, n_seeds=n_seeds,
        samples_per_seed=samples_per_seed, accepted=accepted, total=total,
        empty_warning=(accepted == 0), seed=seed,
        meta={"pred_len": model.config.pred_len},
    )


def mass_inside(map_: TraversabilityMap, walkable: np.ndarray) -> float:
    """Fraction of map mass in walkable cells (0 when the map is empty)."""
    total = map_.counts.sum()
    if total <= 0:
        return 0.0
    return float(map_.counts[walkable].sum() / total)


# ---------------------------------------------------------------------------
# export


def write_pgm(map_: TraversabilityMap, path) -> None:
    """Plain (P2) portable graymap, brightest cell = 255."""
    counts = map_.counts
    peak = counts.max()
    scaled = np.zeros_like(counts, dtype=np.int64) if peak <= 0 else \
        np.round(counts / peak * 255).astype(np.int64)
    h, w = counts.shape
    lines = [f"P2", f"{w} {h}", "255"]
    for r in range(h):
        lines.append(" ".join(str(v) for v in scaled[r]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_text_grid(map_: TraversabilityMap, path) -> None:
    np.savetxt(path, map_.counts, fmt="%.1f")


def write_sidecar(map_: TraversabilityMap, path) -> None:
    payload = {
        "seed": map_.seed,
        "n_seeds": map_.n_seeds,
        "samples_per_seed": map_.samples_per_seed,
        "threshold": map_.threshold,
        "accepted": map_.accepted,
        "total": map_.total,
        "acceptance_rate": map_.acceptance_rate,
        "mass": map_.mass,
        "empty_warning": map_.empty_warning,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
