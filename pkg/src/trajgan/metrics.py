"""Evaluation: displacement errors, best-of-k sampling, collisions, baseline.

ADE is the mean Euclidean distance between prediction and ground truth
over all agents and timesteps; FDE is the mean distance at the final
step. The collision percentage counts, per frame, the pedestrians closer
than a threshold to at least one other pedestrian, divided by the
pedestrians in that frame, averaged over frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Segment
from .grid import FeatureGrid

COLLISION_THRESHOLD_M = 0.10


def ade(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"ade: shape mismatch {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def fde(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"fde: shape mismatch {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred[..., -1, :] - gt[..., -1, :], axis=-1).mean())


def collision_pct(frames: list[np.ndarray],
                  threshold: float = COLLISION_THRESHOLD_M) -> float:
    """Percentage of colliding pedestrians per frame, averaged over frames.

    ``frames`` is a list of (N_f, 2) position arrays. Frames with no
    pedestrians are skipped.
    """
    if threshold <= 0:
        raise ValueError("collision threshold must be positive")
    ratios = []
    for pos in frames:
        pos = np.asarray(pos, dtype=np.float64)
        n = pos.shape[0]
        if n == 0:
            continue
        if n == 1:
            ratios.append(0.0)
            continue
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        involved = (d < threshold).any(axis=1).sum()
        ratios.append(involved / n)
    if not ratios:
        return 0.0
    return float(np.mean(ratios) * 100.0)


def dataset_future_frames(dataset: Dataset) -> list[np.ndarray]:
    """Per-(segment, step) position frames of the ground-truth futures."""
    frames = []
    for seg in dataset.segments:
        for t in range(seg.future.shape[1]):
            frames.append(seg.future[:, t, :])
    return frames


def linear_baseline(observed: np.ndarray, pred_len: int = 12) -> np.ndarray:
    """Least-squares line fit per coordinate, extrapolated pred_len frames.

    observed: (T, 2) or (A, T, 2) with T >= 2; frame index is the regressor.
    """
    observed = np.asarray(observed, dtype=np.float64)
    single = observed.ndim == 2
    if single:
        observed = observed[None]
    a, t_obs, _ = observed.shape
    if t_obs < 2:
        raise ValueError("linear_baseline: need at least 2 observed points")
    ts = np.arange(t_obs, dtype=np.float64)
    t_fut = np.arange(t_obs, t_obs + pred_len, dtype=np.float64)
    out = np.empty((a, pred_len, 2))
    for i in range(a):
        for d in range(2):
            slope, intercept = np.polyfit(ts, observed[i, :, d], 1)
            out[i, :, d] = slope * t_fut + intercept
    return out[0] if single else out


@dataclass
class MetricReport:
    ade: float
    fde: float
    k: int
    collision_pct: float
    segments: int
    seed: int
    units: str = "meters"
    per_scene: dict[str, dict[str, float]] = field(default_factory=dict)

    def scaled(self, factor: float, units: str) -> "MetricReport":
        """Report in different units (e.g. pixels); distances scale linearly."""
        return MetricReport(
            ade=self.ade * factor, fde=self.fde * factor, k=self.k,
            collision_pct=self.collision_pct, segments=self.segments,
            seed=self.seed, units=units,
            per_scene={s: {"ade": v["ade"] * factor, "fde": v["fde"] * factor,
                           "segments": v["segments"]}
                       for s, v in self.per_scene.items()},
        )

    def lines(self) -> str:
        rows = [f"segments {self.segments}  k {self.k}  seed {self.seed}",
                f"ADE  {self.ade:.4f} {self.units}",
                f"FDE  {self.fde:.4f} {self.units}",
                f"collisions  {self.collision_pct:.3f} % of pedestrians per frame"]
        for scene, v in sorted(self.per_scene.items()):
            rows.append(f"  {scene}: ade {v['ade']:.4f}  fde {v['fde']:.4f}  "
                        f"segments {int(v['segments'])}")
        return "\n".join(rows)


def segment_rng(seed: int, seg_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(seg_index)]))


def best_of_k_segment(model, segment: Segment,
                      rasters: dict[str, FeatureGrid] | None,
                      k: int, seed: int, seg_index: int = 0
                      ) -> tuple[float, float, np.ndarray]:
    """Min-ADE and min-FDE over k z-draws for one segment.

    Draws come from one generator seeded by (seed, seg_index), so sample j
    is identical for every k >= j+1 (nested draws); min-ADE is therefore
    non-increasing in k. Also returns the first sample's prediction.
    """
    from .model import make_batch  # local import to keep module load light

    if k < 1:
        raise ValueError("best_of_k: k must be >= 1")
    rng = segment_rng(seed, seg_index)
    batch = make_batch([segment], model.config)
    best_ade = best_fde = np.inf
    first_pred = None
    for _ in range(k):
        z = rng.standard_normal((batch.num_agents, model.config.z_dim))
        gen = model.generate(batch, z, rasters)
        pred = gen.pred_abs()
        if first_pred is None:
            first_pred = pred
        best_ade = min(best_ade, ade(pred, segment.future))
        best_fde = min(best_fde, fde(pred, segment.future))
    return best_ade, best_fde, first_pred


def evaluate(model, dataset: Dataset, rasters: dict[str, FeatureGrid] | None,
             k: int = 20, seed: int = 0,
             collision_threshold: float = COLLISION_THRESHOLD_M) -> MetricReport:
    """Best-of-k evaluation over a dataset.

    The reported ADE/FDE average the per-segment minima over k samples;
    the collision percentage is computed from the first sample of every
    segment (so it does not depend on k).
    """
    if k < 1:
        raise ValueError("evaluate: k must be >= 1")
    ades, fdes = [], []
    frames = []
    by_scene: dict[str, list[tuple[float, float]]] = {}
    for idx, seg in enumerate(dataset.segments):
        a_k, f_k, first = best_of_k_segment(model, seg, rasters, k, seed, idx)
        ades.append(a_k)
        fdes.append(f_k)
        by_scene.setdefault(seg.scene_id, []).append((a_k, f_k))
        for t in range(first.shape[1]):
            frames.append(first[:, t, :])
    per_scene = {
        scene: {"ade": float(np.mean([a for a, _ in vals])),
                "fde": float(np.mean([f for _, f in vals])),
                "segments": float(len(vals))}
        for scene, vals in by_scene.items()
    }
    return MetricReport(
        ade=float(np.mean(ades)) if ades else 0.0,
        fde=float(np.mean(fdes)) if fdes else 0.0,
        k=k,
        collision_pct=collision_pct(frames, collision_threshold) if frames else 0.0,
        segments=len(dataset.segments),
        seed=seed,
        per_scene=per_scene,
    )
