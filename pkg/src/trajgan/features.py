"""Feature streams: per-agent trajectory encodings and sorted social rows.

The encoder embeds each motion step with a linear map and runs a shared
LSTM over the observation window; its final hidden state is the agent's
encoding. Social features for a target agent are the differences between
neighbor encodings and its own, with rows ordered by ascending Euclidean
distance at the last observed frame (ties broken by ascending agent id)
and zero-padded to a fixed row count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .nn import Linear, LSTMCell, Module

log = logging.getLogger(__name__)


class TrajectoryEncoder(Module):
    """Linear step embedding followed by a shared LSTM; one per model."""

    def __init__(self, rng: np.random.Generator, embed_dim: int = 16, hidden_dim: int = 32):
        self.embed = Linear(rng, 2, embed_dim)
        self.lstm = LSTMCell(rng, embed_dim, hidden_dim)
        self.hidden_dim = hidden_dim

    def __call__(self, steps: np.ndarray, expected_len: int | None = None
                 ) -> tuple[Tensor, Tensor]:
        """Encode (A, T, 2) motion steps; returns final (h, c), each (A, hidden)."""
        steps = np.asarray(steps, dtype=np.float64)
        if steps.ndim != 3 or steps.shape[2] != 2:
            raise ShapeError(f"encoder: expected (A, T, 2) steps, got {steps.shape}")
        if expected_len is not None and steps.shape[1] != expected_len:
            raise ShapeError(f"encoder: expected sequence length {expected_len}, "
                             f"got {steps.shape[1]}")
        a = steps.shape[0]
        h, c = self.lstm.initial_state(a)
        for t in range(steps.shape[1]):
            x = self.embed(Tensor(steps[:, t, :]))
            h, c = self.lstm.step(x, h, c)
        return h, c


@dataclass
class SocialFeatures:
    """Distance-sorted neighbor-difference rows for every agent of a scene.

    values: (A, M, D) tensor; row j of agent i is enc(neighbor_j) - enc(i)
    for the j-th nearest neighbor, exactly zero beyond ``counts[i]``.
    """

    values: Tensor
    counts: np.ndarray            # (A,) real-neighbor counts
    neighbor_order: list[np.ndarray]  # per-agent neighbor row indices, nearest first
    truncated: int = 0            # neighbors dropped because A-1 > M

    @property
    def mask(self) -> np.ndarray:
        m = self.values.shape[1]
        return np.arange(m)[None, :] < self.counts[:, None]


def sorted_neighbors(positions: np.ndarray, agent_ids: np.ndarray,
                     target: int) -> np.ndarray:
    """Indices of all other agents ordered by (distance to target, agent id)."""
    a = positions.shape[0]
    others = np.array([j for j in range(a) if j != target], dtype=np.intp)
    if others.size == 0:
        return others
    d = np.linalg.norm(positions[others] - positions[target], axis=1)
    order = sorted(range(len(others)), key=lambda k: (d[k], int(agent_ids[others[k]])))
    return others[np.array(order, dtype=np.intp)]


def social_features(encodings: Tensor, positions: np.ndarray,
                    agent_ids: np.ndarray, n_max: int = 32,
                    groups: list[tuple[int, int]] | None = None) -> SocialFeatures:
    """Build the sorted, zero-padded social rows for every agent.

    encodings: (A, D) final encoder states at the current frame; positions:
    (A, 2) at the same frame. ``groups`` partitions the rows into
    independent scenes (row ranges); neighbors are searched within an
    agent's own group only. Row capacity is n_max - 1; overflowing
    neighbors beyond the nearest n_max - 1 are dropped with a warning.
    """
    a, d = encodings.shape
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (a, 2):
        raise ShapeError(f"social_features: positions {positions.shape} vs {a} encodings")
    if groups is None:
        groups = [(0, a)]
    m = n_max - 1
    neighbor_idx = np.zeros(a * m, dtype=np.intp)
    self_idx = np.repeat(np.arange(a, dtype=np.intp), m)
    mask = np.zeros((a * m, 1))
    counts = np.zeros(a, dtype=np.intp)
    order: list[np.ndarray] = [np.empty(0, dtype=np.intp)] * a
    truncated = 0
    for lo, hi in groups:
        pos_g = positions[lo:hi]
        ids_g = agent_ids[lo:hi]
        for local in range(hi - lo):
            i = lo + local
            neigh = lo + sorted_neighbors(pos_g, ids_g, local)
            if len(neigh) > m:
                truncated += len(neigh) - m
                neigh = neigh[:m]
            counts[i] = len(neigh)
            order[i] = neigh
            neighbor_idx[i * m:i * m + len(neigh)] = neigh
            mask[i * m:i * m + len(neigh), 0] = 1.0
    if truncated:
        log.warning("social_features: dropped %d neighbors beyond N_max-1=%d", truncated, m)
    diffs = ad.sub(ad.gather_rows(encodings, neighbor_idx),
                   ad.gather_rows(encodings, self_idx))
    # exact zeros on padding rows (0 * finite == 0)
    masked = ad.mul(diffs, Tensor(np.repeat(mask, d, axis=1)))
    values = ad.reshape(masked, (a, m, d))
    return SocialFeatures(values=values, counts=counts, neighbor_order=order,
                          truncated=truncated)
