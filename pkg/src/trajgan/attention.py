"""Soft attention over scene grid cells and over sorted neighbor rows.

Both mechanisms score each candidate by passing [candidate embedding,
decoder hidden state] through an MLP with layer widths 64, 128, 64, 1 and
a terminal softmax over candidates. The context vector is the weight-
averaged candidate embedding. Social attention masks padding rows so they
get exactly zero weight, and each row's result depends only on its real
prefix, so appending dummy rows cannot change the context. The unattended
("uniform") variants average candidates with equal weights and leave the
attention MLPs out of the graph entirely.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .features import SocialFeatures
from .grid import SceneFeatureGrid
from .nn import Linear, MLP, Module

ATTENTION_MLP_WIDTHS = [64, 128, 64, 1]


def _pair_rows(candidates: Tensor, h_dec: Tensor, per_agent: int) -> Tensor:
    """Tile candidate rows per agent and pair them with that agent's h_dec.

    candidates: (A * per_agent, D); h_dec: (A, H). Returns rows
    [candidate, h_dec] of shape (A * per_agent, D + H).
    """
    return ad.concat([candidates, ad.repeat_rows(h_dec, per_agent)], axis=-1)


class PhysicalAttention(Module):
    """Attention over grid cells; exports the H x W weight map."""

    def __init__(self, rng: np.random.Generator, grid_channels: int,
                 proj_dim: int = 32, embed_dim: int = 16, dec_dim: int = 32):
        self.grid_channels = grid_channels
        self.embed_dim = embed_dim
        # 1x1 convolution over cells == per-cell linear projection
        self.proj = Linear(rng, grid_channels, proj_dim)
        self.embed = Linear(rng, proj_dim, embed_dim)
        self.mlp = MLP(rng, embed_dim + dec_dim, ATTENTION_MLP_WIDTHS)

    def cell_embeddings(self, grid: SceneFeatureGrid) -> Tensor:
        """(H*W, embed_dim) embedded cells; computed once per scene."""
        h, w, c = grid.shape
        if c != self.grid_channels:
            raise ShapeError(f"physical attention configured for {self.grid_channels} "
                             f"channels, grid has {c}")
        cells = ad.reshape(grid.features, (h * w, c))
        return self.embed(ad.relu(self.proj(cells)))

    def __call__(self, cells: Tensor, h_dec: Tensor, block: int | None = None,
                 offsets: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        """Score cells against each agent's decoder state.

        cells: (N, embed_dim) from ``cell_embeddings`` for one scene, or a
        concatenation of several scenes' cells. Each agent's candidates are
        the contiguous block ``cells[offsets[a] : offsets[a] + block]``
        (default: all rows, for every agent). Returns
        (context (A, embed_dim), weights (A, block)).
        """
        a = h_dec.shape[0]
        if block is None:
            block = cells.shape[0]
        if offsets is None:
            offsets = np.zeros(a, dtype=np.intp)
        flat_cells = ad.gather_blocks(cells, offsets, block)
        rows = _pair_rows(flat_cells, h_dec, block)
        logits = ad.reshape(self.mlp(rows), (a, block))
        weights = ad.softmax(logits)
        values = ad.reshape(flat_cells, (a, block, self.embed_dim))
        context = ad.masked_weighted_sum(weights, values,
                                         np.full(a, block, dtype=np.intp))
        return context, weights


def uniform_physical_context(cells: Tensor, n_agents: int, embed_dim: int,
                             block: int | None = None,
                             offsets: np.ndarray | None = None
                             ) -> tuple[Tensor, Tensor]:
    """Unattended physical stream: plain mean over each agent's cells."""
    if block is None:
        block = cells.shape[0]
    if offsets is None:
        offsets = np.zeros(n_agents, dtype=np.intp)
    flat_cells = ad.gather_blocks(cells, offsets, block)
    values = ad.reshape(flat_cells, (n_agents, block, embed_dim))
    weights = Tensor(np.full((n_agents, block), 1.0 / block))
    context = ad.masked_weighted_sum(weights, values, np.full(n_agents, block, dtype=np.intp))
    return context, weights


class SocialAttention(Module):
    """Masked attention over sorted neighbor-difference rows."""

    def __init__(self, rng: np.random.Generator, row_dim: int = 32, dec_dim: int = 32):
        self.row_dim = row_dim
        self.mlp = MLP(rng, row_dim + dec_dim, ATTENTION_MLP_WIDTHS)

    def __call__(self, social: SocialFeatures, h_dec: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (context (A, row_dim), per-neighbor weights (A, M)).

        Padding rows get exactly zero weight; an agent with no neighbors
        gets a zero context vector.
        """
        a, m, d = social.values.shape
        if d != self.row_dim:
            raise ShapeError(f"social attention configured for {self.row_dim}-dim rows, "
                             f"got {d}")
        flat_values = ad.reshape(social.values, (a * m, d))
        rows = _pair_rows(flat_values, h_dec, m)
        logits = ad.reshape(self.mlp(rows), (a, m))
        weights = ad.masked_softmax(logits, social.counts)
        context = ad.masked_weighted_sum(weights, social.values, social.counts)
        return context, weights


def uniform_social_context(social: SocialFeatures) -> tuple[Tensor, Tensor]:
    """Unattended social stream: mean over each agent's real neighbor rows."""
    a, m, _ = social.values.shape
    w = np.zeros((a, m))
    for i, k in enumerate(social.counts):
        if k:
            w[i, :k] = 1.0 / k
    weights = Tensor(w)
    context = ad.masked_weighted_sum(weights, social.values, social.counts)
    return context, weights
