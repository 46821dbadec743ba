"""Scene feature grids: geo-referencing, file container, feature providers.

A grid is an (H, W, C) array of per-cell features plus an affine transform
from scene coordinates to fractional grid coordinates. Feature providers
turn a raw scene grid (e.g. a rasterized occupancy map) into the feature
grid consumed by physical attention: the file-backed provider passes
precomputed features through verbatim, the convolutional provider applies
a small trainable stack and participates in the autodiff graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Module, xavier_uniform

GRID_MAGIC = b"TGGRID1\n"
GRID_FORMAT_VERSION = 1


@dataclass
class GridTransform:
    """Affine map from scene coordinates (x, y) to fractional (col, row).

    ``grid = m @ (x, y) + t``. Must be invertible over the grid extent.
    Cell (r, c) covers fractional rows [r, r+1) and cols [c, c+1).
    """

    m: np.ndarray  # (2, 2)
    t: np.ndarray  # (2,)

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64).reshape(2, 2)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(2)
        if abs(np.linalg.det(self.m)) < 1e-12:
            raise ValueError("GridTransform: singular scene-to-grid matrix")

    @classmethod
    def from_origin(cls, x0: float, y0: float, cell_w: float, cell_h: float) -> "GridTransform":
        m = np.array([[1.0 / cell_w, 0.0], [0.0, 1.0 / cell_h]])
        return cls(m=m, t=m @ [-x0, -y0])

    def world_to_grid(self, points: np.ndarray) -> np.ndarray:
        """(..., 2) scene points -> (..., 2) fractional (col, row)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.m.T + self.t

    def grid_to_world(self, grid_points: np.ndarray) -> np.ndarray:
        pts = np.asarray(grid_points, dtype=np.float64)
        inv = np.linalg.inv(self.m)
        return (pts - self.t) @ inv.T

    def cell_index(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) integer cell indices containing the given points."""
        g = self.world_to_grid(points)
        cols = np.floor(g[..., 0]).astype(np.int64)
        rows = np.floor(g[..., 1]).astype(np.int64)
        return rows, cols

    def cell_center(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        g = np.stack([np.asarray(cols) + 0.5, np.asarray(rows) + 0.5], axis=-1)
        return self.grid_to_world(g)

    def compose_rigid(self, rot: np.ndarray, center: np.ndarray) -> "GridTransform":
        """Transform for a scene rigidly mapped by ``p -> rot (p - c) + c``.

        The returned transform sends a transformed point to the same cell
        the original point occupied, so grid features need no resampling.
        """
        rot = np.asarray(rot, dtype=np.float64)
        center = np.asarray(center, dtype=np.float64)
        new_m = self.m @ rot.T
        new_t = self.t + self.m @ (center - rot.T @ center)
        return GridTransform(m=new_m, t=new_t)


@dataclass
class FeatureGrid:
    """Raw (H, W, C) grid values plus geo-referencing."""

    values: np.ndarray
    transform: GridTransform

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"FeatureGrid: expected (H, W, C), got {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass
class SceneFeatureGrid:
    """Feature grid as seen by the model; features may carry gradients."""

    features: Tensor  # (H, W, C)
    transform: GridTransform

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.features.shape


def save_grid(grid: FeatureGrid, path) -> None:
    header = {
        "format_version": GRID_FORMAT_VERSION,
        "height": grid.height,
        "width": grid.width,
        "channels": grid.channels,
        "dtype": "float64",
        "transform": {"m": grid.transform.m.tolist(), "t": grid.transform.t.tolist()},
    }
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def load_grid(path) -> FeatureGrid:
    with open(path, "rb") as fh:
        magic = fh.read(len(GRID_MAGIC))
        if magic != GRID_MAGIC:
            raise ValueError(f"{path}: not a grid container (bad magic)")
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format_version") != GRID_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported grid format version")
        h, w, c = header["height"], header["width"], header["channels"]
        raw = fh.read(h * w * c * 8)
        if len(raw) != h * w * c * 8:
            raise ValueError(f"{path}: truncated grid data")
        values = np.frombuffer(raw, dtype="<f8").reshape(h, w, c).copy()
    tr = GridTransform(m=np.array(header["transform"]["m"]),
                       t=np.array(header["transform"]["t"]))
    return FeatureGrid(values=values, transform=tr)


# ---------------------------------------------------------------------------
# providers


class FileGridProvider(Module):
    """Serves one precomputed feature grid verbatim (no trainable weights).

    The scene argument is ignored: the grid on disk stands in for the
    scene's features (single-scene use, e.g. externally computed features).
    """

    def __init__(self, path):
        self._grid = load_grid(path)

    @property
    def out_channels(self) -> int:
        return self._grid.channels

    def __call__(self, scene: FeatureGrid | None = None) -> SceneFeatureGrid:
        return SceneFeatureGrid(features=Tensor(self._grid.values.copy()),
                                transform=self._grid.transform)


class ConvGridProvider(Module):
    """Trainable 2-layer 3x3 convolutional stack over a raw scene grid."""

    def __init__(self, rng: np.random.Generator, in_channels: int,
                 hidden_channels: int = 16, out_channels: int = 64):
        self.in_channels = in_channels
        self.out_channels = out_channels
        fan1 = 9 * in_channels
        self.k1 = Tensor(xavier_uniform(rng, fan1, 9 * hidden_channels,
                                        (3, 3, in_channels, hidden_channels)),
                         requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden_channels), requires_grad=True)
        fan2 = 9 * hidden_channels
        self.k2 = Tensor(xavier_uniform(rng, fan2, 9 * out_channels,
                                        (3, 3, hidden_channels, out_channels)),
                         requires_grad=True)
        self.b2 = Tensor(np.zeros(out_channels), requires_grad=True)

    def __call__(self, scene: FeatureGrid) -> SceneFeatureGrid:
        if scene.channels != self.in_channels:
            raise ValueError(f"conv provider expects {self.in_channels} input channels, "
                             f"scene grid has {scene.channels}")
        x = Tensor(scene.values)
        h = ad.relu(ad.conv2d(x, self.k1, self.b1))
        out = ad.conv2d(h, self.k2, self.b2)
        return SceneFeatureGrid(features=out, transform=scene.transform)
