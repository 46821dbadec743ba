"""Trajectory data handling: parsing, windowing, augmentation, displacements.

Input files are plain text with one observation per line:
``frame agent_id x y``, whitespace separated. Segments are fixed windows of
8 observed + 12 future positions; an agent is included in a segment only if
it is present at every one of the 20 consecutive frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

OBS_LEN = 8
PRED_LEN = 12

DATASET_FORMAT_VERSION = 1


@dataclass
class TrackPoint:
    frame: int
    agent_id: int
    x: float
    y: float


@dataclass
class Segment:
    """One prediction instance: aligned windows for the agents of a scene.

    observed: (A, obs_len, 2); future: (A, pred_len, 2); agents are sorted
    by agent_id so array order is canonical regardless of input ordering.
    """

    scene_id: str
    start_frame: int
    agent_ids: np.ndarray          # (A,) int
    observed: np.ndarray           # (A, obs_len, 2) float64
    future: np.ndarray             # (A, pred_len, 2) float64

    @property
    def num_agents(self) -> int:
        return len(self.agent_ids)

    def last_observed(self) -> np.ndarray:
        return self.observed[:, -1, :]


@dataclass
class Dataset:
    segments: list[Segment] = field(default_factory=list)
    frame_interval_s: float = 0.4
    units: str = "meters"

    def __len__(self) -> int:
        return len(self.segments)


def parse_trajectory_file(path) -> list[TrackPoint]:
    """Parse ``frame agent_id x y`` lines, preserving order."""
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split()
            if len(fields) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
            try:
                frame = int(float(fields[0]))
                agent = int(float(fields[1]))
                x = float(fields[2])
                y = float(fields[3])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed value ({exc})") from None
            if frame < 0:
                raise ValueError(f"{path}:{lineno}: negative frame index")
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ValueError(f"{path}:{lineno}: non-finite coordinate")
            points.append(TrackPoint(frame, agent, x, y))
    return points


def build_segments(points: list[TrackPoint], obs_len: int = OBS_LEN,
                   pred_len: int = PRED_LEN, stride: int = 1,
                   scene_id: str = "scene") -> Dataset:
    """Window tracks into fixed-length segments.

    Frames are assumed uniformly sampled; windows slide over the sorted
    unique frames with the given stride. A segment keeps exactly the agents
    present at all of its frames, copying their positions verbatim. Windows
    with no qualifying agent are dropped.
    """
    if obs_len < 1 or pred_len < 1:
        raise ValueError("obs_len and pred_len must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    total = obs_len + pred_len
    by_agent: dict[int, dict[int, tuple[float, float]]] = {}
    frames = set()
    for p in points:
        by_agent.setdefault(p.agent_id, {})[p.frame] = (p.x, p.y)
        frames.add(p.frame)
    if not frames:
        return Dataset()
    frame_list = sorted(frames)
    segments = []
    for start in range(0, len(frame_list) - total + 1, stride):
        window = frame_list[start:start + total]
        ids = sorted(a for a, track in by_agent.items()
                     if all(f in track for f in window))
        if not ids:
            continue
        coords = np.array([[by_agent[a][f] for f in window] for a in ids])
        segments.append(Segment(
            scene_id=scene_id,
            start_frame=window[0],
            agent_ids=np.array(ids, dtype=np.int64),
            observed=coords[:, :obs_len, :].copy(),
            future=coords[:, obs_len:, :].copy(),
        ))
    segments.sort(key=lambda s: (s.scene_id, s.start_frame))
    return Dataset(segments=segments)


# ---------------------------------------------------------------------------
# rigid augmentation


def rotation_matrix(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s], [s, c]])


def transform_points(points: np.ndarray, matrix: np.ndarray,
                     center: np.ndarray) -> np.ndarray:
    """Apply ``p -> R (p - center) + center`` to an (..., 2) array."""
    flat = points.reshape(-1, 2)
    out = (flat - center) @ matrix.T + center
    return out.reshape(points.shape)


def augment_segment(segment: Segment, matrix: np.ndarray,
                    center: np.ndarray) -> Segment:
    """Apply one rigid transform (rotation and/or flip) to a segment.

    Pairwise inter-agent distances are preserved; the paired feature grid
    must be transformed with the same matrix (see grid.transform_grid).
    """
    center = np.asarray(center, dtype=np.float64)
    return Segment(
        scene_id=segment.scene_id,
        start_frame=segment.start_frame,
        agent_ids=segment.agent_ids.copy(),
        observed=transform_points(segment.observed, matrix, center),
        future=transform_points(segment.future, matrix, center),
    )


FLIP_X = np.array([[-1.0, 0.0], [0.0, 1.0]])

_NAMED_TRANSFORMS = {
    "flip_x": FLIP_X,
    "rot90": rotation_matrix(np.pi / 2.0),
    "rot180": rotation_matrix(np.pi),
    "rot270": rotation_matrix(3.0 * np.pi / 2.0),
}


def random_rigid_transform(rng: np.random.Generator) -> np.ndarray:
    """Random flip plus arbitrary-angle rotation, as a 2x2 matrix."""
    m = rotation_matrix(rng.uniform(0.0, 2.0 * np.pi))
    if rng.random() < 0.5:
        m = m @ FLIP_X
    return m


def resolve_transform(transform) -> np.ndarray:
    """Accepts a named transform, a rotation angle in radians, or a matrix."""
    if isinstance(transform, str):
        if transform not in _NAMED_TRANSFORMS:
            raise ValueError(f"unknown transform {transform!r}; "
                             f"expected one of {sorted(_NAMED_TRANSFORMS)} or an angle")
        return _NAMED_TRANSFORMS[transform]
    if isinstance(transform, (int, float)):
        return rotation_matrix(float(transform))
    m = np.asarray(transform, dtype=np.float64)
    if m.shape != (2, 2):
        raise ValueError(f"transform matrix must be 2x2, got {m.shape}")
    return m


def augment(segment: Segment, grid, transform):
    """Apply one rigid transform jointly to a segment and its feature grid.

    The rotation/flip is taken about the grid extent's center. Grid cells
    are re-indexed by nearest-neighbor sampling, which is exact for flips
    and right-angle rotations of an axis-aligned grid; the new grid's
    geo-transform is aligned to the transformed extent so the pairing
    between coordinates and cells is preserved. Returns (segment, grid).
    """
    from .grid import FeatureGrid, GridTransform  # local import, no cycle

    m = resolve_transform(transform)
    h, w, c = grid.values.shape
    old_t = grid.transform
    center = old_t.grid_to_world(np.array([w / 2.0, h / 2.0]))
    corners = old_t.grid_to_world(np.array([[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]]))
    new_corners = transform_points(corners, m, center)
    x0, y0 = new_corners.min(axis=0)
    x1, y1 = new_corners.max(axis=0)
    swapped = abs(m[0, 0]) < abs(m[0, 1])
    new_w, new_h = (h, w) if swapped else (w, h)
    new_transform = GridTransform.from_origin(x0, y0, (x1 - x0) / new_w, (y1 - y0) / new_h)
    inv = np.linalg.inv(m)
    rows_new, cols_new = np.meshgrid(np.arange(new_h), np.arange(new_w), indexing="ij")
    centers = new_transform.grid_to_world(
        np.stack([cols_new + 0.5, rows_new + 0.5], axis=-1).reshape(-1, 2))
    sources = transform_points(centers, inv, center)
    src_rows, src_cols = old_t.cell_index(sources)
    values = np.zeros((new_h, new_w, c))
    ok = (src_rows >= 0) & (src_rows < h) & (src_cols >= 0) & (src_cols < w)
    flat = values.reshape(-1, c)
    flat[ok] = grid.values[src_rows[ok], src_cols[ok]]
    new_grid = FeatureGrid(values=values, transform=new_transform)
    return augment_segment(segment, m, center), new_grid


# ---------------------------------------------------------------------------
# relative representation


def to_displacements(positions: np.ndarray) -> np.ndarray:
    """Per-step displacements of an (..., T, 2) position array (T >= 2)."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape[-2] < 2:
        raise ValueError("to_displacements: need at least 2 positions")
    return positions[..., 1:, :] - positions[..., :-1, :]


def to_absolute(origin: np.ndarray, displacements: np.ndarray) -> np.ndarray:
    """Invert ``to_displacements``: cumulative sum of steps from ``origin``.

    origin: (..., 2); displacements: (..., T, 2); returns (..., T, 2) where
    entry t is origin + sum of the first t+1 displacements. The round trip
    to_absolute(p[..., 0, :], to_displacements(p)) reproduces p[..., 1:, :]
    exactly for inputs generated by cumulative summation.
    """
    displacements = np.asarray(displacements, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    return origin[..., None, :] + np.cumsum(displacements, axis=-2)


# ---------------------------------------------------------------------------
# dataset cache


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as versioned JSON (floats round-trip exactly)."""
    payload = {
        "format_version": DATASET_FORMAT_VERSION,
        "frame_interval_s": dataset.frame_interval_s,
        "units": dataset.units,
        "segments": [
            {
                "scene_id": s.scene_id,
                "start_frame": s.start_frame,
                "agent_ids": s.agent_ids.tolist(),
                "observed": s.observed.tolist(),
                "future": s.future.tolist(),
            }
            for s in dataset.segments
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported dataset format version {version!r}")
    segments = [
        Segment(
            scene_id=s["scene_id"],
            start_frame=s["start_frame"],
            agent_ids=np.array(s["agent_ids"], dtype=np.int64),
            observed=np.array(s["observed"], dtype=np.float64),
            future=np.array(s["future"], dtype=np.float64),
        )
        for s in payload["segments"]
    ]
    return Dataset(segments=segments,
                   frame_interval_s=payload["frame_interval_s"],
                   units=payload["units"])


def write_trajectory_file(points: list[TrackPoint], path) -> None:
    """Inverse of parse_trajectory_file; uses repr so floats round-trip."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in points:
            fh.write(f"{p.frame} {p.agent_id} {p.x!r} {p.y!r}\n")
