"""Synthetic multi-agent scenes for desk-scale training and evaluation,
plus the on-disk scene-bundle layout.

The corridor scene is a rectangle with a blocking obstacle mid-way that
leaves a gap at the top or bottom (drawn per scene). Agents stream in both
directions, walk straight until close to the obstacle, detour through the
gap in direction-separated lanes, then return toward their goal line.
Which way a path bends is therefore decided by scene layout, and for most
windows the bend happens in the future half, so a model can only predict
it by reading the scene grid.

Agents avoid each other with a short-range repulsion and never enter the
obstacle. The paired raster grid has channels [free-space fraction,
col/W, row/H]; the boolean walkable mask marks cells not fully inside
the obstacle, so every simulated position lies in a walkable cell.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, TrackPoint, build_segments, parse_trajectory_file, \
    write_trajectory_file
from .grid import FeatureGrid, GridTransform, load_grid, save_grid

RASTER_CHANNELS = 3


@dataclass
class SceneSpec:
    kind: str = "corridor"            # corridor | crossing
    length: float = 24.0              # x extent, meters
    width: float = 8.0                # y extent, meters
    gap: float = 2.8                  # free opening left by the obstacle
    obstacle_depth: float = 3.0       # obstacle extent along x
    n_agents: int = 14
    spawn_interval: int = 7           # frames between spawns per direction
    frames: int = 110
    speed_mean: float = 1.2           # m/s
    speed_std: float = 0.1
    noise_std: float = 0.03           # velocity noise, m/s
    lane_offset: float = 0.55         # lateral separation of the two flows
    lookahead: float = 3.0            # distance at which agents aim for the gap
    frame_interval_s: float = 0.4
    grid_w: int = 12
    grid_h: int = 4
    obs_len: int = 8
    pred_len: int = 12
    extras: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in ("corridor", "crossing"):
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if self.kind == "corridor" and self.gap >= self.width:
            raise ValueError("gap must be smaller than corridor width")
        if self.kind == "corridor" and self.gap <= 0.8:
            raise ValueError("infeasible scene: gap leaves no walkable passage")
        if self.grid_w < 1 or self.grid_h < 1:
            raise ValueError("grid must have at least one cell")


@dataclass
class SceneLayout:
    obstacle: tuple[float, float, float, float] | None  # (x0, y0, x1, y1)
    gap_lo: float
    gap_hi: float


def _draw_layout(spec: SceneSpec, rng: np.random.Generator) -> SceneLayout:
    if spec.kind == "crossing":
        return SceneLayout(obstacle=None, gap_lo=0.0, gap_hi=spec.width)
    cx = spec.length / 2.0 + rng.uniform(-2.0, 2.0)
    x0, x1 = cx - spec.obstacle_depth / 2.0, cx + spec.obstacle_depth / 2.0
    if rng.random() < 0.5:
        # gap at the bottom
        y0, y1 = spec.gap, spec.width
        gap_lo, gap_hi = 0.0, spec.gap
    else:
        y0, y1 = 0.0, spec.width - spec.gap
        gap_lo, gap_hi = spec.width - spec.gap, spec.width
    return SceneLayout(obstacle=(x0, y0, x1, y1), gap_lo=gap_lo, gap_hi=gap_hi)


def _inside_rect(p: np.ndarray, rect, margin: float = 0.0) -> bool:
    x0, y0, x1, y1 = rect
    return (x0 - margin < p[0] < x1 + margin) and (y0 - margin < p[1] < y1 + margin)


def _push_out(p: np.ndarray, rect) -> np.ndarray:
    """Project a point inside the rect onto its nearest edge (plus margin)."""
    x0, y0, x1, y1 = rect
    eps = 1e-3
    candidates = [
        (p[0] - x0, np.array([x0 - eps, p[1]])),
        (x1 - p[0], np.array([x1 + eps, p[1]])),
        (p[1] - y0, np.array([p[0], y0 - eps])),
        (y1 - p[1], np.array([p[0], y1 + eps])),
    ]
    return min(candidates, key=lambda c: c[0])[1]


class _Agent:
    __slots__ = ("aid", "pos", "speed", "direction", "lane_y", "goal_y", "goal_pt", "done")

    def __init__(self, aid, pos, speed, direction, lane_y, goal_y, goal_pt=None):
        self.aid = aid
        self.pos = pos
        self.speed = speed
        self.direction = direction  # +1 east, -1 west (corridor flows)
        self.lane_y = lane_y        # cruising y before/after the obstacle
        self.goal_y = goal_y
        self.goal_pt = goal_pt      # fixed goal point (crossing flows)
        self.done = False


def _target_for(agent: _Agent, spec: SceneSpec, layout: SceneLayout) -> np.ndarray:
    if agent.goal_pt is not None:
        return agent.goal_pt
    x = agent.pos[0]
    goal_x = spec.length - 0.5 if agent.direction > 0 else 0.5
    if layout.obstacle is None:
        return np.array([goal_x, agent.goal_y])
    x0, _, x1, _ = layout.obstacle
    gap_center = 0.5 * (layout.gap_lo + layout.gap_hi)
    # direction-separated lanes inside the gap (keep-right convention)
    lane = gap_center - agent.direction * spec.lane_offset / 2.0
    lane = np.clip(lane, layout.gap_lo + 0.4, layout.gap_hi - 0.4)
    if agent.direction > 0:
        approaching = x < x1 and x > x0 - spec.lookahead
        before = x <= x0 - spec.lookahead
        exit_x = x1 + 0.5
    else:
        approaching = x > x0 and x < x1 + spec.lookahead
        before = x >= x1 + spec.lookahead
        exit_x = x0 - 0.5
    if before:
        # cruise straight toward the decision point
        decision_x = x0 - spec.lookahead if agent.direction > 0 else x1 + spec.lookahead
        return np.array([decision_x, agent.lane_y])
    if approaching:
        return np.array([exit_x, lane])
    return np.array([goal_x, agent.goal_y])


def simulate_scene(spec: SceneSpec, rng: np.random.Generator,
                   layout: SceneLayout | None = None) -> tuple[list[TrackPoint], SceneLayout]:
    """Run the social-forces-style simulation; deterministic for a given rng."""
    spec.validate()
    if layout is None:
        layout = _draw_layout(spec, rng)
    dt = spec.frame_interval_s
    agents: list[_Agent] = []
    points: list[TrackPoint] = []
    next_id = 0
    margin = 0.3

    def spawn(direction: int):
        nonlocal next_id
        y_mid = spec.width / 2.0
        y = float(np.clip(y_mid + rng.normal(0.0, 0.8), margin + 0.2, spec.width - margin - 0.2))
        speed = max(0.6, rng.normal(spec.speed_mean, spec.speed_std))
        goal_y = float(np.clip(y_mid + rng.normal(0.0, 0.8), margin + 0.2, spec.width - margin - 0.2))
        if spec.kind == "crossing" and next_id % 3 == 2:
            # one in three agents walks south-to-north across the flow
            gx = float(np.clip(spec.length / 2.0 + rng.normal(0.0, 2.0), 1.0, spec.length - 1.0))
            pos = np.array([gx + rng.normal(0.0, 0.3), 0.3])
            goal = np.array([gx, spec.width - 0.3])
            agents.append(_Agent(next_id, pos, speed, +1, y, goal_y, goal_pt=goal))
        else:
            x = 0.5 if direction > 0 else spec.length - 0.5
            agents.append(_Agent(next_id, np.array([x, y]), speed, direction, y, goal_y))
        next_id += 1

    spawned = 0
    for frame in range(spec.frames):
        while (spawned < spec.n_agents
               and frame == (spawned // 2) * spec.spawn_interval + (spawned % 2) * (spec.spawn_interval // 2)):
            spawn(+1 if spawned % 2 == 0 else -1)
            spawned += 1
        active = [a for a in agents if not a.done]
        # desired headings
        steps = {}
        for a in active:
            target = _target_for(a, spec, layout)
            desired = target - a.pos
            norm = np.linalg.norm(desired)
            direction = desired / norm if norm > 1e-9 else np.zeros(2)
            force = np.zeros(2)
            # pairwise repulsion
            for b in active:
                if b is a:
                    continue
                diff = a.pos - b.pos
                d = np.linalg.norm(diff)
                if 1e-9 < d < 0.9:
                    force += (diff / d) * (0.9 - d) * 2.0
            # obstacle standoff
            if layout.obstacle is not None and _inside_rect(a.pos, layout.obstacle, margin=0.5):
                x0, y0, x1, y1 = layout.obstacle
                cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
                away = a.pos - np.array([cx, cy])
                n = np.linalg.norm(away)
                if n > 1e-9:
                    force += away / n * 1.5
            heading = direction + force
            n = np.linalg.norm(heading)
            heading = heading / n if n > 1e-9 else direction
            vel = heading * a.speed + rng.normal(0.0, spec.noise_std, size=2)
            steps[a.aid] = vel * dt
        for a in active:
            a.pos = a.pos + steps[a.aid]
            # hard feasibility: stay in the corridor and out of the obstacle
            if layout.obstacle is not None and _inside_rect(a.pos, layout.obstacle):
                a.pos = _push_out(a.pos, layout.obstacle)
            a.pos[0] = np.clip(a.pos[0], 0.05, spec.length - 0.05)
            a.pos[1] = np.clip(a.pos[1], 0.05, spec.width - 0.05)
            points.append(TrackPoint(frame, a.aid, float(a.pos[0]), float(a.pos[1])))
            if a.goal_pt is not None:
                a.done = bool(np.linalg.norm(a.pos - a.goal_pt) < 0.5)
            elif (a.direction > 0 and a.pos[0] >= spec.length - 0.6) or \
                 (a.direction < 0 and a.pos[0] <= 0.6):
                a.done = True
    return points, layout


def rasterize(spec: SceneSpec, layout: SceneLayout) -> tuple[FeatureGrid, np.ndarray]:
    """Raster channels [free fraction, col/W, row/H] plus the walkable mask.

    A cell is non-walkable only when fully inside the obstacle, so any
    feasible position is guaranteed to fall in a walkable cell.
    """
    h, w = spec.grid_h, spec.grid_w
    cell_w = spec.length / w
    cell_h = spec.width / h
    transform = GridTransform.from_origin(0.0, 0.0, cell_w, cell_h)
    values = np.zeros((h, w, RASTER_CHANNELS))
    walkable = np.ones((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            cx0, cy0 = c * cell_w, r * cell_h
            cx1, cy1 = cx0 + cell_w, cy0 + cell_h
            free = 1.0
            if layout.obstacle is not None:
                x0, y0, x1, y1 = layout.obstacle
                ox = max(0.0, min(cx1, x1) - max(cx0, x0))
                oy = max(0.0, min(cy1, y1) - max(cy0, y0))
                covered = (ox * oy) / (cell_w * cell_h)
                free = 1.0 - covered
                if covered >= 1.0 - 1e-9:
                    walkable[r, c] = False
            values[r, c, 0] = free
            values[r, c, 1] = (c + 0.5) / w
            values[r, c, 2] = (r + 0.5) / h
    if not walkable.any():
        raise ValueError("infeasible scene: no walkable cells")
    return FeatureGrid(values=values, transform=transform), walkable


def generate_synthetic_scene(spec: SceneSpec, seed: int) -> tuple[Dataset, FeatureGrid, np.ndarray]:
    """One scene instance: windowed dataset, raster grid, walkable mask."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    layout = _draw_layout(spec, rng)
    points, _ = simulate_scene(spec, rng, layout)
    raster, walkable = rasterize(spec, layout)
    dataset = build_segments(points, obs_len=spec.obs_len, pred_len=spec.pred_len,
                             scene_id="scene_000")
    dataset.frame_interval_s = spec.frame_interval_s
    return dataset, raster, walkable


def generate_corpus(spec: SceneSpec, n_scenes: int, seed: int
                    ) -> tuple[Dataset, dict[str, FeatureGrid], dict[str, np.ndarray]]:
    """Several scene instances with independently drawn layouts."""
    root = np.random.SeedSequence([int(seed)])
    all_segments = []
    rasters: dict[str, FeatureGrid] = {}
    walkables: dict[str, np.ndarray] = {}
    for s, child in enumerate(root.spawn(n_scenes)):
        rng = np.random.default_rng(child)
        scene_id = f"scene_{s:03d}"
        layout = _draw_layout(spec, rng)
        points, _ = simulate_scene(spec, rng, layout)
        raster, walkable = rasterize(spec, layout)
        ds = build_segments(points, obs_len=spec.obs_len, pred_len=spec.pred_len,
                            scene_id=scene_id)
        all_segments.extend(ds.segments)
        rasters[scene_id] = raster
        walkables[scene_id] = walkable
    dataset = Dataset(segments=all_segments, frame_interval_s=spec.frame_interval_s)
    dataset.segments.sort(key=lambda seg: (seg.scene_id, seg.start_frame))
    return dataset, rasters, walkables


# ---------------------------------------------------------------------------
# scene bundles on disk
#
# <dir>/meta.json plus one subdirectory per scene holding tracks.txt (the
# plain trajectory text format), raster.grid and walkable.grid (the binary
# grid container; walkable cells are 1.0). Bytes are deterministic for a
# given (spec, n_scenes, seed).

BUNDLE_FORMAT_VERSION = 1


def write_bundle(out_dir, spec: SceneSpec, n_scenes: int, seed: int) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence([int(seed)])
    for s, child in enumerate(root.spawn(n_scenes)):
        rng = np.random.default_rng(child)
        scene_id = f"scene_{s:03d}"
        scene_dir = out / scene_id
        scene_dir.mkdir(exist_ok=True)
        layout = _draw_layout(spec, rng)
        points, _ = simulate_scene(spec, rng, layout)
        raster, walkable = rasterize(spec, layout)
        write_trajectory_file(points, scene_dir / "tracks.txt")
        save_grid(raster, scene_dir / "raster.grid")
        save_grid(FeatureGrid(values=walkable[..., None].astype(np.float64),
                              transform=raster.transform),
                  scene_dir / "walkable.grid")
    meta = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "n_scenes": n_scenes,
        "seed": int(seed),
        "spec": asdict(spec),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    return out


def load_bundle(bundle_dir) -> tuple[Dataset, dict[str, FeatureGrid], dict[str, np.ndarray], dict]:
    root = Path(bundle_dir)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"not a scene bundle (no meta.json): {root}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise ValueError(f"{root}: unsupported bundle format version")
    spec_fields = meta.get("spec", {})
    obs_len = spec_fields.get("obs_len", 8)
    pred_len = spec_fields.get("pred_len", 12)
    segments = []
    rasters: dict[str, FeatureGrid] = {}
    walkables: dict[str, np.ndarray] = {}
    for scene_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        scene_id = scene_dir.name
        points = parse_trajectory_file(scene_dir / "tracks.txt")
        ds = build_segments(points, obs_len=obs_len, pred_len=pred_len, scene_id=scene_id)
        segments.extend(ds.segments)
        rasters[scene_id] = load_grid(scene_dir / "raster.grid")
        walkables[scene_id] = load_grid(scene_dir / "walkable.grid").values[..., 0] > 0.5
    dataset = Dataset(segments=segments,
                      frame_interval_s=spec_fields.get("frame_interval_s", 0.4))
    dataset.segments.sort(key=lambda seg: (seg.scene_id, seg.start_frame))
    return dataset, rasters, walkables, meta
