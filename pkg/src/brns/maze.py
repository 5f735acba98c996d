"""Point-robot deceptive maze with ray-cast range sensors.

A genotype is the flat weight vector of a bias-free tanh controller
(sensors -> 10 -> 10 -> 2). The controller's two outputs drive a unicycle:
``speed = v_max * clip(out[0], 0, 1)`` and ``turn = omega_max * out[1]``.
Motion stops just short of any wall it would cross (no sliding). The
behavior descriptor is the final position scaled into ``[0, 1]^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .nn import MlpNetwork, mlp_forward, unflatten_weights

HIDDEN_UNITS = 10
DEFAULT_SENSOR_ANGLES = tuple(np.deg2rad([-90.0, -45.0, 0.0, 45.0, 90.0]))


@dataclass
class MazeMap:
    walls: np.ndarray  # (W, 4): x1, y1, x2, y2
    bounds: tuple  # (xmin, ymin, xmax, ymax)
    start: tuple
    goal: tuple
    goal_radius: float
    start_heading: float = 0.0

    def __post_init__(self):
        self.walls = np.asarray(self.walls, dtype=float).reshape(-1, 4)
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("degenerate maze bounds")
        for name in ("start", "goal"):
            x, y = getattr(self, name)
            if not (xmin < x < xmax and ymin < y < ymax):
                raise ValueError(f"{name} {x, y} is not strictly inside the bounds")
        outer = np.array([[xmin, ymin, xmax, ymin], [xmax, ymin, xmax, ymax],
                          [xmax, ymax, xmin, ymax], [xmin, ymax, xmin, ymin]])
        present = {tuple(w) for w in self.walls}
        missing = [w for w in outer if tuple(w) not in present]
        if missing:
            self.walls = np.vstack([np.array(missing), self.walls])

    @property
    def width(self):
        return self.bounds[2] - self.bounds[0]

    @property
    def height(self):
        return self.bounds[3] - self.bounds[1]

    def normalize(self, points):
        xmin, ymin = self.bounds[0], self.bounds[1]
        return (np.asarray(points, dtype=float) - [xmin, ymin]) / [self.width, self.height]


def parse_maze(text):
    """Parse the line-based maze format (``bounds``/``start``/``goal``/``radius``/``wall``)."""
    fields, walls = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        try:
            nums = [float(v) for v in vals]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric value in {raw!r}") from None
        expected = {"bounds": (4,), "start": (2, 3), "goal": (2,), "radius": (1,), "wall": (4,)}
        if key not in expected:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if len(nums) not in expected[key]:
            raise ValueError(f"line {lineno}: {key} takes {expected[key]} values, got {len(nums)}")
        if key == "wall":
            walls.append(nums)
        else:
            fields[key] = nums
    for key in ("bounds", "start", "goal", "radius"):
        if key not in fields:
            raise ValueError(f"maze header is missing {key!r}")
    start = fields["start"]
    return MazeMap(walls=np.array(walls).reshape(-1, 4), bounds=tuple(fields["bounds"]),
                   start=tuple(start[:2]), goal=tuple(fields["goal"]), goal_radius=fields["radius"][0],
                   start_heading=start[2] if len(start) == 3 else 0.0)


def load_maze(path=None):
    """Load a maze file; ``None`` loads the bundled deceptive maze."""
    if path is None:
        text = resources.files("brns").joinpath("data/deceptive.maze").read_text()
    else:
        text = Path(path).read_text()
    return parse_maze(text)


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def cast_rays(pos, angles, walls, max_range):
    """Distance along each ray to the nearest wall, capped at ``max_range``.

    ``pos`` is (n, 2) and ``angles`` (n, s) absolute ray directions; returns (n, s).
    """
    dx, dy = np.cos(angles)[..., None], np.sin(angles)[..., None]
    ax, ay = walls[:, 0], walls[:, 1]
    sx, sy = walls[:, 2] - ax, walls[:, 3] - ay
    qx = ax - pos[:, 0, None, None]
    qy = ay - pos[:, 1, None, None]
    denom = _cross(dx, dy, sx, sy)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(qx, qy, sx, sy) / denom
        u = _cross(qx, qy, dx, dy) / denom
    hit = (denom != 0) & (t >= 0) & (u >= 0) & (u <= 1)
    t = np.where(hit, t, np.inf)
    return np.minimum(t.min(axis=-1), max_range)


def move_with_collisions(pos, delta, walls, slack):
    """Move ``pos`` by ``delta`` but stop ``slack`` short of the first wall crossed."""
    dx, dy = delta[:, 0, None], delta[:, 1, None]
    ax, ay = walls[:, 0], walls[:, 1]
    sx, sy = walls[:, 2] - ax, walls[:, 3] - ay
    qx = ax - pos[:, 0, None]
    qy = ay - pos[:, 1, None]
    denom = _cross(dx, dy, sx, sy)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(qx, qy, sx, sy) / denom
        u = _cross(qx, qy, dx, dy) / denom
    hit = (denom != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    t_hit = np.where(hit, t, np.inf).min(axis=1)
    length = np.hypot(delta[:, 0], delta[:, 1])
    frac = np.ones(len(pos))
    blocked = np.isfinite(t_hit)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac[blocked] = np.maximum(0.0, t_hit[blocked] - slack / length[blocked])
    return pos + delta * frac[:, None]


def raycast(position, heading, maze, angle_offset, max_range):
    """Single-ray convenience wrapper around :func:`cast_rays`."""
    pos = np.asarray(position, dtype=float).reshape(1, 2)
    return float(cast_rays(pos, np.array([[heading + angle_offset]]), maze.walls, max_range)[0, 0])


def controller_dims(n_sensors):
    return [n_sensors, HIDDEN_UNITS, HIDDEN_UNITS, 2]


def genotype_length(n_sensors):
    dims = controller_dims(n_sensors)
    return sum(a * b for a, b in zip(dims[:-1], dims[1:]))


def controller_decode(genotype, n_sensors=5):
    """Controller network; weights fill layer by layer, each matrix row-major."""
    return unflatten_weights(genotype, controller_dims(n_sensors), ["tanh"] * 3)


@dataclass
class MazeEnv:
    """Batch evaluator for maze controllers."""

    maze: MazeMap = field(default_factory=load_maze)
    steps: int = 400
    sensor_angles: tuple = DEFAULT_SENSOR_ANGLES
    sensor_range_frac: float = 0.25
    v_max_frac: float = 0.01
    omega_max: float = 0.35
    slack_frac: float = 5e-5

    behavior_dim = 2

    @property
    def n_sensors(self):
        return len(self.sensor_angles)

    @property
    def genotype_length(self):
        return genotype_length(self.n_sensors)

    @property
    def max_range(self):
        return self.sensor_range_frac * self.maze.width

    @property
    def v_max(self):
        return self.v_max_frac * self.maze.width

    @property
    def behavior_bounds(self):
        return np.array([[0.0, 1.0], [0.0, 1.0]])

    @property
    def goal(self):
        return self.maze.normalize(self.maze.goal)

    @property
    def goal_radius(self):
        return self.maze.goal_radius / self.maze.width

    def _controllers(self, genotypes):
        dims = controller_dims(self.n_sensors)
        n, mats, pos = genotypes.shape[0], [], 0
        for i, o in zip(dims[:-1], dims[1:]):
            mats.append(genotypes[:, pos:pos + i * o].reshape(n, o, i))
            pos += i * o
        return mats

    def rollout_batch(self, genotypes, record_path=False):
        """Simulate every genotype; returns behaviors, fitness and optionally paths."""
        genotypes = np.atleast_2d(np.asarray(genotypes, dtype=float))
        if genotypes.shape[1] != self.genotype_length:
            raise ValueError(f"genotype length {genotypes.shape[1]} != {self.genotype_length}")
        n = genotypes.shape[0]
        w1, w2, w3 = self._controllers(genotypes)
        walls = self.maze.walls
        offsets = np.asarray(self.sensor_angles)
        slack = self.slack_frac * self.maze.width
        pos = np.tile(np.asarray(self.maze.start, dtype=float), (n, 1))
        heading = np.full(n, float(self.maze.start_heading))
        path = [pos.copy()] if record_path else None
        for _ in range(self.steps):
            dist = cast_rays(pos, heading[:, None] + offsets, walls, self.max_range)
            s = dist / self.max_range
            h = np.tanh(np.einsum("noi,ni->no", w1, s))
            h = np.tanh(np.einsum("noi,ni->no", w2, h))
            out = np.tanh(np.einsum("noi,ni->no", w3, h))
            speed = self.v_max * np.clip(out[:, 0], 0.0, 1.0)
            heading = heading + self.omega_max * out[:, 1]
            delta = speed[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)
            pos = move_with_collisions(pos, delta, walls, slack)
            if record_path:
                path.append(pos.copy())
        behaviors = np.clip(self.maze.normalize(pos), 0.0, 1.0)
        fitness = -np.linalg.norm(behaviors - self.goal, axis=1)
        if record_path:
            return behaviors, fitness, np.stack(path, axis=1)
        return behaviors, fitness

    def evaluate(self, genotypes):
        return self.rollout_batch(genotypes)

    def rollout(self, genotype, steps=None):
        """Single rollout: ``(behavior, fitness, path)`` with ``path`` of shape (steps+1, 2)."""
        env = self if steps is None else MazeEnv(self.maze, steps, self.sensor_angles, self.sensor_range_frac,
                                                 self.v_max_frac, self.omega_max, self.slack_frac)
        b, f, p = env.rollout_batch(np.asarray(genotype)[None, :], record_path=True)
        return b[0], float(f[0]), p[0]

    def describe(self):
        m = self.maze
        return {
            "kind": "maze", "steps": self.steps, "sensor_angles": [float(a) for a in self.sensor_angles],
            "sensor_range_frac": self.sensor_range_frac, "v_max_frac": self.v_max_frac,
            "omega_max": self.omega_max, "slack_frac": self.slack_frac,
            "bounds": list(m.bounds), "start": list(m.start), "start_heading": m.start_heading,
            "goal": list(m.goal), "goal_radius": m.goal_radius, "walls": m.walls.tolist(),
        }

    def controller_output(self, genotype, sensors):
        net = controller_decode(genotype, self.n_sensors)
        return mlp_forward(net, sensors)


def rollout(genotype, maze, steps=400, **env_kwargs):
    return MazeEnv(maze, steps, **env_kwargs).rollout(genotype)


__all__ = ["MazeMap", "MazeEnv", "MlpNetwork", "load_maze", "parse_maze", "raycast", "cast_rays",
           "controller_decode", "rollout", "genotype_length", "move_with_collisions"]
