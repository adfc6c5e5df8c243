"""Rigid-disk droplet driven by the disk-integrated field.

The droplet is overdamped: velocity is mobility times the driving force,
with the force components pointing into wall contacts projected out. A
static threshold pins the disk when the effective force is too weak;
while pinned it accumulates impulse and breaks free with a threshold-speed
kick once enough has built up, which reproduces dwell-then-dash behaviour
at corners. Below `stall_fraction` of the threshold nothing accumulates
and the disk stays put for good; that is the bifurcation lock.

All positions are in mm, times in seconds, forces in the units produced by
disk_integrate (field value times square metres times force_gain).
"""

from __future__ import annotations

import enum
import math
import random
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .maze import MazeSpec, Polarity
from .solver import (
    MM_TO_M,
    FieldBundle,
    VectorField,
    compute_fields,
)


class DynamicsError(RuntimeError):
    """Simulation cannot start (e.g. no channel wide enough for the disk)."""


class ForceSource(enum.Enum):
    DISK_MEAN_J = "disk_mean_j"
    DISK_MEAN_GRAD_SPEED_J = "disk_mean_grad_speed_j"


class Termination(enum.Enum):
    REACHED_TARGET = "reached_target"
    LOCKED = "locked"
    MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class DynamicsParams:
    """Tuning constants for the droplet agent.

    None of these are physically calibrated; the defaults are sized for the
    desk-scale demo mazes (tens of mm, ~10 S/m electrolyte, 5 V) so that a
    droplet runs corridors freely, dwells at corners, and stalls for good
    at a bifurcation whose branch pulls nearly cancel.
    """

    mobility: float = 6000.0  # (mm/s) per force unit
    static_threshold: float = 2.2e-3  # force units; 0 disables pinning
    dt: float = 0.0  # s; 0 = pick so one step moves at most half a cell
    max_steps: int = 60_000
    lock_window: int = 2500  # steps
    lock_epsilon_mm: float = 0.05
    force_source: ForceSource = ForceSource.DISK_MEAN_J
    force_gain: float = 1.0
    radius_mm: float = 0.0  # 0 = 0.375x the estimated channel width
    release_time: float = 0.25  # s of threshold-level impulse needed to unpin
    stall_fraction: float = 0.25  # below this fraction of threshold: no release
    noise_amplitude: float = 0.0  # optional zero-mean force perturbation
    noise_seed: int = 0

    def __post_init__(self):
        if self.mobility <= 0:
            raise ValueError("mobility must be positive")
        if self.static_threshold < 0:
            raise ValueError("static_threshold must be >= 0")
        if self.dt < 0:
            raise ValueError("dt must be >= 0")
        if self.lock_window < 1:
            raise ValueError("lock_window must be >= 1")
        if not 0.0 <= self.stall_fraction <= 1.0:
            raise ValueError("stall_fraction must be in [0, 1]")


@dataclass(frozen=True)
class DropletState:
    x: float
    y: float
    radius: float
    vx: float = 0.0
    vy: float = 0.0
    t: float = 0.0
    pinned_impulse: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    speeds: np.ndarray
    forces: np.ndarray  # effective (wall-projected) force magnitude per sample
    termination: Termination
    path_length_mm: float
    dt: float
    radius_mm: float
    start_cell: tuple[int, int]
    final_effective_force: float

    def positions_mm(self) -> np.ndarray:
        return np.column_stack([self.xs, self.ys])

    def samples(self) -> Iterator[tuple[float, tuple[float, float], float, float]]:
        for t, x, y, s, f in zip(self.times, self.xs, self.ys, self.speeds, self.forces):
            yield (float(t), (float(x), float(y)), float(s), float(f))

    def __len__(self) -> int:
        return len(self.times)


# ---------------------------------------------------------------------------
# Disk integration


def disk_integrate(
    field: VectorField,
    center_mm: tuple[float, float],
    radius_mm: float,
    wall_mask: np.ndarray | None = None,
    gain: float = 1.0,
) -> np.ndarray:
    """Sum of the field over cells whose centres fall inside the disk,
    weighted by cell area (m^2) and scaled by gain. Wall cells contribute
    nothing."""
    h = field.cell_size
    x, y = center_mm
    if x + radius_mm < 0 or y + radius_mm < 0 or x - radius_mm > field.nx * h or y - radius_mm > field.ny * h:
        raise ValueError("disk lies entirely outside the grid")
    ix0 = max(int(math.floor((x - radius_mm) / h)) - 1, 0)
    ix1 = min(int(math.ceil((x + radius_mm) / h)) + 1, field.nx - 1)
    iy0 = max(int(math.floor((y - radius_mm) / h)) - 1, 0)
    iy1 = min(int(math.ceil((y + radius_mm) / h)) + 1, field.ny - 1)
    if ix1 < ix0 or iy1 < iy0:
        raise ValueError("disk lies entirely outside the grid")
    ixs = np.arange(ix0, ix1 + 1)
    iys = np.arange(iy0, iy1 + 1)
    cx = (ixs + 0.5) * h
    cy = (iys + 0.5) * h
    inside = (cx[None, :] - x) ** 2 + (cy[:, None] - y) ** 2 <= radius_mm**2
    if wall_mask is not None:
        inside &= ~wall_mask[iy0 : iy1 + 1, ix0 : ix1 + 1]
    area = (h * MM_TO_M) ** 2
    fx = float(field.vx[iy0 : iy1 + 1, ix0 : ix1 + 1][inside].sum()) * area * gain
    fy = float(field.vy[iy0 : iy1 + 1, ix0 : ix1 + 1][inside].sum()) * area * gain
    return np.array([fx, fy])


# ---------------------------------------------------------------------------
# Wall geometry


class _Geometry:
    """Per-maze cached wall data for contact queries."""

    def __init__(self, maze: MazeSpec):
        self.h = maze.cell_size
        self.nx = maze.nx
        self.ny = maze.ny
        self.wall = maze.wall_mask()
        self.negative_cells = sorted(maze.electrode_cells(Polarity.NEGATIVE))
        self.positive_cells = sorted(maze.electrode_cells(Polarity.POSITIVE))

    def wall_cells_near(self, x: float, y: float, reach_mm: float):
        h = self.h
        ix0 = max(int(math.floor((x - reach_mm) / h)), 0)
        ix1 = min(int(math.ceil((x + reach_mm) / h)), self.nx - 1)
        iy0 = max(int(math.floor((y - reach_mm) / h)), 0)
        iy1 = min(int(math.ceil((y + reach_mm) / h)), self.ny - 1)
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                if self.wall[iy, ix]:
                    yield ix, iy

    def closest_point_on_cell(self, ix: int, iy: int, x: float, y: float) -> tuple[float, float]:
        h = self.h
        px = min(max(x, ix * h), (ix + 1) * h)
        py = min(max(y, iy * h), (iy + 1) * h)
        return px, py


def _contact_normals(geom: _Geometry, x: float, y: float, radius: float) -> list[tuple[float, float]]:
    eps = 1e-3 * geom.h
    normals: list[tuple[float, float]] = []
    for ix, iy in geom.wall_cells_near(x, y, radius + geom.h):
        px, py = geom.closest_point_on_cell(ix, iy, x, y)
        d = math.hypot(x - px, y - py)
        if 1e-12 < d <= radius + eps:
            normals.append(((x - px) / d, (y - py) / d))
    # Grid rim behaves like a wall.
    if x - radius <= eps:
        normals.append((1.0, 0.0))
    if geom.nx * geom.h - x - radius <= eps:
        normals.append((-1.0, 0.0))
    if y - radius <= eps:
        normals.append((0.0, 1.0))
    if geom.ny * geom.h - y - radius <= eps:
        normals.append((0.0, -1.0))
    return normals


def _project_out(fx: float, fy: float, normals: list[tuple[float, float]]) -> tuple[float, float]:
    """Remove force components pointing into any active contact."""
    for _ in range(3):
        moved = False
        for nx_, ny_ in normals:
            s = fx * nx_ + fy * ny_
            if s < -1e-300:
                fx -= s * nx_
                fy -= s * ny_
                moved = True
        if not moved:
            break
    return fx, fy


def _resolve_overlap(geom: _Geometry, x: float, y: float, radius: float) -> tuple[float, float]:
    """Push the disk centre out of any wall overlap; clamp to the grid."""
    h = geom.h
    x = min(max(x, radius), geom.nx * h - radius)
    y = min(max(y, radius), geom.ny * h - radius)
    for _ in range(16):
        worst_pen = 0.0
        worst_n: tuple[float, float] | None = None
        for ix, iy in geom.wall_cells_near(x, y, radius + h):
            px, py = geom.closest_point_on_cell(ix, iy, x, y)
            d = math.hypot(x - px, y - py)
            if d <= 1e-12:
                # Centre inside the wall cell: push away from its centre.
                ccx, ccy = (ix + 0.5) * h, (iy + 0.5) * h
                dx, dy = x - ccx, y - ccy
                n = math.hypot(dx, dy)
                nx_, ny_ = (dx / n, dy / n) if n > 1e-12 else (1.0, 0.0)
                pen = radius
            else:
                pen = radius - d
                nx_, ny_ = (x - px) / d, (y - py) / d
            if pen > worst_pen:
                worst_pen = pen
                worst_n = (nx_, ny_)
        if worst_n is None or worst_pen <= 1e-9 * h:
            break
        x += worst_n[0] * (worst_pen + 1e-9 * h)
        y += worst_n[1] * (worst_pen + 1e-9 * h)
    return x, y


def _disk_fits(geom: _Geometry, x: float, y: float, radius: float) -> bool:
    h = geom.h
    if x - radius < -1e-9 or y - radius < -1e-9:
        return False
    if x + radius > geom.nx * h + 1e-9 or y + radius > geom.ny * h + 1e-9:
        return False
    for ix, iy in geom.wall_cells_near(x, y, radius + h):
        px, py = geom.closest_point_on_cell(ix, iy, x, y)
        if math.hypot(x - px, y - py) < radius - 1e-9:
            return False
    return True


def _disk_overlaps_cells(
    geom: _Geometry, x: float, y: float, radius: float, cells: list[tuple[int, int]]
) -> bool:
    h = geom.h
    for ix, iy in cells:
        px = min(max(x, ix * h), (ix + 1) * h)
        py = min(max(y, iy * h), (iy + 1) * h)
        if math.hypot(x - px, y - py) <= radius:
            return True
    return False


# ---------------------------------------------------------------------------
# Stepping


def _effective_force(
    field: VectorField,
    geom: _Geometry,
    x: float,
    y: float,
    radius: float,
    gain: float,
    noise: tuple[float, float] = (0.0, 0.0),
) -> tuple[float, float]:
    f = disk_integrate(field, (x, y), radius, wall_mask=geom.wall, gain=gain)
    fx, fy = f[0] + noise[0], f[1] + noise[1]
    normals = _contact_normals(geom, x, y, radius)
    return _project_out(fx, fy, normals)


def step(
    state: DropletState,
    params: DynamicsParams,
    maze: MazeSpec,
    field: VectorField,
    *,
    _geom: _Geometry | None = None,
    _noise: tuple[float, float] = (0.0, 0.0),
) -> DropletState:
    """One stick-slip update. Requires params.dt > 0."""
    if params.dt <= 0:
        raise ValueError("step needs an explicit positive dt; use simulate for auto-dt")
    geom = _geom if _geom is not None else _Geometry(maze)
    dt = params.dt
    fx, fy = _effective_force(
        field, geom, state.x, state.y, state.radius, params.force_gain, _noise
    )
    fmag = math.hypot(fx, fy)

    thr = params.static_threshold
    impulse = state.pinned_impulse
    if fmag >= thr:
        vx, vy = params.mobility * fx, params.mobility * fy
        impulse = 0.0
    elif thr > 0 and fmag >= params.stall_fraction * thr and fmag > 0:
        impulse += fmag * dt
        if impulse >= thr * params.release_time:
            scale = params.mobility * thr / fmag
            vx, vy = scale * fx, scale * fy
            impulse = 0.0
        else:
            vx = vy = 0.0
    else:
        vx = vy = 0.0

    # Cap one step at half a cell so the disk cannot tunnel through walls.
    speed = math.hypot(vx, vy)
    limit = geom.h / 2.0
    if speed * dt > limit:
        f = limit / (speed * dt)
        vx *= f
        vy *= f

    nx_pos = state.x + vx * dt
    ny_pos = state.y + vy * dt
    nx_pos, ny_pos = _resolve_overlap(geom, nx_pos, ny_pos, state.radius)
    return DropletState(
        x=nx_pos,
        y=ny_pos,
        radius=state.radius,
        vx=(nx_pos - state.x) / dt,
        vy=(ny_pos - state.y) / dt,
        t=state.t + dt,
        pinned_impulse=impulse,
    )


def _estimate_channel_width_cells(maze: MazeSpec) -> float:
    from .oracle import _wall_distance, thin_mask

    channel = maze.channel_mask()
    skel = thin_mask(channel)
    dist = _wall_distance(channel)
    on_skel = dist[skel]
    return 2.0 * float(np.median(on_skel)) if on_skel.size else 1.0


def _find_start(
    geom: _Geometry,
    maze: MazeSpec,
    radius: float,
    labels: np.ndarray | None = None,
) -> tuple[int, int]:
    """Nearest channel cell to the positive electrode whose disk fits
    without covering the pinned electrode cells.

    Among equally near candidates the downstream one (smallest wavefront
    label) wins: the droplet detaches on the side the current pulls it."""
    channel = maze.channel_mask()
    pos = set(geom.positive_cells)
    dist = np.full(channel.shape, -1, dtype=np.int32)
    queue: deque[tuple[int, int]] = deque()
    for ix, iy in geom.positive_cells:
        dist[iy, ix] = 0
        queue.append((ix, iy))
    order: list[tuple[int, int]] = []
    while queue:
        ix, iy = queue.popleft()
        order.append((ix, iy))
        for dx, dy in ((1, 0), (0, -1), (-1, 0), (0, 1)):
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < maze.nx and 0 <= jy < maze.ny and channel[jy, jx] and dist[jy, jx] < 0:
                dist[jy, jx] = dist[iy, ix] + 1
                queue.append((jx, jy))
    h = geom.h
    best: tuple[int, int, int, int] | None = None  # (e1_dist, label, iy, ix)
    for ix, iy in order:
        if best is not None and dist[iy, ix] > best[0]:
            break
        if (ix, iy) in pos:
            continue
        x, y = (ix + 0.5) * h, (iy + 0.5) * h
        if not _disk_fits(geom, x, y, radius):
            continue
        if any(math.hypot((jx + 0.5) * h - x, (jy + 0.5) * h - y) <= radius for jx, jy in pos):
            continue
        lab = int(labels[iy, ix]) if labels is not None and labels[iy, ix] >= 0 else 0
        key = (int(dist[iy, ix]), lab, iy, ix)
        if best is None or key < best:
            best = key
    if best is None:
        raise DynamicsError("no start position: channels are narrower than the droplet")
    return best[3], best[2]


def _auto_dt(
    field: VectorField,
    geom: _Geometry,
    maze: MazeSpec,
    params: DynamicsParams,
    start: tuple[int, int],
    radius: float,
    labels,
) -> float:
    """dt such that the fastest force sample along the oracle route moves the
    disk at most half a cell per step."""
    from .oracle import extract_path

    try:
        path = extract_path(labels, start)
        cells = path.cells
    except Exception:
        cells = [start]
    h = geom.h
    fmax = 0.0
    for ix, iy in cells:
        x, y = (ix + 0.5) * h, (iy + 0.5) * h
        f = disk_integrate(field, (x, y), radius, wall_mask=geom.wall, gain=params.force_gain)
        fmax = max(fmax, math.hypot(f[0], f[1]))
    if fmax <= 0:
        return 1.0
    return h / (2.0 * params.mobility * fmax * 1.25)


def select_force_field(bundle: FieldBundle, source: ForceSource) -> VectorField:
    if source is ForceSource.DISK_MEAN_J:
        return bundle.j
    return bundle.grad_j


def simulate(
    maze: MazeSpec,
    params: DynamicsParams,
    fields: FieldBundle | None = None,
    start_mm: tuple[float, float] | None = None,
) -> Trajectory:
    """Run the droplet from beside the positive electrode until it reaches
    the negative electrode, locks, or exhausts max_steps.

    start_mm overrides the default placement (useful to put the droplet
    exactly on a symmetry axis); by default the droplet sits on the centre
    of the nearest downstream channel cell whose disk fits."""
    from .oracle import lee_label

    if fields is None:
        fields = compute_fields(maze)
    field = select_force_field(fields, params.force_source)
    geom = _Geometry(maze)
    labels = lee_label(maze)

    radius = params.radius_mm
    if radius <= 0:
        # Large enough that corridors keep the disk near their centreline
        # (the droplet in a narrow channel is comparable to its width).
        radius = 0.375 * _estimate_channel_width_cells(maze) * maze.cell_size
    if start_mm is not None:
        x0, y0 = float(start_mm[0]), float(start_mm[1])
        if not _disk_fits(geom, x0, y0, radius):
            raise DynamicsError(f"droplet of radius {radius} mm does not fit at {start_mm}")
        start_cell = (int(x0 // geom.h), int(y0 // geom.h))
    else:
        start_cell = _find_start(geom, maze, radius, labels.labels)
        x0, y0 = maze.cell_center_mm(*start_cell)

    dt = params.dt
    if dt <= 0:
        dt = _auto_dt(field, geom, maze, params, start_cell, radius, labels)
    run = replace(params, dt=dt, radius_mm=radius)

    rng = random.Random(run.noise_seed) if run.noise_amplitude > 0 else None

    state = DropletState(x=x0, y=y0, radius=radius)
    fx0, fy0 = _effective_force(field, geom, x0, y0, radius, run.force_gain)
    times = [0.0]
    xs = [x0]
    ys = [y0]
    speeds = [0.0]
    forces = [math.hypot(fx0, fy0)]
    history: deque[tuple[float, float]] = deque(maxlen=run.lock_window + 1)
    history.append((x0, y0))
    termination = Termination.MAX_STEPS
    path_length = 0.0

    if _disk_overlaps_cells(geom, x0, y0, radius, geom.negative_cells):
        termination = Termination.REACHED_TARGET
        steps = 0
    else:
        steps = 0
        while steps < run.max_steps:
            noise = (0.0, 0.0)
            if rng is not None:
                noise = (
                    rng.gauss(0.0, run.noise_amplitude),
                    rng.gauss(0.0, run.noise_amplitude),
                )
            prev = state
            state = step(prev, run, maze, field, _geom=geom, _noise=noise)
            steps += 1
            path_length += math.hypot(state.x - prev.x, state.y - prev.y)
            fx, fy = _effective_force(field, geom, state.x, state.y, radius, run.force_gain)
            times.append(state.t)
            xs.append(state.x)
            ys.append(state.y)
            speeds.append(state.speed)
            forces.append(math.hypot(fx, fy))
            history.append((state.x, state.y))
            if _disk_overlaps_cells(geom, state.x, state.y, radius, geom.negative_cells):
                termination = Termination.REACHED_TARGET
                break
            if len(history) > run.lock_window:
                ox, oy = history[0]
                if math.hypot(state.x - ox, state.y - oy) < run.lock_epsilon_mm:
                    termination = Termination.LOCKED
                    break

    fx, fy = _effective_force(field, geom, state.x, state.y, radius, run.force_gain)
    return Trajectory(
        times=np.array(times),
        xs=np.array(xs),
        ys=np.array(ys),
        speeds=np.array(speeds),
        forces=np.array(forces),
        termination=termination,
        path_length_mm=path_length,
        dt=dt,
        radius_mm=radius,
        start_cell=start_cell,
        final_effective_force=math.hypot(fx, fy),
    )


@dataclass(frozen=True, eq=False)
class VelocityProfile:
    times: np.ndarray
    speeds: np.ndarray
    peak_speed: float
    dwell_segments: tuple[tuple[int, int], ...]  # inclusive sample index ranges

    def dwell_times(self) -> list[tuple[float, float]]:
        return [(float(self.times[i0]), float(self.times[i1])) for i0, i1 in self.dwell_segments]


def velocity_profile(traj: Trajectory, dwell_fraction: float = 0.01) -> VelocityProfile:
    """Per-sample speed plus maximal runs slower than dwell_fraction of the
    peak (the pinning dwells)."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    speeds = traj.speeds
    peak = float(speeds.max())
    slow = speeds < dwell_fraction * peak if peak > 0 else np.ones_like(speeds, dtype=bool)
    segments: list[tuple[int, int]] = []
    i = 0
    n = len(speeds)
    while i < n:
        if slow[i]:
            j = i
            while j + 1 < n and slow[j + 1]:
                j += 1
            segments.append((i, j))
            i = j + 1
        else:
            i += 1
    return VelocityProfile(
        times=traj.times, speeds=speeds, peak_speed=peak, dwell_segments=tuple(segments)
    )
