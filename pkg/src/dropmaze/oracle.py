"""Ground-truth routes: wavefront labels, extracted paths, streamlines,
and corridor-level comparison of routes through the maze.

Corridor comparison works on a segmentation of the channel area: the
channel mask is thinned to a one-cell skeleton, the skeleton is cut at
junctions (degree >= 3) and at sharp bends, and every channel cell is
assigned to its nearest skeleton piece. Two routes "agree" when they visit
the same corridor regions in the same order; cell overlap is measured on
the union of visited regions, which makes the metric robust to where in a
wide corridor a route happens to run.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .maze import MazeSpec, Polarity
from .solver import ScalarField, VectorField

if TYPE_CHECKING:
    from .dynamics import Trajectory


class UnreachableError(ValueError):
    """Requested source cell has no route to the destination."""


@dataclass(frozen=True, eq=False)
class LeeLabels:
    """Wavefront distances in cells from the destination set; -1 unreachable."""

    labels: np.ndarray  # (ny, nx) int32
    destination: frozenset[tuple[int, int]]
    cell_size: float  # mm

    def label(self, ix: int, iy: int) -> int:
        return int(self.labels[iy, ix])


@dataclass(frozen=True)
class Path:
    cells: tuple[tuple[int, int], ...]
    cell_size: float

    @property
    def length_cells(self) -> int:
        return len(self.cells) - 1

    @property
    def length_mm(self) -> float:
        return self.length_cells * self.cell_size

    def points_mm(self) -> np.ndarray:
        return np.array(
            [((ix + 0.5) * self.cell_size, (iy + 0.5) * self.cell_size) for ix, iy in self.cells]
        )


# Fixed tie-break order for descent: east, north, west, south.
_DESCENT_ORDER = ((1, 0), (0, -1), (-1, 0), (0, 1))


def lee_label(
    maze: MazeSpec, destination: Iterable[tuple[int, int]] | None = None
) -> LeeLabels:
    """Breadth-first wavefront labels over 4-connected channel cells.

    Destination defaults to the negative electrode cells.
    """
    if destination is None:
        dest = maze.electrode_cells(Polarity.NEGATIVE)
    else:
        dest = frozenset(destination)
    if not dest:
        raise ValueError("destination set is empty")
    channel = maze.channel_mask()
    for ix, iy in dest:
        if not (0 <= ix < maze.nx and 0 <= iy < maze.ny) or not channel[iy, ix]:
            raise ValueError(f"destination cell {(ix, iy)} is not a channel cell")

    labels = np.full(channel.shape, -1, dtype=np.int32)
    queue: deque[tuple[int, int]] = deque()
    for ix, iy in sorted(dest):
        labels[iy, ix] = 0
        queue.append((ix, iy))
    while queue:
        ix, iy = queue.popleft()
        nxt = labels[iy, ix] + 1
        for dx, dy in _DESCENT_ORDER:
            jx, jy = ix + dx, iy + dy
            if (
                0 <= jx < maze.nx
                and 0 <= jy < maze.ny
                and channel[jy, jx]
                and labels[jy, jx] < 0
            ):
                labels[jy, jx] = nxt
                queue.append((jx, jy))
    labels.setflags(write=False)
    return LeeLabels(labels, dest, maze.cell_size)


def extract_path(labels: LeeLabels, source: tuple[int, int]) -> Path:
    """Descend the labels from source to a destination cell.

    Neighbour ties break in fixed east/north/west/south order, so the path
    is unique for given labels.
    """
    grid = labels.labels
    ny, nx = grid.shape
    ix, iy = source
    if not (0 <= ix < nx and 0 <= iy < ny) or grid[iy, ix] < 0:
        raise UnreachableError(f"source cell {source} is unreachable from the destination")
    cells = [(ix, iy)]
    while grid[iy, ix] > 0:
        want = grid[iy, ix] - 1
        for dx, dy in _DESCENT_ORDER:
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < nx and 0 <= jy < ny and grid[jy, jx] == want:
                ix, iy = jx, jy
                break
        else:  # pragma: no cover - labels invariant guarantees a neighbour
            raise UnreachableError(f"no descending neighbour at {(ix, iy)}")
        cells.append((ix, iy))
    return Path(tuple(cells), labels.cell_size)


class StreamTermination(enum.Enum):
    REACHED = "reached"
    FIELD_VANISHED = "field_vanished"
    LEFT_DOMAIN = "left_domain"
    MAX_STEPS = "max_steps"


@dataclass(frozen=True, eq=False)
class Streamline:
    points: np.ndarray  # (n, 2) mm
    termination: StreamTermination

    def cells(self, cell_size: float) -> list[tuple[int, int]]:
        out: list[tuple[int, int]] = []
        for x, y in self.points:
            c = (int(x // cell_size), int(y // cell_size))
            if not out or out[-1] != c:
                out.append(c)
        return out


def _bilinear(j: VectorField, x_mm: float, y_mm: float) -> tuple[float, float]:
    h = j.cell_size
    u = x_mm / h - 0.5
    v = y_mm / h - 0.5
    i0 = min(max(int(math.floor(u)), 0), j.nx - 2) if j.nx > 1 else 0
    k0 = min(max(int(math.floor(v)), 0), j.ny - 2) if j.ny > 1 else 0
    tu = min(max(u - i0, 0.0), 1.0)
    tv = min(max(v - k0, 0.0), 1.0)
    i1 = min(i0 + 1, j.nx - 1)
    k1 = min(k0 + 1, j.ny - 1)

    def sample(comp: np.ndarray) -> float:
        return float(
            comp[k0, i0] * (1 - tu) * (1 - tv)
            + comp[k0, i1] * tu * (1 - tv)
            + comp[k1, i0] * (1 - tu) * tv
            + comp[k1, i1] * tu * tv
        )

    return sample(j.vx), sample(j.vy)


def streamline(
    j: VectorField,
    start_mm: tuple[float, float],
    step_mm: float | None = None,
    max_steps: int = 200_000,
    target_cells: Iterable[tuple[int, int]] | None = None,
    channel_mask: np.ndarray | None = None,
    min_speed_rel: float = 1e-9,
) -> Streamline:
    """Integrate along the normalized field from start_mm.

    Stops on reaching a target cell, on the local field magnitude falling
    below min_speed_rel of the grid maximum, on leaving the grid, or after
    max_steps.
    """
    h = j.cell_size
    if step_mm is None:
        step_mm = h / 4.0
    targets = frozenset(target_cells) if target_cells is not None else frozenset()
    x, y = float(start_mm[0]), float(start_mm[1])
    if channel_mask is not None:
        cx, cy = int(x // h), int(y // h)
        if not (0 <= cx < j.nx and 0 <= cy < j.ny) or not channel_mask[cy, cx]:
            raise ValueError(f"streamline start {start_mm} lies inside a wall")
    j_scale = float(np.max(j.magnitude()))
    floor = min_speed_rel * j_scale

    def direction(px: float, py: float) -> tuple[float, float, float]:
        vx, vy = _bilinear(j, px, py)
        s = math.hypot(vx, vy)
        if s <= floor:
            return 0.0, 0.0, s
        return vx / s, vy / s, s

    pts = [(x, y)]
    termination = StreamTermination.MAX_STEPS
    for _ in range(max_steps):
        cx, cy = int(x // h), int(y // h)
        if not (0 <= cx < j.nx and 0 <= cy < j.ny):
            termination = StreamTermination.LEFT_DOMAIN
            break
        if (cx, cy) in targets:
            termination = StreamTermination.REACHED
            break
        # Fourth-order step on the normalized field keeps the trace from
        # drifting into walls on curved corridors.
        d1x, d1y, speed = direction(x, y)
        if speed <= floor:
            termination = StreamTermination.FIELD_VANISHED
            break
        d2x, d2y, s2 = direction(x + 0.5 * step_mm * d1x, y + 0.5 * step_mm * d1y)
        d3x, d3y, s3 = direction(x + 0.5 * step_mm * d2x, y + 0.5 * step_mm * d2y)
        d4x, d4y, s4 = direction(x + step_mm * d3x, y + step_mm * d3y)
        if min(s2, s3, s4) > floor:
            dx = (d1x + 2 * d2x + 2 * d3x + d4x) / 6.0
            dy = (d1y + 2 * d2y + 2 * d3y + d4y) / 6.0
        else:
            dx, dy = d1x, d1y
        mag = math.hypot(dx, dy)
        if mag < 1e-12:
            termination = StreamTermination.FIELD_VANISHED
            break
        dx, dy = dx / mag, dy / mag
        # Interpolation near jagged walls can point slightly into them;
        # slide along the wall instead of marching in.
        stalled = False
        if channel_mask is not None:
            for _attempt in range(3):
                qx, qy = x + step_mm * dx, y + step_mm * dy
                qcx, qcy = int(qx // h), int(qy // h)
                if not (0 <= qcx < j.nx and 0 <= qcy < j.ny) or channel_mask[qcy, qcx]:
                    break
                nx_, ny_ = float(qcx - cx), float(qcy - cy)
                norm = math.hypot(nx_, ny_)
                if norm == 0:
                    stalled = True
                    break
                nx_, ny_ = nx_ / norm, ny_ / norm
                dot = dx * nx_ + dy * ny_
                dx, dy = dx - dot * nx_, dy - dot * ny_
                mag = math.hypot(dx, dy)
                if mag < 1e-12:
                    stalled = True
                    break
                dx, dy = dx / mag, dy / mag
                # Back off the wall a little so the trace does not stay
                # glued to it through the next junction.
                x -= 0.2 * h * nx_
                y -= 0.2 * h * ny_
            else:
                stalled = True
        if stalled:
            termination = StreamTermination.FIELD_VANISHED
            break
        x += step_mm * dx
        y += step_mm * dy
        pts.append((x, y))
    return Streamline(np.array(pts), termination)


def trace_route_streamline(
    j: VectorField,
    maze: MazeSpec,
    step_mm: float | None = None,
    max_steps: int = 200_000,
    seg: "CorridorSegmentation | None" = None,
    max_seeds: int = 24,
) -> Streamline:
    """Streamline of the dominant current bundle from source to destination.

    Traces a fan of forward streamlines seeded on a ring of cells around
    the positive electrode and returns one whose corridor sequence matches
    the fan majority. At every junction where the current splits, only a
    minority of seeds peels off the main route, and the strays scatter
    over different wrong sequences, so the modal sequence is the dominant
    bundle's route.
    """
    if seg is None:
        seg = segment_corridors(maze)
    channel = maze.channel_mask()
    pos_cells = maze.electrode_cells(Polarity.POSITIVE)
    neg_cells = maze.electrode_cells(Polarity.NEGATIVE)

    # Ring of seed cells two steps out from the positive electrode.
    dist = np.full(channel.shape, -1, dtype=np.int32)
    queue: deque[tuple[int, int]] = deque()
    for ix, iy in sorted(pos_cells):
        dist[iy, ix] = 0
        queue.append((ix, iy))
    while queue:
        ix, iy = queue.popleft()
        if dist[iy, ix] >= 3:
            continue
        for dx, dy in _DESCENT_ORDER:
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < maze.nx and 0 <= jy < maze.ny and channel[jy, jx] and dist[jy, jx] < 0:
                dist[jy, jx] = dist[iy, ix] + 1
                queue.append((jx, jy))
    ring = sorted((int(x), int(y)) for y, x in zip(*np.nonzero(dist == 2)))
    if not ring:
        ring = sorted((int(x), int(y)) for y, x in zip(*np.nonzero(dist == 1)))
    if not ring:
        raise ValueError("no channel cells around the positive electrode")
    stride = max(1, len(ring) // max_seeds)
    seeds = ring[::stride]

    h = maze.cell_size
    traces: list[tuple[tuple[int, ...], float, Streamline]] = []
    for ix, iy in seeds:
        start = ((ix + 0.5) * h, (iy + 0.5) * h)
        vx, vy = _bilinear(j, *start)
        weight = math.hypot(vx, vy)
        if weight <= 0:
            continue
        tr = streamline(
            j, start, step_mm=step_mm, max_steps=max_steps,
            target_cells=neg_cells, channel_mask=channel,
        )
        traces.append((region_sequence(tr.cells(h), seg), weight, tr))
    if not traces:
        raise ValueError("no usable streamline seeds around the positive electrode")

    reached = [t for t in traces if t[2].termination is StreamTermination.REACHED]
    pool = reached if reached else traces
    # Prefix consensus, each trace weighted by the current it represents
    # at its seed: follow the majority branch region by region, dropping
    # traces as they diverge. Survivors took the dominant branch at every
    # split on the way.
    alive = list(pool)
    position = 0
    while True:
        votes: dict[int, float] = {}
        for s, w, _ in alive:
            if len(s) > position:
                votes[s[position]] = votes.get(s[position], 0.0) + w
        done_w = sum(w for s, w, _ in alive if len(s) <= position)
        if not votes or done_w >= max(votes.values()):
            break
        pick = max(sorted(votes), key=lambda rid: votes[rid])
        alive = [t for t in alive if len(t[0]) > position and t[0][position] == pick]
        position += 1
    if not alive:
        return max(pool, key=lambda t: t[1])[2]
    exact = [t for t in alive if len(t[0]) == position]
    return max(exact if exact else alive, key=lambda t: t[1])[2]


# ---------------------------------------------------------------------------
# Corridor segmentation


def _shift(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(a)
    ys = slice(max(dy, 0), a.shape[0] + min(dy, 0))
    xs = slice(max(dx, 0), a.shape[1] + min(dx, 0))
    yd = slice(max(-dy, 0), a.shape[0] + min(-dy, 0))
    xd = slice(max(-dx, 0), a.shape[1] + min(-dx, 0))
    out[ys, xs] = a[yd, xd]
    return out


def thin_mask(mask: np.ndarray) -> np.ndarray:
    """Morphological thinning to a one-cell skeleton (two-subpass scheme,
    8-connectivity preserved)."""
    img = mask.astype(np.uint8)
    while True:
        changed = False
        for pass_id in (0, 1):
            # Neighbours clockwise from north.
            p2 = _shift(img, 1, 0)
            p3 = _shift(img, 1, -1)
            p4 = _shift(img, 0, -1)
            p5 = _shift(img, -1, -1)
            p6 = _shift(img, -1, 0)
            p7 = _shift(img, -1, 1)
            p8 = _shift(img, 0, 1)
            p9 = _shift(img, 1, 1)
            ring = [p2, p3, p4, p5, p6, p7, p8, p9, p2]
            transitions = np.zeros_like(img, dtype=np.int32)
            for a, b in zip(ring[:-1], ring[1:]):
                transitions += ((a == 0) & (b == 1)).astype(np.int32)
            bsum = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
            cond = (img == 1) & (bsum >= 2) & (bsum <= 6) & (transitions == 1)
            if pass_id == 0:
                cond &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            if cond.any():
                img[cond] = 0
                changed = True
        if not changed:
            break
    return _minimal_skeleton(img.astype(bool))


def _minimal_skeleton(skel: np.ndarray) -> np.ndarray:
    """Sequentially delete redundant cells (staircase doubles) that the
    parallel passes leave behind, keeping endpoints and connectivity.

    A cell is removable when its skeleton neighbours stay 8-connected
    through each other once it is gone.
    """
    skel = skel.copy()
    ny, nx = skel.shape
    changed = True
    while changed:
        changed = False
        for iy in range(ny):
            for ix in range(nx):
                if not skel[iy, ix]:
                    continue
                nbrs = [
                    (dx, dy)
                    for dx, dy in _NBR8
                    if 0 <= ix + dx < nx and 0 <= iy + dy < ny and skel[iy + dy, ix + dx]
                ]
                if not 2 <= len(nbrs) <= 6:
                    continue
                comp = {nbrs[0]}
                frontier = [nbrs[0]]
                rest = set(nbrs[1:])
                while frontier:
                    ax, ay = frontier.pop()
                    found = {
                        (bx, by)
                        for bx, by in rest
                        if abs(ax - bx) <= 1 and abs(ay - by) <= 1
                    }
                    rest -= found
                    comp |= found
                    frontier.extend(found)
                if not rest:
                    skel[iy, ix] = False
                    changed = True
    return skel


_NBR8 = ((1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1))


def _skeleton_degree(skel: np.ndarray) -> np.ndarray:
    deg = np.zeros(skel.shape, dtype=np.int8)
    for dx, dy in _NBR8:
        deg += (_shift(skel, dy, dx) & skel).astype(np.int8)
    return deg


def prune_spurs(skel: np.ndarray, max_len: int) -> np.ndarray:
    """Remove skeleton side-branches of at most max_len cells that dead-end
    off a junction; genuine dead-end corridors (longer, or with no junction
    behind them) survive."""
    skel = skel.copy()
    ny, nx = skel.shape
    while True:
        deg = _skeleton_degree(skel)
        endpoints = sorted(
            (int(x), int(y)) for y, x in zip(*np.nonzero(skel & (deg == 1)))
        )
        removed = False
        for ex, ey in endpoints:
            if not skel[ey, ex]:
                continue
            chain = [(ex, ey)]
            prev = None
            cur = (ex, ey)
            hit_junction = False
            while len(chain) <= max_len:
                nbrs = [
                    (cur[0] + dx, cur[1] + dy)
                    for dx, dy in _NBR8
                    if 0 <= cur[0] + dx < nx
                    and 0 <= cur[1] + dy < ny
                    and skel[cur[1] + dy, cur[0] + dx]
                    and (cur[0] + dx, cur[1] + dy) != prev
                ]
                if len(nbrs) != 1:
                    hit_junction = len(nbrs) > 1
                    break
                nxt = nbrs[0]
                if deg[nxt[1], nxt[0]] >= 3:
                    hit_junction = True
                    break
                prev, cur = cur, nxt
                chain.append(cur)
            if hit_junction and len(chain) <= max_len:
                for ix, iy in chain:
                    skel[iy, ix] = False
                removed = True
        if not removed:
            return skel


@dataclass(frozen=True, eq=False)
class CorridorSegmentation:
    """Channel cells partitioned into corridor / junction regions."""

    region: np.ndarray  # (ny, nx) int32, -1 off-channel
    is_node: np.ndarray  # (n_regions,) bool: True for junction/endpoint blobs
    n_regions: int
    skeleton: np.ndarray  # bool (ny, nx)
    width_cells: float

    def region_at(self, ix: int, iy: int) -> int:
        return int(self.region[iy, ix])

    def cells_of(self, region_ids: Iterable[int]) -> set[tuple[int, int]]:
        wanted = set(region_ids)
        out: set[tuple[int, int]] = set()
        for rid in wanted:
            ys, xs = np.nonzero(self.region == rid)
            out.update((int(x), int(y)) for x, y in zip(xs, ys))
        return out


def _wall_distance(channel: np.ndarray) -> np.ndarray:
    """4-connected BFS distance (cells) from the nearest non-channel cell."""
    ny, nx = channel.shape
    dist = np.full(channel.shape, -1, dtype=np.int32)
    queue: deque[tuple[int, int]] = deque()
    for iy in range(ny):
        for ix in range(nx):
            if not channel[iy, ix]:
                dist[iy, ix] = 0
                queue.append((ix, iy))
    # Grid rim counts as wall.
    if not queue:
        return np.ones_like(dist)
    while queue:
        ix, iy = queue.popleft()
        for dx, dy in _DESCENT_ORDER:
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < nx and 0 <= jy < ny and dist[jy, jx] < 0:
                dist[jy, jx] = dist[iy, ix] + 1
                queue.append((jx, jy))
    return dist


def _chain_turn_split(chain: list[tuple[int, int]], window: int, min_turn_deg: float) -> list[int]:
    """Indices where a chain bends sharply; staircase wiggle stays merged."""
    n = len(chain)
    if n < 2 * window + 3:
        return []
    turns = np.zeros(n)
    for i in range(window, n - window):
        ax = chain[i][0] - chain[i - window][0]
        ay = chain[i][1] - chain[i - window][1]
        bx = chain[i + window][0] - chain[i][0]
        by = chain[i + window][1] - chain[i][1]
        na, nb = math.hypot(ax, ay), math.hypot(bx, by)
        if na == 0 or nb == 0:
            continue
        cosang = max(-1.0, min(1.0, (ax * bx + ay * by) / (na * nb)))
        turns[i] = math.degrees(math.acos(cosang))
    cuts: list[int] = []
    i = window
    while i < n - window:
        if turns[i] >= min_turn_deg:
            # take the local maximum of this bend
            k = i
            while k + 1 < n - window and turns[k + 1] >= turns[k]:
                k += 1
            cuts.append(k)
            i = k + max(window, 1)
        else:
            i += 1
    return cuts


def segment_corridors(
    maze: MazeSpec, min_turn_deg: float = 60.0, window: int | None = None
) -> CorridorSegmentation:
    """Partition channel cells into corridor regions and junction regions."""
    channel = maze.channel_mask()
    skel = thin_mask(channel)
    ny, nx = channel.shape

    dist = _wall_distance(channel)
    on_skel = dist[skel]
    width = 2.0 * float(np.median(on_skel)) if on_skel.size else 1.0
    if window is None:
        # Half a channel width: long enough to see a real corner, short
        # enough that the steady curvature of an annular corridor never
        # accumulates min_turn_deg within it.
        window = max(2, int(round(width / 2)))

    # Thinning wide channels leaves short hair branches; drop anything
    # shorter than one channel width so only real topology remains.
    skel = prune_spurs(skel, max(3, int(round(width))))
    deg = _skeleton_degree(skel)
    node_mask = skel & (deg != 2)
    # Electrode areas terminate routes, so they split chains too; this
    # keeps a ring with an electrode on it from becoming one giant loop
    # region spanning both its live and its dead side.
    electrode = np.zeros_like(node_mask)
    for e in maze.electrodes:
        for ix, iy in e.cells:
            electrode[iy, ix] = True
    node_mask |= skel & electrode

    region = np.full(channel.shape, -1, dtype=np.int32)
    is_node: list[bool] = []
    next_id = 0
    # Junction / endpoint blobs first (8-connected groups of node cells).
    node_cells = sorted((int(x), int(y)) for y, x in zip(*np.nonzero(node_mask)))
    for ix0, iy0 in node_cells:
        if region[iy0, ix0] >= 0:
            continue
        rid = next_id
        next_id += 1
        is_node.append(True)
        stack = [(ix0, iy0)]
        region[iy0, ix0] = rid
        while stack:
            ix, iy = stack.pop()
            for dx, dy in _NBR8:
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < nx and 0 <= jy < ny and node_mask[jy, jx] and region[jy, jx] < 0:
                    region[jy, jx] = rid
                    stack.append((jx, jy))

    # Walk chains between node blobs (or around pure cycles).
    visited = node_mask.copy()

    def neighbours(ix: int, iy: int) -> list[tuple[int, int]]:
        out = []
        for dx, dy in _NBR8:
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < nx and 0 <= jy < ny and skel[jy, jx]:
                out.append((jx, jy))
        return out

    chains: list[list[tuple[int, int]]] = []
    for ix0, iy0 in node_cells:
        for sx, sy in neighbours(ix0, iy0):
            if visited[sy, sx]:
                continue
            chain = [(sx, sy)]
            visited[sy, sx] = True
            cur = (sx, sy)
            while True:
                nxts = [
                    (jx, jy)
                    for jx, jy in neighbours(*cur)
                    if not visited[jy, jx] and not node_mask[jy, jx]
                ]
                if not nxts:
                    break
                cur = nxts[0]
                visited[cur[1], cur[0]] = True
                chain.append(cur)
            chains.append(chain)
    # Leftover cycles with no junction at all.
    rest = sorted((int(x), int(y)) for y, x in zip(*np.nonzero(skel & ~visited)))
    for ix0, iy0 in rest:
        if visited[iy0, ix0]:
            continue
        chain = [(ix0, iy0)]
        visited[iy0, ix0] = True
        cur = (ix0, iy0)
        while True:
            nxts = [(jx, jy) for jx, jy in neighbours(*cur) if not visited[jy, jx]]
            if not nxts:
                break
            cur = nxts[0]
            visited[cur[1], cur[0]] = True
            chain.append(cur)
        chains.append(chain)

    for chain in chains:
        cuts = _chain_turn_split(chain, window, min_turn_deg)
        start = 0
        for cut in cuts + [len(chain)]:
            piece = chain[start:cut]
            start = cut
            if not piece:
                continue
            rid = next_id
            next_id += 1
            # Chains not much longer than a channel width are doorways
            # between junction areas: too short for a route to register in
            # reliably, so they stay transparent for every route alike.
            is_node.append(len(piece) < max(3, int(round(width)) + 3))
            for ix, iy in piece:
                region[iy, ix] = rid

    is_node_arr = np.array(is_node, dtype=bool)

    def _grow(seeds: list[tuple[int, int]], depth_limit: int | None) -> None:
        depth = {c: 0 for c in seeds}
        queue = deque(seeds)
        while queue:
            ix, iy = queue.popleft()
            d = depth[(ix, iy)]
            if depth_limit is not None and d >= depth_limit:
                continue
            rid = region[iy, ix]
            for dx, dy in _DESCENT_ORDER:
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < nx and 0 <= jy < ny and channel[jy, jx] and region[jy, jx] < 0:
                    region[jy, jx] = rid
                    depth[(jx, jy)] = d + 1
                    queue.append((jx, jy))

    def _seeds(want_node: bool) -> list[tuple[int, int]]:
        out = [
            (int(x), int(y))
            for y, x in zip(*np.nonzero(region >= 0))
            if bool(is_node_arr[region[y, x]]) == want_node
        ]
        out.sort(key=lambda c: (region[c[1], c[0]], c[1], c[0]))
        return out

    # Junction areas first, out to half a channel width: routes crossing a
    # junction stay "between corridors" there. Corridors then fill the rest.
    _grow(_seeds(True), max(2, int(round(width / 2)) + 1))
    _grow(_seeds(False), None)
    _grow(_seeds(True), None)  # leftover pockets (dead ends off junctions)

    region.setflags(write=False)
    return CorridorSegmentation(
        region=region,
        is_node=is_node_arr,
        n_regions=next_id,
        skeleton=skel,
        width_cells=width,
    )


def region_sequence(
    cells: Iterable[tuple[int, int]], seg: CorridorSegmentation, debounce: int | None = None
) -> tuple[int, ...]:
    """Ordered corridor regions visited; junction blobs are transparent.

    Consecutive duplicate cells collapse first, so sampling density does
    not matter; a region then enters the sequence only after `debounce`
    consecutive distinct cells, which suppresses grazing touches along
    region boundaries. The default debounce scales with the channel width
    (a real traversal of a corridor covers at least half a width of cells).
    """
    if debounce is None:
        debounce = min(8, max(2, math.ceil(seg.width_cells / 2)))
    seq: list[int] = []
    cand = -1
    count = 0
    last_cell: tuple[int, int] | None = None
    for cell in cells:
        if cell == last_cell:
            continue
        last_cell = cell
        ix, iy = cell
        if not (0 <= ix < seg.region.shape[1] and 0 <= iy < seg.region.shape[0]):
            continue
        rid = int(seg.region[iy, ix])
        if rid < 0 or seg.is_node[rid]:
            continue
        if seq and rid == seq[-1]:
            cand = -1
            count = 0
            continue
        if rid == cand:
            count += 1
        else:
            cand = rid
            count = 1
        # The first region is the source room, which a route may clip only
        # briefly on its way out; accept it on slimmer evidence.
        need = min(debounce, 2) if not seq else debounce
        if count >= need:
            seq.append(rid)
            cand = -1
            count = 0
    return tuple(seq)


def region_cell_overlap(
    cells_a: Iterable[tuple[int, int]],
    cells_b: Iterable[tuple[int, int]],
    seg: CorridorSegmentation,
    debounce_a: int | None = None,
    debounce_b: int | None = None,
) -> float:
    """Jaccard overlap of the corridor-region cells two routes visit."""
    ra = set(region_sequence(cells_a, seg, debounce_a))
    rb = set(region_sequence(cells_b, seg, debounce_b))
    a = seg.cells_of(ra)
    b = seg.cells_of(rb)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def hot_region_route(
    power: ScalarField, seg: CorridorSegmentation, labels: LeeLabels, fraction: float = 0.25
) -> tuple[int, ...]:
    """Corridor regions bright enough to be current carriers, ordered from
    the source side to the destination.

    A region scores its 90th-percentile power density, so a wide chamber
    with one strong filament through it still registers while corridors
    off the conducting route (near-zero everywhere) do not. Hot regions are
    those within `fraction` of the brightest score.
    """
    scores: dict[int, float] = {}
    lab_means: dict[int, float] = {}
    for rid in range(seg.n_regions):
        if seg.is_node[rid]:
            continue
        mask = seg.region == rid
        if not mask.any():
            continue
        scores[rid] = float(np.percentile(power.values[mask], 90))
        lab = labels.labels[mask]
        lab = lab[lab >= 0]
        lab_means[rid] = float(lab.mean()) if lab.size else -1.0
    if not scores:
        return ()
    peak = max(scores.values())
    hot = [rid for rid, m in scores.items() if m >= fraction * peak]
    hot.sort(key=lambda rid: (-lab_means[rid], rid))
    return tuple(hot)


@dataclass(frozen=True)
class ComparisonMetrics:
    max_lateral_deviation_mm: float
    length_ratio: float
    corridor_sequence_equal: bool
    trajectory_sequence: tuple[int, ...]
    path_sequence: tuple[int, ...]
    cell_overlap: float


def _max_distance_to_polyline(points: np.ndarray, poly: np.ndarray) -> float:
    """Max over points of the distance to the nearest polyline segment."""
    if len(poly) == 1:
        return float(np.max(np.hypot(points[:, 0] - poly[0, 0], points[:, 1] - poly[0, 1])))
    best = np.full(len(points), np.inf)
    for a, b in zip(poly[:-1], poly[1:]):
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0:
            d = np.hypot(points[:, 0] - a[0], points[:, 1] - a[1])
        else:
            t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
            proj = a + t[:, None] * ab
            d = np.hypot(points[:, 0] - proj[:, 0], points[:, 1] - proj[:, 1])
        best = np.minimum(best, d)
    return float(best.max())


def compare_trajectory(
    traj: "Trajectory", path: Path, seg: CorridorSegmentation
) -> ComparisonMetrics:
    """Quantify how closely a droplet run reproduces an oracle path."""
    points = traj.positions_mm()
    if len(points) == 0 or len(path.cells) == 0:
        raise ValueError("empty trajectory or path")
    poly = path.points_mm()
    deviation = _max_distance_to_polyline(points, poly)
    ratio = traj.path_length_mm / path.length_mm if path.length_mm > 0 else math.inf

    h = path.cell_size
    traj_cells = [(int(x // h), int(y // h)) for x, y in points]
    t_seq = region_sequence(traj_cells, seg)
    p_seq = region_sequence(path.cells, seg)
    overlap = region_cell_overlap(traj_cells, path.cells, seg)
    return ComparisonMetrics(
        max_lateral_deviation_mm=deviation,
        length_ratio=ratio,
        corridor_sequence_equal=t_seq == p_seq,
        trajectory_sequence=t_seq,
        path_sequence=p_seq,
        cell_overlap=overlap,
    )
