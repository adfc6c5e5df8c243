"""Independent reference implementations the tests check the package against.

Everything here is deliberately written the slow, obvious way and shares no
code with the package internals: dense Gaussian elimination for the
potential, exhaustive BFS for shortest distances, and a two-resistor
Kirchhoff split for branch currents.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def dense_solve_potential(sigma, dirichlet):
    """Assemble the 5-point harmonic-mean system densely and solve it with
    numpy's LU solver. Returns phi on the full grid (0 where excluded)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    ny, nx = sigma.shape

    def g(a, b):
        sa, sb = sigma[a[1], a[0]], sigma[b[1], b[0]]
        if sa <= 0 or sb <= 0:
            return 0.0
        return 2.0 * sa * sb / (sa + sb)

    def neighbors(ix, iy):
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < nx and 0 <= jy < ny:
                yield jx, jy

    dir_map = dict(dirichlet)
    # Only cells conductively reachable from a pinned cell have a defined
    # potential; floating pockets stay at 0 like the package solver reports.
    reachable = set(dir_map)
    frontier = list(dir_map)
    while frontier:
        cur = frontier.pop()
        for nb in neighbors(*cur):
            if nb not in reachable and g(cur, nb) > 0:
                reachable.add(nb)
                frontier.append(nb)
    unknowns = []
    for iy in range(ny):
        for ix in range(nx):
            if sigma[iy, ix] <= 0 or (ix, iy) in dir_map:
                continue
            if (ix, iy) in reachable:
                unknowns.append((ix, iy))
    index = {c: i for i, c in enumerate(unknowns)}

    n = len(unknowns)
    phi = np.zeros((ny, nx))
    for (ix, iy), v in dir_map.items():
        phi[iy, ix] = v
    if n:
        a_mat = np.zeros((n, n))
        rhs = np.zeros(n)
        for (ix, iy), i in index.items():
            for jx, jy in neighbors(ix, iy):
                w = g((ix, iy), (jx, jy))
                if w == 0:
                    continue
                a_mat[i, i] += w
                if (jx, jy) in index:
                    a_mat[i, index[(jx, jy)]] -= w
                elif (jx, jy) in dir_map:
                    rhs[i] += w * dir_map[(jx, jy)]
        sol = np.linalg.solve(a_mat, rhs)
        for (ix, iy), i in index.items():
            phi[iy, ix] = sol[i]
    return phi


def bfs_distances(channel, sources):
    """Exhaustive 4-connected BFS distances over a boolean channel mask."""
    channel = np.asarray(channel, dtype=bool)
    ny, nx = channel.shape
    dist = np.full((ny, nx), -1, dtype=np.int64)
    queue = deque()
    for ix, iy in sorted(sources):
        dist[iy, ix] = 0
        queue.append((ix, iy))
    while queue:
        ix, iy = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < nx and 0 <= jy < ny and channel[jy, jx] and dist[jy, jx] < 0:
                dist[jy, jx] = dist[iy, ix] + 1
                queue.append((jx, jy))
    return dist


def flood_fill_components(channel):
    """Component count by plain flood fill."""
    channel = np.asarray(channel, dtype=bool)
    ny, nx = channel.shape
    seen = np.zeros_like(channel)
    count = 0
    for iy in range(ny):
        for ix in range(nx):
            if not channel[iy, ix] or seen[iy, ix]:
                continue
            count += 1
            stack = [(ix, iy)]
            seen[iy, ix] = True
            while stack:
                cx, cy = stack.pop()
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    jx, jy = cx + dx, cy + dy
                    if 0 <= jx < nx and 0 <= jy < ny and channel[jy, jx] and not seen[jy, jx]:
                        seen[jy, jx] = True
                        stack.append((jx, jy))
    return count


def two_branch_current_ratio(len_a_mm, len_b_mm):
    """Kirchhoff split between two parallel branches of equal cross-section:
    currents divide inversely with branch length."""
    r_a, r_b = len_a_mm, len_b_mm
    i_a = r_b / (r_a + r_b)
    i_b = r_a / (r_a + r_b)
    return i_a / i_b
