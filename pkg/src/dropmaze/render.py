"""Deterministic raster and CSV output for fields and trajectories.

Images are 8-bit binary PGM/PPM with row 0 at the top; scalar data is
min-max normalized (a constant field renders mid-gray). Identical inputs
produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .maze import MazeSpec
from .solver import Quantity, ScalarField, VectorField, VectorQuantity


def normalize_u8(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    return np.clip(np.rint((v - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    gray = np.asarray(gray, dtype=np.uint8)
    ny, nx = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{nx} {ny}\n255\n".encode())
        f.write(gray.tobytes())


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    ny, nx, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{nx} {ny}\n255\n".encode())
        f.write(rgb.tobytes())


def _draw_stroke(gray: np.ndarray, x0: float, y0: float, dx: float, dy: float, length: float) -> None:
    """Integer line segment centred on (x0, y0) in pixel coordinates."""
    n = max(int(round(length)), 1)
    for t in range(-n // 2, n // 2 + 1):
        px = int(round(x0 + t * dx))
        py = int(round(y0 + t * dy))
        if 0 <= py < gray.shape[0] and 0 <= px < gray.shape[1]:
            gray[py, px] = 255


def render_field(
    field: ScalarField | VectorField,
    out_path: str | Path,
    style: str = "gray",
    maze: MazeSpec | None = None,
    stroke_every: int = 8,
) -> None:
    """Write a field raster.

    Styles: "gray" (magnitude raster), "strokes" (magnitude raster plus
    sparse direction strokes, vector fields only), "overlay" (field over
    the maze walls; needs maze).
    """
    if isinstance(field, VectorField):
        mag = field.magnitude()
    else:
        mag = field.values
    if mag.size == 0:
        raise ValueError("cannot render an empty field")

    if style == "gray":
        write_pgm(out_path, normalize_u8(mag))
        return
    if style == "strokes":
        if not isinstance(field, VectorField):
            raise ValueError("stroke rendering needs a vector field")
        gray = normalize_u8(mag) // 2  # dim background so strokes stand out
        peak = float(mag.max())
        for iy in range(stroke_every // 2, field.ny, stroke_every):
            for ix in range(stroke_every // 2, field.nx, stroke_every):
                m = mag[iy, ix]
                if peak <= 0 or m <= 1e-3 * peak:
                    continue
                dx, dy = field.vx[iy, ix] / m, field.vy[iy, ix] / m
                _draw_stroke(gray, ix, iy, dx, dy, 0.8 * stroke_every)
        write_pgm(out_path, gray)
        return
    if style == "overlay":
        if maze is None:
            raise ValueError("overlay rendering needs the maze")
        gray = (normalize_u8(mag).astype(np.float64) * (191 / 255) + 64).astype(np.uint8)
        gray[maze.wall_mask()] = 0
        write_pgm(out_path, gray)
        return
    raise ValueError(f"unknown render style {style!r}")


def render_trajectory_overlay(
    maze: MazeSpec, traj: Trajectory, out_path: str | Path, max_dots: int = 600
) -> None:
    """Maze raster with the droplet centre positions as red dots."""
    base = np.where(maze.wall_mask(), 40, 220).astype(np.uint8)
    rgb = np.stack([base, base, base], axis=-1)
    h = maze.cell_size
    stride = max(1, len(traj) // max_dots)
    for i in range(0, len(traj), stride):
        ix = int(traj.xs[i] // h)
        iy = int(traj.ys[i] // h)
        if 0 <= iy < maze.ny and 0 <= ix < maze.nx:
            rgb[iy, ix] = (220, 30, 30)
    write_ppm(out_path, rgb)


# ---------------------------------------------------------------------------
# Field CSV round-trip


def write_field_csv(path: str | Path, field: ScalarField | VectorField) -> None:
    """Scalar: x_mm,y_mm,<quantity>. Vector: x_mm,y_mm,<quantity>,vx,vy
    (third column is the magnitude). Rows run left-to-right, top-to-bottom."""
    h = field.cell_size
    lines: list[str] = []
    if isinstance(field, VectorField):
        lines.append(f"x_mm,y_mm,{field.quantity.value},vx,vy")
        mag = field.magnitude()
        for iy in range(field.ny):
            y = (iy + 0.5) * h
            for ix in range(field.nx):
                lines.append(
                    f"{(ix + 0.5) * h!r},{y!r},{float(mag[iy, ix])!r},"
                    f"{float(field.vx[iy, ix])!r},{float(field.vy[iy, ix])!r}"
                )
    else:
        lines.append(f"x_mm,y_mm,{field.quantity.value}")
        for iy in range(field.ny):
            y = (iy + 0.5) * h
            for ix in range(field.nx):
                lines.append(f"{(ix + 0.5) * h!r},{y!r},{float(field.values[iy, ix])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path: str | Path) -> ScalarField | VectorField:
    """Rebuild a field from its CSV export (face currents are not stored)."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    if header[:2] != ["x_mm", "y_mm"] or len(header) not in (3, 5):
        raise ValueError(f"unrecognized field CSV header: {text[0]!r}")
    quantity_tag = header[2]
    rows = [tuple(float(c) for c in line.split(",")) for line in text[1:]]
    xs = sorted({r[0] for r in rows})
    ys = sorted({r[1] for r in rows})
    nx, ny = len(xs), len(ys)
    if nx * ny != len(rows):
        raise ValueError("field CSV is not a full grid")
    h = 2.0 * xs[0] if nx == 1 else xs[1] - xs[0]
    x_index = {x: i for i, x in enumerate(xs)}
    y_index = {y: i for i, y in enumerate(ys)}

    if len(header) == 5:
        vx = np.zeros((ny, nx))
        vy = np.zeros((ny, nx))
        for x, y, _, fx, fy in rows:
            vx[y_index[y], x_index[x]] = fx
            vy[y_index[y], x_index[x]] = fy
        quantity = VectorQuantity(quantity_tag)
        return VectorField(vx, vy, h, quantity)
    values = np.zeros((ny, nx))
    for x, y, v in rows:
        values[y_index[y], x_index[x]] = v
    return ScalarField(values, h, Quantity(quantity_tag))
