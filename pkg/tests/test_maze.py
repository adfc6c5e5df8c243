import numpy as np
import pytest
from hypothesis import given, strategies as st

import dropmaze as dm
from dropmaze.maze import (
    CellKind,
    MazeError,
    MazeFormatError,
    coat_sharp_corners,
    conductivity_grid,
    convex_corner_cells,
    emit_maze,
    parse_maze,
    validate_and_components,
)

from oracles import flood_fill_components


def test_parse_minimal_strip():
    spec = parse_maze("S.T")
    assert (spec.nx, spec.ny) == (3, 1)
    assert spec.cells.tolist() == [[0, 0, 0]]
    assert spec.electrode_cells(dm.Polarity.POSITIVE) == {(0, 0)}
    assert spec.electrode_cells(dm.Polarity.NEGATIVE) == {(2, 0)}
    # defaults applied
    assert spec.cell_size == 0.5
    assert spec.sigma_electrolyte == 10.0


def test_parse_missing_negative_electrode():
    with pytest.raises(MazeError, match="no negative electrode"):
        parse_maze("S..")


def test_parse_missing_positive_electrode():
    with pytest.raises(MazeError, match="no positive electrode"):
        parse_maze("..T")


def test_parse_reports_line_and_column():
    with pytest.raises(MazeFormatError, match=r"line 2, col 2"):
        parse_maze("S.T\n.?.\n...")


def test_parse_rejects_tabs():
    with pytest.raises(MazeFormatError, match="tabs"):
        parse_maze("S.\tT")


def test_parse_rejects_ragged_grid():
    with pytest.raises(MazeFormatError, match="length"):
        parse_maze("S.T\n....")


def test_parse_rejects_unknown_header_key():
    with pytest.raises(MazeFormatError, match="unknown header key"):
        parse_maze("cell_size = 1\n\nS.T")


def test_parse_rejects_bad_header_value():
    with pytest.raises(MazeFormatError, match="bad numeric value"):
        parse_maze("voltage = five\n\nS.T")


HAND_MAZE = """\
cell_size_mm = 1.0
sigma_electrolyte = 12.5
sigma_wall = 0.0
sigma_coating = 250000.0
voltage = 7.5

################
#S.....#.......#
#......#.......#
#..#####..###..#
#..+...#..#.#..#
#..#.#.#..#.#..#
#..#.#....#.#..#
#..#.#######.#.#
#..#.........#.#
#..###########.#
#..............#
#..###########.#
#..#.........#.#
#..#.#######.#.#
#............#T#
################
"""


def test_hand_maze_round_trip_and_coated_cells():
    spec = parse_maze(HAND_MAZE)
    assert (spec.nx, spec.ny) == (16, 16)
    coated = np.argwhere(spec.cells == CellKind.COATED_WALL)
    assert [(int(x), int(y)) for y, x in coated] == [(3, 4)]
    # canonical re-emission parses back to an equal spec
    assert parse_maze(emit_maze(spec)) == spec
    # and emission is canonical: emitting the reparse gives identical text
    assert emit_maze(parse_maze(emit_maze(spec))) == emit_maze(spec)


def _grid_strategy():
    glyph = st.sampled_from(".#")
    row = st.lists(glyph, min_size=3, max_size=9)
    return st.lists(row, min_size=2, max_size=9).filter(
        lambda rows: len({len(r) for r in rows}) == 1
    )


@given(
    grid=_grid_strategy(),
    cell=st.floats(0.1, 5.0, allow_nan=False),
    sig=st.floats(1.0, 100.0, allow_nan=False),
    volt=st.floats(0.5, 50.0, allow_nan=False),
    data=st.data(),
)
def test_round_trip_property(grid, cell, sig, volt, data):
    ny, nx = len(grid), len(grid[0])
    cells = [list(r) for r in grid]
    spots = [(x, y) for y in range(ny) for x in range(nx)]
    s_cell = data.draw(st.sampled_from(spots))
    t_cell = data.draw(st.sampled_from([c for c in spots if c != s_cell]))
    cells[s_cell[1]][s_cell[0]] = "S"
    cells[t_cell[1]][t_cell[0]] = "T"
    text = (
        f"cell_size_mm = {cell!r}\nsigma_electrolyte = {sig!r}\nvoltage = {volt!r}\n\n"
        + "\n".join("".join(r) for r in cells)
    )
    spec = parse_maze(text)
    assert parse_maze(emit_maze(spec)) == spec


def test_components_single_corridor():
    spec = parse_maze("S..T")
    rep = validate_and_components(spec)
    assert rep.n_components == 1
    assert rep.solvable


def test_components_sealed_wall():
    spec = parse_maze("S..\n###\n..T")
    rep = validate_and_components(spec)
    assert rep.n_components == 2
    assert not rep.solvable
    assert rep.component_of(0, 0) != rep.component_of(2, 2)


def test_components_match_flood_fill_on_ring(ring_maze):
    rep = validate_and_components(ring_maze)
    assert rep.solvable
    assert rep.n_components == flood_fill_components(ring_maze.channel_mask())
    assert rep.n_components == 1


def test_conductivity_uniform():
    spec = parse_maze("S..T\n....\n....\n....")
    sigma = conductivity_grid(spec)
    assert np.all(sigma == spec.sigma_electrolyte)


def test_conductivity_single_coated_cell():
    spec = parse_maze("S.+.T\n.....")
    sigma = conductivity_grid(spec)
    assert np.count_nonzero(sigma == spec.sigma_coating) == 1
    assert sigma[0, 2] == spec.sigma_coating


def test_conductivity_m2_analogue_range(ring_maze):
    sigma = conductivity_grid(ring_maze)
    assert sigma.min() == ring_maze.sigma_wall == 0.0
    # 0.5 mol/L NaOH handbook value used as the default electrolyte
    assert sigma.max() == 10.0


def test_conductivity_is_pure(ring_maze):
    a = conductivity_grid(ring_maze)
    b = conductivity_grid(ring_maze)
    assert a.tobytes() == b.tobytes()


def test_invariant_electrode_on_wall_rejected():
    cells = np.zeros((2, 3), dtype=np.int8)
    cells[0, 0] = CellKind.WALL
    with pytest.raises(MazeError, match="not a channel"):
        dm.MazeSpec(
            cells=cells,
            electrodes=(
                dm.Electrode("E1", dm.Polarity.POSITIVE, frozenset({(0, 0)})),
                dm.Electrode("E2", dm.Polarity.NEGATIVE, frozenset({(2, 0)})),
            ),
        )


def test_invariant_sigma_ordering_with_coating():
    cells = np.zeros((1, 4), dtype=np.int8)
    cells[0, 2] = CellKind.COATED_WALL
    with pytest.raises(MazeError, match="sigma_coating"):
        dm.MazeSpec(
            cells=cells,
            electrodes=(
                dm.Electrode("E1", dm.Polarity.POSITIVE, frozenset({(0, 0)})),
                dm.Electrode("E2", dm.Polarity.NEGATIVE, frozenset({(3, 0)})),
            ),
            sigma_coating=1.0,
        )


def test_invariant_overlapping_electrodes_rejected():
    cells = np.zeros((1, 3), dtype=np.int8)
    with pytest.raises(MazeError, match="two electrodes"):
        dm.MazeSpec(
            cells=cells,
            electrodes=(
                dm.Electrode("E1", dm.Polarity.POSITIVE, frozenset({(0, 0)})),
                dm.Electrode("E2", dm.Polarity.NEGATIVE, frozenset({(0, 0)})),
            ),
        )


L_MAZE = """\
##########
#S.......#
#........#
#...######
#...#.####
#...#..#T#
#...#..#.#
#...#....#
##########
"""


def test_convex_corners_on_hand_maze():
    spec = parse_maze(L_MAZE)
    corners = convex_corner_cells(spec)
    assert (4, 3) in corners  # the sharp tip between the two legs
    for ix, iy in corners:
        assert spec.cells[iy, ix] != CellKind.CHANNEL


def test_coat_sharp_corners_only_changes_corners():
    spec = parse_maze(L_MAZE)
    coated = coat_sharp_corners(spec)
    changed = np.argwhere(coated.cells != spec.cells)
    assert len(changed) == len(convex_corner_cells(spec))
    for iy, ix in changed:
        assert coated.cells[iy, ix] == CellKind.COATED_WALL
    # the electrodes and physics are untouched
    assert coated.electrodes == spec.electrodes
    assert coated.applied_voltage == spec.applied_voltage
