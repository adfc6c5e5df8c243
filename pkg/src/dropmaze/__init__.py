"""Maze conduction solver with a rigid-disk droplet agent.

Solves the electric potential in an electrolyte-filled maze, derives the
current-density field, drives a disk-shaped droplet along it, and checks
the emergent route against wavefront shortest paths.
"""

from .maze import (
    CellKind,
    ComponentReport,
    Electrode,
    GeometryError,
    MazeError,
    MazeFormatError,
    MazeSpec,
    Polarity,
    coat_sharp_corners,
    conductivity_grid,
    convex_corner_cells,
    emit_maze,
    parse_maze,
    validate_and_components,
)
from .generators import (
    BifurcationLayout,
    bifurcation_layout,
    generate_bifurcation_maze,
    generate_ring_maze,
)
from .solver import (
    FieldBundle,
    FieldSolveError,
    Quantity,
    ScalarField,
    SolveReport,
    VectorField,
    VectorQuantity,
    compute_fields,
    conservation,
    current_density,
    grad_speed_of_j,
    joule_heating,
    maze_dirichlet,
    solve_maze,
    solve_potential,
    speed_field,
)

__version__ = "0.1.0"

from .dynamics import (  # noqa: E402
    DropletState,
    DynamicsError,
    DynamicsParams,
    ForceSource,
    Termination,
    Trajectory,
    VelocityProfile,
    disk_integrate,
    simulate,
    step,
    velocity_profile,
)
from .oracle import (  # noqa: E402
    ComparisonMetrics,
    CorridorSegmentation,
    LeeLabels,
    Path,
    Streamline,
    StreamTermination,
    UnreachableError,
    compare_trajectory,
    extract_path,
    hot_region_route,
    lee_label,
    region_cell_overlap,
    region_sequence,
    segment_corridors,
    streamline,
    trace_route_streamline,
)
from .scenario import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    ScenarioConfig,
    ScenarioResult,
    UnsolvableMazeError,
    corner_force_stats,
    export_bundle,
    load_config,
    parse_config,
    run_and_export,
    run_fields_only,
    run_oracle_only,
    run_scenario,
)
