from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

import dropmaze as dm
from dropmaze.dynamics import DynamicsParams
from dropmaze.scenario import ScenarioConfig, run_scenario

# The acceptance ring maze: M2 scale, 4 mm channels at 0.5 mm cells, 5 V.
RING_SEED = 1
RING_DYNAMICS = DynamicsParams(static_threshold=1.9e-3, radius_mm=1.0, max_steps=100_000)


def ring_config(**overrides) -> ScenarioConfig:
    base = dict(
        generator="ring",
        rings=2,
        gaps_per_ring=(1, 1),
        diameter_mm=70.0,
        channel_width_mm=4.0,
        cell_size_mm=0.5,
        seed=RING_SEED,
        voltage=5.0,
        dynamics=RING_DYNAMICS,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def ring_maze():
    return dm.generate_ring_maze(2, [1, 1], 70.0, 4.0, RING_SEED)


@pytest.fixture(scope="session")
def ring_fields(ring_maze):
    return dm.compute_fields(ring_maze)


@pytest.fixture(scope="session")
def ring_segmentation(ring_maze):
    return dm.segment_corridors(ring_maze)


@pytest.fixture(scope="session")
def ring_labels(ring_maze):
    return dm.lee_label(ring_maze)


@pytest.fixture(scope="session")
def ring_scenario():
    return run_scenario(ring_config())


def straight_channel_text(length_cells: int = 60, rows: int = 8, voltage: float = 5.0) -> str:
    wall = "#" * (length_cells + 2)
    body = []
    for r in range(rows):
        body.append("#S" + "." * (length_cells - 2) + "T#")
    return f"voltage = {voltage}\ncell_size_mm = 0.5\n\n" + "\n".join([wall] + body + [wall]) + "\n"


@pytest.fixture(scope="session")
def straight_maze():
    return dm.parse_maze(straight_channel_text())
