"""Shared fixtures: small scenario documents and canned planning problems."""

import copy
import json
from pathlib import Path

import pytest

from cineplan.validation import canned_problem

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"
SWEEP_DIR = REPO_ROOT / "sweeps"

# Static target, one UAV starting on its chase pose.
HOVER_SCENARIO = {
    "schema_version": 1,
    "name": "hover",
    "duration": 2.0,
    "dt": 0.1,
    "target": {"motion": "straight", "position": [0.0, 0.0, 0.0], "velocity": [0.0, 0.0, 0.0]},
    "bounds": {"theta": [-1.5708, -0.2]},
    "uavs": [
        {
            "id": "uav1",
            "priority": 1,
            "position": [-2.0, 0.0, 3.5],
            "velocity": [0.0, 0.0, 0.0],
            "horizon_steps": 10,
            "planner_rate": 1.0,
            "shots": [{"kind": "chase", "duration": 2.0, "altitude": 3.5, "distance": 2.0}],
        }
    ],
}

# Target moving along +x, one UAV filming it from the left.
LATERAL_SCENARIO = {
    "schema_version": 1,
    "name": "lateral_small",
    "duration": 2.0,
    "dt": 0.1,
    "target": {"motion": "straight", "position": [0.0, 0.0, 0.0], "velocity": [1.0, 0.0, 0.0]},
    "uavs": [
        {
            "id": "uav1",
            "priority": 1,
            "position": [0.0, 5.0, 3.0],
            "velocity": [1.0, 0.0, 0.0],
            "horizon_steps": 10,
            "planner_rate": 2.0,
            "solver": {"max_wall_time": None},
            "shots": [
                {
                    "kind": "lateral",
                    "duration": 2.0,
                    "altitude": 3.0,
                    "distance": 5.0,
                    "side": "left",
                }
            ],
        }
    ],
}


@pytest.fixture
def hover_data():
    return copy.deepcopy(HOVER_SCENARIO)


@pytest.fixture
def lateral_data():
    return copy.deepcopy(LATERAL_SCENARIO)


@pytest.fixture
def write_json(tmp_path):
    """Write a document under tmp_path and return its path."""

    def _write(data, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data, indent=2))
        return path

    return _write


@pytest.fixture(scope="module")
def canned_nlp():
    return canned_problem()
