"""
Scenario files: loading, ``--set`` overrides and validation.

A scenario is a JSON document (``schema_version`` 1) describing the world,
the target motion and the UAV team. Top-level ``weights``, ``bounds`` and
``solver`` entries are defaults that each UAV may override key by key.
Validation errors are reported with the JSON path of the offending field
and, when the field comes from the file, its line.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from cineplan.config import (
    DEFAULT_ZONE_MARGIN,
    SIMULATION_DEFAULTS,
    SOLVER_DEFAULTS,
    WEIGHT_PRESETS,
    PlannerBounds,
    PlannerWeights,
)
from cineplan.coordination import AgentConfig, UavAgent
from cineplan.dynamics import UavState
from cineplan.exceptions import ScenarioError
from cineplan.shots import ShotSpec, ShotType, TargetPath, eight_path
from cineplan.zones import CircleZone, NoFlyZone, PolygonZone

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_MISSING = object()
_WHITESPACE = re.compile(r"[ \t\n\r]*")


# --------------------------------------------------------------------------
# Line lookup
# --------------------------------------------------------------------------


def _skip(text: str, idx: int) -> int:
    return _WHITESPACE.match(text, idx).end()


def locate_line(text: str, path: str) -> Optional[int]:
    """
    1-based line of the deepest element of dotted ``path`` found in ``text``.

    Returns None when not even the first component is present.
    """
    decoder = json.JSONDecoder()
    idx = _skip(text, 0)
    found = None
    try:
        for part in path.split("."):
            if text[idx] == "{":
                idx = _skip(text, idx + 1)
                hit = None
                while text[idx] != "}":
                    key, end = decoder.raw_decode(text, idx)
                    key_pos = idx
                    idx = _skip(text, _skip(text, end) + 1)
                    if key == part:
                        hit = key_pos
                        break
                    _, end = decoder.raw_decode(text, idx)
                    idx = _skip(text, end)
                    if text[idx] == ",":
                        idx = _skip(text, idx + 1)
                if hit is None:
                    break
                found = hit
            elif text[idx] == "[" and part.isdigit():
                idx = _skip(text, idx + 1)
                for _ in range(int(part)):
                    _, end = decoder.raw_decode(text, idx)
                    idx = _skip(text, end)
                    if text[idx] != ",":
                        raise IndexError(part)
                    idx = _skip(text, idx + 1)
                if text[idx] == "]":
                    break
                found = idx
            else:
                break
    except (ValueError, IndexError):
        pass
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


# --------------------------------------------------------------------------
# Overrides
# --------------------------------------------------------------------------


def parse_override(assignment: str) -> Tuple[str, Any]:
    """Split ``dotted.path=value``; the value is JSON with a plain-string fallback."""
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ScenarioError(f"override must look like dotted.path=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_override(data: Dict[str, Any], path: str, value: Any) -> None:
    """Set ``path`` in the parsed scenario; integer parts index lists."""
    parts = path.split(".")
    node = data
    for depth, part in enumerate(parts):
        last = depth == len(parts) - 1
        where = ".".join(parts[: depth + 1])
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise ScenarioError("list index out of range in override", where, "--set")
            if last:
                node[int(part)] = value
            else:
                node = node[int(part)]
        elif isinstance(node, dict):
            if last:
                node[part] = value
            else:
                node = node.setdefault(part, {})
        else:
            raise ScenarioError("cannot descend into a scalar", where, "--set")


# --------------------------------------------------------------------------
# Scenario types
# --------------------------------------------------------------------------


class TargetMotion:
    STRAIGHT = "straight"
    PATH = "path"
    EIGHT = "eight"


@dataclass
class TargetSpec:
    """
    Ground-truth motion of the filmed target.

    ``straight`` moves at constant velocity from ``position``. ``path`` and
    ``eight`` advance along a course at constant ``speed``; with
    ``known_course`` the planners predict along that course, otherwise they
    extrapolate the measured velocity.
    """

    motion: str
    position: np.ndarray
    velocity: np.ndarray
    path: Optional[TargetPath] = None
    speed: float = 0.0
    start_arc: float = 0.0
    known_course: bool = True
    noise_std: float = 0.0
    obstacle_radius: Optional[float] = None

    def state_at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        if self.path is None:
            return self.position + t * self.velocity, self.velocity.copy()
        s = self.start_arc + self.speed * t
        if not self.path.closed and s >= self.path.length:
            return self.path.point(self.path.length), np.zeros(3)
        return self.path.point(s), self.speed * self.path.tangent(s)


@dataclass
class SolverSettings:
    # "auto" caps each solve at a fraction of the planning period; None disables the cap.
    max_wall_time: Union[str, float, None] = "auto"
    max_iterations: int = SOLVER_DEFAULTS.max_iterations
    feasibility_tol: float = SOLVER_DEFAULTS.feasibility_tol
    optimality_tol: float = SOLVER_DEFAULTS.optimality_tol

    def wall_time_cap(self, planner_rate: float) -> Optional[float]:
        if self.max_wall_time == "auto":
            return SOLVER_DEFAULTS.wall_time_fraction / planner_rate
        return self.max_wall_time


@dataclass
class UavSpec:
    uav_id: str
    priority: int
    initial: UavState
    shots: List[ShotSpec]
    horizon_steps: int
    planner_rate: float
    weights: PlannerWeights
    bounds: PlannerBounds
    solver: SolverSettings
    visibility: bool = True


@dataclass
class Scenario:
    """Validated scenario; see :func:`parse_scenario` for the file layout."""

    name: str
    duration: float
    dt: float
    uavs: List[UavSpec]
    target: TargetSpec
    nofly: List[NoFlyZone] = field(default_factory=list)
    bus_delay: float = 0.0
    seed: int = 0
    velocity_lag: float = SIMULATION_DEFAULTS.velocity_lag
    look_ahead: float = SIMULATION_DEFAULTS.look_ahead
    k_omega: float = SIMULATION_DEFAULTS.k_omega
    gimbal_rate: float = SIMULATION_DEFAULTS.gimbal_rate
    source: Optional[str] = None

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def period_steps(self, rate: float) -> int:
        return int(round(1.0 / (rate * self.dt)))

    def uav(self, uav_id: str) -> UavSpec:
        for spec in self.uavs:
            if spec.uav_id == uav_id:
                return spec
        raise KeyError(uav_id)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


class _Reader:
    """Typed field access that reports failures against the source text."""

    def __init__(self, text: Optional[str], source: Optional[str], overridden: Sequence[str]):
        self.text = text
        self.source = source
        self.overridden = list(overridden)

    def fail(self, path: str, message: str) -> ScenarioError:
        for key in self.overridden:
            if path == key or path.startswith(key + "."):
                return ScenarioError(message, path, f"--set {key}")
        line = locate_line(self.text, path) if self.text is not None else None
        return ScenarioError(message, path, self.source, line)

    def get(self, obj: Dict[str, Any], key: str, path: str, default: Any = _MISSING) -> Any:
        if key not in obj:
            if default is _MISSING:
                raise self.fail(path or key, f"missing required field '{key}'")
            return default
        return obj[key]

    def number(
        self, obj, key, path, default: Any = _MISSING, positive=False, minimum=None
    ) -> float:
        value = self.get(obj, key, path, default)
        where = f"{path}.{key}" if path else key
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail(where, f"expected a finite number, got {value!r}")
        if not math.isfinite(value):
            raise self.fail(where, f"expected a finite number, got {value!r}")
        if positive and not value > 0:
            raise self.fail(where, f"must be positive, got {value}")
        if minimum is not None and value < minimum:
            raise self.fail(where, f"must be >= {minimum}, got {value}")
        return float(value)

    def integer(self, obj, key, path, default: Any = _MISSING, minimum=None) -> int:
        value = self.get(obj, key, path, default)
        where = f"{path}.{key}" if path else key
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(where, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.fail(where, f"must be >= {minimum}, got {value}")
        return value

    def boolean(self, obj, key, path, default: Any = _MISSING) -> bool:
        value = self.get(obj, key, path, default)
        if not isinstance(value, bool):
            where = f"{path}.{key}" if path else key
            raise self.fail(where, f"expected true or false, got {value!r}")
        return value

    def string(self, obj, key, path, default: Any = _MISSING, choices=None) -> str:
        value = self.get(obj, key, path, default)
        where = f"{path}.{key}" if path else key
        if not isinstance(value, str):
            raise self.fail(where, f"expected a string, got {value!r}")
        if choices is not None and value not in choices:
            raise self.fail(where, f"must be one of {sorted(choices)}, got {value!r}")
        return value

    def vector(self, obj, key, path, size: int, default: Any = _MISSING) -> Optional[np.ndarray]:
        value = self.get(obj, key, path, default)
        where = f"{path}.{key}" if path else key
        if value is None and default is None:
            return None
        if (
            not isinstance(value, list)
            or len(value) != size
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
            or not all(math.isfinite(x) for x in value)
        ):
            raise self.fail(where, f"expected a list of {size} finite numbers, got {value!r}")
        return np.asarray(value, dtype=float)

    def points(self, obj, key, path) -> np.ndarray:
        value = self.get(obj, key, path)
        where = f"{path}.{key}"
        if not isinstance(value, list) or len(value) < 2:
            raise self.fail(where, "expected a list of at least two points")
        rows = []
        for i, point in enumerate(value):
            size = len(point) if isinstance(point, list) and len(point) == 3 else 2
            rows.append(self.vector({str(i): point}, str(i), where, size)[:2])
        return np.vstack(rows)

    def mapping(self, obj, key, path, default: Any = _MISSING) -> Dict[str, Any]:
        value = self.get(obj, key, path, default)
        if not isinstance(value, dict):
            raise self.fail(f"{path}.{key}" if path else key, f"expected an object, got {value!r}")
        return value


def _merged(defaults: Any, override: Any) -> Any:
    if isinstance(defaults, dict) and isinstance(override, dict):
        return {**defaults, **override}
    return override if override is not None else defaults


def _parse_weights(reader: _Reader, raw: Any, path: str) -> PlannerWeights:
    if raw is None:
        return PlannerWeights()
    if isinstance(raw, str):
        if raw not in WEIGHT_PRESETS:
            known = sorted(WEIGHT_PRESETS)
            raise reader.fail(path, f"unknown weight preset {raw!r}; known: {known}")
        return WEIGHT_PRESETS[raw]
    if not isinstance(raw, dict):
        raise reader.fail(path, "weights must be a preset name or an object")
    unknown = set(raw) - {"preset", "w1", "w2", "w3", "w4"}
    if unknown:
        raise reader.fail(path, f"unknown weight keys {sorted(unknown)}")
    base = PlannerWeights().as_dict()
    if "preset" in raw:
        preset = reader.string(raw, "preset", path, choices=set(WEIGHT_PRESETS))
        base = WEIGHT_PRESETS[preset].as_dict()
    values = {k: reader.number(raw, k, path, default=base[k], minimum=0.0) for k in base}
    try:
        return PlannerWeights(**values)
    except ValueError as exc:
        raise reader.fail(path, str(exc)) from None


def _parse_bounds(reader: _Reader, raw: Any, path: str) -> PlannerBounds:
    if raw is None:
        return PlannerBounds()
    if not isinstance(raw, dict):
        raise reader.fail(path, "bounds must be an object")
    defaults = PlannerBounds()
    kwargs: Dict[str, Any] = {}
    for key in ("v_min", "v_max", "u_min", "u_max"):
        kwargs[key] = tuple(reader.vector(raw, key, path, 3, default=list(getattr(defaults, key))))
    for key in ("theta", "psi"):
        value = raw.get(key, _MISSING)
        if value is _MISSING:
            kwargs[key] = getattr(defaults, key)
        elif value is None:
            kwargs[key] = None
        else:
            kwargs[key] = tuple(reader.vector(raw, key, path, 2))
    kwargs["alpha"] = reader.number(raw, "alpha", path, default=defaults.alpha, positive=True)
    kwargs["r_col"] = reader.number(raw, "r_col", path, default=defaults.r_col, positive=True)
    try:
        return PlannerBounds(**kwargs)
    except ValueError as exc:
        raise reader.fail(path, str(exc)) from None


def _parse_solver(reader: _Reader, raw: Any, path: str) -> SolverSettings:
    if raw is None:
        return SolverSettings()
    if not isinstance(raw, dict):
        raise reader.fail(path, "solver must be an object")
    cap = raw.get("max_wall_time", "auto")
    if cap != "auto" and cap is not None:
        cap = reader.number(raw, "max_wall_time", path, positive=True)
    defaults = SOLVER_DEFAULTS
    return SolverSettings(
        max_wall_time=cap,
        max_iterations=reader.integer(
            raw, "max_iterations", path, defaults.max_iterations, minimum=1
        ),
        feasibility_tol=reader.number(
            raw, "feasibility_tol", path, defaults.feasibility_tol, positive=True
        ),
        optimality_tol=reader.number(
            raw, "optimality_tol", path, defaults.optimality_tol, positive=True
        ),
    )


def _parse_shots(reader: _Reader, raw: Any, path: str) -> List[ShotSpec]:
    if not isinstance(raw, list) or not raw:
        raise reader.fail(path, "expected a non-empty list of shots")
    shots, clock = [], 0.0
    for i, item in enumerate(raw):
        where = f"{path}.{i}"
        if not isinstance(item, dict):
            raise reader.fail(where, "shot must be an object")
        kind = reader.string(item, "kind", where, choices={k.value for k in ShotType})
        side = item.get("side", 1)
        if side in ("left", "right"):
            side = 1 if side == "left" else -1
        # Shots without a start time follow the previous one.
        start = reader.number(item, "start_time", where, default=clock, minimum=0.0)
        try:
            shot = ShotSpec(
                kind=ShotType(kind),
                duration=reader.number(item, "duration", where),
                altitude=reader.number(item, "altitude", where),
                distance=reader.number(item, "distance", where, 0.0),
                side=side,
                behind=reader.number(item, "behind", where, 0.0),
                ahead=reader.number(item, "ahead", where, 0.0),
                radius=reader.number(item, "radius", where, 0.0),
                start_azimuth=reader.number(item, "start_azimuth", where, math.pi),
                start_time=start,
            )
        except ValueError as exc:
            raise reader.fail(where, str(exc)) from None
        shots.append(shot)
        clock = shot.end_time
    return shots


def _parse_zones(reader: _Reader, raw: Any) -> List[NoFlyZone]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise reader.fail("nofly", "expected a list of zones")
    zones: List[NoFlyZone] = []
    for i, item in enumerate(raw):
        where = f"nofly.{i}"
        if not isinstance(item, dict):
            raise reader.fail(where, "zone must be an object")
        kind = reader.string(item, "type", where, choices={"circle", "polygon"})
        margin = reader.number(item, "margin", where, DEFAULT_ZONE_MARGIN, minimum=0.0)
        try:
            if kind == "circle":
                zones.append(
                    CircleZone(
                        reader.vector(item, "center", where, 2),
                        reader.number(item, "radius", where, positive=True),
                        margin,
                    )
                )
            else:
                zones.append(PolygonZone(reader.points(item, "vertices", where), margin))
        except ValueError as exc:
            raise reader.fail(where, str(exc)) from None
    return zones


def _parse_target(reader: _Reader, raw: Any) -> TargetSpec:
    if not isinstance(raw, dict):
        raise reader.fail("target", "expected an object")
    motion = reader.string(
        raw, "motion", "target", TargetMotion.STRAIGHT,
        choices={TargetMotion.STRAIGHT, TargetMotion.PATH, TargetMotion.EIGHT},
    )
    noise = reader.number(raw, "noise_std", "target", 0.0, minimum=0.0)
    obstacle = reader.number(raw, "obstacle_radius", "target", None)
    if obstacle is not None and not obstacle > 0:
        raise reader.fail("target.obstacle_radius", "must be positive or null")
    known = reader.boolean(raw, "known_course", "target", True)

    if motion == TargetMotion.STRAIGHT:
        position = reader.vector(raw, "position", "target", 3)
        velocity = reader.vector(raw, "velocity", "target", 3, default=[0.0, 0.0, 0.0])
        return TargetSpec(motion, position, velocity, noise_std=noise, obstacle_radius=obstacle)

    speed = reader.number(raw, "speed", "target", positive=True)
    height = reader.number(raw, "height", "target", 0.0)
    if motion == TargetMotion.EIGHT:
        center = reader.vector(raw, "center", "target", 2, default=[0.0, 0.0])
        scale = reader.number(raw, "scale", "target", positive=True)
        path, speed = eight_path(scale, speed, center, height)
    else:
        try:
            path = TargetPath(
                reader.points(raw, "path", "target"),
                height=height,
                closed=reader.boolean(raw, "closed", "target", False),
            )
        except ValueError as exc:
            raise reader.fail("target.path", str(exc)) from None
    start_arc = reader.number(raw, "start_arc", "target", 0.0, minimum=0.0)
    if known and noise > 0.15:
        # Measurements must stay within 1 m of the course the planners predict along.
        raise reader.fail("target.noise_std", "must be <= 0.15 m when the course is known")
    spec = TargetSpec(
        motion,
        np.zeros(3),
        np.zeros(3),
        path=path,
        speed=speed,
        start_arc=start_arc,
        known_course=known,
        noise_std=noise,
        obstacle_radius=obstacle,
    )
    spec.position, spec.velocity = spec.state_at(0.0)
    return spec


def _divides(rate: float, dt: float) -> bool:
    steps = 1.0 / (rate * dt)
    return steps >= 1.0 - 1e-9 and abs(steps - round(steps)) < 1e-6


def parse_scenario(
    data: Any,
    text: Optional[str] = None,
    source: Optional[str] = None,
    overridden: Sequence[str] = (),
) -> Scenario:
    """
    Validate a parsed scenario document.

    Args:
        data: Parsed JSON
        text: Raw file text, used to anchor errors to lines
        source: File name shown in errors
        overridden: Dotted paths changed by ``--set``

    Raises:
        ScenarioError: On the first invalid field
    """
    reader = _Reader(text, source, overridden)
    if not isinstance(data, dict):
        raise reader.fail("", "scenario must be a JSON object")
    version = reader.integer(data, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise reader.fail(
            "schema_version",
            f"unsupported schema_version {version}, expected {SCHEMA_VERSION}",
        )

    dt = reader.number(data, "dt", "", SIMULATION_DEFAULTS.dt, positive=True)
    duration = reader.number(data, "duration", "", positive=True)
    sim = reader.mapping(data, "simulation", "", {})
    defaults = SIMULATION_DEFAULTS
    gimbal_rate = reader.number(
        sim, "gimbal_rate", "simulation", defaults.gimbal_rate, positive=True
    )
    if not _divides(gimbal_rate, dt):
        raise reader.fail(
            "simulation.gimbal_rate", f"period must be a whole number of dt={dt} steps"
        )

    target = _parse_target(reader, reader.get(data, "target", ""))
    nofly = _parse_zones(reader, data.get("nofly"))
    default_weights = data.get("weights")
    default_bounds = data.get("bounds")
    default_solver = data.get("solver")

    raw_uavs = reader.get(data, "uavs", "")
    if not isinstance(raw_uavs, list) or not raw_uavs:
        raise reader.fail("uavs", "expected a non-empty list of UAVs")
    uavs: List[UavSpec] = []
    for i, item in enumerate(raw_uavs):
        where = f"uavs.{i}"
        if not isinstance(item, dict):
            raise reader.fail(where, "UAV must be an object")
        uav_id = reader.string(item, "id", where)
        if any(u.uav_id == uav_id for u in uavs):
            raise reader.fail(f"{where}.id", f"duplicate UAV id {uav_id!r}")
        priority = reader.integer(item, "priority", where, minimum=1)
        if any(u.priority == priority for u in uavs):
            raise reader.fail(f"{where}.priority", f"duplicate priority {priority}")
        rate = reader.number(item, "planner_rate", where, positive=True)
        if not _divides(rate, dt):
            raise reader.fail(
                f"{where}.planner_rate", f"period must be a whole number of dt={dt} steps"
            )
        initial = UavState(
            reader.vector(item, "position", where, 3),
            reader.vector(item, "velocity", where, 3, default=[0.0, 0.0, 0.0]),
        )
        uavs.append(
            UavSpec(
                uav_id=uav_id,
                priority=priority,
                initial=initial,
                shots=_parse_shots(reader, reader.get(item, "shots", where), f"{where}.shots"),
                horizon_steps=reader.integer(item, "horizon_steps", where, minimum=1),
                planner_rate=rate,
                weights=_parse_weights(
                    reader, _merged(default_weights, item.get("weights")), f"{where}.weights"
                ),
                bounds=_parse_bounds(
                    reader, _merged(default_bounds, item.get("bounds")), f"{where}.bounds"
                ),
                solver=_parse_solver(
                    reader, _merged(default_solver, item.get("solver")), f"{where}.solver"
                ),
                visibility=reader.boolean(item, "visibility", where, True),
            )
        )

    return Scenario(
        name=reader.string(data, "name", "", Path(source).stem if source else "scenario"),
        duration=duration,
        dt=dt,
        uavs=uavs,
        target=target,
        nofly=nofly,
        bus_delay=reader.number(data, "bus_delay", "", 0.0, minimum=0.0),
        seed=reader.integer(data, "seed", "", 0, minimum=0),
        velocity_lag=reader.number(
            sim, "velocity_lag", "simulation", defaults.velocity_lag, positive=True
        ),
        look_ahead=reader.number(
            sim, "look_ahead", "simulation", defaults.look_ahead, positive=True
        ),
        k_omega=reader.number(sim, "k_omega", "simulation", defaults.k_omega, positive=True),
        gimbal_rate=gimbal_rate,
        source=source,
    )


def read_scenario_document(path: Union[str, Path]) -> Tuple[Dict[str, Any], str]:
    """Raw JSON document and its text; unreadable or malformed files raise ScenarioError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(
            f"cannot read scenario: {exc.strerror or exc}", source=str(path)
        ) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", source=str(path), line=exc.lineno) from None
    return data, text


def load_scenario(path: Union[str, Path], overrides: Sequence[str] = ()) -> Scenario:
    """
    Read, override and validate a scenario file.

    Args:
        path: Scenario JSON file
        overrides: ``dotted.path=value`` assignments applied before validation
    """
    data, text = read_scenario_document(path)
    keys = []
    for assignment in overrides:
        key, value = parse_override(assignment)
        apply_override(data, key, value)
        keys.append(key)
        logger.info("Override %s = %r", key, value)
    return parse_scenario(data, text, str(path), keys)


def build_agents(scenario: Scenario, deterministic: bool = False) -> List[UavAgent]:
    """Planning agents of the team; ``deterministic`` drops every solver time cap."""
    agents = []
    for spec in scenario.uavs:
        cap = None if deterministic else spec.solver.wall_time_cap(spec.planner_rate)
        config = AgentConfig(
            uav_id=spec.uav_id,
            priority=spec.priority,
            shots=spec.shots,
            horizon_steps=spec.horizon_steps,
            planner_rate=spec.planner_rate,
            weights=spec.weights,
            bounds=spec.bounds,
            visibility=spec.visibility,
            max_wall_time=cap,
            max_iterations=spec.solver.max_iterations,
            feasibility_tol=spec.solver.feasibility_tol,
            optimality_tol=spec.solver.optimality_tol,
        )
        agents.append(UavAgent(config))
    return agents
