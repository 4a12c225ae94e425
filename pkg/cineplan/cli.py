"""Command line interface: ``cineplan run | sweep | check``."""

import argparse
import copy
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from cineplan import __version__
from cineplan.config import (
    SIMULATION_DEFAULTS,
    THREADS_ENV_VAR,
    WEIGHT_PRESETS,
    configure_logging,
    verbosity_to_level,
)
from cineplan.exceptions import ScenarioError
from cineplan.scenario import (
    apply_override,
    load_scenario,
    locate_line,
    parse_override,
    parse_scenario,
    read_scenario_document,
)
from cineplan.simulation import CSV_FLOAT_FORMAT, run
from cineplan.validation import run_checks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
# 2 and 3 are the run statuses of a simulation.
EXIT_INTERNAL = 4

SWEEP_AXES = ("config", "w1", "w2", "w3", "w4", "horizon")


@dataclass
class SweepSpec:
    """
    One parameter study: a base scenario run once per value of an axis.

    ``axis`` is ``config`` (weight preset names), one of ``w1``..``w4`` or
    ``horizon`` (seconds). Relative paths resolve against the sweep file.
    """

    base: Path
    axis: str
    values: List[Any]
    output: Path
    overrides: List[str] = field(default_factory=list)
    deterministic: bool = True

    @classmethod
    def load(cls, path: Path) -> "SweepSpec":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError(
                f"cannot read sweep: {exc.strerror or exc}", source=str(path)
            ) from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"invalid JSON: {exc.msg}", source=str(path), line=exc.lineno
            ) from None

        def fail(key: str, message: str) -> ScenarioError:
            return ScenarioError(message, key, str(path), locate_line(text, key))

        if not isinstance(data, dict):
            raise ScenarioError("sweep must be a JSON object", source=str(path))
        for key in ("base", "axis", "values"):
            if key not in data:
                raise fail(key, f"missing required field '{key}'")
        axis = data["axis"]
        if axis not in SWEEP_AXES:
            raise fail("axis", f"must be one of {list(SWEEP_AXES)}, got {axis!r}")
        values = data["values"]
        if not isinstance(values, list) or not values:
            raise fail("values", "expected a non-empty list")
        for i, value in enumerate(values):
            if axis == "config":
                if value not in WEIGHT_PRESETS:
                    raise fail(f"values.{i}", f"unknown weight preset {value!r}")
            elif isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                raise fail(f"values.{i}", f"expected a non-negative number, got {value!r}")
            elif axis == "horizon" and value <= 0:
                raise fail(f"values.{i}", "horizon must be positive")
        overrides = data.get("overrides", [])
        if not isinstance(overrides, list) or not all(isinstance(o, str) for o in overrides):
            raise fail("overrides", "expected a list of dotted.path=value strings")
        root = path.parent
        return cls(
            base=root / data["base"],
            axis=axis,
            values=values,
            output=root / data.get("output", f"out/{path.stem}"),
            overrides=overrides,
            deterministic=bool(data.get("deterministic", True)),
        )


def apply_axis(data: Dict[str, Any], axis: str, value: Any) -> Dict[str, Any]:
    """Copy of a scenario document with ``axis`` set to ``value`` on every UAV."""
    out = copy.deepcopy(data)
    dt = out.get("dt", SIMULATION_DEFAULTS.dt)
    for uav in out.get("uavs", []):
        if not isinstance(uav, dict):
            continue
        if axis == "config":
            uav["weights"] = value
        elif axis == "horizon":
            uav["horizon_steps"] = max(1, int(round(value / dt)))
        else:
            weights = uav.get("weights", out.get("weights"))
            if isinstance(weights, str):
                weights = {"preset": weights}
            weights = dict(weights or {})
            weights[axis] = value
            uav["weights"] = weights
    return out


def _sweep_child(job: Dict[str, Any]) -> Dict[str, Any]:
    """Run one sweep point in a worker process; never raises."""
    row: Dict[str, Any] = {"index": job["index"], "value": job["value"]}
    try:
        scenario = parse_scenario(job["data"], job["text"], job["source"], job["overridden"])
        result = run(scenario, deterministic=job["deterministic"])
        result.write(job["out_dir"])
        row["status"] = result.status.value
        row["exit_code"] = result.exit_code
        row.update(result.metrics.flat())
    except ScenarioError as exc:
        row.update(status="error", exit_code=EXIT_INPUT, error=exc.describe())
    except Exception as exc:  # noqa: BLE001
        logger.exception("Sweep point %s failed", job["value"])
        row.update(status="error", exit_code=EXIT_INTERNAL, error=repr(exc))
    return row


def check_horizons(spec: SweepSpec, data: Dict[str, Any], source: Optional[str] = None) -> None:
    """Reject horizon values shorter than one simulation step."""
    if spec.axis != "horizon":
        return
    dt = data.get("dt", SIMULATION_DEFAULTS.dt)
    if isinstance(dt, bool) or not isinstance(dt, (int, float)):
        return
    for i, value in enumerate(spec.values):
        if value < dt:
            raise ScenarioError(
                f"horizon {value} s is shorter than dt={dt} s", f"values.{i}", source
            )


def sweep_threads() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        threads = int(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r, not an integer", THREADS_ENV_VAR, raw)
        return 1
    return max(1, threads)


def cmd_run(
    scenario_path: str,
    out_dir: str,
    overrides: Sequence[str] = (),
    deterministic: bool = False,
) -> int:
    try:
        scenario = load_scenario(scenario_path, overrides)
    except ScenarioError as exc:
        print(f"error: {exc.describe()}", file=sys.stderr)
        return EXIT_INPUT
    result = run(scenario, deterministic=deterministic)
    try:
        result.write(out_dir)
    except OSError as exc:
        print(f"error: cannot write outputs to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    table = pd.DataFrame(result.metrics.uavs).T
    print(f"{scenario.name}: {result.status.value}")
    if not table.empty:
        print(table.to_string(float_format=lambda v: f"{v:.4g}"))
    if result.safety is not None:
        print(f"safety violation: {result.safety.to_dict()}", file=sys.stderr)
    return result.exit_code


def cmd_sweep(sweep_path: str, deterministic: Optional[bool] = None) -> int:
    try:
        spec = SweepSpec.load(Path(sweep_path))
        data, text = read_scenario_document(spec.base)
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object", source=str(spec.base))
        for assignment in spec.overrides:
            apply_override(data, *parse_override(assignment))
        check_horizons(spec, data, sweep_path)
    except ScenarioError as exc:
        print(f"error: {exc.describe()}", file=sys.stderr)
        return EXIT_INPUT
    det = spec.deterministic if deterministic is None else deterministic
    overridden = [parse_override(o)[0] for o in spec.overrides]
    axis_field = "horizon_steps" if spec.axis == "horizon" else "weights"
    axis_keys = [f"uavs.{i}.{axis_field}" for i in range(len(data.get("uavs", [])))]
    jobs = [
        {
            "index": i,
            "value": value,
            "data": apply_axis(data, spec.axis, value),
            "text": text,
            "source": str(spec.base),
            "overridden": overridden + axis_keys,
            "deterministic": det,
            "out_dir": str(spec.output / f"{i:02d}_{value}"),
        }
        for i, value in enumerate(spec.values)
    ]
    threads = min(sweep_threads(), len(jobs))
    logger.info("Sweeping %s over %d values with %d worker(s)", spec.axis, len(jobs), threads)

    rows: List[Dict[str, Any]] = []
    if threads == 1:
        rows = [_sweep_child(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_child, jobs))

    table = (
        pd.DataFrame(rows)
        .sort_values("index")
        .drop(columns="index")
        .rename(columns={"value": spec.axis})
    )
    try:
        spec.output.mkdir(parents=True, exist_ok=True)
        table.to_csv(spec.output / "sweep.csv", index=False, float_format=CSV_FLOAT_FORMAT)
    except OSError as exc:
        print(f"error: cannot write sweep table to {spec.output}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4g}"))
    failed = [int(code) for code in table["exit_code"] if int(code) != EXIT_OK]
    if failed:
        logger.warning("%d of %d sweep runs failed", len(failed), len(table))
        return max(failed)
    return EXIT_OK


def cmd_check() -> int:
    table = run_checks()
    print(table.to_string(index=False, float_format=lambda v: f"{v:.3e}"))
    return EXIT_OK if bool(table["passed"].all()) else EXIT_INPUT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cineplan",
        description="Plan, coordinate and simulate UAV cinematography shots.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="more logging (repeatable)"
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one scenario")
    run_p.add_argument("scenario", help="scenario JSON file")
    run_p.add_argument("-o", "--out", default="out", help="output directory (default: out)")
    run_p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="K=V",
        help="override a scenario field, e.g. weights.w2=10000 or uavs.0.horizon_steps=40",
    )
    run_p.add_argument(
        "--deterministic",
        action="store_true",
        help="no solver time caps and zero wall times, for byte-identical outputs",
    )

    sweep_p = sub.add_parser("sweep", help="run a parameter study")
    sweep_p.add_argument("spec", help="sweep JSON file")
    sweep_p.add_argument("--deterministic", action="store_true", default=None)

    sub.add_parser("check", help="run the built-in validation suite")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(verbosity_to_level(args.verbose, args.quiet))
    if args.command == "run":
        return cmd_run(args.scenario, args.out, args.overrides, args.deterministic)
    if args.command == "sweep":
        return cmd_sweep(args.spec, args.deterministic)
    return cmd_check()


if __name__ == "__main__":
    sys.exit(main())
