"""Run configuration: JSON documents validated with voluptuous schemas."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import voluptuous as vol

from .const import (DEFAULT_ARENA, DEFAULT_C_BIRTH, DEFAULT_C_COLL,
                    DEFAULT_C_MISS, DEFAULT_CLUTTER_RATE, DEFAULT_DELTA_A,
                    DEFAULT_DELTA_MIN, DEFAULT_EPS_3D, DEFAULT_EPS_H,
                    DEFAULT_EPS_PHI, DEFAULT_EPS_Z, DEFAULT_FPS,
                    DEFAULT_I_BLS_MAX, DEFAULT_K_H, DEFAULT_L_C,
                    DEFAULT_MATCH_THRESHOLD,
                    DEFAULT_MAX_STALE_KICKS, DEFAULT_N_CAMERAS,
                    DEFAULT_N_FRAMES, DEFAULT_N_TARGETS, DEFAULT_NOISE_PX,
                    DEFAULT_OMEGA_S_COEFF, DEFAULT_P_MISS,
                    DEFAULT_SLAM_LANDMARKS, DEFAULT_SLAM_N_ITER,
                    DEFAULT_SLAM_RADIUS, DEFAULT_SLAM_RUNS,
                    DEFAULT_SLAM_SIGMA_MEAS, DEFAULT_SLAM_SIGMA_PHI,
                    DEFAULT_SLAM_SIGMA_XY, DEFAULT_SLAM_STEPS,
                    DEFAULT_SWEEP_FRAMES, DEFAULT_SWEEP_I_BLS_MAX,
                    DEFAULT_SWEEP_K_H, DEFAULT_SWEEP_SEEDS, DEFAULT_THETA_S,
                    DEFAULT_V_MAX, DEFAULT_V_MAX_SIM, DENSITY_PRESETS,
                    MIN_WAYPOINT_DISTANCE)
from .errors import ConfigError, PanotrackError
from .scenario_sim import ScenarioConfig
from .slam_demo import SlamDemoConfig
from .tracks import TrackerParams

_LOGGER = logging.getLogger(__name__)


def _positive(kind: type) -> vol.All:
    return vol.All(vol.Coerce(kind), vol.Range(min=0, min_included=False))


def _non_negative(kind: type) -> vol.All:
    return vol.All(vol.Coerce(kind), vol.Range(min=0))


def _at_least_one() -> vol.All:
    return vol.All(vol.Coerce(int), vol.Range(min=1))


TRACKER_SCHEMA = vol.Schema(
    {
        vol.Optional("l_c", default=DEFAULT_L_C): _at_least_one(),
        vol.Optional("delta_min", default=DEFAULT_DELTA_MIN): _positive(float),
        vol.Optional("eps_phi", default=DEFAULT_EPS_PHI): _positive(float),
        vol.Optional("eps_h", default=DEFAULT_EPS_H): _positive(float),
        vol.Optional("omega_s_coeff", default=DEFAULT_OMEGA_S_COEFF): _positive(float),
        vol.Optional("theta_s", default=DEFAULT_THETA_S): _positive(float),
        vol.Optional("eps_3d", default=DEFAULT_EPS_3D): _positive(float),
        vol.Optional("eps_z", default=DEFAULT_EPS_Z): _positive(float),
        vol.Optional("v_max", default=DEFAULT_V_MAX): _positive(float),
        vol.Optional("delta_a", default=DEFAULT_DELTA_A): _at_least_one(),
        vol.Optional("k_h", default=DEFAULT_K_H): _at_least_one(),
        vol.Optional("i_bls_max", default=DEFAULT_I_BLS_MAX): _non_negative(int),
        vol.Optional("fps", default=DEFAULT_FPS): _positive(float),
        vol.Optional("c_miss", default=DEFAULT_C_MISS): _non_negative(float),
        vol.Optional("c_birth", default=DEFAULT_C_BIRTH): _non_negative(float),
        vol.Optional("c_coll", default=DEFAULT_C_COLL): _non_negative(float),
        vol.Optional("max_stale_kicks", default=DEFAULT_MAX_STALE_KICKS): _at_least_one(),
    },
    extra=vol.PREVENT_EXTRA,
)

SCENARIO_SCHEMA = vol.Schema(
    {
        vol.Optional("n_targets", default=DEFAULT_N_TARGETS): _at_least_one(),
        vol.Optional("density"): vol.In(sorted(DENSITY_PRESETS)),
        vol.Optional("n_frames", default=DEFAULT_N_FRAMES): _at_least_one(),
        vol.Optional("n_cameras", default=DEFAULT_N_CAMERAS): _at_least_one(),
        vol.Optional("arena", default=list(DEFAULT_ARENA)): vol.All(
            [vol.All(vol.Coerce(float), vol.Range(min=2.0 * MIN_WAYPOINT_DISTANCE))],
            vol.Length(min=2, max=2),
        ),
        vol.Optional("fps", default=DEFAULT_FPS): _positive(float),
        vol.Optional("v_max_sim", default=DEFAULT_V_MAX_SIM): _non_negative(float),
        vol.Optional("noise_px", default=DEFAULT_NOISE_PX): _non_negative(float),
        vol.Optional("p_miss", default=DEFAULT_P_MISS): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, max=1.0)
        ),
        vol.Optional("clutter_rate", default=DEFAULT_CLUTTER_RATE): _non_negative(float),
    },
    extra=vol.PREVENT_EXTRA,
)

SWEEP_SCHEMA = vol.Schema(
    {
        vol.Optional("k_h", default=list(DEFAULT_SWEEP_K_H)): vol.All(
            [_at_least_one()], vol.Length(min=1)
        ),
        vol.Optional("i_bls_max", default=list(DEFAULT_SWEEP_I_BLS_MAX)): vol.All(
            [_non_negative(int)], vol.Length(min=1)
        ),
        vol.Optional("seeds", default=DEFAULT_SWEEP_SEEDS): _at_least_one(),
        vol.Optional("n_frames", default=DEFAULT_SWEEP_FRAMES): _at_least_one(),
    },
    extra=vol.PREVENT_EXTRA,
)

SLAM_SCHEMA = vol.Schema(
    {
        vol.Optional("n_steps", default=DEFAULT_SLAM_STEPS): _at_least_one(),
        vol.Optional("n_landmarks", default=DEFAULT_SLAM_LANDMARKS): _at_least_one(),
        vol.Optional("radius", default=DEFAULT_SLAM_RADIUS): _positive(float),
        vol.Optional("sigma_xy", default=DEFAULT_SLAM_SIGMA_XY): _non_negative(float),
        vol.Optional("sigma_phi", default=DEFAULT_SLAM_SIGMA_PHI): _non_negative(float),
        vol.Optional("sigma_meas", default=DEFAULT_SLAM_SIGMA_MEAS): _non_negative(float),
        vol.Optional("n_iter", default=DEFAULT_SLAM_N_ITER): _at_least_one(),
        vol.Optional("w_bias", default=[0.0, 0.0]): vol.All(
            [vol.Coerce(float)], vol.Length(min=2, max=2)
        ),
        vol.Optional("runs", default=DEFAULT_SLAM_RUNS): _at_least_one(),
    },
    extra=vol.PREVENT_EXTRA,
)

RUN_SCHEMA = vol.Schema(
    {
        vol.Optional("tracker", default={}): TRACKER_SCHEMA,
        vol.Optional("scenario", default={}): SCENARIO_SCHEMA,
        vol.Optional("threshold", default=DEFAULT_MATCH_THRESHOLD): _positive(float),
        vol.Optional("output_dir", default="."): vol.All(str, vol.Length(min=1)),
        vol.Optional("seed", default=0): _non_negative(int),
        vol.Optional("sweep", default={}): SWEEP_SCHEMA,
        vol.Optional("slam", default={}): SLAM_SCHEMA,
    },
    extra=vol.PREVENT_EXTRA,
)


@dataclass(frozen=True)
class SweepSpec:
    """Parameter grid of the hypothesis-budget sweep."""

    k_h: tuple[int, ...] = DEFAULT_SWEEP_K_H
    i_bls_max: tuple[int, ...] = DEFAULT_SWEEP_I_BLS_MAX
    seeds: int = DEFAULT_SWEEP_SEEDS
    n_frames: int = DEFAULT_SWEEP_FRAMES

    def __post_init__(self) -> None:
        if not self.k_h or not self.i_bls_max:
            raise ConfigError("grid lists must not be empty", key="sweep")
        if self.seeds < 1:
            raise ConfigError("must be at least 1", key="sweep.seeds")

    @property
    def n_cells(self) -> int:
        return len(self.k_h) * len(self.i_bls_max)


@dataclass(frozen=True)
class RunConfig:
    tracker: TrackerParams = field(default_factory=TrackerParams)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    threshold: float = DEFAULT_MATCH_THRESHOLD
    output_dir: Path = Path(".")
    seed: int = 0
    sweep: SweepSpec = field(default_factory=SweepSpec)
    slam: SlamDemoConfig = field(default_factory=SlamDemoConfig)
    jobs: int = 1

    def with_overrides(
        self,
        seed: int | None = None,
        output_dir: str | Path | None = None,
        threshold: float | None = None,
        jobs: int | None = None,
    ) -> RunConfig:
        """Apply command-line overrides on top of the file values."""
        config = self
        if seed is not None:
            if seed < 0:
                raise ConfigError("must not be negative", key="seed")
            config = replace(config, seed=seed, scenario=replace(config.scenario, seed=seed))
        if output_dir is not None:
            config = replace(config, output_dir=Path(output_dir))
        if threshold is not None:
            if not threshold > 0:
                raise ConfigError("must be positive", key="threshold")
            config = replace(config, threshold=threshold)
        if jobs is not None:
            if jobs < 1:
                raise ConfigError("must be at least 1", key="jobs")
            config = replace(config, jobs=jobs)
        return config


def _line_of(text: str, path: list[Any]) -> int | None:
    """1-based line where the last key of ``path`` appears, following its parents."""
    position = 0
    found = None
    for part in path:
        if not isinstance(part, str):
            continue
        match = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, position)
        if match is None:
            break
        position = match.end()
        found = match.start()
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


def from_dict(data: dict, source: str = "<config>", text: str = "") -> RunConfig:
    """Validate a parsed document and build the typed config.

    Raises:
        ConfigError: Naming the source, line and dotted key of the first problem.
    """
    try:
        valid = RUN_SCHEMA(data)
    except vol.MultipleInvalid as ex:
        error = ex.errors[0]
        key = ".".join(str(part) for part in error.path)
        raise ConfigError(error.msg, path=source, line=_line_of(text, error.path), key=key) from ex
    except vol.Invalid as ex:
        key = ".".join(str(part) for part in ex.path)
        raise ConfigError(ex.msg, path=source, line=_line_of(text, ex.path), key=key) from ex

    seed = valid["seed"]
    scenario = dict(valid["scenario"])
    density = scenario.pop("density", None)
    scenario["arena"] = tuple(scenario["arena"])
    slam = dict(valid["slam"])
    slam["w_bias"] = tuple(slam["w_bias"])
    sweep = valid["sweep"]
    try:
        scenario_config = (
            ScenarioConfig.for_density(density, **scenario, seed=seed)
            if density is not None
            else ScenarioConfig(**scenario, seed=seed)
        )
        config = RunConfig(
            tracker=TrackerParams(**valid["tracker"]),
            scenario=scenario_config,
            threshold=valid["threshold"],
            output_dir=Path(valid["output_dir"]),
            seed=seed,
            sweep=SweepSpec(
                k_h=tuple(sweep["k_h"]),
                i_bls_max=tuple(sweep["i_bls_max"]),
                seeds=sweep["seeds"],
                n_frames=sweep["n_frames"],
            ),
            slam=SlamDemoConfig(**slam),
        )
    except ConfigError:
        raise
    except PanotrackError as ex:
        raise ConfigError(str(ex), path=source) from ex
    _LOGGER.debug("Loaded configuration from %s", source)
    return config


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON run configuration; ``None`` yields the shipped defaults.

    Raises:
        ConfigError: On unreadable files, JSON syntax errors or invalid values.
    """
    if path is None:
        return from_dict({})
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as ex:
        raise ConfigError(f"cannot read config: {ex.strerror}", path=str(path)) from ex
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as ex:
        raise ConfigError(ex.msg, path=str(path), line=ex.lineno) from ex
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", path=str(path), line=1)
    return from_dict(data, source=str(path), text=text)
