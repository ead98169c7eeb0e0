"""Ground-truth generation, measurement synthesis, and scenario-file loading.

Scenario files are INI-style key = value text with sections ``[scenario]``,
``[motion]``, ``[filter]``, ``[sensor.N]``, and ``[target.N]``. Distances are
meters, angles degrees (converted to radians at load), times are step indices.
Unspecified keys fall back to the two-base-station reference parameter set.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    GENERATOR,
    Measurement,
    MotionModel,
    Sensor,
    detection_prob,
    measure,
    wrap_angle,
)
from .tracker import TrackerParams


class ScenarioError(ValueError):
    """Raised for missing, unparsable, or invalid scenario input."""


@dataclass
class TrajectorySpec:
    """Straight-line-plus-noise target: alive for birth_step <= k < death_step."""

    birth_step: int
    death_step: int
    initial_state: np.ndarray

    def __post_init__(self):
        self.initial_state = np.asarray(self.initial_state, dtype=float)
        if self.initial_state.shape != (4,):
            raise ScenarioError("initial_state must be a 4-vector")
        if not 0 <= self.birth_step < self.death_step:
            raise ScenarioError("need 0 <= birth_step < death_step")


@dataclass
class GroundTruth:
    """Per step, the list of (target_id, state) pairs of alive targets."""

    steps: list

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def positions(self, k: int) -> np.ndarray:
        """(n, 2) array of true positions at step k."""
        if not self.steps[k]:
            return np.zeros((0, 2))
        return np.array([x[:2] for _, x in self.steps[k]])


class ScanSet:
    """Measurements indexed by (time step, sensor id)."""

    def __init__(self):
        self._data: dict[tuple[int, int], list[Measurement]] = {}

    def put(self, k: int, sensor_id: int, measurements: list):
        self._data[(k, sensor_id)] = measurements

    def get(self, k: int, sensor_id: int) -> list:
        return self._data.get((k, sensor_id), [])

    def total_count(self) -> int:
        return sum(len(v) for v in self._data.values())


@dataclass
class ScenarioConfig:
    sensors: list
    motion: MotionModel
    trajectories: list
    horizon: int
    tracker: TrackerParams = field(default_factory=TrackerParams)
    seed: int = 0

    def __post_init__(self):
        if not self.sensors:
            raise ScenarioError("at least one sensor is required")
        if self.horizon < 1:
            raise ScenarioError("horizon must be >= 1")
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ScenarioError("sensor ids must be unique")
        for t in self.trajectories:
            if t.death_step > self.horizon:
                raise ScenarioError("trajectory death_step exceeds horizon")


def generate_truth(cfg: ScenarioConfig, rng) -> GroundTruth:
    """Evolve every trajectory through the motion model with process noise."""
    steps = [[] for _ in range(cfg.horizon)]
    f = cfg.motion.transition_matrix()
    chol = cfg.motion.noise_chol()
    noisy = cfg.motion.sigma_v > 0
    for tid, traj in enumerate(cfg.trajectories, start=1):
        x = traj.initial_state.copy()
        for k in range(traj.birth_step, traj.death_step):
            if k > traj.birth_step:
                x = f @ x
                if noisy:
                    x = x + chol @ rng.standard_normal(4)
            steps[k].append((tid, x.copy()))
    return GroundTruth(steps)


def generate_measurements(truth: GroundTruth, sensors, rng) -> ScanSet:
    """Per sensor and step: at most one noisy detection per in-FoV target,
    plus Poisson clutter uniform over the FoV in measurement space; the
    resulting list is randomly permuted."""
    scans = ScanSet()
    for k in range(truth.horizon):
        for s in sorted(sensors, key=lambda s: s.id):
            ms = []
            for _, x in truth.steps[k]:
                pd = detection_prob(x, s, GENERATOR)
                if pd > 0 and rng.random() < pd:
                    z0 = measure(x, s, k)
                    r = max(z0.range + s.sigma_r * rng.standard_normal(), 0.0)
                    az = z0.azimuth + s.sigma_theta * rng.standard_normal()
                    ms.append(Measurement(r, float(wrap_angle(az)), s.id, k))
            for _ in range(rng.poisson(s.mu_c)):
                r = s.fov_radius * rng.random()
                az = math.pi - 2.0 * math.pi * rng.random()
                ms.append(Measurement(r, az, s.id, k))
            order = rng.permutation(len(ms))
            scans.put(k, s.id, [ms[i] for i in order])
    return scans


# Reference defaults: two BSs 150 m apart, 120 m FoVs, 1 Hz over 100 steps.
_MOTION_DEFAULTS = {"dt": 1.0, "sigma_v": 0.05, "p_s": 0.99}
_SENSOR_DEFAULTS = {
    "fov_radius": 120.0,
    "pd_filter": 0.9,
    "pd_true": 1.0,
    "sigma_range": 1.0,
    "sigma_azimuth_deg": 1.0,
    "clutter_rate": 5.0,
}
_FILTER_DEFAULTS = {
    "particles": 10000,
    "detect_threshold": 0.5,
    "prune_threshold": 1e-5,
    "birth_rate": 0.01,
    "handover_threshold": 0.5,
    "bp_max_iter": 50,
    "bp_tol": 1e-6,
    "birth_vel_std": 2.0,
    "birth_inflation": 2.0,
}


def _get_float(section, key, defaults, where):
    raw = section.get(key, None)
    if raw is None:
        if key in defaults:
            return defaults[key]
        raise ScenarioError(f"{where}: missing required key '{key}'")
    try:
        return float(raw)
    except ValueError as e:
        raise ScenarioError(f"{where}: key '{key}' is not a number: {raw!r}") from e


def load_scenario(path) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except (OSError, configparser.Error) as e:
        raise ScenarioError(f"cannot parse scenario file {path}: {e}")

    sc = parser["scenario"] if parser.has_section("scenario") else {}
    horizon = int(_get_float(sc, "horizon", {"horizon": 100}, "[scenario]"))
    seed = int(_get_float(sc, "seed", {"seed": 0}, "[scenario]"))

    mo = parser["motion"] if parser.has_section("motion") else {}
    try:
        motion = MotionModel(
            dt=_get_float(mo, "dt", _MOTION_DEFAULTS, "[motion]"),
            sigma_v=_get_float(mo, "sigma_v", _MOTION_DEFAULTS, "[motion]"),
            p_s=_get_float(mo, "p_s", _MOTION_DEFAULTS, "[motion]"),
        )
    except ValueError as e:
        raise ScenarioError(f"[motion]: {e}")

    fi = parser["filter"] if parser.has_section("filter") else {}
    try:
        tracker = TrackerParams(
            n_particles=int(_get_float(fi, "particles", _FILTER_DEFAULTS, "[filter]")),
            p_th=_get_float(fi, "detect_threshold", _FILTER_DEFAULTS, "[filter]"),
            p_prune=_get_float(fi, "prune_threshold", _FILTER_DEFAULTS, "[filter]"),
            mu_n=_get_float(fi, "birth_rate", _FILTER_DEFAULTS, "[filter]"),
            gamma=_get_float(fi, "handover_threshold", _FILTER_DEFAULTS, "[filter]"),
            bp_max_iter=int(_get_float(fi, "bp_max_iter", _FILTER_DEFAULTS, "[filter]")),
            bp_tol=_get_float(fi, "bp_tol", _FILTER_DEFAULTS, "[filter]"),
            birth_vel_std=_get_float(fi, "birth_vel_std", _FILTER_DEFAULTS, "[filter]"),
            birth_inflation=_get_float(fi, "birth_inflation", _FILTER_DEFAULTS, "[filter]"),
        )
    except ValueError as e:
        raise ScenarioError(f"[filter]: {e}")

    sensors, trajectories = [], []
    for name in parser.sections():
        if name.startswith("sensor."):
            where = f"[{name}]"
            sec = parser[name]
            try:
                sid = int(name.split(".", 1)[1])
            except ValueError:
                raise ScenarioError(f"{where}: sensor id must be an integer")
            try:
                sensors.append(Sensor(
                    id=sid,
                    pos=(_get_float(sec, "x", {}, where), _get_float(sec, "y", {}, where)),
                    fov_radius=_get_float(sec, "fov_radius", _SENSOR_DEFAULTS, where),
                    pd_inside=_get_float(sec, "pd_filter", _SENSOR_DEFAULTS, where),
                    pd_true=_get_float(sec, "pd_true", _SENSOR_DEFAULTS, where),
                    sigma_r=_get_float(sec, "sigma_range", _SENSOR_DEFAULTS, where),
                    sigma_theta=math.radians(
                        _get_float(sec, "sigma_azimuth_deg", _SENSOR_DEFAULTS, where)),
                    mu_c=_get_float(sec, "clutter_rate", _SENSOR_DEFAULTS, where),
                ))
            except ValueError as e:
                raise ScenarioError(f"{where}: {e}")
        elif name.startswith("target."):
            where = f"[{name}]"
            sec = parser[name]
            try:
                trajectories.append(TrajectorySpec(
                    birth_step=int(_get_float(sec, "birth", {}, where)),
                    death_step=int(_get_float(sec, "death", {}, where)),
                    initial_state=(
                        _get_float(sec, "x", {}, where),
                        _get_float(sec, "y", {}, where),
                        _get_float(sec, "vx", {}, where),
                        _get_float(sec, "vy", {}, where),
                    ),
                ))
            except ScenarioError:
                raise
            except ValueError as e:
                raise ScenarioError(f"{where}: {e}")

    sensors.sort(key=lambda s: s.id)
    try:
        return ScenarioConfig(sensors=sensors, motion=motion,
                              trajectories=trajectories, horizon=horizon,
                              tracker=tracker, seed=seed)
    except ValueError as e:
        raise ScenarioError(str(e))
