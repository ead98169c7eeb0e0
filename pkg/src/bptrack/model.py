"""Kinematic, sensor, detection, and clutter primitives.

These are the generative building blocks shared by the scenario generator and
the tracker: a planar constant-velocity motion model with white-noise
acceleration, circular-FoV range/bearing sensors, and a uniform-in-measurement-
space clutter model.

Conventions: distances in meters, angles in radians (wrapped into (-pi, pi]),
time in seconds. State vectors are length-4 numpy arrays [px, py, vx, vy].
All functions are pure; randomness is always drawn from an explicitly passed
numpy Generator.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

GENERATOR = "generator"
FILTER = "filter"


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    return np.pi - (np.pi - np.asarray(theta)) % TWO_PI


@dataclass
class MotionModel:
    """Constant-velocity model with per-axis white-noise acceleration.

    ``sigma_v`` is the process-noise intensity applied independently on the x
    and y axes; ``p_s`` is the (state-independent) survival probability.
    """

    dt: float
    sigma_v: float
    p_s: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.sigma_v < 0:
            raise ValueError("sigma_v must be >= 0")
        if not 0.0 <= self.p_s <= 1.0:
            raise ValueError("p_s must lie in [0, 1]")

    def transition_matrix(self) -> np.ndarray:
        return transition_matrix(self.dt)

    def noise_cov(self) -> np.ndarray:
        return process_noise_cov(self.dt, self.sigma_v)

    def noise_chol(self) -> np.ndarray:
        """Lower-triangular factor L with L @ L.T == noise_cov().

        Returns the zero matrix when sigma_v == 0 (the covariance is singular).
        """
        if self.sigma_v == 0:
            return np.zeros((4, 4))
        return np.linalg.cholesky(self.noise_cov())


@dataclass
class Sensor:
    """A base station: position, circular FoV, detection and noise models.

    ``pd_true`` is the detection probability used when generating data,
    ``pd_inside`` the (possibly mismatched) value assumed by the filter.
    ``mu_c`` is the expected number of clutter points per scan, distributed
    uniformly over [0, fov_radius] x (-pi, pi] in measurement space.
    """

    id: int
    pos: np.ndarray
    fov_radius: float = 120.0
    pd_inside: float = 0.9
    pd_true: float = 1.0
    sigma_r: float = 1.0
    sigma_theta: float = math.radians(1.0)
    mu_c: float = 5.0

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        if self.pos.shape != (2,):
            raise ValueError("pos must be a 2-vector")
        if self.fov_radius <= 0:
            raise ValueError("fov_radius must be > 0")
        for name in ("pd_inside", "pd_true"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.sigma_r <= 0:
            raise ValueError("sigma_r must be > 0")
        if self.sigma_theta <= 0:
            raise ValueError("sigma_theta must be > 0")
        if self.mu_c < 0:
            raise ValueError("mu_c must be >= 0")


@dataclass(frozen=True)
class Measurement:
    """One range/azimuth detection (or clutter point) from a single sensor."""

    range: float
    azimuth: float
    sensor_id: int
    time_index: int

    def __post_init__(self):
        if self.range < 0:
            raise ValueError("range must be >= 0")
        object.__setattr__(self, "azimuth", float(wrap_angle(self.azimuth)))

    def as_array(self) -> np.ndarray:
        return np.array([self.range, self.azimuth])


def transition_matrix(dt: float) -> np.ndarray:
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    return f


def process_noise_cov(dt: float, sigma_v: float) -> np.ndarray:
    """Discretized white-noise-acceleration covariance, per-axis 2x2 blocks."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    block = sigma_v ** 2 * np.array([[dt ** 3 / 3.0, dt ** 2 / 2.0],
                                     [dt ** 2 / 2.0, dt]])
    q = np.zeros((4, 4))
    q[np.ix_([0, 2], [0, 2])] = block
    q[np.ix_([1, 3], [1, 3])] = block
    return q


def predict_state(x: np.ndarray, m: MotionModel, noise=None) -> np.ndarray:
    """One motion step F x + v; ``noise`` defaults to zero."""
    out = transition_matrix(m.dt) @ np.asarray(x, dtype=float)
    if noise is not None:
        out = out + noise
    return out


def measure(x: np.ndarray, s: Sensor, time_index: int = 0) -> Measurement:
    """Noiseless range/bearing of state ``x`` as seen from sensor ``s``.

    A target exactly at the sensor position has undefined bearing; azimuth 0
    is returned and a warning emitted.
    """
    d = np.asarray(x, dtype=float)[:2] - s.pos
    rng = math.hypot(d[0], d[1])
    if rng == 0.0:
        warnings.warn("target coincides with sensor position; azimuth set to 0")
        az = 0.0
    else:
        az = float(wrap_angle(math.atan2(d[1], d[0])))
    return Measurement(rng, az, s.id, time_index)


def measurement_likelihood(z: Measurement, x: np.ndarray, s: Sensor) -> float:
    """Gaussian density of ``z`` given state ``x``: range times wrapped azimuth."""
    pred = measure(x, s, z.time_index)
    dr = z.range - pred.range
    da = float(wrap_angle(z.azimuth - pred.azimuth))
    norm = 1.0 / (TWO_PI * s.sigma_r * s.sigma_theta)
    return norm * math.exp(-0.5 * ((dr / s.sigma_r) ** 2 + (da / s.sigma_theta) ** 2))


def particle_polar(particles: np.ndarray, s: Sensor):
    """Ranges and wrapped azimuths of an (N, 4) particle array w.r.t. ``s``."""
    d = particles[:, :2] - s.pos
    rng = np.hypot(d[:, 0], d[:, 1])
    az = wrap_angle(np.arctan2(d[:, 1], d[:, 0]))
    return rng, az


# Squared Mahalanobis radius beyond which the measurement density is treated
# as zero (exp(-30) ~ 1e-13 relative to the peak).
_LIK_GATE = 60.0


def likelihood_matrix(particles: np.ndarray, Z, s: Sensor, polar=None) -> np.ndarray:
    """(N, M) matrix of measurement densities for all particle/measurement
    pairs; ``polar`` optionally supplies precomputed ``particle_polar`` output."""
    rng, az = particle_polar(particles, s) if polar is None else polar
    if len(Z) == 0:
        return np.zeros((particles.shape[0], 0))
    zr = np.array([z.range for z in Z])
    za = np.array([z.azimuth for z in Z])
    dr = (rng[:, None] - zr[None, :]) / s.sigma_r
    da = np.abs(az[:, None] - za[None, :])
    da = np.minimum(da, TWO_PI - da) / s.sigma_theta
    s2 = dr * dr + da * da
    out = np.zeros_like(s2)
    near = s2 < _LIK_GATE
    out[near] = np.exp(-0.5 * s2[near])
    out *= 1.0 / (TWO_PI * s.sigma_r * s.sigma_theta)
    return out


def detection_prob(x: np.ndarray, s: Sensor, mode: str) -> float:
    """FoV-gated detection probability; the FoV boundary counts as inside."""
    d = np.asarray(x, dtype=float)[:2] - s.pos
    if math.hypot(d[0], d[1]) > s.fov_radius:
        return 0.0
    return _pd_value(s, mode)


def detection_probs(particles: np.ndarray, s: Sensor, mode: str, polar=None) -> np.ndarray:
    """Vectorized ``detection_prob`` over an (N, 4) particle array."""
    rng = (particle_polar(particles, s) if polar is None else polar)[0]
    return np.where(rng <= s.fov_radius, _pd_value(s, mode), 0.0)


def _pd_value(s: Sensor, mode: str) -> float:
    if mode == GENERATOR:
        return s.pd_true
    if mode == FILTER:
        return s.pd_inside
    raise ValueError(f"unknown detection mode {mode!r}")


def clutter_density(z: Measurement, s: Sensor) -> float:
    """Clutter intensity c(z): uniform over [0, R] x (-pi, pi], zero outside."""
    if 0.0 <= z.range <= s.fov_radius:
        return s.mu_c / (s.fov_radius * TWO_PI)
    return 0.0
