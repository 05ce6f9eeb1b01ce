"""Environmental sensing: sonar ranging, temperature/humidity/gas
fields, and the compass.

Hazard fields are sums of Gaussian point sources over an ambient
baseline, which keeps every reading continuous in position and easy to
verify by hand. Noise is off unless a seeded generator is supplied, so
sensor streams stay bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chassis import ChassisState, attitude_matrix
from .terrain import TerrainGrid, height_at, raycast

ULTRASONIC_MAX_RANGE = 4.0
FRONT_SONAR_MOUNT = (0.225, 0.0, 0.10)  # body frame, front bumper


@dataclass(frozen=True)
class HazardSource:
    position: tuple[float, float, float]
    kind: str                   # heat | gas
    intensity: float            # peak units above ambient
    sigma: float                # meters

    def __post_init__(self):
        if self.kind not in ("heat", "gas"):
            raise ValueError(f"source kind must be heat or gas, got {self.kind!r}")
        if self.intensity < 0 or self.sigma <= 0:
            raise ValueError("intensity must be >= 0 and sigma > 0")
        object.__setattr__(self, "position",
                           tuple(float(v) for v in self.position))


@dataclass(frozen=True)
class EnvironmentField:
    ambient_temperature: float = 22.0
    ambient_humidity: float = 55.0
    hazard_sources: tuple[HazardSource, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.ambient_humidity <= 100.0:
            raise ValueError("ambient humidity must be in [0, 100]")


@dataclass(frozen=True)
class SensorFrame:
    tick: int
    ultrasonic_m: float | None          # None = out of range
    temperature_c: float
    humidity_pct: float
    gas_ppm: float
    heading_deg: float

    def __post_init__(self):
        if self.ultrasonic_m is not None and \
                not 0.0 < self.ultrasonic_m <= ULTRASONIC_MAX_RANGE:
            raise ValueError(
                f"ultrasonic reading {self.ultrasonic_m} outside (0, 4.0] m")
        if not 0.0 <= self.humidity_pct <= 100.0:
            raise ValueError("humidity must be in [0, 100]")
        if self.gas_ppm < 0:
            raise ValueError("gas reading must be >= 0")
        if not 0.0 <= self.heading_deg < 360.0:
            raise ValueError("compass heading must be in [0, 360)")


def sample_ultrasonic(state: ChassisState, terrain: TerrainGrid,
                      mount=FRONT_SONAR_MOUNT) -> float | None:
    """Single-beam sonar range along the robot's forward axis.

    The beam leaves the body-frame mount point, pitched and rolled with
    the chassis. Readings beyond 4.0 m (or no hit at all) report as
    out-of-range None.
    """
    R = attitude_matrix(state.heading, state.pitch, state.roll)
    offset = R @ np.asarray(mount, dtype=float)
    if not terrain.in_bounds(*state.position):
        return None
    base = height_at(terrain, *state.position)
    origin = (state.position[0] + offset[0],
              state.position[1] + offset[1],
              base + offset[2])
    d = raycast(terrain, origin, R @ np.array([1.0, 0.0, 0.0]),
                max_range=ULTRASONIC_MAX_RANGE)
    if d is None or not 0.0 < d <= ULTRASONIC_MAX_RANGE:
        return None
    return float(d)


def sample_environment(state: ChassisState, field: EnvironmentField,
                       rng: np.random.Generator | None = None,
                       noise_std: float = 0.0):
    """(temperature_c, humidity_pct, gas_ppm) at the robot's position.

    Each hazard source adds intensity * exp(-d^2 / (2 sigma^2)) to its
    channel, evaluated at the robot's ground point. Gas has no ambient
    term; humidity is the clamped ambient value. Optional zero-mean
    Gaussian noise is drawn per channel from the supplied generator.
    """
    p = np.array([state.position[0], state.position[1], 0.0])
    temperature = field.ambient_temperature
    gas = 0.0
    for src in field.hazard_sources:
        d2 = float(np.sum((p - np.asarray(src.position)) ** 2))
        term = src.intensity * math.exp(-d2 / (2.0 * src.sigma ** 2))
        if src.kind == "heat":
            temperature += term
        else:
            gas += term
    humidity = min(max(field.ambient_humidity, 0.0), 100.0)

    if rng is not None and noise_std > 0.0:
        temperature += noise_std * rng.standard_normal()
        humidity = min(max(humidity + noise_std * rng.standard_normal(), 0.0), 100.0)
        gas = max(gas + noise_std * rng.standard_normal(), 0.0)
    return temperature, humidity, gas


def sample_compass(state: ChassisState, declination: float = 0.0) -> float:
    """Magnetic heading: true heading plus declination, wrapped to [0, 360)."""
    h = (state.heading + declination) % 360.0
    return h if h != 360.0 else 0.0


def make_sensor_frame(tick: int, state: ChassisState, terrain: TerrainGrid,
                      env: EnvironmentField, declination: float = 0.0,
                      mount=FRONT_SONAR_MOUNT,
                      rng: np.random.Generator | None = None,
                      noise_std: float = 0.0) -> SensorFrame:
    temperature, humidity, gas = sample_environment(state, env, rng, noise_std)
    return SensorFrame(
        tick=tick,
        ultrasonic_m=sample_ultrasonic(state, terrain, mount),
        temperature_c=temperature,
        humidity_pct=humidity,
        gas_ppm=gas,
        heading_deg=sample_compass(state, declination),
    )
