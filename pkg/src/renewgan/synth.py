"""
Synthetic wind and solar datasets, calibrated to published per-terrain statistics

Wind: each terrain is a region with a shared AR(1) latent process, every farm mixes it with its own AR(1) process
(weight `spatial_coupling`). The latent goes through a clipped logistic power curve, its offset is tuned per terrain
(by bisection) so that the mean normalized power hits the terrain's target.

Solar: a seasonal clear-sky bell (zero at night) multiplied by a cloudiness factor in [0, 1],
obtained from the same kind of latent process.
"""

import numpy as np
import runez
from runez.schema import Dict, Enum, Float, Integer, String
from scipy.special import expit

from renewgan.data import FarmMeta, ScenarioDataset, WIND_TERRAINS
from renewgan.system import ConfigurationError, LOG, seeded_rng


SYNTH_STREAM = 7
WIND_GAIN = 2.0
SOLAR_GAIN = 1.5
SOLAR_NOON = 13.0
DAY_LENGTH_MEAN = 12.0
DAY_LENGTH_SWING = 4.5
SUMMER_SOLSTICE = 172

DEFAULT_TARGETS = {
    "wind": {"flatland": 0.201, "forest": 0.263, "offshore": 0.381},
    "solar": {"solar": 0.15},
}


class DatasetShape:
    """Farm layout and size of a dataset, either one of the published ones or a desk-scale stand-in"""

    def __init__(self, kind, parks_per_terrain, samples):
        self.kind = kind
        self.parks_per_terrain = parks_per_terrain
        self.samples = samples

    def __repr__(self):
        return "%s: %sx%s, %s samples" % (self.kind, self.parks, self.horizon, self.samples)

    @property
    def parks(self):
        return sum(self.parks_per_terrain.values())

    @property
    def resolution_hours(self):
        return 1.0 if self.kind == "wind" else 3.0

    @property
    def horizon(self):
        return int(24 // self.resolution_hours)


# Published terrain table of german-wind-2017 lists 46 of its 48 farms, the remaining 2 are counted as flatland
DATASET_SHAPES = {
    "europe-wind-2015": DatasetShape("wind", {"flatland": 20, "forest": 8, "offshore": 4}, 540),
    "german-solar-2015": DatasetShape("solar", {"solar": 16}, 760),
    "german-wind-2017": DatasetShape("wind", {"flatland": 34, "forest": 10, "offshore": 4}, 426),
    "german-solar-2017": DatasetShape("solar", {"solar": 48}, 483),
    "desk-wind": DatasetShape("wind", {"flatland": 4, "forest": 2, "offshore": 2}, 500),
    "desk-solar": DatasetShape("solar", {"solar": 8}, 500),
}


class SynthConfig(runez.Serializable, runez.serialize.with_behavior(strict=ConfigurationError, extras=ConfigurationError)):
    """Parameters of a synthetic dataset, fields left unset come from `preset` (or from "desk-<kind>")"""

    preset = Enum(" ".join(sorted(DATASET_SHAPES)), default=None)
    kind = Enum("wind solar", default=None)
    parks_per_terrain = Dict(String(), Integer(), default=None)
    n_days = Integer(default=None)
    temporal_persistence = Float(default=0.95)
    spatial_coupling = Float(default=0.8)
    terrain_mean_targets = Dict(String(), Float(), default=None)
    first_day_of_year = Integer(default=1)
    seed = Integer(default=0)

    def __repr__(self):
        return "%s synth, %s days" % (self.kind or "unresolved", self.n_days)

    def resolved(self):
        """
        Returns:
            (SynthConfig): Copy with all fields filled in, and validated
        """
        data = self.to_dict()
        shape = DATASET_SHAPES.get(self.preset)
        kind = self.kind or (shape.kind if shape else "wind")
        if shape is None or shape.kind != kind:
            shape = DATASET_SHAPES["desk-%s" % kind]

        data["kind"] = kind
        data.setdefault("parks_per_terrain", dict(shape.parks_per_terrain))
        data.setdefault("n_days", shape.samples)
        data.setdefault("terrain_mean_targets", dict(DEFAULT_TARGETS[kind]))
        result = SynthConfig.from_dict(data)
        result.validate()
        return result

    def validate(self):
        """Raise ConfigurationError if a field has an invalid value"""
        allowed = WIND_TERRAINS if self.kind == "wind" else ("solar",)
        unknown = sorted(set(self.parks_per_terrain) - set(allowed))
        if unknown:
            raise ConfigurationError("parks_per_terrain: %s not valid for %s (use %s)" % (", ".join(unknown), self.kind, ", ".join(allowed)))

        if any(count < 0 for count in self.parks_per_terrain.values()):
            raise ConfigurationError("parks_per_terrain: counts can't be negative")

        if not any(self.parks_per_terrain.values()):
            raise ConfigurationError("parks_per_terrain: no farms to generate")

        if self.n_days < 1:
            raise ConfigurationError("n_days must be positive, got %s" % self.n_days)

        if not 0 <= self.temporal_persistence < 1:
            raise ConfigurationError("temporal_persistence must be in [0, 1), got %s" % self.temporal_persistence)

        if not 0 <= self.spatial_coupling <= 1:
            raise ConfigurationError("spatial_coupling must be in [0, 1], got %s" % self.spatial_coupling)

        for terrain in self.terrains:
            target = self.terrain_mean_targets.get(terrain)
            if target is None or not 0 < target < 1:
                raise ConfigurationError("terrain_mean_targets.%s must be in (0, 1), got %s" % (terrain, target))

    @property
    def terrains(self):
        """Terrains with at least one farm, in canonical order"""
        return [t for t in WIND_TERRAINS + ("solar",) if self.parks_per_terrain.get(t)]


def ar1_paths(rng, count, steps, persistence):
    """
    Args:
        rng (numpy.random.Generator): Random generator
        count (int): Number of independent paths
        steps (int): Length of each path
        persistence (float): AR(1) coefficient

    Returns:
        (numpy.ndarray): Shape (count, steps), stationary unit-variance AR(1) paths
    """
    noise = rng.standard_normal((count, steps))
    paths = np.empty_like(noise)
    paths[:, 0] = noise[:, 0]
    scale = np.sqrt(1.0 - persistence ** 2)
    for t in range(1, steps):
        paths[:, t] = persistence * paths[:, t - 1] + scale * noise[:, t]

    return paths


def power_curve(latent, offset, gain=WIND_GAIN):
    """Clipped logistic mapping of a latent (standard normal) to normalized power, saturating at both 0 and 1"""
    return np.clip((expit(gain * latent - offset) - 0.05) / 0.9, 0.0, 1.0)


def calibrated_offset(latent, target, gain=WIND_GAIN, envelope=None, iterations=80):
    """
    Args:
        latent (numpy.ndarray): Latent values
        target (float): Desired mean of `envelope * power_curve(latent, offset)`
        gain (float): Power curve gain
        envelope (numpy.ndarray | None): Optional multiplier (same shape as `latent`)
        iterations (int): Number of bisection steps

    Returns:
        (float): Offset hitting `target`
    """
    weights = 1.0 if envelope is None else envelope
    ceiling = float(np.mean(weights * np.ones_like(latent)))
    if not 0 < target < ceiling:
        raise ConfigurationError("Mean power target %s is not reachable (must be below %.3f)" % (target, ceiling))

    low, high = -40.0, 40.0  # Mean power decreases as offset increases
    for _ in range(iterations):
        mid = 0.5 * (low + high)
        if np.mean(weights * power_curve(latent, mid, gain=gain)) > target:
            low = mid

        else:
            high = mid

    return 0.5 * (low + high)


def _farms(config, rng, power_range):
    farms = []
    for terrain in config.terrains:
        for i in range(config.parks_per_terrain[terrain]):
            max_power = round(float(rng.uniform(*power_range)), 1)
            farms.append(FarmMeta("%s-%02d" % (terrain, i + 1), terrain, max_power))

    return farms


def _latent(config, rng, farms, steps):
    """Per-farm latent of shape (n_days, P, steps): shared regional process mixed with each farm's own"""
    n = config.n_days
    c = config.spatial_coupling
    terrains = config.terrains
    regional = ar1_paths(rng, n * len(terrains), steps, config.temporal_persistence).reshape(n, len(terrains), steps)
    own = ar1_paths(rng, n * len(farms), steps, config.temporal_persistence).reshape(n, len(farms), steps)
    region_of_farm = [terrains.index(f.terrain) for f in farms]
    return np.sqrt(c) * regional[:, region_of_farm, :] + np.sqrt(1.0 - c) * own


def synth_wind(config):
    """
    Args:
        config (SynthConfig): Wind configuration

    Returns:
        (ScenarioDataset): Hourly dataset (H = 24), terrain means calibrated to `config.terrain_mean_targets`
    """
    config = config.resolved()
    if config.kind != "wind":
        raise ConfigurationError("synth_wind() needs kind 'wind', got '%s'" % config.kind)

    rng = seeded_rng(config.seed, SYNTH_STREAM)
    farms = _farms(config, rng, (5.0, 50.0))
    latent = _latent(config, rng, farms, 24)
    samples = np.empty_like(latent)
    for terrain in config.terrains:
        idx = [i for i, f in enumerate(farms) if f.terrain == terrain]
        offset = calibrated_offset(latent[:, idx, :], config.terrain_mean_targets[terrain])
        samples[:, idx, :] = power_curve(latent[:, idx, :], offset)
        LOG.debug("%s: offset %.4f, mean %.4f", terrain, offset, samples[:, idx, :].mean())

    return ScenarioDataset(samples, farms, 1.0, source="synthetic")


def clear_sky(days_of_year, horizon=8):
    """
    Args:
        days_of_year (numpy.ndarray | list[int]): Day of year for each sample
        horizon (int): Time steps per day

    Returns:
        (numpy.ndarray): Shape (len(days_of_year), horizon), seasonal clear-sky bell evaluated at step centers, 0 at night
    """
    days = np.asarray(days_of_year, dtype=np.float64)[:, None]
    hours = (np.arange(horizon) + 0.5) * 24.0 / horizon
    day_length = DAY_LENGTH_MEAN + DAY_LENGTH_SWING * np.cos(2.0 * np.pi * (days - SUMMER_SOLSTICE) / 365.0)
    amplitude = 0.6 + 0.4 * (day_length - (DAY_LENGTH_MEAN - DAY_LENGTH_SWING)) / (2.0 * DAY_LENGTH_SWING)
    phase = (hours[None, :] - (SOLAR_NOON - day_length / 2.0)) / day_length
    daylight = (phase > 0) & (phase < 1)
    return np.where(daylight, amplitude * np.sin(np.pi * np.clip(phase, 0.0, 1.0)), 0.0)


def solar_profiles(envelope, cloudiness):
    """Solar power: clear-sky `envelope` attenuated by `cloudiness` (1: clear sky, 0: fully overcast)"""
    return envelope * np.clip(cloudiness, 0.0, 1.0)


def synth_solar(config):
    """
    Args:
        config (SynthConfig): Solar configuration

    Returns:
        (ScenarioDataset): 3-hourly dataset (H = 8), night steps exactly 0
    """
    config = config.resolved()
    if config.kind != "solar":
        raise ConfigurationError("synth_solar() needs kind 'solar', got '%s'" % config.kind)

    horizon = 8
    rng = seeded_rng(config.seed, SYNTH_STREAM)
    farms = _farms(config, rng, (1.0, 10.0))
    latent = _latent(config, rng, farms, horizon)
    days = (config.first_day_of_year - 1 + np.arange(config.n_days)) % 365 + 1
    envelope = np.broadcast_to(clear_sky(days, horizon)[:, None, :], latent.shape)
    offset = calibrated_offset(latent, config.terrain_mean_targets["solar"], gain=SOLAR_GAIN, envelope=envelope)
    samples = solar_profiles(envelope, power_curve(latent, offset, gain=SOLAR_GAIN))
    LOG.debug("solar: offset %.4f, mean %.4f", offset, samples.mean())
    return ScenarioDataset(samples, farms, 3.0, source="synthetic")


def synthesize(config):
    """Dataset for given config, wind or solar depending on its `kind`"""
    config = config.resolved()
    if config.kind == "solar":
        return synth_solar(config)

    return synth_wind(config)
