"""
Day-shaped scenario datasets: a P x H matrix of normalized power per day (P farms, H time steps)

Raw measurements are ingested from a CSV (`timestamp,farm_id,power`) along with farm metadata
(`farm_id,terrain,max_power`). Datasets are persisted as an archive folder holding `meta.csv` and `samples.csv`.
"""

import os

import numpy as np
import pandas as pd
import runez

from renewgan.system import ArtifactIOError, ConfigurationError, LOG, seeded_rng


TERRAINS = ("flatland", "forest", "offshore", "solar")
WIND_TERRAINS = TERRAINS[:3]
META_COLUMNS = ["farm_id", "terrain", "max_power"]
RAW_COLUMNS = ["timestamp", "farm_id", "power"]
SAMPLE_COLUMNS = ["day_index", "farm_id", "step", "power_normalized"]
SPLIT_STREAM = 11
UTC_OFFSET = r"\s*(?:Z|[+-]\d{2}:?\d{2})$"


class FarmMeta:
    """Identity of one farm, and the divisor used to normalize its power readings"""

    __slots__ = ["farm_id", "terrain", "max_power"]

    def __init__(self, farm_id, terrain, max_power):
        """
        Args:
            farm_id (str): Unique id of the farm
            terrain (str): One of `TERRAINS`
            max_power (float): Normalization divisor, same unit as raw measurements
        """
        if not farm_id:
            raise ConfigurationError("Farm id can't be empty")

        if terrain not in TERRAINS:
            raise ConfigurationError("Farm '%s': terrain '%s' is not one of %s" % (farm_id, terrain, ", ".join(TERRAINS)))

        if not max_power > 0:
            raise ConfigurationError("Farm '%s': max_power must be positive, got %s" % (farm_id, max_power))

        self.farm_id = str(farm_id)
        self.terrain = terrain
        self.max_power = float(max_power)

    def __repr__(self):
        return "%s (%s)" % (self.farm_id, self.terrain)

    def __eq__(self, other):
        return isinstance(other, FarmMeta) and all(getattr(self, k) == getattr(other, k) for k in self.__slots__)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__slots__}


class ScenarioDataset:
    """Ordered collection of P x H day samples, with the metadata of the P farms"""

    def __init__(self, samples, farms, resolution_hours, source="real", dropped_days=0, day_index=None):
        """
        Args:
            samples (numpy.ndarray | list): Normalized power, shape (n, P, H)
            farms (list[FarmMeta]): The P farms, in sample row order
            resolution_hours (float): Hours covered by one time step
            source (str): Where samples come from ("real", or the model that generated them)
            dropped_days (int): Number of incomplete days skipped at ingestion
            day_index (list[int] | None): Original position of each sample (default: 0..n-1)
        """
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 3:
            raise ConfigurationError("Samples must have shape [n, P, H], got %s" % list(samples.shape))

        n, parks, horizon = samples.shape
        if parks != len(farms):
            raise ConfigurationError("Samples have %s rows but %s farms are described" % (parks, len(farms)))

        ids = [f.farm_id for f in farms]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("Farm ids must be unique, got %s" % ", ".join(sorted(i for i in set(ids) if ids.count(i) > 1)))

        if resolution_hours <= 0 or not np.isclose(horizon * resolution_hours, 24.0):
            raise ConfigurationError("%s steps of %sh do not cover a day" % (horizon, resolution_hours))

        if samples.size and (not np.all(np.isfinite(samples)) or samples.min() < 0.0 or samples.max() > 1.0):
            raise ConfigurationError("Normalized power must be within [0, 1]")

        if day_index is None:
            day_index = np.arange(n)

        day_index = np.asarray(day_index, dtype=np.int64)
        if day_index.shape != (n,):
            raise ConfigurationError("Expecting %s day indices, got %s" % (n, day_index.size))

        self.samples = samples
        self.farms = list(farms)
        self.resolution_hours = float(resolution_hours)
        self.source = source
        self.dropped_days = int(dropped_days)
        self.day_index = day_index

    def __repr__(self):
        return "%s: %s samples of %sx%s" % (self.source, len(self), self.parks, self.horizon)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def parks(self):
        return self.samples.shape[1]

    @property
    def horizon(self):
        return self.samples.shape[2]

    @property
    def farm_ids(self):
        return [f.farm_id for f in self.farms]

    @property
    def terrains(self):
        """list[str]: Terrains present, in `TERRAINS` order"""
        present = {f.terrain for f in self.farms}
        return [t for t in TERRAINS if t in present]

    def farm_indices(self, terrain):
        return [i for i, f in enumerate(self.farms) if f.terrain == terrain]

    def terrain_values(self, terrain=None):
        """
        Args:
            terrain (str | None): Terrain to pool values for (None: all farms)

        Returns:
            (numpy.ndarray): All values of the farms on `terrain`, pooled into a 1-D array
        """
        if terrain is None:
            return self.samples.ravel()

        return self.samples[:, self.farm_indices(terrain), :].ravel()

    def subset(self, indices, source=None):
        """Dataset made of the samples at given positions"""
        indices = np.asarray(indices, dtype=np.int64)
        return ScenarioDataset(
            self.samples[indices],
            self.farms,
            self.resolution_hours,
            source=source or self.source,
            day_index=self.day_index[indices],
        )

    def compatible_with(self, other):
        """True if `other` has the same farms (same order) and horizon"""
        return self.farm_ids == other.farm_ids and self.horizon == other.horizon

    def raw_power(self):
        """Samples scaled back to the unit of the original measurements"""
        return self.samples * np.array([f.max_power for f in self.farms])[None, :, None]

    def samples_frame(self):
        """
        Returns:
            (pandas.DataFrame): Long format, one row per (day, farm, step)
        """
        n, parks, horizon = self.samples.shape
        return pd.DataFrame(
            {
                "day_index": np.repeat(self.day_index, parks * horizon),
                "farm_id": np.tile(np.repeat(self.farm_ids, horizon), n),
                "step": np.tile(np.arange(horizon), n * parks),
                "power_normalized": self.samples.ravel(),
            },
            columns=SAMPLE_COLUMNS,
        )

    def meta_frame(self):
        return pd.DataFrame([f.to_dict() for f in self.farms], columns=META_COLUMNS)

    def save_samples(self, path):
        """Write samples (only) to csv file `path`"""
        _write_csv(self.samples_frame(), path)

    def save(self, folder):
        """Write this dataset as an archive folder (`meta.csv` + `samples.csv`)"""
        _write_csv(self.meta_frame(), os.path.join(folder, "meta.csv"))
        self.save_samples(os.path.join(folder, "samples.csv"))
        LOG.debug("Saved %s to %s", self, runez.short(folder))

    @classmethod
    def load_archive(cls, folder):
        """
        Args:
            folder (str): Folder previously produced by `save()`

        Returns:
            (ScenarioDataset): Loaded dataset
        """
        if not os.path.isdir(folder):
            raise ArtifactIOError("Dataset archive %s does not exist" % runez.short(folder))

        farms = read_meta(os.path.join(folder, "meta.csv"))
        return read_samples_csv(os.path.join(folder, "samples.csv"), farms, source="real")


def _write_csv(frame, path):
    try:
        runez.ensure_folder(runez.parent_folder(path), fatal=ArtifactIOError, logger=None)
        frame.to_csv(path, index=False)

    except OSError as e:
        raise ArtifactIOError("Can't write %s: %s" % (runez.short(path), e))


def _read_csv(path, columns, **kwargs):
    if not os.path.isfile(path):
        raise ArtifactIOError("File %s does not exist" % runez.short(path))

    try:
        frame = pd.read_csv(path, **kwargs)

    except pd.errors.EmptyDataError:
        raise ConfigurationError("%s is empty" % runez.short(path))

    except (pd.errors.ParserError, ValueError) as e:
        raise ConfigurationError("Can't parse %s: %s" % (runez.short(path), e))

    except OSError as e:
        raise ArtifactIOError("Can't read %s: %s" % (runez.short(path), e))

    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ConfigurationError("%s: missing column(s) %s" % (runez.short(path), ", ".join(missing)))

    return frame


def _first_bad_line(mask):
    """Line number (1-based, counting the header) of the first True entry in `mask`"""
    return int(np.flatnonzero(np.asarray(mask))[0]) + 2


def read_meta(path):
    """
    Args:
        path (str): Path to a `farm_id,terrain,max_power` csv file

    Returns:
        (list[FarmMeta]): Farms, in file order
    """
    frame = _read_csv(path, META_COLUMNS, dtype=str, keep_default_na=False)
    farms = []
    for i, row in enumerate(frame.itertuples(index=False)):
        max_power = runez.to_float(row.max_power)
        if max_power is None:
            raise ConfigurationError("%s line %s: invalid max_power '%s'" % (runez.short(path), i + 2, row.max_power))

        try:
            farms.append(FarmMeta(row.farm_id.strip(), row.terrain.strip(), max_power))

        except ConfigurationError as e:
            raise ConfigurationError("%s line %s: %s" % (runez.short(path), i + 2, e))

    ids = [f.farm_id for f in farms]
    for i, farm_id in enumerate(ids):
        if farm_id in ids[:i]:
            raise ConfigurationError("%s line %s: duplicate farm id '%s'" % (runez.short(path), i + 2, farm_id))

    if not farms:
        raise ConfigurationError("%s describes no farms" % runez.short(path))

    return farms


def read_samples_csv(path, farms, source=None):
    """
    Args:
        path (str): Path to a `day_index,farm_id,step,power_normalized` csv file
        farms (list[FarmMeta]): Farms the samples refer to
        source (str | None): Source tag (default: file name without extension)

    Returns:
        (ScenarioDataset): Samples read from `path`
    """
    name = runez.short(path)
    frame = _read_csv(path, SAMPLE_COLUMNS, dtype={"farm_id": str}, float_precision="round_trip")
    if frame.empty:
        raise ConfigurationError("%s contains no samples" % name)

    farm_pos = {f.farm_id: i for i, f in enumerate(farms)}
    farm_ids = frame["farm_id"].astype(str)
    unknown = ~farm_ids.isin(list(farm_pos))
    if unknown.any():
        line = _first_bad_line(unknown)
        raise ConfigurationError("%s line %s: unknown farm '%s'" % (name, line, farm_ids.iloc[line - 2]))

    steps = pd.to_numeric(frame["step"], errors="coerce")
    days = pd.to_numeric(frame["day_index"], errors="coerce")
    values = pd.to_numeric(frame["power_normalized"], errors="coerce")
    bad = steps.isna() | days.isna() | values.isna() | (steps < 0)
    if bad.any():
        raise ConfigurationError("%s line %s: malformed row" % (name, _first_bad_line(bad)))

    horizon = int(steps.max()) + 1
    day_index = np.sort(days.astype(np.int64).unique())
    day_pos = np.searchsorted(day_index, days.astype(np.int64).to_numpy())
    expected = len(day_index) * len(farms) * horizon
    if len(frame) != expected or frame.duplicated(["day_index", "farm_id", "step"]).any():
        raise ConfigurationError(
            "%s: %s rows do not form complete %sx%s samples (%s days)" % (name, len(frame), len(farms), horizon, len(day_index))
        )

    samples = np.zeros((len(day_index), len(farms), horizon))
    samples[day_pos, farm_ids.map(farm_pos).to_numpy(), steps.astype(np.int64).to_numpy()] = values.to_numpy(dtype=np.float64)
    if source is None:
        source = runez.basename(path)

    return ScenarioDataset(samples, farms, 24.0 / horizon, source=source, day_index=day_index)


def normalize(power, max_power):
    """
    Args:
        power (numpy.ndarray | float): Raw power readings
        max_power (numpy.ndarray | float): Per-farm normalization divisor

    Returns:
        (numpy.ndarray): `power / max_power`, clipped to [0, 1]
    """
    return np.clip(np.asarray(power, dtype=np.float64) / max_power, 0.0, 1.0)


def _inferred_resolution(frame):
    ordered = frame.sort_values(["farm_id", "timestamp"])
    deltas = ordered.groupby("farm_id")["timestamp"].diff().dropna().dt.total_seconds() / 3600.0
    deltas = deltas[deltas > 0]
    if deltas.empty:
        raise ConfigurationError("Can't infer time resolution, specify it explicitly")

    return float(deltas.mode().iloc[0])


def load_csv(path, meta_path, resolution_hours=None):
    """
    Args:
        path (str): Path to raw measurements csv (`timestamp,farm_id,power`, one row per farm per step)
        meta_path (str): Path to farms metadata csv (`farm_id,terrain,max_power`)
        resolution_hours (float | None): Hours per time step (default: inferred from timestamps)

    Returns:
        (ScenarioDataset): Normalized complete days, incomplete days are dropped (and counted in `.dropped_days`)

    Days are local calendar days: a trailing UTC offset on timestamps is ignored, so the 23h and 25h days
    of daylight saving switches are incomplete and get dropped.
    """
    farms = read_meta(meta_path)
    name = runez.short(path)
    frame = _read_csv(path, RAW_COLUMNS, dtype=str, keep_default_na=False)
    frame["farm_id"] = frame["farm_id"].str.strip()
    # Readings are placed at their local wall time, offsets may change within a file (daylight saving)
    wall_time = frame["timestamp"].str.strip().str.replace(UTC_OFFSET, "", regex=True)
    frame["timestamp"] = pd.to_datetime(wall_time, errors="coerce")
    frame["power"] = pd.to_numeric(frame["power"].str.strip(), errors="coerce")
    bad = frame["timestamp"].isna() | frame["power"].isna() | ~np.isfinite(frame["power"])
    if bad.any():
        raise ConfigurationError("%s line %s: malformed row" % (name, _first_bad_line(bad)))

    farm_pos = {f.farm_id: i for i, f in enumerate(farms)}
    unknown = ~frame["farm_id"].isin(list(farm_pos))
    if unknown.any():
        line = _first_bad_line(unknown)
        raise ConfigurationError("%s line %s: unknown farm '%s'" % (name, line, frame["farm_id"].iloc[line - 2]))

    if resolution_hours is None:
        resolution_hours = _inferred_resolution(frame)

    horizon = 24.0 / resolution_hours
    if resolution_hours <= 0 or not float(horizon).is_integer():
        raise ConfigurationError("A resolution of %sh does not evenly divide a day" % resolution_hours)

    horizon = int(horizon)
    stamps = frame["timestamp"]
    midnight = stamps.dt.normalize()
    frame["day"] = midnight.dt.strftime("%Y-%m-%d")
    frame["step"] = ((stamps - midnight).dt.total_seconds() // (resolution_hours * 3600.0)).astype(np.int64)
    per_farm_day = frame.groupby(["day", "farm_id"])["step"].agg(["size", "nunique"])
    complete_farm_days = per_farm_day[(per_farm_day["size"] == horizon) & (per_farm_day["nunique"] == horizon)]
    farms_per_day = complete_farm_days.reset_index().groupby("day")["farm_id"].nunique()
    all_days = np.sort(frame["day"].unique())
    complete_days = np.sort(farms_per_day[farms_per_day == len(farms)].index.to_numpy())
    if not len(complete_days):
        raise ConfigurationError("%s: no day has all %s steps for all %s farms" % (name, horizon, len(farms)))

    dropped = len(all_days) - len(complete_days)
    if dropped:
        LOG.warning("%s: dropped %s incomplete day(s)", name, dropped)

    kept = frame[frame["day"].isin(complete_days)]
    samples = np.zeros((len(complete_days), len(farms), horizon))
    farm_rows = kept["farm_id"].map(farm_pos).to_numpy()
    day_rows = np.searchsorted(complete_days, kept["day"].to_numpy())
    max_power = np.array([f.max_power for f in farms])
    samples[day_rows, farm_rows, kept["step"].to_numpy()] = normalize(kept["power"].to_numpy(), max_power[farm_rows])
    return ScenarioDataset(samples, farms, resolution_hours, source="real", dropped_days=dropped)


def split_indices(count, train_fraction=0.8, seed=0):
    """
    Args:
        count (int): Number of samples to split
        train_fraction (float): Share of samples to use for training
        seed (int): Seed determining the partition

    Returns:
        (numpy.ndarray, numpy.ndarray): Sorted sample positions for train and test
    """
    if count < 2:
        raise ConfigurationError("Need at least 2 samples to split, got %s" % count)

    if not 0 < train_fraction < 1:
        raise ConfigurationError("train_fraction must be in (0, 1), got %s" % train_fraction)

    train_count = min(max(int(round(count * train_fraction)), 1), count - 1)
    order = seeded_rng(seed, SPLIT_STREAM).permutation(count)
    return np.sort(order[:train_count]), np.sort(order[train_count:])


def split(dataset, train_fraction=0.8, seed=0):
    """
    Args:
        dataset (ScenarioDataset): Dataset to partition, whole days at a time
        train_fraction (float): Share of samples to use for training
        seed (int): Seed determining the partition

    Returns:
        (ScenarioDataset, ScenarioDataset): Train and test datasets
    """
    train, test = split_indices(len(dataset), train_fraction=train_fraction, seed=seed)
    return dataset.subset(train), dataset.subset(test)
