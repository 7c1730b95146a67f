import os

import numpy as np
import pytest
import runez

from renewgan.data import (
    FarmMeta, load_csv, normalize, read_meta, read_samples_csv, ScenarioDataset, split, split_indices, TERRAINS
)
from renewgan.system import ArtifactIOError, ConfigurationError

from .conftest import tiny_dataset


META = "farm_id,terrain,max_power\nf1,flatland,10\ns1,solar,5\n"


def raw_rows(days, skip=None):
    """Measurements every 3 hours for farms f1 and s1, `skip` is a (day, hour, farm) row to leave out"""
    lines = ["timestamp,farm_id,power"]
    for day in days:
        for hour in range(0, 24, 3):
            for farm, power in (("f1", hour / 2.0), ("s1", 6.0 if hour == 12 else hour / 8.0)):
                if (day, hour, farm) != skip:
                    lines.append("2017-01-%02d %02d:00:00, %s, %s" % (day, hour, farm, power))

    return "\n".join(lines) + "\n"


def test_farm_meta():
    farm = FarmMeta("f1", "forest", 12)
    assert str(farm) == "f1 (forest)"
    assert farm.to_dict() == {"farm_id": "f1", "terrain": "forest", "max_power": 12.0}
    assert farm == FarmMeta(**farm.to_dict())
    assert farm != FarmMeta("f1", "forest", 13)

    with pytest.raises(ConfigurationError, match="terrain"):
        FarmMeta("f1", "desert", 1)

    with pytest.raises(ConfigurationError, match="max_power"):
        FarmMeta("f1", "solar", 0)

    with pytest.raises(ConfigurationError):
        FarmMeta("", "solar", 1)


def test_dataset():
    dataset = tiny_dataset(n=5)
    assert str(dataset) == "real: 5 samples of 4x24"
    assert dataset.terrains == ["flatland", "forest", "offshore"]
    assert dataset.farm_indices("flatland") == [0, 1]
    assert dataset.terrain_values("forest").shape == (5 * 24,)
    assert dataset.terrain_values().shape == (5 * 4 * 24,)
    assert dataset.raw_power()[:, 2].max() <= 10.0

    subset = dataset.subset([4, 1], source="picked")
    assert subset.source == "picked"
    assert subset.day_index.tolist() == [4, 1]
    assert np.array_equal(subset.samples[0], dataset.samples[4])
    assert subset.compatible_with(dataset)
    assert not tiny_dataset(horizon=8).compatible_with(dataset)

    farms = dataset.farms
    with pytest.raises(ConfigurationError, match="shape"):
        ScenarioDataset(np.zeros((2, 4)), farms, 1)

    with pytest.raises(ConfigurationError, match="farms"):
        ScenarioDataset(np.zeros((2, 3, 24)), farms, 1)

    with pytest.raises(ConfigurationError, match="unique"):
        ScenarioDataset(np.zeros((2, 2, 24)), [farms[0], farms[0]], 1)

    with pytest.raises(ConfigurationError, match="cover a day"):
        ScenarioDataset(np.zeros((2, 4, 24)), farms, 3)

    with pytest.raises(ConfigurationError, match=r"\[0, 1\]"):
        ScenarioDataset(np.full((2, 4, 24), 1.5), farms, 1)

    with pytest.raises(ConfigurationError, match=r"\[0, 1\]"):
        ScenarioDataset(np.full((2, 4, 24), np.nan), farms, 1)


def test_archive(temp_folder):
    dataset = tiny_dataset(n=6, parks_per_terrain={"solar": 3}, horizon=8)
    dataset.save("archive")
    assert sorted(os.listdir("archive")) == ["meta.csv", "samples.csv"]
    loaded = ScenarioDataset.load_archive("archive")
    assert loaded.farms == dataset.farms
    assert loaded.resolution_hours == 3.0
    assert np.array_equal(loaded.samples, dataset.samples)
    assert loaded.day_index.tolist() == list(range(6))

    # Sample rows only need to be complete, not ordered
    frame = dataset.samples_frame().iloc[::-1]
    frame.to_csv("shuffled.csv", index=False)
    shuffled = read_samples_csv("shuffled.csv", dataset.farms)
    assert shuffled.source == "shuffled"
    assert np.array_equal(shuffled.samples, dataset.samples)

    with pytest.raises(ArtifactIOError):
        ScenarioDataset.load_archive("no-such-folder")


def test_bad_samples(temp_folder):
    farms = tiny_dataset(n=2).farms
    runez.write("empty.csv", "", logger=None)
    with pytest.raises(ConfigurationError, match="empty"):
        read_samples_csv("empty.csv", farms)

    runez.write("header.csv", "day_index,farm_id,step,power_normalized\n", logger=None)
    with pytest.raises(ConfigurationError, match="no samples"):
        read_samples_csv("header.csv", farms)

    runez.write("columns.csv", "day,farm_id,step,power_normalized\n0,flatland-01,0,0.5\n", logger=None)
    with pytest.raises(ConfigurationError, match="missing column"):
        read_samples_csv("columns.csv", farms)

    runez.write("unknown.csv", "day_index,farm_id,step,power_normalized\n0,flatland-01,0,0.5\n0,foo,1,0.5\n", logger=None)
    with pytest.raises(ConfigurationError, match="line 3: unknown farm 'foo'"):
        read_samples_csv("unknown.csv", farms)

    runez.write("bad.csv", "day_index,farm_id,step,power_normalized\n0,flatland-01,0,oops\n", logger=None)
    with pytest.raises(ConfigurationError, match="line 2: malformed"):
        read_samples_csv("bad.csv", farms)

    runez.write("partial.csv", "day_index,farm_id,step,power_normalized\n0,flatland-01,0,0.5\n", logger=None)
    with pytest.raises(ConfigurationError, match="complete"):
        read_samples_csv("partial.csv", farms)

    with pytest.raises(ArtifactIOError):
        read_samples_csv("no-such-file.csv", farms)


def test_read_meta(temp_folder):
    runez.write("meta.csv", META, logger=None)
    farms = read_meta("meta.csv")
    assert [str(f) for f in farms] == ["f1 (flatland)", "s1 (solar)"]
    assert farms[1].max_power == 5.0

    runez.write("dupe.csv", META + "f1,forest,3\n", logger=None)
    with pytest.raises(ConfigurationError, match="line 4: duplicate farm id 'f1'"):
        read_meta("dupe.csv")

    runez.write("power.csv", META + "f2,forest,lots\n", logger=None)
    with pytest.raises(ConfigurationError, match="line 4: invalid max_power"):
        read_meta("power.csv")

    runez.write("terrain.csv", META + "f2,desert,3\n", logger=None)
    with pytest.raises(ConfigurationError, match="line 4"):
        read_meta("terrain.csv")

    runez.write("none.csv", "farm_id,terrain,max_power\n", logger=None)
    with pytest.raises(ConfigurationError, match="no farms"):
        read_meta("none.csv")


def test_load_csv(temp_folder, logged):
    runez.write("meta.csv", META, logger=None)
    runez.write("raw.csv", raw_rows([1, 2, 3], skip=(2, 9, "s1")), logger=None)
    dataset = load_csv("raw.csv", "meta.csv")
    assert dataset.resolution_hours == 3.0
    assert dataset.dropped_days == 1
    assert "dropped 1 incomplete day" in logged
    assert len(dataset) == 2
    assert dataset.samples.shape == (2, 2, 8)

    # Step t of a day holds hour 3t, normalized by max_power and clipped to [0, 1]
    assert dataset.samples[0, 0].tolist() == [min(3 * t / 2.0 / 10.0, 1.0) for t in range(8)]
    assert dataset.samples[1, 1, 4] == 1.0
    assert dataset.samples[1, 1, 1] == 3 / 8.0 / 5.0

    explicit = load_csv("raw.csv", "meta.csv", resolution_hours=3)
    assert np.array_equal(explicit.samples, dataset.samples)

    with pytest.raises(ConfigurationError, match="evenly divide"):
        load_csv("raw.csv", "meta.csv", resolution_hours=5)

    runez.write("unknown.csv", raw_rows([1]) + "2017-01-01 00:00:00,x9,1\n", logger=None)
    with pytest.raises(ConfigurationError, match="line 18: unknown farm 'x9'"):
        load_csv("unknown.csv", "meta.csv")

    runez.write("malformed.csv", raw_rows([1]).replace("2017-01-01 06:00:00", "yesterday"), logger=None)
    with pytest.raises(ConfigurationError, match="line 6: malformed"):
        load_csv("malformed.csv", "meta.csv")

    runez.write("incomplete.csv", raw_rows([1], skip=(1, 0, "f1")), logger=None)
    with pytest.raises(ConfigurationError, match="no day"):
        load_csv("incomplete.csv", "meta.csv", resolution_hours=3)


def test_load_csv_daylight_saving(temp_folder, logged):
    runez.write("meta.csv", "farm_id,terrain,max_power\nw1,offshore,10\n", logger=None)
    lines = ["timestamp,farm_id,power"]
    readings = [("2017-03-25", h, "+01:00") for h in range(24)]
    readings += [("2017-03-26", h, "+01:00" if h < 2 else "+02:00") for h in range(24) if h != 2]
    readings += [("2017-03-27", h, "+02:00") for h in range(24)]
    readings += [("2017-10-29", h, "+02:00") for h in range(3)] + [("2017-10-29", h, "+01:00") for h in range(2, 24)]
    for day, hour, offset in readings:
        lines.append("%sT%02d:00:00%s,w1,%s" % (day, hour, offset, hour / 2.0))

    runez.write("raw.csv", "\n".join(lines) + "\n", logger=None)
    dataset = load_csv("raw.csv", "meta.csv")
    assert dataset.resolution_hours == 1.0
    assert dataset.samples.shape == (2, 1, 24)

    # The 23h and 25h switch days are incomplete, the others are read at local wall time
    assert dataset.dropped_days == 2
    assert "dropped 2 incomplete day(s)" in logged
    assert dataset.samples[0, 0, 5] == 0.25
    assert np.array_equal(dataset.samples[0], dataset.samples[1])

    runez.write("utc.csv", "\n".join(line.replace("+01:00", "Z") for line in lines[:25]) + "\n", logger=None)
    assert load_csv("utc.csv", "meta.csv").samples.shape == (1, 1, 24)


def test_normalize():
    assert normalize([0.0, 5.0, 12.0, -1.0], 10.0).tolist() == [0.0, 0.5, 1.0, 0.0]
    assert normalize(np.array([2.0, 2.0]), np.array([4.0, 1.0])).tolist() == [0.5, 1.0]
    assert TERRAINS == ("flatland", "forest", "offshore", "solar")


def test_split():
    train, test = split_indices(10, train_fraction=0.8, seed=0)
    assert len(train) == 8 and len(test) == 2
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(10))
    assert list(train) == sorted(train)

    again = split_indices(10, train_fraction=0.8, seed=0)
    assert np.array_equal(again[0], train)

    # At least one sample on each side
    assert [len(x) for x in split_indices(3, train_fraction=0.99)] == [2, 1]
    assert [len(x) for x in split_indices(3, train_fraction=0.01)] == [1, 2]

    dataset = tiny_dataset(n=20)
    train_set, test_set = split(dataset, train_fraction=0.75, seed=4)
    assert (len(train_set), len(test_set)) == (15, 5)
    assert not set(train_set.day_index) & set(test_set.day_index)

    with pytest.raises(ConfigurationError):
        split_indices(1)

    with pytest.raises(ConfigurationError):
        split_indices(10, train_fraction=1.0)
