import os

import numpy as np
import pytest
from runez.conftest import cli, isolated_log_setup, logged, temp_folder

from renewgan.__main__ import main
from renewgan.data import FarmMeta, ScenarioDataset
from renewgan.synth import SynthConfig, synthesize


cli.default_main = main

SAMPLES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "sample")

# This is here only to satisfy flake8, mentioning the imported fixtures so they're not declared "unused"
assert all(s for s in [cli, isolated_log_setup, logged, temp_folder])


def sample_path(*relative):
    return os.path.join(SAMPLES, *relative)


def tiny_dataset(n=12, parks_per_terrain=None, horizon=24, seed=0, source="real"):
    """Random dataset of `n` samples, farms named like the synthetic ones"""
    parks_per_terrain = parks_per_terrain or {"flatland": 2, "forest": 1, "offshore": 1}
    farms = []
    for terrain, count in parks_per_terrain.items():
        for i in range(count):
            farms.append(FarmMeta("%s-%02d" % (terrain, i + 1), terrain, 10.0 + i))

    samples = np.random.default_rng(seed).uniform(0.0, 1.0, (n, len(farms), horizon))
    return ScenarioDataset(samples, farms, 24.0 / horizon, source=source)


@pytest.fixture
def desk_wind():
    """Small synthetic wind dataset with the desk-wind farm layout (8 x 24)"""
    return synthesize(SynthConfig.from_dict({"preset": "desk-wind", "n_days": 60, "seed": 3}))


@pytest.fixture
def desk_solar():
    """Small synthetic solar dataset with the desk-solar farm layout (8 x 8), spring days"""
    return synthesize(SynthConfig.from_dict({"preset": "desk-solar", "n_days": 60, "first_day_of_year": 120, "seed": 3}))
