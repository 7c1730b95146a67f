"""
Desk-scale training runs, minutes each: enabled via RENEWGAN_SLOW=1
"""

import os

import numpy as np
import pytest
import runez

from renewgan import copula, evaluation, gan
from renewgan.data import split
from renewgan.evaluation import uniform_scenarios
from renewgan.gan import GanConfig
from renewgan.synth import SynthConfig, synthesize


pytestmark = pytest.mark.skipif(not os.environ.get("RENEWGAN_SLOW"), reason="Set RENEWGAN_SLOW=1 to run desk-scale training")

SEEDS = (1, 2, 3)


def desk_run(seed, epochs=2000):
    """Train on 400 synthetic wind days, evaluate against the 100 held-out ones"""
    dataset = synthesize(SynthConfig.from_dict({"preset": "desk-wind", "n_days": 500, "seed": seed}))
    train, test = split(dataset, train_fraction=0.8, seed=seed)
    model = gan.train(train, GanConfig.from_dict({"preset": "desk-wind", "epochs": epochs, "seed": seed, "log_every": 100}))
    generated = gan.sample(model, len(test), seed=seed)
    baseline = copula.sample(copula.fit(train), len(test), seed=seed)
    report = evaluation.evaluate(test, [generated, baseline, uniform_scenarios(test, seed=seed)])
    return train, generated, report


@pytest.fixture(scope="module")
def desk_runs():
    return [desk_run(seed) for seed in SEEDS]


def passing(runs, check):
    return sum(1 for run in runs if check(*run))


def test_kld_ordering(desk_runs):
    def better_than_noise(train, generated, report):
        klds = report.kld_global
        return klds["dc-wgan"] < klds["uniform"] and klds["dc-wgan"] < 0.5 and klds["gc"] < klds["uniform"]

    assert passing(desk_runs, better_than_noise) >= 2


def test_terrain_means(desk_runs):
    def close_means(train, generated, report):
        means = {t: generated.terrain_values(t).mean() for t in ("flatland", "forest", "offshore")}
        if not means["offshore"] > means["forest"] > means["flatland"]:
            return False

        return all(abs(mean - train.terrain_values(t).mean()) < 0.05 for t, mean in means.items())

    assert passing(desk_runs, close_means) >= 2


def test_correlation_structure(desk_runs):
    for _, _, report in desk_runs:
        for matrices in (report.temporal, report.spatial):
            for matrix in matrices.values():
                assert np.allclose(matrix, matrix.T, atol=1e-12)
                assert np.allclose(np.diag(matrix), 1.0, atol=1e-12)

    def closer_than_noise(train, generated, report):
        gan_distance = report.correlation_distance("dc-wgan")
        noise_distance = report.correlation_distance("uniform")
        return all(gan_distance[k] < noise_distance[k] for k in ("temporal", "spatial"))

    assert passing(desk_runs, closer_than_noise) >= 2


def test_stress_ranges(desk_runs):
    for _, _, report in desk_runs:
        for stress in report.stress.values():
            assert stress.integrals.min() >= 0
            assert stress.integrals.max() <= 24

    solar = synthesize(SynthConfig.from_dict({"preset": "desk-solar", "n_days": 200, "first_day_of_year": 90, "seed": 1}))
    assert evaluation.stress_integral(solar).integrals.max() <= 4.0


def test_reproducible(temp_folder):
    first = desk_run(4, epochs=50)
    second = desk_run(4, epochs=50)
    first[2].save("first")
    second[2].save("second")
    assert np.array_equal(first[1].samples, second[1].samples)
    for name in sorted(os.listdir("first")):
        assert list(runez.readlines(os.path.join("first", name))) == list(runez.readlines(os.path.join("second", name)))
