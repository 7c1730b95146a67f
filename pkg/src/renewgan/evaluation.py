"""
Compare generated scenarios with held-out real ones

- power distributions: Gaussian KDE on a fixed grid, compared with the symmetrized Kullback-Leibler divergence,
  over all farms and per terrain
- temporal (H x H) and spatial (P x P) Pearson correlation matrices
- stress integrals: per farm and day sum of normalized power, with their histogram
- mean, variance and skewness per terrain
"""

import os

import numpy as np
import pandas as pd
import runez
from scipy.integrate import trapezoid
from scipy.stats import skew
from sklearn.neighbors import KernelDensity

from renewgan.data import ScenarioDataset, TERRAINS
from renewgan.system import ArtifactIOError, ConfigurationError, LOG, seeded_rng, UsageError


GRID = np.linspace(-0.05, 1.05, 1024)
BANDWIDTH = 0.01
DENSITY_FLOOR = 1e-12
STRESS_BINS = 48
UNIFORM_STREAM = 6

# Published full-scale results on the original datasets, for orientation only: not reproducible at desk scale
REFERENCE_KLD = {
    "global": {
        "europe-wind-2015": {"gc": 0.068, "dc-gan": 0.663, "dc-wgan": 0.029},
        "german-solar-2015": {"gc": 0.042, "dc-gan": 0.011, "dc-wgan": 0.011},
        "german-wind-2017": {"gc": 0.062, "dc-gan": 0.218, "dc-wgan": 0.027},
        "german-solar-2017": {"gc": 0.034, "dc-gan": 0.942, "dc-wgan": 0.008},
    },
    "terrain": {
        "flatland": {"gc": 0.143, "dc-gan": 0.194, "dc-wgan": 0.037, "farms": 32},
        "forest": {"gc": 0.085, "dc-gan": 0.266, "dc-wgan": 0.018, "farms": 10},
        "offshore": {"gc": 0.148, "dc-gan": 0.304, "dc-wgan": 0.046, "farms": 4},
    },
    "terrain_dataset": "german-wind-2017",
    "epochs": 50000,
}


class Pdf:
    """Probability density evaluated on an evenly spaced grid"""

    def __init__(self, grid, densities, bandwidth=None):
        self.grid = np.asarray(grid, dtype=np.float64)
        self.densities = np.asarray(densities, dtype=np.float64)
        self.bandwidth = bandwidth
        if self.grid.shape != self.densities.shape:
            raise ConfigurationError("Pdf grid and densities differ in shape")

    def __repr__(self):
        return "Pdf(%s points, bandwidth %s)" % (self.grid.size, self.bandwidth)

    def integral(self):
        return float(trapezoid(self.densities, self.grid))

    def at(self, x):
        """Density at `x`, linearly interpolated between grid points"""
        return np.interp(x, self.grid, self.densities)


def kde_density(values, x, bandwidth=BANDWIDTH):
    """
    Args:
        values (numpy.ndarray | list): Observations
        x (numpy.ndarray | list | float): Where to evaluate the density
        bandwidth (float): Gaussian kernel standard deviation

    Returns:
        (numpy.ndarray): (1 / (n * h)) * sum of standard normal pdf((x - xi) / h), at each `x`
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if values.size == 0:
        raise UsageError("Can't estimate a density from 0 values")

    if not bandwidth > 0:
        raise ConfigurationError("bandwidth must be positive, got %s" % bandwidth)

    kde = KernelDensity(kernel="gaussian", bandwidth=bandwidth).fit(values[:, None])
    return np.exp(kde.score_samples(x[:, None]))


def kde_fit(values, bandwidth=BANDWIDTH):
    """
    Args:
        values (numpy.ndarray | list): Normalized power values
        bandwidth (float): Gaussian kernel standard deviation

    Returns:
        (Pdf): Kernel density estimate on the standard grid over [-0.05, 1.05]
    """
    return Pdf(GRID, kde_density(values, GRID, bandwidth=bandwidth), bandwidth=bandwidth)


def kld(p, q):
    """
    Args:
        p (Pdf): Reference density
        q (Pdf): Approximating density, on the same grid

    Returns:
        (float): Kullback-Leibler divergence D(p || q), trapezoid-integrated, both densities floored at 1e-12
    """
    if p.grid.shape != q.grid.shape or not np.array_equal(p.grid, q.grid):
        raise ConfigurationError("Can't compare densities evaluated on different grids")

    pf = np.maximum(p.densities, DENSITY_FLOOR)
    qf = np.maximum(q.densities, DENSITY_FLOOR)
    return float(trapezoid(pf * np.log(pf / qf), p.grid))


def symmetric_kld(p, q):
    """D(p || q) + D(q || p)"""
    return kld(p, q) + kld(q, p)


def pearson_matrix(columns):
    """
    Args:
        columns (numpy.ndarray): Shape (observations, k)

    Returns:
        (numpy.ndarray): k x k Pearson correlation, symmetric with unit diagonal, 0 off-diagonal for constant columns
    """
    if columns.shape[0] < 2:
        raise UsageError("Correlation needs at least 2 observations, got %s" % columns.shape[0])

    centered = columns - columns.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    constant = norms == 0
    if constant.any():
        LOG.warning("%s constant column(s), their correlations are set to 0", int(constant.sum()))
        norms[constant] = 1.0

    result = (centered.T @ centered) / np.outer(norms, norms)
    result = (result + result.T) / 2.0
    np.fill_diagonal(result, 1.0)
    return np.clip(result, -1.0, 1.0)


def _check_samples(dataset):
    if len(dataset) < 2:
        raise UsageError("%s: correlation needs at least 2 samples, got %s" % (dataset.source, len(dataset)))


def temporal_correlation(dataset):
    """H x H Pearson correlation between time steps, pooled over all samples and farms"""
    _check_samples(dataset)
    return pearson_matrix(dataset.samples.reshape(-1, dataset.horizon))


def spatial_correlation(dataset):
    """P x P Pearson correlation between farms, pooled over all samples and time steps"""
    _check_samples(dataset)
    return pearson_matrix(dataset.samples.transpose(0, 2, 1).reshape(-1, dataset.parks))


class StressHistogram:
    """Per (sample, farm) sum of normalized power over the day, and its histogram over [0, H]"""

    def __init__(self, integrals, edges, counts):
        self.integrals = integrals
        self.edges = edges
        self.counts = counts

    def __repr__(self):
        return "stress: %s integrals, max %.3f" % (self.integrals.size, self.integrals.max())

    def to_frame(self):
        return pd.DataFrame({"bin_left": self.edges[:-1], "bin_right": self.edges[1:], "count": self.counts})

    def to_dict(self):
        return {"max": float(self.integrals.max()), "mean": float(self.integrals.mean()), "count": int(self.integrals.size)}


def stress_integral(dataset, bins=STRESS_BINS):
    """
    Args:
        dataset (ScenarioDataset): Samples to integrate
        bins (int): Number of equal histogram bins over [0, H]

    Returns:
        (StressHistogram): Integrals of shape (n, P), unit step weights (max: H)
    """
    integrals = dataset.samples.sum(axis=2)
    counts, edges = np.histogram(integrals.ravel(), bins=bins, range=(0.0, float(dataset.horizon)))
    return StressHistogram(integrals, edges, counts)


class Moments:
    """Sample mean, unbiased variance and adjusted Fisher-Pearson skewness"""

    def __init__(self, mean, variance, skewness, degenerate=False):
        self.mean = mean
        self.variance = variance
        self.skewness = skewness
        self.degenerate = degenerate  # True when variance is 0, skewness is then reported as 0

    def __repr__(self):
        flag = " (degenerate)" if self.degenerate else ""
        return "mean %.4f, variance %.4f, skewness %.4f%s" % (self.mean, self.variance, self.skewness, flag)

    def to_dict(self):
        return {"mean": self.mean, "variance": self.variance, "skewness": self.skewness, "degenerate": self.degenerate}


def moments(values):
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 3:
        raise UsageError("Moments need at least 3 values, got %s" % values.size)

    if np.ptp(values) == 0:
        return Moments(float(values[0]), 0.0, 0.0, degenerate=True)

    return Moments(float(values.mean()), float(values.var(ddof=1)), float(skew(values, bias=False)))


def uniform_scenarios(like, n=None, seed=0):
    """
    Args:
        like (ScenarioDataset): Dataset whose farms and horizon to mimic
        n (int | None): Number of samples (default: same as `like`)
        seed (int): Seed

    Returns:
        (ScenarioDataset): i.i.d. uniform [0, 1] noise, the naive baseline any model should beat
    """
    n = len(like) if n is None else n
    samples = seeded_rng(seed, UNIFORM_STREAM).uniform(0.0, 1.0, (n, like.parks, like.horizon))
    return ScenarioDataset(samples, like.farms, like.resolution_hours, source="uniform")


def _by_source(generated):
    if isinstance(generated, ScenarioDataset):
        generated = [generated]

    if not isinstance(generated, dict):
        result = {}
        for dataset in generated:
            if dataset.source in result:
                raise ConfigurationError("Two generated datasets are tagged '%s'" % dataset.source)

            result[dataset.source] = dataset

        generated = result

    if "real" in generated:
        raise ConfigurationError("'real' can't be used as a model name")

    return dict(generated)


def _check_compatible(real, generated):
    for name, dataset in generated.items():
        if not real.compatible_with(dataset):
            raise ConfigurationError(
                "%s: %sx%s samples for farms %s don't match real %sx%s"
                % (name, dataset.parks, dataset.horizon, runez.short(dataset.farm_ids), real.parks, real.horizon)
            )


class TerrainEval:
    """KLD between real and each model, over all farms and per terrain, along with the underlying densities"""

    def __init__(self):
        self.kld_global = {}
        self.kld_by_terrain = {}
        self.farm_counts = {}
        self.pdfs = {}  # scope ("all" or terrain) -> source -> Pdf
        self.omitted = []

    def __repr__(self):
        return "terrain eval of %s model(s) over %s terrain(s)" % (len(self.kld_global), len(self.kld_by_terrain))


def terrain_group_eval(real, generated, bandwidth=BANDWIDTH):
    """
    Args:
        real (ScenarioDataset): Held-out real samples
        generated (dict[str, ScenarioDataset] | list[ScenarioDataset]): Generated samples, per model
        bandwidth (float): KDE bandwidth

    Returns:
        (TerrainEval): Symmetric KLD per model, globally and per terrain (terrains without farms are omitted)
    """
    generated = _by_source(generated)
    _check_compatible(real, generated)
    result = TerrainEval()
    scopes = [("all", None)]
    for terrain in TERRAINS:
        if real.farm_indices(terrain):
            scopes.append((terrain, terrain))

        else:
            result.omitted.append(terrain)

    if result.omitted:
        LOG.debug("No farms for terrain(s) %s, omitted", ", ".join(result.omitted))

    for scope, terrain in scopes:
        real_pdf = kde_fit(real.terrain_values(terrain), bandwidth=bandwidth)
        pdfs = {"real": real_pdf}
        klds = {}
        for name, dataset in generated.items():
            pdfs[name] = kde_fit(dataset.terrain_values(terrain), bandwidth=bandwidth)
            klds[name] = symmetric_kld(real_pdf, pdfs[name])

        result.pdfs[scope] = pdfs
        if terrain is None:
            result.kld_global = klds

        else:
            result.kld_by_terrain[terrain] = klds
            result.farm_counts[terrain] = len(real.farm_indices(terrain))

    return result


class EvalReport:
    """All evaluation results for a set of models against the same real samples"""

    def __init__(self, real, terrain, temporal, spatial, stress, moments):
        """
        Args:
            real (ScenarioDataset): Real samples evaluated against
            terrain (TerrainEval): KLDs and densities
            temporal (dict[str, numpy.ndarray]): H x H correlation, per source ("real" included)
            spatial (dict[str, numpy.ndarray]): P x P correlation, per source
            stress (dict[str, StressHistogram]): Stress integrals, per source
            moments (dict[str, dict[str, Moments]]): Moments per source, per scope ("all" or terrain)
        """
        self.real = real
        self.terrain = terrain
        self.temporal = temporal
        self.spatial = spatial
        self.stress = stress
        self.moments = moments
        self.reference_kld = REFERENCE_KLD

    def __repr__(self):
        return "evaluation of %s against %s" % (", ".join(self.models), self.real)

    @property
    def models(self):
        return list(self.terrain.kld_global)

    @property
    def kld_global(self):
        return self.terrain.kld_global

    @property
    def kld_by_terrain(self):
        return self.terrain.kld_by_terrain

    def correlation_distance(self, model):
        """Frobenius distance of `model`'s temporal and spatial correlation matrices to the real ones"""
        return {
            "temporal": float(np.linalg.norm(self.temporal[model] - self.temporal["real"])),
            "spatial": float(np.linalg.norm(self.spatial[model] - self.spatial["real"])),
        }

    def to_dict(self):
        return {
            "real": {"source": self.real.source, "samples": len(self.real), "parks": self.real.parks, "horizon": self.real.horizon},
            "kld_global": self.kld_global,
            "kld_by_terrain": self.kld_by_terrain,
            "farms_by_terrain": self.terrain.farm_counts,
            "omitted_terrains": self.terrain.omitted,
            "correlation_distance": {m: self.correlation_distance(m) for m in self.models},
            "stress": {k: v.to_dict() for k, v in self.stress.items()},
            "moments": {k: {s: m.to_dict() for s, m in v.items()} for k, v in self.moments.items()},
            "reference_kld": self.reference_kld,
        }

    def kld_frames(self):
        """
        Returns:
            (pandas.DataFrame, pandas.DataFrame): Global KLD (one column per model), and per terrain KLD (plus farm count)
        """
        global_frame = pd.DataFrame([dict(scope="all", **self.kld_global)], columns=["scope"] + self.models)
        rows = [dict(terrain=t, farms=self.terrain.farm_counts[t], **k) for t, k in self.kld_by_terrain.items()]
        terrain_frame = pd.DataFrame(rows, columns=["terrain"] + self.models + ["farms"])
        return global_frame, terrain_frame

    def save(self, folder):
        """Write report.json plus csv files (KLD tables, correlation matrices, stress histograms, densities) to `folder`"""
        runez.save_json(self.to_dict(), os.path.join(folder, "report.json"), fatal=ArtifactIOError, logger=None)
        global_frame, terrain_frame = self.kld_frames()
        frames = {"kld_global": global_frame, "kld_terrain": terrain_frame}
        steps = ["step_%s" % i for i in range(self.real.horizon)]
        for source, matrix in self.temporal.items():
            frames["temporal_corr_%s" % source] = pd.DataFrame(matrix, index=steps, columns=steps)

        for source, matrix in self.spatial.items():
            frames["spatial_corr_%s" % source] = pd.DataFrame(matrix, index=self.real.farm_ids, columns=self.real.farm_ids)

        for source, stress in self.stress.items():
            frames["stress_%s" % source] = stress.to_frame()

        for scope, pdfs in self.terrain.pdfs.items():
            densities = {"x": GRID}
            densities.update((source, pdf.densities) for source, pdf in pdfs.items())
            frames["pdf_%s" % scope] = pd.DataFrame(densities)

        try:
            for name, frame in frames.items():
                index = name.startswith(("temporal_corr", "spatial_corr"))
                frame.to_csv(os.path.join(folder, "%s.csv" % name), index=index)

        except OSError as e:
            raise ArtifactIOError("Can't write report to %s: %s" % (runez.short(folder), e))

        LOG.debug("Saved %s files to %s", len(frames) + 1, runez.short(folder))


def evaluate(real, generated, bandwidth=BANDWIDTH):
    """
    Args:
        real (ScenarioDataset): Held-out real samples
        generated (dict[str, ScenarioDataset] | list[ScenarioDataset]): Generated samples, per model
        bandwidth (float): KDE bandwidth

    Returns:
        (EvalReport): Full evaluation
    """
    generated = _by_source(generated)
    terrain = terrain_group_eval(real, generated, bandwidth=bandwidth)
    sources = dict(real=real)
    sources.update(generated)
    temporal = {name: temporal_correlation(d) for name, d in sources.items()}
    spatial = {name: spatial_correlation(d) for name, d in sources.items()}
    stress = {name: stress_integral(d) for name, d in sources.items()}
    scopes = ["all"] + list(terrain.kld_by_terrain)
    stats = {}
    for name, dataset in sources.items():
        stats[name] = {scope: moments(dataset.terrain_values(None if scope == "all" else scope)) for scope in scopes}

    return EvalReport(real, terrain, temporal, spatial, stress, stats)
