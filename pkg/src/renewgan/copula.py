"""
Gaussian copula baseline over the flattened P * H dimensions of day samples

Marginals are the empirical distributions of each dimension (sorted observed values, inverted by linear
interpolation), dependence is a Gaussian correlation matrix derived from Spearman rank correlations.
"""

import numpy as np
import runez
from scipy.stats import norm, rankdata

from renewgan.data import FarmMeta, ScenarioDataset
from renewgan.system import ArtifactIOError, ConfigurationError, CorruptArtifactError, LOG, seeded_rng, UsageError


COPULA_FORMAT = "renewgan-copula/1"
SOURCE = "gc"
MIN_SAMPLES = 10
SAMPLE_STREAM = 5


class CopulaModel:
    """Empirical marginals plus Gaussian dependence structure"""

    def __init__(self, farms, resolution_hours, marginals, correlation):
        """
        Args:
            farms (list[FarmMeta]): Farms of the fitted dataset
            resolution_hours (float): Time resolution of the fitted dataset
            marginals (numpy.ndarray): Shape (m, D), sorted observed values of each of the D = P * H dimensions
            correlation (numpy.ndarray): Shape (D, D), Gaussian correlation matrix
        """
        self.farms = list(farms)
        self.resolution_hours = float(resolution_hours)
        self.marginals = np.asarray(marginals, dtype=np.float64)
        self.correlation = np.asarray(correlation, dtype=np.float64)
        dims = len(self.farms) * self.horizon
        if self.marginals.ndim != 2 or self.marginals.shape[1] != dims or self.marginals.shape[0] < 2:
            raise CorruptArtifactError("Marginals must have shape [m, %s], got %s" % (dims, list(self.marginals.shape)))

        if self.correlation.shape != (dims, dims):
            raise CorruptArtifactError("Correlation must have shape [%s, %s], got %s" % (dims, dims, list(self.correlation.shape)))

    def __repr__(self):
        return "%s model for %sx%s (%s observations)" % (SOURCE, self.parks, self.horizon, self.marginals.shape[0])

    @property
    def source(self):
        return SOURCE

    @property
    def parks(self):
        return len(self.farms)

    @property
    def horizon(self):
        return int(round(24 / self.resolution_hours))

    @property
    def dims(self):
        return self.marginals.shape[1]

    def to_dict(self):
        return {
            "format": COPULA_FORMAT,
            "farms": [f.to_dict() for f in self.farms],
            "resolution_hours": self.resolution_hours,
            "dims": self.dims,
            "marginals": self.marginals.tolist(),
            "correlation": self.correlation.tolist(),
        }

    def save(self, path):
        runez.save_json(self.to_dict(), path, indent=None, fatal=ArtifactIOError, logger=None)
        LOG.debug("Saved %s to %s", self, runez.short(path))

    @classmethod
    def from_dict(cls, data, source=None):
        source = source or "model"
        if not isinstance(data, dict) or data.get("format") != COPULA_FORMAT:
            raise CorruptArtifactError("%s is not a %s model" % (source, COPULA_FORMAT))

        try:
            farms = [FarmMeta(**f) for f in data["farms"]]
            model = cls(farms, data["resolution_hours"], data["marginals"], data["correlation"])

        except CorruptArtifactError as e:
            raise CorruptArtifactError("%s: %s" % (source, e))

        except (ConfigurationError, KeyError, TypeError, ValueError) as e:
            raise CorruptArtifactError("%s is corrupt: %s" % (source, e))

        if model.dims != data.get("dims"):
            raise CorruptArtifactError("%s: declares %s dimensions, holds %s" % (source, data.get("dims"), model.dims))

        return model

    @classmethod
    def load(cls, path):
        data = runez.read_json(path, fatal=None)
        if data is None:
            raise CorruptArtifactError("Can't read copula model %s" % runez.short(path))

        return cls.from_dict(data, source=runez.short(path))


def nearest_psd_correlation(matrix):
    """
    Args:
        matrix (numpy.ndarray): Symmetric matrix with unit diagonal, possibly with negative eigenvalues

    Returns:
        (numpy.ndarray): Positive semi-definite correlation matrix, negative eigenvalues clipped to 0 then rescaled to unit diagonal
    """
    symmetric = (matrix + matrix.T) / 2.0
    eigenvalues, eigenvectors = np.linalg.eigh(symmetric)
    if eigenvalues.min() < 0:
        repaired = (eigenvectors * np.clip(eigenvalues, 0.0, None)) @ eigenvectors.T
        scale = np.sqrt(np.diag(repaired))
        scale[scale == 0] = 1.0
        symmetric = repaired / np.outer(scale, scale)
        symmetric = (symmetric + symmetric.T) / 2.0

    np.fill_diagonal(symmetric, 1.0)
    return symmetric


def spearman_matrix(values):
    """
    Args:
        values (numpy.ndarray): Shape (n, D)

    Returns:
        (numpy.ndarray): D x D Spearman rank correlation, 0 off-diagonal for constant dimensions
    """
    ranks = rankdata(values, axis=0)
    centered = ranks - ranks.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    constant = norms == 0
    if constant.any():
        LOG.warning("%s constant dimension(s), their rank correlations are set to 0", int(constant.sum()))
        norms[constant] = 1.0

    result = (centered.T @ centered) / np.outer(norms, norms)
    np.fill_diagonal(result, 1.0)
    return np.clip(result, -1.0, 1.0)


def fit(dataset):
    """
    Args:
        dataset (ScenarioDataset): Training samples

    Returns:
        (CopulaModel): Fitted copula
    """
    if len(dataset) < MIN_SAMPLES:
        raise ConfigurationError("Copula fit needs at least %s samples, got %s" % (MIN_SAMPLES, len(dataset)))

    values = dataset.samples.reshape(len(dataset), -1)
    rank_correlation = spearman_matrix(values)
    gaussian = 2.0 * np.sin(np.pi * rank_correlation / 6.0)
    np.fill_diagonal(gaussian, 1.0)
    model = CopulaModel(dataset.farms, dataset.resolution_hours, np.sort(values, axis=0), nearest_psd_correlation(gaussian))
    LOG.debug("Fitted %s", model)
    return model


def sample(model, n, seed=0):
    """
    Args:
        model (CopulaModel): Fitted copula
        n (int): Number of scenarios to generate
        seed (int): Seed for the Gaussian draws

    Returns:
        (ScenarioDataset): `n` samples of shape P x H, within the observed per-dimension ranges
    """
    if n < 1:
        raise UsageError("Number of samples must be positive, got %s" % n)

    eigenvalues, eigenvectors = np.linalg.eigh(model.correlation)
    factor = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    gaussian = seeded_rng(seed, SAMPLE_STREAM).standard_normal((n, model.dims)) @ factor.T
    uniform = norm.cdf(gaussian)
    observed = model.marginals
    positions = np.linspace(0.0, 1.0, observed.shape[0])
    values = np.empty_like(uniform)
    for d in range(model.dims):
        values[:, d] = np.interp(uniform[:, d], positions, observed[:, d])

    samples = np.clip(values, 0.0, 1.0).reshape(n, model.parks, model.horizon)
    return ScenarioDataset(samples, model.farms, model.resolution_hours, source=SOURCE)
