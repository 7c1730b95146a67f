"""
Model files: GAN checkpoints and copula models share one interface (load, source tag, sample)
"""

import os

import runez

from renewgan import copula, gan
from renewgan.system import ArtifactIOError, CorruptArtifactError, LOG


LOADERS = {
    gan.GAN_FORMAT: (gan.TrainedModel, gan.sample),
    copula.COPULA_FORMAT: (copula.CopulaModel, copula.sample),
}


def checkpoint_name(source):
    """File name used for the model file of given source tag"""
    return "copula.json" if source == copula.SOURCE else "model.json"


def load_model(path):
    """
    Args:
        path (str): Path to a GAN checkpoint or copula model file

    Returns:
        (gan.TrainedModel | copula.CopulaModel): Loaded model
    """
    if not os.path.isfile(path):
        raise ArtifactIOError("Model file %s does not exist" % runez.short(path))

    data = runez.read_json(path, fatal=None, logger=None)
    if not isinstance(data, dict):
        raise CorruptArtifactError("Can't read model file %s" % runez.short(path))

    loader = LOADERS.get(data.get("format"))
    if loader is None:
        raise CorruptArtifactError("%s has unknown model format '%s'" % (runez.short(path), data.get("format")))

    model = loader[0].from_dict(data, source=runez.short(path))
    LOG.debug("Loaded %s", model)
    return model


def sample_model(model, n, seed=0):
    """
    Args:
        model (gan.TrainedModel | copula.CopulaModel): Model to sample from
        n (int): Number of scenarios
        seed (int): Seed of the draws

    Returns:
        (renewgan.data.ScenarioDataset): Scenarios tagged with the model's source
    """
    for cls, sampler in LOADERS.values():
        if isinstance(model, cls):
            return sampler(model, n, seed=seed)

    raise TypeError("Can't sample from %s" % type(model).__name__)
