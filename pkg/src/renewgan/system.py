"""
Base functionality used by other parts of `renewgan`.

This module should not import any other `renewgan` module, to avoid circular deps.
"""

import logging

import numpy as np


LOG = logging.getLogger("renewgan")


class RenewganError(Exception):
    """Base of all errors raised by renewgan, `exit_code` is what the CLI exits with"""

    exit_code = 1

    def __init__(self, message):
        super().__init__(message)
        self.message = message

    def __str__(self):
        return self.message


class ConfigurationError(RenewganError, ValueError):
    """Invalid configuration, or shapes that can't work together"""

    exit_code = 2


class UsageError(RenewganError, ValueError):
    """API called in a way that can't be satisfied (eg: backward() on a non-scalar)"""

    exit_code = 2


class ArtifactIOError(RenewganError):
    """Input missing or output not writable"""

    exit_code = 3


class NumericalError(RenewganError):
    """Training produced a non-finite loss"""

    exit_code = 4

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class CorruptArtifactError(RenewganError):
    """A model file or archive could not be understood"""

    exit_code = 5


def seeded_rng(seed, *stream):
    """
    Args:
        seed (int): Root seed
        *stream (int): Optional sub-stream identifiers, allows independent generators per concern

    Returns:
        (numpy.random.Generator): Deterministic generator for given seed and stream
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


def require_finite(value, what, epoch=None):
    """
    Args:
        value (float | numpy.ndarray): Value to check
        what (str): What `value` is, used in error message
        epoch (int | None): Epoch being trained, if applicable

    Returns:
        Given `value`, when it is finite
    """
    if not np.all(np.isfinite(value)):
        where = " at epoch %s" % epoch if epoch is not None else ""
        raise NumericalError("Non-finite %s%s" % (what, where), epoch=epoch)

    return value


def pair(value, name="value"):
    """
    Args:
        value (int | list | tuple): Single int (applied to both axes) or (height, width) pair
        name (str): Name used in error messages

    Returns:
        (tuple): (height, width)
    """
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigurationError("%s: expecting an int or a pair, got %s" % (name, list(value)))

        return int(value[0]), int(value[1])

    return int(value), int(value)
