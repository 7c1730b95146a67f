"""
Run configuration: one JSON file (key-value tree) per invocation, overridable from the command line

Keys are addressed with dots (eg: `train.gan.epochs`), values come from (first one wins):
- `--set key=value` overrides (and `--seed` / `--out`)
- the JSON file given via `--config`
- built-in defaults (desk-scale)
"""

import os

import runez
from runez.config import Configuration, DictProvider

from renewgan.evaluation import BANDWIDTH
from renewgan.gan import GanConfig
from renewgan.synth import SynthConfig
from renewgan.system import ArtifactIOError, ConfigurationError, LOG


BASELINES = ("copula",)

DEFAULTS = {
    "seed": 0,
    "out": ".",
    "synth": {"preset": "desk-wind"},
    "train": {
        "dataset": "dataset",
        "train_fraction": 0.8,
    },
    "generate": {"n": 100},
    "evaluate": {"bandwidth": BANDWIDTH, "train_fraction": 0.8},
}


def flattened_keys(data, prefix=None):
    """
    Args:
        data (dict): Key-value tree
        prefix (str | None): Prefix of keys of `data`

    Returns:
        (dict): Leaves of `data` keyed by their dotted path, None values omitted
    """
    result = {}
    for key, value in data.items():
        path = "%s.%s" % (prefix, key) if prefix else str(key)
        if isinstance(value, dict) and value:
            result.update(flattened_keys(value, prefix=path))

        elif value is not None and value != {}:
            result[path] = value

    return result


def parsed_override(value):
    """Command line values are strings, JSON lists/dicts are decoded, an empty value unsets the key"""
    if not isinstance(value, str):
        return value

    value = value.strip()
    if not value:
        return None

    if value[0] in "[{":
        decoded = runez.from_json(value, default=None, fatal=None, logger=None)
        if decoded is None:
            raise ConfigurationError("Invalid json value '%s'" % runez.short(value))

        return decoded

    return value


class RunConfig:
    """Layered configuration of one command invocation"""

    def __init__(self, path=None, overrides=None, seed=None, out=None):
        """
        Args:
            path (str | None): JSON config file
            overrides (dict | None): Dotted keys given on the command line, highest priority
            seed (int | None): Global seed override
            out (str | None): Output folder override
        """
        self.path = path
        self.unset = set()
        given = {}
        for key, value in (overrides or {}).items():
            if not key:
                raise ConfigurationError("Invalid override '=%s', expecting KEY=VALUE" % value)

            value = parsed_override(value)
            if value is None:
                self.unset.add(key)

            else:
                given[key] = value

        if seed is not None:
            given["seed"] = seed

        if out is not None:
            given["out"] = out

        self.config = Configuration()
        self.config.add(DictProvider(given, name="--set"))
        if path:
            self.config.add(DictProvider(flattened_keys(self._read(path)), name=runez.short(path)))

        self.config.add(DictProvider(flattened_keys(DEFAULTS), name="defaults"))
        LOG.debug("Config providers: %s", self.config.overview())

    def __repr__(self):
        return self.config.overview()

    @staticmethod
    def _read(path):
        if not os.path.isfile(path):
            raise ArtifactIOError("Config file %s does not exist" % runez.short(path))

        data = runez.read_json(path, fatal=None, logger=None)
        if not isinstance(data, dict):
            raise ConfigurationError("Config file %s is not a JSON object" % runez.short(path))

        return data

    def get(self, key, default=None):
        if key in self.unset:
            return default

        return self.config.get(key, default=default)

    @property
    def seed(self):
        value = self.get("seed")
        seed = runez.to_int(value)
        if seed is None or seed < 0:
            raise ConfigurationError("seed: expecting a non-negative int, got '%s'" % value)

        return seed

    @property
    def out(self):
        return self.get("out")

    def section(self, name):
        """
        Args:
            name (str): Dotted path of a section (eg: "train.gan")

        Returns:
            (dict): Key-value tree of the section, with all layers applied
        """
        prefix = "%s." % name
        result = {}
        for key, value in sorted(self.config.values.items()):
            if value is None or key in self.unset or not key.startswith(prefix):
                continue

            parts = key[len(prefix):].split(".")
            node = result
            for part in parts[:-1]:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigurationError("%s%s is not a section" % (prefix, part))

            node[parts[-1]] = value

        return result

    def number(self, key, minimum=None, maximum=None, integer=False):
        """Numeric value of `key`, range-checked"""
        value = self.get(key)
        number = runez.to_int(value) if integer else runez.to_float(value)
        if number is None:
            raise ConfigurationError("%s: expecting %s, got '%s'" % (key, "int" if integer else "float", value))

        if (minimum is not None and number < minimum) or (maximum is not None and number > maximum):
            raise ConfigurationError("%s: %s is out of range [%s, %s]" % (key, number, minimum, maximum))

        return number

    def _serializable(self, cls, name, validate=True):
        """`cls` instance from section `name`, type problems are reported with their full dotted key"""
        data = self.section(name)
        data.setdefault("seed", self.seed)
        attributes = cls._meta.attributes
        for key, value in sorted(data.items()):
            schema_type = attributes.get(key)
            if schema_type is None:
                raise ConfigurationError("%s.%s: unknown setting (expecting one of %s)" % (name, key, ", ".join(sorted(attributes))))

            problem = schema_type.problem(value)
            if problem:
                raise ConfigurationError("%s.%s: %s" % (name, key, problem))

        config = cls.from_dict(data, source=name)
        if validate:
            try:
                config.validate()

            except ConfigurationError as e:
                raise ConfigurationError("%s.%s" % (name, e.message))

        return config

    def synth_config(self):
        """
        Returns:
            (SynthConfig): Resolved `synth` section (preset defaults filled in)
        """
        config = self._serializable(SynthConfig, "synth", validate=False)
        try:
            return config.resolved()

        except ConfigurationError as e:
            raise ConfigurationError("synth.%s" % e.message)

    def gan_config(self):
        return self._serializable(GanConfig, "train.gan")

    @property
    def baseline(self):
        """Name of the non-GAN baseline to fit instead of training a GAN, if any"""
        baseline = self.get("train.baseline")
        if baseline is not None and baseline not in BASELINES:
            raise ConfigurationError("train.baseline: expecting one of %s, got '%s'" % (", ".join(BASELINES), baseline))

        return baseline
