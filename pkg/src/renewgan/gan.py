"""
Convolutional generator / discriminator pairs, trained either with binary cross-entropy (dc-gan)
or as a weight-clipped Wasserstein critic (dc-wgan)

The generator maps a 100-dim standard normal latent, seen as a [100, 1, 1] image, to a [1, P, H] scenario
through 4 transposed convolutions. The discriminator mirrors it with forward convolutions.
"""

import numpy as np
import runez
from runez.schema import Any, Enum, Float, Integer, List

from renewgan.data import FarmMeta, ScenarioDataset
from renewgan.layers import BatchNorm2d, Conv2d, conv_chain, ConvTranspose2d, LeakyReLU, Reshape, Sequential, Sigmoid
from renewgan.optim import Adam, clip_weights, max_abs, RMSProp
from renewgan.system import ArtifactIOError, ConfigurationError, CorruptArtifactError, LOG, require_finite, seeded_rng, UsageError
from renewgan.tensor import bce_loss, ConvSpec, Tensor


GAN_FORMAT = "renewgan-gan/1"
SOURCES = {"bce": "dc-gan", "wasserstein": "dc-wgan"}
INIT_STREAM = 1
SHUFFLE_STREAM = 2
LATENT_STREAM = 3
SAMPLE_STREAM = 4
SAMPLE_CHUNK = 256


class LayerTable:
    """Kernel, stride and padding of each of the 4 generator layers, for a given P x H scenario shape"""

    def __init__(self, parks, horizon, kernels, strides, paddings):
        self.parks = parks
        self.horizon = horizon
        self.kernels = kernels
        self.strides = strides
        self.paddings = paddings

    def __repr__(self):
        return "%sx%s layers" % (self.parks, self.horizon)


GAN_PRESETS = {
    "europe-wind-2015": LayerTable(32, 24, [(4, 3), 4, 4, 4], [1, 2, 2, 2], [0, 1, 1, 1]),
    "german-solar-2015": LayerTable(16, 8, [(2, 1), 4, 4, 4], [1, 2, 2, 2], [0, 1, 1, 1]),
    "german-wind-2017": LayerTable(48, 24, [3, 4, 4, 4], [1, 2, 2, (4, 2)], [0, 1, 1, (0, 1)]),
    "german-solar-2017": LayerTable(48, 8, [(3, 1), 4, 4, 4], [1, 2, 2, (4, 2)], [0, 1, 1, (0, 1)]),
    "desk-wind": LayerTable(8, 24, [(1, 3), 4, 4, 4], [1, 2, 2, 2], [0, 1, 1, 1]),
    "desk-solar": LayerTable(8, 8, [1, 4, 4, 4], [1, 2, 2, 2], [0, 1, 1, 1]),
}


class GanConfig(runez.Serializable, runez.serialize.with_behavior(strict=ConfigurationError, extras=ConfigurationError)):
    """Network layout and training hyperparameters"""

    preset = Enum(" ".join(sorted(GAN_PRESETS)), default=None)
    kernels = List(Any(), default=None)
    strides = List(Any(), default=None)
    paddings = List(Any(), default=None)
    channel_plan = List(Integer(), default=[100, 256, 128, 64, 1])
    loss_kind = Enum("bce wasserstein", default="wasserstein")
    epochs = Integer(default=2000)
    learning_rate = Float(default=2e-5)
    batch_size = Integer(default=64)
    critic_iters = Integer(default=5)
    clip_c = Float(default=0.01)
    leaky_slope = Float(default=0.2)
    beta1 = Float(default=0.5)
    beta2 = Float(default=0.999)
    rms_decay = Float(default=0.9)
    log_every = Integer(default=100)
    seed = Integer(default=0)

    def __repr__(self):
        return "%s, %s epochs" % (self.source, self.epochs)

    @property
    def source(self):
        """Source tag of the samples produced by a generator trained with this config"""
        return SOURCES[self.loss_kind]

    @property
    def latent_dim(self):
        return self.channel_plan[0]

    def validate(self):
        """Raise ConfigurationError if a field has an invalid value"""
        plan = self.channel_plan
        if len(plan) < 2 or plan[0] != 100 or plan[-1] != 1:
            raise ConfigurationError("channel_plan must start with 100 (latent) and end with 1, got %s" % plan)

        if any(c < 1 for c in plan):
            raise ConfigurationError("channel_plan entries must be positive, got %s" % plan)

        for name in ("epochs", "critic_iters", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigurationError("%s must be positive, got %s" % (name, getattr(self, name)))

        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be at least 2 (batch normalization), got %s" % self.batch_size)

        for name in ("learning_rate", "clip_c"):
            if not getattr(self, name) > 0:
                raise ConfigurationError("%s must be positive, got %s" % (name, getattr(self, name)))

        if not 0 < self.leaky_slope < 1:
            raise ConfigurationError("leaky_slope must be in (0, 1), got %s" % self.leaky_slope)

        for name in ("beta1", "beta2", "rms_decay"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigurationError("%s must be in [0, 1), got %s" % (name, getattr(self, name)))

    def layer_table(self, parks, horizon):
        """
        Args:
            parks (int): P, number of farms
            horizon (int): H, time steps per day

        Returns:
            (LayerTable): Explicitly configured layers, or the preset (named, or matching P x H)
        """
        if self.kernels or self.strides or self.paddings:
            return LayerTable(parks, horizon, self.kernels or [], self.strides or [], self.paddings or [])

        if self.preset:
            return GAN_PRESETS[self.preset]

        for table in GAN_PRESETS.values():
            if (table.parks, table.horizon) == (parks, horizon):
                return table

        raise ConfigurationError("No layer preset for %sx%s scenarios, configure kernels, strides and paddings" % (parks, horizon))

    def generator_specs(self, parks, horizon):
        """
        Args:
            parks (int): P, number of farms
            horizon (int): H, time steps per day

        Returns:
            (list[ConvSpec]): Transposed convolutions taking a 1x1 latent to exactly P x H
        """
        self.validate()
        table = self.layer_table(parks, horizon)
        specs = conv_chain(table.kernels, table.strides, table.paddings, self.channel_plan)
        validate_chain(specs, parks, horizon)
        return specs


def _chain_text(sizes):
    return " -> ".join("%sx%s" % s for s in sizes)


def validate_chain(specs, parks, horizon):
    """Raise ConfigurationError, listing per-layer sizes, if `specs` don't take a 1x1 latent to P x H (and back)"""
    sizes = [(1, 1)]
    for spec in specs:
        try:
            sizes.append(spec.transposed_output_size(sizes[-1]))

        except ConfigurationError as e:
            raise ConfigurationError("Generator chain %s breaks at %s: %s" % (_chain_text(sizes), spec, e))

    if sizes[-1] != (parks, horizon):
        raise ConfigurationError("Generator chain %s does not reach %sx%s" % (_chain_text(sizes), parks, horizon))

    back = [(parks, horizon)]
    for spec in reversed(specs):
        back.append(spec.output_size(back[-1]))

    if back[-1] != (1, 1):
        raise ConfigurationError("Discriminator chain %s does not reduce to 1x1" % _chain_text(back))

    return sizes


def build_generator(config, parks, horizon, rng=None):
    """
    Args:
        config (GanConfig): Layer layout
        parks (int): P, number of farms
        horizon (int): H, time steps per day
        rng (numpy.random.Generator | None): Used to initialize weights (default: seeded from config)

    Returns:
        (Sequential): latent [N, 100] -> (convT, batchnorm, leaky-relu) x 3 -> convT -> sigmoid -> [N, 1, P, H]
    """
    specs = config.generator_specs(parks, horizon)
    if rng is None:
        rng = seeded_rng(config.seed, INIT_STREAM, 0)

    layers = [Reshape(config.latent_dim, 1, 1)]
    for i, spec in enumerate(specs):
        layers.append(ConvTranspose2d(spec, rng))
        if i < len(specs) - 1:
            layers.append(BatchNorm2d(spec.out_channels, rng))
            layers.append(LeakyReLU(config.leaky_slope))

    layers.append(Sigmoid())
    return Sequential(*layers)


def build_discriminator(config, parks, horizon, rng=None):
    """
    Args:
        config (GanConfig): Layer layout (mirrored), `loss_kind` determines the output head
        parks (int): P, number of farms
        horizon (int): H, time steps per day
        rng (numpy.random.Generator | None): Used to initialize weights (default: seeded from config)

    Returns:
        (Sequential): [N, 1, P, H] -> forward convs in reverse order -> [N], sigmoid head for bce, linear for wasserstein
    """
    specs = [s.reversed() for s in reversed(config.generator_specs(parks, horizon))]
    last = specs[-1]
    specs[-1] = ConvSpec(last.in_channels, 1, last.kernel, last.stride, last.padding)
    if rng is None:
        rng = seeded_rng(config.seed, INIT_STREAM, 1)

    layers = []
    for i, spec in enumerate(specs):
        layers.append(Conv2d(spec, rng))
        if i < len(specs) - 1:
            if i > 0:
                layers.append(BatchNorm2d(spec.out_channels, rng))

            layers.append(LeakyReLU(config.leaky_slope))

    if config.loss_kind == "bce":
        layers.append(Sigmoid())

    layers.append(Reshape())
    return Sequential(*layers)


class TrainedModel:
    """Generator and discriminator of a training run, with its loss history"""

    def __init__(self, config, farms, resolution_hours, generator=None, discriminator=None, history=None, completed=False):
        """
        Args:
            config (GanConfig): Configuration used to train
            farms (list[FarmMeta]): Farms of the training dataset
            resolution_hours (float): Time resolution of the training dataset
            generator (Sequential | None): Generator (default: freshly initialized)
            discriminator (Sequential | None): Discriminator or critic (default: freshly initialized)
            history (list[tuple] | None): (d_loss, g_loss) per epoch trained
            completed (bool): True if all configured epochs were trained
        """
        self.config = config
        self.farms = list(farms)
        self.resolution_hours = resolution_hours
        parks, horizon = len(self.farms), int(round(24 / resolution_hours))
        self.generator = generator or build_generator(config, parks, horizon)
        self.discriminator = discriminator or build_discriminator(config, parks, horizon)
        self.history = history or []
        self.completed = completed

    def __repr__(self):
        return "%s model for %sx%s, %s epochs" % (self.source, self.parks, self.horizon, len(self.history))

    @property
    def source(self):
        return self.config.source

    @property
    def parks(self):
        return len(self.farms)

    @property
    def horizon(self):
        return int(round(24 / self.resolution_hours))

    def to_dict(self):
        return {
            "format": GAN_FORMAT,
            "config": self.config.to_dict(),
            "farms": [f.to_dict() for f in self.farms],
            "resolution_hours": self.resolution_hours,
            "history": {"d_loss": [h[0] for h in self.history], "g_loss": [h[1] for h in self.history]},
            "completed": self.completed,
            "generator": self.generator.state_dict(),
            "discriminator": self.discriminator.state_dict(),
        }

    def save(self, path):
        runez.save_json(self.to_dict(), path, indent=None, fatal=ArtifactIOError, logger=None)
        LOG.debug("Saved %s to %s", self, runez.short(path))

    @classmethod
    def from_dict(cls, data, source=None):
        """
        Args:
            data (dict): As produced by `to_dict()`
            source (str | None): Where `data` came from, for error messages

        Returns:
            (TrainedModel): Model with restored parameters
        """
        source = source or "model"
        if not isinstance(data, dict) or data.get("format") != GAN_FORMAT:
            raise CorruptArtifactError("%s is not a %s checkpoint" % (source, GAN_FORMAT))

        try:
            config = GanConfig.from_dict(data["config"])
            farms = [FarmMeta(**f) for f in data["farms"]]
            history = list(zip(data["history"]["d_loss"], data["history"]["g_loss"]))
            model = cls(config, farms, float(data["resolution_hours"]), history=history, completed=bool(data["completed"]))
            model.generator.load_state_dict(data["generator"])
            model.discriminator.load_state_dict(data["discriminator"])
            return model

        except CorruptArtifactError as e:
            raise CorruptArtifactError("%s: %s" % (source, e))

        except (ConfigurationError, KeyError, TypeError, ValueError) as e:
            raise CorruptArtifactError("%s is corrupt: %s" % (source, e))

    @classmethod
    def load(cls, path):
        data = runez.read_json(path, fatal=None)
        if data is None:
            raise CorruptArtifactError("Can't read checkpoint %s" % runez.short(path))

        return cls.from_dict(data, source=runez.short(path))


class GanTrainer:
    """Alternating discriminator / generator updates over shuffled minibatches"""

    def __init__(self, config, dataset):
        """
        Args:
            config (GanConfig): Network layout and hyperparameters
            dataset (ScenarioDataset): Normalized training samples
        """
        config.validate()
        if len(dataset) < 2:
            raise ConfigurationError("Training needs at least 2 samples, got %s" % len(dataset))

        if config.batch_size > len(dataset):
            raise ConfigurationError("batch_size %s exceeds the %s available samples" % (config.batch_size, len(dataset)))

        self.config = config
        self.dataset = dataset
        self.data = dataset.samples[:, None, :, :]
        self.model = TrainedModel(config, dataset.farms, dataset.resolution_hours)
        self.generator = self.model.generator
        self.discriminator = self.model.discriminator
        self.shuffle_rng = seeded_rng(config.seed, SHUFFLE_STREAM)
        self.latent_rng = seeded_rng(config.seed, LATENT_STREAM)
        if config.loss_kind == "bce":
            self.d_optimizer = Adam(self.discriminator.parameters(), config.learning_rate, beta1=config.beta1, beta2=config.beta2)
            self.g_optimizer = Adam(self.generator.parameters(), config.learning_rate, beta1=config.beta1, beta2=config.beta2)

        else:
            self.d_optimizer = RMSProp(self.discriminator.parameters(), config.learning_rate, decay=config.rms_decay)
            self.g_optimizer = RMSProp(self.generator.parameters(), config.learning_rate, decay=config.rms_decay)

    def __repr__(self):
        return "trainer for %s on %s" % (self.config, self.dataset)

    @property
    def is_wasserstein(self):
        return self.config.loss_kind == "wasserstein"

    def latent(self, count):
        return Tensor(self.latent_rng.standard_normal((count, self.config.latent_dim)))

    def batches(self):
        """Shuffled minibatches covering the dataset once, a trailing batch of a single sample is dropped"""
        order = self.shuffle_rng.permutation(len(self.dataset))
        size = self.config.batch_size
        for start in range(0, len(order), size):
            indices = order[start:start + size]
            if len(indices) > 1:
                yield self.data[indices]

    def discriminator_loss(self, real, fake):
        """
        Args:
            real (Tensor): Real samples [N, 1, P, H]
            fake (Tensor): Generated samples (detached from generator)

        Returns:
            (Tensor): BCE against labels 1 (real) / 0 (fake), or critic loss mean(C(fake)) - mean(C(real))
        """
        d_real = self.discriminator(real)
        d_fake = self.discriminator(fake)
        if self.is_wasserstein:
            return d_fake.mean() - d_real.mean()

        return bce_loss(d_real, np.ones(d_real.shape)) + bce_loss(d_fake, np.zeros(d_fake.shape))

    def discriminator_step(self, real, fake):
        """One optimizer step of the discriminator (critic weights clipped afterwards), returns the loss before the step"""
        self.d_optimizer.zero_grad()
        loss = self.discriminator_loss(real, fake)
        loss.backward()
        self.d_optimizer.step()
        if self.is_wasserstein:
            clip_weights(self.d_optimizer.params, self.config.clip_c)

        return loss.item()

    def generator_step(self, count):
        """One optimizer step of the generator, returns the loss before the step"""
        self.g_optimizer.zero_grad()
        judged = self.discriminator(self.generator(self.latent(count)))
        if self.is_wasserstein:
            loss = -judged.mean()

        else:
            loss = bce_loss(judged, np.ones(judged.shape))

        loss.backward()
        self.g_optimizer.step()
        return loss.item()

    def train_batch(self, batch):
        """
        Args:
            batch (numpy.ndarray): Real samples [N, 1, P, H]

        Returns:
            (float, float): Discriminator and generator loss
        """
        count = len(batch)
        critic_iters = self.config.critic_iters if self.is_wasserstein else 1
        for i in range(critic_iters):
            if i:
                batch = self.data[self.shuffle_rng.choice(len(self.data), size=count, replace=False)]

            fake = self.generator(self.latent(count)).detach()
            d_loss = self.discriminator_step(Tensor(batch), fake)

        return d_loss, self.generator_step(count)

    def train_epoch(self, epoch):
        """
        Args:
            epoch (int): 1-based epoch number, reported on numerical failure

        Returns:
            (float, float): Mean discriminator and generator loss over the epoch's batches
        """
        d_losses, g_losses = [], []
        for batch in self.batches():
            d_loss, g_loss = self.train_batch(batch)
            d_losses.append(require_finite(d_loss, "discriminator loss", epoch=epoch))
            g_losses.append(require_finite(g_loss, "generator loss", epoch=epoch))

        return float(np.mean(d_losses)), float(np.mean(g_losses))

    def run(self):
        """
        Returns:
            (TrainedModel): Trained model, its history has one (d_loss, g_loss) entry per epoch
        """
        config = self.config
        with runez.log.timeit("Training %s on %s" % (config.source, self.dataset), logger=LOG.info, color=None):
            for epoch in range(1, config.epochs + 1):
                d_loss, g_loss = self.train_epoch(epoch)
                self.model.history.append((d_loss, g_loss))
                if epoch % config.log_every == 0 or epoch == config.epochs:
                    LOG.info("epoch %s/%s: d_loss %.6f, g_loss %.6f", epoch, config.epochs, d_loss, g_loss)

        if self.is_wasserstein:
            LOG.info("critic max |param| %.6f (clip %s)", max_abs(self.discriminator.parameters()), config.clip_c)

        self.model.completed = True
        return self.model


def train(dataset, config):
    """
    Args:
        dataset (ScenarioDataset): Normalized training samples
        config (GanConfig): Network layout and hyperparameters

    Returns:
        (TrainedModel): Trained model
    """
    return GanTrainer(config, dataset).run()


def sample(model, n, seed=0):
    """
    Args:
        model (TrainedModel): Model whose generator to use (in eval mode)
        n (int): Number of scenarios to generate
        seed (int): Seed for the latent draws

    Returns:
        (ScenarioDataset): `n` samples of shape P x H, tagged with the model's source
    """
    if n < 1:
        raise UsageError("Number of samples must be positive, got %s" % n)

    latent = seeded_rng(seed, SAMPLE_STREAM).standard_normal((n, model.config.latent_dim))
    generator = model.generator.eval()
    try:
        chunks = [generator(Tensor(latent[i:i + SAMPLE_CHUNK])).data for i in range(0, n, SAMPLE_CHUNK)]

    finally:
        generator.train()

    samples = np.concatenate(chunks).reshape(n, model.parks, model.horizon)
    return ScenarioDataset(samples, model.farms, model.resolution_hours, source=model.source)
