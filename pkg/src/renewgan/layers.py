"""
Layers holding parameters, composable via `Sequential`
"""

import numpy as np

from renewgan.system import ConfigurationError, CorruptArtifactError
from renewgan.tensor import (
    batchnorm2d, BN_MOMENTUM, conv2d, conv2d_transpose, ConvSpec, leaky_relu, RunningStats, sigmoid, Tensor
)


INIT_STD = 0.02


class Layer:
    """Base of all layers, descendants implement `forward()` and declare their parameters in `params`"""

    training = True

    @property
    def params(self):
        """dict[str, Tensor]: Trainable parameters of this layer, by name"""
        return {}

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def parameters(self):
        return list(self.params.values())

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def output_size(self, size):
        """Spatial (height, width) produced for given input spatial size"""
        return size

    def buffers(self):
        """dict[str, numpy.ndarray]: Non-trainable state to persist along with parameters"""
        return {}

    def load_buffers(self, buffers):
        pass


class Conv2d(Layer):
    def __init__(self, spec, rng):
        """
        Args:
            spec (ConvSpec): Geometry of this layer
            rng (numpy.random.Generator): Used to initialize weights
        """
        self.spec = spec
        self.weight = Tensor(rng.normal(0.0, INIT_STD, (spec.out_channels, spec.in_channels) + spec.kernel), requires_grad=True)
        self.bias = Tensor(np.zeros(spec.out_channels), requires_grad=True)

    def __repr__(self):
        return "Conv2d %s" % self.spec

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        return conv2d(x, self.weight, self.bias, self.spec)

    def output_size(self, size):
        return self.spec.output_size(size)


class ConvTranspose2d(Layer):
    def __init__(self, spec, rng):
        """
        Args:
            spec (ConvSpec): Geometry of this layer
            rng (numpy.random.Generator): Used to initialize weights
        """
        self.spec = spec
        self.weight = Tensor(rng.normal(0.0, INIT_STD, (spec.in_channels, spec.out_channels) + spec.kernel), requires_grad=True)
        self.bias = Tensor(np.zeros(spec.out_channels), requires_grad=True)

    def __repr__(self):
        return "ConvTranspose2d %s" % self.spec

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        return conv2d_transpose(x, self.weight, self.bias, self.spec)

    def output_size(self, size):
        return self.spec.transposed_output_size(size)


class BatchNorm2d(Layer):
    def __init__(self, channels, rng, momentum=BN_MOMENTUM):
        self.channels = channels
        self.momentum = momentum
        self.gamma = Tensor(rng.normal(1.0, INIT_STD, channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.state = RunningStats(channels)

    def __repr__(self):
        return "BatchNorm2d(%s)" % self.channels

    @property
    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def forward(self, x):
        mode = "train" if self.training else "eval"
        return batchnorm2d(x, self.gamma, self.beta, mode=mode, state=self.state, momentum=self.momentum)

    def buffers(self):
        return {"running_mean": self.state.mean, "running_var": self.state.var}

    def load_buffers(self, buffers):
        self.state.mean = buffers["running_mean"]
        self.state.var = buffers["running_var"]


class LeakyReLU(Layer):
    def __init__(self, slope=0.2):
        self.slope = slope

    def __repr__(self):
        return "LeakyReLU(%s)" % self.slope

    def forward(self, x):
        return leaky_relu(x, self.slope)


class Sigmoid(Layer):
    def __repr__(self):
        return "Sigmoid"

    def forward(self, x):
        return sigmoid(x)


class Reshape(Layer):
    """Reshape each sample of a batch, the leading (batch) dimension is kept"""

    def __init__(self, *shape):
        self.shape = shape

    def __repr__(self):
        return "Reshape%s" % list(self.shape)

    def forward(self, x):
        return x.reshape((x.shape[0],) + self.shape)


class Sequential(Layer):
    def __init__(self, *layers):
        self.layers = list(layers)

    def __repr__(self):
        return "Sequential(%s)" % ", ".join(str(layer) for layer in self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    @property
    def params(self):
        result = {}
        for i, layer in enumerate(self.layers):
            for name, param in layer.params.items():
                result["%s.%s" % (i, name)] = param

        return result

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)

        return x

    def train(self):
        self.training = True
        for layer in self.layers:
            layer.train()

        return self

    def eval(self):
        self.training = False
        for layer in self.layers:
            layer.eval()

        return self

    def output_size(self, size):
        for layer in self.layers:
            size = layer.output_size(size)

        return size

    def size_chain(self, size):
        """
        Args:
            size (tuple): Spatial (height, width) fed to this network

        Returns:
            (list[tuple]): Spatial size after each convolution layer, starting with `size`
        """
        result = [tuple(size)]
        for layer in self.layers:
            if isinstance(layer, (Conv2d, ConvTranspose2d)):
                result.append(layer.output_size(result[-1]))

        return result

    def buffers(self):
        result = {}
        for i, layer in enumerate(self.layers):
            for name, value in layer.buffers().items():
                result["%s.%s" % (i, name)] = value

        return result

    def load_buffers(self, buffers):
        for i, layer in enumerate(self.layers):
            prefix = "%s." % i
            own = {k[len(prefix):]: v for k, v in buffers.items() if k.startswith(prefix)}
            if own:
                layer.load_buffers(own)

    def state_dict(self):
        """
        Returns:
            (dict): Parameters and buffers, as lists of floats with their shape, suitable for json
        """
        result = {}
        for name, value in self.params.items():
            result[name] = _serialized_array(value.data)

        for name, value in self.buffers().items():
            result[name] = _serialized_array(value)

        return result

    def load_state_dict(self, data):
        """
        Args:
            data (dict): As produced by `state_dict()`
        """
        expected = set(self.params) | set(self.buffers())
        if set(data) != expected:
            missing = sorted(expected - set(data))
            extra = sorted(set(data) - expected)
            raise CorruptArtifactError("State does not match network: missing %s, unexpected %s" % (missing, extra))

        for name, param in self.params.items():
            param.data = _deserialized_array(name, data[name], param.shape)
            param.zero_grad()

        buffers = {name: _deserialized_array(name, data[name], value.shape) for name, value in self.buffers().items()}
        self.load_buffers(buffers)


def _serialized_array(array):
    return {"shape": list(array.shape), "values": array.ravel().tolist()}


def _deserialized_array(name, data, shape):
    try:
        array = np.asarray(data["values"], dtype=np.float64).reshape(data["shape"])

    except Exception as e:
        raise CorruptArtifactError("Can't read '%s': %s" % (name, e))

    if array.shape != tuple(shape):
        raise CorruptArtifactError("'%s' has shape %s, network expects %s" % (name, list(array.shape), list(shape)))

    if not np.all(np.isfinite(array)):
        raise CorruptArtifactError("'%s' contains non-finite values" % name)

    return array


def conv_chain(kernels, strides, paddings, channel_plan):
    """
    Args:
        kernels (list): Kernel per layer (int or pair)
        strides (list): Stride per layer
        paddings (list): Padding per layer
        channel_plan (list[int]): Channels between layers, one more entry than there are layers

    Returns:
        (list[ConvSpec]): One spec per layer
    """
    count = len(channel_plan) - 1
    if not (len(kernels) == len(strides) == len(paddings) == count):
        raise ConfigurationError(
            "Layer table needs %s kernels, strides and paddings (channel plan %s), got %s, %s and %s"
            % (count, channel_plan, len(kernels), len(strides), len(paddings))
        )

    return [ConvSpec(channel_plan[i], channel_plan[i + 1], kernels[i], strides[i], paddings[i]) for i in range(count)]
