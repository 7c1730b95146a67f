"""
Minimal reverse-mode automatic differentiation on top of numpy

Only what the scenario networks need is provided: 2-D convolution and transposed convolution, batch normalization,
leaky ReLU, sigmoid and binary cross-entropy, plus a few arithmetic operations to compose losses.
All math is done in 64-bit floats.

>>> x = Tensor([1.0, 2.0], requires_grad=True)
>>> (x * x).sum().backward()
>>> x.grad.tolist()
[2.0, 4.0]
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from renewgan.system import ConfigurationError, pair, UsageError


DTYPE = np.float64
BCE_EPSILON = 1e-7
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


class Tensor:
    """n-dimensional array, optionally tracking gradients"""

    def __init__(self, data, requires_grad=False, name=None, creator=None):
        """
        Args:
            data (numpy.ndarray | list | float): Values
            requires_grad (bool): If True, backward() populates `.grad` for this tensor
            name (str | None): Optional name, handy when debugging
            creator (Function | None): Operation that produced this tensor (internal)
        """
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.creator = creator

    def __repr__(self):
        name = "%s " % self.name if self.name else ""
        return "%sTensor%s%s" % (name, list(self.shape), " (requires grad)" if self.requires_grad else "")

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def values(self):
        """list[float]: Values in row-major order"""
        return self.data.ravel().tolist()

    @property
    def is_leaf(self):
        return self.creator is None

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self):
        """Same values, disconnected from the graph"""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate `.grad` of every leaf tensor reachable from this scalar, that requires it"""
        if self.data.size != 1:
            raise UsageError("backward() needs a scalar loss, got shape %s" % list(self.shape))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue

            if node.creator is None:
                if node.requires_grad:
                    node.grad = grad.copy() if node.grad is None else node.grad + grad

                continue

            for parent, parent_grad in zip(node.creator.inputs, node.creator.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue

                existing = grads.get(id(parent))
                grads[id(parent)] = parent_grad if existing is None else existing + parent_grad

    def sum(self, axis=None):
        return Sum.apply(self, axis=axis)

    def mean(self):
        return self.sum() * (1.0 / self.size)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (list, tuple)):
            shape = shape[0]

        return Reshape.apply(self, shape=tuple(shape))

    def __add__(self, other):
        return Add.apply(self, as_tensor(other))

    def __radd__(self, other):
        return Add.apply(as_tensor(other), self)

    def __sub__(self, other):
        return Add.apply(self, Neg.apply(as_tensor(other)))

    def __rsub__(self, other):
        return Add.apply(as_tensor(other), Neg.apply(self))

    def __mul__(self, other):
        return Mul.apply(self, as_tensor(other))

    def __rmul__(self, other):
        return Mul.apply(as_tensor(other), self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent):
        return Pow.apply(self, exponent=float(exponent))


def as_tensor(value):
    if isinstance(value, Tensor):
        return value

    return Tensor(value)


def _topological_order(root):
    """Post-order of the graph leading to `root` (inputs before the tensors computed from them)"""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue

        if id(node) in seen:
            continue

        seen.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for parent in node.creator.inputs:
                if id(parent) not in seen:
                    stack.append((parent, False))

    return order


class Function:
    """
    Differentiable operation, descendants implement `forward()` on numpy arrays,
    and `backward()` returning one gradient (or None) per input
    """

    inputs = ()

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **kwargs):
        func = cls()
        func.inputs = inputs
        data = func.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(data, requires_grad=requires_grad, creator=func if requires_grad else None)


def unbroadcast(grad, shape):
    """Sum `grad` back down to `shape`, undoing numpy broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad


class Add(Function):
    def forward(self, a, b):
        self.shapes = a.shape, b.shape
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return unbroadcast(grad * self.b, self.a.shape), unbroadcast(grad * self.a, self.b.shape)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, a, exponent=2.0):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, grad):
        return (grad * self.exponent * self.a ** (self.exponent - 1),)


class Sum(Function):
    def forward(self, a, axis=None):
        self.shape, self.axis = a.shape, axis
        return a.sum(axis=axis)

    def backward(self, grad):
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)

        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape=None):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class ConvSpec:
    """Kernel, stride and padding of one convolution layer, along with its channel counts"""

    __slots__ = ["in_channels", "out_channels", "kernel", "stride", "padding"]

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0):
        """
        Args:
            in_channels (int): Number of input channels
            out_channels (int): Number of output channels
            kernel (int | tuple): Kernel size, single int for square kernels
            stride (int | tuple): Stride per axis
            padding (int | tuple): Zero padding per axis
        """
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel = pair(kernel, "kernel")
        self.stride = pair(stride, "stride")
        self.padding = pair(padding, "padding")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError("Channel counts must be positive, got %s -> %s" % (self.in_channels, self.out_channels))

        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ConfigurationError("Invalid %s: kernel and stride must be positive, padding non-negative" % self)

    def __repr__(self):
        return "ConvSpec(%s->%s, kernel=%s, stride=%s, padding=%s)" % (
            self.in_channels, self.out_channels, _fmt(self.kernel), _fmt(self.stride), _fmt(self.padding)
        )

    def __eq__(self, other):
        return isinstance(other, ConvSpec) and all(getattr(self, k) == getattr(other, k) for k in self.__slots__)

    def reversed(self):
        """Same geometry, channels swapped: the forward convolution undoing this transposed one"""
        return ConvSpec(self.out_channels, self.in_channels, self.kernel, self.stride, self.padding)

    def output_size(self, size):
        """
        Args:
            size (tuple): (height, width) fed to a forward convolution

        Returns:
            (tuple): Output (height, width), floor((i + 2p - k) / s) + 1 per axis
        """
        result = tuple((i + 2 * p - k) // s + 1 for i, k, s, p in zip(size, self.kernel, self.stride, self.padding))
        if min(result) < 1 or any(i + 2 * p < k for i, k, p in zip(size, self.kernel, self.padding)):
            raise ConfigurationError("%s can't be applied to input of size %s" % (self, _fmt(size)))

        return result

    def transposed_output_size(self, size):
        """
        Args:
            size (tuple): (height, width) fed to a transposed convolution

        Returns:
            (tuple): Output (height, width), (i - 1) * s - 2p + k per axis
        """
        result = tuple((i - 1) * s - 2 * p + k for i, k, s, p in zip(size, self.kernel, self.stride, self.padding))
        if min(result) < 1:
            raise ConfigurationError("Transposed %s yields non-positive output size %s from %s" % (self, _fmt(result), _fmt(size)))

        return result


def _fmt(size):
    return "x".join(str(s) for s in size)


def _windows(padded, kernel, stride, out_size):
    """View of shape (N, C, oh, ow, kh, kw) over the sliding windows of `padded`"""
    (kh, kw), (sh, sw), (oh, ow) = kernel, stride, out_size
    view = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    return view[:, :, :sh * (oh - 1) + 1:sh, :sw * (ow - 1) + 1:sw]


def _scatter(cols, full_size, stride):
    """Adjoint of `_windows()`: accumulate (N, C, ih, iw, kh, kw) window contributions into a (N, C, *full_size) array"""
    n, c, ih, iw, kh, kw = cols.shape
    sh, sw = stride
    out = np.zeros((n, c) + tuple(full_size), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + sh * (ih - 1) + 1:sh, j:j + sw * (iw - 1) + 1:sw] += cols[:, :, :, :, i, j]

    return out


def _check_conv_input(x, weight, bias, spec, weight_shape, op):
    if x.ndim != 4:
        raise ConfigurationError("%s: expecting input of shape [N, C, H, W], got %s" % (op, list(x.shape)))

    if x.shape[1] != spec.in_channels:
        raise ConfigurationError("%s: input has %s channels, in_channels is %s" % (op, x.shape[1], spec.in_channels))

    if weight.shape != weight_shape:
        raise ConfigurationError("%s: weight has shape %s, expecting %s" % (op, list(weight.shape), list(weight_shape)))

    if bias.shape != (spec.out_channels,):
        raise ConfigurationError("%s: bias has shape %s, expecting [%s]" % (op, list(bias.shape), spec.out_channels))


class Conv2d(Function):
    def forward(self, x, weight, bias, spec=None):
        _check_conv_input(x, weight, bias, spec, (spec.out_channels, spec.in_channels) + spec.kernel, "conv2d")
        self.spec = spec
        self.in_size = x.shape[2:]
        self.out_size = spec.output_size(self.in_size)
        ph, pw = spec.padding
        self.padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        self.weight = weight
        windows = _windows(self.padded, spec.kernel, spec.stride, self.out_size)
        out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        return out + bias[None, :, None, None]

    def backward(self, grad):
        spec = self.spec
        windows = _windows(self.padded, spec.kernel, spec.stride, self.out_size)
        grad_weight = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_bias = grad.sum(axis=(0, 2, 3))
        cols = np.tensordot(grad, self.weight, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        grad_padded = _scatter(cols, self.padded.shape[2:], spec.stride)
        (ph, pw), (h, w) = spec.padding, self.in_size
        return grad_padded[:, :, ph:ph + h, pw:pw + w], grad_weight, grad_bias


class ConvTranspose2d(Function):
    def forward(self, x, weight, bias, spec=None):
        _check_conv_input(x, weight, bias, spec, (spec.in_channels, spec.out_channels) + spec.kernel, "conv2d_transpose")
        self.spec = spec
        self.x = x
        self.weight = weight
        self.out_size = spec.transposed_output_size(x.shape[2:])
        self.full_size = tuple((i - 1) * s + k for i, s, k in zip(x.shape[2:], spec.stride, spec.kernel))
        cols = np.tensordot(x, weight, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        full = _scatter(cols, self.full_size, spec.stride)
        (ph, pw), (oh, ow) = spec.padding, self.out_size
        return full[:, :, ph:ph + oh, pw:pw + ow] + bias[None, :, None, None]

    def backward(self, grad):
        spec = self.spec
        (ph, pw), (oh, ow) = spec.padding, self.out_size
        grad_full = np.zeros(grad.shape[:2] + self.full_size, dtype=DTYPE)
        grad_full[:, :, ph:ph + oh, pw:pw + ow] = grad
        windows = _windows(grad_full, spec.kernel, spec.stride, self.x.shape[2:])
        grad_x = np.tensordot(windows, self.weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        grad_weight = np.tensordot(self.x, windows, axes=([0, 2, 3], [0, 2, 3]))
        return grad_x, grad_weight, grad.sum(axis=(0, 2, 3))


class RunningStats:
    """Exponential moving averages of per-channel batch mean and (unbiased) variance"""

    def __init__(self, channels):
        self.mean = np.zeros(channels, dtype=DTYPE)
        self.var = np.ones(channels, dtype=DTYPE)

    def __repr__(self):
        return "RunningStats(%s channels)" % self.mean.size

    def update(self, mean, var, momentum):
        self.mean = (1.0 - momentum) * self.mean + momentum * mean
        self.var = (1.0 - momentum) * self.var + momentum * var


class BatchNorm2d(Function):
    def forward(self, x, gamma, beta, training=True, state=None, momentum=BN_MOMENTUM, eps=BN_EPSILON):
        channels = x.shape[1]
        if gamma.shape != (channels,) or beta.shape != (channels,):
            raise ConfigurationError("batchnorm2d: gamma/beta must have length %s (channels)" % channels)

        self.training = training
        if training:
            if x.shape[0] < 2:
                raise UsageError("batchnorm2d: train mode needs a batch of at least 2 samples, got %s" % x.shape[0])

            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            count = x.size // channels
            if state is not None:
                state.update(mean, var * count / (count - 1), momentum)

        elif state is None:
            raise UsageError("batchnorm2d: eval mode needs running statistics")

        else:
            mean, var = state.mean, state.var

        self.inv_std = (1.0 / np.sqrt(var + eps))[None, :, None, None]
        self.normalized = (x - mean[None, :, None, None]) * self.inv_std
        self.gamma = gamma[None, :, None, None]
        return self.gamma * self.normalized + beta[None, :, None, None]

    def backward(self, grad):
        axes = (0, 2, 3)
        xhat = self.normalized
        grad_gamma = (grad * xhat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_xhat = grad * self.gamma
        if self.training:
            count = xhat.size // xhat.shape[1]
            grad_x = self.inv_std / count * (
                count * grad_xhat
                - grad_xhat.sum(axis=axes, keepdims=True)
                - xhat * (grad_xhat * xhat).sum(axis=axes, keepdims=True)
            )

        else:
            grad_x = grad_xhat * self.inv_std

        return grad_x, grad_gamma, grad_beta


class LeakyReLU(Function):
    def forward(self, x, slope=0.2):
        self.scale = np.where(x >= 0, 1.0, slope)
        return x * self.scale

    def backward(self, grad):
        return (grad * self.scale,)


class Sigmoid(Function):
    def forward(self, x):
        self.out = expit(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class BinaryCrossEntropy(Function):
    def forward(self, p, y):
        if p.shape != y.shape:
            raise ConfigurationError("bce_loss: probabilities %s and labels %s differ in shape" % (list(p.shape), list(y.shape)))

        self.clamped = np.clip(p, BCE_EPSILON, 1.0 - BCE_EPSILON)
        self.inside = (p > BCE_EPSILON) & (p < 1.0 - BCE_EPSILON)
        self.y = y
        losses = y * np.log(self.clamped) + (1.0 - y) * np.log(1.0 - self.clamped)
        return np.asarray(-losses.mean())

    def backward(self, grad):
        p, y = self.clamped, self.y
        grad_p = -(y / p - (1.0 - y) / (1.0 - p)) / p.size
        return grad * grad_p * self.inside, None


def conv2d(x, weight, bias, spec):
    """
    Args:
        x (Tensor): Input of shape [N, C, H, W]
        weight (Tensor): Kernel of shape [out_channels, in_channels, kh, kw]
        bias (Tensor): Bias of shape [out_channels]
        spec (ConvSpec): Layer geometry

    Returns:
        (Tensor): Output of shape [N, out_channels, oh, ow]
    """
    return Conv2d.apply(x, weight, bias, spec=spec)


def conv2d_transpose(x, weight, bias, spec):
    """
    Args:
        x (Tensor): Input of shape [N, C, H, W]
        weight (Tensor): Kernel of shape [in_channels, out_channels, kh, kw]
        bias (Tensor): Bias of shape [out_channels]
        spec (ConvSpec): Layer geometry

    Returns:
        (Tensor): Output of shape [N, out_channels, (H - 1) * s - 2p + k, ...]
    """
    return ConvTranspose2d.apply(x, weight, bias, spec=spec)


def batchnorm2d(x, gamma, beta, mode="train", state=None, momentum=BN_MOMENTUM, eps=BN_EPSILON):
    """
    Args:
        x (Tensor): Input of shape [N, C, H, W]
        gamma (Tensor): Per-channel scale
        beta (Tensor): Per-channel shift
        mode (str): "train" normalizes with batch statistics (and updates `state`), "eval" uses `state`
        state (RunningStats | None): Running statistics
        momentum (float): Weight of current batch in running statistics update
        eps (float): Added to variance before taking square root

    Returns:
        (Tensor): Normalized input
    """
    if mode not in ("train", "eval"):
        raise UsageError("batchnorm2d: mode must be 'train' or 'eval', got '%s'" % mode)

    return BatchNorm2d.apply(x, gamma, beta, training=mode == "train", state=state, momentum=momentum, eps=eps)


def leaky_relu(x, slope=0.2):
    if not 0 < slope < 1:
        raise ConfigurationError("leaky_relu: slope must be in (0, 1), got %s" % slope)

    return LeakyReLU.apply(x, slope=slope)


def sigmoid(x):
    return Sigmoid.apply(x)


def bce_loss(p, y):
    """
    Args:
        p (Tensor): Probabilities, clamped to [1e-7, 1 - 1e-7]
        y (Tensor | numpy.ndarray | list): Labels (1: real, 0: generated)

    Returns:
        (Tensor): Scalar mean binary cross-entropy
    """
    return BinaryCrossEntropy.apply(p, as_tensor(y))
