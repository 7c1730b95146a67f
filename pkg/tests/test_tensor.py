import numpy as np
import pytest

from renewgan.system import ConfigurationError, UsageError
from renewgan.tensor import (
    batchnorm2d, bce_loss, conv2d, conv2d_transpose, ConvSpec, leaky_relu, RunningStats, sigmoid, Tensor
)


EPS = 1e-6


def check_gradients(op, *arrays, seed=0):
    """Compare backward() of sum(op(*tensors) * r) with central finite differences, for random r"""
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = op(*tensors)
    r = np.random.default_rng(seed).normal(size=out.shape)
    (out * r).sum().backward()

    def projected():
        return float((op(*[Tensor(t.data) for t in tensors]).data * r).sum())

    for t in tensors:
        expected = np.zeros_like(t.data)
        for idx in np.ndindex(t.shape):
            original = t.data[idx]
            t.data[idx] = original + EPS
            plus = projected()
            t.data[idx] = original - EPS
            minus = projected()
            t.data[idx] = original
            expected[idx] = (plus - minus) / (2 * EPS)

        np.testing.assert_allclose(t.grad, expected, rtol=1e-5, atol=1e-7)


def test_arithmetic():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True, name="x")
    assert str(x) == "x Tensor[3] (requires grad)"
    y = (x * x + x).sum()
    y.backward()
    assert y.item() == 20.0
    assert x.grad.tolist() == [3.0, 5.0, 7.0]

    # Gradients accumulate on leaves until zero_grad()
    (2 * x).sum().backward()
    assert x.grad.tolist() == [5.0, 7.0, 9.0]
    x.zero_grad()
    assert x.grad is None

    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    (a - b).mean().backward()
    np.testing.assert_allclose(a.grad, np.full((2, 3), 1 / 6))
    np.testing.assert_allclose(b.grad, [-1 / 3] * 3)

    c = Tensor([2.0, 3.0], requires_grad=True)
    (1 - c ** 3).sum().backward()
    assert c.grad.tolist() == [-12.0, -27.0]

    d = Tensor(np.arange(6.0), requires_grad=True)
    d.reshape(2, 3).sum(axis=1).sum().backward()
    assert d.grad.tolist() == [1.0] * 6

    assert not x.detach().requires_grad
    assert Tensor([[1.0, 2.0]]).values == [1.0, 2.0]


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(UsageError):
        (x * 2).backward()


def test_no_grad_tracking():
    x = Tensor([1.0, 2.0])
    y = x * 3
    assert y.is_leaf
    assert not y.requires_grad


@pytest.mark.parametrize("kernel,stride,padding,size", [
    (3, 1, 0, (6, 5)),
    (4, 2, 1, (8, 6)),
    ((4, 3), (2, 1), (1, 0), (7, 5)),
    (1, 1, 0, (3, 3)),
])
def test_conv2d_gradients(kernel, stride, padding, size):
    spec = ConvSpec(3, 2, kernel, stride, padding)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3) + size)
    w = rng.normal(size=(2, 3) + spec.kernel)
    b = rng.normal(size=2)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), spec)
    assert out.shape == (2, 2) + spec.output_size(size)
    check_gradients(lambda xx, ww, bb: conv2d(xx, ww, bb, spec), x, w, b)


@pytest.mark.parametrize("kernel,stride,padding,size", [
    ((4, 3), 1, 0, (1, 1)),
    (4, 2, 1, (3, 2)),
    ((4, 2), (4, 2), (0, 1), (2, 3)),
])
def test_conv_transpose_gradients(kernel, stride, padding, size):
    spec = ConvSpec(3, 2, kernel, stride, padding)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3) + size)
    w = rng.normal(size=(3, 2) + spec.kernel)
    b = rng.normal(size=2)
    out = conv2d_transpose(Tensor(x), Tensor(w), Tensor(b), spec)
    assert out.shape == (2, 2) + spec.transposed_output_size(size)
    check_gradients(lambda xx, ww, bb: conv2d_transpose(xx, ww, bb, spec), x, w, b)


def test_transpose_is_adjoint():
    # <conv(x), y> == <x, conv_transpose(y)>, with the same kernel and zero bias
    spec = ConvSpec(3, 4, 4, 2, 1)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 8, 6))
    w = rng.normal(size=(4, 3, 4, 4))
    forward = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(4)), spec).data
    assert forward.shape == (2, 4, 4, 3)
    y = rng.normal(size=forward.shape)
    backward = conv2d_transpose(Tensor(y), Tensor(w), Tensor(np.zeros(3)), spec.reversed()).data
    assert backward.shape == x.shape
    assert np.isclose((forward * y).sum(), (x * backward).sum())


def test_conv_known_values():
    x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
    out = conv2d(x, Tensor(np.ones((1, 1, 2, 2))), Tensor([0.5]), ConvSpec(1, 1, 2, 2))
    assert out.data[0, 0].tolist() == [[10.5, 18.5], [42.5, 50.5]]

    x = Tensor([[[[1.0, 2.0]]]])
    out = conv2d_transpose(x, Tensor(np.ones((1, 1, 2, 2))), Tensor([0.0]), ConvSpec(1, 1, 2, 2))
    assert out.data[0, 0].tolist() == [[1.0, 1.0, 2.0, 2.0], [1.0, 1.0, 2.0, 2.0]]

    latent = Tensor(np.ones((1, 100, 1, 1)))
    out = conv2d_transpose(latent, Tensor(np.zeros((100, 2, 4, 3))), Tensor([0.0, 0.0]), ConvSpec(100, 2, (4, 3)))
    assert out.shape == (1, 2, 4, 3)


def test_conv_spec():
    spec = ConvSpec(100, 256, (4, 3))
    assert str(spec) == "ConvSpec(100->256, kernel=4x3, stride=1x1, padding=0x0)"
    assert spec.transposed_output_size((1, 1)) == (4, 3)
    assert spec.reversed() == ConvSpec(256, 100, (4, 3))
    assert spec.reversed().output_size((4, 3)) == (1, 1)
    assert ConvSpec(1, 1, 4, 2, 1).output_size((8, 6)) == (4, 3)
    assert ConvSpec(1, 1, 4, 2, 1).transposed_output_size((4, 3)) == (8, 6)

    with pytest.raises(ConfigurationError):
        ConvSpec(1, 1, 5).output_size((4, 4))

    with pytest.raises(ConfigurationError):
        ConvSpec(1, 1, 1, 1, 1).transposed_output_size((1, 1))

    with pytest.raises(ConfigurationError):
        ConvSpec(1, 1, 0)

    with pytest.raises(ConfigurationError):
        ConvSpec(1, 1, (1, 2, 3))

    with pytest.raises(ConfigurationError):
        ConvSpec(0, 1, 3)


def test_conv_shape_errors():
    spec = ConvSpec(3, 2, 3)
    with pytest.raises(ConfigurationError, match="channels"):
        conv2d(Tensor(np.zeros((1, 2, 5, 5))), Tensor(np.zeros((2, 3, 3, 3))), Tensor(np.zeros(2)), spec)

    with pytest.raises(ConfigurationError, match="weight"):
        conv2d(Tensor(np.zeros((1, 3, 5, 5))), Tensor(np.zeros((3, 2, 3, 3))), Tensor(np.zeros(2)), spec)

    with pytest.raises(ConfigurationError, match="N, C, H, W"):
        conv2d_transpose(Tensor(np.zeros((3, 5, 5))), Tensor(np.zeros((3, 2, 3, 3))), Tensor(np.zeros(2)), spec)


def test_batchnorm():
    rng = np.random.default_rng(4)
    x = rng.normal(3.0, 2.0, size=(4, 3, 2, 5))
    gamma, beta = np.ones(3), np.zeros(3)
    state = RunningStats(3)
    out = batchnorm2d(Tensor(x), Tensor(gamma), Tensor(beta), state=state).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1, rtol=1e-3)

    # Running statistics use the unbiased batch variance
    np.testing.assert_allclose(state.mean, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(state.var, 0.9 + 0.1 * x.var(axis=(0, 2, 3), ddof=1))

    evaluated = batchnorm2d(Tensor(x), Tensor(gamma), Tensor(beta), mode="eval", state=state).data
    expected = (x - state.mean[None, :, None, None]) / np.sqrt(state.var[None, :, None, None] + 1e-5)
    np.testing.assert_allclose(evaluated, expected)

    check_gradients(lambda xx, gg, bb: batchnorm2d(xx, gg, bb), x, rng.normal(1.0, 0.1, 3), rng.normal(size=3))
    check_gradients(lambda xx, gg, bb: batchnorm2d(xx, gg, bb, mode="eval", state=state), x, gamma, beta)

    with pytest.raises(UsageError, match="at least 2"):
        batchnorm2d(Tensor(x[:1]), Tensor(gamma), Tensor(beta))

    with pytest.raises(UsageError, match="running statistics"):
        batchnorm2d(Tensor(x), Tensor(gamma), Tensor(beta), mode="eval")

    with pytest.raises(UsageError, match="mode"):
        batchnorm2d(Tensor(x), Tensor(gamma), Tensor(beta), mode="inference")

    with pytest.raises(ConfigurationError):
        batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(beta))


def test_activations():
    x = Tensor([-2.0, 0.5, 3.0], requires_grad=True)
    out = leaky_relu(x)
    assert out.data.tolist() == [-0.4, 0.5, 3.0]
    out.sum().backward()
    assert x.grad.tolist() == [0.2, 1.0, 1.0]
    check_gradients(lambda t: leaky_relu(t, 0.1), np.random.default_rng(5).normal(size=(3, 4)))

    with pytest.raises(ConfigurationError):
        leaky_relu(x, slope=1.5)

    assert sigmoid(Tensor([0.0])).data.tolist() == [0.5]
    assert sigmoid(Tensor([-1000.0, 1000.0])).data.tolist() == [0.0, 1.0]
    check_gradients(sigmoid, np.random.default_rng(6).normal(size=5))


def test_bce_loss():
    assert np.isclose(bce_loss(Tensor([0.5]), [1.0]).item(), np.log(2))
    assert np.isclose(bce_loss(Tensor([0.9, 0.2]), [1.0, 0.0]).item(), -(np.log(0.9) + np.log(0.8)) / 2)

    # Probabilities are clamped, the loss stays finite and gradients vanish outside of the clamp range
    p = Tensor([0.0, 1.0], requires_grad=True)
    loss = bce_loss(p, [1.0, 0.0])
    assert np.isclose(loss.item(), -np.log(1e-7))
    loss.backward()
    assert p.grad.tolist() == [0.0, 0.0]

    rng = np.random.default_rng(7)
    labels = np.array([1.0, 0.0, 1.0, 0.0])
    check_gradients(lambda t: bce_loss(t, labels), rng.uniform(0.05, 0.95, 4))

    with pytest.raises(ConfigurationError):
        bce_loss(Tensor([0.5, 0.5]), [1.0])


def random_geometry(rng, transposed=False):
    """Random small convolution: (spec, input shape, weight shape)"""
    kernel = tuple(int(k) for k in rng.integers(1, 4, size=2))
    stride = tuple(int(s) for s in rng.integers(1, 3, size=2))
    padding = tuple(int(rng.integers(0, (k - 1) // 2 + 1)) for k in kernel)
    spec = ConvSpec(int(rng.integers(1, 4)), int(rng.integers(1, 4)), kernel, stride, padding)
    if transposed:
        size = tuple(int(s) for s in rng.integers(1, 4, size=2))
        return spec, (int(rng.integers(1, 3)), spec.in_channels) + size, (spec.in_channels, spec.out_channels) + kernel

    size = tuple(int(rng.integers(max(k - 2 * p, 1), k + 4)) for k, p in zip(kernel, padding))
    return spec, (int(rng.integers(1, 3)), spec.in_channels) + size, (spec.out_channels, spec.in_channels) + kernel


def test_random_conv_gradients():
    rng = np.random.default_rng(11)
    for case in range(20):
        spec, x_shape, w_shape = random_geometry(rng)
        x, w, b = rng.normal(size=x_shape), rng.normal(size=w_shape), rng.normal(size=spec.out_channels)
        check_gradients(lambda xx, ww, bb: conv2d(xx, ww, bb, spec), x, w, b, seed=case)

        spec, x_shape, w_shape = random_geometry(rng, transposed=True)
        x, w, b = rng.normal(size=x_shape), rng.normal(size=w_shape), rng.normal(size=spec.out_channels)
        check_gradients(lambda xx, ww, bb: conv2d_transpose(xx, ww, bb, spec), x, w, b, seed=case)


def test_random_elementwise_gradients():
    rng = np.random.default_rng(12)
    for case in range(20):
        n, c, h, w = int(rng.integers(2, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(1, 4))
        x = rng.normal(0.5, 2.0, size=(n, c, h, w))
        gamma, beta = rng.normal(1.0, 0.3, size=c), rng.normal(size=c)
        check_gradients(lambda xx, gg, bb: batchnorm2d(xx, gg, bb), x, gamma, beta, seed=case)

        # Keep clear of the kink at 0, where finite differences don't apply
        values = rng.normal(size=(n, c))
        values[np.abs(values) < 1e-3] = 0.5
        check_gradients(lambda t: leaky_relu(t, 0.2), values, seed=case)
        check_gradients(sigmoid, rng.normal(0, 3, size=(n, c)), seed=case)

        labels = rng.integers(0, 2, size=n * c).astype(np.float64)
        check_gradients(lambda t: bce_loss(t, labels), rng.uniform(0.02, 0.98, size=n * c), seed=case)


def test_composite_gradients():
    # conv -> batchnorm -> leaky relu -> conv to one score per sample -> sigmoid -> bce, as a discriminator does
    rng = np.random.default_rng(13)
    first, last = ConvSpec(1, 3, (3, 2), 1, (1, 0)), ConvSpec(3, 1, (4, 3))
    x = rng.uniform(0, 1, size=(4, 1, 4, 4))
    labels = np.array([1.0, 0.0, 1.0, 0.0])

    def discriminator_loss(xx, w1, b1, gamma, beta, w2, b2):
        hidden = leaky_relu(batchnorm2d(conv2d(xx, w1, b1, first), gamma, beta), 0.2)
        score = sigmoid(conv2d(hidden, w2, b2, last).reshape(4))
        return bce_loss(score, labels)

    arrays = [x, rng.normal(size=(3, 1, 3, 2)), rng.normal(size=3), rng.normal(1, 0.1, size=3), rng.normal(size=3)]
    arrays += [rng.normal(0, 0.5, size=(1, 3, 4, 3)), rng.normal(size=1)]
    assert discriminator_loss(*[Tensor(a) for a in arrays]).shape == ()
    check_gradients(discriminator_loss, *arrays)
