"""
Adam and RMSProp, plus weight clipping for the Wasserstein critic

Functional `adam_step()` / `rmsprop_step()` work on plain numpy arrays (updated in place),
`Adam` / `RMSProp` wrap them for a list of `Tensor` parameters.
"""

import numpy as np

from renewgan.system import ConfigurationError


class OptimState:
    """Accumulators and hyperparameters of one optimizer"""

    def __init__(self, learning_rate, beta1=0.5, beta2=0.999, decay=0.9, eps=1e-8):
        """
        Args:
            learning_rate (float): Step size
            beta1 (float): Adam first moment decay
            beta2 (float): Adam second moment decay
            decay (float): RMSProp squared-gradient decay
            eps (float): Numerical stability term
        """
        if learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive, got %s" % learning_rate)

        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.decay = decay
        self.eps = eps
        self.step = 0
        self.moments = None  # First moments (Adam only)
        self.squares = None  # Second moments (Adam), or squared-gradient averages (RMSProp)

    def __repr__(self):
        return "OptimState(lr=%s, step=%s)" % (self.learning_rate, self.step)

    def prepare(self, params, grads, first_moments=True):
        if len(params) != len(grads):
            raise ConfigurationError("Got %s parameters but %s gradients" % (len(params), len(grads)))

        for i, (p, g) in enumerate(zip(params, grads)):
            if g is not None and g.shape != p.shape:
                raise ConfigurationError("Gradient %s has shape %s, parameter has %s" % (i, list(g.shape), list(p.shape)))

        if self.squares is None:
            self.squares = [np.zeros_like(p) for p in params]
            if first_moments:
                self.moments = [np.zeros_like(p) for p in params]

        elif len(self.squares) != len(params) or any(s.shape != p.shape for s, p in zip(self.squares, params)):
            raise ConfigurationError("Optimizer state does not match given parameters")

        self.step += 1


def adam_step(params, grads, state):
    """
    Args:
        params (list[numpy.ndarray]): Parameters, updated in place
        grads (list[numpy.ndarray | None]): Gradient for each parameter (None: parameter left as-is)
        state (OptimState): Optimizer state, updated in place

    Returns:
        (list[numpy.ndarray]): `params`
    """
    state.prepare(params, grads)
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.moments, state.squares):
        if g is None:
            continue

        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)

    return params


def rmsprop_step(params, grads, state):
    """
    Args:
        params (list[numpy.ndarray]): Parameters, updated in place
        grads (list[numpy.ndarray | None]): Gradient for each parameter (None: parameter left as-is)
        state (OptimState): Optimizer state, updated in place

    Returns:
        (list[numpy.ndarray]): `params`
    """
    state.prepare(params, grads, first_moments=False)
    rho = state.decay
    for p, g, v in zip(params, grads, state.squares):
        if g is None:
            continue

        v *= rho
        v += (1.0 - rho) * g * g
        p -= state.learning_rate * g / np.sqrt(v + state.eps)

    return params


def clip_weights(params, c):
    """
    Args:
        params (list[Tensor | numpy.ndarray]): Parameters to clamp in place to [-c, c]
        c (float): Clipping constant

    Returns:
        (list): `params`
    """
    if c <= 0:
        raise ConfigurationError("Clipping constant must be positive, got %s" % c)

    for p in params:
        array = getattr(p, "data", p)
        np.clip(array, -c, c, out=array)

    return params


def max_abs(params):
    """Largest absolute value across given parameters"""
    return max((float(np.abs(p.data).max()) for p in params if p.size), default=0.0)


class Optimizer:
    """Applies one of the step functions above to the gradients accumulated on a list of tensors"""

    step_function = None

    def __init__(self, params, state):
        self.params = list(params)
        self.state = state

    def __repr__(self):
        return "%s(%s params, %s)" % (self.__class__.__name__, len(self.params), self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.__class__.step_function([p.data for p in self.params], [p.grad for p in self.params], self.state)


class Adam(Optimizer):
    step_function = adam_step

    def __init__(self, params, learning_rate, beta1=0.5, beta2=0.999, eps=1e-8):
        super().__init__(params, OptimState(learning_rate, beta1=beta1, beta2=beta2, eps=eps))


class RMSProp(Optimizer):
    step_function = rmsprop_step

    def __init__(self, params, learning_rate, decay=0.9, eps=1e-8):
        super().__init__(params, OptimState(learning_rate, decay=decay, eps=eps))
