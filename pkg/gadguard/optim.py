"""Parameter storage, Xavier initialization and the Adam optimizer"""
from collections import OrderedDict

import numpy as np

from .tensor import TensorNode, DimensionError

__all__ = ['AdamState', 'ModelParams', 'TrainingError', 'adam_step', 'xavier_init']


class TrainingError(RuntimeError):
    """Optimization produced a non-finite value

    Attributes
    ----------
    history : Optional[LossHistory]
        Losses recorded before the failure, if any.
    """
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


def xavier_init(rows, cols, rng):
    """Xavier (Glorot) uniform initialization

    Entries are drawn from `U(-b, b)` with `b = sqrt(6 / (rows + cols))`.

    Parameters
    ----------
    rows, cols : int
        Matrix shape, both at least 1.
    rng : np.random.Generator

    Examples
    --------
    >>> w = xavier_init(1, 1, np.random.default_rng(0))
    >>> bool(abs(w[0, 0]) <= np.sqrt(3))
    True
    """
    if rows < 1 or cols < 1:
        raise DimensionError("xavier_init: invalid shape ({}, {})".format(rows, cols))
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


class ModelParams:
    """Named collection of trainable :class:`.TensorNode` leaves

    Names are dotted paths like `'encoder.0.w'`. Iteration order is registration order,
    which keeps optimization and serialization deterministic.
    """
    def __init__(self):
        self._tensors = OrderedDict()

    def add(self, name, values) -> TensorNode:
        """Register a new parameter and return its node"""
        if name in self._tensors:
            raise RuntimeError("Parameter '{}' already exists".format(name))
        node = TensorNode(values, requires_grad=True, name=name)
        self._tensors[name] = node
        return node

    def __getitem__(self, name) -> TensorNode:
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError("There is no parameter named '{}'".format(name)) from None

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    @property
    def names(self) -> list:
        return list(self._tensors)

    @property
    def size(self) -> int:
        """Total number of scalar weights"""
        return sum(t.values.size for t in self._tensors.values())

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def grads(self) -> OrderedDict:
        """Current gradients by name"""
        return OrderedDict((name, t.grad) for name, t in self._tensors.items())

    def state_dict(self) -> OrderedDict:
        """Copies of all parameter matrices by name"""
        return OrderedDict((name, t.values.copy()) for name, t in self._tensors.items())

    def load_state_dict(self, state):
        """Overwrite parameter values, names and shapes must match exactly"""
        missing = set(self._tensors) ^ set(state)
        if missing:
            raise RuntimeError("Parameter names don't match: {}".format(sorted(missing)))
        for name, values in state.items():
            self._tensors[name].values = values


class AdamState:
    """Adam optimizer state: hyperparameters, step counter and moment estimates

    Parameters
    ----------
    learning_rate : float
    beta1, beta2 : float
        Exponential decay rates of the first and second moment estimates.
    epsilon : float
        Numerical stabilizer in the update denominator.
    """
    def __init__(self, learning_rate=5e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = {}
        self.second_moment = {}


def adam_step(params: ModelParams, grads, state: AdamState):
    """Apply one bias-corrected Adam update in place

    Parameters
    ----------
    params : ModelParams
    grads : Mapping[str, np.ndarray]
        Gradient for every parameter in `params`.
    state : AdamState
        Updated in place: `step_count` advances by one.

    Examples
    --------
    >>> params = ModelParams()
    >>> w = params.add('w', [[1.0]])
    >>> state = AdamState(learning_rate=0.1)
    >>> adam_step(params, {'w': np.ones((1, 1))}, state)
    >>> round(w.item(), 6), state.step_count
    (0.9, 1)
    """
    for name, node in params.items():
        grad = grads[name]
        if not np.all(np.isfinite(grad)):
            raise TrainingError("Non-finite gradient for parameter '{}'".format(name))

    state.step_count += 1
    t = state.step_count
    correction1 = 1 - state.beta1**t
    correction2 = 1 - state.beta2**t

    for name, node in params.items():
        grad = grads[name]
        m = state.first_moment.get(name, np.zeros(node.shape))
        v = state.second_moment.get(name, np.zeros(node.shape))
        m = state.beta1 * m + (1 - state.beta1) * grad
        v = state.beta2 * v + (1 - state.beta2) * grad**2
        state.first_moment[name] = m
        state.second_moment[name] = v

        step = state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        node.values = node.values - step
