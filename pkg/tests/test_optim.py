import pytest

import numpy as np
import gadguard as gg
from gadguard.tensor import DimensionError


def test_xavier_bounds():
    rng = np.random.default_rng(0)
    w = gg.xavier_init(30, 20, rng)
    bound = np.sqrt(6 / 50)
    assert w.shape == (30, 20)
    assert np.all(np.abs(w) <= bound)
    assert np.abs(w).max() > 0.8 * bound

    with pytest.raises(DimensionError):
        gg.xavier_init(0, 3, rng)


def test_xavier_deterministic():
    a = gg.xavier_init(4, 4, np.random.default_rng(5))
    b = gg.xavier_init(4, 4, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_xavier_variance():
    """Uniform Glorot entries have variance `2 / (rows + cols)`"""
    rng = np.random.default_rng(3)
    target = 2 / (64 + 64)
    for _ in range(10):
        variance = gg.xavier_init(64, 64, rng).var()
        assert target / 3 < variance < 3 * target


def test_params_registry():
    params = gg.ModelParams()
    w = params.add('layer.0.weight', np.ones((2, 3)))
    params.add('layer.0.bias', np.zeros((1, 2)))

    assert params.names == ['layer.0.weight', 'layer.0.bias']
    assert len(params) == 2 and params.size == 8
    assert 'layer.0.weight' in params
    assert params['layer.0.weight'] is w
    assert w.requires_grad and w.name == 'layer.0.weight'

    with pytest.raises(RuntimeError):
        params.add('layer.0.bias', np.zeros((1, 2)))
    with pytest.raises(KeyError):
        params['missing']


def test_state_dict_round_trip():
    params = gg.ModelParams()
    params.add('w', [[1.0, 2.0]])
    state = params.state_dict()
    params['w'].values = [[5.0, 6.0]]
    params.load_state_dict(state)
    assert params['w'].values.tolist() == [[1.0, 2.0]]

    with pytest.raises(RuntimeError) as excinfo:
        params.load_state_dict({'v': np.zeros((1, 2))})
    assert "'v'" in str(excinfo.value) and "'w'" in str(excinfo.value)
    with pytest.raises(DimensionError):
        params.load_state_dict({'w': np.zeros((2, 2))})


def test_adam_first_steps():
    """The first bias-corrected step has size `lr` in the direction of the gradient sign"""
    params = gg.ModelParams()
    w = params.add('w', [[1.0, -1.0, 0.5]])
    state = gg.AdamState(learning_rate=0.01)
    gg.adam_step(params, {'w': np.array([[2.0, -3.0, 0.0]])}, state)
    assert pytest.fuzzy_equal(w.values, [[0.99, -0.99, 0.5]], rtol=1e-6)
    assert state.step_count == 1

    # constant gradients keep the step size at `lr`
    gg.adam_step(params, {'w': np.array([[2.0, -3.0, 0.0]])}, state)
    assert pytest.fuzzy_equal(w.values, [[0.98, -0.98, 0.5]], rtol=1e-6)


def test_adam_minimizes_quadratic():
    params = gg.ModelParams()
    w = params.add('w', [[3.0, -2.0]])
    state = gg.AdamState(learning_rate=0.1)
    for _ in range(500):
        params.zero_grad()
        gg.tensor.backward(gg.tensor.sum_all(gg.tensor.square(w - 1.0)))
        gg.adam_step(params, params.grads(), state)
    assert pytest.fuzzy_equal(w.values, [[1.0, 1.0]], atol=5e-2)


def test_adam_rejects_non_finite():
    params = gg.ModelParams()
    w = params.add('w', [[1.0]])
    params.add('v', [[1.0]])
    state = gg.AdamState()
    with pytest.raises(gg.TrainingError) as excinfo:
        gg.adam_step(params, {'w': np.zeros((1, 1)), 'v': np.array([[np.nan]])}, state)
    assert "'v'" in str(excinfo.value)
    # nothing was updated
    assert w.values.tolist() == [[1.0]]
    assert state.step_count == 0
