from gadguard.tensor import TensorNode, gradient_check

STEP = 1e-5
FLOOR = 1e-8
TOLERANCE = 1e-4


def assert_gradients(fn, tensors, h=STEP, tolerance=TOLERANCE):
    """Assert that analytic gradients match central finite differences"""
    __tracebackhide__ = True
    error = gradient_check(fn, list(tensors), h=h, floor=FLOOR)
    assert error < tolerance, "gradient mismatch: relative error {:.3g}".format(error)


def random_node(rng, shape, scale=1.0):
    """Trainable node with entries bounded away from zero (no |x| or LeakyReLU kinks)"""
    values = rng.uniform(0.2, 1.0, size=shape) * rng.choice([-1, 1], size=shape)
    return TensorNode(scale * values, requires_grad=True)


def offset_biases(params, rng, low=0.05, high=0.2):
    """Move zero-initialized biases away from zero so no pre-activation sits on a kink

    Rows of an isolated node see only the bias, which is exactly 0 after `init_mlp`.
    """
    for name, tensor in params.items():
        if name.endswith('bias'):
            shape = tensor.shape
            tensor.values = rng.uniform(low, high, size=shape) * rng.choice([-1, 1], size=shape)
