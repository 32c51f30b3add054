import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from consnet import autodiff as ad
from consnet.autodiff import NonFiniteError, Tape, Tensor, backward, grad_check


def param(rng, shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def probe(out_shape, seed):
    """Random fixed weights that turn a tensor into a scalar."""
    return Tensor(np.random.default_rng([seed, 7]).normal(size=out_shape))


def scalar_of(t: Tensor, seed=0) -> Tensor:
    return ad.sum_all(ad.mul(t, probe(t.shape, seed)))


def test_sigmoid_zero():
    assert ad.sigmoid(Tensor([[0.0]])).item() == 0.5


def test_equal_logits_softmax_is_uniform():
    mask = np.array([[True, True, False, True, True]])
    out = ad.masked_row_softmax(Tensor(np.full((1, 5), 3.7)), mask).data
    np.testing.assert_allclose(out[0, mask[0]], 0.25, rtol=0, atol=1e-15)
    assert out[0, 2] == 0.0


def test_row_l2_normalize_345():
    np.testing.assert_allclose(ad.row_l2_normalize(Tensor([[3.0, 4.0]])).data, [[0.6, 0.8]], atol=1e-15)


def test_square_gradient():
    x = Tensor([[3.0]], requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, x)
    assert backward(tape, y, [x])[x][0, 0] == 6.0


def test_constant_output_has_zero_gradient():
    x = Tensor([[1.0, 2.0]], requires_grad=True)
    with Tape() as tape:
        y = ad.sum_all(Tensor([[5.0]]))
    g = backward(tape, y, [x])[x]
    assert np.array_equal(g, np.zeros((1, 2)))


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        y = ad.scale(x, 2.0)
    with pytest.raises(ValueError):
        backward(tape, y, [x])


def test_linear_map_gradcheck_is_exact(rng):
    W = param(rng, (4, 3))
    x = Tensor(rng.normal(size=(5, 4)))
    assert grad_check(lambda: scalar_of(ad.matmul(x, W)), [W]) < 1e-8


def test_three_layer_composite_gradcheck(rng):
    W1, W2, W3 = param(rng, (4, 6)), param(rng, (6, 5)), param(rng, (5, 2))
    b1 = param(rng, (1, 6))
    x = Tensor(rng.normal(size=(7, 4)))

    def f():
        h = ad.relu(ad.add(ad.matmul(x, W1), b1))
        h = ad.sigmoid(ad.matmul(h, W2))
        return scalar_of(ad.matmul(h, W3))

    assert grad_check(f, [W1, W2, W3, b1]) < 1e-4


def test_grad_check_rejects_nonpositive_eps(rng):
    W = param(rng, (2, 2))
    with pytest.raises(ValueError):
        grad_check(lambda: ad.sum_all(W), [W], eps=0.0)


def test_shape_mismatch_errors():
    with pytest.raises(ValueError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ValueError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_all_masked_row_is_an_error():
    with pytest.raises(ValueError):
        ad.masked_row_softmax(Tensor(np.zeros((2, 2))), np.array([[True, False], [False, False]]))


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_non_finite_values_raise():
    with pytest.raises(NonFiniteError):
        ad.log(Tensor([[0.0]]))
    with pytest.raises(NonFiniteError):
        ad.scale(Tensor([[1e308]]), 1e10)


def test_relu_subgradient_at_zero_is_zero():
    x = Tensor([[0.0, 1.0, -1.0]], requires_grad=True)
    with Tape() as tape:
        y = ad.sum_all(ad.relu(x))
    np.testing.assert_array_equal(backward(tape, y, [x])[x], [[0.0, 1.0, 0.0]])


def test_log_sigmoid_matches_naive_and_stays_finite():
    z = np.array([[-800.0, -30.0, -1.0, 0.0, 2.0, 40.0, 800.0]])
    out = ad.log_sigmoid(Tensor(z)).data
    mid = z[:, 1:-1]
    np.testing.assert_allclose(out[:, 1:-1], np.log(1 / (1 + np.exp(-mid))), rtol=1e-12, atol=1e-15)
    assert np.all(np.isfinite(out))


def test_tape_records_in_topological_order(rng):
    W = param(rng, (3, 3))
    with Tape() as tape:
        h = ad.relu(ad.matmul(Tensor(np.eye(3)), W))
        ad.sum_all(h)
    seen = set()
    for node in tape.nodes:
        for p in node._parents:
            if p._backward is not None:
                assert id(p) in seen
        seen.add(id(node))


def test_shared_subexpression_visited_once(rng):
    x = param(rng, (2, 2))
    with Tape() as tape:
        h = ad.sigmoid(x)
        y = ad.sum_all(ad.add(h, h))
    g = backward(tape, y, [x])[x]
    S = 1 / (1 + np.exp(-x.data))
    np.testing.assert_allclose(g, 2 * S * (1 - S), rtol=1e-12)


def test_determinism(rng):
    W = rng.normal(size=(5, 5))

    def run():
        x = Tensor(W, requires_grad=True)
        with Tape() as tape:
            y = ad.sum_all(ad.sigmoid(ad.matmul(x, x)))
        return y.data.copy(), backward(tape, y, [x])[x]

    (a, ga), (b, gb) = run(), run()
    assert np.array_equal(a, b) and np.array_equal(ga, gb)


def test_float32_mode():
    prev = ad.get_default_dtype()
    ad.set_default_dtype("float32")
    try:
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        assert x.data.dtype == np.float32
        with Tape() as tape:
            y = ad.sum_all(ad.sigmoid(ad.mul_const(x, np.full((2, 2), 2.0))))
        assert y.data.dtype == np.float32
        assert backward(tape, y, [x])[x].dtype == np.float32
    finally:
        ad.set_default_dtype(prev)
    with pytest.raises(ValueError):
        ad.set_default_dtype("int32")


# every primitive against central differences on random inputs

shapes = st.tuples(st.integers(1, 4), st.integers(1, 4))
seeds = st.integers(0, 2**16)


def _check(f, params):
    assert grad_check(f, params) < 1e-6


@given(shapes, shapes, seeds)
def test_grad_matmul(s1, s2, seed):
    rng = np.random.default_rng(seed)
    a, b = param(rng, (s1[0], s1[1])), param(rng, (s1[1], s2[1]))
    _check(lambda: scalar_of(ad.matmul(a, b), seed), [a, b])


@given(shapes, seeds, st.booleans())
def test_grad_add_sub_mul(shape, seed, row_bias):
    rng = np.random.default_rng(seed)
    a = param(rng, shape)
    b = param(rng, (1, shape[1]) if row_bias else shape)
    _check(lambda: scalar_of(ad.add(a, b), seed), [a, b])
    c = param(rng, shape)
    _check(lambda: scalar_of(ad.mul(ad.sub(a, c), c), seed), [a, c])


@given(shapes, seeds)
def test_grad_elementwise(shape, seed):
    rng = np.random.default_rng(seed)
    a = param(rng, shape)
    # keep away from kinks so central differences are valid
    a.data[np.abs(a.data) < 1e-3] = 0.5
    pos = Tensor(np.abs(rng.normal(size=shape)) + 0.5, requires_grad=True)
    for fn in (ad.sigmoid, ad.relu, lambda t: ad.leaky_relu(t, 0.2), ad.log_sigmoid,
               lambda t: ad.scale(t, -1.7), lambda t: ad.add_scalar(t, 3.0), ad.transpose,
               lambda t: ad.mul_const(t, np.full(t.shape, 0.3))):
        _check(lambda: scalar_of(fn(a), seed), [a])
    _check(lambda: scalar_of(ad.log(pos), seed), [pos])
    _check(lambda: scalar_of(ad.clip(a, -0.5, 0.5), seed), [a]) if np.all(np.abs(np.abs(a.data) - 0.5) > 1e-3) else None


@given(shapes, seeds)
def test_grad_reductions(shape, seed):
    rng = np.random.default_rng(seed)
    a = param(rng, shape)
    for fn in (ad.mean_rows, ad.sum_rows, ad.row_sum):
        _check(lambda: scalar_of(fn(a), seed), [a])
    _check(lambda: ad.sum_all(ad.mul(a, a)), [a])
    _check(lambda: ad.mean_all(ad.mul(a, a)), [a])


@given(shapes, seeds)
def test_grad_shape_ops(shape, seed):
    rng = np.random.default_rng(seed)
    a, b = param(rng, shape), param(rng, shape)
    _check(lambda: scalar_of(ad.concat([a, b], axis=1), seed), [a, b])
    _check(lambda: scalar_of(ad.concat([a, b], axis=0), seed), [a, b])
    idx = rng.integers(0, shape[0], size=5)
    _check(lambda: scalar_of(ad.take_rows(a, idx), seed), [a])
    _check(lambda: scalar_of(ad.slice_cols(a, 0, shape[1]), seed), [a])
    col, row = param(rng, (shape[0], 1)), param(rng, (1, shape[1]))
    _check(lambda: scalar_of(ad.outer_add(col, row), seed), [col, row])


@given(st.tuples(st.integers(1, 4), st.integers(2, 4)), seeds)
def test_grad_row_normalize_and_softmax(shape, seed):
    # a single column normalizes to a constant, whose zero gradient is all rounding noise
    rng = np.random.default_rng(seed)
    a = param(rng, shape)
    a.data += np.sign(a.data) * 0.1
    _check(lambda: scalar_of(ad.row_l2_normalize(a, 1e-8), seed), [a])
    mask = rng.random(shape) < 0.6
    mask[np.arange(shape[0]), rng.integers(0, shape[1], shape[0])] = True
    _check(lambda: scalar_of(ad.masked_row_softmax(a, mask), seed), [a])


@given(st.integers(3, 6), st.integers(1, 4), seeds, st.booleans())
def test_grad_batch_norm(m, n, seed, training):
    # two rows normalize to a constant in training mode, so start at three
    rng = np.random.default_rng(seed)
    x = param(rng, (m, n))
    gamma, beta = param(rng, (1, n)), param(rng, (1, n))
    rm, rv = np.zeros((1, n)), np.ones((1, n))
    _check(lambda: scalar_of(ad.batch_norm(x, gamma, beta, rm.copy(), rv.copy(), training), seed),
           [x, gamma, beta])


@given(shapes, seeds)
def test_masked_softmax_rows_sum_to_one(shape, seed):
    rng = np.random.default_rng(seed)
    logits = Tensor(rng.normal(size=shape) * 10)
    mask = rng.random(shape) < 0.5
    mask[:, 0] = True
    out = ad.masked_row_softmax(logits, mask).data
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(out[~mask] == 0.0)


def test_batch_norm_updates_running_stats_only_in_training():
    x = Tensor(np.array([[1.0], [3.0]]))
    g, b = Tensor([[1.0]]), Tensor([[0.0]])
    rm, rv = np.zeros((1, 1)), np.ones((1, 1))
    ad.batch_norm(x, g, b, rm, rv, training=True)
    assert rm[0, 0] == pytest.approx(0.2) and rv[0, 0] == pytest.approx(0.9 + 0.1 * 2.0)
    before = (rm.copy(), rv.copy())
    ad.batch_norm(x, g, b, rm, rv, training=False)
    assert np.array_equal(rm, before[0]) and np.array_equal(rv, before[1])
