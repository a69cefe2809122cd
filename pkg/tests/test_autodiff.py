import numpy as np
import pytest

from rlcf.nn import autodiff as ad
from rlcf.nn.autodiff import Tensor


def randp(rng, *shape):
    return ad.parameter(rng.normal(0, 1, size=shape))


def check(fn, params, tol=1e-6):
    err = ad.gradient_check(fn, params)
    assert err < tol, err


def test_add_mul_broadcast(rng):
    a = randp(rng, 3, 4)
    b = randp(rng, 4)
    check(lambda: ad.sum_(ad.mul(ad.add(a, b), ad.add(a, 2.0))), [a, b])


def test_matmul_batched(rng):
    a = randp(rng, 2, 3, 4)
    b = randp(rng, 2, 4, 5)
    check(lambda: ad.sum_(ad.matmul(a, b)), [a, b])


def test_elementwise_ops(rng):
    a = randp(rng, 5)
    check(lambda: ad.sum_(ad.exp(ad.tanh(a))), [a])
    check(lambda: ad.sum_(ad.sigmoid(ad.gelu(a))), [a])
    check(lambda: ad.sum_(ad.softplus(a)), [a])
    b = ad.parameter(np.abs(rng.normal(1, 0.1, size=4)))
    check(lambda: ad.sum_(ad.log(b)), [b])
    check(lambda: ad.sum_(ad.power(b, 3.0)), [b])


def test_softmax_and_log_softmax(rng):
    a = randp(rng, 3, 7)
    w = rng.normal(0, 1, size=(3, 7))
    check(lambda: ad.sum_(ad.mul(ad.softmax(a), w)), [a])
    check(lambda: ad.sum_(ad.mul(ad.log_softmax(a), w)), [a])
    probs = ad.softmax(a).data
    assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-12)


def test_layer_norm(rng):
    x = randp(rng, 4, 6)
    g = randp(rng, 6)
    b = randp(rng, 6)
    w = rng.normal(0, 1, size=(4, 6))
    check(lambda: ad.sum_(ad.mul(ad.layer_norm(x, g, b), w)), [x, g, b])


def test_embedding_gather_scatter(rng):
    w = randp(rng, 6, 3)
    ids = np.array([1, 4, 1, 0])
    check(lambda: ad.sum_(ad.power(ad.embedding(w, ids), 2.0)), [w])


def test_take_rows_and_pairs(rng):
    x = randp(rng, 5, 4)
    check(lambda: ad.sum_(ad.take_rows(x, np.array([0, 3, 3]))), [x])
    check(lambda: ad.sum_(ad.take_pairs(x, np.array([0, 2]), np.array([1, 3]))), [x])


def test_reshape_transpose(rng):
    x = randp(rng, 2, 3, 4)
    w = rng.normal(0, 1, size=(4, 6))
    check(lambda: ad.sum_(ad.mul(ad.transpose(ad.reshape(x, (4, 6)), (1, 0)), w.T)), [x])


def test_minimum_and_clip(rng):
    a = randp(rng, 8)
    b = randp(rng, 8)
    check(lambda: ad.sum_(ad.minimum(a, b)), [a, b])
    check(lambda: ad.sum_(ad.clip(a, -0.5, 0.5)), [a])


def test_max_routes_to_argmax(rng):
    x = ad.parameter(np.array([[1.0, 3.0, 2.0], [5.0, 4.0, 0.0]]))
    out = ad.sum_(ad.max_(x, axis=0))
    out.backward()
    assert np.array_equal(x.grad, np.array([[0, 0, 1], [1, 1, 0]], dtype=float))


def test_gradient_accumulates_over_shared_use(rng):
    a = ad.parameter(np.array(2.0))
    out = ad.mul(a, a)
    out.backward()
    assert a.grad == pytest.approx(4.0)


def test_no_grad_skips_graph(rng):
    a = randp(rng, 3)
    with ad.no_grad():
        out = ad.sum_(ad.mul(a, a))
    assert out._parents == ()
    assert not out.requires_grad


def test_backward_requires_scalar(rng):
    a = randp(rng, 3)
    with pytest.raises(ValueError):
        ad.mul(a, 2.0).backward()


def test_operator_sugar(rng):
    a = randp(rng, 3)
    b = randp(rng, 3)
    out = ad.sum_((a - b) / 2.0 + (-a) @ np.ones((3,)).reshape(3, 1) * 0.0)
    check(lambda: ad.sum_((a - b) * 0.5), [a, b])
    assert out.data.shape == ()
