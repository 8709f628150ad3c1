import numpy as np
import pytest

from kapointnet import tensor as T
from kapointnet.errors import DimensionError, UsageError
from kapointnet.jacobi import BasisSpec, jacobi_values
from kapointnet.kan import KanLayer, kan_layer_forward, kan_layer_init
from kapointnet.mlp import MlpLayer, shared_mlp_forward
from kapointnet.norm import BatchNorm, LayerNorm, batch_norm_forward, layer_norm_forward


def fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def kan_loop_oracle(x, lam, spec):
    b, n, d_in = x.shape
    d_out = lam.shape[0]
    out = np.zeros((b, n, d_out))
    for bi in range(b):
        for p in range(n):
            for j in range(d_in):
                basis = jacobi_values(np.tanh(x[bi, p, j]), spec)
                for k in range(d_out):
                    for i in range(spec.n_terms):
                        out[bi, p, k] += lam[k, j, i] * basis[i]
    return out


# -- KAN ---------------------------------------------------------------------

def test_kan_constant_basis_ignores_input():
    spec = BasisSpec(0)
    layer = kan_layer_init(3, 2, spec, seed=0)
    x = np.random.default_rng(1).normal(size=(2, 4, 3))
    out = kan_layer_forward(T.Tensor(x), layer).data
    np.testing.assert_allclose(out, np.broadcast_to(layer.lam.data[:, :, 0].sum(axis=1), out.shape), atol=1e-15)


def test_kan_odd_basis_at_origin():
    layer = KanLayer(1, 1, BasisSpec(1, 0.0, 0.0), lam=np.array([[[0.0, 1.0]]]))
    assert layer(T.Tensor(np.zeros((1, 1, 1)))).data.item() == 0.0


def test_kan_matches_loop_oracle():
    spec = BasisSpec(3, 0.5, 1.5)
    layer = kan_layer_init(3, 4, spec, seed=7)
    x = np.random.default_rng(2).normal(size=(2, 5, 3))
    np.testing.assert_allclose(layer(T.Tensor(x)).data, kan_loop_oracle(x, layer.lam.data, spec), atol=1e-12)


def test_kan_parameter_count():
    assert KanLayer(5, 7, BasisSpec(3)).n_trainable() == 4 * 7 * 5


def test_kan_init_determinism_and_variance():
    spec = BasisSpec(3)
    a, b = kan_layer_init(64, 64, spec, seed=3), kan_layer_init(64, 64, spec, seed=3)
    np.testing.assert_array_equal(a.lam.data, b.lam.data)
    c = kan_layer_init(64, 64, spec, seed=4)
    assert not np.array_equal(a.lam.data, c.lam.data)
    target = 1.0 / (64 * 4)
    assert a.lam.size >= 10**4
    assert abs(a.lam.data.var() / target - 1.0) < 0.1


def test_kan_dimension_mismatch():
    with pytest.raises(DimensionError):
        KanLayer(3, 2, BasisSpec(2))(T.Tensor(np.ones((1, 2, 4))))


def test_kan_gradients():
    spec = BasisSpec(3)
    layer = kan_layer_init(2, 3, spec, seed=0)
    rng = np.random.default_rng(0)
    x0, w = rng.normal(size=(2, 3, 2)), rng.normal(size=(2, 3, 3))
    x = T.Tensor(x0, requires_grad=True)
    T.tsum(layer(x) * T.Tensor(w)).backward()
    lam0 = layer.lam.data.copy()
    np.testing.assert_allclose(x.grad, fd(lambda v: np.sum(kan_loop_oracle(v, lam0, spec) * w), x0), atol=1e-7)
    np.testing.assert_allclose(layer.lam.grad, fd(lambda l: np.sum(kan_loop_oracle(x0, l, spec) * w), lam0),
                               atol=1e-7)


@pytest.mark.parametrize("cls", ["kan", "mlp"])
def test_split_forward_equals_concat(cls):
    rng = np.random.default_rng(11)
    local0, glob0 = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 4))
    layer = kan_layer_init(7, 6, BasisSpec(3), seed=1) if cls == "kan" else MlpLayer(7, 6, rng=1)
    w = rng.normal(size=(2, 5, 6))

    la, ga = T.Tensor(local0, requires_grad=True), T.Tensor(glob0, requires_grad=True)
    fused = layer.forward_split(la, ga)
    T.tsum(fused * T.Tensor(w)).backward()
    grads_fused = [la.grad, ga.grad] + [p.grad.copy() for p in layer.parameters().values()]
    for p in layer.parameters().values():
        p.grad = None

    lb, gb = T.Tensor(local0, requires_grad=True), T.Tensor(glob0, requires_grad=True)
    plain = layer(T.concat_channels(lb, T.expand_points(gb, 5)))
    T.tsum(plain * T.Tensor(w)).backward()
    grads_plain = [lb.grad, gb.grad] + [p.grad for p in layer.parameters().values()]

    np.testing.assert_allclose(fused.data, plain.data, atol=1e-12)
    for a, b in zip(grads_fused, grads_plain):
        np.testing.assert_allclose(a, b, atol=1e-12)


# -- MLP ---------------------------------------------------------------------

def test_mlp_identity_and_relu_boundary():
    x = np.random.default_rng(0).normal(size=(1, 4, 3))
    ident = MlpLayer(3, 3, "none", weights=np.eye(3), bias=np.zeros(3))
    np.testing.assert_array_equal(ident(T.Tensor(x)).data, x)
    layer = MlpLayer(2, 1, "relu", weights=[[1.0, 1.0]], bias=[-2.0])
    assert shared_mlp_forward(T.Tensor([[[1.0, 1.0]]]), layer).data.item() == 0.0


def test_mlp_per_point_loop_oracle():
    rng = np.random.default_rng(4)
    layer = MlpLayer(3, 5, "sigmoid", rng=2)
    x = rng.normal(size=(2, 6, 3))
    W, b = layer.weights.data, layer.bias.data
    ref = np.zeros((2, 6, 5))
    for i in range(2):
        for p in range(6):
            ref[i, p] = 1.0 / (1.0 + np.exp(-(W @ x[i, p] + b)))
    np.testing.assert_allclose(layer(T.Tensor(x)).data, ref, atol=1e-12)


def test_mlp_count_and_mismatch():
    assert MlpLayer(64, 128).n_trainable() == 64 * 128 + 128
    with pytest.raises(DimensionError):
        MlpLayer(3, 2)(T.Tensor(np.ones((1, 1, 2))))
    with pytest.raises(DimensionError):
        MlpLayer(3, 2, weights=np.ones((3, 2)))


# -- batch norm ----------------------------------------------------------------

def test_batch_norm_train_statistics():
    x = np.random.default_rng(0).normal(3.0, 2.0, size=(4, 16, 5))
    bn = BatchNorm(5, eps=0.0)
    out = bn(T.Tensor(x), training=True).data.reshape(-1, 5)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-10)


def test_batch_norm_default_epsilon_scales_variance():
    x = np.random.default_rng(0).normal(size=(4, 16, 5))
    bn = BatchNorm(5)
    out = bn(T.Tensor(x), training=True).data.reshape(-1, 5)
    v = x.reshape(-1, 5).var(axis=0)
    np.testing.assert_allclose(out.var(axis=0), v / (v + bn.eps), atol=1e-10)


def test_batch_norm_identity_infer():
    x = np.random.default_rng(1).normal(size=(2, 3, 4))
    out = batch_norm_forward(T.Tensor(x), BatchNorm(4), "infer").data
    np.testing.assert_allclose(out, x / np.sqrt(1.0 + 1e-5), atol=1e-15)


def test_batch_norm_running_update():
    x = np.random.default_rng(2).normal(1.0, 3.0, size=(2, 10, 3))
    bn = BatchNorm(3, momentum=0.9)
    bn(T.Tensor(x), training=True)
    flat = x.reshape(-1, 3)
    np.testing.assert_allclose(bn.running_mean, 0.1 * flat.mean(axis=0), atol=1e-14)
    np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * flat.var(axis=0), atol=1e-14)
    assert np.all(bn.running_var >= 0)


def test_batch_norm_infer_does_not_touch_stats():
    bn = BatchNorm(3)
    bn(T.Tensor(np.ones((1, 4, 3))), training=False)
    np.testing.assert_array_equal(bn.running_mean, 0.0)
    bn(T.Tensor(np.random.default_rng(0).normal(size=(1, 4, 3))), training=True, update_stats=False)
    np.testing.assert_array_equal(bn.running_var, 1.0)


def test_batch_norm_needs_two_positions():
    with pytest.raises(UsageError):
        BatchNorm(2)(T.Tensor(np.ones((1, 1, 2))), training=True)


@pytest.mark.parametrize("training", [True, False])
def test_batch_norm_gradients(training):
    rng = np.random.default_rng(3)
    x0, w = rng.normal(size=(2, 4, 3)), rng.normal(size=(2, 4, 3))
    bn = BatchNorm(3)
    bn.gamma.data = rng.normal(size=3)
    bn.beta_shift.data = rng.normal(size=3)
    bn.running_mean, bn.running_var = rng.normal(size=3), rng.uniform(0.5, 2, size=3)
    x = T.Tensor(x0, requires_grad=True)
    T.tsum(bn(x, training=training, update_stats=False) * T.Tensor(w)).backward()

    def loss(v=x0, g=bn.gamma.data, b=bn.beta_shift.data):
        if training:
            mu, var = v.reshape(-1, 3).mean(0), v.reshape(-1, 3).var(0)
        else:
            mu, var = bn.running_mean, bn.running_var
        return np.sum(((v - mu) / np.sqrt(var + bn.eps) * g + b) * w)

    np.testing.assert_allclose(x.grad, fd(lambda v: loss(v=v), x0), atol=1e-7)
    np.testing.assert_allclose(bn.gamma.grad, fd(lambda g: loss(g=g), bn.gamma.data.copy()), atol=1e-7)
    np.testing.assert_allclose(bn.beta_shift.grad, fd(lambda b: loss(b=b), bn.beta_shift.data.copy()), atol=1e-7)


def test_batch_norm_counts():
    assert BatchNorm(64).n_trainable() == 128


# -- layer norm ----------------------------------------------------------------

def test_layer_norm_constant_input_and_statistics():
    ln = LayerNorm(4, 3)
    out = ln(T.Tensor(np.full((2, 4, 3), 5.0))).data
    np.testing.assert_array_equal(out, 0.0)
    x = np.random.default_rng(0).normal(2.0, 3.0, size=(3, 4, 3))
    out = LayerNorm(4, 3, eps=0.0)(T.Tensor(x)).data
    np.testing.assert_allclose(out.mean(axis=(1, 2)), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=(1, 2)), 1.0, atol=1e-10)


def test_layer_norm_shape_contract_and_count():
    ln = LayerNorm(4, 3)
    assert ln.n_trainable() == 2 * 4 * 3
    with pytest.raises(DimensionError):
        layer_norm_forward(T.Tensor(np.ones((1, 5, 3))), ln)


def test_layer_norm_gradients():
    rng = np.random.default_rng(5)
    x0, w = rng.normal(size=(2, 4, 3)), rng.normal(size=(2, 4, 3))
    ln = LayerNorm(4, 3)
    ln.gamma.data = rng.normal(size=(4, 3))
    ln.beta_shift.data = rng.normal(size=(4, 3))
    x = T.Tensor(x0, requires_grad=True)
    T.tsum(ln(x) * T.Tensor(w)).backward()

    def loss(v=x0, g=ln.gamma.data):
        mu = v.mean(axis=(1, 2), keepdims=True)
        var = v.var(axis=(1, 2), keepdims=True)
        return np.sum(((v - mu) / np.sqrt(var + ln.eps) * g + ln.beta_shift.data) * w)

    np.testing.assert_allclose(x.grad, fd(lambda v: loss(v=v), x0), atol=1e-7)
    np.testing.assert_allclose(ln.gamma.grad, fd(lambda g: loss(g=g), ln.gamma.data.copy()), atol=1e-7)
    np.testing.assert_allclose(ln.beta_shift.grad, w.sum(axis=0), atol=1e-12)
