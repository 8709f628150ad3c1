import numpy as np
import pytest

from kapointnet import tensor as T
from kapointnet.errors import ConfigError, DimensionError, NonFiniteError
from kapointnet.model import ModelConfig, build_model
from kapointnet import training
from kapointnet.training import (
    Adam,
    AdamState,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    check_gradients,
    evaluate_loss,
    gradient_check,
    mse_loss,
    train,
)


def test_mse_examples():
    y = np.random.default_rng(0).normal(size=(2, 3, 3))
    assert mse_loss(T.Tensor(y), y).item() == 0.0
    assert mse_loss(T.Tensor(y + 1.0), y).item() == pytest.approx(1.0, abs=1e-15)
    assert mse_loss(T.Tensor([[[1.0, 2.0, 2.0]]]), np.zeros((1, 1, 3))).item() == pytest.approx(3.0)
    with pytest.raises(DimensionError):
        mse_loss(T.Tensor(np.zeros((1, 2, 3))), np.zeros((1, 3, 3)))


def test_adam_first_step_magnitude_is_lr():
    p = T.Tensor(np.zeros(3), requires_grad=True)
    g = np.array([0.5, -2.0, 1e-3])
    state = AdamState(lr=1e-3)
    adam_step({"w": p}, {"w": g}, state)
    np.testing.assert_allclose(p.data, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    assert state.t == 1
    assert np.all(state.v["w"] >= 0)
    assert state.m["w"].shape == p.shape


def test_adam_zero_gradient_leaves_parameters():
    p = T.Tensor(np.arange(3.0), requires_grad=True)
    adam_step({"w": p}, {"w": np.zeros(3)}, AdamState())
    np.testing.assert_array_equal(p.data, np.arange(3.0))


def test_adam_matches_reference_over_steps():
    rng = np.random.default_rng(1)
    p = T.Tensor(rng.normal(size=4), requires_grad=True)
    ref = p.data.copy()
    m = v = np.zeros(4)
    state = AdamState(lr=0.01)
    for t in range(1, 6):
        g = rng.normal(size=4)
        adam_step({"w": p}, {"w": g}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-14)


def test_adam_checked_mode_rejects_non_finite_gradient():
    p = T.Tensor(np.zeros(2), requires_grad=True)
    with T.checked_mode(), pytest.raises(NonFiniteError, match="'w'"):
        adam_step({"w": p}, {"w": np.array([1.0, np.nan])}, AdamState())


def test_train_config_validation():
    for bad in ({"batch_size": 0}, {"lr": 0.0}, {"patience": 0}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"momentum": 0.9})


def toy_problem(n=4, n_points=16, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, n_points, 2))
    y = np.stack([0.5 * x[..., 0], -0.3 * x[..., 1], 0.2 * x[..., 0] + 0.1 * x[..., 1]], axis=-1)
    return x, y


def tiny_model(mode="KAN", seed=0, n_points=16):
    return build_model(ModelConfig(mode=mode, n_s="1/8", n_points=n_points, seed=seed))


def test_zero_epochs_returns_initial_model():
    m = tiny_model()
    before = {k: v.copy() for k, v in m.state_arrays().items()}
    res = train(m, toy_problem(), toy_problem(seed=1), TrainConfig(max_epochs=0))
    assert res.history.epochs == []
    for k, v in m.state_arrays().items():
        np.testing.assert_array_equal(v, before[k])


def test_training_loss_decreases_on_linear_toy():
    data = toy_problem()
    res = train(tiny_model(), data, data, TrainConfig(max_epochs=10))
    losses = res.history.train_loss
    assert len(losses) == 10
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_early_stop_on_constant_validation(monkeypatch):
    monkeypatch.setattr(training, "evaluate_loss", lambda model, x, y, bs: 1.0)
    res = train(tiny_model(), toy_problem(), toy_problem(), TrainConfig(batch_size=4, max_epochs=50, patience=3))
    h = res.history
    assert h.stop_reason == "early_stopping"
    assert h.epochs == [1, 2, 3, 4]
    assert h.best_epoch == 1


def test_best_epoch_parameters_restored(monkeypatch):
    vals = iter([0.0, 5.0, 1.0, 0.5, 0.4, 0.3])  # initial train loss, then validation per epoch
    snapshots = {}

    def fake(model, x, y, bs):
        return next(vals)

    def cb(epoch, tl, vl):
        snapshots[epoch] = {k: v.copy() for k, v in m.state_arrays().items()}

    m = tiny_model()
    monkeypatch.setattr(training, "evaluate_loss", fake)
    res = train(m, toy_problem(), toy_problem(), TrainConfig(batch_size=2, max_epochs=5, patience=100), on_epoch=cb)
    h = res.history
    assert h.best_epoch == 5 and h.stop_reason == "max_epochs"
    vals = iter([0.0, 1.0, 2.0, 3.0, 4.0])
    m = tiny_model()
    snapshots.clear()
    res = train(m, toy_problem(), toy_problem(), TrainConfig(batch_size=2, max_epochs=4, patience=100), on_epoch=cb)
    assert res.history.best_epoch == 1
    for k, v in m.state_arrays().items():
        np.testing.assert_array_equal(v, snapshots[1][k])


def test_history_invariants_and_csv(tmp_path):
    data = toy_problem()
    res = train(tiny_model(), data, toy_problem(seed=3), TrainConfig(batch_size=3, max_epochs=6, patience=2))
    h = res.history
    assert h.epochs == list(range(1, len(h.epochs) + 1))
    best_idx = h.epochs.index(h.best_epoch)
    assert all(h.best_val_loss <= v + 1e-6 for v in h.val_loss[best_idx:])
    h.write_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,seconds"
    assert len(lines) == len(h.epochs) + 1


def test_validation_does_not_touch_running_stats():
    m = tiny_model()
    before = {k: v.copy() for k, v in m.buffers().items()}
    evaluate_loss(m, *toy_problem(), 2)
    for k, v in m.buffers().items():
        np.testing.assert_array_equal(v, before[k])


def test_last_partial_batch_is_used():
    seen = []
    m = tiny_model()
    orig = m.forward

    def spy(x, training=False, **kw):
        if training:
            seen.append(x.shape[0])
        return orig(x, training=training, **kw)

    m.forward = spy
    train(m, toy_problem(n=5), toy_problem(n=2), TrainConfig(batch_size=2, max_epochs=1))
    assert sorted(seen) == [1, 2, 2]


def test_divergence_reports_epoch():
    m = tiny_model()
    x, y = toy_problem()
    with pytest.raises(TrainingDiverged) as info:
        train(m, (x, y * np.inf), (x, y), TrainConfig(batch_size=4, max_epochs=3))
    assert info.value.epoch == 1
    assert "epoch 1" in str(info.value)


def test_training_is_deterministic():
    data = toy_problem()

    def run():
        m = tiny_model(seed=4)
        train(m, data, toy_problem(seed=9), TrainConfig(batch_size=3, max_epochs=3, seed=11))
        return m.state_arrays()

    a, b = run(), run()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_optimizer_state_round_trip():
    m = tiny_model()
    res = train(m, toy_problem(), toy_problem(), TrainConfig(batch_size=4, max_epochs=2))
    opt = Adam(m.parameters())
    opt.load(res.optimizer.hyper(), res.optimizer.state_arrays())
    assert opt.state.t == res.optimizer.state.t == res.history.best_epoch
    for k in res.optimizer.state.m:
        np.testing.assert_array_equal(opt.state.m[k], res.optimizer.state.m[k])


# -- gradient checking ----------------------------------------------------------

def test_gradient_check_quadratic_toy():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 5))
    A = A @ A.T
    w = T.Tensor(rng.normal(size=5), requires_grad=True)

    def loss():
        # 0.5 w^T A w
        return T.tsum(T.contract(T.reshape(w, (1, 1, 5)), T.Tensor(A)) * T.reshape(w, (1, 1, 5))) * 0.5

    probes = check_gradients(loss, {"w": w}, 20, step=1e-4, seed=1)
    assert max(p.rel_error for p in probes) < 1e-8


def test_gradient_check_kan_tiny():
    rng = np.random.default_rng(0)
    batch = rng.uniform(-1, 1, size=(2, 8, 2)), rng.uniform(-1, 1, size=(2, 8, 3))
    m = build_model(ModelConfig(n_s="1/8", degree=3, n_points=8, seed=0))
    before = {k: v.copy() for k, v in m.state_arrays().items()}
    assert gradient_check(m, batch, n_probes=50, step=1e-5, seed=0) < 1e-4
    for k, v in m.state_arrays().items():
        np.testing.assert_array_equal(v, before[k])


def test_gradient_check_relu_model_away_from_kinks():
    rng = np.random.default_rng(1)
    batch = rng.uniform(-1, 1, size=(2, 8, 2)), rng.uniform(0, 1, size=(2, 8, 3))
    m = build_model(ModelConfig(mode="MLP", n_s="1/8", n_points=8, seed=0))
    assert gradient_check(m, batch, n_probes=50, step=1e-5, seed=0) < 1e-4
