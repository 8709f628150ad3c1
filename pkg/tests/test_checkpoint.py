import numpy as np
import pytest

from kapointnet.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from kapointnet.data import ScalingParams
from kapointnet.errors import DataError, VersionMismatchError
from kapointnet.model import ModelConfig, build_model
from kapointnet.training import TrainConfig, train

SCALING = ScalingParams((-2.0, -2.0, -0.5, -1.0, -3.0), (2.0, 2.0, 2.0, 1.0, 0.5))


def toy_data(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(4, 16, 2))
    return x, np.tanh(x @ rng.normal(size=(2, 3)))


@pytest.fixture(scope="module")
def trained():
    m = build_model(ModelConfig(n_s="1/8", n_points=16, seed=2))
    res = train(m, toy_data(), toy_data(1), TrainConfig(batch_size=2, max_epochs=3))
    return m, res.optimizer


def test_round_trip_is_byte_exact(trained, tmp_path):
    m, opt = trained
    buf = encode_checkpoint(m, SCALING, opt, extra={"note": "x"})
    assert buf[:4] == b"KAPT"
    ck = decode_checkpoint(buf)
    assert ck.model.config == m.config
    assert ck.scaling == SCALING
    assert ck.extra == {"note": "x"}
    assert encode_checkpoint(ck.model, ck.scaling, ck.make_optimizer(), ck.extra) == buf
    save_checkpoint(tmp_path / "c.kapt", m, SCALING, opt)
    assert (tmp_path / "c.kapt").read_bytes() == encode_checkpoint(m, SCALING, opt)


def test_loaded_model_predicts_identically(trained, tmp_path):
    m, opt = trained
    save_checkpoint(tmp_path / "c.kapt", m, SCALING, opt)
    ck = load_checkpoint(tmp_path / "c.kapt")
    x = toy_data(5)[0]
    np.testing.assert_array_equal(ck.model.predict(x), m.predict(x))
    for k, v in m.buffers().items():
        np.testing.assert_array_equal(ck.model.buffers()[k], v)
    o2 = ck.make_optimizer()
    assert o2.state.t == opt.state.t
    for k in opt.state.v:
        np.testing.assert_array_equal(o2.state.v[k], opt.state.v[k])


def test_resume_matches_uninterrupted_training():
    data, val = toy_data(), toy_data(1)
    full = build_model(ModelConfig(n_s="1/8", n_points=16, seed=0))
    res = train(full, data, val, TrainConfig(batch_size=4, max_epochs=1, seed=3))
    ck = decode_checkpoint(encode_checkpoint(full, None, res.optimizer))
    # continuing from the decoded state matches continuing in memory
    a = ck.model
    train(a, data, val, TrainConfig(batch_size=4, max_epochs=1, seed=4), optimizer=ck.make_optimizer())
    train(full, data, val, TrainConfig(batch_size=4, max_epochs=1, seed=4), optimizer=res.optimizer)
    for k, v in full.state_arrays().items():
        np.testing.assert_array_equal(a.state_arrays()[k], v)


def test_without_optimizer_or_scaling():
    m = build_model(ModelConfig(mode="MLP", n_s="1/8", n_points=8))
    ck = decode_checkpoint(encode_checkpoint(m))
    assert ck.scaling is None and ck.optimizer is None and ck.optimizer_arrays == {}
    assert ck.make_optimizer().state.t == 0


def test_corrupt_and_mismatched_files(trained):
    buf = encode_checkpoint(trained[0], SCALING)
    with pytest.raises(DataError, match="magic"):
        decode_checkpoint(b"NOPE" + buf[4:])
    with pytest.raises(DataError):
        decode_checkpoint(buf[:3])
    with pytest.raises(DataError, match="past end"):
        decode_checkpoint(buf[:-8])
    with pytest.raises(VersionMismatchError) as info:
        decode_checkpoint(buf[:4] + (7).to_bytes(2, "little") + buf[6:])
    assert "7" in str(info.value)
