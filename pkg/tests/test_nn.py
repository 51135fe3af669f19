import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from gradcheck import GRADIENT_CASES
from tactile_transfer.exceptions import (
    DivergedLossError,
    EmptyDatasetError,
    ShapeMismatchError,
    UninitializedGradientError,
)
from tactile_transfer.mesh import ChebBasis
from tactile_transfer.nn import (
    Context,
    Dense,
    GraphConv,
    ParamStore,
    TrainConfig,
    TrainState,
    adam_step,
    backward_dense,
    dropout,
    forward_dense,
    kl_gaussian,
    learning_rate_at,
    mse,
    projection_loss,
    read_checkpoint,
    reparameterize,
    train_loop,
    vae_loss,
    write_checkpoint,
)
from tactile_transfer.nn.checkpoint import restore_state, state_tensors
from tactile_transfer.nn.training import read_history, write_history
from tactile_transfer.exceptions import CorruptFileError


@pytest.mark.parametrize("case", sorted(GRADIENT_CASES))
def test_gradients_match_finite_differences(case):
    worst = max(GRADIENT_CASES[case](seed) for seed in range(20))
    assert worst < 1e-4


# -- dense ----------------------------------------------------------------

def test_dense_identity_layer():
    x = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(forward_dense(x, np.eye(3), np.zeros(3)), x)


def test_relu_definition():
    np.testing.assert_array_equal(forward_dense(np.array([[-1.0, 2.0]]), np.eye(2), np.zeros(2), "relu"), [[0.0, 2.0]])


def test_backward_dense_functional_matches_layer():
    rng = np.random.default_rng(0)
    store = ParamStore(np.float64)
    layer = Dense("d", 4, 3, "elu")
    layer.init(store, rng)
    x = rng.normal(size=(5, 4))
    dy = rng.normal(size=(5, 3))
    _, cache = layer.forward(store, x)
    store.zero_grad()
    dx = layer.backward(store, cache, dy)
    dx2, dW, db = backward_dense(x, store["d.W"], store["d.b"], dy, "elu")
    np.testing.assert_allclose(dx, dx2)
    np.testing.assert_allclose(store.grads["d.W"], dW)
    np.testing.assert_allclose(store.grads["d.b"], db)


def test_dense_shape_mismatch():
    store = ParamStore(np.float64)
    layer = Dense("d", 4, 3)
    layer.init(store, np.random.default_rng(0))
    with pytest.raises(ShapeMismatchError):
        layer.forward(store, np.zeros((2, 5)))


def test_glorot_bounds():
    store = ParamStore(np.float64)
    Dense("d", 30, 20).init(store, np.random.default_rng(0))
    assert np.abs(store["d.W"]).max() <= np.sqrt(6 / 50)


# -- graph conv -------------------------------------------------------------

def _path_laplacian():
    from tactile_transfer.mesh import MeshTopology

    topo = MeshTopology(np.zeros((6, 3)), np.array([[0, 1, 2], [1, 3, 2], [2, 3, 4], [3, 5, 4]]))
    return topo.laplacian


def test_graphconv_order1_identity():
    L = _path_laplacian()
    store = ParamStore(np.float64)
    layer = GraphConv("g", ChebBasis(L, 1).scaled, 1, 3, 3)
    layer.init(store, np.random.default_rng(0))
    store["g.W"][0] = np.eye(3)
    x = np.random.default_rng(1).normal(size=(6, 2, 3))
    np.testing.assert_allclose(layer.forward(store, x)[0], x)


def test_graphconv_superposition():
    L = _path_laplacian()
    store = ParamStore(np.float64)
    layer = GraphConv("g", ChebBasis(L, 3).scaled, 3, 2, 4)
    layer.init(store, np.random.default_rng(0))
    rng = np.random.default_rng(2)
    x1, x2 = rng.normal(size=(2, 6, 1, 2))
    y = lambda x: layer.forward(store, x)[0]  # noqa: E731
    np.testing.assert_allclose(y(x1 + x2), y(x1) + y(x2), atol=1e-12)


def test_graphconv_order_mismatch():
    L = _path_laplacian()
    store = ParamStore(np.float64)
    layer = GraphConv("g", ChebBasis(L, 3).scaled, 3, 2, 4)
    layer.init(store, np.random.default_rng(0))
    with pytest.raises(ShapeMismatchError):
        layer.forward(store, np.zeros((6, 1, 3)))


# -- dropout / reparameterization --------------------------------------------

def test_dropout_rate_zero_is_identity():
    x = np.arange(10.0)
    np.testing.assert_array_equal(dropout(x, 0.0, "train", 1), x)
    np.testing.assert_array_equal(dropout(x, 0.0, "eval", 1), x)


def test_dropout_eval_is_identity():
    x = np.arange(10.0)
    np.testing.assert_array_equal(dropout(x, 0.5, "eval", 1), x)


def test_dropout_statistics():
    x = np.random.default_rng(0).uniform(1, 2, 100_000)
    y = dropout(x, 0.5, "train", 7)
    assert abs((y != 0).mean() - 0.5) <= 0.01
    assert abs(y.mean() - x.mean()) <= 0.02 * x.mean()


def test_dropout_rejects_bad_rate():
    with pytest.raises(ValueError):
        dropout(np.ones(3), 1.0)


def test_reparameterize_vanishing_variance():
    mu = np.array([0.3, -1.2])
    sample, _ = reparameterize(mu, np.full(2, -50.0), seed=0)
    np.testing.assert_allclose(sample, mu, atol=1e-9)


def test_reparameterize_records_eps():
    mu = np.array([0.3, -1.2])
    lv = np.array([0.4, -0.7])
    sample, eps = reparameterize(mu, lv, seed=3)
    np.testing.assert_array_equal(sample - mu, np.exp(lv / 2) * eps)


def test_reparameterize_moments():
    s, _ = reparameterize(np.zeros(100_000), np.zeros(100_000), seed=0)
    assert abs(s.mean()) <= 0.02
    assert abs(s.var() - 1) <= 0.02


# -- losses -----------------------------------------------------------------

def test_kl_closed_forms():
    assert kl_gaussian(np.zeros((1, 4)), np.zeros((1, 4)))[0] == 0.0
    assert kl_gaussian(np.ones((1, 1)), np.zeros((1, 1)))[0] == 0.5


def _kl_quadrature(m, lv):
    s = np.exp(0.5 * lv)
    q = stats.norm(m, s)

    def integrand(z):
        return q.pdf(z) * (q.logpdf(z) - stats.norm.logpdf(z))

    return integrate.quad(integrand, m - 30 * s, m + 30 * s, epsabs=1e-12, epsrel=1e-12, limit=200)[0]


def test_kl_matches_quadrature():
    rng = np.random.default_rng(0)
    mu = rng.normal(size=(3, 4))
    lv = rng.uniform(-1, 1, size=(3, 4))
    oracle = sum(_kl_quadrature(m, l) for m, l in zip(mu.ravel(), lv.ravel())) / 3
    assert abs(kl_gaussian(mu, lv)[0] - oracle) <= 1e-6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-9, 9), min_size=2, max_size=2))
def test_kl_nonnegative(mu, lv):
    assert kl_gaussian(np.array([mu]), np.array([lv]))[0] >= -1e-9


def test_vae_loss_values():
    x = np.array([[1.0, 2.0]])
    z = np.zeros((1, 2))
    assert vae_loss(x, x, z, z, 0.005)[0] == 0.0
    xh = np.array([[0.5, 2.5]])
    mu = np.array([[1.0, 0.0]])
    assert vae_loss(x, xh, mu, z, 0.0)[0] == mse(x, xh)[0]
    # mse = (0.25 + 0.25) / 2 = 0.25 ; kl = 0.5 ; beta 0.1
    assert abs(vae_loss(x, xh, mu, z, 0.1)[0] - 0.30) <= 1e-7


def test_projection_loss_values():
    z = np.random.default_rng(0).normal(size=(4, 8))
    assert projection_loss(z, z)[0] == 0.0
    assert projection_loss(z + 1, z)[0] == pytest.approx(1.0, abs=1e-12)
    t = np.random.default_rng(1).normal(size=(4, 8))
    oracle = sum((a - b) ** 2 for a, b in zip(z.ravel(), t.ravel())) / z.size
    assert abs(projection_loss(z, t)[0] - oracle) <= 1e-9
    with pytest.raises(ShapeMismatchError):
        projection_loss(z, t[:, :4])


# -- Adam -------------------------------------------------------------------

def _scalar_store(value):
    s = ParamStore(np.float64)
    s.add("w", np.array([value]))
    return s


def test_adam_zero_gradient_keeps_params():
    s = _scalar_store(1.5)
    s.zero_grad()
    adam_step(s, 0.1)
    assert s["w"][0] == 1.5


def test_adam_first_step():
    s = _scalar_store(0.0)
    s.zero_grad()
    s.accumulate("w", np.array([1.0]))
    adam_step(s, 0.01)
    assert s["w"][0] == pytest.approx(-0.01, rel=1e-6)


def test_adam_matches_reference_trace():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    s = _scalar_store(2.0)
    w, m, v = 2.0, 0.0, 0.0
    for t in range(1, 4):
        g = 2.0 * w  # d/dw of w^2
        s.zero_grad()
        s.accumulate("w", np.array([2.0 * s["w"][0]]))
        adam_step(s, lr, b1, b2, eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert abs(s["w"][0] - w) <= 1e-12
        assert abs(s.m["w"][0] - m) <= 1e-12
        assert abs(s.v["w"][0] - v) <= 1e-12


def test_adam_lr_zero_is_identity():
    s = _scalar_store(0.7)
    s.zero_grad()
    s.accumulate("w", np.array([3.0]))
    adam_step(s, 0.0)
    assert s["w"][0] == 0.7


def test_adam_requires_gradients():
    with pytest.raises(UninitializedGradientError):
        adam_step(_scalar_store(1.0), 0.1)


# -- training loop -----------------------------------------------------------

def test_learning_rate_decay():
    cfg = TrainConfig(learning_rate=0.001, lr_decay_per_epoch=0.99)
    assert learning_rate_at(cfg, 1) == 0.001
    assert learning_rate_at(cfg, 3) == pytest.approx(0.0009801, abs=1e-15)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_decay_per_epoch=1.5)


class _LinearModel:
    def __init__(self, n_in, seed=0):
        self.params = ParamStore(np.float64)
        self.layer = Dense("lin", n_in, 1)
        self.layer.init(self.params, np.random.default_rng(seed))

    def batch_loss(self, batch, ctx):
        x, y = batch
        pred, cache = self.layer.forward(self.params, x, ctx)
        loss, d = mse(y, pred)
        self.layer.backward(self.params, cache, d)
        return loss

    def eval_loss(self, data):
        x, y = data
        return mse(y, self.layer.forward(self.params, x)[0])[0]


class _ScriptedModel(_LinearModel):
    def __init__(self, val_losses):
        super().__init__(1)
        self.val = list(val_losses)

    def eval_loss(self, data):
        return self.val.pop(0)


def _regression_data(seed=0, n=256):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = X @ np.array([[1.5], [-2.0], [0.5]]) + 0.3 + 0.05 * rng.normal(size=(n, 1))
    return X, y


def test_train_loop_patience_zero_stops_after_first_regression():
    X, y = _regression_data()
    model = _ScriptedModel([1.0, 0.5, 0.7, 0.1, 0.05])
    state = train_loop(model, (X[:, :1], y), TrainConfig(max_epochs=5, early_stop_patience=0), (X[:4, :1], y[:4]))
    assert state.epoch == 3
    assert state.stopped_early
    assert state.best_epoch == 2


def test_train_loop_converges_to_least_squares():
    X, y = _regression_data()
    model = _LinearModel(3)
    cfg = TrainConfig(learning_rate=0.05, batch_size=32, max_epochs=200, early_stop_patience=200)
    train_loop(model, (X, y), cfg, (X, y))
    A = np.column_stack([X, np.ones(len(X))])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = np.append(model.params["lin.W"].ravel(), model.params["lin.b"])
    assert np.abs(fitted - coef.ravel()).max() <= 1e-3


def test_train_loop_is_deterministic():
    X, y = _regression_data()
    cfg = TrainConfig(learning_rate=0.01, max_epochs=5, seed=3)
    a, b = _LinearModel(3), _LinearModel(3)
    train_loop(a, (X, y), cfg, (X, y))
    train_loop(b, (X, y), cfg, (X, y))
    assert a.params.digest() == b.params.digest()


def test_train_loop_resume_matches_uninterrupted_run():
    X, y = _regression_data()
    cfg = TrainConfig(learning_rate=0.01, max_epochs=6, early_stop_patience=50, seed=1)
    full = _LinearModel(3)
    full_state = train_loop(full, (X, y), cfg, (X[:50], y[:50]))

    part = _LinearModel(3)
    from dataclasses import replace

    state = train_loop(part, (X, y), replace(cfg, max_epochs=3), (X[:50], y[:50]))
    resumed = _LinearModel(3, seed=99)
    state = restore_state(state_tensors(state, part.params), resumed.params, state.history)
    state = train_loop(resumed, (X, y), cfg, (X[:50], y[:50]), state=state)
    assert state.epoch == 6
    np.testing.assert_allclose(resumed.params["lin.W"], full.params["lin.W"], rtol=0, atol=1e-6)
    assert [h["epoch"] for h in state.history] == [h["epoch"] for h in full_state.history]


def test_train_loop_errors():
    X, y = _regression_data()
    with pytest.raises(EmptyDatasetError):
        train_loop(_LinearModel(3), (X[:0], y[:0]), TrainConfig(), (X, y))
    with pytest.raises(DivergedLossError), np.errstate(all="ignore"):
        bad = np.full_like(y, np.inf)
        train_loop(_LinearModel(3), (X, bad), TrainConfig(max_epochs=1), (X, y))


def test_history_csv_round_trip(tmp_path):
    hist = [{"epoch": 1, "train_loss": 0.5, "val_loss": 0.25, "lr": 0.001}]
    write_history(tmp_path / "h.csv", hist)
    assert read_history(tmp_path / "h.csv") == hist


# -- checkpoints ---------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"a.W": rng.normal(size=(3, 4)).astype(np.float32), "b": np.float32(2.0) * np.ones(5, np.float32),
               "k": rng.normal(size=(2, 3, 4)).astype(np.float32)}
    write_checkpoint(tmp_path / "c.acrw", tensors)
    back = read_checkpoint(tmp_path / "c.acrw")
    assert list(back) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])


def test_checkpoint_detects_corruption(tmp_path):
    write_checkpoint(tmp_path / "c.acrw", {"w": np.ones(4, np.float32)})
    data = bytearray((tmp_path / "c.acrw").read_bytes())
    data[-6] ^= 0xFF
    (tmp_path / "c.acrw").write_bytes(bytes(data))
    with pytest.raises(CorruptFileError):
        read_checkpoint(tmp_path / "c.acrw")


def test_state_round_trip_keeps_counters():
    store = ParamStore(np.float32)
    store.add("w", np.ones(3))
    store.zero_grad()
    store.accumulate("w", np.ones(3))
    adam_step(store, 0.1)
    st_ = TrainState(epoch=4, best_val=0.5, best_epoch=3, bad_epochs=1,
                     best_params=store.state(), last_params=store.state())
    other = ParamStore(np.float32)
    other.add("w", np.zeros(3))
    back = restore_state(state_tensors(st_, store), other, [])
    assert (back.epoch, back.best_epoch, back.bad_epochs) == (4, 3, 1)
    assert other.step_count == 1
    np.testing.assert_array_equal(other.m["w"], store.m["w"])


def test_context_defaults_to_eval():
    assert not Context().training
