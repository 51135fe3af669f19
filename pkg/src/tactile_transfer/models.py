"""The five networks: SVB / MVB / MVD variational autoencoders and the two
latent projection MLPs (S2MPN, M2MPN), exposed as scikit-learn estimators."""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_mesh_batch
from .exceptions import (
    ConfigError,
    HierarchyDepthMismatchError,
    ShapeMismatchError,
    SpecMismatchError,
)
from .mesh import ChebBasis
from .nn import checkpoint as ckpt
from .nn.layers import (
    Activation,
    Context,
    Dense,
    Dropout,
    FromFlat,
    GraphConv,
    Sequential,
    ToFlat,
    VertexResample,
    reparameterize,
    reparameterize_backward,
)
from .nn.losses import kl_gaussian, mse, projection_loss, vae_loss
from .nn.params import ParamStore
from .nn.training import TrainConfig, TrainState, train_loop
from .pooling import build_pooling_hierarchy

MODEL_KINDS = ("SVB", "MVB", "MVD", "S2MPN", "M2MPN")
EVAL_CHUNK = 256


# -- model specs -------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int = 0
    hidden_sizes: tuple = ()
    decoder_sizes: tuple = ()
    latent_dim: int = 0
    output_dim: int = 0
    activation: str = "relu"
    dropout: tuple = ()
    dropout_first: bool = False
    kernel_size: int = 6
    pool_factor: int = 2
    pool_levels: int = 4
    dense_size: int = 512
    beta: float = 0.005
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    max_epochs: int = 300
    batch_size: int = 32
    early_stop_patience: int = 10
    seed: int = 0

    def train_config(self, **overrides):
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            lr_decay_per_epoch=self.lr_decay,
            beta_kl=self.beta,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            seed=self.seed,
        )
        return replace(cfg, **overrides)


_COMMON_KEYS = {"kind", "learning_rate", "lr_decay", "max_epochs", "batch_size",
                "early_stop_patience", "seed"}
SPEC_KEYS = {
    "SVB": _COMMON_KEYS | {"input_dim", "hidden_sizes", "decoder_sizes", "latent_dim",
                           "activation", "beta"},
    "MVB": _COMMON_KEYS | {"hidden_sizes", "decoder_sizes", "latent_dim", "activation",
                           "kernel_size", "pool_factor", "pool_levels", "dense_size", "beta"},
    "S2MPN": _COMMON_KEYS | {"input_dim", "hidden_sizes", "output_dim", "activation",
                             "dropout", "dropout_first"},
}
SPEC_KEYS["MVD"] = SPEC_KEYS["MVB"]
SPEC_KEYS["M2MPN"] = SPEC_KEYS["S2MPN"]


def default_spec(kind):
    """Default network hyperparameters for each model kind."""
    if kind == "SVB":
        return ModelSpec("SVB", input_dim=19, hidden_sizes=(256, 128, 64),
                         decoder_sizes=(64, 128, 256), latent_dim=8, output_dim=19,
                         activation="relu", beta=0.005, learning_rate=1e-4, lr_decay=1.0)
    if kind in ("MVB", "MVD"):
        return ModelSpec(kind, input_dim=3, hidden_sizes=(16, 16, 16, 32),
                         decoder_sizes=(32, 16, 16, 16), latent_dim=128, output_dim=3,
                         activation="elu", kernel_size=6, pool_factor=2, pool_levels=4,
                         dense_size=512, beta=0.005, learning_rate=1e-3, lr_decay=0.99)
    if kind == "S2MPN":
        return ModelSpec("S2MPN", input_dim=8, hidden_sizes=(512, 128, 256, 256),
                         output_dim=128, activation="elu", dropout=(0.4, 0.3, 0.2, 0.5),
                         dropout_first=False, beta=0.0, learning_rate=5e-4, lr_decay=1.0)
    if kind == "M2MPN":
        return ModelSpec("M2MPN", input_dim=128, hidden_sizes=(512, 1024, 1024, 256),
                         output_dim=128, activation="elu", dropout=(0.2, 0.4, 0.0, 0.0),
                         dropout_first=True, beta=0.0, learning_rate=1e-3, lr_decay=1.0)
    raise SpecMismatchError(f"unknown model kind {kind!r}")


def _format_value(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def spec_to_text(spec):
    allowed = SPEC_KEYS[spec.kind]
    d = asdict(spec)
    return "".join(f"{k}={_format_value(d[k])}\n" for k in d if k in allowed)


def parse_spec(text):
    """Parse ``key=value`` lines into a :class:`ModelSpec`; unknown keys are rejected."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        raw[k] = v
    kind = raw.get("kind")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model spec needs kind in {MODEL_KINDS}, got {kind!r}")
    unknown = set(raw) - SPEC_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown keys for {kind}: {sorted(unknown)}")
    base = default_spec(kind)
    types = {f.name: type(getattr(base, f.name)) for f in fields(ModelSpec)}
    values = {}
    for k, v in raw.items():
        if k == "kind":
            continue
        t = types[k]
        try:
            if t is tuple:
                num = float if k == "dropout" else int
                values[k] = tuple(num(x) for x in v.split(",") if x.strip())
            elif t is bool:
                if v.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(v)
                values[k] = v.lower() in ("true", "1")
            else:
                values[k] = t(v)
        except ValueError as exc:
            raise ConfigError(f"bad value for {k}: {v!r}") from exc
    return replace(base, **values)


def read_spec(path):
    return parse_spec(Path(path).read_text())


def write_spec(path, spec):
    Path(path).write_text(spec_to_text(spec))


# -- networks ----------------------------------------------------------------

class _VAENet:
    """Encoder -> (mu, log_var) heads -> reparameterized sample -> decoder."""

    def __init__(self, encoder, mu_head, lv_head, decoder, beta, vertex_major=False):
        self.encoder = encoder
        self.mu_head = mu_head
        self.lv_head = lv_head
        self.decoder = decoder
        self.beta = beta
        self.vertex_major = vertex_major
        self.params = None

    def init(self, rng, dtype):
        self.params = ParamStore(dtype)
        for part in (self.encoder, self.mu_head, self.lv_head, self.decoder):
            part.init(self.params, rng)

    def _in(self, x):
        x = np.asarray(x, dtype=self.params.dtype)
        return np.ascontiguousarray(x.transpose(1, 0, 2)) if self.vertex_major else x

    def _out(self, y):
        return np.ascontiguousarray(y.transpose(1, 0, 2)) if self.vertex_major else y

    def encode(self, x, ctx=None):
        h, enc_c = self.encoder.forward(self.params, self._in(x), ctx)
        mu, mu_c = self.mu_head.forward(self.params, h, ctx)
        lv, lv_c = self.lv_head.forward(self.params, h, ctx)
        return mu, lv, (enc_c, mu_c, lv_c)

    def decode(self, z, ctx=None):
        y, dec_c = self.decoder.forward(self.params, np.asarray(z, dtype=self.params.dtype), ctx)
        return self._out(y), dec_c

    def forward(self, x, ctx, sample=True):
        mu, lv, enc = self.encode(x, ctx)
        if sample:
            z, eps = reparameterize(mu, lv, rng=ctx.rng)
        else:
            z, eps = mu, None
        x_hat, dec_c = self.decode(z, ctx)
        return x_hat, mu, lv, eps, (enc, dec_c)

    def batch_loss(self, batch, ctx):
        x = np.asarray(batch[0], dtype=self.params.dtype)
        x_hat, mu, lv, eps, (enc, dec_c) = self.forward(x, ctx, sample=True)
        loss, d_xhat, d_mu, d_lv = vae_loss(x, x_hat, mu, lv, self.beta)
        dz = self.decoder.backward(self.params, dec_c, self._in(d_xhat.astype(x.dtype)))
        dmu_s, dlv_s = reparameterize_backward(lv, eps, dz)
        enc_c, mu_c, lv_c = enc
        dh = self.mu_head.backward(self.params, mu_c, (d_mu + dmu_s).astype(x.dtype))
        dh = dh + self.lv_head.backward(self.params, lv_c, (d_lv + dlv_s).astype(x.dtype))
        self.encoder.backward(self.params, enc_c, dh)
        return loss

    def eval_loss(self, data):
        """Validation objective: reconstruction from the posterior mean plus beta * KL."""
        x_all = data[0]
        n = len(x_all)
        total = 0.0
        for s in range(0, n, EVAL_CHUNK):
            x = np.asarray(x_all[s:s + EVAL_CHUNK], dtype=self.params.dtype)
            x_hat, mu, lv, _, _ = self.forward(x, Context(False), sample=False)
            rec, _ = mse(x, x_hat)
            kl, _, _ = kl_gaussian(mu, lv)
            total += (rec + self.beta * kl) * len(x)
        return total / n


class _MLPNet:
    def __init__(self, body):
        self.body = body
        self.params = None

    def init(self, rng, dtype):
        self.params = ParamStore(dtype)
        self.body.init(self.params, rng)

    def predict(self, x, ctx=None):
        y, _ = self.body.forward(self.params, np.asarray(x, dtype=self.params.dtype), ctx)
        return y

    def batch_loss(self, batch, ctx):
        x, y = (np.asarray(b, dtype=self.params.dtype) for b in batch)
        pred, caches = self.body.forward(self.params, x, ctx)
        loss, d = projection_loss(pred, y)
        self.body.backward(self.params, caches, d.astype(x.dtype))
        return loss

    def eval_loss(self, data):
        x_all, y_all = data
        total = 0.0
        for s in range(0, len(x_all), EVAL_CHUNK):
            y = np.asarray(y_all[s:s + EVAL_CHUNK], dtype=self.params.dtype)
            loss, _ = projection_loss(self.predict(x_all[s:s + EVAL_CHUNK], Context(False)), y)
            total += loss * len(y)
        return total / len(x_all)


def _batched(fn, X, chunk=EVAL_CHUNK):
    outs = [fn(X[s:s + chunk]) for s in range(0, len(X), chunk)]
    return np.concatenate(outs, axis=0) if outs else np.empty((0,))


class _NetworkEstimator(BaseEstimator):
    """Shared fit/persistence plumbing; subclasses build ``self.net_``."""

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            lr_decay_per_epoch=self.lr_decay,
            beta_kl=getattr(self, "beta", 0.0),
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            seed=self.random_state,
        )

    def initialize(self):
        """Build the network and draw initial weights (idempotent)."""
        if not hasattr(self, "net_"):
            self.net_ = self._build()
            self.net_.init(np.random.default_rng(self.random_state), np.dtype(self.dtype))
        return self

    @property
    def params_(self):
        return self.net_.params

    def n_parameters(self):
        self.initialize()
        return self.net_.params.n_parameters()

    def _fit_data(self, train, val, resume=None, on_epoch=None):
        self.initialize()
        self.train_state_ = train_loop(self.net_, train, self._train_config(), val,
                                       state=resume, on_epoch=on_epoch)
        self.history_ = self.train_state_.history
        return self

    def save(self, path):
        ckpt.write_checkpoint(path, self.net_.params.values)

    def load_weights(self, path_or_tensors):
        self.initialize()
        tensors = path_or_tensors
        if not isinstance(tensors, dict):
            tensors = ckpt.read_checkpoint(path_or_tensors)
        self.net_.params.load_state(
            {k: v.astype(self.net_.params.dtype) for k, v in tensors.items()}
        )
        return self


class _VAEMixin:
    def transform(self, X):
        """Posterior mean of each input."""
        check_is_fitted(self, "net_")
        X = self._check_X(X)
        return _batched(lambda x: self.net_.encode(x)[0].astype(np.float64), X)

    def encode(self, X):
        """Return ``(mu, log_var)``."""
        check_is_fitted(self, "net_")
        X = self._check_X(X)
        mus, lvs = [], []
        for s in range(0, len(X), EVAL_CHUNK):
            mu, lv, _ = self.net_.encode(X[s:s + EVAL_CHUNK])
            mus.append(mu)
            lvs.append(lv)
        return np.concatenate(mus).astype(np.float64), np.concatenate(lvs).astype(np.float64)

    def inverse_transform(self, Z):
        """Decode latent vectors."""
        check_is_fitted(self, "net_")
        Z = check_array(Z, dtype=np.float64)
        if Z.shape[1] != self.latent_dim:
            raise ShapeMismatchError(f"expected latent dimension {self.latent_dim}, got {Z.shape[1]}")
        return _batched(lambda z: self.net_.decode(z)[0].astype(np.float64), Z)

    def reconstruct(self, X):
        return self.inverse_transform(self.transform(X))

    def fit(self, X, y=None, validation_data=None, resume=None, on_epoch=None):
        X = self._check_X(X)
        if validation_data is None:
            rng = np.random.default_rng(self.random_state)
            order = rng.permutation(len(X))
            n_val = max(1, int(round(0.1 * len(X))))
            X, Xv = X[np.sort(order[n_val:])], X[np.sort(order[:n_val])]
        else:
            Xv = self._check_X(validation_data)
        return self._fit_data((X,), (Xv,), resume, on_epoch)


class SignalVAE(_VAEMixin, TransformerMixin, _NetworkEstimator):
    """Fully connected beta-VAE over normalized electrode vectors."""

    def __init__(self, n_features=19, encoder_sizes=(256, 128, 64), latent_dim=8,
                 decoder_sizes=(64, 128, 256), activation="relu", beta=0.005,
                 learning_rate=1e-4, lr_decay=1.0, batch_size=32, max_epochs=300,
                 early_stop_patience=10, random_state=0, dtype="float32"):
        self.n_features = n_features
        self.encoder_sizes = encoder_sizes
        self.latent_dim = latent_dim
        self.decoder_sizes = decoder_sizes
        self.activation = activation
        self.beta = beta
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.random_state = random_state
        self.dtype = dtype

    def _build(self):
        enc, n = [], self.n_features
        for i, h in enumerate(self.encoder_sizes):
            enc.append(Dense(f"enc{i}", n, h, self.activation))
            n = h
        dec, m = [], self.latent_dim
        for i, h in enumerate(self.decoder_sizes):
            dec.append(Dense(f"dec{i}", m, h, self.activation))
            m = h
        dec.append(Dense("out", m, self.n_features, "none"))
        return _VAENet(Sequential(enc), Dense("mu", n, self.latent_dim),
                       Dense("log_var", n, self.latent_dim), Sequential(dec), self.beta)

    def _check_X(self, X):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise ShapeMismatchError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X


class MeshVAE(_VAEMixin, TransformerMixin, _NetworkEstimator):
    """Chebyshev graph-convolutional beta-VAE over normalized meshes ``(n, V, 3)``."""

    def __init__(self, topology=None, hierarchy=None, conv_channels=(16, 16, 16, 32),
                 decoder_channels=(32, 16, 16, 16), kernel_size=6, pool_factor=2,
                 dense_size=512, latent_dim=128, activation="elu", beta=0.005,
                 learning_rate=1e-3, lr_decay=0.99, batch_size=32, max_epochs=300,
                 early_stop_patience=10, random_state=0, dtype="float32"):
        self.topology = topology
        self.hierarchy = hierarchy
        self.conv_channels = conv_channels
        self.decoder_channels = decoder_channels
        self.kernel_size = kernel_size
        self.pool_factor = pool_factor
        self.dense_size = dense_size
        self.latent_dim = latent_dim
        self.activation = activation
        self.beta = beta
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.random_state = random_state
        self.dtype = dtype

    def _hierarchy(self):
        depth = len(self.conv_channels)
        if self.hierarchy is None:
            self.hierarchy = build_pooling_hierarchy(self.topology, depth, self.pool_factor)
        if len(self.hierarchy) != depth or len(self.decoder_channels) != depth:
            raise HierarchyDepthMismatchError(
                f"{len(self.conv_channels)} conv layers need a {depth}-level hierarchy, "
                f"got {len(self.hierarchy)} levels and {len(self.decoder_channels)} decoder layers"
            )
        if self.hierarchy.levels[0].fine.n_vertices != self.topology.n_vertices:
            raise HierarchyDepthMismatchError("hierarchy was built for a different topology")
        return self.hierarchy

    def _build(self):
        h = self._hierarchy()
        tops = h.topologies
        K, act = self.kernel_size, self.activation
        scaled = [ChebBasis(t.laplacian, K).scaled for t in tops]
        enc, f = [], 3
        for i, c in enumerate(self.conv_channels):
            enc.append(GraphConv(f"enc_conv{i}", scaled[i], K, f, c, act))
            enc.append(VertexResample(h.levels[i].down))
            f = c
        coarse_v = tops[-1].n_vertices
        enc += [ToFlat(), Dense("enc_dense", coarse_v * f, self.dense_size, act)]
        first = self.decoder_channels[0]
        dec = [Dense("dec_dense0", self.latent_dim, self.dense_size, act),
               Dense("dec_dense1", self.dense_size, coarse_v * first, act),
               FromFlat(coarse_v, first)]
        f = first
        for j, c in enumerate(self.decoder_channels):
            lvl = len(h) - 1 - j
            dec.append(VertexResample(h.levels[lvl].up))
            dec.append(GraphConv(f"dec_conv{j}", scaled[lvl], K, f, c, act))
            f = c
        dec.append(GraphConv("out_conv", scaled[0], K, f, 3, "none"))
        return _VAENet(Sequential(enc), Dense("mu", self.dense_size, self.latent_dim),
                       Dense("log_var", self.dense_size, self.latent_dim), Sequential(dec),
                       self.beta, vertex_major=True)

    def _check_X(self, X):
        return check_mesh_batch(X, self.topology.n_vertices)


class LatentProjector(RegressorMixin, _NetworkEstimator):
    """MLP mapping latent codes of one frozen autoencoder onto another's."""

    def __init__(self, n_inputs=8, n_outputs=128, hidden_sizes=(512, 128, 256, 256),
                 dropout=(0.4, 0.3, 0.2, 0.5), dropout_first=False, activation="elu",
                 learning_rate=5e-4, lr_decay=1.0, batch_size=32, max_epochs=300,
                 early_stop_patience=10, random_state=0, dtype="float32"):
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.hidden_sizes = hidden_sizes
        self.dropout = dropout
        self.dropout_first = dropout_first
        self.activation = activation
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.random_state = random_state
        self.dtype = dtype

    def _build(self):
        if len(self.dropout) != len(self.hidden_sizes):
            raise SpecMismatchError("one dropout rate per hidden layer is required")
        layers, n = [], self.n_inputs
        for i, (h, rate) in enumerate(zip(self.hidden_sizes, self.dropout)):
            layers.append(Dense(f"fc{i}", n, h, "none"))
            pair = [Activation(self.activation), Dropout(rate)]
            layers += pair[::-1] if self.dropout_first else pair
            n = h
        layers.append(Dense("out", n, self.n_outputs, "none"))
        return _MLPNet(Sequential(layers))

    def fit(self, X, y, validation_data=None, resume=None, on_epoch=None):
        X = check_array(X, dtype=np.float64)
        y = check_array(y, dtype=np.float64)
        if X.shape[1] != self.n_inputs or y.shape[1] != self.n_outputs:
            raise ShapeMismatchError(
                f"expected ({self.n_inputs} -> {self.n_outputs}), got ({X.shape[1]} -> {y.shape[1]})"
            )
        if validation_data is None:
            rng = np.random.default_rng(self.random_state)
            order = rng.permutation(len(X))
            n_val = max(1, int(round(0.1 * len(X))))
            tr, va = np.sort(order[n_val:]), np.sort(order[:n_val])
            X, y, Xv, yv = X[tr], y[tr], X[va], y[va]
        else:
            Xv, yv = (check_array(a, dtype=np.float64) for a in validation_data)
        return self._fit_data((X, y), (Xv, yv), resume, on_epoch)

    def predict(self, X, training=False, seed=0):
        """Map latent codes; ``training=True`` applies seeded dropout."""
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_inputs:
            raise ShapeMismatchError(f"expected {self.n_inputs} inputs, got {X.shape[1]}")
        ctx = Context(training, np.random.default_rng(seed))
        return _batched(lambda x: self.net_.predict(x, ctx).astype(np.float64), X)


# -- builders from specs -------------------------------------------------------

def _expect(spec, kinds):
    if spec.kind not in kinds:
        raise SpecMismatchError(f"expected a {'/'.join(kinds)} spec, got {spec.kind}")


def _common(spec):
    return dict(learning_rate=spec.learning_rate, lr_decay=spec.lr_decay,
                batch_size=spec.batch_size, max_epochs=spec.max_epochs,
                early_stop_patience=spec.early_stop_patience, random_state=spec.seed)


def build_svb(spec=None):
    spec = spec or default_spec("SVB")
    _expect(spec, ("SVB",))
    if spec.input_dim != 19:
        raise SpecMismatchError("the signal VAE takes 19 electrode values")
    return SignalVAE(n_features=spec.input_dim, encoder_sizes=spec.hidden_sizes,
                     latent_dim=spec.latent_dim, decoder_sizes=spec.decoder_sizes,
                     activation=spec.activation, beta=spec.beta, **_common(spec)).initialize()


def build_mesh_vae(spec, topology, hierarchy=None):
    _expect(spec, ("MVB", "MVD"))
    if hierarchy is None:
        hierarchy = build_pooling_hierarchy(topology, spec.pool_levels, spec.pool_factor)
    if len(hierarchy) != spec.pool_levels:
        raise HierarchyDepthMismatchError(
            f"spec asks for {spec.pool_levels} pooling levels, hierarchy has {len(hierarchy)}"
        )
    return MeshVAE(topology=topology, hierarchy=hierarchy, conv_channels=spec.hidden_sizes,
                   decoder_channels=spec.decoder_sizes, kernel_size=spec.kernel_size,
                   pool_factor=spec.pool_factor, dense_size=spec.dense_size,
                   latent_dim=spec.latent_dim, activation=spec.activation, beta=spec.beta,
                   **_common(spec)).initialize()


def _build_projector(spec, kind, n_in, n_out):
    _expect(spec, (kind,))
    if spec.input_dim != n_in or spec.output_dim != n_out:
        raise SpecMismatchError(f"{kind} maps {n_in} -> {n_out}")
    return LatentProjector(n_inputs=n_in, n_outputs=n_out, hidden_sizes=spec.hidden_sizes,
                           dropout=spec.dropout, dropout_first=spec.dropout_first,
                           activation=spec.activation, **_common(spec)).initialize()


def build_s2mpn(spec=None, latent_in=8, latent_out=128):
    return _build_projector(spec or default_spec("S2MPN"), "S2MPN", latent_in, latent_out)


def build_m2mpn(spec=None, latent_in=128, latent_out=128):
    return _build_projector(spec or default_spec("M2MPN"), "M2MPN", latent_in, latent_out)
