"""Central finite-difference gradient checking in float64."""

import numpy as np

H = 1e-4


def numeric_grad(f, x, h=H):
    """Gradient of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric):
    """Largest absolute deviation relative to the tensor's gradient scale."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
    return float(np.abs(a - n).max() / scale)


# -- per-component checks; each returns the worst relative error -------------

def _store():
    from tactile_transfer.nn import ParamStore

    return ParamStore(np.float64)


def check_dense(seed, activation="tanh"):
    from tactile_transfer.nn import Dense

    rng = np.random.default_rng(seed)
    store = _store()
    layer = Dense("d", 5, 4, activation)
    layer.init(store, rng)
    store["d.b"][:] = rng.normal(size=4)
    x = rng.normal(size=(3, 5))
    R = rng.normal(size=(3, 4))

    def f():
        return float((layer.forward(store, x)[0] * R).sum())

    y, cache = layer.forward(store, x)
    store.zero_grad()
    dx = layer.backward(store, cache, R)
    errs = [rel_error(dx, numeric_grad(f, x))]
    errs.append(rel_error(store.grads["d.W"], numeric_grad(f, store["d.W"])))
    errs.append(rel_error(store.grads["d.b"], numeric_grad(f, store["d.b"])))
    return max(errs)


def small_mesh(rng, n_side=3):
    from tactile_transfer.mesh import MeshTopology, _grid_triangles

    _, tris = _grid_triangles(n_side, 2)
    V = 2 * n_side
    verts = np.column_stack([np.arange(V) % n_side, np.arange(V) // n_side, np.zeros(V)])
    return MeshTopology(verts + 0.1 * rng.normal(size=(V, 3)), tris)


def check_graphconv(seed, K, activation="elu"):
    from tactile_transfer.mesh import ChebBasis
    from tactile_transfer.nn import GraphConv

    rng = np.random.default_rng(seed)
    topo = small_mesh(rng)
    store = _store()
    layer = GraphConv("g", ChebBasis(topo.laplacian, K).scaled, K, 2, 3, activation)
    layer.init(store, rng)
    store["g.b"][:] = rng.normal(size=3)
    x = rng.normal(size=(topo.n_vertices, 2, 2))
    R = rng.normal(size=(topo.n_vertices, 2, 3))

    def f():
        return float((layer.forward(store, x)[0] * R).sum())

    _, cache = layer.forward(store, x)
    store.zero_grad()
    dx = layer.backward(store, cache, R)
    return max(
        rel_error(dx, numeric_grad(f, x)),
        rel_error(store.grads["g.W"], numeric_grad(f, store["g.W"])),
        rel_error(store.grads["g.b"], numeric_grad(f, store["g.b"])),
    )


def check_reparameterize(seed):
    from tactile_transfer.nn.layers import reparameterize, reparameterize_backward

    rng = np.random.default_rng(seed)
    mu = rng.normal(size=(3, 4))
    lv = rng.normal(size=(3, 4))
    eps = rng.normal(size=(3, 4))
    R = rng.normal(size=(3, 4))

    def f():
        return float((reparameterize(mu, lv, eps=eps)[0] * R).sum())

    dmu, dlv = reparameterize_backward(lv, eps, R)
    return max(rel_error(dmu, numeric_grad(f, mu)), rel_error(dlv, numeric_grad(f, lv)))


def check_kl(seed):
    from tactile_transfer.nn import kl_gaussian

    rng = np.random.default_rng(seed)
    mu = rng.normal(size=(4, 3))
    lv = rng.normal(size=(4, 3))
    _, dmu, dlv = kl_gaussian(mu, lv)
    f = lambda: kl_gaussian(mu, lv)[0]  # noqa: E731
    return max(rel_error(dmu, numeric_grad(f, mu)), rel_error(dlv, numeric_grad(f, lv)))


def check_vae_loss(seed):
    from tactile_transfer.nn import vae_loss

    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 6))
    xh = rng.normal(size=(4, 6))
    mu = rng.normal(size=(4, 3))
    lv = rng.normal(size=(4, 3))
    beta = 0.005
    _, dxh, dmu, dlv = vae_loss(x, xh, mu, lv, beta)
    f = lambda: vae_loss(x, xh, mu, lv, beta)[0]  # noqa: E731
    return max(
        rel_error(dxh, numeric_grad(f, xh)),
        rel_error(dmu, numeric_grad(f, mu)),
        rel_error(dlv, numeric_grad(f, lv)),
    )


def check_projection_loss(seed):
    from tactile_transfer.nn import projection_loss

    rng = np.random.default_rng(seed)
    zp = rng.normal(size=(5, 8))
    zt = rng.normal(size=(5, 8))
    _, d = projection_loss(zp, zt)
    return rel_error(d, numeric_grad(lambda: projection_loss(zp, zt)[0], zp))


def check_dropout_eval(seed):
    from tactile_transfer.nn import Context, Dropout

    rng = np.random.default_rng(seed)
    layer = Dropout(0.4)
    x = rng.normal(size=(3, 5))
    R = rng.normal(size=(3, 5))
    ctx = Context(False)
    y, cache = layer.forward(None, x, ctx)
    dx = layer.backward(None, cache, R)
    return rel_error(dx, numeric_grad(lambda: float((layer.forward(None, x, ctx)[0] * R).sum()), x))


GRADIENT_CASES = {
    "dense_relu": lambda s: check_dense(s, "relu"),
    "dense_elu": lambda s: check_dense(s, "elu"),
    "dense_tanh": lambda s: check_dense(s, "tanh"),
    "dense_linear": lambda s: check_dense(s, "none"),
    "graphconv_K1": lambda s: check_graphconv(s, 1),
    "graphconv_K3": lambda s: check_graphconv(s, 3),
    "graphconv_K6": lambda s: check_graphconv(s, 6),
    "reparameterize": check_reparameterize,
    "kl_gaussian": check_kl,
    "vae_loss": check_vae_loss,
    "projection_loss": check_projection_loss,
    "dropout_eval": check_dropout_eval,
}
