"""Numpy forward/backward passes for the encoder -> GAT -> Q-network stack, plus Adam.

Weights are stored ``(in, out)`` so a layer computes ``x @ W + b`` row-wise.
Everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

N_ACTIONS = 5


def relu(x):
    return np.maximum(x, 0.0)


def leaky_relu(x, slope):
    return np.where(x > 0, x, slope * x)


def dense_forward(W, b, x, activation="none"):
    if x.shape[1] != W.shape[0]:
        raise ValueError(f"dense input has {x.shape[1]} columns, layer expects {W.shape[0]}")
    z = x @ W + b
    if activation == "relu":
        return relu(z)
    if activation == "none":
        return z
    raise ValueError(f"unknown activation {activation!r}")


def masked_softmax(logits, mask):
    """Row softmax restricted to ``mask``; masked-out entries are exactly 0."""
    shifted = np.where(mask, logits, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def gat_forward(W, T, b, H, A, slope=0.2, return_cache=False):
    """Single-head graph attention: ``H' = alpha (H W) + b``.

    Attention logits are ``LeakyReLU(T . [(HW)_i || (HW)_j])`` and
    ``alpha`` is their softmax over the neighbours ``{j : A[i, j] = 1}``.
    Returns ``(H', alpha)``.
    """
    if H.shape[1] != W.shape[0]:
        raise ValueError(f"GAT input has {H.shape[1]} columns, expected {W.shape[0]}")
    if A.shape != (H.shape[0], H.shape[0]):
        raise ValueError(f"adjacency shape {A.shape} does not match {H.shape[0]} nodes")
    d_out = W.shape[1]
    if T.shape != (2 * d_out,):
        raise ValueError(f"attention vector must have length {2 * d_out}")
    Z = H @ W
    raw = (Z @ T[:d_out])[:, None] + (Z @ T[d_out:])[None, :]
    mask = A > 0
    alpha = masked_softmax(leaky_relu(raw, slope), mask)
    out = alpha @ Z + b
    if return_cache:
        return out, alpha, (Z, raw, mask)
    return out, alpha


def gat_backward(W, T, H, alpha, cache, grad_out, slope=0.2):
    """Gradients of the GAT layer; returns ``(dH, dW, dT, db)``."""
    Z, raw, mask = cache
    d_out = W.shape[1]
    db = grad_out.sum(axis=0)
    d_alpha = grad_out @ Z.T
    dZ = alpha.T @ grad_out
    # softmax backward, row by row
    d_logit = alpha * (d_alpha - np.sum(alpha * d_alpha, axis=1, keepdims=True))
    d_logit = np.where(mask, d_logit, 0.0)
    d_raw = d_logit * np.where(raw > 0, 1.0, slope)
    d_src = d_raw.sum(axis=1)
    d_dst = d_raw.sum(axis=0)
    dT = np.concatenate([Z.T @ d_src, Z.T @ d_dst])
    dZ += np.outer(d_src, T[:d_out]) + np.outer(d_dst, T[d_out:])
    dW = H.T @ dZ
    dH = dZ @ W.T
    return dH, dW, dT, db


@dataclass(frozen=True)
class Architecture:
    n_features: int = 2
    encoder: tuple = (32, 32)
    gat_dim: int = 32
    qnet: tuple = (32, 32, 64, 64)
    n_actions: int = N_ACTIONS
    leaky_slope: float = 0.2

    def dense_layers(self):
        """(name, fan_in, fan_out, activation) for every dense layer, in order."""
        layers = []
        width = self.n_features
        for i, h in enumerate(self.encoder):
            layers.append((f"enc{i}", width, h, "relu"))
            width = h
        gat_in = width
        width = self.gat_dim
        for i, h in enumerate(self.qnet):
            layers.append((f"q{i}", width, h, "relu"))
            width = h
        layers.append(("head", width, self.n_actions, "none"))
        return layers, gat_in

    def to_dict(self):
        return {
            "n_features": self.n_features, "encoder": list(self.encoder),
            "gat_dim": self.gat_dim, "qnet": list(self.qnet),
            "n_actions": self.n_actions, "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["n_features"], tuple(d["encoder"]), d["gat_dim"], tuple(d["qnet"]),
                   d["n_actions"], d["leaky_slope"])


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class QModel:
    """Parameters of the encoder -> GAT -> Q-network -> head stack."""

    def __init__(self, arch: Architecture | None = None, params=None, rng=None):
        self.arch = arch or Architecture()
        if params is None:
            rng = np.random.default_rng(rng)
            params = self._init_params(rng)
        self.params = params

    def _init_params(self, rng):
        dense, gat_in = self.arch.dense_layers()
        n_enc = len(self.arch.encoder)
        p = {}
        for k, (name, fin, fout, _) in enumerate(dense):
            if k == n_enc:
                d = self.arch.gat_dim
                p["gat.W"] = _glorot(rng, gat_in, d, (gat_in, d))
                p["gat.T"] = _glorot(rng, 2 * d, 1, (2 * d,))
                p["gat.b"] = np.zeros(d)
            p[f"{name}.W"] = _glorot(rng, fin, fout, (fin, fout))
            p[f"{name}.b"] = np.zeros(fout)
        return p

    def copy(self):
        return QModel(self.arch, {k: v.copy() for k, v in self.params.items()})

    def load_from(self, other: "QModel"):
        for k, v in other.params.items():
            self.params[k][...] = v

    def zeros_like_params(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def __call__(self, X, A):
        return model_forward(self, X, A)


def _forward(m: QModel, X, A):
    dense, _ = m.arch.dense_layers()
    p = m.params
    n_enc = len(m.arch.encoder)
    acts = []  # (layer name, input, pre-activation output, activation)
    h = np.asarray(X, dtype=float)
    gat_cache = None
    for k, (name, _, _, act) in enumerate(dense):
        if k == n_enc:
            h_in = h
            h, alpha, c = gat_forward(p["gat.W"], p["gat.T"], p["gat.b"], h, np.asarray(A),
                                      m.arch.leaky_slope, return_cache=True)
            gat_cache = (h_in, alpha, c)
        z = h @ p[f"{name}.W"] + p[f"{name}.b"]
        acts.append((name, h, z, act))
        h = relu(z) if act == "relu" else z
    return h, acts, gat_cache


def model_forward(m: QModel, X, A):
    """Q values, one row of ``n_actions`` per fog node."""
    return _forward(m, X, A)[0]


def model_backward(m: QModel, X, A, upstream):
    """Gradients of ``sum(upstream * Q)`` with respect to every parameter."""
    q, acts, gat_cache = _forward(m, X, A)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != q.shape:
        raise ValueError(f"upstream gradient shape {upstream.shape} != output shape {q.shape}")
    p = m.params
    n_enc = len(m.arch.encoder)
    grads = {}
    g = upstream
    for k in range(len(acts) - 1, -1, -1):
        name, x_in, z, act = acts[k]
        if act == "relu":
            g = g * (z > 0)
        grads[f"{name}.W"] = x_in.T @ g
        grads[f"{name}.b"] = g.sum(axis=0)
        g = g @ p[f"{name}.W"].T
        if k == n_enc:
            h_in, alpha, c = gat_cache
            g, dW, dT, db = gat_backward(p["gat.W"], p["gat.T"], h_in, alpha, c, g,
                                         m.arch.leaky_slope)
            grads["gat.W"], grads["gat.T"], grads["gat.b"] = dW, dT, db
    return {k: grads[k] for k in p}


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be > 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


def adam_step(params, grads, state: Adam):
    return state.step(params, grads)


def save_checkpoint(path, model: QModel, optimizer: Adam | None = None, meta=None):
    """Write every tensor (name, shape, values) plus optimizer state to an ``.npz`` file."""
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    info = {"architecture": model.arch.to_dict(), "meta": meta or {}}
    if optimizer is not None:
        info["adam"] = {"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                        "eps": optimizer.eps, "t": optimizer.t}
        arrays.update({f"adam_m/{k}": v for k, v in optimizer.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in optimizer.v.items()})
    arrays["info"] = np.array(json.dumps(info, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, arch: Architecture | None = None):
    """Return ``(model, optimizer or None, meta)``.

    Raises ``ValueError`` when ``arch`` is given and differs from the stored one.
    """
    with np.load(path, allow_pickle=False) as data:
        info = json.loads(str(data["info"]))
        stored = Architecture.from_dict(info["architecture"])
        if arch is not None and arch != stored:
            raise ValueError(f"checkpoint architecture {stored} does not match {arch}")
        params = {k.split("/", 1)[1]: data[k].copy() for k in data.files if k.startswith("param/")}
        model = QModel(stored, params)
        expected = set(QModel(stored, rng=0).params)
        if set(params) != expected:
            raise ValueError("checkpoint parameter names do not match the architecture")
        opt = None
        if "adam" in info:
            a = info["adam"]
            opt = Adam(a["lr"], a["beta1"], a["beta2"], a["eps"])
            opt.t = a["t"]
            opt.m = {k.split("/", 1)[1]: data[k].copy() for k in data.files
                     if k.startswith("adam_m/")}
            opt.v = {k.split("/", 1)[1]: data[k].copy() for k in data.files
                     if k.startswith("adam_v/")}
    return model, opt, info["meta"]
