"""Small neural networks with hand-written reverse-mode gradients.

Four forecaster architectures over numpy, float64 end to end so the
finite-difference gradient checks are meaningful:

  mlp   stacked dense layers on a flattened feature vector
  cnn   1-D convolution blocks (channels-first, valid, stride 1, each
        followed by max pooling unless the pool size is 0 and then the
        activation), a dense hidden layer and a linear head
  rnn   stacked tanh recurrences over a per-step feature sequence
  lstm  stacked LSTM cells over the same sequence layout

The recurrent models consume n_steps_in past steps plus n_steps_out
future steps of features and emit one scalar per future step from a
shared dense head. Dropout uses the inverted convention and is only
active when masks are supplied (training); evaluation is deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

MODEL_FORMAT_VERSION = 1

ARCHS = ("mlp", "cnn", "rnn", "lstm")
ACTIVATIONS = ("relu", "selu", "gelu")

# Size grids swept during model selection.
DESIGN_GRIDS = {
    "mlp": {"n_layer": (1, 2, 4), "n_z": (10, 20, 50, 100)},
    "cnn": {"n_layer": (1, 2), "n_z": (10, 50, 100), "n_channel": (10, 50, 100),
            "n_filter": (6, 12), "n_pool": (0, 4)},
    "rnn": {"n_layer": (1, 2, 4), "n_z": (10, 20, 40, 60)},
    "lstm": {"n_layer": (1, 2, 4), "n_z": (10, 20, 40, 60)},
}

_SELU_LAMBDA = 1.0507009873554805
_SELU_ALPHA = 1.6732632423543772


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "selu":
        return _SELU_LAMBDA * np.where(x > 0, x, _SELU_ALPHA * (np.exp(np.minimum(x, 0.0)) - 1.0))
    if name == "gelu":
        return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (x > 0).astype(float)
    if name == "selu":
        return _SELU_LAMBDA * np.where(x > 0, 1.0, _SELU_ALPHA * np.exp(np.minimum(x, 0.0)))
    if name == "gelu":
        cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return cdf + x * pdf
    raise ValueError(f"unknown activation {name!r}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class NetSpec:
    """Architecture hyperparameters of a disturbance forecaster."""

    arch: str
    n_input: int            # per-step features (rnn/lstm) or flattened length
    n_output: int           # forecast steps emitted
    n_layer: int = 1
    n_z: int = 20
    activation: str = "relu"
    n_steps_in: int = 0     # recurrent models: past steps consumed
    n_channel: int = 10     # cnn only
    n_filter: int = 6       # cnn only
    n_pool: int = 0         # cnn only; 0 skips pooling
    dropout: float = 0.1

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if min(self.n_input, self.n_output, self.n_layer, self.n_z) < 1:
            raise ValueError("sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.arch in ("rnn", "lstm") and self.n_steps_in < 1:
            raise ValueError("recurrent specs need n_steps_in >= 1")
        if self.arch == "cnn":
            if self.conv_output_length() < 1:
                raise ValueError("conv stack consumes the whole input")

    @property
    def n_steps_total(self) -> int:
        return self.n_steps_in + self.n_output

    def conv_output_length(self) -> int:
        length = self.n_input
        for _ in range(self.n_layer):
            length = length - self.n_filter + 1
            if self.n_pool > 0:
                length = length // self.n_pool
            if length < 1:
                return 0
        return length

    def to_dict(self) -> dict:
        return {
            "arch": self.arch, "n_input": self.n_input, "n_output": self.n_output,
            "n_layer": self.n_layer, "n_z": self.n_z, "activation": self.activation,
            "n_steps_in": self.n_steps_in, "n_channel": self.n_channel,
            "n_filter": self.n_filter, "n_pool": self.n_pool, "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        return cls(**d)


def design_matrix_cells(arch: str, activations=ACTIVATIONS):
    """All size/activation combinations of the selection grid for one
    architecture (input/output dimensions are supplied separately)."""
    grid = DESIGN_GRIDS[arch]
    cells = []
    if arch == "cnn":
        for nl in grid["n_layer"]:
            for nz in grid["n_z"]:
                for nc in grid["n_channel"]:
                    for nf in grid["n_filter"]:
                        for pool in grid["n_pool"]:
                            for act in activations:
                                cells.append(dict(n_layer=nl, n_z=nz, n_channel=nc,
                                                  n_filter=nf, n_pool=pool, activation=act))
    else:
        for nl in grid["n_layer"]:
            for nz in grid["n_z"]:
                for act in activations:
                    cells.append(dict(n_layer=nl, n_z=nz, activation=act))
    return cells


def init_params(spec: NetSpec, seed: int = 0) -> dict[str, np.ndarray]:
    """Uniform fan-in initialization, deterministic under seed."""
    rng = np.random.default_rng(seed)

    def uni(fan_in, *shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape)

    p: dict[str, np.ndarray] = {}
    a = spec.arch
    if a == "mlp":
        for i in range(spec.n_layer):
            fan = spec.n_input if i == 0 else spec.n_z
            p[f"W{i}"] = uni(fan, fan, spec.n_z)
            p[f"b{i}"] = uni(fan, spec.n_z)
        p["W_out"] = uni(spec.n_z, spec.n_z, spec.n_output)
        p["b_out"] = uni(spec.n_z, spec.n_output)
    elif a == "cnn":
        for i in range(spec.n_layer):
            in_ch = 1 if i == 0 else spec.n_channel
            fan = in_ch * spec.n_filter
            p[f"K{i}"] = uni(fan, spec.n_channel, in_ch, spec.n_filter)
            p[f"kb{i}"] = uni(fan, spec.n_channel)
        flat = spec.n_channel * spec.conv_output_length()
        p["W_hid"] = uni(flat, flat, spec.n_z)
        p["b_hid"] = uni(flat, spec.n_z)
        p["W_out"] = uni(spec.n_z, spec.n_z, spec.n_output)
        p["b_out"] = uni(spec.n_z, spec.n_output)
    else:  # rnn / lstm
        gate = 4 * spec.n_z if a == "lstm" else spec.n_z
        for l in range(spec.n_layer):
            in_dim = spec.n_input if l == 0 else spec.n_z
            p[f"W_ih{l}"] = uni(spec.n_z, in_dim, gate)
            p[f"W_hh{l}"] = uni(spec.n_z, spec.n_z, gate)
            p[f"b_ih{l}"] = uni(spec.n_z, gate)
            p[f"b_hh{l}"] = uni(spec.n_z, gate)
        p["W_head"] = uni(spec.n_z, spec.n_z, spec.n_z)
        p["b_head"] = uni(spec.n_z, spec.n_z)
        p["W_out"] = uni(spec.n_z, spec.n_z, 1)
        p["b_out"] = uni(spec.n_z, 1)
    return p


def param_count(spec: NetSpec) -> int:
    return sum(v.size for v in init_params(spec, 0).values())


def make_dropout_masks(spec: NetSpec, batch: int, rng: np.random.Generator):
    """Inverted-dropout masks for one training step; None entries mean
    the layer has no dropout."""
    q = 1.0 - spec.dropout
    if spec.dropout == 0.0:
        return None

    def mask(*shape):
        return (rng.uniform(size=shape) < q).astype(float) / q

    if spec.arch == "mlp":
        return [mask(batch, spec.n_z) for _ in range(spec.n_layer)]
    if spec.arch == "cnn":
        return [mask(batch, spec.n_z)]
    return [mask(batch, spec.n_output, spec.n_z)]


def forward(spec: NetSpec, params: dict, psi: np.ndarray, masks=None) -> np.ndarray:
    """Network output for a batch; masks enable training-mode dropout."""
    out, _ = _forward_cached(spec, params, np.asarray(psi, dtype=float), masks)
    return out


def _forward_cached(spec, params, psi, masks):
    if spec.arch == "mlp":
        return _mlp_forward(spec, params, psi, masks)
    if spec.arch == "cnn":
        return _cnn_forward(spec, params, psi, masks)
    return _recurrent_forward(spec, params, psi, masks)


def loss_and_grads(spec: NetSpec, params: dict, psi: np.ndarray, target: np.ndarray,
                   masks=None):
    """Mean-squared-error loss and exact gradients for every parameter."""
    psi = np.asarray(psi, dtype=float)
    target = np.asarray(target, dtype=float)
    out, cache = _forward_cached(spec, params, psi, masks)
    resid = out - target
    loss = float(np.mean(resid ** 2))
    dout = 2.0 * resid / resid.size
    if spec.arch == "mlp":
        grads = _mlp_backward(spec, params, cache, dout)
    elif spec.arch == "cnn":
        grads = _cnn_backward(spec, params, cache, dout)
    else:
        grads = _recurrent_backward(spec, params, cache, dout)
    return loss, grads


# ---------------------------------------------------------------- MLP

def _mlp_forward(spec, params, psi, masks):
    z = psi
    pre, post = [], []
    for i in range(spec.n_layer):
        a = z @ params[f"W{i}"] + params[f"b{i}"]
        h = _act(spec.activation, a)
        if masks is not None:
            h = h * masks[i]
        pre.append(a)
        post.append(z)
        z = h
    out = z @ params["W_out"] + params["b_out"]
    return out, (pre, post, z, masks)


def _mlp_backward(spec, params, cache, dout):
    pre, post, z_last, masks = cache
    grads = {"W_out": z_last.T @ dout, "b_out": dout.sum(axis=0)}
    dz = dout @ params["W_out"].T
    for i in reversed(range(spec.n_layer)):
        if masks is not None:
            dz = dz * masks[i]
        da = dz * _act_grad(spec.activation, pre[i])
        grads[f"W{i}"] = post[i].T @ da
        grads[f"b{i}"] = da.sum(axis=0)
        dz = da @ params[f"W{i}"].T
    return grads


# ---------------------------------------------------------------- CNN

def _conv1d(x, K, b):
    # x (B, C_in, L), K (C_out, C_in, F) -> (B, C_out, L - F + 1)
    win = sliding_window_view(x, K.shape[2], axis=2)
    return np.einsum("bitk,oik->bot", win, K, optimize=True) + b[None, :, None]


def _cnn_forward(spec, params, psi, masks):
    B = psi.shape[0]
    x = psi.reshape(B, 1, spec.n_input)
    caches = []
    for i in range(spec.n_layer):
        conv = _conv1d(x, params[f"K{i}"], params[f"kb{i}"])
        if spec.n_pool > 0:
            Bc, C, L = conv.shape
            Lp = L // spec.n_pool
            blocks = conv[:, :, : Lp * spec.n_pool].reshape(Bc, C, Lp, spec.n_pool)
            amax = blocks.argmax(axis=3)
            pooled = np.take_along_axis(blocks, amax[..., None], axis=3)[..., 0]
        else:
            pooled, amax = conv, None
        act = _act(spec.activation, pooled)
        caches.append((x, conv, pooled, amax))
        x = act
    flat = x.reshape(B, -1)
    a_hid = flat @ params["W_hid"] + params["b_hid"]
    h = _act(spec.activation, a_hid)
    hd = h * masks[0] if masks is not None else h
    out = hd @ params["W_out"] + params["b_out"]
    return out, (caches, x.shape, flat, a_hid, hd, masks)


def _cnn_backward(spec, params, cache, dout):
    caches, xshape, flat, a_hid, hd, masks = cache
    grads = {"W_out": hd.T @ dout, "b_out": dout.sum(axis=0)}
    dh = dout @ params["W_out"].T
    if masks is not None:
        dh = dh * masks[0]
    da = dh * _act_grad(spec.activation, a_hid)
    grads["W_hid"] = flat.T @ da
    grads["b_hid"] = da.sum(axis=0)
    dx = (da @ params["W_hid"].T).reshape(xshape)
    for i in reversed(range(spec.n_layer)):
        x_in, conv, pooled, amax = caches[i]
        dact = dx * _act_grad(spec.activation, pooled)
        if spec.n_pool > 0:
            B, C, Lp = dact.shape
            dconv = np.zeros_like(conv)
            blocks = dconv[:, :, : Lp * spec.n_pool].reshape(B, C, Lp, spec.n_pool)
            np.put_along_axis(blocks, amax[..., None], dact[..., None], axis=3)
            dconv[:, :, : Lp * spec.n_pool] = blocks.reshape(B, C, Lp * spec.n_pool)
        else:
            dconv = dact
        K = params[f"K{i}"]
        win = sliding_window_view(x_in, K.shape[2], axis=2)
        grads[f"K{i}"] = np.einsum("bitk,bot->oik", win, dconv, optimize=True)
        grads[f"kb{i}"] = dconv.sum(axis=(0, 2))
        if i > 0:
            dx = np.zeros_like(x_in)
            F = K.shape[2]
            for k in range(F):
                dx[:, :, k: k + dconv.shape[2]] += np.einsum(
                    "bot,oi->bit", dconv, K[:, :, k], optimize=True
                )
    return grads


# ------------------------------------------------------- RNN / LSTM

def _recurrent_forward(spec, params, psi, masks):
    # psi (B, T, n_input); outputs from the last n_output steps
    B, T, _ = psi.shape
    if T != spec.n_steps_total:
        raise ValueError(f"expected {spec.n_steps_total} steps, got {T}")
    nz = spec.n_z
    lstm = spec.arch == "lstm"
    layer_in = psi
    layers = []
    for l in range(spec.n_layer):
        W_ih, W_hh = params[f"W_ih{l}"], params[f"W_hh{l}"]
        b = params[f"b_ih{l}"] + params[f"b_hh{l}"]
        H = np.zeros((B, T + 1, nz))
        if lstm:
            Cst = np.zeros((B, T + 1, nz))
            gates = np.zeros((B, T, 4 * nz))
            for t in range(T):
                g = layer_in[:, t] @ W_ih + H[:, t] @ W_hh + b
                i = _sigmoid(g[:, :nz])
                f = _sigmoid(g[:, nz: 2 * nz])
                gg = np.tanh(g[:, 2 * nz: 3 * nz])
                o = _sigmoid(g[:, 3 * nz:])
                c = f * Cst[:, t] + i * gg
                H[:, t + 1] = o * np.tanh(c)
                Cst[:, t + 1] = c
                gates[:, t, :nz] = i
                gates[:, t, nz: 2 * nz] = f
                gates[:, t, 2 * nz: 3 * nz] = gg
                gates[:, t, 3 * nz:] = o
            layers.append((layer_in, H, Cst, gates))
        else:
            pre = np.zeros((B, T, nz))
            for t in range(T):
                a = layer_in[:, t] @ W_ih + H[:, t] @ W_hh + b
                pre[:, t] = a
                H[:, t + 1] = np.tanh(a)
            layers.append((layer_in, H, None, pre))
        layer_in = H[:, 1:]
    hout = layer_in[:, spec.n_steps_in:, :]          # (B, n_output, nz)
    a_head = hout @ params["W_head"] + params["b_head"]
    g = _act(spec.activation, a_head)
    gd = g * masks[0] if masks is not None else g
    out = (gd @ params["W_out"])[..., 0] + params["b_out"][0]
    return out, (layers, hout, a_head, gd, masks)


def _recurrent_backward(spec, params, cache, dout):
    layers, hout, a_head, gd, masks = cache
    B = dout.shape[0]
    T = spec.n_steps_total
    nz = spec.n_z
    lstm = spec.arch == "lstm"
    grads = {}
    dgd = dout[..., None] * params["W_out"][None, None, :, 0]
    grads["W_out"] = np.einsum("bos,bo->s", gd, dout)[:, None]
    grads["b_out"] = np.array([dout.sum()])
    if masks is not None:
        dgd = dgd * masks[0]
    da_head = dgd * _act_grad(spec.activation, a_head)
    grads["W_head"] = np.einsum("boz,bos->zs", hout, da_head)
    grads["b_head"] = da_head.sum(axis=(0, 1))
    dh_out = da_head @ params["W_head"].T            # (B, n_output, nz)

    # gradient flowing into each layer's hidden sequence h(1..T)
    dH_top = np.zeros((B, T, nz))
    dH_top[:, spec.n_steps_in:, :] = dh_out
    for l in reversed(range(spec.n_layer)):
        layer_in, H, Cst, aux = layers[l]
        W_ih, W_hh = params[f"W_ih{l}"], params[f"W_hh{l}"]
        dW_ih = np.zeros_like(W_ih)
        dW_hh = np.zeros_like(W_hh)
        db = np.zeros(W_ih.shape[1])
        d_in = np.zeros_like(layer_in)
        dh_next = np.zeros((B, nz))
        if lstm:
            dc_next = np.zeros((B, nz))
            for t in reversed(range(T)):
                dh = dH_top[:, t] + dh_next
                i = aux[:, t, :nz]
                f = aux[:, t, nz: 2 * nz]
                gg = aux[:, t, 2 * nz: 3 * nz]
                o = aux[:, t, 3 * nz:]
                c = Cst[:, t + 1]
                tc = np.tanh(c)
                do = dh * tc
                dc = dh * o * (1.0 - tc * tc) + dc_next
                di = dc * gg
                df = dc * Cst[:, t]
                dgg = dc * i
                dc_next = dc * f
                dg = np.concatenate(
                    [di * i * (1 - i), df * f * (1 - f),
                     dgg * (1 - gg * gg), do * o * (1 - o)], axis=1
                )
                dW_ih += layer_in[:, t].T @ dg
                dW_hh += H[:, t].T @ dg
                db += dg.sum(axis=0)
                d_in[:, t] = dg @ W_ih.T
                dh_next = dg @ W_hh.T
        else:
            for t in reversed(range(T)):
                dh = dH_top[:, t] + dh_next
                da = dh * (1.0 - np.tanh(aux[:, t]) ** 2)
                dW_ih += layer_in[:, t].T @ da
                dW_hh += H[:, t].T @ da
                db += da.sum(axis=0)
                d_in[:, t] = da @ W_ih.T
                dh_next = da @ W_hh.T
        grads[f"W_ih{l}"] = dW_ih
        grads[f"W_hh{l}"] = dW_hh
        grads[f"b_ih{l}"] = db
        grads[f"b_hh{l}"] = db.copy()
        dH_top = d_in
    return grads


# ---------------------------------------------------------- training

@dataclass(frozen=True)
class Normalizer:
    """Per-feature z-score transform (population std convention)."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float))


def fit_normalizer(x: np.ndarray) -> Normalizer:
    """Fit per-feature mean/std over the leading axes; constant features
    get their std floored to keep the transform invertible."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("cannot fit a normalizer on empty data")
    axes = tuple(range(x.ndim - 1)) if x.ndim > 1 else (0,)
    mean = x.mean(axis=axes)
    std = x.std(axis=axes)
    std = np.where(std < 1e-8, 1e-8, std)
    return Normalizer(np.atleast_1d(mean), np.atleast_1d(std))


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    patience: int = 150
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    repeat: int = 1

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if min(self.max_epochs, self.batch_size, self.repeat) < 1:
            raise ValueError("config fields must be positive")


@dataclass
class TrainHistory:
    train_loss: list
    test_loss: list
    best_epoch: int
    stopped_epoch: int


def _adam_step(params, grads, state, lr, t, beta1=0.9, beta2=0.999, eps=1e-8):
    for k in params:
        m, v = state[k]
        g = grads[k]
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        state[k] = (m, v)
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        params[k] = params[k] - lr * mhat / (np.sqrt(vhat) + eps)


def _eval_loss(spec, params, psi, xi, chunk=4096):
    total, n = 0.0, 0
    for i in range(0, len(psi), chunk):
        out = forward(spec, params, psi[i: i + chunk])
        r = out - xi[i: i + chunk]
        total += float(np.sum(r * r))
        n += r.size
    return total / n


def train(
    spec: NetSpec,
    train_set: tuple[np.ndarray, np.ndarray],
    test_set: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig = TrainConfig(),
):
    """Mini-batch Adam with early stopping on the test loss.

    Returns the parameters from the best test-loss epoch and the loss
    history. With cfg.repeat > 1 the whole run repeats with derived
    seeds and the best test loss wins. Deterministic under cfg.seed.
    """
    psi_tr, xi_tr = [np.asarray(a, dtype=float) for a in train_set]
    psi_te, xi_te = [np.asarray(a, dtype=float) for a in test_set]
    if len(psi_tr) == 0 or len(psi_te) == 0:
        raise ValueError("empty training or test set")

    if cfg.repeat > 1:
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.repeat)]
        runs = [
            train(spec, train_set, test_set, replace(cfg, seed=s, repeat=1))
            for s in seeds
        ]
        return min(runs, key=lambda r: r[1].test_loss[r[1].best_epoch])

    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, seed=int(rng.integers(2 ** 31)))
    adam_state = {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}
    n = len(psi_tr)
    history = TrainHistory([], [], 0, 0)
    best = (np.inf, 0, {k: v.copy() for k, v in params.items()})
    t_step = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        ep_loss, ep_n = 0.0, 0
        for i in range(0, n, cfg.batch_size):
            idx = order[i: i + cfg.batch_size]
            masks = make_dropout_masks(spec, len(idx), rng)
            loss, grads = loss_and_grads(spec, params, psi_tr[idx], xi_tr[idx], masks)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            t_step += 1
            _adam_step(params, grads, adam_state, cfg.learning_rate, t_step)
            ep_loss += loss * len(idx)
            ep_n += len(idx)
        te = _eval_loss(spec, params, psi_te, xi_te)
        history.train_loss.append(ep_loss / ep_n)
        history.test_loss.append(te)
        if te < best[0]:
            best = (te, epoch, {k: v.copy() for k, v in params.items()})
        if epoch - best[1] >= cfg.patience:
            break
    history.best_epoch = best[1]
    history.stopped_epoch = len(history.test_loss) - 1
    return best[2], history


# ------------------------------------------------------ persistence

def save_model(path, spec: NetSpec, params: dict,
               norm_psi: Normalizer, norm_xi: Normalizer, meta: dict | None = None):
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "spec": spec.to_dict(),
        "params": {k: v.tolist() for k, v in params.items()},
        "shapes": {k: list(v.shape) for k, v in params.items()},
        "normalizer_psi": norm_psi.to_dict(),
        "normalizer_xi": norm_xi.to_dict(),
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
    spec = NetSpec.from_dict(doc["spec"])
    params = {k: np.asarray(v, dtype=float) for k, v in doc["params"].items()}
    for k, shape in doc["shapes"].items():
        if list(params[k].shape) != shape:
            raise ValueError(f"shape mismatch for parameter {k}")
    return spec, params, Normalizer.from_dict(doc["normalizer_psi"]), \
        Normalizer.from_dict(doc["normalizer_xi"]), doc.get("meta", {})
