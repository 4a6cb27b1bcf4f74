"""Dense and LSTM layers with hand-written backpropagation, softmax
cross-entropy, Adam and a central-difference gradient checker.

Parameters live in plain ``dict[str, np.ndarray]`` mappings so optimizers,
serialization and freezing can treat every model uniformly. All arithmetic
is float64 and every reduction runs in a fixed order, so a training run is a
deterministic function of its inputs and seed.

LSTM gate blocks are stored concatenated along the last axis in the order
input, forget, cell candidate, output: ``W`` is (input, 4*hidden), ``U`` is
(hidden, 4*hidden) and ``b`` is (4*hidden,).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadTarget, ShapeMismatch

GATES = ("input", "forget", "cell", "output")
FORGET_BIAS = 1.0


def sigmoid(z):
    # split by sign so large |z| never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def uniform_init(rng, shape, fan_in):
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


# ---------------------------------------------------------------------------
# dense

def init_dense(rng, n_in, n_out, prefix):
    return {f"{prefix}.W": uniform_init(rng, (n_out, n_in), n_in),
            f"{prefix}.b": uniform_init(rng, (n_out,), n_in)}


def dense_forward(x, params, prefix):
    W, b = params[f"{prefix}.W"], params[f"{prefix}.b"]
    if x.shape[-1] != W.shape[1]:
        raise ShapeMismatch(f"{prefix}: input dim {x.shape[-1]} != {W.shape[1]}")
    return x @ W.T + b


def dense_backward(x, dy, params, prefix):
    """Returns ({param: grad}, d_input)."""
    W = params[f"{prefix}.W"]
    return {f"{prefix}.W": dy.T @ x, f"{prefix}.b": dy.sum(axis=0)}, dy @ W


# ---------------------------------------------------------------------------
# LSTM

def init_lstm(rng, input_size, hidden_size, num_layers, prefix="lstm"):
    params = {}
    d = input_size
    for layer in range(num_layers):
        p = f"{prefix}{layer}"
        params[f"{p}.W"] = uniform_init(rng, (d, 4 * hidden_size), d)
        params[f"{p}.U"] = uniform_init(rng, (hidden_size, 4 * hidden_size), hidden_size)
        b = uniform_init(rng, (4 * hidden_size,), hidden_size)
        b[hidden_size:2 * hidden_size] = FORGET_BIAS
        params[f"{p}.b"] = b
        d = hidden_size
    return params


def gate_block(arr, gate, hidden_size):
    """View of one gate's slice of a concatenated W, U or b."""
    k = GATES.index(gate)
    return arr[..., k * hidden_size:(k + 1) * hidden_size]


def lstm_layer_names(params, prefix="lstm"):
    layers = []
    while f"{prefix}{len(layers)}.W" in params:
        layers.append(f"{prefix}{len(layers)}")
    return layers


@dataclass
class LstmCache:
    layers: list = field(default_factory=list)   # per layer: dict of activations
    prefix: str = "lstm"


def _layer_forward(x, W, U, b):
    B, T, _ = x.shape
    H = U.shape[0]
    zx = (x.reshape(B * T, -1) @ W).reshape(B, T, 4 * H) + b
    i = np.empty((B, T, H)); f = np.empty((B, T, H))
    g = np.empty((B, T, H)); o = np.empty((B, T, H))
    c = np.empty((B, T, H)); tc = np.empty((B, T, H)); h = np.empty((B, T, H))
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(T):
        z = zx[:, t] + h_prev @ U
        i[:, t] = sigmoid(z[:, :H])
        f[:, t] = sigmoid(z[:, H:2 * H])
        g[:, t] = np.tanh(z[:, 2 * H:3 * H])
        o[:, t] = sigmoid(z[:, 3 * H:])
        c_prev = f[:, t] * c_prev + i[:, t] * g[:, t]
        c[:, t] = c_prev
        tc[:, t] = np.tanh(c_prev)
        h_prev = o[:, t] * tc[:, t]
        h[:, t] = h_prev
    return {"x": x, "i": i, "f": f, "g": g, "o": o, "c": c, "tc": tc, "h": h}


def lstm_forward(x, params, prefix="lstm"):
    """Run a stacked LSTM over ``x`` of shape (batch, time, features).

    A 2-D ``x`` is treated as a single sequence. Initial hidden and cell
    states are zero. Returns (top-layer hidden states (B, T, H), final
    top-layer hidden state (B, H), cache for :func:`lstm_backward`).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] < 1:
        raise ShapeMismatch("LSTM input must be (batch, time>=1, features)")
    cache = LstmCache(prefix=prefix)
    out = x
    for name in lstm_layer_names(params, prefix):
        W, U, b = params[f"{name}.W"], params[f"{name}.U"], params[f"{name}.b"]
        if out.shape[-1] != W.shape[0]:
            raise ShapeMismatch(f"{name}: input dim {out.shape[-1]} != {W.shape[0]}")
        acts = _layer_forward(out, W, U, b)
        cache.layers.append(acts)
        out = acts["h"]
    return out, out[:, -1], cache


def lstm_backward(cache: LstmCache, params, d_final=None, d_states=None):
    """Exact BPTT.

    ``d_final`` is the loss gradient w.r.t. the final top-layer hidden state
    (B, H); ``d_states`` optionally adds gradients w.r.t. every top-layer
    hidden state (B, T, H). Returns ({param: grad}, d_input (B, T, D)).
    """
    top = cache.layers[-1]["h"]
    dh_all = np.zeros_like(top) if d_states is None else np.array(d_states, dtype=np.float64)
    if dh_all.shape != top.shape:
        raise ShapeMismatch("d_states shape does not match the forward pass")
    if d_final is not None:
        d_final = np.asarray(d_final, dtype=np.float64)
        if d_final.shape != top[:, -1].shape:
            raise ShapeMismatch("d_final shape does not match the forward pass")
        dh_all[:, -1] += d_final
    grads = {}
    names = lstm_layer_names(params, cache.prefix)
    for name, acts in zip(reversed(names), reversed(cache.layers)):
        W, U = params[f"{name}.W"], params[f"{name}.U"]
        x, i, f, g, o = acts["x"], acts["i"], acts["f"], acts["g"], acts["o"]
        c, tc, h = acts["c"], acts["tc"], acts["h"]
        B, T, H = h.shape
        dz = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            dh = dh_all[:, t] + dh_next
            dc = dc_next + dh * o[:, t] * (1.0 - tc[:, t] ** 2)
            c_prev = c[:, t - 1] if t > 0 else 0.0
            it, ft, gt, ot = i[:, t], f[:, t], g[:, t], o[:, t]
            dz[:, t, :H] = dc * gt * it * (1.0 - it)
            dz[:, t, H:2 * H] = dc * c_prev * ft * (1.0 - ft)
            dz[:, t, 2 * H:3 * H] = dc * it * (1.0 - gt ** 2)
            dz[:, t, 3 * H:] = dh * tc[:, t] * ot * (1.0 - ot)
            dc_next = dc * ft
            dh_next = dz[:, t] @ U.T
        dz_flat = dz.reshape(B * T, 4 * H)
        h_prev = np.concatenate([np.zeros((B, 1, H)), h[:, :-1]], axis=1).reshape(B * T, H)
        grads[f"{name}.W"] = x.reshape(B * T, -1).T @ dz_flat
        grads[f"{name}.U"] = h_prev.T @ dz_flat
        grads[f"{name}.b"] = dz_flat.sum(axis=0)
        dh_all = (dz_flat @ W.T).reshape(B, T, -1)
    return grads, dh_all


# ---------------------------------------------------------------------------
# loss

def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, target):
    """Mean cross-entropy and its gradient w.r.t. ``logits``.

    Accepts a single logit vector with an integer target, or a (B, K) batch
    with B targets; the batch loss is the mean over rows.
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    t = np.atleast_1d(np.asarray(target))
    k = z.shape[1]
    if k < 2:
        raise BadTarget("need at least 2 classes")
    if t.shape[0] != z.shape[0] or np.any(t < 0) or np.any(t >= k):
        raise BadTarget(f"targets must be {z.shape[0]} indices in [0, {k})")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    loss = lse - shifted[rows, t]
    grad = np.exp(shifted - lse[:, None])
    grad[rows, t] -= 1.0
    if single:
        return float(loss[0]), grad[0]
    return float(loss.mean()), grad / z.shape[0]


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params, grads):
        """Update ``params`` in place for every name present in ``grads``."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in sorted(grads):
            g = grads[name]
            p = params[name]
            if g.shape != p.shape:
                raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def adam_step(params, grads, state: Adam):
    return state.step(params, grads), state


# ---------------------------------------------------------------------------
# gradient check

def grad_check(loss_fn, params, grads, eps=1e-5, max_coords=None, seed=0, floor=1e-6):
    """Largest relative error between ``grads`` and central differences.

    ``loss_fn(params)`` must return a scalar and is evaluated on perturbed
    copies. With ``max_coords`` only that many coordinates per parameter are
    sampled. Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(grads):
        p = params[name]
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, max_coords, replace=False))
        analytic = np.asarray(grads[name]).reshape(-1)
        for j in idx:
            old = flat[j]
            flat[j] = old + eps
            up = loss_fn(params)
            flat[j] = old - eps
            down = loss_fn(params)
            flat[j] = old
            numeric = (up - down) / (2.0 * eps)
            a = analytic[j]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return worst
