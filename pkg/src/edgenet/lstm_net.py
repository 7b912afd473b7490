"""Stacked LSTM with a sigmoid head: forward, BCE loss, and exact BPTT.

Gate layout follows the usual cell: forget f, input i, candidate j, output z,
each driven by a weight matrix [H x (H+D)] acting on the concatenation
[h_prev, x_t]. With ``tied_output_gate`` the output gate reuses the candidate
weights (z = sigmoid of the same pre-activation that j takes tanh of);
the default gives the output gate its own w_o / b_o.

Dropout is the inverted kind and is applied to each layer's output stream
(the values fed upward to the next layer or the head), not to the in-layer
recurrence. Training math is float64 end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CacheMismatch, ConfigError, DimensionMismatch

ParamTree = dict[str, np.ndarray]

GATE_NAMES = ("w_f", "w_i", "w_j", "w_o")
BIAS_NAMES = ("b_f", "b_i", "b_j", "b_o")

BCE_CLAMP = 1e-7


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmLayerParams:
    """One layer's gate weights [H x (H+D)] and biases [H]."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_j: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_j: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        shapes = {self.w_f.shape, self.w_i.shape, self.w_j.shape, self.w_o.shape}
        if len(shapes) != 1:
            raise DimensionMismatch(f"gate weight shapes differ: {shapes}")
        h = self.w_f.shape[0]
        for b in (self.b_f, self.b_i, self.b_j, self.b_o):
            if b.shape != (h,):
                raise DimensionMismatch(f"bias shape {b.shape} != ({h},)")
        if self.w_f.shape[1] <= h:
            raise DimensionMismatch(
                f"weight matrix {self.w_f.shape} leaves no input columns for H={h}")

    @property
    def hidden_size(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_f.shape[1] - self.hidden_size


@dataclass
class NetworkParams:
    """Full parameter set: stacked LSTM layers plus the sigmoid head."""

    layers: list[LstmLayerParams]
    head_w: np.ndarray  # [H_last]
    head_b: np.ndarray  # scalar, shape ()
    dropout_rate: float = 0.1
    tied_output_gate: bool = False

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("need at least one LSTM layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for lo, hi in zip(self.layers, self.layers[1:]):
            if hi.input_size != lo.hidden_size:
                raise DimensionMismatch(
                    f"layer input {hi.input_size} != previous hidden {lo.hidden_size}")
        if self.head_w.shape != (self.layers[-1].hidden_size,):
            raise DimensionMismatch(
                f"head_w {self.head_w.shape} != ({self.layers[-1].hidden_size},)")
        self.head_b = np.asarray(self.head_b, dtype=np.float64).reshape(())

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    def tensors(self) -> ParamTree:
        """All parameters as an ordered name -> array tree."""
        tree: ParamTree = {}
        for idx, layer in enumerate(self.layers):
            for name in GATE_NAMES + BIAS_NAMES:
                tree[f"layer{idx}.{name}"] = getattr(layer, name)
        tree["head.w"] = self.head_w
        tree["head.b"] = self.head_b
        return tree

    def with_tensors(self, tree: ParamTree) -> "NetworkParams":
        """New NetworkParams taking values from a congruent tree."""
        layers = []
        for idx in range(len(self.layers)):
            kwargs = {name: np.asarray(tree[f"layer{idx}.{name}"], dtype=np.float64)
                      for name in GATE_NAMES + BIAS_NAMES}
            layers.append(LstmLayerParams(**kwargs))
        return NetworkParams(layers=layers,
                             head_w=np.asarray(tree["head.w"], dtype=np.float64),
                             head_b=np.asarray(tree["head.b"], dtype=np.float64),
                             dropout_rate=self.dropout_rate,
                             tied_output_gate=self.tied_output_gate)

    def copy(self) -> "NetworkParams":
        return self.with_tensors({k: v.copy() for k, v in self.tensors().items()})

    def weight_names(self) -> list[str]:
        """Names of the prunable tensors: every weight matrix plus head.w."""
        return [n for n in self.tensors() if is_weight_name(n)]


def is_weight_name(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith("w")


def init_params(layer_sizes, seed: int, init_scale_mode: str | float = "glorot",
                dropout_rate: float = 0.1, tied_output_gate: bool = False) -> NetworkParams:
    """Draw weights from N(0, std) per tensor; biases start at zero.

    ``layer_sizes`` is (input_dim, hidden_1, ..., hidden_L). The default
    "glorot" mode uses std = sqrt(2 / (fan_in + fan_out)); passing a float
    uses that fixed std everywhere.
    """
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigError(f"layer_sizes needs input plus >=1 positive hidden size, got {sizes}")
    rng = np.random.default_rng(seed)

    def std_for(fan_in: int, fan_out: int) -> float:
        if init_scale_mode == "glorot":
            return float(np.sqrt(2.0 / (fan_in + fan_out)))
        return float(init_scale_mode)

    layers = []
    for d, h in zip(sizes[:-1], sizes[1:]):
        std = std_for(h + d, h)
        gates = {name: rng.normal(0.0, std, size=(h, h + d)) for name in GATE_NAMES}
        biases = {name: np.zeros(h) for name in BIAS_NAMES}
        layers.append(LstmLayerParams(**gates, **biases))
    h_last = sizes[-1]
    head_w = rng.normal(0.0, std_for(h_last, 1), size=h_last)
    return NetworkParams(layers=layers, head_w=head_w, head_b=np.zeros(()),
                         dropout_rate=dropout_rate, tied_output_gate=tied_output_gate)


def zeros_params(layer_sizes, dropout_rate: float = 0.1,
                 tied_output_gate: bool = False) -> NetworkParams:
    """All-zero parameter set of the given shape (deserialization template)."""
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigError(f"layer_sizes needs input plus >=1 positive hidden size, got {sizes}")
    layers = []
    for d, h in zip(sizes[:-1], sizes[1:]):
        gates = {name: np.zeros((h, h + d)) for name in GATE_NAMES}
        biases = {name: np.zeros(h) for name in BIAS_NAMES}
        layers.append(LstmLayerParams(**gates, **biases))
    return NetworkParams(layers=layers, head_w=np.zeros(sizes[-1]), head_b=np.zeros(()),
                         dropout_rate=dropout_rate, tied_output_gate=tied_output_gate)


# --- forward ---

@dataclass
class LayerCache:
    inputs: list = field(default_factory=list)    # x_t after lower dropout, (B, D)
    h_prev: list = field(default_factory=list)    # (B, H); undropped recurrence
    c_prev: list = field(default_factory=list)
    f: list = field(default_factory=list)
    i: list = field(default_factory=list)
    j: list = field(default_factory=list)
    z: list = field(default_factory=list)
    tanh_c: list = field(default_factory=list)
    out_scale: list = field(default_factory=list)  # inverted-dropout mask or None


@dataclass
class ForwardCache:
    mode: str
    tied: bool
    layers: list[LayerCache]
    head_input: np.ndarray  # (B, H_last), post-dropout
    p: np.ndarray           # (B,)
    batch_size: int
    seq_len: int


def _cell_math(layer: LstmLayerParams, x_t, h_prev, c_prev, tied: bool):
    concat = np.concatenate([h_prev, x_t], axis=1)  # (B, H+D)
    f = sigmoid(concat @ layer.w_f.T + layer.b_f)
    i = sigmoid(concat @ layer.w_i.T + layer.b_i)
    j_pre = concat @ layer.w_j.T + layer.b_j
    j = np.tanh(j_pre)
    if tied:
        z = sigmoid(j_pre)
    else:
        z = sigmoid(concat @ layer.w_o.T + layer.b_o)
    c = f * c_prev + i * j
    tanh_c = np.tanh(c)
    h = z * tanh_c
    return h, c, {"f": f, "i": i, "j": j, "z": z, "tanh_c": tanh_c}


def lstm_cell_forward(layer: LstmLayerParams, x_t, h_prev, c_prev,
                      tied: bool = False):
    """One cell step. Accepts vectors or (batch, dim) arrays.

    Returns (h_t, c_t, gates) where gates holds f, i, j, z and tanh(c_t).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    single = x_t.ndim == 1
    if single:
        x_t, h_prev, c_prev = x_t[None, :], h_prev[None, :], c_prev[None, :]
    h = layer.hidden_size
    if x_t.shape[1] != layer.input_size:
        raise DimensionMismatch(f"x_t has {x_t.shape[1]} features, layer wants {layer.input_size}")
    if h_prev.shape[1] != h or c_prev.shape[1] != h:
        raise DimensionMismatch(f"state width != hidden size {h}")
    h_t, c_t, gates = _cell_math(layer, x_t, h_prev, c_prev, tied)
    if single:
        h_t, c_t = h_t[0], c_t[0]
        gates = {k: v[0] for k, v in gates.items()}
    return h_t, c_t, gates


def forward_batch(net: NetworkParams, x: np.ndarray, mode: str = "eval",
                  rng: np.random.Generator | None = None) -> tuple[np.ndarray, ForwardCache]:
    """Run a batch of sequences (B, T, D) through the stack and head.

    Initial hidden and cell states are zero. In train mode each layer's
    output stream gets an independent inverted dropout mask per element,
    drawn from ``rng``.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionMismatch(f"expected (batch, time, features), got shape {x.shape}")
    if x.shape[2] != net.input_size:
        raise DimensionMismatch(f"{x.shape[2]} features, network wants {net.input_size}")
    batch, seq_len = x.shape[0], x.shape[1]
    rate = net.dropout_rate if mode == "train" else 0.0
    if rate > 0.0 and rng is None:
        raise ConfigError("train-mode forward with dropout needs an rng")

    caches: list[LayerCache] = []
    cur = [x[:, t, :] for t in range(seq_len)]
    for layer in net.layers:
        lc = LayerCache()
        hdim = layer.hidden_size
        h = np.zeros((batch, hdim))
        c = np.zeros((batch, hdim))
        outs = []
        for t in range(seq_len):
            inp = cur[t]
            lc.inputs.append(inp)
            lc.h_prev.append(h)
            lc.c_prev.append(c)
            h, c, g = _cell_math(layer, inp, h, c, net.tied_output_gate)
            for k in ("f", "i", "j", "z", "tanh_c"):
                getattr(lc, k).append(g[k])
            if rate > 0.0:
                keep = (rng.random((batch, hdim)) >= rate)
                scale = keep / (1.0 - rate)
                lc.out_scale.append(scale)
                outs.append(h * scale)
            else:
                lc.out_scale.append(None)
                outs.append(h)
        caches.append(lc)
        cur = outs

    head_input = cur[-1]
    p = sigmoid(head_input @ net.head_w + net.head_b)
    cache = ForwardCache(mode=mode, tied=net.tied_output_gate, layers=caches,
                         head_input=head_input, p=p, batch_size=batch, seq_len=seq_len)
    return p, cache


def forward(net: NetworkParams, sequence: np.ndarray, mode: str = "eval",
            rng: np.random.Generator | None = None) -> tuple[float, ForwardCache]:
    """Single sequence (T, D) -> anomaly probability."""
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2:
        raise DimensionMismatch(f"expected (time, features), got shape {sequence.shape}")
    p, cache = forward_batch(net, sequence[None, :, :], mode=mode, rng=rng)
    return float(p[0]), cache


def bce_loss(p, y):
    """Binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    return float(loss) if loss.ndim == 0 else loss


def backward(net: NetworkParams, cache: ForwardCache, y) -> ParamTree:
    """Gradients of the mean BCE loss over the cached batch, for every tensor.

    The cache must come from a train-mode forward on this architecture.
    """
    if cache.mode != "train":
        raise CacheMismatch("backward needs a train-mode forward cache")
    if len(cache.layers) != len(net.layers) or cache.tied != net.tied_output_gate:
        raise CacheMismatch("cache does not match the network architecture")
    for lc, layer in zip(cache.layers, net.layers):
        if lc.h_prev[0].shape[1] != layer.hidden_size:
            raise CacheMismatch("cache hidden sizes do not match the network")

    batch = cache.batch_size
    seq_len = cache.seq_len
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y.shape != (batch,):
        raise DimensionMismatch(f"labels shape {y.shape} != ({batch},)")

    grads: ParamTree = {name: np.zeros_like(arr) for name, arr in net.tensors().items()}

    # Head: d(mean loss)/d(pre-sigmoid) collapses to (p - y) / B wherever the
    # clamp is inactive; a clamped probability contributes zero gradient.
    p = cache.p
    live = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    du = np.where(live, p - y, 0.0) / batch  # (B,)
    grads["head.w"] = du @ cache.head_input
    grads["head.b"] = np.asarray(np.sum(du))
    d_out_top = np.outer(du, net.head_w)  # (B, H_last)

    # Gradient flowing into each layer's output stream, per timestep.
    d_out = [np.zeros_like(d_out_top) for _ in range(seq_len)]
    d_out[seq_len - 1] = d_out_top

    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        lc = cache.layers[idx]
        hdim = layer.hidden_size
        d_inputs = [None] * seq_len
        dh_rec = np.zeros((batch, hdim))
        dc_next = np.zeros((batch, hdim))
        for t in range(seq_len - 1, -1, -1):
            scale = lc.out_scale[t]
            dh = (d_out[t] * scale if scale is not None else d_out[t]) + dh_rec
            f, i, j, z = lc.f[t], lc.i[t], lc.j[t], lc.z[t]
            tanh_c = lc.tanh_c[t]
            dz = dh * tanh_c
            dc = dc_next + dh * z * (1.0 - tanh_c * tanh_c)
            df = dc * lc.c_prev[t]
            di = dc * j
            dj = dc * i
            dc_next = dc * f
            df_pre = df * f * (1.0 - f)
            di_pre = di * i * (1.0 - i)
            dj_pre = dj * (1.0 - j * j)
            dz_pre = dz * z * (1.0 - z)
            concat = np.concatenate([lc.h_prev[t], lc.inputs[t]], axis=1)
            prefix = f"layer{idx}."
            if net.tied_output_gate:
                # j and z share one pre-activation; w_o / b_o stay unused.
                gate_grads = (("w_f", "b_f", df_pre), ("w_i", "b_i", di_pre),
                              ("w_j", "b_j", dj_pre + dz_pre))
            else:
                gate_grads = (("w_f", "b_f", df_pre), ("w_i", "b_i", di_pre),
                              ("w_j", "b_j", dj_pre), ("w_o", "b_o", dz_pre))
            d_concat = np.zeros_like(concat)
            for w_name, b_name, dg in gate_grads:
                grads[prefix + w_name] += dg.T @ concat
                grads[prefix + b_name] += dg.sum(axis=0)
                d_concat += dg @ getattr(layer, w_name)
            dh_rec = d_concat[:, :hdim]
            d_inputs[t] = d_concat[:, hdim:]
        d_out = d_inputs
    return grads


def scores(net: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Eval-mode probabilities for a batch (B, T, D) or feature matrix (B, D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
    p, _ = forward_batch(net, x, mode="eval")
    return p


def predict(net: NetworkParams, x: np.ndarray, threshold: float = 0.5) -> int:
    """Classify one record; probabilities at or above the threshold are anomalies."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    p, _ = forward(net, x, mode="eval")
    return int(p >= threshold)
