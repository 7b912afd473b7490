"""Post-training dynamic-range quantization of weights to signed int8.

Per-tensor affine mapping r ~ S * (q - Z). Calibration widens the observed
range to include 0 so that real 0 maps exactly onto the zero point (pruned
weights stay exactly zero through a round trip). Rounding is half-to-even
for both q and Z. Biases are never quantized; activations and the cell
state stay in floating point at inference time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, EmptyTensor
from .lstm_net import NetworkParams, forward_batch, is_weight_name, zeros_params
from .pruning import SparsityMask

Q_MIN_DEFAULT = -128
Q_MAX_DEFAULT = 127


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int
    q_min: int = Q_MIN_DEFAULT
    q_max: int = Q_MAX_DEFAULT
    f_min: float = 0.0
    f_max: float = 0.0

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ConfigError(f"scale must be > 0, got {self.scale}")
        if not self.q_min <= self.zero_point <= self.q_max:
            raise ConfigError(f"zero point {self.zero_point} outside [{self.q_min}, {self.q_max}]")
        if self.f_min > self.f_max:
            raise ConfigError(f"f_min {self.f_min} > f_max {self.f_max}")


@dataclass
class QuantizedTensor:
    values: np.ndarray  # int8
    params: QuantParams

    @property
    def shape(self):
        return self.values.shape


@dataclass
class QuantizedModel:
    """Int8 weight tensors plus float32 biases and the architecture shape."""

    weights: dict[str, QuantizedTensor]
    biases: dict[str, np.ndarray]
    layer_sizes: list[int]          # (input_dim, hidden_1, ..., hidden_L)
    dropout_rate: float = 0.1
    tied_output_gate: bool = False
    mask: SparsityMask | None = None


def calibrate(tensor: np.ndarray) -> tuple[float, float]:
    """Exact min/max of the tensor, widened to include 0."""
    t = np.asarray(tensor)
    if t.size == 0:
        raise EmptyTensor("cannot calibrate an empty tensor")
    return min(float(t.min()), 0.0), max(float(t.max()), 0.0)


def make_quant_params(f_min: float, f_max: float, q_min: int = Q_MIN_DEFAULT,
                      q_max: int = Q_MAX_DEFAULT) -> QuantParams:
    """Scale S = (f_max - f_min) / (q_max - q_min); Z = round(q_min - f_min / S).

    A degenerate range (f_min == f_max) maps to S=1, Z=0.
    """
    if f_min > f_max:
        raise ConfigError(f"f_min {f_min} > f_max {f_max}")
    if q_min >= q_max:
        raise ConfigError(f"need q_min < q_max, got [{q_min}, {q_max}]")
    if f_min == f_max:
        return QuantParams(scale=1.0, zero_point=0, q_min=q_min, q_max=q_max,
                           f_min=f_min, f_max=f_max)
    scale = (f_max - f_min) / (q_max - q_min)
    z = int(np.clip(np.rint(q_min - f_min / scale), q_min, q_max))
    return QuantParams(scale=scale, zero_point=z, q_min=q_min, q_max=q_max,
                       f_min=f_min, f_max=f_max)


def quantize(tensor: np.ndarray, params: QuantParams) -> QuantizedTensor:
    """q = clamp(round_half_even(r / S + Z), q_min, q_max)."""
    r = np.asarray(tensor, dtype=np.float64)
    q = np.rint(r / params.scale + params.zero_point)
    q = np.clip(q, params.q_min, params.q_max).astype(np.int8)
    return QuantizedTensor(values=q, params=params)


def dequantize(qt: QuantizedTensor) -> np.ndarray:
    """r = S * (q - Z), elementwise, in float64."""
    q = qt.values.astype(np.float64)
    return qt.params.scale * (q - qt.params.zero_point)


def quantize_model(net: NetworkParams, mask: SparsityMask | None = None,
                   fixed_range: bool = False, q_min: int = Q_MIN_DEFAULT,
                   q_max: int = Q_MAX_DEFAULT) -> QuantizedModel:
    """Quantize every weight matrix per-tensor; keep biases as float32.

    ``fixed_range`` forces the calibration window to (-1, 1) instead of the
    observed min/max. A mask, when given, travels with the model so sparse
    containers can keep the bitmap encoding.
    """
    weights: dict[str, QuantizedTensor] = {}
    biases: dict[str, np.ndarray] = {}
    for name, arr in net.tensors().items():
        if is_weight_name(name):
            f_min, f_max = (-1.0, 1.0) if fixed_range else calibrate(arr)
            params = make_quant_params(f_min, f_max, q_min=q_min, q_max=q_max)
            weights[name] = quantize(arr, params)
        else:
            biases[name] = np.asarray(arr, dtype=np.float32)
    layer_sizes = [net.input_size] + [l.hidden_size for l in net.layers]
    return QuantizedModel(weights=weights, biases=biases, layer_sizes=layer_sizes,
                          dropout_rate=net.dropout_rate,
                          tied_output_gate=net.tied_output_gate, mask=mask)


def dequantized_net(qm: QuantizedModel) -> NetworkParams:
    """Float network with weights recovered via r = S * (q - Z)."""
    tree: dict[str, np.ndarray] = {}
    for name, qt in qm.weights.items():
        tree[name] = dequantize(qt)
    for name, arr in qm.biases.items():
        tree[name] = arr.astype(np.float64)
    template = zeros_params(qm.layer_sizes, dropout_rate=qm.dropout_rate,
                            tied_output_gate=qm.tied_output_gate)
    return template.with_tensors(tree)


def quantized_forward(qm: QuantizedModel, sequence: np.ndarray) -> float:
    """Inference with int8 weights dequantized on use; all activations float."""
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim == 1:
        sequence = sequence[None, :]
    if sequence.ndim != 2:
        raise DimensionMismatch(f"expected (time, features), got {sequence.shape}")
    p, _ = forward_batch(dequantized_net(qm), sequence[None, :, :], mode="eval")
    return float(p[0])


def quantized_scores(qm: QuantizedModel, x: np.ndarray) -> np.ndarray:
    """Eval probabilities for a batch (B, T, D) or feature matrix (B, D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
    p, _ = forward_batch(dequantized_net(qm), x, mode="eval")
    return p
