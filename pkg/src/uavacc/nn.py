"""1D-CNN model definition and the multi-precision forward-pass engine.

Each weighted layer executes under a PrecisionMode:

  FP32  float32 arithmetic throughout.
  BF16  operands narrowed to bf16; products are exact in fp32 (7+7
        mantissa bits); accumulation stays in the fp32 extended-precision
        accumulator; one narrowing at writeback after the bias add.
  INT8  inputs PACT-quantized, weights PwQ-quantized; codes recentred by
        -128 so the MAC bank sees signed 8-bit operands; integer sums are
        checked against the 32-bit accumulator limit; one dequantize per
        output element folds the affine correction terms back in.
  FXP8  two's-complement fixed-point codes, integer MAC, one rescale by
        2^(-2*frac_bits) per output element.

Integer-path dequantize for INT8 (D = weight step, d = act step,
P = w_lo + 128*D, Q = 128*d, N = reduction length):

    y = k * (D*d*S11 + D*Q*Sw + P*d*Sx + N*P*Q) + bias

with S11 = sum of recentred code products and Sw/Sx the recentred code
sums. The weight reconstruction approximates w/k (the scale k normalizes
weights before clipping), so the accumulated value is multiplied back by
k at the scale-and-shift stage before the bias.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    AccumulatorOverflow,
    EmulatorError,
    InvalidChain,
    LengthTooShort,
    ShapeMismatch,
)
from .numerics import (
    INT32_MAX,
    INT32_MIN,
    Fxp8Format,
    PrecisionKind,
    PrecisionMode,
    bf16_round_f32,
    cordic_exp,
)
from .quant import PactParams, WeightQuantConfig, pact_quantize, quantize_weights


class MissingQuantParams(EmulatorError):
    """INT8/FXP8 execution requested without the layer's quantizer config."""


# ---------------------------------------------------------------------------
# Tensors
# ---------------------------------------------------------------------------

class Tensor1D:
    """channels x length activation/weight container (float32, row-major)."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray, channels: Optional[int] = None,
                 length: Optional[int] = None):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim == 1:
            if channels is None:
                channels = 1
            if length is None:
                length = arr.size // channels
            arr = arr.reshape(channels, length)
        elif arr.ndim != 2:
            raise ShapeMismatch(f"Tensor1D wants 1-D or 2-D data, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(f"Tensor1D needs positive dims, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeMismatch("Tensor1D values must be finite")
        self.data = np.ascontiguousarray(arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __repr__(self):
        return f"Tensor1D({self.channels}x{self.length})"


# ---------------------------------------------------------------------------
# Layer specs (tagged union via dataclasses; KIND doubles as container tag)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv1D:
    in_ch: int
    out_ch: int
    kernel: int = 3
    stride: int = 1
    padding: str = "none"  # "none" (valid) or "same"
    KIND = 0

    def __post_init__(self):
        if self.kernel != 3:
            raise ValueError("conv kernel is fixed at 3")
        if self.stride != 1:
            raise ValueError("conv stride is fixed at 1")
        if self.padding not in ("none", "same"):
            raise ValueError(f"padding must be none|same, got {self.padding}")


@dataclass(frozen=True)
class ReLU:
    KIND = 1


@dataclass(frozen=True)
class MaxPool1D:
    window: int = 2
    stride: int = 2
    KIND = 2

    def __post_init__(self):
        if self.window != 2 or self.stride != 2:
            raise ValueError("maxpool is fixed at window 2, stride 2")


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.2
    KIND = 3

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {self.rate}")


@dataclass(frozen=True)
class Flatten:
    KIND = 4


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    KIND = 5


@dataclass(frozen=True)
class Softmax:
    KIND = 6


LayerSpec = Union[Conv1D, ReLU, MaxPool1D, Dropout, Flatten, Dense, Softmax]
LAYER_KINDS = {cls.KIND: cls for cls in
               (Conv1D, ReLU, MaxPool1D, Dropout, Flatten, Dense, Softmax)}


def is_weighted(spec: LayerSpec) -> bool:
    return isinstance(spec, (Conv1D, Dense))


@dataclass
class LayerQuantParams:
    """Per-layer quantizers: PwQ config for weights, PACT for the input."""

    weight_cfg: Optional[WeightQuantConfig] = None
    act: Optional[PactParams] = None


@dataclass
class ModelSpec:
    """Ordered layers, weights, per-layer precision tags and quantizers."""

    input_channels: int
    input_length: int
    layers: List[LayerSpec]
    weights: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    precision_map: Dict[int, PrecisionMode] = field(default_factory=dict)
    quant_params: Dict[int, LayerQuantParams] = field(default_factory=dict)

    def validate(self) -> None:
        shape_chain(self)  # raises InvalidChain on a broken chain
        for i, spec in enumerate(self.layers):
            if is_weighted(spec):
                if i not in self.weights:
                    raise InvalidChain(f"layer {i} has no weights")
                w, b = self.weights[i]
                if isinstance(spec, Conv1D):
                    want = (spec.out_ch, spec.in_ch, spec.kernel)
                else:
                    want = (spec.out_dim, spec.in_dim)
                if w.shape != want:
                    raise InvalidChain(
                        f"layer {i} weight shape {w.shape} != {want}")
                if b.shape != (want[0],):
                    raise InvalidChain(
                        f"layer {i} bias shape {b.shape} != ({want[0]},)")

    def mode_for(self, index: int) -> PrecisionMode:
        return self.precision_map.get(index, PrecisionMode(PrecisionKind.FP32))


def shape_chain(m: ModelSpec) -> List[Tuple[int, int]]:
    """(channels, length) after each layer, by symbolic propagation."""
    c, l = m.input_channels, m.input_length
    if c < 1 or l < 1:
        raise InvalidChain(f"bad input shape {c}x{l}")
    chain = []
    for i, spec in enumerate(m.layers):
        if isinstance(spec, Conv1D):
            if c != spec.in_ch:
                raise InvalidChain(
                    f"layer {i}: conv expects {spec.in_ch} channels, chain has {c}")
            c = spec.out_ch
            if spec.padding == "none":
                l = l - spec.kernel + 1
        elif isinstance(spec, MaxPool1D):
            l = l // spec.window
        elif isinstance(spec, Flatten):
            c, l = 1, c * l
        elif isinstance(spec, Dense):
            if c != 1 or l != spec.in_dim:
                raise InvalidChain(
                    f"layer {i}: dense expects flat 1x{spec.in_dim}, chain has {c}x{l}")
            l = spec.out_dim
        # ReLU / Dropout / Softmax keep the shape
        if c < 1 or l < 1:
            raise InvalidChain(f"layer {i} collapses the shape to {c}x{l}")
        chain.append((c, l))
    return chain


# ---------------------------------------------------------------------------
# Integer accumulation guard
# ---------------------------------------------------------------------------

_SAFE_TERMS = INT32_MAX // (128 * 128)  # reductions this short cannot overflow


def _check_int_sums(sums: np.ndarray, n_terms: int, products=None) -> None:
    """Emulated 32-bit accumulator guard for a vectorized reduction.

    For short reductions no partial sum can leave int32 (each term is a
    signed 8x8 product), so only the final values need checking. Longer
    reductions get an explicit running-prefix check over `products`.
    """
    if sums.size and (sums.max() > INT32_MAX or sums.min() < INT32_MIN):
        raise AccumulatorOverflow(
            f"integer accumulation left int32: [{sums.min()}, {sums.max()}]")
    if n_terms > _SAFE_TERMS and products is not None:
        prefix = np.cumsum(products, axis=-1)
        if prefix.max() > INT32_MAX or prefix.min() < INT32_MIN:
            raise AccumulatorOverflow("intermediate accumulator value left int32")


def _int8_operands(x: np.ndarray, w: np.ndarray, qp: Optional[LayerQuantParams],
                   mode: PrecisionMode):
    qp = qp or mode.int8_params
    if qp is None or qp.weight_cfg is None or qp.act is None:
        raise MissingQuantParams("INT8 mode needs weight_cfg and act params")
    wcfg, act = qp.weight_cfg, qp.act
    cx, _ = pact_quantize(x.astype(np.float64), act)
    cw = quantize_weights(w.astype(np.float64), wcfg)
    half = 1 << (act.n - 1)
    return cx - half, cw - half, wcfg, act, half


def _int8_affine(wcfg: WeightQuantConfig, act: PactParams, half: int):
    d_w = wcfg.step
    d_x = act.alpha / act.levels
    p = wcfg.w_lo + half * d_w
    q = half * d_x
    return d_w, d_x, p, q


def _fxp8_operands(x: np.ndarray, w: np.ndarray, mode: PrecisionMode):
    from .numerics import fxp8_encode_array
    fmt = mode.fxp_format or Fxp8Format()
    cx = fxp8_encode_array(x, fmt).astype(np.int64)
    cw = fxp8_encode_array(w, fmt).astype(np.int64)
    return cx, cw, fmt


# ---------------------------------------------------------------------------
# Layer forward ops
# ---------------------------------------------------------------------------

def _conv_windows(xdata: np.ndarray, kernel: int, padding: str,
                  pad_value=0) -> np.ndarray:
    """Sliding (C, positions, kernel) view; dtype-preserving zero/same pad."""
    if padding == "same":
        lpad = (kernel - 1) // 2
        rpad = kernel - 1 - lpad
        xdata = np.pad(xdata, ((0, 0), (lpad, rpad)), constant_values=pad_value)
    if xdata.shape[1] < kernel:
        raise ShapeMismatch(
            f"input length {xdata.shape[1]} shorter than kernel {kernel}")
    return sliding_window_view(xdata, kernel, axis=1)  # (C, P, k)


def conv1d_forward(x: Tensor1D, w: np.ndarray, b: np.ndarray,
                   mode: PrecisionMode = PrecisionMode(PrecisionKind.FP32),
                   quant: Optional[LayerQuantParams] = None,
                   padding: str = "none") -> Tensor1D:
    """Cross-correlation along the length axis under the given mode."""
    w = np.asarray(w)
    b = np.asarray(b)
    out_ch, in_ch, kernel = w.shape
    if x.channels != in_ch:
        raise ShapeMismatch(f"conv expects {in_ch} input channels, got {x.channels}")
    if b.shape != (out_ch,):
        raise ShapeMismatch(f"bias shape {b.shape} != ({out_ch},)")

    kind = mode.kind
    if kind == PrecisionKind.FP32:
        win = _conv_windows(x.data, kernel, padding)
        acc = np.einsum("oct,cpt->op", w.astype(np.float32), win.astype(np.float32), optimize=True)
        out = acc + b.astype(np.float32)[:, None]
        return Tensor1D(out)

    if kind == PrecisionKind.BF16:
        xb = bf16_round_f32(x.data)
        wb = bf16_round_f32(w.astype(np.float32))
        bb = bf16_round_f32(b.astype(np.float32))
        win = _conv_windows(xb, kernel, padding)
        acc = np.einsum("oct,cpt->op", wb, win, optimize=True)  # fp32 extended accumulator
        return Tensor1D(bf16_round_f32(acc + bb[:, None]))

    if kind == PrecisionKind.INT8:
        ax, aw, wcfg, act, half = _int8_operands(x.data, w, quant, mode)
        win = _conv_windows(ax, kernel, padding, pad_value=-half)  # pad = code 0
        s11 = np.einsum("oct,cpt->op", aw, win)
        sw = aw.sum(axis=(1, 2))
        sx = win.sum(axis=(0, 2))
        n_terms = in_ch * kernel
        _check_int_sums(s11, n_terms,
                        products=(aw[:, None, :, :] * win.transpose(1, 0, 2)
                                  ).reshape(out_ch, win.shape[1], -1)
                        if n_terms > _SAFE_TERMS else None)
        d_w, d_x, p, q = _int8_affine(wcfg, act, half)
        y = wcfg.k * (d_w * d_x * s11 + d_w * q * sw[:, None]
                      + p * d_x * sx[None, :] + n_terms * p * q) \
            + b.astype(np.float64)[:, None]
        return Tensor1D(y.astype(np.float32))

    if kind == PrecisionKind.FXP8:
        ax, aw, fmt = _fxp8_operands(x.data, w, mode)
        win = _conv_windows(ax, kernel, padding, pad_value=0)
        s = np.einsum("oct,cpt->op", aw, win)
        n_terms = in_ch * kernel
        _check_int_sums(s, n_terms,
                        products=(aw[:, None, :, :] * win.transpose(1, 0, 2)
                                  ).reshape(out_ch, win.shape[1], -1)
                        if n_terms > _SAFE_TERMS else None)
        y = s * (2.0 ** (-2 * fmt.frac_bits)) + b.astype(np.float64)[:, None]
        return Tensor1D(y.astype(np.float32))

    raise ValueError(f"unhandled precision kind {kind}")


def dense_forward(x: Tensor1D, w: np.ndarray, b: np.ndarray,
                  mode: PrecisionMode = PrecisionMode(PrecisionKind.FP32),
                  quant: Optional[LayerQuantParams] = None) -> Tensor1D:
    """y_j = sum_i w[j,i] * x_i + b_j under the mode's arithmetic."""
    w = np.asarray(w)
    b = np.asarray(b)
    out_dim, in_dim = w.shape
    if x.channels != 1 or x.length != in_dim:
        raise ShapeMismatch(
            f"dense expects flat 1x{in_dim} input, got {x.channels}x{x.length}")
    xv = x.flat

    kind = mode.kind
    if kind == PrecisionKind.FP32:
        # strictly sequential f32 accumulation (like the serialized MAC
        # datapath); also makes zero-term removal by pruning bit-exact
        terms = w.astype(np.float32) * xv[None, :]
        acc = np.cumsum(terms, axis=1, dtype=np.float32)[:, -1]
        return Tensor1D(acc + b.astype(np.float32), channels=1)

    if kind == PrecisionKind.BF16:
        xb = bf16_round_f32(xv)
        wb = bf16_round_f32(w.astype(np.float32))
        bb = bf16_round_f32(b.astype(np.float32))
        terms = wb * xb[None, :]  # bf16 x bf16 products are exact in fp32
        acc = np.cumsum(terms, axis=1, dtype=np.float32)[:, -1]
        return Tensor1D(bf16_round_f32(acc + bb), channels=1)

    if kind == PrecisionKind.INT8:
        ax, aw, wcfg, act, half = _int8_operands(xv, w, quant, mode)
        s11 = aw @ ax
        sw = aw.sum(axis=1)
        sx = int(ax.sum())
        _check_int_sums(s11, in_dim,
                        products=aw * ax[None, :] if in_dim > _SAFE_TERMS else None)
        d_w, d_x, p, q = _int8_affine(wcfg, act, half)
        y = wcfg.k * (d_w * d_x * s11 + d_w * q * sw + p * d_x * sx
                      + in_dim * p * q) + b.astype(np.float64)
        return Tensor1D(y.astype(np.float32), channels=1)

    if kind == PrecisionKind.FXP8:
        ax, aw, fmt = _fxp8_operands(xv, w, mode)
        s = aw @ ax
        _check_int_sums(s, in_dim,
                        products=aw * ax[None, :] if in_dim > _SAFE_TERMS else None)
        y = s * (2.0 ** (-2 * fmt.frac_bits)) + b.astype(np.float64)
        return Tensor1D(y.astype(np.float32), channels=1)

    raise ValueError(f"unhandled precision kind {kind}")


def relu_forward(x: Tensor1D) -> Tensor1D:
    return Tensor1D(np.maximum(x.data, 0.0))


def maxpool_forward(x: Tensor1D, window: int = 2, stride: int = 2) -> Tensor1D:
    """Non-overlapping window-2 max per channel; odd trailing element dropped."""
    if x.length < window:
        raise LengthTooShort(f"maxpool needs length >= {window}, got {x.length}")
    out_len = x.length // window
    trimmed = x.data[:, :out_len * window]
    return Tensor1D(trimmed.reshape(x.channels, out_len, window).max(axis=2))


def dropout_inference(x: Tensor1D, rate: float = 0.2) -> Tensor1D:
    """Inference-time dropout is the identity (inverted dropout at training)."""
    return x


def flatten(x: Tensor1D) -> Tensor1D:
    """Channel-major linearization to shape 1 x (channels * length)."""
    return Tensor1D(x.data.reshape(1, -1))


def softmax_forward(logits, hw_faithful: bool = False, iters: int = 16
                    ) -> np.ndarray:
    """Max-subtracted exponentials normalized to sum 1.

    hw_faithful computes exp(z) as cosh(z) + sinh(z) through the CORDIC
    unit (with power-of-two argument splitting).
    """
    z = logits.flat if isinstance(logits, Tensor1D) else np.asarray(logits)
    z = z.astype(np.float64).reshape(-1)
    if z.size == 0:
        raise ShapeMismatch("softmax of an empty vector")
    shifted = z - z.max()
    if hw_faithful:
        exps = np.array([cordic_exp(float(v), iters) for v in shifted])
    else:
        exps = np.exp(shifted)
    return exps / exps.sum()


# ---------------------------------------------------------------------------
# Whole-model forward
# ---------------------------------------------------------------------------

def model_forward(m: ModelSpec, x: Tensor1D,
                  mode_override: Optional[PrecisionMode] = None,
                  hw_softmax: bool = False,
                  keep_snapshots: bool = True
                  ) -> Tuple[np.ndarray, List[Tensor1D]]:
    """Apply layers in order, each weighted layer under its assigned mode.

    Returns (probabilities, per-layer activation snapshots). Errors from a
    layer are re-raised with the layer index prepended.
    """
    if x.channels != m.input_channels or x.length != m.input_length:
        raise ShapeMismatch(
            f"model expects {m.input_channels}x{m.input_length}, "
            f"got {x.channels}x{x.length}")
    cur = x
    probs: Optional[np.ndarray] = None
    snapshots: List[Tensor1D] = []
    for i, spec in enumerate(m.layers):
        try:
            if isinstance(spec, Conv1D):
                mode = mode_override or m.mode_for(i)
                w, b = m.weights[i]
                cur = conv1d_forward(cur, w, b, mode, m.quant_params.get(i),
                                     padding=spec.padding)
            elif isinstance(spec, Dense):
                mode = mode_override or m.mode_for(i)
                w, b = m.weights[i]
                cur = dense_forward(cur, w, b, mode, m.quant_params.get(i))
            elif isinstance(spec, ReLU):
                cur = relu_forward(cur)
            elif isinstance(spec, MaxPool1D):
                cur = maxpool_forward(cur, spec.window, spec.stride)
            elif isinstance(spec, Dropout):
                cur = dropout_inference(cur, spec.rate)
            elif isinstance(spec, Flatten):
                cur = flatten(cur)
            elif isinstance(spec, Softmax):
                probs = softmax_forward(cur, hw_faithful=hw_softmax)
                cur = Tensor1D(probs.astype(np.float32), channels=1)
            else:
                raise ValueError(f"unhandled layer spec {spec}")
        except EmulatorError as e:
            raise type(e)(f"layer {i} ({type(spec).__name__}): {e}") from e
        if keep_snapshots:
            snapshots.append(cur)
    if probs is None:
        probs = cur.flat.astype(np.float64)
    return probs, snapshots


def model_forward_batch(m: ModelSpec, inputs: List[Tensor1D],
                        mode_override: Optional[PrecisionMode] = None,
                        workers: int = 0) -> List[np.ndarray]:
    """Per-sample forwards, results merged by input index (never by
    completion order); purity of the layer ops makes threading safe."""
    def run(x):
        probs, _ = model_forward(m, x, mode_override, keep_snapshots=False)
        return probs

    if workers and workers > 1 and len(inputs) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, inputs))
    return [run(x) for x in inputs]


# ---------------------------------------------------------------------------
# Canonical architecture (reconstruction; treated as configuration)
# ---------------------------------------------------------------------------

CANONICAL_INPUT_LENGTH = 1038
CANONICAL_CHANNELS = (64, 128, 274)
CANONICAL_HIDDEN = 64
CANONICAL_CLASSES = 2


def conv_block(in_ch: int, out_ch: int) -> List[LayerSpec]:
    return [Conv1D(in_ch, out_ch), ReLU(), MaxPool1D(), Dropout(0.2)]


def build_model(input_length: int, channels: Tuple[int, ...], hidden: int,
                classes: int, seed: int = 0x5EED, alpha: float = 2.0
                ) -> ModelSpec:
    """Conv-stack + dense-head model with seeded He-scaled weights and
    default quantizer configs (alpha is a placeholder until calibration)."""
    layers: List[LayerSpec] = []
    in_ch = 1
    for out_ch in channels:
        layers.extend(conv_block(in_ch, out_ch))
        in_ch = out_ch
    layers.append(Flatten())
    m = ModelSpec(1, input_length, layers)
    flat = shape_chain(m)[-1][1]
    layers.append(Dense(flat, hidden))
    layers.append(ReLU())
    layers.append(Dense(hidden, classes))
    layers.append(Softmax())

    rng = np.random.default_rng(seed)
    m = ModelSpec(1, input_length, layers)
    from .quant import as_f32_params, paper_form_config
    alpha = float(np.float32(alpha))
    for i, spec in enumerate(layers):
        if isinstance(spec, Conv1D):
            fan_in = spec.in_ch * spec.kernel
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                           (spec.out_ch, spec.in_ch, spec.kernel)).astype(np.float32)
            b = np.zeros(spec.out_ch, dtype=np.float32)
        elif isinstance(spec, Dense):
            w = rng.normal(0.0, np.sqrt(2.0 / spec.in_dim),
                           (spec.out_dim, spec.in_dim)).astype(np.float32)
            b = np.zeros(spec.out_dim, dtype=np.float32)
        else:
            continue
        m.weights[i] = (w, b)
        m.quant_params[i] = LayerQuantParams(
            weight_cfg=as_f32_params(paper_form_config(w, 8)),
            act=PactParams(alpha=alpha, n=8))
        m.precision_map[i] = PrecisionMode(PrecisionKind.FP32)
    m.validate()
    return m


def canonical_model(seed: int = 0x5EED) -> ModelSpec:
    """The 1x1038 / 64-128-274 / 35072-64-2 reconstruction."""
    return build_model(CANONICAL_INPUT_LENGTH, CANONICAL_CHANNELS,
                       CANONICAL_HIDDEN, CANONICAL_CLASSES, seed=seed)
