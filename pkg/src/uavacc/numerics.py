"""Bit-exact scalar arithmetic for the four precision modes (FP32, BF16,
INT8, FXP8) plus CORDIC approximations of the activation unit.

Scalar ops are pure Python (struct-based bit manipulation, arbitrary-
precision ints) so they stay independent of the vectorized numpy helpers
used by the layer kernels. Everything here is stateless except the
non-finite-encode counter, which only counts and never changes results.
"""

import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Tuple

import numpy as np

from .errors import AccumulatorOverflow, IterationCountTooSmall

INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1

_EXP_MASK = 0x7F800000
_QNAN_BIT = 0x0040  # quiet bit of the bf16 mantissa


def _f32_bits(x: float) -> int:
    """Bit pattern of x after rounding to IEEE binary32."""
    return struct.unpack("<I", struct.pack("<f", x))[0]


def _bits_f32(bits: int) -> float:
    return struct.unpack("<f", struct.pack("<I", bits & 0xFFFFFFFF))[0]


# ---------------------------------------------------------------------------
# BF16
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bf16Value:
    """16-bit brain float pattern: 1 sign, 8 exponent, 7 mantissa bits."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits <= 0xFFFF:
            raise ValueError(f"bf16 pattern out of range: {self.bits:#x}")

    def to_float(self) -> float:
        return _bits_f32(self.bits << 16)

    def is_nan(self) -> bool:
        return (self.bits & 0x7F80) == 0x7F80 and (self.bits & 0x007F) != 0


def fp32_to_bf16(x: float) -> Bf16Value:
    """Narrow a binary32 value to bf16 with round-to-nearest-even.

    Total function: +-inf map to +-inf, NaN maps to a quiet NaN pattern,
    rounding overflow saturates to +-inf (the sign is preserved throughout).
    """
    bits = _f32_bits(x)
    if (bits & _EXP_MASK) == _EXP_MASK:
        hi = bits >> 16
        if bits & 0x007FFFFF:  # NaN: force a quiet payload
            hi |= _QNAN_BIT
        return Bf16Value(hi & 0xFFFF)
    lsb = (bits >> 16) & 1
    bits = bits + 0x7FFF + lsb  # carries into the exponent handle overflow
    return Bf16Value((bits >> 16) & 0xFFFF)


def bf16_to_fp32(b: Bf16Value) -> float:
    """Exact widening: append 16 zero mantissa bits."""
    return _bits_f32(b.bits << 16)


def bf16_round_f32(a: np.ndarray) -> np.ndarray:
    """Vectorized counterpart of fp32_to_bf16 for finite float32 arrays.

    Returns float32 values on the bf16 grid (low 16 mantissa bits zero).
    Inf passes through; NaN propagates as-is without payload quieting
    (layer tensors are finite by contract, see Tensor1D).
    """
    u = np.asarray(a, dtype=np.float32).view(np.uint32)
    special = (u & np.uint32(_EXP_MASK)) == np.uint32(_EXP_MASK)
    lsb = (u >> np.uint32(16)) & np.uint32(1)
    rounded = (u + np.uint32(0x7FFF) + lsb) & np.uint32(0xFFFF0000)
    out = np.where(special, u, rounded)
    return out.view(np.float32)


def bf16_bits_f32(a: np.ndarray) -> np.ndarray:
    """bf16 bit patterns (uint16) of a float32 array, RNE narrowing."""
    r = bf16_round_f32(a).view(np.uint32)
    return (r >> np.uint32(16)).astype(np.uint16)


# ---------------------------------------------------------------------------
# FXP8 (two's complement, configurable binary point)
# ---------------------------------------------------------------------------

_nonfinite_encodes = 0


def nonfinite_encode_count() -> int:
    """Number of NaN/inf values encoded to the 0 sentinel so far."""
    return _nonfinite_encodes


def reset_nonfinite_encode_count() -> None:
    global _nonfinite_encodes
    _nonfinite_encodes = 0


def _count_nonfinite(n: int) -> None:
    global _nonfinite_encodes
    _nonfinite_encodes += n


@dataclass(frozen=True)
class Fxp8Format:
    """8-bit two's-complement fixed point with frac_bits fractional bits.

    Representable range is [-2^(7-frac_bits), 2^(7-frac_bits) - 2^-frac_bits]
    in steps of 2^-frac_bits. Default format is Q1.6.
    """

    frac_bits: int = 6

    def __post_init__(self):
        if not 0 <= self.frac_bits <= 7:
            raise ValueError(f"frac_bits must be in [0,7], got {self.frac_bits}")

    @property
    def step(self) -> float:
        return 2.0 ** (-self.frac_bits)

    @property
    def min_value(self) -> float:
        return -(2.0 ** (7 - self.frac_bits))

    @property
    def max_value(self) -> float:
        return 2.0 ** (7 - self.frac_bits) - self.step


def fxp8_encode(x: float, fmt: Fxp8Format) -> int:
    """Quantize to an 8-bit signed code: round-half-even then saturate.

    NaN/inf encode to 0 (fixed-point hardware has no non-finite values);
    each occurrence bumps the module's non-finite counter.
    """
    if not math.isfinite(x):
        _count_nonfinite(1)
        return 0
    scaled = x * (1 << fmt.frac_bits)  # exact: power-of-two scaling
    code = round(scaled)  # Python round() is round-half-to-even
    return max(-128, min(127, code))


def fxp8_decode(code: int, fmt: Fxp8Format) -> float:
    """Exact reconstruction code * 2^-frac_bits."""
    if not -128 <= code <= 127:
        raise ValueError(f"fxp8 code out of range: {code}")
    return code * fmt.step


def fxp8_encode_array(a: np.ndarray, fmt: Fxp8Format) -> np.ndarray:
    """Vectorized fxp8_encode; returns int8. Counts non-finite inputs."""
    a = np.asarray(a, dtype=np.float64)
    bad = ~np.isfinite(a)
    nbad = int(bad.sum())
    if nbad:
        _count_nonfinite(nbad)
        a = np.where(bad, 0.0, a)
    scaled = np.rint(a * (1 << fmt.frac_bits))  # rint is round-half-even
    return np.clip(scaled, -128, 127).astype(np.int8)


def fxp8_decode_array(codes: np.ndarray, fmt: Fxp8Format) -> np.ndarray:
    return codes.astype(np.float64) * fmt.step


# ---------------------------------------------------------------------------
# Accumulators and the integer MAC
# ---------------------------------------------------------------------------

def check_int32(value: int) -> int:
    """Guard shared by the integer MAC and the layer kernels."""
    if value < INT32_MIN or value > INT32_MAX:
        raise AccumulatorOverflow(
            f"32-bit accumulator overflow: {value} outside "
            f"[{INT32_MIN}, {INT32_MAX}]")
    return value


@dataclass
class AccumValue:
    """Extended-precision accumulator: int32 for INT8/FXP8, float32 for
    BF16/FP32. Integer overflow raises instead of wrapping."""

    kind: str  # "int32" or "float32"
    value: float = 0.0

    @classmethod
    def int32(cls, value: int = 0) -> "AccumValue":
        return cls("int32", check_int32(int(value)))

    @classmethod
    def float32(cls, value: float = 0.0) -> "AccumValue":
        return cls("float32", np.float32(value))

    def add_product(self, a, b) -> "AccumValue":
        if self.kind == "int32":
            self.value = mac_int(int(self.value), int(a), int(b))
        else:
            self.value = np.float32(self.value + np.float32(a) * np.float32(b))
        return self


def mac_int(acc: int, a: int, b: int) -> int:
    """acc + a*b with signed 8-bit operands and a 32-bit accumulator.

    Exact integer arithmetic; overflow of the 32-bit accumulator raises
    AccumulatorOverflow to signal the emulated hardware limit.
    """
    if not -128 <= a <= 127 or not -128 <= b <= 127:
        raise ValueError(f"MAC operands must be signed 8-bit: a={a}, b={b}")
    check_int32(acc)
    return check_int32(acc + a * b)


# ---------------------------------------------------------------------------
# Precision modes
# ---------------------------------------------------------------------------

class PrecisionKind(IntEnum):
    """Numeric format tags; values double as the container file tags."""

    FP32 = 0
    BF16 = 1
    INT8 = 2
    FXP8 = 3


@dataclass(frozen=True)
class PrecisionMode:
    """One active numeric format plus its format-specific parameters.

    fxp_format must be present iff kind is FXP8. INT8 quantization
    parameters live with the layer (ModelSpec.quant_params); int8_params
    may carry a reference to them for self-contained use.
    """

    kind: PrecisionKind
    fxp_format: Optional[Fxp8Format] = None
    int8_params: Optional[object] = None  # quant.LayerQuantParams

    def __post_init__(self):
        if self.kind == PrecisionKind.FXP8:
            if self.fxp_format is None:
                object.__setattr__(self, "fxp_format", Fxp8Format())
        elif self.fxp_format is not None:
            raise ValueError("fxp_format only valid for FXP8 mode")
        if self.kind != PrecisionKind.INT8 and self.int8_params is not None:
            raise ValueError("int8_params only valid for INT8 mode")


FP32 = PrecisionMode(PrecisionKind.FP32)
BF16 = PrecisionMode(PrecisionKind.BF16)
INT8 = PrecisionMode(PrecisionKind.INT8)
FXP8 = PrecisionMode(PrecisionKind.FXP8)


# ---------------------------------------------------------------------------
# CORDIC (hyperbolic, rotation mode)
# ---------------------------------------------------------------------------

_REPEAT_START = 4  # repeated indices 4, 13, 40, ... (next = 3k + 1)
_ATANH_POW2 = [0.0] + [math.atanh(2.0 ** -k) for k in range(1, 64)]


def _shift_sequence(iters: int) -> list:
    """Shift exponents for the micro-rotation schedule 1..iters, with the
    standard repeats at k = 4, 13, 40, ... required for convergence.

    `iters` selects the smallest shift (2^-iters); the repeated indices
    are inserted on top, so the residual angle bound atanh(2^-iters)
    halves with every increment (what makes accuracy monotone in iters).
    """
    seq = []
    rep = _REPEAT_START
    for k in range(1, iters + 1):
        seq.append(k)
        if k == rep:
            seq.append(k)
            rep = 3 * rep + 1
    return seq


def _cordic_core(z: float, seq: list) -> Tuple[float, float]:
    """Micro-rotations driving z to 0; returns (cosh z, sinh z)."""
    shrink = 1.0  # each raw step scales the vector by sqrt(1 - 2^-2k)
    for k in seq:
        shrink *= math.sqrt(1.0 - 2.0 ** (-2 * k))
    x, y = 1.0 / shrink, 0.0  # pre-compensate the cumulative scale
    for k in seq:
        t = 2.0 ** -k
        d = 1.0 if z >= 0.0 else -1.0
        x, y = x + d * y * t, y + d * x * t
        z -= d * _ATANH_POW2[k]
    return x, y


def _convergence_bound(seq: list) -> float:
    return sum(_ATANH_POW2[k] for k in seq)


def cordic_hyperbolic(z: float, iters: int = 16) -> Tuple[float, float]:
    """(cosh z, sinh z) via iterated hyperbolic micro-rotations.

    Arguments beyond the convergence bound (~1.118) are halved internally
    and the results squared back up with the double-angle identities, so
    any finite z is accepted. iters < 4 raises IterationCountTooSmall
    (the first repeated index is 4).
    """
    if iters < 4:
        raise IterationCountTooSmall(f"need >= 4 iterations, got {iters}")
    if math.isnan(z):
        return math.nan, math.nan
    if math.isinf(z):
        return math.inf, z
    seq = _shift_sequence(iters)
    bound = _convergence_bound(seq)
    halvings = 0
    while abs(z) > bound:
        z *= 0.5
        halvings += 1
    c, s = _cordic_core(z, seq)
    for _ in range(halvings):
        c, s = c * c + s * s, 2.0 * s * c  # cosh/sinh double-angle
        if math.isinf(c):
            break
    return c, s


def cordic_tanh(z: float, iters: int = 16) -> float:
    """tanh via sinh/cosh; |z| beyond convergence uses recursive argument
    halving with tanh(2a) = 2t / (1 + t^2). Clamped to [-1, 1].

    Odd symmetry is enforced (computed on |z|, sign applied after), so
    tanh(0) is exactly 0 and tanh(-z) == -tanh(z) bit-for-bit.
    """
    if iters < 4:
        raise IterationCountTooSmall(f"need >= 4 iterations, got {iters}")
    if math.isnan(z):
        return math.nan
    if z == 0.0:
        return 0.0
    if math.isinf(z):
        return math.copysign(1.0, z)
    sign, z = math.copysign(1.0, z), abs(z)
    seq = _shift_sequence(iters)
    bound = _convergence_bound(seq)
    halvings = 0
    while z > bound:
        z *= 0.5
        halvings += 1
    c, s = _cordic_core(z, seq)
    t = s / c
    for _ in range(halvings):
        t = 2.0 * t / (1.0 + t * t)
    return sign * max(0.0, min(1.0, t))


def cordic_sigmoid(z: float, iters: int = 16) -> float:
    """sigmoid(z) = 0.5 * (1 + tanh(z/2)), clamped to [0, 1]."""
    v = 0.5 * (1.0 + cordic_tanh(0.5 * z, iters))
    return max(0.0, min(1.0, v))


_LN2 = math.log(2.0)


def cordic_exp(z: float, iters: int = 16) -> float:
    """exp(z) = 2^m * (cosh r + sinh r) with z split as m*ln2 + r.

    The residual r lies in [-ln2/2, ln2/2], well inside the CORDIC
    convergence bound; the power of two is applied exactly via ldexp.
    """
    if math.isnan(z):
        return math.nan
    if math.isinf(z):
        return math.inf if z > 0 else 0.0
    m = int(round(z / _LN2))
    if m > 1100:
        return math.inf
    if m < -1200:
        return 0.0
    r = z - m * _LN2
    c, s = cordic_hyperbolic(r, iters)
    return math.ldexp(c + s, m)
