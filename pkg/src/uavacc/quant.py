"""Weight quantization (scale/clip/round/reconstruct), PACT activation
clipping, layer sensitivity scoring, and the per-layer precision policy.

Quantized codes are unsigned n-bit integers in [0, 2^n - 1]; the weight
path normalizes by a scale k before clipping to [w_lo, w_hi]. Rounding is
round-half-to-even everywhere (np.rint / Python round).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    CodeOutOfRange,
    EmptyTensor,
    InvalidAlpha,
    InvalidClipRange,
    InvalidScale,
    PolicyBudgetExceedsLayerCount,
)
from .numerics import BF16, FXP8, INT8, Fxp8Format, PrecisionKind, PrecisionMode

ALLOWED_BITS = (4, 8, 16)


@dataclass(frozen=True)
class WeightQuantConfig:
    """Per-layer weight quantizer: bit width n, scale k, clip [w_lo, w_hi]."""

    n: int
    w_lo: float
    w_hi: float
    k: float

    def __post_init__(self):
        if self.n not in ALLOWED_BITS:
            raise ValueError(f"bit width must be one of {ALLOWED_BITS}, got {self.n}")
        if not self.w_lo < self.w_hi:
            raise InvalidClipRange(f"need w_lo < w_hi, got [{self.w_lo}, {self.w_hi}]")

    @property
    def levels(self) -> int:
        return (1 << self.n) - 1

    @property
    def step(self) -> float:
        return (self.w_hi - self.w_lo) / self.levels


@dataclass(frozen=True)
class PactParams:
    """Activation quantizer: clip bound alpha (supplied, not learned) and n."""

    alpha: float
    n: int = 8

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidAlpha(f"alpha must be a positive finite float, got {self.alpha}")
        if self.n not in ALLOWED_BITS:
            raise ValueError(f"bit width must be one of {ALLOWED_BITS}, got {self.n}")

    @property
    def levels(self) -> int:
        return (1 << self.n) - 1


def weight_scale(w: np.ndarray, n: int) -> float:
    """Scale factor k = mean(|w|) * (2^n - 1) / 2^(n-1)."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise EmptyTensor("weight_scale of an empty tensor")
    return float(np.mean(np.abs(w)) * ((1 << n) - 1) / (1 << (n - 1)))


def default_clip_range(w: np.ndarray, k: float, percentile: float = 99.9
                       ) -> Tuple[float, float]:
    """Symmetric clip bounds from the 99.9th percentile of |w / k|.

    Fallback when no learned bounds are supplied; degenerate all-zero
    weights get a unit range so the config stays constructible.
    """
    if k <= 0:
        raise InvalidScale(f"scale must be positive, got {k}")
    hi = float(np.percentile(np.abs(np.asarray(w, dtype=np.float64) / k), percentile))
    if hi <= 0:
        hi = 1.0
    return -hi, hi


def quantize_weights(w: np.ndarray, cfg: WeightQuantConfig) -> np.ndarray:
    """Integer codes round((clip(w/k, w_lo, w_hi) - w_lo) * levels / range)."""
    if cfg.k <= 0 or not math.isfinite(cfg.k):
        raise InvalidScale(f"scale must be positive, got {cfg.k}")
    w = np.asarray(w, dtype=np.float64)
    clipped = np.clip(w / cfg.k, cfg.w_lo, cfg.w_hi)
    codes = np.rint((clipped - cfg.w_lo) * (cfg.levels / (cfg.w_hi - cfg.w_lo)))
    return codes.astype(np.int64)


def dequantize_weights(codes: np.ndarray, cfg: WeightQuantConfig) -> np.ndarray:
    """Reconstruction codes * (w_hi - w_lo) / levels + w_lo."""
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or codes.max() > cfg.levels):
        raise CodeOutOfRange(
            f"codes outside [0, {cfg.levels}]: "
            f"min={codes.min()}, max={codes.max()}")
    return codes.astype(np.float64) * cfg.step + cfg.w_lo


def reconstruct_weights(w: np.ndarray, cfg: WeightQuantConfig) -> np.ndarray:
    """Full quantize -> dequantize pass (approximates clip(w/k, lo, hi))."""
    return dequantize_weights(quantize_weights(w, cfg), cfg)


def pact_clip(x, alpha: float):
    """Clip to [0, alpha].

    Realizes the closed form 0.5 * (|x| - |x - alpha| + alpha); computed
    piecewise as min(max(x, 0), alpha) so the identity with the piecewise
    definition is float-exact (the algebraic form picks up rounding for
    x < -alpha). Accepts scalars or arrays.
    """
    if not (math.isfinite(alpha) and alpha > 0):
        raise InvalidAlpha(f"alpha must be a positive finite float, got {alpha}")
    if isinstance(x, np.ndarray):
        return np.minimum(np.maximum(x, 0.0), alpha)
    return min(max(x, 0.0), alpha)


def pact_quantize(x, p: PactParams):
    """(code, value): code = round(clip * levels / alpha), value = code * alpha / levels."""
    y = pact_clip(x, p.alpha)
    if isinstance(y, np.ndarray):
        codes = np.rint(y * (p.levels / p.alpha)).astype(np.int64)
        return codes, codes.astype(np.float64) * (p.alpha / p.levels)
    code = int(np.rint(y * (p.levels / p.alpha)))
    return code, code * (p.alpha / p.levels)


# ---------------------------------------------------------------------------
# Layer sensitivity and precision assignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityEntry:
    layer_id: int
    s_sc16: float
    s_sc8: float
    s_l: float
    grad_norm: float
    n_l: int

    def __post_init__(self):
        assert self.s_l == max(self.s_sc16, self.s_sc8)
        assert self.n_l > 0


@dataclass
class SensitivityReport:
    entries: List[SensitivityEntry] = field(default_factory=list)

    def layer_ids(self) -> List[int]:
        return [e.layer_id for e in self.entries]

    def scores(self) -> Dict[int, float]:
        return {e.layer_id: e.s_l for e in self.entries}


def layer_sensitivity(w: np.ndarray, grad_norm: float,
                      base_cfg: WeightQuantConfig,
                      cfg_16: WeightQuantConfig,
                      cfg_8: WeightQuantConfig,
                      layer_id: int = 0) -> SensitivityEntry:
    """Sensitivity of one layer's weights to the scaled 16/8-bit quantizers.

    s_{sc,k} = (||Q_base(w) - w||_2 - ||Q_{sc,k}(w) - w||_2) * grad_norm / n_l
    and the layer score is the max over k in {16, 8}. The norm is L2
    (unsubscripted in the source formulation); gradient norms are inputs.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise EmptyTensor("layer_sensitivity of an empty tensor")
    if grad_norm < 0:
        raise ValueError(f"grad_norm must be >= 0, got {grad_norm}")
    n_l = w.size
    base_err = float(np.linalg.norm(reconstruct_weights(w, base_cfg) - w))

    def score(cfg):
        err = float(np.linalg.norm(reconstruct_weights(w, cfg) - w))
        return (base_err - err) * grad_norm / n_l

    s16, s8 = score(cfg_16), score(cfg_8)
    return SensitivityEntry(layer_id, s16, s8, max(s16, s8), grad_norm, n_l)


def paper_form_config(w: np.ndarray, n: int,
                      clip: Optional[Tuple[float, float]] = None
                      ) -> WeightQuantConfig:
    """Config with the Eq.-style scale at width n and percentile clip defaults."""
    k = weight_scale(w, n)
    if k <= 0:
        raise InvalidScale("all-zero weights give a zero scale")
    w_lo, w_hi = clip if clip is not None else default_clip_range(w, k)
    return WeightQuantConfig(n=n, w_lo=w_lo, w_hi=w_hi, k=k)


def as_f32_params(cfg: WeightQuantConfig) -> WeightQuantConfig:
    """Round the scale/clip fields through float32.

    The model container stores them as f32; configs created this way
    survive save/load bit-exactly.
    """
    f = lambda v: float(np.float32(v))
    return WeightQuantConfig(n=cfg.n, w_lo=f(cfg.w_lo), w_hi=f(cfg.w_hi), k=f(cfg.k))


@dataclass(frozen=True)
class PrecisionPolicy:
    """Either a threshold tau or a high-precision budget (exactly one).

    Layers scoring above tau (or the `budget` largest, ties to the lower
    layer index) run in `high`; the rest run in `low`.
    """

    tau: Optional[float] = None
    budget: Optional[int] = None
    high: PrecisionMode = BF16
    low: PrecisionMode = INT8

    def __post_init__(self):
        if (self.tau is None) == (self.budget is None):
            raise ValueError("specify exactly one of tau / budget")
        if self.budget is not None and self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")


def assign_precisions(report: SensitivityReport, policy: PrecisionPolicy
                      ) -> Dict[int, PrecisionMode]:
    """Deterministic layer -> mode map from sensitivity scores."""
    entries = report.entries
    if policy.budget is not None:
        if policy.budget > len(entries):
            raise PolicyBudgetExceedsLayerCount(
                f"budget {policy.budget} exceeds {len(entries)} layers")
        ranked = sorted(entries, key=lambda e: (-e.s_l, e.layer_id))
        high_ids = {e.layer_id for e in ranked[:policy.budget]}
    else:
        high_ids = {e.layer_id for e in entries if e.s_l > policy.tau}
    return {e.layer_id: (policy.high if e.layer_id in high_ids else policy.low)
            for e in entries}


# ---------------------------------------------------------------------------
# Calibration file (text): `layer_id grad_norm`, '#' comments allowed
# ---------------------------------------------------------------------------

def read_calibration(path) -> Dict[int, float]:
    norms: Dict[int, float] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'layer_id grad_norm'")
            norms[int(parts[0])] = float(parts[1])
    return norms


def write_calibration(path, norms: Dict[int, float]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# layer_id grad_norm\n")
        for lid in sorted(norms):
            f.write(f"{lid} {norms[lid]!r}\n")


def grad_norms_fd(loss_fn, model, step: float = 1e-3) -> Dict[int, float]:
    """Central-difference gradient norms per weighted layer.

    Desk-scale oracle only (two forward passes per weight element):
    loss_fn takes a ModelSpec and returns a scalar loss over the caller's
    calibration samples (keep them <= 32).
    """
    norms: Dict[int, float] = {}
    for lid in sorted(model.weights):
        w, b = model.weights[lid]
        g = np.zeros_like(w, dtype=np.float64)
        flat = w.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn(model)
            flat[i] = orig - step
            lo = loss_fn(model)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        norms[lid] = float(np.linalg.norm(g))
    return norms
