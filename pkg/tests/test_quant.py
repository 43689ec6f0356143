"""Tests for weight/activation quantization and the precision policy.

The scalar oracle used throughout is a straight-line reimplementation of
the quantizer formulas with Python floats and Fraction-checked rounding,
kept deliberately separate from the numpy implementation.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavacc import quant
from uavacc.errors import (
    CodeOutOfRange,
    EmptyTensor,
    InvalidAlpha,
    InvalidClipRange,
    InvalidScale,
    PolicyBudgetExceedsLayerCount,
)
from uavacc.numerics import PrecisionKind


def round_half_even(x: float) -> int:
    frac = Fraction(x)
    floor = frac.numerator // frac.denominator
    rem = frac - floor
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and floor % 2 != 0):
        floor += 1
    return floor


def quantize_scalar_oracle(w, cfg):
    """Straight-line Eq. evaluation for one weight."""
    v = min(max(w / cfg.k, cfg.w_lo), cfg.w_hi)
    return round_half_even((v - cfg.w_lo) * cfg.levels / (cfg.w_hi - cfg.w_lo))


# ---------------------------------------------------------------------------
# scale / quantize / dequantize
# ---------------------------------------------------------------------------

def test_weight_scale_examples():
    assert quant.weight_scale(np.ones(16), 8) == 255 / 128  # 1.9921875
    assert quant.weight_scale(np.zeros(4), 8) == 0.0
    assert quant.weight_scale(np.array([-2.0, 2.0, -2.0, 2.0]), 4) == 3.75


def test_weight_scale_empty():
    with pytest.raises(EmptyTensor):
        quant.weight_scale(np.array([]), 8)


def test_zero_scale_rejected_at_quantize():
    cfg = quant.WeightQuantConfig(n=8, w_lo=-1.0, w_hi=1.0, k=0.0)
    with pytest.raises(InvalidScale):
        quant.quantize_weights(np.zeros(4), cfg)


def test_invalid_clip_range():
    with pytest.raises(InvalidClipRange):
        quant.WeightQuantConfig(n=8, w_lo=1.0, w_hi=1.0, k=1.0)


def test_quantize_examples():
    cfg = quant.WeightQuantConfig(n=8, w_lo=-1.0, w_hi=1.0, k=1.0)
    assert quant.quantize_weights(np.array([0.0]), cfg)[0] == 128  # 127.5 half-even
    assert quant.quantize_weights(np.array([cfg.k * cfg.w_hi]), cfg)[0] == 255
    assert quant.quantize_weights(np.array([-50.0]), cfg)[0] == 0


def test_dequantize_examples():
    cfg = quant.WeightQuantConfig(n=8, w_lo=-1.0, w_hi=1.0, k=1.0)
    assert quant.dequantize_weights(np.array([0]), cfg)[0] == -1.0
    assert quant.dequantize_weights(np.array([255]), cfg)[0] == 1.0
    v = quant.dequantize_weights(np.array([128]), cfg)[0]
    assert abs(v - (256 / 255 - 1)) < 1e-12


def test_dequantize_code_out_of_range():
    cfg = quant.WeightQuantConfig(n=8, w_lo=-1.0, w_hi=1.0, k=1.0)
    with pytest.raises(CodeOutOfRange):
        quant.dequantize_weights(np.array([256]), cfg)
    with pytest.raises(CodeOutOfRange):
        quant.dequantize_weights(np.array([-1]), cfg)


def test_quantize_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    w = rng.uniform(-3, 3, size=500)
    for n in (4, 8, 16):
        k = quant.weight_scale(w, n)
        cfg = quant.WeightQuantConfig(n=n, w_lo=-1.2, w_hi=1.2, k=k)
        codes = quant.quantize_weights(w, cfg)
        for wi, ci in zip(w, codes):
            assert ci == quantize_scalar_oracle(float(wi), cfg)


def test_roundtrip_halfstep_bound():
    # |Q(w) - clip(w/k, lo, hi)| <= (hi - lo) / (2 * levels)
    rng = np.random.default_rng(5)
    cfg = quant.WeightQuantConfig(n=8, w_lo=-1.0, w_hi=1.0, k=1.7)
    w = rng.uniform(cfg.k * cfg.w_lo, cfg.k * cfg.w_hi, size=100_000)
    rec = quant.reconstruct_weights(w, cfg)
    clipped = np.clip(w / cfg.k, cfg.w_lo, cfg.w_hi)
    bound = (cfg.w_hi - cfg.w_lo) / (2 * cfg.levels)
    assert np.max(np.abs(rec - clipped)) <= bound + 1e-15


def test_quantizer_idempotence():
    rng = np.random.default_rng(17)
    cfg = quant.WeightQuantConfig(n=8, w_lo=-0.9, w_hi=1.1, k=2.3)
    w = rng.normal(size=4096)
    codes = quant.quantize_weights(w, cfg)
    rec = quant.dequantize_weights(codes, cfg)
    codes2 = quant.quantize_weights(rec * cfg.k, cfg)
    assert np.array_equal(codes, codes2)


# ---------------------------------------------------------------------------
# PACT
# ---------------------------------------------------------------------------

def test_pact_clip_regions():
    assert quant.pact_clip(-1.0, 1.0) == 0.0
    assert quant.pact_clip(0.5, 1.0) == 0.5
    assert quant.pact_clip(2.0, 1.0) == 1.0


def test_pact_clip_piecewise_identity_exact():
    # exhaustive grid over [-2a, 2a]: must equal min(max(x,0),a) exactly
    alpha = 1.0
    xs = np.linspace(-2 * alpha, 2 * alpha, 10_001)
    got = quant.pact_clip(xs, alpha)
    want = np.minimum(np.maximum(xs, 0.0), alpha)
    assert np.array_equal(got, want)


def test_pact_clip_matches_algebraic_form():
    # the closed form 0.5(|x| - |x-a| + a) agrees to float tolerance
    rng = np.random.default_rng(2)
    alpha = 0.731
    xs = rng.uniform(-3, 3, size=2000)
    alg = 0.5 * (np.abs(xs) - np.abs(xs - alpha) + alpha)
    assert np.allclose(quant.pact_clip(xs, alpha), alg, atol=1e-12)


def test_pact_invalid_alpha():
    with pytest.raises(InvalidAlpha):
        quant.pact_clip(0.5, 0.0)
    with pytest.raises(InvalidAlpha):
        quant.PactParams(alpha=-1.0)


def test_pact_quantize_examples():
    p = quant.PactParams(alpha=1.0, n=8)
    assert quant.pact_quantize(0.0, p) == (0, 0.0)
    code, value = quant.pact_quantize(5.0, p)
    assert code == 255 and value == 1.0
    code, value = quant.pact_quantize(0.5, p)
    assert code == 128  # 127.5 rounds half-to-even
    assert abs(value - 128 / 255) < 1e-12


@settings(max_examples=200)
@given(st.floats(min_value=-5, max_value=5), st.floats(min_value=-5, max_value=5))
def test_pact_quantize_monotone_and_codomain(a, b):
    p = quant.PactParams(alpha=1.3, n=8)
    ca, va = quant.pact_quantize(a, p)
    cb, vb = quant.pact_quantize(b, p)
    assert 0.0 <= va <= p.alpha and 0.0 <= vb <= p.alpha
    if a <= b:
        assert ca <= cb and va <= vb


# ---------------------------------------------------------------------------
# Sensitivity (Eqs. for s_{l,sc,k} and the max) and assignment
# ---------------------------------------------------------------------------

def sensitivity_oracle(w, grad_norm, base_cfg, cfg16, cfg8):
    """Independent straight-line scoring (element loops, scalar math)."""
    def recon_err(cfg):
        total = 0.0
        for wi in w:
            code = quantize_scalar_oracle(float(wi), cfg)
            q = code * (cfg.w_hi - cfg.w_lo) / cfg.levels + cfg.w_lo
            total += (q - float(wi)) ** 2
        return math.sqrt(total)

    base = recon_err(base_cfg)
    s16 = (base - recon_err(cfg16)) * grad_norm / len(w)
    s8 = (base - recon_err(cfg8)) * grad_norm / len(w)
    return s16, s8, max(s16, s8)


def test_sensitivity_zero_grad_norm():
    rng = np.random.default_rng(1)
    w = rng.normal(size=64)
    cfg = quant.paper_form_config(w, 8)
    e = quant.layer_sensitivity(w, 0.0, cfg, quant.paper_form_config(w, 16), cfg)
    assert e.s_l == 0.0


def test_sensitivity_identical_quantizers():
    rng = np.random.default_rng(1)
    w = rng.normal(size=64)
    cfg = quant.paper_form_config(w, 8)
    e = quant.layer_sensitivity(w, 2.5, cfg, cfg, cfg)
    assert e.s_sc16 == 0.0 and e.s_sc8 == 0.0 and e.s_l == 0.0


def test_sensitivity_matches_straightline_oracle():
    rng = np.random.default_rng(42)
    w = rng.uniform(-1, 1, size=256)
    base = quant.paper_form_config(w, 8, clip=(-1.0, 1.0))
    cfg16 = quant.paper_form_config(w, 16, clip=(-1.0, 1.0))
    cfg8 = quant.paper_form_config(w, 8, clip=(-0.8, 0.8))
    grad_norm = 3.7
    e = quant.layer_sensitivity(w, grad_norm, base, cfg16, cfg8, layer_id=4)
    s16, s8, sl = sensitivity_oracle(w, grad_norm, base, cfg16, cfg8)
    assert e.s_sc16 == pytest.approx(s16, rel=1e-12, abs=1e-15)
    assert e.s_sc8 == pytest.approx(s8, rel=1e-12, abs=1e-15)
    assert e.s_l == pytest.approx(sl, rel=1e-12, abs=1e-15)
    assert e.s_l == max(e.s_sc16, e.s_sc8)
    assert e.n_l == 256


def test_sensitivity_sign_property():
    # same scale and clip, finer grid: the 16-bit error norm is strictly
    # smaller, so s_sc16 must come out >= 0 for non-negative grad norms
    rng = np.random.default_rng(9)
    w = rng.normal(size=512)
    k = quant.weight_scale(w, 8)
    base = quant.WeightQuantConfig(n=8, w_lo=-1.0, w_hi=1.0, k=k)
    cfg16 = quant.WeightQuantConfig(n=16, w_lo=-1.0, w_hi=1.0, k=k)
    err8 = np.linalg.norm(quant.reconstruct_weights(w, base) - w)
    err16 = np.linalg.norm(quant.reconstruct_weights(w, cfg16) - w)
    assert err16 < err8
    e = quant.layer_sensitivity(w, 1.0, base, cfg16, base)
    assert e.s_sc16 >= 0.0


def test_sensitivity_empty_tensor():
    cfg = quant.WeightQuantConfig(n=8, w_lo=-1, w_hi=1, k=1.0)
    with pytest.raises(EmptyTensor):
        quant.layer_sensitivity(np.array([]), 1.0, cfg, cfg, cfg)


def _report(scores):
    entries = [
        quant.SensitivityEntry(i, s, s, s, 1.0, 10)
        for i, s in enumerate(scores)
    ]
    return quant.SensitivityReport(entries)


def test_assign_budget_zero_and_full():
    rep = _report([0.3, 0.3, 0.3])
    all_low = quant.assign_precisions(rep, quant.PrecisionPolicy(budget=0))
    assert all(m.kind == PrecisionKind.INT8 for m in all_low.values())
    all_high = quant.assign_precisions(rep, quant.PrecisionPolicy(budget=3))
    assert all(m.kind == PrecisionKind.BF16 for m in all_high.values())


def test_assign_budget_sort_and_take():
    rep = _report([0.9, 0.1, 0.5])
    got = quant.assign_precisions(rep, quant.PrecisionPolicy(budget=1))
    assert got[0].kind == PrecisionKind.BF16
    assert got[1].kind == PrecisionKind.INT8
    assert got[2].kind == PrecisionKind.INT8


def test_assign_tie_break_lower_index_first():
    rep = _report([0.5, 0.5, 0.1])
    got = quant.assign_precisions(rep, quant.PrecisionPolicy(budget=1))
    assert got[0].kind == PrecisionKind.BF16
    assert got[1].kind == PrecisionKind.INT8


def test_assign_threshold():
    rep = _report([0.9, 0.1, 0.5])
    got = quant.assign_precisions(rep, quant.PrecisionPolicy(tau=0.4))
    kinds = [got[i].kind for i in range(3)]
    assert kinds == [PrecisionKind.BF16, PrecisionKind.INT8, PrecisionKind.BF16]


def test_assign_budget_exceeds_layers():
    rep = _report([0.1])
    with pytest.raises(PolicyBudgetExceedsLayerCount):
        quant.assign_precisions(rep, quant.PrecisionPolicy(budget=2))


def test_assign_rescale_invariance():
    scores = [0.7, 0.2, 0.9, 0.4]
    pol = quant.PrecisionPolicy(budget=2)
    base = quant.assign_precisions(_report(scores), pol)
    scaled = quant.assign_precisions(_report([17.0 * s for s in scores]), pol)
    assert {i: m.kind for i, m in base.items()} == \
        {i: m.kind for i, m in scaled.items()}


def test_policy_validation():
    with pytest.raises(ValueError):
        quant.PrecisionPolicy()
    with pytest.raises(ValueError):
        quant.PrecisionPolicy(tau=0.5, budget=2)


# ---------------------------------------------------------------------------
# Calibration file
# ---------------------------------------------------------------------------

def test_calibration_roundtrip(tmp_path):
    path = tmp_path / "calib.txt"
    norms = {0: 1.5, 2: 0.25, 5: 3.75}
    quant.write_calibration(path, norms)
    assert quant.read_calibration(path) == norms


def test_calibration_comments_and_errors(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text("# header\n0 1.0  # inline\n\n1 2.0\n", encoding="utf-8")
    assert quant.read_calibration(path) == {0: 1.0, 1: 2.0}
    path.write_text("0 1.0 junk\n", encoding="utf-8")
    with pytest.raises(ValueError):
        quant.read_calibration(path)
