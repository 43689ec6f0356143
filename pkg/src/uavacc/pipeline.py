"""Evaluation pipeline: feature-to-tensor adaptation, batch inference,
confusion-matrix evaluation, and the SNR sweep.

The network consumes non-negative inputs (PACT activation quantization
clips negatives to zero by construction), so feature vectors are mapped
through a fixed affine (v + 10) / 12 before entering the model: the log
floor of 1e-10 bounds log features below at -10, landing inputs in
[0, ~1]. The same adapter is applied in every precision mode.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import dsp
from .metrics import ConfusionMatrix, EvalReport, metrics
from .nn import ModelSpec, Tensor1D, model_forward
from .numerics import PrecisionKind, PrecisionMode

FEATURE_INPUT_OFFSET = 10.0
FEATURE_INPUT_SCALE = 12.0

MODE_NAMES: Dict[str, PrecisionMode] = {
    "fp32": PrecisionMode(PrecisionKind.FP32),
    "bf16": PrecisionMode(PrecisionKind.BF16),
    "int8": PrecisionMode(PrecisionKind.INT8),
    "fxp8": PrecisionMode(PrecisionKind.FXP8),
}


def features_to_input(values: np.ndarray) -> Tensor1D:
    """Fixed affine mapping of a feature vector into the network's
    non-negative input domain."""
    v = np.asarray(values, dtype=np.float32).reshape(-1)
    return Tensor1D((v + FEATURE_INPUT_OFFSET) / FEATURE_INPUT_SCALE, channels=1)


def predict(model: ModelSpec, features: np.ndarray,
            mode: Optional[PrecisionMode] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(argmax predictions, class-1 probabilities) for feature rows."""
    preds = np.empty(features.shape[0], dtype=np.int64)
    p_uav = np.empty(features.shape[0], dtype=np.float64)
    for i, row in enumerate(features):
        probs, _ = model_forward(model, features_to_input(row), mode,
                                 keep_snapshots=False)
        preds[i] = int(np.argmax(probs))
        p_uav[i] = float(probs[1]) if probs.size > 1 else float(probs[0])
    return preds, p_uav


def evaluate(model: ModelSpec, features: np.ndarray, labels: np.ndarray,
             mode: Optional[PrecisionMode] = None) -> EvalReport:
    preds, _ = predict(model, features, mode)
    cm = ConfusionMatrix()
    for label, pred in zip(labels, preds):
        cm = cm.add(int(label), int(pred))
    return metrics(cm)


def extract_features(segments: Sequence[dsp.AudioSegment],
                     kind: dsp.FeatureKind = dsp.FeatureKind.MEL128
                     ) -> np.ndarray:
    rows = [dsp.extract(seg, kind).values for seg in segments]
    return np.stack(rows).astype(np.float32)


def noise_seed(base_seed: int, snr_index: int, record_index: int) -> int:
    """Per-sample noise seed: SeedSequence(base, spawn_key=(snr, record))."""
    ss = np.random.SeedSequence(entropy=base_seed,
                                spawn_key=(snr_index, record_index))
    return int(ss.generate_state(1, np.uint64)[0])


def snr_sweep(model: ModelSpec, segments: Sequence[dsp.AudioSegment],
              labels: np.ndarray, snr_list: Sequence[float], seed: int,
              kind: dsp.FeatureKind = dsp.FeatureKind.MEL128,
              mode: Optional[PrecisionMode] = None) -> List[EvalReport]:
    """Noise -> features -> inference -> metrics, once per SNR point.

    Segments must be raw (not pre-noised); each record gets its own
    derived seed so realizations are independent but reproducible.
    """
    reports = []
    for snr_idx, snr_db in enumerate(snr_list):
        noisy = [
            dsp.add_noise(seg, dsp.NoiseSpec(
                snr_db=snr_db, seed=noise_seed(seed, snr_idx, i)))
            for i, seg in enumerate(segments)
        ]
        feats = extract_features(noisy, kind)
        rep = evaluate(model, feats, labels, mode)
        rep.snr_db = snr_db
        reports.append(rep)
    return reports


def curve_csv_lines(reports: Sequence[EvalReport]) -> List[str]:
    lines = ["snr_db,accuracy,far,mdr"]
    for r in reports:
        snr = "inf" if r.snr_db is not None and np.isinf(r.snr_db) else f"{r.snr_db:g}"
        lines.append(f"{snr},{r.accuracy:.6f},{r.far:.6f},{r.mdr:.6f}")
    return lines
