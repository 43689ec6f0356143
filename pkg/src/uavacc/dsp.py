"""Acoustic front-end: 0.8 s segmentation, peak normalization, the four
feature extractors (MFCC-20, pooled mel-128, log-PSD, ZCR), and
SNR-controlled Gaussian noise.

Front-end defaults (all exposed as parameters): 16 kHz rate, 25 ms frames
with 10 ms hop, periodic Hann window, DFT size = next power of two >= the
frame length, HTK mel scale with peak-1.0 triangular filters, log floor
1e-10, frame features mean-pooled per segment.

Noise realizations come from NumPy's PCG64 generator via
Generator.standard_normal — the named, reproducible algorithm for this
project; a fixed seed reproduces the noise bit-for-bit.
"""

import math
import struct
import wave
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import List, Optional, Tuple

import numpy as np
import scipy.fft

from .errors import (
    AudioTooShort,
    SegmentTooShort,
    SilentSignal,
    UnsupportedWavFormat,
)

SEGMENT_SECONDS = 0.8
DEFAULT_RATE = 16000
FRAME_MS = 25.0
HOP_MS = 10.0
LOG_FLOOR = 1e-10
CLEAN_SNR = math.inf  # sentinel: no noise added


class FeatureKind(IntEnum):
    """Feature taxonomy; values double as the dataset container tags.
    RAW marks stored audio segments (the snr-sweep input), not a feature."""

    MFCC20 = 0
    MEL128 = 1
    LOGPSD = 2
    ZCR = 3
    RAW = 4


@dataclass
class AudioSegment:
    """One 0.8 s window of samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int
    silent: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        want = segment_samples(self.sample_rate_hz)
        if self.samples.shape != (want,):
            raise AudioTooShort(
                f"segment must hold {want} samples at {self.sample_rate_hz} Hz, "
                f"got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioTooShort("segment samples must be finite")


@dataclass(frozen=True)
class FeatureVector:
    kind: FeatureKind
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=np.float32))


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int


def segment_samples(rate: int) -> int:
    return int(round(SEGMENT_SECONDS * rate))


# ---------------------------------------------------------------------------
# Segmentation / normalization
# ---------------------------------------------------------------------------

def segment(audio: np.ndarray, sample_rate_hz: int) -> List[AudioSegment]:
    """Non-overlapping consecutive 0.8 s windows; trailing remainder dropped."""
    audio = np.asarray(audio, dtype=np.float32)
    win = segment_samples(sample_rate_hz)
    if audio.size < win:
        raise AudioTooShort(
            f"need at least {win} samples ({SEGMENT_SECONDS} s at "
            f"{sample_rate_hz} Hz), got {audio.size}")
    count = audio.size // win
    return [AudioSegment(audio[i * win:(i + 1) * win], sample_rate_hz)
            for i in range(count)]


def normalize(seg: AudioSegment) -> AudioSegment:
    """Peak normalization; all-zero segments pass through with the silent
    flag set instead of failing."""
    peak = float(np.max(np.abs(seg.samples)))
    if peak == 0.0:
        return replace(seg, silent=True)
    return AudioSegment(seg.samples / peak, seg.sample_rate_hz)


# ---------------------------------------------------------------------------
# Framing / spectra
# ---------------------------------------------------------------------------

def hann_periodic(n: int) -> np.ndarray:
    return (0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)).astype(np.float64)


def next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """(num_frames, frame_len) strided view; partial trailing frame dropped."""
    if x.size < frame_len:
        raise SegmentTooShort(
            f"signal of {x.size} samples shorter than one {frame_len}-sample frame")
    num = 1 + (x.size - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(num)[:, None]
    return x[idx]


def frame_geometry(rate: int, frame_ms: float = FRAME_MS, hop_ms: float = HOP_MS
                   ) -> Tuple[int, int, int]:
    frame_len = int(round(rate * frame_ms / 1000.0))
    hop = int(round(rate * hop_ms / 1000.0))
    return frame_len, hop, next_pow2(frame_len)


def spectra(seg: AudioSegment, frame_ms: float = FRAME_MS,
            hop_ms: float = HOP_MS) -> Tuple[np.ndarray, int]:
    """Windowed rfft magnitudes per frame: (num_frames, nfft//2 + 1)."""
    frame_len, hop, nfft = frame_geometry(seg.sample_rate_hz, frame_ms, hop_ms)
    frames = frame_signal(seg.samples.astype(np.float64), frame_len, hop)
    windowed = frames * hann_periodic(frame_len)[None, :]
    return np.abs(np.fft.rfft(windowed, n=nfft, axis=1)), nfft


# ---------------------------------------------------------------------------
# Mel filterbank (HTK scale, peak-1.0 triangles)
# ---------------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, nfft: int, rate: int,
                   fmin: float = 0.0, fmax: Optional[float] = None) -> np.ndarray:
    """(n_mels, nfft//2+1) triangular weights, linear in Hz between edges.

    Peak height 1.0; adjacent triangles share edges, so the pointwise sum
    between the first and last peak is exactly 1.
    """
    if fmax is None:
        fmax = rate / 2.0
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.arange(nfft // 2 + 1) * (rate / nfft)
    fb = np.zeros((n_mels, bins.size), dtype=np.float64)
    for i in range(n_mels):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (bins - lo) / (mid - lo)
        down = (hi - bins) / (hi - mid)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mel_energies(seg: AudioSegment, n_mels: int,
                 frame_ms: float = FRAME_MS, hop_ms: float = HOP_MS,
                 spectrum: str = "magnitude") -> np.ndarray:
    """(num_frames, n_mels) filterbank outputs (magnitude or power input)."""
    mags, nfft = spectra(seg, frame_ms, hop_ms)
    spec = mags if spectrum == "magnitude" else mags ** 2
    fb = mel_filterbank(n_mels, nfft, seg.sample_rate_hz)
    return spec @ fb.T


def _pool(frames: np.ndarray, pool: bool) -> np.ndarray:
    return frames.mean(axis=0) if pool else frames.reshape(-1)


# ---------------------------------------------------------------------------
# Feature extractors
# ---------------------------------------------------------------------------

def mfcc(seg: AudioSegment, n_coeffs: int = 20, frame_ms: float = FRAME_MS,
         hop_ms: float = HOP_MS, n_mels: int = 40, pool: bool = True,
         spectrum: str = "magnitude") -> FeatureVector:
    """Hann window -> DFT magnitudes -> mel energies -> floored log ->
    orthonormal DCT-II -> first n_coeffs, mean-pooled over frames."""
    logmel = np.log(np.maximum(mel_energies(seg, n_mels, frame_ms, hop_ms,
                                            spectrum), LOG_FLOOR))
    coeffs = scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    return FeatureVector(FeatureKind.MFCC20, _pool(coeffs, pool))


def mel_pooled(seg: AudioSegment, n_mels: int = 128, frame_ms: float = FRAME_MS,
               hop_ms: float = HOP_MS, pool: bool = True,
               spectrum: str = "magnitude") -> FeatureVector:
    """n_mels log filterbank energies (log10, floored), mean-pooled."""
    e = mel_energies(seg, n_mels, frame_ms, hop_ms, spectrum)
    return FeatureVector(FeatureKind.MEL128,
                         _pool(np.log10(np.maximum(e, LOG_FLOOR)), pool))


def log_psd(seg: AudioSegment, frame_ms: float = FRAME_MS,
            hop_ms: float = HOP_MS) -> FeatureVector:
    """log10 of the Welch-style averaged periodogram (floored).

    Periodograms use the same framing/window as the other extractors;
    scaling is |X|^2 / (rate * sum(w^2)) per frame, averaged over frames.
    """
    mags, nfft = spectra(seg, frame_ms, hop_ms)
    frame_len, _, _ = frame_geometry(seg.sample_rate_hz, frame_ms, hop_ms)
    w = hann_periodic(frame_len)
    scale = 1.0 / (seg.sample_rate_hz * float(np.sum(w ** 2)))
    psd = (mags ** 2).mean(axis=0) * scale
    return FeatureVector(FeatureKind.LOGPSD,
                         np.log10(np.maximum(psd, LOG_FLOOR)))


def zcr(seg: AudioSegment) -> FeatureVector:
    """Fraction of adjacent sample pairs with a strict sign change."""
    s = seg.samples.astype(np.float64)
    changes = np.count_nonzero(s[:-1] * s[1:] < 0.0)
    return FeatureVector(FeatureKind.ZCR,
                         np.array([changes / (s.size - 1)], dtype=np.float32))


def extract(seg: AudioSegment, kind: FeatureKind, **kwargs) -> FeatureVector:
    if kind == FeatureKind.MFCC20:
        return mfcc(seg, **kwargs)
    if kind == FeatureKind.MEL128:
        return mel_pooled(seg, **kwargs)
    if kind == FeatureKind.LOGPSD:
        return log_psd(seg, **kwargs)
    if kind == FeatureKind.ZCR:
        return zcr(seg)
    raise ValueError(f"unknown feature kind {kind}")


# ---------------------------------------------------------------------------
# SNR-controlled noise
# ---------------------------------------------------------------------------

def add_noise(seg: AudioSegment, spec: NoiseSpec) -> AudioSegment:
    """seg + seeded Gaussian noise scaled to the target SNR.

    The scale uses the measured powers of both the segment and the raw
    noise draw, so 10*log10(P_signal / P_noise) equals snr_db up to float
    rounding. snr_db = +inf is the "clean" sentinel (segment unchanged).
    """
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return seg
    sig = seg.samples.astype(np.float64)
    p_signal = float(np.mean(sig ** 2))
    if p_signal == 0.0:
        raise SilentSignal("SNR is undefined for an all-zero segment")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    raw = rng.standard_normal(sig.size)
    p_raw = float(np.mean(raw ** 2))
    target_noise_power = p_signal / (10.0 ** (spec.snr_db / 10.0))
    noise = raw * math.sqrt(target_noise_power / p_raw)
    out = (sig + noise).astype(np.float32)
    return AudioSegment(out, seg.sample_rate_hz, silent=seg.silent)


def measured_snr_db(clean: AudioSegment, noisy: AudioSegment) -> float:
    """Power-ratio measurement: 10*log10(P_signal / P_noise)."""
    sig = clean.samples.astype(np.float64)
    noise = noisy.samples.astype(np.float64) - sig
    return 10.0 * math.log10(float(np.mean(sig ** 2)) / float(np.mean(noise ** 2)))


# ---------------------------------------------------------------------------
# WAV I/O (PCM 16-bit mono, little-endian)
# ---------------------------------------------------------------------------

def read_wav(path) -> Tuple[np.ndarray, int]:
    """Samples in [-1, 1] plus the sample rate; anything but PCM16 mono
    is rejected (resampling is out of scope)."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise UnsupportedWavFormat(
                f"{path}: {w.getnchannels()} channels (mono required)")
        if w.getsampwidth() != 2:
            raise UnsupportedWavFormat(
                f"{path}: {8 * w.getsampwidth()}-bit samples (16-bit required)")
        if w.getcomptype() != "NONE":
            raise UnsupportedWavFormat(f"{path}: compressed WAV not supported")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return samples, rate


def write_wav(path, samples: np.ndarray, rate: int) -> None:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(pcm.tobytes())
