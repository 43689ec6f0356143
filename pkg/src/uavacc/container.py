"""Binary container formats (little-endian, CRC32-tailed).

Model container, magic "S8UV":

    "S8UV" | u16 version=1 | u16 layer_count | u32 input_channels
    | u32 input_length
    per layer:
      u8 kind | u8 precision
      kind fields: Conv1D  -> u32 in_ch, out_ch, kernel, stride, padding(0/1)
                   MaxPool -> u32 window, stride
                   Dense   -> u32 in_dim, out_dim
                   Dropout -> f32 rate
                   ReLU/Flatten/Softmax -> none
      weighted layers: u8 has_quant
        if has_quant: f32 k, w_lo, w_hi, alpha | u8 n | u8 frac_bits
        f32 weights (row-major) | f32 bias
    u32 CRC32 over all preceding bytes

Feature dataset container, magic "S8FV":

    "S8FV" | u16 version=1 | u8 feature_kind | u32 record_len
    | u32 record_count
    records: record_len x f32 | u8 label (0 = non-UAV, 1 = UAV)
    u32 CRC32 over all preceding bytes

Loading guards: wrong magic -> BadMagic; unknown version ->
UnsupportedVersion; a read past the end of the payload (or fewer than 4
bytes left for the checksum) -> TruncatedFile; anything else that breaks
the byte accounting or the checksum -> ChecksumMismatch.
"""

import struct
import zlib
from typing import List, Tuple

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    TruncatedFile,
    UnsupportedVersion,
)
from .nn import (
    LAYER_KINDS,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    LayerQuantParams,
    MaxPool1D,
    ModelSpec,
    ReLU,
    Softmax,
    is_weighted,
)
from .numerics import Fxp8Format, PrecisionKind, PrecisionMode
from .quant import PactParams, WeightQuantConfig

from .dsp import FeatureKind

MODEL_MAGIC = b"S8UV"
FEATURE_MAGIC = b"S8FV"
VERSION = 1


class _Writer:
    def __init__(self):
        self.parts: List[bytes] = []

    def pack(self, fmt: str, *vals):
        self.parts.append(struct.pack("<" + fmt, *vals))

    def raw(self, data: bytes):
        self.parts.append(data)

    def finish(self) -> bytes:
        body = b"".join(self.parts)
        return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    """Cursor over the payload (file bytes minus the 4-byte CRC tail)."""

    def __init__(self, blob: bytes, what: str):
        if len(blob) < 4:
            raise TruncatedFile(f"{what}: too short to hold a checksum")
        self.blob = blob
        self.end = len(blob) - 4
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise TruncatedFile(
                f"{self.what}: needed {n} bytes at offset {self.pos}, "
                f"payload ends at {self.end}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def finish(self):
        if self.pos != self.end:
            raise ChecksumMismatch(
                f"{self.what}: {self.end - self.pos} unexpected trailing bytes")
        (stored,) = struct.unpack("<I", self.blob[self.end:])
        actual = zlib.crc32(self.blob[:self.end])
        if stored != actual:
            raise ChecksumMismatch(
                f"{self.what}: CRC32 {actual:#010x} != stored {stored:#010x}")


def _f32_blob(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype=np.float32).tobytes()


# ---------------------------------------------------------------------------
# Model container
# ---------------------------------------------------------------------------

def save_model(m: ModelSpec, path) -> None:
    m.validate()
    w = _Writer()
    w.raw(MODEL_MAGIC)
    w.pack("HH", VERSION, len(m.layers))
    w.pack("II", m.input_channels, m.input_length)
    for i, spec in enumerate(m.layers):
        mode = m.mode_for(i)
        w.pack("BB", spec.KIND, int(mode.kind))
        if isinstance(spec, Conv1D):
            w.pack("IIIII", spec.in_ch, spec.out_ch, spec.kernel, spec.stride,
                   1 if spec.padding == "same" else 0)
        elif isinstance(spec, MaxPool1D):
            w.pack("II", spec.window, spec.stride)
        elif isinstance(spec, Dense):
            w.pack("II", spec.in_dim, spec.out_dim)
        elif isinstance(spec, Dropout):
            w.pack("f", spec.rate)
        if is_weighted(spec):
            qp = m.quant_params.get(i)
            if qp is not None and qp.weight_cfg is not None and qp.act is not None:
                fb = (mode.fxp_format.frac_bits
                      if mode.fxp_format is not None else 6)
                w.pack("B", 1)
                w.pack("ffff", qp.weight_cfg.k, qp.weight_cfg.w_lo,
                       qp.weight_cfg.w_hi, qp.act.alpha)
                w.pack("BB", qp.weight_cfg.n, fb)
            else:
                w.pack("B", 0)
            wt, bias = m.weights[i]
            w.raw(_f32_blob(wt))
            w.raw(_f32_blob(bias))
    with open(path, "wb") as f:
        f.write(w.finish())


def load_model(path) -> ModelSpec:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MODEL_MAGIC:
        raise BadMagic(f"{path}: magic {blob[:4]!r} != {MODEL_MAGIC!r}")
    r = _Reader(blob, str(path))
    r.take(4)  # magic
    version, layer_count = r.unpack("HH")
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}")
    in_ch, in_len = r.unpack("II")

    layers = []
    weights = {}
    precision = {}
    qparams = {}
    for i in range(layer_count):
        kind, prec = r.unpack("BB")
        if kind not in LAYER_KINDS:
            raise ChecksumMismatch(f"{path}: unknown layer kind {kind}")
        if kind == Conv1D.KIND:
            c_in, c_out, kern, stride, pad = r.unpack("IIIII")
            spec = Conv1D(c_in, c_out, kern, stride,
                          "same" if pad else "none")
        elif kind == MaxPool1D.KIND:
            window, stride = r.unpack("II")
            spec = MaxPool1D(window, stride)
        elif kind == Dense.KIND:
            d_in, d_out = r.unpack("II")
            spec = Dense(d_in, d_out)
        elif kind == Dropout.KIND:
            (rate,) = r.unpack("f")
            spec = Dropout(round(float(rate), 6))
        else:
            spec = LAYER_KINDS[kind]()
        layers.append(spec)

        if is_weighted(spec):
            frac_bits = 6
            (has_quant,) = r.unpack("B")
            if has_quant:
                k, w_lo, w_hi, alpha = r.unpack("ffff")
                n, frac_bits = r.unpack("BB")
                qparams[i] = LayerQuantParams(
                    weight_cfg=WeightQuantConfig(n=int(n), w_lo=float(w_lo),
                                                 w_hi=float(w_hi), k=float(k)),
                    act=PactParams(alpha=float(alpha), n=int(n)))
            if isinstance(spec, Conv1D):
                wshape = (spec.out_ch, spec.in_ch, spec.kernel)
            else:
                wshape = (spec.out_dim, spec.in_dim)
            n_w = int(np.prod(wshape))
            wt = np.frombuffer(r.take(4 * n_w), dtype="<f4").reshape(wshape)
            bias = np.frombuffer(r.take(4 * wshape[0]), dtype="<f4")
            weights[i] = (wt.astype(np.float32), bias.astype(np.float32))
            pk = PrecisionKind(prec)
            precision[i] = PrecisionMode(
                pk, fxp_format=Fxp8Format(int(frac_bits))
                if pk == PrecisionKind.FXP8 else None)
    r.finish()
    m = ModelSpec(in_ch, in_len, layers, weights, precision, qparams)
    m.validate()
    return m


# ---------------------------------------------------------------------------
# Feature dataset container
# ---------------------------------------------------------------------------

def save_features(path, kind: FeatureKind, records: np.ndarray,
                  labels: np.ndarray) -> None:
    """records: (count, record_len) float32; labels: (count,) in {0, 1}."""
    records = np.asarray(records, dtype=np.float32)
    labels = np.asarray(labels)
    if records.ndim != 2 or records.shape[0] != labels.shape[0]:
        raise ValueError(
            f"records {records.shape} and labels {labels.shape} disagree")
    w = _Writer()
    w.raw(FEATURE_MAGIC)
    w.pack("H", VERSION)
    w.pack("B", int(kind))
    w.pack("II", records.shape[1], records.shape[0])
    for row, label in zip(records, labels):
        w.raw(_f32_blob(row))
        w.pack("B", int(label))
    with open(path, "wb") as f:
        f.write(w.finish())


def load_features(path) -> Tuple[FeatureKind, np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != FEATURE_MAGIC:
        raise BadMagic(f"{path}: magic {blob[:4]!r} != {FEATURE_MAGIC!r}")
    r = _Reader(blob, str(path))
    r.take(4)
    (version,) = r.unpack("H")
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}")
    (kind,) = r.unpack("B")
    rec_len, count = r.unpack("II")
    records = np.empty((count, rec_len), dtype=np.float32)
    labels = np.empty(count, dtype=np.uint8)
    for i in range(count):
        records[i] = np.frombuffer(r.take(4 * rec_len), dtype="<f4")
        (labels[i],) = r.unpack("B")
    r.finish()
    return FeatureKind(kind), records, labels
