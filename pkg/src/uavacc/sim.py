"""Cycle model of the sequential shared-datapath accelerator.

Two independent routes to the same numbers: closed_form_cycles evaluates
the layer-sum formulas directly (unit-constant regime only), while
simulate_schedule walks the control FSM event by event. With unit stage
constants and K_l = 1 the two must agree exactly; that cross-check is the
oracle for both.

Stage attribution (reverse-engineered so the event walk reproduces the
closed forms exactly; see the per-mode walk below):

  Reusable: every layer's MAC stage runs on the one datapath; each of the
  L-1 layer boundaries pays a serializer handoff (t_serial); boundaries
  after layers 1..L-2 also stall for the activation pipeline fill
  (K_l * t_af). Unit constants, K=1: sum(n) + (L-1) + (L-2) = sum(n) + 2L - 3.

  Parallel: per-layer datapaths overlap; the fill path through layers
  1..L-1 pays MAC plus activation handoff each, and the final layer's
  MACs overlap entirely with output streaming (the literal formula sums
  to L-1). Unit constants, K=1: sum_{l<L}(n) + (L-1).

Totals count compute cycles only; bus/DMA/host transfer cycles are out of
scope and reports say so.
"""

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import (
    InvalidClock,
    NegativeCoefficient,
    TooFewLayers,
    UnsupportedRegime,
)

COMPUTE_ONLY_NOTE = "compute cycles only; bus/DMA/host transfers excluded"


class ScheduleMode(Enum):
    PARALLEL = "parallel"
    REUSABLE = "reusable"


@dataclass(frozen=True)
class LayerCycleProfile:
    """Per-layer MAC counts n_l, serialized activation output counts K_l,
    and the per-stage cycle constants."""

    layer_ids: Tuple[str, ...]
    n: Tuple[int, ...]
    k: Tuple[int, ...]
    t_mac: int = 1
    t_af: int = 1
    t_serial: int = 1

    def __post_init__(self):
        if not (len(self.layer_ids) == len(self.n) == len(self.k)):
            raise ValueError("layer_ids, n, k must have equal lengths")
        if len(self.n) < 1:
            raise ValueError("profile needs at least one layer")
        for name, vals in (("n", self.n), ("k", self.k)):
            if any(v < 1 for v in vals):
                raise ValueError(f"all {name}_l must be >= 1")
        if min(self.t_mac, self.t_af, self.t_serial) < 1:
            raise ValueError("stage constants must be >= 1")

    @property
    def num_layers(self) -> int:
        return len(self.n)

    def unit_regime(self) -> bool:
        return (self.t_mac == self.t_af == self.t_serial == 1
                and all(kv == 1 for kv in self.k))


def profile(n: Sequence[int], k: Optional[Sequence[int]] = None,
            layer_ids: Optional[Sequence[str]] = None, **consts) -> LayerCycleProfile:
    """Convenience constructor; K defaults to 1 per layer."""
    n = tuple(int(v) for v in n)
    k = tuple(int(v) for v in k) if k is not None else tuple(1 for _ in n)
    ids = tuple(layer_ids) if layer_ids is not None else tuple(
        f"L{i}" for i in range(len(n)))
    return LayerCycleProfile(ids, n, k, **consts)


@dataclass
class StageCycles:
    layer_id: str
    mac_cycles: int = 0
    serial_cycles: int = 0
    af_cycles: int = 0

    @property
    def total(self) -> int:
        return self.mac_cycles + self.serial_cycles + self.af_cycles


@dataclass
class CycleReport:
    mode: ScheduleMode
    total_cycles: int
    per_layer: List[StageCycles]
    events: List[Tuple[int, str, str, int]] = field(default_factory=list)
    clock_hz: Optional[float] = None
    latency_s: Optional[float] = None
    energy_j: Optional[float] = None
    note: str = COMPUTE_ONLY_NOTE

    def stage_totals(self) -> Dict[str, int]:
        return {
            "mac": sum(r.mac_cycles for r in self.per_layer),
            "serial": sum(r.serial_cycles for r in self.per_layer),
            "af": sum(r.af_cycles for r in self.per_layer),
        }


# ---------------------------------------------------------------------------
# Closed forms (unit-constant regime of the total-cycle equations)
# ---------------------------------------------------------------------------

def closed_form_cycles(p: LayerCycleProfile, mode: ScheduleMode) -> int:
    """Parallel: sum_{l=1}^{L-1} n(l) + L - 1.
    Reusable: sum_{l=1}^{L} n(l) + 2L - 3."""
    if not p.unit_regime():
        raise UnsupportedRegime(
            "closed forms hold for unit stage constants and K=1; "
            "use simulate_schedule for general profiles")
    L = p.num_layers
    if mode == ScheduleMode.REUSABLE:
        if L < 2:
            raise TooFewLayers("reusable closed form needs L >= 2")
        return sum(p.n) + 2 * L - 3
    if L == 1:
        warnings.warn("parallel closed form degenerates to 0 for L=1 "
                      "(literal empty sum)", RuntimeWarning, stacklevel=2)
        return 0
    return sum(p.n[:L - 1]) + L - 1


# ---------------------------------------------------------------------------
# Discrete-event FSM walk
# ---------------------------------------------------------------------------

def simulate_schedule(p: LayerCycleProfile, mode: ScheduleMode) -> CycleReport:
    """Walk the control FSM {LOAD, MAC, SERIALIZE, ACTIVATE, WRITEBACK}
    and tally cycles per layer and stage."""
    L = p.num_layers
    rows = [StageCycles(lid) for lid in p.layer_ids]
    events: List[Tuple[int, str, str, int]] = []
    clock = 0

    def emit(layer: int, state: str, dur: int):
        nonlocal clock
        events.append((clock, p.layer_ids[layer], state, dur))
        clock += dur

    if mode == ScheduleMode.REUSABLE:
        if L < 2:
            raise TooFewLayers("reusable schedule needs L >= 2")
        for l in range(L):
            emit(l, "LOAD", 0)  # overlapped with the previous writeback
            dur = p.n[l] * p.t_mac
            emit(l, "MAC", dur)
            rows[l].mac_cycles = dur
            if l < L - 1:
                emit(l, "SERIALIZE", p.t_serial)
                rows[l].serial_cycles = p.t_serial
            if l < L - 2:
                # activation fill stalls the shared datapath; the last two
                # boundaries overlap activation with writeback
                dur = p.k[l] * p.t_af
                emit(l, "ACTIVATE", dur)
                rows[l].af_cycles = dur
        emit(L - 1, "WRITEBACK", 0)
    else:
        if L == 1:
            warnings.warn("parallel schedule degenerates to 0 cycles for "
                          "L=1 (fully overlapped)", RuntimeWarning,
                          stacklevel=2)
        for l in range(L - 1):
            emit(l, "LOAD", 0)
            dur = p.n[l] * p.t_mac
            emit(l, "MAC", dur)
            rows[l].mac_cycles = dur
            dur = p.k[l] * p.t_af
            emit(l, "ACTIVATE", dur)
            rows[l].af_cycles = dur
        emit(L - 1, "WRITEBACK", 0)  # final layer overlaps output streaming

    total = clock
    assert total == sum(r.total for r in rows), "breakdown must sum to total"
    return CycleReport(mode=mode, total_cycles=total, per_layer=rows,
                       events=events)


def latency(report: CycleReport, clock_hz: float) -> float:
    """total_cycles / clock_hz, stored into the report."""
    if not clock_hz > 0:
        raise InvalidClock(f"clock must be positive, got {clock_hz}")
    report.clock_hz = clock_hz
    report.latency_s = report.total_cycles / clock_hz
    return report.latency_s


def energy_estimate(report: CycleReport, coeffs: Dict[str, float]) -> float:
    """sum over stages of cycles * joules-per-cycle; purely parametric."""
    for stage, c in coeffs.items():
        if c < 0:
            raise NegativeCoefficient(f"coefficient for {stage!r} is negative")
    totals = report.stage_totals()
    energy = sum(totals.get(stage, 0) * c for stage, c in coeffs.items())
    report.energy_j = energy
    return energy


# ---------------------------------------------------------------------------
# Profiles from models
# ---------------------------------------------------------------------------

def profile_from_model(m, k_mode: str = "outputs") -> LayerCycleProfile:
    """One entry per weighted compute stage: n_l = MAC count, K_l = elements
    streamed out of the block (post-pool for conv stages) or 1 ("unit")."""
    from .nn import Conv1D, Dense, Dropout, MaxPool1D, ReLU, shape_chain
    if k_mode not in ("outputs", "unit"):
        raise ValueError(f"k_mode must be outputs|unit, got {k_mode}")
    chain = shape_chain(m)
    ids, n, k = [], [], []
    for i, spec in enumerate(m.layers):
        if isinstance(spec, Conv1D):
            out_len = chain[i][1]
            n.append(spec.out_ch * out_len * spec.in_ch * spec.kernel)
            ids.append(f"conv{i}")
        elif isinstance(spec, Dense):
            n.append(spec.out_dim * spec.in_dim)
            ids.append(f"dense{i}")
        else:
            # pooling/activation/dropout fold into the producing stage's
            # streamed output count
            if ids and isinstance(spec, (ReLU, MaxPool1D, Dropout)):
                k[-1] = chain[i][0] * chain[i][1]
            continue
        k.append(chain[i][0] * chain[i][1])
    if k_mode == "unit":
        k = [1] * len(k)
    return LayerCycleProfile(tuple(ids), tuple(n), tuple(k))


# ---------------------------------------------------------------------------
# Profile file (text): header key=value lines, then `layer_id n_l K_l`
# ---------------------------------------------------------------------------

def write_profile(path, p: LayerCycleProfile, clock_hz: Optional[float] = None
                  ) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"t_mac={p.t_mac}\n")
        f.write(f"t_af={p.t_af}\n")
        f.write(f"t_serial={p.t_serial}\n")
        if clock_hz is not None:
            f.write(f"clock_hz={clock_hz!r}\n")
        f.write("# layer_id n_l K_l\n")
        for lid, nv, kv in zip(p.layer_ids, p.n, p.k):
            f.write(f"{lid} {nv} {kv}\n")


def read_profile(path) -> Tuple[LayerCycleProfile, Optional[float]]:
    consts = {"t_mac": 1, "t_af": 1, "t_serial": 1}
    clock = None
    ids, n, k = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, val = (s.strip() for s in line.split("=", 1))
                if key == "clock_hz":
                    clock = float(val)
                elif key in consts:
                    consts[key] = int(val)
                else:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'layer_id n_l K_l'")
            ids.append(parts[0])
            n.append(int(parts[1]))
            k.append(int(parts[2]))
    return LayerCycleProfile(tuple(ids), tuple(n), tuple(k), **consts), clock


def format_cycle_report(report: CycleReport) -> str:
    """key=value rendering plus a per-layer table (plot-ready)."""
    lines = [
        f"mode={report.mode.value}",
        f"total_cycles={report.total_cycles}",
        f"note={report.note}",
    ]
    if report.clock_hz is not None:
        lines.append(f"clock_hz={report.clock_hz!r}")
        lines.append(f"latency_s={report.latency_s!r}")
    if report.energy_j is not None:
        lines.append(f"energy_j={report.energy_j!r}")
    lines.append("# layer_id mac_cycles serial_cycles af_cycles")
    for r in report.per_layer:
        lines.append(f"{r.layer_id} {r.mac_cycles} {r.serial_cycles} {r.af_cycles}")
    return "\n".join(lines) + "\n"
