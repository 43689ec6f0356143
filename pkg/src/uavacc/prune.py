"""Serialisation-aware structured channel pruning of the conv stage that
feeds the flatten/dense interface.

Importance is the L1 norm of each output channel's filter; the lowest
scores go first, ties broken by pruning the higher channel index first.
Removing channel c of the last conv deletes that filter row and bias entry
and the dense columns [c*T, (c+1)*T) behind the flatten (T = temporal
length at the flatten), so shapes re-chain exactly.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import EmptyTensor, NoFlattenLayer, TargetUnachievable
from .nn import Conv1D, Dense, Flatten, ModelSpec, shape_chain


@dataclass(frozen=True)
class PruneConfig:
    """Exactly one of target_flatten / target_channels; importance tag
    is extensible but only L1 exists."""

    target_flatten: Optional[int] = None
    target_channels: Optional[int] = None
    importance: str = "L1"

    def __post_init__(self):
        if (self.target_flatten is None) == (self.target_channels is None):
            raise ValueError("specify exactly one of target_flatten / target_channels")
        tgt = self.target_flatten if self.target_flatten is not None else self.target_channels
        if tgt < 1:
            raise ValueError(f"target must be positive, got {tgt}")
        if self.importance != "L1":
            raise ValueError(f"unknown importance criterion {self.importance!r}")


@dataclass
class PruneRecord:
    """Removed channel indices with their importance scores."""

    removed: List[Tuple[int, float]] = field(default_factory=list)
    retained: List[int] = field(default_factory=list)

    def removed_indices(self) -> List[int]:
        return [i for i, _ in self.removed]


def channel_importance(w: np.ndarray) -> np.ndarray:
    """score[c] = sum |w[c,:,:]| (L1 norm of the channel's filter)."""
    w = np.asarray(w)
    if w.size == 0:
        raise EmptyTensor("channel_importance of empty weights")
    return np.abs(w).sum(axis=tuple(range(1, w.ndim))).astype(np.float64)


def _locate_prune_site(m: ModelSpec) -> Tuple[int, int, int]:
    """(last conv index, flatten index, first dense index after flatten)."""
    flatten_idx = None
    for i, spec in enumerate(m.layers):
        if isinstance(spec, Flatten):
            flatten_idx = i
            break
    if flatten_idx is None:
        raise NoFlattenLayer("model has no Flatten layer")
    conv_idx = None
    for i in range(flatten_idx - 1, -1, -1):
        if isinstance(m.layers[i], Conv1D):
            conv_idx = i
            break
    if conv_idx is None:
        raise NoFlattenLayer("no Conv1D stage precedes the Flatten layer")
    dense_idx = None
    for i in range(flatten_idx + 1, len(m.layers)):
        if isinstance(m.layers[i], Dense):
            dense_idx = i
            break
    if dense_idx is None:
        raise NoFlattenLayer("no Dense layer follows the Flatten layer")
    return conv_idx, flatten_idx, dense_idx


def flatten_dim(m: ModelSpec) -> int:
    """channels x temporal length at the Flatten layer, from symbolic
    shape propagation (no data needed)."""
    _, flatten_idx, _ = _locate_prune_site(m)
    chain = shape_chain(m)  # raises InvalidChain on broken models
    if flatten_idx == 0:
        before = (m.input_channels, m.input_length)
    else:
        before = chain[flatten_idx - 1]
    return before[0] * before[1]


def prune_channels(m: ModelSpec, cfg: PruneConfig) -> Tuple[ModelSpec, PruneRecord]:
    """Remove the lowest-importance channels of the last conv stage until
    the target is met; returns a new ModelSpec (the input is not mutated)."""
    conv_idx, flatten_idx, dense_idx = _locate_prune_site(m)
    chain = shape_chain(m)
    conv_spec: Conv1D = m.layers[conv_idx]
    dense_spec: Dense = m.layers[dense_idx]
    pre_flatten_ch, temporal = chain[flatten_idx - 1]

    if cfg.target_flatten is not None:
        if cfg.target_flatten % temporal != 0:
            raise TargetUnachievable(
                f"target_flatten {cfg.target_flatten} not divisible by the "
                f"post-conv temporal length {temporal}")
        target_ch = cfg.target_flatten // temporal
    else:
        target_ch = cfg.target_channels
    if target_ch > pre_flatten_ch:
        raise TargetUnachievable(
            f"target {target_ch} channels exceeds current {pre_flatten_ch}")

    w, b = m.weights[conv_idx]
    scores = channel_importance(w)
    if target_ch == pre_flatten_ch:
        return m, PruneRecord(removed=[], retained=list(range(pre_flatten_ch)))

    # lowest score pruned first; equal scores drop the higher index first
    order = sorted(range(pre_flatten_ch), key=lambda c: (scores[c], -c))
    removed = sorted(order[:pre_flatten_ch - target_ch])
    retained = sorted(set(range(pre_flatten_ch)) - set(removed))

    dw, db = m.weights[dense_idx]
    keep_cols = np.concatenate(
        [np.arange(c * temporal, (c + 1) * temporal) for c in retained])

    new_layers = list(m.layers)
    new_layers[conv_idx] = Conv1D(conv_spec.in_ch, target_ch, conv_spec.kernel,
                                  conv_spec.stride, conv_spec.padding)
    new_layers[dense_idx] = Dense(target_ch * temporal, dense_spec.out_dim)
    new_weights = dict(m.weights)
    new_weights[conv_idx] = (np.ascontiguousarray(w[retained]),
                             np.ascontiguousarray(b[retained]))
    new_weights[dense_idx] = (np.ascontiguousarray(dw[:, keep_cols]), db.copy())

    pruned = ModelSpec(m.input_channels, m.input_length, new_layers,
                       new_weights, dict(m.precision_map), dict(m.quant_params))
    pruned.validate()
    record = PruneRecord(removed=[(int(c), float(scores[c])) for c in removed],
                         retained=[int(c) for c in retained])
    return pruned, record


def write_prune_record(path, record: PruneRecord) -> None:
    """One line per removed channel: `channel_index importance_score`."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# channel_index importance_score\n")
        for idx, score in record.removed:
            f.write(f"{idx} {score!r}\n")


def mac_counts(m: ModelSpec) -> List[Tuple[int, int]]:
    """(layer index, MAC count) for each weighted compute stage."""
    chain = shape_chain(m)
    out = []
    c, l = m.input_channels, m.input_length
    for i, spec in enumerate(m.layers):
        if isinstance(spec, Conv1D):
            out_len = chain[i][1]
            out.append((i, spec.out_ch * out_len * spec.in_ch * spec.kernel))
        elif isinstance(spec, Dense):
            out.append((i, spec.out_dim * spec.in_dim))
        c, l = chain[i]
    return out
