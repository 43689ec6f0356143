"""Structured channel pruning tests, including the book numbers
(35,072 -> 8,704) on the canonical architecture."""

import numpy as np
import pytest

from uavacc import nn, prune
from uavacc.errors import NoFlattenLayer, TargetUnachievable

T = nn.Tensor1D


def test_channel_importance_oracle():
    w = np.zeros((3, 2, 3), dtype=np.float32)
    w[1] = 1.0
    w[2] = -2.0
    scores = prune.channel_importance(w)
    assert list(scores) == [0.0, 6.0, 12.0]
    rng = np.random.default_rng(4)
    wr = rng.normal(size=(5, 3, 3))
    want = [sum(abs(float(v)) for v in wr[c].reshape(-1)) for c in range(5)]
    assert np.allclose(prune.channel_importance(wr), want, rtol=1e-12)


def test_importance_ordering_preserved():
    w = np.stack([np.full((1, 3), 1.0), np.full((1, 3), 2.0)]).astype(np.float32)
    s = prune.channel_importance(w)
    assert s[0] == 3.0 and s[1] == 6.0 and s[0] < s[1]


def test_flatten_dim_small_chain():
    # single conv (1->2 ch) on length-10 input with pool: 2 x 4 = 8
    m = nn.ModelSpec(1, 10, [nn.Conv1D(1, 2), nn.MaxPool1D(), nn.Flatten(),
                             nn.Dense(8, 2), nn.Softmax()])
    assert prune.flatten_dim(m) == 8


def test_flatten_dim_canonical():
    m = nn.canonical_model(seed=1)
    assert prune.flatten_dim(m) == 35072


def test_canonical_prune_to_8704():
    m = nn.canonical_model(seed=1)
    pruned, record = prune.prune_channels(m, prune.PruneConfig(target_flatten=8704))
    assert prune.flatten_dim(pruned) == 8704
    conv_idx = max(i for i, s in enumerate(pruned.layers)
                   if isinstance(s, nn.Conv1D))
    assert pruned.layers[conv_idx].out_ch == 68
    assert len(record.removed) == 274 - 68
    assert len(record.retained) == 68
    # dense MAC count shrinks by exactly the removed fraction
    dense_idx = min(i for i, s in enumerate(pruned.layers)
                    if isinstance(s, nn.Dense))
    before = dict(prune.mac_counts(m))[dense_idx]
    after = dict(prune.mac_counts(pruned))[dense_idx]
    assert before == 35072 * 64 and after == 8704 * 64
    assert after * 274 == before * 68


def test_prune_noop():
    m = nn.build_model(32, (4, 6), 8, 2, seed=2)
    pruned, record = prune.prune_channels(m, prune.PruneConfig(target_channels=6))
    assert record.removed == []
    assert pruned is m


def test_prune_partition_invariant():
    m = nn.build_model(64, (4, 10), 8, 2, seed=3)
    pruned, record = prune.prune_channels(m, prune.PruneConfig(target_channels=7))
    assert sorted(record.removed_indices() + record.retained) == list(range(10))


def test_prune_idempotent():
    m = nn.build_model(64, (4, 10), 8, 2, seed=3)
    cfg = prune.PruneConfig(target_channels=6)
    p1, _ = prune.prune_channels(m, cfg)
    p2, rec2 = prune.prune_channels(p1, cfg)
    assert rec2.removed == []
    assert p2 is p1


def test_prune_zero_channel_exactness():
    # a channel with zero filter AND zero downstream dense columns does not
    # contribute; removing it leaves forward outputs bitwise unchanged
    m = nn.ModelSpec(1, 12, [nn.Conv1D(1, 4), nn.ReLU(), nn.MaxPool1D(),
                             nn.Flatten(), nn.Dense(20, 3), nn.Softmax()])
    rng = np.random.default_rng(8)
    w = rng.normal(size=(4, 1, 3)).astype(np.float32)
    b = rng.normal(size=4).astype(np.float32)
    dead = 2
    w[dead] = 0.0
    b[dead] = 0.0
    dw = rng.normal(size=(3, 20)).astype(np.float32)
    db = rng.normal(size=3).astype(np.float32)
    dw[:, dead * 5:(dead + 1) * 5] = 0.0
    m.weights = {0: (w, b), 4: (dw, db)}
    m.validate()

    pruned, record = prune.prune_channels(m, prune.PruneConfig(target_channels=3))
    assert record.removed_indices() == [dead]
    for seed in range(10):
        x = T(np.random.default_rng(seed).uniform(-1, 1, (1, 12)).astype(np.float32))
        p_orig, _ = nn.model_forward(m, x)
        p_pruned, _ = nn.model_forward(pruned, x)
        assert np.array_equal(p_orig, p_pruned)


def test_prune_tie_break_higher_index_first():
    m = nn.ModelSpec(1, 12, [nn.Conv1D(1, 4), nn.Flatten(),
                             nn.Dense(40, 2), nn.Softmax()])
    w = np.ones((4, 1, 3), dtype=np.float32)  # all scores equal
    b = np.zeros(4, dtype=np.float32)
    m.weights = {0: (w, b),
                 2: (np.ones((2, 40), dtype=np.float32), np.zeros(2, dtype=np.float32))}
    _, record = prune.prune_channels(m, prune.PruneConfig(target_channels=2))
    assert record.removed_indices() == [2, 3]  # higher indices pruned first


def test_prune_errors():
    m = nn.build_model(64, (4, 10), 8, 2, seed=3)
    with pytest.raises(TargetUnachievable):
        prune.prune_channels(m, prune.PruneConfig(target_flatten=7))  # not divisible
    with pytest.raises(TargetUnachievable):
        prune.prune_channels(m, prune.PruneConfig(target_channels=99))
    no_flat = nn.ModelSpec(1, 8, [nn.Conv1D(1, 2), nn.Softmax()])
    with pytest.raises(NoFlattenLayer):
        prune.prune_channels(no_flat, prune.PruneConfig(target_channels=1))
    with pytest.raises(ValueError):
        prune.PruneConfig(target_flatten=8, target_channels=2)
    with pytest.raises(ValueError):
        prune.PruneConfig()


def test_prune_record_file(tmp_path):
    m = nn.build_model(64, (4, 10), 8, 2, seed=3)
    _, record = prune.prune_channels(m, prune.PruneConfig(target_channels=7))
    path = tmp_path / "prune.txt"
    prune.write_prune_record(path, record)
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 3
    for line, (idx, score) in zip(lines, record.removed):
        got_idx, got_score = line.split()
        assert int(got_idx) == idx
        assert float(got_score) == score
