"""Timing model tests: the closed forms and the event-driven FSM walk
cross-check each other (that two-route agreement is the oracle)."""

import numpy as np
import pytest

from uavacc import nn, prune, sim
from uavacc.errors import (
    InvalidClock,
    NegativeCoefficient,
    TooFewLayers,
    UnsupportedRegime,
)

P = sim.ScheduleMode.PARALLEL
R = sim.ScheduleMode.REUSABLE


def test_closed_form_examples():
    assert sim.closed_form_cycles(sim.profile([3, 4]), R) == 8
    assert sim.closed_form_cycles(sim.profile([2, 2, 2]), P) == 6
    assert sim.closed_form_cycles(sim.profile([1, 1]), P) == 2
    assert sim.closed_form_cycles(sim.profile([1, 1]), R) == 3


def test_simulator_matches_examples():
    assert sim.simulate_schedule(sim.profile([3, 4]), R).total_cycles == 8
    assert sim.simulate_schedule(sim.profile([2, 2, 2]), P).total_cycles == 6
    assert sim.simulate_schedule(sim.profile([1, 1]), P).total_cycles == 2
    assert sim.simulate_schedule(sim.profile([1, 1]), R).total_cycles == 3


def test_oracle_equivalence_100_random_profiles():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        L = int(rng.integers(2, 7))
        n = rng.integers(1, 65, size=L).tolist()
        p = sim.profile(n)
        for mode in (P, R):
            assert (sim.simulate_schedule(p, mode).total_cycles
                    == sim.closed_form_cycles(p, mode))


def test_degenerate_single_layer():
    p1 = sim.profile([5])
    with pytest.warns(RuntimeWarning):
        assert sim.closed_form_cycles(p1, P) == 0
    with pytest.warns(RuntimeWarning):
        assert sim.simulate_schedule(p1, P).total_cycles == 0
    with pytest.raises(TooFewLayers):
        sim.closed_form_cycles(p1, R)
    with pytest.raises(TooFewLayers):
        sim.simulate_schedule(p1, R)


def test_closed_form_rejects_non_unit_regime():
    with pytest.raises(UnsupportedRegime):
        sim.closed_form_cycles(sim.profile([1, 2], t_mac=2), R)
    with pytest.raises(UnsupportedRegime):
        sim.closed_form_cycles(sim.profile([1, 2], k=[2, 1]), R)
    # but the event simulator handles the general regime
    rep = sim.simulate_schedule(sim.profile([1, 2], k=[3, 1], t_serial=2), R)
    assert rep.total_cycles == (1 + 2) + 2 + 0  # MACs + serial, no AF stall at L=2


def test_monotonicity():
    rng = np.random.default_rng(7)
    for _ in range(50):
        L = int(rng.integers(2, 6))
        n = rng.integers(1, 40, size=L).tolist()
        p = sim.profile(n)
        for mode in (P, R):
            base = sim.simulate_schedule(p, mode).total_cycles
            grown = list(n)
            grown[int(rng.integers(0, L))] += int(rng.integers(1, 10))
            assert sim.simulate_schedule(sim.profile(grown), mode).total_cycles >= base
            longer = n + [int(rng.integers(1, 40))]
            assert sim.simulate_schedule(sim.profile(longer), mode).total_cycles >= base


def test_reuse_overhead_identity():
    # Reusable - Parallel == n(L) + L - 2 under unit constants
    rng = np.random.default_rng(99)
    for _ in range(50):
        L = int(rng.integers(2, 7))
        n = rng.integers(1, 64, size=L).tolist()
        p = sim.profile(n)
        diff = (sim.simulate_schedule(p, R).total_cycles
                - sim.simulate_schedule(p, P).total_cycles)
        assert diff == n[-1] + L - 2


def test_determinism():
    p = sim.profile([5, 9, 2], k=[4, 4, 4], t_af=2)
    a = sim.simulate_schedule(p, R)
    b = sim.simulate_schedule(p, R)
    assert a.total_cycles == b.total_cycles
    assert [(r.layer_id, r.mac_cycles, r.serial_cycles, r.af_cycles)
            for r in a.per_layer] == \
        [(r.layer_id, r.mac_cycles, r.serial_cycles, r.af_cycles)
         for r in b.per_layer]
    assert a.events == b.events


def test_breakdown_sums_to_total():
    p = sim.profile([7, 3, 5, 2], k=[10, 20, 30, 2], t_af=2, t_serial=3, t_mac=2)
    for mode in (P, R):
        rep = sim.simulate_schedule(p, mode)
        assert rep.total_cycles == sum(r.total for r in rep.per_layer)


# ---------------------------------------------------------------------------
# Model-derived profiles and the pruning linkage
# ---------------------------------------------------------------------------

def test_canonical_profile_serialized_counts():
    m = nn.canonical_model(seed=1)
    p = sim.profile_from_model(m)
    assert p.layer_ids[-2].startswith("dense")
    # flatten producer streams 35,072 elements into the dense stage
    conv3 = p.layer_ids.index("conv8")
    assert p.k[conv3] == 35072
    assert p.n[-2] == 35072 * 64

    pruned, _ = prune.prune_channels(m, prune.PruneConfig(target_flatten=8704))
    pp = sim.profile_from_model(pruned)
    assert pp.k[conv3] == 8704
    assert pp.n[-2] == 8704 * 64


def test_pruning_cycle_linkage():
    # stage cycles for streaming the flatten into the dense layer drop
    # 35,072 -> 8,704 exactly (ratio 8704:35072, i.e. 26,368 fewer cycles)
    m = nn.canonical_model(seed=1)
    pruned, _ = prune.prune_channels(m, prune.PruneConfig(target_flatten=8704))
    before = sim.simulate_schedule(sim.profile_from_model(m), R)
    after = sim.simulate_schedule(sim.profile_from_model(pruned), R)
    conv3_before = next(r for r in before.per_layer if r.layer_id == "conv8")
    conv3_after = next(r for r in after.per_layer if r.layer_id == "conv8")
    assert conv3_before.af_cycles == 35072
    assert conv3_after.af_cycles == 8704
    assert conv3_before.af_cycles - conv3_after.af_cycles == 26368


def test_unit_k_mode():
    m = nn.build_model(32, (4, 6), 8, 2, seed=5)
    p = sim.profile_from_model(m, k_mode="unit")
    assert all(kv == 1 for kv in p.k)
    assert (sim.simulate_schedule(p, R).total_cycles
            == sim.closed_form_cycles(p, R))


# ---------------------------------------------------------------------------
# Latency / energy / profile file
# ---------------------------------------------------------------------------

def test_latency():
    rep = sim.simulate_schedule(sim.profile([50, 49]), R)
    assert rep.total_cycles == 100
    assert sim.latency(rep, 100e6) == 1e-6
    assert rep.latency_s == 1e-6
    with pytest.raises(InvalidClock):
        sim.latency(rep, 0.0)


def test_energy_estimate():
    rep = sim.simulate_schedule(sim.profile([4, 6], k=[3, 1], t_af=2), R)
    assert sim.energy_estimate(rep, {"mac": 0.0, "serial": 0.0, "af": 0.0}) == 0.0
    only_mac = sim.energy_estimate(rep, {"mac": 2e-9})
    assert only_mac == rep.stage_totals()["mac"] * 2e-9
    # independent spreadsheet-style summation
    coeffs = {"mac": 1.5e-9, "serial": 2e-10, "af": 7e-10}
    want = sum(
        r.mac_cycles * coeffs["mac"] + r.serial_cycles * coeffs["serial"]
        + r.af_cycles * coeffs["af"] for r in rep.per_layer)
    assert sim.energy_estimate(rep, coeffs) == pytest.approx(want, rel=1e-12)
    with pytest.raises(NegativeCoefficient):
        sim.energy_estimate(rep, {"mac": -1.0})


def test_profile_file_roundtrip(tmp_path):
    p = sim.profile([10, 20, 5], k=[4, 2, 1], t_mac=2, t_af=3, t_serial=1,
                    layer_ids=["convA", "convB", "dense"])
    path = tmp_path / "profile.txt"
    sim.write_profile(path, p, clock_hz=100e6)
    loaded, clock = sim.read_profile(path)
    assert loaded == p
    assert clock == 100e6


def test_profile_file_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("bogus=1\n")
    with pytest.raises(ValueError):
        sim.read_profile(path)
    path.write_text("L0 1\n")
    with pytest.raises(ValueError):
        sim.read_profile(path)


def test_format_cycle_report():
    rep = sim.simulate_schedule(sim.profile([3, 4]), R)
    sim.latency(rep, 1e8)
    text = sim.format_cycle_report(rep)
    assert "total_cycles=8" in text
    assert "latency_s=" in text
    assert sim.COMPUTE_ONLY_NOTE in text
