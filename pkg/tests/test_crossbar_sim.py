import numpy as np
import pytest

from superres.crossbar_sim import (
    NodeSpec,
    NonIdealityConfig,
    ProgrammedCrossbar,
    ReadNoiseScope,
    Topology,
    effective_node_conductance,
    ideal_vmm,
    noisy_read,
    relative_current_error,
    signed_read,
    tile_and_sum,
)
from superres.device_model import DeviceSpec, derive_levels
from superres.errors import DegeneratePathError, DimensionMismatchError, DomainError, OverlappingPairsError
from superres.levels_core import LevelSet

LEVELS = derive_levels(DeviceSpec(1e3, 1e5, 4))


def make_crossbar(n, k, m=2, levels=LEVELS, seed=0):
    rng = np.random.default_rng(seed)
    assignments = rng.integers(0, levels.L, (n, k, m))
    realized = np.asarray(levels.levels)[assignments]
    return ProgrammedCrossbar((NodeSpec(m, levels),) * n, assignments, realized)


def test_noise_free_read_matches_ideal_vmm():
    crossbar = make_crossbar(6, 5)
    v = np.linspace(0.1, 0.6, 6)
    read = noisy_read(crossbar, v, NonIdealityConfig.disabled(), trial=0)
    expected = np.einsum("i,ijd->j", v, crossbar.realized)
    assert np.allclose(read.currents, expected, rtol=1e-12)
    assert np.array_equal(read.currents, ideal_vmm(crossbar, v))
    assert np.all(read.rce_percent == 0)


def test_reference_measures_quantization_error():
    crossbar = make_crossbar(3, 2, m=1)
    reference = crossbar.realized[..., 0] * 1.1
    read = noisy_read(crossbar, np.ones(3), NonIdealityConfig.disabled(), 0, reference)
    assert read.rce_percent == pytest.approx(np.full(2, 100 * 0.1 / 1.1))


def test_reads_are_reproducible_per_trial():
    crossbar = make_crossbar(5, 4)
    v = np.full(5, 0.5)
    for scope in ReadNoiseScope:
        cfg = NonIdealityConfig(read_noise_frac=0.1, read_noise_scope=scope, boundary_drift_frac=0.2,
                                read_instability_frac=0.1, wire_enabled=True, master_seed=9)
        first = noisy_read(crossbar, v, cfg, 3)
        assert np.array_equal(first.currents, noisy_read(crossbar, v, cfg, 3).currents)
        assert not np.array_equal(first.currents, noisy_read(crossbar, v, cfg, 4).currents)
        other_seed = noisy_read(crossbar, v, cfg.with_(master_seed=10), 3)
        assert not np.array_equal(first.currents, other_seed.currents)


def test_column_read_noise_statistics():
    crossbar = make_crossbar(8, 10)
    v = np.full(8, 0.5)
    cfg = NonIdealityConfig(read_noise_frac=0.1, read_noise_scope=ReadNoiseScope.COLUMN, master_seed=1)
    rce = np.concatenate([noisy_read(crossbar, v, cfg, t).rce_percent for t in range(200)])
    # |N(0, 1)| has mean sqrt(2 / pi)
    assert rce.mean() == pytest.approx(10 * np.sqrt(2 / np.pi), abs=0.5)


def test_wire_resistance_only_lowers_currents():
    crossbar = make_crossbar(6, 6)
    v = np.linspace(0.2, 1.0, 6)
    cfg = NonIdealityConfig(read_noise_frac=0.0, wire_enabled=True, master_seed=3)
    read = noisy_read(crossbar, v, cfg, 0)
    assert np.all(read.currents <= read.ideal_currents)
    assert np.all(read.rce_percent > 0)


def test_boundary_drift_keeps_conductances_positive():
    crossbar = make_crossbar(4, 4)
    cfg = NonIdealityConfig(read_noise_frac=0.0, boundary_drift_frac=0.9, master_seed=5)
    read = noisy_read(crossbar, np.ones(4), cfg, 0)
    assert np.all(read.currents > 0)
    assert not np.allclose(read.currents, read.ideal_currents)


def test_tile_and_sum_matches_single_crossbar():
    top, bottom = make_crossbar(3, 4, seed=1), make_crossbar(4, 4, seed=2)
    v = np.linspace(0.0, 1.0, 7)
    cfg = NonIdealityConfig.disabled()
    whole = noisy_read(ProgrammedCrossbar.stack([top, bottom]), v, cfg, 0)
    tiled = tile_and_sum([top, bottom], [v[:3], v[3:]], cfg, 0)
    assert np.array_equal(tiled.currents, whole.currents)
    assert np.allclose(tiled.ideal_currents, whole.ideal_currents, rtol=1e-12)


def test_tile_and_sum_adds_column_noise_once():
    top, bottom = make_crossbar(3, 4, seed=1), make_crossbar(4, 4, seed=2)
    v = np.linspace(0.1, 1.0, 7)
    cfg = NonIdealityConfig(read_noise_frac=0.1, read_noise_scope=ReadNoiseScope.COLUMN, master_seed=8)
    whole = noisy_read(ProgrammedCrossbar.stack([top, bottom]), v, cfg, 5)
    tiled = tile_and_sum([top, bottom], [v[:3], v[3:]], cfg, 5)
    assert tiled.currents == pytest.approx(whole.currents, rel=1e-12)
    assert not np.allclose(tiled.currents, tiled.ideal_currents)


def test_tile_and_sum_validation():
    cfg = NonIdealityConfig.disabled()
    with pytest.raises(DimensionMismatchError):
        tile_and_sum([], [], cfg, 0)
    with pytest.raises(DimensionMismatchError):
        tile_and_sum([make_crossbar(2, 3), make_crossbar(2, 4)], [np.ones(2), np.ones(2)], cfg, 0)
    with pytest.raises(DimensionMismatchError):
        tile_and_sum([make_crossbar(2, 3)], [np.ones(2), np.ones(2)], cfg, 0)


def test_input_noise_is_clipped_and_drawn_per_variance():
    n = 64
    levels = LevelSet((1e-3,))
    crossbar = ProgrammedCrossbar(
        (NodeSpec(1, levels),) * n, np.zeros((n, n, 1), dtype=np.int64), np.full((n, n, 1), 1e-3)
    )
    quiet = NonIdealityConfig(read_noise_frac=0.0, master_seed=5)

    def delivered(variance):
        # an identity reference exposes the inputs the array actually received
        read = noisy_read(crossbar, np.zeros(n), quiet.with_(input_noise_variance=variance), 0, np.eye(n))
        return read.ideal_currents

    small, large = delivered(1.0), delivered(4.0)
    assert (small >= 0).all() and (large >= 0).all()
    assert 0 < np.count_nonzero(small) < n
    assert not np.allclose(large, 2 * small)
    assert np.array_equal(small, delivered(1.0))


def test_input_length_must_match_rows():
    with pytest.raises(DimensionMismatchError):
        noisy_read(make_crossbar(3, 3), np.ones(4), NonIdealityConfig.disabled(), 0)


def test_batched_inputs():
    crossbar = make_crossbar(3, 2)
    batch = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    currents = ideal_vmm(crossbar, batch)
    assert currents.shape == (2, 2)
    assert np.allclose(currents[0], crossbar.realized[0].sum(axis=-1))
    assert np.allclose(currents[1], crossbar.realized[2].sum(axis=-1))


def test_effective_node_conductance_topologies():
    g = [1e-4, 2e-4, 4e-4, 8e-4]
    assert effective_node_conductance(g) == pytest.approx(15e-4)
    assert effective_node_conductance(g, Topology.SERIES) == pytest.approx(1 / sum(1 / x for x in g))
    expected_3d = 1 / (1 / 1e-4 + 1 / 4e-4) + 1 / (1 / 2e-4 + 1 / 8e-4)
    assert effective_node_conductance(g, Topology.THREE_D_TWO_LAYER) == pytest.approx(expected_3d)
    assert effective_node_conductance([1e-3], wire_series_res=10.0) == pytest.approx(1 / (1e3 + 10))


def test_effective_node_conductance_errors():
    with pytest.raises(DegeneratePathError):
        effective_node_conductance([1e-4, 0.0], Topology.SERIES)
    assert effective_node_conductance([1e-4, 0.0]) == pytest.approx(1e-4)
    with pytest.raises(DimensionMismatchError):
        effective_node_conductance([1e-4, 2e-4, 3e-4], Topology.THREE_D_TWO_LAYER)
    with pytest.raises(DimensionMismatchError):
        effective_node_conductance([])


def test_relative_current_error_undefined_below_a_picoamp():
    rce = relative_current_error([1e-6, 5e-13, -2e-6], [1.1e-6, 0.0, -1.8e-6])
    assert rce[0] == pytest.approx(10.0)
    assert np.isnan(rce[1])
    assert rce[2] == pytest.approx(10.0)


def test_rce_does_not_depend_on_input_scale():
    crossbar = make_crossbar(6, 5, seed=4)
    v = np.linspace(0.1, 0.6, 6)
    for scope in ReadNoiseScope:
        cfg = NonIdealityConfig(read_noise_frac=0.1, read_noise_scope=scope, boundary_drift_frac=0.2,
                                read_instability_frac=0.1, wire_enabled=True, master_seed=6)
        base = noisy_read(crossbar, v, cfg, 2).rce_percent
        for alpha in (0.01, 3.0):
            assert noisy_read(crossbar, alpha * v, cfg, 2).rce_percent == pytest.approx(base, rel=1e-9)


def test_signed_read_and_errors():
    crossbar = make_crossbar(2, 4)
    read = noisy_read(crossbar, np.ones(2), NonIdealityConfig.disabled(), 0)
    diff = signed_read((0, 2), (1, 3), read)
    assert diff == pytest.approx([read.currents[0] - read.currents[1], read.currents[2] - read.currents[3]])
    with pytest.raises(OverlappingPairsError):
        signed_read((0, 1), (1, 2), read)
    with pytest.raises(DimensionMismatchError):
        signed_read((0, 2), (1,), read)
    with pytest.raises(DimensionMismatchError):
        signed_read((0,), (5,), read)


def test_crossbar_validation():
    levels = LevelSet((1e-5, 1e-4))
    with pytest.raises(DomainError):
        ProgrammedCrossbar((NodeSpec(1, levels),), np.array([[[2]]]), np.array([[[1e-4]]]))
    with pytest.raises(DomainError):
        ProgrammedCrossbar((NodeSpec(1, levels),), np.array([[[1]]]), np.array([[[0.0]]]))
    with pytest.raises(DimensionMismatchError):
        ProgrammedCrossbar((NodeSpec(1, levels),) * 2, np.array([[[1]]]), np.array([[[1e-4]]]))


def test_mixed_node_sizes_share_a_crossbar():
    small, large = NodeSpec(1, LEVELS), NodeSpec(3, LEVELS)
    assignments = np.array([[[3, -1, -1]], [[3, 3, 3]]])
    realized = np.array([[[1e-3, 0.0, 0.0]], [[1e-3, 1e-3, 1e-3]]])
    crossbar = ProgrammedCrossbar((small, large), assignments, realized)
    assert len(crossbar.row_groups()) == 2
    assert ideal_vmm(crossbar, [1.0, 1.0]) == pytest.approx([4e-3])


def test_noise_config_validation():
    with pytest.raises(DomainError):
        NonIdealityConfig(read_noise_frac=-0.1)
    with pytest.raises(DomainError):
        NonIdealityConfig(boundary_drift_frac=1.0)
    assert NonIdealityConfig.disabled().is_deterministic
    assert not NonIdealityConfig().is_deterministic
