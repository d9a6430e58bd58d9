import numpy as np
import pytest

from superres.crossbar_sim import NonIdealityConfig, Topology, noisy_read, signed_read
from superres.device_model import DeviceSpec, LevelPlacement, derive_levels
from superres.errors import DomainError
from superres.levels_core import LevelSet
from superres.weight_mapper import (
    build_quantizer,
    currents_to_weights,
    differential_pairs,
    map_matrix,
    node_catalog,
    quantize_weight,
    quantizer_frame,
)

LEVELS_4 = derive_levels(DeviceSpec(1e3, 1e5, 4))
RANDOM_LEVELS = derive_levels(DeviceSpec(1e3, 1e5, 5, LevelPlacement.RANDOM, placement_seed=7))

LOOKUP_ROWS = [
    (10, 10, 10, 30), (15, 10, 10, 35), (15, 15, 10, 40), (15, 15, 15, 45),
    (29, 10, 10, 49), (29, 15, 10, 54), (29, 15, 15, 59), (29, 29, 10, 68),
    (29, 29, 15, 73), (29, 29, 29, 87), (1000, 10, 10, 1020), (1000, 15, 10, 1025),
    (1000, 15, 15, 1030), (1000, 29, 10, 1039), (1000, 29, 15, 1044), (1000, 29, 29, 1058),
    (1000, 1000, 10, 2010), (1000, 1000, 15, 2015), (1000, 1000, 29, 2029), (1000, 1000, 1000, 3000),
]


@pytest.fixture
def lookup_quantizer():
    return build_quantizer(LevelSet.from_microsiemens([10, 15, 29, 1000]), 3, w_min=0.0, w_max=1.0)


def test_lookup_table_rows(lookup_quantizer):
    frame = quantizer_frame(lookup_quantizer)
    assert list(frame.columns) == ["g_1", "g_2", "g_3", "g_n", "w_realized"]
    assert len(frame) == 20
    assert frame[["g_1", "g_2", "g_3", "g_n"]].to_numpy() == pytest.approx(np.array(LOOKUP_ROWS, dtype=float))
    expected_w = (np.array([row[3] for row in LOOKUP_ROWS]) - 30) / 2970
    assert frame["w_realized"].to_numpy() == pytest.approx(expected_w)


def test_quantize_weight_picks_nearest_entry(lookup_quantizer):
    q = quantize_weight(lookup_quantizer, 0.5)
    assert q.g == pytest.approx(1058e-6)
    assert q.assignment.assignment == (3, 2, 2)
    assert q.w_realized == pytest.approx(1028 / 2970)
    assert not q.clamped
    assert quantize_weight(lookup_quantizer, 0.0).g == pytest.approx(30e-6)
    assert quantize_weight(lookup_quantizer, 1.0).g == pytest.approx(3000e-6)


def test_out_of_range_weights_are_clamped(lookup_quantizer):
    idx, clamped = lookup_quantizer.quantize([-1.0, 0.2, 2.0])
    assert clamped == 2
    assert idx[0] == 0 and idx[2] == 19
    assert quantize_weight(lookup_quantizer, 7.0).clamped


def test_nearest_ties_go_to_lower_conductance():
    q = build_quantizer(LevelSet((1.0, 2.0, 4.0)), 1)
    assert q.nearest([1.5, 3.0, 3.5]).tolist() == [0, 1, 2]


def test_coincident_sums_resolve_to_first_entry():
    q = build_quantizer(LevelSet((1.0, 2.0, 3.0)), 2)
    assert q.catalog.combinatorial_count == 6
    assert q.catalog.effective_count == 5
    (idx,) = q.nearest([4.0])
    assert q.conductances[idx] == 4.0
    assert q.catalog.entries[idx].assignment == (1, 1)


def test_quantization_is_monotone_and_idempotent():
    for q in (build_quantizer(LEVELS_4, 3, w_min=-1.0, w_max=1.0), build_quantizer(RANDOM_LEVELS, 2)):
        weights = np.linspace(q.w_min - 0.1, q.w_max + 0.1, 2001)
        idx, _ = q.quantize(weights)
        assert (np.diff(q.conductances[idx]) >= 0).all()

        realized = q.to_weight(q.conductances)
        again, _ = q.quantize(realized)
        assert q.conductances[again] == pytest.approx(q.conductances, rel=1e-12)
        requantized, _ = q.quantize(q.to_weight(q.conductances[idx]))
        assert q.conductances[requantized] == pytest.approx(q.conductances[idx], rel=1e-12)


def test_max_error_is_half_the_largest_gap(lookup_quantizer):
    assert lookup_quantizer.max_error() == pytest.approx((3000e-6 - 2029e-6) / 2)


def test_degenerate_and_invalid_quantizers():
    with pytest.raises(DomainError):
        build_quantizer(LevelSet((1e-4,)), 3)
    with pytest.raises(DomainError):
        build_quantizer(LEVELS_4, 2, w_min=1.0, w_max=1.0)


def test_series_and_three_d_catalogs():
    levels = LevelSet((1.0, 2.0))
    series = node_catalog(levels, 2, Topology.SERIES)
    assert list(series.sums) == pytest.approx([0.5, 2 / 3, 1.0])
    three_d = node_catalog(levels, 1, Topology.THREE_D_TWO_LAYER)
    assert three_d.combinatorial_count == 3
    assert list(three_d.sums) == pytest.approx([0.5, 2 / 3, 1.0])
    assert all(len(e.assignment) == 2 for e in three_d.entries)


def test_signed_mapping_uses_differential_pairs():
    q = build_quantizer(LEVELS_4, 3, w_min=0.0, w_max=1.0)
    mapped = map_matrix([[0.4, -0.4]], q, signed=True)
    assert (mapped.pos_cols, mapped.neg_cols) == differential_pairs(2) == ((0, 2), (1, 3))
    assignments = mapped.crossbar.assignments[0]
    assert (assignments[1] == 0).all() and (assignments[2] == 0).all()
    assert assignments[0].tolist() == assignments[3].tolist()

    read = noisy_read(mapped.crossbar, [1.0], NonIdealityConfig.disabled(), 0)
    weights = currents_to_weights(q, signed_read(mapped.pos_cols, mapped.neg_cols, read))
    # 0.4 lands on the fifth of ten equally spaced node levels
    assert weights == pytest.approx([4 / 9, -4 / 9])


def test_signed_mapping_anchors_zero_for_any_quantizer_range():
    wide = build_quantizer(LEVELS_4, 3, w_min=-1.0, w_max=1.0)
    magnitudes = build_quantizer(LEVELS_4, 3, w_min=0.0, w_max=1.0)
    quiet = NonIdealityConfig.disabled()

    zero = map_matrix(np.zeros((2, 2)), wide, signed=True)
    read = noisy_read(zero.crossbar, [1.0, 1.0], quiet, 0)
    assert signed_read(zero.pos_cols, zero.neg_cols, read) == pytest.approx([0.0, 0.0], abs=1e-18)

    weights = np.random.default_rng(3).uniform(-1.0, 1.0, (4, 3))
    inputs = [0.2, 0.4, 0.6, 0.8]
    forward = map_matrix(weights, wide, signed=True)
    backward = map_matrix(-weights, wide, signed=True)
    anchored = map_matrix(weights, magnitudes, signed=True)
    assert np.array_equal(forward.crossbar.assignments, anchored.crossbar.assignments)
    i_forward = signed_read(forward.pos_cols, forward.neg_cols, noisy_read(forward.crossbar, inputs, quiet, 0))
    i_backward = signed_read(backward.pos_cols, backward.neg_cols, noisy_read(backward.crossbar, inputs, quiet, 0))
    assert i_forward == pytest.approx(-i_backward)
    assert currents_to_weights(wide, i_forward) == pytest.approx(currents_to_weights(magnitudes, i_forward))


def test_unsigned_mapping_reference_is_unquantized():
    q = build_quantizer(LEVELS_4, 2, w_min=0.0, w_max=1.0)
    mapped = map_matrix([[0.0, 0.33, 1.0]], q, signed=False)
    assert mapped.neg_cols == ()
    assert mapped.reference[0] == pytest.approx(q.to_conductance([0.0, 0.33, 1.0]))


def test_per_row_quantizers_pad_smaller_nodes():
    small = build_quantizer(LEVELS_4, 1, w_min=0.0, w_max=1.0)
    large = build_quantizer(LEVELS_4, 3, w_min=0.0, w_max=1.0)
    mapped = map_matrix([[1.0], [1.0]], [small, large], signed=False)
    assert mapped.crossbar.assignments.shape == (2, 1, 3)
    assert mapped.crossbar.assignments[0, 0].tolist() == [3, -1, -1]
    assert mapped.crossbar.assignments[1, 0].tolist() == [3, 3, 3]


def test_programming_variability_is_seeded():
    q = build_quantizer(LEVELS_4, 2, w_min=-1.0, w_max=1.0)
    weights = np.random.default_rng(0).uniform(-1, 1, (4, 4))
    cfg = NonIdealityConfig(conductance_var_frac=0.1, master_seed=2)
    a = map_matrix(weights, q, False, cfg, trial=1)
    b = map_matrix(weights, q, False, cfg, trial=1)
    nominal = map_matrix(weights, q, False)
    assert np.array_equal(a.crossbar.realized, b.crossbar.realized)
    assert np.array_equal(a.crossbar.assignments, nominal.crossbar.assignments)
    assert not np.array_equal(a.crossbar.realized, nominal.crossbar.realized)


def test_program_and_verify_lands_within_tolerance():
    q = build_quantizer(LEVELS_4, 2, w_min=0.0, w_max=1.0)
    cfg = NonIdealityConfig(program_verify=True, program_tolerance_frac=0.01, master_seed=4)
    mapped = map_matrix([[0.2, 0.9]], q, False, cfg)
    nominal = map_matrix([[0.2, 0.9]], q, False).crossbar.realized
    assert np.allclose(mapped.crossbar.realized, nominal, rtol=0.0101)


def test_held_levels_differ_from_targets():
    q = build_quantizer(LEVELS_4, 1, w_min=0.0, w_max=1.0)
    held = LevelSet(tuple(g * 0.9 for g in LEVELS_4.levels))
    mapped = map_matrix([[1.0]], q, False, realized_levels=held)
    assert mapped.crossbar.realized[0, 0, 0] == pytest.approx(0.9e-3)
    assert mapped.reference[0, 0] == pytest.approx(1e-3)


def test_map_matrix_validation():
    q = build_quantizer(LEVELS_4, 1)
    with pytest.raises(DomainError):
        map_matrix([0.1, 0.2], q, False)
    with pytest.raises(DomainError):
        map_matrix([[np.nan]], q, False)
    with pytest.raises(DomainError):
        map_matrix([[0.1], [0.2]], [q], False)
