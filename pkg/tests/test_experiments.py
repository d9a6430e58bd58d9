from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from experiments import EXPERIMENTS
from experiments.common import mean_rce
from experiments.levels_report import run_levels_report
from experiments.mapdump import run_mapdump
from experiments.nn_grid import run_nn_grid
from experiments.ratio_sweep import run_ratio_sweep
from experiments.rce_grid import run_rce_grid
from experiments.wire_table import CONDITIONS, run_wire_table
from superres.config import Experiment, build_config, load_config, with_overrides
from superres.errors import ConfigError
from superres.results import render_csv

DEVICE = {"r_on": 1e3, "r_off": 1e5, "placement": "random", "placement_seed": 7}
NOISY = {"read_noise_frac": 0.1, "read_noise_scope": "device"}
QUIET = {"read_noise_frac": 0.0}
CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def small(experiment, grid=None, nonideal=None, trials=3, seed=11, **sections):
    sections = {
        "crossbar": {"rows": 4, "cols": 3},
        "device": dict(DEVICE),
        "grid": {"m": (1, 2), "L": (2, 3), **(grid or {})},
        "nonideal": dict(NOISY if nonideal is None else nonideal),
        **sections,
    }
    return build_config(experiment, sections, {"trials": trials, "seed": seed})


def shipped(name, experiment):
    return load_config(CONFIG_DIR / f"{name}.ini", experiment, environ={})


def rce_values(frame):
    return frame[["m", "L", "row_type", "rce_percent"]].reset_index(drop=True)


def test_rce_grid_layout():
    frame = run_rce_grid(small(Experiment.RCE_GRID), progress=False)
    assert list(frame.columns) == ["row_type", "m", "L", "L_C", "trial", "column", "rce_percent"]
    # 4 cells x (3 trials x 6 physical columns + mean + std)
    assert len(frame) == 80
    trials = frame[frame["row_type"] == "trial"]
    assert sorted(trials["column"].unique()) == list(range(6))
    assert frame.groupby(["m", "L"])["L_C"].first().to_dict() == {(1, 2): 2, (1, 3): 3, (2, 2): 3, (2, 3): 6}
    assert (trials["rce_percent"] >= 0).all()


def test_rce_grid_is_seeded():
    cfg = small(Experiment.RCE_GRID)
    first = render_csv(run_rce_grid(cfg, progress=False), ())
    assert render_csv(run_rce_grid(cfg, progress=False), ()) == first
    assert render_csv(run_rce_grid(with_overrides(cfg, seed=12), progress=False), ()) != first


@pytest.mark.parametrize("experiment", [Experiment.RCE_GRID, Experiment.WIRE_TABLE, Experiment.NN_GRID])
def test_results_do_not_depend_on_worker_count(experiment, tmp_path):
    network = {"weights": str(tmp_path / "net.mxw"), "dataset": str(tmp_path / "test.csv"), "samples": 70}
    nonideal = {"conductance_var_frac": 0.1, "read_noise_frac": 0.05} if experiment is Experiment.NN_GRID else None
    cfg = small(experiment, nonideal=nonideal, trials=2, network=network)
    serial = EXPERIMENTS[experiment](cfg, progress=False).build()
    parallel = EXPERIMENTS[experiment](with_overrides(cfg, workers=3), progress=False).build()
    assert render_csv(serial, ()) == render_csv(parallel, ())


def test_single_ratio_of_100_reproduces_rce_grid():
    rce = run_rce_grid(small(Experiment.RCE_GRID), progress=False)
    ratio = run_ratio_sweep(small(Experiment.RATIO_SWEEP, grid={"ratios": (100.0,)}), progress=False)
    assert ratio["ratio"].eq(100.0).all()
    pd.testing.assert_frame_equal(rce_values(ratio), rce_values(rce))


def test_fresh_devices_reproduce_rce_grid():
    rce = run_rce_grid(small(Experiment.RCE_GRID), progress=False)
    aging = EXPERIMENTS[Experiment.AGING_SWEEP](
        small(Experiment.AGING_SWEEP, grid={"aging_ratios": (0.0,)}), progress=False
    ).build()
    pd.testing.assert_frame_equal(rce_values(aging), rce_values(rce))


def test_noiseless_inputs_reproduce_rce_grid():
    rce = run_rce_grid(small(Experiment.RCE_GRID), progress=False)
    noise = EXPERIMENTS[Experiment.NOISE_SWEEP](
        small(Experiment.NOISE_SWEEP, grid={"input_noise_variances": (0.0, 0.05)}), progress=False
    ).build()
    quiet = noise[noise["input_noise_variance"] == 0.0]
    pd.testing.assert_frame_equal(rce_values(quiet), rce_values(rce))
    noisy = noise[(noise["input_noise_variance"] == 0.05) & (noise["row_type"] == "trial")]
    assert len(noisy) == 4 * 3 * 6


def test_wire_table_conditions():
    cfg = small(Experiment.WIRE_TABLE, nonideal={"read_noise_frac": 0.0})
    frame = run_wire_table(cfg, progress=False)
    assert list(frame.columns[:4]) == ["m", "L", "L_C", "condition"]
    assert frame["condition"].unique().tolist() == list(CONDITIONS)
    # nothing random left in N: the same as a plain grid
    plain = run_rce_grid(small(Experiment.RCE_GRID, nonideal={"read_noise_frac": 0.0}), progress=False)
    pd.testing.assert_frame_equal(rce_values(frame[frame["condition"] == "N"]), rce_values(plain))
    # wire resistance changes the currents; instability is zero so R matches Y
    y = frame[frame["condition"] == "Y"]["rce_percent"].to_numpy()
    r = frame[frame["condition"] == "R"]["rce_percent"].to_numpy()
    n = frame[frame["condition"] == "N"]["rce_percent"].to_numpy()
    assert np.array_equal(y, r)
    assert not np.array_equal(y, n)


def test_levels_report_counts():
    cfg = small(Experiment.LEVELS, grid={"m": (1, 2, 8), "L": (1, 4, 12)})
    frame = run_levels_report(cfg, progress=False)
    assert frame[["m", "L", "L_C"]].values.tolist() == [
        [1, 1, 1], [1, 4, 4], [1, 12, 12], [2, 1, 1], [2, 4, 10], [2, 12, 78], [8, 1, 1], [8, 4, 165], [8, 12, 75582],
    ]
    assert (frame["effective_count"] <= frame["L_C"]).all()


def test_levels_report_linear_levels_collapse():
    cfg = small(Experiment.LEVELS, grid={"m": (3,), "L": (4,)}, device={"r_on": 1e3, "r_off": 1e5})
    row = run_levels_report(cfg, progress=False).iloc[0]
    assert (row["L_C"], row["effective_count"]) == (20, 10)


def test_levels_report_beyond_enumeration_cap():
    cfg = small(Experiment.LEVELS, grid={"m": (6,), "L": (12,)}, crossbar={"enum_cap": 100})
    row = run_levels_report(cfg, progress=False).iloc[0]
    assert row["L_C"] == 12376
    assert np.isnan(row["effective_count"])


def test_mapdump_writes_lookup_table(tmp_path):
    cfg = small(
        Experiment.MAPDUMP,
        grid={"m": (3,), "L": (4,)},
        crossbar={"signed": False, "w_min": 0.0, "w_max": 1.0},
        device={"r_on": 1e3, "r_off": 1e5, "levels_uS": (10.0, 15.0, 29.0, 1000.0)},
    )
    out = tmp_path / "map.csv"
    frame = run_mapdump(cfg, str(out), progress=False)
    assert len(frame) == 20
    lines = out.read_text().splitlines()
    assert lines[5] == "g_1,g_2,g_3,g_n,w_realized"
    assert lines[6] == "10,10,10,30,0"
    assert lines[-1] == "1000,1000,1000,3000,1"
    assert lines[10] == "29,10,10,49,0.00639731"


def test_mapdump_needs_one_configuration():
    with pytest.raises(ConfigError):
        run_mapdump(small(Experiment.MAPDUMP), progress=False)


def test_nn_grid_builds_missing_fixture(tmp_path):
    network = {"weights": str(tmp_path / "fixture.mxw"), "dataset": str(tmp_path / "fixture.csv"), "samples": 40}
    cfg = small(Experiment.NN_GRID, grid={"m": (1,), "L": (2, 4), "variabilities": (0.0,)},
                nonideal=QUIET, network=network)
    frame = run_nn_grid(cfg, progress=False)
    assert (tmp_path / "fixture.mxw").exists() and (tmp_path / "fixture.csv").exists()
    assert frame["trials"].tolist() == [1, 1]
    assert frame["L_C"].tolist() == [2, 4]
    assert frame["float_baseline_percent"].nunique() == 1


@pytest.mark.slow
def test_more_devices_per_node_lower_the_error():
    cfg = build_config(Experiment.RCE_GRID, {"device": dict(DEVICE), "nonideal": dict(NOISY),
                                             "grid": {"m": (1, 3, 6), "L": (2, 4, 8, 12)}},
                       {"trials": 100, "seed": 1})
    frame = run_rce_grid(cfg, progress=False)
    assert mean_rce(frame, m=1, L=2) > 10.0
    assert mean_rce(frame, m=1, L=2) > mean_rce(frame, m=3, L=2)
    for L in (2, 4, 8, 12):
        assert mean_rce(frame, m=1, L=L) > mean_rce(frame, m=3, L=L) > mean_rce(frame, m=6, L=L)


@pytest.mark.slow
def test_quantization_error_shrinks_tenfold():
    cfg = build_config(Experiment.RCE_GRID, {"device": dict(DEVICE), "nonideal": dict(QUIET),
                                             "grid": {"m": (1, 6), "L": (12,)}},
                       {"trials": 20, "seed": 1})
    frame = run_rce_grid(cfg, progress=False)
    assert mean_rce(frame, m=6, L=12) * 10 <= mean_rce(frame, m=1, L=12)


@pytest.mark.slow
def test_ratio_sweep_extremes():
    cfg = build_config(Experiment.RATIO_SWEEP, {"device": dict(DEVICE), "nonideal": dict(NOISY),
                                                "grid": {"m": (1, 6), "L": (4,), "ratios": (100.0, 5.0)}},
                       {"trials": 50, "seed": 1})
    frame = run_ratio_sweep(cfg, progress=False)
    assert mean_rce(frame, ratio=5.0, m=6) < mean_rce(frame, ratio=100.0, m=1)


@pytest.mark.slow
def test_reprogrammed_aged_devices_stay_accurate():
    cfg = build_config(Experiment.AGING_SWEEP, {"device": dict(DEVICE), "nonideal": dict(NOISY),
                                                "grid": {"m": (4, 5, 6), "L": tuple(range(2, 13)),
                                                         "aging_ratios": (0.7,)}},
                       {"trials": 100, "seed": 1})
    frame = EXPERIMENTS[Experiment.AGING_SWEEP](cfg, progress=False).build()
    for m in (4, 5, 6):
        for L in range(2, 13):
            assert mean_rce(frame, aging_ratio=0.7, m=m, L=L) < 10.0


@pytest.mark.slow
def test_shipped_ratio_sweep_trend():
    frame = run_ratio_sweep(shipped("ratio", Experiment.RATIO_SWEEP), progress=False)
    ratios = sorted(frame["ratio"].unique())
    assert ratios == [5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 100.0]
    single = [mean_rce(frame, ratio=r, m=1) for r in ratios]
    six = [mean_rce(frame, ratio=r, m=6) for r in ratios]
    assert all(b >= a for a, b in zip(single, single[1:]))
    assert max(six) - min(six) < 0.25 * (max(single) - min(single))


@pytest.mark.slow
def test_shipped_noise_sweep_is_flat():
    frame = EXPERIMENTS[Experiment.NOISE_SWEEP](shipped("noise", Experiment.NOISE_SWEEP), progress=False).build()
    raw = frame[frame["row_type"] == "trial"]
    per_trial = raw.groupby(["input_noise_variance", "trial"])["rce_percent"].mean()
    by_variance = per_trial.groupby(level="input_noise_variance")
    means = by_variance.mean()
    errors = by_variance.std(ddof=1) / np.sqrt(by_variance.size())
    assert len(means) == 5
    assert means.max() - means.min() < 2 * errors.max()


@pytest.mark.slow
def test_shipped_wire_table_trends():
    cfg = shipped("wire", Experiment.WIRE_TABLE)
    frame = run_wire_table(cfg, progress=False)
    for L in cfg.grid.L:
        for condition in CONDITIONS:
            assert mean_rce(frame, condition=condition, m=6, L=L) < mean_rce(frame, condition=condition, m=1, L=L)
        for m in range(2, 7):
            wired = mean_rce(frame, condition="Y", m=m, L=L)
            assert abs(wired - mean_rce(frame, condition="N", m=m, L=L)) < 1.0


@pytest.mark.slow
def test_shipped_nn_grid_trends(tmp_path):
    cfg = shipped("nn", Experiment.NN_GRID)
    network = replace(cfg.network, weights=str(tmp_path / "fixture.mxw"), dataset=str(tmp_path / "fixture.csv"))
    frame = run_nn_grid(with_overrides(cfg, network=network), progress=False)
    baseline = float(frame["float_baseline_percent"].iloc[0])

    exact = frame[frame["variability_frac"] == 0.0]
    medians = exact.groupby("L_C")["accuracy_percent"].median().sort_index().tolist()
    assert len(medians) == 6
    assert medians[0] <= baseline - 3.0
    # ordered by L_C until within 1 pp of the float baseline
    for previous, current in zip(medians, medians[1:]):
        if previous < baseline - 1.0:
            assert current >= previous - 0.5

    varied = frame[frame["variability_frac"] == 0.1].set_index(["m", "L"])["accuracy_percent"]
    assert varied[(2, 8)] >= varied[(1, 8)]


@pytest.mark.slow
def test_wire_table_larger_nodes_win():
    sections = {"device": dict(DEVICE), "grid": {"m": (1, 6), "L": (4,)},
                "nonideal": {"read_noise_frac": 0.0, "boundary_drift_frac": 0.2, "read_instability_frac": 0.1}}
    frame = run_wire_table(build_config(Experiment.WIRE_TABLE, sections, {"trials": 50, "seed": 1}), progress=False)
    for condition in CONDITIONS:
        assert mean_rce(frame, condition=condition, m=6) < mean_rce(frame, condition=condition, m=1)
