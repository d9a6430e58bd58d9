"""Experiment steps, one per subcommand."""

from experiments.aging_sweep import AgingSweepExperiment, run_aging_sweep
from experiments.levels_report import LevelsReportExperiment, run_levels_report
from experiments.mapdump import MapDumpExperiment, run_mapdump
from experiments.nn_grid import NnGridExperiment, run_nn_grid
from experiments.noise_sweep import NoiseSweepExperiment, run_noise_sweep
from experiments.ratio_sweep import RatioSweepExperiment, run_ratio_sweep
from experiments.rce_grid import RceGridExperiment, run_rce_grid
from experiments.wire_table import WireTableExperiment, run_wire_table
from superres.config import Experiment

EXPERIMENTS = {
    Experiment.LEVELS: LevelsReportExperiment,
    Experiment.RCE_GRID: RceGridExperiment,
    Experiment.RATIO_SWEEP: RatioSweepExperiment,
    Experiment.AGING_SWEEP: AgingSweepExperiment,
    Experiment.NOISE_SWEEP: NoiseSweepExperiment,
    Experiment.WIRE_TABLE: WireTableExperiment,
    Experiment.NN_GRID: NnGridExperiment,
    Experiment.MAPDUMP: MapDumpExperiment,
}

__all__ = [
    "EXPERIMENTS",
    "run_aging_sweep",
    "run_levels_report",
    "run_mapdump",
    "run_nn_grid",
    "run_noise_sweep",
    "run_ratio_sweep",
    "run_rce_grid",
    "run_wire_table",
]
