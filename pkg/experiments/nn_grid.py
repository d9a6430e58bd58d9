"""
NN grid: classification accuracy of the fixture network with its layers on crossbars.

The fixture network and test digits are built on first use when the configured files are
missing. Each (m, L) x variability cell reports the mean accuracy over the trials and the
floating-point baseline.

Output columns: m, L, L_C, variability_frac, accuracy_percent, float_baseline_percent, trials
"""

import logging
from typing import Optional

import pandas as pd

from experiments.common import ExperimentRunner
from superres.config import Experiment, ExperimentConfig
from superres.net_eval import Dataset, evaluate_grid

logger = logging.getLogger(__name__)


class NnGridExperiment(ExperimentRunner):
    experiment = Experiment.NN_GRID

    def build(self) -> pd.DataFrame:
        from superres.fixture_net import ensure_fixture  # scikit-learn loads only for nn

        network = self.cfg.network
        net, dataset = ensure_fixture(network.weights, network.dataset, network.fixture_seed)
        if network.samples is not None:
            dataset = Dataset(dataset.features[: network.samples], dataset.labels[: network.samples])
        logger.info("Evaluating %d-parameter network on %d samples", net.parameter_count, len(dataset))
        report = evaluate_grid(
            net, dataset, self.cfg.grid.cells, self.cfg.grid.variabilities, self.cfg.trials, self.cfg.seed,
            nonideal=self.cfg.nonideal, topology=self.cfg.grid.topology,
            r_on=self.cfg.device.r_on, r_off=self.cfg.device.r_off,
            placement=self.cfg.device.placement, placement_seed=self.cfg.device.placement_seed,
            workers=self.cfg.workers, progress=self.progress,
        )
        return report.to_frame()


def run_nn_grid(cfg: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    return NnGridExperiment(cfg, progress).run(out)
