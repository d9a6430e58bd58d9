"""
Input noise sweep: additive Gaussian noise on the input voltages, one variance at a time.

Both the crossbar and the ideal reference see the same noisy input, so the reported error
is the crossbar's own error on whatever signal arrives. Noisy inputs are clipped at 0 V and
each variance draws its own noise.

Output columns: input_noise_variance, row_type, m, L, L_C, trial, column, rce_percent
"""

from typing import List, Optional

import pandas as pd

from experiments.common import RCE_COLUMNS, RceCell, RceSweep
from superres.config import Experiment, ExperimentConfig


class NoiseSweepExperiment(RceSweep):
    experiment = Experiment.NOISE_SWEEP
    label_columns = ("input_noise_variance",)
    columns = ("input_noise_variance",) + RCE_COLUMNS

    def cells(self) -> List[RceCell]:
        cells = []
        for variance in self.cfg.grid.input_noise_variances:
            nonideal = self.cfg.nonideal.with_(input_noise_variance=float(variance))
            cells.extend(self.grid_cells((("input_noise_variance", float(variance)),), nonideal=nonideal))
        return cells


def run_noise_sweep(cfg: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    return NoiseSweepExperiment(cfg, progress).run(out)
