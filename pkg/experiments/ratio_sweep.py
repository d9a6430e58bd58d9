"""
R_OFF/R_ON ratio sweep: the RCE grid repeated with R_ON fixed and R_OFF = ratio * R_ON.

A larger ratio widens the conductance window and, at m=1, the quantization steps with it;
larger nodes keep the error low whatever the ratio.

Output columns: ratio, row_type, m, L, L_C, trial, column, rce_percent
"""

from typing import List, Optional

import pandas as pd

from experiments.common import RCE_COLUMNS, RceCell, RceSweep
from superres.config import Experiment, ExperimentConfig


class RatioSweepExperiment(RceSweep):
    experiment = Experiment.RATIO_SWEEP
    label_columns = ("ratio",)
    columns = ("ratio",) + RCE_COLUMNS

    def cells(self) -> List[RceCell]:
        cells = []
        for ratio in self.cfg.grid.ratios:
            cells.extend(self.grid_cells((("ratio", float(ratio)),), r_off=ratio * self.cfg.device.r_on))
        return cells


def run_ratio_sweep(cfg: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    return RatioSweepExperiment(cfg, progress).run(out)
