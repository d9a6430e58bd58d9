"""
Aging sweep: the RCE grid after the devices have aged by each configured ratio.

With `[aging] reprogram = true` (default) the levels are re-derived inside the aged window
and programmed there. With `reprogram = false` the crossbar is mapped against the nominal
levels while the devices hold the aged ones.

Output columns: aging_ratio, row_type, m, L, L_C, trial, column, rce_percent
"""

import logging
from typing import List, Optional

import pandas as pd

from experiments.common import RCE_COLUMNS, RceCell, RceSweep
from superres.config import Experiment, ExperimentConfig

logger = logging.getLogger(__name__)


class AgingSweepExperiment(RceSweep):
    experiment = Experiment.AGING_SWEEP
    label_columns = ("aging_ratio",)
    columns = ("aging_ratio",) + RCE_COLUMNS

    def cells(self) -> List[RceCell]:
        logger.info("Aging %s, reprogram=%s", self.cfg.aging.type.value, self.cfg.aging.reprogram)
        cells = []
        for ratio in self.cfg.grid.aging_ratios:
            state = self.cfg.aging.state(float(ratio))
            cells.extend(self.grid_cells((("aging_ratio", float(ratio)),), aging=state))
        return cells


def run_aging_sweep(cfg: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    return AgingSweepExperiment(cfg, progress).run(out)
