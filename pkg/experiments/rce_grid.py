"""
RCE grid: relative output current error of a crossbar for every (m, L) node configuration.

For each cell and trial a random weight matrix is mapped, read once under the configured
non-idealities and compared column by column against the unquantized reference.

Output columns: row_type, m, L, L_C, trial, column, rce_percent

Run This:
```bash
python main.py rce --config configs/rce.ini --out results/rce.csv
```
"""

from typing import List, Optional

import pandas as pd

from experiments.common import RceCell, RceSweep
from superres.config import Experiment, ExperimentConfig


class RceGridExperiment(RceSweep):
    experiment = Experiment.RCE_GRID

    def cells(self) -> List[RceCell]:
        return self.grid_cells()


def run_rce_grid(cfg: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    return RceGridExperiment(cfg, progress).run(out)
