"""
Wire resistance and read error table.

Three conditions per (m, L), all with the device boundaries drifting by +/- the configured
`boundary_drift_frac` (configs/wire.ini uses 20%):

| condition | boundary drift | wire resistance | read instability |
|-----------|----------------|-----------------|------------------|
| N         | yes            | no              | no               |
| Y         | yes            | 2.5 +/- 0.25 ohm| no               |
| R         | yes            | 2.5 +/- 0.25 ohm| read_instability_frac |

Output columns: m, L, L_C, condition, row_type, trial, column, rce_percent
"""

from typing import List, Optional

import pandas as pd

from experiments.common import RceCell, RceSweep
from superres.config import Experiment, ExperimentConfig

CONDITIONS = ("N", "Y", "R")


class WireTableExperiment(RceSweep):
    experiment = Experiment.WIRE_TABLE
    label_columns = ("condition",)
    columns = ("m", "L", "L_C", "condition", "row_type", "trial", "column", "rce_percent")

    def condition_configs(self):
        base = self.cfg.nonideal
        plain = base.with_(wire_enabled=False, read_instability_frac=0.0)
        wired = plain.with_(wire_enabled=True)
        return {"N": plain, "Y": wired, "R": wired.with_(read_instability_frac=base.read_instability_frac)}

    def cells(self) -> List[RceCell]:
        conditions = self.condition_configs()
        cells = []
        for m, L in self.cfg.grid.cells:
            device = self.device(L)
            for name in CONDITIONS:
                cells.append(RceCell((("condition", name),), m, L, device, conditions[name]))
        return cells


def run_wire_table(cfg: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    return WireTableExperiment(cfg, progress).run(out)
