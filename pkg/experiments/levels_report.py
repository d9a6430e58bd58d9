"""
Levels report: distinct node conductance counts for every (m, L).

L_C is the number of level multisets a node of m devices can hold, C(m + L - 1, m) for a
parallel node. effective_count is how many of those sums stay distinct (more than epsilon
apart) for the configured devices; equally spaced levels collapse many of them.

Output columns: m, L, L_C, effective_count
"""

import logging
from typing import Optional

import numpy as np
import pandas as pd

from experiments.common import ExperimentRunner
from superres.config import Experiment, ExperimentConfig
from superres.crossbar_sim import Topology
from superres.device_model import derive_levels
from superres.errors import EnumerationTooLargeError
from superres.levels_core import count_unique_levels
from superres.weight_mapper import node_catalog

logger = logging.getLogger(__name__)

COLUMNS = ("m", "L", "L_C", "effective_count")


class LevelsReportExperiment(ExperimentRunner):
    experiment = Experiment.LEVELS

    def build(self) -> pd.DataFrame:
        grid, crossbar = self.cfg.grid, self.cfg.crossbar
        rows = []
        for m, L in grid.cells:
            levels = derive_levels(self.cfg.device.spec(L))
            try:
                catalog = node_catalog(levels, m, grid.topology, crossbar.epsilon, crossbar.enum_cap)
                combinatorial, effective = catalog.combinatorial_count, catalog.effective_count
            except EnumerationTooLargeError as e:
                logger.warning("m=%d L=%d: %s; effective count left empty", m, L, e)
                combinatorial, effective = e.count, np.nan
            if grid.topology is Topology.PARALLEL:
                combinatorial = count_unique_levels(m, L)
            rows.append({"m": m, "L": L, "L_C": combinatorial, "effective_count": effective})
        return pd.DataFrame(rows, columns=list(COLUMNS))


def run_levels_report(cfg: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    return LevelsReportExperiment(cfg, progress).run(out)
