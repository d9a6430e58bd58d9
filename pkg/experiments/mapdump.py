"""
Quantizer dump: every catalog entry of one node configuration as a lookup table.

One row per reachable node conductance, ascending, with the per-device levels that realize
it (highest first), the node conductance and the weight it stands for. Conductances in µS.

Output columns: g_1 .. g_D, g_n, w_realized
"""

from typing import Optional

import pandas as pd

from experiments.common import ExperimentRunner, cached_quantizer
from superres.config import Experiment, ExperimentConfig
from superres.device_model import derive_levels
from superres.errors import ConfigError
from superres.weight_mapper import quantizer_frame


class MapDumpExperiment(ExperimentRunner):
    experiment = Experiment.MAPDUMP
    float_format = "%.6g"

    def build(self) -> pd.DataFrame:
        grid, crossbar = self.cfg.grid, self.cfg.crossbar
        if len(grid.m) != 1 or len(grid.L) != 1:
            raise ConfigError("mapdump needs exactly one m and one L", field="grid.m")
        m, L = grid.m[0], grid.L[0]
        device = self.cfg.device.spec(L)
        w_min, w_max = self.cfg.weight_range
        q = cached_quantizer(derive_levels(device), m, grid.topology, w_min, w_max,
                             crossbar.epsilon, crossbar.enum_cap, device)
        return quantizer_frame(q)


def run_mapdump(cfg: ExperimentConfig, out: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    return MapDumpExperiment(cfg, progress).run(out)
