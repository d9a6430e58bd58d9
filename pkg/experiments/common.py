"""
Shared machinery for the experiment steps.

Each experiment is a class with ``run(out)`` that builds a result frame and, when given a
destination, writes it as a CSV artifact with the provenance header. RCE sweeps are lists
of cells; a cell is one (labels, m, L, device, non-idealities) point evaluated over every
trial, and cells are fanned out over worker processes with results kept in grid order.

Random weight matrices are uniform in [w_min, w_max] and inputs uniform in [0, 1] V, drawn
from the "weights" and "inputs" streams keyed by trial only, so every cell of a sweep sees
the same matrices and inputs for a given trial.
"""

import logging
import time
from dataclasses import dataclass
from functools import lru_cache, partial
from typing import List, Optional, Tuple

import pandas as pd

from superres.config import CrossbarConfig, Experiment, ExperimentConfig
from superres.crossbar_sim import NonIdealityConfig, Topology, noisy_read
from superres.device_model import AgingState, DeviceSpec, aged_levels
from superres.errors import DomainError, EnumerationTooLargeError, InfeasibleError
from superres.levels_core import LevelSet
from superres.parallel import flatten, ordered_map
from superres.results import FLOAT_FORMAT, header_lines, with_aggregates, write_results
from superres.rng import substream
from superres.weight_mapper import QuantizerTable, build_quantizer, map_matrix

logger = logging.getLogger(__name__)

RCE_COLUMNS = ("row_type", "m", "L", "L_C", "trial", "column", "rce_percent")


@lru_cache(maxsize=256)
def cached_quantizer(levels: LevelSet, m: int, topology: Topology, w_min: float, w_max: float,
                     epsilon: float, cap: int, device: Optional[DeviceSpec]) -> QuantizerTable:
    return build_quantizer(levels, m, topology, w_min, w_max, epsilon, cap, device)


@dataclass(frozen=True)
class RceCell:
    labels: Tuple[Tuple[str, object], ...]
    m: int
    L: int
    device: DeviceSpec
    nonideal: NonIdealityConfig
    aging: Optional[AgingState] = None


def random_problem(seed: int, trial: int, crossbar: CrossbarConfig):
    """The weight matrix and input vector of one trial."""
    weights = substream(seed, "weights", trial).uniform(
        crossbar.w_min, crossbar.w_max, (crossbar.rows, crossbar.cols)
    )
    inputs = substream(seed, "inputs", trial).uniform(0.0, 1.0, crossbar.rows)
    return weights, inputs


def run_rce_cell(cell: RceCell, crossbar: CrossbarConfig, weight_range: Tuple[float, float],
                 topology: Topology, trials: int, seed: int) -> List[dict]:
    """Per-column RCE rows of one cell over all trials; a degenerate cell yields no rows."""
    started = time.perf_counter()
    try:
        levels, held = aged_levels(cell.device, cell.aging)
        q = cached_quantizer(levels, cell.m, Topology(topology), weight_range[0], weight_range[1],
                             crossbar.epsilon, crossbar.enum_cap, cell.device)
    except (DomainError, EnumerationTooLargeError, InfeasibleError) as e:
        logger.warning("Skipping m=%d L=%d %s: %s", cell.m, cell.L, dict(cell.labels), e)
        return []

    labels = dict(cell.labels)
    rows = []
    for trial in range(trials):
        weights, inputs = random_problem(seed, trial, crossbar)
        mapped = map_matrix(weights, q, crossbar.signed, cell.nonideal, trial, held)
        read = noisy_read(mapped.crossbar, inputs, cell.nonideal, trial, mapped.reference)
        for column, rce in enumerate(read.rce_percent):
            rows.append({**labels, "row_type": "trial", "m": cell.m, "L": cell.L,
                         "L_C": q.catalog.combinatorial_count, "trial": trial, "column": column,
                         "rce_percent": float(rce)})
    logger.debug("Cell m=%d L=%d %s done in %.2fs", cell.m, cell.L, labels, time.perf_counter() - started)
    return rows


class ExperimentRunner:
    """Base for the experiment steps: build a frame, then write it with its provenance header."""

    experiment: Experiment
    float_format = FLOAT_FORMAT

    def __init__(self, cfg: ExperimentConfig, progress: bool = True):
        self.cfg = cfg
        self.progress = progress

    def build(self) -> pd.DataFrame:
        raise NotImplementedError

    def header(self) -> Tuple[str, ...]:
        return header_lines(self.cfg.seed, self.cfg.sha256, self.experiment.value)

    def run(self, out: Optional[str] = None) -> pd.DataFrame:
        logger.info("Starting %s experiment (seed=%d, trials=%d)", self.experiment.value, self.cfg.seed, self.cfg.trials)
        started = time.perf_counter()
        frame = self.build()
        logger.info("Finished %s: %d rows in %.1fs", self.experiment.value, len(frame), time.perf_counter() - started)
        if out is not None:
            write_results(frame, out, self.header(), self.float_format)
        return frame


class RceSweep(ExperimentRunner):
    """An RCE experiment over a list of cells, with mean/std rows per cell."""

    label_columns: Tuple[str, ...] = ()
    columns: Tuple[str, ...] = RCE_COLUMNS

    def cells(self) -> List[RceCell]:
        raise NotImplementedError

    def device(self, L: int, r_off: Optional[float] = None) -> DeviceSpec:
        return self.cfg.device.spec(L, r_off)

    def grid_cells(self, labels=(), nonideal: Optional[NonIdealityConfig] = None,
                   r_off: Optional[float] = None, aging: Optional[AgingState] = None) -> List[RceCell]:
        nonideal = nonideal if nonideal is not None else self.cfg.nonideal
        return [RceCell(tuple(labels), m, L, self.device(L, r_off), nonideal, aging) for m, L in self.cfg.grid.cells]

    def build(self) -> pd.DataFrame:
        cells = self.cells()
        logger.info("%s grid: %d cells x %d trials on %d worker(s)",
                    self.experiment.value, len(cells), self.cfg.trials, self.cfg.workers)
        worker = partial(run_rce_cell, crossbar=self.cfg.crossbar, weight_range=self.cfg.weight_range,
                         topology=self.cfg.grid.topology, trials=self.cfg.trials, seed=self.cfg.seed)
        rows = flatten(ordered_map(worker, cells, self.cfg.workers, self.experiment.value, self.progress))
        raw = pd.DataFrame(rows, columns=list(self.columns))
        keys = list(self.label_columns) + ["m", "L", "L_C"]
        return with_aggregates(raw, keys)


def mean_rce(frame: pd.DataFrame, **where) -> float:
    """The embedded mean aggregate of the group matching ``where``."""
    rows = frame[frame["row_type"] == "mean"]
    for key, value in where.items():
        rows = rows[rows[key] == value]
    if len(rows) != 1:
        raise KeyError(f"{len(rows)} mean rows match {where}")
    return float(rows["rce_percent"].iloc[0])