"""
Weight to conductance mapping through a lookup table of reachable node conductances.

A weight w is placed on the conductance axis by the affine map anchored at the
catalog extremes, g = g_node_min + (w - w_min) * (g_node_max - g_node_min) / (w_max - w_min),
and programmed to the nearest catalog entry (ties to the lower conductance). Signed weights
use a differential column pair: the column matching the sign of w carries the quantized
magnitude and the other column sits at g_node_min, so the pair difference is proportional
to w. Signed mapping always quantizes magnitudes over [0, max|w|], whatever range the
quantizer was built with, so g_node_min stands for a zero weight.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from superres.crossbar_sim import NodeSpec, NonIdealityConfig, ProgrammedCrossbar, Topology
from superres.device_model import DeviceSpec, perturb_levels, program_devices
from superres.errors import DomainError, EnumerationTooLargeError
from superres.levels_core import (
    DEFAULT_ENUM_CAP,
    DEFAULT_EPSILON,
    LevelCatalog,
    LevelSet,
    NodeLevelMultiset,
    count_distinct,
    enumerate_node_levels,
    largest_gap,
)
from superres.rng import substream

logger = logging.getLogger(__name__)


def _series(values) -> float:
    return 1.0 / math.fsum(1.0 / g for g in values)


def node_catalog(
    levels: LevelSet,
    m: int,
    topology: Topology = Topology.PARALLEL,
    epsilon: float = DEFAULT_EPSILON,
    cap: int = DEFAULT_ENUM_CAP,
) -> LevelCatalog:
    """Reachable node conductances for any topology, sorted ascending."""
    topology = Topology(topology)
    if topology is Topology.PARALLEL:
        return enumerate_node_levels(levels, m, epsilon, cap)

    descending = range(levels.L - 1, -1, -1)
    if topology is Topology.SERIES:
        total = math.comb(m + levels.L - 1, m)
        if total > cap:
            raise EnumerationTooLargeError(total, cap)
        entries = [
            NodeLevelMultiset(combo, _series(levels[i] for i in combo))
            for combo in itertools.combinations_with_replacement(descending, m)
        ]
    else:
        pairs = list(itertools.combinations_with_replacement(descending, 2))
        total = math.comb(m + len(pairs) - 1, m)
        if total > cap:
            raise EnumerationTooLargeError(total, cap)
        entries = []
        for combo in itertools.combinations_with_replacement(pairs, m):
            layer1 = tuple(p[0] for p in combo)
            layer2 = tuple(p[1] for p in combo)
            g = math.fsum(_series((levels[a], levels[b])) for a, b in combo)
            entries.append(NodeLevelMultiset(layer1 + layer2, g))

    entries.sort(key=lambda e: (e.sum_conductance, e.assignment))
    effective = count_distinct([e.sum_conductance for e in entries], epsilon)
    return LevelCatalog(tuple(entries), total, effective, epsilon, levels, int(m))


class QuantizedWeight(NamedTuple):
    g: float
    assignment: NodeLevelMultiset
    w_realized: float
    clamped: bool


@dataclass(frozen=True, eq=False)
class QuantizerTable:
    catalog: LevelCatalog
    node: NodeSpec
    w_min: float
    w_max: float
    conductances: np.ndarray = field(init=False, repr=False)
    assignments: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = np.array(self.catalog.sums, dtype=float)
        g.flags.writeable = False
        assignments = np.array([e.assignment for e in self.catalog.entries], dtype=np.int64)
        assignments.flags.writeable = False
        object.__setattr__(self, "conductances", g)
        object.__setattr__(self, "assignments", assignments)

    @property
    def g_node_min(self) -> float:
        return float(self.conductances[0])

    @property
    def g_node_max(self) -> float:
        return float(self.conductances[-1])

    @property
    def scale(self) -> float:
        """Siemens per unit weight."""
        return (self.g_node_max - self.g_node_min) / (self.w_max - self.w_min)

    def to_conductance(self, w):
        return self.g_node_min + (np.asarray(w, dtype=float) - self.w_min) * self.scale

    def to_weight(self, g):
        return self.w_min + (np.asarray(g, dtype=float) - self.g_node_min) / self.scale

    def nearest(self, g_target) -> np.ndarray:
        """Catalog index nearest to each target conductance; ties go to the lower value.

        Among equal catalog conductances the first entry is always chosen.
        """
        g = self.conductances
        target = np.asarray(g_target, dtype=float)
        if len(g) == 1:
            return np.zeros(target.shape, dtype=np.int64)
        pos = np.clip(np.searchsorted(g, target, side="left"), 1, len(g) - 1)
        below, above = g[pos - 1], g[pos]
        idx = np.where(target - below <= above - target, pos - 1, pos)
        return np.searchsorted(g, g[idx], side="left")

    def quantize(self, weights) -> Tuple[np.ndarray, int]:
        """Vectorised lookup: catalog indices and the number of clamped weights."""
        w = np.asarray(weights, dtype=float)
        clipped = np.clip(w, self.w_min, self.w_max)
        clamped = int(np.count_nonzero(clipped != w))
        return self.nearest(self.to_conductance(clipped)), clamped

    def max_error(self) -> float:
        """Worst-case |map(w) - g| over the weight range: half the largest catalog gap."""
        return largest_gap(self.catalog.sums) / 2.0


def build_quantizer(
    levels: LevelSet,
    m: int,
    topology: Topology = Topology.PARALLEL,
    w_min: float = 0.0,
    w_max: float = 1.0,
    epsilon: float = DEFAULT_EPSILON,
    cap: int = DEFAULT_ENUM_CAP,
    device: Optional[DeviceSpec] = None,
) -> QuantizerTable:
    if not w_min < w_max:
        raise DomainError(f"Need w_min < w_max, got [{w_min}, {w_max}]")
    catalog = node_catalog(levels, m, topology, epsilon, cap)
    if catalog.entries[0].sum_conductance >= catalog.entries[-1].sum_conductance:
        raise DomainError(f"Degenerate conductance window for m={m}, L={levels.L}: every node level is equal")
    node = NodeSpec(int(m), levels, Topology(topology), device)
    logger.debug("Quantizer m=%d L=%d %s: %d entries (%d effective)",
                 m, levels.L, node.topology.value, len(catalog), catalog.effective_count)
    return QuantizerTable(catalog, node, float(w_min), float(w_max))


def quantize_weight(q: QuantizerTable, w: float) -> QuantizedWeight:
    (idx,), clamped = q.quantize([w])
    entry = q.catalog.entries[int(idx)]
    g = entry.sum_conductance
    if clamped:
        logger.warning("Weight %.6g outside [%.6g, %.6g] clamped", w, q.w_min, q.w_max)
    return QuantizedWeight(g, entry, float(q.to_weight(g)), bool(clamped))


class MappedMatrix(NamedTuple):
    crossbar: ProgrammedCrossbar
    reference: np.ndarray  # unquantized node conductances, (n, physical k)
    pos_cols: Tuple[int, ...]
    neg_cols: Tuple[int, ...]
    clamped: int


def differential_pairs(k: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Physical column layout of k signed outputs: (2j positive, 2j+1 negative)."""
    return tuple(range(0, 2 * k, 2)), tuple(range(1, 2 * k, 2))


def magnitude_quantizer(q: QuantizerTable) -> QuantizerTable:
    """The same catalog anchored at w = 0 and spanning [0, max(|w_min|, |w_max|)]."""
    if q.w_min == 0.0:
        return q
    return replace(q, w_min=0.0, w_max=max(abs(q.w_min), abs(q.w_max)))


def _map_rows(weights: np.ndarray, q: QuantizerTable, signed: bool):
    if not signed:
        idx, clamped = q.quantize(weights)
        ref = q.to_conductance(np.clip(weights, q.w_min, q.w_max))
        return idx, ref, clamped

    q = magnitude_quantizer(q)
    idx_mag, clamped = q.quantize(np.abs(weights))
    ref_mag = q.to_conductance(np.clip(np.abs(weights), q.w_min, q.w_max))
    positive = weights >= 0
    idx = np.empty(weights.shape[:-1] + (2 * weights.shape[-1],), dtype=np.int64)
    ref = np.empty(idx.shape)
    idx[..., 0::2] = np.where(positive, idx_mag, 0)
    idx[..., 1::2] = np.where(positive, 0, idx_mag)
    ref[..., 0::2] = np.where(positive, ref_mag, q.g_node_min)
    ref[..., 1::2] = np.where(positive, q.g_node_min, ref_mag)
    return idx, ref, clamped


def map_matrix(
    weights,
    q: Union[QuantizerTable, Sequence[QuantizerTable]],
    signed: bool,
    nonideal: Optional[NonIdealityConfig] = None,
    trial: int = 0,
    realized_levels: Optional[LevelSet] = None,
) -> MappedMatrix:
    """Program an n x k weight matrix onto a crossbar.

    ``q`` is one quantizer for every row, or one per row for mixed node sizes.
    ``nonideal`` supplies programming variability and optional program-and-verify.
    ``realized_levels`` are the levels the devices physically hold when they differ
    from the quantizer's (aged devices that were not reprogrammed).
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2:
        raise DomainError(f"Weights must be a 2-D matrix, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise DomainError("Weights must be finite")
    row_q = [q] * w.shape[0] if isinstance(q, QuantizerTable) else list(q)
    if len(row_q) != w.shape[0]:
        raise DomainError(f"{len(row_q)} quantizers for {w.shape[0]} rows")

    k_phys = 2 * w.shape[1] if signed else w.shape[1]
    width = max(t.node.devices for t in row_q)
    assignments = np.full((w.shape[0], k_phys, width), -1, dtype=np.int64)
    nominal = np.zeros(assignments.shape)
    reference = np.empty((w.shape[0], k_phys))
    row_specs: List[NodeSpec] = []
    clamped = 0

    for i, rq in enumerate(row_q):
        idx, ref, n_clamped = _map_rows(w[i], rq, signed)
        clamped += n_clamped
        spec = rq.node
        held = spec.levels
        if realized_levels is not None:
            held = realized_levels
            spec = NodeSpec(spec.m, realized_levels, spec.topology, spec.device)
        rows = rq.assignments[idx]
        assignments[i, :, : spec.devices] = rows
        nominal[i, :, : spec.devices] = np.asarray(held.levels)[rows]
        reference[i] = ref
        row_specs.append(spec)

    if clamped:
        logger.warning("%d weights fell outside the quantizer range and were clamped", clamped)

    realized = nominal
    mask = assignments >= 0
    if nonideal is not None:
        seed = nonideal.master_seed
        if nonideal.conductance_var_frac > 0:
            realized = nominal.copy()
            realized[mask] = perturb_levels(nominal[mask], nonideal.conductance_var_frac,
                                            substream(seed, "variability", trial))
        if nonideal.program_verify:
            starts = np.array([spec.levels.g_min for spec in row_specs])[:, None, None]
            starts = np.broadcast_to(starts, realized.shape)
            programmed = realized.copy()
            programmed[mask] = program_devices(
                realized[mask], starts[mask], nonideal.program_step_frac,
                nonideal.program_tolerance_frac, nonideal.program_max_pulses,
                substream(seed, "program", trial),
            )
            realized = programmed

    crossbar = ProgrammedCrossbar(tuple(row_specs), assignments, realized)
    if signed:
        pos, neg = differential_pairs(w.shape[1])
    else:
        pos, neg = tuple(range(w.shape[1])), ()
    return MappedMatrix(crossbar, reference, pos, neg, clamped)


def currents_to_weights(q: QuantizerTable, signed_currents) -> np.ndarray:
    """Turn differential currents back into weighted sums in weight units."""
    return np.asarray(signed_currents, dtype=float) / magnitude_quantizer(q).scale


def quantizer_frame(q: QuantizerTable) -> pd.DataFrame:
    """The lookup table as rows of per-device conductances (µS), node conductance and weight."""
    levels_uS = np.asarray(q.node.levels.levels) * 1e6
    columns = {f"g_{d + 1}": levels_uS[q.assignments[:, d]] for d in range(q.assignments.shape[1])}
    columns["g_n"] = q.conductances * 1e6
    columns["w_realized"] = q.to_weight(q.conductances)
    return pd.DataFrame(columns)
