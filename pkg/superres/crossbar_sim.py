"""
Analog multiply-and-accumulate over a crossbar of super-resolution nodes.

Column j of an n x k crossbar collects i_j = sum_i v_i * G_ij, where G_ij is the
equivalent conductance of node (i, j). Inside a node the current splits into branches,
which are independent parallel paths:

    parallel           every device is a branch
    series             the whole chain is one branch
    three_d_two_layer  every layer-1/layer-2 pair is a branch, a series combination

A noisy read applies the non-idealities in signal-path order:

    input noise -> boundary drift -> wire resistance -> branch currents
    -> read instability (per branch) -> read noise (per column, or per branch)

Every random term comes from its own named substream keyed by (master_seed, trial,
tile, row group), so a read is reproducible regardless of how trials are scheduled.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from superres.device_model import AgingState, DeviceSpec, derive_levels
from superres.errors import DegeneratePathError, DimensionMismatchError, DomainError, OverlappingPairsError
from superres.levels_core import LevelSet
from superres.rng import substream

logger = logging.getLogger(__name__)

UNDEFINED_CURRENT = 1e-12  # amps; RCE is undefined below this ideal current
DEFAULT_BOUNDARY_DRIFT = 0.20
_TINY_G = 1e-15


class Topology(str, Enum):
    PARALLEL = "parallel"
    SERIES = "series"
    THREE_D_TWO_LAYER = "three_d_two_layer"


class ReadNoiseScope(str, Enum):
    COLUMN = "column"
    DEVICE = "device"


@dataclass(frozen=True)
class NodeSpec:
    m: int
    levels: LevelSet
    topology: Topology = Topology.PARALLEL
    device: Optional[DeviceSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        if self.m < 1:
            raise DomainError(f"A node needs m >= 1 memristors, got {self.m}")

    @classmethod
    def from_device(cls, device: DeviceSpec, m: int, topology: Topology = Topology.PARALLEL) -> "NodeSpec":
        return cls(m, derive_levels(device), Topology(topology), device)

    @property
    def devices(self) -> int:
        """Physical memristors per node: m, or 2m for a two-layer 3D node."""
        return 2 * self.m if self.topology is Topology.THREE_D_TWO_LAYER else self.m


@dataclass(frozen=True, eq=False)
class ProgrammedCrossbar:
    """An n x k grid of programmed nodes.

    ``assignments`` and ``realized`` have shape (n, k, D) where D is the largest device
    count of any row; shorter rows are padded with -1 / 0.0. Row i uses ``row_specs[i]``.
    """

    row_specs: Tuple[NodeSpec, ...]
    assignments: np.ndarray
    realized: np.ndarray

    def __post_init__(self):
        assignments = np.array(self.assignments, dtype=np.int64)
        realized = np.array(self.realized, dtype=float)
        if assignments.ndim != 3 or assignments.shape != realized.shape:
            raise DimensionMismatchError(
                f"assignments {assignments.shape} and realized {realized.shape} must share an (n, k, D) shape"
            )
        if len(self.row_specs) != assignments.shape[0]:
            raise DimensionMismatchError(f"{len(self.row_specs)} row specs for {assignments.shape[0]} rows")
        width = assignments.shape[2]
        for i, spec in enumerate(self.row_specs):
            used = assignments[i, :, : spec.devices]
            if spec.devices > width or (used < 0).any() or (used >= spec.levels.L).any():
                raise DomainError(f"Row {i}: assignments do not match a node of {spec.devices} devices")
            if (assignments[i, :, spec.devices:] != -1).any():
                raise DomainError(f"Row {i}: padding beyond {spec.devices} devices must be -1")
            if not (realized[i, :, : spec.devices] > 0).all():
                raise DomainError(f"Row {i}: realized conductances must be strictly positive")
        assignments.flags.writeable = False
        realized.flags.writeable = False
        object.__setattr__(self, "row_specs", tuple(self.row_specs))
        object.__setattr__(self, "assignments", assignments)
        object.__setattr__(self, "realized", realized)

    @property
    def n(self) -> int:
        return self.assignments.shape[0]

    @property
    def k(self) -> int:
        return self.assignments.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.assignments >= 0

    def row_groups(self) -> List[Tuple[NodeSpec, np.ndarray]]:
        """Rows sharing a NodeSpec, in order of first appearance."""
        groups: Dict[NodeSpec, List[int]] = {}
        for i, spec in enumerate(self.row_specs):
            groups.setdefault(spec, []).append(i)
        return [(spec, np.array(rows)) for spec, rows in groups.items()]

    def with_realized(self, realized: np.ndarray) -> "ProgrammedCrossbar":
        return ProgrammedCrossbar(self.row_specs, self.assignments, np.where(self.mask, realized, 0.0))

    def window_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.array([spec.levels.g_min for spec in self.row_specs])[:, None, None]
        hi = np.array([spec.levels.g_max for spec in self.row_specs])[:, None, None]
        return lo, hi

    @classmethod
    def stack(cls, tiles: Sequence["ProgrammedCrossbar"]) -> "ProgrammedCrossbar":
        """Stack tiles vertically into one crossbar (rows of the first tile first)."""
        if not tiles:
            raise DimensionMismatchError("Nothing to stack")
        k = tiles[0].k
        if any(t.k != k for t in tiles):
            raise DimensionMismatchError(f"Tiles disagree on column count: {[t.k for t in tiles]}")
        width = max(t.assignments.shape[2] for t in tiles)

        def pad(array, fill):
            extra = width - array.shape[2]
            return np.pad(array, ((0, 0), (0, 0), (0, extra)), constant_values=fill)

        return cls(
            tuple(spec for t in tiles for spec in t.row_specs),
            np.concatenate([pad(t.assignments, -1) for t in tiles]),
            np.concatenate([pad(t.realized, 0.0) for t in tiles]),
        )


@dataclass(frozen=True)
class NonIdealityConfig:
    read_noise_frac: float = 0.10
    read_noise_scope: ReadNoiseScope = ReadNoiseScope.COLUMN
    conductance_var_frac: float = 0.0
    wire_enabled: bool = False
    wire_res_mean: float = 2.5  # ohms
    wire_res_std: float = 0.25  # ohms
    boundary_drift_frac: float = 0.0
    read_instability_frac: float = 0.0
    input_noise_variance: float = 0.0  # volts^2
    aging: Optional[AgingState] = None
    master_seed: int = 0
    program_verify: bool = False
    program_step_frac: float = 0.5
    program_tolerance_frac: float = 0.01
    program_max_pulses: int = 100

    def __post_init__(self):
        object.__setattr__(self, "read_noise_scope", ReadNoiseScope(self.read_noise_scope))
        for name in ("read_noise_frac", "conductance_var_frac", "wire_res_std", "boundary_drift_frac",
                     "read_instability_frac", "input_noise_variance"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.boundary_drift_frac >= 1:
            raise DomainError(f"boundary_drift_frac must be < 1, got {self.boundary_drift_frac}")
        if self.wire_enabled and self.wire_res_mean <= 0:
            raise DomainError(f"wire_res_mean must be > 0 when wire resistance is enabled")
        if self.program_step_frac <= 0 or self.program_max_pulses < 1:
            raise DomainError("program_step_frac must be > 0 and program_max_pulses >= 1")

    @classmethod
    def disabled(cls, master_seed: int = 0) -> "NonIdealityConfig":
        return cls(read_noise_frac=0.0, master_seed=master_seed)

    def with_(self, **changes) -> "NonIdealityConfig":
        return replace(self, **changes)

    @property
    def is_deterministic(self) -> bool:
        """True when no term draws random numbers, so one trial says everything."""
        return not (
            self.read_noise_frac > 0 or self.conductance_var_frac > 0 or self.wire_enabled
            or self.boundary_drift_frac > 0 or self.read_instability_frac > 0
            or self.input_noise_variance > 0 or self.program_verify
        )


@dataclass(frozen=True, eq=False)
class ReadResult:
    currents: np.ndarray
    ideal_currents: np.ndarray
    rce_percent: np.ndarray = field(repr=False)

    @property
    def undefined(self) -> np.ndarray:
        return np.isnan(self.rce_percent)

    @property
    def mean_rce(self) -> float:
        valid = self.rce_percent[~self.undefined]
        return float(valid.mean()) if valid.size else float("nan")


def relative_current_error(ideal: np.ndarray, real: np.ndarray) -> np.ndarray:
    """100 * |ideal - real| / |ideal|, NaN where the ideal current is below 1 pA."""
    ideal = np.asarray(ideal, dtype=float)
    real = np.asarray(real, dtype=float)
    defined = np.abs(ideal) >= UNDEFINED_CURRENT
    safe = np.where(defined, np.abs(ideal), 1.0)
    return np.where(defined, 100.0 * np.abs(ideal - real) / safe, np.nan)


def _branch_conductances(g: np.ndarray, topology: Topology, m: int) -> np.ndarray:
    """Per-branch conductance of nodes given device conductances on the last axis."""
    if topology is Topology.PARALLEL:
        return g
    if (g <= 0).any():
        raise DegeneratePathError(f"Zero conductance in a {topology.value} current path")
    if topology is Topology.SERIES:
        return 1.0 / np.sum(1.0 / g, axis=-1, keepdims=True)
    return 1.0 / (1.0 / g[..., :m] + 1.0 / g[..., m:])


def _with_wire(g: np.ndarray, r_wire) -> np.ndarray:
    return 1.0 / (1.0 / g + r_wire)


def effective_node_conductance(
    conductances: Sequence[float],
    topology: Topology = Topology.PARALLEL,
    wire_series_res=None,
) -> float:
    """Equivalent conductance of one node from its devices' realized conductances.

    For a two-layer 3D node the first half of ``conductances`` is layer 1 and the second
    half layer 2; branch b pairs device b of each layer. ``wire_series_res`` (ohms, scalar
    or one value per device) is placed in series with every device first.
    """
    topology = Topology(topology)
    g = np.asarray(conductances, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise DimensionMismatchError("A node needs a non-empty list of device conductances")
    if topology is Topology.THREE_D_TWO_LAYER and g.size % 2:
        raise DimensionMismatchError(f"A two-layer node needs an even device count, got {g.size}")
    if wire_series_res is not None:
        if (g <= 0).any():
            raise DegeneratePathError("Zero conductance device in series with wire resistance")
        g = _with_wire(g, np.asarray(wire_series_res, dtype=float))
    m = g.size // 2 if topology is Topology.THREE_D_TWO_LAYER else g.size
    return float(_branch_conductances(g, topology, m).sum())


def _as_inputs(crossbar: ProgrammedCrossbar, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] != crossbar.n:
        raise DimensionMismatchError(f"Input has shape {v.shape}, crossbar has {crossbar.n} rows")
    return v


def _node_currents(
    crossbar: ProgrammedCrossbar,
    v: np.ndarray,
    realized: np.ndarray,
    cfg: Optional[NonIdealityConfig] = None,
    trial: int = 0,
    tile: int = 0,
) -> np.ndarray:
    """Current injected by every node into its column, shape (..., n, k)."""
    out = np.zeros(v.shape[:-1] + (crossbar.n, crossbar.k))
    for group, (spec, rows) in enumerate(crossbar.row_groups()):
        branches = _branch_conductances(realized[rows][:, :, : spec.devices], spec.topology, spec.m)
        currents = v[..., rows, None, None] * branches
        if cfg is not None:
            if cfg.read_instability_frac > 0:
                z = substream(cfg.master_seed, "read_instability", trial, tile, group).standard_normal(currents.shape)
                currents = currents * (1.0 + cfg.read_instability_frac * z)
            if cfg.read_noise_scope is ReadNoiseScope.DEVICE and cfg.read_noise_frac > 0:
                z = substream(cfg.master_seed, "read_noise_device", trial, tile, group).standard_normal(currents.shape)
                currents = currents + cfg.read_noise_frac * np.abs(currents) * z
        out[..., rows, :] = currents.sum(axis=-1)
    return out


def ideal_vmm(crossbar: ProgrammedCrossbar, v) -> np.ndarray:
    """Noise-free column currents of the programmed crossbar, shape (..., k)."""
    v = _as_inputs(crossbar, v)
    return _node_currents(crossbar, v, crossbar.realized).sum(axis=-2)


def _read_conductances(crossbar: ProgrammedCrossbar, cfg: NonIdealityConfig, trial: int, tile: int) -> np.ndarray:
    g = crossbar.realized
    mask = crossbar.mask
    if cfg.boundary_drift_frac > 0:
        lo, hi = crossbar.window_bounds()
        u_on = substream(cfg.master_seed, "drift_r_on", trial, tile).uniform(-1.0, 1.0, g.shape)
        u_off = substream(cfg.master_seed, "drift_r_off", trial, tile).uniform(-1.0, 1.0, g.shape)
        new_hi = hi / (1.0 + cfg.boundary_drift_frac * u_on)
        new_lo = lo / (1.0 + cfg.boundary_drift_frac * u_off)
        span = hi - lo
        position = np.divide(g - lo, span, out=np.ones_like(g), where=np.broadcast_to(span > 0, g.shape))
        drifted = np.where(span > 0, new_lo + position * (new_hi - new_lo), new_hi)
        g = np.where(mask, np.maximum(drifted, _TINY_G), 0.0)
    if cfg.wire_enabled:
        r = substream(cfg.master_seed, "wire", trial, tile).normal(cfg.wire_res_mean, cfg.wire_res_std, g.shape)
        safe = np.where(mask, g, 1.0)
        g = np.where(mask, _with_wire(safe, np.clip(r, 0.0, None)), 0.0)
    return g


def _noisy_inputs(v: np.ndarray, cfg: NonIdealityConfig, trial: int, tile: int) -> np.ndarray:
    if cfg.input_noise_variance <= 0:
        return v
    # one stream per variance; read voltages cannot go below 0 V
    variance_key = int(round(cfg.input_noise_variance * 1e9))
    z = substream(cfg.master_seed, "input_noise", trial, tile, variance_key).standard_normal(v.shape)
    return np.maximum(v + np.sqrt(cfg.input_noise_variance) * z, 0.0)


def _tile_read(crossbar, v, cfg, trial, tile, reference) -> Tuple[np.ndarray, np.ndarray]:
    """Node currents before column noise, and the ideal column currents."""
    v = _as_inputs(crossbar, v)
    v_in = _noisy_inputs(v, cfg, trial, tile)
    nodes = _node_currents(crossbar, v_in, _read_conductances(crossbar, cfg, trial, tile), cfg, trial, tile)
    if reference is None:
        ideal = _node_currents(crossbar, v_in, crossbar.realized).sum(axis=-2)
    else:
        reference = np.asarray(reference, dtype=float)
        if reference.shape != (crossbar.n, crossbar.k):
            raise DimensionMismatchError(f"Reference {reference.shape} does not match crossbar {(crossbar.n, crossbar.k)}")
        ideal = v_in @ reference
    return nodes, ideal


def _finish_read(currents: np.ndarray, ideal: np.ndarray, cfg: NonIdealityConfig, trial: int) -> ReadResult:
    if cfg.read_noise_scope is ReadNoiseScope.COLUMN and cfg.read_noise_frac > 0:
        z = substream(cfg.master_seed, "read_noise", trial, 0).standard_normal(currents.shape)
        currents = currents + cfg.read_noise_frac * np.abs(ideal) * z
    return ReadResult(currents, ideal, relative_current_error(ideal, currents))


def noisy_read(
    crossbar: ProgrammedCrossbar,
    v,
    cfg: NonIdealityConfig,
    trial: int,
    reference: Optional[np.ndarray] = None,
) -> ReadResult:
    """Read all columns under ``cfg``.

    ``reference`` is the (n, k) matrix of unquantized node conductances used for the ideal
    currents; without it the programmed conductances serve as the reference. The ideal
    currents always see the same (noisy) input as the real read.
    """
    nodes, ideal = _tile_read(crossbar, v, cfg, trial, 0, reference)
    return _finish_read(nodes.sum(axis=-2), ideal, cfg, trial)


def tile_and_sum(
    tiles: Sequence[ProgrammedCrossbar],
    v_segments: Sequence,
    cfg: NonIdealityConfig,
    trial: int,
    references: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> ReadResult:
    """Read a large logical crossbar split into row tiles whose column currents are summed.

    Device-level terms are drawn per tile; the summed column current meets the sense
    amplifier once, so column read noise is applied after summation.
    """
    if not tiles:
        raise DimensionMismatchError("tile_and_sum needs at least one tile")
    if len(v_segments) != len(tiles):
        raise DimensionMismatchError(f"{len(v_segments)} input segments for {len(tiles)} tiles")
    k = tiles[0].k
    if any(t.k != k for t in tiles):
        raise DimensionMismatchError(f"Tiles disagree on column count: {[t.k for t in tiles]}")
    references = references if references is not None else [None] * len(tiles)

    parts = [_tile_read(t, v, cfg, trial, i, ref) for i, (t, v, ref) in enumerate(zip(tiles, v_segments, references))]
    nodes = np.concatenate([p[0] for p in parts], axis=-2)
    ideal = np.sum([p[1] for p in parts], axis=0)
    return _finish_read(nodes.sum(axis=-2), ideal, cfg, trial)


def signed_read(pos_cols: Sequence[int], neg_cols: Sequence[int], read: ReadResult, ideal: bool = False) -> np.ndarray:
    """Positive-column minus negative-column current for every differential pair."""
    pos = [int(c) for c in pos_cols]
    neg = [int(c) for c in neg_cols]
    if len(pos) != len(neg):
        raise DimensionMismatchError(f"{len(pos)} positive columns paired with {len(neg)} negative columns")
    used = pos + neg
    if len(set(used)) != len(used):
        raise OverlappingPairsError(f"Column pairs overlap: {list(zip(pos, neg))}")
    currents = read.ideal_currents if ideal else read.currents
    if used and max(used) >= currents.shape[-1]:
        raise DimensionMismatchError(f"Column index {max(used)} out of range for {currents.shape[-1]} columns")
    return currents[..., pos] - currents[..., neg]
