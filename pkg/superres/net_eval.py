"""
Neural inference through super-resolution crossbars.

A small feed-forward network is run twice: once in floating point and once with every
parametric layer programmed onto a crossbar of m-memristor nodes. Comparing the two gives
the accuracy cost of a node configuration (m, L) under a set of non-idealities.

Layers:
| layer          | parameters                        | mapped onto a crossbar |
|----------------|-----------------------------------|------------------------|
| Dense          | weights (n_in, n_out), bias       | yes                    |
| Conv2D         | weights (kh, kw, c_in, c_out), bias, stride | yes, as patches |
| ReLU           | -                                 | no                     |
| MeanPool       | pool size p                       | no                     |
| SoftmaxArgmax  | -                                 | no                     |

Activations are laid out height x width x channels. A convolution is lowered to a matrix
product over row-major patches with the channel as the fastest index, so the crossbar sees
exactly the matrix the float path multiplies by. Biases become an extra crossbar row driven
by a constant 1 V input. Argmax ties go to the lowest class index.

Weights fixture format (MXW1):
    4 bytes  b"MXW1"
    4 bytes  header length, little-endian uint32
    header   UTF-8 JSON: version, input_shape, layers (type, shape, stride, bias, p)
    payload  per parametric layer: weights then bias, row-major little-endian float32
"""

import json
import logging
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache, partial
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from superres.crossbar_sim import NonIdealityConfig, Topology, noisy_read, signed_read
from superres.device_model import DeviceSpec, LevelPlacement, aged_levels
from superres.errors import DimensionMismatchError, DomainError, WeightsFormatError
from superres.levels_core import DEFAULT_ENUM_CAP, DEFAULT_EPSILON, LevelSet
from superres.parallel import ordered_map
from superres.rng import derive_seed, stream_id
from superres.weight_mapper import (
    MappedMatrix,
    QuantizerTable,
    build_quantizer,
    currents_to_weights,
    map_matrix,
)

logger = logging.getLogger(__name__)

MAGIC = b"MXW1"
FORMAT_VERSION = 1
CHUNK_SIZE = 64  # samples per crossbar read; part of the random-stream layout


@dataclass(frozen=True, eq=False)
class Dense:
    weights: np.ndarray
    bias: Optional[np.ndarray] = None
    kind = "dense"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2:
            raise DimensionMismatchError(f"Dense weights must be (n_in, n_out), got {w.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", _check_bias(self.bias, w.shape[1]))

    def matrix(self) -> np.ndarray:
        return _with_bias_row(self.weights, self.bias)


@dataclass(frozen=True, eq=False)
class Conv2D:
    weights: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    kind = "conv2d"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 4:
            raise DimensionMismatchError(f"Conv2D weights must be (kh, kw, c_in, c_out), got {w.shape}")
        if self.stride < 1:
            raise DomainError(f"stride must be >= 1, got {self.stride}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", _check_bias(self.bias, w.shape[3]))

    def matrix(self) -> np.ndarray:
        kh, kw, c_in, c_out = self.weights.shape
        return _with_bias_row(self.weights.reshape(kh * kw * c_in, c_out), self.bias)


@dataclass(frozen=True)
class ReLU:
    kind = "relu"


@dataclass(frozen=True)
class MeanPool:
    p: int
    kind = "mean_pool"

    def __post_init__(self):
        if self.p < 1:
            raise DomainError(f"Pool size must be >= 1, got {self.p}")


@dataclass(frozen=True)
class SoftmaxArgmax:
    kind = "softmax_argmax"


Layer = Union[Dense, Conv2D, ReLU, MeanPool, SoftmaxArgmax]
PARAMETRIC = (Dense, Conv2D)


def _check_bias(bias, n_out: int) -> Optional[np.ndarray]:
    if bias is None:
        return None
    b = np.asarray(bias, dtype=float).reshape(-1)
    if b.shape != (n_out,):
        raise DimensionMismatchError(f"Bias has {b.size} values for {n_out} outputs")
    return b


def _with_bias_row(w: np.ndarray, bias: Optional[np.ndarray]) -> np.ndarray:
    return w if bias is None else np.vstack([w, bias[None, :]])


def _out_shape(layer: Layer, shape: Tuple[int, ...]) -> Tuple[int, ...]:
    if isinstance(layer, Dense):
        n_in = int(np.prod(shape))
        if layer.weights.shape[0] != n_in:
            raise DimensionMismatchError(f"Dense layer expects {layer.weights.shape[0]} inputs, gets {n_in}")
        return (layer.weights.shape[1],)
    if isinstance(layer, Conv2D):
        kh, kw, c_in, c_out = layer.weights.shape
        if len(shape) != 3 or shape[2] != c_in or shape[0] < kh or shape[1] < kw:
            raise DimensionMismatchError(f"Conv2D {layer.weights.shape} cannot take input {shape}")
        return ((shape[0] - kh) // layer.stride + 1, (shape[1] - kw) // layer.stride + 1, c_out)
    if isinstance(layer, MeanPool):
        if len(shape) != 3 or shape[0] < layer.p or shape[1] < layer.p:
            raise DimensionMismatchError(f"MeanPool({layer.p}) cannot take input {shape}")
        return (shape[0] // layer.p, shape[1] // layer.p, shape[2])
    return shape


@dataclass(frozen=True, eq=False)
class NetworkDef:
    layers: Tuple[Layer, ...]
    input_shape: Tuple[int, ...]
    float_accuracy_percent: Optional[float] = None  # recorded when the fixture was built
    shapes: Tuple[Tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DomainError("A network needs at least one layer")
        shape = tuple(int(s) for s in self.input_shape)
        shapes = [shape]
        for i, layer in enumerate(layers):
            if isinstance(layer, SoftmaxArgmax) and i != len(layers) - 1:
                raise DomainError("softmax_argmax must be the last layer")
            shape = _out_shape(layer, shape)
            shapes.append(shape)
        if len(shape) != 1:
            raise DimensionMismatchError(f"The last layer must yield a score vector, got shape {shape}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_shape", shapes[0])
        object.__setattr__(self, "shapes", tuple(shapes))

    @property
    def n_classes(self) -> int:
        return self.shapes[-1][0]

    @property
    def parameter_count(self) -> int:
        return sum(layer.matrix().size for layer in self.layers if isinstance(layer, PARAMETRIC))

    def parametric(self) -> List[Tuple[int, Union[Dense, Conv2D]]]:
        return [(i, layer) for i, layer in enumerate(self.layers) if isinstance(layer, PARAMETRIC)]

    def with_matrices(self, matrices: Dict[int, np.ndarray]) -> "NetworkDef":
        """Copy of the network with the given layers' (weights + bias row) matrices replaced."""
        layers = list(self.layers)
        for i, m in matrices.items():
            layer = layers[i]
            w = m[:-1] if layer.bias is not None else m
            b = m[-1] if layer.bias is not None else None
            layers[i] = replace(layer, weights=w.reshape(layer.weights.shape), bias=b)
        return NetworkDef(tuple(layers), self.input_shape, self.float_accuracy_percent)


class Dataset(NamedTuple):
    features: np.ndarray  # (N, n_features)
    labels: np.ndarray  # (N,) integer classes

    def __len__(self) -> int:
        return len(self.labels)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    batch, oh, ow = windows.shape[:3]
    return windows.transpose(0, 1, 2, 4, 5, 3).reshape(batch, oh, ow, -1)


def _mean_pool(x: np.ndarray, p: int) -> np.ndarray:
    batch, height, width, channels = x.shape
    h, w = height // p, width // p
    return x[:, : h * p, : w * p].reshape(batch, h, p, w, p, channels).mean(axis=(2, 4))


def _as_batch(net: NetworkDef, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    size = int(np.prod(net.input_shape))
    if x.shape == net.input_shape or (x.ndim == 1 and x.size == size):
        return x.reshape((1,) + net.input_shape)
    if x.ndim == len(net.input_shape) + 1 and x.shape[1:] == net.input_shape:
        return x
    if x.ndim == 2 and x.shape[1] == size:
        return x.reshape((-1,) + net.input_shape)
    raise DimensionMismatchError(f"Input of shape {x.shape} does not match network input {net.input_shape}")


def _run(net: NetworkDef, x: np.ndarray, linear) -> np.ndarray:
    """Forward a batch, delegating every matrix product to ``linear(index, matrix_input)``."""
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Dense):
            x = x.reshape(len(x), -1)
            if layer.bias is not None:
                x = np.hstack([x, np.ones((len(x), 1))])
            x = linear(i, x)
        elif isinstance(layer, Conv2D):
            kh, kw = layer.weights.shape[:2]
            patches = _im2col(x, kh, kw, layer.stride)
            batch, oh, ow, size = patches.shape
            flat = patches.reshape(-1, size)
            if layer.bias is not None:
                flat = np.hstack([flat, np.ones((len(flat), 1))])
            x = linear(i, flat).reshape(batch, oh, ow, -1)
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        elif isinstance(layer, MeanPool):
            x = _mean_pool(x, layer.p)
    return x.reshape(len(x), -1)


def float_scores(net: NetworkDef, inputs) -> np.ndarray:
    matrices = {i: layer.matrix() for i, layer in net.parametric()}
    return _run(net, _as_batch(net, inputs), lambda i, x: x @ matrices[i])


def predict_float(net: NetworkDef, inputs) -> np.ndarray:
    return np.argmax(float_scores(net, inputs), axis=1)


def forward_float(net: NetworkDef, x) -> int:
    """Class index of a single input in floating point."""
    batch = _as_batch(net, x)
    if len(batch) != 1:
        raise DimensionMismatchError(f"forward_float takes one input, got {len(batch)}")
    return int(predict_float(net, batch)[0])


def accuracy_percent(predictions: np.ndarray, labels: np.ndarray) -> float:
    return 100.0 * float(np.mean(np.asarray(predictions) == np.asarray(labels)))


@dataclass(frozen=True)
class NodeConfig:
    m: int
    L: int
    topology: Topology = Topology.PARALLEL
    r_on: float = 1e3
    r_off: float = 1e5
    placement: LevelPlacement = LevelPlacement.LINEAR_IN_CONDUCTANCE
    placement_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        if self.m < 1 or self.L < 1:
            raise DomainError(f"Need m >= 1 and L >= 1, got m={self.m}, L={self.L}")

    @property
    def device(self) -> DeviceSpec:
        return DeviceSpec(self.r_on, self.r_off, self.L, self.placement, placement_seed=self.placement_seed)


@lru_cache(maxsize=64)
def _base_quantizer(levels: LevelSet, m: int, topology: Topology, device: DeviceSpec,
                    epsilon: float, cap: int) -> QuantizerTable:
    return build_quantizer(levels, m, topology, 0.0, 1.0, epsilon, cap, device)


def layer_quantizer(matrix: np.ndarray, levels: LevelSet, node: NodeConfig, device: Optional[DeviceSpec] = None,
                    epsilon: float = DEFAULT_EPSILON, cap: int = DEFAULT_ENUM_CAP) -> QuantizerTable:
    """Magnitude quantizer over [0, max|w|] for one layer's matrix."""
    base = _base_quantizer(levels, node.m, node.topology, device or node.device, epsilon, cap)
    w_max = float(np.max(np.abs(matrix))) if matrix.size else 0.0
    return replace(base, w_max=w_max if w_max > 0 else 1.0)


class MappedNetwork:
    """Every parametric layer of a network programmed once onto its crossbar.

    Reads are made in fixed chunks of CHUNK_SIZE samples, each with its own random
    streams, so predictions do not depend on how a dataset is split across workers.
    """

    def __init__(
        self,
        net: NetworkDef,
        node: NodeConfig,
        nonideal: Optional[NonIdealityConfig] = None,
        trial: int = 0,
        epsilon: float = DEFAULT_EPSILON,
        cap: int = DEFAULT_ENUM_CAP,
    ):
        self.net = net
        self.node = node
        self.nonideal = nonideal if nonideal is not None else NonIdealityConfig.disabled()
        self.trial = int(trial)
        levels, held = aged_levels(node.device, self.nonideal.aging)
        self.quantizers: Dict[int, QuantizerTable] = {}
        self.mapped: Dict[int, MappedMatrix] = {}
        for i, layer in net.parametric():
            matrix = layer.matrix()
            q = layer_quantizer(matrix, levels, node, epsilon=epsilon, cap=cap)
            self.quantizers[i] = q
            self.mapped[i] = map_matrix(matrix, q, signed=True, nonideal=self._layer_config(i),
                                        trial=self.trial, realized_levels=held)
        logger.debug("Mapped %d layers at m=%d L=%d (%s), trial %d",
                     len(self.mapped), node.m, node.L, node.topology.value, self.trial)

    @property
    def level_count(self) -> int:
        return next(iter(self.quantizers.values())).catalog.combinatorial_count

    def _layer_config(self, index: int, chunk: Optional[int] = None) -> NonIdealityConfig:
        counters = (index,) if chunk is None else (index, chunk)
        return self.nonideal.with_(master_seed=derive_seed(self.nonideal.master_seed, "layer", *counters))

    def _linear(self, chunk: int, index: int, x: np.ndarray) -> np.ndarray:
        mapped, q = self.mapped[index], self.quantizers[index]
        read = noisy_read(mapped.crossbar, x, self._layer_config(index, chunk), self.trial, mapped.reference)
        return currents_to_weights(q, signed_read(mapped.pos_cols, mapped.neg_cols, read))

    def scores(self, inputs) -> np.ndarray:
        x = _as_batch(self.net, inputs)
        parts = [
            _run(self.net, x[start: start + CHUNK_SIZE], partial(self._linear, chunk))
            for chunk, start in enumerate(range(0, len(x), CHUNK_SIZE))
        ]
        return np.concatenate(parts) if parts else np.empty((0, self.net.n_classes))

    def predict(self, inputs) -> np.ndarray:
        return np.argmax(self.scores(inputs), axis=1)


def forward_mapped(net: NetworkDef, x, node_cfg: NodeConfig, nonideal: NonIdealityConfig, trial: int = 0) -> int:
    """Class index of a single input with every parametric layer on a crossbar."""
    batch = _as_batch(net, x)
    if len(batch) != 1:
        raise DimensionMismatchError(f"forward_mapped takes one input, got {len(batch)}")
    return int(MappedNetwork(net, node_cfg, nonideal, trial).predict(batch)[0])


def snap_to_catalog(net: NetworkDef, node: NodeConfig) -> NetworkDef:
    """The network with every weight replaced by the nearest weight its node can realize."""
    levels = aged_levels(node.device, None)[0]
    snapped = {}
    for i, layer in net.parametric():
        matrix = layer.matrix()
        q = layer_quantizer(matrix, levels, node)
        idx, _ = q.quantize(np.abs(matrix))
        snapped[i] = np.sign(matrix) * q.to_weight(q.conductances[idx])
    return net.with_matrices(snapped)


@dataclass(frozen=True)
class EvalRow:
    m: int
    L: int
    L_C: int
    variability_frac: float
    accuracy_percent: float
    float_baseline_percent: float
    trials: int


@dataclass(frozen=True)
class EvalReport:
    rows: Tuple[EvalRow, ...]

    COLUMNS = ("m", "L", "L_C", "variability_frac", "accuracy_percent", "float_baseline_percent", "trials")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([[getattr(r, c) for c in self.COLUMNS] for r in self.rows], columns=list(self.COLUMNS))

    def __len__(self) -> int:
        return len(self.rows)


def _cell_seed(seed: int, node: NodeConfig, variability: float) -> int:
    return derive_seed(seed, "nn_cell", node.m, node.L, stream_id(node.topology.value),
                       int(round(variability * 1e9)))


def _evaluate_cell(cell, net: NetworkDef, dataset: Dataset, trials: int, seed: int,
                   nonideal: NonIdealityConfig, baseline: float) -> EvalRow:
    node, variability = cell
    cfg = nonideal.with_(conductance_var_frac=variability, master_seed=_cell_seed(seed, node, variability))
    runs = 1 if cfg.is_deterministic else trials
    accuracies = []
    level_count = 0
    for trial in range(runs):
        mapped = MappedNetwork(net, node, cfg, trial)
        level_count = mapped.level_count
        accuracies.append(accuracy_percent(mapped.predict(dataset.features), dataset.labels))
    return EvalRow(node.m, node.L, level_count, float(variability), float(np.mean(accuracies)), baseline, runs)


def evaluate_grid(
    net: NetworkDef,
    dataset: Dataset,
    grid: Sequence[Tuple[int, int]],
    variabilities: Sequence[float],
    trials: int,
    seed: int,
    nonideal: Optional[NonIdealityConfig] = None,
    topology: Topology = Topology.PARALLEL,
    r_on: float = 1e3,
    r_off: float = 1e5,
    placement: LevelPlacement = LevelPlacement.LINEAR_IN_CONDUCTANCE,
    placement_seed: int = 0,
    workers: int = 1,
    progress: bool = True,
) -> EvalReport:
    """Accuracy for every (m, L) x variability cell, averaged over trials.

    Cells without any random term run a single trial and report ``trials=1``.
    """
    if not grid or not len(dataset):
        raise DomainError("evaluate_grid needs a non-empty grid and dataset")
    if not variabilities:
        raise DomainError("evaluate_grid needs at least one variability value")
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    base = nonideal if nonideal is not None else NonIdealityConfig.disabled()
    baseline = accuracy_percent(predict_float(net, dataset.features), dataset.labels)
    logger.info("Float baseline accuracy %.2f%% on %d samples", baseline, len(dataset))

    cells = [
        (NodeConfig(m, L, topology, r_on, r_off, placement, placement_seed), float(v))
        for m, L in grid
        for v in variabilities
    ]
    worker = partial(_evaluate_cell, net=net, dataset=dataset, trials=trials, seed=seed,
                     nonideal=base, baseline=baseline)
    rows = ordered_map(worker, cells, workers, desc="nn", progress=progress)
    return EvalReport(tuple(rows))


# MXW1 fixture files


def _layer_header(layer: Layer) -> dict:
    entry = {"type": layer.kind}
    if isinstance(layer, PARAMETRIC):
        entry["shape"] = list(layer.weights.shape)
        entry["bias"] = layer.bias is not None
    if isinstance(layer, Conv2D):
        entry["stride"] = layer.stride
    if isinstance(layer, MeanPool):
        entry["p"] = layer.p
    return entry


def write_weights(net: NetworkDef, path) -> None:
    header = {
        "version": FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "layers": [_layer_header(layer) for layer in net.layers],
        "float_accuracy_percent": net.float_accuracy_percent,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = []
    for _, layer in net.parametric():
        payload.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
        if layer.bias is not None:
            payload.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(MAGIC + struct.pack("<I", len(blob)) + blob + b"".join(payload))
    logger.info("Wrote %d-parameter network to %s", net.parameter_count, path)


def _take(data: bytes, offset: int, shape: Sequence[int], path) -> Tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    end = offset + 4 * count
    if end > len(data):
        raise WeightsFormatError(f"{path}: payload ends after {len(data)} bytes, expected at least {end}")
    return np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(float).reshape(shape), end


def read_weights(path) -> NetworkDef:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise WeightsFormatError(f"{path}: not an MXW1 file")
    (size,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8: 8 + size].decode("utf-8"))
        version = header["version"]
        layer_entries = header["layers"]
        input_shape = tuple(header["input_shape"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise WeightsFormatError(f"{path}: unreadable header: {e}") from e
    if version != FORMAT_VERSION:
        raise WeightsFormatError(f"{path}: unsupported version {version}")

    offset = 8 + size
    layers: List[Layer] = []
    for entry in layer_entries:
        kind = entry.get("type")
        if kind in ("dense", "conv2d"):
            weights, offset = _take(data, offset, entry["shape"], path)
            bias = None
            if entry.get("bias"):
                bias, offset = _take(data, offset, [entry["shape"][-1]], path)
            if kind == "dense":
                layers.append(Dense(weights, bias))
            else:
                layers.append(Conv2D(weights, bias, int(entry.get("stride", 1))))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "mean_pool":
            layers.append(MeanPool(int(entry["p"])))
        elif kind == "softmax_argmax":
            layers.append(SoftmaxArgmax())
        else:
            raise WeightsFormatError(f"{path}: unknown layer type {kind!r}")
    if offset != len(data):
        raise WeightsFormatError(f"{path}: {len(data) - offset} trailing bytes after the last layer")
    try:
        return NetworkDef(tuple(layers), input_shape, header.get("float_accuracy_percent"))
    except (DimensionMismatchError, DomainError) as e:
        raise WeightsFormatError(f"{path}: inconsistent layer shapes: {e}") from e


def write_dataset(dataset: Dataset, path) -> None:
    frame = pd.DataFrame(np.asarray(dataset.features, dtype=float))
    frame["label"] = np.asarray(dataset.labels, dtype=int)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, header=False, index=False, float_format="%.9g")


def read_dataset(path, limit: Optional[int] = None) -> Dataset:
    """Samples from a CSV of feature columns followed by an integer label."""
    try:
        frame = pd.read_csv(path, header=None, comment="#")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DomainError(f"{path}: unreadable dataset: {e}") from e
    if frame.shape[1] < 2:
        raise DomainError(f"{path}: a sample needs features and a label")
    values = frame.apply(pd.to_numeric, errors="coerce")
    if values.isna().any().any():
        raise DomainError(f"{path}: non-numeric values in dataset")
    if limit is not None:
        values = values.iloc[:limit]
    labels = values.iloc[:, -1].to_numpy()
    if not np.all(labels == np.round(labels)):
        raise DomainError(f"{path}: labels must be integers")
    return Dataset(values.iloc[:, :-1].to_numpy(dtype=float), labels.astype(int))
