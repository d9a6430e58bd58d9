"""
Experiment configuration.

Config files are INI style, one `[section]` per concern and `key = value` pairs, with `#`
comments. Lists are comma separated; `a..b` expands to the inclusive integer range.

| section      | keys                                                                   |
|--------------|------------------------------------------------------------------------|
| [experiment] | name, trials, seed, workers, output                                    |
| [crossbar]   | rows, cols, signed, w_min, w_max, epsilon, enum_cap                    |
| [device]     | r_on, r_off, placement, levels_uS, placement_seed                      |
| [grid]       | m, L, topology, ratios, aging_ratios, input_noise_variances, variabilities |
| [nonideal]   | read_noise_frac, read_noise_scope, conductance_var_frac, wire_enabled, |
|              | wire_res_mean, wire_res_std, boundary_drift_frac, read_instability_frac, |
|              | input_noise_variance, program_verify, program_step_frac,               |
|              | program_tolerance_frac, program_max_pulses                             |
| [aging]      | type, reprogram                                                        |
| [network]    | weights, dataset, samples, fixture_seed                                |

Values are resolved in the order default < file < environment < command line. Environment
overrides: SUPERRES_SEED, SUPERRES_TRIALS, SUPERRES_WORKERS, SUPERRES_ENUM_CAP.
"""

import configparser
import hashlib
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

from superres.crossbar_sim import NonIdealityConfig, ReadNoiseScope, Topology
from superres.device_model import AgingState, AgingType, DeviceSpec, LevelPlacement
from superres.errors import ConfigError, SuperResError
from superres.levels_core import DEFAULT_ENUM_CAP, DEFAULT_EPSILON
from superres.rng import FIXTURE_SEED

logger = logging.getLogger(__name__)

MAX_SEED = (1 << 64) - 1


class Experiment(str, Enum):
    LEVELS = "levels"
    RCE_GRID = "rce_grid"
    RATIO_SWEEP = "ratio_sweep"
    AGING_SWEEP = "aging_sweep"
    NOISE_SWEEP = "noise_sweep"
    WIRE_TABLE = "wire_table"
    NN_GRID = "nn_grid"
    MAPDUMP = "mapdump"


DEFAULT_TRIALS = {Experiment.NN_GRID: 30}


@dataclass(frozen=True)
class CrossbarConfig:
    rows: int = 10
    cols: int = 10
    signed: bool = True
    w_min: float = -1.0
    w_max: float = 1.0
    epsilon: float = DEFAULT_EPSILON
    enum_cap: int = DEFAULT_ENUM_CAP


@dataclass(frozen=True)
class DeviceConfig:
    r_on: float = 1e3
    r_off: float = 1e5
    placement: LevelPlacement = LevelPlacement.LINEAR_IN_CONDUCTANCE
    levels_uS: Tuple[float, ...] = ()
    placement_seed: int = 0

    def spec(self, L: int, r_off: Optional[float] = None) -> DeviceSpec:
        r_off = self.r_off if r_off is None else r_off
        if self.levels_uS:
            return DeviceSpec.from_levels_uS(self.r_on, r_off, self.levels_uS)
        return DeviceSpec(self.r_on, r_off, L, self.placement, placement_seed=self.placement_seed)


@dataclass(frozen=True)
class GridConfig:
    m: Tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    L: Tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12)
    topology: Topology = Topology.PARALLEL
    ratios: Tuple[float, ...] = (100.0, 80.0, 60.0, 40.0, 20.0, 10.0, 5.0)
    aging_ratios: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
    input_noise_variances: Tuple[float, ...] = (0.0, 0.001, 0.002, 0.005, 0.01)
    variabilities: Tuple[float, ...] = (0.0, 0.1)

    @property
    def cells(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((m, L) for m in self.m for L in self.L)


@dataclass(frozen=True)
class AgingConfig:
    type: AgingType = AgingType.TYPE3
    reprogram: bool = True

    def state(self, ratio: float) -> AgingState:
        return AgingState(self.type, ratio, self.reprogram)


@dataclass(frozen=True)
class NetworkConfig:
    weights: str = "data/fixture_digits.mxw"
    dataset: str = "data/fixture_digits_test.csv"
    samples: Optional[int] = None
    fixture_seed: int = FIXTURE_SEED


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment
    trials: int = 100
    seed: int = 0
    workers: int = 1
    output: Optional[str] = None
    crossbar: CrossbarConfig = field(default_factory=CrossbarConfig)
    device: DeviceConfig = field(default_factory=DeviceConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    nonideal: NonIdealityConfig = field(default_factory=NonIdealityConfig)
    aging: AgingConfig = field(default_factory=AgingConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)

    @property
    def weight_range(self) -> Tuple[float, float]:
        """Range the quantizers are built over: magnitudes for signed mapping."""
        if self.crossbar.signed:
            return 0.0, max(abs(self.crossbar.w_min), abs(self.crossbar.w_max))
        return self.crossbar.w_min, self.crossbar.w_max

    def canonical(self) -> Dict[str, Any]:
        """Everything that can change results; output path and worker count excluded."""
        data = asdict(self)
        data.pop("output")
        data.pop("workers")
        return json.loads(json.dumps(data, default=_jsonable, sort_keys=True))

    @property
    def sha256(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _jsonable(value):
    if isinstance(value, Enum):
        return value.value
    raise TypeError(f"Cannot serialise {type(value).__name__}")


# Value parsers


def _int(text: str) -> int:
    return int(text, 0)


def _float(text: str) -> float:
    return float(text)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def _items(text: str):
    return [item.strip() for item in text.split(",") if item.strip()]


def _int_list(text: str) -> Tuple[int, ...]:
    values = []
    for item in _items(text):
        if ".." in item:
            lo, hi = (int(p) for p in item.split("..", 1))
            if hi < lo:
                raise ValueError(f"empty range {item!r}")
            values.extend(range(lo, hi + 1))
        else:
            values.append(int(item))
    return tuple(values)


def _float_list(text: str) -> Tuple[float, ...]:
    values = []
    for item in _items(text):
        if ".." in item:
            values.extend(float(v) for v in _int_list(item))
        else:
            values.append(float(item))
    return tuple(values)


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "all", "none") else int(text)


def _enum(kind) -> Callable[[str], Any]:
    return lambda text: kind(text.strip().lower())


_NONIDEAL_KEYS = {
    "read_noise_frac": _float,
    "read_noise_scope": _enum(ReadNoiseScope),
    "conductance_var_frac": _float,
    "wire_enabled": _bool,
    "wire_res_mean": _float,
    "wire_res_std": _float,
    "boundary_drift_frac": _float,
    "read_instability_frac": _float,
    "input_noise_variance": _float,
    "program_verify": _bool,
    "program_step_frac": _float,
    "program_tolerance_frac": _float,
    "program_max_pulses": _int,
}

SCHEMA: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "experiment": {"name": _enum(Experiment), "trials": _int, "seed": _seed, "workers": _int, "output": str},
    "crossbar": {"rows": _int, "cols": _int, "signed": _bool, "w_min": _float, "w_max": _float,
                 "epsilon": _float, "enum_cap": _int},
    "device": {"r_on": _float, "r_off": _float, "placement": _enum(LevelPlacement), "levels_uS": _float_list,
               "placement_seed": _seed},
    "grid": {"m": _int_list, "L": _int_list, "topology": _enum(Topology), "ratios": _float_list,
             "aging_ratios": _float_list, "input_noise_variances": _float_list, "variabilities": _float_list},
    "nonideal": _NONIDEAL_KEYS,
    "aging": {"type": _enum(AgingType), "reprogram": _bool},
    "network": {"weights": str, "dataset": str, "samples": _optional_int, "fixture_seed": _seed},
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^#;=:\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    """(section, key) -> 1-based source line, for error messages."""
    index: Dict[Tuple[str, str], int] = {}
    section = ""
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION_RE.match(line)
        if header:
            section = header.group(1).strip()
            index[(section, "")] = number
            continue
        key = _KEY_RE.match(line)
        if key and section:
            index.setdefault((section, key.group(1)), number)
    return index


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Dict[str, Any]]:
    """Parse and type-check config text into {section: {key: value}}."""
    parser = configparser.ConfigParser(
        comment_prefixes=("#", ";"), inline_comment_prefixes=("#",), interpolation=None, strict=True
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}", line=getattr(e, "lineno", None)) from e
    lines = _line_index(text)

    parsed: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]", field=section, line=lines.get((section, "")))
        values = {}
        for key, raw in parser.items(section):
            where = f"{section}.{key}"
            line = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {where}", field=where, line=line)
            try:
                values[key] = SCHEMA[section][key](raw)
            except ValueError as e:
                raise ConfigError(f"{source}: bad value for {where}: {e}", field=where, line=line) from e
        parsed[section] = values
    return parsed


def _field_line(parsed_lines, section, key):
    return parsed_lines.get((section, key)) if parsed_lines else None


def build_config(
    experiment: Experiment,
    sections: Optional[Mapping[str, Mapping[str, Any]]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    lines: Optional[Dict[Tuple[str, str], int]] = None,
) -> ExperimentConfig:
    """Resolve an ExperimentConfig from parsed sections plus top-level overrides, then validate."""
    sections = {k: dict(v) for k, v in (sections or {}).items()}
    top = dict(sections.pop("experiment", {}))
    named = top.pop("name", None)
    if named is not None and Experiment(named) is not Experiment(experiment):
        raise ConfigError(
            f"Config is for experiment {named.value!r}, not {Experiment(experiment).value!r}",
            field="experiment.name", line=_field_line(lines, "experiment", "name"),
        )
    experiment = Experiment(experiment)
    top.setdefault("trials", DEFAULT_TRIALS.get(experiment, 100))
    top.update({k: v for k, v in (overrides or {}).items() if v is not None})

    nonideal_values = sections.pop("nonideal", {})
    try:
        nonideal = NonIdealityConfig(master_seed=top.get("seed", 0), **nonideal_values)
    except SuperResError as e:
        raise ConfigError(str(e), field="nonideal") from e

    cfg = ExperimentConfig(
        experiment=experiment,
        crossbar=CrossbarConfig(**sections.pop("crossbar", {})),
        device=DeviceConfig(**sections.pop("device", {})),
        grid=GridConfig(**sections.pop("grid", {})),
        aging=AgingConfig(**sections.pop("aging", {})),
        network=NetworkConfig(**sections.pop("network", {})),
        nonideal=nonideal,
        **top,
    )
    validate(cfg, lines)
    return cfg


def validate(cfg: ExperimentConfig, lines=None) -> None:
    def fail(message, section, key):
        raise ConfigError(message, field=f"{section}.{key}", line=_field_line(lines, section, key))

    if cfg.trials < 1:
        fail(f"trials must be >= 1, got {cfg.trials}", "experiment", "trials")
    if cfg.workers < 1:
        fail(f"workers must be >= 1, got {cfg.workers}", "experiment", "workers")
    if not 0 <= cfg.seed <= MAX_SEED:
        fail(f"seed must be an unsigned 64-bit integer, got {cfg.seed}", "experiment", "seed")
    if cfg.crossbar.rows < 1 or cfg.crossbar.cols < 1:
        fail("crossbar needs rows >= 1 and cols >= 1", "crossbar", "rows")
    if not cfg.crossbar.w_min < cfg.crossbar.w_max:
        fail(f"need w_min < w_max, got [{cfg.crossbar.w_min}, {cfg.crossbar.w_max}]", "crossbar", "w_min")
    if cfg.crossbar.enum_cap < 1:
        fail("enum_cap must be >= 1", "crossbar", "enum_cap")
    if not 0 < cfg.device.r_on < cfg.device.r_off:
        fail(f"need 0 < r_on < r_off, got {cfg.device.r_on}, {cfg.device.r_off}", "device", "r_on")
    for key in ("m", "L", "ratios", "aging_ratios", "input_noise_variances", "variabilities"):
        if not getattr(cfg.grid, key):
            fail(f"grid list {key} must not be empty", "grid", key)
    if min(cfg.grid.m) < 1 or min(cfg.grid.L) < 1:
        fail("grid values m and L must be >= 1", "grid", "m")
    if cfg.device.levels_uS:
        if cfg.grid.L != (len(cfg.device.levels_uS),):
            fail(f"explicit levels_uS fix L to {len(cfg.device.levels_uS)}; set L accordingly", "grid", "L")
        try:
            cfg.device.spec(len(cfg.device.levels_uS))
        except SuperResError as e:
            fail(str(e), "device", "levels_uS")
    if min(cfg.grid.ratios) <= 1:
        fail("R_OFF/R_ON ratios must be > 1", "grid", "ratios")
    if not all(0 <= r < 1 for r in cfg.grid.aging_ratios):
        fail("aging ratios must lie in [0, 1)", "grid", "aging_ratios")
    if min(cfg.grid.input_noise_variances) < 0 or min(cfg.grid.variabilities) < 0:
        fail("variances and variabilities must be >= 0", "grid", "input_noise_variances")
    if cfg.network.samples is not None and cfg.network.samples < 1:
        fail("network samples must be >= 1", "network", "samples")


ENV_OVERRIDES = {
    "SUPERRES_SEED": ("seed", _seed),
    "SUPERRES_TRIALS": ("trials", _int),
    "SUPERRES_WORKERS": ("workers", _int),
}


def environment_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    overrides: Dict[str, Any] = {}
    for name, (key, parse) in ENV_OVERRIDES.items():
        raw = environ.get(name)
        if raw is None or not raw.strip():
            continue
        try:
            overrides[key] = parse(raw)
        except ValueError as e:
            raise ConfigError(f"bad value in environment variable {name}: {e}", field=name) from e
    return overrides


def load_config(
    path,
    experiment: Experiment,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """Read a config file and resolve it with environment and command-line overrides."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    sections = parse_config_text(text, str(path))
    environ = os.environ if environ is None else environ

    resolved = environment_overrides(environ)
    resolved.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cap = environ.get("SUPERRES_ENUM_CAP")
    if cap:
        try:
            sections.setdefault("crossbar", {})["enum_cap"] = _int(cap)
        except ValueError as e:
            raise ConfigError(f"bad value in environment variable SUPERRES_ENUM_CAP: {e}",
                              field="SUPERRES_ENUM_CAP") from e

    cfg = build_config(experiment, sections, resolved, _line_index(text))
    logger.info("Loaded %s config from %s (sha256 %s)", cfg.experiment.value, path, cfg.sha256[:12])
    return cfg


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy with top-level fields replaced, keeping the nonideal seed in step."""
    cfg = replace(cfg, **changes)
    if "seed" in changes:
        cfg = replace(cfg, nonideal=cfg.nonideal.with_(master_seed=cfg.seed))
    validate(cfg)
    return cfg

