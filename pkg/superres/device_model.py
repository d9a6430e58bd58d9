"""
Single memristor behaviour: stable levels between R_ON and R_OFF, aging of the
boundary resistances, programming variability and iterative SET/RESET programming.

Aging types, by how the boundary resistances move as the device is cycled:

| type  | R_ON              | R_OFF             |
|-------|-------------------|-------------------|
| type1 | x (1 - ratio)     | x (1 - ratio)     |
| type2 | x (1 + ratio)     | x (1 + ratio)     |
| type3 | x (1 + ratio)     | x (1 - ratio)     |

After aging the levels are placed again inside the new window with the device's own
placement rule, which is what reprogramming a worn device does.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from tenacity import Retrying, retry_if_result, stop_after_attempt

from superres.errors import AgingCollapseError, DomainError
from superres.levels_core import LevelSet
from superres.rng import substream

logger = logging.getLogger(__name__)

WINDOW_RTOL = 1e-9


class LevelPlacement(str, Enum):
    LINEAR_IN_CONDUCTANCE = "linear_in_conductance"
    LINEAR_IN_RESISTANCE = "linear_in_resistance"
    EXPLICIT = "explicit"
    RANDOM = "random"  # seeded uniform interior levels, endpoints fixed


class AgingType(str, Enum):
    TYPE1 = "type1"
    TYPE2 = "type2"
    TYPE3 = "type3"


class Polarity(str, Enum):
    SET = "SET"
    RESET = "RESET"


@dataclass(frozen=True)
class DeviceSpec:
    r_on: float
    r_off: float
    L: int
    placement: LevelPlacement = LevelPlacement.LINEAR_IN_CONDUCTANCE
    explicit_levels: Tuple[float, ...] = ()  # siemens, only for EXPLICIT placement
    placement_seed: int = 0  # only for RANDOM placement

    def __post_init__(self):
        object.__setattr__(self, "placement", LevelPlacement(self.placement))
        object.__setattr__(self, "explicit_levels", tuple(float(g) for g in self.explicit_levels))
        if not (0 < self.r_on < self.r_off) or not math.isfinite(self.r_off):
            raise DomainError(f"Need 0 < r_on < r_off, got r_on={self.r_on}, r_off={self.r_off}")
        if self.placement is LevelPlacement.EXPLICIT:
            if len(self.explicit_levels) != self.L:
                raise DomainError(
                    f"Explicit placement lists {len(self.explicit_levels)} levels but L={self.L}"
                )
        elif self.explicit_levels:
            raise DomainError("explicit_levels is only valid with explicit placement")
        if self.L < 1:
            raise DomainError(f"L must be >= 1, got {self.L}")

    @classmethod
    def from_levels_uS(cls, r_on: float, r_off: float, levels_uS) -> "DeviceSpec":
        levels = tuple(v * 1e-6 for v in levels_uS)
        return cls(r_on, r_off, len(levels), LevelPlacement.EXPLICIT, levels)

    @property
    def g_min(self) -> float:
        return 1.0 / self.r_off

    @property
    def g_max(self) -> float:
        return 1.0 / self.r_on

    @property
    def ratio(self) -> float:
        return self.r_off / self.r_on


@dataclass(frozen=True)
class AgingState:
    aging_type: AgingType
    ratio: float
    reprogram: bool = True

    def __post_init__(self):
        object.__setattr__(self, "aging_type", AgingType(self.aging_type))
        if not 0 <= self.ratio < 1:
            raise DomainError(f"Aging ratio must lie in [0, 1), got {self.ratio}")

    def scale_window(self, r_on: float, r_off: float) -> Tuple[float, float]:
        if self.aging_type is AgingType.TYPE1:
            return r_on * (1 - self.ratio), r_off * (1 - self.ratio)
        if self.aging_type is AgingType.TYPE2:
            return r_on * (1 + self.ratio), r_off * (1 + self.ratio)
        aged_on, aged_off = r_on * (1 + self.ratio), r_off * (1 - self.ratio)
        if not aged_on < aged_off:
            raise AgingCollapseError(
                f"Type 3 aging at ratio {self.ratio} closes the window: "
                f"R_ON'={aged_on:.6g} >= R_OFF'={aged_off:.6g}"
            )
        return aged_on, aged_off


@dataclass(frozen=True)
class ProgramPulseTrace:
    pulses: Tuple[Tuple[Polarity, float], ...]
    converged: bool
    final_error: float

    @property
    def final_conductance(self) -> float:
        return self.pulses[-1][1] if self.pulses else math.nan


def _place(g_min: float, g_max: float, L: int, placement: LevelPlacement, seed: int = 0) -> Tuple[float, ...]:
    if L == 1:
        return (g_max,)
    if placement is LevelPlacement.RANDOM:
        interior = np.sort(substream(seed, "level_placement", L).uniform(0.0, 1.0, L - 2))
        positions = np.concatenate([[0.0], interior, [1.0]])
        values = g_min + positions * (g_max - g_min)
        values[0], values[-1] = g_min, g_max
        return tuple(float(g) for g in values)
    if placement is LevelPlacement.LINEAR_IN_RESISTANCE:
        values = 1.0 / np.linspace(1.0 / g_min, 1.0 / g_max, L)
    else:
        values = np.linspace(g_min, g_max, L)
    values[0], values[-1] = g_min, g_max
    return tuple(float(g) for g in values)


def derive_levels(spec: DeviceSpec) -> LevelSet:
    """The L stable conductances of a device, spanning [1/r_off, 1/r_on]."""
    if spec.placement is not LevelPlacement.EXPLICIT:
        return LevelSet(_place(spec.g_min, spec.g_max, spec.L, spec.placement, spec.placement_seed))

    lo = spec.g_min * (1 - WINDOW_RTOL)
    hi = spec.g_max * (1 + WINDOW_RTOL)
    outside = [g for g in spec.explicit_levels if not lo <= g <= hi]
    if outside:
        raise DomainError(
            f"Explicit levels {outside} lie outside the device window "
            f"[{spec.g_min:.6g}, {spec.g_max:.6g}] S"
        )
    return LevelSet(spec.explicit_levels)


def _remap(levels: LevelSet, new_min: float, new_max: float) -> Tuple[float, ...]:
    # Keeps each level's relative position inside the conductance window.
    span = levels.g_max - levels.g_min
    if span == 0:
        return (new_max,)
    return tuple(new_min + (g - levels.g_min) / span * (new_max - new_min) for g in levels.levels)


def apply_aging(
    levels: LevelSet,
    state: AgingState,
    placement: LevelPlacement = LevelPlacement.LINEAR_IN_CONDUCTANCE,
) -> LevelSet:
    if state.ratio == 0:
        return levels
    r_on, r_off = 1.0 / levels.g_max, 1.0 / levels.g_min
    if levels.L == 1:
        # A single level has no window; only the R_ON side moves.
        shrink = state.aging_type is AgingType.TYPE1
        return LevelSet((1.0 / (r_on * (1 - state.ratio if shrink else 1 + state.ratio)),))
    aged_on, aged_off = state.scale_window(r_on, r_off)
    new_min, new_max = 1.0 / aged_off, 1.0 / aged_on
    if placement in (LevelPlacement.EXPLICIT, LevelPlacement.RANDOM):
        return LevelSet(_remap(levels, new_min, new_max))
    return LevelSet(_place(new_min, new_max, levels.L, placement))


def age_device(spec: DeviceSpec, state: AgingState) -> DeviceSpec:
    """The device after aging, with its explicit levels (if any) moved into the new window."""
    if state.ratio == 0:
        return spec
    aged_on, aged_off = state.scale_window(spec.r_on, spec.r_off)
    if spec.placement is LevelPlacement.EXPLICIT:
        moved = _remap(LevelSet(spec.explicit_levels), 1.0 / aged_off, 1.0 / aged_on)
        return replace(spec, r_on=aged_on, r_off=aged_off, explicit_levels=moved)
    return replace(spec, r_on=aged_on, r_off=aged_off)


def perturb_levels(targets: np.ndarray, var_frac: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian programming variability (std = var_frac * target), kept strictly positive."""
    if var_frac < 0:
        raise DomainError(f"var_frac must be >= 0, got {var_frac}")
    targets = np.asarray(targets, dtype=float)
    if var_frac == 0 or targets.size == 0:
        return targets.copy()
    drawn = rng.normal(targets, var_frac * targets)
    bad = drawn <= 0
    while bad.any():
        drawn[bad] = rng.normal(targets[bad], var_frac * targets[bad])
        bad = drawn <= 0
    return drawn


def perturb_level(target: float, var_frac: float, rng: np.random.Generator) -> float:
    return float(perturb_levels(np.array([target]), var_frac, rng)[0])


def program_and_verify(
    current: float,
    target: float,
    step_frac: float,
    tolerance: float,
    max_pulses: int,
    rng: np.random.Generator,
    step_noise: float = 0.2,
) -> ProgramPulseTrace:
    """Pulse the device toward ``target`` until a verify read is within ``tolerance``.

    Each pulse moves the conductance toward the target by step_frac of the remaining
    distance, scaled by a uniform factor in [1 - step_noise, 1 + step_noise]. Running out
    of pulses is reported through ``converged=False``, not raised.
    """
    if target <= 0 or current <= 0:
        raise DomainError(f"Conductances must be positive, got current={current}, target={target}")
    if step_frac <= 0:
        raise DomainError(f"step_frac must be > 0, got {step_frac}")
    if tolerance < 0:
        raise DomainError(f"tolerance must be >= 0, got {tolerance}")

    if abs(target - current) <= tolerance:
        return ProgramPulseTrace((), True, abs(target - current))
    if max_pulses < 1:
        return ProgramPulseTrace((), False, abs(target - current))

    pulses: List[Tuple[Polarity, float]] = []
    state = {"g": float(current)}

    def pulse() -> float:
        g = state["g"]
        polarity = Polarity.SET if g < target else Polarity.RESET
        step = step_frac * abs(target - g) * rng.uniform(1 - step_noise, 1 + step_noise)
        g = g + step if polarity is Polarity.SET else max(g - step, np.nextafter(0.0, 1.0))
        state["g"] = g
        pulses.append((polarity, g))
        return abs(target - g)

    retrying = Retrying(
        stop=stop_after_attempt(max_pulses),
        retry=retry_if_result(lambda error: error > tolerance),
        retry_error_callback=lambda retry_state: retry_state.outcome.result(),
    )
    final_error = retrying(pulse)
    converged = final_error <= tolerance
    if not converged:
        logger.debug("Program-and-verify stopped after %d pulses, error %.3g S", len(pulses), final_error)
    return ProgramPulseTrace(tuple(pulses), converged, final_error)


def program_devices(
    targets: np.ndarray,
    starts: np.ndarray,
    step_frac: float,
    tolerance_frac: float,
    max_pulses: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Program every device of an array and return the verified conductances."""
    targets = np.asarray(targets, dtype=float)
    starts = np.broadcast_to(np.asarray(starts, dtype=float), targets.shape)
    out = np.empty_like(targets)
    failures = 0
    for idx in np.ndindex(targets.shape):
        trace = program_and_verify(
            starts[idx], targets[idx], step_frac, tolerance_frac * targets[idx], max_pulses, rng
        )
        out[idx] = trace.final_conductance if trace.pulses else starts[idx]
        failures += not trace.converged
    if failures:
        logger.warning("%d of %d devices did not converge within %d pulses", failures, targets.size, max_pulses)
    return out


def aged_levels(spec: DeviceSpec, state: Optional[AgingState]) -> Tuple[LevelSet, Optional[LevelSet]]:
    """Levels the quantizer targets and, when they differ, the levels the devices hold.

    With reprogramming the aged window is re-derived and targeted directly. Without it the
    quantizer keeps the nominal levels while the devices drift to the aged ones.
    """
    nominal = derive_levels(spec)
    if state is None or state.ratio == 0:
        return nominal, None
    aged = derive_levels(age_device(spec, state))
    if state.reprogram:
        return aged, None
    return nominal, aged
