"""Unit conventions shared by every module.

Internally everything is SI with angular frequencies in rad/s. Human-facing
values (config files, CSV columns) use the units named in the key, e.g.
``radius_um`` or ``omega_hz``.  Losses follow the negative-dB convention
("-1 dB/cm"); the internal attenuation coefficient is a positive power
attenuation per metre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Dimension(str, Enum):
    LENGTH = "length"
    AREA = "area"
    POWER = "power"
    ANGULAR_FREQUENCY = "angular-frequency"
    INVERSE_LENGTH = "inverse-length"
    NONLINEAR_INDEX = "nonlinear-index"
    DIMENSIONLESS = "dimensionless"
    DB_RATIO = "dB-ratio"


class UnitError(ValueError):
    """A value cannot be converted in the requested unit."""


# unit name -> (dimension, SI value of one unit)
_LINEAR_UNITS: dict[str, tuple[Dimension, float]] = {
    "m": (Dimension.LENGTH, 1.0),
    "um": (Dimension.LENGTH, 1e-6),
    "nm": (Dimension.LENGTH, 1e-9),
    "um2": (Dimension.AREA, 1e-12),
    "m2": (Dimension.AREA, 1.0),
    "w": (Dimension.POWER, 1.0),
    "mw": (Dimension.POWER, 1e-3),
    "rad_per_s": (Dimension.ANGULAR_FREQUENCY, 1.0),
    "hz": (Dimension.ANGULAR_FREQUENCY, 2.0 * math.pi),
    "mhz": (Dimension.ANGULAR_FREQUENCY, 2.0 * math.pi * 1e6),
    "ghz": (Dimension.ANGULAR_FREQUENCY, 2.0 * math.pi * 1e9),
    "per_m": (Dimension.INVERSE_LENGTH, 1.0),
    "cm2_per_w": (Dimension.NONLINEAR_INDEX, 1e-4),
    "m2_per_w": (Dimension.NONLINEAR_INDEX, 1.0),
    "1": (Dimension.DIMENSIONLESS, 1.0),
    "db": (Dimension.DB_RATIO, 1.0),
}

# dB/cm of power loss -> attenuation coefficient in 1/m
_DB_PER_CM_TO_PER_M = 100.0 * math.log(10.0) / 10.0

UNITS = frozenset(_LINEAR_UNITS) | {"db_per_cm"}


@dataclass(frozen=True)
class Quantity:
    """A value tagged with its physical dimension, always stored in SI."""

    value: float
    dimension: Dimension

    @classmethod
    def parse(cls, value: float, unit: str) -> "Quantity":
        return cls(to_si(value, unit), unit_dimension(unit))

    def to(self, unit: str) -> float:
        if unit_dimension(unit) is not self.dimension:
            raise UnitError(f"cannot express {self.dimension.value} in {unit!r}")
        return from_si(self.value, unit)


def unit_dimension(unit: str) -> Dimension:
    if unit == "db_per_cm":
        return Dimension.INVERSE_LENGTH
    try:
        return _LINEAR_UNITS[unit][0]
    except KeyError:
        raise UnitError(f"unknown unit {unit!r}") from None


def to_si(value: float, unit: str) -> float:
    """Convert ``value`` given in ``unit`` to SI.

    ``db_per_cm`` expects a loss in the negative-dB convention and returns a
    non-negative attenuation coefficient in 1/m.
    """
    if unit == "db_per_cm":
        if value > 0:
            raise UnitError(f"propagation loss must be given as a non-positive dB value, got {value}")
        return -value * _DB_PER_CM_TO_PER_M
    try:
        return value * _LINEAR_UNITS[unit][1]
    except KeyError:
        raise UnitError(f"unknown unit {unit!r}") from None


def from_si(value: float, unit: str) -> float:
    if unit == "db_per_cm":
        if value < 0:
            raise UnitError(f"attenuation coefficient must be non-negative, got {value}")
        return -value / _DB_PER_CM_TO_PER_M if value else 0.0
    try:
        return value / _LINEAR_UNITS[unit][1]
    except KeyError:
        raise UnitError(f"unknown unit {unit!r}") from None


def db_to_fraction(loss_db: float) -> float:
    """Power ratio for a dB value: ``10**(loss_db/10)``.

    Losses are passed as negative dB and come back as a transmission
    fraction, e.g. -0.75 dB -> 0.841.
    """
    return 10.0 ** (loss_db / 10.0)


def fraction_to_db(fraction: float) -> float:
    if fraction <= 0:
        raise UnitError(f"power ratio must be positive, got {fraction}")
    return 10.0 * math.log10(fraction)


def alpha_from_db_per_cm(loss_db_per_cm: float) -> float:
    return to_si(loss_db_per_cm, "db_per_cm")
