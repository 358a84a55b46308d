"""Run configuration: sectioned ``key = value`` text <-> immutable :class:`RunConfig`.

Keys carry their unit in the name (``radius_um``, ``pump_power_mw``).  Every
parsed quantity is converted to SI once; the original key-unit values are
kept so that serialising and re-parsing is exact.

Grid values accept ``linspace(a, b, n)``, ``linspace(a, b, n, open)``
(endpoint excluded), ``logspace(a, b, n)`` (a, b are values, not exponents)
or a comma-separated list.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .device import DetectionChain, facet_efficiency
from .units import UnitError, to_si

SECTIONS = ("device", "drive", "detection", "grids", "sweep")
POLICIES = ("resonant-follow", "fixed")


class ConfigError(ValueError):
    """Malformed, incomplete or contradictory configuration."""


# -- grids ------------------------------------------------------------------------

_GRID_CALL = re.compile(r"^(linspace|logspace)\((.*)\)$")


@dataclass(frozen=True)
class GridSpec:
    """A 1-D grid in the units of its key."""

    kind: str  # "list", "linspace" or "logspace"
    args: tuple[float, ...]
    open: bool = False

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        text = text.strip()
        m = _GRID_CALL.match(text)
        if m:
            parts = [p.strip() for p in m.group(2).split(",")]
            is_open = parts[-1] == "open"
            if is_open:
                parts = parts[:-1]
            if len(parts) != 3:
                raise ConfigError(f"{m.group(1)} needs (start, stop, points): {text!r}")
            try:
                a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
            except ValueError:
                raise ConfigError(f"non-numeric grid arguments in {text!r}") from None
            if n < 1:
                raise ConfigError(f"grid needs at least one point: {text!r}")
            if m.group(1) == "logspace" and (a <= 0 or b <= 0):
                raise ConfigError(f"logspace bounds must be positive: {text!r}")
            spec = cls(m.group(1), (a, b, float(n)), is_open)
        else:
            try:
                values = tuple(float(v) for v in text.split(",") if v.strip())
            except ValueError:
                raise ConfigError(f"invalid grid {text!r}") from None
            spec = cls("list", values)
        spec.validate()
        return spec

    @property
    def values(self) -> np.ndarray:
        if self.kind == "list":
            return np.array(self.args, dtype=float)
        a, b, n = self.args
        n = int(n)
        if self.kind == "linspace":
            return np.linspace(a, b, n, endpoint=not self.open)
        return np.geomspace(a, b, n, endpoint=not self.open)

    def validate(self) -> None:
        v = self.values
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ConfigError("grids must be non-empty and finite")
        if v.size > 1:
            step = np.diff(v)
            if not (np.all(step > 0) or np.all(step < 0)):
                raise ConfigError(f"grid {self.text()} is not strictly monotone")

    def text(self) -> str:
        if self.kind == "list":
            return ", ".join(repr(v) for v in self.args)
        a, b, n = self.args
        tail = ", open" if self.open else ""
        return f"{self.kind}({a!r}, {b!r}, {int(n)}{tail})"


# -- key schema -------------------------------------------------------------------


@dataclass(frozen=True)
class Key:
    kind: str  # quantity | number | fraction | bool | choice | path | grid | names
    unit: str = "1"
    default: Any = None
    required: bool = False
    positive: bool = False
    choices: tuple[str, ...] = ()


SCHEMA: dict[str, dict[str, Key]] = {
    "device": {
        "wavelength_nm": Key("quantity", "nm", 850.0, positive=True),
        "n_core": Key("number", default=2.0, positive=True),
        "n_clad": Key("number", default=1.45, positive=True),
        "n2_cm2_per_w": Key("quantity", "cm2_per_w", 2.5e-15, positive=True),
        "width_nm": Key("quantity", "nm", 500.0, positive=True),
        "thickness_nm": Key("quantity", "nm", 250.0, positive=True),
        "radius_um": Key("quantity", "um", required=True, positive=True),
        "coupler_length_um": Key("quantity", "um", required=True),
        "gap_nm": Key("quantity", "nm", 500.0, positive=True),
        "alpha_db_per_cm": Key("quantity", "db_per_cm", required=True),
        "kappa_c2": Key("fraction"),
        "eta_esc": Key("fraction"),
        "coupler_phase_rad": Key("number", default=0.0),
        "n_eff": Key("number", positive=True),
        "a_eff_um2": Key("quantity", "um2", positive=True),
        "include_bend_loss": Key("bool", default=False),
        "bend_table": Key("path"),
        "mode_grid_nm": Key("quantity", "nm", 20.0, positive=True),
    },
    "drive": {
        "pump_power_mw": Key("quantity", "mw"),
        "epsilon_over_gamma": Key("number"),
        "policy": Key("choice", default="resonant-follow", choices=POLICIES),
        "detuning_over_gamma": Key("number"),
        "phase_rad": Key("number", default=0.0),
        "input_coupling": Key("fraction"),
        "power_cap_mw": Key("quantity", "mw", 200.0, positive=True),
    },
    "detection": {
        "eta_c": Key("fraction"),
        "eta_fresnel": Key("fraction"),
        "eta_overlap": Key("fraction"),
        "eta_taper": Key("fraction"),
        "eta_mm": Key("fraction", default=0.98),
        "eta_qe": Key("fraction", default=0.98),
    },
    "grids": {
        "power_mw": Key("grid", "mw", "linspace(0.0, 200.0, 201)"),
        "theta_over_pi": Key("grid", "1", "linspace(0.0, 1.0, 200, open)"),
        "omega_hz": Key("grid", "hz"),
        "sideband_hz": Key("quantity", "hz", 30e6, positive=True),
        "delta_over_gamma": Key("grid", "1", "linspace(0.0, 4.0, 201)"),
        "eps_over_gamma": Key("grid", "1", "linspace(0.0, 3.0, 151)"),
        "eta_esc": Key("grid", "1"),
        "width_nm": Key("grid", "nm", "linspace(300.0, 900.0, 31)"),
        "thickness_nm": Key("grid", "nm", "250.0"),
        "threshold_db": Key("grid", "db", "-2.0, -3.0"),
    },
    "sweep": {
        "outputs": Key("names"),
    },
}

DEFAULT_ETA_C = 0.84
DEFAULT_PUMP_POWER_MW = 200.0


def _parse_value(section: str, key: str, spec: Key, text: str):
    where = f"[{section}] {key}"
    text = text.strip()
    if spec.kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {text!r}")
    if spec.kind in ("choice",):
        if text not in spec.choices:
            raise ConfigError(f"{where}: expected one of {spec.choices}, got {text!r}")
        return text
    if spec.kind == "path":
        if not text:
            raise ConfigError(f"{where}: empty path")
        return text
    if spec.kind == "names":
        names = tuple(n.strip() for n in text.split(",") if n.strip())
        if not names:
            raise ConfigError(f"{where}: empty list")
        return names
    if spec.kind == "grid":
        try:
            grid = GridSpec.parse(text)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if spec.unit == "db" and np.any(grid.values > 0):
            raise ConfigError(f"{where}: dB thresholds must be non-positive")
        return grid
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{where}: value must be finite")
    if spec.kind == "quantity":
        try:
            to_si(value, spec.unit)
        except UnitError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if value < 0 and spec.unit != "db_per_cm":
            raise ConfigError(f"{where}: must be non-negative, got {value}")
    if spec.positive and value <= 0:
        raise ConfigError(f"{where}: must be positive, got {value}")
    if spec.kind == "fraction" and not 0 < value <= 1:
        raise ConfigError(f"{where}: must lie in (0, 1], got {value}")
    return value


def _format_value(spec: Key, value) -> str:
    if spec.kind == "bool":
        return "true" if value else "false"
    if spec.kind in ("choice", "path"):
        return value
    if spec.kind == "names":
        return ", ".join(value)
    if spec.kind == "grid":
        return value.text()
    return repr(float(value))


# -- typed views ------------------------------------------------------------------


def _si(values: dict, section: str, key: str):
    v = values.get(key)
    if v is None:
        return None
    return to_si(v, SCHEMA[section][key].unit)


@dataclass(frozen=True)
class DeviceConfig:
    wavelength: float
    n_core: float
    n_clad: float
    n2: float
    width: float
    thickness: float
    radius: float
    coupler_length: float
    gap: float
    alpha: float
    kappa_c2: float | None
    eta_esc: float | None
    coupler_phase: float
    n_eff: float | None
    a_eff: float | None
    include_bend_loss: bool
    bend_table: str | None
    mode_grid: float


@dataclass(frozen=True)
class DriveConfig:
    power: float | None  # bus-waveguide pump power, W
    epsilon_over_gamma: float | None
    policy: str
    detuning_over_gamma: float
    phase: float
    input_coupling: float | None  # None: same as eta_c
    power_cap: float


@dataclass(frozen=True)
class GridConfig:
    power_mw: GridSpec
    theta_over_pi: GridSpec
    omega_hz: GridSpec | None
    sideband: float  # rad/s
    delta_over_gamma: GridSpec
    eps_over_gamma: GridSpec
    eta_esc: GridSpec | None
    width_nm: GridSpec
    thickness_nm: GridSpec
    threshold_db: GridSpec


@dataclass(frozen=True)
class SweepConfig:
    axes: tuple[tuple[str, GridSpec], ...] = ()
    outputs: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration.

    ``values`` holds the canonical key -> value mapping in key units (the
    source of truth for serialisation); the typed sections hold SI values.
    """

    device: DeviceConfig
    drive: DriveConfig
    detection: DetectionChain
    grids: GridConfig
    sweep: SweepConfig
    values: tuple[tuple[str, tuple[tuple[str, Any], ...]], ...] = field(repr=False)
    defaults: tuple[str, ...] = field(default=(), compare=False)

    def section(self, name: str) -> dict:
        return dict(dict(self.values)[name])

    @property
    def input_coupling(self) -> float:
        ic = self.drive.input_coupling
        return self.detection.eta_c if ic is None else ic

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """New config with ``section.key`` values replaced (values in key units)."""
        sections = {name: self.section(name) for name in SECTIONS}
        for path, value in overrides.items():
            sec, key = _split_path(path)
            spec = SCHEMA[sec][key]
            if isinstance(value, str):
                text = value
            elif isinstance(value, (int, float)) and not isinstance(value, bool):
                text = repr(float(value))
            else:
                text = _format_value(spec, value)
            sections[sec][key] = _parse_value(sec, key, spec, text)
            _resolve_exclusive(sections, sec, key)
        return _build(sections, self.defaults)


def _split_path(path: str) -> tuple[str, str]:
    sec, _, key = path.partition(".")
    if sec not in SCHEMA or key not in SCHEMA[sec] or sec == "sweep":
        raise ConfigError(f"unknown parameter path {path!r}")
    return sec, key


# pairs where setting one through an override clears the other
_EXCLUSIVE = (
    ("device", "kappa_c2", "eta_esc"),
    ("drive", "pump_power_mw", "epsilon_over_gamma"),
)


def _resolve_exclusive(sections, sec, key):
    for s, a, b in _EXCLUSIVE:
        if s == sec and key in (a, b):
            sections[s].pop(b if key == a else a, None)
    if sec == "detection" and key == "eta_c":
        for k in ("eta_fresnel", "eta_overlap", "eta_taper"):
            sections[sec].pop(k, None)
    elif sec == "detection" and key in ("eta_fresnel", "eta_overlap", "eta_taper"):
        sections[sec].pop("eta_c", None)


def parse_config(text: str) -> RunConfig:
    """Parse a configuration document; see the module docstring for the grammar."""
    cp = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",),
        delimiters=("=",), strict=True,
    )
    cp.optionxform = str  # keys are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None

    sections: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    axes: list[tuple[str, GridSpec]] = []
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        for key, raw in cp.items(name):
            if name == "sweep" and "." in key:
                _split_path(key)
                try:
                    axes.append((key, GridSpec.parse(raw)))
                except ConfigError as exc:
                    raise ConfigError(f"[sweep] {key}: {exc}") from None
                continue
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            sections[name][key] = _parse_value(name, key, SCHEMA[name][key], raw)
    sections["sweep"]["axes"] = tuple(axes)
    return _build(sections, None)


def _build(sections: dict[str, dict[str, Any]], defaults) -> RunConfig:
    sections = {k: dict(v) for k, v in sections.items()}
    applied = []
    for name, keys in SCHEMA.items():
        for key, spec in keys.items():
            if key in sections[name]:
                continue
            if spec.required:
                raise ConfigError(f"missing mandatory key {key!r} in [{name}]")
            if spec.default is not None:
                default = spec.default
                if spec.kind == "grid":
                    default = GridSpec.parse(default)
                sections[name][key] = default
                applied.append(f"{name}.{key}")

    dev, drv, det, grd = (sections[s] for s in ("device", "drive", "detection", "grids"))
    if "kappa_c2" in dev and "eta_esc" in dev:
        raise ConfigError("[device] give at most one of kappa_c2 and eta_esc")
    if "kappa_c2" in dev and not dev["kappa_c2"] < 1:
        raise ConfigError("[device] kappa_c2 must be below 1")
    if "eta_esc" in dev and not dev["eta_esc"] < 1:
        raise ConfigError("[device] eta_esc must be below 1")
    if dev["n_clad"] >= dev["n_core"]:
        raise ConfigError("[device] n_core must exceed n_clad")
    if "pump_power_mw" in drv and "epsilon_over_gamma" in drv:
        raise ConfigError("[drive] conflicting drive: give pump_power_mw or epsilon_over_gamma, not both")
    if "pump_power_mw" not in drv and "epsilon_over_gamma" not in drv:
        drv["pump_power_mw"] = DEFAULT_PUMP_POWER_MW
        applied.append("drive.pump_power_mw")
    if drv.get("epsilon_over_gamma", 0.0) < 0:
        raise ConfigError("[drive] epsilon_over_gamma must be non-negative")
    if drv["policy"] == "resonant-follow" and "detuning_over_gamma" in drv:
        raise ConfigError("[drive] detuning_over_gamma conflicts with the resonant-follow policy")
    facets = [k for k in ("eta_fresnel", "eta_overlap", "eta_taper") if k in det]
    if facets and "eta_c" in det:
        raise ConfigError("[detection] give eta_c or the facet factors, not both")
    if facets and len(facets) != 3:
        raise ConfigError("[detection] facet budget needs eta_fresnel, eta_overlap and eta_taper")

    if facets:
        eta_c = facet_efficiency(det["eta_fresnel"], det["eta_overlap"], det["eta_taper"])
    else:
        if "eta_c" not in det:
            applied.append("detection.eta_c")
        eta_c = det.get("eta_c", DEFAULT_ETA_C)
        det = {**det, "eta_c": eta_c}
        sections["detection"] = det

    device = DeviceConfig(
        wavelength=_si(dev, "device", "wavelength_nm"),
        n_core=dev["n_core"], n_clad=dev["n_clad"],
        n2=_si(dev, "device", "n2_cm2_per_w"),
        width=_si(dev, "device", "width_nm"),
        thickness=_si(dev, "device", "thickness_nm"),
        radius=_si(dev, "device", "radius_um"),
        coupler_length=_si(dev, "device", "coupler_length_um"),
        gap=_si(dev, "device", "gap_nm"),
        alpha=_si(dev, "device", "alpha_db_per_cm"),
        kappa_c2=dev.get("kappa_c2"), eta_esc=dev.get("eta_esc"),
        coupler_phase=dev["coupler_phase_rad"],
        n_eff=dev.get("n_eff"), a_eff=_si(dev, "device", "a_eff_um2"),
        include_bend_loss=dev["include_bend_loss"], bend_table=dev.get("bend_table"),
        mode_grid=_si(dev, "device", "mode_grid_nm"),
    )
    drive = DriveConfig(
        power=_si(drv, "drive", "pump_power_mw"),
        epsilon_over_gamma=drv.get("epsilon_over_gamma"),
        policy=drv["policy"],
        detuning_over_gamma=drv.get("detuning_over_gamma", 0.0),
        phase=drv["phase_rad"],
        input_coupling=drv.get("input_coupling"),
        power_cap=_si(drv, "drive", "power_cap_mw"),
    )
    try:
        detection = DetectionChain(eta_c, det["eta_mm"], det["eta_qe"])
    except ValueError as exc:
        raise ConfigError(f"[detection] {exc}") from None
    grids = GridConfig(
        power_mw=grd["power_mw"], theta_over_pi=grd["theta_over_pi"],
        omega_hz=grd.get("omega_hz"), sideband=_si(grd, "grids", "sideband_hz"),
        delta_over_gamma=grd["delta_over_gamma"], eps_over_gamma=grd["eps_over_gamma"],
        eta_esc=grd.get("eta_esc"), width_nm=grd["width_nm"],
        thickness_nm=grd["thickness_nm"], threshold_db=grd["threshold_db"],
    )
    if np.any(grids.power_mw.values < 0):
        raise ConfigError("[grids] power_mw must be non-negative")
    if grids.eta_esc is not None and not np.all((grids.eta_esc.values > 0) & (grids.eta_esc.values < 1)):
        raise ConfigError("[grids] eta_esc values must lie in (0, 1)")
    sweep = SweepConfig(tuple(sections["sweep"].get("axes", ())),
                        tuple(sections["sweep"].get("outputs", ())))

    values = tuple((name, tuple(sorted(sections[name].items()))) for name in SECTIONS)
    return RunConfig(device, drive, detection, grids, sweep, values,
                     tuple(applied) if defaults is None else defaults)


def serialize_config(config: RunConfig) -> str:
    """Canonical text for ``config``; ``parse_config`` of it returns an equal RunConfig."""
    lines = []
    for name in SECTIONS:
        sec = config.section(name)
        lines.append(f"[{name}]")
        for key in SCHEMA[name]:
            if key in sec:
                lines.append(f"{key} = {_format_value(SCHEMA[name][key], sec[key])}")
        if name == "sweep":
            for path, grid in sec.get("axes", ()):
                lines.append(f"{path} = {grid.text()}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
