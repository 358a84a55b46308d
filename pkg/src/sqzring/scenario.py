"""Resolve a :class:`RunConfig` into device, rates and operating points."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

from .config import ConfigError, RunConfig
from .device import (CavityRates, DeviceDesign, Material, bending_loss, derive_rates,
                     kappa_for_escape, load_bend_table, BEND_LOSS_TABLE)
from .dynamics import DetuningPolicy, PumpDrive, epsilon_for_power, steady_states
from .modes import CrossSectionGrid, coupler_splitting, effective_area, solve_modes
from .noise import UnstableOperatingPoint
from .units import alpha_from_db_per_cm


@lru_cache(maxsize=64)
def channel_mode_properties(width: float, thickness: float, wavelength: float,
                            n_core: float, n_clad: float, step: float) -> tuple[float, float]:
    """(n_eff, A_eff) of the fundamental TE mode of a buried channel guide."""
    grid = CrossSectionGrid.channel(width, thickness, step, n_core=n_core, n_clad=n_clad)
    mode = solve_modes(grid, wavelength, 1, "TE")[0]
    return mode.n_eff, effective_area(mode, grid)


@lru_cache(maxsize=64)
def supermode_kappa2(width, thickness, gap, wavelength, n_core, n_clad, step,
                     coupler_length, phi0) -> float:
    grid = CrossSectionGrid.coupler(width, thickness, gap, step, n_core=n_core, n_clad=n_clad)
    return float(coupler_splitting(grid, wavelength, "TE", phi0).kappa2(coupler_length))


@dataclass(frozen=True)
class Scenario:
    design: DeviceDesign
    rates: CavityRates
    eta: float  # total detection efficiency
    bend_loss_db_per_cm: float = 0.0
    sources: tuple[str, ...] = ()


def _base_design(config: RunConfig) -> tuple[DeviceDesign, float, list[str]]:
    dev = config.device
    sources = []
    n_eff, a_eff = dev.n_eff, dev.a_eff
    if n_eff is None or a_eff is None:
        solved = channel_mode_properties(dev.width, dev.thickness, dev.wavelength,
                                         dev.n_core, dev.n_clad, dev.mode_grid)
        if n_eff is None:
            n_eff = solved[0]
            sources.append("n_eff: mode solver")
        if a_eff is None:
            a_eff = solved[1]
            sources.append("a_eff: mode solver")

    alpha = dev.alpha
    bend_db = 0.0
    if dev.include_bend_loss:
        table = load_bend_table(dev.bend_table) if dev.bend_table else BEND_LOSS_TABLE
        bend = bending_loss(dev.radius, table)
        bend_db = bend.db_per_cm
        # bend loss acts only along the two half circles
        l_rt = 2.0 * (dev.coupler_length + math.pi * dev.radius)
        alpha += alpha_from_db_per_cm(bend.db_per_cm) * 2.0 * math.pi * dev.radius / l_rt
        sources.append("alpha: includes bend loss" + (f" ({bend.diagnostic})" if bend.extrapolated else ""))

    material = Material(dev.n_core, dev.n2, dev.wavelength)
    # placeholder coupling; replaced below once the loss is known
    design = DeviceDesign(material, dev.width, dev.thickness, dev.radius, dev.coupler_length,
                          dev.gap, alpha, 0.5, n_eff, a_eff, dev.n_clad)
    return design, bend_db, sources


def _kappa(design: DeviceDesign, config: RunConfig, eta_esc: float | None, sources: list) -> float:
    dev = config.device
    if eta_esc is not None:
        try:
            k = kappa_for_escape(eta_esc, design.alpha, design.n_eff, design.round_trip_length)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        sources.append("kappa_c2: from eta_esc")
    elif dev.kappa_c2 is not None:
        k = dev.kappa_c2
        sources.append("kappa_c2: config")
    else:
        k = supermode_kappa2(dev.width, dev.thickness, dev.gap, dev.wavelength, dev.n_core,
                             dev.n_clad, dev.mode_grid, dev.coupler_length, dev.coupler_phase)
        sources.append("kappa_c2: supermode estimate")
    if not 0 < k < 1:
        raise ConfigError(f"coupler transmittivity {k:.4g} outside (0, 1)")
    return k


def build_scenario(config: RunConfig, eta_esc: float | None = None) -> Scenario:
    """Device and rates for ``config``; ``eta_esc`` overrides the configured coupling."""
    design, bend_db, sources = _base_design(config)
    if eta_esc is None:
        eta_esc = config.device.eta_esc
    design = replace(design, kappa_c2=_kappa(design, config, eta_esc, sources))
    return Scenario(design, derive_rates(design), config.detection.eta, bend_db, tuple(sources))


@dataclass(frozen=True)
class OperatingPoint:
    eps: float  # |eps| in rad/s
    detuning: float  # rad/s
    power: float  # bus power in W (nan when the pump parameter was given)


def operating_point(config: RunConfig, rates: CavityRates) -> OperatingPoint:
    drv = config.drive
    g = rates.gamma
    follow = drv.policy == DetuningPolicy.RESONANT_FOLLOW.value
    if drv.epsilon_over_gamma is not None:
        eps = drv.epsilon_over_gamma * g
        return OperatingPoint(eps, eps if follow else drv.detuning_over_gamma * g, math.nan)
    power = drv.power
    if follow:
        eps = epsilon_for_power(rates, power)
        return OperatingPoint(eps, eps, power)
    drive = PumpDrive.from_power(power, rates.omega, detuning=drv.detuning_over_gamma * g,
                                 policy=DetuningPolicy.FIXED)
    stable = [b for b in steady_states(rates, drive) if b.stable]
    if not stable:
        raise UnstableOperatingPoint("no stable steady state for the configured fixed-detuning drive")
    # lowest stable branch, as reached by ramping the power up
    return OperatingPoint(stable[0].eps_mag, stable[0].detuning, power)


def eta_esc_values(config: RunConfig) -> list[float | None]:
    """Escape efficiencies to iterate over: the grid if given, else the configured device."""
    grid = config.grids.eta_esc
    return [None] if grid is None else [float(v) for v in grid.values]
