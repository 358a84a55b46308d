"""Racetrack geometry and materials -> cavity rates and Kerr coupling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import c, hbar

from .units import db_to_fraction

# dimension-free limits beyond which the small-loss finesse/escape
# approximations are only partially justified
SMALL_LOSS_LIMIT = 0.1


@dataclass(frozen=True)
class Material:
    n0: float
    n2: float  # m^2/W
    wavelength: float  # m

    def __post_init__(self):
        if not self.n0 > 1:
            raise ValueError(f"linear index must exceed 1, got {self.n0}")
        if not self.n2 > 0:
            raise ValueError(f"nonlinear index must be positive, got {self.n2}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def omega(self) -> float:
        """Optical angular frequency 2*pi*c/lambda of the pump."""
        return 2.0 * math.pi * c / self.wavelength


@dataclass(frozen=True)
class DeviceDesign:
    """Racetrack resonator laterally coupled to a straight bus waveguide.

    All lengths in metres, ``alpha`` is the power attenuation per metre and
    ``kappa_c2`` the intensity transmittivity of the equivalent coupling
    mirror.
    """

    material: Material
    width: float
    thickness: float
    radius: float
    coupler_length: float
    gap: float
    alpha: float
    kappa_c2: float
    n_eff: float
    a_eff: float
    n_clad: float = 1.45

    def __post_init__(self):
        for name in ("width", "thickness", "radius", "gap", "a_eff"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.coupler_length < 0:
            raise ValueError(f"coupler_length must be non-negative, got {self.coupler_length}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if not 0 < self.kappa_c2 < 1:
            raise ValueError(f"kappa_c2 must lie in (0, 1), got {self.kappa_c2}")
        if not self.n_clad < self.n_eff < self.material.n0:
            raise ValueError(
                f"n_eff={self.n_eff} must lie between cladding ({self.n_clad}) "
                f"and core ({self.material.n0}) indices"
            )

    @property
    def round_trip_length(self) -> float:
        return 2.0 * (self.coupler_length + math.pi * self.radius)

    @property
    def round_trip_loss(self) -> float:
        """Fractional intra-cavity power loss per round trip."""
        return -math.expm1(-self.alpha * self.round_trip_length)

    @property
    def core_area(self) -> float:
        return self.width * self.thickness


@dataclass(frozen=True)
class CavityRates:
    """Derived cavity and nonlinear rates. Rates are HWHM amplitude rates in rad/s."""

    tau: float
    gamma_0: float
    gamma_c: float
    gamma: float
    delta_gamma: float
    eta_esc: float
    finesse: float
    xi: float
    gamma_nl: float
    omega: float
    finesse_approx: float = math.nan
    eta_esc_approx: float = math.nan
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    @classmethod
    def from_rates(cls, gamma_0: float, gamma_c: float, xi: float = 1.0,
                   omega: float = 1.0, tau: float = math.nan,
                   gamma_nl: float = math.nan) -> "CavityRates":
        """Build rates directly from loss and coupling rates (no geometry)."""
        gamma = gamma_0 + gamma_c
        if not gamma > 0:
            raise ValueError("total decay rate must be positive")
        finesse = math.pi / (gamma * tau) if tau == tau else math.nan
        return cls(tau=tau, gamma_0=gamma_0, gamma_c=gamma_c, gamma=gamma,
                   delta_gamma=gamma_c - gamma_0, eta_esc=gamma_c / gamma,
                   finesse=finesse, xi=xi, gamma_nl=gamma_nl, omega=omega)


@dataclass(frozen=True)
class DetectionChain:
    eta_c: float = 0.84
    eta_mm: float = 0.98
    eta_qe: float = 0.98

    def __post_init__(self):
        for name in ("eta_c", "eta_mm", "eta_qe"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")

    @property
    def eta(self) -> float:
        return self.eta_c * self.eta_mm * self.eta_qe


def nonlinear_parameter(material: Material, a_eff: float) -> float:
    """gamma_nl = omega * n2 / (c * A_eff) in 1/(W m)."""
    return material.omega * material.n2 / (c * a_eff)


def interaction_strength(omega: float, gamma_nl: float, n_eff: float, length: float) -> float:
    """Per-photon SPM rate xi = hbar*omega*c^2*gamma_nl / (2*n_eff^2*L) in 1/s."""
    return hbar * omega * c**2 * gamma_nl / (2.0 * n_eff**2 * length)


def round_trip_time(design: DeviceDesign) -> float:
    return 2.0 * design.n_eff * (design.coupler_length + math.pi * design.radius) / c


def finesse_escape(kappa_c2: float, loss: float) -> tuple[float, float]:
    """Small-loss finesse and escape efficiency from coupler transmittivity and round-trip loss."""
    if not 0 < kappa_c2 < 1:
        raise ValueError(f"kappa_c2 must lie in (0, 1), got {kappa_c2}")
    if not 0 <= loss < 1:
        raise ValueError(f"round-trip loss must lie in [0, 1), got {loss}")
    total = kappa_c2 + loss
    return 2.0 * math.pi / total, kappa_c2 / total


def derive_rates(design: DeviceDesign) -> CavityRates:
    mat = design.material
    tau = round_trip_time(design)
    gamma_c = design.kappa_c2 / (2.0 * tau)
    gamma_0 = design.alpha * c / (2.0 * design.n_eff)
    gamma = gamma_0 + gamma_c
    gamma_nl = nonlinear_parameter(mat, design.a_eff)
    xi = interaction_strength(mat.omega, gamma_nl, design.n_eff, design.round_trip_length)

    loss = design.round_trip_loss
    f_approx, eta_approx = finesse_escape(design.kappa_c2, loss)
    notes = []
    if design.kappa_c2 > SMALL_LOSS_LIMIT:
        notes.append(f"kappa_c2={design.kappa_c2:.3g} > {SMALL_LOSS_LIMIT}: "
                     "small-coupling approximation degraded")
    if loss > SMALL_LOSS_LIMIT:
        notes.append(f"round-trip loss={loss:.3g} > {SMALL_LOSS_LIMIT}: "
                     "small-loss approximation degraded")

    return CavityRates(
        tau=tau, gamma_0=gamma_0, gamma_c=gamma_c, gamma=gamma,
        delta_gamma=gamma_c - gamma_0, eta_esc=gamma_c / gamma,
        finesse=math.pi / (gamma * tau), xi=xi, gamma_nl=gamma_nl,
        omega=mat.omega, finesse_approx=f_approx, eta_esc_approx=eta_approx,
        diagnostics=tuple(notes),
    )


def kappa_for_escape(eta_esc: float, alpha: float, n_eff: float, round_trip_len: float) -> float:
    """Coupler transmittivity that yields the requested escape efficiency.

    Inverts gamma_c/(gamma_0+gamma_c) with gamma_0 fixed by the propagation
    loss. Undefined for a lossless cavity, where every coupling gives unity.
    """
    if not 0 < eta_esc < 1:
        raise ValueError(f"escape efficiency must lie in (0, 1), got {eta_esc}")
    if alpha <= 0:
        raise ValueError("escape efficiency cannot set the coupling of a lossless cavity")
    gamma_0 = alpha * c / (2.0 * n_eff)
    gamma_c = gamma_0 * eta_esc / (1.0 - eta_esc)
    tau = n_eff * round_trip_len / c
    return 2.0 * tau * gamma_c


# Simulated TE0 bending loss of the 250 x 500 nm guide at 850 nm.
BEND_LOSS_TABLE_VERSION = "table1-v1"
BEND_LOSS_TABLE = (
    # radius [um], loss [dB per 360 deg]
    (25.0, -1.62e-3),
    (50.0, -3.07e-3),
    (75.0, -4.35e-3),
    (100.0, -5.59e-3),
)


@dataclass(frozen=True)
class BendLoss:
    db_per_turn: float
    db_per_cm: float
    extrapolated: bool = False
    diagnostic: str = ""


def load_bend_table(path: str | Path) -> tuple[tuple[float, float], ...]:
    """Read a ``R_um,db_per_360`` CSV into the same layout as BEND_LOSS_TABLE."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"R_um", "db_per_360"} - set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns R_um,db_per_360")
        rows = sorted((float(r["R_um"]), float(r["db_per_360"])) for r in reader)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two rows")
    return tuple(rows)


def bending_loss(radius: float, table=BEND_LOSS_TABLE) -> BendLoss:
    """Log-linear interpolation of tabulated per-turn bend loss at ``radius`` (m).

    Outside the tabulated range the end segments are extended, which keeps
    the interpolant monotone, and a diagnostic is attached.
    """
    r_um = np.array([row[0] for row in table])
    mag = np.log(np.abs([row[1] for row in table]))
    r = radius * 1e6
    if r < r_um[0]:
        i = 0
    elif r > r_um[-1]:
        i = len(r_um) - 2
    else:
        i = min(int(np.searchsorted(r_um, r, side="right")) - 1, len(r_um) - 2)
    slope = (mag[i + 1] - mag[i]) / (r_um[i + 1] - r_um[i])
    per_turn = -math.exp(mag[i] + slope * (r - r_um[i]))
    circumference_cm = 2.0 * math.pi * radius * 100.0
    extrapolated = not r_um[0] <= r <= r_um[-1]
    diag = (f"R={r:g} um outside tabulated {r_um[0]:g}-{r_um[-1]:g} um; extrapolated"
            if extrapolated else "")
    return BendLoss(per_turn, per_turn / circumference_cm, extrapolated, diag)


def phase_matching(delta_k, length):
    """Phase-matching function and its efficiency sinc^2(dk*L/2).

    Returns ``(phi, efficiency)``; works element-wise on arrays.
    """
    half = np.asarray(delta_k) * length / 2.0
    s = np.sinc(half / np.pi)
    phi = np.exp(1j * half) * s
    return phi, s * s


def facet_efficiency(eta_fresnel: float, eta_overlap: float, eta_taper: float) -> float:
    """Per-facet fibre-chip coupling efficiency."""
    for v in (eta_fresnel, eta_overlap, eta_taper):
        if not 0 < v <= 1:
            raise ValueError(f"efficiency factors must lie in (0, 1], got {v}")
    return eta_fresnel * eta_overlap * eta_taper


def facet_loss_db(eta: float) -> float:
    return 10.0 * math.log10(eta)


__all__ = [
    "BEND_LOSS_TABLE", "BEND_LOSS_TABLE_VERSION", "BendLoss", "CavityRates",
    "DetectionChain", "DeviceDesign", "Material", "bending_loss", "db_to_fraction",
    "derive_rates", "facet_efficiency", "facet_loss_db", "finesse_escape",
    "interaction_strength", "kappa_for_escape", "load_bend_table",
    "nonlinear_parameter", "phase_matching", "round_trip_time",
]
