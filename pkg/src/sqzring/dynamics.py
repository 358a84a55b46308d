"""Steady state and linear stability of the pumped Kerr cavity mode."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.constants import hbar

from .device import CavityRates

ROOT_MERGE_RTOL = 1e-9


class DetuningPolicy(str, Enum):
    FIXED = "fixed"
    RESONANT_FOLLOW = "resonant-follow"


@dataclass(frozen=True)
class PumpDrive:
    """Coherent pump in the bus waveguide.

    ``flux`` is the travelling-mode photon flux |alpha_in|^2 in photons/s;
    ``detuning`` is omega_L - omega_p in rad/s and is ignored under the
    resonant-follow policy, where it tracks the hot-cavity resonance.
    """

    flux: float
    detuning: float = 0.0
    phase: float = 0.0
    policy: DetuningPolicy = DetuningPolicy.FIXED

    def __post_init__(self):
        if self.flux < 0:
            raise ValueError(f"photon flux must be non-negative, got {self.flux}")

    @classmethod
    def from_power(cls, power: float, omega: float, **kw) -> "PumpDrive":
        return cls(flux=power / (hbar * omega), **kw)

    def power(self, omega: float) -> float:
        return self.flux * hbar * omega


@dataclass(frozen=True)
class SteadyStateBranch:
    n_cav: float
    eps_mag: float
    detuning: float
    stable: bool
    lambda_plus: complex
    lambda_minus: complex


def system_matrix(rates: CavityRates, detuning: float, eps: complex) -> np.ndarray:
    """Linearised drift matrix M - gamma*I acting on (da, da^dagger)."""
    e = abs(eps)
    shift = 2.0 * e - detuning
    g = rates.gamma
    return np.array([
        [-g - 1j * shift, -1j * eps],
        [1j * np.conj(eps), -g + 1j * shift],
    ], dtype=complex)


def eigenvalues(detuning, eps_mag, gamma):
    """Closed-form eigenvalues (lambda_plus, lambda_minus) of the drift matrix.

    Broadcasts over array arguments.
    """
    disc = np.asarray(eps_mag, dtype=float) ** 2 - (np.asarray(detuning, dtype=float) - 2.0 * np.asarray(eps_mag)) ** 2
    root = np.sqrt(disc.astype(complex))
    return -gamma + root, -gamma - root


def is_stable(detuning: float, eps_mag: float, gamma: float) -> bool:
    lp, lm = eigenvalues(detuning, eps_mag, gamma)
    return bool(lp.real < 0 and lm.real < 0)


def _cubic_roots(delta: float, drive: float) -> list[float]:
    """Non-negative real roots y of y*(1 + (delta - y)^2) = drive.

    Works in units where y = xi*n/gamma and delta = Delta/gamma.
    """
    if drive == 0.0:
        return [0.0]
    coeffs = np.array([1.0, -2.0 * delta, 1.0 + delta * delta, -drive])
    companion = np.zeros((3, 3))
    companion[0, :] = -coeffs[1:]
    companion[1, 0] = companion[2, 1] = 1.0
    raw = np.linalg.eigvals(companion)

    scale = max(1.0, abs(delta), drive ** (1.0 / 3.0))
    candidates = []
    for z in raw:
        if z.imag < 0:
            continue  # conjugate partners are handled via their z.imag > 0 twin
        # a double root splits into a conjugate pair ~sqrt(machine eps) apart
        if abs(z.imag) > 1e-7 * scale:
            continue
        candidates.append(z.real)

    dcoeffs = np.polyder(coeffs)
    roots = []
    for y in candidates:
        dp = np.polyval(dcoeffs, y)
        if dp != 0.0:
            y -= np.polyval(coeffs, y) / dp
        if y >= 0.0:
            roots.append(float(y))
    roots.sort()
    merged: list[float] = []
    for y in roots:
        if merged and abs(y - merged[-1]) <= ROOT_MERGE_RTOL * max(abs(y), abs(merged[-1])):
            merged[-1] = 0.5 * (merged[-1] + y)
        else:
            merged.append(y)
    return merged


def steady_states(rates: CavityRates, drive: PumpDrive) -> list[SteadyStateBranch]:
    """All steady-state intra-cavity photon numbers for the given drive, ascending."""
    g, xi = rates.gamma, rates.xi
    if drive.policy is DetuningPolicy.RESONANT_FOLLOW:
        n = 2.0 * rates.gamma_c * drive.flux / g**2
        eps = xi * n
        return [_branch(n, eps, eps, g)]

    delta = drive.detuning / g
    forcing = 2.0 * rates.gamma_c * drive.flux * xi / g**3
    out = []
    for y in _cubic_roots(delta, forcing):
        n = y * g / xi
        out.append(_branch(n, xi * n, drive.detuning, g))
    return out


def _branch(n: float, eps: float, detuning: float, gamma: float) -> SteadyStateBranch:
    lp, lm = eigenvalues(detuning, eps, gamma)
    lp, lm = complex(lp), complex(lm)
    return SteadyStateBranch(n_cav=n, eps_mag=eps, detuning=detuning,
                             stable=lp.real < 0 and lm.real < 0,
                             lambda_plus=lp, lambda_minus=lm)


def bistability_residual(n, rates: CavityRates, drive: PumpDrive):
    """Left minus right side of the steady-state cubic, element-wise in n."""
    n = np.asarray(n, dtype=float)
    g = rates.gamma
    return n * (g * g + (drive.detuning - rates.xi * n) ** 2) - 2.0 * rates.gamma_c * drive.flux


def stability_region(gamma: float, detuning: float) -> tuple[float, float] | None:
    """Unstable interval [|eps|_-, |eps|_+] at fixed detuning, or None below the bistability onset."""
    disc = detuning * detuning - 3.0 * gamma * gamma
    if disc < 0:
        return None
    root = math.sqrt(disc)
    return (2.0 * detuning - root) / 3.0, (2.0 * detuning + root) / 3.0


BISTABILITY_ONSET = math.sqrt(3.0)


@dataclass(frozen=True)
class StabilityMap:
    """Re(lambda_plus)/gamma on a (detuning/gamma, eps/gamma) grid.

    ``re_lambda_plus`` has shape (len(delta), len(eps)).  Contours are
    polylines of (delta/gamma, eps/gamma) points.
    """

    delta: np.ndarray
    eps: np.ndarray
    re_lambda_plus: np.ndarray
    instability_boundary: tuple[tuple[float, float], ...]
    bistability_onset: tuple[tuple[float, float], ...]
    resonant_follow: tuple[tuple[float, float], ...]

    def contours(self) -> dict:
        return {
            "lambda_plus_zero": [list(p) for p in self.instability_boundary],
            "bistability_onset": [list(p) for p in self.bistability_onset],
            "resonant_follow": [list(p) for p in self.resonant_follow],
        }


def stability_map(rates: CavityRates, delta_over_gamma, eps_over_gamma) -> StabilityMap:
    d = np.asarray(delta_over_gamma, dtype=float)
    e = np.asarray(eps_over_gamma, dtype=float)
    for name, grid in (("detuning", d), ("pump parameter", e)):
        if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise ValueError(f"{name} grid must be non-empty and strictly increasing")
    # the map is exactly scale-free in units of gamma
    lp, _ = eigenvalues(d[:, None], e[None, :], 1.0)
    re = lp.real

    lower, upper = [], []
    for dv in d:
        region = stability_region(1.0, dv)
        if region is None:
            continue
        lower.append((float(dv), region[0]))
        upper.append((float(dv), region[1]))
    boundary = tuple(lower[::-1] + upper)

    onset = ((BISTABILITY_ONSET, float(e[0])), (BISTABILITY_ONSET, float(e[-1])))
    lo, hi = max(d[0], e[0]), min(d[-1], e[-1])
    follow = ((float(lo), float(lo)), (float(hi), float(hi))) if lo <= hi else ()
    return StabilityMap(d, e, re, boundary, onset, follow)


def epsilon_for_power(rates: CavityRates, power: float) -> float:
    """|eps| reached on the resonant-follow line for a bus pump power (W)."""
    flux = power / (hbar * rates.omega)
    return rates.xi * 2.0 * rates.gamma_c * flux / rates.gamma**2


def pump_power_for_epsilon(rates: CavityRates, eps_mag: float) -> float:
    """Bus pump power (W) needed to reach |eps| with the laser locked to the hot cavity."""
    return hbar * rates.omega * rates.gamma**2 * eps_mag / (2.0 * rates.gamma_c * rates.xi)


def single_pass_kerr(r: float) -> tuple[float, float]:
    """Optimal quadrature angle and its variance after a single Kerr pass of strength r."""
    if r < 0:
        raise ValueError(f"interaction strength must be non-negative, got {r}")
    theta = -math.pi / 4.0 if r == 0 else 0.5 * math.atan(-1.0 / r)
    # equals 1 - 2r*sqrt(1+r^2) + 2r^2 without the cancellation at large r
    var = 1.0 / (math.hypot(1.0, r) + r) ** 2
    return theta, var
