"""Output-field quadrature noise of the SPM-pumped cavity.

All spectra are normalised to shot noise (vacuum variance = 1). The
spectrum at fixed sideband frequency is a sinusoid in twice the quadrature
angle, S = A + B*cos(2psi) + C*sin(2psi) with psi = theta + phi, so the
coefficients (A, B, C) carry everything needed for tomography, covariance
and purity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .device import CavityRates
from .dynamics import eigenvalues, epsilon_for_power, system_matrix


class PhysicalityError(ValueError):
    """Linearised noise model evaluated where it does not describe a physical state."""


class UnstableOperatingPoint(PhysicalityError):
    pass


def _split_eps(eps) -> tuple[float, float]:
    """Complex pump parameter -> (|eps|, phi) with eps = |eps| exp(2i phi)."""
    eps = complex(eps)
    return abs(eps), 0.5 * math.atan2(eps.imag, eps.real) if eps else 0.0


def _check_stable(rates: CavityRates, eps_mag: float, detuning: float) -> None:
    lp, lm = eigenvalues(detuning, eps_mag, rates.gamma)
    if lp.real >= 0 or lm.real >= 0:
        raise UnstableOperatingPoint(
            f"|eps|/gamma={eps_mag / rates.gamma:.4g}, delta/gamma={detuning / rates.gamma:.4g} "
            "lies in the unstable region; the linearised spectrum is not defined there"
        )


def spectrum_coefficients(rates: CavityRates, eps_mag, detuning, omega):
    """(A, B, C) of the unit-efficiency squeezing spectrum; broadcasts over inputs."""
    g, gc = rates.gamma, rates.gamma_c
    e = np.asarray(eps_mag, dtype=float)
    d = np.asarray(detuning, dtype=float)
    w2 = np.asarray(omega, dtype=float) ** 2
    denom = (d * d + g * g - w2 - 4.0 * d * e + 3.0 * e * e) ** 2 + 4.0 * g * g * w2
    G = 4.0 * gc * e / denom
    a = 1.0 + G * 2.0 * g * e
    b = -G * 2.0 * g * (2.0 * e - d)
    cc = -G * (g * g + w2 - d * d + 4.0 * d * e - 3.0 * e * e)
    return a, b, cc


def spm_spectrum(rates: CavityRates, eps, detuning: float, theta, omega):
    """Squeezing spectrum S_theta(Omega) of the pumped mode at unit detection efficiency.

    ``eps`` is the complex pump parameter |eps|*exp(2i*phi).  ``theta`` and
    ``omega`` (rad, rad/s) broadcast against each other.
    """
    e, phi = _split_eps(eps)
    _check_stable(rates, e, detuning)
    a, b, cc = spectrum_coefficients(rates, e, detuning, omega)
    psi = 2.0 * (np.asarray(theta, dtype=float) + phi)
    s = a + b * np.cos(psi) + cc * np.sin(psi)
    if np.any(s <= 0):
        raise PhysicalityError("squeezing spectrum evaluated to a non-positive value")
    return s


def _transfer(rates: CavityRates, eps, detuning: float, omega: float):
    # The closed form's cos 2(theta+phi) convention pairs with the conjugate
    # pump phase in the drift matrix.
    drift = system_matrix(rates, detuning, np.conj(complex(eps)))
    m = drift + rates.gamma * np.eye(2)
    a = m - (rates.gamma - 1j * omega) * np.eye(2)
    if abs(np.linalg.det(a)) < 1e-14 * rates.gamma**2:
        raise np.linalg.LinAlgError("drift matrix singular at the instability boundary")
    inv = np.linalg.inv(a)
    t_in = inv @ (m + (rates.delta_gamma + 1j * omega) * np.eye(2))
    t_loss = 2.0 * math.sqrt(rates.gamma_0 * rates.gamma_c) * inv
    return t_in, t_loss


def output_moments(rates: CavityRates, eps, detuning: float, omega: float):
    """Normal-ordered output moments <aa>, <a^dag a^dag>, <a^dag(-W) a(W)>, <a^dag(W) a(-W)>.

    Both input channels are vacuum, so <a(W) a^dag(W')> = delta(W+W') is
    the only non-zero input moment and the delta is integrated out.
    """
    tp_in, tp_loss = _transfer(rates, eps, detuning, omega)
    tm_in, tm_loss = _transfer(rates, eps, detuning, -omega)
    aa = adad = ada_m = ada_p = 0j
    for tp, tm in ((tp_in, tm_in), (tp_loss, tm_loss)):
        aa += tp[0, 0] * tm[0, 1]
        adad += tp[1, 0] * tm[1, 1]
        ada_m += tm[1, 0] * tp[0, 1]
        ada_p += tp[1, 0] * tm[0, 1]
    return aa, adad, ada_m, ada_p


def matrix_oracle_spectrum(rates: CavityRates, eps, detuning: float, theta: float, omega: float) -> float:
    """Spectrum from explicit inversion of the frequency-domain Langevin system.

    Independent of the closed form used by :func:`spm_spectrum`.
    """
    aa, adad, ada_m, ada_p = output_moments(rates, eps, detuning, omega)
    normal = (np.exp(-2j * theta) * aa + np.exp(2j * theta) * adad + ada_m + ada_p)
    return float(1.0 + normal.real)


def apply_detection(s, eta: float):
    """Measured spectrum after a detection chain of total efficiency ``eta``."""
    if not 0 < eta <= 1:
        raise ValueError(f"detection efficiency must lie in (0, 1], got {eta}")
    return (1.0 - eta) + eta * np.asarray(s)


def to_db(s):
    return 10.0 * np.log10(s)


def quadrature_extremes(rates: CavityRates, eps_mag, detuning, omega, eta: float = 1.0):
    """(min_theta S_meas, max_theta S_meas); broadcasts over inputs."""
    a, b, cc = spectrum_coefficients(rates, eps_mag, detuning, omega)
    r = np.hypot(b, cc)
    return apply_detection(a - r, eta), apply_detection(a + r, eta)


@dataclass(frozen=True)
class QuadratureSpectrum:
    omega: np.ndarray  # rad/s
    theta: np.ndarray  # rad
    s: np.ndarray  # shape (len(omega), len(theta)), detection applied
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def s_db(self) -> np.ndarray:
        return to_db(self.s)


def quadrature_spectrum(rates: CavityRates, eps, detuning: float, theta, omega, eta: float = 1.0):
    e, phi = _split_eps(eps)
    om = np.asarray(omega, dtype=float)
    th = np.asarray(theta, dtype=float)
    s = spm_spectrum(rates, eps, detuning, th[None, :], om[:, None])
    meta = {"eps_mag": e, "phi": phi, "detuning": detuning, "eta": eta,
            "gamma": rates.gamma, "gamma_c": rates.gamma_c, "gamma_0": rates.gamma_0}
    return QuadratureSpectrum(om, th, apply_detection(s, eta), meta)


@dataclass(frozen=True)
class CovarianceMatrix:
    sigma: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.sigma))

    @property
    def purity(self) -> float:
        return 1.0 / math.sqrt(self.det)

    @property
    def variances(self) -> tuple[float, float]:
        """Smallest and largest quadrature variance."""
        lo, hi = np.linalg.eigvalsh(self.sigma)
        return float(lo), float(hi)


def extract_covariance(rates: CavityRates, eps, detuning: float, omega: float, eta: float = 1.0) -> CovarianceMatrix:
    """Shot-noise-normalised covariance of the detected quadratures at sideband ``omega``."""
    e, _ = _split_eps(eps)
    _check_stable(rates, e, detuning)
    a, b, cc = (float(v) for v in spectrum_coefficients(rates, e, detuning, omega))
    a = 1.0 - eta + eta * a
    b, cc = eta * b, eta * cc
    sigma = np.array([[a + b, cc], [cc, a - b]])
    det = a * a - b * b - cc * cc
    if det <= 0:
        raise PhysicalityError(f"covariance determinant {det:.3g} is not positive")
    return CovarianceMatrix(sigma)


@dataclass(frozen=True)
class Tomography:
    """Measured noise (dB) over pump power and quadrature angle at one sideband frequency."""

    power: np.ndarray  # W
    eps: np.ndarray  # rad/s
    theta: np.ndarray  # rad
    omega: float
    s_db: np.ndarray  # (len(power), len(theta))
    min_db: np.ndarray
    max_db: np.ndarray

    @property
    def final_cross_section(self) -> np.ndarray:
        return self.s_db[-1]


def tomography(rates: CavityRates, power, theta, omega: float, eta: float, phase: float = 0.0) -> Tomography:
    """Noise map for a pump locked to the hot-cavity resonance (detuning = |eps|)."""
    p = np.asarray(power, dtype=float)
    th = np.asarray(theta, dtype=float)
    eps = np.array([epsilon_for_power(rates, pi) for pi in p])
    a, b, cc = spectrum_coefficients(rates, eps[:, None], eps[:, None], omega)
    psi = 2.0 * (th[None, :] + phase)
    s = apply_detection(a + b * np.cos(psi) + cc * np.sin(psi), eta)
    if np.any(s <= 0):
        raise PhysicalityError("tomography produced a non-positive noise power")
    lo, hi = quadrature_extremes(rates, eps, eps, omega, eta)
    return Tomography(p, eps, th, float(omega), to_db(s), to_db(lo), to_db(hi))


@dataclass(frozen=True)
class BandwidthResult:
    bandwidth: float  # rad/s
    status: str  # "ok", "no-squeezing" or "unbounded"
    diagnostic: str = ""

    @property
    def bandwidth_hz(self) -> float:
        return self.bandwidth / (2.0 * math.pi)


def squeezing_bandwidth(rates: CavityRates, eps_mag: float, detuning: float, eta: float,
                        threshold_db: float, omega_max: float | None = None,
                        points: int = 401) -> BandwidthResult:
    """Smallest sideband frequency where the best quadrature rises above ``threshold_db``."""
    _check_stable(rates, eps_mag, detuning)

    def excess(w):
        lo, _ = quadrature_extremes(rates, eps_mag, detuning, w, eta)
        return float(to_db(lo)) - threshold_db

    if excess(0.0) >= 0:
        return BandwidthResult(0.0, "no-squeezing",
                               f"best quadrature at zero frequency is not below {threshold_db} dB")
    w_hi = 100.0 * rates.gamma if omega_max is None else omega_max
    grid = np.concatenate([[0.0], np.geomspace(rates.gamma / 100.0, w_hi, points)])
    vals = [excess(w) for w in grid]
    for i in range(1, len(grid)):
        if vals[i] >= 0:
            w = bisect(excess, grid[i - 1], grid[i], rtol=1e-4, xtol=1e-12 * rates.gamma)
            return BandwidthResult(w, "ok")
    return BandwidthResult(float(grid[-1]), "unbounded",
                           f"still below {threshold_db} dB at the largest grid frequency")
