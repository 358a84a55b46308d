import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import three_angle_coefficients
from sqzring.device import CavityRates
from sqzring.noise import (PhysicalityError, UnstableOperatingPoint, apply_detection,
                           extract_covariance, matrix_oracle_spectrum, quadrature_extremes,
                           quadrature_spectrum, spectrum_coefficients, spm_spectrum,
                           squeezing_bandwidth, to_db, tomography)
from sqzring.dynamics import pump_power_for_epsilon

RATES = CavityRates.from_rates(gamma_0=0.25e9, gamma_c=0.75e9, xi=120.0, omega=2.2e15)
G = RATES.gamma

stable_point = st.tuples(st.floats(0.0, 0.95), st.floats(-3.0, 3.0)).filter(
    lambda p: not (3 * p[0] ** 2 - 4 * p[1] * p[0] + p[1] ** 2 + 1 < 1e-3))


@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 2])
@pytest.mark.parametrize("omega", [0.0, 0.5 * G, 10 * G])
def test_unpumped_cavity_is_shot_noise_limited(theta, omega):
    assert spm_spectrum(RATES, 0.0, 0.7 * G, theta, omega) == pytest.approx(1.0, abs=1e-15)


@given(p=stable_point, theta=st.floats(0, math.pi), omega=st.floats(0, 5), phase=st.floats(0, 2 * math.pi))
def test_closed_form_matches_matrix_oracle(p, theta, omega, phase):
    e, d = p
    eps = e * G * np.exp(1j * phase)
    closed = float(spm_spectrum(RATES, eps, d * G, theta, omega * G))
    oracle = matrix_oracle_spectrum(RATES, eps, d * G, theta, omega * G)
    assert closed == pytest.approx(oracle, rel=1e-9, abs=1e-9)


def test_apply_detection_example():
    assert apply_detection(0.5, 0.806) == pytest.approx(0.597, abs=1e-12)
    assert apply_detection(1.0, 0.3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        apply_detection(0.5, 0.0)


@given(p=stable_point, theta=st.floats(0, math.pi), omega=st.floats(0, 5))
def test_spectrum_even_in_frequency_and_pi_periodic(p, theta, omega):
    e, d = p
    s = lambda t, w: float(spm_spectrum(RATES, e * G, d * G, t, w * G))
    assert s(theta, omega) == pytest.approx(s(theta, -omega), rel=1e-12)
    assert s(theta, omega) == pytest.approx(s(theta + math.pi, omega), rel=1e-12)


def test_large_frequency_limit():
    s = spm_spectrum(RATES, 0.5 * G, 0.5 * G, np.linspace(0, math.pi, 9), 1e5 * G)
    assert np.allclose(s, 1.0, atol=1e-8)


@given(p=stable_point, omega=st.floats(0, 5))
def test_extremes_bound_dense_angle_scan(p, omega):
    e, d = p
    lo, hi = quadrature_extremes(RATES, e * G, d * G, omega * G)
    theta = np.linspace(0, math.pi, 4001)
    s = spm_spectrum(RATES, e * G, d * G, theta, omega * G)
    assert s.min() >= lo - 1e-12 and s.max() <= hi + 1e-12
    assert s.min() == pytest.approx(lo, abs=1e-5) and s.max() == pytest.approx(hi, abs=1e-5)


@given(p=stable_point, omega=st.floats(0, 5))
def test_three_angle_fit_recovers_coefficients(p, omega):
    e, d = p
    fit = three_angle_coefficients(lambda t: float(spm_spectrum(RATES, e * G, d * G, t, omega * G)))
    exact = spectrum_coefficients(RATES, e * G, d * G, omega * G)
    assert np.allclose(fit, [float(v) for v in exact], atol=1e-12)


@given(p=stable_point, omega=st.floats(0, 5), eta=st.floats(0.01, 1.0))
def test_detected_state_obeys_uncertainty(p, omega, eta):
    e, d = p
    cov = extract_covariance(RATES, e * G, d * G, omega * G, eta)
    assert cov.det >= 1.0 - 1e-9
    lo, hi = quadrature_extremes(RATES, e * G, d * G, omega * G, eta)
    assert cov.variances == pytest.approx((float(lo), float(hi)), rel=1e-12)


def test_lossless_cavity_is_pure_at_zero_frequency():
    rates = CavityRates.from_rates(gamma_0=0.0, gamma_c=1e9)
    cov = extract_covariance(rates, 0.4e9, 0.4e9, 0.0)
    assert cov.purity == pytest.approx(1.0, abs=1e-12)


def test_more_intrinsic_loss_means_less_squeezing():
    best = []
    for g0 in (0.0, 0.1e9, 0.3e9, 0.6e9):
        rates = CavityRates.from_rates(gamma_0=g0, gamma_c=1e9)
        best.append(float(quadrature_extremes(rates, 0.5 * rates.gamma, 0.5 * rates.gamma, 0.0)[0]))
    assert np.all(np.diff(best) > 0)


def test_more_detection_loss_means_less_squeezing():
    lo = [float(quadrature_extremes(RATES, 0.5 * G, 0.5 * G, 0.0, eta)[0]) for eta in (1.0, 0.9, 0.7, 0.4)]
    assert np.all(np.diff(lo) > 0)


def test_unstable_point_raises():
    with pytest.raises(UnstableOperatingPoint):
        spm_spectrum(RATES, 1.2 * G, 2.0 * G, 0.0, 0.0)
    with pytest.raises(PhysicalityError):
        extract_covariance(RATES, 1.2 * G, 2.0 * G, 0.0)


def test_quadrature_spectrum_shape_and_detection():
    theta = np.linspace(0, math.pi, 17, endpoint=False)
    omega = np.array([0.0, G, 3 * G])
    q = quadrature_spectrum(RATES, 0.4 * G, 0.4 * G, theta, omega, eta=0.8)
    assert q.s.shape == (3, 17)
    raw = spm_spectrum(RATES, 0.4 * G, 0.4 * G, theta[None, :], omega[:, None])
    assert np.allclose(q.s, 0.2 + 0.8 * raw)
    assert np.allclose(q.s_db, to_db(q.s))


def test_tomography_zero_power_row_and_extremes():
    power = np.array([0.0, 0.05, 0.1, 0.2])
    theta = np.linspace(0, math.pi, 400, endpoint=False)
    tomo = tomography(RATES, power, theta, 0.1 * G, 0.8)
    assert np.allclose(tomo.s_db[0], 0.0, atol=1e-12)
    assert tomo.final_cross_section.shape == theta.shape
    for k in range(1, len(power)):
        row = tomo.s_db[k]
        t_min, t_max = theta[np.argmin(row)], theta[np.argmax(row)]
        sep = abs(t_max - t_min) % math.pi
        assert sep == pytest.approx(math.pi / 2, abs=2 * (theta[1] - theta[0]))
        assert row.min() >= tomo.min_db[k] - 1e-9 and row.max() <= tomo.max_db[k] + 1e-9


def test_tomography_power_axis_uses_resonant_follow():
    eps = 0.3 * G
    p = pump_power_for_epsilon(RATES, eps)
    tomo = tomography(RATES, [p], [0.0], 0.0, 1.0)
    assert tomo.eps[0] == pytest.approx(eps, rel=1e-12)


def test_bandwidth_statuses():
    ok = squeezing_bandwidth(RATES, 0.5 * G, 0.5 * G, 0.9, -2.0)
    assert ok.status == "ok" and ok.bandwidth > 0
    lo, _ = quadrature_extremes(RATES, 0.5 * G, 0.5 * G, ok.bandwidth, 0.9)
    assert float(to_db(lo)) == pytest.approx(-2.0, abs=1e-3)
    assert ok.bandwidth_hz == ok.bandwidth / (2 * math.pi)
    none = squeezing_bandwidth(RATES, 0.01 * G, 0.01 * G, 0.9, -2.0)
    assert none.status == "no-squeezing" and none.bandwidth == 0.0
    unb = squeezing_bandwidth(RATES, 0.5 * G, 0.5 * G, 0.9, -2.0, omega_max=0.05 * G)
    assert unb.status == "unbounded" and unb.diagnostic


def test_bandwidth_grows_with_coupling_at_fixed_total_rate():
    widths = []
    for gc in (0.7e9, 0.8e9, 0.9e9):
        rates = CavityRates.from_rates(gamma_0=1e9 - gc, gamma_c=gc)
        widths.append(squeezing_bandwidth(rates, 0.5e9, 0.5e9, 0.9, -2.0).bandwidth)
    assert np.all(np.diff(widths) > 0)
