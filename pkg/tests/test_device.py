import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.constants import c

from sqzring.device import (BEND_LOSS_TABLE, DetectionChain, DeviceDesign, Material,
                            bending_loss, derive_rates, facet_efficiency, facet_loss_db,
                            finesse_escape, kappa_for_escape, load_bend_table,
                            nonlinear_parameter, phase_matching)
from sqzring.units import alpha_from_db_per_cm

SIN = Material(2.0, 2.5e-19, 850e-9)
# mode-solver values for the 250 x 500 nm guide on the 20 nm grid
N_EFF_SOLVER = 1.659096


def design(**kw):
    base = dict(material=SIN, width=500e-9, thickness=250e-9, radius=50e-6, coupler_length=12e-6,
                gap=500e-9, alpha=alpha_from_db_per_cm(-1.0), kappa_c2=0.05, n_eff=1.65,
                a_eff=0.18e-12)
    base.update(kw)
    return DeviceDesign(**base)


def test_nonlinear_parameter_example():
    assert nonlinear_parameter(SIN, 0.18e-12) == pytest.approx(10.2, rel=0.02)


def test_interaction_strength_example():
    r = derive_rates(design(n_eff=N_EFF_SOLVER))
    assert r.xi == pytest.approx(117.0, rel=0.10)


def test_lossless_cavity():
    r = derive_rates(design(alpha=0.0))
    assert r.gamma_0 == 0.0
    assert r.eta_esc == 1.0


@given(kappa=st.floats(1e-4, 0.5), alpha_db=st.floats(-5.0, -0.01),
       n_eff=st.floats(1.46, 1.99), radius=st.floats(5e-6, 500e-6))
def test_rate_invariants(kappa, alpha_db, n_eff, radius):
    d = design(kappa_c2=kappa, alpha=alpha_from_db_per_cm(alpha_db), n_eff=n_eff, radius=radius)
    r = derive_rates(d)
    assert r.gamma == r.gamma_0 + r.gamma_c
    assert 0.0 < r.eta_esc < 1.0
    assert (r.delta_gamma > 0) == (r.eta_esc > 0.5)
    assert r.xi > 0.0
    assert r.tau == pytest.approx(2.0 * n_eff * (d.coupler_length + math.pi * radius) / c, rel=1e-15)


@given(kappa=st.floats(1e-4, 0.03), alpha_db=st.floats(-3.0, -0.01))
def test_rate_and_finesse_escape_agree_at_small_loss(kappa, alpha_db):
    r = derive_rates(design(kappa_c2=kappa, alpha=alpha_from_db_per_cm(alpha_db)))
    loss = design(alpha=alpha_from_db_per_cm(alpha_db)).round_trip_loss
    if kappa + loss < 0.05:
        assert r.eta_esc_approx == pytest.approx(r.eta_esc, rel=0.02)


def test_xi_scales_inversely_with_area():
    a = derive_rates(design(a_eff=0.18e-12)).xi
    b = derive_rates(design(a_eff=0.36e-12)).xi
    assert b == pytest.approx(a / 2.0, rel=1e-14)


@given(alpha_db=st.floats(-5.0, -1e-4))
def test_intrinsic_rate_from_alpha_and_round_trip_fraction(alpha_db):
    d = design(alpha=alpha_from_db_per_cm(alpha_db))
    r = derive_rates(d)
    if d.alpha * d.round_trip_length < 0.02:
        assert d.round_trip_loss / (2.0 * r.tau) == pytest.approx(r.gamma_0, rel=0.01)


def test_small_loss_diagnostics():
    assert derive_rates(design()).diagnostics == ()
    notes = derive_rates(design(kappa_c2=0.3)).diagnostics
    assert any("kappa_c2" in n for n in notes)


@pytest.mark.parametrize("kw", [dict(kappa_c2=1.0), dict(kappa_c2=0.0), dict(n_eff=2.1),
                                dict(n_eff=1.4), dict(radius=0.0), dict(alpha=-1.0)])
def test_design_invariants(kw):
    with pytest.raises(ValueError):
        design(**kw)


@pytest.mark.parametrize("kw", [dict(n0=1.0), dict(n2=0.0), dict(wavelength=-1.0)])
def test_material_invariants(kw):
    base = dict(n0=2.0, n2=2.5e-19, wavelength=850e-9)
    base.update(kw)
    with pytest.raises(ValueError):
        Material(**base)


def test_finesse_escape_example():
    f, eta = finesse_escape(0.05, 0.01)
    assert f == pytest.approx(104.72, abs=0.01)
    assert eta == pytest.approx(0.8333, abs=1e-4)


@pytest.mark.parametrize("kappa", [0.01, 0.2, 0.9])
def test_finesse_escape_lossless(kappa):
    assert finesse_escape(kappa, 0.0)[1] == 1.0


def test_table2_row_within_tolerance():
    # 4 um coupler at -1 dB/cm: coupling back-solved from the tabulated escape efficiency
    loss = design(coupler_length=4e-6).round_trip_loss
    kappa = 0.73 * loss / (1.0 - 0.73)
    f, eta = finesse_escape(kappa, loss)
    assert eta == pytest.approx(0.73, rel=1e-12)
    assert f == pytest.approx(207.0, rel=0.15)


def test_kappa_for_escape_inverts_rates():
    d = design()
    k = kappa_for_escape(0.85, d.alpha, d.n_eff, d.round_trip_length)
    assert derive_rates(design(kappa_c2=k)).eta_esc == pytest.approx(0.85, rel=1e-12)
    with pytest.raises(ValueError):
        kappa_for_escape(0.85, 0.0, d.n_eff, d.round_trip_length)


@pytest.mark.parametrize("radius_um, expected", [(50.0, -3.07e-3), (100.0, -5.59e-3)])
def test_bending_loss_table_points(radius_um, expected):
    b = bending_loss(radius_um * 1e-6)
    assert b.db_per_turn == pytest.approx(expected, rel=1e-12)
    assert not b.extrapolated
    assert b.db_per_cm == pytest.approx(expected / (2 * math.pi * radius_um * 1e-4), rel=1e-12)


def test_bending_loss_interpolation_betweenness():
    v = bending_loss(62.5e-6).db_per_turn
    assert -4.35e-3 < v < -3.07e-3


@pytest.mark.parametrize("radius_um", [10.0, 150.0])
def test_bending_loss_extrapolation_is_flagged_and_monotone(radius_um):
    b = bending_loss(radius_um * 1e-6)
    assert b.extrapolated and "extrapolated" in b.diagnostic
    radii = np.linspace(5.0, 200.0, 60) * 1e-6
    mags = [abs(bending_loss(r).db_per_turn) for r in radii]
    assert np.all(np.diff(mags) > 0)


def test_bend_table_csv_override(tmp_path):
    p = tmp_path / "bend.csv"
    p.write_text("R_um,db_per_360\n20,-1e-3\n80,-4e-3\n")
    table = load_bend_table(p)
    assert bending_loss(80e-6, table).db_per_turn == pytest.approx(-4e-3)
    bad = tmp_path / "bad.csv"
    bad.write_text("radius,loss\n1,2\n")
    with pytest.raises(ValueError):
        load_bend_table(bad)
    assert len(BEND_LOSS_TABLE) == 4


@pytest.mark.parametrize("dkl, expected", [(0.0, 1.0), (2 * math.pi, 0.0), (math.pi, 0.4053)])
def test_phase_matching_examples(dkl, expected):
    _, eff = phase_matching(dkl, 1.0)
    assert eff == pytest.approx(expected, abs=1e-4)


@given(st.floats(-1e3, 1e3))
def test_phase_matching_even_and_bounded(dk):
    phi_p, e_p = phase_matching(dk, 0.01)
    _, e_m = phase_matching(-dk, 0.01)
    assert e_p == pytest.approx(e_m, rel=1e-12, abs=1e-300)
    assert 0.0 <= e_p <= 1.0
    assert abs(phi_p) ** 2 == pytest.approx(e_p, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("factors, expected", [
    ((0.96, 0.98, 0.90), 0.8467),
    ((1.0, 1.0, 1.0), 1.0),
    ((0.96, 0.98, 1.0), 0.9408),
])
def test_facet_efficiency_examples(factors, expected):
    assert facet_efficiency(*factors) == pytest.approx(expected, abs=1e-4)


def test_facet_loss_db_matches_quoted_budget():
    assert facet_loss_db(facet_efficiency(0.96, 0.98, 0.90)) == pytest.approx(-0.72, abs=0.05)


def test_detection_chain_total():
    d = DetectionChain(0.84, 0.98, 0.98)
    assert d.eta == pytest.approx(0.806736, rel=1e-12)
    with pytest.raises(ValueError):
        DetectionChain(0.0, 1.0, 1.0)
