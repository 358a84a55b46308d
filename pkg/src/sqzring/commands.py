"""Figure-dataset commands: each maps a RunConfig to a :class:`ResultTable`."""

from __future__ import annotations

import math
from functools import cached_property, partial

import numpy as np

from .config import ConfigError, RunConfig
from .device import CavityRates
from .dynamics import epsilon_for_power, pump_power_for_epsilon, stability_map
from .modes import (CrossSectionGrid, ModeSolverError, cutoff_width, effective_area,
                    solve_modes)
from .noise import (PhysicalityError, extract_covariance, quadrature_extremes,
                    quadrature_spectrum, squeezing_bandwidth, to_db, tomography)
from .scenario import Scenario, build_scenario, eta_esc_values, operating_point
from .table import Column, ResultTable, flatten, parallel_map, provenance


def error_code(exc: BaseException) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, PhysicalityError):
        return "physicality"
    if isinstance(exc, ModeSolverError):
        return "mode-solver"
    if isinstance(exc, (ValueError, ArithmeticError, np.linalg.LinAlgError)):
        return "numeric"
    return "internal"


def _rates_meta(s: Scenario) -> dict:
    r = s.rates
    return {"gamma_0_per_s": r.gamma_0, "gamma_c_per_s": r.gamma_c, "gamma_per_s": r.gamma,
            "eta_esc": r.eta_esc, "xi_per_s": r.xi, "kappa_c2": s.design.kappa_c2,
            "n_eff": s.design.n_eff, "a_eff_um2": s.design.a_eff * 1e12, "eta_detection": s.eta,
            "sources": list(s.sources), "diagnostics": list(r.diagnostics)}


# -- rates ------------------------------------------------------------------------

RATE_COLUMNS = (
    Column("n_eff"), Column("a_eff_um2"), Column("kappa_c2"), Column("tau_s"),
    Column("gamma_0_per_s"), Column("gamma_c_per_s"), Column("gamma_per_s"),
    Column("delta_gamma_per_s"), Column("eta_esc"), Column("finesse"),
    Column("finesse_approx"), Column("eta_esc_approx"), Column("xi_per_s"),
    Column("gamma_nl_per_w_m"), Column("linewidth_fwhm_hz"),
    Column("bend_loss_db_per_cm"), Column("eta_detection"),
)


def _rates_row(config: RunConfig, eta_esc):
    s = build_scenario(config, eta_esc)
    r, d = s.rates, s.design
    return (d.n_eff, d.a_eff * 1e12, d.kappa_c2, r.tau, r.gamma_0, r.gamma_c, r.gamma,
            r.delta_gamma, r.eta_esc, r.finesse, r.finesse_approx, r.eta_esc_approx, r.xi,
            r.gamma_nl, 2.0 * r.gamma / (2.0 * math.pi), s.bend_loss_db_per_cm, s.eta)


def cmd_rates(config: RunConfig, workers: int = 1) -> ResultTable:
    rows = parallel_map(partial(_rates_row, config), eta_esc_values(config), workers)
    return ResultTable(RATE_COLUMNS, tuple(rows), provenance(config, "rates"))


# -- stability map ----------------------------------------------------------------

def cmd_stability_map(config: RunConfig, workers: int = 1) -> ResultTable:
    d = config.grids.delta_over_gamma.values
    e = config.grids.eps_over_gamma.values
    if d.size > 1 and d[1] < d[0] or e.size > 1 and e[1] < e[0]:
        raise ConfigError("stability-map grids must be increasing")
    # the map is scale-free, so unit gamma is exact
    smap = stability_map(CavityRates.from_rates(0.5, 0.5), d, e)
    rows = tuple((float(dv), float(ev), float(smap.re_lambda_plus[i, j]),
                  bool(smap.re_lambda_plus[i, j] < 0))
                 for i, dv in enumerate(d) for j, ev in enumerate(e))
    cols = (Column("delta_over_gamma"), Column("eps_over_gamma"),
            Column("re_lambda_plus_over_gamma"), Column("stable", "bool"))
    return ResultTable(cols, rows, provenance(config, "stability-map"),
                       {"contours": smap.contours()})


# -- spectrum ---------------------------------------------------------------------

def default_omega_hz(gamma: float) -> np.ndarray:
    """Log grid from gamma/100 to 100*gamma (401 points), in Hz."""
    return np.geomspace(gamma / 100.0, 100.0 * gamma, 401) / (2.0 * math.pi)


def cmd_spectrum(config: RunConfig, workers: int = 1) -> ResultTable:
    s = build_scenario(config)
    op = operating_point(config, s.rates)
    f = (config.grids.omega_hz.values if config.grids.omega_hz is not None
         else default_omega_hz(s.rates.gamma))
    th = config.grids.theta_over_pi.values
    eps = op.eps * np.exp(2j * config.drive.phase)
    spec = quadrature_spectrum(s.rates, eps, op.detuning, th * math.pi, 2.0 * math.pi * f, s.eta)
    sdb = spec.s_db
    rows = tuple((float(fv), float(tv), float(sdb[i, j]))
                 for i, fv in enumerate(f) for j, tv in enumerate(th))
    cols = (Column("omega_hz"), Column("theta_over_pi"), Column("s_db", "db"))
    meta = provenance(config, "spectrum", rates=_rates_meta(s),
                      eps_over_gamma=op.eps / s.rates.gamma,
                      detuning_over_gamma=op.detuning / s.rates.gamma)
    return ResultTable(cols, rows, meta)


# -- tomography -------------------------------------------------------------------

def _tomography_rows(config: RunConfig, eta_esc):
    s = build_scenario(config, eta_esc)
    p_mw = config.grids.power_mw.values
    th = config.grids.theta_over_pi.values
    omega = config.grids.sideband
    tomo = tomography(s.rates, p_mw * 1e-3, th * math.pi, omega, s.eta, config.drive.phase)
    f_hz = omega / (2.0 * math.pi)
    e_g = tomo.eps / s.rates.gamma
    return [(s.rates.eta_esc, float(p), float(e_g[i]), f_hz, float(t), float(tomo.s_db[i, j]))
            for i, p in enumerate(p_mw) for j, t in enumerate(th)]


def cmd_tomography(config: RunConfig, workers: int = 1) -> ResultTable:
    groups = parallel_map(partial(_tomography_rows, config), eta_esc_values(config), workers)
    cols = (Column("eta_esc"), Column("power_mw"), Column("eps_over_gamma"),
            Column("omega_hz"), Column("theta_over_pi"), Column("s_db", "db"))
    return ResultTable(cols, flatten(groups), provenance(config, "tomography"))


# -- purity -----------------------------------------------------------------------

def _purity_rows(config: RunConfig, eta_esc):
    s = build_scenario(config, eta_esc)
    omega = config.grids.sideband
    cap_mw = config.drive.power_cap * 1e3
    coupling = config.input_coupling
    rows = []
    for p in config.grids.power_mw.values:
        eps = epsilon_for_power(s.rates, p * 1e-3)
        cov = extract_covariance(s.rates, eps, eps, omega, s.eta)
        lo, hi = cov.variances
        rows.append((s.rates.eta_esc, float(p), float(p) / coupling, eps / s.rates.gamma,
                     float(to_db(lo)), float(to_db(hi)), cov.purity, bool(p > cap_mw)))
    return rows


PURITY_COLUMNS = (
    Column("eta_esc"), Column("power_mw"), Column("laser_power_mw"), Column("eps_over_gamma"),
    Column("s_min_db", "db"), Column("s_max_db", "db"), Column("purity"),
    Column("over_cap", "bool"),
)


def cmd_purity(config: RunConfig, workers: int = 1) -> ResultTable:
    groups = parallel_map(partial(_purity_rows, config), eta_esc_values(config), workers)
    meta = provenance(config, "purity", power_cap_mw=config.drive.power_cap * 1e3,
                      input_coupling=config.input_coupling)
    return ResultTable(PURITY_COLUMNS, flatten(groups), meta)


# -- bandwidth --------------------------------------------------------------------

def _bandwidth_rows(config: RunConfig, eta_esc):
    s = build_scenario(config, eta_esc)
    op = operating_point(config, s.rates)
    w_max = (2.0 * math.pi * float(np.max(config.grids.omega_hz.values))
             if config.grids.omega_hz is not None else None)
    rows = []
    for thr in config.grids.threshold_db.values:
        res = squeezing_bandwidth(s.rates, op.eps, op.detuning, s.eta, float(thr), w_max)
        rows.append((s.rates.eta_esc, float(thr), op.eps / s.rates.gamma,
                     res.bandwidth_hz, res.status))
    return rows


def cmd_bandwidth(config: RunConfig, workers: int = 1) -> ResultTable:
    groups = parallel_map(partial(_bandwidth_rows, config), eta_esc_values(config), workers)
    cols = (Column("eta_esc"), Column("threshold_db", "db"), Column("eps_over_gamma"),
            Column("bandwidth_hz"), Column("status", "str"))
    return ResultTable(cols, flatten(groups), provenance(config, "bandwidth"))


# -- modes ------------------------------------------------------------------------

def _mode_row(config: RunConfig, point):
    t_nm, w_nm = point
    dev = config.device
    try:
        grid = CrossSectionGrid.channel(w_nm * 1e-9, t_nm * 1e-9, dev.mode_grid,
                                        n_core=dev.n_core, n_clad=dev.n_clad)
        modes = solve_modes(grid, dev.wavelength, 2, "TE", guided_only=False)
        if modes[0].n_eff <= dev.n_clad:
            raise ModeSolverError("fundamental mode is not guided")
        n1 = modes[1].n_eff if len(modes) > 1 else math.nan
        a_eff = effective_area(modes[0], grid) * 1e12
        return (t_nm, w_nm, modes[0].n_eff, n1, bool(n1 > dev.n_clad), a_eff, "")
    except Exception as exc:  # noqa: BLE001 - recorded per row
        return (t_nm, w_nm, math.nan, math.nan, False, math.nan, f"{error_code(exc)}: {exc}")


def cmd_modes(config: RunConfig, workers: int = 1) -> ResultTable:
    points = [(float(t), float(w)) for t in config.grids.thickness_nm.values
              for w in config.grids.width_nm.values]
    rows = parallel_map(partial(_mode_row, config), points, workers)
    summary = []
    for t in config.grids.thickness_nm.values:
        sel = [r for r in rows if r[0] == float(t)]
        w = [r[1] for r in sel]
        a = np.array([r[5] for r in sel])
        cut = cutoff_width(w, [r[3] for r in sel], config.device.n_clad)
        i = int(np.nanargmin(a)) if np.any(np.isfinite(a)) else None
        summary.append({
            "thickness_nm": float(t),
            "te1_cutoff_width_nm": cut,
            "a_eff_min_width_nm": None if i is None else w[i],
            "a_eff_min_um2": None if i is None else float(a[i]),
            "a_eff_interior_minimum": i is not None and 0 < i < len(w) - 1,
        })
    cols = (Column("thickness_nm"), Column("width_nm"), Column("te0_n_eff"),
            Column("te1_n_eff"), Column("te1_guided", "bool"), Column("a_eff_um2"),
            Column("error", "str"))
    meta = provenance(config, "modes", polarization="TE", summary=summary)
    return ResultTable(cols, tuple(rows), meta)


# -- named scalar outputs for sweeps ------------------------------------------------

class PointContext:
    """Lazily evaluated quantities of one configuration."""

    def __init__(self, config: RunConfig):
        self.config = config

    @cached_property
    def scenario(self) -> Scenario:
        return build_scenario(self.config)

    @property
    def rates(self):
        return self.scenario.rates

    @cached_property
    def op(self):
        return operating_point(self.config, self.rates)

    @cached_property
    def extremes(self):
        lo, hi = quadrature_extremes(self.rates, self.op.eps, self.op.detuning,
                                     self.config.grids.sideband, self.scenario.eta)
        return float(lo), float(hi)

    @cached_property
    def best(self):
        p = self.config.grids.power_mw.values
        p = p[p <= self.config.drive.power_cap * 1e3]
        if p.size == 0:
            raise ConfigError("no power grid point lies within the power cap")
        tomo = tomography(self.rates, p * 1e-3, np.zeros(1), self.config.grids.sideband,
                          self.scenario.eta)
        i = int(np.argmin(tomo.min_db))
        return float(tomo.min_db[i]), float(p[i])

    def bandwidth(self):
        thr = float(self.config.grids.threshold_db.values[0])
        res = squeezing_bandwidth(self.rates, self.op.eps, self.op.detuning, self.scenario.eta, thr)
        if res.status != "ok":
            raise PhysicalityError(res.diagnostic)
        return res.bandwidth_hz


OUTPUTS = {
    "n_eff": ("float", lambda c: c.scenario.design.n_eff),
    "a_eff_um2": ("float", lambda c: c.scenario.design.a_eff * 1e12),
    "kappa_c2": ("float", lambda c: c.scenario.design.kappa_c2),
    "tau_s": ("float", lambda c: c.rates.tau),
    "gamma_0_per_s": ("float", lambda c: c.rates.gamma_0),
    "gamma_c_per_s": ("float", lambda c: c.rates.gamma_c),
    "gamma_per_s": ("float", lambda c: c.rates.gamma),
    "eta_esc": ("float", lambda c: c.rates.eta_esc),
    "finesse": ("float", lambda c: c.rates.finesse),
    "xi_per_s": ("float", lambda c: c.rates.xi),
    "gamma_nl_per_w_m": ("float", lambda c: c.rates.gamma_nl),
    "linewidth_fwhm_hz": ("float", lambda c: c.rates.gamma / math.pi),
    "eps_over_gamma": ("float", lambda c: c.op.eps / c.rates.gamma),
    "pump_power_mw": ("float", lambda c: pump_power_for_epsilon(c.rates, c.op.eps) * 1e3),
    "s_min_db": ("db", lambda c: float(to_db(c.extremes[0]))),
    "s_max_db": ("db", lambda c: float(to_db(c.extremes[1]))),
    "purity": ("float", lambda c: 1.0 / math.sqrt(c.extremes[0] * c.extremes[1])),
    "bandwidth_hz": ("float", lambda c: c.bandwidth()),
    "best_squeezing_db": ("db", lambda c: c.best[0]),
    "best_squeezing_power_mw": ("float", lambda c: c.best[1]),
}


def evaluate_outputs(config: RunConfig, names) -> tuple[tuple, str]:
    """Values of the named outputs (nan where they failed) and an error note."""
    ctx = PointContext(config)
    values, errors = [], []
    for name in names:
        try:
            values.append(OUTPUTS[name][1](ctx))
        except Exception as exc:  # noqa: BLE001 - recorded per row
            values.append(math.nan)
            errors.append(f"{name}: {error_code(exc)}: {exc}")
    return tuple(values), "; ".join(errors)


COMMANDS = {
    "rates": cmd_rates,
    "stability-map": cmd_stability_map,
    "spectrum": cmd_spectrum,
    "tomography": cmd_tomography,
    "purity": cmd_purity,
    "bandwidth": cmd_bandwidth,
    "modes": cmd_modes,
}
