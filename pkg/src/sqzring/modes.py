"""Semivectorial finite-difference mode solver for buried rectangular guides.

The dominant transverse field component obeys a Helmholtz equation whose
derivative across material interfaces carries the permittivity weighting of
the polarisation (TE: Ex dominant, weighted along x; TM: Ey dominant,
weighted along y).  Dirichlet walls bound the domain.  Eigenvalues of the
discrete operator are n_eff^2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, splu

N_CORE = 2.0
N_CLAD = 1.45
MIN_MARGIN = 3e-6
POLARIZATIONS = ("TE", "TM")


class ModeSolverError(RuntimeError):
    pass


class NoGuidedModeError(ModeSolverError):
    pass


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float
    n: float
    nonlinear: bool = True

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


def _coverage(centers: np.ndarray, h: float, lo: float, hi: float) -> np.ndarray:
    """Fraction of each cell [c-h/2, c+h/2] that lies inside [lo, hi]."""
    left = np.maximum(centers - h / 2, lo)
    right = np.minimum(centers + h / 2, hi)
    return np.clip(right - left, 0.0, h) / h


def _moment(centers: np.ndarray, h: float, lo: float, hi: float) -> np.ndarray:
    """Integral of (s - c)/h over the part of each cell inside [lo, hi], divided by h."""
    a = np.maximum(centers - h / 2, lo) - centers
    b = np.minimum(centers + h / 2, hi) - centers
    return np.where(b > a, (b * b - a * a) / (2.0 * h * h), 0.0)


@dataclass(frozen=True, eq=False)
class CrossSectionGrid:
    """Uniform cell-centred grid (dx = dy = ``step``) over a waveguide cross-section.

    Either ``rects`` (index blocks embedded in the cladding) or ``raster``
    (an explicit index map of shape (nx, ny)) defines the structure.
    """

    step: float
    nx: int
    ny: int
    n_clad: float = N_CLAD
    rects: tuple[Rect, ...] = ()
    raster: np.ndarray | None = None

    def __post_init__(self):
        if self.step <= 0 or self.nx < 3 or self.ny < 3:
            raise ValueError("grid needs a positive step and at least 3 cells per axis")
        if self.raster is not None and self.raster.shape != (self.nx, self.ny):
            raise ValueError(f"raster shape {self.raster.shape} != ({self.nx}, {self.ny})")
        if self.n_core <= self.n_clad:
            raise ValueError("core index must exceed cladding index")

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - (self.nx - 1) / 2) * self.step

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - (self.ny - 1) / 2) * self.step

    @property
    def n_core(self) -> float:
        if self.raster is not None:
            return float(self.raster.max())
        return max(r.n for r in self.rects)

    @property
    def cell_area(self) -> float:
        return self.step * self.step

    def epsilon(self, polarization: str = "TE") -> np.ndarray:
        """Cell permittivity with polarisation-aware averaging over partially filled cells.

        Along the axis of the dominant field component the average is
        harmonic (normal D continuous), along the other it is arithmetic.
        """
        if self.raster is not None:
            return self.raster.astype(float) ** 2
        _check_pol(polarization)
        eb = self.n_clad**2
        eps = np.full((self.nx, self.ny), eb)
        x, y = self.x, self.y
        for r in self.rects:
            fx = _coverage(x, self.step, r.x0, r.x1)
            fy = _coverage(y, self.step, r.y0, r.y1)
            er = r.n**2
            if polarization == "TE":
                harm = 1.0 / (fx / er + (1.0 - fx) / eb)
                eps += fy[None, :] * (harm[:, None] - eb)
            else:
                harm = 1.0 / (fy / er + (1.0 - fy) / eb)
                eps += fx[:, None] * (harm[None, :] - eb)
        return eps

    def epsilon_moment(self, polarization: str = "TE") -> np.ndarray:
        """First moment of the cell permittivity along the unweighted axis, in cell units.

        Pairs with :meth:`epsilon` so that eps*u + m*du (central difference)
        integrates eps*u over a partially filled cell to second order in the
        field slope.  Zero on raster grids.
        """
        if self.raster is not None:
            return np.zeros((self.nx, self.ny))
        _check_pol(polarization)
        eb = self.n_clad**2
        m = np.zeros((self.nx, self.ny))
        for r in self.rects:
            er = r.n**2
            if polarization == "TE":
                fx = _coverage(self.x, self.step, r.x0, r.x1)
                harm = 1.0 / (fx / er + (1.0 - fx) / eb)
                m += np.outer(harm - eb, _moment(self.y, self.step, r.y0, r.y1))
            else:
                fy = _coverage(self.y, self.step, r.y0, r.y1)
                harm = 1.0 / (fy / er + (1.0 - fy) / eb)
                m += np.outer(_moment(self.x, self.step, r.x0, r.x1), harm - eb)
        return m

    def interface_links(self, polarization: str = "TE") -> tuple[np.ndarray, np.ndarray]:
        """Flux corrections for interfaces crossing links of the unweighted axis.

        Inside a link the field is piecewise quadratic with a curvature jump
        of -k0^2 * d(eps) * u at the interface; the plain difference quotient
        misses (jump) * q^2 / 2h, q being the distance to the nearer node.
        Returns ``(c, w)`` on the links: c = d(eps)*(q/h)^2/2 in operator
        units and w the fractional interface position used to interpolate u.
        """
        te = polarization == "TE"
        shape = (self.nx, self.ny - 1) if te else (self.nx - 1, self.ny)
        c = np.zeros(shape)
        w = np.zeros(shape)
        if self.raster is not None:
            return c, w
        _check_pol(polarization)
        eb = self.n_clad**2
        h = self.step
        nodes = self.y if te else self.x
        for r in self.rects:
            er = r.n**2
            if te:
                fx = _coverage(self.x, h, r.x0, r.x1)
                jump = 1.0 / (fx / er + (1.0 - fx) / eb) - eb
                edges = ((r.y0, 1.0), (r.y1, -1.0))
            else:
                fy = _coverage(self.y, h, r.y0, r.y1)
                jump = 1.0 / (fy / er + (1.0 - fy) / eb) - eb
                edges = ((r.x0, 1.0), (r.x1, -1.0))
            for pos, sign in edges:
                k = int(np.floor((pos - nodes[0]) / h))
                if not 0 <= k < len(nodes) - 1:
                    continue
                frac = (pos - nodes[k]) / h
                sig = min(frac, 1.0 - frac)
                if te:
                    c[:, k] += sign * jump * sig * sig / 2.0
                    w[:, k] = frac
                else:
                    c[k, :] += sign * jump * sig * sig / 2.0
                    w[k, :] = frac
        return c, w

    def half_epsilon(self, polarization: str = "TE") -> np.ndarray | None:
        """Permittivity on the links between neighbouring nodes along the weighted axis.

        Averaged over the link segment and its cross-width, so a link lying
        wholly inside one material sees exactly that material even when the
        interface passes through a node.  Shape (nx-1, ny) for TE and
        (nx, ny-1) for TM; None for raster grids, where only node values
        are known.
        """
        if self.raster is not None:
            return None
        _check_pol(polarization)
        eb = self.n_clad**2
        h = self.step
        te = polarization == "TE"
        shape = (self.nx - 1, self.ny) if te else (self.nx, self.ny - 1)
        half = np.full(shape, eb)
        for r in self.rects:
            sx = _coverage(self.x[:-1] + h / 2 if te else self.x, h, r.x0, r.x1)
            sy = _coverage(self.y if te else self.y[:-1] + h / 2, h, r.y0, r.y1)
            half += (r.n**2 - eb) * np.outer(sx, sy)
        return half

    @cached_property
    def nonlinear_fraction(self) -> np.ndarray:
        """Fraction of each cell occupied by the nonlinear core."""
        if self.raster is not None:
            return (self.raster >= self.n_core).astype(float)
        frac = np.zeros((self.nx, self.ny))
        for r in self.rects:
            if r.nonlinear:
                frac += np.outer(_coverage(self.x, self.step, r.x0, r.x1),
                                 _coverage(self.y, self.step, r.y0, r.y1))
        return frac

    @property
    def nonlinear_area(self) -> float:
        if self.raster is not None:
            return float(self.nonlinear_fraction.sum()) * self.cell_area
        return sum(r.area for r in self.rects if r.nonlinear)

    # -- builders -----------------------------------------------------------

    @classmethod
    def around(cls, rects, step, margin=MIN_MARGIN, n_clad=N_CLAD) -> "CrossSectionGrid":
        """Grid covering the bounding box of ``rects`` plus ``margin`` of cladding.

        The structure is recentred on the origin so mirror-symmetric layouts
        stay exactly symmetric on the grid.
        """
        x0 = min(r.x0 for r in rects); x1 = max(r.x1 for r in rects)
        y0 = min(r.y0 for r in rects); y1 = max(r.y1 for r in rects)
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        moved = tuple(Rect(r.x0 - cx, r.x1 - cx, r.y0 - cy, r.y1 - cy, r.n, r.nonlinear) for r in rects)
        nx = int(math.ceil((x1 - x0 + 2 * margin) / step - 1e-9))
        ny = int(math.ceil((y1 - y0 + 2 * margin) / step - 1e-9))
        return cls(step, nx, ny, n_clad, moved)

    @classmethod
    def channel(cls, width, thickness, step=20e-9, margin=MIN_MARGIN,
                n_core=N_CORE, n_clad=N_CLAD) -> "CrossSectionGrid":
        _check_margin(margin)
        return cls.around([Rect(-width / 2, width / 2, -thickness / 2, thickness / 2, n_core)],
                          step, margin, n_clad)

    @classmethod
    def coupler(cls, width, thickness, gap, step=20e-9, margin=MIN_MARGIN,
                n_core=N_CORE, n_clad=N_CLAD) -> "CrossSectionGrid":
        """Two identical parallel cores separated by ``gap``."""
        _check_margin(margin)
        off = gap / 2
        rects = [Rect(-off - width, -off, -thickness / 2, thickness / 2, n_core),
                 Rect(off, off + width, -thickness / 2, thickness / 2, n_core)]
        return cls.around(rects, step, margin, n_clad)

    @classmethod
    def double_stack(cls, width, t_upper, t_oxide, t_film, step=20e-9, margin=MIN_MARGIN,
                     n_core=N_CORE, n_clad=N_CLAD) -> "CrossSectionGrid":
        """Thin lower film, oxide spacer and (possibly vanishing) upper core."""
        _check_margin(margin)
        rects = [Rect(-width / 2, width / 2, -t_film, 0.0, n_core)]
        if t_upper > 0:
            rects.append(Rect(-width / 2, width / 2, t_oxide, t_oxide + t_upper, n_core))
        return cls.around(rects, step, margin, n_clad)

    @classmethod
    def from_index_map(cls, index, step, n_clad=N_CLAD) -> "CrossSectionGrid":
        index = np.asarray(index, dtype=float)
        return cls(step, index.shape[0], index.shape[1], n_clad, (), index)

    @classmethod
    def from_csv(cls, path, step, n_clad=N_CLAD) -> "CrossSectionGrid":
        """Index raster: one CSV row per y (bottom row first), one column per x."""
        rows = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls.from_index_map(rows.T, step, n_clad)


def _check_pol(polarization):
    if polarization not in POLARIZATIONS:
        raise ValueError(f"polarization must be one of {POLARIZATIONS}, got {polarization!r}")


def _check_margin(margin):
    if margin < MIN_MARGIN - 1e-12:
        raise ValueError(f"cladding margin must be at least {MIN_MARGIN * 1e6:g} um")


def _second_difference(eps: np.ndarray, axis: int, half: np.ndarray | None = None):
    """(diag, up, down) coefficients of the 3-point operator along ``axis``.

    With ``half`` (link permittivities along ``axis``) this discretises
    d/dx[(1/eps) d(eps u)/dx]; without, the plain Laplacian.  Beyond a wall
    the field is zero.
    """
    ones = np.ones_like(eps)
    if half is None:
        return -2.0 * ones, ones, ones
    e = np.moveaxis(eps, axis, 0)
    half = np.moveaxis(half, axis, 0)
    e_plus = np.concatenate([half, e[-1:]])
    e_minus = np.concatenate([e[:1], half])
    diag = -e * (1.0 / e_plus + 1.0 / e_minus)
    up = np.zeros_like(e)
    up[:-1] = e[1:] / half
    down = np.zeros_like(e)
    down[1:] = e[:-1] / half
    return (np.moveaxis(diag, 0, axis), np.moveaxis(up, 0, axis), np.moveaxis(down, 0, axis))


def _link_flux_weights(em, ep, p):
    """Integral of eps(x) * int_{1/2}^{x} T over a unit link with an interface at ``p``.

    T is the flux derivative, constant on each side of the interface and
    proportional to 1/eps (``k1``) or to 1 (``kz``) per unit interface field.
    """
    def weight(tm, tp):
        lo = -p * (tm * em * p + tp * em - 2 * tp * em * p - tp * ep + tp * ep * p) / 2
        hi = (p - 1) * (tm * em * p + tm * ep - 2 * tm * ep * p - tp * ep + tp * ep * p) / 2
        return np.where(p < 0.5, lo, hi)
    return weight(1.0 / em, 1.0 / ep), weight(1.0, 1.0)


def _cell_moments(em, ep, d):
    """First moments of the cell flux integral with an interface at offset ``d`` from the node.

    Returns (m1, m0): integrals over the unit cell of E1/eps and E1, with
    E1(u) the integral of eps from the node to u.
    """
    m0 = np.where(d >= 0, -(2 * d - 1) ** 2 * (em - ep) / 8, -(2 * d + 1) ** 2 * (em - ep) / 8)
    m1 = np.where(d >= 0, -d * (2 * d - 1) * (em - ep) / (2 * ep), -d * (2 * d + 1) * (em - ep) / (2 * em))
    return m1, m0


def _weighted_interface_terms(grid, eps, half, k0h2, polarization):
    """Corrections to (A, B) for interfaces normal to the dominant field component.

    The flux (1/eps) d(eps u)/dn is continuous there but its derivative is
    not, and depends on the eigenvalue; the link and node-cell integrals are
    corrected to second order in the field slope, which turns the problem
    into a generalised one.  The transverse curvature enters through the
    discrete transverse Laplacian.
    """
    te = polarization == "TE"
    idx = np.arange(grid.nx * grid.ny).reshape(grid.nx, grid.ny)
    ia, ea, ha = (idx, eps, half) if te else (idx.T, eps.T, half.T)
    na, nt = ea.shape
    h = grid.step
    nodes, across = (grid.x, grid.y) if te else (grid.y, grid.x)
    eb = grid.n_clad**2
    a_rows, a_cols, a_vals, b_rows, b_cols, b_vals = [], [], [], [], [], []

    def add(rows, cols, vals, to_b=False):
        (b_rows if to_b else a_rows).append(rows)
        (b_cols if to_b else a_cols).append(cols)
        (b_vals if to_b else a_vals).append(vals)

    def transverse(ts, stencil, scale, row, to_b):
        # scale * (stencil(t+1) - 2 stencil(t) + stencil(t-1)) / k0h2 at ``row``
        for off, wgt in ((-1, 1.0), (0, -2.0), (1, 1.0)):
            tt = ts + off
            ok = (tt >= 0) & (tt < nt)
            for cols, vals in stencil(tt[ok]):
                add(row[ok], cols, scale[ok] * wgt * vals / k0h2, to_b)

    for r in grid.rects:
        er = r.n**2
        lo_t, hi_t = (r.y0, r.y1) if te else (r.x0, r.x1)
        f = _coverage(across, h, lo_t, hi_t)
        ts = np.nonzero(f > 0)[0]
        if ts.size == 0:
            continue
        e_in = eb + f[ts] * (er - eb)
        for pos, inside_right in (((r.x0, True), (r.x1, False)) if te
                                  else ((r.y0, True), (r.y1, False))):
            em, ep = (np.full_like(e_in, eb), e_in) if inside_right else (e_in, np.full_like(e_in, eb))

            k = int(np.floor((pos - nodes[0]) / h + 1e-12))
            p = (pos - nodes[k]) / h if 0 <= k < na - 1 else 0.0
            if 0 <= k < na - 1 and p > 1e-12:
                k1, kz = _link_flux_weights(em, ep, p)

                def vp(tt, k=k, p=p):
                    return [(ia[k, tt], (1 - p) * ea[k, tt]), (ia[k + 1, tt], p * ea[k + 1, tt])]

                for row, sgn in ((ia[k, ts], 1.0), (ia[k + 1, ts], -1.0)):
                    w = sgn / ha[k, ts]
                    for cols, vals in vp(ts):
                        add(row, cols, w * kz * vals)
                        add(row, cols, w * k1 * vals, to_b=True)
                    transverse(ts, vp, w * k1, row, False)

            j = int(np.rint((pos - nodes[0]) / h))
            if 1 <= j < na - 1:
                d = (pos - nodes[j]) / h
                m1, m0 = _cell_moments(em, ep, d)

                def gh(tt, j=j):
                    return [(ia[j + 1, tt], 0.5 * ea[j + 1, tt] / ha[j, tt]),
                            (ia[j, tt], 0.5 * ea[j, tt] * (1.0 / ha[j - 1, tt] - 1.0 / ha[j, tt])),
                            (ia[j - 1, tt], -0.5 * ea[j - 1, tt] / ha[j - 1, tt])]

                row = ia[j, ts]
                for cols, vals in gh(ts):
                    add(row, cols, m0 * vals)
                    add(row, cols, m1 * vals, to_b=True)
                transverse(ts, gh, m1, row, False)

    n = grid.nx * grid.ny

    def build(rows, cols, vals):
        if not rows:
            return sp.csc_matrix((n, n))
        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n)).tocsc()

    return build(a_rows, a_cols, a_vals), build(b_rows, b_cols, b_vals)


def helmholtz_operator(grid: CrossSectionGrid, wavelength: float, polarization: str = "TE"):
    """Sparse pencil (A, B) of the semivectorial problem, A u = n_eff^2 B u.

    B is the identity except on rows next to interfaces normal to the
    dominant field component.
    """
    _check_pol(polarization)
    eps = grid.epsilon(polarization)
    nx, ny = eps.shape
    k0h2 = (2.0 * math.pi / wavelength * grid.step) ** 2
    te = polarization == "TE"

    half = grid.half_epsilon(polarization)
    exact = half is not None
    if not exact:
        e = np.moveaxis(eps, 0 if te else 1, 0)
        half = np.moveaxis(0.5 * (e[1:] + e[:-1]), 0, 0 if te else 1)
    dx, ux, lx = _second_difference(eps, 0, half if te else None)
    dy, uy, ly = _second_difference(eps, 1, None if te else half)
    dx, ux, lx, dy, uy, ly = (v / k0h2 for v in (dx, ux, lx, dy, uy, ly))

    # interfaces crossing the unweighted axis: sub-cell position of the
    # permittivity step and the curvature jump inside links
    m = 0.5 * grid.epsilon_moment(polarization)
    c, w = grid.interface_links(polarization)
    if te:
        uy, ly = uy + m, ly - m
        dy[:, :-1] += c * (1 - w); dy[:, 1:] -= c * w
        uy[:, :-1] += c * w
        ly[:, 1:] -= c * (1 - w)
    else:
        ux, lx = ux + m, lx - m
        dx[:-1] += c * (1 - w); dx[1:] -= c * w
        ux[:-1] += c * w
        lx[1:] -= c * (1 - w)
    # no coupling across the row ends of the flattened y index
    uy[:, -1] = 0.0
    ly[:, 0] = 0.0

    n = nx * ny
    a = sp.diags(
        [(dx + dy + eps).ravel(), ux[:-1].ravel(), lx[1:].ravel(), uy.ravel()[:-1], ly.ravel()[1:]],
        [0, ny, -ny, 1, -1], shape=(n, n), format="csc",
    )
    b = sp.identity(n, format="csc")
    if exact:
        da, db = _weighted_interface_terms(grid, eps, half, k0h2, polarization)
        a, b = a + da, b + db
    return a.tocsc(), b.tocsc()


@dataclass(frozen=True, eq=False)
class GuidedMode:
    """One eigenmode: dominant field component on the grid, unit L2 norm."""

    n_eff: float
    field: np.ndarray = field(repr=False)
    polarization: str
    order: int
    wavelength: float
    boundary_ratio: float = 0.0

    @property
    def beta(self) -> float:
        return 2.0 * math.pi * self.n_eff / self.wavelength

    @property
    def intensity(self) -> np.ndarray:
        return self.field**2


def solve_modes(grid: CrossSectionGrid, wavelength: float, count: int = 1,
                polarization: str = "TE", guided_only: bool = True) -> list[GuidedMode]:
    """Up to ``count`` highest-index modes, sorted by n_eff descending.

    With ``guided_only`` (the default) modes at or below the cladding line
    are dropped, and :class:`NoGuidedModeError` is raised if none remain.
    """
    if not 1 <= count <= 5:
        raise ValueError("count must be between 1 and 5")
    a, b = helmholtz_operator(grid, wavelength, polarization)
    n_max = grid.n_core
    sigma = n_max**2
    lu = splu((a - sigma * b).tocsc(), permc_spec="MMD_AT_PLUS_A")
    op = LinearOperator(a.shape, matvec=lambda v: lu.solve(b @ v), dtype=float)
    try:
        mu, vecs = eigs(op, k=count, which="LM", v0=np.ones(a.shape[0]), tol=1e-12)
    except ArpackNoConvergence as exc:
        raise ModeSolverError(f"eigensolver did not converge: {exc}") from exc
    vals = sigma + 1.0 / mu

    order = np.argsort(-vals.real)
    modes = []
    for i in order:
        n2 = vals[i].real
        if n2 <= 0:
            continue
        n_eff = math.sqrt(n2)
        if guided_only and not grid.n_clad < n_eff < n_max:
            continue
        f = _normalise(vecs[:, i], grid)
        edge = max(np.abs(f[[0, -1], :]).max(), np.abs(f[:, [0, -1]]).max())
        modes.append(GuidedMode(n_eff, f, polarization, len(modes), wavelength,
                                float(edge / np.abs(f).max())))
    if not modes:
        raise NoGuidedModeError(
            f"no {polarization} mode above the cladding index {grid.n_clad}")
    return modes


def _normalise(vec: np.ndarray, grid: CrossSectionGrid) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    vec = vec * np.exp(-1j * np.angle(vec[k]))
    f = vec.real.reshape(grid.nx, grid.ny)
    f /= math.sqrt(float(np.sum(f * f)) * grid.cell_area)
    return f


def effective_area(mode: GuidedMode, grid: CrossSectionGrid) -> float:
    """Core area scaled by total over in-core longitudinal power flow.

    The power flow density is approximated by n(x, y) |E|^2 of the dominant
    component.
    """
    sz = np.sqrt(grid.epsilon(mode.polarization)) * mode.intensity
    inside = float(np.sum(sz * grid.nonlinear_fraction))
    if inside <= 0:
        return math.inf
    return grid.nonlinear_area * float(np.sum(sz)) / inside


def mode_waists(mode: GuidedMode, grid: CrossSectionGrid) -> tuple[float, float]:
    """1/e^2 intensity half-widths along x and y through the intensity peak."""
    inten = mode.intensity
    i, j = np.unravel_index(int(np.argmax(inten)), inten.shape)
    inten = inten / inten[i, j]
    return (float(_half_width(inten[:, j], grid.x, i)), float(_half_width(inten[i, :], grid.y, j)))


def _half_width(profile, coord, peak) -> float:
    level = math.exp(-2.0)
    reach = []
    for step in (1, -1):
        k = peak
        while 0 <= k + step < len(profile) and profile[k + step] > level:
            k += step
        nxt = k + step
        if not 0 <= nxt < len(profile):
            raise ModeSolverError("mode does not fall to 1/e^2 inside the domain")
        frac = (profile[k] - level) / (profile[k] - profile[nxt])
        reach.append(abs(coord[k] + frac * (coord[nxt] - coord[k]) - coord[peak]))
    return 0.5 * (reach[0] + reach[1])


def gaussian_overlap(w1: float, w2: float) -> float:
    """Power overlap of two aligned circular Gaussian beams with waists w1, w2."""
    if w1 <= 0 or w2 <= 0:
        raise ValueError("waists must be positive")
    a, b = w1 * w1, w2 * w2
    return 4.0 * a * b / (a + b) ** 2


def gaussian_overlap_xy(waists_1, waists_2) -> float:
    """Separable overlap of elliptical Gaussians, one 1-D factor per axis.

    Each axis contributes sqrt of the circular formula, so equal waists on
    both axes reproduce :func:`gaussian_overlap` exactly.
    """
    return math.prod(math.sqrt(gaussian_overlap(a, b)) for a, b in zip(waists_1, waists_2))


def mode_gaussian_overlap(mode: GuidedMode, grid: CrossSectionGrid, waist: float) -> float:
    """Numerical power overlap of the mode with a circular Gaussian centred on its peak."""
    i, j = np.unravel_index(int(np.argmax(mode.intensity)), mode.field.shape)
    xx = grid.x[:, None] - grid.x[i]
    yy = grid.y[None, :] - grid.y[j]
    g = np.exp(-(xx * xx + yy * yy) / waist**2)
    f = mode.field
    return float(np.sum(f * g) ** 2 / (np.sum(f * f) * np.sum(g * g)))


# -- directional coupler ------------------------------------------------------

def coupling_curve(delta_n: float, wavelength: float, lengths, phi0: float = 0.0):
    """Power transferred across a coupler of length L: sin^2(pi*dn*L/lambda + phi0)."""
    arg = math.pi * delta_n * np.asarray(lengths, dtype=float) / wavelength + phi0
    return np.sin(arg) ** 2


@dataclass(frozen=True)
class CouplerSplitting:
    n_even: float
    n_odd: float
    wavelength: float
    phi0: float = 0.0

    @property
    def delta_n(self) -> float:
        return self.n_even - self.n_odd

    @property
    def beat_length(self) -> float:
        """Length for complete transfer (phi0 = 0)."""
        return self.wavelength / (2.0 * self.delta_n)

    def kappa2(self, lengths):
        return coupling_curve(self.delta_n, self.wavelength, lengths, self.phi0)


def coupler_splitting(grid: CrossSectionGrid, wavelength: float,
                      polarization: str = "TE", phi0: float = 0.0) -> CouplerSplitting:
    """Even/odd supermode indices of a two-core grid."""
    modes = solve_modes(grid, wavelength, 2, polarization)
    if len(modes) < 2:
        raise NoGuidedModeError("odd supermode is not guided")
    return CouplerSplitting(modes[0].n_eff, modes[1].n_eff, wavelength, phi0)


def cutoff_width(widths, n_second, n_clad: float = N_CLAD) -> float | None:
    """Width at which the second mode rises through the cladding index.

    ``n_second`` holds the second-highest eigen-index per width, including
    values at or below ``n_clad`` (box modes of the bounded domain).  The
    crossing is located by linear interpolation; None if it is not bracketed.
    """
    w = np.asarray(widths, dtype=float)
    d = np.asarray(n_second, dtype=float) - n_clad
    for i in range(len(w) - 1):
        if d[i] <= 0 < d[i + 1]:
            return float(w[i] - d[i] * (w[i + 1] - w[i]) / (d[i + 1] - d[i]))
    return None


# -- taper adiabaticity ---------------------------------------------------------

RHO_CHOICES = ("thickness", "geometric-mean")


@dataclass(frozen=True)
class TaperProfile:
    """Linear inverse taper of the upper core over a thin lower film.

    ``z`` runs from the taper tip (upper thickness 0) to ``length`` (full
    thickness ``t_max``).
    """

    length: float
    t_max: float = 250e-9
    width: float = 500e-9
    t_oxide: float = 100e-9
    t_film: float = 60e-9
    rho: str = "thickness"

    def __post_init__(self):
        if self.length <= 0 or self.t_max <= 0:
            raise ValueError("taper length and thickness must be positive")
        if self.rho not in RHO_CHOICES:
            raise ValueError(f"rho must be one of {RHO_CHOICES}")

    @property
    def slope(self) -> float:
        """Taper angle (rad, small-angle)."""
        return self.t_max / self.length

    def thickness(self, z):
        return self.t_max * np.clip(np.asarray(z, dtype=float) / self.length, 0.0, 1.0)

    def transverse_scale(self, z):
        t = self.thickness(z)
        return t if self.rho == "thickness" else np.sqrt(self.width * t)


def delineation_angle(rho, delta_beta):
    """Taper angle at which the local taper length equals the two-mode beat length."""
    return np.asarray(rho) * np.asarray(delta_beta) / (2.0 * math.pi)


@dataclass(frozen=True)
class LocalModePair:
    beta_1: float
    beta_2: float
    second_guided: bool


def local_mode_pair(profile: TaperProfile, z: float, wavelength: float,
                    step: float = 20e-9, margin: float = MIN_MARGIN,
                    n_core: float = N_CORE, n_clad: float = N_CLAD) -> LocalModePair:
    """Propagation constants of the two highest local modes (TE or TM) at ``z``.

    If only one local mode is guided, the second is taken at the cladding
    light line, where the radiation continuum starts.
    """
    grid = CrossSectionGrid.double_stack(profile.width, float(profile.thickness(z)),
                                         profile.t_oxide, profile.t_film, step, margin,
                                         n_core, n_clad)
    n_effs = []
    for pol in POLARIZATIONS:
        try:
            n_effs += [m.n_eff for m in solve_modes(grid, wavelength, 2, pol)]
        except NoGuidedModeError:
            pass
    if not n_effs:
        raise NoGuidedModeError(f"no guided local mode at z={z:g}")
    n_effs.sort(reverse=True)
    k0 = 2.0 * math.pi / wavelength
    if len(n_effs) >= 2:
        return LocalModePair(k0 * n_effs[0], k0 * n_effs[1], True)
    return LocalModePair(k0 * n_effs[0], k0 * n_clad, False)


@dataclass(frozen=True)
class TaperDelineation:
    z: np.ndarray
    delta_beta: np.ndarray
    angle: np.ndarray  # delineation angle at each z
    slope: float
    adiabatic: np.ndarray
    beat_length: np.ndarray
    flags: tuple[str, ...]
    loss_per_half_beat: float = 0.1

    @property
    def nonadiabatic_fraction(self) -> float:
        lossy = (~self.adiabatic).astype(float)
        span = self.z[-1] - self.z[0]
        return float(np.trapezoid(lossy, self.z) / span) if span > 0 else float(lossy.mean())

    @property
    def fully_adiabatic(self) -> bool:
        return bool(np.all(self.adiabatic))

    @property
    def transfer_estimate(self) -> float:
        """Power kept in the fundamental mode.

        In the non-adiabatic stretch a fixed fraction of power leaks to the
        second mode every half beat length.
        """
        with np.errstate(divide="ignore"):
            half_beats = np.where(self.adiabatic, 0.0, 2.0 / self.beat_length)
        n = float(np.trapezoid(half_beats, self.z))
        return (1.0 - self.loss_per_half_beat) ** n


def taper_delineation(profile: TaperProfile, wavelength: float, z, delta_beta=None,
                      **solver) -> TaperDelineation:
    """Delineation curve along a constant-slope taper and its adiabaticity verdict.

    ``delta_beta`` may be supplied directly (one value per z); otherwise the
    local modes are solved at every z.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size == 0 or np.any(np.diff(z) <= 0):
        raise ValueError("z grid must be non-empty and strictly increasing")
    flags = []
    if delta_beta is None:
        pairs = [local_mode_pair(profile, zi, wavelength, **solver) for zi in z]
        delta_beta = np.array([p.beta_1 - p.beta_2 for p in pairs])
        flags += [f"z={zi:.4g}: second local mode unguided, light line used"
                  for zi, p in zip(z, pairs) if not p.second_guided]
    delta_beta = np.asarray(delta_beta, dtype=float)
    crossing = delta_beta <= 0
    flags += [f"z={zi:.4g}: local modes cross, beat length infinite" for zi in z[crossing]]
    with np.errstate(divide="ignore"):
        beat = np.where(crossing, np.inf, 2.0 * math.pi / np.where(crossing, 1.0, delta_beta))
    angle = delineation_angle(profile.transverse_scale(z), np.where(crossing, 0.0, delta_beta))
    adiabatic = (profile.slope < angle) | crossing
    return TaperDelineation(z, delta_beta, angle, profile.slope, adiabatic, beat, tuple(flags))


# -- raster I/O ---------------------------------------------------------------

def export_mode(mode: GuidedMode, grid: CrossSectionGrid, stem: str | Path) -> tuple[Path, Path]:
    """Write ``stem.csv`` (field raster, bottom row first) and ``stem.json`` header."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in mode.field.T:
            writer.writerow([repr(float(v)) for v in row])
    header = {
        "n_eff": mode.n_eff, "polarization": mode.polarization, "order": mode.order,
        "wavelength_m": mode.wavelength,
        "grid": {"dx_m": grid.step, "dy_m": grid.step, "nx": grid.nx, "ny": grid.ny,
                 "x0_m": float(grid.x[0]), "y0_m": float(grid.y[0])},
    }
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def load_mode(stem: str | Path, grid: CrossSectionGrid | None = None) -> GuidedMode:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    f = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", ndmin=2).T
    return GuidedMode(header["n_eff"], f, header["polarization"], header["order"],
                      header["wavelength_m"])
