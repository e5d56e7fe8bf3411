"""Continuity diagnostics on discrete fields.

The central object is the continuity indicator

    I(p, rho; y, s) = rho * ( mean over (y,s)+Q_rho of |D ln u|^p )^(1/p)

whose decay as rho -> 0 controls the local oscillation of u. This module
computes indicator and oscillation curves (from sampled fields or directly
from the closed-form gradient on per-radius grids), the normalized p-energy
Theta = I^p used to flag candidate discontinuity points, the modulus-of-
continuity bound evaluator, log-log power-law fits, and empirical audits of
the caloric energy/logarithmic estimates that drive the level-set iteration.

Audits never assert a constant: the structural constants of the estimates
are existential, so the measurable statement is that the left/right ratio is
finite and stable under refinement. Reports carry each side term by term.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyRegionError, ExponentRangeError, OutOfDomainError
from .exact import ExplicitSolution, eval_solution, grad_log_exact
from .geometry import (
    CutoffField,
    ParabolicCylinder,
    ScalarField,
    SpaceTimeGrid,
    VectorField,
    cylinder_power_average,
    grad_log,
    spatial_gradient,
    time_derivative,
)

_IDENTITY_RTOL = 1e-12


def validate_p(N: int, p: float, allow_low_p: bool = False):
    """Integrability exponent admissibility: p >= 1 when N = 1 (the natural
    class already gives square-integrability), p > (N+2)/2 otherwise."""
    if N == 1:
        if p < 1:
            raise ExponentRangeError(f"p must be >= 1, got {p}")
        return
    if p <= (N + 2) / 2 and not allow_low_p:
        raise ExponentRangeError(
            f"p={p} <= (N+2)/2={(N + 2) / 2} for N={N}; "
            "pass allow_low_p=True for exploratory use"
        )


@dataclass(frozen=True)
class IndicatorCurve:
    vertex_x: tuple[float, ...]
    vertex_t: float
    p: float
    radii: np.ndarray          # strictly decreasing
    values: np.ndarray
    envelope: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape:
            raise ValueError("radii/values must be 1-d arrays of equal length")
        if np.any(np.diff(r) >= 0):
            raise ValueError("radii must be strictly decreasing")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)
        if self.envelope is not None:
            object.__setattr__(self, "envelope", np.asarray(self.envelope, float))


@dataclass(frozen=True)
class ThetaCurve:
    """Normalized p-energy Theta_rho = rho^(p-N-2) * integral(|D ln u|^p)."""

    vertex_x: tuple[float, ...]
    vertex_t: float
    p: float
    radii: np.ndarray
    values: np.ndarray


def envelope(curve: IndicatorCurve) -> IndicatorCurve:
    """Running sup over smaller radii, making rho -> I(rho) non-decreasing."""
    vals_ascending = curve.values[::-1]
    env = np.maximum.accumulate(vals_ascending)[::-1]
    return replace(curve, envelope=env)


def _cylinder_or_raise(fld: ScalarField, vertex, rho, theta=1.0):
    y, s = vertex
    y = (float(y),) if np.isscalar(y) else tuple(float(c) for c in y)
    cyl = ParabolicCylinder(y, float(s), float(rho), float(theta))
    if not cyl.contained_in(fld.grid):
        raise OutOfDomainError(
            f"cylinder (rho={rho}, theta={theta}) at {(y, s)} not contained in grid"
        )
    return cyl


def indicator(fld: ScalarField, vertex, rho: float, p: float,
              gradient: VectorField | None = None,
              allow_low_p: bool = False) -> float:
    """rho * (node mean of |D ln u|^p over (vertex)+Q_rho)^(1/p)."""
    validate_p(fld.grid.dim, p, allow_low_p)
    cyl = _cylinder_or_raise(fld, vertex, rho)
    g = gradient if gradient is not None else grad_log(fld)
    avg = cylinder_power_average(g, cyl, p)
    return float(rho * avg ** (1.0 / p))


def indicator_curve(fld: ScalarField, vertex, radii, p: float,
                    allow_low_p: bool = False) -> IndicatorCurve:
    """Indicator over a decreasing radius ladder, gradient computed once;
    the monotone envelope is filled in."""
    g = grad_log(fld)
    vals = [indicator(fld, vertex, r, p, gradient=g, allow_low_p=allow_low_p)
            for r in radii]
    y, s = vertex
    y = (float(y),) if np.isscalar(y) else tuple(float(c) for c in y)
    return envelope(IndicatorCurve(y, float(s), p, np.asarray(radii, float),
                                   np.asarray(vals)))


def so_indicator(fld: ScalarField, vertex, p: float, radii,
                 allow_low_p: bool = False) -> ThetaCurve:
    """Theta_rho over a radius ladder.

    The discrete integral is reconstructed as node-mean times the intrinsic
    volume rho^(N+2), which makes the identity Theta = I^p exact; the two
    evaluation paths are compared to guard the normalization.
    """
    validate_p(fld.grid.dim, p, allow_low_p)
    N = fld.grid.dim
    g = grad_log(fld)
    thetas, indicators = [], []
    for rho in radii:
        cyl = _cylinder_or_raise(fld, vertex, rho)
        avg = cylinder_power_average(g, cyl, p)
        integral = avg * rho ** (N + 2)
        thetas.append(rho ** (p - N - 2) * integral)
        indicators.append(indicator(fld, vertex, rho, p, gradient=g,
                                    allow_low_p=allow_low_p))
    thetas = np.asarray(thetas)
    ipow = np.asarray(indicators) ** p
    if not np.allclose(thetas, ipow, rtol=_IDENTITY_RTOL, atol=0.0):
        raise RuntimeError("volume normalization broken: Theta != I^p")
    y, s = vertex
    y = (float(y),) if np.isscalar(y) else tuple(float(c) for c in y)
    return ThetaCurve(y, float(s), p, np.asarray(radii, float), thetas)


def so_curves(fld: ScalarField, vertices, p: float, radii,
              allow_low_p: bool = False) -> dict:
    """Theta curves for many vertices (input to discontinuity-set extraction)."""
    out = {}
    for vertex in vertices:
        y, s = vertex
        y = (float(y),) if np.isscalar(y) else tuple(float(c) for c in y)
        out[(y, float(s))] = so_indicator(fld, vertex, p, radii, allow_low_p)
    return out


def osc_curve(fld: ScalarField, vertex, radii, theta: float):
    """(r, oscillation over (vertex)+Q_r(theta)) for each admissible radius.

    Radii whose cylinder leaves the grid are skipped with a warning. Values
    are non-increasing in r by node-set inclusion; violation of that exact
    property indicates a broken mask and raises.
    """
    from .geometry import essosc

    pts = []
    for r in sorted(radii, reverse=True):
        try:
            cyl = _cylinder_or_raise(fld, vertex, r, theta)
            pts.append((float(r), essosc(fld, cyl)))
        except (OutOfDomainError, EmptyRegionError) as err:
            warnings.warn(f"radius {r} skipped: {err}")
    for (r1, o1), (r2, o2) in zip(pts, pts[1:]):
        if o2 > o1 + 1e-14:
            raise RuntimeError(f"oscillation not monotone: osc({r2})={o2} > osc({r1})={o1}")
    return pts


def theorem1_bound(omega: float, r: float, R0: float, mu: float, alpha: float,
                   Cbar: float, I_tilde_at: float) -> float:
    """Modulus-of-continuity bound Cbar*[omega*(r/R0)^((1-mu)*alpha) + I_tilde]."""
    if not 0 < r <= R0:
        raise ValueError(f"need 0 < r <= R0, got r={r}, R0={R0}")
    if not 0 < mu < 1 or not 0 < alpha < 1:
        raise ValueError("mu and alpha must lie in (0,1)")
    if Cbar <= 1:
        raise ValueError(f"Cbar must exceed 1, got {Cbar}")
    if omega < 0 or I_tilde_at < 0:
        raise ValueError("omega and I_tilde_at must be non-negative")
    return Cbar * (omega * (r / R0) ** ((1 - mu) * alpha) + I_tilde_at)


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float


def powerlaw_fit(curve) -> PowerLawFit:
    """OLS fit of ln y against ln x for positive samples (x_i, y_i)."""
    arr = np.asarray(curve, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise ValueError("need at least 3 (x, y) points")
    x, y = arr[:, 0], arr[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit requires positive x and y")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(float(slope), float(intercept), r2)


# ---------------------------------------------------------------------------
# quadrature-only paths: per-radius grids sampling the closed-form gradient,
# so small radii keep full resolution regardless of any global grid

def _fitted_grid(vertex_x, vertex_t, rho, theta, nodes_per_axis, n_slices):
    dim = len(vertex_x)
    h = rho / (nodes_per_axis - 1)
    dt = theta * rho**2 / n_slices
    origin = tuple(x - rho / 2.0 for x in vertex_x)
    return SpaceTimeGrid(dim, h, nodes_per_axis, dt, n_slices, origin,
                         vertex_t - theta * rho**2)


def oracle_indicator_curve(sol: ExplicitSolution, vertex, radii, p: float,
                           nodes_per_axis: int = 24, n_slices: int = 24,
                           allow_low_p: bool = False) -> IndicatorCurve:
    """Indicator curve from the analytic gradient on cylinder-fitted grids.

    An even ``nodes_per_axis`` keeps nodes off the cube center, which is what
    masks the singular column of the lam = 0 member.
    """
    validate_p(sol.N, p, allow_low_p)
    y, s = vertex
    y = (float(y),) if np.isscalar(y) else tuple(float(c) for c in y)
    vals = []
    for rho in radii:
        grid = _fitted_grid(y, float(s), rho, 1.0, nodes_per_axis, n_slices)
        X = grid.meshgrid()
        mags = []
        for t in grid.times[1:]:  # half-open window drops the bottom slice
            g = grad_log_exact(sol, X, min(t, sol.T))
            mags.append(np.mean(np.sqrt(np.sum(g**2, axis=0)) ** p))
        vals.append(rho * np.mean(mags) ** (1.0 / p))
    return envelope(IndicatorCurve(y, float(s), p, np.asarray(radii, float),
                                   np.asarray(vals)))


def oracle_osc_curve(sol: ExplicitSolution, vertex, radii, theta: float,
                     nodes_per_axis: int = 16, n_slices: int = 16):
    """Oscillation of the closed form over (vertex)+Q_r(theta), sampled on
    cylinder-fitted grids so two decades of radii stay resolved."""
    y, s = vertex
    y = (float(y),) if np.isscalar(y) else tuple(float(c) for c in y)
    pts = []
    for rho in sorted(radii, reverse=True):
        grid = _fitted_grid(y, float(s), rho, theta, nodes_per_axis, n_slices)
        X = grid.meshgrid()
        lo, hi = np.inf, -np.inf
        for t in grid.times[1:]:
            u = eval_solution(sol, X, min(t, sol.T))
            lo, hi = min(lo, float(np.min(u))), max(hi, float(np.max(u)))
        pts.append((float(rho), hi - lo))
    return pts


# ---------------------------------------------------------------------------
# inequality audits

@dataclass(frozen=True)
class AuditReport:
    lhs_terms: dict[str, float]
    rhs_terms: dict[str, float]

    @property
    def lhs_total(self):
        return float(sum(self.lhs_terms.values()))

    @property
    def rhs_total(self):
        return float(sum(self.rhs_terms.values()))

    @property
    def empirical_ratio(self):
        lhs, rhs = self.lhs_total, self.rhs_total
        if rhs == 0.0:
            return 0.0 if lhs == 0.0 else np.inf
        return lhs / rhs


class _CylinderQuadrature:
    """Shared discrete-integral helpers over one cylinder."""

    def __init__(self, fld: ScalarField, cyl: ParabolicCylinder):
        grid = fld.grid
        mask = cyl.node_mask(grid)
        if not mask.any():
            raise EmptyRegionError("cylinder contains no grid nodes")
        per_slice = mask.reshape(grid.n_steps + 1, -1).any(axis=1)
        self.slices = np.flatnonzero(per_slice)
        self.space_mask = mask[self.slices[0]]
        self.grid = grid
        self.dx = grid.h**grid.dim

    def slice_integral(self, integrand_slice):
        return float(integrand_slice[self.space_mask].sum() * self.dx)

    def sup_over_slices(self, integrand):
        return max(self.slice_integral(integrand[k]) for k in self.slices)

    def initial_slice_integral(self, integrand):
        return self.slice_integral(integrand[self.slices[0]])

    def spacetime_integral(self, integrand):
        tot = sum(self.slice_integral(integrand[k]) for k in self.slices)
        return tot * self.grid.dt


def audit_energy_sub(fld: ScalarField, cyl: ParabolicCylinder, k: float,
                     zeta: CutoffField) -> AuditReport:
    """Term-by-term evaluation of the truncated-energy estimate for
    sub-solutions at a positive level k, with (u-k)_+ truncations and the
    1/u-weighted gradient terms."""
    if k <= 0:
        raise ValueError(f"the sub-solution estimate requires k > 0, got {k}")
    quad = _CylinderQuadrature(fld, cyl)
    grid = fld.grid
    u = fld.values
    usafe = np.maximum(u, fld.eps_floor)
    z = zeta.values
    uk = np.maximum(u - k, 0.0)

    w = uk * z
    grad_w_sq = np.sum(spatial_gradient(grid, w) ** 2, axis=0)
    grad_z_sq = np.sum(spatial_gradient(grid, z) ** 2, axis=0)
    zt = np.abs(time_derivative(grid, z))

    lhs = {
        "sup_time": quad.sup_over_slices(uk**2 * z**2),
        "grad": quad.spacetime_integral(grad_w_sq / usafe),
    }
    rhs = {
        "initial": quad.initial_slice_integral(uk**2 * z**2),
        "zeta_t": quad.spacetime_integral(uk**2 * z * zt),
        "grad_zeta": quad.spacetime_integral(uk**2 * grad_z_sq / usafe),
    }
    return AuditReport(lhs, rhs)


def audit_energy_super(fld: ScalarField, cyl: ParabolicCylinder, k: float,
                       zeta: CutoffField) -> AuditReport:
    """Same audit for super-solutions: (u-k)_- truncations, 1/k weights, and
    the |D ln u| cross term on the right."""
    if k <= 0:
        raise ValueError(f"the super-solution estimate requires k > 0, got {k}")
    quad = _CylinderQuadrature(fld, cyl)
    grid = fld.grid
    u = fld.values
    z = zeta.values
    uk = np.maximum(k - u, 0.0)  # (u-k)_-

    w = uk * z
    grad_w_sq = np.sum(spatial_gradient(grid, w) ** 2, axis=0)
    grad_z = np.sqrt(np.sum(spatial_gradient(grid, z) ** 2, axis=0))
    zt = np.abs(time_derivative(grid, z))
    dlnu = grad_log(fld).magnitude

    lhs = {
        "sup_time": 0.5 * quad.sup_over_slices(uk**2 * z**2),
        "grad": quad.spacetime_integral(grad_w_sq) / k,
    }
    rhs = {
        "initial": 0.5 * quad.initial_slice_integral(uk**2 * z**2),
        "zeta_t": quad.spacetime_integral(uk**2 * z * zt),
        "grad_zeta": quad.spacetime_integral(uk**2 * grad_z**2) / k,
        "gradlog_cross": 2.0 * quad.spacetime_integral(dlnu * uk * grad_z * z),
    }
    return AuditReport(lhs, rhs)


def psi(u_val, H: float, k: float, c: float):
    """Truncated logarithm ln^+[ H / (H - (u-k)_+ + c) ], capped at ln(H/c)."""
    if H <= 0:
        raise ValueError(f"H must be positive, got {H}")
    if not 0 < c < min(1.0, H) * (1 + 1e-15):
        raise ValueError(f"need 0 < c < min(1, H)={min(1.0, H)}, got c={c}")
    w = np.maximum(np.asarray(u_val, dtype=float) - k, 0.0)
    if np.any(w > H * (1 + 1e-12)):
        raise ValueError("(u-k)_+ exceeds H: H must dominate the truncation")
    val = np.log(H / (H - np.minimum(w, H) + c))
    out = np.maximum(val, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def audit_log_estimate(fld: ScalarField, cyl: ParabolicCylinder, k: float,
                       c: float, zeta: CutoffField) -> AuditReport:
    """Term-by-term evaluation of the logarithmic estimate: sup-in-time of
    int(psi^2 zeta^2) against its initial slice plus the psi/u |Dzeta|^2 bulk
    term. Requires a time-independent cutoff."""
    if k < 0:
        raise ValueError(f"level k must be >= 0, got {k}")
    if not zeta.time_independent:
        raise ValueError("the logarithmic estimate requires a cutoff independent of t")
    quad = _CylinderQuadrature(fld, cyl)
    grid = fld.grid
    u = fld.values
    usafe = np.maximum(u, fld.eps_floor)
    z = zeta.values

    mask = cyl.node_mask(grid)
    H = float(np.maximum(u - k, 0.0)[mask].max())
    if H == 0.0:
        zero = {"sup_time": 0.0}
        return AuditReport(zero, {"initial": 0.0, "grad_zeta": 0.0})
    ps = psi(u, H, k, c)
    grad_z_sq = np.sum(spatial_gradient(grid, z) ** 2, axis=0)

    lhs = {"sup_time": quad.sup_over_slices(ps**2 * z**2)}
    rhs = {
        "initial": quad.initial_slice_integral(ps**2 * z**2),
        "grad_zeta": quad.spacetime_integral(ps / usafe * grad_z_sq),
    }
    return AuditReport(lhs, rhs)
