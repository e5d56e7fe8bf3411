"""Spacetime grids, cubes, parabolic cylinders and the discrete measure,
oscillation and quadrature primitives built on them.

Conventions used throughout the package:

* ``K_rho(y)`` is the cube of *side length* rho centred at ``y``; grid nodes
  lying on the closed cube are counted as inside.
* A parabolic cylinder with vertex ``(y, s)``, radius ``rho`` and intrinsic
  factor ``theta`` is ``K_rho(y) x (s - theta*rho^2, s]`` -- closed cube in
  space, half-open interval in time. Its intrinsic volume is
  ``theta * rho^(N+2)``.
* Quadrature is the midpoint (node-cell) rule: a cell belongs to a region iff
  its node does. Averages over a region are plain node means, which avoids
  the O(h) volume-mismatch bias of dividing a node-cell sum by the intrinsic
  volume.
* "Essential" suprema/oscillations are exact discrete max/min over nodes;
  everything here is a continuous sample or solver output, so null sets play
  no role.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRegionError

# relative slack when classifying a node against a region boundary, so that
# nodes meant to sit exactly on a cube face survive float rounding
_REL_TOL = 1e-9


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor grid over a closed box times a time interval.

    Spatial node d-th coordinate: origin[d] + i*h, i = 0..nodes_per_axis-1.
    Time slices: t0 + k*dt, k = 0..n_steps.
    """

    dim: int
    h: float
    nodes_per_axis: int
    dt: float
    n_steps: int
    origin: tuple[float, ...]
    t0: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.h <= 0 or self.dt <= 0:
            raise ValueError("h and dt must be positive")
        if self.nodes_per_axis < 3:
            raise ValueError("nodes_per_axis must be >= 3")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if len(self.origin) != self.dim:
            raise ValueError("origin must have one coordinate per axis")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @classmethod
    def from_box(cls, dim, lo, hi, nodes_per_axis, t0, t1, n_steps):
        """Grid covering [lo, hi]^dim x [t0, t1] (cubic box, equal extents)."""
        h = (hi - lo) / (nodes_per_axis - 1)
        dt = (t1 - t0) / n_steps
        return cls(dim, h, nodes_per_axis, dt, n_steps, (lo,) * dim, t0)

    @property
    def shape(self):
        """Array shape of a spacetime field: time-major, then one axis per dim."""
        return (self.n_steps + 1,) + (self.nodes_per_axis,) * self.dim

    @property
    def n_nodes(self):
        return (self.n_steps + 1) * self.nodes_per_axis**self.dim

    @property
    def cell_volume(self):
        """Spacetime volume h^N * dt of one node cell."""
        return self.h**self.dim * self.dt

    @property
    def t_end(self):
        return self.t0 + self.n_steps * self.dt

    def axis_coords(self, d):
        return self.origin[d] + self.h * np.arange(self.nodes_per_axis)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def meshgrid(self):
        """Spatial coordinates, shape (dim, M, ..., M)."""
        axes = [self.axis_coords(d) for d in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def covers_box(self, lo, hi, t_lo, t_hi):
        """Whether the grid's closed box contains [lo,hi]^space x [t_lo,t_hi]."""
        tol_x = _REL_TOL * max(self.h, 1.0)
        tol_t = _REL_TOL * max(self.dt, 1.0)
        for d in range(self.dim):
            if lo[d] < self.origin[d] - tol_x:
                return False
            if hi[d] > self.origin[d] + (self.nodes_per_axis - 1) * self.h + tol_x:
                return False
        return t_lo >= self.t0 - tol_t and t_hi <= self.t_end + tol_t


@dataclass(frozen=True)
class Cube:
    """Open cube K_rho(y): side length rho, centred at y."""

    center: tuple[float, ...]
    side: float

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError(f"cube side must be positive, got {self.side}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class ParabolicCylinder:
    """Intrinsic cylinder (y,s) + Q_rho(theta) = K_rho(y) x (s - theta*rho^2, s]."""

    vertex_x: tuple[float, ...]
    vertex_t: float
    rho: float
    theta: float = 1.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError(f"cylinder radius must be positive, got {self.rho}")
        if self.theta <= 0:
            raise ValueError(f"cylinder theta must be positive, got {self.theta}")
        object.__setattr__(self, "vertex_x", tuple(float(c) for c in self.vertex_x))

    @property
    def dim(self):
        return len(self.vertex_x)

    @property
    def cube(self) -> "Cube":
        """Spatial footprint K_rho(y)."""
        return Cube(self.vertex_x, self.rho)

    @property
    def volume(self):
        """Intrinsic spacetime volume theta * rho^(N+2)."""
        return self.theta * self.rho ** (self.dim + 2)

    @property
    def t_bottom(self):
        return self.vertex_t - self.theta * self.rho**2

    def node_mask(self, grid: SpaceTimeGrid):
        """Boolean mask of grid nodes inside the cylinder, shape grid.shape."""
        if grid.dim != self.dim:
            raise ValueError(f"cylinder dim {self.dim} != grid dim {grid.dim}")
        tol_x = _REL_TOL * max(self.rho, grid.h)
        half = self.rho / 2.0 + tol_x
        space = np.ones((grid.nodes_per_axis,) * grid.dim, dtype=bool)
        for d in range(grid.dim):
            c = grid.axis_coords(d)
            m1 = np.abs(c - self.vertex_x[d]) <= half
            sl = [None] * grid.dim
            sl[d] = slice(None)
            space &= m1[tuple(sl)]
        tol_t = _REL_TOL * max(self.theta * self.rho**2, grid.dt)
        t = grid.times
        time_m = (t > self.t_bottom + tol_t) & (t <= self.vertex_t + tol_t)
        return time_m[(slice(None),) + (None,) * grid.dim] & space[None]

    def contained_in(self, grid: SpaceTimeGrid):
        lo = [x - self.rho / 2.0 for x in self.vertex_x]
        hi = [x + self.rho / 2.0 for x in self.vertex_x]
        return grid.covers_box(lo, hi, self.t_bottom, self.vertex_t)

    def discrete_volume(self, grid: SpaceTimeGrid):
        """Node count inside the cylinder times the cell volume."""
        return int(self.node_mask(grid).sum()) * grid.cell_volume


def make_cylinder(vertex, rho, theta=1.0) -> ParabolicCylinder:
    """Build (y,s) + Q_rho(theta) from a vertex given as (point, time)."""
    y, s = vertex
    y = (float(y),) if np.isscalar(y) else tuple(float(c) for c in y)
    return ParabolicCylinder(y, float(s), float(rho), float(theta))


@dataclass(frozen=True)
class ScalarField:
    """Non-negative sampled spacetime function on a grid.

    ``values`` has shape grid.shape (time-major, C order in space). ``ln`` is
    only ever applied after clamping at ``eps_floor``; clamp counts are
    surfaced by the operations that clamp.
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    eps_floor: float = 1e-12

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if np.any(v < 0):
            raise ValueError("field values must be non-negative")
        if self.eps_floor <= 0:
            raise ValueError("eps_floor must be positive")
        object.__setattr__(self, "values", v)

    def slice_at(self, k):
        return self.values[k]


@dataclass(frozen=True)
class VectorField:
    """Per-node spatial vector data, shape (dim,) + grid.shape."""

    grid: SpaceTimeGrid
    values: np.ndarray
    clamp_count: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.dim,) + self.grid.shape:
            raise ValueError(
                f"vector values shape {v.shape} != {(self.grid.dim,) + self.grid.shape}"
            )
        object.__setattr__(self, "values", v)

    @property
    def magnitude(self):
        return np.sqrt(np.sum(self.values**2, axis=0))


@dataclass(frozen=True)
class CutoffField:
    """Piecewise-linear cutoff zeta in [0,1] with its discrete derivative bounds.

    The reported bounds are the exact maxima of the one-sided difference
    quotients of the stored values, so they dominate every discrete
    derivative by construction.
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    space_gradient_bound: float
    time_derivative_bound: float
    profile: str = "space_time"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError("cutoff values shape mismatch")
        if v.min() < -1e-15 or v.max() > 1 + 1e-15:
            raise ValueError("cutoff values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def time_independent(self):
        return bool(np.all(self.values == self.values[:1]))


def _axis_gradient(w, h, axis):
    """Second-order first derivative along one axis: central in the interior,
    one-sided three-point at the two boundary layers. Written in difference
    form so it vanishes exactly on constants."""
    g = np.empty_like(w)
    w_ = np.moveaxis(w, axis, 0)
    g_ = np.moveaxis(g, axis, 0)
    g_[1:-1] = (w_[2:] - w_[:-2]) / (2 * h)
    g_[0] = (4 * (w_[1] - w_[0]) - (w_[2] - w_[0])) / (2 * h)
    g_[-1] = (4 * (w_[-1] - w_[-2]) - (w_[-1] - w_[-3])) / (2 * h)
    return g


def spatial_gradient(grid: SpaceTimeGrid, values: np.ndarray) -> np.ndarray:
    """Discrete spatial gradient of a spacetime array, shape (dim,)+grid.shape."""
    return np.stack(
        [_axis_gradient(values, grid.h, axis=1 + d) for d in range(grid.dim)]
    )


def time_derivative(grid: SpaceTimeGrid, values: np.ndarray) -> np.ndarray:
    """Discrete time derivative (second-order central / one-sided), grid.shape."""
    return _axis_gradient(values, grid.dt, axis=0)


def grad_log(fld: ScalarField) -> VectorField:
    """Discrete gradient of ln(u).

    Values below the field's eps_floor are clamped before taking the log; the
    number of clamped nodes is reported on the result so callers can require
    zero clamps on strictly positive fields.
    """
    v = fld.values
    clamped = v < fld.eps_floor
    w = np.log(np.maximum(v, fld.eps_floor))
    return VectorField(fld.grid, spatial_gradient(fld.grid, w), int(clamped.sum()))


def essosc(fld: ScalarField, region: ParabolicCylinder) -> float:
    """max - min of the field over the nodes inside the region."""
    mask = region.node_mask(fld.grid)
    if not mask.any():
        raise EmptyRegionError("cylinder contains no grid nodes")
    sel = fld.values[mask]
    return float(sel.max() - sel.min())


def level_measure(fld: ScalarField, region: ParabolicCylinder, k: float,
                  direction: str) -> float:
    """Discrete spacetime measure of a level set inside a region.

    ``below`` counts nodes with u < k (strict), ``above`` counts u >= k, so
    the two directions partition the region volume exactly.
    """
    mask = region.node_mask(fld.grid)
    if not mask.any():
        raise EmptyRegionError("cylinder contains no grid nodes")
    sel = fld.values[mask]
    if direction == "below":
        n = int((sel < k).sum())
    elif direction == "above":
        n = int((sel >= k).sum())
    else:
        raise ValueError(f"direction must be 'below' or 'above', got {direction!r}")
    return n * fld.grid.cell_volume


def cylinder_power_average(g: VectorField, region: ParabolicCylinder,
                           p: float) -> float:
    """Node average of |g|^p over the region (the discrete double-bar mean)."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mask = region.node_mask(g.grid)
    if not mask.any():
        raise EmptyRegionError("cylinder contains no grid nodes")
    mag = g.magnitude[mask]
    return float(np.mean(mag**p))


def make_cutoff(grid: SpaceTimeGrid, region: ParabolicCylinder, sigma: float,
                profile: str = "space_time") -> CutoffField:
    """Tent cutoff on a cylinder: 1 on the (1-sigma)-shrunk inner region, 0 on
    the lateral boundary (and, for ``space_time``, at the initial time).

    The spatial profile is the product of per-axis tents that fall linearly
    from the face of K_{(1-sigma)rho} to the face of K_rho, i.e. over a band
    of width sigma*rho/2, so the true slope is 2/(sigma*rho). The reported
    bounds are the measured discrete difference quotients.
    """
    if not 0 < sigma < 1:
        raise ValueError(f"sigma must lie in (0,1), got {sigma}")
    if profile not in ("space_only", "space_time"):
        raise ValueError(f"unknown cutoff profile {profile!r}")
    rho, theta = region.rho, region.theta
    band = sigma * rho / 2.0
    inner_half = (1.0 - sigma) * rho / 2.0
    tol = _REL_TOL * max(rho, grid.h)
    zeta_space = np.ones((grid.nodes_per_axis,) * grid.dim)
    for d in range(grid.dim):
        c = grid.axis_coords(d)
        dist = np.abs(c - region.vertex_x[d])
        t1 = np.clip((rho / 2.0 - dist) / band, 0.0, 1.0)
        t1 = np.where(dist <= inner_half + tol, 1.0, t1)  # closure convention
        sl = [None] * grid.dim
        sl[d] = slice(None)
        zeta_space = zeta_space * t1[tuple(sl)]

    if profile == "space_time":
        height = theta * rho**2
        tol_t = _REL_TOL * max(height, grid.dt)
        ramp = np.clip((grid.times - region.t_bottom) / (sigma * height), 0.0, 1.0)
        ramp = np.where(grid.times >= region.t_bottom + sigma * height - tol_t, 1.0, ramp)
    else:
        ramp = np.ones(grid.n_steps + 1)
    values = ramp[(slice(None),) + (None,) * grid.dim] * zeta_space[None]

    space_bound = 0.0
    for d in range(grid.dim):
        diffs = np.abs(np.diff(values, axis=1 + d)) / grid.h
        space_bound = max(space_bound, float(diffs.max()))
    time_bound = float(np.abs(np.diff(values, axis=0)).max() / grid.dt)
    return CutoffField(grid, values, space_bound, time_bound, profile)
