"""Implicit finite-difference integrator for u_t = lap(ln u) on a box with
Dirichlet data.

One backward-Euler step solves the nonlinear system

    G(v) = v - dt * lap_h(ln v) - u_now - dt*f = 0

for the interior values v, with boundary values fixed at the new time level.
The unknown is u itself (not ln u), which keeps the time derivative linear
and confines the singularity to the diffusion term; the Newton matrix is
I - dt * L @ diag(1/v). Multiplying the update equation by diag(v) turns it
into the symmetric positive definite system (diag(v) - dt*L) y = -G with
delta = v*y, solved by Jacobi-preconditioned CG for large grids and a direct
sparse factorization for small ones. Both paths are deterministic.

Newton is damped for positivity: a trial iterate dipping below eps_floor
halves the step, at most 20 times, because the modulus of ellipticity 1/u
blows up as u -> 0 and an undamped step can overshoot into negatives.

``newton_tol`` is a tolerance on the discrete PDE residual G/dt in the max
norm, so the a-posteriori residual of a converged run is <= newton_tol at
every interior node by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve

from .errors import NewtonDivergenceError
from .geometry import ScalarField, SpaceTimeGrid

_DIRECT_SOLVE_MAX = 3000  # unknowns; above this use CG on the SPD form
_MAX_DAMPINGS = 20


@dataclass(frozen=True)
class SolverConfig:
    grid: SpaceTimeGrid
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    eps_floor: float = 1e-12
    forcing: Optional[Callable] = None  # f(X, t) with X of shape (N, M, ..., M)

    def __post_init__(self):
        if self.newton_tol <= 0 or self.eps_floor <= 0:
            raise ValueError("newton_tol and eps_floor must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data: boundary(X, t) on the spatial boundary plus the initial
    slice. When ``initial`` is None the boundary provider evaluated at the
    start time supplies the initial condition (the natural choice when both
    come from the same oracle)."""

    boundary: Callable
    initial: Optional[Callable] = None
    kind: str = "dirichlet"

    @classmethod
    def from_solution(cls, sol):
        from .exact import eval_solution

        return cls(boundary=lambda X, t: eval_solution(sol, X, t))

    @classmethod
    def constant(cls, value: float):
        if value < 0:
            raise ValueError("negative boundary data")
        return cls(boundary=lambda X, t: np.full(X.shape[1:], float(value)))

    @classmethod
    def from_field(cls, fld: ScalarField):
        """Dirichlet data read off a stored snapshot: the slice at the nearest
        time level. The driving grid must share the snapshot's spatial layout."""

        def provider(X, t):
            g = fld.grid
            if X.shape[1:] != (g.nodes_per_axis,) * g.dim:
                raise ValueError("snapshot boundary data needs a matching spatial grid")
            k = int(round((t - g.t0) / g.dt))
            if not 0 <= k <= g.n_steps:
                raise ValueError(f"time {t} outside the snapshot's range")
            return fld.values[k]

        return cls(boundary=provider)

    def initial_slice(self, X, t0):
        vals = np.asarray(self.initial(X) if self.initial is not None
                          else self.boundary(X, t0), dtype=float)
        if np.any(vals < 0):
            raise ValueError("negative initial data")
        return vals


@dataclass
class StepResult:
    values: np.ndarray
    newton_iterations: int
    residual: float


@dataclass
class SolveResult:
    field: ScalarField
    newton_iterations: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)


def _interior_mask(dim, m):
    mask = np.ones((m,) * dim, dtype=bool)
    for d in range(dim):
        sl = [slice(None)] * dim
        sl[d] = 0
        mask[tuple(sl)] = False
        sl[d] = m - 1
        mask[tuple(sl)] = False
    return mask


def _laplacian_interior(w, h):
    """5/7-point Laplacian of a full spatial array, evaluated on the interior."""
    dim = w.ndim
    core = tuple(slice(1, -1) for _ in range(dim))
    out = np.zeros_like(w[core])
    for d in range(dim):
        up = tuple(slice(2, None) if i == d else slice(1, -1) for i in range(dim))
        dn = tuple(slice(None, -2) if i == d else slice(1, -1) for i in range(dim))
        out += w[up] + w[dn] - 2.0 * w[core]
    return out / h**2


@lru_cache(maxsize=8)
def _interior_laplacian_matrix(dim, m, h):
    """Sparse interior-to-interior coupling of the discrete Laplacian."""
    mask = _interior_mask(dim, m)
    n_int = int(mask.sum())
    idx = -np.ones((m,) * dim, dtype=np.int64)
    idx[mask] = np.arange(n_int)
    ii = np.argwhere(mask)
    rows, cols, vals = [], [], []
    for d in range(dim):
        for step in (-1, 1):
            nb = ii.copy()
            nb[:, d] += step
            j = idx[tuple(nb.T)]
            keep = j >= 0
            rows.append(idx[tuple(ii[keep].T)])
            cols.append(j[keep])
            vals.append(np.full(int(keep.sum()), 1.0 / h**2))
    rows.append(np.arange(n_int))
    cols.append(np.arange(n_int))
    vals.append(np.full(n_int, -2.0 * dim / h**2))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_int, n_int),
    )


def _solve_newton_system(L, v, dt, rhs_neg_G):
    """Solve (I - dt*L*diag(1/v)) delta = -G via the SPD form."""
    n = v.size
    A = (sp.diags(v) - dt * L).tocsr()
    if n <= _DIRECT_SOLVE_MAX:
        y = spsolve(A.tocsc(), rhs_neg_G)
    else:
        precond = sp.diags(1.0 / A.diagonal())
        y, info = cg(A, rhs_neg_G, rtol=1e-13, atol=0.0, maxiter=10 * n, M=precond)
        if info != 0:
            y = spsolve(A.tocsc(), rhs_neg_G)
    return v * y


def step(u_now: np.ndarray, t_next: float, config: SolverConfig,
         bc: BoundaryData) -> StepResult:
    """Advance one backward-Euler step; returns the full slice at t_next."""
    grid = config.grid
    m, h, dt = grid.nodes_per_axis, grid.h, grid.dt
    u_now = np.asarray(u_now, dtype=float)
    if u_now.shape != (m,) * grid.dim:
        raise ValueError("u_now has wrong shape for the grid")
    interior = _interior_mask(grid.dim, m)
    X = grid.meshgrid()

    bvals = np.asarray(bc.boundary(X, t_next), dtype=float)
    if np.any(bvals[~interior] < 0):
        raise ValueError("negative boundary data")

    rhs = u_now[interior].copy()
    if config.forcing is not None:
        rhs = rhs + dt * np.asarray(config.forcing(X, t_next), dtype=float)[interior]

    w = bvals.copy()  # full array; interior entries overwritten per iterate
    v = np.maximum(u_now[interior], config.eps_floor)
    L = _interior_laplacian_matrix(grid.dim, m, h)

    res = np.inf
    for it in range(1, config.newton_max_iter + 1):
        w[interior] = v
        lap_ln = _laplacian_interior(np.log(np.maximum(w, config.eps_floor)), h)
        G = v - dt * lap_ln.ravel() - rhs
        res = float(np.abs(G).max()) / dt
        if res <= config.newton_tol:
            out = w.copy()
            out[interior] = v
            return StepResult(out, it, res)
        delta = _solve_newton_system(L, v, dt, -G)
        scale = 1.0
        trial = v + delta
        n_damp = 0
        while trial.min() < config.eps_floor:
            n_damp += 1
            if n_damp > _MAX_DAMPINGS:
                raise NewtonDivergenceError(
                    f"Newton damping exhausted ({_MAX_DAMPINGS} halvings)",
                    last_residual=res,
                )
            scale *= 0.5
            trial = v + scale * delta
        v = trial
    raise NewtonDivergenceError(
        f"Newton did not converge in {config.newton_max_iter} iterations "
        f"(last residual {res:.3e})",
        last_residual=res,
    )


def run(config: SolverConfig, bc: BoundaryData,
        n_steps: Optional[int] = None) -> SolveResult:
    """Time loop over ``step``; slice 0 comes from the initial condition."""
    grid = config.grid
    if n_steps is None:
        n_steps = grid.n_steps
    if n_steps != grid.n_steps:
        grid = SpaceTimeGrid(grid.dim, grid.h, grid.nodes_per_axis, grid.dt,
                             n_steps, grid.origin, grid.t0)
        config = SolverConfig(grid, config.newton_tol, config.newton_max_iter,
                              config.eps_floor, config.forcing)
    X = grid.meshgrid()
    values = np.empty(grid.shape)
    values[0] = bc.initial_slice(X, grid.t0)
    result = SolveResult(field=None)  # type: ignore[arg-type]
    u = values[0]
    for k in range(1, n_steps + 1):
        try:
            sr = step(u, grid.times[k], config, bc)
        except NewtonDivergenceError as err:
            err.step_index = k
            raise
        values[k] = sr.values
        result.newton_iterations.append(sr.newton_iterations)
        result.residuals.append(sr.residual)
        u = sr.values
    result.field = ScalarField(grid, values, config.eps_floor)
    return result


def pde_residual(fld: ScalarField, forcing: Optional[Callable] = None) -> ScalarField:
    """A-posteriori discrete residual u_t - lap_h(ln u) (- f).

    Backward difference in time, same Laplacian stencil as the scheme;
    boundary nodes and the initial slice are set to 0. Returned as a field of
    absolute values so it satisfies the non-negativity contract.
    """
    grid = fld.grid
    core = tuple(slice(1, -1) for _ in range(grid.dim))
    out = np.zeros(grid.shape)
    X = grid.meshgrid() if forcing is not None else None
    for k in range(1, grid.n_steps + 1):
        w = np.log(np.maximum(fld.values[k], fld.eps_floor))
        r = (fld.values[k][core] - fld.values[k - 1][core]) / grid.dt
        r = r - _laplacian_interior(w, grid.h)
        if forcing is not None:
            r = r - np.asarray(forcing(X, grid.times[k]), dtype=float)[core]
        out[(k,) + core] = np.abs(r)
    return ScalarField(grid, out, fld.eps_floor)
