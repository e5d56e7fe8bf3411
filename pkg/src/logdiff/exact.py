"""Closed-form solution family used as the verification oracle.

For dimension N >= 3, extinction time T > 0 and parameter lam >= 0,

    u(x, t) = 2(N-2) (T-t)^(N/(N-2)) / (lam + (T-t)^(2/(N-2)) |x|^2).

For lam > 0 the solution is bounded, positive for t < T and vanishes
identically at t = T. For lam = 0 it reduces to 2(N-2)(T-t)/|x|^2, which is
unbounded along the column x = 0; that column is the only place where the
normalized local energy of D ln u fails to vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomainError, SingularPointError
from .geometry import ScalarField, SpaceTimeGrid

_T_TOL = 1e-12


@dataclass(frozen=True)
class ExplicitSolution:
    """Parameters (N, lam, T) of the closed-form family."""

    N: int
    lam: float
    T: float

    def __post_init__(self):
        if self.N < 3:
            raise ValueError(f"closed form requires N >= 3, got N={self.N}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.T <= 0:
            raise ValueError(f"extinction time must be positive, got {self.T}")

    @property
    def time_exponent(self):
        """a = 2/(N-2), the power of (T-t) multiplying |x|^2."""
        return 2.0 / (self.N - 2)


def _check_domain(sol, x, t):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != sol.N:
        raise ValueError(f"point has {x.shape[0]} components, expected {sol.N}")
    if np.any(np.asarray(t) > sol.T + _T_TOL):
        raise OutOfDomainError(f"t > extinction time T={sol.T}: solution is extinct")
    r2 = np.sum(x**2, axis=0)
    if sol.lam == 0.0 and np.any(r2 == 0.0):
        raise SingularPointError("lam = 0 solution is singular at x = 0")
    return x, r2


def eval_solution(sol: ExplicitSolution, x, t) -> float | np.ndarray:
    """Value of the closed form at (x, t); x is a point or an (N, ...) array."""
    x, r2 = _check_domain(sol, x, t)
    s = sol.T - np.asarray(t, dtype=float)
    s = np.maximum(s, 0.0)  # guard rounding at t == T
    a = sol.time_exponent
    if sol.lam == 0.0:
        # cancel s^a against the numerator to stay finite as s -> 0
        out = 2.0 * (sol.N - 2) * s / r2
    else:
        out = 2.0 * (sol.N - 2) * s ** (1.0 + a) / (sol.lam + s**a * r2)
    if np.ndim(out) == 0:
        return float(out)
    return out


def grad_log_exact(sol: ExplicitSolution, x, t) -> np.ndarray:
    """Spatial gradient of ln u: -2 (T-t)^a x / (lam + (T-t)^a |x|^2)."""
    x, r2 = _check_domain(sol, x, t)
    s = np.maximum(sol.T - np.asarray(t, dtype=float), 0.0)
    a = sol.time_exponent
    if sol.lam == 0.0:
        return -2.0 * x / r2
    return -2.0 * s**a * x / (sol.lam + s**a * r2)


def u_t_exact(sol: ExplicitSolution, x, t):
    """Closed-form time derivative of u."""
    x, r2 = _check_domain(sol, x, t)
    s = np.maximum(sol.T - np.asarray(t, dtype=float), 0.0)
    a = sol.time_exponent
    if sol.lam == 0.0:
        return -2.0 * (sol.N - 2) / r2 * np.ones_like(s)
    den = sol.lam + s**a * r2
    return -2.0 * (sol.N - 2) * s**a * ((1.0 + a) * sol.lam + s**a * r2) / den**2


def laplacian_log_exact(sol: ExplicitSolution, x, t):
    """Closed-form spatial Laplacian of ln u."""
    x, r2 = _check_domain(sol, x, t)
    s = np.maximum(sol.T - np.asarray(t, dtype=float), 0.0)
    a = sol.time_exponent
    if sol.lam == 0.0:
        return -2.0 * (sol.N - 2) / r2 * np.ones_like(s)
    den = sol.lam + s**a * r2
    return -2.0 * s**a * (sol.N * sol.lam + (sol.N - 2) * s**a * r2) / den**2


def residual(sol: ExplicitSolution, x, t):
    """u_t - lap(ln u) from the two independent closed-form derivatives.

    Vanishes identically in exact arithmetic; the computed value measures
    floating-point cancellation only.
    """
    if np.any(np.asarray(t) >= sol.T):
        raise OutOfDomainError("residual requires t < T")
    return u_t_exact(sol, x, t) - laplacian_log_exact(sol, x, t)


def sample(sol: ExplicitSolution, grid: SpaceTimeGrid,
           eps_floor: float = 1e-12) -> ScalarField:
    """Evaluate the closed form at every grid node.

    For lam = 0 the grid must avoid the column x = 0; offending node indices
    are listed in the raised error so callers can shift the grid by h/2.
    """
    if grid.dim != sol.N:
        raise ValueError(f"grid dim {grid.dim} != solution dim {sol.N}")
    if grid.t_end > sol.T + _T_TOL:
        raise OutOfDomainError("grid extends past the extinction time")
    X = grid.meshgrid()
    r2 = np.sum(X**2, axis=0)
    if sol.lam == 0.0 and np.any(r2 == 0.0):
        bad = np.argwhere(r2 == 0.0)
        raise SingularPointError(
            f"grid hits the singular column x=0 at node indices {bad.tolist()[:8]}"
        )
    slices = [eval_solution(sol, X, t) for t in grid.times]
    return ScalarField(grid, np.stack(slices), eps_floor)
