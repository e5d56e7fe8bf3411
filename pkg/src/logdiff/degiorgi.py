"""Level-set iteration machinery: exact constant calculators, the fast
geometric convergence recursion, the oscillation-reduction recursion, and
empirical conformance checkers for the two measure-to-pointwise lemmas.

Constants follow the displayed closed forms:

    beta         = 2/(N+2) - 1/p                 (must be > 0)
    A (full)     = gamma/(1-a)^2 [ ((mu- + xi*w)/theta)^(N/(N+2))
                     + gamma_o * (theta/(mu- + a*xi*w))^(2/(N+2)) ]
    gamma_o      = ((mu- + xi*w)/(mu- + a*xi*w))^(N/(N+2))
    A (reduced)  = gamma/(1-a)^2 [ (xi*w/theta)^(N/(N+2))
                     + (theta/(a*xi*w))^(2/(N+2)) ]      (mu- < xi*w/2 regime)
    nu_minus     = A^(-1/beta) * 16^(-1/beta^2)
    nu_plus      = [ (1-a)^2 (1-xi) / (gamma 4^(N+2) (b+1)^(N/(N+2))) ]^((N+2)/2)
                     * (w/theta) / (1 + w/theta)^((N+2)/2)

The generic constant gamma is existential in the theory; it is exposed as a
knob (default 1) so conformance sweeps can report the smallest value for
which no counterexample verdict occurs. nu_minus is recomputed per cylinder
from that cylinder's own mu-, omega (the alternative, freezing it per run,
is not what the constants' dependence suggests).

Almost-everywhere conclusions are tested at every grid node of the
conclusion cylinder shrunk by one cell layer in space and one step in time:
discrete fields have no null sets, but the outermost layer is quadrature
boundary, not interior information.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EmptyRegionError, ExponentRangeError, OutOfDomainError
from .geometry import ParabolicCylinder, ScalarField, level_measure

_SLACK = 1e-12
_FGC_TARGET = 1e-8


def beta(N: int, p: float) -> float:
    """2/(N+2) - 1/p; the gain exponent of the level-set recursion."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    b = 2.0 / (N + 2) - 1.0 / p
    if b <= 0:
        raise ExponentRangeError(
            f"beta = 2/(N+2) - 1/p = {b:.6g} <= 0 (p <= (N+2)/2)"
        )
    return b


@dataclass(frozen=True)
class DeGiorgiConstants:
    """Inputs of the lemma constants; derived quantities are properties."""

    N: int
    p: float
    a: float
    xi: float
    theta: float
    omega: float
    mu_minus: float = 0.0
    b: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not 0 < self.a < 1 or not 0 < self.xi < 1:
            raise ValueError("a and xi must lie in (0,1)")
        if self.theta <= 0 or self.omega <= 0:
            raise ValueError("theta and omega must be positive")
        if self.mu_minus < 0:
            raise ValueError("mu_minus must be >= 0")
        if self.b < 0:
            raise ValueError("b must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def beta(self):
        return beta(self.N, self.p)

    @property
    def gamma_o(self):
        num = self.mu_minus + self.xi * self.omega
        den = self.mu_minus + self.a * self.xi * self.omega
        return (num / den) ** (self.N / (self.N + 2))

    def A(self, reduced: bool = False) -> float:
        n_exp = self.N / (self.N + 2)
        t_exp = 2.0 / (self.N + 2)
        if reduced:
            xw = self.xi * self.omega
            bracket = (xw / self.theta) ** n_exp + (self.theta / (self.a * xw)) ** t_exp
        else:
            num = self.mu_minus + self.xi * self.omega
            den = self.mu_minus + self.a * self.xi * self.omega
            bracket = (num / self.theta) ** n_exp + self.gamma_o * (self.theta / den) ** t_exp
        return self.gamma / (1.0 - self.a) ** 2 * bracket


def nu_minus(params: DeGiorgiConstants, reduced: bool = False) -> float:
    """Smallness threshold A^(-1/beta) * 16^(-1/beta^2) for the sublevel-set
    measure. May underflow for tiny beta; use log10_nu_minus to compare."""
    return math.exp(log_nu_minus(params, reduced))


def log_nu_minus(params: DeGiorgiConstants, reduced: bool = False) -> float:
    b = params.beta
    return -math.log(params.A(reduced)) / b - math.log(16.0) / b**2


def nu_plus(params: DeGiorgiConstants) -> float:
    """Smallness threshold for the superlevel-set measure."""
    return math.exp(log_nu_plus(params))


def log_nu_plus(params: DeGiorgiConstants) -> float:
    """Log of nu_plus, stable for extreme omega/theta (e.g. theta ~ nu_minus
    * omega, where the direct power overflows)."""
    n = params.N
    front = (1.0 - params.a) ** 2 * (1.0 - params.xi) / (
        params.gamma * 4.0 ** (n + 2) * (params.b + 1.0) ** (n / (n + 2))
    )
    x = params.omega / params.theta
    half = (n + 2) / 2.0
    return half * math.log(front) + math.log(x) - half * math.log1p(x)


@dataclass(frozen=True)
class FgcResult:
    threshold: float
    sequence: np.ndarray
    verdict: str  # "converged" | "not-concluded"


def fgc(Y0: float, C: float, b: float, beta_val: float,
        n_max: int = 100) -> FgcResult:
    """Fast geometric convergence: Y_{k+1} = C * b^k * Y_k^(1+beta) tends to 0
    once Y0 <= C^(-1/beta) * b^(-1/beta^2)."""
    if C <= 0 or b <= 1 or beta_val <= 0:
        raise ValueError("need C > 0, b > 1, beta > 0")
    if Y0 < 0:
        raise ValueError("Y0 must be >= 0")
    threshold = C ** (-1.0 / beta_val) * b ** (-1.0 / beta_val**2)
    seq = [float(Y0)]
    verdict = "not-concluded"
    for k_ in range(n_max):
        if seq[-1] <= _FGC_TARGET:
            verdict = "converged"
            break
        if seq[-1] > 1e6:  # measure ratios live in [0,1]; this is divergence
            break
        seq.append(float(C * b**k_ * seq[-1] ** (1.0 + beta_val)))
    else:
        if seq[-1] <= _FGC_TARGET:
            verdict = "converged"
    return FgcResult(threshold, np.asarray(seq), verdict)


@dataclass(frozen=True)
class OscillationTrace:
    lam: float
    c: float
    rho: np.ndarray
    omega: np.ndarray
    alpha: float
    stop_reason: str  # "completed" | "indicator-dominated"


def osc_recursion(omega0: float, rho0: float, lam: float, c: float,
                  I_tilde: Callable[[float], float], n: int) -> OscillationTrace:
    """Oscillation reduction omega_k = max(lam*omega_{k-1}, 2*I(rho_{k-1}))
    down the radius ladder rho_k = c^k * rho0.

    Requires c < sqrt(lam) so the decay exponent alpha = ln(lam)/ln(sqrt(lam)c)
    lies in (0,1), and a non-decreasing rho -> I(rho) (use the envelope);
    under those the closed-form bound
        omega_n <= lam^n omega0 + 2/(1-lam) * I(rho0)
    is verified on the computed trace.
    """
    if not 0 < lam < 1 or not 0 < c < 1:
        raise ValueError("lam and c must lie in (0,1)")
    if omega0 < 0 or rho0 <= 0:
        raise ValueError("need omega0 >= 0 and rho0 > 0")
    if c >= math.sqrt(lam):
        raise ExponentRangeError(
            f"c={c} >= sqrt(lam)={math.sqrt(lam):.6g}: alpha would leave (0,1)"
        )
    if n < 1:
        raise ValueError("n must be >= 1")
    alpha = math.log(lam) / math.log(math.sqrt(lam) * c)

    rho = rho0 * c ** np.arange(n + 1)
    ivals = np.array([float(I_tilde(r)) for r in rho[:n]])
    if np.any(np.diff(ivals) > _SLACK * max(1.0, abs(ivals).max())):
        raise ValueError("I_tilde must be non-decreasing in rho (apply the envelope)")

    omega = np.empty(n + 1)
    omega[0] = omega0
    picked_indicator = False
    for k_ in range(1, n + 1):
        geo = lam * omega[k_ - 1]
        ind = 2.0 * ivals[k_ - 1]
        omega[k_] = max(geo, ind)
        picked_indicator = ind >= geo
    bound = lam ** np.arange(n + 1) * omega0 + 2.0 / (1.0 - lam) * ivals[0]
    if np.any(omega > bound * (1 + 1e-12) + 1e-300):
        raise RuntimeError("closed-form oscillation bound violated")
    return OscillationTrace(
        lam, c, rho, omega, alpha,
        "indicator-dominated" if picked_indicator else "completed",
    )


# ---------------------------------------------------------------------------
# empirical lemma checkers

def _extrema(fld: ScalarField, cyl: ParabolicCylinder):
    mask = cyl.node_mask(fld.grid)
    if not mask.any():
        raise OutOfDomainError("hypothesis cylinder contains no nodes")
    sel = fld.values[mask]
    return float(sel.min()), float(sel.max())


def _slack_cylinder(fld: ScalarField, cyl: ParabolicCylinder):
    """Conclusion cylinder shrunk by one cell in space and one step in time."""
    g = fld.grid
    rho = cyl.rho - 2 * g.h
    height = cyl.theta * cyl.rho**2 - g.dt
    if rho <= 0 or height <= 0:
        return cyl
    return ParabolicCylinder(cyl.vertex_x, cyl.vertex_t, rho, height / rho**2)


def _pointwise_min_margin(fld: ScalarField, cyl: ParabolicCylinder, level, sense):
    """min over nodes of (u - level) or (level - u), after the one-cell slack.

    A conclusion cylinder too thin to contain any node (intrinsic height
    below dt) makes the node-wise conclusion vacuous: +inf margin."""
    mask = _slack_cylinder(fld, cyl).node_mask(fld.grid)
    if not mask.any():
        mask = cyl.node_mask(fld.grid)
    if not mask.any():
        return math.inf
    sel = fld.values[mask]
    return float((sel - level).min() if sense == "above" else (level - sel).min())


def _norm_vertex(vertex):
    y, s = vertex
    y = (float(y),) if np.isscalar(y) else tuple(float(c) for c in y)
    return y, float(s)


@dataclass(frozen=True)
class Lemma41Verdict:
    vertex_x: tuple
    vertex_t: float
    rho_hyp: float
    rho_con: float
    theta: float
    xi: float
    a: float
    p: float
    gamma: float
    mu_minus: float
    mu_plus: float
    omega: float
    y0: float
    log10_nu_minus: Optional[float]
    hypothesis_met: bool
    indicator_value: Optional[float]
    alt_indicator: bool
    alt_pointwise: bool
    pointwise_margin: float

    @property
    def counterexample(self):
        """Hypothesis satisfied but neither conclusion branch holds."""
        return self.hypothesis_met and not (self.alt_indicator or self.alt_pointwise)

    def to_record(self):
        d = asdict(self)
        d["vertex_x"] = list(d["vertex_x"])
        return d

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)


def check_lemma41(fld: ScalarField, vertex, rho_hyp: float, rho_con: float,
                  theta: float, xi: float, a: float, p: float,
                  gamma: float = 1.0) -> Lemma41Verdict:
    """Conformance check of the sublevel-set lemma on a discrete field.

    Hypothesis: |[u < mu- + xi*w] cap Q_hyp| <= nu_minus * |Q_hyp| with
    nu_minus recomputed from this cylinder's mu-, w. Alternatives: either
    xi*w <= I(p, rho_hyp) or u >= mu- + a*xi*w on the conclusion cylinder.
    """
    from .diagnostics import indicator

    y, s = _norm_vertex(vertex)
    hyp = ParabolicCylinder(y, s, rho_hyp, theta)
    if not hyp.contained_in(fld.grid):
        raise OutOfDomainError("hypothesis cylinder leaves the grid")
    con = ParabolicCylinder(y, s, rho_con, theta)
    if not con.contained_in(fld.grid):
        raise OutOfDomainError("conclusion cylinder leaves the grid")
    mu_m, mu_p = _extrema(fld, hyp)
    w = mu_p - mu_m

    ind_val = indicator(fld, (y, s), rho_hyp, p, allow_low_p=True)
    if w == 0.0:
        return Lemma41Verdict(
            y, s, rho_hyp, rho_con, theta, xi, a, p, gamma,
            mu_m, mu_p, w, y0=0.0, log10_nu_minus=None, hypothesis_met=True,
            indicator_value=ind_val, alt_indicator=0.0 <= ind_val,
            alt_pointwise=True, pointwise_margin=0.0,
        )

    params = DeGiorgiConstants(fld.grid.dim, p, a, xi, theta, w,
                               mu_minus=mu_m, gamma=gamma)
    log_nu = log_nu_minus(params, reduced=False)
    level = mu_m + xi * w
    measure = level_measure(fld, hyp, level, "below")
    y0 = measure / hyp.discrete_volume(fld.grid)
    met = y0 == 0.0 or (y0 > 0 and math.log(y0) <= log_nu)

    margin = _pointwise_min_margin(fld, con, mu_m + a * xi * w, "above")
    return Lemma41Verdict(
        y, s, rho_hyp, rho_con, theta, xi, a, p, gamma, mu_m, mu_p, w,
        y0=float(y0), log10_nu_minus=log_nu / math.log(10.0),
        hypothesis_met=met, indicator_value=ind_val,
        alt_indicator=xi * w <= ind_val + _SLACK,
        alt_pointwise=margin >= -_SLACK * max(1.0, mu_p),
        pointwise_margin=margin,
    )


@dataclass(frozen=True)
class Lemma42Verdict:
    vertex_x: tuple
    vertex_t: float
    rho_hyp: float
    rho_con: float
    theta: float
    xi: float
    a: float
    b: float
    gamma: float
    mu_minus: float
    mu_plus: float
    omega: float
    precondition_met: bool
    y0: Optional[float]
    nu_plus: Optional[float]
    hypothesis_met: bool
    conclusion_holds: bool
    pointwise_margin: Optional[float]

    @property
    def counterexample(self):
        return self.precondition_met and self.hypothesis_met and not self.conclusion_holds

    def to_record(self):
        d = asdict(self)
        d["vertex_x"] = list(d["vertex_x"])
        return d

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)


def check_lemma42(fld: ScalarField, vertex, rho_hyp: float, rho_con: float,
                  theta: float, xi: float, a: float, b: float,
                  gamma: float = 1.0) -> Lemma42Verdict:
    """Conformance check of the superlevel-set lemma.

    The proximity condition w >= mu+/(b+1) is verified first; a field that
    fails it yields a precondition-violated verdict, not an error.
    """
    y, s = _norm_vertex(vertex)
    hyp = ParabolicCylinder(y, s, rho_hyp, theta)
    if not hyp.contained_in(fld.grid):
        raise OutOfDomainError("hypothesis cylinder leaves the grid")
    con = ParabolicCylinder(y, s, rho_con, theta)
    if not con.contained_in(fld.grid):
        raise OutOfDomainError("conclusion cylinder leaves the grid")
    mu_m, mu_p = _extrema(fld, hyp)
    w = mu_p - mu_m

    if w < mu_p / (b + 1.0) - _SLACK * max(1.0, mu_p) or w == 0.0:
        return Lemma42Verdict(
            y, s, rho_hyp, rho_con, theta, xi, a, b, gamma, mu_m, mu_p, w,
            precondition_met=False, y0=None, nu_plus=None,
            hypothesis_met=False, conclusion_holds=False, pointwise_margin=None,
        )

    params = DeGiorgiConstants(fld.grid.dim, p=4.0, a=a, xi=xi, theta=theta,
                               omega=w, mu_minus=mu_m, b=b, gamma=gamma)
    nup = nu_plus(params)
    level = mu_p - xi * w
    measure = level_measure(fld, hyp, level, "above")
    y0 = measure / hyp.discrete_volume(fld.grid)
    met = y0 <= nup

    margin = _pointwise_min_margin(fld, con, mu_p - a * xi * w, "below")
    return Lemma42Verdict(
        y, s, rho_hyp, rho_con, theta, xi, a, b, gamma, mu_m, mu_p, w,
        precondition_met=True, y0=float(y0), nu_plus=float(nup),
        hypothesis_met=met, conclusion_holds=margin >= -_SLACK * max(1.0, mu_p),
        pointwise_margin=margin,
    )


def lemma41_sweep(fld: ScalarField, n_combos: int, seed: int, p: float,
                  gamma: float = 1.0, xi_choices=(0.25, 0.5, 0.75),
                  a_choices=(0.25, 0.5, 0.75)) -> list[Lemma41Verdict]:
    """Randomized (vertex, rho, xi, a) sweep with intrinsic theta = omega.

    Cylinders are drawn inside the grid so that both the theta=1 indicator
    cylinder and the intrinsic hypothesis cylinder fit; the conclusion radius
    is a quarter of the hypothesis radius, mirroring the 2*rho -> rho/2
    shrinkage of the lemma statement.
    """
    rng = np.random.default_rng(seed)
    g = fld.grid
    box = (g.nodes_per_axis - 1) * g.h
    t_span = g.n_steps * g.dt
    rho_max = min(box / 2.0, math.sqrt(t_span * 0.9))
    rho_min = max(6 * g.h, rho_max / 8.0)
    verdicts = []
    attempts = 0
    while len(verdicts) < n_combos and attempts < 200 * n_combos:
        attempts += 1
        rho = float(rng.uniform(rho_min, rho_max))
        y = tuple(
            float(rng.uniform(g.origin[d] + rho / 2, g.origin[d] + box - rho / 2))
            for d in range(g.dim)
        )
        height = rho**2  # the theta=1 indicator cylinder is usually binding
        if g.t0 + height >= g.t_end:
            continue
        s = float(rng.uniform(g.t0 + height, g.t_end))
        xi = float(rng.choice(xi_choices))
        a = float(rng.choice(a_choices))
        mu_m, mu_p = _extrema(fld, ParabolicCylinder(y, s, rho, 1.0))
        w = mu_p - mu_m
        theta = w if w > 0 else 1.0
        con = ParabolicCylinder(y, s, rho / 4.0, theta)
        if not con.node_mask(fld.grid).any():
            continue  # intrinsic height below dt: conclusion would be vacuous
        try:
            v = check_lemma41(fld, (y, s), rho, rho / 4.0, theta, xi, a, p, gamma)
        except (OutOfDomainError, EmptyRegionError):
            continue
        verdicts.append(v)
    if len(verdicts) < n_combos:
        raise RuntimeError("could not place the requested number of cylinders")
    return verdicts


def lemma42_sweep(fld: ScalarField, n_combos: int, seed: int, b: float = 0.125,
                  gamma: float = 1.0, xi_choices=(0.25, 0.5, 0.75),
                  a_choices=(0.25, 0.5, 0.75)) -> list[Lemma42Verdict]:
    """Randomized sweep of the superlevel-set checker, theta = omega.

    Fields far from vanishing fail the proximity precondition at most
    vertices; those verdicts are recorded rather than skipped."""
    rng = np.random.default_rng(seed)
    g = fld.grid
    box = (g.nodes_per_axis - 1) * g.h
    t_span = g.n_steps * g.dt
    rho_max = min(box / 2.0, math.sqrt(t_span * 0.9))
    rho_min = max(6 * g.h, rho_max / 8.0)
    verdicts = []
    attempts = 0
    while len(verdicts) < n_combos and attempts < 200 * n_combos:
        attempts += 1
        rho = float(rng.uniform(rho_min, rho_max))
        y = tuple(
            float(rng.uniform(g.origin[d] + rho / 2, g.origin[d] + box - rho / 2))
            for d in range(g.dim)
        )
        if g.t0 + rho**2 >= g.t_end:
            continue
        s = float(rng.uniform(g.t0 + rho**2, g.t_end))
        xi = float(rng.choice(xi_choices))
        a = float(rng.choice(a_choices))
        mu_m, mu_p = _extrema(fld, ParabolicCylinder(y, s, rho, 1.0))
        w = mu_p - mu_m
        theta = w if w > 0 else 1.0
        con = ParabolicCylinder(y, s, rho / 2.0, theta)
        if not con.node_mask(fld.grid).any():
            continue
        try:
            v = check_lemma42(fld, (y, s), rho, rho / 2.0, theta, xi, a, b, gamma)
        except (OutOfDomainError, EmptyRegionError):
            continue
        verdicts.append(v)
    if len(verdicts) < n_combos:
        raise RuntimeError("could not place the requested number of cylinders")
    return verdicts


def write_verdicts_jsonl(path, verdicts):
    with open(path, "w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(v.to_json() + "\n")
