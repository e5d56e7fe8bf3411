import math

import numpy as np
import pytest

from logdiff.diagnostics import (
    IndicatorCurve,
    audit_energy_sub,
    audit_energy_super,
    audit_log_estimate,
    envelope,
    indicator,
    indicator_curve,
    oracle_indicator_curve,
    oracle_osc_curve,
    osc_curve,
    powerlaw_fit,
    psi,
    so_indicator,
    theorem1_bound,
    validate_p,
)
from logdiff.errors import ExponentRangeError, OutOfDomainError
from logdiff.exact import ExplicitSolution
from logdiff.geometry import (
    ParabolicCylinder,
    ScalarField,
    SpaceTimeGrid,
    make_cutoff,
    make_cylinder,
)


def grid2d(nodes=21, steps=10, lo=-0.5, hi=0.5, t1=1.0):
    return SpaceTimeGrid.from_box(2, lo, hi, nodes, 0.0, t1, steps)


def const_field(grid, c=1.0):
    return ScalarField(grid, np.full(grid.shape, float(c)))


def explog_field(grid):
    """u = exp(2*x1): |D ln u| = 2 exactly, even for the discrete stencils."""
    X = grid.meshgrid()
    slab = np.exp(2.0 * X[0])
    return ScalarField(grid, np.broadcast_to(slab, grid.shape).copy())


class TestValidateP:
    def test_too_small_rejected(self):
        with pytest.raises(ExponentRangeError):
            validate_p(3, 2.5)

    def test_override(self):
        validate_p(3, 2.0, allow_low_p=True)

    def test_one_dimensional_allowance(self):
        validate_p(1, 2.0)
        validate_p(1, 1.0)
        with pytest.raises(ExponentRangeError):
            validate_p(1, 0.5)


class TestIndicator:
    def test_constant_field_zero(self):
        g = grid2d()
        f = const_field(g, 2.0)
        assert indicator(f, ((0.0, 0.0), 1.0), 0.5, 3.0) == 0.0

    def test_unit_gradient_scale(self):
        g = grid2d()
        f = explog_field(g)
        for p in (2.5, 3.0, 4.0):
            val = indicator(f, ((0.0, 0.0), 1.0), 0.5, p)
            assert val == pytest.approx(1.0, rel=1e-12)

    def test_out_of_domain(self):
        g = grid2d()
        with pytest.raises(OutOfDomainError):
            indicator(const_field(g), ((0.0, 0.0), 1.0), 1.5, 3.0)

    def test_curve_monotone_envelope(self):
        g = grid2d()
        f = explog_field(g)
        curve = indicator_curve(f, ((0.0, 0.0), 1.0), [0.4, 0.2, 0.1], 3.0)
        assert np.all(np.diff(curve.envelope) <= 1e-15)  # non-increasing with radius


class TestEnvelope:
    def test_running_sup(self):
        c = IndicatorCurve((0.0,), 0.0, 3.0, np.array([0.4, 0.2, 0.1]),
                           np.array([0.3, 0.1, 0.2]))
        env = envelope(c).envelope
        assert np.allclose(env, [0.3, 0.2, 0.2])

    def test_monotone_unchanged(self):
        c = IndicatorCurve((0.0,), 0.0, 3.0, np.array([0.4, 0.2, 0.1]),
                           np.array([0.3, 0.2, 0.1]))
        assert np.allclose(envelope(c).envelope, c.values)

    def test_idempotent(self):
        c = IndicatorCurve((0.0,), 0.0, 3.0, np.array([0.4, 0.2, 0.1]),
                           np.array([0.1, 0.3, 0.2]))
        e1 = envelope(c)
        e2 = envelope(IndicatorCurve(c.vertex_x, c.vertex_t, c.p, c.radii, e1.envelope))
        assert np.allclose(e1.envelope, e2.envelope)

    def test_single_radius(self):
        c = IndicatorCurve((0.0,), 0.0, 3.0, np.array([0.4]), np.array([0.7]))
        assert np.allclose(envelope(c).envelope, [0.7])


class TestSoIndicator:
    def test_constant_zero(self):
        g = grid2d()
        th = so_indicator(const_field(g), ((0.0, 0.0), 1.0), 3.0, [0.4, 0.2])
        assert np.all(th.values == 0.0)

    def test_identity_with_indicator_power(self):
        g = grid2d()
        f = explog_field(g)
        radii = [0.4, 0.2, 0.1]
        th = so_indicator(f, ((0.0, 0.0), 1.0), 3.0, radii)
        ind = indicator_curve(f, ((0.0, 0.0), 1.0), radii, 3.0)
        assert np.allclose(th.values, ind.values**3.0, rtol=1e-12)

    def test_scale_value(self):
        g = grid2d()
        f = explog_field(g)
        th = so_indicator(f, ((0.0, 0.0), 1.0), 3.0, [0.5])
        assert th.values[0] == pytest.approx(1.0, rel=1e-12)


class TestOscCurve:
    def test_constant_zero(self):
        g = grid2d()
        pts = osc_curve(const_field(g), ((0.0, 0.0), 1.0), [0.4, 0.2], 1.0)
        assert [v for _, v in pts] == [0.0, 0.0]

    def test_monotone(self, field2d):
        pts = osc_curve(field2d, ((0.5, 0.5), 0.25), [0.4, 0.2, 0.1], 1.0)
        vals = [v for _, v in pts]
        assert vals == sorted(vals, reverse=True)

    def test_out_of_domain_radius_skipped(self, field2d):
        with pytest.warns(UserWarning, match="skipped"):
            pts = osc_curve(field2d, ((0.5, 0.5), 0.25), [5.0, 0.2], 1.0)
        assert len(pts) == 1

    def test_oracle_osc_to_zero_at_extinction(self):
        sol = ExplicitSolution(3, 1.0, 1.0)
        pts = oracle_osc_curve(sol, ((0.0, 0.0, 0.0), 1.0), [0.4, 0.2, 0.1, 0.05], 1.0)
        vals = [v for _, v in pts]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-3 * vals[0]


class TestTheorem1Bound:
    def test_at_base_radius(self):
        assert theorem1_bound(1.0, 0.5, 0.5, 0.5, 0.5, 4.0, 0.0) == pytest.approx(4.0)

    def test_arithmetic(self):
        val = theorem1_bound(1.0, 0.01, 1.0, 0.5, 0.5, 4.0, 0.0)
        assert val == pytest.approx(4.0 * 0.01**0.25, rel=1e-12)
        assert val == pytest.approx(1.2649, abs=1e-4)

    def test_indicator_dominates(self):
        val = theorem1_bound(0.0, 0.1, 1.0, 0.5, 0.5, 4.0, 0.3)
        assert val == pytest.approx(4.0 * 0.3)

    @pytest.mark.parametrize("kwargs", [
        dict(omega=1, r=2.0, R0=1.0, mu=0.5, alpha=0.5, Cbar=4.0, I_tilde_at=0.0),
        dict(omega=1, r=0.1, R0=1.0, mu=1.5, alpha=0.5, Cbar=4.0, I_tilde_at=0.0),
        dict(omega=1, r=0.1, R0=1.0, mu=0.5, alpha=0.5, Cbar=0.5, I_tilde_at=0.0),
    ])
    def test_parameter_ranges(self, kwargs):
        with pytest.raises(ValueError):
            theorem1_bound(**kwargs)


class TestPowerlawFit:
    def test_exact_square(self):
        x = np.array([1.0, 2.0, 4.0])
        fit = powerlaw_fit(np.c_[x, x**2])
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_noisy_three_halves(self):
        rng = np.random.default_rng(7)
        x = np.geomspace(0.1, 10, 40)
        y = 5 * x**1.5 * (1 + 0.01 * rng.standard_normal(40))
        fit = powerlaw_fit(np.c_[x, y])
        assert abs(fit.slope - 1.5) < 0.05

    def test_constant(self):
        x = np.array([1.0, 2.0, 3.0])
        fit = powerlaw_fit(np.c_[x, np.full(3, 2.0)])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            powerlaw_fit([(1.0, 1.0), (2.0, -1.0), (3.0, 2.0)])

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            powerlaw_fit([(1.0, 1.0), (2.0, 2.0)])


class TestOracleIndicator:
    def test_lambda_zero_scale_invariance(self):
        # p < N: the normalized energy is radius-independent
        sol = ExplicitSolution(3, 0.0, 1.0)
        radii = list(np.geomspace(0.5, 0.05, 6))
        cur = oracle_indicator_curve(sol, ((0.0, 0.0, 0.0), 0.5), radii, 2.75,
                                     nodes_per_axis=16, n_slices=8)
        assert cur.values.max() / cur.values.min() < 1.05

    def test_lambda_positive_decay_at_least_declared_rate(self):
        # the classical bound I <= C r^(4/((N-2)p)+2) is an upper bound: the
        # measured decay must be at least that fast (it is in fact r^6)
        sol = ExplicitSolution(3, 1.0, 1.0)
        radii = list(np.geomspace(0.4, 0.04, 6))
        cur = oracle_indicator_curve(sol, ((0.0, 0.0, 0.0), 1.0), radii, 3.0,
                                     nodes_per_axis=16, n_slices=12)
        fit = powerlaw_fit(np.c_[cur.radii, cur.values])
        assert fit.slope >= 4.0 / ((3 - 2) * 3.0) + 2 - 0.1
        assert np.all(np.diff(cur.values) < 0)  # decreasing with the ladder


class TestPsi:
    def test_zero_when_not_truncated(self):
        assert psi(0.5, H=1.0, k=1.0, c=0.5) == 0.0

    def test_cap_value(self):
        assert psi(2.0, H=1.0, k=1.0, c=0.5) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_bounded_by_log_H_over_c(self):
        vals = psi(np.linspace(0, 3, 50), H=2.0, k=1.0, c=0.25)
        assert np.all(vals <= math.log(2.0 / 0.25) + 1e-12)
        assert vals.max() == pytest.approx(math.log(2.0 / 0.25), rel=1e-12)

    def test_c_range(self):
        with pytest.raises(ValueError):
            psi(1.0, H=1.0, k=0.5, c=1.5)
        with pytest.raises(ValueError):
            psi(1.0, H=1.0, k=0.5, c=0.0)


class TestAuditEnergySub:
    def setup_method(self):
        self.g = grid2d(nodes=25, steps=10)
        self.cyl = make_cylinder(((0.0, 0.0), 1.0), 0.7, 1.0)

    def test_level_above_field_all_zero(self):
        f = const_field(self.g, 1.0)
        z = make_cutoff(self.g, self.cyl, 0.5)
        rep = audit_energy_sub(f, self.cyl, 2.0, z)
        assert rep.lhs_total == 0.0 and rep.rhs_total == 0.0
        assert rep.empirical_ratio == 0.0

    def test_constant_field_closed_form(self):
        c, k = 2.0, 0.5
        f = const_field(self.g, c)
        z = make_cutoff(self.g, self.cyl, 0.5, profile="space_only")
        rep = audit_energy_sub(f, self.cyl, k, z)
        # independent evaluation of the sup term: (c-k)^2 * sum(zeta^2) * h^N
        mask = self.cyl.node_mask(self.g)
        space = mask[-1]
        expected_sup = (c - k) ** 2 * float((z.values[-1][space] ** 2).sum()) * self.g.h**2
        assert rep.lhs_terms["sup_time"] == pytest.approx(expected_sup, rel=1e-12)
        assert rep.rhs_terms["zeta_t"] == 0.0
        assert rep.lhs_terms["sup_time"] == pytest.approx(rep.rhs_terms["initial"], rel=1e-12)
        assert rep.lhs_terms["grad"] == pytest.approx(rep.rhs_terms["grad_zeta"], rel=1e-12)
        assert rep.empirical_ratio == pytest.approx(1.0, rel=1e-12)

    def test_requires_positive_level(self):
        f = const_field(self.g, 1.0)
        z = make_cutoff(self.g, self.cyl, 0.5)
        with pytest.raises(ValueError, match="k > 0"):
            audit_energy_sub(f, self.cyl, 0.0, z)

    def test_solver_field_finite(self, field2d):
        cyl = make_cylinder(((0.5, 0.5), 0.25), 0.6, 1.0)
        z = make_cutoff(field2d.grid, cyl, 0.5)
        k = float(np.median(field2d.values[cyl.node_mask(field2d.grid)]))
        rep = audit_energy_sub(field2d, cyl, k, z)
        assert np.isfinite(rep.empirical_ratio)


class TestAuditEnergySuper:
    def setup_method(self):
        self.g = grid2d(nodes=25, steps=10)
        self.cyl = make_cylinder(((0.0, 0.0), 1.0), 0.7, 1.0)

    def test_level_below_field_all_zero(self):
        f = const_field(self.g, 1.0)
        z = make_cutoff(self.g, self.cyl, 0.5)
        rep = audit_energy_super(f, self.cyl, 0.5, z)
        assert rep.lhs_total == 0.0 and rep.rhs_total == 0.0

    def test_constant_field_closed_form(self):
        c, k = 1.0, 1.5
        f = const_field(self.g, c)
        z = make_cutoff(self.g, self.cyl, 0.5, profile="space_only")
        rep = audit_energy_super(f, self.cyl, k, z)
        mask = self.cyl.node_mask(self.g)
        expected_sup = 0.5 * (k - c) ** 2 * float((z.values[-1][mask[-1]] ** 2).sum()) * self.g.h**2
        assert rep.lhs_terms["sup_time"] == pytest.approx(expected_sup, rel=1e-12)
        assert rep.rhs_terms["zeta_t"] == 0.0
        assert rep.rhs_terms["gradlog_cross"] == pytest.approx(0.0, abs=1e-10)
        assert rep.lhs_terms["grad"] == pytest.approx(rep.rhs_terms["grad_zeta"], rel=1e-12)
        assert rep.empirical_ratio == pytest.approx(1.0, rel=1e-10)

    def test_solver_field_finite(self, field2d):
        cyl = make_cylinder(((0.5, 0.5), 0.25), 0.6, 1.0)
        z = make_cutoff(field2d.grid, cyl, 0.5)
        k = float(np.quantile(field2d.values[cyl.node_mask(field2d.grid)], 0.25))
        rep = audit_energy_super(field2d, cyl, k, z)
        assert np.isfinite(rep.empirical_ratio)


class TestAuditLogEstimate:
    def setup_method(self):
        self.g = grid2d(nodes=25, steps=10)
        self.cyl = make_cylinder(((0.0, 0.0), 1.0), 0.7, 1.0)

    def test_level_above_field_zero_report(self):
        f = const_field(self.g, 1.0)
        z = make_cutoff(self.g, self.cyl, 0.5, profile="space_only")
        rep = audit_log_estimate(f, self.cyl, 2.0, 0.5, z)
        assert rep.lhs_total == 0.0 and rep.rhs_total == 0.0
        assert rep.empirical_ratio == 0.0

    def test_constant_field_sup_equals_initial(self):
        f = const_field(self.g, 2.0)
        z = make_cutoff(self.g, self.cyl, 0.5, profile="space_only")
        rep = audit_log_estimate(f, self.cyl, 1.0, 0.25, z)
        assert rep.lhs_terms["sup_time"] == pytest.approx(rep.rhs_terms["initial"], rel=1e-12)
        assert rep.empirical_ratio <= 1.0

    def test_rejects_time_varying_cutoff(self):
        f = const_field(self.g, 2.0)
        z = make_cutoff(self.g, self.cyl, 0.5, profile="space_time")
        with pytest.raises(ValueError, match="independent of t"):
            audit_log_estimate(f, self.cyl, 1.0, 0.25, z)

    def test_solver_field_claim_parameters(self, field2d):
        # levels used by the time-propagation argument: k = mu+ - w/4, c = w/2^(n+2)
        cyl = make_cylinder(((0.5, 0.5), 0.25), 0.6, 1.0)
        sel = field2d.values[cyl.node_mask(field2d.grid)]
        mu_p, w = float(sel.max()), float(sel.max() - sel.min())
        z = make_cutoff(field2d.grid, cyl, 0.5, profile="space_only")
        rep = audit_log_estimate(field2d, cyl, mu_p - w / 4, w / 2**5, z)
        assert np.isfinite(rep.empirical_ratio)
        assert rep.lhs_total > 0
