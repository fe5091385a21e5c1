import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from fracheat.kernels import FracParams, QuadratureSpec, dtn_constant
from fracheat.grids import ParabolicGrid, sample_scalar
from fracheat.extension import CoefficientField, solve_extension
from fracheat.dtn import (
    extract_dtn,
    steady_profile,
    cosine_extension_data,
    exponential_extension_data,
    dtn_vs_direct,
)


def shooting_profile_oracle(s, xi, ymax=None):
    """Independent oracle for the decaying radial profile: integrate the
    flux-variable system phi' = y^-a psi, psi' = xi^2 y^a phi from exact
    series starts at a regular point and pick the decaying combination by
    linearity.

    The regular basis solution is sum c_k y^2k with
    c_(k+1) = xi^2 c_k / ((2k+2)(2k+1+a)); the singular one (unit flux at 0)
    is sum d_k y^(1-a+2k) with d_0 = 1/(1-a) and
    d_(k+1) = xi^2 d_k / ((2k+2)(2k+3-a)).
    """
    a = 1.0 - 2.0 * s
    if ymax is None:
        ymax = 14.0 / xi
    y_start = 0.05 / xi

    def series_start(kind):
        phi0 = psi0 = 0.0
        if kind == "regular":
            c, m = 1.0, 0.0
            for _ in range(40):
                phi0 += c * y_start ** m
                psi0 += c * m * y_start ** (m - 1.0 + a)
                c = xi * xi * c / ((m + 2.0) * (m + 1.0 + a))
                m += 2.0
        else:
            c, m = 1.0 / (1.0 - a), 1.0 - a
            for _ in range(40):
                phi0 += c * y_start ** m
                psi0 += c * m * y_start ** (m - 1.0 + a)
                c = xi * xi * c / ((m + 2.0) * (m + 1.0 + a))
                m += 2.0
        return [phi0, psi0]

    def rhs(y, v):
        return [y ** (-a) * v[1], xi * xi * y ** a * v[0]]

    kw = dict(rtol=1e-11, atol=1e-13, dense_output=True, method="LSODA")
    sol1 = solve_ivp(rhs, (y_start, ymax), series_start("regular"), **kw)
    sol2 = solve_ivp(rhs, (y_start, ymax), series_start("singular"), **kw)
    B = -sol1.sol(ymax)[0] / sol2.sol(ymax)[0]

    def phi(y):
        y = np.maximum(np.asarray(y, dtype=float), y_start)
        return sol1.sol(y)[0] + B * sol2.sol(y)[0]

    return phi, float(B)   # B = lim y^a phi' at 0


class TestSteadyProfile:
    @pytest.mark.parametrize("s,xi", [(0.6, 1.0), (0.75, 2.0), (0.9, 1.0)])
    def test_matches_shooting_oracle(self, s, xi):
        p = FracParams(s=s)
        phi, flux0 = steady_profile(p, xi)
        phi_o, flux0_o = shooting_profile_oracle(s, xi)
        ys = np.linspace(0.06 / xi, 6.0 / xi, 40)   # above the series start
        assert np.max(np.abs(phi(ys) - phi_o(ys))) < 2e-4
        assert flux0 == pytest.approx(flux0_o, rel=2e-4)

    @pytest.mark.parametrize("s", [0.6, 0.75, 0.9])
    def test_flux_matches_spectral_symbol(self, s):
        # -c_s lim y^a phi' = xi^(2s)
        p = FracParams(s=s)
        for xi in (1.0, 2.0):
            _, flux0 = steady_profile(p, xi)
            assert -dtn_constant(s) * flux0 == pytest.approx(
                xi ** (2 * s), rel=1e-5)

    def test_profile_boundary_value_and_decay(self):
        phi, _ = steady_profile(FracParams(s=0.75), 1.0)
        assert phi(0.0) == pytest.approx(1.0)
        assert phi(12.0) < 1e-3


class TestExtractDtn:
    def test_linear_field_zero_flux(self):
        p = FracParams(s=0.75)
        g = ParabolicGrid(p, nt=10, nx=16, ny=20)
        U = sample_scalar(g, lambda t, x, y: 1.0 + 2.0 * x + 0.0 * t)
        ext = extract_dtn(U, p)
        assert np.max(np.abs(ext.values)) < 1e-9

    def test_layer_guards(self):
        p = FracParams(s=0.75)
        g = ParabolicGrid(p, nt=4, nx=6, ny=8)
        U = sample_scalar(g, lambda t, x, y: 0.0 * t)
        with pytest.raises(ValueError):
            extract_dtn(U, p, layers=2)

    @pytest.mark.parametrize("s,ny", [(0.6, 48), (0.9, 256)])
    def test_steady_cosine_recovers_symbol(self, s, ny):
        # the boundary layer sharpens with s (profile ~ 1 + c y^(2-2s)),
        # so the larger order needs more y cells for the same accuracy
        p = FracParams(s=s)
        xi = 1.0
        g = ParabolicGrid(p, nt=24, nx=48, ny=ny)
        data = cosine_extension_data(p, xi)
        U = solve_extension(g, CoefficientField.identity(1), f=data["f"],
                            lateral_dirichlet=data["lateral"],
                            initial=data["initial"])
        ext = extract_dtn(U, p)
        X = g.x_centers[0]
        expect = xi ** (2 * s) * np.cos(xi * X)
        mid = ext.values[g.nt // 2]
        ok = ~ext.flagged[g.nt // 2]
        rel = np.max(np.abs(mid[ok] - expect[ok])) / np.max(np.abs(expect))
        assert rel < 0.02

    def test_exponential_extension_recovers_exp(self):
        p = FracParams(s=0.75)
        g = ParabolicGrid(p, nt=32, nx=24, ny=48)
        data = exponential_extension_data(p)
        U = solve_extension(g, CoefficientField.identity(1), f=data["f"],
                            lateral_dirichlet=data["lateral"],
                            initial=data["initial_factory"](g.t_nodes[0]))
        ext = extract_dtn(U, p)
        # compare on the later half of the time window, interior cells
        for level in range(g.nt // 2, g.nt + 1):
            ok = ~ext.flagged[level]
            expect = math.exp(g.t_nodes[level])
            rel = np.max(np.abs(ext.values[level][ok] - expect)) / expect
            assert rel < 0.02

    def test_linearity_of_extraction(self):
        p = FracParams(s=0.75)
        g = ParabolicGrid(p, nt=8, nx=12, ny=24)
        U1 = sample_scalar(g, lambda t, x, y: np.cos(x) * (1 + y ** (1 - p.a)))
        U2 = sample_scalar(g, lambda t, x, y: x * y ** (1 - p.a) + 0.0 * t)
        both = sample_scalar(
            g, lambda t, x, y: 2.0 * np.cos(x) * (1 + y ** (1 - p.a))
            - 3.0 * (x * y ** (1 - p.a)) + 0.0 * t)
        e1 = extract_dtn(U1, p).values
        e2 = extract_dtn(U2, p).values
        eb = extract_dtn(both, p).values
        assert np.allclose(eb, 2.0 * e1 - 3.0 * e2, atol=1e-8)

    def test_sign_at_interior_minimum(self):
        # at a strict interior minimum of the trace the operator value of
        # the constant-coefficient extension family is nonpositive
        p = FracParams(s=0.75)
        xi = 1.0
        g = ParabolicGrid(p, nt=16, nx=32, ny=32)
        data = cosine_extension_data(p, xi, amplitude=-1.0)
        U = solve_extension(g, CoefficientField.identity(1), f=data["f"],
                            lateral_dirichlet=data["lateral"],
                            initial=data["initial"])
        ext = extract_dtn(U, p)
        trace = g.trace_at_zero(U.values)[g.nt // 2]
        i_min = int(np.argmin(trace))
        assert 0 < i_min < g.nx - 1
        assert ext.values[g.nt // 2, i_min] <= 1e-6

    def test_flagging_marks_lateral_boundary(self):
        p = FracParams(s=0.75)
        g = ParabolicGrid(p, nt=6, nx=10, ny=16)
        U = sample_scalar(g, lambda t, x, y: np.cos(x) + 0.0 * t)
        ext = extract_dtn(U, p)
        assert np.all(ext.flagged[:, 0])
        assert np.all(ext.flagged[:, -1])


class TestDualRoute:
    def test_constant_u_both_routes_vanish(self):
        p = FracParams(s=0.75)
        g = ParabolicGrid(p, nt=12, nx=16, ny=16)
        U = solve_extension(g, CoefficientField.identity(1),
                            lateral_dirichlet=lambda t, x, y: 5.0 + 0.0 * x,
                            initial=lambda x, y: 5.0 + 0.0 * x)
        ext = extract_dtn(U, p)
        assert np.max(np.abs(ext.values[:, 1:-1])) < 1e-8

    def test_cosine_dual_route_small_grid(self):
        p = FracParams(s=0.75)
        g = ParabolicGrid(p, nt=32, nx=32, ny=32)
        rep = dtn_vs_direct(p, 1.0, g)
        assert rep["sup_extension_vs_direct"] < 0.05
        assert rep["sup_extension_vs_closed"] < 0.05
        assert rep["sup_direct_vs_closed"] < 0.01
        assert rep["cells_compared"] > 0

    def test_discrepancy_decreases_under_refinement(self):
        p = FracParams(s=0.6)
        rep1 = dtn_vs_direct(p, 2.0, ParabolicGrid(p, nt=24, nx=24, ny=24))
        rep2 = dtn_vs_direct(p, 2.0, ParabolicGrid(p, nt=48, nx=48, ny=48),
                             qspec=QuadratureSpec().refined())
        assert rep2["sup_extension_vs_direct"] < rep1["sup_extension_vs_direct"]
