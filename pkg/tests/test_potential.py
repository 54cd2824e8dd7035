import math

import numpy as np
import pytest

from scse import (CoupledParams, ErrorProfile, MCConfig, UnderlyingParams,
                  build_coupling_matrix, build_tables, free_energy_gap,
                  iterate_underlying, potential_coupled, potential_curve,
                  potential_energy_underlying, potential_large_B,
                  potential_underlying, rectangular_design,
                  sigma_underlying, stationarity_residual)

from oracles import (b2_entropy_quad, fd_slope, grid_argmin,
                     large_b_potential_direct)

SIGMA2 = 1.0 / 15.0
LN2 = math.log(2.0)


def test_energy_term_derivative_identity(params_b4):
    # dU/dE = E / (2 R ln2 (sigma2+E)^2), a closed-form consequence of the
    # energy expression; checked by centered differences.
    for E in (0.05, 0.3, 0.8):
        slope = fd_slope(lambda x: potential_energy_underlying(x, params_b4), E, 1e-6)
        want = E / (2 * params_b4.R * LN2 * (params_b4.sigma2 + E) ** 2)
        assert slope == pytest.approx(want, rel=1e-5)
    assert potential_energy_underlying(0.0, params_b4) == pytest.approx(
        math.log2(params_b4.sigma2) / (2 * params_b4.R))
    with pytest.raises(ValueError):
        potential_energy_underlying(-0.2, params_b4)


def test_potential_underlying_matches_quadrature(params_b2, tables_b2):
    _, ent_t = tables_b2
    for E in (0.1, 0.4, 0.9):
        sig = sigma_underlying(E, params_b2)
        want = potential_energy_underlying(E, params_b2) - b2_entropy_quad(sig)
        got = potential_underlying(E, params_b2, ent_t)
        assert got == pytest.approx(want, abs=max(5 * ent_t.stderr_at(sig), 2e-3))


def test_potential_curve_identity(params_b2, tables_b2):
    grid = np.linspace(0.0, 1.0, 33)
    curve = potential_curve(params_b2, tables_b2[1], grid)
    np.testing.assert_allclose(curve.F_values, curve.U_values - curve.S_values,
                               atol=1e-15)
    assert (curve.stderrs >= 0).all()
    assert curve.E_grid.shape == curve.F_values.shape == (33,)


def test_gap_infinite_when_basin_is_everything(params_b2, tables_b2):
    gap = free_energy_gap(params_b2, tables_b2)
    assert gap.delta_F == math.inf
    assert gap.basin_sup == 1.0
    assert gap.argmin_E is None


def test_gap_positive_inside_window(params_b4, tables_b4):
    gap = free_energy_gap(params_b4, tables_b4)
    assert 0.0 < gap.delta_F < 1.0
    assert 0.0 < gap.basin_sup < 1.0
    assert gap.basin_sup < gap.argmin_E <= 1.0
    # grid oracle on the same table-backed potential
    E_best, F_best = grid_argmin(
        lambda E: potential_underlying(E, params_b4, tables_b4[1]),
        gap.basin_sup, 1.0, 4001)
    E0 = iterate_underlying(0.0, params_b4, tables_b4[0]).final
    want = F_best - potential_underlying(E0, params_b4, tables_b4[1])
    # the solver refines past the oracle grid, so it can only be lower
    assert gap.delta_F <= want + 1e-12
    assert gap.delta_F >= want - 1e-4
    assert gap.argmin_E == pytest.approx(E_best, abs=1e-3)


def test_gap_sign_flips_across_potential_threshold(params_b4, mc_small):
    gaps = {}
    for R in (1.55, 1.72):
        p = params_b4.with_rate(R)
        tabs = build_tables(p, mc_small, n_points=96)
        gaps[R] = free_energy_gap(p, tabs).delta_F
    assert gaps[1.55] > 0.0
    assert gaps[1.72] < 0.0


def test_potential_coupled_sums_rows_and_columns(params_b4, tables_b4):
    J = build_coupling_matrix(CoupledParams(params_b4, 24, 1, rectangular_design()))
    vals = np.linspace(0.05, 0.6, 24)
    prof = ErrorProfile(vals, 24, 1)
    got = potential_coupled(prof, J, params_b4, tables_b4)
    U = sum(potential_energy_underlying(float(e), params_b4) for e in vals)
    S = 0.0
    for c in range(24):
        m = (J.J[:, c] / (params_b4.R * (params_b4.sigma2 + vals))).mean()
        S += tables_b4[1](m ** -0.5)
    assert got == pytest.approx(U - S, abs=1e-10)


def test_constant_profile_coupled_potential_is_scalar_sum(params_b4, tables_b4):
    # column means of J are 1 in the interior, so a constant profile sees the
    # scalar effective noise in every interior column
    J = build_coupling_matrix(CoupledParams(params_b4, 40, 2, rectangular_design()))
    prof = ErrorProfile(np.full(40, 0.3), 40, 2)
    sig = sigma_underlying(0.3, params_b4)
    got = potential_coupled(prof, J, params_b4, tables_b4)
    per_block = potential_underlying(0.3, params_b4, tables_b4[1])
    # edge columns deviate; compare per-block value on the interior only
    interior = J.interior_columns()
    S_edge = 0.0
    for c in np.setdiff1d(np.arange(40), interior):
        m = (J.J[:, c] / (params_b4.R * (params_b4.sigma2 + prof.values))).mean()
        S_edge += tables_b4[1](m ** -0.5)
    want = 40 * potential_energy_underlying(0.3, params_b4) \
        - interior.size * tables_b4[1](sig) - S_edge
    assert got == pytest.approx(want, abs=1e-10)
    assert got == pytest.approx(40 * per_block, abs=0.5)


def test_large_B_potential_closed_form(params_b4):
    for E in (0.0, 0.1, 0.5, 1.0):
        assert potential_large_B(E, params_b4) == pytest.approx(
            large_b_potential_direct(E, params_b4.R, params_b4.sigma2), abs=1e-14)


def test_large_B_potential_kink_continuity():
    # the entropy branch switches where 2 ln2 R (sigma2+E) = 1
    p = UnderlyingParams(B=4, R=1.2, sigma2=SIGMA2)
    E_kink = 1.0 / (2 * LN2 * p.R) - p.sigma2
    assert 0 < E_kink < 1
    below = potential_large_B(E_kink - 1e-9, p)
    above = potential_large_B(E_kink + 1e-9, p)
    assert below == pytest.approx(above, abs=1e-7)


def test_stationarity_residual_contrast(params_b4, tables_b4):
    mmse_t, ent_t = tables_b4
    E_fix = iterate_underlying(1.0, params_b4, mmse_t).final
    at_fix = stationarity_residual(E_fix, params_b4, ent_t, h=5e-3)
    away = stationarity_residual(0.8, params_b4, ent_t, h=5e-3)
    assert away > 5 * at_fix
    # one-sided fallback at the boundary stays finite
    assert math.isfinite(stationarity_residual(0.0, params_b4, ent_t, h=5e-3))
    assert math.isfinite(stationarity_residual(1.0, params_b4, ent_t, h=5e-3))
