"""Potential functions, the free-energy gap and stationarity diagnostics.

The scalar potential splits into a closed-form energy term

    U(E) = (1/2R) * [log2(sigma2+E) - E/((sigma2+E) ln 2)]

and an entropy term S(Sigma(E)) read from the Monte-Carlo table; F = U - S.
The coupled potential sums U over rows and S over column noise levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .denoiser import EntropyTable, MmseTable
from .ensemble import CouplingMatrix, UnderlyingParams
from .state_evolution import (DEFAULT_MAX_ITERS, DEFAULT_TOL, ErrorProfile,
                              _inverse_noise_moment, basin_boundary,
                              iterate_underlying, sigma_underlying)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class PotentialCurve:
    E_grid: np.ndarray
    F_values: np.ndarray
    U_values: np.ndarray
    S_values: np.ndarray
    stderrs: np.ndarray


@dataclass(frozen=True)
class GapReport:
    delta_F: float            # +inf when the floor attracts everything
    argmin_E: float | None
    basin_sup: float


def potential_energy_underlying(E: float, params: UnderlyingParams) -> float:
    """Closed-form energy term of the scalar potential."""
    if E < 0:
        raise ValueError("MSE must be nonnegative")
    s2e = params.sigma2 + E
    return (math.log2(s2e) - E / (s2e * LN2)) / (2.0 * params.R)


def potential_underlying(E: float, params: UnderlyingParams,
                         entropy_table: EntropyTable) -> float:
    return potential_energy_underlying(E, params) - entropy_table(sigma_underlying(E, params))


def potential_curve(params: UnderlyingParams, entropy_table: EntropyTable,
                    E_grid) -> PotentialCurve:
    E = np.asarray(E_grid, dtype=float)
    U = np.array([potential_energy_underlying(e, params) for e in E])
    sig = np.sqrt(params.R * (params.sigma2 + E))
    S = np.asarray(entropy_table(sig), dtype=float)
    err = np.array([entropy_table.stderr_at(s) for s in sig])
    return PotentialCurve(E_grid=E, F_values=U - S, U_values=U, S_values=S, stderrs=err)


def free_energy_gap(params: UnderlyingParams, tables, grid_size: int = 512,
                    tol: float = DEFAULT_TOL,
                    max_iters: int = DEFAULT_MAX_ITERS) -> GapReport:
    """Infimum of F(E) - F(floor) over starts the floor does not attract.

    tables is the (mmse_table, entropy_table) pair.  When the basin is the
    whole domain the infimum runs over the empty set and the gap is +inf.
    """
    mmse_table, entropy_table = tables
    E0 = iterate_underlying(0.0, params, mmse_table, tol, max_iters).final
    Ebar = basin_boundary(params, mmse_table, tol, max_iters=max_iters)
    if Ebar >= 1.0:
        return GapReport(delta_F=math.inf, argmin_E=None, basin_sup=1.0)

    def F(E):
        return potential_underlying(float(E), params, entropy_table)

    grid = np.linspace(Ebar, 1.0, grid_size)
    vals = np.array([F(e) for e in grid])
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid_size - 1)]
    best_E, best_F = grid[k], vals[k]
    if hi > lo:
        res = minimize_scalar(F, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        if res.fun < best_F:
            best_E, best_F = float(res.x), float(res.fun)
    return GapReport(delta_F=best_F - F(E0), argmin_E=best_E, basin_sup=Ebar)


def potential_coupled(profile: ErrorProfile, J: CouplingMatrix,
                      params: UnderlyingParams, tables) -> float:
    """Row energies minus column entropies; unnormalized block sum."""
    _, entropy_table = tables
    U = sum(potential_energy_underlying(float(e), params) for e in profile.values)
    sigma_cols = _inverse_noise_moment(profile.values, J.J, params) ** -0.5
    S = float(np.sum(entropy_table(sigma_cols)))
    return U - S


def potential_large_B(E: float, params: UnderlyingParams) -> float:
    """Limit of the potential as the section size grows, closed form."""
    sig2 = params.R * (params.sigma2 + E)
    return potential_energy_underlying(E, params) - max(0.0, 1.0 - 1.0 / (2.0 * LN2 * sig2))


def stationarity_residual(E_fixed: float, params: UnderlyingParams,
                          entropy_table: EntropyTable, h: float = 1e-3) -> float:
    """|finite-difference slope of F| at a claimed fixed point.

    Centered step of size h, one-sided at the domain boundary.  With a
    common-random-number table the MC noise in the difference is the
    adjacent-node difference noise, not two independent errors.
    """
    def F(E):
        return potential_underlying(E, params, entropy_table)

    if E_fixed - h < 0.0:
        return abs(F(E_fixed + h) - F(E_fixed)) / h
    if E_fixed + h > 1.0:
        return abs(F(E_fixed) - F(E_fixed - h)) / h
    return abs(F(E_fixed + h) - F(E_fixed - h)) / (2.0 * h)
