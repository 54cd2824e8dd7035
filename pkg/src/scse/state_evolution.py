"""State evolution for the scalar (underlying) and profile (coupled) systems.

The scalar recursion is E <- mmse(Sigma(E)) with Sigma(E) = sqrt(R(sigma2+E)).
The coupled recursion tracks a length-Gamma profile: each column c sees an
effective noise built from the rows it touches, the section MSE of the 4w
boundary columns is pinned to zero (the decoder knows those sections), and
the row profile is the J-weighted average of the column MSEs.  With monotone
tables every operator here is exactly monotone, componentwise, in floating
point, which the degradation and convergence arguments lean on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .denoiser import MmseTable, MonotoneTable
from .ensemble import CouplingMatrix, UnderlyingParams

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 10_000

STRICTLY_DEGRADED = "strictly_degraded"
DEGRADED_EQUAL = "degraded_equal"
INCOMPARABLE = "incomparable"
REVERSED = "reversed"


def pinned_rows(Gamma: int, w: int) -> np.ndarray:
    """0-based indices of the 3w zero rows at each end."""
    k = 3 * w
    return np.concatenate([np.arange(k), np.arange(Gamma - k, Gamma)])


def pinned_columns(Gamma: int, w: int) -> np.ndarray:
    """0-based indices of the 4w boundary columns whose sections are known."""
    k = 4 * w
    return np.concatenate([np.arange(k), np.arange(Gamma - k, Gamma)])


@dataclass(frozen=True)
class ErrorProfile:
    """Length-Gamma MSE profile for a coupled system with window w."""

    values: np.ndarray
    Gamma: int
    w: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.Gamma,):
            raise ValueError(f"profile must have length {self.Gamma}, got {v.shape}")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ValueError("profile entries must lie in [0, 1]")


def ones_profile(Gamma: int, w: int) -> ErrorProfile:
    """The worst-case start: 1 everywhere except the pinned rows."""
    v = np.ones(Gamma)
    v[pinned_rows(Gamma, w)] = 0.0
    return ErrorProfile(v, Gamma, w)


def zeros_profile(Gamma: int, w: int) -> ErrorProfile:
    return ErrorProfile(np.zeros(Gamma), Gamma, w)


@dataclass(frozen=True)
class FixedPointReport:
    final: object          # float for the scalar system, ErrorProfile for coupled
    iterations: int
    residual: float
    converged: bool
    monotone: bool = True  # iterate sequence was componentwise monotone


@dataclass(frozen=True)
class SaturatedProfile:
    """Nondecreasing envelope of a fixed-point profile (1-based r_star/r_max)."""

    values: np.ndarray
    r_star: int
    r_max: int
    E_max: float
    E0: float
    degenerate: bool = False


def sigma_underlying(E: float, params: UnderlyingParams) -> float:
    """Effective section-channel noise at MSE E."""
    if E < 0:
        raise ValueError("MSE must be nonnegative")
    return math.sqrt(params.R * (params.sigma2 + E))


def se_step_underlying(E: float, params: UnderlyingParams, table: MmseTable) -> float:
    return table(sigma_underlying(E, params))


def iterate_underlying(E_init: float, params: UnderlyingParams, table: MmseTable,
                       tol: float = DEFAULT_TOL,
                       max_iters: int = DEFAULT_MAX_ITERS) -> FixedPointReport:
    """Run the scalar recursion to a fixed point.

    Non-convergence is reported, never raised.  The sequence direction is
    fixed after the first step (the operator is monotone), so a sign flip in
    the updates marks a numerical problem and clears the monotone flag.
    """
    if not 0.0 <= E_init <= 1.0:
        raise ValueError("E_init must lie in [0, 1]")
    E = float(E_init)
    direction = 0.0
    monotone = True
    residual = math.inf
    for t in range(1, max_iters + 1):
        E_next = se_step_underlying(E, params, table)
        step = E_next - E
        if step != 0.0:
            if direction == 0.0:
                direction = math.copysign(1.0, step)
            elif math.copysign(1.0, step) != direction:
                monotone = False
        residual = abs(step)
        E = E_next
        if residual <= tol:
            return FixedPointReport(E, t, residual, True, monotone)
    return FixedPointReport(E, max_iters, residual, False, monotone)


def fixed_point_tolerance(table: MonotoneTable, params: UnderlyingParams, E0: float,
                          tol: float = DEFAULT_TOL) -> float:
    """Classification radius around a fixed point: max(10*tol, 3*table noise)."""
    return max(10.0 * tol, 3.0 * table.stderr_at(sigma_underlying(E0, params)))


def basin_boundary(params: UnderlyingParams, table: MmseTable,
                   tol: float = DEFAULT_TOL, precision: float = 1e-6,
                   max_iters: int = DEFAULT_MAX_ITERS) -> float:
    """Largest initial MSE still attracted to the floor, by bisection.

    Returns 1.0 when every start converges to the floor (the basin is the
    whole domain); otherwise the boundary to within `precision`.
    """
    E0 = iterate_underlying(0.0, params, table, tol, max_iters).final
    radius = fixed_point_tolerance(table, params, E0, tol)

    def in_basin(E_init):
        final = iterate_underlying(E_init, params, table, tol, max_iters).final
        return abs(final - E0) <= radius

    if in_basin(1.0):
        return 1.0
    lo, hi = E0, 1.0
    while hi - lo > precision:
        mid = 0.5 * (lo + hi)
        if in_basin(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _inverse_noise_moment(values: np.ndarray, J: np.ndarray, params: UnderlyingParams) -> np.ndarray:
    """Vector of (1/Gamma) sum_r J[r][c] / (R (sigma2 + E_r)) over columns c."""
    weights = 1.0 / (params.R * (params.sigma2 + values))
    return (J.T @ weights) / J.shape[0]


def sigma_coupled(profile: ErrorProfile, J: CouplingMatrix, c: int,
                  params: UnderlyingParams) -> float:
    """Effective noise of column c (1-based)."""
    if not 1 <= c <= profile.Gamma:
        raise ValueError(f"column index must be in 1..{profile.Gamma}")
    moment = _inverse_noise_moment(profile.values, J.J, params)
    return float(moment[c - 1] ** -0.5)


def se_step_coupled(profile: ErrorProfile, J: CouplingMatrix,
                    params: UnderlyingParams, table: MmseTable) -> ErrorProfile:
    """One profile update with the boundary sections pinned to zero MSE.

    Pinning acts on the section MSEs (columns); the zero rows at the profile
    level then follow from bandedness and are asserted, not enforced.
    """
    Gamma, w = profile.Gamma, profile.w
    moment = _inverse_noise_moment(profile.values, J.J, params)
    sigma_cols = moment ** -0.5
    tilde = np.asarray(table(sigma_cols), dtype=float)
    tilde[pinned_columns(Gamma, w)] = 0.0
    nxt = (J.J @ tilde) / Gamma
    rows = pinned_rows(Gamma, w)
    if np.any(nxt[rows] != 0.0):
        raise AssertionError("pinned rows came out nonzero; coupling matrix is malformed")
    return ErrorProfile(nxt, Gamma, w)


def iterate_coupled(profile_init: ErrorProfile, J: CouplingMatrix,
                    params: UnderlyingParams, table: MmseTable,
                    tol: float = DEFAULT_TOL,
                    max_iters: int = DEFAULT_MAX_ITERS) -> FixedPointReport:
    """Profile recursion to sup-norm tolerance, tracking monotonicity."""
    prof = profile_init
    direction = np.zeros(profile_init.Gamma)
    monotone = True
    residual = math.inf
    for t in range(1, max_iters + 1):
        nxt = se_step_coupled(prof, J, params, table)
        step = nxt.values - prof.values
        moving = step != 0.0
        fresh = moving & (direction == 0.0)
        direction[fresh] = np.sign(step[fresh])
        if np.any(np.sign(step[moving]) != direction[moving]):
            monotone = False
        residual = float(np.abs(step).max())
        prof = nxt
        if residual <= tol:
            return FixedPointReport(prof, t, residual, True, monotone)
    return FixedPointReport(prof, max_iters, residual, False, monotone)


def is_degraded(E, G) -> str:
    """Componentwise order of two profiles: is E at least as bad as G?"""
    a = E.values if isinstance(E, ErrorProfile) else np.asarray(E, dtype=float)
    b = G.values if isinstance(G, ErrorProfile) else np.asarray(G, dtype=float)
    if a.shape != b.shape:
        raise ValueError("profiles must have equal length")
    if np.all(a >= b):
        return STRICTLY_DEGRADED if np.any(a > b) else DEGRADED_EQUAL
    if np.all(a <= b):
        return REVERSED
    return INCOMPARABLE


def saturate_profile(fixed: ErrorProfile, E0: float,
                     shape_tol: float = 1e-6) -> SaturatedProfile:
    """Nondecreasing envelope: floor plateau, the rising segment, max plateau.

    The source must rise to its global maximum through a single segment
    (ripples up to shape_tol are tolerated); otherwise the shape is reported
    as a violation rather than silently patched.
    """
    v = fixed.values
    r_max0 = int(np.argmax(v))  # ties break toward the smallest index
    E_max = float(v[r_max0])
    if E_max <= E0:
        vals = np.full(fixed.Gamma, E0)
        return SaturatedProfile(vals, r_star=fixed.Gamma, r_max=fixed.Gamma,
                                E_max=E0, E0=E0, degenerate=True)
    rising = v[: r_max0 + 1]
    drops = np.diff(rising)
    if drops.size and drops.min() < -shape_tol:
        raise ValueError("profile does not rise monotonically to its maximum")
    above = np.nonzero(rising > E0)[0]
    r_star0 = int(above[0]) - 1 if above.size else r_max0
    out = np.empty(fixed.Gamma)
    out[: r_star0 + 1] = E0
    out[r_star0 + 1: r_max0] = v[r_star0 + 1: r_max0]
    out[r_max0:] = E_max
    out = np.maximum.accumulate(out)  # flatten sub-tolerance ripples
    return SaturatedProfile(out, r_star=r_star0 + 1, r_max=r_max0 + 1,
                            E_max=E_max, E0=float(E0))


def shift(profile_values, E0: float) -> np.ndarray:
    """One block to the right, feeding the floor in from the left edge."""
    v = np.asarray(profile_values, dtype=float)
    out = np.empty_like(v)
    out[0] = E0
    out[1:] = v[:-1]
    return out


def max_profile_increment(profile_values) -> float:
    """Largest jump between neighboring entries."""
    v = np.asarray(profile_values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(np.abs(np.diff(v)).max())
