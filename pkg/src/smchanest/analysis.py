"""Steady-state analysis: chi-square update probability, conditional error
moments, the closed-form steady-state excess MSE, the one-step excess-MSE
recursion, and the per-update arithmetic complexity model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ParameterError, chi_square_cdf


class InsufficientDataError(ValueError):
    """A conditional-moment branch that carries weight has no samples."""


class DegenerateRegimeError(ArithmeticError):
    """Steady-state denominator vanishes; the closed form is not usable here."""


SM_NLMS_SIGMA_INFLATION = 1.1


@dataclass(frozen=True)
class ConditionalMoments:
    """Branch-conditional sample statistics of an error-norm stream split at
    the bound gamma:

    inv_norm_above = E[1/||e||  given ||e|| > gamma]
    norm_above     = E[||e||    given ||e|| > gamma]
    sq_norm_below  = E[||e||^2  given ||e|| <= gamma]
    p_update       = empirical fraction with ||e|| > gamma

    An empty branch is flagged with NaN and a zero count rather than raised,
    so degenerate streams (always / never updating) remain representable.
    """

    inv_norm_above: float
    norm_above: float
    sq_norm_below: float
    p_update: float
    n_above: int
    n_below: int


def collect_moments(error_norms, gamma: float) -> ConditionalMoments:
    """Split an error-norm stream at gamma and take branch means."""
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    norms = np.asarray(error_norms, dtype=float).ravel()
    if norms.size == 0:
        raise InsufficientDataError("empty error-norm stream")
    if np.any(norms < 0):
        raise ParameterError("error norms must be nonnegative")
    above = norms[norms > gamma]
    below = norms[norms <= gamma]
    return ConditionalMoments(
        inv_norm_above=float(np.mean(1.0 / above)) if above.size else float("nan"),
        norm_above=float(np.mean(above)) if above.size else float("nan"),
        sq_norm_below=float(np.mean(below**2)) if below.size else float("nan"),
        p_update=float(above.size / norms.size),
        n_above=int(above.size),
        n_below=int(below.size),
    )


def _weighted_terms(moments: ConditionalMoments, gamma: float):
    """Validate that every moment carrying weight has samples; return
    (X, Y, Z, P) with empty zero-weight branches zeroed."""
    p = moments.p_update
    x, y, z = moments.inv_norm_above, moments.norm_above, moments.sq_norm_below
    if p > 0.0 and (np.isnan(x) or np.isnan(y)):
        raise InsufficientDataError("no samples above gamma, but p_update > 0")
    if p < 1.0 and np.isnan(z):
        raise InsufficientDataError("no samples at or below gamma, but p_update < 1")
    return (0.0 if p == 0.0 else x, 0.0 if p == 0.0 else y,
            0.0 if p == 1.0 else z, p)


def excess_mse_steady(moments: ConditionalMoments, gamma: float, noise_var: float,
                      rows: int) -> float:
    """Closed-form steady-state excess MSE

        J_ex = (2 g Y P + Z (1-P) - M s2 - g^2 P) / (2 g X P - 2 P + 1)

    shared by both set-membership estimators (plug in each one's conditional
    moments)."""
    x, y, z, p = _weighted_terms(moments, gamma)
    denom = 2.0 * gamma * x * p - 2.0 * p + 1.0
    if abs(denom) < 1e-6:
        raise DegenerateRegimeError(
            f"steady-state denominator {denom:.3e} too close to zero"
        )
    numer = 2.0 * gamma * y * p + z * (1.0 - p) - rows * noise_var - gamma**2 * p
    return numer / denom


def excess_mse_recursion_step(j_ex: float, moments: ConditionalMoments, gamma: float,
                              noise_var: float, rows: int) -> float:
    """One step of the excess-MSE recursion whose fixed point is
    excess_mse_steady:

        J(n+1) = (2 g X P + 2 - 2P) J(n) + M s2 + g^2 P - 2 g Y P - Z (1-P)
    """
    x, y, z, p = _weighted_terms(moments, gamma)
    gain = 2.0 * gamma * x * p + 2.0 - 2.0 * p
    const = rows * noise_var + gamma**2 * p - 2.0 * gamma * y * p - z * (1.0 - p)
    return gain * j_ex + const


def p_update_analytical(gamma: float, noise_var: float, rows: int) -> float:
    """Probability that a length-`rows` complex Gaussian error vector with
    per-entry variance noise_var has norm above gamma:
    1 - F(2 gamma^2 / noise_var; 2*rows) with F the chi-square CDF."""
    if noise_var <= 0:
        raise ParameterError(f"noise_var must be > 0, got {noise_var}")
    if gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    return 1.0 - chi_square_cdf(2.0 * gamma**2 / noise_var, 2 * rows)


def sigma_inflation_for_smnlms(noise_var: float) -> float:
    """Inflated noise variance used for the SM-NLMS analytical update-rate
    curve (compensates the nonzero steady-state channel error)."""
    return SM_NLMS_SIGMA_INFLATION * noise_var


# ---------------------------------------------------------------------------
# Complexity model
# ---------------------------------------------------------------------------

ALGORITHMS = ("nlms", "sm-nlms", "rls", "beacon")


@dataclass(frozen=True)
class ComplexityCount:
    """Expected arithmetic operations per time instant (update-probability
    weighted for the set-membership algorithms)."""

    multiplications: float
    additions: float
    divisions: float


def complexity_per_update(algorithm: str, rows, cols, p_update=0.0) -> ComplexityCount:
    """Per-instant operation counts for an M x N channel estimate.

    Arithmetic is duck-typed: pass Fraction arguments to get exact rational
    counts. p_update is ignored for the always-update algorithms.
    """
    alg = algorithm.lower()
    m, n, p = rows, cols, p_update
    if alg in ("sm-nlms", "beacon") and not 0 <= p <= 1:
        raise ParameterError(f"p_update must be in [0, 1], got {p}")
    mn = m * n
    low = min(m, n)
    if alg == "nlms":
        return ComplexityCount(2 * mn + n + low, 2 * mn + n - 1, 1)
    if alg == "sm-nlms":
        return ComplexityCount(
            mn + m + p * (mn + n + low),
            mn + m - 1 + p * (mn + n),
            2,
        )
    if alg == "rls":
        return ComplexityCount(4 * n * n + 2 * mn + n, 3 * n * n + 2 * mn - n, 2)
    if alg == "beacon":
        return ComplexityCount(
            n * n + mn + m + n + p * (2 * n * n + mn + n + low),
            n * n + mn + m - 2 + p * (2 * n * n + mn - n + 2),
            2,
        )
    raise ParameterError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def beacon_rls_crossover(rows, cols):
    """Update probability below which BEACON needs fewer multiplications than
    RLS: P_up < (3N^2 + MN - M) / (2N^2 + MN + N + min(M, N))."""
    m, n = rows, cols
    return (3 * n * n + m * n - m) / (2 * n * n + m * n + n + min(m, n))


# ---------------------------------------------------------------------------
# Steady-state window selection
# ---------------------------------------------------------------------------

def learning_curve_slope(mse_db) -> float:
    """Slope (dB per iteration) of a straight-line fit over the final 20%."""
    y = np.asarray(mse_db, dtype=float)
    tail = y[int(len(y) * 0.8):]
    if tail.size < 2:
        raise ParameterError("curve too short for a slope estimate")
    t = np.arange(tail.size, dtype=float)
    return float(np.polyfit(t, tail, 1)[0])


def steady_state_window(mse_db, slope_tol: float = 1e-4) -> tuple[int, float, bool]:
    """Start index of the steady-state window (final 50%), the fitted tail
    slope, and whether |slope| is within slope_tol dB/iteration."""
    y = np.asarray(mse_db, dtype=float)
    slope = learning_curve_slope(y)
    return len(y) // 2, slope, bool(abs(slope) <= slope_tol)
