"""Channel estimators: batch LS and MMSE baselines, streaming NLMS / SM-NLMS /
RLS / BEACON recursions, and the adaptive error-bound controller.

All streaming estimators share the model r(n) = H s(n) + noise with H of size
M x N; a step consumes one (s, r) pair and mutates the EstimatorState in
place. The set-membership variants update only when the a priori error norm
exceeds the bound gamma, and an accepted update places the a posteriori error
exactly on the gamma-sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    ParameterError,
    SingularMatrixError,
    COND_LIMIT,
    frobenius_norm,
    invert_small,
)


class RankDeficiencyError(SingularMatrixError):
    """The batch Gram matrix is singular (too few independent snapshots)."""


class StateCorruptionError(ArithmeticError):
    """Recursion state lost positive definiteness; re-initialize the estimator."""


# P(0) scale for exponentially weighted RLS: large enough that the initial
# regularization bias stays below 1e-8 of the batch solution after N
# snapshots, small enough that rank-one downdate cancellation does not bite.
RLS_P_SCALE = 1e8


@dataclass
class EstimatorState:
    """Mutable per-estimator state: estimate H, inverse-Gram P (RLS/BEACON),
    current bound gamma, and update counters."""

    H: np.ndarray
    P: np.ndarray | None = None
    gamma: float = 0.0
    updates: int = 0
    steps: int = 0

    @classmethod
    def initial(cls, rows: int, cols: int, gamma: float = 0.0,
                with_p: bool = False, p_scale: float = 1.0) -> "EstimatorState":
        """H(0) = 0 and, for the recursive estimators, P(0) = p_scale * I.

        BEACON uses p_scale = 1 (P(0) = I). Exponentially weighted RLS runs
        use a large p_scale (see RLS_P_SCALE) so the initial regularization
        bias is negligible against batch LS.
        """
        h = np.zeros((rows, cols), dtype=np.complex128)
        p = p_scale * np.eye(cols, dtype=np.complex128) if with_p else None
        return cls(H=h, P=p, gamma=float(gamma))

    @property
    def update_rate(self) -> float:
        return self.updates / self.steps if self.steps else 0.0


@dataclass(frozen=True)
class StepReport:
    """Outcome of one streaming step: the a priori error vector, whether the
    state changed, the step parameter (mu or lambda; 0 when no update), and
    the a posteriori error norm."""

    updated: bool
    error: np.ndarray
    step_param: float
    posterior_norm: float


@dataclass
class BoundController:
    """Recursive error-bound tuner:
    gamma <- (1-beta) gamma + beta sqrt(alpha ||H||_F^2 noise_var)."""

    gamma: float
    alpha: float
    beta: float
    noise_var: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ParameterError(f"alpha must be > 0, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"beta must be in [0, 1], got {self.beta}")
        if self.noise_var < 0:
            raise ParameterError(f"noise_var must be >= 0, got {self.noise_var}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")


def bound_update(ctrl: BoundController, h) -> float:
    """Advance the bound from the current estimate; returns the new gamma."""
    target = np.sqrt(ctrl.alpha * frobenius_norm(h) ** 2 * ctrl.noise_var)
    ctrl.gamma = (1.0 - ctrl.beta) * ctrl.gamma + ctrl.beta * target
    return ctrl.gamma


def _check_pair(state: EstimatorState, s, r):
    s = np.asarray(s, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    rows, cols = state.H.shape
    if s.shape != (cols,):
        raise ParameterError(f"input vector must have length {cols}, got {s.shape}")
    if r.shape != (rows,):
        raise ParameterError(f"observation must have length {rows}, got {r.shape}")
    return s, r


def _posterior_norm(state: EstimatorState, s, r) -> float:
    return float(np.linalg.norm(r - state.H @ s))


def nlms_step(state: EstimatorState, s, r, step_size: float = 1.0) -> StepReport:
    """Normalized LMS: H <- H + (mu0 / s^H s) e s^H, updating every step."""
    s, r = _check_pair(state, s, r)
    state.steps += 1
    e = r - state.H @ s
    ss = float(np.real(np.vdot(s, s)))
    if ss == 0.0:
        return StepReport(False, e, 0.0, float(np.linalg.norm(e)))
    mu = step_size / ss
    state.H += mu * np.outer(e, s.conj())
    state.updates += 1
    return StepReport(True, e, mu, _posterior_norm(state, s, r))


def sm_nlms_step(state: EstimatorState, s, r) -> StepReport:
    """Set-membership NLMS: update only when ||e|| exceeds gamma, with the
    data-dependent step mu = (1 - gamma/||e||)/(s^H s) that lands the
    a posteriori error exactly on the bound."""
    s, r = _check_pair(state, s, r)
    if state.gamma < 0:
        raise ParameterError("gamma must be >= 0")
    state.steps += 1
    e = r - state.H @ s
    e_norm = float(np.linalg.norm(e))
    ss = float(np.real(np.vdot(s, s)))
    if ss == 0.0 or e_norm <= state.gamma:
        return StepReport(False, e, 0.0, e_norm)
    mu = (1.0 - state.gamma / e_norm) / ss
    state.H += mu * np.outer(e, s.conj())
    state.updates += 1
    return StepReport(True, e, mu, _posterior_norm(state, s, r))


def _rank_one_core(state: EstimatorState, s, r, lam: float):
    """Shared RLS/BEACON rank-one machinery.

    With pi = P s and G = s^H P s, applies
        H <- H + lam * eps * k,   P <- P - lam * (P s) k,
    where k = s^H P / (1 + lam G), then re-symmetrizes P.
    Returns (eps, G).
    """
    eps = r - state.H @ s
    pi = state.P @ s
    g_val = float(np.real(np.vdot(s, pi)))
    if g_val <= 0.0:
        raise StateCorruptionError(
            f"s^H P s = {g_val:.3e} <= 0: P lost positive definiteness"
        )
    k = pi.conj() / (1.0 + lam * g_val)
    state.H += lam * np.outer(eps, k)
    p_new = state.P - lam * np.outer(pi, k)
    state.P = 0.5 * (p_new + p_new.conj().T)
    return eps, g_val


def rls_step(state: EstimatorState, s, r, forgetting: float = 1.0) -> StepReport:
    """Exponentially weighted RLS with fixed forgetting factor.

    Uses the same rank-one core as BEACON with the substitution
    lam = 1/forgetting followed by the P/forgetting rescale; at forgetting = 1
    this is the growing-window recursion that matches batch LS exactly.
    """
    if not 0.0 < forgetting <= 1.0:
        raise ParameterError(f"forgetting factor must be in (0, 1], got {forgetting}")
    s, r = _check_pair(state, s, r)
    if state.P is None:
        raise ParameterError("RLS needs a state with P (use EstimatorState.initial(..., with_p=True))")
    state.steps += 1
    eps, _ = _rank_one_core(state, s, r, 1.0 / forgetting)
    state.P /= forgetting
    state.updates += 1
    return StepReport(True, eps, forgetting, _posterior_norm(state, s, r))


def beacon_step(state: EstimatorState, s, r) -> StepReport:
    """Bounded-error recursive update: the Lagrange multiplier
    lam = (||eps||/gamma - 1)/G doubles as an adaptive forgetting factor and
    is nonzero only when ||eps|| > gamma; accepted updates place the
    a posteriori error exactly on the gamma-sphere."""
    s, r = _check_pair(state, s, r)
    if state.P is None:
        raise ParameterError("BEACON needs a state with P (use EstimatorState.initial(..., with_p=True))")
    if state.gamma <= 0:
        raise ParameterError(f"BEACON requires gamma > 0, got {state.gamma}")
    state.steps += 1
    eps = r - state.H @ s
    eps_norm = float(np.linalg.norm(eps))
    if eps_norm <= state.gamma:
        return StepReport(False, eps, 0.0, eps_norm)
    pi = state.P @ s
    g_val = float(np.real(np.vdot(s, pi)))
    if g_val <= 0.0:
        raise StateCorruptionError(
            f"s^H P s = {g_val:.3e} <= 0: P lost positive definiteness"
        )
    lam = (eps_norm / state.gamma - 1.0) / g_val
    k = pi.conj() / (1.0 + lam * g_val)
    state.H += lam * np.outer(eps, k)
    p_new = state.P - lam * np.outer(pi, k)
    state.P = 0.5 * (p_new + p_new.conj().T)
    state.updates += 1
    return StepReport(True, eps, lam, _posterior_norm(state, s, r))


# ---------------------------------------------------------------------------
# Batch baselines
# ---------------------------------------------------------------------------

def ls_batch(snapshots, forgetting: float = 1.0) -> np.ndarray:
    """Weighted least squares over (s, r) snapshots:
    H = [sum lam^(n-l) r s^H] [sum lam^(n-l) s s^H]^(-1)."""
    if not 0.0 < forgetting <= 1.0:
        raise ParameterError(f"forgetting factor must be in (0, 1], got {forgetting}")
    snaps = list(snapshots)
    if not snaps:
        raise ParameterError("need at least one snapshot")
    n = len(snaps)
    s0 = np.asarray(snaps[0][0], dtype=np.complex128)
    r0 = np.asarray(snaps[0][1], dtype=np.complex128)
    gram = np.zeros((s0.size, s0.size), dtype=np.complex128)
    cross = np.zeros((r0.size, s0.size), dtype=np.complex128)
    for idx, (s, r) in enumerate(snaps):
        s = np.asarray(s, dtype=np.complex128)
        r = np.asarray(r, dtype=np.complex128)
        w = forgetting ** (n - 1 - idx)
        gram += w * np.outer(s, s.conj())
        cross += w * np.outer(r, s.conj())
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficiencyError(
            f"snapshot Gram matrix is rank deficient (cond ~ {cond:.3e})", condition=cond
        )
    return cross @ np.linalg.inv(gram)


def mmse_batch(s_matrix, r_matrix, channel_corr, noise_var: float, rows: int) -> np.ndarray:
    """Batch MMSE estimator over a training block:
    H = R (S^H C S + M noise_var I)^(-1) S^H C, with C the channel column
    correlation E[H^H H], S the N x n_t training matrix, R the M x n_t
    received matrix."""
    s = np.asarray(s_matrix, dtype=np.complex128)
    r = np.asarray(r_matrix, dtype=np.complex128)
    c = np.asarray(channel_corr, dtype=np.complex128)
    if s.ndim != 2 or r.ndim != 2:
        raise ParameterError("S and R must be matrices (one column per snapshot)")
    if s.shape[1] != r.shape[1]:
        raise ParameterError(
            f"S and R must have the same number of snapshots, got {s.shape[1]} vs {r.shape[1]}"
        )
    if r.shape[0] != rows:
        raise ParameterError(f"R must have {rows} rows, got {r.shape[0]}")
    if c.shape != (s.shape[0], s.shape[0]):
        raise ParameterError(
            f"channel correlation must be {s.shape[0]} x {s.shape[0]}, got {c.shape}"
        )
    inner = s.conj().T @ c @ s + rows * noise_var * np.eye(s.shape[1], dtype=np.complex128)
    return r @ invert_small(inner) @ s.conj().T @ c
