"""Complex array helpers, reproducible RNG streams, and the special functions
used by the steady-state analysis (lower incomplete gamma, chi-square CDF)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """An argument violates an operation's precondition."""


class SingularMatrixError(ArithmeticError):
    """Matrix is singular or too ill-conditioned to invert reliably."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# RNG streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream id).

    Identical keys reproduce identical variate sequences; distinct stream ids
    give statistically independent sequences (Philox under the hood), so
    Monte Carlo trials can be generated in any order or in parallel.
    """

    seed: int
    stream: tuple[int, ...] = field(default=(0,))

    def __post_init__(self):
        if isinstance(self.stream, int):
            object.__setattr__(self, "stream", (self.stream,))
        else:
            object.__setattr__(self, "stream", tuple(int(i) for i in self.stream))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(seq))

    def split(self, *ids: int) -> "RngStream":
        """Derive an independent child stream."""
        return RngStream(self.seed, self.stream + tuple(int(i) for i in ids))


# ---------------------------------------------------------------------------
# Complex array constructors / checks
# ---------------------------------------------------------------------------

def as_complex_matrix(values, rows=None, cols=None) -> np.ndarray:
    """Validate and return a complex128 matrix. Rejects NaN/Inf entries."""
    m = np.asarray(values, dtype=np.complex128)
    if m.ndim != 2:
        raise ParameterError(f"expected a matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ParameterError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ParameterError(f"expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ParameterError("matrix entries must be finite")
    return m


def as_complex_vector(values, length=None) -> np.ndarray:
    """Validate and return a complex128 vector. Rejects NaN/Inf entries."""
    v = np.asarray(values, dtype=np.complex128)
    if v.ndim != 1:
        raise ParameterError(f"expected a vector, got ndim={v.ndim}")
    if length is not None and v.shape[0] != length:
        raise ParameterError(f"expected length {length}, got {v.shape[0]}")
    if not np.all(np.isfinite(v.real)) or not np.all(np.isfinite(v.imag)):
        raise ParameterError("vector entries must be finite")
    return v


def complex_gaussian_vector(rng: RngStream, length: int, variance: float) -> np.ndarray:
    """Circularly symmetric complex Gaussian vector.

    Each entry has independent real and imaginary parts N(0, variance/2),
    so the per-entry variance E|z|^2 equals `variance`.
    """
    if variance < 0:
        raise ParameterError(f"variance must be >= 0, got {variance}")
    if length < 0:
        raise ParameterError(f"length must be >= 0, got {length}")
    g = rng.generator()
    scale = math.sqrt(variance / 2.0)
    z = g.normal(0.0, 1.0, size=(int(length), 2))
    return scale * (z[:, 0] + 1j * z[:, 1])


def frobenius_norm(m) -> float:
    """sqrt of the sum of squared entry moduli."""
    a = np.asarray(m)
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def invert_small(m) -> np.ndarray:
    """Inverse of a small square complex matrix via partial-pivot LU.

    Refuses matrices with 2-norm condition estimate above 1e12; the
    SingularMatrixError carries the estimate.
    """
    a = as_complex_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ParameterError(f"matrix must be square, got {a.shape}")
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(
            f"matrix is singular or ill-conditioned (cond ~ {cond:.3e})", condition=cond
        )
    return np.linalg.inv(a)


def hermitian_solve(a, b) -> np.ndarray:
    """Solve a x = b for small well-conditioned a (same guard as invert_small)."""
    aa = as_complex_matrix(a)
    if aa.shape[0] != aa.shape[1]:
        raise ParameterError(f"matrix must be square, got {aa.shape}")
    cond = float(np.linalg.cond(aa))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(
            f"matrix is singular or ill-conditioned (cond ~ {cond:.3e})", condition=cond
        )
    return np.linalg.solve(aa, np.asarray(b, dtype=np.complex128))


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 800


def _reg_lower_gamma_series(s: float, x: float) -> float:
    # series for P(s, x), reliable for x < s + 1
    term = 1.0 / s
    total = term
    a = s
    for _ in range(_GAMMA_MAX_ITER):
        a += 1.0
        term *= x / a
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + s * math.log(x) - math.lgamma(s))


def _reg_upper_gamma_cf(s: float, x: float) -> float:
    # modified Lentz continued fraction for Q(s, x), reliable for x >= s + 1
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return h * math.exp(-x + s * math.log(x) - math.lgamma(s))


def regularized_lower_gamma(s: float, x: float) -> float:
    """P(s, x) = gamma_L(s, x) / Gamma(s), to near double precision."""
    if s <= 0:
        raise ParameterError(f"shape s must be > 0, got {s}")
    if x < 0:
        raise ParameterError(f"x must be >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if x < s + 1.0:
        p = _reg_lower_gamma_series(s, x)
    else:
        p = 1.0 - _reg_upper_gamma_cf(s, x)
    return min(max(p, 0.0), 1.0)


def lower_incomplete_gamma(s: float, x: float) -> float:
    """gamma_L(s, x) = integral_0^x t^(s-1) e^(-t) dt."""
    return regularized_lower_gamma(s, x) * math.gamma(s)


def chi_square_cdf(x: float, dof: int) -> float:
    """Chi-square CDF with `dof` degrees of freedom: P(dof/2, x/2)."""
    if dof < 1 or int(dof) != dof:
        raise ParameterError(f"dof must be a positive integer, got {dof}")
    if x < 0:
        raise ParameterError(f"x must be >= 0, got {x}")
    return regularized_lower_gamma(dof / 2.0, x / 2.0)
