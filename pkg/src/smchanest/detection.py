"""QPSK modulation, the linear MMSE symbol detector, and the decision-directed
feed that turns detections into estimator inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ParameterError, SingularMatrixError, COND_LIMIT

_SQRT2 = np.sqrt(2.0)

# Gray map: bit pair (b0, b1) -> ((1-2*b0) + 1j*(1-2*b1))/sqrt(2), so
# 00 -> (1+1j)/sqrt(2) and adjacent quadrants differ in exactly one bit.


def qpsk_from_bits(bits) -> np.ndarray:
    """Map bit pairs (..., 2) to unit-modulus QPSK symbols (...)."""
    b = np.asarray(bits)
    if b.shape[-1] != 2:
        raise ParameterError(f"last axis must hold bit pairs, got shape {b.shape}")
    return ((1 - 2 * b[..., 0]) + 1j * (1 - 2 * b[..., 1])) / _SQRT2


def qpsk_mod(bits) -> np.ndarray:
    return qpsk_from_bits(bits)


def qpsk_demod(z) -> np.ndarray:
    """Quadrant decision back to bit pairs (..., 2). Ties resolve to bit 0."""
    z = np.asarray(z)
    return np.stack([(z.real < 0).astype(np.int64), (z.imag < 0).astype(np.int64)], axis=-1)


def qpsk_slice(z) -> np.ndarray:
    """Hard decision onto the QPSK constellation."""
    return qpsk_from_bits(qpsk_demod(z))


@dataclass(frozen=True)
class DetectorConfig:
    """Effective channel (observation = channel @ symbols + noise) and the
    noise variance per observation entry, for unit-power symbols."""

    channel: np.ndarray
    noise_var: float

    def __post_init__(self):
        c = np.asarray(self.channel, dtype=np.complex128)
        object.__setattr__(self, "channel", c)
        if c.ndim != 2:
            raise ParameterError("channel must be a matrix")
        if self.noise_var < 0:
            raise ParameterError(f"noise_var must be >= 0, got {self.noise_var}")


def lmmse_weights(cfg: DetectorConfig) -> np.ndarray:
    """Wiener solution W = (H H^H + noise_var I)^(-1) H for unit-power symbols."""
    h = cfg.channel
    cov = h @ h.conj().T + cfg.noise_var * np.eye(h.shape[0], dtype=np.complex128)
    cond = float(np.linalg.cond(cov))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(
            f"detector covariance singular (cond ~ {cond:.3e})", condition=cond
        )
    return np.linalg.solve(cov, h)


def lmmse_detect(received, cfg: DetectorConfig) -> np.ndarray:
    """Soft symbol estimates s_hat = W^H r."""
    w = lmmse_weights(cfg)
    return w.conj().T @ np.asarray(received, dtype=np.complex128)


def decision_directed_feed(soft_symbols, cascade) -> tuple[np.ndarray, np.ndarray]:
    """Hard-slice the detector output and propagate it noiselessly through the
    known cascade, producing the stacked estimator input.

    Returns (stacked_input, hard_symbols).
    """
    hard = qpsk_slice(soft_symbols)
    return np.asarray(cascade) @ hard, hard
