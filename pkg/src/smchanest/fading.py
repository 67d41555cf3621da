"""Rayleigh fading generators: quasi-static block fading and a Clarke-model
time-varying process (Jakes-style sum of sinusoids)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ParameterError, RngStream, complex_gaussian_vector

QUASI_STATIC = "quasi-static"
CLARKE = "clarke"

# oscillators per channel entry; enough for the J0 autocorrelation to hold
# within the 0.05 acceptance band
N_OSCILLATORS = 16


@dataclass(frozen=True)
class FadingSpec:
    kind: str = QUASI_STATIC
    doppler: float = 0.0        # normalized Doppler f_d*T, used only by clarke
    entry_power: float = 0.2    # mean square modulus per channel entry

    def __post_init__(self):
        if self.kind not in (QUASI_STATIC, CLARKE):
            raise ParameterError(f"unknown fading kind {self.kind!r}")
        if self.entry_power <= 0:
            raise ParameterError(f"entry_power must be > 0, got {self.entry_power}")
        if self.doppler < 0:
            raise ParameterError(f"doppler must be >= 0, got {self.doppler}")


def draw_block_fading(rng: RngStream, rows: int, cols: int, entry_power: float) -> np.ndarray:
    """One quasi-static Rayleigh draw: i.i.d. CN(0, entry_power) entries."""
    if entry_power <= 0:
        raise ParameterError(f"entry_power must be > 0, got {entry_power}")
    flat = complex_gaussian_vector(rng, rows * cols, entry_power)
    return flat.reshape(rows, cols)


class FadingProcess:
    """Fading matrix indexed by symbol time.

    quasi-static: sample(t) is the same matrix for every t (one packet's
    realization; draw a new process per packet).
    clarke: each entry is an independent sum of N_OSCILLATORS sinusoids with
    uniform random arrival angles and phases, so the lag-tau autocorrelation
    approaches J0(2 pi f_dT tau) and the mean power is entry_power.
    """

    def __init__(self, rng: RngStream, rows: int, cols: int, spec: FadingSpec):
        self.rows = int(rows)
        self.cols = int(cols)
        self.spec = spec
        if spec.kind == QUASI_STATIC:
            self._value = draw_block_fading(rng, self.rows, self.cols, spec.entry_power)
            self._omega = None
        else:
            g = rng.generator()
            angles = g.uniform(0.0, 2.0 * np.pi, size=(self.rows, self.cols, N_OSCILLATORS))
            self._phases = g.uniform(0.0, 2.0 * np.pi, size=(self.rows, self.cols, N_OSCILLATORS))
            self._omega = 2.0 * np.pi * spec.doppler * np.cos(angles)
            self._amp = np.sqrt(spec.entry_power / N_OSCILLATORS)
            self._value = None

    def sample(self, t: int) -> np.ndarray:
        """Channel matrix at symbol index t >= 0."""
        if t < 0:
            raise ParameterError(f"t must be >= 0, got {t}")
        if self._omega is None:
            return self._value
        return self._amp * np.exp(1j * (self._omega * t + self._phases)).sum(axis=2)

    def sample_block(self, t0: int, count: int) -> np.ndarray:
        """Stacked samples for t = t0 .. t0+count-1, shape (count, rows, cols)."""
        if self._omega is None:
            return np.broadcast_to(self._value, (count, self.rows, self.cols)).copy()
        out = np.empty((count, self.rows, self.cols), dtype=np.complex128)
        # bound the (steps, rows, cols, oscillators) intermediate
        step = max(1, 4_000_000 // max(1, self.rows * self.cols * N_OSCILLATORS))
        for lo in range(0, count, step):
            hi = min(lo + step, count)
            t = t0 + np.arange(lo, hi)
            phase = (self._omega[None, :, :, :] * t[:, None, None, None]
                     + self._phases[None, :, :, :])
            out[lo:hi] = self._amp * np.exp(1j * phase).sum(axis=3)
        return out


def clarke_process(rng: RngStream, rows: int, cols: int, doppler: float,
                   entry_power: float) -> FadingProcess:
    spec = FadingSpec(kind=CLARKE, doppler=doppler, entry_power=entry_power)
    return FadingProcess(rng, rows, cols, spec)


def awgn(rng: RngStream, length: int, noise_var: float) -> np.ndarray:
    """Complex AWGN vector with per-entry variance noise_var."""
    return complex_gaussian_vector(rng, length, noise_var)
