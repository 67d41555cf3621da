"""m-hop amplify-and-forward network model: per-phase propagation, the stacked
linear system d = H_d A y + v_d, packets, and the source-to-stacked cascade."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .numerics import ParameterError, RngStream, complex_gaussian_vector
from .fading import draw_block_fading
from .detection import qpsk_from_bits


class TopologyError(ValueError):
    """Dimensions inconsistent with the declared node layout."""


@dataclass(frozen=True)
class Topology:
    """Node counts: m hops, N_s sources, N_d destinations, one relay count per
    intermediate group. Derived sizes: M = m*N_d stacked observation rows and
    N = N_r + N_s stacked input columns."""

    hops: int
    sources: int
    destinations: int
    relay_counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "relay_counts", tuple(int(c) for c in self.relay_counts))
        if self.hops < 2:
            raise TopologyError(f"hops must be >= 2, got {self.hops}")
        if len(self.relay_counts) != self.hops - 1:
            raise TopologyError(
                f"need {self.hops - 1} relay groups for {self.hops} hops, "
                f"got {len(self.relay_counts)}"
            )
        if self.sources < 1 or self.destinations < 1 or any(c < 1 for c in self.relay_counts):
            raise TopologyError("all node counts must be >= 1")

    @property
    def total_relays(self) -> int:
        return sum(self.relay_counts)

    @property
    def stacked_rows(self) -> int:
        """M: destination observations collected over the m time slots."""
        return self.hops * self.destinations

    @property
    def stacked_cols(self) -> int:
        """N: relays plus sources."""
        return self.total_relays + self.sources

    @property
    def stacked_nonzeros(self) -> int:
        """Number of structurally nonzero entries of the stacked channel."""
        return self.destinations * self.stacked_cols

    def column_blocks(self) -> list[int]:
        """Stacked input block sizes, ordered [N_r(m-1), ..., N_r(1), N_s]."""
        return [self.relay_counts[i] for i in range(self.hops - 2, -1, -1)] + [self.sources]


def amplification_matrix(topology: Topology, coefficients=1.0) -> np.ndarray:
    """Block-diagonal amplification: per-group relay coefficients followed by an
    identity block for the sources.

    `coefficients` is either a scalar applied to every relay or one sequence of
    per-relay values per group (group 1 first).
    """
    groups = len(topology.relay_counts)
    if np.isscalar(coefficients):
        per_group = [np.full(c, float(coefficients)) for c in topology.relay_counts]
    else:
        per_group = [np.asarray(c, dtype=float) for c in coefficients]
        if len(per_group) != groups:
            raise TopologyError(f"need {groups} coefficient groups, got {len(per_group)}")
        for i, (c, n) in enumerate(zip(per_group, topology.relay_counts)):
            if c.shape != (n,):
                raise TopologyError(f"group {i + 1} needs {n} coefficients, got {c.shape}")
    # diagonal ordered [A_{m-1}, ..., A_1, I_{N_s}]
    diag = np.concatenate([per_group[i] for i in range(groups - 1, -1, -1)]
                          + [np.ones(topology.sources)])
    return np.diag(diag.astype(np.complex128))


@dataclass(frozen=True)
class ChannelRealization:
    """All per-phase channel matrices of one network realization."""

    topology: Topology
    src_to_relay: np.ndarray                 # H_{s,r(1)}, N_r(1) x N_s
    relay_to_relay: tuple[np.ndarray, ...]   # H_{r(i-1),r(i)} for i = 2..m-1
    src_to_dest: np.ndarray                  # H_{s,d}, N_d x N_s
    relay_to_dest: tuple[np.ndarray, ...]    # H_{r(i),d} for i = 1..m-1

    def stacked(self) -> np.ndarray:
        """H_d: block diagonal [H_{r(m-1),d}, ..., H_{r(1),d}, H_{s,d}],
        shape (m*N_d) x (N_r+N_s); off-block entries exactly zero."""
        top = self.topology
        blocks = [self.relay_to_dest[i] for i in range(top.hops - 2, -1, -1)]
        blocks.append(self.src_to_dest)
        h = np.zeros((top.stacked_rows, top.stacked_cols), dtype=np.complex128)
        r0 = c0 = 0
        for b in blocks:
            h[r0:r0 + b.shape[0], c0:c0 + b.shape[1]] = b
            r0 += b.shape[0]
            c0 += b.shape[1]
        return h

    def cascade(self, a: np.ndarray) -> np.ndarray:
        """T mapping source symbols to the noiseless stacked input y:
        y = [x_{m-1}; ...; x_1; s] = T s when all relay noise is zero."""
        top = self.topology
        a_groups = _split_amplification(top, a)
        t_blocks = [self.src_to_relay]                       # T_1
        for i in range(2, top.hops):
            t_blocks.append(self.relay_to_relay[i - 2] @ a_groups[i - 2] @ t_blocks[-1])
        rows = [t_blocks[i] for i in range(top.hops - 2, -1, -1)]
        rows.append(np.eye(top.sources, dtype=np.complex128))
        return np.vstack(rows)


def _split_amplification(topology: Topology, a: np.ndarray) -> list[np.ndarray]:
    """Per-group diagonal blocks A_1..A_{m-1} out of the stacked A."""
    sizes = topology.column_blocks()
    out = {}
    off = 0
    # stacked order is [A_{m-1}, ..., A_1, I]
    for idx, size in zip(range(topology.hops - 2, -1, -1), sizes[:-1]):
        out[idx] = a[off:off + size, off:off + size]
        off += size
    return [out[i] for i in range(topology.hops - 1)]


def draw_channels(rng: RngStream, topology: Topology, entry_power: float) -> ChannelRealization:
    """One quasi-static realization of every constituent channel matrix."""
    t = topology
    sub = iter(range(100))
    src_to_relay = draw_block_fading(rng.split(next(sub)), t.relay_counts[0], t.sources, entry_power)
    relay_to_relay = tuple(
        draw_block_fading(rng.split(next(sub)), t.relay_counts[i], t.relay_counts[i - 1], entry_power)
        for i in range(1, t.hops - 1)
    )
    src_to_dest = draw_block_fading(rng.split(next(sub)), t.destinations, t.sources, entry_power)
    relay_to_dest = tuple(
        draw_block_fading(rng.split(next(sub)), t.destinations, t.relay_counts[i], entry_power)
        for i in range(t.hops - 1)
    )
    return ChannelRealization(t, src_to_relay, relay_to_relay, src_to_dest, relay_to_dest)


class PhaseOutput(NamedTuple):
    x: np.ndarray | None       # signal received by the next relay group (None in phase m)
    d: np.ndarray              # destination slice for this phase
    relay_noise: np.ndarray | None
    dest_noise: np.ndarray


def propagate_phase(phase: int, x_prev: np.ndarray, channels: ChannelRealization,
                    a_prev: np.ndarray | None, rng: RngStream, noise_var: float) -> PhaseOutput:
    """One transmission phase.

    phase 1 broadcasts the sources (x_prev = s); phases 2..m-1 forward the
    previous group's amplified signal to the next group and the destinations;
    phase m reaches only the destinations. `a_prev` is the diagonal
    amplification block of the transmitting relay group (ignored in phase 1).
    """
    top = channels.topology
    m = top.hops
    if not 1 <= phase <= m:
        raise TopologyError(f"phase must be in [1, {m}], got {phase}")
    x_prev = np.asarray(x_prev, dtype=np.complex128)
    if phase == 1:
        if x_prev.shape != (top.sources,):
            raise TopologyError(f"phase 1 input must have length {top.sources}")
        vr = complex_gaussian_vector(rng.split(phase, 0), top.relay_counts[0], noise_var)
        vd = complex_gaussian_vector(rng.split(phase, 1), top.destinations, noise_var)
        x = channels.src_to_relay @ x_prev + vr
        d = channels.src_to_dest @ x_prev + vd
        return PhaseOutput(x, d, vr, vd)
    group = phase - 1                      # transmitting relay group index (1-based)
    if x_prev.shape != (top.relay_counts[group - 1],):
        raise TopologyError(
            f"phase {phase} input must have length {top.relay_counts[group - 1]}"
        )
    if a_prev is None:
        raise TopologyError(f"phase {phase} needs the group-{group} amplification block")
    amplified = a_prev @ x_prev
    vd = complex_gaussian_vector(rng.split(phase, 1), top.destinations, noise_var)
    d = channels.relay_to_dest[group - 1] @ amplified + vd
    if phase == m:
        return PhaseOutput(None, d, None, vd)
    vr = complex_gaussian_vector(rng.split(phase, 0), top.relay_counts[group], noise_var)
    x = channels.relay_to_relay[group - 1] @ amplified + vr
    return PhaseOutput(x, d, vr, vd)


def assemble_stacked(topology: Topology, channels: ChannelRealization, a: np.ndarray,
                     s: np.ndarray, phase_outputs: Sequence[PhaseOutput]):
    """Collect per-phase results into the stacked system.

    Returns (d, y, H_d, A, v_d) with d = [d^m; ...; d^1],
    y = [x_{m-1}; ...; x_1; s], and d = H_d A y + v_d holding exactly for the
    generated noise realization.
    """
    m = topology.hops
    if len(phase_outputs) != m:
        raise TopologyError(f"need {m} propagated phases, got {len(phase_outputs)}")
    d = np.concatenate([phase_outputs[i].d for i in range(m - 1, -1, -1)])
    v_d = np.concatenate([phase_outputs[i].dest_noise for i in range(m - 1, -1, -1)])
    y = np.concatenate([phase_outputs[i].x for i in range(m - 2, -1, -1)] + [np.asarray(s)])
    return d, y, channels.stacked(), a, v_d


def transmit(rng: RngStream, topology: Topology, channels: ChannelRealization,
             a: np.ndarray, s: np.ndarray, noise_var: float):
    """Run all m phases for one source vector and assemble the stacked system."""
    a_groups = _split_amplification(topology, a)
    outputs = []
    x = np.asarray(s, dtype=np.complex128)
    for phase in range(1, topology.hops + 1):
        a_prev = None if phase == 1 else a_groups[phase - 2]
        out = propagate_phase(phase, x, channels, a_prev, rng.split(7, phase), noise_var)
        outputs.append(out)
        x = out.x
    return assemble_stacked(topology, channels, a, s, outputs)


# ---------------------------------------------------------------------------
# Packets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Packet:
    """QPSK symbol packet for a set of transmitting nodes: leading n_train
    symbols are the known preamble, the rest are data."""

    symbols: np.ndarray      # (nodes, n_total), unit-modulus QPSK
    bits: np.ndarray         # (nodes, n_total, 2)
    n_train: int

    @property
    def n_total(self) -> int:
        return self.symbols.shape[1]

    @property
    def n_data(self) -> int:
        return self.n_total - self.n_train

    def is_training(self, t: int) -> bool:
        return t < self.n_train


def make_packet(rng: RngStream, nodes: int, n_total: int, n_train: int) -> Packet:
    """i.i.d. uniform QPSK packet with the leading n_train symbols flagged as
    training."""
    if nodes < 1:
        raise ParameterError(f"nodes must be >= 1, got {nodes}")
    if not 0 < n_train <= n_total:
        raise ParameterError(
            f"need 0 < n_train <= n_total, got n_train={n_train}, n_total={n_total}"
        )
    g = rng.generator()
    bits = g.integers(0, 2, size=(nodes, n_total, 2))
    return Packet(symbols=qpsk_from_bits(bits), bits=bits, n_train=int(n_train))
