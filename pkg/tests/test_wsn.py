import numpy as np
import pytest

from smchanest.numerics import ParameterError, RngStream
from smchanest.wsn import (
    ChannelRealization,
    Topology,
    TopologyError,
    amplification_matrix,
    draw_channels,
    make_packet,
    propagate_phase,
    transmit,
)

PAPER_TOPOLOGY = Topology(hops=3, sources=2, destinations=3, relay_counts=(4, 4))


class TestTopology:
    def test_derived_sizes_paper_scenario(self):
        t = PAPER_TOPOLOGY
        assert t.total_relays == 8
        assert t.stacked_rows == 9      # m * N_d
        assert t.stacked_cols == 10     # N_r + N_s
        assert t.stacked_nonzeros == 30

    def test_validation(self):
        with pytest.raises(TopologyError):
            Topology(hops=1, sources=1, destinations=1, relay_counts=())
        with pytest.raises(TopologyError):
            Topology(hops=3, sources=1, destinations=1, relay_counts=(2,))
        with pytest.raises(TopologyError):
            Topology(hops=2, sources=0, destinations=1, relay_counts=(1,))


class TestAmplification:
    def test_unit_coefficients_give_identity(self):
        a = amplification_matrix(PAPER_TOPOLOGY, 1.0)
        np.testing.assert_array_equal(a, np.eye(10, dtype=complex))

    def test_per_group_layout(self):
        # stacked order is [A_{m-1}, ..., A_1, I]; groups are given 1-first
        a = amplification_matrix(PAPER_TOPOLOGY, [[1, 2, 3, 4], [5, 6, 7, 8]])
        np.testing.assert_array_equal(np.diag(a).real,
                                      [5, 6, 7, 8, 1, 2, 3, 4, 1, 1])

    def test_wrong_group_count(self):
        with pytest.raises(TopologyError):
            amplification_matrix(PAPER_TOPOLOGY, [[1, 2, 3, 4]])


def _identity_two_hop(n):
    topo = Topology(hops=2, sources=n, destinations=n, relay_counts=(n,))
    eye = np.eye(n, dtype=complex)
    return topo, ChannelRealization(topo, src_to_relay=eye, relay_to_relay=(),
                                    src_to_dest=eye, relay_to_dest=(eye,))


class TestPropagation:
    def test_identity_channels_noiseless_direct_path(self):
        topo, ch = _identity_two_hop(3)
        s = np.array([1 + 1j, -1 + 0j, 0 + 2j])
        out = propagate_phase(1, s, ch, None, RngStream(0), 0.0)
        np.testing.assert_allclose(out.d, s)
        np.testing.assert_allclose(out.x, s)

    def test_scalar_two_hop_composition(self):
        topo = Topology(hops=2, sources=1, destinations=1, relay_counts=(1,))
        h1, h2, gain = 0.7 - 0.2j, -1.1 + 0.5j, 2.0
        ch = ChannelRealization(
            topo,
            src_to_relay=np.array([[h1]]),
            relay_to_relay=(),
            src_to_dest=np.array([[0.3 + 0j]]),
            relay_to_dest=(np.array([[h2]]),),
        )
        a = amplification_matrix(topo, gain)
        s = np.array([1 - 1j]) / np.sqrt(2)
        d, y, h_d, a_out, v = transmit(RngStream(1), topo, ch, a, s, 0.0)
        # phase-2 slice is the first destination entry of the stacked vector
        np.testing.assert_allclose(d[0], h2 * gain * h1 * s[0], rtol=1e-12)

    def test_three_hop_stacked_matches_direct_assembly(self):
        rng = RngStream(77)
        ch = draw_channels(rng, PAPER_TOPOLOGY, 1.0)
        a = amplification_matrix(PAPER_TOPOLOGY, 0.8)
        s = make_packet(rng.split(1), 2, 4, 2).symbols[:, 0]
        d, y, h_d, a_out, v = transmit(rng.split(2), PAPER_TOPOLOGY, ch, a, s, 0.0)
        np.testing.assert_allclose(d, h_d @ a_out @ y, atol=1e-12)

    def test_noisy_self_consistency(self):
        rng = RngStream(123)
        ch = draw_channels(rng, PAPER_TOPOLOGY, 0.5)
        a = amplification_matrix(PAPER_TOPOLOGY, 1.0)
        s = make_packet(rng.split(5), 2, 3, 1).symbols[:, 0]
        d, y, h_d, a_out, v = transmit(rng.split(6), PAPER_TOPOLOGY, ch, a, s, 0.4)
        assert np.linalg.norm(d - (h_d @ a_out @ y + v)) <= 1e-12

    def test_phase_index_validation(self):
        topo, ch = _identity_two_hop(2)
        with pytest.raises(TopologyError):
            propagate_phase(3, np.zeros(2, complex), ch, None, RngStream(0), 0.0)
        with pytest.raises(TopologyError):
            propagate_phase(1, np.zeros(5, complex), ch, None, RngStream(0), 0.0)


class TestStackedShape:
    def test_paper_scenario_block_shape(self):
        ch = draw_channels(RngStream(3), PAPER_TOPOLOGY, 1.0)
        h_d = ch.stacked()
        assert h_d.shape == (9, 10)

    def test_zero_pattern_exact(self):
        ch = draw_channels(RngStream(4), PAPER_TOPOLOGY, 1.0)
        h_d = ch.stacked()
        mask = np.zeros((9, 10), dtype=bool)
        mask[0:3, 0:4] = mask[3:6, 4:8] = mask[6:9, 8:10] = True
        assert np.all(h_d[~mask] == 0)
        assert np.all(h_d[mask] != 0)

    def test_smallest_topology(self):
        topo = Topology(hops=2, sources=1, destinations=1, relay_counts=(1,))
        h_d = draw_channels(RngStream(5), topo, 1.0).stacked()
        assert h_d.shape == (2, 2)
        assert h_d[0, 1] == 0 and h_d[1, 0] == 0

    def test_cascade_matches_noiseless_propagation(self):
        rng = RngStream(21)
        ch = draw_channels(rng, PAPER_TOPOLOGY, 0.7)
        a = amplification_matrix(PAPER_TOPOLOGY, 1.3)
        s = make_packet(rng.split(2), 2, 2, 1).symbols[:, 0]
        _, y, _, _, _ = transmit(rng.split(3), PAPER_TOPOLOGY, ch, a, s, 0.0)
        np.testing.assert_allclose(ch.cascade(a) @ s, y, atol=1e-12)


class TestPacket:
    def test_paper_layout(self):
        p = make_packet(RngStream(1), 2, 1000, 100)
        assert p.n_data == 900
        assert p.is_training(99) and not p.is_training(100)

    def test_all_training(self):
        p = make_packet(RngStream(1), 2, 64, 64)
        assert p.n_data == 0

    def test_unit_modulus(self):
        p = make_packet(RngStream(2), 4, 50, 10)
        np.testing.assert_allclose(np.abs(p.symbols), 1.0, rtol=1e-12)
        col = p.symbols[:, 0]
        assert np.vdot(col, col).real == pytest.approx(4.0)

    def test_bad_training_count(self):
        with pytest.raises(ParameterError):
            make_packet(RngStream(0), 2, 10, 11)
        with pytest.raises(ParameterError):
            make_packet(RngStream(0), 2, 10, 0)

    def test_reproducible(self):
        a = make_packet(RngStream(9, 4), 3, 20, 5)
        b = make_packet(RngStream(9, 4), 3, 20, 5)
        np.testing.assert_array_equal(a.symbols, b.symbols)
