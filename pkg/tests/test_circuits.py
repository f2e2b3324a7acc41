import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oamtomo.circuits import (
    Circuit,
    CircuitBuilder,
    cascade_depth,
    compose,
    element_count,
    full_helicity_sorter,
    gate_hx,
    gate_hy,
    gate_phase,
    hs_even_cascade,
    hs_even_slm,
    hs_odd,
    hx_matrix,
    hy_matrix,
    oam_sorter,
    partial_helicity_sorter,
    phase_ledger,
    phase_matrix,
    port_matrix,
    radial_mode_sorter,
    routing_table,
    verify_gate,
    verify_helicity_routing,
    verify_negative_blocking,
    verify_unitary,
)
from oamtomo.elements import dove_prism_pair
from oamtomo.errors import CapacityError, InvalidArgumentError, InvariantViolation
from oamtomo.hilbert import make_basis
from oamtomo.models import ModeIndex


@pytest.fixture(scope="module")
def general8():
    return make_basis(8, include_zero=True)


def single_output(table, mode, path=0):
    outs = table.destinations(path, mode)
    assert len(outs) == 1, outs
    return outs[0]


class TestOamSorter:
    def test_parity_routing(self, general8):
        c = oam_sorter(np.pi / 2, general8)
        table = routing_table(c, paths=[0])
        for mode in general8.ordering:
            out_path, out_mode, amp = single_output(table, mode)
            assert out_mode == mode
            assert abs(abs(amp) - 1) < 1e-12
            assert table.port_names[out_path] == ("a" if mode.ell % 2 == 0 else "b")

    def test_beta_zero_keeps_everything_on_a(self):
        c = oam_sorter(0.0, make_basis(3, include_zero=True))
        for mode in c.basis.ordering:
            assert routing_table(c, paths=[0]).output_port(0, mode) == "a"

    def test_unitary_and_cost(self, general8):
        c = oam_sorter(0.3, general8)
        verify_unitary(c)
        assert element_count(c) == 4


class TestPartialHelicitySorter:
    @settings(max_examples=32, deadline=None)
    @given(alpha=st.floats(0, 2 * np.pi, allow_nan=False))
    def test_negative_modes_never_reach_b(self, alpha):
        c = partial_helicity_sorter(alpha, make_basis(8, include_zero=True))
        verify_negative_blocking(c, "b")
        verify_unitary(c)

    def test_hs_odd_routing(self):
        c = hs_odd(make_basis(5, include_zero=True))
        table = routing_table(c, paths=[0])
        for mode in c.basis.ordering:
            port = "b" if mode.ell > 0 and mode.ell % 2 else "a"
            assert table.output_port(0, mode) == port
        _, _, amp = single_output(table, 3)
        assert amp == pytest.approx(-1)

    def test_cost(self):
        assert partial_helicity_sorter(0.1, make_basis(2)).total_cost == 8

    def test_radial_modes_rejected(self):
        with pytest.raises(InvalidArgumentError, match="radial"):
            partial_helicity_sorter(0.1, make_basis(2, include_p=True, p_max=1))


class TestRadialModeSorter:
    def test_sorts_radial_parity_of_ell_zero(self):
        b = make_basis(2, include_p=True, p_max=1, include_zero=True)
        table = routing_table(radial_mode_sorter(np.pi / 2, b), paths=[0])
        assert table.output_port(0, ModeIndex(0, 0)) == "a"
        assert table.output_port(0, ModeIndex(0, 1)) == "b"

    def test_alpha_pi_sorts_ell_parity(self):
        b = make_basis(2, include_p=True, p_max=1, include_zero=True)
        table = routing_table(radial_mode_sorter(np.pi, b), paths=[0])
        for mode in b.ordering:
            assert table.output_port(0, mode) == ("a" if mode.ell % 2 == 0 else "b")

    def test_needs_radial_basis(self):
        with pytest.raises(InvalidArgumentError, match="include_p"):
            radial_mode_sorter(np.pi, make_basis(2))


class TestEvenHelicitySorters:
    @pytest.mark.parametrize("depth, ell_max", [(3, 6), (4, 14)])
    def test_cascade_and_slm_route_alike(self, depth, ell_max):
        even = make_basis(ell_max, parity="even")
        cascade = routing_table(hs_even_cascade(depth, even), paths=[0])
        slm = routing_table(hs_even_slm(even), paths=[0])
        for mode in even.ordering:
            expected = "+" if mode.ell > 0 else "-"
            assert cascade.output_port(0, mode) == expected
            assert slm.output_port(0, mode) == expected
            for table in (cascade, slm):
                _, out_mode, amp = single_output(table, mode)
                assert out_mode == mode
                assert abs(abs(amp) - 1) < 1e-12

    def test_port_phases(self):
        even = make_basis(6, parity="even")
        cascade = routing_table(hs_even_cascade(3, even), paths=[0])
        slm = routing_table(hs_even_slm(even), paths=[0])
        assert single_output(cascade, 4)[2] == pytest.approx(1)
        assert single_output(slm, 4)[2] == pytest.approx(-1)

    def test_slm_variant_is_unitary_on_original_basis(self):
        c = hs_even_slm(make_basis(6, parity="even"))
        verify_unitary(c)
        assert c.basis == make_basis(6, parity="even")

    def test_element_counts_linear_in_depth(self):
        even = make_basis(2, parity="even")
        counts = [hs_even_cascade(n, even).total_cost for n in (2, 3, 4, 5)]
        assert counts == [12, 24, 36, 48]
        assert np.all(np.diff(counts, 2) == 0)
        assert hs_even_slm(even).total_cost == 12

    def test_cascade_capacity(self):
        with pytest.raises(CapacityError, match="depth 2"):
            hs_even_cascade(2, make_basis(4, parity="even"))

    def test_cascade_rejects_odd_modes(self):
        with pytest.raises(InvalidArgumentError, match="odd modes"):
            hs_even_cascade(3, make_basis(3))

    def test_cascade_depth_minimum(self):
        with pytest.raises(InvalidArgumentError, match="≥ 2"):
            hs_even_cascade(1, make_basis(2, parity="even"))

    def test_cascade_depth_helper(self):
        assert [cascade_depth(n) for n in (1, 3, 4, 7, 8)] == [2, 2, 3, 3, 4]


class TestFullHelicitySorter:
    @pytest.mark.parametrize("variant", ["cascade", "slm"])
    @pytest.mark.parametrize("ell_max", [1, 3, 4])
    def test_helicity_routing(self, variant, ell_max):
        c = full_helicity_sorter(make_basis(ell_max), variant)
        verify_unitary(c)
        verify_helicity_routing(c)
        assert all(abs(phase) < 1e-10 for phase in phase_ledger(c).values())

    def test_rejects_ell_zero(self):
        with pytest.raises(InvalidArgumentError, match="ell ≠ 0"):
            full_helicity_sorter(make_basis(2, include_zero=True))

    def test_unknown_variant(self):
        with pytest.raises(InvalidArgumentError, match="Unknown even-sorter variant"):
            full_helicity_sorter(make_basis(2), "magic")

    def test_explicit_depth_too_small(self):
        with pytest.raises(CapacityError):
            full_helicity_sorter(make_basis(4), "cascade", depth=2)

    def test_inverse_recombines(self):
        c = full_helicity_sorter(make_basis(3))
        round_trip = compose(c, c.inverse())
        np.testing.assert_allclose(round_trip.unitary, np.eye(round_trip.unitary.shape[0]), atol=1e-12)

    def test_split_mode_breaks_phase_ledger(self):
        with pytest.raises(InvariantViolation, match="split"):
            phase_ledger(partial_helicity_sorter(np.pi / 4, make_basis(2)))

    def test_helicity_check_fails_on_plain_sorter(self):
        c = oam_sorter(np.pi / 2, make_basis(2))
        c = Circuit(c.name, c.elements, c.n_paths, c.basis, c.in_ports, {"+": 0, "-": 1})
        with pytest.raises(InvariantViolation, match="routed"):
            verify_helicity_routing(c)


class TestGates:
    @pytest.fixture(scope="class")
    def basis(self):
        return make_basis(3)

    def test_hx(self, basis):
        verify_gate(gate_hx(basis), hx_matrix(3))

    def test_hy(self, basis):
        verify_gate(gate_hy(basis), hy_matrix(3))

    @pytest.mark.parametrize("theta", [np.pi / 2, np.pi])
    def test_phase(self, basis, theta):
        verify_gate(gate_phase(theta, basis), phase_matrix(theta, 3))

    def test_hy_is_phase_hx_phase(self):
        p = phase_matrix(np.pi / 2, 4)
        np.testing.assert_allclose(p @ hx_matrix(4) @ p, hy_matrix(4), atol=1e-12)

    def test_hy_equals_three_gate_composition(self, basis):
        three = compose(gate_phase(np.pi / 2, basis), gate_hx(basis), gate_phase(np.pi / 2, basis))
        compact = gate_hy(basis)
        np.testing.assert_allclose(
            port_matrix(compact, "in", "out"), port_matrix(three, "in", "out"), atol=1e-10
        )

    def test_slm_variant_gates(self, basis):
        verify_gate(gate_hx(basis, "slm"), hx_matrix(3))

    def test_wrong_target_fails(self, basis):
        with pytest.raises(InvariantViolation, match="differs"):
            verify_gate(gate_hx(basis), hy_matrix(3))


class TestCircuitPlumbing:
    def test_builder_rejects_unallocated_path(self):
        with pytest.raises(InvalidArgumentError, match="not allocated"):
            CircuitBuilder(make_basis(1)).beam_splitter(0, 1)

    def test_basis_chain_must_close(self):
        b = make_basis(2)
        builder = CircuitBuilder(b, 1).slm_shift(1, [0], b.widened(1))
        with pytest.raises(InvalidArgumentError, match="does not return"):
            builder.build("open")

    def test_element_on_wrong_rail(self):
        b = make_basis(2)
        with pytest.raises(InvalidArgumentError, match="is on 2 paths"):
            Circuit("x", (dove_prism_pair(0.1, 1, b),), 3, b)

    def test_unknown_port(self):
        with pytest.raises(InvalidArgumentError, match="no output port"):
            oam_sorter(0.1, make_basis(1)).path_of("+")

    def test_cannot_shrink(self):
        with pytest.raises(InvalidArgumentError, match="shrink"):
            oam_sorter(0.1, make_basis(1)).with_n_paths(1)

    def test_compose_pads_rails(self):
        b = make_basis(2)
        c = compose(gate_phase(np.pi, b), oam_sorter(np.pi / 2, b))
        assert c.n_paths == gate_phase(np.pi, b).n_paths
        assert c.out_ports == {"a": 0, "b": 1}

    def test_compose_nothing(self):
        with pytest.raises(InvalidArgumentError, match="Nothing"):
            compose()

    def test_routing_norms(self):
        c = partial_helicity_sorter(0.37, make_basis(3))
        for norm in routing_table(c).norms().values():
            assert norm == pytest.approx(1.0)
