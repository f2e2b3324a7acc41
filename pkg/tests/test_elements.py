import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oamtomo.elements import (
    beam_splitter,
    dove_prism,
    dove_prism_pair,
    gouy_stack,
    make_element,
    path_swap,
    phase_plate,
    slm_shift,
)
from oamtomo.errors import CapacityError, InvalidArgumentError
from oamtomo.hilbert import make_basis
from oamtomo.models import ModeIndex

angles = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)


@pytest.fixture()
def basis():
    return make_basis(3)


def column(el, mode, path=0):
    """Output amplitudes of a unit input on (path, mode)."""
    return el.matrix[:, path * el.basis_in.dim + el.basis_in.index(mode)]


class TestDovePrism:
    def test_flips_and_phases(self, basis):
        beta = 0.3
        out = column(dove_prism(beta, 0, basis), 2)
        assert out[basis.index(-2)] == pytest.approx(np.exp(2j * 2 * beta))
        assert np.count_nonzero(out) == 1

    def test_needs_symmetric_basis(self):
        b = make_basis(2)
        half = type(b)(b.ell_max, False, 0, b.ordering[:2])
        with pytest.raises(InvalidArgumentError, match="symmetric"):
            dove_prism(0.1, 0, half)

    @settings(max_examples=30, deadline=None)
    @given(beta=angles)
    def test_self_inverse(self, beta):
        basis = make_basis(3)
        el = dove_prism(beta, 0, basis)
        np.testing.assert_allclose(el.inverse().matrix @ el.matrix, np.eye(basis.dim), atol=1e-12)

    def test_pair_equals_two_prisms(self, basis):
        beta = 0.7
        pair = dove_prism_pair(beta, 0, basis).matrix
        two = dove_prism(0.0, 0, basis).matrix @ dove_prism(beta, 0, basis).matrix
        np.testing.assert_allclose(pair, two, atol=1e-12)

    def test_costs(self, basis):
        assert dove_prism(0.1, 0, basis).cost == 1
        assert dove_prism_pair(0.1, 0, basis).cost == 2


class TestGouyStack:
    def test_phase_depends_on_order(self):
        b = make_basis(2, include_p=True, p_max=1)
        alpha = 0.4
        el = gouy_stack(alpha, 0, b)
        for i, m in enumerate(b.ordering):
            expected = np.exp(1j * (abs(m.ell) + 2 * m.p + 1) * alpha)
            assert el.matrix[i, i] == pytest.approx(expected)
        assert el.cost == 3

    @settings(max_examples=30, deadline=None)
    @given(alpha=angles, beta=angles)
    def test_commutes_with_dove_prisms(self, alpha, beta):
        b = make_basis(3, include_p=True, p_max=1)
        g = gouy_stack(alpha, 0, b).matrix
        for prism in (dove_prism_pair(beta, 0, b), dove_prism(beta, 0, b)):
            np.testing.assert_allclose(g @ prism.matrix, prism.matrix @ g, atol=1e-12)

    def test_inverse_negates_alpha(self, basis):
        el = gouy_stack(0.9, 0, basis)
        assert el.inverse().params["alpha"] == -0.9
        np.testing.assert_allclose(el.inverse().matrix, el.matrix.conj().T)


class TestBeamSplitter:
    def test_sign_convention(self, basis):
        bs = beam_splitter(0, 1, basis)
        d = basis.dim
        a_in = column(bs, 1, path=0)
        b_in = column(bs, 1, path=1)
        i = basis.index(1)
        assert a_in[i] == pytest.approx(1 / np.sqrt(2))
        assert a_in[d + i] == pytest.approx(1 / np.sqrt(2))
        assert b_in[i] == pytest.approx(1 / np.sqrt(2))
        assert b_in[d + i] == pytest.approx(-1 / np.sqrt(2))

    def test_unitary_and_self_inverse(self, basis):
        bs = beam_splitter(0, 2, basis, n_paths=3)
        assert bs.is_unitary()
        np.testing.assert_allclose(bs.matrix @ bs.matrix, np.eye(3 * basis.dim), atol=1e-12)

    def test_same_path_raises(self, basis):
        with pytest.raises(InvalidArgumentError, match="distinct"):
            beam_splitter(1, 1, basis)

    def test_path_out_of_range_raises(self, basis):
        with pytest.raises(InvalidArgumentError, match="out of range"):
            beam_splitter(0, 3, basis, n_paths=2)


class TestOtherElements:
    def test_phase_plate(self, basis):
        el = phase_plate(np.pi, 1, basis, n_paths=2)
        d = basis.dim
        np.testing.assert_allclose(np.diag(el.matrix)[:d], 1)
        np.testing.assert_allclose(np.diag(el.matrix)[d:], -1, atol=1e-15)

    def test_path_swap(self, basis):
        el = path_swap(0, 1, basis)
        out = column(el, -3, path=0)
        assert out[basis.dim + basis.index(-3)] == 1

    def test_unknown_kind(self, basis):
        with pytest.raises(InvalidArgumentError, match="Unknown element kind"):
            make_element("LENS", {}, (0,), basis)

    def test_missing_parameter(self, basis):
        with pytest.raises(InvalidArgumentError, match="needs parameter"):
            make_element("DP", {}, (0,), basis)

    def test_single_path_element_on_two_paths(self, basis):
        with pytest.raises(InvalidArgumentError, match="single path"):
            make_element("PHASE", {"theta": 0.1}, (0, 1), basis)

    def test_unlisted_paths_are_untouched(self, basis):
        el = dove_prism_pair(0.5, 1, basis, n_paths=3)
        d = basis.dim
        np.testing.assert_allclose(el.matrix[:d, :d], np.eye(d))
        np.testing.assert_allclose(el.matrix[2 * d :, 2 * d :], np.eye(d))


class TestSlmShift:
    def test_shift_into_widened_basis(self, basis):
        el = slm_shift(1, 0, basis)
        assert el.basis_out == basis.widened(1)
        out = column(el, -1)
        assert out[el.basis_out.index(ModeIndex(0))] == 1
        assert el.is_isometry()
        assert el.cost == 1

    def test_restore_is_inverse(self, basis):
        up = slm_shift(1, (0, 1), basis, n_paths=2)
        down = up.inverse()
        assert down.basis_out == basis
        assert down.params["k"] == -1
        np.testing.assert_allclose(down.matrix @ up.matrix, np.eye(2 * basis.dim), atol=1e-12)
        assert up.cost == 2

    def test_no_room_raises(self, basis):
        with pytest.raises(CapacityError, match="does not fit"):
            slm_shift(1, 0, basis, basis_out=basis)
