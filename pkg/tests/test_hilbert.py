import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oamtomo.errors import InvalidArgumentError, PreconditionError
from oamtomo.hilbert import (
    block_assemble,
    block_decompose,
    density_on_path,
    fidelity,
    is_physical,
    make_basis,
    nearest_psd,
    project_subspace,
    pure_state,
    random_density,
    trace_distance,
)
from oamtomo.models import ModeIndex, RailDensity


class TestMakeBasis:
    def test_canonical_ordering(self):
        b = make_basis(3)
        assert [m.ell for m in b.ordering] == [1, 2, 3, -1, -2, -3]
        assert b.dim == 6
        assert b.is_tomography_basis()

    def test_with_radial_modes(self):
        b = make_basis(1, include_p=True, p_max=1)
        assert b.ordering == (ModeIndex(1, 0), ModeIndex(1, 1), ModeIndex(-1, 0), ModeIndex(-1, 1))
        assert not b.is_tomography_basis()

    def test_zero_goes_last(self):
        b = make_basis(2, include_zero=True)
        assert b.ordering[-1] == ModeIndex(0)
        assert b.has_zero

    def test_parity(self):
        assert [m.ell for m in make_basis(5, parity="even").ordering] == [2, 4, -2, -4]
        assert [m.ell for m in make_basis(3, parity="odd").ordering] == [1, 3, -1, -3]

    def test_ell_max_zero_raises(self):
        with pytest.raises(InvalidArgumentError, match="ell_max must be ≥ 1"):
            make_basis(0)

    def test_empty_parity_raises(self):
        with pytest.raises(InvalidArgumentError, match="No even modes"):
            make_basis(1, parity="even")

    def test_widened(self):
        w = make_basis(2).widened(1)
        assert w.ell_max == 3
        assert ModeIndex(0) in w and ModeIndex(-3) in w

    def test_index_of_unknown_mode_raises(self):
        with pytest.raises(InvalidArgumentError, match="not in the basis"):
            make_basis(2).index(5)


class TestStates:
    def test_pure_state_normalized(self):
        s = pure_state(make_basis(2), {1: 1, -1: 1})
        assert s.norm2 == pytest.approx(1.0)
        assert s.amplitudes[0] == pytest.approx(1 / np.sqrt(2))
        assert s.amplitudes[2] == pytest.approx(1 / np.sqrt(2))

    def test_pure_state_on_second_path(self):
        b = make_basis(1)
        s = pure_state(b, {-1: 1}, path=1, n_paths=2)
        assert np.flatnonzero(s.amplitudes).tolist() == [3]

    def test_zero_state_raises(self):
        with pytest.raises(InvalidArgumentError, match="zero state"):
            pure_state(make_basis(1), {1: 0})

    def test_density_on_path_embeds_block(self):
        b = make_basis(1)
        rho = np.diag([0.25, 0.75])
        rd = density_on_path(rho, b, path=1, n_paths=2)
        assert rd.trace == pytest.approx(1.0)
        np.testing.assert_allclose(rd.path_block(1), rho)
        np.testing.assert_allclose(rd.path_block(0), 0)

    def test_density_wrong_shape_raises(self):
        with pytest.raises(InvalidArgumentError, match="Expected a 4x4"):
            density_on_path(np.eye(3) / 3, make_basis(2))

    def test_is_physical(self):
        assert is_physical(np.diag([0.5, 0.5]))
        assert not is_physical(np.diag([1.5, -0.5]))
        assert not is_physical(np.array([[0.5, 0.1], [0.2, 0.5]]))
        assert not is_physical(np.diag([0.5, 0.4]))


class TestProjectSubspace:
    def test_positive_of_ell_one(self):
        b = make_basis(2)
        rho = pure_state(b, {1: 1}).density()
        mu = project_subspace(rho, "positive")
        nu = project_subspace(rho, "negative")
        np.testing.assert_allclose(mu, np.diag([1, 0]))
        np.testing.assert_allclose(nu, 0)

    def test_superposition_splits_probability(self):
        b = make_basis(1)
        rho = pure_state(b, {1: 1, -1: 1}).density()
        assert np.trace(project_subspace(rho, "positive")).real == pytest.approx(0.5)
        assert np.trace(project_subspace(rho, "negative")).real == pytest.approx(0.5)

    def test_unknown_subspace_raises(self):
        rho = RailDensity(make_basis(1), 1, np.eye(2) / 2)
        with pytest.raises(InvalidArgumentError, match="positive' or 'negative"):
            project_subspace(rho, "both")


class TestBlocks:
    def test_roundtrip(self):
        rho = random_density(6, rng=np.random.default_rng(1))
        np.testing.assert_allclose(block_assemble(block_decompose(rho)), rho)

    def test_hermitian_input_needs_no_lower_block(self):
        rho = random_density(4, rng=np.random.default_rng(3))
        rho = (rho + rho.conj().T) / 2
        assert block_decompose(rho).sigma_lower is None

    def test_roundtrip_keeps_non_hermitian_input(self):
        m = np.arange(16).reshape(4, 4)
        b = block_decompose(m)
        np.testing.assert_array_equal(b.sigma_lower, [[8, 9], [12, 13]])
        np.testing.assert_array_equal(block_assemble(b), m)

    @given(st.integers(1, 4), st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_roundtrip_is_exact_for_any_matrix(self, n, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(2 * n, 2 * n)) + 1j * rng.normal(size=(2 * n, 2 * n))
        np.testing.assert_array_equal(block_assemble(block_decompose(m)), m)

    def test_sigma_block_position(self):
        rho = pure_state(make_basis(1), {1: 1, -1: 1j}).density().matrix
        assert block_decompose(rho).sigma[0, 0] == pytest.approx(-0.5j)

    def test_odd_dimension_raises(self):
        with pytest.raises(InvalidArgumentError, match="even dimension"):
            block_decompose(np.eye(3))

    def test_non_square_raises(self):
        with pytest.raises(InvalidArgumentError, match="square"):
            block_decompose(np.ones((2, 4)))


class TestFidelity:
    def test_identical_states(self):
        rho = random_density(4, rng=np.random.default_rng(2))
        assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-10)
        assert trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-10)

    def test_orthogonal_states(self):
        a, b = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        assert fidelity(a, b) == pytest.approx(0.0, abs=1e-12)
        assert trace_distance(a, b) == pytest.approx(1.0)

    def test_pure_overlap(self):
        plus = np.full((2, 2), 0.5)
        zero = np.diag([1.0, 0.0])
        assert fidelity(plus, zero) == pytest.approx(0.5)

    def test_non_unit_trace_raises(self):
        with pytest.raises(PreconditionError, match="trace"):
            fidelity(np.eye(2), np.eye(2) / 2)

    def test_non_hermitian_raises(self):
        with pytest.raises(PreconditionError, match="Hermitian"):
            trace_distance(np.array([[0.5, 0.3], [0.0, 0.5]]), np.eye(2) / 2)

    def test_negative_eigenvalue_raises(self):
        with pytest.raises(PreconditionError, match="positive semidefinite"):
            fidelity(np.diag([1.2, -0.2]), np.eye(2) / 2)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dim=st.integers(2, 6))
    def test_fidelity_symmetric_and_bounded(self, seed, dim):
        rng = np.random.default_rng(seed)
        a, b = random_density(dim, rng=rng), random_density(dim, rng=rng)
        f = fidelity(a, b)
        assert 0.0 <= f <= 1.0
        assert f == pytest.approx(fidelity(b, a), abs=1e-8)
        # Fuchs-van de Graaf
        assert 1 - np.sqrt(f) <= trace_distance(a, b) + 1e-8


class TestNearestPsd:
    def test_psd_input_unchanged(self):
        rho = random_density(4, rng=np.random.default_rng(3))
        np.testing.assert_allclose(nearest_psd(rho), rho, atol=1e-12)

    def test_clamps_and_keeps_trace(self):
        m = np.diag([0.7, 0.5, -0.2])
        out = nearest_psd(m)
        assert np.trace(out).real == pytest.approx(1.0)
        assert np.linalg.eigvalsh(out).min() >= -1e-14
        np.testing.assert_allclose(np.diag(out).real, [0.7 / 1.2, 0.5 / 1.2, 0.0])

    def test_target_trace(self):
        out = nearest_psd(np.diag([0.2, -0.1]), trace=1.0)
        np.testing.assert_allclose(out, np.diag([1.0, 0.0]), atol=1e-14)

    def test_nothing_positive_gives_zero(self):
        np.testing.assert_allclose(nearest_psd(-np.eye(2)), 0)
        np.testing.assert_allclose(nearest_psd(np.zeros((2, 2))), 0)


class TestRandomDensity:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dim=st.integers(1, 8), data=st.data())
    def test_is_physical_with_rank(self, seed, dim, data):
        rank = data.draw(st.integers(1, dim))
        rho = random_density(dim, rank, np.random.default_rng(seed))
        assert is_physical(rho, atol=1e-10)
        assert np.linalg.matrix_rank(rho, tol=1e-10) == rank

    def test_bad_rank_raises(self):
        with pytest.raises(InvalidArgumentError, match="rank"):
            random_density(2, 3)
