"""Truncated OAM Hilbert space: bases, rail states, projections and distances.

The rail basis is (path x mode), path-major. Tomography bases use the ordering
|1>,|2>,..,|n>,|-1>,|-2>,..,|-n>, so a density matrix over such a basis has the
block form [[rho_plus, sigma], [sigma^dagger, rho_minus]].
"""

from __future__ import annotations

import logging
from collections.abc import Mapping

import numpy as np
import scipy.linalg

from oamtomo.const import FIDELITY_ATOL
from oamtomo.errors import InvalidArgumentError, PreconditionError
from oamtomo.models import (
    BasisSpec,
    BlockDecomposition,
    ModeIndex,
    RailDensity,
    RailState,
    canonical_ordering,
)

_log = logging.getLogger(__name__)


def make_basis(
    ell_max: int,
    include_p: bool = False,
    p_max: int = 0,
    *,
    include_zero: bool = False,
    parity: str | None = None,
) -> BasisSpec:
    """Return the canonical truncated basis.

    Args:
        ell_max:      largest |ell| in the basis, >= 1
        include_p:    whether radial modes p = 0..p_max are included
        p_max:        largest radial index (ignored when include_p is False)
        include_zero: add ell=0 (general circuit simulation only)
        parity:       keep only 'even' or 'odd' |ell| (None keeps all)
    Raises:
        InvalidArgumentError: ell_max < 1 or p_max < 0

    >>> [str(m) for m in make_basis(2).ordering]
    ['1', '2', '-1', '-2']
    """
    if ell_max < 1:
        raise InvalidArgumentError("ell_max must be ≥ 1")
    if include_p and p_max < 0:
        raise InvalidArgumentError("p_max must be ≥ 0")
    p_max = p_max if include_p else 0
    ordering = canonical_ordering(ell_max, p_max, include_zero=include_zero, parity=parity)
    if not ordering:
        raise InvalidArgumentError(f"No {parity} modes with |ell| <= {ell_max}")
    return BasisSpec(ell_max=ell_max, include_p=include_p, p_max=p_max, ordering=ordering)


def pure_state(
    basis: BasisSpec,
    amplitudes: Mapping[int | ModeIndex, complex],
    path: int = 0,
    n_paths: int = 1,
    normalize: bool = True,
) -> RailState:
    """Return sum_l c_l |path>|l> for the given mode amplitudes."""
    if not 0 <= path < n_paths:
        raise InvalidArgumentError(f"Path {path} out of range (n_paths={n_paths})")
    amps = np.zeros(n_paths * basis.dim, dtype=complex)
    for mode, c in amplitudes.items():
        amps[path * basis.dim + basis.index(mode)] = c
    if normalize:
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise InvalidArgumentError("Cannot normalize the zero state")
        amps /= norm
    return RailState(basis, n_paths, amps)


def density_on_path(
    rho: np.ndarray, basis: BasisSpec, path: int = 0, n_paths: int = 1
) -> RailDensity:
    """Embed a mode-space density matrix on a single path of the rail."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (basis.dim, basis.dim):
        raise InvalidArgumentError(
            f"Expected a {basis.dim}x{basis.dim} matrix, got {rho.shape}"
        )
    if not 0 <= path < n_paths:
        raise InvalidArgumentError(f"Path {path} out of range (n_paths={n_paths})")
    d = basis.dim
    full = np.zeros((n_paths * d, n_paths * d), dtype=complex)
    full[path * d : (path + 1) * d, path * d : (path + 1) * d] = rho
    return RailDensity(basis, n_paths, full)


def is_physical(rho: np.ndarray, atol: float = 1e-12, psd_atol: float = 1e-10) -> bool:
    """Hermitian within `atol`, unit trace within `atol`, eigenvalues >= -psd_atol."""
    rho = np.asarray(rho, dtype=complex)
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > atol:
        return False
    if abs(np.trace(rho) - 1) > atol:
        return False
    return bool(scipy.linalg.eigvalsh(_hermitize(rho))[0] >= -psd_atol)


def project_subspace(rho: RailDensity, which: str, path: int = 0) -> np.ndarray:
    """Return P rho P on one path, restricted to the positive or negative modes.

    The result is not renormalized: its trace is the probability of finding
    the light on `path` with the chosen helicity.

    Raises:
        InvalidArgumentError: unknown `which`, or path out of range
    """
    block = rho.path_block(path)
    if which == "positive":
        idx = rho.basis.positive_indices()
    elif which == "negative":
        idx = rho.basis.negative_indices()
    else:
        raise InvalidArgumentError(f"which must be 'positive' or 'negative', got '{which}'")
    return block[np.ix_(idx, idx)].copy()


def block_decompose(rho: np.ndarray) -> BlockDecomposition:
    """Split a 2n x 2n matrix into its helicity blocks.

    The lower-left block is kept only when it differs from sigma^dagger, so
    `block_assemble` restores any input exactly.

    Raises:
        InvalidArgumentError: matrix not square, or odd side
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidArgumentError(f"Expected a square matrix, got shape {rho.shape}")
    if rho.shape[0] % 2:
        raise InvalidArgumentError(f"Expected an even dimension, got {rho.shape[0]}")
    n = rho.shape[0] // 2
    sigma = rho[:n, n:].copy()
    lower = rho[n:, :n]
    return BlockDecomposition(
        rho_plus=rho[:n, :n].copy(),
        rho_minus=rho[n:, n:].copy(),
        sigma=sigma,
        sigma_lower=None if np.array_equal(lower, sigma.conj().T) else lower.copy(),
    )


def block_assemble(b: BlockDecomposition) -> np.ndarray:
    """Inverse of `block_decompose`; the lower-left block defaults to sigma^dagger."""
    lower = b.sigma.conj().T if b.sigma_lower is None else b.sigma_lower
    return np.block([[b.rho_plus, b.sigma], [lower, b.rho_minus]])


def fidelity(rho: np.ndarray, sigma: np.ndarray, atol: float = FIDELITY_ATOL) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Raises:
        PreconditionError: an input is not a density matrix within `atol`
    """
    rho = _checked_state(rho, atol, "rho")
    sigma = _checked_state(sigma, atol, "sigma")
    w, v = scipy.linalg.eigh(rho)
    sqrt_rho = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    inner = _hermitize(sqrt_rho @ sigma @ sqrt_rho)
    ev = np.clip(scipy.linalg.eigvalsh(inner), 0, None)
    return float(np.clip(np.sum(np.sqrt(ev)) ** 2, 0.0, 1.0))


def trace_distance(rho: np.ndarray, sigma: np.ndarray, atol: float = FIDELITY_ATOL) -> float:
    """Half the trace norm of rho - sigma.

    Raises:
        PreconditionError: an input is not a density matrix within `atol`
    """
    rho = _checked_state(rho, atol, "rho")
    sigma = _checked_state(sigma, atol, "sigma")
    ev = scipy.linalg.eigvalsh(_hermitize(rho - sigma))
    return float(np.clip(0.5 * np.sum(np.abs(ev)), 0.0, 1.0))


def nearest_psd(matrix: np.ndarray, trace: float | None = None) -> np.ndarray:
    """Nearest positive semidefinite matrix (Frobenius norm), renormalized.

    The Hermitian part is eigen-decomposed and negative eigenvalues are set to
    zero. The result is rescaled to `trace` (default: the input trace). A
    matrix without positive eigenvalues, or a non-positive target trace,
    gives the zero matrix.
    """
    h = _hermitize(np.asarray(matrix, dtype=complex))
    w, v = scipy.linalg.eigh(h)
    trace = float(np.trace(h).real) if trace is None else trace
    clipped = np.clip(w, 0, None)
    if clipped.sum() == 0 or trace <= 0:
        _log.warning("Nothing positive left to keep; returning the zero matrix")
        return np.zeros_like(h)
    if np.any(w < 0):
        _log.debug(f"Clamping {int(np.sum(w < 0))} negative eigenvalue(s), min {w[0]:.3g}")
    out = (v * clipped) @ v.conj().T
    return _hermitize(out * (trace / clipped.sum()))


def random_density(
    dim: int, rank: int | None = None, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Random density matrix of the given rank from a complex Ginibre matrix."""
    rng = rng if rng is not None else np.random.default_rng()
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise InvalidArgumentError(f"rank must be in [1, {dim}], got {rank}")
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return _hermitize(rho / np.trace(rho).real)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def _checked_state(m: np.ndarray, atol: float, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise PreconditionError(f"{name} must be a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > atol:
        raise PreconditionError(f"{name} is not Hermitian within {atol}")
    m = _hermitize(m)
    if abs(np.trace(m).real - 1) > atol:
        raise PreconditionError(f"{name} has trace {np.trace(m).real:.12g}, expected 1")
    lowest = scipy.linalg.eigvalsh(m)[0]
    if lowest < -atol:
        raise PreconditionError(f"{name} is not positive semidefinite (eigenvalue {lowest:.3g})")
    return m
