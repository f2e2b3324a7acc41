"""Primitive optical elements as exact matrices on the rail basis.

An element acts on one or two paths of an `n_paths`-path rail; every other
path carries the identity. All elements are unitary except the SLM shift,
which maps between a basis and its widened version (isometry one way,
co-isometry the other).
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from oamtomo.const import UNITARY_ATOL
from oamtomo.errors import CapacityError, InvalidArgumentError
from oamtomo.models import BasisSpec, ModeIndex

_log = logging.getLogger(__name__)

DOVE_PRISM = "DP"
DOVE_PRISM_PAIR = "DP_PAIR"
BEAM_SPLITTER = "BS"
GOUY_STACK = "GOUY"
SLM_SHIFT = "SLM"
PHASE_PLATE = "PHASE"
PATH_SWAP = "SWAP"


@dataclass(frozen=True, eq=False)
class OpticalElement:
    """A single optical component placed on the rail.

    `matrix` maps amplitudes over (n_paths x basis_in) to (n_paths x basis_out),
    path-major. `params` holds the element's angles or shift, keyed by name.
    """

    kind: str
    params: Mapping[str, float]
    paths: tuple[int, ...]
    basis_in: BasisSpec
    basis_out: BasisSpec
    n_paths: int
    matrix: np.ndarray = field(repr=False)
    cost: int

    def is_unitary(self, atol: float = UNITARY_ATOL) -> bool:
        m = self.matrix
        return m.shape[0] == m.shape[1] and np.allclose(
            m @ m.conj().T, np.eye(m.shape[0]), rtol=0, atol=atol
        )

    def is_isometry(self, atol: float = UNITARY_ATOL) -> bool:
        m = self.matrix
        return np.allclose(m.conj().T @ m, np.eye(m.shape[1]), rtol=0, atol=atol)

    def inverse(self) -> OpticalElement:
        """Return the mirrored element, whose matrix is this matrix's adjoint."""
        params = dict(self.params)
        for name in _NEGATED_ON_INVERSE.get(self.kind, ()):
            params[name] = -params[name]
        return make_element(
            self.kind, params, self.paths, self.basis_out, self.basis_in, self.n_paths
        )

    def with_n_paths(self, n_paths: int) -> OpticalElement:
        """Return the same element placed on a rail with `n_paths` paths."""
        if n_paths == self.n_paths:
            return self
        return make_element(
            self.kind, self.params, self.paths, self.basis_in, self.basis_out, n_paths
        )

    def relocated(self, path_map: Mapping[int, int], n_paths: int) -> OpticalElement:
        """Return the element moved onto other paths, e.g. when embedding a sub-circuit."""
        paths = tuple(path_map[p] for p in self.paths)
        return make_element(self.kind, self.params, paths, self.basis_in, self.basis_out, n_paths)


# *** constructors ***


def dove_prism(beta: float, path: int, basis: BasisSpec, n_paths: int | None = None) -> OpticalElement:
    """Dove prism rotated by `beta`: |l> -> exp(2i l beta) |-l>.

    Raises:
        InvalidArgumentError: basis not symmetric in +-l
    """
    return make_element(DOVE_PRISM, {"beta": beta}, (path,), basis, basis, n_paths)


def dove_prism_pair(
    relative_angle: float, path: int, basis: BasisSpec, n_paths: int | None = None
) -> OpticalElement:
    """Two Dove prisms at a relative angle: |l> -> exp(2i l beta) |l>.

    Same matrix as `dove_prism(0) @ dove_prism(relative_angle)`.
    """
    return make_element(DOVE_PRISM_PAIR, {"beta": relative_angle}, (path,), basis, basis, n_paths)


def gouy_stack(alpha: float, path: int, basis: BasisSpec, n_paths: int | None = None) -> OpticalElement:
    """Three-lens Gouy phase stack: |l,p> -> exp(i(|l|+2p+1)alpha) |l,p>."""
    return make_element(GOUY_STACK, {"alpha": alpha}, (path,), basis, basis, n_paths)


def beam_splitter(
    path_a: int, path_b: int, basis: BasisSpec, n_paths: int | None = None
) -> OpticalElement:
    """Balanced beam splitter: |a> -> (|a>+|b>)/sqrt2, |b> -> (|a>-|b>)/sqrt2.

    Raises:
        InvalidArgumentError: path_a == path_b
    """
    return make_element(BEAM_SPLITTER, {}, (path_a, path_b), basis, basis, n_paths)


def path_swap(path_a: int, path_b: int, basis: BasisSpec, n_paths: int | None = None) -> OpticalElement:
    return make_element(PATH_SWAP, {}, (path_a, path_b), basis, basis, n_paths)


def phase_plate(theta: float, path: int, basis: BasisSpec, n_paths: int | None = None) -> OpticalElement:
    """Multiply all amplitudes on `path` by exp(i theta)."""
    return make_element(PHASE_PLATE, {"theta": theta}, (path,), basis, basis, n_paths)


def slm_shift(
    k: int,
    path: int | Sequence[int],
    basis_in: BasisSpec,
    basis_out: BasisSpec | None = None,
    n_paths: int | None = None,
) -> OpticalElement:
    """SLM phase mask shifting |l> -> |l+k> on the given path(s).

    Paths without a mask keep their modes, relabelled into `basis_out`.
    `basis_out` defaults to `basis_in.widened(|k|)`. The element must be
    either an isometry (every shifted input mode exists in `basis_out`) or a
    co-isometry (every `basis_out` mode has a preimage); the latter restores
    a widened basis to the original one.

    Raises:
        CapacityError: `basis_out` can hold neither direction of the shift
    """
    paths = (path,) if isinstance(path, (int, np.integer)) else tuple(path)
    if basis_out is None:
        basis_out = basis_in.widened(abs(int(k)))
    return make_element(SLM_SHIFT, {"k": int(k)}, paths, basis_in, basis_out, n_paths)


def make_element(
    kind: str,
    params: Mapping[str, float],
    paths: Sequence[int],
    basis_in: BasisSpec,
    basis_out: BasisSpec | None = None,
    n_paths: int | None = None,
) -> OpticalElement:
    """Build any element from its kind and parameters (also used by the netlist reader).

    Raises:
        InvalidArgumentError: unknown kind, missing parameter or bad path indices
    """
    if kind not in _BUILDERS:
        raise InvalidArgumentError(
            f"Unknown element kind '{kind}'; expected one of {', '.join(_BUILDERS)}"
        )
    paths = tuple(int(p) for p in paths)
    n_paths = max(paths) + 1 if n_paths is None else n_paths
    basis_out = basis_in if basis_out is None else basis_out
    _check_paths(kind, paths, n_paths)
    missing = [name for name in _PARAMS[kind] if name not in params]
    if missing:
        raise InvalidArgumentError(f"{kind} needs parameter(s) {', '.join(missing)}")
    params = {name: params[name] for name in _PARAMS[kind]}
    if kind != SLM_SHIFT and basis_out != basis_in:
        raise InvalidArgumentError(f"{kind} can not change the mode basis")

    matrix = _BUILDERS[kind](params, paths, basis_in, basis_out, n_paths)
    matrix.setflags(write=False)
    cost = len(paths) if kind == SLM_SHIFT else _COSTS[kind]
    _log.debug(f"Built {kind} {params} on paths {paths} of {n_paths}")
    return OpticalElement(kind, params, paths, basis_in, basis_out, n_paths, matrix, cost)


# *** matrix builders ***


def _check_paths(kind: str, paths: tuple[int, ...], n_paths: int):
    if not paths:
        raise InvalidArgumentError(f"{kind} needs at least one path")
    if any(p < 0 or p >= n_paths for p in paths):
        raise InvalidArgumentError(f"{kind} path(s) {paths} out of range (n_paths={n_paths})")
    if len(set(paths)) != len(paths):
        raise InvalidArgumentError(f"{kind} needs distinct paths, got {paths}")
    if kind in (BEAM_SPLITTER, PATH_SWAP) and len(paths) != 2:
        raise InvalidArgumentError(f"{kind} acts on exactly two paths, got {paths}")
    if kind not in (BEAM_SPLITTER, PATH_SWAP, SLM_SHIFT) and len(paths) != 1:
        raise InvalidArgumentError(f"{kind} acts on a single path, got {paths}")


def _ells(basis: BasisSpec) -> np.ndarray:
    return np.array([m.ell for m in basis.ordering])


def _radials(basis: BasisSpec) -> np.ndarray:
    return np.array([m.p for m in basis.ordering])


def _on_paths(mode_op: np.ndarray, paths, basis_in, basis_out, n_paths) -> np.ndarray:
    """Block-diagonal rail matrix: `mode_op` on `paths`, relabelling elsewhere."""
    rest = _relabel(basis_in, basis_out)
    return scipy.linalg.block_diag(*(mode_op if j in paths else rest for j in range(n_paths)))


def _between_paths(path_op: np.ndarray, paths, basis, n_paths) -> np.ndarray:
    full = np.eye(n_paths, dtype=complex)
    full[np.ix_(paths, paths)] = path_op
    return np.kron(full, np.eye(basis.dim))


def _relabel(basis_in: BasisSpec, basis_out: BasisSpec) -> np.ndarray:
    m = np.zeros((basis_out.dim, basis_in.dim), dtype=complex)
    for j, mode in enumerate(basis_in.ordering):
        if mode in basis_out:
            m[basis_out.index(mode), j] = 1
    return m


def _build_dove_prism(params, paths, basis_in, basis_out, n_paths):
    if not basis_in.is_symmetric():
        raise InvalidArgumentError("Dove prism needs a basis symmetric in ±ell")
    op = np.zeros((basis_in.dim, basis_in.dim), dtype=complex)
    for j, m in enumerate(basis_in.ordering):
        op[basis_in.index(ModeIndex(-m.ell, m.p)), j] = np.exp(2j * m.ell * params["beta"])
    return _on_paths(op, paths, basis_in, basis_out, n_paths)


def _build_dove_prism_pair(params, paths, basis_in, basis_out, n_paths):
    op = np.diag(np.exp(2j * _ells(basis_in) * params["beta"]))
    return _on_paths(op, paths, basis_in, basis_out, n_paths)


def _build_gouy_stack(params, paths, basis_in, basis_out, n_paths):
    order = np.abs(_ells(basis_in)) + 2 * _radials(basis_in) + 1
    op = np.diag(np.exp(1j * order * params["alpha"]))
    return _on_paths(op, paths, basis_in, basis_out, n_paths)


def _build_phase_plate(params, paths, basis_in, basis_out, n_paths):
    op = np.exp(1j * params["theta"]) * np.eye(basis_in.dim, dtype=complex)
    return _on_paths(op, paths, basis_in, basis_out, n_paths)


def _build_beam_splitter(params, paths, basis_in, basis_out, n_paths):
    return _between_paths(np.array([[1, 1], [1, -1]]) / np.sqrt(2), list(paths), basis_in, n_paths)


def _build_path_swap(params, paths, basis_in, basis_out, n_paths):
    return _between_paths(np.array([[0, 1], [1, 0]]), list(paths), basis_in, n_paths)


def _build_slm_shift(params, paths, basis_in, basis_out, n_paths):
    k = int(params["k"])
    shifted = {m: ModeIndex(m.ell + k, m.p) for m in basis_in.ordering}
    isometry = all(s in basis_out for s in shifted.values()) and all(
        m in basis_out for m in basis_in.ordering
    )
    co_isometry = all(ModeIndex(m.ell - k, m.p) in basis_in for m in basis_out.ordering) and all(
        m in basis_in for m in basis_out.ordering
    )
    if not (isometry or co_isometry):
        raise CapacityError(
            f"SLM shift by {k:+d} does not fit: output basis with ell_max="
            f"{basis_out.ell_max} can not hold the shifted modes of ell_max={basis_in.ell_max}"
        )
    op = np.zeros((basis_out.dim, basis_in.dim), dtype=complex)
    for j, m in enumerate(basis_in.ordering):
        if shifted[m] in basis_out:
            op[basis_out.index(shifted[m]), j] = 1
    return _on_paths(op, paths, basis_in, basis_out, n_paths)


_BUILDERS: dict[str, Callable[..., np.ndarray]] = {
    DOVE_PRISM: _build_dove_prism,
    DOVE_PRISM_PAIR: _build_dove_prism_pair,
    BEAM_SPLITTER: _build_beam_splitter,
    GOUY_STACK: _build_gouy_stack,
    SLM_SHIFT: _build_slm_shift,
    PHASE_PLATE: _build_phase_plate,
    PATH_SWAP: _build_path_swap,
}

_PARAMS = {
    DOVE_PRISM: ("beta",),
    DOVE_PRISM_PAIR: ("beta",),
    BEAM_SPLITTER: (),
    GOUY_STACK: ("alpha",),
    SLM_SHIFT: ("k",),
    PHASE_PLATE: ("theta",),
    PATH_SWAP: (),
}

_COSTS = {
    DOVE_PRISM: 1,
    DOVE_PRISM_PAIR: 2,
    BEAM_SPLITTER: 1,
    GOUY_STACK: 3,  # three lenses
    PHASE_PLATE: 1,
    PATH_SWAP: 1,
}

_NEGATED_ON_INVERSE = {
    DOVE_PRISM_PAIR: ("beta",),
    GOUY_STACK: ("alpha",),
    SLM_SHIFT: ("k",),
    PHASE_PLATE: ("theta",),
}
