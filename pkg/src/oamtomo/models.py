from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from oamtomo.errors import InvalidArgumentError


def _frozen_array(values, dtype=complex) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, order=True)
class ModeIndex:
    """An LG mode label: topological charge `ell` and radial index `p`."""

    ell: int
    p: int = 0

    def __post_init__(self):
        if self.p < 0:
            raise InvalidArgumentError(f"Radial index must be non-negative, got p={self.p}")

    def __str__(self) -> str:
        return f"{self.ell}" if self.p == 0 else f"{self.ell}:{self.p}"

    @classmethod
    def parse(cls, token: str) -> ModeIndex:
        """Parse `ell` or `ell:p`.

        >>> ModeIndex.parse("-3"), ModeIndex.parse("2:1")
        (ModeIndex(ell=-3, p=0), ModeIndex(ell=2, p=1))
        """
        ell, _, p = token.strip().partition(":")
        try:
            return cls(int(ell), int(p) if p else 0)
        except ValueError as e:
            raise InvalidArgumentError(f"Not a mode label: '{token}'") from e


@dataclass(frozen=True)
class BasisSpec:
    """Truncated OAM basis with a fixed mode ordering.

    The ordering is the single source of truth; `ell_max`, `include_p` and
    `p_max` describe it. Use `hilbert.make_basis` to build canonical bases.
    """

    ell_max: int
    include_p: bool
    p_max: int
    ordering: tuple[ModeIndex, ...]

    @property
    def dim(self) -> int:
        return len(self.ordering)

    @cached_property
    def _positions(self) -> dict[ModeIndex, int]:
        return {m: i for i, m in enumerate(self.ordering)}

    def index(self, mode: ModeIndex | int) -> int:
        if isinstance(mode, int):
            mode = ModeIndex(mode)
        try:
            return self._positions[mode]
        except KeyError as e:
            raise InvalidArgumentError(f"Mode {mode} is not in the basis") from e

    def __contains__(self, mode: object) -> bool:
        if isinstance(mode, int):
            mode = ModeIndex(mode)
        return mode in self._positions

    @property
    def has_zero(self) -> bool:
        return any(m.ell == 0 for m in self.ordering)

    @property
    def has_radial(self) -> bool:
        return any(m.p > 0 for m in self.ordering)

    def is_symmetric(self) -> bool:
        """True if every mode has its mirror image (-ell, p) in the basis."""
        return all(ModeIndex(-m.ell, m.p) in self._positions for m in self.ordering)

    def is_tomography_basis(self) -> bool:
        return not self.has_zero and not self.has_radial and self.is_symmetric()

    def positive_indices(self) -> list[int]:
        return [i for i, m in enumerate(self.ordering) if m.ell > 0]

    def negative_indices(self) -> list[int]:
        return [i for i, m in enumerate(self.ordering) if m.ell < 0]

    def positive_ells(self) -> list[int]:
        return [self.ordering[i].ell for i in self.positive_indices()]

    def token(self) -> str:
        return ",".join(str(m) for m in self.ordering)

    def widened(self, k: int) -> BasisSpec:
        """Return the basis grown by `k` units of OAM on both sides, with ell=0.

        Every mode of this basis shifted by up to +-k lands in the result.
        """
        ell_max = self.ell_max + k
        return BasisSpec(
            ell_max=ell_max,
            include_p=self.include_p,
            p_max=self.p_max,
            ordering=canonical_ordering(ell_max, self.p_max, include_zero=True),
        )


def canonical_ordering(
    ell_max: int, p_max: int = 0, include_zero: bool = False, parity: str | None = None
) -> tuple[ModeIndex, ...]:
    """Return |1>,..,|n>,|-1>,..,|-n> (then |0> if asked), radial index innermost."""
    keep = {None: lambda ell: True, "even": lambda ell: ell % 2 == 0, "odd": lambda ell: ell % 2}
    if parity not in keep:
        raise InvalidArgumentError(f"parity must be 'even', 'odd' or None, got '{parity}'")
    positives = [ell for ell in range(1, ell_max + 1) if keep[parity](ell)]
    ells = positives + [-ell for ell in positives]
    if include_zero and keep[parity](0):
        ells.append(0)
    return tuple(ModeIndex(ell, p) for ell in ells for p in range(p_max + 1))


@dataclass(frozen=True, eq=False)
class RailState:
    """Pure state over the (path x mode) basis, path-major.

    Amplitude of mode `m` on path `j` sits at index `j * basis.dim + basis.index(m)`.
    """

    basis: BasisSpec
    n_paths: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen_array(self.amplitudes).reshape(-1)
        if amps.size != self.n_paths * self.basis.dim:
            raise InvalidArgumentError(
                f"Expected {self.n_paths * self.basis.dim} amplitudes, got {amps.size}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def sub_normalized(self) -> bool:
        return self.norm2 < 1.0 - 1e-12

    def density(self) -> RailDensity:
        return RailDensity(self.basis, self.n_paths, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class RailDensity:
    """Density matrix over the (path x mode) basis, path-major."""

    basis: BasisSpec
    n_paths: int
    matrix: np.ndarray

    def __post_init__(self):
        mat = _frozen_array(self.matrix)
        side = self.n_paths * self.basis.dim
        if mat.shape != (side, side):
            raise InvalidArgumentError(f"Expected a {side}x{side} matrix, got {mat.shape}")
        object.__setattr__(self, "matrix", mat)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def path_block(self, path: int) -> np.ndarray:
        if not 0 <= path < self.n_paths:
            raise InvalidArgumentError(f"Path {path} out of range (n_paths={self.n_paths})")
        d = self.basis.dim
        return self.matrix[path * d : (path + 1) * d, path * d : (path + 1) * d]


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    """Helicity blocks [[rho_plus, sigma], [sigma_lower, rho_minus]].

    `sigma_lower` is None for Hermitian matrices, where it equals sigma^dagger.
    """

    rho_plus: np.ndarray
    rho_minus: np.ndarray
    sigma: np.ndarray
    sigma_lower: np.ndarray | None = None


@dataclass(frozen=True)
class Grid:
    """Square Cartesian sampling grid, symmetric around the beam axis.

    `extent` is the half-width in units of the beam waist; the sample at index
    `size // 2` sits on the axis.
    """

    size: int
    extent: float

    def __post_init__(self):
        if self.size < 2 or self.size % 2:
            raise InvalidArgumentError(f"Grid size must be even and >= 2, got {self.size}")
        if self.extent <= 0:
            raise InvalidArgumentError(f"Grid extent must be positive, got {self.extent}")

    @property
    def samples_per_waist(self) -> float:
        return self.size / (2 * self.extent)

    def spacing(self, w0: float) -> float:
        return 2 * self.extent * w0 / self.size

    def axis(self, w0: float) -> np.ndarray:
        return (np.arange(self.size) - self.size // 2) * self.spacing(w0)

    def frequency_axis(self, w0: float) -> np.ndarray:
        return np.fft.fftshift(np.fft.fftfreq(self.size, d=self.spacing(w0)))

    def frequency_spacing(self, w0: float) -> float:
        return 1.0 / (self.size * self.spacing(w0))

    def mesh(self, w0: float) -> tuple[np.ndarray, np.ndarray]:
        """Return (x, y) with x varying along columns and y along rows."""
        ax = self.axis(w0)
        return np.meshgrid(ax, ax, indexing="xy")

    def frequency_mesh(self, w0: float) -> tuple[np.ndarray, np.ndarray]:
        ax = self.frequency_axis(w0)
        return np.meshgrid(ax, ax, indexing="xy")


@dataclass(frozen=True, eq=False)
class LgField:
    ell: int
    w0: float
    grid: Grid
    values: np.ndarray
    p: int = 0


@dataclass(frozen=True, eq=False)
class IntensityGrid:
    values: np.ndarray
    grid: Grid
    w0: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, dtype=float))

    def total(self) -> float:
        """Integrated power, i.e. the double integral of I over the plane."""
        return float(self.values.sum() * self.grid.spacing(self.w0) ** 2)

    def __add__(self, other: IntensityGrid) -> IntensityGrid:
        return IntensityGrid(self.values + other.values, self.grid, self.w0)

    def scaled(self, factor: float) -> IntensityGrid:
        return IntensityGrid(self.values * factor, self.grid, self.w0)


@dataclass(frozen=True, eq=False)
class FourierKernel:
    ell1: int
    ell2: int
    w0: float
    grid: Grid
    samples: np.ndarray


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Output of an AHST reconstruction.

    `matrix` is indexed over the helicity's modes in canonical order
    (|1>..|n> or |-1>..|-n>).
    """

    matrix: np.ndarray
    truncation_radius: float
    estimator: str
    psd_repaired: bool = False


@dataclass(frozen=True, eq=False)
class MarginalSet:
    """The six port marginals: mu_k at the '+' port, nu_k at the '-' port."""

    mu1: np.ndarray
    mu2: np.ndarray
    mu3: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    nu3: np.ndarray
    provenance: str = "exact"  # or "ahst-reconstructed"

    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.mu1, self.nu1), (self.mu2, self.nu2), (self.mu3, self.nu3)]

    def probabilities(self) -> list[float]:
        """Total detected probability per setting, Tr(mu_k) + Tr(nu_k)."""
        return [float(np.trace(mu).real + np.trace(nu).real) for mu, nu in self.pairs()]


@dataclass(frozen=True, eq=False)
class TomographyReport:
    rho_reconstructed: np.ndarray
    rho_truth: np.ndarray | None
    fidelity: float | None
    trace_distance: float | None
    psd_repaired: bool
    min_eigenvalue: float
    sigma_orientation: str
    marginals: MarginalSet
    truncation_radii: dict[str, float] = field(default_factory=dict)
    orthogonality_residual: float | None = None
    ells: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class PortRoutingTable:
    """Where each input (path, mode) ends up, with complex amplitudes.

    Outputs below the table's amplitude threshold are omitted.
    """

    rows: dict[tuple[int, ModeIndex], list[tuple[int, ModeIndex, complex]]]
    port_names: dict[int, str] = field(default_factory=dict)

    def destinations(self, path: int, mode: ModeIndex | int) -> list[tuple[int, ModeIndex, complex]]:
        if isinstance(mode, int):
            mode = ModeIndex(mode)
        return self.rows[(path, mode)]

    def output_path(self, path: int, mode: ModeIndex | int) -> int:
        """Output path carrying most of the input's power."""
        return max(self.destinations(path, mode), key=lambda d: abs(d[2]))[0]

    def output_port(self, path: int, mode: ModeIndex | int) -> str:
        out = self.output_path(path, mode)
        return self.port_names.get(out, str(out))

    def norms(self) -> dict[tuple[int, ModeIndex], float]:
        """Summed output power per input row."""
        return {k: float(sum(abs(a) ** 2 for _, _, a in v)) for k, v in self.rows.items()}
