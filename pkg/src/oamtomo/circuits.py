"""Named devices built from optical elements, and their routing checks.

Devices are assembled with a `CircuitBuilder`, which allocates paths on
demand and only fixes the rail size when the circuit is built. Path 0 is
always the input path "a".

Sign conventions: with the beam splitter |a> -> (|a>+|b>)/sqrt2 and
|b> -> (|a>-|b>)/sqrt2, a Mach-Zehnder with mode phase exp(i phi) in arm a
sends a -> a with (1+exp(i phi))/2 and a -> b with (exp(i phi)-1)/2.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from oamtomo.const import GATE_ATOL, UNITARY_ATOL
from oamtomo.elements import (
    BEAM_SPLITTER,
    DOVE_PRISM,
    DOVE_PRISM_PAIR,
    GOUY_STACK,
    PATH_SWAP,
    PHASE_PLATE,
    SLM_SHIFT,
    OpticalElement,
    make_element,
)
from oamtomo.errors import CapacityError, InvalidArgumentError, InvariantViolation
from oamtomo.models import BasisSpec, ModeIndex, PortRoutingTable

_log = logging.getLogger(__name__)

FHS_VARIANTS = ("cascade", "slm")


@dataclass(frozen=True, eq=False)
class Circuit:
    """Ordered list of elements on a common rail, with named ports.

    `unitary` is the product of the element matrices in application order,
    computed once at construction.
    """

    name: str
    elements: tuple[OpticalElement, ...]
    n_paths: int
    basis: BasisSpec
    in_ports: Mapping[str, int] = field(default_factory=lambda: {"a": 0})
    out_ports: Mapping[str, int] = field(default_factory=dict)
    unitary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        current = self.basis
        for i, el in enumerate(self.elements):
            if el.n_paths != self.n_paths:
                raise InvalidArgumentError(
                    f"Element {i} ({el.kind}) is on {el.n_paths} paths, circuit has {self.n_paths}"
                )
            if el.basis_in != current:
                raise InvalidArgumentError(f"Element {i} ({el.kind}) expects another mode basis")
            current = el.basis_out
        if current != self.basis:
            raise InvalidArgumentError(f"Circuit '{self.name}' does not return to its input basis")
        side = self.n_paths * self.basis.dim
        u = reduce(lambda acc, el: el.matrix @ acc, self.elements, np.eye(side, dtype=complex))
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)

    @property
    def total_cost(self) -> int:
        return sum(el.cost for el in self.elements)

    def is_unitary(self, atol: float = UNITARY_ATOL) -> bool:
        u = self.unitary
        return np.allclose(u @ u.conj().T, np.eye(u.shape[0]), rtol=0, atol=atol)

    def inverse(self) -> Circuit:
        """Mirror device: elements reversed and inverted, ports swapped."""
        return Circuit(
            name=f"{self.name}^-1",
            elements=tuple(el.inverse() for el in reversed(self.elements)),
            n_paths=self.n_paths,
            basis=self.basis,
            in_ports=dict(self.out_ports),
            out_ports=dict(self.in_ports),
        )

    def with_n_paths(self, n_paths: int) -> Circuit:
        if n_paths < self.n_paths:
            raise InvalidArgumentError(f"Can not shrink '{self.name}' to {n_paths} paths")
        return Circuit(
            self.name,
            tuple(el.with_n_paths(n_paths) for el in self.elements),
            n_paths,
            self.basis,
            dict(self.in_ports),
            dict(self.out_ports),
        )

    def path_of(self, port: str | int, outputs: bool = True) -> int:
        if isinstance(port, (int, np.integer)):
            return int(port)
        ports = self.out_ports if outputs else self.in_ports
        try:
            return ports[port]
        except KeyError as e:
            raise InvalidArgumentError(
                f"'{self.name}' has no {'output' if outputs else 'input'} port '{port}'"
            ) from e


class CircuitBuilder:
    """Collects element placements; matrices are made in `build()` once the path count is known."""

    def __init__(self, basis: BasisSpec, n_paths: int = 1):
        self.basis = basis
        self.current_basis = basis
        self.n_paths = n_paths
        self._placements: list[tuple[str, dict, tuple[int, ...], BasisSpec, BasisSpec]] = []

    def new_path(self) -> int:
        self.n_paths += 1
        return self.n_paths - 1

    def add(self, kind: str, paths: Sequence[int], basis_out: BasisSpec | None = None, **params):
        basis_out = self.current_basis if basis_out is None else basis_out
        if any(p >= self.n_paths for p in paths):
            raise InvalidArgumentError(f"Path(s) {tuple(paths)} not allocated (n_paths={self.n_paths})")
        self._placements.append((kind, params, tuple(paths), self.current_basis, basis_out))
        self.current_basis = basis_out
        return self

    def beam_splitter(self, a: int, b: int):
        return self.add(BEAM_SPLITTER, (a, b))

    def path_swap(self, a: int, b: int):
        return self.add(PATH_SWAP, (a, b))

    def dove_prism(self, beta: float, path: int):
        return self.add(DOVE_PRISM, (path,), beta=beta)

    def dove_prism_pair(self, beta: float, path: int):
        return self.add(DOVE_PRISM_PAIR, (path,), beta=beta)

    def gouy_stack(self, alpha: float, path: int):
        return self.add(GOUY_STACK, (path,), alpha=alpha)

    def phase_plate(self, theta: float, path: int):
        return self.add(PHASE_PLATE, (path,), theta=theta)

    def slm_shift(self, k: int, paths: Sequence[int], basis_out: BasisSpec):
        return self.add(SLM_SHIFT, tuple(paths), basis_out=basis_out, k=k)

    def append(self, circuit: Circuit, path_map: Mapping[int, int] | None = None):
        """Place a whole circuit, optionally moving its paths."""
        path_map = path_map or {j: j for j in range(circuit.n_paths)}
        for el in circuit.elements:
            self.add(el.kind, [path_map[p] for p in el.paths], basis_out=el.basis_out, **el.params)
        return self

    def build(
        self,
        name: str,
        in_ports: Mapping[str, int] | None = None,
        out_ports: Mapping[str, int] | None = None,
    ) -> Circuit:
        elements = tuple(
            make_element(kind, params, paths, b_in, b_out, self.n_paths)
            for kind, params, paths, b_in, b_out in self._placements
        )
        circuit = Circuit(
            name, elements, self.n_paths, self.basis, in_ports or {"a": 0}, out_ports or {}
        )
        _log.debug(
            f"Built {name}: {len(elements)} elements, {self.n_paths} paths, cost {circuit.total_cost}"
        )
        return circuit


# *** building blocks (placed on an existing builder) ***


def _place_mach_zehnder(b: CircuitBuilder, a: int, c: int, arm):
    b.beam_splitter(a, c)
    arm(a)
    b.beam_splitter(a, c)


def _place_oam_sorter(b: CircuitBuilder, beta: float, a: int, c: int):
    _place_mach_zehnder(b, a, c, lambda p: b.dove_prism_pair(beta, p))


def _place_partial_hs(b: CircuitBuilder, alpha: float, a: int, c: int):
    """Arm phase exp(i(|l|+l)alpha): Gouy stack, its constant compensated, then a DP pair."""

    def arm(p):
        b.gouy_stack(alpha, p)
        b.phase_plate(-alpha, p)
        b.dove_prism_pair(alpha / 2, p)

    _place_mach_zehnder(b, a, c, arm)


def _place_hs_even_slm(b: CircuitBuilder, a: int, c: int) -> tuple[int, int]:
    inner = b.current_basis
    b.slm_shift(+1, (a, c), inner.widened(1))
    _place_partial_hs(b, np.pi / 2, a, c)
    b.slm_shift(-1, (a, c), inner)
    return a, c


def _place_hs_even_cascade(b: CircuitBuilder, depth: int, a: int) -> tuple[int, int]:
    branches = [b.new_path() for _ in range(depth - 1)]
    for k, branch in enumerate(branches, start=1):
        _place_partial_hs(b, np.pi / 2 ** (k + 1), a, branch)
    plus = b.new_path()
    for j in range(depth - 1, 0, -1):
        _place_oam_sorter(b, np.pi / 2 ** (j + 1), plus, branches[j - 1])
    return a, plus


def _place_fhs(b: CircuitBuilder, variant: str, depth: int, a: int = 0) -> tuple[int, int]:
    odd = b.new_path()
    _place_oam_sorter(b, np.pi / 2, a, odd)  # even stays on a, odd leaves with sign -1
    if variant == "slm":
        plus_even = b.new_path()
        _place_hs_even_slm(b, a, plus_even)
        b.phase_plate(np.pi, plus_even)
    else:
        _, plus_even = _place_hs_even_cascade(b, depth, a)
    plus_odd = b.new_path()
    _place_partial_hs(b, np.pi / 2, odd, plus_odd)
    b.phase_plate(np.pi, plus_odd)
    _place_oam_sorter(b, np.pi / 2, plus_even, plus_odd)
    _place_oam_sorter(b, np.pi / 2, a, odd)
    return plus_even, a


# *** devices ***


def oam_sorter(beta: float, basis: BasisSpec) -> Circuit:
    """Dove-prism Mach-Zehnder; beta=pi/2 separates even (port a) from odd (port b) modes."""
    b = CircuitBuilder(basis, 2)
    _place_oam_sorter(b, beta, 0, 1)
    return b.build("oam-sorter", out_ports={"a": 0, "b": 1})


def radial_mode_sorter(alpha: float, basis: BasisSpec) -> Circuit:
    """Gouy-phase Mach-Zehnder with arm phase exp(i(|l|+2p)alpha).

    Raises:
        InvalidArgumentError: basis without radial modes
    """
    if not basis.include_p:
        raise InvalidArgumentError("Radial mode sorter needs a basis with include_p")
    b = CircuitBuilder(basis, 2)

    def arm(p):
        b.gouy_stack(alpha, p)
        b.phase_plate(-alpha, p)

    _place_mach_zehnder(b, 0, 1, arm)
    return b.build("radial-sorter", out_ports={"a": 0, "b": 1})


def partial_helicity_sorter(alpha: float, basis: BasisSpec) -> Circuit:
    """HS(alpha): negative modes never reach port b, for any alpha.

    Raises:
        InvalidArgumentError: basis with radial modes
    """
    _require_azimuthal(basis, "Partial helicity sorter")
    b = CircuitBuilder(basis, 2)
    _place_partial_hs(b, alpha, 0, 1)
    return b.build("hs", out_ports={"a": 0, "b": 1})


def hs_odd(basis: BasisSpec) -> Circuit:
    """HS(pi/2): odd positive modes to port b (sign -1), everything else to port a."""
    c = partial_helicity_sorter(np.pi / 2, basis)
    return Circuit("hs-odd", c.elements, c.n_paths, c.basis, c.in_ports, c.out_ports)


def hs_even_slm(basis: BasisSpec) -> Circuit:
    """Even helicity sorter using SLM shifts around HS(pi/2).

    Both paths are shifted by +1 into the widened basis and back by -1, so
    the device is unitary on `basis`. Even positive modes leave at "+" with
    sign -1, even negative modes at "-".
    """
    _require_azimuthal(basis, "SLM even helicity sorter")
    b = CircuitBuilder(basis, 2)
    minus, plus = _place_hs_even_slm(b, 0, 1)
    return b.build("hs-even-slm", out_ports={"+": plus, "-": minus})


def hs_even_cascade(depth: int, basis: BasisSpec) -> Circuit:
    """Even helicity sorter from `depth - 1` partial sorters and as many OAM sorters.

    Stage k peels positive modes 2^k * odd into their own path; the
    recombiners merge those paths into the "+" port with phase +1.

    Raises:
        InvalidArgumentError: depth < 2, odd or radial modes in the basis
        CapacityError:        ell_max >= 2**depth
    """
    if depth < 2:
        raise InvalidArgumentError(f"Cascade depth must be ≥ 2, got {depth}")
    _require_azimuthal(basis, "Cascade even helicity sorter")
    odd = sorted({abs(m.ell) for m in basis.ordering if m.ell % 2})
    if odd:
        raise InvalidArgumentError(f"Cascade even helicity sorter got odd modes |ell| in {odd}")
    _require_depth(depth, basis)
    b = CircuitBuilder(basis, 1)
    minus, plus = _place_hs_even_cascade(b, depth, 0)
    return b.build(f"hs-even-cascade-{depth}", out_ports={"+": plus, "-": minus})


def cascade_depth(ell_max: int) -> int:
    """Smallest depth N >= 2 with 2**N > ell_max.

    >>> cascade_depth(3), cascade_depth(4), cascade_depth(14)
    (2, 3, 4)
    """
    return max(2, int(ell_max).bit_length())


def full_helicity_sorter(
    basis: BasisSpec, even_variant: str = "cascade", depth: int | None = None
) -> Circuit:
    """FHS: every positive mode of path a to port "+", every negative one to "-".

    Both ports carry the modes with phase +1. The cascade depth defaults to
    `cascade_depth(basis.ell_max)`.

    Raises:
        InvalidArgumentError: unknown variant, ell=0 or radial modes in the basis
        CapacityError:        explicit depth too small for ell_max
    """
    if even_variant not in FHS_VARIANTS:
        raise InvalidArgumentError(
            f"Unknown even-sorter variant '{even_variant}'; expected {' or '.join(FHS_VARIANTS)}"
        )
    _require_azimuthal(basis, "Full helicity sorter")
    if basis.has_zero:
        raise InvalidArgumentError("Full helicity sorter is defined for ell ≠ 0 only")
    depth = cascade_depth(basis.ell_max) if depth is None else depth
    if even_variant == "cascade":
        _require_depth(depth, basis)
    b = CircuitBuilder(basis, 1)
    plus, minus = _place_fhs(b, even_variant, depth)
    return b.build(f"fhs-{even_variant}", out_ports={"+": plus, "-": minus})


# *** gates ***


def compose(
    *circuits: Circuit,
    name: str | None = None,
    in_ports: Mapping[str, int] | None = None,
    out_ports: Mapping[str, int] | None = None,
) -> Circuit:
    """Series composition, first circuit applied first; rails are padded to the widest."""
    if not circuits:
        raise InvalidArgumentError("Nothing to compose")
    n_paths = max(c.n_paths for c in circuits)
    padded = [c.with_n_paths(n_paths) for c in circuits]
    return Circuit(
        name or " * ".join(c.name for c in circuits),
        tuple(el for c in padded for el in c.elements),
        n_paths,
        circuits[0].basis,
        dict(in_ports or circuits[0].in_ports),
        dict(out_ports or circuits[-1].out_ports),
    )


def _sandwich(fhs: Circuit, core: CircuitBuilder, name: str) -> Circuit:
    return compose(
        fhs, core.build(f"{name}-core"), fhs.inverse(),
        name=name, in_ports={"in": 0}, out_ports={"out": 0},
    )  # fmt: skip


def gate_hx(basis: BasisSpec, even_variant: str = "cascade") -> Circuit:
    """H_x on path a: |l> -> (|l>+|-l>)/sqrt2 for l>0, (|-l>-|l>)/sqrt2 for l<0."""
    fhs = full_helicity_sorter(basis, even_variant)
    plus, minus = fhs.out_ports["+"], fhs.out_ports["-"]
    core = CircuitBuilder(basis, fhs.n_paths)
    core.dove_prism(0.0, plus).beam_splitter(plus, minus).dove_prism(0.0, plus)
    return _sandwich(fhs, core, "H_x")


def gate_phase(theta: float, basis: BasisSpec, even_variant: str = "cascade") -> Circuit:
    """P(theta): phase exp(i theta) on the negative modes only."""
    fhs = full_helicity_sorter(basis, even_variant)
    core = CircuitBuilder(basis, fhs.n_paths)
    core.phase_plate(theta, fhs.out_ports["-"])
    return _sandwich(fhs, core, "P")


def gate_hy(basis: BasisSpec, even_variant: str = "cascade") -> Circuit:
    """H_y = P(pi/2) H_x P(pi/2), with the three cores sharing one sorter pair."""
    fhs = full_helicity_sorter(basis, even_variant)
    plus, minus = fhs.out_ports["+"], fhs.out_ports["-"]
    core = CircuitBuilder(basis, fhs.n_paths)
    core.phase_plate(np.pi / 2, minus)
    core.dove_prism(0.0, plus).beam_splitter(plus, minus).dove_prism(0.0, plus)
    core.phase_plate(np.pi / 2, minus)
    return _sandwich(fhs, core, "H_y")


def hx_matrix(n: int) -> np.ndarray:
    """(1/sqrt2)[[1, 1], [1, -1]] in blocks of n x n."""
    one = np.eye(n, dtype=complex)
    return np.block([[one, one], [one, -one]]) / np.sqrt(2)


def hy_matrix(n: int) -> np.ndarray:
    one = np.eye(n, dtype=complex)
    return np.block([[one, 1j * one], [1j * one, one]]) / np.sqrt(2)


def phase_matrix(theta: float, n: int) -> np.ndarray:
    return np.diag(np.concatenate([np.ones(n), np.full(n, np.exp(1j * theta))]))


# *** inspection ***


def element_count(c: Circuit) -> int:
    return c.total_cost


def port_matrix(c: Circuit, in_port: str | int = 0, out_port: str | int = 0) -> np.ndarray:
    """Block of the unitary from one input path to one output path (dim x dim)."""
    j = c.path_of(in_port, outputs=False)
    k = c.path_of(out_port)
    d = c.basis.dim
    return c.unitary[k * d : (k + 1) * d, j * d : (j + 1) * d].copy()


def routing_table(
    c: Circuit, paths: Sequence[int] | None = None, atol: float = UNITARY_ATOL
) -> PortRoutingTable:
    """Enumerate the outputs of every input (path, mode) with |amplitude| > atol."""
    d = c.basis.dim
    paths = range(c.n_paths) if paths is None else paths
    rows = {}
    for j in paths:
        for i, mode in enumerate(c.basis.ordering):
            column = c.unitary[:, j * d + i]
            rows[(j, mode)] = [
                (int(r // d), c.basis.ordering[r % d], complex(column[r]))
                for r in np.flatnonzero(np.abs(column) > atol)
            ]
    names = {path: name for name, path in c.out_ports.items()}
    return PortRoutingTable(rows, names)


def phase_ledger(c: Circuit, in_port: str | int | None = None) -> dict[ModeIndex, float]:
    """Phase (radians) each mode of the input port picks up on its way out.

    Raises:
        InvariantViolation: a mode is split over several outputs
    """
    in_port = next(iter(c.in_ports)) if in_port is None else in_port
    j = c.path_of(in_port, outputs=False)
    d = c.basis.dim
    ledger = {}
    for i, mode in enumerate(c.basis.ordering):
        column = c.unitary[:, j * d + i]
        r = int(np.argmax(np.abs(column)))
        if abs(abs(column[r]) - 1) > GATE_ATOL:
            raise InvariantViolation(
                f"{c.name}: mode {mode} is split (largest amplitude {abs(column[r]):.6f})"
            )
        ledger[mode] = float(np.angle(column[r]))
    return ledger


# *** invariant checks ***


def verify_unitary(c: Circuit, atol: float = UNITARY_ATOL):
    """Check the composed matrix.

    Raises:
        InvariantViolation: not unitary within atol
    """
    if not c.is_unitary(atol):
        raise InvariantViolation(f"{c.name}: composed matrix is not unitary within {atol}")


def verify_negative_blocking(c: Circuit, port: str | int = "b", atol: float = UNITARY_ATOL):
    """Check that no negative mode of path a reaches `port`."""
    block = port_matrix(c, 0, port)
    worst = max((np.max(np.abs(block[:, i])) for i in c.basis.negative_indices()), default=0.0)
    if worst > atol:
        raise InvariantViolation(f"{c.name}: negative mode reaches port {port} ({worst:.3g})")


def verify_helicity_routing(c: Circuit, atol: float = UNITARY_ATOL):
    """Check that every l>0 leaves at "+" and every l<0 at "-", each with modulus 1."""
    table = routing_table(c, paths=[0], atol=atol)
    for mode in c.basis.ordering:
        outs = table.destinations(0, mode)
        expected = c.out_ports["+" if mode.ell > 0 else "-"]
        if len(outs) != 1 or outs[0][0] != expected or abs(abs(outs[0][2]) - 1) > atol:
            raise InvariantViolation(f"{c.name}: mode {mode} is routed to {outs}")


def verify_gate(c: Circuit, target: np.ndarray, atol: float = GATE_ATOL):
    """Check the in->out block against `target` up to a global phase."""
    block = port_matrix(c, "in", "out")
    k = int(np.argmax(np.abs(target)))
    phase = block.flat[k] / target.flat[k]
    if abs(abs(phase) - 1) > atol or not np.allclose(block, phase * target, rtol=0, atol=atol):
        raise InvariantViolation(f"{c.name}: gate block differs from target beyond {atol}")


def _require_azimuthal(basis: BasisSpec, what: str):
    if basis.has_radial:
        raise InvalidArgumentError(f"{what} needs a basis without radial modes (p=0)")


def _require_depth(depth: int, basis: BasisSpec):
    if basis.ell_max >= 2**depth:
        raise CapacityError(
            f"Cascade of depth {depth} sorts |ell| < {2**depth}, basis has ell_max={basis.ell_max}"
        )
