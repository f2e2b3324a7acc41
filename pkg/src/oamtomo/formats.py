"""File formats: density matrices, netlists, intensity images, reports and kernels.

Every text file starts with a comment line naming the generator and, where a
configuration is involved, its hash, e.g. ``# oamtomo v0.1.0 report config=3f2a...``.
Lines starting with '#' are ignored on reading.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import tempfile
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from oamtomo.circuits import Circuit
from oamtomo.config import parse_bool
from oamtomo.const import GENERATOR
from oamtomo.elements import SLM_SHIFT, make_element
from oamtomo.errors import FormatError, InvalidArgumentError
from oamtomo.models import BasisSpec, IntensityGrid, ModeIndex, TomographyReport

_log = logging.getLogger(__name__)

KERNEL_MANIFEST = "manifest.json"


# *** generic helpers ***


def atomic_write(path: str | Path, data: str | bytes):
    """Write to a temporary file next to `path`, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if isinstance(data, bytes) else {"encoding": "utf-8"})) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    _log.debug(f"Wrote {path}")


def config_hash(config: object) -> str:
    """Short sha256 digest of the configuration's repr."""
    return hashlib.sha256(repr(config).encode("utf-8")).hexdigest()[:16]


def header_line(what: str, config_digest: str | None = None) -> str:
    line = f"# {GENERATOR} {what}"
    return f"{line} config={config_digest}" if config_digest else line


def _content_lines(text: str):
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line and not line.startswith("#"):
            yield number, line


def _fields(tokens: list[str], number: int) -> dict[str, str]:
    fields = {}
    for token in tokens:
        key, sep, value = token.rpartition("=")
        if not sep or not key:
            raise FormatError(f"Expected key=value, got '{token}'", number)
        fields[key] = value
    return fields


def _parse_ordering(text: str, number: int | None = None) -> tuple[ModeIndex, ...]:
    try:
        return tuple(ModeIndex.parse(t) for t in text.split(",") if t.strip())
    except InvalidArgumentError as e:
        raise FormatError(str(e), number) from e


def _basis_from_ordering(ordering, include_p: bool | None = None, p_max: int | None = None):
    p_top = max((m.p for m in ordering), default=0)
    return BasisSpec(
        ell_max=max((abs(m.ell) for m in ordering), default=0),
        include_p=p_top > 0 if include_p is None else include_p,
        p_max=p_top if p_max is None else p_max,
        ordering=tuple(ordering),
    )


# *** parsers ***


class Parser(ABC):
    @abstractmethod
    def parse(self, text: str, *args, **kwargs):
        pass


class DensityMatrixParser(Parser):
    def parse(self, text: str) -> tuple[np.ndarray, BasisSpec]:
        """Return the matrix and the basis named by its ordering.

        >>> m, b = DensityMatrixParser().parse('''
        ... dim=2 ordering=1,-1
        ... 0.5,0,0,0.5
        ... 0,-0.5,0.5,0
        ... ''')
        >>> complex(m[0, 1]), b.token()
        (0.5j, '1,-1')
        """
        lines = list(_content_lines(text))
        if not lines:
            raise FormatError("Empty density-matrix file")
        number, head = lines[0]
        fields = _fields(head.split(), number)
        if "dim" not in fields or "ordering" not in fields:
            raise FormatError("Header must read 'dim=<n> ordering=<modes>'", number)
        try:
            dim = int(fields["dim"])
        except ValueError as e:
            raise FormatError(f"Bad dimension '{fields['dim']}'", number) from e
        ordering = _parse_ordering(fields["ordering"], number)
        if len(ordering) != dim:
            raise FormatError(f"Ordering has {len(ordering)} modes, dim={dim}", number)
        rows = lines[1:]
        if len(rows) != dim:
            raise FormatError(f"Expected {dim} rows, got {len(rows)}", number)
        matrix = np.empty((dim, dim), dtype=complex)
        for i, (number, row) in enumerate(rows):
            try:
                values = [float(v) for v in row.split(",")]
            except ValueError as e:
                raise FormatError(f"Not a number in row {i}: {e}", number) from e
            if len(values) != 2 * dim:
                raise FormatError(f"Row {i} has {len(values)} values, expected {2 * dim}", number)
            matrix[i] = np.array(values[0::2]) + 1j * np.array(values[1::2])
        return matrix, _basis_from_ordering(ordering)


class NetlistParser(Parser):
    """Reads circuits written by `format_netlist`.

    Header lines ``name``, ``basis``, ``paths``, ``in`` and ``out`` come first,
    followed by one element per line.
    """

    def parse(self, text: str) -> Circuit:
        name, basis, n_paths = "netlist", None, None
        in_ports, out_ports = {"a": 0}, {}
        placements = []
        current = None
        for number, line in _content_lines(text):
            head, *rest = line.split()
            if head == "name":
                name = " ".join(rest)
            elif head == "basis":
                basis = current = self._parse_basis(rest, number)
            elif head == "paths":
                n_paths = self._int(rest[0] if rest else "", number)
            elif head in ("in", "out"):
                ports = {k: self._int(v, number) for k, v in _fields(rest, number).items()}
                if head == "in":
                    in_ports = ports
                else:
                    out_ports = ports
            else:
                if basis is None:
                    raise FormatError("'basis' header must come before the elements", number)
                kind, params, paths, basis_out = self._parse_element(head, rest, number, basis, current)
                placements.append((number, kind, params, paths, current, basis_out))
                current = basis_out
        if basis is None:
            raise FormatError("Netlist has no 'basis' header")
        if n_paths is None:
            n_paths = max([max(p[3]) for p in placements] + [0]) + 1
        elements = []
        for number, kind, params, paths, b_in, b_out in placements:
            try:
                elements.append(make_element(kind, params, paths, b_in, b_out, n_paths))
            except InvalidArgumentError as e:
                raise FormatError(str(e), number) from e
        try:
            circuit = Circuit(name, tuple(elements), n_paths, basis, in_ports, out_ports)
        except InvalidArgumentError as e:
            raise FormatError(str(e)) from e
        _log.debug(f"Parsed netlist '{name}': {len(elements)} elements")
        return circuit

    @staticmethod
    def _int(text: str, number: int) -> int:
        try:
            return int(text)
        except ValueError as e:
            raise FormatError(f"Expected an integer, got '{text}'", number) from e

    def _parse_basis(self, tokens: list[str], number: int) -> BasisSpec:
        fields = _fields(tokens, number)
        try:
            return BasisSpec(
                ell_max=int(fields["ell_max"]),
                include_p=parse_bool(fields.get("include_p", "no")),
                p_max=int(fields.get("p_max", "0")),
                ordering=_parse_ordering(fields["ordering"], number),
            )
        except KeyError as e:
            raise FormatError(f"basis header misses {e}", number) from e
        except ValueError as e:
            raise FormatError(f"Bad basis header: {e}", number) from e

    def _parse_element(self, kind, tokens, number, root: BasisSpec, current: BasisSpec):
        fields = _fields(tokens, number)
        try:
            paths = [int(p) for p in fields.pop("path").split(",")]
            if "path2" in fields:
                paths.append(int(fields.pop("path2")))
        except KeyError as e:
            raise FormatError(f"{kind} needs path=<i>", number) from e
        except ValueError as e:
            raise FormatError(f"Bad path index: {e}", number) from e
        basis_out = current
        if "out" in fields:
            ordering = _parse_ordering(fields.pop("out"), number)
            k = abs(int(fields.get("k", "0")))
            candidates = [b for b in (root, current.widened(k)) if b.ordering == ordering]
            basis_out = (
                candidates[0] if candidates
                else _basis_from_ordering(ordering, root.include_p, root.p_max)
            )  # fmt: skip
        try:
            params = {
                key: int(value) if kind == SLM_SHIFT else float(value)
                for key, value in fields.items()
            }
        except ValueError as e:
            raise FormatError(f"Bad parameter value: {e}", number) from e
        return kind, params, paths, basis_out


def read_density(path: str | Path) -> tuple[np.ndarray, BasisSpec]:
    """Read a density-matrix file.

    Raises:
        FormatError: unreadable or malformed file
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"Can not read '{path}': {e}") from e
    try:
        return DensityMatrixParser().parse(text)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from e


def read_netlist(path: str | Path) -> Circuit:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"Can not read '{path}': {e}") from e
    return NetlistParser().parse(text)


# *** writers ***


def format_density(matrix: np.ndarray, basis: BasisSpec | None = None, ordering=None) -> str:
    """Header ``dim=<n> ordering=<modes>`` then one row per line of re,im pairs."""
    matrix = np.asarray(matrix, dtype=complex)
    ordering = basis.ordering if basis is not None else ordering
    if ordering is None or len(ordering) != matrix.shape[0]:
        raise InvalidArgumentError("Density matrix needs an ordering of matching length")
    tokens = ",".join(str(m) for m in ordering)
    lines = [f"dim={matrix.shape[0]} ordering={tokens}"]
    for row in matrix:
        lines.append(",".join(f"{z.real!r},{z.imag!r}" for z in row.tolist()))
    return "\n".join(lines) + "\n"


def write_density(
    path: str | Path, matrix: np.ndarray, basis: BasisSpec, config_digest: str | None = None
):
    atomic_write(path, header_line("density matrix", config_digest) + "\n" + format_density(matrix, basis))


def format_netlist(circuit: Circuit) -> str:
    b = circuit.basis
    lines = [
        header_line("netlist"),
        f"name {circuit.name}",
        f"basis ell_max={b.ell_max} p_max={b.p_max} include_p={'yes' if b.include_p else 'no'} "
        f"ordering={b.token()}",
        f"paths {circuit.n_paths}",
        "in " + " ".join(f"{k}={v}" for k, v in circuit.in_ports.items()),
    ]
    if circuit.out_ports:
        lines.append("out " + " ".join(f"{k}={v}" for k, v in circuit.out_ports.items()))
    for el in circuit.elements:
        params = [
            f"{k}={int(v) if el.kind == SLM_SHIFT else float(v)!r}" for k, v in el.params.items()
        ]
        if el.kind == SLM_SHIFT:
            where = [f"path={','.join(str(p) for p in el.paths)}", f"out={el.basis_out.token()}"]
        else:
            where = [f"path={el.paths[0]}"] + ([f"path2={el.paths[1]}"] if len(el.paths) > 1 else [])
        lines.append(" ".join([el.kind, *params, *where]))
    return "\n".join(lines) + "\n"


def write_netlist(path: str | Path, circuit: Circuit):
    atomic_write(path, format_netlist(circuit))


def format_intensity_csv(intensity: IntensityGrid, config_digest: str | None = None) -> str:
    """Rows follow y, columns follow x, both ascending."""
    buf = io.StringIO()
    buf.write(header_line("intensity", config_digest) + "\n")
    g = intensity.grid
    buf.write(f"# size={g.size} extent={g.extent!r} w0={intensity.w0!r}\n")
    np.savetxt(buf, intensity.values, fmt="%.10g", delimiter=",")
    return buf.getvalue()


def format_intensity_pgm(intensity: IntensityGrid, config_digest: str | None = None) -> bytes:
    """Binary 16-bit PGM scaled to the image maximum, +y at the top."""
    values = np.flipud(intensity.values)
    peak = values.max()
    scaled = values / peak if peak > 0 else values
    pixels = np.round(np.clip(scaled, 0, 1) * 65535).astype(">u2")
    rows, cols = pixels.shape
    comment = header_line("intensity", config_digest)
    head = f"P5\n{comment}\n{cols} {rows}\n65535\n".encode("ascii")
    return head + pixels.tobytes()


def write_intensity(stem: str | Path, intensity: IntensityGrid, config_digest: str | None = None):
    """Write `<stem>.csv` and `<stem>.pgm`."""
    stem = Path(stem)
    atomic_write(stem.with_suffix(".csv"), format_intensity_csv(intensity, config_digest))
    atomic_write(stem.with_suffix(".pgm"), format_intensity_pgm(intensity, config_digest))


def format_report(report: TomographyReport, config_digest: str | None = None) -> str:
    """Key-value header followed by the density matrices as [sections]."""

    def opt(value):
        return "n/a" if value is None else repr(value)

    m = report.marginals
    lines = [
        header_line("tomography report", config_digest),
        f"fidelity = {opt(report.fidelity)}",
        f"trace_distance = {opt(report.trace_distance)}",
        f"min_eigenvalue = {report.min_eigenvalue!r}",
        f"psd_repaired = {'yes' if report.psd_repaired else 'no'}",
        f"sigma_orientation = {report.sigma_orientation}",
        f"provenance = {m.provenance}",
        "probabilities = " + ", ".join(repr(p) for p in m.probabilities()),
        f"orthogonality_residual = {opt(report.orthogonality_residual)}",
    ]
    lines += [f"truncation_radius.{k} = {v!r}" for k, v in sorted(report.truncation_radii.items())]
    ordering = [ModeIndex(ell) for ell in report.ells]
    lines += ["", "[rho_reconstructed]", format_density(report.rho_reconstructed, ordering=ordering)]
    if report.rho_truth is not None:
        lines += ["[rho_truth]", format_density(report.rho_truth, ordering=ordering)]
    return "\n".join(lines)


def write_report(path: str | Path, report: TomographyReport, config_digest: str | None = None):
    atomic_write(path, format_report(report, config_digest))


# *** kernel cache persistence ***


def kernel_token(key: tuple) -> str:
    """File stem for a kernel cache key (ell1, ell2, w0, size, extent)."""
    digest = hashlib.sha256(repr(key).encode("utf-8")).hexdigest()[:12]
    return f"kernel_{key[0]}_{key[1]}_{digest}"


def _read_manifest(directory: Path) -> dict:
    path = directory / KERNEL_MANIFEST
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        _log.warning(f"Ignoring unreadable kernel manifest {path}: {e}")
        return {}


def save_kernel(directory: str | Path, token: str, meta: dict, samples: np.ndarray):
    """Store samples as little-endian float64 (re, im interleaved) and record them in the manifest."""
    directory = Path(directory)
    data = np.ascontiguousarray(samples, dtype=complex).view(np.float64).astype("<f8")
    atomic_write(directory / f"{token}.f8", data.tobytes())
    manifest = _read_manifest(directory)
    manifest[token] = {**meta, "shape": list(np.shape(samples)), "dtype": "<f8"}
    atomic_write(directory / KERNEL_MANIFEST, json.dumps(manifest, indent=1, sort_keys=True))


def load_kernel(directory: str | Path, token: str) -> np.ndarray | None:
    """Samples stored under `token`, or None when absent or damaged."""
    directory = Path(directory)
    entry = _read_manifest(directory).get(token)
    path = directory / f"{token}.f8"
    if entry is None or not path.exists():
        return None
    shape = tuple(entry["shape"])
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != 2 * int(np.prod(shape)):
        _log.warning(f"Kernel file {path} has {raw.size} values, expected {2 * np.prod(shape)}")
        return None
    samples = raw.astype(np.float64).view(complex).reshape(shape)
    samples.setflags(write=False)
    return samples
