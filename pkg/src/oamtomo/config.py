"""Experiment configuration: dataclasses and the INI file reader.

Example file::

    [basis]
    ell_max = 2

    [grid]
    size = 512
    extent = 8

    [beam]
    w0 = 1.0

    [state]
    kind = pure
    amplitudes = 2:1

    [run]
    fhs = cascade
    threshold = 0.99
"""

from __future__ import annotations

import configparser
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from oamtomo.const import GRID_EXTENT, GRID_SIZE, NOISY_WEIGHT_CAP, TRUNCATION_TOL
from oamtomo.errors import ConfigError
from oamtomo.models import Grid

_log = logging.getLogger(__name__)

SETTING_LABELS = ("identity", "hx", "hy")
STATE_KINDS = ("pure", "random", "maximally-mixed", "file")


@dataclass(frozen=True)
class AhstConfig:
    grid_size: int = GRID_SIZE
    extent: float = GRID_EXTENT  # half-width, in w0
    w0: float = 1.0
    tol: float = TRUNCATION_TOL
    weight_cap: float | None = None
    estimator: str = "direct"  # or "gram"
    quadrature: str = "cartesian"  # or "polar"
    polar_order: int = 1
    psd_repair: bool = False

    @property
    def grid(self) -> Grid:
        return Grid(self.grid_size, self.extent)


@dataclass(frozen=True)
class NoiseConfig:
    """Poisson detection of a finite photon budget per image.

    Noisy images are reconstructed with the Gram estimator under a small
    weight cap, since the weight amplifies shot noise at high frequency.
    """

    photons: float
    seed: int
    weight_cap: float = NOISY_WEIGHT_CAP
    estimator: str = "gram"


@dataclass(frozen=True)
class StateSpec:
    """The state to measure.

    kind 'pure' uses `amplitudes` (mode -> complex amplitude, normalized on
    use); 'random' draws a Ginibre state of `rank` from `seed`; 'file' reads a
    density-matrix text file.
    """

    kind: str = "pure"
    amplitudes: dict[int, complex] = field(default_factory=lambda: {1: 1.0})
    rank: int | None = None
    seed: int | None = None
    path: Path | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    ell_max: int = 2
    ahst: AhstConfig = field(default_factory=AhstConfig)
    noise: NoiseConfig | None = None
    state: StateSpec = field(default_factory=StateSpec)
    even_variant: str = "cascade"
    settings: tuple[str, ...] = SETTING_LABELS  # settings whose images are written
    threshold: float = 0.99
    output_dir: Path = Path("results")
    exact: bool = False  # skip AHST, use simulated marginals directly


# *** INI reading ***


class _LineIndex:
    """Maps (section, option) to its 1-based line number in the source text."""

    _section = re.compile(r"^\s*\[([^\]]+)\]")
    _option = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")

    def __init__(self, text: str):
        self.lines: dict[tuple[str, str], int] = {}
        self.sections: dict[str, int] = {}
        section = None
        for number, line in enumerate(text.splitlines(), start=1):
            if m := self._section.match(line):
                section = m.group(1).strip()
                self.sections.setdefault(section, number)
            elif section and (m := self._option.match(line)):
                self.lines.setdefault((section, m.group(1).lower()), number)

    def __call__(self, section: str, option: str | None = None) -> int | None:
        if option is None:
            return self.sections.get(section)
        return self.lines.get((section, option), self.sections.get(section))


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, index: _LineIndex):
        self.parser = parser
        self.index = index

    def has(self, section: str, option: str) -> bool:
        return self.parser.has_option(section, option) and self.raw(section, option) != ""

    def raw(self, section: str, option: str) -> str:
        return self.parser.get(section, option).strip()

    def get(self, section, option, convert, default=None, check=None, what="valid"):
        if not self.has(section, option):
            return default
        text = self.raw(section, option)
        try:
            value = convert(text)
        except (ValueError, TypeError) as e:
            raise ConfigError(
                f"[{section}] {option} = '{text}' is not {what}", self.index(section, option)
            ) from e
        if check is not None and not check(value):
            raise ConfigError(
                f"[{section}] {option} must be {what}, got {text}", self.index(section, option)
            )
        return value


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "yes", "true", "on"):
        return True
    if value in ("0", "no", "false", "off"):
        return False
    raise ValueError(text)


def parse_amplitudes(text: str) -> dict[int, complex]:
    """Parse 'l:c, l:c, ...' (a bare 'l' means amplitude 1).

    >>> parse_amplitudes("1:1, -1:1j")
    {1: (1+0j), -1: 1j}
    """
    amplitudes = {}
    for item in text.split(","):
        ell, _, amp = item.strip().partition(":")
        amplitudes[int(ell)] = complex(amp.replace(" ", "")) if amp else complex(1)
    if not amplitudes or 0 in amplitudes:
        raise ValueError(text)
    return amplitudes


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment file.

    Raises:
        ConfigError: unreadable file, syntax error or invalid value (with line number)
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Can not read config file '{path}': {e}") from e
    config = parse_config(text, base_dir=path.parent)
    _log.debug(f"Loaded config {path}: {config}")
    return config


def parse_config(text: str, base_dir: Path = Path()) -> ExperimentConfig:
    """Parse experiment INI text; see the module docstring for the layout.

    Raises:
        ConfigError: syntax error or invalid value (with line number)
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("File must start with a [section] header", e.lineno) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ConfigError(f"Syntax error: {e.message.splitlines()[0]}", line) from e
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(e.message, e.lineno) from e
    except configparser.Error as e:
        raise ConfigError(str(e)) from e

    index = _LineIndex(text)
    r = _Reader(parser, index)
    positive_int = dict(convert=int, check=lambda v: v > 0, what="a positive integer")
    positive = dict(convert=float, check=lambda v: v > 0, what="a positive number")

    if not r.has("basis", "ell_max"):
        raise ConfigError("[basis] ell_max is required", index("basis"))
    ell_max = r.get("basis", "ell_max", int, what="an integer")
    if ell_max < 1:
        raise ConfigError("ell_max must be ≥ 1", index("basis", "ell_max"))

    ahst = AhstConfig(
        grid_size=r.get("grid", "size", default=GRID_SIZE, **positive_int),
        extent=r.get("grid", "extent", default=GRID_EXTENT, **positive),
        w0=r.get("beam", "w0", default=1.0, **positive),
        tol=r.get("run", "tol", default=TRUNCATION_TOL, **positive),
        weight_cap=r.get("run", "weight_cap", float, check=lambda v: v > 1, what="a number > 1"),
        estimator=r.get(
            "run", "estimator", str, "direct", lambda v: v in ("direct", "gram"), "direct or gram"
        ),
        quadrature=r.get(
            "run", "quadrature", str, "cartesian",
            lambda v: v in ("cartesian", "polar"), "cartesian or polar",
        ),  # fmt: skip
        polar_order=r.get("run", "polar_order", int, 1, lambda v: 0 <= v <= 5, "an order 0..5"),
        psd_repair=r.get("run", "psd_repair", parse_bool, False, what="a boolean"),
    )
    if ahst.grid_size % 2:
        raise ConfigError("Grid size must be even", index("grid", "size"))

    noise = None
    if r.has("noise", "photons"):
        photons = r.get("noise", "photons", **positive)
        if not r.has("noise", "seed"):
            raise ConfigError("[noise] seed is required when photons is set", index("noise"))
        noise = NoiseConfig(
            photons=photons,
            seed=r.get("noise", "seed", int, check=lambda v: v >= 0, what="a non-negative integer"),
            weight_cap=r.get("noise", "weight_cap", default=NOISY_WEIGHT_CAP, **positive),
            estimator=r.get(
                "noise", "estimator", str, "gram",
                lambda v: v in ("direct", "gram"), "direct or gram",
            ),  # fmt: skip
        )

    state = _parse_state(r, index, base_dir)

    settings = r.get("run", "settings", _parse_settings, SETTING_LABELS, what="a list of settings")
    run = ExperimentConfig(
        ell_max=ell_max,
        ahst=ahst,
        noise=noise,
        state=state,
        even_variant=r.get(
            "run", "fhs", str, "cascade", lambda v: v in ("cascade", "slm"), "cascade or slm"
        ),
        settings=settings,
        threshold=r.get(
            "run", "threshold", float, 0.99, lambda v: 0 <= v <= 1, "a number in [0, 1]"
        ),
        output_dir=base_dir / r.get("run", "out", str, "results"),
        exact=r.get("run", "exact", parse_bool, False, what="a boolean"),
    )
    _check_state_fits(run, index)
    return run


def _parse_settings(text: str) -> tuple[str, ...]:
    labels = tuple(s.strip() for s in text.split(",") if s.strip())
    if not labels or any(s not in SETTING_LABELS for s in labels):
        raise ValueError(text)
    return labels


def _parse_state(r: _Reader, index: _LineIndex, base_dir: Path) -> StateSpec:
    kind = r.get(
        "state", "kind", str, "pure", lambda v: v in STATE_KINDS, f"one of {', '.join(STATE_KINDS)}"
    )
    if kind == "pure":
        amplitudes = r.get(
            "state", "amplitudes", parse_amplitudes, what="a list of l:amplitude with l ≠ 0"
        )
        if amplitudes is None:
            raise ConfigError("[state] amplitudes is required for a pure state", index("state"))
        return StateSpec(kind, amplitudes=amplitudes)
    if kind == "random":
        seed = r.get("state", "seed", int, check=lambda v: v >= 0, what="a non-negative integer")
        if seed is None:
            raise ConfigError("[state] seed is required for a random state", index("state"))
        rank = r.get("state", "rank", int, check=lambda v: v > 0, what="a positive integer")
        return StateSpec(kind, amplitudes={}, rank=rank, seed=seed)
    if kind == "file":
        if not r.has("state", "file"):
            raise ConfigError("[state] file is required for kind = file", index("state"))
        return StateSpec(kind, amplitudes={}, path=base_dir / r.raw("state", "file"))
    return StateSpec(kind, amplitudes={})


def _check_state_fits(run: ExperimentConfig, index: _LineIndex):
    state = run.state
    too_large = [ell for ell in state.amplitudes if abs(ell) > run.ell_max]
    if too_large:
        raise ConfigError(
            f"State modes {too_large} exceed ell_max={run.ell_max}", index("state", "amplitudes")
        )
    if state.rank is not None and state.rank > 2 * run.ell_max:
        raise ConfigError(
            f"rank {state.rank} exceeds the dimension {2 * run.ell_max}", index("state", "rank")
        )
