# ruff: noqa: T201  # ignore print statements
"""Provides a command line interface for this package.

A __main__.py file is executed when the package itself is invoked directly from
the command line using the -m flag, that is:
    python -m oamtomo

Exit codes: 0 on success, 1 on errors, 2 when a run completes but fails its
physics check (fidelity below threshold, or a violated sorter invariant).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import re
import sys
from pathlib import Path

import numpy as np

from oamtomo import (
    ExperimentConfig,
    OamtomoError,
    __version__,
    circuits,
    formats,
    load_config,
    make_basis,
    tomography,
)
from oamtomo.ahst import KernelCache
from oamtomo.errors import InvalidArgumentError, InvariantViolation

CONFIG_FILE = "oamtomo.ini"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2

_log = logging.getLogger(__name__)

_ANGLE = re.compile(r"^([+-]?(?:\d+(?:\.\d*)?|\.\d+)?)\s*\*?\s*(pi)?\s*(?:/\s*(\d+(?:\.\d*)?))?$")


def _angle(text: str) -> float:
    """Angle in radians; accepts plain numbers and multiples of pi such as '3pi/4'.

    >>> _angle("pi/2") == np.pi / 2, _angle("-2*pi"), _angle("0.25")
    (True, -6.283185307179586, 0.25)
    """
    m = _ANGLE.match(text.strip())
    if not m or not (m.group(1) or m.group(2)):
        raise argparse.ArgumentTypeError(f"not an angle: '{text}'")
    factor = m.group(1)
    value = float(factor) if factor not in ("", "+", "-") else float(f"{factor}1")
    if m.group(2):
        value *= np.pi
    if m.group(3):
        value /= float(m.group(3))
    return value


# *** tomography ***


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    ahst = config.ahst
    if args.grid is not None:
        ahst = dataclasses.replace(ahst, grid_size=args.grid)
    if args.extent is not None:
        ahst = dataclasses.replace(ahst, extent=args.extent)
    changes = {"ahst": ahst}
    if args.out is not None:
        changes["output_dir"] = Path(args.out)
    if args.seed is not None:
        if config.noise is not None:
            changes["noise"] = dataclasses.replace(config.noise, seed=args.seed)
        if config.state.kind == "random":
            changes["state"] = dataclasses.replace(config.state, seed=args.seed)
    return dataclasses.replace(config, **changes)


def _do_tomography(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    digest = formats.config_hash(config)
    print(f"Config   : {args.config} (hash {digest})")
    print(f"Modes    : ±1..±{config.ell_max}, FHS variant {config.even_variant}")

    rho = tomography.build_state(config.state, config.ell_max)
    cache = KernelCache()
    report = tomography.run_full_qst(
        rho,
        config.ahst,
        config.noise,
        even_variant=config.even_variant,
        exact=config.exact,
        cache=cache,
    )
    _log.debug(f"Kernel cache: {len(cache)} kernels, {cache.hits} hits, {cache.misses} misses")

    out = config.output_dir
    basis = rho.basis
    formats.write_report(out / "report.txt", report, digest)
    formats.write_density(out / "rho_reconstructed.txt", report.rho_reconstructed, basis, digest)
    formats.write_density(out / "rho_truth.txt", report.rho_truth, basis, digest)
    if not config.exact:
        images = tomography.setting_images(
            rho, config.ahst, even_variant=config.even_variant, labels=config.settings
        )
        for name, image in images.items():
            formats.write_intensity(out / f"intensity_{name}", image, digest)

    print(f"Fidelity : {report.fidelity:.6f} (threshold {config.threshold})")
    print(f"Min eig  : {report.min_eigenvalue:.3g}")
    print(f"Output   : {out}")
    if report.fidelity < config.threshold:
        print("Fidelity below threshold")
        return EXIT_CHECK_FAILED
    return EXIT_OK


# *** routing ***


def _routing_circuit(args: argparse.Namespace) -> tuple[circuits.Circuit, np.ndarray | None]:
    """The named device and, for gates, its target matrix."""
    name, lmax = args.name, args.lmax
    general = make_basis(lmax, include_zero=True)
    tomo = make_basis(lmax)
    if name == "oam-sorter":
        return circuits.oam_sorter(args.beta, general), None
    if name == "hs":
        return circuits.partial_helicity_sorter(args.alpha, general), None
    if name == "hs-odd":
        return circuits.hs_odd(general), None
    if name == "radial-sorter":
        basis = make_basis(lmax, include_p=True, p_max=args.pmax, include_zero=True)
        return circuits.radial_mode_sorter(args.alpha, basis), None
    even = make_basis(lmax, parity="even")
    if name == "hs-even-slm":
        return circuits.hs_even_slm(even), None
    if name == "hs-even-cascade":
        depth = args.depth or circuits.cascade_depth(lmax)
        return circuits.hs_even_cascade(depth, even), None
    if name == "fhs":
        return circuits.full_helicity_sorter(tomo, args.even, args.depth), None
    if name == "hx":
        return circuits.gate_hx(tomo, args.even), circuits.hx_matrix(lmax)
    if name == "hy":
        return circuits.gate_hy(tomo, args.even), circuits.hy_matrix(lmax)
    if name == "phase":
        target = circuits.phase_matrix(args.theta, lmax)
        return circuits.gate_phase(args.theta, tomo, args.even), target
    raise InvalidArgumentError(
        f"Unknown device '{name}'; expected one of {', '.join(ROUTING_NAMES)}"
    )


def _check_circuit(c: circuits.Circuit, name: str, target: np.ndarray | None):
    circuits.verify_unitary(c)
    if name in ("hs", "hs-odd"):
        circuits.verify_negative_blocking(c, "b")
    if name == "fhs":
        circuits.verify_helicity_routing(c)
    if target is not None:
        circuits.verify_gate(c, target)


def _do_routing(args: argparse.Namespace) -> int:
    c, target = _routing_circuit(args)
    in_paths = [c.path_of(p, outputs=False) for p in c.in_ports.values()]
    table = circuits.routing_table(c, paths=in_paths)
    if args.csv:
        print("in_path,ell,p,out_path,out_port,out_ell,out_p,re,im")
        for (path, mode), outs in table.rows.items():
            for out_path, out_mode, amp in outs:
                port = table.port_names.get(out_path, str(out_path))
                print(
                    f"{path},{mode.ell},{mode.p},{out_path},{port},{out_mode.ell},{out_mode.p},"
                    f"{amp.real!r},{amp.imag!r}"
                )
    else:
        print(f"{c.name}: {c.n_paths} paths, {len(c.elements)} elements, cost {c.total_cost}")
        print(f"{'in':>4} {'mode':>6}  {'port':>5} {'out':>6}  {'|amp|':>8} {'phase/pi':>9}")
        for (path, mode), outs in table.rows.items():
            for out_path, out_mode, amp in outs:
                port = table.port_names.get(out_path, str(out_path))
                print(
                    f"{path:>4} {mode!s:>6}  {port:>5} {out_mode!s:>6}  "
                    f"{abs(amp):8.6f} {np.angle(amp) / np.pi:9.6f}"
                )
    if args.netlist:
        formats.write_netlist(args.netlist, c)
    if args.check:
        try:
            _check_circuit(c, args.name, target)
        except InvariantViolation as e:
            print(f"Check failed: {e}", file=sys.stderr)
            return EXIT_CHECK_FAILED
        print("Checks passed")
    return EXIT_OK


# *** scaling ***


def _do_scaling(args: argparse.Namespace) -> int:
    if args.nmin < 2 or args.nmax < args.nmin:
        raise OamtomoError(f"Need 2 <= nmin <= nmax, got {args.nmin}..{args.nmax}")
    # element counts do not depend on the basis size
    basis = make_basis(2, parity="even")
    slm = circuits.hs_even_slm(basis).total_cost
    print("N,modes,cascade,slm")
    for n in range(args.nmin, args.nmax + 1):
        cascade = circuits.hs_even_cascade(n, basis).total_cost
        print(f"{n},{2**n},{cascade},{slm}")
    return EXIT_OK


ROUTING_NAMES = (
    "oam-sorter",
    "hs",
    "hs-odd",
    "radial-sorter",
    "hs-even-slm",
    "hs-even-cascade",
    "fhs",
    "hx",
    "hy",
    "phase",
)


def main(argv: list[str] | None = None):
    parser = argparse.ArgumentParser(
        prog="oamtomo",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description=(
            "Simulate OAM helicity sorters and full state tomography of OAM states.\n\n"
            "Sub-commands:\n"
            "   tomography   run the three-setting tomography described by a config file\n"
            "   routing      print where a named device sends each input mode\n"
            "   scaling      element counts of the cascade vs the SLM even sorter\n\n"
            f"Default values for the tomography options can be put in `{CONFIG_FILE}`:\n"
            "   [DEFAULT]\n"
            "   config = experiment.ini\n"
            "   out = results"
        ),
    )
    parser.add_argument(
        "-V",
        "--version",
        action="version",
        version="%(prog)s {version}".format(version=__version__),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="show debug logging")
    subparsers = parser.add_subparsers(required=True)

    parser_tomo = subparsers.add_parser("tomography", help="run full state tomography")
    parser_tomo.add_argument("--config", help="experiment file (INI)")
    parser_tomo.add_argument("--out", help="output directory, overrides [run] out")
    parser_tomo.add_argument("--seed", type=int, help="noise / random-state seed")
    parser_tomo.add_argument("--grid", type=int, help="grid size M (samples per axis)")
    parser_tomo.add_argument("--extent", type=float, help="grid half-width in units of w0")
    parser_tomo.set_defaults(func=_do_tomography)

    parser_routing = subparsers.add_parser("routing", help="print a device's routing table")
    parser_routing.add_argument("name", help=f"one of {', '.join(ROUTING_NAMES)}")
    parser_routing.add_argument("--alpha", type=_angle, default=np.pi / 2, help="HS angle")
    parser_routing.add_argument("--beta", type=_angle, default=np.pi / 2, help="DP angle")
    parser_routing.add_argument("--theta", type=_angle, default=np.pi / 2, help="phase gate")
    parser_routing.add_argument("--lmax", type=int, default=4, help="largest |ell|")
    parser_routing.add_argument("--pmax", type=int, default=1, help="largest p (radial)")
    parser_routing.add_argument("--even", choices=circuits.FHS_VARIANTS, default="cascade")
    parser_routing.add_argument("--depth", type=int, help="cascade depth N")
    parser_routing.add_argument("--csv", action="store_true", help="print CSV")
    parser_routing.add_argument("--netlist", help="also save the device as a netlist")
    parser_routing.add_argument("--check", action="store_true", help="verify invariants")
    parser_routing.set_defaults(func=_do_routing)

    parser_scaling = subparsers.add_parser("scaling", help="element count vs cascade depth")
    parser_scaling.add_argument("--nmin", type=int, default=2)
    parser_scaling.add_argument("--nmax", type=int, default=8)
    parser_scaling.set_defaults(func=_do_scaling)

    # Add values from ini file as default values
    defaults = configparser.ConfigParser()
    defaults.read(CONFIG_FILE)
    parser_tomo.set_defaults(**defaults.defaults())

    args = parser.parse_args(argv)

    if args.verbose:
        logging.basicConfig(format="%(levelname)-7s %(message)s")
        logging.getLogger().setLevel(logging.DEBUG)

    if args.func is _do_tomography and args.config is None:
        print(
            "Parameter 'config' is required. "
            f"Either specify it as an argument, or in file '{CONFIG_FILE}'"
        )
        sys.exit(EXIT_ERROR)

    # call the appropriate subcommand
    try:
        code = args.func(args)
    except OamtomoError as e:
        _log.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_ERROR
    sys.exit(code)


if __name__ == "__main__":
    main()
