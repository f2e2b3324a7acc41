"""Full state tomography: three settings, helicity sorting, AHST, assembly.

Each setting applies U in {1, H_x, H_y} to path a, then the full helicity
sorter. The "+" port carries mu_k = P+ U rho U^dagger P+ and the "-" port
nu_k = P- U rho U^dagger P-. With rho = [[A, sigma], [sigma^dagger, B]]:

    mu_1 = A,  nu_1 = B
    mu_2 = (A + B + sigma + sigma^dagger) / 2
    mu_3 = (A + B - i sigma + i sigma^dagger) / 2

so mu_2 - i mu_3 - (1-i)/2 (mu_1 + nu_1) = sigma^dagger.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from oamtomo import ahst, formats
from oamtomo.circuits import (
    Circuit,
    compose,
    full_helicity_sorter,
    gate_hx,
    gate_hy,
    hx_matrix,
    hy_matrix,
)
from oamtomo.config import AhstConfig, NoiseConfig, StateSpec
from oamtomo.errors import InvalidArgumentError
from oamtomo.hilbert import (
    block_assemble,
    density_on_path,
    fidelity,
    make_basis,
    nearest_psd,
    project_subspace,
    pure_state,
    random_density,
    trace_distance,
)
from oamtomo.models import (
    BasisSpec,
    BlockDecomposition,
    IntensityGrid,
    MarginalSet,
    RailDensity,
    Reconstruction,
    TomographyReport,
)

_log = logging.getLogger(__name__)

SIGMA_ORIENTATION = "dagger"  # the six-marginal combination yields sigma^dagger


@dataclass(frozen=True, eq=False)
class MeasurementSetting:
    label: str  # identity | hx | hy
    circuit: Circuit


def identity_circuit(basis: BasisSpec) -> Circuit:
    return Circuit("identity", (), 1, basis, {"in": 0}, {"out": 0})


def measurement_settings(basis: BasisSpec, even_variant: str = "cascade") -> list[MeasurementSetting]:
    """The three settings, realised as circuits on path a."""
    return [
        MeasurementSetting("identity", identity_circuit(basis)),
        MeasurementSetting("hx", gate_hx(basis, even_variant)),
        MeasurementSetting("hy", gate_hy(basis, even_variant)),
    ]


def ideal_setting_matrix(label: str, n: int) -> np.ndarray:
    if label == "identity":
        return np.eye(2 * n, dtype=complex)
    if label == "hx":
        return hx_matrix(n)
    if label == "hy":
        return hy_matrix(n)
    raise InvalidArgumentError(f"Unknown setting '{label}'; expected identity, hx or hy")


def _require_tomography_basis(basis: BasisSpec):
    if not basis.is_tomography_basis():
        raise InvalidArgumentError(
            "Tomography needs the canonical basis ±1..±ell_max (no ell=0, p=0 only)"
        )


def simulate_setting(
    rho_in: RailDensity, setting: MeasurementSetting, fhs: Circuit
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate rho through U then the sorter; return the (+, -) port marginals.

    Raises:
        InvalidArgumentError: bases differ, or not a tomography basis
    """
    basis = rho_in.basis
    _require_tomography_basis(basis)
    if setting.circuit.basis != basis or fhs.basis != basis:
        raise InvalidArgumentError("State, setting and sorter must share one mode basis")
    total = compose(setting.circuit, fhs)
    rho = rho_in.path_block(0)
    d = basis.dim
    # only path a is lit, so only its input columns matter
    t = total.unitary[:, :d]
    out = RailDensity(basis, total.n_paths, t @ rho @ t.conj().T)
    mu = project_subspace(out, "positive", fhs.out_ports["+"])
    nu = project_subspace(out, "negative", fhs.out_ports["-"])
    return mu, nu


def exact_marginals(rho: np.ndarray) -> MarginalSet:
    """Marginals from the ideal setting matrices, without any circuit."""
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0] // 2
    blocks = []
    for label in ("identity", "hx", "hy"):
        u = ideal_setting_matrix(label, n)
        out = u @ rho @ u.conj().T
        blocks.append((out[:n, :n], out[n:, n:]))
    (mu1, nu1), (mu2, nu2), (mu3, nu3) = blocks
    return MarginalSet(mu1, mu2, mu3, nu1, nu2, nu3, provenance="exact")


def _sigma_candidate(m: MarginalSet) -> np.ndarray:
    return m.mu2 - 1j * m.mu3 - (1 - 1j) / 2 * (m.mu1 + m.nu1)


def assemble_full_density(m: MarginalSet, ell_max: int | None = None) -> np.ndarray:
    """Combine the six marginals into the full 2n x 2n density matrix (Hermitized).

    rho_plus = mu_1, rho_minus = nu_1 and sigma is the adjoint of
    mu_2 - i mu_3 - (1-i)/2 (mu_1 + nu_1).

    Raises:
        InvalidArgumentError: a marginal is missing or has the wrong shape
    """
    parts = {name: getattr(m, name) for name in ("mu1", "mu2", "mu3", "nu1", "nu2", "nu3")}
    missing = [name for name, v in parts.items() if v is None]
    if missing:
        raise InvalidArgumentError(f"Missing marginal(s): {', '.join(missing)}")
    n = ell_max if ell_max is not None else np.shape(m.mu1)[0]
    wrong = [name for name, v in parts.items() if np.shape(v) != (n, n)]
    if wrong:
        raise InvalidArgumentError(f"Marginal(s) {', '.join(wrong)} are not {n}x{n}")
    sigma = _sigma_candidate(m).conj().T
    rho = block_assemble(BlockDecomposition(np.asarray(m.mu1), np.asarray(m.nu1), sigma))
    return (rho + rho.conj().T) / 2


def _marginal_map(n: int) -> np.ndarray:
    """Matrix of the complex-linear map vec(rho) -> (mu1, mu2, mu3, nu1, nu2, nu3)."""
    columns = []
    for k in range(4 * n * n):
        unit = np.zeros(4 * n * n, dtype=complex)
        unit[k] = 1
        m = exact_marginals(unit.reshape(2 * n, 2 * n))
        columns.append(
            np.concatenate([x.ravel() for x in (m.mu1, m.mu2, m.mu3, m.nu1, m.nu2, m.nu3)])
        )
    return np.stack(columns, axis=1)


def oracle_assemble(m: MarginalSet) -> np.ndarray:
    """Least-squares inversion of the marginal map; independent of any sigma formula."""
    n = np.shape(m.mu1)[0]
    data = np.concatenate([np.ravel(x) for x in (m.mu1, m.mu2, m.mu3, m.nu1, m.nu2, m.nu3)])
    vec, *_ = scipy.linalg.lstsq(_marginal_map(n), data)
    return vec.reshape(2 * n, 2 * n)


def sigma_orientation_check(
    ell_max: int, rng: np.random.Generator, trials: int = 20
) -> dict[str, float]:
    """Largest error of both readings of the sigma formula over random states.

    Returns {"direct": err, "dagger": err, "oracle": err}; the reading with
    error near zero is the correct one.
    """
    errors = {"direct": 0.0, "dagger": 0.0, "oracle": 0.0}
    n = ell_max
    for _ in range(trials):
        rho = random_density(2 * n, rng=rng)
        sigma = rho[:n, n:]
        m = exact_marginals(rho)
        s = _sigma_candidate(m)
        errors["direct"] = max(errors["direct"], float(np.linalg.norm(s - sigma)))
        errors["dagger"] = max(errors["dagger"], float(np.linalg.norm(s.conj().T - sigma)))
        errors["oracle"] = max(errors["oracle"], float(np.linalg.norm(oracle_assemble(m) - rho)))
    _log.info(f"Sigma orientation errors: {errors}")
    return errors


# *** AHST measurement ***


def measure_marginal_ahst(
    port_state: np.ndarray,
    helicity: str,
    config: AhstConfig | None = None,
    noise: NoiseConfig | None = None,
    rng: np.random.Generator | None = None,
    cache: ahst.KernelCache | None = None,
) -> Reconstruction:
    """Image the port state and reconstruct it with AHST.

    With `noise`, the image is Poisson sampled and reconstructed with the
    noise estimator and weight cap.

    Raises:
        InvalidArgumentError: unknown helicity, or noise without a generator
    """
    config = config or AhstConfig()
    n = np.shape(port_state)[0]
    if helicity not in ("positive", "negative"):
        raise InvalidArgumentError(f"helicity must be 'positive' or 'negative', got '{helicity}'")
    sign = 1 if helicity == "positive" else -1
    image = ahst.intensity_from_density(
        port_state, config.w0, config.grid, ells=[sign * ell for ell in range(1, n + 1)]
    )
    options = dict(
        estimator=config.estimator,
        quadrature=config.quadrature,
        tol=config.tol,
        weight_cap=config.weight_cap,
        psd_repair=config.psd_repair,
        polar_order=config.polar_order,
        cache=cache,
    )
    if noise is not None:
        if rng is None:
            raise InvalidArgumentError("Noisy measurement needs a random generator")
        image = ahst.poisson_sample(image, noise.photons, rng)
        _log.debug(f"Poisson sampled {helicity} image with {noise.photons:g} photons")
        options.update(estimator=noise.estimator, weight_cap=noise.weight_cap)
    reconstruct = ahst.reconstruct_positive if sign > 0 else ahst.reconstruct_negative
    return reconstruct(image, n, **options)


def run_full_qst(
    rho_truth: RailDensity | np.ndarray,
    config: AhstConfig | None = None,
    noise: NoiseConfig | None = None,
    *,
    even_variant: str = "cascade",
    exact: bool = False,
    cache: ahst.KernelCache | None = None,
) -> TomographyReport:
    """Simulate the three settings, measure all six marginals and assemble rho.

    Fidelity and trace distance are taken against the nearest unit-trace PSD
    matrix of the assembled result. Deterministic given the noise seed.

    Raises:
        InvalidArgumentError: not a tomography basis
        PreconditionError:    rho_truth not a density matrix
    """
    config = config or AhstConfig()
    if not isinstance(rho_truth, RailDensity):
        rho_truth = np.asarray(rho_truth, dtype=complex)
        rho_truth = density_on_path(rho_truth, make_basis(rho_truth.shape[0] // 2))
    basis = rho_truth.basis
    _require_tomography_basis(basis)
    n = basis.ell_max
    truth = rho_truth.path_block(0)

    fhs = full_helicity_sorter(basis, even_variant)
    settings = measurement_settings(basis, even_variant)
    rngs = (
        [np.random.default_rng(s) for s in np.random.SeedSequence(noise.seed).spawn(6)]
        if noise is not None
        else [None] * 6
    )
    marginals, radii, repaired = {}, {}, False
    for k, setting in enumerate(settings, start=1):
        mu, nu = simulate_setting(rho_truth, setting, fhs)
        _log.info(
            f"Setting {setting.label}: Tr(mu)={np.trace(mu).real:.6f}, Tr(nu)={np.trace(nu).real:.6f}"
        )
        if not exact:
            rec_mu = measure_marginal_ahst(mu, "positive", config, noise, rngs[2 * k - 2], cache)
            rec_nu = measure_marginal_ahst(nu, "negative", config, noise, rngs[2 * k - 1], cache)
            mu, nu = rec_mu.matrix, rec_nu.matrix
            radii[f"mu{k}"], radii[f"nu{k}"] = rec_mu.truncation_radius, rec_nu.truncation_radius
            repaired |= rec_mu.psd_repaired or rec_nu.psd_repaired
        marginals[f"mu{k}"], marginals[f"nu{k}"] = mu, nu
    m = MarginalSet(**marginals, provenance="exact" if exact else "ahst-reconstructed")
    _log.info(f"Measured marginals ({m.provenance}); probabilities {m.probabilities()}")

    assembled = assemble_full_density(m, n)
    lowest = float(scipy.linalg.eigvalsh(assembled)[0])
    physical = nearest_psd(assembled, trace=1.0)
    if config.psd_repair and lowest < 0:
        _log.warning(f"Assembled matrix repaired (min eigenvalue {lowest:.3g})")
        assembled, repaired = physical, True

    residual = None
    if not exact and radii:
        residual = ahst.orthogonality_residual(
            basis.positive_ells(), config.w0, config.grid, radius=max(radii.values()), cache=cache
        )
    report = TomographyReport(
        rho_reconstructed=assembled,
        rho_truth=truth,
        fidelity=fidelity(physical, truth),
        trace_distance=trace_distance(physical, truth),
        psd_repaired=repaired,
        min_eigenvalue=lowest,
        sigma_orientation=SIGMA_ORIENTATION,
        marginals=m,
        truncation_radii=radii,
        orthogonality_residual=residual,
        ells=tuple(mode.ell for mode in basis.ordering),
    )
    _log.info(f"Full QST done: fidelity {report.fidelity:.6f}, min eigenvalue {lowest:.3g}")
    return report


def build_state(spec: StateSpec, ell_max: int) -> RailDensity:
    """The density matrix described by `spec`, on path a of the tomography basis.

    Raises:
        InvalidArgumentError: unknown kind, or a mode outside the basis
        FormatError:          unreadable density file
    """
    basis = make_basis(ell_max)
    if spec.kind == "pure":
        return pure_state(basis, spec.amplitudes).density()
    if spec.kind == "random":
        rng = np.random.default_rng(spec.seed)
        return density_on_path(random_density(basis.dim, spec.rank, rng), basis)
    if spec.kind == "maximally-mixed":
        return density_on_path(np.eye(basis.dim) / basis.dim, basis)
    if spec.kind == "file":
        rho, file_basis = formats.read_density(spec.path)
        if file_basis != basis:
            raise InvalidArgumentError(
                f"{spec.path}: ordering {file_basis.token()} does not match ell_max={ell_max}"
            )
        return density_on_path(rho, basis)
    raise InvalidArgumentError(f"Unknown state kind '{spec.kind}'")


def setting_images(
    rho_truth: RailDensity,
    config: AhstConfig | None = None,
    *,
    even_variant: str = "cascade",
    labels: tuple[str, ...] = ("identity", "hx", "hy"),
) -> dict[str, IntensityGrid]:
    """Noise-free port images per setting, keyed '<label>_plus' / '<label>_minus'."""
    config = config or AhstConfig()
    basis = rho_truth.basis
    fhs = full_helicity_sorter(basis, even_variant)
    images = {}
    for setting in measurement_settings(basis, even_variant):
        if setting.label not in labels:
            continue
        mu, nu = simulate_setting(rho_truth, setting, fhs)
        ells = basis.positive_ells()
        images[f"{setting.label}_plus"] = ahst.intensity_from_density(
            mu, config.w0, config.grid, ells=ells
        )
        images[f"{setting.label}_minus"] = ahst.intensity_from_density(
            nu, config.w0, config.grid, ells=[-ell for ell in ells]
        )
    return images
