"""Intensity-based density-matrix reconstruction for a single helicity.

The intensity of a state supported on modes of one sign is
I = sum_ab rho_ab f_a f_b^*. Its Fourier transform is sum_ab rho_ab P_ab with
kernels P_ab = F[f_a f_b^*], which are orthogonal under the weight
exp(pi^2 k^2 w0^2 / 2) with norm 2/(pi w0^2). Projecting F[I] on the kernels
recovers rho.

Fourier convention: F[g](k) = integral g(x) exp(-2 pi i k.x) d^2x, evaluated
with an FFT scaled by the pixel area.
"""

from __future__ import annotations

import logging
import threading
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.ndimage
import scipy.special

from oamtomo import formats
from oamtomo.const import (
    INTENSITY_ATOL,
    MAX_WEIGHT_EXPONENT,
    MIN_SAMPLES_PER_WAIST,
    TRUNCATION_TOL,
)
from oamtomo.errors import InvalidArgumentError, ResolutionError, TruncationError
from oamtomo.hilbert import nearest_psd
from oamtomo.models import FourierKernel, Grid, IntensityGrid, LgField, Reconstruction

_log = logging.getLogger(__name__)

ESTIMATORS = ("direct", "gram")
QUADRATURES = ("cartesian", "polar")


# *** fields and intensities ***


def required_extent(ell: int) -> float:
    """Half-width (in w0) a grid needs to hold the |ell| ring and its tail."""
    return 4.0 * (1.0 + np.sqrt(abs(ell)) / 2.0)


def check_resolution(grid: Grid, ell_max: int):
    """Check that `grid` resolves LG modes up to |ell_max|.

    Raises:
        ResolutionError: fewer than 16 samples per w0, or the grid is too small
    """
    extent = max(grid.extent, required_extent(ell_max))
    size = int(np.ceil(2 * extent * MIN_SAMPLES_PER_WAIST / 2)) * 2
    if grid.samples_per_waist < MIN_SAMPLES_PER_WAIST or grid.extent < required_extent(ell_max):
        raise ResolutionError(
            f"Grid {grid.size}x{grid.size} over ±{grid.extent} w0 does not resolve |ell| = "
            f"{ell_max}: need extent ≥ {required_extent(ell_max):.3g} w0 and size ≥ {size}",
            required_size=max(size, grid.size),
            required_extent=extent,
        )


def lg_field(ell: int, w0: float, grid: Grid) -> LgField:
    """Sampled p=0 LG mode, normalized to unit power.

    f(r, phi) = sqrt(2/(pi |l|! w0^2)) (sqrt2 r/w0)^|l| exp(-r^2/w0^2) exp(i l phi)

    Raises:
        ResolutionError: grid too coarse or too small for |ell|
    """
    check_resolution(grid, abs(ell))
    x, y = grid.mesh(w0)
    m = abs(ell)
    # r^|l| exp(i l phi) == (x + i sign(l) y)^|l|
    z = (x + 1j * np.sign(ell) * y) * (np.sqrt(2) / w0)
    norm = np.exp(0.5 * (np.log(2 / np.pi) - scipy.special.gammaln(m + 1))) / w0
    values = norm * z**m * np.exp(-(x**2 + y**2) / w0**2)
    return LgField(ell=ell, w0=w0, grid=grid, values=values)


def coherence_term(ell1: int, ell2: int, w0: float, grid: Grid) -> np.ndarray:
    """The product f_ell1 f_ell2^* that multiplies rho_{ell1,ell2} in the intensity."""
    return lg_field(ell1, w0, grid).values * np.conj(lg_field(ell2, w0, grid).values)


def intensity_from_density(
    rho: np.ndarray, w0: float, grid: Grid, ells: Sequence[int] | None = None
) -> IntensityGrid:
    """I = sum rho_ab f_a f_b^* over the modes `ells` (default 1..n).

    With normalized fields the integrated intensity equals Tr(rho). Samples
    below -INTENSITY_ATOL are set to 0; smaller rounding residue is kept.

    Raises:
        InvalidArgumentError: rho not square Hermitian, or `ells` of the wrong length
    """
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0] if rho.ndim == 2 else 0
    if rho.shape != (n, n) or np.max(np.abs(rho - rho.conj().T), initial=0.0) > 1e-10:
        raise InvalidArgumentError("Intensity needs a square Hermitian matrix")
    ells = list(range(1, n + 1)) if ells is None else list(ells)
    if len(ells) != n:
        raise InvalidArgumentError(f"Got {len(ells)} modes for a {n}x{n} matrix")
    fields = [lg_field(ell, w0, grid).values for ell in ells] if n else []
    values = np.zeros((grid.size, grid.size))
    for a in range(n):
        values += rho[a, a].real * np.abs(fields[a]) ** 2
        for b in range(a + 1, n):
            values += 2 * np.real(rho[a, b] * fields[a] * np.conj(fields[b]))
    negative = values < -INTENSITY_ATOL
    if negative.any():
        _log.debug(f"Clamped {negative.sum()} intensity samples below {-INTENSITY_ATOL:g} to 0")
        values[negative] = 0.0
    return IntensityGrid(values, grid, w0)


def poisson_sample(
    intensity: IntensityGrid, photons: float, rng: np.random.Generator
) -> IntensityGrid:
    """Detect `photons` photons distributed as the intensity; returns counts rescaled to I.

    Raises:
        InvalidArgumentError: photons not positive
    """
    if photons <= 0:
        raise InvalidArgumentError(f"Photon budget must be positive, got {photons}")
    pixel = intensity.grid.spacing(intensity.w0) ** 2
    counts = rng.poisson(photons * intensity.values * pixel)
    return IntensityGrid(counts / (photons * pixel), intensity.grid, intensity.w0)


# *** Fourier domain ***


def fourier_transform(values: np.ndarray, grid: Grid, w0: float) -> np.ndarray:
    """Continuous 2D Fourier transform, sampled on `grid.frequency_mesh(w0)`."""
    dx = grid.spacing(w0)
    return dx**2 * np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(values)))


def weight_exponent(k2: np.ndarray | float, w0: float):
    """Exponent of the orthogonality weight, pi^2 k^2 w0^2 / 2, for squared radius k2."""
    return np.pi**2 * k2 * w0**2 / 2


def fourier_kernel(ell1: int, ell2: int, w0: float, grid: Grid) -> FourierKernel:
    """P_{ell1,ell2} = F[f_ell1 f_ell2^*] on the frequency grid.

    Raises:
        InvalidArgumentError: ell1 and ell2 of opposite sign
    """
    if ell1 * ell2 < 0:
        raise InvalidArgumentError(
            f"Kernel ({ell1},{ell2}) mixes helicities; use P(-l2,-l1) = P(l1,l2) instead"
        )
    samples = fourier_transform(coherence_term(ell1, ell2, w0, grid), grid, w0)
    samples.setflags(write=False)
    return FourierKernel(ell1, ell2, w0, grid, samples)


class KernelCache:
    """Thread-safe kernel store, optionally persisted to a directory.

    Lookups and population happen under one lock. Kernels are never evicted:
    a 512x512 kernel takes 4 MB, so long sweeps over grids should use their
    own cache or call `clear()`.
    """

    def __init__(self, directory: str | Path | None = None):
        self._kernels: dict[tuple, FourierKernel] = {}
        self._lock = threading.Lock()
        self.directory = Path(directory) if directory is not None else None
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(ell1: int, ell2: int, w0: float, grid: Grid) -> tuple:
        return (int(ell1), int(ell2), float(w0), grid.size, float(grid.extent))

    def get(self, ell1: int, ell2: int, w0: float, grid: Grid) -> FourierKernel:
        key = self.key(ell1, ell2, w0, grid)
        with self._lock:
            kernel = self._kernels.get(key)
            if kernel is not None:
                self.hits += 1
                return kernel
            self.misses += 1
            samples = self._load(key)
            if samples is not None:
                kernel = FourierKernel(ell1, ell2, w0, grid, samples)
            else:
                kernel = fourier_kernel(ell1, ell2, w0, grid)
                self._store(key, kernel)
            self._kernels[key] = kernel
            return kernel

    def __len__(self) -> int:
        return len(self._kernels)

    def clear(self):
        """Drop the in-memory kernels and reset the counters; files on disk stay."""
        with self._lock:
            self._kernels.clear()
            self.hits = 0
            self.misses = 0

    def _load(self, key) -> np.ndarray | None:
        if self.directory is None:
            return None
        samples = formats.load_kernel(self.directory, formats.kernel_token(key))
        if samples is not None:
            _log.debug(f"Loaded kernel {key[:2]} from {self.directory}")
        return samples

    def _store(self, key, kernel: FourierKernel):
        if self.directory is None:
            return
        meta = {"ell1": key[0], "ell2": key[1], "w0": key[2], "size": key[3], "extent": key[4]}
        formats.save_kernel(self.directory, formats.kernel_token(key), meta, kernel.samples)


_default_cache = KernelCache()


def default_cache() -> KernelCache:
    return _default_cache


# *** truncation ***


def kernel_profile(ell1: int, ell2: int, x: np.ndarray) -> np.ndarray:
    """Natural log of |P|^2 * weight as a function of x = pi^2 k^2 w0^2 / 2.

    For same-helicity modes this is x^m L_k^m(x)^2 exp(-x) k!/(k+m)! with
    m = |l1 - l2| and k = min(|l1|, |l2|); it integrates to one over x.
    """
    m = abs(abs(ell1) - abs(ell2))
    k = min(abs(ell1), abs(ell2))
    lag = scipy.special.eval_genlaguerre(k, m, x)
    with np.errstate(divide="ignore"):
        return (
            m * np.log(x)
            + 2 * np.log(np.abs(lag))
            - x
            + scipy.special.gammaln(k + 1)
            - scipy.special.gammaln(k + m + 1)
        )


def truncation_radius(
    ells: Sequence[int],
    w0: float,
    grid: Grid,
    tol: float = TRUNCATION_TOL,
    weight_cap: float | None = None,
) -> float:
    """Frequency radius beyond which every weighted kernel is below `tol` of its peak.

    An optional `weight_cap` further limits the radius to where the weight
    stays below the cap.

    Raises:
        TruncationError: the radius needs a weight beyond float range, or lies
            outside the frequency grid
    """
    x = np.linspace(1e-9, 2 * MAX_WEIGHT_EXPONENT, 40001)
    x_cut = 0.0
    for a in ells:
        for b in ells:
            log_h = kernel_profile(a, b, x)
            above = np.flatnonzero(log_h >= log_h.max() + np.log(tol))
            x_cut = max(x_cut, x[above[-1]])
    if weight_cap is not None:
        x_cap = float(np.log(weight_cap))
        if x_cap < x_cut:
            _log.debug(f"Weight cap {weight_cap:.3g} truncates at x={x_cap:.3g} < {x_cut:.3g}")
        x_cut = min(x_cut, x_cap)
    radius = np.sqrt(2 * x_cut) / (np.pi * w0)
    safe = np.sqrt(2 * MAX_WEIGHT_EXPONENT) / (np.pi * w0)
    if x_cut > MAX_WEIGHT_EXPONENT:
        raise TruncationError(
            f"Truncation radius {radius:.4g} needs weight exp({x_cut:.0f}), beyond float range",
            safe_radius=safe,
        )
    nyquist = 1 / (2 * grid.spacing(w0))
    if radius > nyquist:
        raise TruncationError(
            f"Truncation radius {radius:.4g} exceeds the grid's Nyquist frequency {nyquist:.4g}",
            safe_radius=min(safe, nyquist),
        )
    return float(radius)


# *** reconstruction ***


def _disk(grid: Grid, w0: float, radius: float) -> tuple[np.ndarray, np.ndarray]:
    kx, ky = grid.frequency_mesh(w0)
    k2 = kx**2 + ky**2
    mask = k2 <= radius**2
    return mask, np.exp(weight_exponent(k2[mask], w0))


def _pairs(ells: Sequence[int]) -> list[tuple[int, int]]:
    return [(a, b) for a in ells for b in ells]


def _kernel_rows(pairs, w0, grid, mask, cache: KernelCache) -> np.ndarray:
    return np.stack([cache.get(a, b, w0, grid).samples[mask] for a, b in pairs])


def kernel_gram(
    ells: Sequence[int],
    w0: float,
    grid: Grid,
    radius: float | None = None,
    cache: KernelCache | None = None,
) -> np.ndarray:
    """G[(c,d),(a,b)] = sum over the disk of P_ab P_cd^* weight dk^2, pairs row-major.

    Ideally (2/(pi w0^2)) times the identity.
    """
    if cache is None:
        cache = _default_cache
    radius = truncation_radius(ells, w0, grid) if radius is None else radius
    mask, weight = _disk(grid, w0, radius)
    rows = _kernel_rows(_pairs(ells), w0, grid, mask, cache)
    dk2 = grid.frequency_spacing(w0) ** 2
    return np.conj(rows) @ (rows * weight * dk2).T


def orthogonality_residual(ells: Sequence[int], w0: float, grid: Grid, **kwargs) -> float:
    """Largest entry of |(pi w0^2/2) G - 1|."""
    gram = kernel_gram(ells, w0, grid, **kwargs) * (np.pi * w0**2 / 2)
    return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


def _polar_projections(spectrum, pairs, w0, grid, radius, cache, order, n_radial=None):
    """Project on polar samples: trapezoid in k_r, uniform in k_phi."""
    dk = grid.frequency_spacing(w0)
    n_radial = n_radial or max(64, int(np.ceil(4 * radius / dk)))
    n_angular = 4 * n_radial
    kr = np.linspace(0.0, radius, n_radial + 1)
    kphi = np.arange(n_angular) * 2 * np.pi / n_angular
    rr, pp = np.meshgrid(kr, kphi, indexing="ij")
    # frequency -> fractional array index (row = ky, column = kx)
    coords = np.stack([rr * np.sin(pp) / dk + grid.size // 2, rr * np.cos(pp) / dk + grid.size // 2])
    weight = np.exp(weight_exponent(rr**2, w0))
    radial = np.full(n_radial + 1, kr[1] - kr[0])
    radial[[0, -1]] /= 2
    area = (radial * kr)[:, None] * (2 * np.pi / n_angular)

    def sample(values):
        re = scipy.ndimage.map_coordinates(values.real, coords, order=order, mode="nearest")
        im = scipy.ndimage.map_coordinates(values.imag, coords, order=order, mode="nearest")
        return re + 1j * im

    y = np.empty(len(pairs), dtype=complex)
    for i, (a, b) in enumerate(pairs):
        integrand = spectrum * np.conj(cache.get(a, b, w0, grid).samples)
        y[i] = np.sum(sample(integrand) * weight * area)
    return y


def reconstruct_positive(
    intensity: IntensityGrid,
    ell_max: int,
    *,
    ells: Sequence[int] | None = None,
    estimator: str = "direct",
    quadrature: str = "cartesian",
    tol: float = TRUNCATION_TOL,
    weight_cap: float | None = None,
    psd_repair: bool = False,
    polar_order: int = 1,
    cache: KernelCache | None = None,
) -> Reconstruction:
    """Recover rho_{l1,l2} for 1 <= l1, l2 <= ell_max from a positive-helicity intensity.

    Args:
        intensity:   sampled intensity, with its grid and beam waist
        ell_max:     largest mode in the reconstruction
        ells:        explicit mode list, overrides 1..ell_max (may include 0)
        estimator:   'direct' projects on each kernel and scales by pi w0^2/2;
                     'gram' solves the truncated kernel Gram system instead
        quadrature:  'cartesian' sums the FFT grid inside the truncation disk;
                     'polar' resamples on a polar grid (spline order `polar_order`)
        tol:         kernel tail level setting the truncation radius
        weight_cap:  optional upper bound on the weight
        psd_repair:  project the result on the nearest PSD matrix (same trace)
    Raises:
        InvalidArgumentError: unknown estimator or quadrature
        TruncationError:      weight can not be integrated on this grid
    """
    if estimator not in ESTIMATORS:
        raise InvalidArgumentError(f"Unknown estimator '{estimator}'; expected {ESTIMATORS}")
    if quadrature not in QUADRATURES:
        raise InvalidArgumentError(f"Unknown quadrature '{quadrature}'; expected {QUADRATURES}")
    ells = list(range(1, ell_max + 1)) if ells is None else list(ells)
    if cache is None:
        cache = _default_cache
    grid, w0 = intensity.grid, intensity.w0
    n = len(ells)
    pairs = _pairs(ells)

    radius = truncation_radius(ells, w0, grid, tol=tol, weight_cap=weight_cap)
    spectrum = fourier_transform(intensity.values, grid, w0)
    mask, weight = _disk(grid, w0, radius)
    dk2 = grid.frequency_spacing(w0) ** 2
    if quadrature == "cartesian":
        rows = _kernel_rows(pairs, w0, grid, mask, cache)
        y = np.conj(rows) @ (spectrum[mask] * weight * dk2)
    else:
        y = _polar_projections(spectrum, pairs, w0, grid, radius, cache, polar_order)

    if estimator == "direct":
        vec = (np.pi * w0**2 / 2) * y
    else:
        gram = kernel_gram(ells, w0, grid, radius=radius, cache=cache)
        vec = scipy.linalg.solve(gram, y, assume_a="her")
    rho = vec.reshape(n, n)
    rho = (rho + rho.conj().T) / 2
    _log.debug(f"Reconstructed {n}x{n} ({estimator}, {quadrature}), k_max={radius:.4g}")

    repaired = False
    lowest = scipy.linalg.eigvalsh(rho)[0] if n else 0.0
    if psd_repair and lowest < 0:
        _log.warning(f"PSD repair applied (min eigenvalue {lowest:.3g})")
        rho = nearest_psd(rho)
        repaired = True
    return Reconstruction(rho, radius, estimator, repaired)


def reconstruct_negative(intensity: IntensityGrid, ell_max: int, **kwargs) -> Reconstruction:
    """Recover rho_{-l1,-l2} (rows and columns in order -1..-ell_max).

    Uses P_{-l1,-l2} = P_{l2,l1}: the result is the transpose of
    `reconstruct_positive` on the same intensity.
    """
    pos = reconstruct_positive(intensity, ell_max, **kwargs)
    return Reconstruction(pos.matrix.T.copy(), pos.truncation_radius, pos.estimator, pos.psd_repaired)
