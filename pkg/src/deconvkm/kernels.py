"""Deconvolution kernels obtained by numerical Fourier inversion.

Conventions: F[g](u) = int g(t) exp(iut) dt, hence
g(t) = (1/2pi) int F[g](u) exp(-iut) du. The rescaled deconvolution kernel
along one axis is

    (1/lam) K_eta(t/lam) = 1/(2 pi lam) int_{-R}^{R} F[K](u) / cf(u/lam) exp(-i u t/lam) du

where R is the support radius of F[K]. The integral is discretised with a
composite trapezoid rule on a fixed lattice of `n_freq` nodes in u, so the
node count does not depend on lam.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AsymmetricNoiseError, CoverageError, IllPosednessError, ParameterError
from .noise import NoiseModel

DEFAULT_FREQ_NODES = 4096
CF_FLOOR = 1e-12
IMAG_RTOL = 1e-8
_CHUNK = 1 << 22  # max entries of a (points x frequencies) block


@dataclass(frozen=True)
class BaseKernel:
    kind: str
    ft_profile: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    support_radius: float = 1.0
    order: int | str = "infinite"
    taper_start: float | None = None

    def spatial(self, t, n_freq: int = DEFAULT_FREQ_NODES) -> np.ndarray:
        """K(t) by the same inversion quadrature used for deconvolution kernels."""
        spec = axis_spectrum(self, lambda v: np.ones_like(v, dtype=complex), 1.0, n_freq)
        return spec.evaluate(t)

    def spatial_exact(self, t) -> np.ndarray:
        """Closed form of K(t); only available for the sinc kernel."""
        if self.kind != "sinc":
            raise NotImplementedError("closed form only implemented for sinc")
        t = np.asarray(t, dtype=float)
        return np.sinc(t / np.pi) / np.pi


def _smoothstep_profile(taper_start: float):
    width = 1.0 - taper_start

    def profile(u):
        a = np.abs(np.asarray(u, dtype=float))
        s = np.clip((1.0 - a) / width, 0.0, 1.0)
        return s * s * (3.0 - 2.0 * s)

    return profile


def _indicator_profile(u):
    return (np.abs(np.asarray(u, dtype=float)) <= 1.0).astype(float)


def make_base_kernel(kind: str = "flat_top", taper_start: float = 0.5) -> BaseKernel:
    """Product-kernel factor with Fourier transform supported on [-1, 1].

    ``sinc`` has F[K] = 1 on [-1, 1]; ``flat_top`` has F[K] = 1 on
    [-taper_start, taper_start] and a cubic smoothstep down to 0 at |u| = 1.
    """
    if kind == "sinc":
        return BaseKernel("sinc", _indicator_profile)
    if kind == "flat_top":
        if not 0.0 < taper_start < 1.0:
            raise ParameterError(f"taper_start must lie in (0, 1), got {taper_start}")
        return BaseKernel("flat_top", _smoothstep_profile(taper_start), taper_start=taper_start)
    raise ParameterError(f"unknown kernel kind {kind!r}")


def trapezoid_nodes(radius: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    # integer numerators keep the lattice exactly symmetric about 0
    u = radius * np.arange(-(n - 1), n, 2) / (n - 1)
    w = np.full(n, 2.0 * radius / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return u, w


@dataclass(frozen=True)
class AxisSpectrum:
    """Discretised inversion integral for one axis.

    ``freqs`` are the physical frequencies u/lam and ``coef`` already carries
    quadrature weight, 1/(2 pi lam) and the profile/cf ratio, so that the
    kernel value at offset t is sum(coef * exp(-1j * freqs * t)).
    """

    freqs: np.ndarray
    coef: np.ndarray
    real: bool

    def _block(self):
        return max(1, _CHUNK // max(1, self.freqs.size))

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.empty(flat.size)
        step = self._block()
        for s in range(0, flat.size, step):
            phase = np.outer(flat[s:s + step], self.freqs)
            if self.real:
                out[s:s + step] = np.cos(phase) @ self.coef.real
            else:
                vals = np.exp(-1j * phase) @ self.coef
                _check_imag(vals)
                out[s:s + step] = vals.real
        return out.reshape(t.shape)

    def _factors(self, pts):
        phase = np.outer(pts, self.freqs)
        return np.cos(phase), np.sin(phase)

    def cross(self, z, x) -> np.ndarray:
        """Matrix M[i, g] = kernel(z_i - x_g)."""
        z = np.asarray(z, dtype=float)
        x = np.asarray(x, dtype=float)
        cx, sx = self._factors(x)
        out = np.empty((z.size, x.size))
        step = self._block()
        for s in range(0, z.size, step):
            cz, sz = self._factors(z[s:s + step])
            if self.real:
                c = self.coef.real
                out[s:s + step] = (cz * c) @ cx.T + (sz * c) @ sx.T
            else:
                # exp(-i v (z - x)) = conj(e_z) * e_x with e = cos + i sin
                ez = (cz - 1j * sz) * self.coef
                vals = ez @ (cx + 1j * sx).T
                _check_imag(vals)
                out[s:s + step] = vals.real
        return out

    def mean_cross(self, z, x) -> np.ndarray:
        """Column means of ``cross(z, x)`` via the empirical characteristic function."""
        z = np.asarray(z, dtype=float)
        x = np.asarray(x, dtype=float)
        ecf = np.zeros(self.freqs.size, dtype=complex)
        step = self._block()
        for s in range(0, z.size, step):
            phase = np.outer(z[s:s + step], self.freqs)
            ecf += np.cos(phase).sum(axis=0) - 1j * np.sin(phase).sum(axis=0)
        ecf /= z.size
        cx, sx = self._factors(x)
        vals = (cx + 1j * sx) @ (ecf * self.coef)
        if not self.real:
            _check_imag(vals)
        return vals.real


def _check_imag(vals):
    scale = np.max(np.abs(vals.real)) if vals.size else 0.0
    if vals.size and np.max(np.abs(vals.imag)) > IMAG_RTOL * max(scale, np.finfo(float).tiny):
        raise AsymmetricNoiseError("deconvolution kernel has a non-negligible imaginary part")


def axis_spectrum(kernel: BaseKernel, noise_cf, lam: float, n_freq: int = DEFAULT_FREQ_NODES,
                  cf_floor: float = CF_FLOOR) -> AxisSpectrum:
    if not lam > 0:
        raise ParameterError(f"bandwidth must be positive, got {lam}")
    if n_freq < 3:
        raise ParameterError("need at least 3 frequency nodes")
    u, w = trapezoid_nodes(kernel.support_radius, n_freq)
    prof = kernel.ft_profile(u)
    keep = prof != 0
    u, w, prof = u[keep], w[keep], prof[keep]
    cf = np.asarray(noise_cf(u / lam), dtype=complex)
    if np.min(np.abs(cf)) < cf_floor:
        raise IllPosednessError(
            f"|cf| drops below {cf_floor:g} on the integration range (lam={lam:g})")
    coef = w * prof / cf / (2.0 * np.pi * lam)
    real = bool(np.all(coef.imag == 0) and np.array_equal(coef, coef[::-1]))
    return AxisSpectrum(u / lam, coef, real)


def offset_lattice(offset_step: float, truncation_radius: float) -> np.ndarray:
    m = int(np.floor(truncation_radius / offset_step + 1e-9))
    return np.arange(-m, m + 1) * offset_step


def deconv_kernel_axis(kernel: BaseKernel, noise_cf, lam: float, offset_step: float,
                       truncation_radius: float, n_freq: int = DEFAULT_FREQ_NODES,
                       cf_floor: float = CF_FLOOR) -> np.ndarray:
    """Samples of t -> (1/lam) K_eta(t/lam) on the lattice ``offset_lattice(step, radius)``."""
    if not offset_step > 0 or not truncation_radius > 0:
        raise ParameterError("offset_step and truncation_radius must be positive")
    spec = axis_spectrum(kernel, noise_cf, lam, n_freq, cf_floor)
    offsets = offset_lattice(offset_step, truncation_radius)
    m = offsets.size // 2
    if spec.real:
        half = spec.evaluate(offsets[m:])
        return np.concatenate([half[:0:-1], half])
    return spec.evaluate(offsets)


@dataclass(frozen=True)
class DeconvKernelTable:
    """Per-axis deconvolution kernels for a fixed bandwidth vector.

    ``axis_tables`` hold lattice samples (used for dumps and grid-aligned
    lookups); ``spectra`` evaluate the kernel exactly at arbitrary offsets.
    """

    bandwidths: np.ndarray
    axis_tables: tuple[np.ndarray, ...]
    offset_step: np.ndarray
    truncation_radius: np.ndarray
    spectra: tuple[AxisSpectrum, ...] = field(repr=False)
    sample_box: tuple[np.ndarray, np.ndarray] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.axis_tables)

    def offsets(self, axis: int) -> np.ndarray:
        return offset_lattice(self.offset_step[axis], self.truncation_radius[axis])

    def lookup(self, axis: int, t) -> np.ndarray:
        """Table value at offsets t, linear interpolation between lattice points."""
        t = np.asarray(t, dtype=float)
        off = self.offsets(axis)
        if np.any(np.abs(t) > off[-1] + 1e-12):
            raise CoverageError(f"offset outside table range +-{off[-1]:g} on axis {axis}")
        return np.interp(t, off, self.axis_tables[axis])

    def evaluate(self, axis: int, t) -> np.ndarray:
        return self.spectra[axis].evaluate(t)

    def check_coverage(self, points) -> None:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = self.sample_box
        bad = np.any((pts < lo - 1e-12) | (pts > hi + 1e-12), axis=1)
        if np.any(bad):
            p = pts[np.argmax(bad)]
            raise CoverageError(f"sample point {p.tolist()} lies outside the kernel table "
                                f"sample box [{lo.tolist()}, {hi.tolist()}]")


def build_kernel_table(kernel: BaseKernel, noise: NoiseModel, bandwidths, grid,
                       sample_box=None, refine: int = 1, n_freq: int = DEFAULT_FREQ_NODES,
                       cf_floor: float = CF_FLOOR) -> DeconvKernelTable:
    """Precompute per-axis kernels covering every (sample point, grid node) offset.

    ``sample_box`` is a pair (lower, upper) bounding admissible observations;
    it defaults to the grid box. The lattice step is grid spacing / refine.
    """
    lam = np.atleast_1d(np.asarray(bandwidths, dtype=float))
    if lam.size == 1 and grid.dim > 1:
        lam = np.repeat(lam, grid.dim)
    if lam.size != grid.dim or noise.dim != grid.dim:
        raise ParameterError(
            f"dimension mismatch: bandwidths {lam.size}, noise {noise.dim}, grid {grid.dim}")
    if refine < 1:
        raise ParameterError("refine must be a positive integer")
    if sample_box is None:
        lo, hi = np.asarray(grid.lower, float), np.asarray(grid.upper, float)
    else:
        lo = np.broadcast_to(np.asarray(sample_box[0], float), (grid.dim,)).copy()
        hi = np.broadcast_to(np.asarray(sample_box[1], float), (grid.dim,)).copy()
    steps, radii, tables, spectra = [], [], [], []
    for j in range(grid.dim):
        nodes = grid.axes[j]
        step = grid.spacing[j] / refine
        reach = max(hi[j] - nodes[0], nodes[-1] - lo[j])
        radius = np.ceil(reach / step - 1e-9) * step
        cf = (lambda comp: (lambda v: comp.cf(v)))(noise.components[j])
        spec = axis_spectrum(kernel, cf, lam[j], n_freq, cf_floor)
        offs = offset_lattice(step, radius)
        m = offs.size // 2
        if spec.real:
            half = spec.evaluate(offs[m:])
            table = np.concatenate([half[:0:-1], half])
        else:
            table = spec.evaluate(offs)
        steps.append(step)
        radii.append(radius)
        tables.append(table)
        spectra.append(spec)
    return DeconvKernelTable(lam, tuple(tables), np.array(steps), np.array(radii),
                             tuple(spectra), (lo, hi))
