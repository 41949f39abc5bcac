"""Quadrature on the compact set K, the deconvolution density estimator and
the deconvolved clustering risk.

All integrals over K are midpoint-rule sums on a regular box grid, so the
empirical deconvolved risk and the risk of the estimated density are two
orderings of one finite double sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ParameterError, UnsupportedDimensionError
from .kernels import DeconvKernelTable


@dataclass(frozen=True)
class QuadratureGrid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    nodes: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @cached_property
    def spacing(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.nodes)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(lo + h * (np.arange(g) + 0.5)
                     for lo, h, g in zip(self.lower, self.spacing, self.nodes))

    @property
    def weight(self) -> float:
        """Quadrature weight of every node (product of axis spacings)."""
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.upper) - np.array(self.lower)))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates as a (size, d) array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        return QuadratureGrid(self.lower, self.upper, tuple(g * factor for g in self.nodes))


def make_grid(bounds, nodes_per_axis) -> QuadratureGrid:
    """Midpoint grid on an axis-aligned box.

    ``bounds`` is a sequence of (low, high) pairs, one per axis; a single pair
    is accepted for d = 1.
    """
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1:
        b = b[None, :]
    d = b.shape[0]
    if d > 2:
        raise UnsupportedDimensionError(f"only d in {{1, 2}} is supported, got d={d}")
    nodes = np.broadcast_to(np.asarray(nodes_per_axis, dtype=int), (d,))
    if b.shape[1] != 2 or not np.all(np.isfinite(b)) or np.any(b[:, 1] <= b[:, 0]):
        raise ParameterError(f"invalid bounds {bounds!r}")
    if np.any(nodes < 2):
        raise ParameterError("need at least 2 nodes per axis")
    return QuadratureGrid(tuple(b[:, 0].tolist()), tuple(b[:, 1].tolist()),
                          tuple(int(g) for g in nodes))


@dataclass(frozen=True)
class GridDensity:
    """Signed function values on the nodes of a grid, shape ``grid.shape``."""

    grid: QuadratureGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ParameterError(f"values shape {self.values.shape} != grid {self.grid.shape}")

    @property
    def integral(self) -> float:
        return float(self.grid.weight * self.values.sum())

    @property
    def node_weights(self) -> np.ndarray:
        """Quadrature weight times value, flattened in ``grid.points`` order."""
        return self.grid.weight * self.values.ravel()


@dataclass(frozen=True)
class DeconvDensity(GridDensity):
    bandwidths: np.ndarray = None
    sample_size: int = 0

    def __post_init__(self):
        super().__post_init__()
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("deconvolution density has non-finite values")


def _as_sample(sample, dim: int) -> np.ndarray:
    z = np.asarray(sample, dtype=float)
    if z.ndim == 1:
        z = z[:, None] if dim == 1 else z[None, :]
    if z.shape[1] != dim:
        raise ParameterError(f"sample has dimension {z.shape[1]}, expected {dim}")
    return z


def _centers(c) -> np.ndarray:
    centers = np.asarray(getattr(c, "centers", c), dtype=float)
    return centers[:, None] if centers.ndim == 1 else centers


def kernel_matrices(z: np.ndarray, table: DeconvKernelTable, grid: QuadratureGrid):
    """Per-axis matrices M_j[i, g] = table_j(z_ij - x_g)."""
    return [table.spectra[j].cross(z[:, j], grid.axes[j]) for j in range(grid.dim)]


def deconv_density(sample, kernel_table: DeconvKernelTable, grid: QuadratureGrid) -> DeconvDensity:
    """f_hat(x) = (1/n) sum_i prod_j table_j(Z_ij - x_j) at every grid node."""
    z = _as_sample(sample, grid.dim)
    if z.shape[0] == 0:
        raise ParameterError("empty sample")
    kernel_table.check_coverage(z)
    if grid.dim == 1:
        values = kernel_table.spectra[0].mean_cross(z[:, 0], grid.axes[0])
    else:
        m1, m2 = kernel_matrices(z, kernel_table, grid)
        values = m1.T @ m2 / z.shape[0]
    return DeconvDensity(grid, values, kernel_table.bandwidths, z.shape[0])


def clustering_loss(c, x) -> np.ndarray | float:
    """min_j ||x - c_j||^2 for one point or a stack of points."""
    centers = _centers(c)
    pts = np.asarray(x, dtype=float)
    single = pts.ndim <= 1 and (pts.size == centers.shape[1])
    pts = pts.reshape(-1, centers.shape[1])
    d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    out = d2.min(axis=1)
    return float(out[0]) if single else out


def loss_on_grid(c, grid: QuadratureGrid) -> np.ndarray:
    return clustering_loss(c, grid.points).reshape(grid.shape)


def _deconvolved_losses(c, z, table, grid):
    loss = loss_on_grid(c, grid)
    mats = kernel_matrices(z, table, grid)
    if grid.dim == 1:
        per_point = mats[0] @ loss
    else:
        per_point = np.einsum("ig,gh,ih->i", mats[0], loss, mats[1])
    return grid.weight * per_point


def deconvolved_loss(c, z, kernel_table: DeconvKernelTable, grid: QuadratureGrid) -> float:
    """gamma_lambda(c, z) by midpoint quadrature over K."""
    pt = _as_sample(np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, -1), grid.dim)
    kernel_table.check_coverage(pt)
    return float(_deconvolved_losses(c, pt, kernel_table, grid)[0])


def empirical_risk(c, sample, kernel_table: DeconvKernelTable, grid: QuadratureGrid) -> float:
    """(1/n) sum_i gamma_lambda(c, Z_i), summed per observation."""
    z = _as_sample(sample, grid.dim)
    if z.shape[0] == 0:
        raise ParameterError("empty sample")
    kernel_table.check_coverage(z)
    return float(np.mean(_deconvolved_losses(c, z, kernel_table, grid)))


def risk_against_density(c, density: GridDensity) -> float:
    """sum over nodes of weight * density * clustering loss."""
    return float(np.dot(density.node_weights, clustering_loss(c, density.grid.points)))
