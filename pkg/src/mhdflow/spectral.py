"""Real periodic fields on [0, L)^2 and the spectral operators acting on them.

All fields are stored as rfft2 coefficient arrays: axis 0 carries the full set
of y1 wavenumbers in fft order, axis 1 the nonnegative y2 wavenumbers.
Coefficients follow the unnormalized scipy transform convention, so physical
values come back through irfft2 (which carries the 1/n^2 factor) and L2 inner
products pick up a factor L^2/n^4 together with the Hermitian column weights.

Products are formed pointwise in physical space and truncated with the 2/3
rule; fields whose spectrum stays below the cutoff therefore multiply without
aliasing error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
import scipy.fft

from .errors import GridMismatchError, RankError, SolvabilityError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    """Uniform n-by-n collocation grid on the periodic square [0, L)^2.

    Args:
        n: points per axis; must be even and at least 8.
        length: box period L. Defaults to 2*pi, where the integer mode index
            and the wavenumber coincide.
    """

    n: int
    length: float = TWO_PI

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"grid needs even n >= 8, got n={self.n}")
        if not self.length > 0:
            raise ValueError(f"grid period must be positive, got {self.length}")
        object.__setattr__(self, "_weight_cache", {})

    # ---- derived quantities (computed once, cached on the instance) ----

    @cached_property
    def spacing(self) -> float:
        return self.length / self.n

    @cached_property
    def half(self) -> int:
        """Number of stored y2 wavenumber columns."""
        return self.n // 2 + 1

    @cached_property
    def modes1(self) -> np.ndarray:
        """Signed integer mode indices along y1, shape (n, 1)."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.rint(m).astype(np.int64).reshape(self.n, 1)

    @cached_property
    def modes2(self) -> np.ndarray:
        """Nonnegative integer mode indices along y2, shape (1, n//2+1)."""
        return np.arange(self.half, dtype=np.int64).reshape(1, self.half)

    @cached_property
    def k1(self) -> np.ndarray:
        return (TWO_PI / self.length) * self.modes1.astype(np.float64)

    @cached_property
    def k2(self) -> np.ndarray:
        return (TWO_PI / self.length) * self.modes2.astype(np.float64)

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k1 ** 2 + self.k2 ** 2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean 2/3-rule mask keeping |mode| <= n//3 on each axis."""
        cut = self.n // 3
        return (np.abs(self.modes1) <= cut) & (self.modes2 <= cut)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Mask dropping only the unpaired Nyquist lines (dealiasing off)."""
        return (np.abs(self.modes1) < self.n // 2) & (self.modes2 < self.n // 2)

    @cached_property
    def hermitian_weight(self) -> np.ndarray:
        """Multiplicity of each stored column in the full spectrum, shape (1, n//2+1)."""
        w = np.full((1, self.half), 2.0)
        w[0, 0] = 1.0
        w[0, -1] = 1.0
        return w

    @cached_property
    def norm_factor(self) -> float:
        """L2 norm factor: ||f||_0^2 = norm_factor * sum w |fhat|^2."""
        return self.length ** 2 / float(self.n) ** 4

    @cached_property
    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        """Collocation coordinates (y1 as (n,1), y2 as (1,n)) for broadcasting."""
        y = np.arange(self.n) * self.spacing
        return y.reshape(self.n, 1), y.reshape(1, self.n)

    def sobolev_weight(self, s: int) -> np.ndarray:
        """Mode weight for the H^s norm, sum over all |alpha| <= s of k^(2 alpha)."""
        key = ("full", s)
        cache = self._weight_cache
        if key not in cache:
            w = np.zeros_like(self.ksq)
            for j in range(s + 1):
                w += self.homogeneous_weight(j)
            cache[key] = w
        return cache[key]

    def homogeneous_weight(self, s: int) -> np.ndarray:
        """Mode weight for the seminorm ||grad^s f||_0, sum over |alpha| = s."""
        key = ("homog", s)
        cache = self._weight_cache
        if key not in cache:
            w = np.zeros_like(self.ksq)
            for a in range(s + 1):
                w += self.k1 ** (2 * a) * self.k2 ** (2 * (s - a))
            cache[key] = w
        return cache[key]


def to_phys(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Inverse transform to collocation values; works on stacked leading axes."""
    return scipy.fft.irfft2(coeffs, s=(grid.n, grid.n))


def to_spec(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Forward transform of real collocation values."""
    return scipy.fft.rfft2(values)


def to_spec_masked(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Forward transform with 2/3-rule truncation (the product postcondition)."""
    return scipy.fft.rfft2(values) * grid.dealias_mask


def _enforce_real_symmetry(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Project coefficients onto those of a real field; zero the Nyquist lines.

    Columns 0 and n/2 of an rfft2 array must individually satisfy
    c[m] = conj(c[-m]); the interior columns are unconstrained.
    """
    c = np.array(coeffs, dtype=np.complex128, copy=True)
    flipped = np.roll(c[..., ::-1, :], 1, axis=-2)  # index m1 -> -m1 mod n
    for col in (0, grid.n // 2):
        c[..., :, col] = 0.5 * (c[..., :, col] + np.conj(flipped[..., :, col]))
    c[..., grid.n // 2, :] = 0.0
    c[..., :, grid.n // 2] = 0.0
    return c


@dataclass(frozen=True)
class SpectralField:
    """A real scalar or 2-vector field held as rfft2 coefficients.

    coeffs has shape (n, n//2+1) for a scalar and (2, n, n//2+1) for a vector;
    component index 0 is the y1 component.
    """

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        shape = self.coeffs.shape
        expect = (self.grid.n, self.grid.half)
        if shape != expect and shape != (2,) + expect:
            raise RankError(
                f"coefficient array shape {shape} does not match grid "
                f"(want {expect} or {(2,) + expect})"
            )
        if self.coeffs.dtype != np.complex128:
            object.__setattr__(self, "coeffs", self.coeffs.astype(np.complex128))

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray) -> "SpectralField":
        """Transform real collocation values (n,n) or (2,n,n)."""
        return cls(grid, to_spec(grid, np.asarray(values, dtype=np.float64)))

    @classmethod
    def from_coeffs(cls, grid: Grid, coeffs: np.ndarray) -> "SpectralField":
        """Wrap raw coefficients, projecting them onto a genuine real field."""
        return cls(grid, _enforce_real_symmetry(grid, coeffs))

    @classmethod
    def zeros(cls, grid: Grid, rank: int = 1) -> "SpectralField":
        shape = (grid.n, grid.half) if rank == 1 else (2, grid.n, grid.half)
        return cls(grid, np.zeros(shape, dtype=np.complex128))

    @property
    def rank(self) -> int:
        return 1 if self.coeffs.ndim == 2 else 2

    @property
    def is_vector(self) -> bool:
        return self.coeffs.ndim == 3

    def component(self, i: int) -> "SpectralField":
        if not self.is_vector:
            raise RankError("component() needs a vector field")
        return SpectralField(self.grid, self.coeffs[i])

    def values(self) -> np.ndarray:
        return to_phys(self.grid, self.coeffs)

    def mean(self) -> np.ndarray | float:
        """Spatial mean; a float for scalars, shape-(2,) array for vectors."""
        m = self.coeffs[..., 0, 0].real / self.grid.n ** 2
        return float(m) if self.coeffs.ndim == 2 else m

    # Linear-space arithmetic; products go through dealias_product.

    def _check(self, other: "SpectralField"):
        if self.grid != other.grid:
            raise GridMismatchError("fields live on different grids")
        if self.coeffs.ndim != other.coeffs.ndim:
            raise RankError("scalar/vector rank mismatch")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        if isinstance(a, SpectralField):
            raise TypeError("use dealias_product() for field products")
        return SpectralField(self.grid, self.coeffs * float(a))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)


def derivative(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    """Spectral partial derivative d^order/d y_axis^order.

    Args:
        f: scalar or vector field (vectors differentiate componentwise).
        axis: 1 or 2, the spatial direction.
        order: derivative order, >= 1.
    """
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    g = f.grid
    ik = 1j * (g.k1 if axis == 1 else g.k2)
    return SpectralField(g, f.coeffs * ik ** order)


def dealias_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product with 2/3-rule truncation.

    One factor must be a scalar; scalar*vector multiplies componentwise. For
    inputs whose spectrum is confined below the cutoff the retained modes are
    exact (no aliasing reaches them).
    """
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")
    if f.is_vector and g.is_vector:
        raise RankError("product of two vector fields is ambiguous; take components")
    if f.is_vector:  # put the scalar first
        f, g = g, f
    grid = f.grid
    fv = to_phys(grid, f.coeffs * grid.dealias_mask)
    gv = to_phys(grid, g.coeffs * grid.dealias_mask)
    return SpectralField(grid, to_spec_masked(grid, fv * gv))


def _weighted_sq(f: SpectralField, weight: np.ndarray) -> float:
    g = f.grid
    c = f.coeffs if f.is_vector else f.coeffs[np.newaxis]
    total = np.sum(g.hermitian_weight * weight * (c.real ** 2 + c.imag ** 2))
    return g.norm_factor * float(total)


def sobolev_norm(f: SpectralField, s: int) -> float:
    """H^s norm: sqrt of the sum of ||d^alpha f||_0^2 over all |alpha| <= s."""
    if s < 0:
        raise ValueError(f"s must be >= 0, got {s}")
    return np.sqrt(_weighted_sq(f, f.grid.sobolev_weight(s)))


def seminorm(f: SpectralField, s: int) -> float:
    """Homogeneous seminorm ||grad^s f||_0 (sum over |alpha| = s)."""
    if s < 0:
        raise ValueError(f"s must be >= 0, got {s}")
    return np.sqrt(_weighted_sq(f, f.grid.homogeneous_weight(s)))


def aniso_norm(f: SpectralField, s: int) -> float:
    """Anisotropic norm ||f||_{s,2} = sqrt(||f||_{s-1}^2 + ||grad^{s-1} d2 f||_0^2).

    The top derivative layer is restricted to words ending in d2; s >= 1.
    """
    if s < 1:
        raise ValueError(f"anisotropic norm needs s >= 1, got {s}")
    g = f.grid
    w = g.sobolev_weight(s - 1) + g.k2 ** 2 * g.homogeneous_weight(s - 1)
    return np.sqrt(_weighted_sq(f, w))


def l2_inner(f: SpectralField, g: SpectralField) -> float:
    """L2 inner product; vector fields sum over components."""
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")
    if f.coeffs.ndim != g.coeffs.ndim:
        raise RankError("scalar/vector rank mismatch")
    gr = f.grid
    prod = np.real(f.coeffs * np.conj(g.coeffs))
    if f.is_vector:
        prod = prod.sum(axis=0)
    return gr.norm_factor * float(np.sum(gr.hermitian_weight * prod))


def leray_project(u: SpectralField) -> SpectralField:
    """Orthogonal projection onto divergence-free vector fields.

    The zero mode is untouched (constants are already divergence-free).
    """
    if not u.is_vector:
        raise RankError("leray_project needs a vector field")
    g = u.grid
    ksq = np.where(g.ksq == 0.0, 1.0, g.ksq)
    dot = (g.k1 * u.coeffs[0] + g.k2 * u.coeffs[1]) / ksq
    out = u.coeffs.copy()
    out[0] -= g.k1 * dot
    out[1] -= g.k2 * dot
    return SpectralField(g, out)


def divergence(u: SpectralField) -> SpectralField:
    """div u as a scalar field."""
    if not u.is_vector:
        raise RankError("divergence needs a vector field")
    g = u.grid
    return SpectralField(g, 1j * (g.k1 * u.coeffs[0] + g.k2 * u.coeffs[1]))


def gradient(f: SpectralField) -> SpectralField:
    """grad f as a vector field."""
    if f.is_vector:
        raise RankError("gradient needs a scalar field")
    g = f.grid
    return SpectralField(g, np.stack([1j * g.k1 * f.coeffs, 1j * g.k2 * f.coeffs]))


def invert_laplacian(f: SpectralField, mean: float = 0.0) -> SpectralField:
    """Solve lap(phi) = f on the torus, pinning the mean of phi.

    Raises:
        SolvabilityError: if |mean of f| > 1e-10 * ||f||_0, in which case no
            periodic solution exists.
    """
    if f.is_vector:
        raise RankError("invert_laplacian needs a scalar field")
    g = f.grid
    f_mean = abs(f.coeffs[0, 0]) / g.n ** 2
    f_norm = sobolev_norm(f, 0)
    if f_mean > 1e-10 * max(f_norm, 1e-300):
        raise SolvabilityError(
            f"right-hand side has mean {f_mean:.3e} (norm {f_norm:.3e}); "
            "no periodic solution"
        )
    ksq = np.where(g.ksq == 0.0, 1.0, g.ksq)
    out = -f.coeffs / ksq
    out[0, 0] = mean * g.n ** 2
    return SpectralField(g, out)
