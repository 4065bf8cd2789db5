"""Periodic 2D grid, isometric discrete Fourier transform and field helpers.

The continuum convention is f^(xi) = (1/2pi) * integral f(x) exp(-i xi.x) dx.
Nodes sit at x_j = -L/2 + j*dx, so the discrete transform carries a (-1)^k
phase on top of the FFT and the factor dx1*dx2/(2pi); with those factors
the discrete Plancherel identity holds exactly.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Tuple

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import RegularGridInterpolator

from config import FFT_WORKERS
from errors import InvalidInput

logger = logging.getLogger(__name__)

Space = Literal["position", "frequency"]


@dataclass(frozen=True)
class Grid2D:
    """Periodic box with n1 x n2 nodes and side lengths L1, L2.

    Arrays on the grid have shape (n1, n2) and are indexed [x1, x2].
    """

    n1: int
    n2: int
    L1: float
    L2: float

    @property
    def dx1(self) -> float:
        return self.L1 / self.n1

    @property
    def dx2(self) -> float:
        return self.L2 / self.n2

    @property
    def cell(self) -> float:
        """Area element dx1*dx2."""
        return self.dx1 * self.dx2

    @property
    def dxi1(self) -> float:
        return 2 * np.pi / self.L1

    @property
    def dxi2(self) -> float:
        return 2 * np.pi / self.L2

    @property
    def freq_cell(self) -> float:
        """Frequency area element dxi1*dxi2."""
        return self.dxi1 * self.dxi2

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n1, self.n2)

    @cached_property
    def x1(self) -> np.ndarray:
        return -self.L1 / 2 + self.dx1 * np.arange(self.n1)

    @cached_property
    def x2(self) -> np.ndarray:
        return -self.L2 / 2 + self.dx2 * np.arange(self.n2)

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return X1, X2

    @cached_property
    def k1(self) -> np.ndarray:
        """Integer mode numbers along axis 1, FFT order."""
        return np.rint(sfft.fftfreq(self.n1) * self.n1).astype(int)

    @cached_property
    def k2(self) -> np.ndarray:
        return np.rint(sfft.fftfreq(self.n2) * self.n2).astype(int)

    @cached_property
    def xi_mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        XI1, XI2 = np.meshgrid(self.dxi1 * self.k1, self.dxi2 * self.k2, indexing="ij")
        XI1.setflags(write=False)
        XI2.setflags(write=False)
        return XI1, XI2

    @cached_property
    def xi_sq(self) -> np.ndarray:
        XI1, XI2 = self.xi_mesh
        out = XI1 ** 2 + XI2 ** 2
        out.setflags(write=False)
        return out

    @cached_property
    def phase(self) -> np.ndarray:
        """(-1)^(k1+k2): the exp(-i xi.x0) factor for the corner x0 = -L/2."""
        s1 = np.where(self.k1 % 2 == 0, 1.0, -1.0)
        s2 = np.where(self.k2 % 2 == 0, 1.0, -1.0)
        out = np.outer(s1, s2)
        out.setflags(write=False)
        return out

    def max_frequency(self) -> Tuple[float, float]:
        """Largest |xi_j| among interior (non-Nyquist) modes."""
        return (self.dxi1 * (self.n1 // 2 - 1), self.dxi2 * (self.n2 // 2 - 1))


def make_grid(n1: int, n2: int, L1: float, L2: float) -> Grid2D:
    """Create a validated periodic grid.

    Args:
        n1: Nodes along x1 (even, >= 16)
        n2: Nodes along x2 (even, >= 16)
        L1: Box side along x1
        L2: Box side along x2

    Returns:
        The grid

    Raises:
        InvalidInput: On odd or tiny node counts, or non-positive lengths
    """
    for name, n in (("n1", n1), ("n2", n2)):
        if int(n) != n or n < 16 or n % 2:
            raise InvalidInput(f"{name} must be an even integer >= 16, got {n}", {name: n})
    for name, L in (("L1", L1), ("L2", L2)):
        if not np.isfinite(L) or L <= 0:
            raise InvalidInput(f"{name} must be positive, got {L}", {name: L})
    return Grid2D(int(n1), int(n2), float(L1), float(L2))


@dataclass
class WaveField:
    """Complex (or real) scalar field sampled on a grid."""

    grid: Grid2D
    values: np.ndarray
    space: Space = "position"
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise InvalidInput(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}",
                {"shape": list(self.values.shape)},
            )
        if self.check and not np.all(np.isfinite(self.values)):
            raise InvalidInput("field contains NaN or Inf values")

    def with_values(self, values: np.ndarray) -> "WaveField":
        return WaveField(self.grid, values, self.space)

    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)


def _require_space(u: WaveField, space: Space) -> None:
    if u.space != space:
        raise InvalidInput(f"expected a {space}-space field, got {u.space}-space")


def fft2(values: np.ndarray) -> np.ndarray:
    return sfft.fft2(values, workers=FFT_WORKERS)


def ifft2(values: np.ndarray) -> np.ndarray:
    return sfft.ifft2(values, workers=FFT_WORKERS)


def forward_transform(u: WaveField) -> WaveField:
    """Isometric Fourier transform of a position-space field.

    Args:
        u: Position-space field

    Returns:
        Frequency-space field in FFT order
    """
    _require_space(u, "position")
    g = u.grid
    hat = (g.cell / (2 * np.pi)) * g.phase * fft2(u.values)
    return WaveField(g, hat, "frequency")


def inverse_transform(uhat: WaveField) -> WaveField:
    """Exact inverse of forward_transform."""
    _require_space(uhat, "frequency")
    g = uhat.grid
    values = ifft2(g.phase * uhat.values) * (2 * np.pi / g.cell)
    return WaveField(g, values, "position")


def mass(u: WaveField) -> float:
    """Sum |u|^2 dx1 dx2 (position) or sum |u^|^2 dxi1 dxi2 (frequency)."""
    cell = u.grid.cell if u.space == "position" else u.grid.freq_cell
    return float(np.sum(np.abs(u.values) ** 2) * cell)


def integrate(values: np.ndarray, grid: Grid2D) -> float:
    """Rectangle-rule integral of a real array over the box."""
    return float(np.sum(values) * grid.cell)


def inner(f: WaveField, g: WaveField) -> complex:
    """<f, g> = sum conj(f) g dx1 dx2."""
    return complex(np.vdot(f.values, g.values) * f.grid.cell)


def spectral_power(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    """|f^(xi)|^2 on the lattice for position-space samples."""
    return (grid.cell / (2 * np.pi)) ** 2 * np.abs(fft2(values)) ** 2


def kinetic(u: WaveField) -> float:
    """Spectral integral of |grad u|^2."""
    _require_space(u, "position")
    g = u.grid
    return float(np.sum(g.xi_sq * spectral_power(u.values, g)) * g.freq_cell)


def laplacian(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    out = ifft2(-grid.xi_sq * fft2(values))
    return out.real if np.isrealobj(values) else out


def apply_multiplier(values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Apply a real even Fourier multiplier to position-space samples.

    The normalization factors of the transform cancel, so the plain FFT
    pair is enough here.
    """
    out = ifft2(symbol * fft2(values))
    return out.real if np.isrealobj(values) else out


def finite_difference_kinetic(u: WaveField) -> float:
    """Second-order forward-difference estimate of integral |grad u|^2."""
    g = u.grid
    d1 = (np.roll(u.values, -1, axis=0) - u.values) / g.dx1
    d2 = (np.roll(u.values, -1, axis=1) - u.values) / g.dx2
    return float(np.sum(np.abs(d1) ** 2 + np.abs(d2) ** 2) * g.cell)


def centroid(u: WaveField) -> Tuple[float, float]:
    rho = np.abs(u.values) ** 2
    total = rho.sum()
    X1, X2 = u.grid.mesh
    return float((rho * X1).sum() / total), float((rho * X2).sum() / total)


def translate(u: WaveField, shift: Tuple[float, float]) -> WaveField:
    """Spectral translation: returns u(x + shift)."""
    XI1, XI2 = u.grid.xi_mesh
    values = ifft2(np.exp(1j * (XI1 * shift[0] + XI2 * shift[1])) * fft2(u.values))
    if u.is_real():
        values = values.real
    return u.with_values(values)


def phase_fix(u: WaveField) -> WaveField:
    """Rotate the global phase so the zero mode is real and positive."""
    if u.is_real():
        return u
    s = u.values.sum()
    if abs(s) == 0:
        return u
    values = u.values * (np.conj(s) / abs(s))
    if np.max(np.abs(values.imag)) <= 1e-14 * np.max(np.abs(values)):
        values = values.real.copy()
    return u.with_values(values)


def embed(u: WaveField, factor: int) -> WaveField:
    """Place u in the middle of a box `factor` times larger, same spacing.

    Zero padding is exact for fields that vanish at the box edge.
    """
    if factor < 1 or int(factor) != factor:
        raise InvalidInput(f"embedding factor must be a positive integer, got {factor}")
    if factor == 1:
        return u
    g = u.grid
    big = make_grid(g.n1 * factor, g.n2 * factor, g.L1 * factor, g.L2 * factor)
    out = np.zeros(big.shape, dtype=u.values.dtype)
    o1 = (factor - 1) * g.n1 // 2
    o2 = (factor - 1) * g.n2 // 2
    out[o1:o1 + g.n1, o2:o2 + g.n2] = u.values
    return WaveField(big, out)


def dilate(u: WaveField, L: float) -> WaveField:
    """u_L(x) = L^-1 u(x/L), realised exactly on the grid scaled by L."""
    if not L > 0:
        raise InvalidInput(f"dilation length must be positive, got {L}")
    g = u.grid
    scaled = Grid2D(g.n1, g.n2, g.L1 * L, g.L2 * L)
    return WaveField(scaled, u.values / L)


def resample(u: WaveField, grid: Grid2D, method: str = "cubic") -> WaveField:
    """Interpolate u onto another grid, zero outside the source box."""
    src = u.grid
    X1, X2 = grid.mesh
    points = np.stack([X1.ravel(), X2.ravel()], axis=-1)

    def _interp(part: np.ndarray) -> np.ndarray:
        f = RegularGridInterpolator((src.x1, src.x2), part, method=method,
                                    bounds_error=False, fill_value=0.0)
        return f(points).reshape(grid.shape)

    if u.is_real():
        values = _interp(u.values)
    else:
        values = _interp(u.values.real) + 1j * _interp(u.values.imag)
    return WaveField(grid, values)


def rescale_to_unit(u: WaveField) -> WaveField:
    """Dilate and scale u so that integral |grad u|^2 = integral |u|^2 = 1.

    The dilation goes through interpolation, so it is exact only up to
    interpolation error.
    """
    M = mass(u)
    T = kinetic(u)
    if not (M > 0 and T > 0):
        raise InvalidInput("cannot rescale a field with zero mass or kinetic energy")
    ell = np.sqrt(T / M)
    g = u.grid
    X1, X2 = g.mesh
    # v(x) = c u(x / ell) sampled on the same grid
    src = (g.x1, g.x2)
    points = np.stack([(X1 / ell).ravel(), (X2 / ell).ravel()], axis=-1)

    def _interp(part: np.ndarray) -> np.ndarray:
        f = RegularGridInterpolator(src, part, method="cubic", bounds_error=False, fill_value=0.0)
        return f(points).reshape(g.shape)

    if u.is_real():
        values = _interp(u.values)
    else:
        values = _interp(u.values.real) + 1j * _interp(u.values.imag)
    v = u.with_values(values)
    return v.with_values(v.values / np.sqrt(mass(v)))


def normalize(u: WaveField, target: float = 1.0) -> WaveField:
    return u.with_values(u.values * np.sqrt(target / mass(u)))
