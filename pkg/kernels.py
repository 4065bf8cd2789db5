"""Fourier symbols of the interaction kernels.

Three symbols are used throughout:

* the high-frequency dipolar symbol  xi1^2/|xi|^2 - 1/2,
* the effective quadratic form weight ((a+b/2) xi1^2 + (a-b/2) xi2^2)/|xi|^2,
* the quasi-2D physical symbol m(xi) = -(1/pi) q(xi) G(|xi|), where
  q(xi) = (1-2 n3^2) xi1^2 - n3^2 xi2^2 and
  G(k) = integral exp(-s^2/4pi)/(k^2+s^2) ds = (pi/k) erfcx(k / (2 sqrt(pi))).

With these, F^int[rho] = integral m(xi) |rho^(xi)|^2 dxi.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import erfcx

from errors import InvalidInput, OracleMismatch
from grid_spectral import Grid2D
from oracles.quadrature import g_quadrature

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

K_NORMALIZATION = 1.0 / (2 * np.sqrt(2) * np.pi ** 1.5)
CLOSED_FORM_RTOL = 1e-8


@dataclass(frozen=True)
class KernelSymbol:
    """Symbol values on a grid's frequency lattice (FFT order, read-only)."""

    grid: Grid2D
    values: np.ndarray
    kind: str
    params: tuple = ()

    def value_range(self):
        return float(self.values.min()), float(self.values.max())


def _ratio(num: np.ndarray, den: np.ndarray, at_zero: float) -> np.ndarray:
    out = np.full(np.broadcast(num, den).shape, at_zero, dtype=float)
    nz = den != 0
    np.divide(num, den, out=out, where=nz)
    return out


def symbol_high_freq(xi1: ArrayLike, xi2: ArrayLike) -> ArrayLike:
    """xi1^2/|xi|^2 - 1/2, and 0 at the origin (its angular average)."""
    xi1, xi2 = np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float)
    out = _ratio(xi1 ** 2, xi1 ** 2 + xi2 ** 2, 0.5) - 0.5
    return out if out.ndim else float(out)


def symbol_fab(xi1: ArrayLike, xi2: ArrayLike, a: float, b: float) -> ArrayLike:
    """((a+b/2) xi1^2 + (a-b/2) xi2^2)/|xi|^2, and a at the origin."""
    xi1, xi2 = np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float)
    num = (a + b / 2) * xi1 ** 2 + (a - b / 2) * xi2 ** 2
    out = _ratio(num, xi1 ** 2 + xi2 ** 2, a)
    return out if out.ndim else float(out)


def g_closed_form(k: ArrayLike) -> ArrayLike:
    """G(k) for k > 0 through the scaled complementary error function."""
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise InvalidInput("G(k) is only defined for k > 0")
    out = (np.pi / k) * erfcx(k / (2 * np.sqrt(np.pi)))
    return out if out.ndim else float(out)


def validate_closed_form(k_values: Optional[Sequence[float]] = None,
                         rtol: float = CLOSED_FORM_RTOL) -> float:
    """Compare the erfcx closed form of G against the quadrature oracle.

    Args:
        k_values: Test frequencies; defaults to 20 log-spaced values in [1e-3, 1e3]
        rtol: Largest accepted relative error

    Returns:
        The largest relative error observed

    Raises:
        OracleMismatch: If any point exceeds rtol
    """
    if k_values is None:
        k_values = np.logspace(-3, 3, 20)
    worst = 0.0
    for k in k_values:
        exact = g_quadrature(float(k))
        err = abs(g_closed_form(float(k)) - exact) / abs(exact)
        worst = max(worst, err)
        if err > rtol:
            raise OracleMismatch(
                f"closed form of G disagrees with quadrature at k={k}",
                {"k": float(k), "relative_error": err},
            )
    logger.debug("G closed form validated, worst relative error %.2e", worst)
    return worst


@lru_cache(maxsize=1)
def _closed_form_checked() -> float:
    return validate_closed_form()


def _check_n3(n3: float) -> None:
    if not np.isfinite(n3) or abs(n3) > 1:
        raise InvalidInput(f"|n3| must be <= 1, got {n3}", {"n3": n3})


def _quasi2d_from_square(xi1: np.ndarray, xi2: np.ndarray, n3sq: float) -> np.ndarray:
    k = np.sqrt(xi1 ** 2 + xi2 ** 2)
    q = (1 - 2 * n3sq) * xi1 ** 2 - n3sq * xi2 ** 2
    out = np.zeros(k.shape)
    nz = k > 0
    out[nz] = -q[nz] * g_closed_form(k[nz]) / np.pi
    return out


def symbol_quasi2d(xi1: ArrayLike, xi2: ArrayLike, n3: float) -> ArrayLike:
    """Quasi-2D dipolar symbol m(xi); m(0) = 0.

    Args:
        xi1: First frequency component(s)
        xi2: Second frequency component(s)
        n3: Polarization component normal to the plane, |n3| <= 1

    Returns:
        m evaluated pointwise
    """
    _check_n3(n3)
    _closed_form_checked()
    xi1, xi2 = np.broadcast_arrays(np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float))
    out = _quasi2d_from_square(xi1, xi2, n3 ** 2)
    return out if out.ndim else float(out)


def symbol_quasi2d_expansion(xi1: ArrayLike, xi2: ArrayLike, n3sq: float, order: int = 2) -> ArrayLike:
    """High-frequency expansion of m: -2q/|xi|^2 + 4pi q/|xi|^4 (order 2).

    Follows from G(k) = 2pi/k^2 - 4pi^2/k^4 + O(k^-6).
    """
    xi1, xi2 = np.broadcast_arrays(np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float))
    k2 = xi1 ** 2 + xi2 ** 2
    q = (1 - 2 * n3sq) * xi1 ** 2 - n3sq * xi2 ** 2
    out = -2 * _ratio(q, k2, 0.0)
    if order >= 2:
        out = out + 4 * np.pi * _ratio(q, k2 ** 2, 0.0)
    return out if out.ndim else float(out)


def kernel_K_realspace(x1: float, x2: float) -> float:
    """Real-space quasi-2D kernel K(x) by adaptive quadrature (validation only).

    Raises:
        InvalidInput: At x = 0
    """
    r = float(np.hypot(x1, x2))
    if r == 0:
        raise InvalidInput("K is not evaluated at the origin")
    integrand = lambda s: np.exp(-s ** 2 / 2) / np.sqrt(r ** 2 + 2 * np.pi * s ** 2)
    # the s-scale of the square root is r/sqrt(2pi); split there when it is small
    split = min(r / np.sqrt(2 * np.pi), 1.0)
    head, _ = quad(integrand, 0, split, epsabs=0, epsrel=1e-12, limit=200)
    tail, _ = quad(integrand, split, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return float(K_NORMALIZATION * 2 * (head + tail))


# Grid-level symbol tables, cached per (grid, parameters)

def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@lru_cache(maxsize=32)
def high_freq_symbol(grid: Grid2D) -> KernelSymbol:
    XI1, XI2 = grid.xi_mesh
    return KernelSymbol(grid, _readonly(symbol_high_freq(XI1, XI2)), "HighFreqU2D")


@lru_cache(maxsize=64)
def fab_symbol(grid: Grid2D, a: float, b: float) -> KernelSymbol:
    XI1, XI2 = grid.xi_mesh
    return KernelSymbol(grid, _readonly(symbol_fab(XI1, XI2, a, b)), "Fab", (a, b))


@lru_cache(maxsize=32)
def quasi2d_symbol(grid: Grid2D, n3sq: float) -> KernelSymbol:
    if not 0 <= n3sq <= 1:
        raise InvalidInput(f"n3^2 must lie in [0, 1], got {n3sq}", {"n3sq": n3sq})
    _closed_form_checked()
    XI1, XI2 = grid.xi_mesh
    return KernelSymbol(grid, _readonly(_quasi2d_from_square(XI1, XI2, n3sq)), "Quasi2D", (n3sq,))


def ring_averages(symbol: KernelSymbol) -> dict:
    """Average of a symbol over each ring of equal integer |k|^2 (square grids)."""
    g = symbol.grid
    K1, K2 = np.meshgrid(g.k1, g.k2, indexing="ij")
    radius = (K1 ** 2 + K2 ** 2).ravel()
    values = symbol.values.ravel()
    sums = np.bincount(radius, weights=values)
    counts = np.bincount(radius)
    present = counts > 0
    return dict(zip(np.nonzero(present)[0].tolist(), (sums[present] / counts[present]).tolist()))
