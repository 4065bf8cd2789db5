"""Energy functional of the quasi-2D dipolar gas and the effective quadratic forms.

E(u) = 1/2 int |grad u|^2 + int V |u|^2
       + (beta - lam + 3 n3^2 lam)/2 int |u|^4 - (3 lam / 4) F_int[|u|^2]

with F_int[rho] = int m(xi) |rho^(xi)|^2 dxi. All integrals are box sums.
"""
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Literal, NamedTuple, Optional, Tuple

import numpy as np

from errors import InvalidInput
from grid_spectral import (
    Grid2D,
    WaveField,
    apply_multiplier,
    fft2,
    ifft2,
    inner,
    integrate,
    kinetic,
    laplacian,
    mass,
    spectral_power,
)
from kernels import fab_symbol, quasi2d_symbol

logger = logging.getLogger(__name__)

TrapKind = Literal["harmonic", "quartic", "custom"]


@dataclass(frozen=True)
class TrapSpec:
    """Confining potential.

    harmonic: V = (omega1^2 x1^2 + omega2^2 x2^2) / 2
    quartic:  V = c |x|^4
    custom:   V = potential(X1, X2), must be nonnegative
    """

    kind: TrapKind = "harmonic"
    omega1: float = 1.0
    omega2: float = 1.0
    c: float = 1.0
    potential: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(default=None, compare=True)

    def __post_init__(self):
        if self.kind == "harmonic" and not (self.omega1 > 0 and self.omega2 > 0):
            raise InvalidInput("harmonic trap frequencies must be positive",
                               {"omega1": self.omega1, "omega2": self.omega2})
        if self.kind == "quartic" and not self.c > 0:
            raise InvalidInput("quartic trap coefficient must be positive", {"c": self.c})
        if self.kind == "custom" and self.potential is None:
            raise InvalidInput("custom trap needs a potential callable")

    def evaluate(self, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
        if self.kind == "harmonic":
            return 0.5 * (self.omega1 ** 2 * X1 ** 2 + self.omega2 ** 2 * X2 ** 2)
        if self.kind == "quartic":
            return self.c * (X1 ** 2 + X2 ** 2) ** 2
        values = np.asarray(self.potential(X1, X2), dtype=float)
        if values.shape != X1.shape or np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidInput("custom potential must be finite, nonnegative and grid-shaped")
        return values

    def turning_radius(self, energy: float) -> float:
        """Largest |x| with V(x) <= energy."""
        if energy <= 0:
            return 0.0
        if self.kind == "harmonic":
            return float(np.sqrt(2 * energy) / min(self.omega1, self.omega2))
        if self.kind == "quartic":
            return float((energy / self.c) ** 0.25)
        raise InvalidInput("turning radius is only known for harmonic and quartic traps")


@lru_cache(maxsize=32)
def trap_on_grid(trap: TrapSpec, grid: Grid2D) -> np.ndarray:
    values = trap.evaluate(*grid.mesh)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class PhysicalParams:
    """Physical parameters (beta, lambda, n3^2, trap).

    Only n3^2 enters the model. When the square was given as an exact
    token, `n3sq_fraction` keeps it so sign tests can be done exactly.
    """

    beta: float
    lam: float
    n3sq: float = 1.0
    trap: TrapSpec = TrapSpec()
    n3sq_fraction: Optional[Fraction] = None
    exact_borderline: bool = False

    def __post_init__(self):
        if self.n3sq_fraction is not None:
            object.__setattr__(self, "n3sq", float(self.n3sq_fraction))
        for name in ("beta", "lam", "n3sq"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidInput(f"{name} must be finite", {name: getattr(self, name)})
        if not 0 <= self.n3sq <= 1:
            raise InvalidInput(f"n3^2 must lie in [0, 1], got {self.n3sq}", {"n3sq": self.n3sq})

    @classmethod
    def from_n3(cls, beta: float, lam: float, n3: float, trap: TrapSpec = TrapSpec()) -> "PhysicalParams":
        if not abs(n3) <= 1:
            raise InvalidInput(f"|n3| must be <= 1, got {n3}", {"n3": n3})
        return cls(beta=beta, lam=lam, n3sq=n3 * n3, trap=trap)

    @property
    def n3(self) -> float:
        return float(np.sqrt(self.n3sq))

    def with_beta(self, beta: float, exact_borderline: bool = False) -> "PhysicalParams":
        return replace(self, beta=beta, exact_borderline=exact_borderline)


@dataclass(frozen=True)
class EffectiveParams:
    a: float
    b: float

    @property
    def trivial_regime(self) -> bool:
        return self.a + self.b / 2 <= 0 and self.a - self.b / 2 <= 0

    @property
    def condition_holds(self) -> bool:
        return not self.trivial_regime


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    quartic: float
    dipolar: float
    total: float
    mass: float

    def as_dict(self) -> dict:
        return {
            "kinetic": self.kinetic,
            "potential": self.potential,
            "quartic": self.quartic,
            "dipolar": self.dipolar,
            "total": self.total,
            "mass": self.mass,
        }


class CoefficientPairs(NamedTuple):
    """Weights of xi1^2/|xi|^2 and xi2^2/|xi|^2 in a quadratic form of rho."""

    physical: Tuple
    fab_half: Tuple


def _ab(beta, lam, n3sq):
    a = lam - beta + 3 * lam * (n3sq - 1) / 2
    b = 3 * lam * (n3sq - 1)
    return a, b


def effective_params(p: PhysicalParams) -> EffectiveParams:
    """a = lam - beta + (3 lam/2)(n3^2 - 1), b = 3 lam (n3^2 - 1)."""
    a, b = _ab(p.beta, p.lam, p.n3sq)
    return EffectiveParams(float(a), float(b))


def quartic_coefficient(p: PhysicalParams) -> float:
    """Prefactor of int |u|^4 in the energy."""
    return (p.beta - p.lam + 3 * p.n3sq * p.lam) / 2


def coefficient_identity(beta, lam, n3sq) -> CoefficientPairs:
    """Compare the collapsed interaction with -F_{a,b}/2, coefficient by coefficient.

    Under u_L = L^-1 u(x/L), L^2 (quartic + dipolar) tends to the quadratic
    form with symbol g/2 + (3 lam/2) q(xi)/|xi|^2 since m ~ -2q/|xi|^2. The
    arguments may be numbers or sympy symbols.

    Returns:
        CoefficientPairs(physical=(c1, c2), fab_half=(-(a+b/2)/2, -(a-b/2)/2))
    """
    g_half = (beta - lam + 3 * n3sq * lam) / 2
    physical = (g_half + 3 * lam * (1 - 2 * n3sq) / 2, g_half - 3 * lam * n3sq / 2)
    a, b = _ab(beta, lam, n3sq)
    fab_half = (-(a + b / 2) / 2, -(a - b / 2) / 2)
    return CoefficientPairs(physical, fab_half)


def clamp_density(values: np.ndarray) -> np.ndarray:
    """Zero out negative round-off in a density."""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        raise InvalidInput("density must be real")
    if not np.all(np.isfinite(values)):
        raise InvalidInput("density contains NaN or Inf values")
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if np.any(values < -1e-12 * max(scale, 1e-300)):
        logger.debug("density has negative entries beyond round-off, min %.3e", values.min())
    return np.where(values < 0, 0.0, values)


def density(u: WaveField) -> WaveField:
    return WaveField(u.grid, clamp_density(np.abs(u.values) ** 2))


def _quadratic_form(symbol: np.ndarray, rho: WaveField) -> float:
    g = rho.grid
    return float(np.sum(symbol * spectral_power(rho.values, g)) * g.freq_cell)


def interaction_energy(rho: WaveField, n3sq: float) -> float:
    """F_int[rho] = int m(xi) |rho^|^2 dxi for the quasi-2D symbol."""
    return _quadratic_form(quasi2d_symbol(rho.grid, float(n3sq)).values, rho)


def energy_2d(u: WaveField, p: PhysicalParams) -> EnergyBreakdown:
    """Evaluate the four energy terms of u.

    Args:
        u: Position-space wave function
        p: Physical parameters

    Returns:
        EnergyBreakdown with total = kinetic + potential + quartic + dipolar

    Raises:
        InvalidInput: If u has zero mass
    """
    M = mass(u)
    if M <= 0:
        raise InvalidInput("energy is undefined for a field of zero mass")
    rho = density(u)
    g = u.grid
    kin = 0.5 * kinetic(u)
    pot = integrate(trap_on_grid(p.trap, g) * rho.values, g)
    quart = quartic_coefficient(p) * integrate(rho.values ** 2, g)
    dip = -0.75 * p.lam * interaction_energy(rho, p.n3sq) if p.lam != 0 else 0.0
    return EnergyBreakdown(kin, pot, quart, dip, kin + pot + quart + dip, M)


def fab_energy(rho: WaveField, a: float, b: float) -> float:
    """F_{a,b}[rho] = int symbol_fab(xi) |rho^(xi)|^2 dxi."""
    rho = WaveField(rho.grid, clamp_density(rho.values))
    return _quadratic_form(fab_symbol(rho.grid, float(a), float(b)).values, rho)


def fab_energy_coulomb_form(rho: WaveField, a: float, b: float) -> float:
    """(a - b/2) int rho^2 - b int (d11 U) rho with U = (-Laplace)^-1 rho.

    U's zero mode is set to 0. On the periodic box d11 U then also carries
    the isotropic half of the neutralizing background, -mean(rho)/2, which
    is what makes the identity with fab_energy exact on the grid.
    """
    values = clamp_density(rho.values)
    g = rho.grid
    XI1, _ = g.xi_mesh
    rho_k = fft2(values)
    u_k = np.zeros_like(rho_k)
    nz = g.xi_sq > 0
    u_k[nz] = rho_k[nz] / g.xi_sq[nz]
    d11u = ifft2(-XI1 ** 2 * u_k).real - 0.5 * values.mean()
    return float((a - b / 2) * integrate(values ** 2, g) - b * integrate(d11u * values, g))


def gradient_energy(u: WaveField, p: PhysicalParams) -> WaveField:
    """dE/d(conj u) = -1/2 Lap u + V u + g |u|^2 u - (3 lam/2)(M_m rho) u."""
    g = u.grid
    rho = clamp_density(np.abs(u.values) ** 2)
    coupling = 2 * quartic_coefficient(p) * rho + trap_on_grid(p.trap, g)
    if p.lam != 0:
        coupling = coupling - 1.5 * p.lam * apply_multiplier(rho, quasi2d_symbol(g, float(p.n3sq)).values)
    values = -0.5 * laplacian(u.values, g) + coupling * u.values
    return u.with_values(values)


def directional_derivative(u: WaveField, du: WaveField, p: PhysicalParams) -> float:
    """d/dh E(u + h du) at h = 0."""
    return 2.0 * inner(gradient_energy(u, p), du).real
