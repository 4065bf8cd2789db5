"""Optimal constant of the generalized Gagliardo-Nirenberg inequality.

    F_{a,b}[|u|^2] <= C(a,b) * int |grad u|^2 * int |u|^2

C(a,b) is the supremum of R(u) = F/(T M). It is found by preconditioned
gradient ascent on R from several starting fields, on a sequence of
refined grids.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from errors import ConditionViolated, InvalidInput, NonConvergence, NoPositiveF
from functionals import EffectiveParams, density, fab_energy
from grid_spectral import (
    Grid2D,
    WaveField,
    apply_multiplier,
    centroid,
    dilate,
    inner,
    kinetic,
    laplacian,
    make_grid,
    mass,
    normalize,
    phase_fix,
    rescale_to_unit,
    resample,
    translate,
)
from kernels import fab_symbol

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
STEP_MIN = 1e-12
STEP_MAX = 50.0
SPREAD_WARNING = 1e-3
# |log T| beyond which the sampled width is reset by interpolation
WIDTH_DRIFT = float(np.log(4.0))
# Gaussian widths with T/M close to 1, elongated along x1
ANISOTROPIC_WIDTHS = (2.5, 0.737)


@dataclass(frozen=True)
class SolverOptions:
    tol_rel: float = 1e-9
    tol_grad: float = 1e-6
    max_iter: int = 20000
    refine_tol: float = 1e-3
    scenes: Tuple[Tuple[int, float], ...] = ((128, 24.0), (256, 32.0))
    max_nodes: int = 512
    seed: int = 0
    step0: float = 1.0

    def __post_init__(self):
        if not (self.tol_rel > 0 and self.tol_grad > 0 and self.refine_tol > 0):
            raise InvalidInput("solver tolerances must be positive")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be positive", {"max_iter": self.max_iter})
        if not self.step0 > 0:
            raise InvalidInput("step0 must be positive", {"step0": self.step0})
        if not self.scenes:
            raise InvalidInput("at least one grid scene is required")


@dataclass
class AscentRun:
    """One ascent from one starting field on one grid."""

    label: str
    u: WaveField
    R: float
    grad_norm: float
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)
    rescaled_at: List[int] = field(default_factory=list)


@dataclass
class GNResult:
    C: float
    optimizer: WaveField
    residual: float
    grid_study: List[Tuple[int, float, float]]
    error: float
    a: float
    b: float
    spread: float = 0.0
    runs: List[AscentRun] = field(default_factory=list, repr=False)

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.runs)

    def summary(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "C": self.C,
            "error": self.error,
            "residual": self.residual,
            "spread": self.spread,
            "iterations": self.iterations,
            "grid_study": [[n, L, c] for n, L, c in self.grid_study],
        }


def quotient(u: WaveField, a: float, b: float) -> float:
    """R(u) = F_{a,b}[|u|^2] / (int |grad u|^2 * int |u|^2)."""
    T, M = kinetic(u), mass(u)
    if not (T > 0 and M > 0):
        raise InvalidInput("quotient is undefined for constant or zero fields")
    return fab_energy(density(u), a, b) / (T * M)


def verify_inequality(u: WaveField, a: float, b: float, C: float) -> float:
    """C * T * M - F_{a,b}[|u|^2]; nonnegative when C is the optimal constant."""
    return C * kinetic(u) * mass(u) - fab_energy(density(u), a, b)


def _ascent_gradient(u: WaveField, symbol: np.ndarray) -> Tuple[float, np.ndarray]:
    g = u.grid
    rho = np.abs(u.values) ** 2
    T, M = kinetic(u), mass(u)
    s_rho = apply_multiplier(rho, symbol)
    F = float(np.sum(s_rho * rho) * g.cell)
    R = F / (T * M)
    grad = 2 * s_rho * u.values / (T * M) + R * laplacian(u.values, g) / T - R * u.values / M
    return R, grad


def _gaussian(grid: Grid2D, widths: Tuple[float, float], rng: np.random.Generator) -> WaveField:
    X1, X2 = grid.mesh
    envelope = np.exp(-X1 ** 2 / (2 * widths[0] ** 2) - X2 ** 2 / (2 * widths[1] ** 2))
    # smooth low-amplitude noise so symmetric starts are not exactly symmetric
    noise = apply_multiplier(rng.standard_normal(grid.shape), np.exp(-grid.xi_sq))
    noise /= max(np.max(np.abs(noise)), 1e-300)
    return normalize(WaveField(grid, envelope * (1 + 1e-3 * noise)))


def initial_fields(grid: Grid2D, seed: int = 0) -> List[Tuple[str, WaveField]]:
    """Isotropic Gaussian plus two anisotropic ones elongated along x1 and x2."""
    rng = np.random.default_rng(seed)
    w1, w2 = ANISOTROPIC_WIDTHS
    return [
        ("isotropic", _gaussian(grid, (1.0, 1.0), rng)),
        ("elongated_x1", _gaussian(grid, (w1, w2), rng)),
        ("elongated_x2", _gaussian(grid, (w2, w1), rng)),
    ]


def _grad_norm(grad: np.ndarray, grid: Grid2D) -> float:
    return float(np.sqrt(np.sum(np.abs(grad) ** 2) * grid.cell))


def _symmetry_generators(u: WaveField) -> List[np.ndarray]:
    """Tangent fields of the dilation u -> L^-1 u(x/L) and of the two translations."""
    g = u.grid
    XI1, XI2 = g.xi_mesh
    X1, X2 = g.mesh
    d1 = apply_multiplier(u.values, 1j * XI1)
    d2 = apply_multiplier(u.values, 1j * XI2)
    return [u.values + X1 * d1 + X2 * d2, d1, d2]


def _pin_symmetries(direction: np.ndarray, u: WaveField) -> np.ndarray:
    """Add symmetry generators to direction so that T/M and the centroid are
    stationary to first order along it.

    R is constant along the generators, so the ascent slope is unchanged.
    """
    g = u.grid
    X1, X2 = g.mesh
    generators = _symmetry_generators(u)
    ratio = kinetic(u) / mass(u)
    constraints = [-laplacian(u.values, g) - ratio * u.values, X1 * u.values, X2 * u.values]

    def pair(f: np.ndarray, h: np.ndarray) -> float:
        return float(np.sum((np.conj(f) * h).real) * g.cell)

    A = np.array([[pair(c, v) for v in generators] for c in constraints])
    rhs = np.array([pair(c, direction) for c in constraints])
    coeffs = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return direction - sum(c * v for c, v in zip(coeffs, generators))


def maximize_quotient(u0: WaveField, a: float, b: float, opts: SolverOptions,
                      label: str = "start") -> AscentRun:
    """Preconditioned gradient ascent on R from u0.

    R is invariant under dilations and translations. The search direction
    is corrected along their generators so that T/M and the centroid do not
    move to first order, which keeps the sampled profile in place. Each
    accepted step is followed by mass renormalization and a global phase
    fix. A width drift by more than a factor 2 is undone by interpolation
    and recorded in `rescaled_at`.
    """
    g = u0.grid
    symbol = fab_symbol(g, float(a), float(b)).values
    precond = 1.0 / (1.0 + g.xi_sq)
    recenter_at = 2 * max(g.dx1, g.dx2)

    u = normalize(u0)
    R, grad = _ascent_gradient(u, symbol)
    best = (R, u)
    history = [R]
    rescaled_at: List[int] = []
    step = opts.step0
    gnorm = _grad_norm(grad, g)

    for it in range(1, opts.max_iter + 1):
        direction = _pin_symmetries(apply_multiplier(grad, precond), u)
        slope = 2 * inner(u.with_values(grad), u.with_values(direction)).real
        if not slope > 0:
            direction = grad
            slope = 2 * gnorm ** 2
        accepted = False
        while step >= STEP_MIN:
            trial = u.with_values(u.values + step * direction)
            R_trial = quotient(trial, a, b)
            if R_trial >= R + ARMIJO_C * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = gnorm < opts.tol_grad
            logger.debug("[%s] line search stalled at iteration %d, R=%.12f |grad|=%.3e",
                         label, it, R, gnorm)
            return AscentRun(label, best[1], best[0], gnorm, it, converged, history, rescaled_at)

        step = min(step * 1.5, STEP_MAX)
        u = phase_fix(normalize(trial))
        rescaled = abs(np.log(kinetic(u))) > WIDTH_DRIFT
        if rescaled:
            u = rescale_to_unit(u)
            rescaled_at.append(it)
        c = centroid(u)
        if np.hypot(*c) > recenter_at:
            u = translate(u, c)

        R_prev = R
        R, grad = _ascent_gradient(u, symbol)
        gnorm = _grad_norm(grad, g)
        history.append(R)
        if R > best[0]:
            best = (R, u)

        if it % 500 == 0:
            logger.debug("[%s] iteration %d: R=%.12f |grad|=%.3e step=%.3e", label, it, R, gnorm, step)
        if not rescaled and abs(R - R_prev) <= opts.tol_rel * abs(R) and gnorm < opts.tol_grad:
            return AscentRun(label, best[1], best[0], gnorm, it, True, history, rescaled_at)

    return AscentRun(label, best[1], best[0], gnorm, opts.max_iter, False, history, rescaled_at)


def _refinement_scenes(opts: SolverOptions):
    """The configured scenes, then doubling n and adding 8 to L up to max_nodes."""
    for n, L in opts.scenes:
        yield int(n), float(L)
    n, L = opts.scenes[-1]
    while 2 * n <= opts.max_nodes:
        n, L = 2 * n, L + 8
        yield int(n), float(L)


def _solve_scene(grid: Grid2D, a: float, b: float, opts: SolverOptions,
                 warm: Optional[WaveField]) -> Tuple[AscentRun, List[AscentRun], float]:
    if warm is None:
        starts = initial_fields(grid, opts.seed)
    else:
        starts = [("refined", normalize(resample(warm, grid)))]

    runs = [maximize_quotient(u0, a, b, opts, label) for label, u0 in starts]
    done = [r for r in runs if r.converged]
    if not done:
        raise NonConvergence(
            f"no ascent run converged on the {grid.n1}x{grid.n2} grid within {opts.max_iter} iterations",
            {"n": grid.n1, "L": grid.L1, "best_R": max(r.R for r in runs)},
        )
    best = max(done, key=lambda r: r.R)
    if best.R <= 0:
        raise NoPositiveF("no starting field reached F_{a,b} > 0", {"a": a, "b": b})
    spread = (max(r.R for r in done) - min(r.R for r in done)) / abs(best.R)
    if spread > SPREAD_WARNING:
        logger.warning("starting fields disagree on C(%g, %g) by %.2e relative; reporting the largest",
                       a, b, spread)
    return best, runs, spread


def _maximize(a: float, b: float, opts: SolverOptions) -> GNResult:
    study: List[Tuple[int, float, float]] = []
    all_runs: List[AscentRun] = []
    warm: Optional[WaveField] = None
    best: Optional[AscentRun] = None
    spread = 0.0
    for n, L in _refinement_scenes(opts):
        grid = make_grid(n, n, L, L)
        best, runs, scene_spread = _solve_scene(grid, a, b, opts, warm)
        spread = max(spread, scene_spread)
        all_runs.extend(runs)
        study.append((n, L, best.R))
        logger.info("C(%g, %g) on %dx%d, L=%g: %.10f", a, b, n, n, L, best.R)
        warm = best.u
        if len(study) >= max(2, len(opts.scenes)):
            change = abs(study[-1][2] - study[-2][2]) / abs(study[-1][2])
            if change < opts.refine_tol:
                break
    else:
        logger.warning("grid refinement for C(%g, %g) stopped at max_nodes=%d without reaching %.1e",
                       a, b, opts.max_nodes, opts.refine_tol)

    error = 0.5 * abs(study[-1][2] - study[-2][2]) if len(study) > 1 else 0.0
    # exact dilation to T = 1 on a rescaled box; M is already 1
    optimizer = dilate(best.u, float(np.sqrt(kinetic(best.u))))
    residual = abs(verify_inequality(optimizer, a, b, best.R)) + best.grad_norm
    return GNResult(best.R, optimizer, residual, study, error, a, b, spread, all_runs)


@lru_cache(maxsize=64)
def _canonical_constant(a: float, b: float, opts: SolverOptions) -> GNResult:
    return _maximize(a, b, opts)


def _swap_axes(u: WaveField) -> WaveField:
    g = u.grid
    return WaveField(Grid2D(g.n2, g.n1, g.L2, g.L1), u.values.T.copy())


def compute_gn_constant(a: float, b: float, opts: Optional[SolverOptions] = None) -> GNResult:
    """Estimate C(a,b) and an optimizer with T = M = 1.

    Uses C(ta, tb) = t C(a, b) and C(a, -b) = C(a, b) to solve only the
    normalized problem max(|a + b/2|, |a - b/2|) = 1 with b >= 0; results
    are cached per normalized problem.

    Args:
        a: Isotropic weight
        b: Anisotropic weight
        opts: Solver options

    Returns:
        GNResult in the caller's (a, b)

    Raises:
        ConditionViolated: If a + b/2 <= 0 and a - b/2 <= 0
        NoPositiveF: If no starting field has F > 0
        NonConvergence: If no ascent run converges
    """
    opts = opts or SolverOptions()
    if not (np.isfinite(a) and np.isfinite(b)):
        raise InvalidInput("a and b must be finite", {"a": a, "b": b})
    if not EffectiveParams(a, b).condition_holds:
        raise ConditionViolated(
            "C(a,b) needs a + b/2 > 0 or a - b/2 > 0",
            {"a": a, "b": b, "a_plus": a + b / 2, "a_minus": a - b / 2},
        )
    t = max(abs(a + b / 2), abs(a - b / 2))
    base = _canonical_constant(round(a / t, 15), round(abs(b) / t, 15), opts)
    optimizer = _swap_axes(base.optimizer) if b < 0 else base.optimizer
    return GNResult(
        C=t * base.C,
        optimizer=optimizer,
        residual=t * base.residual,
        grid_study=[(n, L, t * c) for n, L, c in base.grid_study],
        error=t * base.error,
        a=a,
        b=b,
        spread=base.spread,
        runs=base.runs,
    )
