"""Trapped ground states by normalized gradient flow, with collapse detection."""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from errors import CollapseDetected, InvalidInput, NonConvergence
from functionals import EnergyBreakdown, PhysicalParams, TrapSpec, energy_2d, gradient_energy
from grid_spectral import Grid2D, WaveField, apply_multiplier, inner, kinetic, make_grid, mass, normalize

logger = logging.getLogger(__name__)

BOX_FACTOR = 6.0
STEP_MIN = 1e-10


@dataclass(frozen=True)
class GroundStateOptions:
    tau0: float = 0.1
    tau_max: float = 1.0
    max_iter: int = 5000
    tol_energy: float = 1e-10
    tol_residual: float = 1e-6
    collapse_factor: float = 4.0
    energy_floor: float = -1e3
    window: int = 50
    preconditioned: bool = True
    strict: bool = False

    def __post_init__(self):
        if not (0 < self.tau0 <= self.tau_max):
            raise InvalidInput("need 0 < tau0 <= tau_max", {"tau0": self.tau0, "tau_max": self.tau_max})
        if self.max_iter < 1 or self.window < 2:
            raise InvalidInput("max_iter must be positive and window at least 2")


@dataclass
class GroundStateResult:
    u: WaveField
    energy: EnergyBreakdown
    iterations: int
    converged: bool
    collapse_detected: bool
    L_history: List[float] = field(default_factory=list)
    energy_history: List[float] = field(default_factory=list)
    residual: float = float("nan")
    mu: float = float("nan")

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "collapse_detected": self.collapse_detected,
            "residual": self.residual,
            "mu": self.mu,
            "energy": self.energy.as_dict(),
            "final_L": self.L_history[-1] if self.L_history else None,
        }


def auto_box(trap: TrapSpec, energy: float, factor: float = BOX_FACTOR) -> float:
    """Box side whose half-width is `factor` classical turning radii at `energy`."""
    return 2 * factor * trap.turning_radius(energy)


def trap_gaussian(grid: Grid2D, trap: TrapSpec) -> WaveField:
    """Unit-mass Gaussian matched to the trap (the exact ground mode for a harmonic one)."""
    X1, X2 = grid.mesh
    if trap.kind == "harmonic":
        values = np.exp(-(trap.omega1 * X1 ** 2 + trap.omega2 * X2 ** 2) / 2)
    else:
        # width minimizing 1/(2s^2) + 2 c s^4 for the quartic trap
        s = (8 * trap.c) ** -0.25 if trap.kind == "quartic" else 1.0
        values = np.exp(-(X1 ** 2 + X2 ** 2) / (2 * s ** 2))
    return normalize(WaveField(grid, values))


def kinetic_length(u: WaveField) -> float:
    """L = (int |grad u|^2)^(-1/2)."""
    return float(kinetic(u) ** -0.5)


def detect_collapse(L_history: Sequence[float], grid: Grid2D,
                    energies: Optional[Sequence[float]] = None,
                    factor: float = 4.0, energy_floor: float = -1e3, window: int = 50) -> bool:
    """Flag a run whose kinetic length leaves the resolved range.

    True when L < factor * max(dx1, dx2), or when L decreased monotonically
    by at least 8x over the trailing window while the energy fell below
    energy_floor.
    """
    if not len(L_history):
        raise InvalidInput("collapse detection needs a nonempty L history")
    if L_history[-1] < factor * max(grid.dx1, grid.dx2):
        return True
    if energies is None or not len(energies) or energies[-1] > energy_floor:
        return False
    tail = np.asarray(L_history[-window:], dtype=float)
    return bool(tail.size >= 2 and np.all(np.diff(tail) <= 0) and tail[0] >= 8 * tail[-1])


def minimize_trapped(p: PhysicalParams, grid: Optional[Grid2D] = None,
                     opts: Optional[GroundStateOptions] = None,
                     u0: Optional[WaveField] = None) -> GroundStateResult:
    """Minimize E(u) over unit-mass fields.

    Each step is u <- normalize(u - tau P (grad E - mu u)) with
    mu = <grad E, u> and, when preconditioned, P = (1 - tau Lap/2)^-1.
    A step is accepted only if the energy does not increase; tau halves on
    rejection and grows by 1.25 up to tau_max on acceptance.

    Args:
        p: Physical parameters
        grid: Simulation grid; defaults to 128^2 with a box from auto_box
        opts: Flow options
        u0: Starting field; defaults to the trap-matched Gaussian

    Returns:
        GroundStateResult with flags for convergence and collapse

    Raises:
        CollapseDetected: Only with opts.strict
        NonConvergence: Only with opts.strict
    """
    opts = opts or GroundStateOptions()
    if grid is None:
        side = auto_box(p.trap, 1.0)
        grid = make_grid(128, 128, side, side)
    u = normalize(u0) if u0 is not None else trap_gaussian(grid, p.trap)

    E = energy_2d(u, p)
    if p.trap.kind != "custom":
        needed = auto_box(p.trap, max(E.kinetic + E.potential, 1e-12))
        if min(grid.L1, grid.L2) < needed:
            logger.warning("box %.3g x %.3g is smaller than %.3g (%g turning radii)",
                           grid.L1, grid.L2, needed, BOX_FACTOR)

    L_history = [kinetic_length(u)]
    energy_history = [E.total]
    tau = opts.tau0
    converged = collapsed = False
    residual = mu = float("nan")
    it = 0

    for it in range(1, opts.max_iter + 1):
        grad = gradient_energy(u, p)
        mu = inner(u, grad).real / mass(u)
        r = grad.values - mu * u.values
        residual = float(np.sqrt(np.sum(np.abs(r) ** 2) * grid.cell))

        accepted = False
        while tau >= STEP_MIN:
            step = apply_multiplier(r, 1.0 / (1.0 + 0.5 * tau * grid.xi_sq)) if opts.preconditioned else r
            trial = normalize(u.with_values(u.values - tau * step))
            E_trial = energy_2d(trial, p)
            if E_trial.total <= E.total + 1e-14 * max(1.0, abs(E.total)):
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            logger.debug("gradient flow stalled at iteration %d, residual %.3e", it, residual)
            converged = residual < opts.tol_residual
            break

        change = abs(E_trial.total - E.total) / max(abs(E_trial.total), 1e-300)
        u, E = trial, E_trial
        tau = min(1.25 * tau, opts.tau_max)
        L_history.append(kinetic_length(u))
        energy_history.append(E.total)

        if detect_collapse(L_history, grid, energy_history, opts.collapse_factor,
                           opts.energy_floor, opts.window):
            collapsed = True
            logger.info("collapse detected at iteration %d: L=%.4g, E=%.6g", it, L_history[-1], E.total)
            break
        if it % 200 == 0:
            logger.debug("iteration %d: E=%.12f residual=%.3e tau=%.3e L=%.4f",
                         it, E.total, residual, tau, L_history[-1])
        if change < opts.tol_energy and residual < opts.tol_residual:
            converged = True
            break

    if converged:
        logger.info("ground state converged in %d iterations: E=%.10f mu=%.10f", it, E.total, mu)
    result = GroundStateResult(u, E, it, converged, collapsed, L_history, energy_history, residual, mu)
    if opts.strict and collapsed:
        raise CollapseDetected(
            f"kinetic length {L_history[-1]:.4g} fell below the resolution floor",
            {"L_history": L_history, "iterations": it},
        )
    if opts.strict and not converged and not collapsed:
        raise NonConvergence(f"gradient flow did not converge in {it} iterations",
                             {"residual": residual, "iterations": it})
    return result
