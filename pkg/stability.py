"""Stability classification and collapse-scan diagnostics.

With (a, b) from effective_params the gas is stable when a +- b/2 <= 0 or
C(a,b) < 1 and unstable when C(a,b) > 1. At C(a,b) = 1 the sign of
lam (1 - 3 n3^2) decides: negative stable, zero marginal, positive unstable.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from errors import (
    BracketFailure, ConditionViolated, DipolarStabError, InvalidInput, NoPositiveF, UnresolvedScale,
)
from functionals import (
    EffectiveParams,
    PhysicalParams,
    TrapSpec,
    density,
    energy_2d,
    effective_params,
    fab_energy,
)
from gn_solver import SolverOptions, compute_gn_constant
from grid_spectral import WaveField, dilate, embed, kinetic, mass

logger = logging.getLogger(__name__)

FitTerms = Literal["leading", "extended"]

# basis of the collapse-scan fit; "extended" adds the first corrections in L
FIT_BASES: Dict[str, Tuple[str, ...]] = {
    "leading": ("c2", "clog", "c0"),
    "extended": ("c2", "clog", "c0", "d2log", "d2"),
}

SIGN_TOL = 1e-12


class VerdictCase(str, Enum):
    STABLE_TRIVIAL = "StableTrivial"
    STABLE_SUBCRITICAL = "StableSubcritical"
    UNSTABLE = "Unstable"
    BORDERLINE_STABLE = "BorderlineStable"
    BORDERLINE_MARGINAL = "BorderlineMarginal"
    BORDERLINE_UNSTABLE = "BorderlineUnstable"
    INDETERMINATE = "Indeterminate"


@dataclass
class StabilityVerdict:
    case: VerdictCase
    params: EffectiveParams
    C: Optional[float] = None
    C_error: Optional[float] = None
    borderline_sign: Optional[int] = None
    notes: str = ""

    @property
    def exit_code(self) -> int:
        return 3 if self.case is VerdictCase.INDETERMINATE else 0

    def as_dict(self) -> dict:
        return {
            "case": self.case.value,
            "a": self.params.a,
            "b": self.params.b,
            "C": self.C,
            "C_error": self.C_error,
            "borderline_sign": self.borderline_sign,
            "notes": self.notes,
        }


@dataclass
class ScalingScan:
    L_values: List[float]
    energies: List[float]
    fit: Tuple[float, ...]
    fit_residual: float
    fit_errors: Tuple[float, ...] = (0.0, 0.0, 0.0)
    fit_names: Tuple[str, ...] = FIT_BASES["leading"]
    predicted_clog: Optional[float] = None
    rows: List[dict] = field(default_factory=list)

    @property
    def c2(self) -> float:
        return self.fit[0]

    @property
    def clog(self) -> float:
        return self.fit[1]

    @property
    def c0(self) -> float:
        return self.fit[2]


def borderline_sign(p: PhysicalParams) -> int:
    """Sign of lam (1 - 3 n3^2), exact when n3^2 came as a fraction token."""
    if p.lam == 0:
        return 0
    if p.n3sq_fraction is not None:
        factor = 1 - 3 * Fraction(p.n3sq_fraction)
        return 0 if factor == 0 else int(np.sign(p.lam)) * (1 if factor > 0 else -1)
    s = p.lam * (1 - 3 * p.n3sq)
    if abs(s) <= SIGN_TOL:
        return 0
    return 1 if s > 0 else -1


def predicted_log_coefficient(p: PhysicalParams) -> float:
    """Coefficient of log L in E(u_L) for unit-mass seeds: (3/4) lam (1 - 3 n3^2)."""
    if borderline_sign(p) == 0:
        return 0.0
    return 0.75 * p.lam * (1 - 3 * p.n3sq)


_BORDERLINE_CASES = {
    -1: VerdictCase.BORDERLINE_STABLE,
    0: VerdictCase.BORDERLINE_MARGINAL,
    1: VerdictCase.BORDERLINE_UNSTABLE,
}


def classify(p: PhysicalParams, tol: float = 1e-2, opts: Optional[SolverOptions] = None,
             analyze_borderline: bool = False) -> StabilityVerdict:
    """Classify a parameter point.

    Args:
        p: Physical parameters; p.exact_borderline asserts C(a,b) = 1
        tol: Absolute tolerance on C; the effective error bar is max(error, tol)
        opts: Solver options for C(a,b)
        analyze_borderline: Resolve |C - 1| <= error with the sign rule instead
            of reporting Indeterminate

    Returns:
        StabilityVerdict
    """
    if not tol > 0:
        raise InvalidInput("classifier tolerance must be positive", {"tol": tol})
    ab = effective_params(p)
    if ab.trivial_regime:
        return StabilityVerdict(VerdictCase.STABLE_TRIVIAL, ab,
                                notes="a + b/2 <= 0 and a - b/2 <= 0")

    sign = borderline_sign(p)
    if p.exact_borderline:
        return StabilityVerdict(_BORDERLINE_CASES[sign], ab, C=1.0, C_error=0.0, borderline_sign=sign,
                                notes="C(a,b) = 1 asserted by the caller")

    try:
        result = compute_gn_constant(ab.a, ab.b, opts)
    except DipolarStabError as e:
        logger.warning("C(%g, %g) could not be computed: %s", ab.a, ab.b, e.message)
        return StabilityVerdict(VerdictCase.INDETERMINATE, ab,
                                notes=f"{type(e).__name__}: {e.message}")

    C, err = result.C, result.error
    margin = max(err, tol)
    if C + margin < 1:
        case = VerdictCase.STABLE_SUBCRITICAL
    elif C - margin > 1:
        case = VerdictCase.UNSTABLE
    elif analyze_borderline:
        return StabilityVerdict(_BORDERLINE_CASES[sign], ab, C, err, sign,
                                notes=f"|C - 1| <= {margin:.3g}, resolved by the sign of lam (1 - 3 n3^2)")
    else:
        return StabilityVerdict(VerdictCase.INDETERMINATE, ab, C, err, sign,
                                notes=f"|C - 1| <= {margin:.3g}; refine the grid or request borderline analysis")
    return StabilityVerdict(case, ab, C, err)


def classify_sweep(points: Iterable[PhysicalParams], tol: float = 1e-2,
                   opts: Optional[SolverOptions] = None,
                   analyze_borderline: bool = False) -> List[StabilityVerdict]:
    """Classify parameter points in order."""
    verdicts = []
    for i, p in enumerate(points):
        verdict = classify(p, tol, opts, analyze_borderline)
        logger.info("point %d (beta=%g, lambda=%g, n3^2=%g): %s", i, p.beta, p.lam, p.n3sq, verdict.case.value)
        verdicts.append(verdict)
    return verdicts


def _constant_or_zero(a: float, b: float, opts: Optional[SolverOptions]) -> float:
    try:
        return compute_gn_constant(a, b, opts).C
    except (ConditionViolated, NoPositiveF):
        return 0.0
    except DipolarStabError as e:
        raise BracketFailure(f"C({a:g}, {b:g}) failed during the borderline search: {e.message}",
                             {"a": a, "b": b, "cause": type(e).__name__}) from e


def tune_to_borderline(lam: float, n3sq: Union[float, Fraction], trap: TrapSpec = TrapSpec(),
                       opts: Optional[SolverOptions] = None, tol: float = 5e-4) -> PhysicalParams:
    """Find beta >= 0 with C(a(beta), b) = 1 at fixed lam and n3^2.

    a decreases with slope -1 in beta and b does not depend on beta, so C
    is monotone in beta. For b = 0 the root is explicit through
    C(a, 0) = a C(1, 0).

    Args:
        lam: Dipolar strength
        n3sq: Square of the normal polarization component; a Fraction is kept exact
        trap: Trap carried into the returned parameters
        opts: Solver options for C(a,b)
        tol: Accepted |C - 1|

    Returns:
        PhysicalParams with the tuned beta, flagged exact_borderline

    Raises:
        BracketFailure: If C(beta = 0) <= 1, the root misses tolerance or the
            solver fails inside the bracket
    """
    if isinstance(n3sq, Fraction):
        p = PhysicalParams(0.0, lam, trap=trap, n3sq_fraction=n3sq)
    else:
        p = PhysicalParams(0.0, lam, n3sq=float(n3sq), trap=trap)
    ab0 = effective_params(p)
    C0 = _constant_or_zero(ab0.a, ab0.b, opts)
    if C0 <= 1:
        raise BracketFailure(
            f"C(a, b) = {C0:.6g} at beta = 0, no beta >= 0 reaches C = 1",
            {"lambda": p.lam, "n3sq": p.n3sq, "C_at_beta0": C0},
        )

    if ab0.b == 0:
        beta = ab0.a - 1.0 / compute_gn_constant(1.0, 0.0, opts).C
        logger.info("borderline beta from C(a,0) = a C(1,0): %.10f", beta)
        return p.with_beta(beta, exact_borderline=True)

    # beyond this beta both a + b/2 and a - b/2 are <= 0
    beta_hi = ab0.a + abs(ab0.b) / 2

    def excess(beta: float) -> float:
        ab = effective_params(p.with_beta(beta))
        return _constant_or_zero(ab.a, ab.b, opts) - 1.0

    beta = brentq(excess, 0.0, beta_hi, xtol=1e-10, rtol=1e-12, maxiter=100)
    miss = abs(excess(beta))
    if miss >= tol:
        raise BracketFailure(f"bisection ended with |C - 1| = {miss:.3g}", {"beta": beta, "miss": miss})
    logger.info("borderline beta by bisection: %.10f (|C - 1| = %.2e)", beta, miss)
    return p.with_beta(beta, exact_borderline=True)


def _check_seed(seed: WaveField) -> None:
    T, M = kinetic(seed), mass(seed)
    if abs(M - 1) > 1e-6 or abs(T - 1) > 1e-3:
        raise InvalidInput("collapse scan needs a seed with int |grad u|^2 = int |u|^2 = 1",
                           {"kinetic": T, "mass": M})


def _check_lengths(L_values: Sequence[float]) -> np.ndarray:
    L = np.asarray(L_values, dtype=float)
    if L.ndim != 1 or L.size < 1 or np.any(L <= 0) or np.any(np.diff(L) >= 0):
        raise InvalidInput("L values must be positive and strictly decreasing")
    return L


def _scaled_seed(seed: WaveField, L: float, min_box: float, max_nodes: int) -> Tuple[WaveField, int]:
    """u_L = L^-1 seed(x/L) on an embedded lattice with box side >= min_box."""
    g = seed.grid
    factor = max(1, math.ceil(min_box / (L * min(g.L1, g.L2))))
    nodes = factor * max(g.n1, g.n2)
    if nodes > max_nodes:
        raise UnresolvedScale(
            f"L={L:g} needs {nodes} nodes per axis, above max_nodes={max_nodes}",
            {"L": L, "nodes": nodes, "max_nodes": max_nodes},
        )
    return dilate(embed(seed, factor), L), factor


def log_spaced_lengths(L_max: float, L_min: float, count: int) -> List[float]:
    return np.geomspace(L_max, L_min, count).tolist()


def _fit_design(L: np.ndarray, terms: FitTerms) -> np.ndarray:
    columns = [L ** -2, np.log(L), np.ones_like(L)]
    if terms == "extended":
        columns += [L ** 2 * np.log(L), L ** 2]
    return np.column_stack(columns)


def collapse_scan(p: PhysicalParams, seed: WaveField, L_values: Sequence[float],
                  min_box: float = 8.0, max_nodes: int = 2048,
                  fit_terms: FitTerms = "leading") -> ScalingScan:
    """Energies of the collapsing family u_L and the fit E ~ c2/L^2 + clog log L + c0.

    The "extended" fit adds d2log L^2 log L + d2 L^2, the first corrections
    of the dipolar term for anisotropic seeds and of a harmonic trap. Without
    them those corrections leak into clog.

    Args:
        p: Physical parameters, trap included
        seed: Field with unit mass and unit kinetic energy
        L_values: Strictly decreasing lengths
        min_box: Smallest box side for the dilated lattice
        max_nodes: Largest node count per axis
        fit_terms: "leading" (3 coefficients) or "extended" (5)

    Returns:
        ScalingScan with per-L energy rows and the least-squares fit

    Raises:
        UnresolvedScale: If some L needs more than max_nodes
    """
    if fit_terms not in FIT_BASES:
        raise InvalidInput(f"unknown fit '{fit_terms}'", {"fit_terms": fit_terms})
    names = FIT_BASES[fit_terms]
    _check_seed(seed)
    L = _check_lengths(L_values)
    if L.size <= len(names):
        raise InvalidInput(f"a {len(names)}-term fit needs at least {len(names) + 1} lengths",
                           {"count": int(L.size), "fit_terms": fit_terms})

    rows = []
    for value in L:
        u_L, factor = _scaled_seed(seed, float(value), min_box, max_nodes)
        E = energy_2d(u_L, p)
        rows.append({"L": float(value), "nodes": u_L.grid.n1, **E.as_dict()})
        logger.debug("L=%.5g on %d nodes: E=%.10g", value, u_L.grid.n1, E.total)

    energies = np.array([r["total"] for r in rows])
    design = _fit_design(L, fit_terms)
    # unit columns; L^-2 and L^2 differ by orders of magnitude
    scale = np.linalg.norm(design, axis=0)
    scaled = design / scale
    coef = np.linalg.lstsq(scaled, energies, rcond=None)[0]
    residuals = energies - scaled @ coef
    coef = coef / scale
    fit_residual = float(np.sqrt(np.mean(residuals ** 2)))
    dof = L.size - len(names)
    sigma2 = float(residuals @ residuals) / dof
    errors = np.sqrt(np.diag(sigma2 * np.linalg.pinv(scaled.T @ scaled))) / scale

    potentials = np.array([r["potential"] for r in rows])
    spread = float(energies.max() - energies.min())
    if spread > 0 and float(potentials.max() - potentials.min()) > 0.01 * spread:
        logger.warning("trap energy varies by more than 1%% of the energy range across the scan window")

    scan = ScalingScan(
        L_values=L.tolist(),
        energies=energies.tolist(),
        fit=tuple(float(c) for c in coef),
        fit_residual=fit_residual,
        fit_errors=tuple(float(e) for e in errors),
        fit_names=names,
        predicted_clog=predicted_log_coefficient(p),
        rows=rows,
    )
    logger.info("collapse scan %s fit: c2=%.6g clog=%.6g (predicted %.6g) c0=%.6g residual=%.3g",
                fit_terms, scan.c2, scan.clog, scan.predicted_clog, scan.c0, scan.fit_residual)
    return scan


def high_frequency_residuals(p: PhysicalParams, seed: WaveField, L_values: Sequence[float],
                             min_box: float = 8.0, max_nodes: int = 2048) -> Tuple[List[float], float]:
    """|L^2 (quartic + dipolar)(u_L) + F_{a,b}[|seed|^2]/2| per L, and its log-log slope."""
    _check_seed(seed)
    L = _check_lengths(L_values)
    ab = effective_params(p)
    residuals = []
    for value in L:
        u_L, factor = _scaled_seed(seed, float(value), min_box, max_nodes)
        E = energy_2d(u_L, p)
        target = 0.5 * fab_energy(density(embed(seed, factor)), ab.a, ab.b)
        residuals.append(abs(value ** 2 * (E.quartic + E.dipolar) + target))
    slope = float(np.polyfit(np.log(L), np.log(residuals), 1)[0]) if L.size > 1 else float("nan")
    logger.info("high-frequency residuals %s, log-log slope %.3f",
                ", ".join(f"{r:.3e}" for r in residuals), slope)
    return residuals, slope
