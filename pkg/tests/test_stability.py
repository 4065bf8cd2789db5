"""Unit tests for stability classification and the collapse scan."""
import pytest
import numpy as np
from fractions import Fraction
from types import SimpleNamespace

import stability
from functionals import EffectiveParams, PhysicalParams, TrapSpec, effective_params
from grid_spectral import WaveField, make_grid, normalize
from stability import (
    VerdictCase, borderline_sign, classify, classify_sweep, collapse_scan,
    high_frequency_residuals, log_spaced_lengths, predicted_log_coefficient, tune_to_borderline,
)

C1 = 0.170927


def fake_constant(a, b, opts=None):
    """Stand-in for the solver: C(a, b) = (a + |b|/2) C1."""
    from errors import ConditionViolated

    if EffectiveParams(a, b).trivial_regime:
        raise ConditionViolated("trivial", {"a": a, "b": b})
    return SimpleNamespace(C=(a + abs(b) / 2) * C1, error=1e-4)


@pytest.fixture
def patched_solver(monkeypatch):
    """Replace the optimal-constant solver with the closed-form stand-in."""
    calls = []

    def _fake(a, b, opts=None):
        calls.append((a, b))
        return fake_constant(a, b, opts)

    monkeypatch.setattr(stability, "compute_gn_constant", _fake)
    return calls


@pytest.fixture
def unit_gaussian():
    """Gaussian seed with unit mass and unit kinetic energy."""
    g = make_grid(32, 32, 12.0, 12.0)
    X1, X2 = g.mesh
    return normalize(WaveField(g, np.exp(-(X1 ** 2 + X2 ** 2) / 2)))


# Test borderline_sign and the log coefficient
def test_borderline_sign():
    """Test the sign of lam (1 - 3 n3^2), exactly at n3^2 = 1/3."""
    assert borderline_sign(PhysicalParams(0.0, 2.0, n3sq_fraction=Fraction(1, 3))) == 0
    assert borderline_sign(PhysicalParams(0.0, 2.0, n3sq=1 / 3)) == 0
    assert borderline_sign(PhysicalParams(0.0, 2.0, n3sq=1.0)) == -1
    assert borderline_sign(PhysicalParams(0.0, 2.0, n3sq=0.0)) == 1
    assert borderline_sign(PhysicalParams(0.0, -2.0, n3sq_fraction=Fraction(0))) == -1
    assert borderline_sign(PhysicalParams(0.0, 0.0, n3sq=0.0)) == 0


def test_predicted_log_coefficient():
    """Test (3/4) lam (1 - 3 n3^2)."""
    assert predicted_log_coefficient(PhysicalParams(0.0, 2.0, n3sq=1.0)) == pytest.approx(-3.0)
    assert predicted_log_coefficient(PhysicalParams(0.0, 2.0, n3sq=0.0)) == pytest.approx(1.5)
    assert predicted_log_coefficient(PhysicalParams(0.0, 2.0, n3sq=1 / 3)) == 0.0


# Test classify
def test_trivial_regime_skips_solver(patched_solver):
    """Test that the trivial regime is decided without computing C."""
    verdict = classify(PhysicalParams.from_n3(10.0, 1.0, 0.0))
    assert verdict.case is VerdictCase.STABLE_TRIVIAL
    assert verdict.C is None
    assert verdict.exit_code == 0
    assert patched_solver == []


GOLDEN = [
    ((10.0, 1.0, 0.0), VerdictCase.STABLE_TRIVIAL),
    ((5.0, 0.0, 1.0), VerdictCase.STABLE_TRIVIAL),
    ((0.0, 0.0, 1.0), VerdictCase.STABLE_TRIVIAL),
    ((3.0, 1.0, 0.5), VerdictCase.STABLE_TRIVIAL),
    ((0.0, 0.5 / C1, 1.0), VerdictCase.STABLE_SUBCRITICAL),
    ((1.0, 1.0 + 0.8 / C1, 1.0), VerdictCase.STABLE_SUBCRITICAL),
    ((-0.8 / C1, 0.0, 1.0), VerdictCase.STABLE_SUBCRITICAL),
    ((2.0, 2.0 + 0.95 / C1, 1.0), VerdictCase.STABLE_SUBCRITICAL),
    ((0.0, 1.2 / C1, 1.0), VerdictCase.UNSTABLE),
    ((-3.0 / C1, 0.0, 1.0), VerdictCase.UNSTABLE),
    ((0.0, 10.0, 1.0), VerdictCase.UNSTABLE),
    ((1.0, 1.0 + 1.05 / C1, 1.0), VerdictCase.UNSTABLE),
]


@pytest.mark.parametrize("point, expected", GOLDEN)
def test_classify_golden_table(patched_solver, point, expected):
    """Test the verdict on a table of parameter points."""
    beta, lam, n3sq = point
    verdict = classify(PhysicalParams(beta, lam, n3sq=n3sq), tol=1e-2)
    assert verdict.case is expected
    assert verdict.as_dict()["case"] == expected.value


def test_classify_unstable_with_solver():
    """Test the supercritical perpendicular point with the real optimal constant."""
    from gn_solver import SolverOptions
    from oracles.townes import gn_constant_oracle

    opts = SolverOptions(scenes=((64, 16.0),), max_nodes=64, tol_grad=1e-5)
    verdict = classify(PhysicalParams(0.0, 1.2 / C1, n3sq=1.0), tol=1e-2, opts=opts)
    assert verdict.case is VerdictCase.UNSTABLE
    assert verdict.exit_code == 0
    assert verdict.C == pytest.approx(1.2 * gn_constant_oracle() / C1, rel=1e-2)


def test_classify_indeterminate(patched_solver):
    """Test that |C - 1| within the error bar is Indeterminate by default."""
    p = PhysicalParams(0.0, 1.005 / C1, n3sq=1.0)
    verdict = classify(p, tol=1e-2)
    assert verdict.case is VerdictCase.INDETERMINATE
    assert verdict.exit_code == 3
    assert verdict.C == pytest.approx(1.005)
    assert verdict.borderline_sign == -1


def test_classify_borderline_analysis(patched_solver):
    """Test that borderline analysis resolves |C - 1| <= error with the sign rule."""
    p = PhysicalParams(0.0, 1.005 / C1, n3sq=1.0)
    assert classify(p, 1e-2, analyze_borderline=True).case is VerdictCase.BORDERLINE_STABLE
    # a tighter tolerance separates C = 1.005 from 1
    assert classify(p, 1e-3, analyze_borderline=True).case is VerdictCase.UNSTABLE


@pytest.mark.parametrize("n3sq, lam, expected", [
    (Fraction(1), 1.0, VerdictCase.BORDERLINE_STABLE),
    (Fraction(1, 3), 1.0, VerdictCase.BORDERLINE_MARGINAL),
    (Fraction(0), 1.0, VerdictCase.BORDERLINE_UNSTABLE),
])
def test_classify_exact_borderline(patched_solver, n3sq, lam, expected):
    """Test the trichotomy when C(a,b) = 1 is asserted."""
    p = PhysicalParams(0.0, lam, n3sq_fraction=n3sq, exact_borderline=True)
    verdict = classify(p)
    assert verdict.case is expected
    assert verdict.C == 1.0
    assert patched_solver == []


def test_classify_solver_failure(monkeypatch):
    """Test that solver errors become Indeterminate verdicts."""
    from errors import NonConvergence

    def failing(a, b, opts=None):
        raise NonConvergence("stuck", {})

    monkeypatch.setattr(stability, "compute_gn_constant", failing)
    verdict = classify(PhysicalParams(0.0, 10.0, n3sq=1.0))
    assert verdict.case is VerdictCase.INDETERMINATE
    assert "NonConvergence" in verdict.notes


def test_classify_rejects_tolerance():
    """Test that the tolerance must be positive."""
    from errors import InvalidInput

    with pytest.raises(InvalidInput):
        classify(PhysicalParams(0.0, 1.0), tol=0.0)


def test_classify_sweep(patched_solver):
    """Test classification of several points in order."""
    points = [PhysicalParams(beta, lam, n3sq=n3sq) for (beta, lam, n3sq), _ in GOLDEN]
    verdicts = classify_sweep(points, tol=1e-2)
    assert [v.case for v in verdicts] == [case for _, case in GOLDEN]


# Test tune_to_borderline
def test_tune_bracket_failure(patched_solver):
    """Test that no beta >= 0 reaches C = 1 without dipoles."""
    from errors import BracketFailure

    with pytest.raises(BracketFailure) as info:
        tune_to_borderline(0.0, 1.0)
    assert info.value.details["C_at_beta0"] == 0.0


def test_tune_closed_form(patched_solver):
    """Test beta* = lam - 1/C(1, 0) for perpendicular dipoles."""
    tuned = tune_to_borderline(20.0, Fraction(1))
    assert tuned.beta == pytest.approx(20.0 - 1 / C1, rel=1e-12)
    assert tuned.exact_borderline
    assert tuned.n3sq_fraction == Fraction(1)
    assert classify(tuned).case is VerdictCase.BORDERLINE_STABLE


def test_tune_by_bisection(patched_solver):
    """Test the bracketed root search for in-plane components."""
    for n3sq in (0.0, Fraction(1, 3), 0.6):
        tuned = tune_to_borderline(20.0, n3sq, TrapSpec(kind="quartic", c=2.0))
        ab = effective_params(tuned)
        assert fake_constant(ab.a, ab.b).C == pytest.approx(1.0, abs=1e-8)
        assert tuned.beta >= 0
        assert tuned.trap.kind == "quartic"
    assert tuned.lam == 20.0


def test_tune_monotone_in_lambda(patched_solver):
    """Test that the borderline beta grows with lam."""
    betas = [tune_to_borderline(lam, 0.5).beta for lam in (10.0, 20.0, 40.0)]
    assert betas[0] < betas[1] < betas[2]


@pytest.mark.parametrize("error_name, cause", [("NonConvergence", "NonConvergence"), ("NoPositiveF", None)])
def test_tune_solver_errors(monkeypatch, error_name, cause):
    """Test that solver failures end the borderline search with BracketFailure."""
    import errors
    from errors import BracketFailure

    def failing(a, b, opts=None):
        raise getattr(errors, error_name)("failed", {"a": a, "b": b})

    monkeypatch.setattr(stability, "compute_gn_constant", failing)
    with pytest.raises(BracketFailure) as info:
        tune_to_borderline(20.0, 0.5)
    if cause is None:
        # no positive F counts as C = 0
        assert info.value.details["C_at_beta0"] == 0.0
    else:
        assert info.value.details["cause"] == cause
        assert isinstance(info.value.__cause__, errors.NonConvergence)


# Test collapse_scan
def test_collapse_scan_rejects_bad_input(unit_gaussian):
    """Test seed normalization and length checks."""
    from errors import InvalidInput

    p = PhysicalParams(0.0, 1.0)
    wide = unit_gaussian.with_values(2 * unit_gaussian.values)
    with pytest.raises(InvalidInput):
        collapse_scan(p, wide, [0.4, 0.3, 0.2, 0.1])
    with pytest.raises(InvalidInput):
        collapse_scan(p, unit_gaussian, [0.1, 0.2, 0.3, 0.4])
    with pytest.raises(InvalidInput):
        collapse_scan(p, unit_gaussian, [0.4, 0.2, 0.1])
    with pytest.raises(InvalidInput):
        collapse_scan(p, unit_gaussian, [0.4, 0.2, -0.1, -0.2])
    with pytest.raises(InvalidInput):
        collapse_scan(p, unit_gaussian, log_spaced_lengths(0.4, 0.04, 5), fit_terms="extended")
    with pytest.raises(InvalidInput):
        collapse_scan(p, unit_gaussian, log_spaced_lengths(0.4, 0.04, 6), fit_terms="cubic")


def test_collapse_scan_unresolved_scale(unit_gaussian):
    """Test that a length needing too many nodes is refused."""
    from errors import UnresolvedScale

    with pytest.raises(UnresolvedScale) as info:
        collapse_scan(PhysicalParams(0.0, 1.0), unit_gaussian, [0.4, 0.2, 0.1, 0.01], max_nodes=256)
    assert info.value.details["L"] == 0.01


def test_log_spaced_lengths():
    """Test the default scan window."""
    L = log_spaced_lengths(0.4, 0.04, 6)
    assert L[0] == pytest.approx(0.4)
    assert L[-1] == pytest.approx(0.04)
    assert np.all(np.diff(L) < 0)


def test_collapse_scan_fit_on_gaussian(unit_gaussian):
    """Test c2 = (1 - F/T M)/2 and clog = (3/4) lam (1 - 3 n3^2) on a Gaussian seed."""
    p = PhysicalParams(0.0, 1.0, n3sq=1.0)
    scan = collapse_scan(p, unit_gaussian, log_spaced_lengths(0.2, 0.02, 6))

    assert scan.c2 == pytest.approx(0.5 - 1 / (4 * np.pi), rel=1e-2)
    assert scan.clog == pytest.approx(-1.5, abs=0.15)
    assert scan.predicted_clog == pytest.approx(-1.5)
    assert len(scan.rows) == 6
    assert [r["nodes"] for r in scan.rows] == sorted(r["nodes"] for r in scan.rows)
    assert scan.fit_residual < 1e-2 * abs(scan.energies[0])


def test_collapse_scan_extended_fit(unit_gaussian):
    """Test the five-term fit on an isotropic seed, where the corrections are small."""
    p = PhysicalParams(0.0, 1.0, n3sq=1.0)
    scan = collapse_scan(p, unit_gaussian, log_spaced_lengths(0.2, 0.02, 7), fit_terms="extended")

    assert scan.fit_names == ("c2", "clog", "c0", "d2log", "d2")
    assert len(scan.fit) == len(scan.fit_errors) == 5
    assert scan.c2 == pytest.approx(0.5 - 1 / (4 * np.pi), rel=1e-2)
    assert scan.clog == pytest.approx(-1.5, abs=0.15)


def test_high_frequency_residuals_decay(unit_gaussian):
    """Test that L^2 (quartic + dipolar)(u_L) approaches -F_{a,b}/2."""
    p = PhysicalParams(0.5, 1.0, n3sq=1.0)
    residuals, slope = high_frequency_residuals(p, unit_gaussian, [0.5, 0.25, 0.125])
    assert residuals[0] > residuals[1] > residuals[2]
    assert slope >= 0.8


@pytest.mark.slow
@pytest.mark.parametrize("n3sq, sign", [(Fraction(1), -1), (Fraction(1, 3), 0), (Fraction(0), 1)])
def test_borderline_log_sign(n3sq, sign):
    """Test that at C(a,b) = 1 the fitted log coefficient has the sign of lam (1 - 3 n3^2)."""
    from gn_solver import SolverOptions, compute_gn_constant

    opts = SolverOptions(scenes=((64, 16.0),), max_nodes=64, tol_grad=1e-5)
    lam = 20.0
    tuned = tune_to_borderline(lam, n3sq, opts=opts)
    ab = effective_params(tuned)
    seed = compute_gn_constant(ab.a, ab.b, opts).optimizer
    scan = collapse_scan(tuned, seed, log_spaced_lengths(0.1, 0.01, 8), min_box=4.0,
                         max_nodes=2048, fit_terms="extended")

    assert abs(scan.c2) < 0.05
    if sign == 0:
        # L^4 log L and higher corrections are not fitted; they bound how small clog gets
        assert abs(scan.clog) < 0.05 * 0.75 * lam
    else:
        assert np.sign(scan.clog) == sign
        assert abs(scan.clog) > 0.5 * abs(scan.predicted_clog)


@pytest.mark.slow
@pytest.mark.parametrize("scene", [(64, 16.0), (128, 24.0)])
def test_supercritical_collapse_scan(scene):
    """Test c2 = (1 - C)/2 < 0 past C(a,b) = 1 on seeds from two resolutions."""
    from gn_solver import SolverOptions, compute_gn_constant

    opts = SolverOptions(scenes=(scene,), max_nodes=scene[0], tol_grad=1e-5)
    p = PhysicalParams(0.0, 1.2 / C1, n3sq=1.0)
    ab = effective_params(p)
    result = compute_gn_constant(ab.a, ab.b, opts)
    scan = collapse_scan(p, result.optimizer, log_spaced_lengths(0.4, 0.04, 6))

    assert result.C > 1
    assert scan.c2 < 0
    assert scan.c2 == pytest.approx(0.5 * (1 - result.C), abs=5e-3)
    assert scan.c2 == pytest.approx(-0.1, abs=0.02)
    # E -> -infinity as L -> 0
    assert scan.energies[-1] < scan.energies[0]
