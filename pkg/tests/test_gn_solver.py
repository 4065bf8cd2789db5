"""Unit tests for the optimal-constant solver."""
import pytest
import numpy as np

from grid_spectral import WaveField, dilate, kinetic, make_grid, mass, normalize, translate
from gn_solver import (
    SolverOptions, compute_gn_constant, initial_fields, maximize_quotient, quotient,
    verify_inequality,
)

FAST = SolverOptions(scenes=((64, 16.0),), max_nodes=64, tol_grad=1e-5)


def gaussian(grid, widths=(1.0, 1.0)):
    X1, X2 = grid.mesh
    values = np.exp(-X1 ** 2 / (2 * widths[0] ** 2) - X2 ** 2 / (2 * widths[1] ** 2))
    return normalize(WaveField(grid, values))


def random_field(grid, rng):
    X1, X2 = grid.mesh
    envelope = np.exp(-(X1 ** 2 + X2 ** 2) / 3)
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    smooth = np.fft.ifft2(np.exp(-grid.xi_sq / 2) * np.fft.fft2(noise))
    smooth /= np.max(np.abs(smooth))
    return normalize(WaveField(grid, envelope * (1 + smooth)))


def test_solver_options_validation():
    """Test that bad solver options are rejected."""
    from errors import InvalidInput

    with pytest.raises(InvalidInput):
        SolverOptions(tol_rel=0.0)
    with pytest.raises(InvalidInput):
        SolverOptions(max_iter=0)
    with pytest.raises(InvalidInput):
        SolverOptions(scenes=())
    with pytest.raises(InvalidInput):
        SolverOptions(step0=0.0)


def test_quotient_invariances():
    """Test that R is invariant under scaling, phase, translation and dilation."""
    g = make_grid(64, 64, 16.0, 16.0)
    u = random_field(g, np.random.default_rng(0))
    R = quotient(u, 1.0, 0.6)
    assert quotient(u.with_values(3.0 * np.exp(1j) * u.values), 1.0, 0.6) == pytest.approx(R, rel=1e-12)
    assert quotient(translate(u, (0.75, -1.25)), 1.0, 0.6) == pytest.approx(R, rel=1e-10)
    assert quotient(dilate(u, 0.3), 1.0, 0.6) == pytest.approx(R, rel=1e-12)


def test_quotient_of_gaussian():
    """Test R = 1/(2 pi) for the isotropic Gaussian and the (a, 0) weight."""
    g = make_grid(64, 64, 16.0, 16.0)
    assert quotient(gaussian(g), 1.0, 0.0) == pytest.approx(1 / (2 * np.pi), rel=1e-10)
    assert quotient(gaussian(g), 3.0, 0.0) == pytest.approx(3 / (2 * np.pi), rel=1e-10)


def test_quotient_undefined_for_constant():
    """Test that R refuses a constant field."""
    from errors import InvalidInput

    g = make_grid(16, 16, 8.0, 8.0)
    with pytest.raises(InvalidInput):
        quotient(WaveField(g, np.ones(g.shape)), 1.0, 0.0)


def test_verify_inequality_gaussian():
    """Test C T M - F on the unit Gaussian with C close to C_GN."""
    g = make_grid(64, 64, 16.0, 16.0)
    margin = verify_inequality(gaussian(g), 1.0, 0.0, 0.17097)
    assert margin == pytest.approx(0.17097 - 1 / (2 * np.pi), abs=1e-8)
    assert margin == pytest.approx(0.0118, abs=1e-4)


def test_condition_violated():
    """Test that C(a,b) is refused when a + b/2 <= 0 and a - b/2 <= 0."""
    from errors import ConditionViolated, InvalidInput

    with pytest.raises(ConditionViolated) as info:
        compute_gn_constant(-1.0, 1.0, FAST)
    assert info.value.details["a_plus"] == -0.5
    with pytest.raises(ConditionViolated):
        compute_gn_constant(0.0, 0.0, FAST)
    with pytest.raises(InvalidInput):
        compute_gn_constant(float("inf"), 0.0, FAST)


def test_initial_fields():
    """Test the three starting fields."""
    g = make_grid(64, 64, 16.0, 16.0)
    fields = initial_fields(g, seed=1)
    assert [label for label, _ in fields] == ["isotropic", "elongated_x1", "elongated_x2"]
    for _, u in fields:
        assert mass(u) == pytest.approx(1.0, rel=1e-12)
        assert kinetic(u) == pytest.approx(1.0, rel=1e-2)
    again = initial_fields(g, seed=1)
    np.testing.assert_array_equal(fields[1][1].values, again[1][1].values)


def test_ascent_is_monotone():
    """Test that accepted steps never decrease R, except at dilation resets."""
    g = make_grid(64, 64, 16.0, 16.0)
    opts = SolverOptions(max_iter=150)
    run = maximize_quotient(gaussian(g, (1.4, 0.8)), 1.0, 0.5, opts, "test")
    history = np.array(run.history)
    drops = [i for i in range(1, len(history))
             if history[i] < history[i - 1] - 1e-12 and i not in run.rescaled_at]
    assert drops == []
    assert run.R >= history[0]
    assert run.R == max(history)


def test_non_convergence_reported():
    """Test that an exhausted iteration budget raises NonConvergence."""
    from errors import NonConvergence

    opts = SolverOptions(scenes=((32, 12.0),), max_nodes=32, max_iter=1)
    with pytest.raises(NonConvergence) as info:
        compute_gn_constant(1.0, 0.3, opts)
    assert info.value.exit_code == 5


def test_stalled_line_search_is_not_convergence():
    """Test that a line search with no admissible step reports converged only at a small gradient."""
    from errors import NonConvergence

    g = make_grid(64, 64, 16.0, 16.0)
    opts = SolverOptions(step0=1e-13)
    run = maximize_quotient(gaussian(g), 1.0, 0.0, opts, "test")
    assert run.iterations == 1
    assert run.grad_norm > opts.tol_grad
    assert not run.converged

    stalled = SolverOptions(scenes=((32, 12.0),), max_nodes=32, step0=1e-13)
    with pytest.raises(NonConvergence):
        compute_gn_constant(1.0, 0.2, stalled)


def test_mixed_sign_weights_converge():
    """Test C(a, b) with a + b/2 > 0 > a - b/2."""
    from oracles.townes import gn_constant_oracle

    a, b = -0.25, 1.5
    result = compute_gn_constant(a, b, FAST)
    assert any(r.converged for r in result.runs)
    # F_{a,b} <= (a + b/2) int rho^2
    assert 0 < result.C <= (a + b / 2) * gn_constant_oracle() * (1 + 1e-2)
    X1, X2 = result.optimizer.grid.mesh
    rho = np.abs(result.optimizer.values) ** 2
    assert np.sum(X1 ** 2 * rho) < np.sum(X2 ** 2 * rho)

    g = make_grid(64, 64, 16.0, 16.0)
    rng = np.random.default_rng(7)
    for _ in range(10):
        assert verify_inequality(random_field(g, rng), a, b, result.C) >= -1e-9


def test_ascent_keeps_width_without_resampling():
    """Test that the ascent holds T/M in place, so no interpolation reset is needed."""
    g = make_grid(64, 64, 16.0, 16.0)
    run = maximize_quotient(gaussian(g, (1.2, 0.9)), -0.25, 1.5, SolverOptions(max_iter=300), "test")
    assert run.rescaled_at == []
    assert np.all(np.diff(run.history) >= -1e-10)
    assert 0.25 < kinetic(run.u) < 4.0


def test_gn_constant_matches_townes():
    """Test C(1, 0) against the shooting oracle 2/||Q||^2."""
    from oracles.townes import gn_constant_oracle

    result = compute_gn_constant(1.0, 0.0, FAST)
    assert result.C == pytest.approx(gn_constant_oracle(), rel=1e-2)
    assert result.grid_study[0][:2] == (64, 16.0)
    assert result.summary()["C"] == result.C


def test_gn_optimizer_normalized():
    """Test that the optimizer has unit mass and kinetic energy and saturates the inequality."""
    result = compute_gn_constant(1.0, 0.0, FAST)
    u = result.optimizer
    assert mass(u) == pytest.approx(1.0, rel=1e-10)
    assert kinetic(u) == pytest.approx(1.0, rel=1e-10)
    assert verify_inequality(u, 1.0, 0.0, result.C) == pytest.approx(0.0, abs=1e-10)
    assert result.residual < 1e-3


def test_gn_constant_homogeneity():
    """Test that scaled weights reuse the normalized solve: C(t a, t b) = t C(a, b)."""
    base = compute_gn_constant(1.0, 0.0, FAST)
    assert compute_gn_constant(2.0, 0.0, FAST).C == pytest.approx(2 * base.C, rel=1e-14)
    assert compute_gn_constant(0.5, 0.0, FAST).C == pytest.approx(0.5 * base.C, rel=1e-14)


@pytest.mark.slow
def test_homogeneity_independent_ascents():
    """Test C(2, 0) = 2 C(1, 0) from two separate refinement runs."""
    from gn_solver import _maximize

    double = _maximize(2.0, 0.0, FAST)
    single = _maximize(1.0, 0.0, FAST)
    assert double is not single
    assert double.C / single.C == pytest.approx(2.0, rel=1e-4)


def test_gn_constant_reflection():
    """Test that flipping the sign of b swaps the optimizer's axes."""
    plus = compute_gn_constant(1.0, 1.0, FAST)
    minus = compute_gn_constant(1.0, -1.0, FAST)
    assert minus.C == plus.C
    np.testing.assert_array_equal(minus.optimizer.values, plus.optimizer.values.T)


def test_random_fields_satisfy_inequality():
    """Test C T M - F >= 0 on random fields with the computed constant."""
    result = compute_gn_constant(1.0, 1.0, FAST)
    g = make_grid(64, 64, 16.0, 16.0)
    rng = np.random.default_rng(42)
    for _ in range(20):
        assert verify_inequality(random_field(g, rng), 1.0, 1.0, result.C) >= -1e-9


@pytest.mark.slow
def test_gn_constant_anisotropic_bounds():
    """Test C_GN <= C(1, 1) <= 1.5 C_GN and the optimizer's orientation."""
    from oracles.townes import gn_constant_oracle

    result = compute_gn_constant(1.0, 1.0, FAST)
    c_gn = gn_constant_oracle()
    assert c_gn * (1 - 1e-2) <= result.C <= 1.5 * c_gn * (1 + 1e-2)
    X1, X2 = result.optimizer.grid.mesh
    rho = np.abs(result.optimizer.values) ** 2
    # weight on xi1 is larger, so the optimizer is narrow along x1
    assert np.sum(X1 ** 2 * rho) < np.sum(X2 ** 2 * rho)


@pytest.mark.slow
def test_gn_constant_monotone_in_a():
    """Test that C(a, 1) increases with a."""
    values = [compute_gn_constant(a, 1.0, FAST).C for a in (0.5, 1.0, 1.5)]
    assert values[0] < values[1] < values[2]


@pytest.mark.slow
def test_sign_of_b_independent_ascents():
    """Test C(1, 1) = C(1, -1) from independent ascents."""
    g = make_grid(64, 64, 16.0, 16.0)
    best = {}
    for b in (1.0, -1.0):
        runs = [maximize_quotient(u0, 1.0, b, FAST, label) for label, u0 in initial_fields(g, 0)]
        best[b] = max(r.R for r in runs)
    assert best[1.0] == pytest.approx(best[-1.0], rel=1e-4)


@pytest.mark.slow
def test_grid_refinement_study():
    """Test that refinement records each grid and a small error bar."""
    opts = SolverOptions(scenes=((64, 16.0),), max_nodes=128, tol_grad=1e-5)
    result = compute_gn_constant(1.0, 0.0, opts)
    assert [s[:2] for s in result.grid_study] == [(64, 16.0), (128, 24.0)]
    assert result.error < 1e-3 * result.C
