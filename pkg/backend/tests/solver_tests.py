import pytest
from unittest.mock import patch
import os
import sys

import numpy as np

# Add path to parent directory
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from errors import NoConvergence, PositivityBreach
from numerics.solver import (
    NewtonOptions,
    StateVector,
    constant_state_vector,
    jacobian,
    linearized_spectrum,
    newton_solve,
    parameter_sensitivity,
    residual,
    residual_norm,
)
from pipeline.multistart import multistart_solve, random_positive_state
from spectral.spectral_sphere import build_grid, sphere_spectrum
from system.families import theorem5_case
from system.system_algebra import SystemParams, constant_solution

GRID = build_grid(2, 16, 4.0)
FAMILY = theorem5_case("EqLambda", 2.0, 4.0, lam=3.0, spectrum=sphere_spectrum(2, 15))


def perturbed_state(p, amplitude=0.05, mode=2):
    u1, u2 = constant_solution(p)
    x = constant_state_vector(GRID, u1, u2).as_vector()
    x[mode] += amplitude
    x[GRID.N + mode + 1] -= 0.5 * amplitude
    return StateVector.from_vector(x, GRID)


# --- Residual Tests ---
def test_constant_solution_has_zero_residual():
    p = FAMILY.eval(0.0)
    u1, u2 = constant_solution(p)
    state = constant_state_vector(GRID, u1, u2)
    assert residual_norm(residual(state, p)) < 1e-13


def test_residual_requires_positive_state():
    p = FAMILY.eval(0.0)
    state = constant_state_vector(GRID, -0.5, 0.5)
    with pytest.raises(PositivityBreach):
        residual(state, p)


def test_state_vector_round_trip_and_swap():
    state = perturbed_state(FAMILY.eval(0.0))
    again = StateVector.from_vector(state.as_vector(), GRID)
    assert np.array_equal(again.u1.coeffs, state.u1.coeffs)
    assert np.array_equal(state.swapped().u1.coeffs, state.u2.coeffs)


def test_state_vector_rejects_mixed_grids():
    other = build_grid(2, 12, 4.0)
    with pytest.raises(ValueError):
        StateVector(u1=constant_state_vector(GRID, 1.0, 1.0).u1, u2=constant_state_vector(other, 1.0, 1.0).u2)


# --- Jacobian Tests ---
def test_jacobian_matches_finite_differences():
    p = FAMILY.eval(0.1)
    state = perturbed_state(p)
    x = state.as_vector()
    J = jacobian(state, p)
    rng = np.random.default_rng(3)
    direction = rng.normal(size=x.size)
    h = 1e-6
    plus = residual(StateVector.from_vector(x + h * direction, GRID), p).as_vector()
    minus = residual(StateVector.from_vector(x - h * direction, GRID), p).as_vector()
    assert np.allclose((plus - minus) / (2 * h), J @ direction, atol=1e-6)


def test_parameter_sensitivity_is_exact():
    p = FAMILY.eval(0.0)
    state = perturbed_state(p)
    dp = {"a11": 1.0, "lambda2": 0.5}
    shifted = p.model_copy(update={"a11": p.a11 + 1e-3, "lambda2": p.lambda2 + 0.5e-3})
    difference = (residual(state, shifted).as_vector() - residual(state, p).as_vector()) / 1e-3
    assert np.allclose(parameter_sensitivity(state, dp, p.q), difference, atol=1e-9)


def test_linearized_spectrum_at_constant_solution():
    # modes j carry lambda_j - (q-2) beta with beta in {1.5, 1}: 0, -1, -2, then +-3
    p = FAMILY.eval(0.0)
    u1, u2 = constant_solution(p)
    values = linearized_spectrum(constant_state_vector(GRID, u1, u2), p, 3)
    assert np.isrealobj(values)
    assert np.allclose(values, [0.0, -1.0, -2.0], atol=1e-9)


def test_linearized_spectrum_rejects_bad_count():
    p = FAMILY.eval(0.0)
    with pytest.raises(ValueError):
        linearized_spectrum(perturbed_state(p), p, 0)


# --- Newton Tests ---
def test_newton_converges_from_perturbed_constant():
    p = FAMILY.eval(0.1)
    result = newton_solve(perturbed_state(p, amplitude=0.02), p)
    assert residual_norm(residual(result, p)) <= 1e-11
    assert min(values.min() for values in result.nodal()) > 0.0


def test_newton_rejects_nonpositive_start():
    p = FAMILY.eval(0.1)
    with pytest.raises(NoConvergence):
        newton_solve(constant_state_vector(GRID, -1.0, 1.0), p)


def test_newton_reports_iteration_cap():
    p = FAMILY.eval(0.1)
    with pytest.raises(NoConvergence) as excinfo:
        newton_solve(perturbed_state(p, amplitude=0.2), p, NewtonOptions(max_iter=1))
    assert excinfo.value.iterations == 1


def test_newton_reports_singular_jacobian():
    p = FAMILY.eval(0.1)
    with patch("numerics.solver.scipy.linalg.solve", side_effect=np.linalg.LinAlgError("singular")):
        with pytest.raises(NoConvergence, match="singular"):
            newton_solve(perturbed_state(p), p)


# --- Multistart Tests ---
def test_random_guesses_are_positive():
    rng = np.random.default_rng(11)
    for _ in range(20):
        state = random_positive_state(GRID, rng, 2.0)
        assert all(values.min() > 0.0 for values in state.nodal())


def test_multistart_finds_nothing_without_positive_solutions():
    p = SystemParams(lambda1=3.0, lambda2=3.0, a11=2.0, a12=2.0, a21=1.0, a22=1.0, q=4.0)
    grid = build_grid(2, 12, 4.0)
    results = multistart_solve(p, grid, 6, seed=5, opts=NewtonOptions(max_iter=30))
    assert len(results) == 6
    assert all(result is None for result in results)


@patch("pipeline.multistart.get_thread_cap", return_value=3)
def test_multistart_is_deterministic_across_threads(mock_cap):
    p = FAMILY.eval(0.1)
    grid = build_grid(2, 12, 4.0)
    threaded = multistart_solve(p, grid, 4, seed=9, scale=0.6)
    mock_cap.return_value = 1
    serial = multistart_solve(p, grid, 4, seed=9, scale=0.6)
    for a, b in zip(threaded, serial):
        assert (a is None) == (b is None)
        if a is not None:
            assert np.array_equal(a.as_vector(), b.as_vector())
