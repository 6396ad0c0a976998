import math
import logging
import pytest
import os
import sys

import numpy as np

# Add path to parent directory
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from errors import DegenerateSpectrum, DomainViolation, NonpositiveRadicand, PositivityBreach, SingularCoupling
from pipeline.config import build_family, nest_keys, parse_run_config
from spectral.quadrature import gauss_nodes, weight_mass
from spectral.spectral_sphere import (
    analyze,
    basis_field,
    build_grid,
    eigenvalue,
    jacobi_kernel,
    laplacian_apply,
    reflect,
    resample,
    sphere_spectrum,
    spectrum_up_to,
    synthesize,
)
from system.families import (
    THEOREM5_CASES,
    check_conditions,
    family_discriminant,
    labelled_betas,
    linear_family,
    resonant_branch,
    resonant_symmetric_family,
    sphere_symmetric_family,
    theorem5_case,
)
from system.system_algebra import (
    SystemParams,
    Verdict,
    bvv_sphere_check,
    classify_regime,
    constant_solution,
    constant_state,
    coupled_nonlinearity,
    critical_exponent,
    reduced_nonlinearity,
    synchronization_ratio,
)

SPECTRUM_S2 = sphere_spectrum(2, 15)


def params(lambda1, lambda2, a11, a12, a21, a22, q=4.0):
    return SystemParams(lambda1=lambda1, lambda2=lambda2, a11=a11, a12=a12, a21=a21, a22=a22, q=q)


def eq_lambda_family():
    return theorem5_case("EqLambda", 2.0, 4.0, lam=3.0, spectrum=SPECTRUM_S2)


# --- Spectral Sphere Tests ---
def test_eigenvalues_on_s2_and_s3():
    assert [eigenvalue(2, j) for j in range(4)] == [0, 2, 6, 12]
    assert [eigenvalue(3, j) for j in range(4)] == [0, 3, 8, 15]


def test_eigenvalue_rejects_low_dimension():
    with pytest.raises(ValueError):
        eigenvalue(1, 2)


def test_spectrum_up_to_includes_first_value_above_bound():
    spectrum = spectrum_up_to(2, 6.0)
    assert [ev for ev, _ in spectrum] == [0.0, 2.0, 6.0, 12.0]
    assert all(m == 1 for _, m in spectrum)


def test_gauss_weights_integrate_the_radial_measure():
    _, w2 = gauss_nodes(2, 8)
    _, w3 = gauss_nodes(3, 10)
    assert np.sum(w2) == pytest.approx(2.0, rel=1e-13)
    assert np.sum(w3) == pytest.approx(math.pi / 2.0, rel=1e-13)
    assert weight_mass(3) == pytest.approx(math.pi / 2.0, rel=1e-13)


def test_gauss_rule_is_exact_for_polynomials():
    nodes, weights = gauss_nodes(2, 6)
    # integral of t^10 over [-1, 1]
    assert np.sum(weights * nodes**10) == pytest.approx(2.0 / 11.0, rel=1e-12)


def test_basis_is_orthonormal_on_the_grid():
    grid = build_grid(3, 12, 4.0)
    gram = (grid.basis_values * grid.weights) @ grid.basis_values.T
    assert np.allclose(gram, np.eye(12), atol=1e-12)


def test_basis_matches_binomial_reference_up_to_scale():
    grid = build_grid(2, 10, 4.0)
    for j in (1, 2, 5):
        reference = jacobi_kernel(2, j, grid.nodes)
        ratio = grid.basis_values[j] / reference
        assert np.allclose(ratio, ratio[0], rtol=1e-9)
        assert ratio[0] > 0.0


def test_jacobi_kernel_on_s2_is_legendre():
    assert jacobi_kernel(2, 2, 0.5) == pytest.approx((3 * 0.25 - 1) / 2.0, abs=1e-14)


def test_analyze_inverts_synthesize():
    grid = build_grid(2, 12, 4.0)
    values = synthesize(basis_field(grid, 3))
    field = analyze(values, grid)
    expected = np.zeros(12)
    expected[3] = 1.0
    assert np.allclose(field.coeffs, expected, atol=1e-13)


def test_reflection_flips_odd_modes():
    grid = build_grid(2, 12, 4.0)
    field = basis_field(grid, 3)
    assert np.allclose(synthesize(reflect(field)), synthesize(field)[::-1], atol=1e-12)


def test_resample_pads_coefficients():
    coarse = build_grid(2, 8, 4.0)
    fine = build_grid(2, 16, 4.0)
    moved = resample(basis_field(coarse, 2), fine)
    assert moved.coeffs.shape == (16,)
    assert moved.coeffs[2] == 1.0 and np.count_nonzero(moved.coeffs) == 1


@pytest.mark.parametrize("n", [2, 3, 4])
def test_dirichlet_form_is_diagonal_in_the_basis(n):
    # integral of (1-t^2) phi_i' phi_j' against the radial measure equals lambda_i delta_ij
    grid = build_grid(n, 32, 4.0)
    D = grid.basis_derivatives
    stiffness = (D * grid.weights * (1.0 - grid.nodes**2)) @ D.T
    expected = np.diag([eigenvalue(n, j) for j in range(11)])
    assert np.allclose(stiffness[:11, :11], expected, rtol=1e-10, atol=1e-9)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_laplacian_of_cubic_matches_closed_form(n):
    # -(1-t^2) f'' + n t f' for f = t^3
    grid = build_grid(n, 12, 4.0)
    t = grid.nodes
    values = synthesize(laplacian_apply(analyze(t**3, grid)))
    assert np.allclose(values, (6.0 + 3.0 * n) * t**3 - 6.0 * t, atol=1e-11)


def test_build_grid_rejects_too_few_modes():
    with pytest.raises(ValueError):
        build_grid(2, 3, 4.0)


# --- System Algebra Tests ---
def test_constant_solution_for_eq_lambda_parameters():
    p = eq_lambda_family().eval(0.0)
    u1, u2 = constant_solution(p)
    assert u1 == pytest.approx(3.0**-0.5, rel=1e-14)
    assert u2 == pytest.approx(3.0**-0.5, rel=1e-14)


def test_linearization_eigenvalues_and_diagonalizer():
    state = constant_state(eq_lambda_family().eval(0.0))
    assert state.beta1 == pytest.approx(1.5, rel=1e-13)
    assert state.beta2 == pytest.approx(1.0, rel=1e-13)
    assert np.allclose(state.P, [[1.0, 1.0], [1.0, -1.0]])
    assert np.allclose(state.Pinv @ np.diag([state.beta1, state.beta2]) @ state.P, state.A, atol=1e-13)


def test_nonsymmetric_diagonalizer_reproduces_A():
    state = constant_state(params(1.0, 2.0, 1.0, 0.5, 0.3, 2.0))
    assert state.beta1 > state.beta2
    assert np.allclose(state.Pinv @ np.diag([state.beta1, state.beta2]) @ state.P, state.A, atol=1e-12)


def test_singular_coupling_is_reported():
    with pytest.raises(SingularCoupling):
        constant_solution(params(3.0, 3.0, 2.0, 2.0, 1.0, 1.0))


def test_nonpositive_radicand_is_reported():
    with pytest.raises(NonpositiveRadicand):
        constant_solution(params(1.0, 3.0, 1.0, 2.0, 0.1, 1.0))


def test_exponent_must_exceed_two():
    with pytest.raises(ValueError):
        params(1.0, 1.0, 1.0, 0.5, 0.5, 1.0, q=2.0)


def test_swapped_relabels_components():
    p = params(1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    s = p.swapped()
    assert (s.lambda1, s.lambda2, s.a11, s.a12, s.a21, s.a22) == (2.0, 1.0, 6.0, 5.0, 4.0, 3.0)
    assert s.swapped() == p


def test_constant_solution_solves_the_system():
    p = params(1.0, 2.0, 1.0, 0.5, 0.3, 2.0)
    u1, u2 = constant_solution(p)
    n1, n2 = coupled_nonlinearity(p, u1, u2)
    assert n1 == pytest.approx(p.lambda1 * u1, rel=1e-13)
    assert n2 == pytest.approx(p.lambda2 * u2, rel=1e-13)


def test_reduced_nonlinearity_is_diagonal_at_zero():
    family = eq_lambda_family()
    assert reduced_nonlinearity(family, 0.0, 0.0, 0.0) == (0.0, 0.0)
    h = 1e-6
    plus, minus = reduced_nonlinearity(family, 0.0, h, 0.0), reduced_nonlinearity(family, 0.0, -h, 0.0)
    d1 = [(f - g) / (2 * h) for f, g in zip(plus, minus)]
    plus, minus = reduced_nonlinearity(family, 0.0, 0.0, h), reduced_nonlinearity(family, 0.0, 0.0, -h)
    d2 = [(f - g) / (2 * h) for f, g in zip(plus, minus)]
    # (q-2) diag(beta1, beta2) = diag(3, 2)
    assert d1[0] == pytest.approx(3.0, abs=1e-6)
    assert d2[1] == pytest.approx(2.0, abs=1e-6)
    assert abs(d1[1]) < 1e-6 and abs(d2[0]) < 1e-6


def test_reduced_nonlinearity_reflection_covariance():
    family = eq_lambda_family()
    f1, f2 = reduced_nonlinearity(family, 0.05, 0.02, 0.03)
    g1, g2 = reduced_nonlinearity(family, 0.05, 0.02, -0.03)
    assert g1 == pytest.approx(f1, abs=1e-14)
    assert g2 == pytest.approx(-f2, abs=1e-14)


def test_reduced_nonlinearity_outside_positive_quadrant():
    with pytest.raises(PositivityBreach):
        reduced_nonlinearity(eq_lambda_family(), 0.0, -10.0, 0.0)


def test_classify_no_solution_equal_lambdas():
    report = classify_regime(params(3.0, 3.0, 2.0, 2.0, 1.0, 1.0))
    assert report.verdict == Verdict.NO_SOLUTION_THM4I
    assert report.sync_ratio is None


def test_classify_no_solution_unequal_lambdas():
    assert classify_regime(params(1.0, 2.0, 2.0, 2.0, 1.0, 1.0)).verdict == Verdict.NO_SOLUTION_THM5I


def test_classify_strict_synchronization():
    report = classify_regime(params(3.0, 3.0, 1.0, 2.0, 2.0, 1.0), n=2)
    assert report.verdict == Verdict.SYNCHRONIZED_STRICT
    assert report.sync_ratio == pytest.approx(1.0)
    assert "rigid on S^2" in report.notes


def test_classify_equal_synchronization():
    report = classify_regime(params(3.0, 3.0, 1.0, 2.0, 1.0, 2.0))
    assert report.verdict == Verdict.SYNCHRONIZED_EQUAL
    assert report.sync_ratio is None


def test_classify_bifurcation_candidate():
    p = eq_lambda_family().eval(0.0)
    assert classify_regime(p).verdict == Verdict.BIFURCATION_CANDIDATE


@pytest.mark.parametrize("a11,a22", [(1.0, 2.0), (2.0, 1.0), (1.0, 3.0), (0.5, 7.0)])
def test_classify_decoupled_equal_lambdas_is_unclassified(a11, a22):
    # A = lambda I at the constant solution, so beta1 = beta2
    report = classify_regime(params(1.0, 1.0, a11, 0.0, 0.0, a22))
    assert report.verdict == Verdict.UNCLASSIFIED
    assert report.sync_ratio is None


def test_linearization_rejects_repeated_eigenvalue():
    with pytest.raises(DegenerateSpectrum):
        constant_state(params(1.0, 1.0, 1.0, 0.0, 0.0, 2.0))


def test_decoupled_unequal_lambdas_diagonalize():
    state = constant_state(params(1.0, 2.0, 1.0, 0.0, 0.0, 2.0))
    assert (state.beta1, state.beta2) == pytest.approx((2.0, 1.0), rel=1e-13)
    assert np.allclose(state.Pinv @ np.diag([state.beta1, state.beta2]) @ state.P, state.A, atol=1e-13)


def test_synchronization_ratio():
    # a12 - a22 = 4, a21 - a11 = 1, q = 4
    p = params(3.0, 3.0, 1.0, 5.0, 2.0, 1.0)
    assert synchronization_ratio(p) == pytest.approx(2.0, rel=1e-14)


def test_rigidity_check_on_spheres():
    assert critical_exponent(2) == math.inf
    assert critical_exponent(3) == 6.0
    assert bvv_sphere_check(3, 4.0, 1.0)
    assert not bvv_sphere_check(3, 4.0, 2.0)
    assert not bvv_sphere_check(3, 6.0, 1.5)
    assert not bvv_sphere_check(3, 7.0, 0.1)


# --- Family Tests ---
@pytest.mark.parametrize("case_id", THEOREM5_CASES)
def test_theorem5_cases_resonate_with_lambda0(case_id):
    family = theorem5_case(case_id, 2.0, 4.0, lam=3.0, epsilon=0.1, spectrum=SPECTRUM_S2)
    beta1, beta2 = labelled_betas(family, 0.0)
    assert beta2 == pytest.approx(1.0, rel=1e-9)
    assert beta1 == pytest.approx(family.analytic_beta(0.0)[0], rel=1e-9)
    # beta scales linearly with alpha + 1
    assert labelled_betas(family, 0.1)[1] == pytest.approx(1.1, rel=1e-9)


@pytest.mark.parametrize("case_id", THEOREM5_CASES)
def test_theorem5_conditions_hold(case_id):
    family = theorem5_case(case_id, 2.0, 4.0, lam=3.0, epsilon=0.1, spectrum=SPECTRUM_S2)
    report = check_conditions(family, SPECTRUM_S2)
    assert report.passed, report.notes
    assert report.j0 == 1
    assert report.beta2_prime_0 == pytest.approx(1.0, rel=1e-6)
    assert report.kernel_dimension == 1


def test_eq_lambda_constants():
    family = eq_lambda_family()
    p = family.eval(0.0)
    assert p.lambda1 == p.lambda2 == pytest.approx(1.5)
    assert family.shape == pytest.approx((2.5, 0.5))
    assert resonant_branch(family) == 2


def test_resonant_branch_for_negative_beta1_case():
    family = theorem5_case("Lt_bDominant_sqrt6", 2.0, 4.0, spectrum=SPECTRUM_S2)
    state = constant_state(family.eval(0.0))
    assert resonant_branch(family) == 1
    assert state.beta1 == pytest.approx(1.0, rel=1e-9)


def test_family_discriminant_matches_linearization():
    family = theorem5_case("Lt_mixed_b2", 2.0, 4.0, spectrum=SPECTRUM_S2)
    a, b = family.shape
    state = constant_state(family.eval(0.05))
    # ubar^(q-2) = 1 / (a + b) on these families
    expected = math.sqrt(family_discriminant(family, 0.05)) / (a + b)
    assert state.beta1 - state.beta2 == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("case_id,factor", [
    ("EqLambda", 4.0 * 0.5**2),
    ("Lt_bDominant_sqrt6", 49.0),
    ("Lt_mixed_b2", 96.0),
    ("Lt_a12eq_a22", 112.0),
])
def test_family_discriminant_closed_forms(case_id, factor):
    family = theorem5_case(case_id, 2.0, 4.0, lam=3.0, spectrum=SPECTRUM_S2)
    lambda1 = family.eval(0.0).lambda1
    assert family_discriminant(family, 0.0) == pytest.approx(factor * lambda1**2, rel=1e-12)


def test_theorem5_rejects_bad_inputs():
    with pytest.raises(ValueError):
        theorem5_case("NoSuchCase", 2.0, 4.0)
    with pytest.raises(DomainViolation):
        theorem5_case("EqLambda", 2.0, 4.0, lam=1.0)
    with pytest.raises(DomainViolation):
        theorem5_case("EqLambda", 2.0, 4.0, lam=6.0, spectrum=SPECTRUM_S2)
    with pytest.raises(DomainViolation):
        theorem5_case("Lt_aDominant", 2.0, 4.0, epsilon=0.7)
    with pytest.raises(DomainViolation):
        theorem5_case("Lt_aDominant", 3.0, 4.0, spectrum=SPECTRUM_S2)


def test_theorem5_builds_spectrum_from_dimension():
    # lambda = 6 = lambda_2 on S^2
    with pytest.raises(DomainViolation):
        theorem5_case("EqLambda", 2.0, 4.0, lam=6.0, n=2)
    with pytest.raises(DomainViolation):
        theorem5_case("EqLambda", 3.0, 4.0, lam=5.0, n=2)
    family = theorem5_case("EqLambda", 2.0, 4.0, lam=3.0, n=2)
    assert family.eval(0.0).lambda1 == pytest.approx(1.5)


def test_theorem5_without_spectrum_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="system.families"):
        theorem5_case("EqLambda", 2.0, 4.0, lam=6.0)
    assert "resonance checks are skipped" in caplog.text


def test_symmetric_family_rejects_a_equal_b():
    with pytest.raises(DomainViolation):
        sphere_symmetric_family(1.0, 2.0, 2.0, 4.0)


def test_resonant_symmetric_family_conditions():
    family = resonant_symmetric_family(2, 1, 4.0)
    report = check_conditions(family, SPECTRUM_S2)
    assert report.j0 == 1
    assert report.a1 and report.a3
    assert report.beta2_0 == pytest.approx(1.0, rel=1e-12)


def test_conditions_report_missing_constant_solution():
    family = linear_family(params(3.0, 3.0, 2.0, 2.0, 1.0, 1.0), validate=False)
    report = check_conditions(family, SPECTRUM_S2)
    assert not report.b1 and not report.passed
    assert report.notes


def test_conditions_take_j0_from_the_mode_index():
    report = check_conditions(eq_lambda_family(), sphere_spectrum(2, 40))
    assert report.j0 == 1
    with pytest.raises(ValueError):
        check_conditions(eq_lambda_family(), SPECTRUM_S2[1:])
    with pytest.raises(ValueError):
        check_conditions(eq_lambda_family(), [(0.0, 1), (6.0, 1), (12.0, 1)])


def test_linear_family_rejects_unknown_slopes():
    with pytest.raises(ValueError):
        linear_family(params(1.0, 2.0, 1.0, 0.5, 0.3, 2.0), {"q": 1.0})


# --- Config Tests ---
def test_nest_keys_builds_sections():
    nested = nest_keys({"manifold.n": "3", "family.case_id": "EqLambda", "empty": ""})
    assert nested == {"manifold": {"n": "3"}, "family": {"case_id": "EqLambda"}}


def test_pipeline_runs_in_canonical_order():
    config = parse_run_config({"pipeline": "verify, conditions", "family.lambda": "3.5"})
    assert config.pipeline == ["conditions", "verify"]
    assert config.family.lam == 3.5


def test_unknown_stage_is_rejected():
    with pytest.raises(ValueError):
        parse_run_config({"pipeline": "conditions,plot"})


def test_unknown_key_is_rejected():
    with pytest.raises(ValueError):
        parse_run_config({"family.colour": "red"})


def test_build_explicit_family_without_constant_solution():
    config = parse_run_config({
        "family.kind": "explicit", "family.lambda1": "3", "family.lambda2": "3",
        "family.a11": "2", "family.a12": "2", "family.a21": "1", "family.a22": "1",
    })
    family = build_family(config)
    assert family.eval(0.0).a11 == 2.0


def test_seed_defaults_from_environment(monkeypatch):
    monkeypatch.setenv("SCHRO_BRANCH_SEED", "7")
    assert parse_run_config({}).verify.seed == 7
