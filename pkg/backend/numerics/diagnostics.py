"""
Quantitative checks on solution states: synchronization of u1/u2, the
forced synchronization ratio, the quotient-equation defect, projections
onto the kernel direction, and equatorial reflection symmetry.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from errors import InsufficientPoints, PositivityBreach, WrongRegime
from numerics.solver import StateVector
from spectral.spectral_sphere import (
    SphereGrid,
    analyze,
    build_grid,
    derivative_values,
    laplacian_apply,
    reflect,
    resample,
    synthesize,
)
from system.system_algebra import (
    SystemParams,
    Verdict,
    classify_regime,
    constant_state,
    synchronization_ratio,
)

logger = logging.getLogger(__name__)


# ------- Models -------
class DiagnosticsRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    sync_measure: float
    v_min: float
    v_max: float
    quotient_residual: Optional[float] = None
    kernel_epsilon: Optional[float] = None
    kernel_remainder: Optional[float] = None
    reflection_defect: Optional[float] = None


def _quotient_values(state: StateVector) -> np.ndarray:
    v1, v2 = state.nodal()
    if np.any(v1 <= 0.0) or np.any(v2 <= 0.0):
        raise PositivityBreach("quotient u1/u2 needs a positive state")
    return v1 / v2


# ------- Synchronization -------
def sync_measure(state: StateVector) -> float:
    """(v_max - v_min) / ((v_max + v_min) / 2) for v = u1/u2 at the nodes"""
    v = _quotient_values(state)
    v_max, v_min = float(v.max()), float(v.min())
    return (v_max - v_min) / ((v_max + v_min) / 2.0)


def sync_ratio_check(state: StateVector, p: SystemParams) -> float:
    """
    |mean(v) - Lambda| in the strict synchronized regime, mean taken with
    the quadrature weights.

    Raises:
        WrongRegime: p is not in the SynchronizedOnly_strict regime
    """
    report = classify_regime(p)
    if report.verdict != Verdict.SYNCHRONIZED_STRICT:
        raise WrongRegime(f"synchronization ratio is undefined for verdict {report.verdict.value}")
    v = _quotient_values(state)
    weights = state.grid.weights
    mean = float(np.sum(weights * v) / np.sum(weights))
    return abs(mean - synchronization_ratio(p))


# ------- Quotient equation -------
def quotient_residual(state: StateVector, p: SystemParams, fine_grid: Optional[SphereGrid] = None) -> float:
    """
    Sup-norm defect of

        Delta v = (a11-a21) u1^(q-2) v + (a12-a22) u2^(q-2) v + (lambda2-lambda1) v
                  + 2 (1-t^2) v' (ln u2)'

    with v = u1/u2, evaluated on a grid with twice the modes. Delta v is
    taken spectrally from the projection of v.
    """
    grid = state.grid
    fine = fine_grid or build_grid(grid.n, 2 * grid.N, p.q)
    u1 = resample(state.u1, fine)
    u2 = resample(state.u2, fine)
    f1, f2 = synthesize(u1), synthesize(u2)
    if np.any(f1 <= 0.0) or np.any(f2 <= 0.0):
        raise PositivityBreach("quotient residual needs a positive state")
    d1, d2 = derivative_values(u1), derivative_values(u2)

    v = f1 / f2
    dv = (d1 * f2 - f1 * d2) / f2**2
    lap_v = synthesize(laplacian_apply(analyze(v, fine)))
    k = p.q - 2.0
    rhs = (
        (p.a11 - p.a21) * f1**k * v
        + (p.a12 - p.a22) * f2**k * v
        + (p.lambda2 - p.lambda1) * v
        + 2.0 * (1.0 - fine.nodes**2) * dv * d2 / f2
    )
    return float(np.max(np.abs(lap_v - rhs)))


# ------- Kernel direction -------
def kernel_pair(event, family) -> Tuple[float, float]:
    """Column beta_branch of P(alpha*)^-1, scaled so its largest entry has magnitude 1"""
    state = constant_state(family.eval(event.alpha_star))
    column = np.array(state.Pinv[:, event.beta_branch - 1])
    column = column / np.max(np.abs(column))
    return float(column[0]), float(column[1])


def kernel_vector(event, family, grid: SphereGrid) -> np.ndarray:
    """Coefficient vector of (q1i phi_j0, q2i phi_j0) on grid"""
    q1, q2 = kernel_pair(event, family)
    vector = np.zeros(2 * grid.N)
    vector[event.j0] = q1
    vector[grid.N + event.j0] = q2
    return vector


def nonsync_indicator(event, family) -> float:
    """u2bar(alpha*) q1i - u1bar(alpha*) q2i; non-zero means bifurcating solutions are not synchronized"""
    state = constant_state(family.eval(event.alpha_star))
    q1, q2 = kernel_pair(event, family)
    return state.u2bar * q1 - state.u1bar * q2


def deviation(state: StateVector, p: SystemParams) -> np.ndarray:
    """Coefficients of (u1 - u1bar, u2 - u2bar) at the constant solution of p"""
    trivial = constant_state(p)
    values = state.as_vector().copy()
    phi0 = state.grid.basis_values[0, 0]
    values[0] -= trivial.u1bar / phi0
    values[state.grid.N] -= trivial.u2bar / phi0
    return values


def kernel_projection(state: StateVector, p: SystemParams, direction: np.ndarray) -> Tuple[float, float]:
    """(epsilon, remainder norm) of the deviation against a kernel coefficient vector"""
    d = deviation(state, p)
    epsilon = float(d @ direction / (direction @ direction))
    remainder = float(np.linalg.norm(d - epsilon * direction))
    return epsilon, remainder


def kernel_fit(points: Sequence, event, family) -> Tuple[List[float], List[float]]:
    """
    Project each point's deviation from the constant solution onto the
    kernel direction.

    Returns:
        (epsilons, remainders), one entry per point

    Raises:
        InsufficientPoints: fewer than 3 points
    """
    if len(points) < 3:
        raise InsufficientPoints(f"kernel fit needs at least 3 points, got {len(points)}")
    direction = kernel_vector(event, family, points[0].state.grid)
    epsilons, remainders = [], []
    for point in points:
        epsilon, remainder = kernel_projection(point.state, family.eval(point.alpha), direction)
        epsilons.append(epsilon)
        remainders.append(remainder)
    return epsilons, remainders


def tangent_correlation(points: Sequence, event, family) -> float:
    """
    Smallest |cosine| between the kernel direction and the secants of the
    deviations through the 3 smallest-|epsilon| points.
    """
    if len(points) < 3:
        raise InsufficientPoints(f"tangent check needs at least 3 points, got {len(points)}")
    direction = kernel_vector(event, family, points[0].state.grid)
    deviations = [deviation(point.state, family.eval(point.alpha)) for point in points]
    order = np.argsort([abs(d @ direction) for d in deviations], kind="stable")[:3]
    # the trivial solution at alpha* closes the first secant
    chain = [np.zeros_like(direction)] + [deviations[i] for i in order]
    correlations = []
    for start, end in zip(chain[:-1], chain[1:]):
        secant = end - start
        correlations.append(abs(secant @ direction) / (np.linalg.norm(secant) * np.linalg.norm(direction)))
    return float(min(correlations))


def component_correlation(state: StateVector, p: SystemParams) -> float:
    """Pearson correlation of the nodal values of u1 - u1bar against u2 - u2bar"""
    trivial = constant_state(p)
    v1, v2 = state.nodal()
    return float(np.corrcoef(v1 - trivial.u1bar, v2 - trivial.u2bar)[0, 1])


# ------- Symmetry -------
def reflection_defect(state: StateVector) -> float:
    """Sup-norm of reflect(u1) - u2 at the nodes"""
    return float(np.max(np.abs(synthesize(reflect(state.u1)) - synthesize(state.u2))))


def diagnose(state: StateVector, p: SystemParams, direction: Optional[np.ndarray] = None,
             with_reflection: bool = False, with_quotient: bool = True) -> DiagnosticsRecord:
    v = _quotient_values(state)
    epsilon = remainder = None
    if direction is not None:
        epsilon, remainder = kernel_projection(state, p, direction)
    return DiagnosticsRecord(
        sync_measure=sync_measure(state),
        v_min=float(v.min()),
        v_max=float(v.max()),
        quotient_residual=quotient_residual(state, p) if with_quotient else None,
        kernel_epsilon=epsilon,
        kernel_remainder=remainder,
        reflection_defect=reflection_defect(state) if with_reflection else None,
    )
