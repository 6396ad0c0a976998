"""
Trivial-branch tracking, detection of bifurcation points where
(q-2) beta_i(alpha) crosses a Laplacian eigenvalue, branch switching along
the kernel direction, and pseudo-arclength continuation of the
bifurcating branch.
"""
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import bisect

from errors import InitialSwitchFailed, KernelNotSimple, NoConvergence, PositivityBreach
from numerics.diagnostics import DiagnosticsRecord, diagnose, kernel_projection, kernel_vector
from numerics.solver import (
    NewtonOptions,
    StateVector,
    constant_state_vector,
    jacobian,
    parameter_sensitivity,
    passes_guard,
    residual,
    residual_norm,
)
from spectral.spectral_sphere import SpectralField, SphereGrid, basis_field, check_mode_order
from system.families import ParamFamily
from system.system_algebra import PARAM_NAMES, constant_state, is_symmetric_coupling

logger = logging.getLogger(__name__)

DETECTION_SAMPLES = 201
ROOT_TOL = 1e-12
EVENT_TOL = 1e-9
SLOPE_STEP = 1e-5
PARAM_STEP = 1e-6


# ------- Models -------
class BranchPoint(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    step: int
    alpha: float
    state: StateVector
    s: float = Field(ge=0.0)
    epsilon: float
    residual_inf: float
    diagnostics: DiagnosticsRecord


class BifurcationEvent(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha_star: float
    j0: int
    beta_branch: int = Field(ge=1, le=2)
    eigenvalue: float
    kernel: Optional[SpectralField] = None
    crossing_slope: float           # beta'(alpha*)
    resonance_slope: float          # d/dalpha [(q-2) beta - lambda_j0]
    multiplicity: int = 1
    simultaneous: bool = False      # the other beta branch is resonant at alpha* too

    @model_validator(mode="after")
    def _check_slope(self):
        if self.crossing_slope == 0.0:
            raise ValueError("crossing slope must be non-zero")
        return self

    @property
    def simple(self) -> bool:
        return self.multiplicity == 1 and not self.simultaneous


class ContinuationOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    ds: float = Field(default=5e-3, gt=0.0)
    n_steps: int = Field(default=40, ge=1)
    eps0: float = Field(default=1e-2, gt=0.0)
    mirror: bool = False
    min_ds_ratio: float = Field(default=2.0**-8, gt=0.0)
    grow_after: int = Field(default=4, ge=1)
    corrector_max_iter: int = Field(default=15, ge=1)


class BranchTrace(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    event: BifurcationEvent
    points: List[BranchPoint]
    reason: str


# ------- Trivial branch -------
def trivial_branch(family: ParamFamily, alphas: Sequence[float], grid: SphereGrid) -> List[BranchPoint]:
    """Constant solutions at each alpha, with arclength measured in alpha"""
    points = []
    s = 0.0
    previous = None
    for step, alpha in enumerate(alphas):
        p = family.eval(float(alpha))
        trivial = constant_state(p)
        state = constant_state_vector(grid, trivial.u1bar, trivial.u2bar)
        if previous is not None:
            s += abs(float(alpha) - previous)
        previous = float(alpha)
        points.append(BranchPoint(
            step=step,
            alpha=float(alpha),
            state=state,
            s=s,
            epsilon=0.0,
            residual_inf=residual_norm(residual(state, p)),
            diagnostics=diagnose(state, p, with_quotient=False),
        ))
    return points


# ------- Detection -------
def _branch_beta(family: ParamFamily, branch: int) -> Callable[[float], float]:
    return lambda alpha: constant_state(family.eval(alpha)).beta(branch)


def detect_bifurcations(family: ParamFamily, spectrum: List[Tuple[float, int]],
                        alpha_range: Optional[Tuple[float, float]] = None,
                        grid: Optional[SphereGrid] = None) -> List[BifurcationEvent]:
    """
    Roots of g(alpha) = (q-2) beta_i(alpha) - lambda_j for both beta branches
    and every non-zero spectrum entry, located from sign changes on a
    201-point sample and refined by bisection.

    Args:
        family: Parameter family
        spectrum: [(lambda_j, multiplicity)], index = mode j
        alpha_range: Search interval, defaults to [-delta, delta]
        grid: When given, events carry the radial harmonic phi_j0 as kernel

    Returns:
        Events sorted by (alpha_star, j0, beta_branch)

    Raises:
        ValueError: spectrum is not listed by mode from j = 0
    """
    check_mode_order(spectrum)
    lo, hi = alpha_range or (-family.delta, family.delta)
    q = family.eval(0.0).q
    k = q - 2.0
    alphas = np.linspace(lo, hi, DETECTION_SAMPLES)
    betas = {branch: np.array([_branch_beta(family, branch)(float(a)) for a in alphas]) for branch in (1, 2)}

    events: List[BifurcationEvent] = []
    for branch in (1, 2):
        beta_fn = _branch_beta(family, branch)
        for j, (ev, multiplicity) in enumerate(spectrum):
            if ev <= 0.0:
                continue
            g = k * betas[branch] - ev
            roots = []
            for idx in range(len(alphas)):
                if abs(g[idx]) <= ROOT_TOL:
                    roots.append(float(alphas[idx]))
                elif idx + 1 < len(alphas) and abs(g[idx + 1]) > ROOT_TOL and g[idx] * g[idx + 1] < 0.0:
                    root = bisect(lambda a: k * beta_fn(a) - ev, alphas[idx], alphas[idx + 1], xtol=1e-15, maxiter=200)
                    roots.append(float(root))
            for root in roots:
                if any(e.j0 == j and e.beta_branch == branch and abs(e.alpha_star - root) < 1e-10 for e in events):
                    continue
                if abs(k * beta_fn(root) - ev) > EVENT_TOL:
                    logger.warning(f"Discarding inaccurate root alpha={root:.3e} for mode {j}")
                    continue
                slope = (beta_fn(root + SLOPE_STEP) - beta_fn(root - SLOPE_STEP)) / (2.0 * SLOPE_STEP)
                if slope == 0.0:
                    logger.warning(f"Tangential resonance at alpha={root:.3e}, mode {j}: not a crossing")
                    continue
                other = constant_state(family.eval(root)).beta(3 - branch)
                simultaneous = any(abs(k * other - e2) <= EVENT_TOL for e2, _ in spectrum if e2 > 0.0)
                events.append(BifurcationEvent(
                    alpha_star=root,
                    j0=j,
                    beta_branch=branch,
                    eigenvalue=ev,
                    kernel=basis_field(grid, j) if grid is not None and j < grid.N else None,
                    crossing_slope=slope,
                    resonance_slope=k * slope,
                    multiplicity=multiplicity,
                    simultaneous=simultaneous,
                ))
                logger.info(f"Bifurcation at alpha*={root:.6e}: mode j0={j}, beta branch {branch}, slope {slope:.6g}")
    events.sort(key=lambda e: (e.alpha_star, e.j0, e.beta_branch))
    return events


# ------- Branch switching -------
def _reference_scale(family: ParamFamily, event: BifurcationEvent) -> float:
    trivial = constant_state(family.eval(event.alpha_star))
    return max(trivial.u1bar, trivial.u2bar)


def branch_switch(event: BifurcationEvent, family: ParamFamily, eps0: float, grid: SphereGrid) -> StateVector:
    """
    Initial guess ubar(alpha*) + eps0 * max(ubar) * (q1i phi, q2i phi) with
    (q1i, q2i) the kernel column of P(alpha*)^-1 and phi the orthonormal
    radial harmonic of degree j0, positive at the north pole.
    """
    trivial = constant_state(family.eval(event.alpha_star))
    base = constant_state_vector(grid, trivial.u1bar, trivial.u2bar).as_vector()
    amplitude = eps0 * max(trivial.u1bar, trivial.u2bar)
    return StateVector.from_vector(base + amplitude * kernel_vector(event, family, grid), grid)


def _param_derivative(family: ParamFamily, alpha: float) -> Dict[str, float]:
    plus = family.eval(alpha + PARAM_STEP)
    minus = family.eval(alpha - PARAM_STEP)
    return {name: (getattr(plus, name) - getattr(minus, name)) / (2.0 * PARAM_STEP) for name in PARAM_NAMES}


def _bordered_solve(state: StateVector, family: ParamFamily, alpha: float, row: np.ndarray,
                    corner: float, rhs_constraint: float) -> Tuple[np.ndarray, float, float]:
    """One Newton step on [R(x, alpha); constraint] with the constraint row (row, corner)"""
    p = family.eval(alpha)
    r = residual(state, p).as_vector()
    size = r.size
    M = np.zeros((size + 1, size + 1))
    M[:size, :size] = jacobian(state, p)
    M[:size, size] = parameter_sensitivity(state, _param_derivative(family, alpha), p.q)
    M[size, :size] = row
    M[size, size] = corner
    rhs = -np.concatenate([r, [rhs_constraint]])
    try:
        step = scipy.linalg.solve(M, rhs)
    except (scipy.linalg.LinAlgError, ValueError):
        raise NoConvergence("singular bordered system")
    return step[:size], float(step[size]), residual_norm(residual(state, p))


def _first_point(event: BifurcationEvent, family: ParamFamily, grid: SphereGrid, eps: float,
                 newton: NewtonOptions, max_iter: int) -> Tuple[StateVector, float]:
    """Solve for (x, alpha) with the kernel amplitude fixed at eps (relative to max ubar)"""
    trivial = constant_state(family.eval(event.alpha_star))
    base = constant_state_vector(grid, trivial.u1bar, trivial.u2bar).as_vector()
    direction = kernel_vector(event, family, grid)
    unit = direction / np.linalg.norm(direction)
    target = eps * max(trivial.u1bar, trivial.u2bar) * np.linalg.norm(direction)

    state = branch_switch(event, family, eps, grid)
    alpha = event.alpha_star
    for iteration in range(max_iter):
        x = state.as_vector()
        constraint = float(unit @ (x - base) - target)
        dx, dalpha, norm = _bordered_solve(state, family, alpha, unit, 0.0, constraint)
        if norm <= newton.abs_tol and abs(constraint) <= newton.abs_tol:
            return state, alpha
        state = StateVector.from_vector(x + dx, grid)
        alpha = alpha + dalpha
        if not passes_guard(state, newton.positivity_ratio):
            raise PositivityBreach(f"first-point corrector left the positive cone at iteration {iteration}")
        if abs(alpha) > family.delta:
            raise NoConvergence("first-point corrector left the parameter interval", iteration)
    norm = residual_norm(residual(state, family.eval(alpha)))
    if norm <= newton.abs_tol:
        return state, alpha
    raise NoConvergence("first-point corrector did not converge", max_iter, norm)


def _correct(z_pred_x: np.ndarray, alpha_pred: float, tangent_x: np.ndarray, tangent_alpha: float,
             scale: float, family: ParamFamily, grid: SphereGrid, newton: NewtonOptions,
             max_iter: int) -> Tuple[StateVector, float]:
    """Newton on the residual plus the arclength hyperplane through the predictor"""
    x = z_pred_x.copy()
    alpha = alpha_pred
    row = scale * tangent_x
    for iteration in range(max_iter):
        state = StateVector.from_vector(x, grid)
        if not passes_guard(state, newton.positivity_ratio):
            raise PositivityBreach(f"corrector left the positive cone at iteration {iteration}")
        constraint = float(row @ (x - z_pred_x) + tangent_alpha * (alpha - alpha_pred))
        dx, dalpha, norm = _bordered_solve(state, family, alpha, row, tangent_alpha, constraint)
        if norm <= newton.abs_tol and abs(constraint) <= newton.abs_tol:
            return state, alpha
        if not math.isfinite(norm):
            break
        x = x + dx
        alpha = alpha + dalpha
    raise NoConvergence("corrector did not converge", max_iter)


def trace_branch(event: BifurcationEvent, family: ParamFamily, grid: SphereGrid,
                 opts: Optional[ContinuationOptions] = None,
                 newton: Optional[NewtonOptions] = None) -> BranchTrace:
    """
    Pseudo-arclength continuation of the branch bifurcating at event.

    Unknowns are (alpha, x / |ubar(0)|) with equal weights. The first point
    fixes the kernel amplitude at eps0, eps0/2 or eps0/4; later points use a
    secant predictor. ds halves on corrector failure and doubles (capped at
    the initial ds) after grow_after consecutive successes.

    Raises:
        KernelNotSimple: the kernel at alpha* is not one-dimensional
        InitialSwitchFailed: the first corrector solve fails for every trial amplitude
    """
    opts = opts or ContinuationOptions()
    newton = newton or NewtonOptions()
    if not event.simple:
        raise KernelNotSimple(
            f"kernel at alpha*={event.alpha_star:.6g} is not simple "
            f"(multiplicity {event.multiplicity}, simultaneous={event.simultaneous})"
        )

    sign = -1.0 if opts.mirror else 1.0
    reference = constant_state(family.eval(0.0))
    scale = 1.0 / math.hypot(reference.u1bar, reference.u2bar)
    u_scale = _reference_scale(family, event)
    direction = kernel_vector(event, family, grid)
    with_reflection = is_symmetric_coupling(family.eval(event.alpha_star)) and event.j0 % 2 == 1

    def make_point(step: int, alpha: float, state: StateVector, s: float) -> BranchPoint:
        p = family.eval(alpha)
        epsilon, _ = kernel_projection(state, p, direction)
        record = diagnose(state, p, direction=direction, with_reflection=with_reflection)
        return BranchPoint(
            step=step, alpha=alpha, state=state, s=s,
            epsilon=epsilon / u_scale,
            residual_inf=residual_norm(residual(state, p)),
            diagnostics=record,
        )

    # first point off the trivial branch
    first = None
    for eps in (opts.eps0, opts.eps0 / 2.0, opts.eps0 / 4.0):
        try:
            first = _first_point(event, family, grid, sign * eps, newton, opts.corrector_max_iter + 5)
            break
        except (NoConvergence, PositivityBreach) as e:
            logger.warning(f"Branch switch with eps0={eps:.3g} failed: {e}")
    if first is None:
        raise InitialSwitchFailed(f"no corrector convergence off alpha*={event.alpha_star:.6g} for eps0={opts.eps0:.3g}")

    trivial = constant_state(family.eval(event.alpha_star))
    previous_x = constant_state_vector(grid, trivial.u1bar, trivial.u2bar).as_vector()
    previous_alpha = event.alpha_star
    state, alpha = first
    current_x = state.as_vector()
    s = math.sqrt(scale**2 * np.sum((current_x - previous_x) ** 2) + (alpha - previous_alpha) ** 2)
    points = [make_point(0, alpha, state, s)]
    logger.info(f"Switched onto branch at alpha={alpha:.6e}, epsilon={points[0].epsilon:.3e}")

    ds = opts.ds
    min_ds = opts.ds * opts.min_ds_ratio
    successes = 0
    reason = "completed"
    while len(points) < opts.n_steps:
        dz_x = scale * (current_x - previous_x)
        dz_alpha = alpha - previous_alpha
        length = math.sqrt(float(np.sum(dz_x**2)) + dz_alpha**2)
        tangent_x, tangent_alpha = dz_x / length, dz_alpha / length

        try:
            pred_x = current_x + ds * tangent_x / scale
            pred_alpha = alpha + ds * tangent_alpha
            new_state, new_alpha = _correct(pred_x, pred_alpha, tangent_x, tangent_alpha, scale,
                                            family, grid, newton, opts.corrector_max_iter)
        except (NoConvergence, PositivityBreach) as e:
            failure = "positivity breach" if isinstance(e, PositivityBreach) else "corrector failure"
            ds /= 2.0
            successes = 0
            logger.debug(f"Step rejected ({failure}), ds -> {ds:.3e}")
            if ds < min_ds:
                reason = failure
                break
            continue

        if abs(new_alpha) > family.delta:
            reason = "left parameter interval"
            break
        new_x = new_state.as_vector()
        s += math.sqrt(scale**2 * float(np.sum((new_x - current_x) ** 2)) + (new_alpha - alpha) ** 2)
        previous_x, previous_alpha = current_x, alpha
        current_x, alpha = new_x, new_alpha
        points.append(make_point(len(points), alpha, new_state, s))
        logger.debug(f"Accepted point {len(points) - 1}: alpha={alpha:.6e} s={s:.4e} ds={ds:.3e}")

        successes += 1
        if successes >= opts.grow_after:
            ds = min(2.0 * ds, opts.ds)
            successes = 0

    logger.info(f"Continuation stopped after {len(points)} points: {reason}")
    return BranchTrace(event=event, points=points, reason=reason)


def continue_branch(event: BifurcationEvent, family: ParamFamily, grid: SphereGrid,
                    opts: Optional[ContinuationOptions] = None,
                    newton: Optional[NewtonOptions] = None) -> List[BranchPoint]:
    return trace_branch(event, family, grid, opts, newton).points
