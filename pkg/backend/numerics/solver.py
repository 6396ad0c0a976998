"""
Discrete residual and Jacobian of the coupled system on radial fields,
damped Newton with a positivity guard, and the spectrum of the
linearized operator about any state.

Residual convention: R_i = Delta u_i + lambda_i u_i - N_i(u1, u2), so at the
constant solution the Jacobian acts on mode j as lambda_j - (q-2) A.
"""
import logging
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from errors import NoConvergence, PositivityBreach
from spectral.spectral_sphere import SpectralField, SphereGrid, constant_field, synthesize
from system.system_algebra import (
    PARAM_NAMES,
    SystemParams,
    coupled_nonlinearity,
    coupled_nonlinearity_derivatives,
)

logger = logging.getLogger(__name__)


# ------- Models -------
class StateVector(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u1: SpectralField
    u2: SpectralField

    @model_validator(mode="after")
    def _shared_grid(self):
        g1, g2 = self.u1.grid, self.u2.grid
        if g1 is not g2 and (g1.n, g1.N, g1.node_count) != (g2.n, g2.N, g2.node_count):
            raise ValueError("u1 and u2 must live on the same grid")
        return self

    @property
    def grid(self) -> SphereGrid:
        return self.u1.grid

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.u1.coeffs, self.u2.coeffs])

    @classmethod
    def from_vector(cls, x: np.ndarray, grid: SphereGrid) -> "StateVector":
        N = grid.N
        return cls(u1=SpectralField(coeffs=x[:N], grid=grid), u2=SpectralField(coeffs=x[N:], grid=grid))

    def nodal(self) -> Tuple[np.ndarray, np.ndarray]:
        return synthesize(self.u1), synthesize(self.u2)

    def swapped(self) -> "StateVector":
        return StateVector(u1=self.u2, u2=self.u1)


class NewtonOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iter: int = Field(default=50, ge=1)
    abs_tol: float = 1e-11
    damping_floor: float = 2.0**-20
    positivity_ratio: float = 1e-10
    collapse_tol: float = 1e-6

    @field_validator("abs_tol", "damping_floor", "positivity_ratio", "collapse_tol")
    @classmethod
    def _check_positive(cls, value):
        if not value > 0.0:
            raise ValueError("tolerances must be positive")
        return value


def constant_state_vector(grid: SphereGrid, u1bar: float, u2bar: float) -> StateVector:
    return StateVector(u1=constant_field(grid, u1bar), u2=constant_field(grid, u2bar))


def _check_positive(values: np.ndarray, label: str):
    if not np.all(np.isfinite(values)):
        raise PositivityBreach(f"{label} has non-finite nodal values")
    if np.any(values <= 0.0):
        raise PositivityBreach(f"{label} has min nodal value {values.min():.3e} <= 0")


def passes_guard(state: StateVector, ratio: float) -> bool:
    """min nodal value > ratio * max nodal value for both components"""
    for values in state.nodal():
        if not np.all(np.isfinite(values)):
            return False
        if not values.min() > ratio * values.max():
            return False
    return True


# ------- Residual and Jacobian -------
def residual(state: StateVector, p: SystemParams, require_positive: bool = True) -> StateVector:
    """
    Residual pair R_i = Delta u_i + lambda_i u_i - N_i, nonlinear terms
    evaluated at the nodes and analyzed back onto the basis.

    Raises:
        PositivityBreach: a nodal value is <= 0 and require_positive is set
    """
    grid = state.grid
    v1, v2 = state.nodal()
    if require_positive:
        _check_positive(v1, "u1")
        _check_positive(v2, "u2")
    n1, n2 = coupled_nonlinearity(p, v1, v2)
    projector = grid.basis_values * grid.weights
    r1 = (grid.eigenvalues + p.lambda1) * state.u1.coeffs - projector @ n1
    r2 = (grid.eigenvalues + p.lambda2) * state.u2.coeffs - projector @ n2
    return StateVector(u1=SpectralField(coeffs=r1, grid=grid), u2=SpectralField(coeffs=r2, grid=grid))


def residual_norm(r: StateVector) -> float:
    """Sup-norm of the residual pair over the nodes"""
    v1, v2 = r.nodal()
    return float(max(np.max(np.abs(v1)), np.max(np.abs(v2))))


def parameter_sensitivity(state: StateVector, dp: Dict[str, float], q: float) -> np.ndarray:
    """
    Derivative of the residual vector along a parameter direction dp
    (keys from PARAM_NAMES, q held fixed). The residual is linear in the
    six coefficients, so this is exact.
    """
    zero = {name: 0.0 for name in PARAM_NAMES}
    zero.update(dp)
    direction = SystemParams(q=q, **zero)
    grid = state.grid
    v1, v2 = state.nodal()
    n1, n2 = coupled_nonlinearity(direction, v1, v2)
    projector = grid.basis_values * grid.weights
    s1 = direction.lambda1 * state.u1.coeffs - projector @ n1
    s2 = direction.lambda2 * state.u2.coeffs - projector @ n2
    return np.concatenate([s1, s2])


def jacobian(state: StateVector, p: SystemParams, require_positive: bool = True) -> np.ndarray:
    """
    Dense (2N)x(2N) Frechet derivative of the residual in coefficient space:
    blocks diag(lambda_j + lambda_i) - B W diag(dN_i/du_k) B^T.
    """
    grid = state.grid
    v1, v2 = state.nodal()
    if require_positive:
        _check_positive(v1, "u1")
        _check_positive(v2, "u2")
    (d11, d12), (d21, d22) = coupled_nonlinearity_derivatives(p, v1, v2)
    projector = grid.basis_values * grid.weights
    B = grid.basis_values

    def block(partial):
        return (projector * partial) @ B.T

    N = grid.N
    J = np.empty((2 * N, 2 * N))
    J[:N, :N] = np.diag(grid.eigenvalues + p.lambda1) - block(d11)
    J[:N, N:] = -block(d12)
    J[N:, :N] = -block(d21)
    J[N:, N:] = np.diag(grid.eigenvalues + p.lambda2) - block(d22)
    return J


# ------- Newton -------
def newton_solve(initial: StateVector, p: SystemParams, opts: Optional[NewtonOptions] = None) -> StateVector:
    """
    Damped Newton iteration with backtracking on the residual sup-norm.

    A step is accepted only if it decreases the residual and keeps both
    components above positivity_ratio times their maximum. Converged states
    whose component collapsed below collapse_tol times its initial scale
    (trivial or semi-trivial solutions) are rejected.

    Args:
        initial: Positive starting state
        p: System parameters
        opts: Iteration controls

    Returns:
        State with residual sup-norm <= opts.abs_tol

    Raises:
        NoConvergence: iteration cap, damping floor, singular Jacobian or collapse
    """
    opts = opts or NewtonOptions()
    grid = initial.grid
    if not passes_guard(initial, opts.positivity_ratio):
        raise NoConvergence("initial state is not positive", 0)
    scales = [float(values.max()) for values in initial.nodal()]

    x = initial.as_vector()
    state = initial
    norm = residual_norm(residual(state, p))
    iteration = 0
    while norm > opts.abs_tol:
        if iteration >= opts.max_iter:
            raise NoConvergence("iteration cap reached", iteration, norm)
        r = residual(state, p).as_vector()
        try:
            step = scipy.linalg.solve(jacobian(state, p), -r)
        except (scipy.linalg.LinAlgError, ValueError):
            raise NoConvergence("singular Jacobian", iteration, norm)
        if not np.all(np.isfinite(step)):
            raise NoConvergence("non-finite Newton step", iteration, norm)

        t = 1.0
        while True:
            trial = StateVector.from_vector(x + t * step, grid)
            if passes_guard(trial, opts.positivity_ratio):
                trial_norm = residual_norm(residual(trial, p))
                if trial_norm < norm or trial_norm <= opts.abs_tol:
                    break
            t *= 0.5
            if t < opts.damping_floor:
                raise NoConvergence("damping floor reached", iteration, norm)
        x = x + t * step
        state = trial
        norm = trial_norm
        iteration += 1
        logger.debug(f"Newton iteration {iteration}: damping={t:.3g} residual={norm:.3e}")

    for values, scale, label in zip(state.nodal(), scales, ("u1", "u2")):
        if values.max() < opts.collapse_tol * scale:
            raise NoConvergence(f"{label} collapsed to zero", iteration, norm)
    return state


def linearized_spectrum(state: StateVector, p: SystemParams, k: int, imag_tol: float = 1e-10) -> np.ndarray:
    """
    The k smallest-magnitude eigenvalues of the Jacobian about state.
    Returned real when every imaginary part is below imag_tol.
    """
    size = 2 * state.grid.N
    if not 1 <= k <= size:
        raise ValueError(f"k must lie in 1..{size}, got {k}")
    values = scipy.linalg.eigvals(jacobian(state, p))
    order = np.argsort(np.abs(values), kind="stable")
    selected = values[order][:k]
    if np.all(np.abs(selected.imag) <= imag_tol * np.maximum(1.0, np.abs(selected))):
        return selected.real.copy()
    return selected
