"""
Radial spherical-harmonic toolkit on the round sphere S^n.

Functions radial with respect to the north pole depend only on the height
t = x_{n+1} in [-1, 1]. They are stored as coefficients in an orthonormal
basis of radial harmonics phi_j (Delta phi_j = j(j+n-1) phi_j, with
Delta = -div grad) and evaluated at Gauss nodes for the radial surface
measure (1-t^2)^((n-2)/2) dt.
"""
import math
import logging
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import binom

from spectral.quadrature import gauss_nodes, orthonormal_values

logger = logging.getLogger(__name__)


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


# ------- Models -------
class SphereGrid(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int
    N: int
    nodes: np.ndarray
    weights: np.ndarray
    basis_values: np.ndarray          # B[j][k] = phi_j(t_k)
    basis_derivatives: np.ndarray     # d/dt phi_j at t_k
    eigenvalues: np.ndarray           # j(j+n-1), j < N

    @field_validator("nodes", "weights", "basis_values", "basis_derivatives", "eigenvalues", mode="before")
    @classmethod
    def _as_frozen_array(cls, value):
        return _frozen_array(value)

    @property
    def node_count(self) -> int:
        return int(self.nodes.size)

    @property
    def parity(self) -> np.ndarray:
        return (-1.0) ** np.arange(self.N)

    def inner(self, f_values, g_values) -> float:
        """Discrete inner product of two nodal value vectors"""
        return float(np.sum(self.weights * f_values * g_values))


class SpectralField(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coeffs: np.ndarray
    grid: SphereGrid

    @field_validator("coeffs", mode="before")
    @classmethod
    def _as_frozen_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_length(self):
        if self.coeffs.shape != (self.grid.N,):
            raise ValueError(f"expected {self.grid.N} coefficients, got shape {self.coeffs.shape}")
        return self


# ------- Spectrum -------
def eigenvalue(n: int, j: int) -> int:
    """j-th radial eigenvalue j(j+n-1) of the Laplace-Beltrami operator on S^n"""
    if n < 2:
        raise ValueError(f"sphere dimension must be >= 2, got {n}")
    if j < 0:
        raise ValueError(f"eigenvalue index must be >= 0, got {j}")
    return j * (j + n - 1)


def sphere_spectrum(n: int, jmax: int) -> List[Tuple[float, int]]:
    """Radial spectrum [(lambda_j, 1)] for j = 0..jmax; radial multiplicities are 1"""
    if jmax < 0:
        raise ValueError(f"jmax must be >= 0, got {jmax}")
    return [(float(eigenvalue(n, j)), 1) for j in range(jmax + 1)]


def spectrum_up_to(n: int, bound: float) -> List[Tuple[float, int]]:
    """Radial spectrum through the first eigenvalue strictly above bound"""
    jmax = 0
    while eigenvalue(n, jmax) <= bound:
        jmax += 1
    return sphere_spectrum(n, jmax)


def check_mode_order(spectrum: List[Tuple[float, int]]):
    """
    Require a radial spectrum listed by mode, j = 0, 1, 2, ..., so that a
    list position is the mode index. The dimension is read off lambda_1 = n.

    Raises:
        ValueError: empty, not starting at 0, or an entry is not j(j+n-1)
    """
    if not spectrum or spectrum[0][0] != 0.0:
        raise ValueError("radial spectrum must start at mode j = 0 (eigenvalue 0)")
    if len(spectrum) < 2:
        return
    n = spectrum[1][0]
    for j, (ev, _) in enumerate(spectrum):
        if abs(ev - j * (j + n - 1.0)) > 1e-9 * max(1.0, abs(ev)):
            raise ValueError(f"spectrum entry {j} is {ev:g}, expected j(j+n-1) = {j * (j + n - 1.0):g} for n = {n:g}")


def jacobi_kernel(n: int, j0: int, t):
    """
    Radial harmonic of degree j0 as the double binomial sum

        sum_j C(j0+(n-2)/2, j) C(j0+(n-2)/2, j0-j) ((t-1)/2)^(j0-j) ((t+1)/2)^j

    Generalized (Gamma-function) binomials cover odd n. The alternating
    sum cancels badly for large j0; the grid basis uses the recurrence and
    this form serves as the reference evaluation.
    """
    if n < 2:
        raise ValueError(f"sphere dimension must be >= 2, got {n}")
    if j0 < 0:
        raise ValueError(f"degree must be >= 0, got {j0}")
    t_arr = np.asarray(t, dtype=float)
    upper = j0 + (n - 2) / 2.0
    total = np.zeros_like(t_arr)
    lower = (t_arr - 1.0) / 2.0
    higher = (t_arr + 1.0) / 2.0
    for j in range(j0 + 1):
        total = total + binom(upper, j) * binom(upper, j0 - j) * lower ** (j0 - j) * higher**j
    if np.ndim(t) == 0:
        return float(total)
    return total


# ------- Grid construction -------
def node_count(N: int, q: Optional[float] = None) -> int:
    """Quadrature size: 2N for non-polynomial nonlinearities, ceil((q-1)N/2)+1 (at least N+2) for integer q"""
    if q is not None and float(q).is_integer():
        return max(N + 2, int(math.ceil((q - 1) * N / 2.0)) + 1)
    return 2 * N


def _modified_gram_schmidt(values: np.ndarray, derivs: np.ndarray, weights: np.ndarray, passes: int = 2):
    values = values.copy()
    derivs = derivs.copy()
    for _ in range(passes):
        for j in range(values.shape[0]):
            for i in range(j):
                r = np.sum(weights * values[j] * values[i])
                values[j] -= r * values[i]
                derivs[j] -= r * derivs[i]
            norm = np.sqrt(np.sum(weights * values[j] ** 2))
            values[j] /= norm
            derivs[j] /= norm
    return values, derivs


@lru_cache(maxsize=32)
def build_grid(n: int, N: int, q: Optional[float] = None) -> SphereGrid:
    """
    Build quadrature nodes/weights and the orthonormal radial basis on S^n.

    Args:
        n: Sphere dimension (>= 2)
        N: Number of basis modes (>= 4)
        q: Nonlinearity exponent, used to pick the de-aliasing node count

    Returns:
        Immutable SphereGrid; grids are cached and safe to share
    """
    if n < 2:
        raise ValueError(f"sphere dimension must be >= 2, got {n}")
    if N < 4:
        raise ValueError(f"need at least 4 basis modes, got {N}")
    m = node_count(N, q)
    nodes, weights = gauss_nodes(n, m)
    raw_values, raw_derivs = orthonormal_values(n, N, nodes)
    values, derivs = _modified_gram_schmidt(raw_values, raw_derivs, weights)
    logger.debug(f"Built sphere grid n={n}, N={N}, nodes={m}")
    return SphereGrid(
        n=n,
        N=N,
        nodes=nodes,
        weights=weights,
        basis_values=values,
        basis_derivatives=derivs,
        eigenvalues=np.array([eigenvalue(n, j) for j in range(N)], dtype=float),
    )


# ------- Transforms -------
def synthesize(field: SpectralField) -> np.ndarray:
    """Nodal values of a field"""
    return field.coeffs @ field.grid.basis_values


def analyze(values, grid: SphereGrid) -> SpectralField:
    """Coefficients of nodal values via the discrete inner product"""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.node_count,):
        raise ValueError(f"expected {grid.node_count} nodal values, got shape {values.shape}")
    return SpectralField(coeffs=grid.basis_values @ (grid.weights * values), grid=grid)


def derivative_values(field: SpectralField) -> np.ndarray:
    """Nodal values of d/dt of a field"""
    return field.coeffs @ field.grid.basis_derivatives


def laplacian_apply(field: SpectralField) -> SpectralField:
    return SpectralField(coeffs=field.coeffs * field.grid.eigenvalues, grid=field.grid)


def reflect(field: SpectralField) -> SpectralField:
    """Reflection across the equator, t -> -t"""
    return SpectralField(coeffs=field.coeffs * field.grid.parity, grid=field.grid)


def basis_field(grid: SphereGrid, j: int) -> SpectralField:
    if not 0 <= j < grid.N:
        raise ValueError(f"mode {j} outside 0..{grid.N - 1}")
    coeffs = np.zeros(grid.N)
    coeffs[j] = 1.0
    return SpectralField(coeffs=coeffs, grid=grid)


def constant_field(grid: SphereGrid, value: float) -> SpectralField:
    coeffs = np.zeros(grid.N)
    coeffs[0] = value / grid.basis_values[0, 0]
    return SpectralField(coeffs=coeffs, grid=grid)


def resample(field: SpectralField, grid: SphereGrid) -> SpectralField:
    """Move a field to another grid of the same dimension by padding or truncating coefficients"""
    if grid.n != field.grid.n:
        raise ValueError(f"cannot move a field from S^{field.grid.n} to S^{grid.n}")
    coeffs = np.zeros(grid.N)
    count = min(grid.N, field.grid.N)
    coeffs[:count] = field.coeffs[:count]
    return SpectralField(coeffs=coeffs, grid=grid)
