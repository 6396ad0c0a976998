import logging
import numpy as np
from scipy.special import beta as beta_fn

from errors import QuadratureError

logger = logging.getLogger(__name__)


def weight_exponent(n: int) -> float:
    """Exponent of the radial surface measure (1-t^2)^((n-2)/2) on S^n"""
    return (n - 2) / 2.0


def weight_mass(n: int) -> float:
    """Integral of (1-t^2)^((n-2)/2) over [-1, 1]"""
    return float(beta_fn(0.5, weight_exponent(n) + 1.0))


def recurrence_coefficients(n: int, count: int) -> np.ndarray:
    """
    Off-diagonal Jacobi-matrix entries b_1..b_count of the orthonormal
    polynomials for the symmetric weight (1-t^2)^g, g = (n-2)/2:

        t p_k = b_{k+1} p_{k+1} + b_k p_{k-1}

    Index 0 of the returned array is unused (set to 0).
    """
    g = weight_exponent(n)
    k = np.arange(count + 1, dtype=float)
    b = np.zeros(count + 1)
    kk = k[1:]
    b[1:] = np.sqrt(kk * (kk + 2.0 * g) / ((2.0 * kk + 2.0 * g + 1.0) * (2.0 * kk + 2.0 * g - 1.0)))
    return b


def orthonormal_values(n: int, count: int, t):
    """
    Values and t-derivatives of the first `count` orthonormal polynomials.

    Args:
        n: Sphere dimension
        count: Number of polynomials (degrees 0..count-1)
        t: Evaluation points

    Returns:
        (values, derivatives), both of shape (count, len(t))
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    b = recurrence_coefficients(n, count)
    values = np.zeros((count, t.size))
    derivs = np.zeros((count, t.size))
    values[0] = 1.0 / np.sqrt(weight_mass(n))
    if count > 1:
        values[1] = t * values[0] / b[1]
        derivs[1] = values[0] / b[1]
    for k in range(1, count - 1):
        values[k + 1] = (t * values[k] - b[k] * values[k - 1]) / b[k + 1]
        derivs[k + 1] = (values[k] + t * derivs[k] - b[k] * derivs[k - 1]) / b[k + 1]
    return values, derivs


def _top_polynomial(n: int, m: int, t: np.ndarray):
    values, derivs = orthonormal_values(n, m + 1, t)
    return values[m], derivs[m]


def gauss_nodes(n: int, m: int, tol: float = 1e-14, max_iter: int = 100):
    """
    Gauss nodes and weights for the weight (1-t^2)^((n-2)/2) on [-1, 1].

    Nodes are the zeros of the degree-m orthonormal polynomial, found by
    Newton iteration on the three-term recurrence; weights are the
    Christoffel numbers 1 / sum_k p_k(t_i)^2. The rule is exact for
    polynomials of degree <= 2m-1.

    Raises:
        QuadratureError: when the Newton solve does not produce m distinct
            interior nodes
    """
    if m < 1:
        raise ValueError(f"node count must be positive, got {m}")
    g = weight_exponent(n)
    i = np.arange(1, m + 1, dtype=float)
    theta = np.pi * (i - 0.25 + 0.5 * g) / (m + g + 0.5)
    x = np.cos(theta)[::-1].copy()

    converged = False
    for iteration in range(max_iter):
        p, dp = _top_polynomial(n, m, x)
        step = p / dp
        x = x - step
        if np.max(np.abs(step)) <= tol:
            converged = True
            break
    if not converged or not np.all(np.isfinite(x)):
        raise QuadratureError(f"Gauss node iteration for n={n}, m={m} did not converge in {max_iter} steps")

    # enforce exact symmetry about t = 0
    x = np.sort(x)
    x = 0.5 * (x - x[::-1])
    if np.any(np.abs(x) >= 1.0) or np.any(np.diff(x) <= 0.0):
        raise QuadratureError(f"Gauss node iteration for n={n}, m={m} produced repeated or exterior nodes")

    values, _ = orthonormal_values(n, m, x)
    w = 1.0 / np.sum(values**2, axis=0)
    w = 0.5 * (w + w[::-1])
    logger.debug(f"Gauss rule n={n} m={m} converged after {iteration + 1} Newton steps")
    return x, w
