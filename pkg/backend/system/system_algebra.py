"""
Exact algebra of the coupled system

    Delta u1 + lambda1 u1 = a11 u1^(q-1) + a12 u2^(q-2) u1
    Delta u2 + lambda2 u2 = a21 u1^(q-2) u2 + a22 u2^(q-1)

constant solutions, the 2x2 linearization matrix A and its diagonalizer,
the reduced nonlinearity, and the sign-condition regime classifier.
"""
import math
import logging
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from errors import DegenerateSpectrum, NonpositiveRadicand, PositivityBreach, SingularCoupling

logger = logging.getLogger(__name__)

PARAM_NAMES = ("lambda1", "lambda2", "a11", "a12", "a21", "a22")
DISCRIMINANT_RTOL = 1e-14


# ------- Models -------
class SystemParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda1: float
    lambda2: float
    a11: float
    a12: float
    a21: float
    a22: float
    q: float

    @field_validator("q")
    @classmethod
    def _check_exponent(cls, value):
        if not value > 2.0:
            raise ValueError(f"exponent q must be > 2, got {value}")
        return value

    @field_validator(*PARAM_NAMES, "q")
    @classmethod
    def _check_finite(cls, value):
        if not math.isfinite(value):
            raise ValueError("parameters must be finite")
        return value

    def swapped(self) -> "SystemParams":
        """Relabel u1 <-> u2"""
        return SystemParams(
            lambda1=self.lambda2, lambda2=self.lambda1,
            a11=self.a22, a12=self.a21, a21=self.a12, a22=self.a11,
            q=self.q,
        )

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES])


class ConstantState(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u1bar: float
    u2bar: float
    A: np.ndarray
    beta1: float
    beta2: float
    D: float
    P: np.ndarray
    Pinv: np.ndarray

    @property
    def ubar(self) -> np.ndarray:
        return np.array([self.u1bar, self.u2bar])

    def beta(self, branch: int) -> float:
        if branch not in (1, 2):
            raise ValueError(f"beta branch must be 1 or 2, got {branch}")
        return self.beta1 if branch == 1 else self.beta2


class Verdict(str, Enum):
    NO_SOLUTION_THM4I = "NoSolution_Thm4i"
    NO_SOLUTION_THM5I = "NoSolution_Thm5i"
    SYNCHRONIZED_STRICT = "SynchronizedOnly_strict"
    SYNCHRONIZED_EQUAL = "SynchronizedOnly_equal"
    BIFURCATION_CANDIDATE = "BifurcationCandidate"
    UNCLASSIFIED = "Unclassified"


class RegimeReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    verdict: Verdict
    sync_ratio: Optional[float] = None
    notes: str = ""

    @model_validator(mode="after")
    def _ratio_matches_verdict(self):
        if (self.sync_ratio is not None) != (self.verdict == Verdict.SYNCHRONIZED_STRICT):
            raise ValueError("sync_ratio is present exactly for SynchronizedOnly_strict")
        return self


# ------- Constant solution and linearization -------
def constant_solution(p: SystemParams) -> Tuple[float, float]:
    """
    Unique positive constant solution (u1bar, u2bar).

    Raises:
        SingularCoupling: a11*a22 - a21*a12 == 0
        NonpositiveRadicand: no positive constant solution exists
    """
    det = p.a11 * p.a22 - p.a21 * p.a12
    if det == 0.0:
        raise SingularCoupling(f"a11*a22 - a21*a12 vanishes for {p}")
    r1 = (p.lambda1 * p.a22 - p.lambda2 * p.a12) / det
    r2 = (p.lambda2 * p.a11 - p.lambda1 * p.a21) / det
    if not (r1 > 0.0 and r2 > 0.0):
        raise NonpositiveRadicand(f"radicands ({r1:.6g}, {r2:.6g}) are not both positive")
    exponent = 1.0 / (p.q - 2.0)
    return r1**exponent, r2**exponent


def linearization_matrix(p: SystemParams, ubar: Tuple[float, float]) -> np.ndarray:
    u1, u2 = ubar
    k = p.q - 2.0
    return np.array([
        [p.a11 * u1**k, p.a12 * u2 ** (k - 1.0) * u1],
        [p.a21 * u1 ** (k - 1.0) * u2, p.a22 * u2**k],
    ])


def is_symmetric_coupling(p: SystemParams) -> bool:
    return p.a11 == p.a22 and p.a12 == p.a21 and p.lambda1 == p.lambda2


def _left_eigenvector(A: np.ndarray, beta: float) -> np.ndarray:
    # p (A - beta I) = 0; take the better conditioned of the two column equations
    first = np.array([A[1, 0], beta - A[0, 0]])
    second = np.array([beta - A[1, 1], A[0, 1]])
    row = first if np.linalg.norm(first) >= np.linalg.norm(second) else second
    row = row / np.linalg.norm(row)
    if row[0] < 0.0 or (row[0] == 0.0 and row[1] < 0.0):
        row = -row
    return row


def linearization(p: SystemParams, ubar: Tuple[float, float]) -> ConstantState:
    """
    Linearization data at the constant solution: A, its eigenvalues
    beta1 >= beta2 (beta1 takes +sqrt(D)), the discriminant D and the
    left-eigenvector matrix P with A = Pinv diag(beta1, beta2) P.

    Raises:
        DegenerateSpectrum: D not above round-off, equal eigenvalues or a zero eigenvalue
    """
    u1, u2 = ubar
    k = p.q - 2.0
    x1 = p.a11 * u1**k
    x2 = p.a22 * u2**k
    D = (x1 - x2) ** 2 + 4.0 * p.a12 * p.a21 * u1**k * u2**k
    # D below round-off of the diagonal is a repeated eigenvalue
    if not D > DISCRIMINANT_RTOL * (abs(x1) + abs(x2)) ** 2:
        raise DegenerateSpectrum(f"discriminant D = {D:.6g} is not positive")
    root = math.sqrt(D)
    beta1 = (x1 + x2 + root) / 2.0
    beta2 = (x1 + x2 - root) / 2.0
    if beta1 == beta2 or beta1 == 0.0 or beta2 == 0.0:
        raise DegenerateSpectrum(f"eigenvalues ({beta1:.6g}, {beta2:.6g}) must be distinct and non-zero")

    A = linearization_matrix(p, ubar)
    if is_symmetric_coupling(p):
        # eigenvector (1, 1) carries ubar^(q-2)(a + b), (1, -1) carries ubar^(q-2)(a - b)
        P = np.array([[1.0, 1.0], [1.0, -1.0]]) if p.a12 > 0.0 else np.array([[1.0, -1.0], [1.0, 1.0]])
    else:
        P = np.vstack([_left_eigenvector(A, beta1), _left_eigenvector(A, beta2)])
    try:
        Pinv = np.linalg.inv(P)
    except np.linalg.LinAlgError:
        raise DegenerateSpectrum(f"left eigenvectors of A are parallel for {p}")
    for array in (A, P, Pinv):
        array.setflags(write=False)
    return ConstantState(u1bar=u1, u2bar=u2, A=A, beta1=beta1, beta2=beta2, D=D, P=P, Pinv=Pinv)


def constant_state(p: SystemParams) -> ConstantState:
    return linearization(p, constant_solution(p))


# ------- Nonlinearity -------
def signed_power(u, exponent: float):
    """|u|^exponent * sign(u), the odd extension of u^exponent"""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.abs(u) ** exponent


def coupled_nonlinearity(p: SystemParams, u1, u2):
    """Right-hand sides N1, N2 in the |u|^(q-2) u form"""
    k = p.q - 2.0
    m1 = np.abs(u1) ** k
    m2 = np.abs(u2) ** k
    n1 = p.a11 * m1 * u1 + p.a12 * m2 * u1
    n2 = p.a21 * m1 * u2 + p.a22 * m2 * u2
    return n1, n2


def coupled_nonlinearity_derivatives(p: SystemParams, u1, u2):
    """Pointwise partial derivatives ((dN1/du1, dN1/du2), (dN2/du1, dN2/du2))"""
    k = p.q - 2.0
    m1 = np.abs(u1) ** k
    m2 = np.abs(u2) ** k
    s1 = signed_power(u1, k - 1.0)
    s2 = signed_power(u2, k - 1.0)
    d11 = (k + 1.0) * p.a11 * m1 + p.a12 * m2
    d12 = k * p.a12 * s2 * u1
    d21 = k * p.a21 * s1 * u2
    d22 = p.a21 * m1 + (k + 1.0) * p.a22 * m2
    return (d11, d12), (d21, d22)


def reduced_nonlinearity(family, alpha: float, v1, v2):
    """
    Nonlinearity of the diagonalized system Delta v = F(alpha, v).

    With (u1, u2) = ubar(alpha) + Pinv (v1, v2), returns
    P(alpha) Ftilde(alpha, u1, u2) where Ftilde = N(u) - lambda u.

    Raises:
        PositivityBreach: the mapped u leaves (0, inf)^2
    """
    p = family.eval(alpha)
    state = constant_state(p)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    u1 = state.u1bar + state.Pinv[0, 0] * v1 + state.Pinv[0, 1] * v2
    u2 = state.u2bar + state.Pinv[1, 0] * v1 + state.Pinv[1, 1] * v2
    if np.any(u1 <= 0.0) or np.any(u2 <= 0.0):
        raise PositivityBreach(f"mapped state leaves the positive quadrant at alpha={alpha}")
    n1, n2 = coupled_nonlinearity(p, u1, u2)
    f1 = n1 - p.lambda1 * u1
    f2 = n2 - p.lambda2 * u2
    if np.ndim(v1) == 0 and np.ndim(v2) == 0:
        # exact zero at the constant solution
        if v1 == 0.0 and v2 == 0.0:
            return 0.0, 0.0
    F1 = state.P[0, 0] * f1 + state.P[0, 1] * f2
    F2 = state.P[1, 0] * f1 + state.P[1, 1] * f2
    if np.ndim(F1) == 0:
        return float(F1), float(F2)
    return F1, F2


# ------- Regime classification -------
def synchronization_ratio(p: SystemParams) -> float:
    """Forced value ((a12-a22)/(a21-a11))^(1/(q-2)) of v = u1/u2 in the strict synchronized regime"""
    return ((p.a12 - p.a22) / (p.a21 - p.a11)) ** (1.0 / (p.q - 2.0))


def _no_solution(p: SystemParams) -> bool:
    forward = (
        p.a21 <= p.a11 and p.a22 <= p.a12 and p.lambda1 <= p.lambda2
        and (p.a21 < p.a11 or p.a22 < p.a12 or p.lambda1 < p.lambda2)
    )
    backward = (
        p.a11 <= p.a21 and p.a12 <= p.a22 and p.lambda2 <= p.lambda1
        and (p.a11 < p.a21 or p.a12 < p.a22 or p.lambda2 < p.lambda1)
    )
    return forward or backward


def classify_regime(p: SystemParams, n: Optional[int] = None) -> RegimeReport:
    """
    Sign taxonomy of the system: non-existence, synchronized-only, or a
    candidate for bifurcation from the constant solution. Comparisons are
    exact on the inputs.

    Args:
        p: System parameters
        n: Optional sphere dimension; adds a rigidity note for synchronized regimes
    """
    if _no_solution(p):
        verdict = Verdict.NO_SOLUTION_THM4I if p.lambda1 == p.lambda2 else Verdict.NO_SOLUTION_THM5I
        return RegimeReport(verdict=verdict, notes="maximum principle on v = u1/u2 excludes positive solutions")

    if p.lambda1 == p.lambda2 and p.a11 < p.a21 and p.a22 < p.a12:
        ratio = synchronization_ratio(p)
        mu = p.a11 + p.a12 * ratio ** (-(p.q - 2.0))
        notes = f"every solution has u1/u2 = {ratio:.17g}; scalar coefficient mu1 = {mu:.17g}"
        if n is not None:
            notes += f"; rigid on S^{n}: {bvv_sphere_check(n, p.q, p.lambda1)}"
        return RegimeReport(verdict=Verdict.SYNCHRONIZED_STRICT, sync_ratio=ratio, notes=notes)

    if p.lambda1 == p.lambda2 and p.a11 == p.a21 and p.a22 == p.a12:
        notes = "u1/u2 satisfies a homogeneous equation and is constant"
        if n is not None:
            notes += f"; rigid on S^{n}: {bvv_sphere_check(n, p.q, p.lambda1)}"
        return RegimeReport(verdict=Verdict.SYNCHRONIZED_EQUAL, notes=notes)

    try:
        state = constant_state(p)
    except (SingularCoupling, NonpositiveRadicand, DegenerateSpectrum) as e:
        return RegimeReport(verdict=Verdict.UNCLASSIFIED, notes=str(e))
    return RegimeReport(
        verdict=Verdict.BIFURCATION_CANDIDATE,
        notes=f"constant solution ({state.u1bar:.17g}, {state.u2bar:.17g}); beta = ({state.beta1:.17g}, {state.beta2:.17g})",
    )


def critical_exponent(n: int) -> float:
    return math.inf if n <= 2 else 2.0 * n / (n - 2.0)


def bvv_sphere_check(n: int, q: float, lam: float) -> bool:
    """
    True when the scalar equation Delta u + lam u = mu u^(q-2) on the round
    S^n has only constant positive solutions: with Ric = (n-1) g the
    criterion reads q <= 2* and (q-2) lam <= n, strictly when q = 2*.
    """
    if n < 2:
        raise ValueError(f"sphere dimension must be >= 2, got {n}")
    if not q > 2.0:
        raise ValueError(f"exponent q must be > 2, got {q}")
    critical = critical_exponent(n)
    if math.isinf(critical):
        return (q - 2.0) * lam <= n
    if math.isclose(q, critical, rel_tol=1e-12):
        return (q - 2.0) * lam < n
    if q > critical:
        return False
    return (q - 2.0) * lam <= n
