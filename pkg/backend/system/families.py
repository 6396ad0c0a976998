"""
C^1 parameter curves alpha -> SystemParams on [-delta, delta] and the
numeric checks of the bifurcation hypotheses along them.

Beta labels: system_algebra orders beta1 >= beta2. Families keep the
labels of their construction in analytic_beta, where beta2 is always the
branch meant to resonate with the spectrum; labelled_betas converts.
"""
import math
import logging
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import DomainViolation, NonpositiveRadicand, SchroBranchError, SingularCoupling
from spectral.spectral_sphere import check_mode_order, eigenvalue, spectrum_up_to
from system.system_algebra import PARAM_NAMES, SystemParams, constant_state

logger = logging.getLogger(__name__)

SAMPLE_COUNT = 101
FD_STEP = 1e-5
MATCH_TOL = 1e-9
NONRESONANCE_TOL = 1e-6
SLOPE_TOL = 1e-8
EPSILON_MAX = 0.5

THEOREM5_CASES = (
    "EqLambda",
    "Lt_aDominant",
    "Lt_bDominant_sqrt6",
    "Lt_mixed_b2",
    "Lt_a11eq_a21",
    "Lt_a12eq_a22",
)
EPSILON_CASES = ("Lt_aDominant", "Lt_a11eq_a21")

Spectrum = List[Tuple[float, int]]
Scalar = Union[float, Callable[[float], float]]


# ------- Models -------
class ParamFamily(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eval: Callable[[float], SystemParams]
    delta: float = Field(gt=0.0)
    label: str
    kind: str = "explicit"
    analytic_beta: Optional[Callable[[float], Tuple[float, float]]] = None
    # (lambda(alpha), a(alpha), b(alpha)) of the symmetric sphere system
    symmetric_parts: Optional[Callable[[float], Tuple[float, float, float]]] = None
    # constant (a, b) of the lambda-scaled constructions
    shape: Optional[Tuple[float, float]] = None
    metadata: Dict[str, float] = {}

    def __call__(self, alpha: float) -> SystemParams:
        return self.eval(alpha)

    def sample(self, count: int = SAMPLE_COUNT) -> np.ndarray:
        return np.linspace(-self.delta, self.delta, count)


class ConditionReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    a1: Optional[bool] = None
    a2: Optional[bool] = None
    a2_even_modes: Optional[bool] = None
    a3: Optional[bool] = None
    b1: bool
    b2: bool
    b3: bool
    b4: bool
    beta1_0: Optional[float] = None
    beta2_0: Optional[float] = None
    beta2_prime_0: Optional[float] = None
    fd_step: float = FD_STEP
    resonance_distance: Optional[float] = None
    j0: Optional[int] = None
    resonant_branch: Optional[int] = None   # index in the beta1 >= beta2 ordering
    kernel_dimension: int = 0
    notes: List[str] = []

    @property
    def passed(self) -> bool:
        checks = [self.b1, self.b2, self.b3, self.b4]
        checks += [flag for flag in (self.a1, self.a2, self.a3) if flag is not None]
        return all(checks)


def _as_function(value: Scalar) -> Callable[[float], float]:
    if callable(value):
        return value
    constant = float(value)
    return lambda alpha: constant


def _validate(family: ParamFamily) -> ParamFamily:
    """Constant solution and linearization must exist on the whole sample"""
    for alpha in family.sample():
        try:
            constant_state(family.eval(float(alpha)))
        except (SchroBranchError, ValueError) as e:
            raise DomainViolation(f"{family.label} invalid at alpha={alpha:.6g}: {e}")
    return family


# ------- Symmetric sphere families -------
def sphere_symmetric_family(lam: Scalar, a: Scalar, b: Scalar, q: float, delta: float = 0.2,
                            label: str = "symmetric") -> ParamFamily:
    """
    Family lambda1 = lambda2 = lambda(alpha), a11 = a22 = a(alpha), a12 = a21 = b(alpha).

    Args:
        lam: lambda(alpha), callable or constant
        a: a(alpha), callable or constant
        b: b(alpha), callable or constant
        q: Nonlinearity exponent
        delta: Half-width of the parameter interval

    Raises:
        DomainViolation: lambda (a+b) <= 0 or a = +-b somewhere on the sample
    """
    lam_fn, a_fn, b_fn = _as_function(lam), _as_function(a), _as_function(b)
    if not q > 2.0:
        raise DomainViolation(f"exponent q must be > 2, got {q}")

    for alpha in np.linspace(-delta, delta, SAMPLE_COUNT):
        lam_v, a_v, b_v = lam_fn(alpha), a_fn(alpha), b_fn(alpha)
        if not lam_v * (a_v + b_v) > 0.0:
            raise DomainViolation(f"lambda (a+b) = {lam_v * (a_v + b_v):.6g} is not positive at alpha={alpha:.6g}")
        if a_v == b_v or a_v == -b_v:
            raise DomainViolation(f"a = +-b at alpha={alpha:.6g}")

    def eval_params(alpha: float) -> SystemParams:
        lam_v, a_v, b_v = lam_fn(alpha), a_fn(alpha), b_fn(alpha)
        return SystemParams(lambda1=lam_v, lambda2=lam_v, a11=a_v, a12=b_v, a21=b_v, a22=a_v, q=q)

    def analytic_beta(alpha: float) -> Tuple[float, float]:
        lam_v, a_v, b_v = lam_fn(alpha), a_fn(alpha), b_fn(alpha)
        return lam_v, lam_v * (a_v - b_v) / (a_v + b_v)

    family = ParamFamily(
        eval=eval_params,
        delta=delta,
        label=label,
        kind="symmetric",
        analytic_beta=analytic_beta,
        symmetric_parts=lambda alpha: (lam_fn(alpha), a_fn(alpha), b_fn(alpha)),
        metadata={"q": q},
    )
    return _validate(family)


def resonant_symmetric_family(n: int, j0: int, q: float, a: float = 3.0, b: float = 1.0,
                              delta: float = 0.2) -> ParamFamily:
    """
    Symmetric family whose beta2(alpha) = lambda_j0 (1 + alpha) / (q - 2) crosses
    the j0-th sphere eigenvalue at alpha = 0 with slope lambda_j0 / (q - 2).
    """
    if j0 < 1:
        raise ValueError(f"resonant mode must be >= 1, got {j0}")
    target = eigenvalue(n, j0)
    scale = (a + b) / (a - b) if a != b else math.inf
    if not math.isfinite(scale):
        raise DomainViolation("a = b leaves beta2 identically zero")

    def lam(alpha: float) -> float:
        return target * (1.0 + alpha) / (q - 2.0) * scale

    family = sphere_symmetric_family(lam, a, b, q, delta=delta, label=f"resonant_symmetric(n={n}, j0={j0})")
    return family.model_copy(update={"metadata": {"q": q, "n": n, "j0": j0, "lambda0": target}})


# ------- Lambda-scaled constructions -------
def _scaled_family(label: str, a: float, b: float, q: float, lambda1: Callable[[float], float],
                   ratio: float, analytic_beta, delta: float, metadata: Dict[str, float]) -> ParamFamily:
    """a11 = lambda1 a, a12 = lambda1 b, a21 = lambda2 b, a22 = lambda2 a with lambda2 = ratio * lambda1"""

    def eval_params(alpha: float) -> SystemParams:
        l1 = lambda1(alpha)
        l2 = ratio * l1
        return SystemParams(lambda1=l1, lambda2=l2, a11=l1 * a, a12=l1 * b, a21=l2 * b, a22=l2 * a, q=q)

    return ParamFamily(
        eval=eval_params,
        delta=delta,
        label=label,
        kind="theorem5",
        analytic_beta=analytic_beta,
        shape=(a, b),
        metadata=metadata,
    )


def _distance_to_spectrum(value: float, spectrum: Optional[Spectrum]) -> float:
    if not spectrum:
        return math.inf
    return min(abs(value - ev) for ev, _ in spectrum)


def theorem5_case(case_id: str, lambda0: float, q: float, lam: float = 3.0, epsilon: float = 0.1,
                  spectrum: Optional[Spectrum] = None, delta: float = 0.2, n: Optional[int] = None) -> ParamFamily:
    """
    One of the six explicit families with beta2(0) = beta2'(0) = lambda0 / (q - 2).

    Args:
        case_id: One of THEOREM5_CASES
        lambda0: Non-zero Laplacian eigenvalue to resonate with
        q: Nonlinearity exponent (> 2)
        lam: lambda in (lambda0, inf) minus the spectrum (EqLambda only)
        epsilon: Small parameter in (0, 0.5] (Lt_aDominant, Lt_a11eq_a21)
        spectrum: Laplacian spectrum used to validate the construction
        delta: Half-width of the parameter interval
        n: Sphere dimension; builds the spectrum when none is given. With
            neither, the checks that lambda0, lambda and (q-2) beta1(0)
            sit on or off the spectrum are skipped and a warning is logged

    Raises:
        ValueError: unknown case_id
        DomainViolation: the inputs break the construction's requirements
    """
    if case_id not in THEOREM5_CASES:
        raise ValueError(f"unknown case '{case_id}', expected one of {THEOREM5_CASES}")
    if not q > 2.0:
        raise DomainViolation(f"exponent q must be > 2, got {q}")
    if spectrum is None and n is not None:
        spectrum = spectrum_up_to(n, 2.0 * max(lambda0, lam) + 1.0)
    if not spectrum:
        logger.warning(f"{case_id}: no spectrum supplied, resonance checks are skipped")
    if not lambda0 > 0.0:
        raise DomainViolation(f"lambda0 must be a non-zero eigenvalue, got {lambda0}")
    if spectrum and _distance_to_spectrum(lambda0, spectrum) > MATCH_TOL:
        raise DomainViolation(f"lambda0 = {lambda0} is not in the supplied spectrum")
    if case_id in EPSILON_CASES and not 0.0 < epsilon <= EPSILON_MAX:
        raise DomainViolation(f"epsilon must lie in (0, {EPSILON_MAX}], got {epsilon}")

    k = q - 2.0
    beta2 = lambda alpha: lambda0 * (alpha + 1.0) / k
    metadata = {"lambda0": lambda0, "q": q}

    if case_id == "EqLambda":
        if not lam > lambda0:
            raise DomainViolation(f"lambda must exceed lambda0 = {lambda0}, got {lam}")
        if _distance_to_spectrum(lam, spectrum) <= MATCH_TOL:
            raise DomainViolation(f"lambda = {lam} is a Laplacian eigenvalue")
        a, b = (lambda0 + lam) / k, (lam - lambda0) / k
        lambda1 = lambda alpha: lam * (alpha + 1.0) / k
        ratio = 1.0
        beta1_0 = lam / k
        metadata["lambda"] = lam
    elif case_id == "Lt_aDominant":
        eps = epsilon
        root = math.sqrt(5.0 + 4.0 * eps)
        a, b = 1.0, eps
        lambda1 = lambda alpha: 2.0 * (1.0 + eps) * lambda0 * (alpha + 1.0) / ((2.0 + eps + eps * root) * k)
        ratio = 1.0 + eps
        beta1_0 = (2.0 + eps - eps * root) * lambda0 / ((2.0 + eps + eps * root) * k)
        metadata["epsilon"] = eps
    elif case_id == "Lt_bDominant_sqrt6":
        a, b = 1.0, math.sqrt(6.0)
        lambda1 = lambda alpha: (1.0 + math.sqrt(6.0)) * lambda0 * (alpha + 1.0) / (5.0 * k)
        ratio = 2.0
        beta1_0 = -2.0 * lambda0 / (5.0 * k)
    elif case_id == "Lt_mixed_b2":
        root = 2.0 * math.sqrt(6.0)
        a, b = 1.0, 2.0
        lambda1 = lambda alpha: 3.0 * lambda0 * (alpha + 1.0) / ((3.0 + root) * k)
        ratio = 5.0
        beta1_0 = (3.0 - root) * lambda0 / ((3.0 + root) * k)
    elif case_id == "Lt_a11eq_a21":
        eps = epsilon
        head = (2.0 + eps) * (1.0 + eps)
        root = math.sqrt((1.0 + eps) * (4.0 + eps**2 + eps**3))
        a, b = 1.0 + eps, 1.0
        lambda1 = lambda alpha: 2.0 * (2.0 + eps) * lambda0 * (alpha + 1.0) / ((head + root) * k)
        ratio = 1.0 + eps
        beta1_0 = (head - root) * lambda0 / ((head + root) * k)
        metadata["epsilon"] = eps
    else:
        root = math.sqrt(7.0)
        a, b = 1.0, 3.0
        lambda1 = lambda alpha: 2.0 * lambda0 * (alpha + 1.0) / ((1.0 + root) * k)
        ratio = 3.0
        beta1_0 = (1.0 - root) * lambda0 / ((1.0 + root) * k)

    def analytic_beta(alpha: float) -> Tuple[float, float]:
        return beta1_0 * (alpha + 1.0), beta2(alpha)

    family = _scaled_family(case_id, a, b, q, lambda1, ratio, analytic_beta, delta, metadata)
    _assert_sign_facts(case_id, family.eval(0.0))
    if _distance_to_spectrum(k * beta1_0, spectrum) < NONRESONANCE_TOL:
        raise DomainViolation(f"{case_id}: (q-2) beta1(0) = {k * beta1_0:.12g} is resonant")
    logger.debug(f"Built {case_id} family with lambda0={lambda0}, q={q}")
    return _validate(family)


def _assert_sign_facts(case_id: str, p: SystemParams):
    """Coefficient orderings each construction is built to satisfy"""
    facts = {
        "EqLambda": p.lambda1 == p.lambda2 > 0.0 and 0.0 < p.a21 == p.a12 < p.a11 == p.a22,
        "Lt_aDominant": 0.0 < p.lambda1 < p.lambda2 and 0.0 < p.a21 < p.a11 and 0.0 < p.a12 < p.a22,
        "Lt_bDominant_sqrt6": 0.0 < p.lambda1 < p.lambda2 and 0.0 < p.a11 < p.a21 and 0.0 < p.a22 < p.a12,
        "Lt_mixed_b2": 0.0 < p.lambda1 < p.lambda2 and 0.0 < p.a11 < p.a21 and 0.0 < p.a12 < p.a22,
        "Lt_a11eq_a21": 0.0 < p.lambda1 < p.lambda2 and math.isclose(p.a11, p.a21, rel_tol=1e-14) and 0.0 < p.a12 < p.a22,
        "Lt_a12eq_a22": 0.0 < p.lambda1 < p.lambda2 and 0.0 < p.a11 < p.a21 and math.isclose(p.a12, p.a22, rel_tol=1e-14),
    }
    if not facts[case_id]:
        raise DomainViolation(f"{case_id}: coefficient orderings do not hold for {p}")


# ------- Explicit families -------
def linear_family(base: SystemParams, slopes: Optional[Dict[str, float]] = None, delta: float = 0.2,
                  label: str = "explicit", validate: bool = True) -> ParamFamily:
    """
    Family base + alpha * slopes over the six coupling constants; q stays fixed.
    validate=False admits parameter sets without a constant solution, for
    regime classification and multistart verification.
    """
    slopes = slopes or {}
    unknown = set(slopes) - set(PARAM_NAMES)
    if unknown:
        raise ValueError(f"unknown slope keys: {sorted(unknown)}")

    def eval_params(alpha: float) -> SystemParams:
        values = {name: getattr(base, name) + alpha * slopes.get(name, 0.0) for name in PARAM_NAMES}
        return SystemParams(q=base.q, **values)

    family = ParamFamily(eval=eval_params, delta=delta, label=label, kind="explicit", metadata={"q": base.q})
    return _validate(family) if validate else family


# ------- Derived quantities -------
def family_discriminant(family: ParamFamily, alpha: float) -> float:
    """(lambda1 - lambda2)^2 a^2 + 4 lambda1 lambda2 b^2, equal to (a+b)^2 D(alpha)"""
    if family.shape is None:
        raise ValueError(f"family '{family.label}' has no constant (a, b) shape")
    a, b = family.shape
    p = family.eval(alpha)
    return (p.lambda1 - p.lambda2) ** 2 * a**2 + 4.0 * p.lambda1 * p.lambda2 * b**2


def _resonant_index(betas: Tuple[float, float], q: float, spectrum: Spectrum) -> int:
    distances = [_distance_to_spectrum((q - 2.0) * beta, [(ev, m) for ev, m in spectrum if ev > 0.0]) for beta in betas]
    return 1 if distances[1] <= distances[0] else 0


def resonant_branch(family: ParamFamily, spectrum: Optional[Spectrum] = None) -> int:
    """Branch (1 or 2, beta1 >= beta2 ordering) carrying the family's labelled beta2 at alpha = 0"""
    state = constant_state(family.eval(0.0))
    algebra = (state.beta1, state.beta2)
    if family.analytic_beta is not None:
        target = family.analytic_beta(0.0)[1]
        return 2 if abs(algebra[1] - target) <= abs(algebra[0] - target) else 1
    if spectrum:
        return _resonant_index(algebra, family.eval(0.0).q, spectrum) + 1
    return 2


def labelled_betas(family: ParamFamily, alpha: float, spectrum: Optional[Spectrum] = None) -> Tuple[float, float]:
    """(beta1, beta2) in the family's labels, computed from the linearization"""
    state = constant_state(family.eval(alpha))
    if resonant_branch(family, spectrum) == 2:
        return state.beta1, state.beta2
    return state.beta2, state.beta1


def _match(value: float, spectrum: Spectrum, tol: float) -> Optional[Tuple[int, int]]:
    """(index, multiplicity) of a spectrum entry within tol of value"""
    for index, (ev, multiplicity) in enumerate(spectrum):
        if abs(value - ev) <= tol:
            return index, multiplicity
    return None


def check_conditions(family: ParamFamily, spectrum: Spectrum) -> ConditionReport:
    """
    Evaluate the bifurcation hypotheses numerically.

    B1/B2 on the 101-point sample; B3 by matching (q-2) beta2(0) to the
    spectrum within 1e-9 with odd total kernel dimension; B4 by the central
    difference beta2'(0) (step 1e-5, threshold 1e-8), the lambda1(0) vs
    lambda2(0) disjunction, and non-resonance of (q-2) beta1(0) at distance
    >= 1e-6. Symmetric families also get A1-A3. Failures are reported,
    never raised.

    Raises:
        ValueError: spectrum is not listed by mode from j = 0
    """
    notes: List[str] = []
    check_mode_order(spectrum)
    b1 = b2 = True
    for alpha in family.sample():
        try:
            constant_state(family.eval(float(alpha)))
        except SchroBranchError as e:
            if isinstance(e, (SingularCoupling, NonpositiveRadicand)):
                b1 = False
            b2 = False
            notes.append(f"alpha={alpha:.6g}: {e}")
            break

    if not (b1 and b2):
        logger.warning(f"{family.label}: constant solution or linearization fails on the sample")
        return ConditionReport(b1=b1, b2=b2, b3=False, b4=False, notes=notes)

    p0 = family.eval(0.0)
    k = p0.q - 2.0
    branch = resonant_branch(family, spectrum)
    index = branch - 1

    def branch_betas(alpha: float) -> Tuple[float, float]:
        state = constant_state(family.eval(alpha))
        algebra = (state.beta1, state.beta2)
        return algebra[1 - index], algebra[index]

    beta1_0, beta2_0 = branch_betas(0.0)
    beta2_prime = (branch_betas(FD_STEP)[1] - branch_betas(-FD_STEP)[1]) / (2.0 * FD_STEP)

    resonant = _match(k * beta2_0, spectrum, MATCH_TOL)
    if resonant is not None and spectrum[resonant[0]][0] <= 0.0:
        resonant = None
    distance = _distance_to_spectrum(k * beta1_0, spectrum)
    beta1_match = _match(k * beta1_0, spectrum, MATCH_TOL)
    kernel_dimension = (resonant[1] if resonant else 0) + (beta1_match[1] if beta1_match else 0)

    b3 = resonant is not None and kernel_dimension % 2 == 1
    if resonant is None:
        notes.append(f"(q-2) beta2(0) = {k * beta2_0:.12g} matches no non-zero eigenvalue")
    slope_ok = abs(beta2_prime) > SLOPE_TOL
    distinct = p0.lambda1 != p0.lambda2 or beta2_0 != p0.lambda1
    nonresonant = distance >= NONRESONANCE_TOL
    b4 = slope_ok and distinct and nonresonant
    if not slope_ok:
        notes.append(f"beta2'(0) = {beta2_prime:.3e} is numerically zero")
    if not nonresonant:
        notes.append(f"(q-2) beta1(0) = {k * beta1_0:.12g} lies within {distance:.3e} of the spectrum")

    a1 = a2 = a2_even = a3 = None
    if family.symmetric_parts is not None:
        lam0, a0, b0 = family.symmetric_parts(0.0)
        a1 = lam0 * (a0 + b0) > 0.0
        a2 = nonresonant
        n = family.metadata.get("n")
        even = [ev for j, (ev, _) in enumerate(spectrum) if j >= 2 and j % 2 == 0]
        if n is not None:
            even = [eigenvalue(int(n), 2 * j) for j in range(1, len(spectrum) // 2 + 1)]
        a2_even = _distance_to_spectrum(k * lam0, [(ev, 1) for ev in even]) >= NONRESONANCE_TOL
        a3 = resonant is not None and slope_ok
        if a2 != a2_even:
            notes.append("resonance check on the full spectrum differs from the even-mode check")

    report = ConditionReport(
        a1=a1, a2=a2, a2_even_modes=a2_even, a3=a3,
        b1=b1, b2=b2, b3=b3, b4=b4,
        beta1_0=beta1_0, beta2_0=beta2_0, beta2_prime_0=beta2_prime,
        resonance_distance=distance if math.isfinite(distance) else None,
        j0=resonant[0] if resonant else None,
        resonant_branch=branch,
        kernel_dimension=kernel_dimension,
        notes=notes,
    )
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, f"{family.label}: conditions passed={report.passed} j0={report.j0}")
    return report
