import os
import logging
import traceback
from typing import Dict, List, Optional

import numpy as np

from errors import SchroBranchError, StageFailure
from numerics.continuation import detect_bifurcations, trace_branch
from numerics.diagnostics import (
    component_correlation,
    kernel_fit,
    nonsync_indicator,
    sync_measure,
    sync_ratio_check,
    tangent_correlation,
)
from pipeline.config import RunConfig, build_family, run_spectrum
from pipeline.multistart import multistart_solve
from pipeline.report import (
    BranchSummary,
    EventSummary,
    ReportDocument,
    StageError,
    Verification,
    write_branch_csv,
    write_report_json,
)
from spectral.spectral_sphere import build_grid
from state import RunState
from system.families import check_conditions
from system.system_algebra import Verdict, classify_regime, constant_solution, is_symmetric_coupling

logger = logging.getLogger(__name__)

RESIDUAL_LIMIT = 1e-10
QUOTIENT_LIMIT = 1e-6
KERNEL_RATIO_LIMIT = 0.1
TANGENT_LIMIT = 0.99
REFLECTION_LIMIT = 1e-8


def init_state(config: RunConfig) -> RunState:
    family = build_family(config)
    return RunState(
        config=config,
        family=family,
        grid=build_grid(config.manifold.n, config.manifold.N, family.eval(0.0).q),
        spectrum=run_spectrum(config),
        regime=None,
        conditions=None,
        events=None,
        trace=None,
        verifications=[],
        failure=None,
    )


# ------- Stages -------
def stage_conditions(state: RunState) -> RunState:
    state["conditions"] = check_conditions(state["family"], state["spectrum"])
    return state


def stage_detect(state: RunState) -> RunState:
    try:
        state["events"] = detect_bifurcations(state["family"], state["spectrum"], grid=state["grid"])
    except SchroBranchError as e:
        raise StageFailure("detect", str(e))
    return state


def _select_event(state: RunState):
    conditions = state["conditions"]
    candidates = [
        e for e in state["events"]
        if e.j0 == conditions.j0 and e.beta_branch == conditions.resonant_branch
    ]
    if not candidates:
        raise StageFailure("continue", f"no detected crossing for mode j0={conditions.j0}")
    return min(candidates, key=lambda e: abs(e.alpha_star))


def stage_continue(state: RunState) -> RunState:
    if state["conditions"] is None:
        stage_conditions(state)
    if not state["conditions"].passed:
        raise StageFailure("continue", f"bifurcation hypotheses fail: {'; '.join(state['conditions'].notes) or 'see conditions'}")
    if state["events"] is None:
        stage_detect(state)
    event = _select_event(state)
    config = state["config"]
    try:
        state["trace"] = trace_branch(
            event, state["family"], state["grid"],
            config.continuation.options(), config.newton.options(),
        )
    except SchroBranchError as e:
        raise StageFailure("continue", str(e))
    return state


def _check(name: str, passed: bool, detail: str = "") -> Dict:
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, f"Verification {name}: {'pass' if passed else 'FAIL'} {detail}")
    return {"name": name, "passed": bool(passed), "detail": detail}


def _verify_multistart(state: RunState, verdict: Verdict) -> List[Dict]:
    config = state["config"]
    p = state["family"].eval(0.0)
    try:
        scale = max(constant_solution(p))
    except SchroBranchError:
        scale = 1.0
    results = multistart_solve(p, state["grid"], config.verify.multistart, config.verify.seed,
                               config.newton.options(), scale)
    converged = [result for result in results if result is not None]
    count = f"{len(converged)}/{len(results)} converged"

    if verdict in (Verdict.NO_SOLUTION_THM4I, Verdict.NO_SOLUTION_THM5I):
        return [_check("no_positive_solution", not converged, count)]

    checks = [_check("multistart_converged", bool(converged), count)]
    measures = [sync_measure(result) for result in converged]
    worst = max(measures, default=0.0)
    checks.append(_check("synchronized", worst <= config.verify.sync_tol, f"max sync_measure {worst:.3e}"))
    if verdict == Verdict.SYNCHRONIZED_STRICT:
        defects = [sync_ratio_check(result, p) for result in converged]
        worst_ratio = max(defects, default=0.0)
        checks.append(_check("sync_ratio", worst_ratio <= config.verify.ratio_tol, f"max |mean(v) - Lambda| {worst_ratio:.3e}"))
    return checks


def _verify_branch(state: RunState) -> List[Dict]:
    config = state["config"]
    family = state["family"]
    trace = state["trace"]
    points = trace.points
    checks = []

    worst = max(point.residual_inf for point in points)
    checks.append(_check("branch_residual", worst <= RESIDUAL_LIMIT, f"max residual {worst:.3e}"))
    minimum = min(min(values.min() for values in point.state.nodal()) for point in points)
    checks.append(_check("branch_positive", minimum > 0.0, f"min nodal value {minimum:.6g}"))
    later = [point.diagnostics.sync_measure for point in points if point.step >= config.verify.burn_in]
    if later:
        lowest = min(later)
        checks.append(_check("non_synchronized", lowest >= config.verify.branch_sync_min,
                             f"min sync_measure after step {config.verify.burn_in}: {lowest:.3e}"))
    quotient = max(point.diagnostics.quotient_residual for point in points)
    checks.append(_check("quotient_identity", quotient <= QUOTIENT_LIMIT, f"max defect {quotient:.3e}"))

    reflections = [point.diagnostics.reflection_defect for point in points if point.diagnostics.reflection_defect is not None]
    if reflections:
        checks.append(_check("reflection_covariance", max(reflections) <= REFLECTION_LIMIT,
                             f"max defect {max(reflections):.3e}"))

    if len(points) >= 3:
        epsilons, remainders = kernel_fit(points, trace.event, family)
        smallest = int(np.argmin(np.abs(epsilons)))
        ratio = remainders[smallest] / abs(epsilons[smallest])
        checks.append(_check("kernel_expansion", ratio <= KERNEL_RATIO_LIMIT, f"remainder/epsilon {ratio:.3e}"))
        tangent = tangent_correlation(points, trace.event, family)
        checks.append(_check("tangent_direction", tangent >= TANGENT_LIMIT, f"correlation {tangent:.6f}"))
        if is_symmetric_coupling(family.eval(trace.event.alpha_star)):
            nearest = points[smallest]
            correlation = component_correlation(nearest.state, family.eval(nearest.alpha))
            checks.append(_check("antisymmetric_tangent", correlation <= -TANGENT_LIMIT, f"correlation {correlation:.6f}"))
    return checks


def stage_verify(state: RunState) -> RunState:
    p = state["family"].eval(0.0)
    state["regime"] = classify_regime(p, state["config"].manifold.n)
    verdict = state["regime"].verdict
    checks: List[Dict] = []
    if verdict in (Verdict.NO_SOLUTION_THM4I, Verdict.NO_SOLUTION_THM5I,
                   Verdict.SYNCHRONIZED_STRICT, Verdict.SYNCHRONIZED_EQUAL):
        checks += _verify_multistart(state, verdict)
    else:
        if state["conditions"] is not None:
            checks.append(_check("conditions", state["conditions"].passed, f"j0={state['conditions'].j0}"))
        if state["events"] is not None:
            checks.append(_check("bifurcation_detected", bool(state["events"]), f"{len(state['events'])} events"))
        if state["trace"] is not None:
            checks += _verify_branch(state)
    state["verifications"] = checks
    return state


STAGE_FUNCTIONS = {
    "conditions": stage_conditions,
    "detect": stage_detect,
    "continue": stage_continue,
    "verify": stage_verify,
}


def run_pipeline(config: RunConfig, stages: Optional[List[str]] = None) -> RunState:
    """
    Run the requested stages in canonical order. A failing stage is
    recorded and stops the run; earlier results are kept for the report.
    """
    state = init_state(config)
    requested = config.pipeline if stages is None else stages
    for stage in requested:
        logger.info(f"Stage '{stage}' started")
        try:
            STAGE_FUNCTIONS[stage](state)
        except StageFailure as e:
            logger.error(f"Stage '{e.stage}' failed: {e.reason}")
            logger.debug(traceback.format_exc())
            state["failure"] = {"stage": e.stage, "reason": e.reason}
            break
        except SchroBranchError as e:
            logger.error(f"Stage '{stage}' failed: {e}")
            logger.debug(traceback.format_exc())
            state["failure"] = {"stage": stage, "reason": str(e)}
            break
        logger.info(f"Stage '{stage}' finished")
    return state


# ------- Reporting -------
def event_summary(event, family) -> EventSummary:
    try:
        indicator = nonsync_indicator(event, family)
    except SchroBranchError:
        indicator = None
    return EventSummary(
        alpha_star=event.alpha_star,
        j0=event.j0,
        beta_branch=event.beta_branch,
        eigenvalue=event.eigenvalue,
        crossing_slope=event.crossing_slope,
        resonance_slope=event.resonance_slope,
        multiplicity=event.multiplicity,
        simultaneous=event.simultaneous,
        nonsync_indicator=indicator,
    )


def build_report(state: RunState) -> ReportDocument:
    config = state["config"]
    events = state["events"] or []
    branch = None
    if state["trace"] is not None:
        trace = state["trace"]
        key = (trace.event.alpha_star, trace.event.j0, trace.event.beta_branch)
        index = next(i for i, e in enumerate(events) if (e.alpha_star, e.j0, e.beta_branch) == key)
        branch = BranchSummary(event_index=index, points=len(trace.points), termination=trace.reason)
    verifications = [Verification(**check) for check in state["verifications"]]
    failure = StageError(**state["failure"]) if state["failure"] else None
    return ReportDocument(
        config=config.model_dump(mode="json", by_alias=True),
        regime=state["regime"].model_dump(mode="json") if state["regime"] is not None else None,
        conditions=state["conditions"].model_dump(mode="json") if state["conditions"] is not None else None,
        events=[event_summary(event, state["family"]) for event in events],
        branch=branch,
        verifications=verifications,
        failure=failure,
        passed=failure is None and all(check.passed for check in verifications),
    )


def write_outputs(state: RunState, out_dir: Optional[str] = None, formats: Optional[List[str]] = None) -> List[str]:
    config = state["config"]
    out_dir = out_dir or config.output.dir
    formats = formats or config.output.formats
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats and state["trace"] is not None:
        written.append(write_branch_csv(state["trace"].points, os.path.join(out_dir, "branch.csv")))
    if "json" in formats:
        written.append(write_report_json(build_report(state), os.path.join(out_dir, "report.json")))
    return written
