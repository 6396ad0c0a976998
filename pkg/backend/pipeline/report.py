"""
Artifact writers: branch.csv (fixed columns, 17 significant digits) and
report.json, whose layout is the ReportDocument model.
"""
import json
import os
import logging
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict

logger = logging.getLogger(__name__)

BRANCH_COLUMNS = [
    "step", "alpha", "s", "epsilon", "sync_measure", "v_min", "v_max",
    "residual_inf", "quotient_residual", "min_u1", "max_u1", "min_u2", "max_u2",
    "reflection_defect",
]

SCHEMA_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "report_schema.json")


# ------- Models -------
class EventSummary(BaseModel):
    alpha_star: float
    j0: int
    beta_branch: int
    eigenvalue: float
    crossing_slope: float
    resonance_slope: float
    multiplicity: int
    simultaneous: bool
    nonsync_indicator: Optional[float] = None


class BranchSummary(BaseModel):
    event_index: int
    points: int
    termination: str


class Verification(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class StageError(BaseModel):
    stage: str
    reason: str


class ReportDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: Dict[str, Any]
    regime: Optional[Dict[str, Any]] = None
    conditions: Optional[Dict[str, Any]] = None
    events: List[EventSummary] = []
    branch: Optional[BranchSummary] = None
    verifications: List[Verification] = []
    failure: Optional[StageError] = None
    passed: bool


def branch_frame(points) -> pd.DataFrame:
    rows = []
    for point in points:
        v1, v2 = point.state.nodal()
        record = point.diagnostics
        rows.append({
            "step": point.step,
            "alpha": point.alpha,
            "s": point.s,
            "epsilon": point.epsilon,
            "sync_measure": record.sync_measure,
            "v_min": record.v_min,
            "v_max": record.v_max,
            "residual_inf": point.residual_inf,
            "quotient_residual": record.quotient_residual,
            "min_u1": float(v1.min()),
            "max_u1": float(v1.max()),
            "min_u2": float(v2.min()),
            "max_u2": float(v2.max()),
            "reflection_defect": record.reflection_defect,
        })
    return pd.DataFrame(rows, columns=BRANCH_COLUMNS)


def write_branch_csv(points, path: str) -> str:
    frame = branch_frame(points)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"Wrote {len(frame)} branch points to {path}")
    return path


def write_report_json(document: ReportDocument, path: str) -> str:
    with open(path, "w") as f:
        f.write(document.model_dump_json(indent=2))
        f.write("\n")
    logger.info(f"Wrote report to {path}")
    return path


def report_schema() -> Dict[str, Any]:
    return ReportDocument.model_json_schema()


def build_report_schema_text() -> str:
    return json.dumps(report_schema(), indent=2) + "\n"


def load_published_schema() -> Dict[str, Any]:
    with open(SCHEMA_PATH) as f:
        return json.load(f)
