import logging
import traceback
from typing import List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from errors import SchroBranchError
from pipeline.config import FamilyConfig, ManifoldConfig, RunConfig
from pipeline.report import EventSummary, report_schema
from pipeline.run_pipeline import event_summary, init_state, stage_conditions, stage_detect
from settings import configure_logging
from spectral.spectral_sphere import eigenvalue
from system.system_algebra import RegimeReport, SystemParams, classify_regime

configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(
    title="SchroBranch API",
    description="Spectra, regime classification and bifurcation detection for coupled Schrodinger systems on spheres",
    version="1.0.0"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# ------- Models -------
class SpectrumRequest(BaseModel):
    n: int = Field(ge=2)
    jmax: int = Field(ge=0)


class SpectrumRow(BaseModel):
    j: int
    lambda_j: float
    parity: str


class ClassifyRequest(BaseModel):
    lambda1: float
    lambda2: float
    a11: float
    a12: float
    a21: float
    a22: float
    q: float
    n: Optional[int] = None


class DetectRequest(BaseModel):
    manifold: ManifoldConfig = ManifoldConfig()
    family: FamilyConfig = FamilyConfig()


class DetectResponse(BaseModel):
    conditions: dict
    events: List[EventSummary]


# ------- API Endpoints -------
@app.get("/")
async def root():
    return {"message": "Welcome to the SchroBranch API"}


@app.get("/health")
async def health_check():
    """Check if the API is running"""
    return {"status": "ok", "message": "API is running"}


@app.get("/schema")
def get_report_schema():
    """JSON schema of report.json"""
    return report_schema()


@app.post("/spectrum", response_model=List[SpectrumRow])
def get_spectrum(req: SpectrumRequest):
    return [
        SpectrumRow(j=j, lambda_j=eigenvalue(req.n, j), parity="+" if j % 2 == 0 else "-")
        for j in range(req.jmax + 1)
    ]


@app.post("/classify", response_model=RegimeReport)
def classify(req: ClassifyRequest):
    """Sign-condition regime of one parameter set"""
    try:
        params = SystemParams(**req.model_dump(exclude={"n"}))
        return classify_regime(params, req.n)
    except (SchroBranchError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.debug(traceback.format_exc())
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/detect", response_model=DetectResponse)
def detect(req: DetectRequest):
    """Check the bifurcation hypotheses and locate crossings along a family"""
    try:
        config = RunConfig(manifold=req.manifold, family=req.family)
        state = init_state(config)
        stage_conditions(state)
        stage_detect(state)
        return DetectResponse(
            conditions=state["conditions"].model_dump(mode="json"),
            events=[event_summary(event, state["family"]) for event in state["events"]],
        )
    except (SchroBranchError, ValueError) as e:
        logger.warning(f"Detection rejected: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Detection error: {e}")
        logger.debug(traceback.format_exc())
        raise HTTPException(status_code=500, detail=str(e))
