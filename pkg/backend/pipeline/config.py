"""
Run configuration: flat dotted KEY=VALUE files, read with the same parser
as .env files and validated into nested pydantic models.

    manifold.n=2
    family.kind=theorem5
    family.case_id=EqLambda
    pipeline=conditions,detect,continue,verify
"""
import os
import logging
from typing import Dict, List, Literal, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator

from numerics.continuation import ContinuationOptions
from numerics.solver import NewtonOptions
from settings import get_default_seed, get_output_dir
from spectral.spectral_sphere import sphere_spectrum
from system.families import (
    THEOREM5_CASES,
    ParamFamily,
    linear_family,
    resonant_symmetric_family,
    sphere_symmetric_family,
    theorem5_case,
)
from system.system_algebra import PARAM_NAMES, SystemParams

logger = logging.getLogger(__name__)

STAGES = ("conditions", "detect", "continue", "verify")
FORMATS = ("csv", "json")


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


# ------- Models -------
class ManifoldConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=2, ge=2)
    N: int = Field(default=64, ge=4)


class FamilyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    kind: Literal["symmetric", "theorem5", "explicit"] = "theorem5"
    delta: float = Field(default=0.2, gt=0.0)
    q: float = 4.0
    # theorem5
    case_id: str = "EqLambda"
    lambda0: float = 2.0
    lam: float = Field(default=3.0, alias="lambda")
    epsilon: float = 0.1
    # symmetric
    lambda_0: Optional[float] = None
    lambda_slope: float = 0.0
    a: float = 3.0
    a_slope: float = 0.0
    b: float = 1.0
    b_slope: float = 0.0
    resonant_j0: Optional[int] = None
    # explicit
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    a11: Optional[float] = None
    a12: Optional[float] = None
    a21: Optional[float] = None
    a22: Optional[float] = None
    d_lambda1: float = 0.0
    d_lambda2: float = 0.0
    d_a11: float = 0.0
    d_a12: float = 0.0
    d_a21: float = 0.0
    d_a22: float = 0.0

    @field_validator("case_id")
    @classmethod
    def _known_case(cls, value):
        if value not in THEOREM5_CASES:
            raise ValueError(f"unknown case_id '{value}', expected one of {THEOREM5_CASES}")
        return value


class ContinuationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ds: float = Field(default=5e-3, gt=0.0)
    n_steps: int = Field(default=40, ge=1)
    eps0: float = Field(default=1e-2, gt=0.0)
    mirror: bool = False

    def options(self) -> ContinuationOptions:
        return ContinuationOptions(ds=self.ds, n_steps=self.n_steps, eps0=self.eps0, mirror=self.mirror)


class NewtonConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_iter: int = Field(default=50, ge=1)
    abs_tol: float = Field(default=1e-11, gt=0.0)

    def options(self) -> NewtonOptions:
        return NewtonOptions(max_iter=self.max_iter, abs_tol=self.abs_tol)


class VerifyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    multistart: int = Field(default=50, ge=1)
    seed: int = Field(default_factory=get_default_seed)
    sync_tol: float = 1e-8
    ratio_tol: float = 1e-6
    branch_sync_min: float = 1e-4
    burn_in: int = Field(default=5, ge=0)


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: str = Field(default_factory=get_output_dir)
    formats: List[str] = list(FORMATS)

    @field_validator("formats", mode="before")
    @classmethod
    def _parse_formats(cls, value):
        value = _split_list(value)
        unknown = set(value) - set(FORMATS)
        if unknown:
            raise ValueError(f"unknown output formats {sorted(unknown)}")
        return value


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    manifold: ManifoldConfig = ManifoldConfig()
    family: FamilyConfig = FamilyConfig()
    pipeline: List[str] = []
    continuation: ContinuationConfig = ContinuationConfig()
    newton: NewtonConfig = NewtonConfig()
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("pipeline", mode="before")
    @classmethod
    def _parse_pipeline(cls, value):
        value = _split_list(value)
        unknown = [stage for stage in value if stage not in STAGES]
        if unknown:
            raise ValueError(f"unknown pipeline stages {unknown}, expected a subset of {STAGES}")
        # stages always run in the canonical order
        return [stage for stage in STAGES if stage in value]


# ------- Parsing -------
def nest_keys(flat: Dict[str, Optional[str]]) -> Dict:
    """Turn {'a.b': v} into {'a': {'b': v}}; empty values are dropped"""
    nested: Dict = {}
    for key, value in flat.items():
        if value is None or value == "":
            continue
        parts = key.strip().split(".")
        target = nested
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ValueError(f"key '{key}' conflicts with a scalar setting")
        target[parts[-1]] = value
    return nested


def parse_run_config(flat: Dict[str, Optional[str]]) -> RunConfig:
    return RunConfig.model_validate(nest_keys(flat))


def load_run_config(path: str) -> RunConfig:
    """
    Read a run configuration file.

    Args:
        path: Path to a KEY=VALUE file with dotted keys

    Returns:
        Validated RunConfig

    Raises:
        FileNotFoundError: path does not exist
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"run configuration '{path}' not found")
    flat = dotenv_values(path)
    logger.info(f"Loaded {len(flat)} settings from {path}")
    return parse_run_config(flat)


# ------- Builders -------
def run_spectrum(config: RunConfig) -> List[tuple]:
    """Radial spectrum for every mode the grid resolves"""
    return sphere_spectrum(config.manifold.n, config.manifold.N - 1)


def build_family(config: RunConfig) -> ParamFamily:
    fc = config.family
    if fc.kind == "theorem5":
        return theorem5_case(
            fc.case_id, fc.lambda0, fc.q, lam=fc.lam, epsilon=fc.epsilon,
            spectrum=run_spectrum(config), delta=fc.delta,
        )
    if fc.kind == "symmetric":
        if fc.resonant_j0 is not None:
            return resonant_symmetric_family(config.manifold.n, fc.resonant_j0, fc.q, a=fc.a, b=fc.b, delta=fc.delta)
        if fc.lambda_0 is None:
            raise ValueError("symmetric family needs family.lambda_0 or family.resonant_j0")
        return sphere_symmetric_family(
            lambda alpha: fc.lambda_0 + fc.lambda_slope * alpha,
            lambda alpha: fc.a + fc.a_slope * alpha,
            lambda alpha: fc.b + fc.b_slope * alpha,
            fc.q,
            delta=fc.delta,
        )
    missing = [name for name in PARAM_NAMES if getattr(fc, name) is None]
    if missing:
        raise ValueError(f"explicit family is missing {missing}")
    base = SystemParams(q=fc.q, **{name: getattr(fc, name) for name in PARAM_NAMES})
    slopes = {name: getattr(fc, f"d_{name}") for name in PARAM_NAMES}
    return linear_family(base, slopes, delta=fc.delta, validate=False)
