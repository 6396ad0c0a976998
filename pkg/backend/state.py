from typing import Any, Dict, List, Optional
from typing_extensions import TypedDict


class RunState(TypedDict):
    config: Any                          # pipeline.config.RunConfig
    family: Any                          # system.families.ParamFamily
    grid: Any                            # spectral.spectral_sphere.SphereGrid
    spectrum: List[tuple]
    regime: Optional[Any]                # system.system_algebra.RegimeReport
    conditions: Optional[Any]            # system.families.ConditionReport
    events: Optional[List[Any]]          # numerics.continuation.BifurcationEvent
    trace: Optional[Any]                 # numerics.continuation.BranchTrace
    verifications: List[Dict]
    failure: Optional[Dict]
