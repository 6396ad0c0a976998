"""
Batch front end.

    python cli.py spectrum --n 2 --jmax 3
    python cli.py classify --lambda1 3 --lambda2 3 --a11 1 --a12 2 --a21 2 --a22 1 --q 4
    python cli.py run --config runs/eq_lambda.cfg --out output/eq_lambda
    python cli.py schema
"""
import sys
import argparse
import logging
import traceback
from typing import Dict, List, Optional

import pandas as pd
from pydantic import ValidationError

from errors import SchroBranchError
from pipeline.config import RunConfig, load_run_config
from pipeline.report import SCHEMA_PATH, build_report_schema_text
from pipeline.run_pipeline import build_report, run_pipeline, write_outputs
from settings import configure_logging
from spectral.spectral_sphere import eigenvalue
from system.system_algebra import PARAM_NAMES, RegimeReport, SystemParams, classify_regime

logger = logging.getLogger(__name__)

COMMAND_STAGES = {
    "detect": ["conditions", "detect"],
    "continue": ["conditions", "detect", "continue"],
    "verify": ["verify"],
}


# ------- Commands -------
def cmd_spectrum(n: int, jmax: int) -> List[Dict]:
    """Rows (j, lambda_j, parity) for j = 0..jmax"""
    if n < 2:
        raise ValueError(f"sphere dimension must be >= 2, got {n}")
    if jmax < 0:
        raise ValueError(f"jmax must be >= 0, got {jmax}")
    return [{"j": j, "lambda_j": eigenvalue(n, j), "parity": "+" if j % 2 == 0 else "-"} for j in range(jmax + 1)]


def cmd_classify(params: Dict[str, float], n: Optional[int] = None) -> RegimeReport:
    return classify_regime(SystemParams(**params), n)


def cmd_run(config: RunConfig, stages: Optional[List[str]] = None, out_dir: Optional[str] = None,
            formats: Optional[List[str]] = None) -> int:
    """Run stages, write artifacts, and return the exit code (0 iff every verification passed)"""
    state = run_pipeline(config, stages)
    write_outputs(state, out_dir, formats)
    report = build_report(state)
    if state["failure"]:
        print(f"stage '{state['failure']['stage']}' failed: {state['failure']['reason']}", file=sys.stderr)
    return 0 if report.passed else 1


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    updates = {}
    if args.seed is not None:
        updates["verify"] = config.verify.model_copy(update={"seed": args.seed})
    if args.out is not None:
        updates["output"] = config.output.model_copy(update={"dir": args.out})
    return config.model_copy(update=updates) if updates else config


def _formats(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return ["csv", "json"] if value == "both" else [value]


# ------- Parser -------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Bifurcation analysis of coupled Schrodinger systems on spheres")
    parser.add_argument("--log-level", default=None, help="Logging level (default: SCHRO_BRANCH_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    spectrum = sub.add_parser("spectrum", help="Radial Laplacian spectrum of S^n")
    spectrum.add_argument("--n", type=int, required=True)
    spectrum.add_argument("--jmax", type=int, required=True)

    classify = sub.add_parser("classify", help="Sign-condition regime of a parameter set")
    for name in PARAM_NAMES + ("q",):
        classify.add_argument(f"--{name}", type=float, required=True)
    classify.add_argument("--n", type=int, default=None, help="Sphere dimension for the rigidity note")

    for name in ("run", "detect", "continue", "verify"):
        command = sub.add_parser(name, help=f"{name} stage(s) from a run configuration")
        command.add_argument("--config", required=True, help="KEY=VALUE run configuration file")
        command.add_argument("--out", default=None, help="Output directory")
        command.add_argument("--seed", type=int, default=None, help="Multistart seed")
        command.add_argument("--format", choices=["csv", "json", "both"], default=None)

    schema = sub.add_parser("schema", help="Print the report.json schema")
    schema.add_argument("--write", action="store_true", help=f"Also write it to {SCHEMA_PATH}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        if args.command == "spectrum":
            if args.n < 2:
                parser.error(f"--n must be >= 2, got {args.n}")
            rows = cmd_spectrum(args.n, args.jmax)
            print(pd.DataFrame(rows).to_string(index=False))
            return 0
        if args.command == "classify":
            params = {name: getattr(args, name) for name in PARAM_NAMES + ("q",)}
            print(cmd_classify(params, args.n).model_dump_json(indent=2))
            return 0
        if args.command == "schema":
            text = build_report_schema_text()
            if args.write:
                with open(SCHEMA_PATH, "w") as f:
                    f.write(text)
            print(text, end="")
            return 0

        config = _apply_overrides(load_run_config(args.config), args)
        stages = COMMAND_STAGES.get(args.command)
        return cmd_run(config, stages, formats=_formats(args.format))
    except (SchroBranchError, ValidationError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        logger.debug(traceback.format_exc())
        return 1


if __name__ == "__main__":
    sys.exit(main())
