import json
import pytest
from unittest.mock import patch
import os
import sys

import pandas as pd

# Keep multistart serial and logging quiet for the test run
os.environ["SCHRO_BRANCH_THREADS"] = "1"
os.environ["SCHRO_BRANCH_LOG_LEVEL"] = "WARNING"

# Add project root to path
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '../'))
sys.path.append(project_root)

from fastapi.testclient import TestClient
from cli import main as cli_main
from errors import InitialSwitchFailed
from main import app
from numerics.solver import constant_state_vector
from spectral.spectral_sphere import build_grid
from pipeline.config import parse_run_config
from pipeline.report import BRANCH_COLUMNS, ReportDocument, load_published_schema, report_schema
from pipeline.run_pipeline import build_report, run_pipeline, write_outputs

client = TestClient(app)

EQ_LAMBDA_RUN = {
    "manifold.n": "2",
    "manifold.N": "16",
    "family.kind": "theorem5",
    "family.case_id": "EqLambda",
    "family.lambda0": "2",
    "family.q": "4",
    "family.lambda": "3",
    "pipeline": "conditions,detect,continue,verify",
    "continuation.n_steps": "8",
    "continuation.ds": "0.005",
    "continuation.eps0": "0.01",
    "verify.burn_in": "2",
}

SYNC_STRICT_RUN = {
    "manifold.N": "12",
    "family.kind": "explicit",
    "family.lambda1": "3", "family.lambda2": "3",
    "family.a11": "1", "family.a12": "2", "family.a21": "2", "family.a22": "1",
    "pipeline": "verify",
    "verify.multistart": "4",
}


def write_config(path, settings):
    with open(path, "w") as f:
        for key, value in settings.items():
            f.write(f"{key}={value}\n")
    return str(path)


@pytest.fixture(scope="module")
def eq_lambda_state():
    return run_pipeline(parse_run_config(EQ_LAMBDA_RUN))


# --- Pipeline Tests ---
def test_eq_lambda_pipeline_runs_every_stage(eq_lambda_state):
    assert eq_lambda_state["failure"] is None
    assert eq_lambda_state["conditions"].passed
    assert eq_lambda_state["regime"].verdict.value == "BifurcationCandidate"
    event = eq_lambda_state["events"][0]
    assert (event.j0, event.beta_branch) == (1, 2)
    assert len(eq_lambda_state["trace"].points) >= 3


def test_eq_lambda_report(eq_lambda_state):
    report = build_report(eq_lambda_state)
    checks = {check.name: check for check in report.verifications}
    assert report.branch.event_index == 0
    assert report.branch.points == len(eq_lambda_state["trace"].points)
    assert report.events[0].nonsync_indicator == pytest.approx(2.0 * 3.0**-0.5)
    for name in ("conditions", "bifurcation_detected", "branch_residual", "branch_positive", "quotient_identity"):
        assert checks[name].passed, checks[name].detail
    assert "antisymmetric_tangent" in checks
    assert "reflection_covariance" in checks


def test_outputs_are_written(eq_lambda_state, tmp_path):
    written = write_outputs(eq_lambda_state, str(tmp_path))
    assert sorted(os.path.basename(path) for path in written) == ["branch.csv", "report.json"]
    frame = pd.read_csv(tmp_path / "branch.csv")
    assert list(frame.columns) == BRANCH_COLUMNS
    assert len(frame) == len(eq_lambda_state["trace"].points)
    with open(tmp_path / "report.json") as f:
        document = ReportDocument.model_validate(json.load(f))
    assert document.config["family"]["lambda"] == 3.0


def test_branch_csv_is_byte_identical_across_runs(tmp_path):
    config = parse_run_config({**EQ_LAMBDA_RUN, "pipeline": "continue", "continuation.n_steps": "4"})
    first, second = tmp_path / "first", tmp_path / "second"
    write_outputs(run_pipeline(config), str(first), ["csv"])
    write_outputs(run_pipeline(config), str(second), ["csv"])
    assert (first / "branch.csv").read_bytes() == (second / "branch.csv").read_bytes()


def test_continue_stage_failure_is_recorded():
    config = parse_run_config({**EQ_LAMBDA_RUN, "pipeline": "continue"})
    with patch("pipeline.run_pipeline.trace_branch", side_effect=InitialSwitchFailed("no convergence")):
        state = run_pipeline(config)
    assert state["failure"] == {"stage": "continue", "reason": "no convergence"}
    assert not build_report(state).passed


def test_sync_strict_verification_uses_multistart():
    config = parse_run_config(SYNC_STRICT_RUN)
    grid_state = constant_state_vector(build_grid(2, 12, 4.0), 1.0, 1.0)
    with patch("pipeline.run_pipeline.multistart_solve", return_value=[grid_state, None, None, None]) as mock_solve:
        state = run_pipeline(config)
    mock_solve.assert_called_once()
    report = build_report(state)
    checks = {check.name: check.passed for check in report.verifications}
    assert checks == {"multistart_converged": True, "synchronized": True, "sync_ratio": True}
    assert report.regime["verdict"] == "SynchronizedOnly_strict"
    assert report.passed


def test_sync_strict_multistart_converges_to_synchronized_states():
    config = parse_run_config({**SYNC_STRICT_RUN, "manifold.N": "16", "verify.multistart": "10", "verify.seed": "7"})
    state = run_pipeline(config)
    report = build_report(state)
    checks = {check.name: check for check in report.verifications}
    assert report.regime["verdict"] == "SynchronizedOnly_strict"
    assert set(checks) == {"multistart_converged", "synchronized", "sync_ratio"}
    for name, check in checks.items():
        assert check.passed, f"{name}: {check.detail}"


def test_unequal_lambda_no_solution_verification():
    config = parse_run_config({**SYNC_STRICT_RUN, "manifold.N": "16",
                               "family.lambda1": "2", "family.lambda2": "3",
                               "family.a11": "2", "family.a12": "2", "family.a21": "1", "family.a22": "1",
                               "verify.multistart": "10", "verify.seed": "7"})
    report = build_report(run_pipeline(config))
    assert report.regime["verdict"] == "NoSolution_Thm5i"
    checks = {check.name: check for check in report.verifications}
    assert list(checks) == ["no_positive_solution"]
    assert checks["no_positive_solution"].passed, checks["no_positive_solution"].detail
    assert checks["no_positive_solution"].detail == "0/10 converged"


def test_no_solution_verification():
    config = parse_run_config({**SYNC_STRICT_RUN, "family.a11": "2", "family.a12": "2",
                               "family.a21": "1", "family.a22": "1", "verify.multistart": "5"})
    state = run_pipeline(config)
    report = build_report(state)
    assert report.regime["verdict"] == "NoSolution_Thm4i"
    assert [check.name for check in report.verifications] == ["no_positive_solution"]
    assert report.passed


# --- Schema Tests ---
def test_published_schema_matches_report_model():
    published = load_published_schema()
    generated = report_schema()
    assert set(published["properties"]) == set(generated["properties"])
    assert sorted(published["required"]) == sorted(generated["required"])
    assert set(published["$defs"]) == set(generated["$defs"])
    for name, definition in generated["$defs"].items():
        assert set(published["$defs"][name]["properties"]) == set(definition["properties"])


# --- CLI Tests ---
def test_cli_spectrum(capsys):
    assert cli_main(["spectrum", "--n", "2", "--jmax", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5
    assert lines[-1].split() == ["3", "12", "-"]


def test_cli_spectrum_rejects_low_dimension():
    with pytest.raises(SystemExit) as excinfo:
        cli_main(["spectrum", "--n", "1", "--jmax", "3"])
    assert excinfo.value.code != 0


def test_cli_classify(capsys):
    code = cli_main(["classify", "--lambda1", "3", "--lambda2", "3", "--a11", "1", "--a12", "2",
                     "--a21", "2", "--a22", "1", "--q", "4"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["verdict"] == "SynchronizedOnly_strict"
    assert report["sync_ratio"] == pytest.approx(1.0)


def test_cli_classify_decoupled_system(capsys):
    code = cli_main(["classify", "--lambda1", "1", "--lambda2", "1", "--a11", "1", "--a12", "0",
                     "--a21", "0", "--a22", "2", "--q", "4"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "Unclassified"


def test_cli_classify_rejects_bad_exponent(capsys):
    code = cli_main(["classify", "--lambda1", "3", "--lambda2", "3", "--a11", "1", "--a12", "2",
                     "--a21", "2", "--a22", "1", "--q", "2"])
    assert code != 0
    assert "error" in capsys.readouterr().err


def test_cli_detect_writes_report(tmp_path):
    out = tmp_path / "out"
    path = write_config(tmp_path / "run.cfg", {**EQ_LAMBDA_RUN, "output.dir": str(out)})
    assert cli_main(["detect", "--config", path, "--format", "json"]) == 0
    with open(out / "report.json") as f:
        report = json.load(f)
    assert report["events"][0]["j0"] == 1
    assert report["branch"] is None
    assert not (out / "branch.csv").exists()


def test_cli_out_and_seed_override(tmp_path):
    out = tmp_path / "override"
    path = write_config(tmp_path / "run.cfg", {**SYNC_STRICT_RUN, "family.a11": "2", "family.a12": "2",
                                               "family.a21": "1", "family.a22": "1", "verify.multistart": "2"})
    assert cli_main(["verify", "--config", path, "--out", str(out), "--seed", "123"]) == 0
    with open(out / "report.json") as f:
        report = json.load(f)
    assert report["config"]["verify"]["seed"] == 123


def test_cli_missing_config_fails(tmp_path, capsys):
    code = cli_main(["run", "--config", str(tmp_path / "missing.cfg")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_cli_schema(capsys):
    assert cli_main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out)["title"] == "ReportDocument"


# --- FastAPI Tests ---
def test_root_endpoint():
    response = client.get("/")
    assert response.status_code == 200
    assert response.json() == {"message": "Welcome to the SchroBranch API"}


def test_health_check():
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json().get("status") == "ok"


def test_spectrum_endpoint():
    response = client.post("/spectrum", json={"n": 3, "jmax": 2})
    assert response.status_code == 200
    assert [row["lambda_j"] for row in response.json()] == [0, 3, 8]


def test_spectrum_endpoint_validates_input():
    response = client.post("/spectrum", json={"n": 1, "jmax": 2})
    assert response.status_code == 422


def test_classify_endpoint():
    payload = {"lambda1": 3, "lambda2": 3, "a11": 2, "a12": 2, "a21": 1, "a22": 1, "q": 4}
    response = client.post("/classify", json=payload)
    assert response.status_code == 200
    assert response.json()["verdict"] == "NoSolution_Thm4i"


def test_classify_endpoint_rejects_bad_exponent():
    payload = {"lambda1": 3, "lambda2": 3, "a11": 2, "a12": 2, "a21": 1, "a22": 1, "q": 1.5}
    response = client.post("/classify", json=payload)
    assert response.status_code == 400


def test_detect_endpoint():
    payload = {"manifold": {"n": 2, "N": 16}, "family": {"kind": "theorem5", "case_id": "EqLambda", "lambda": 3}}
    response = client.post("/detect", json=payload)
    assert response.status_code == 200
    data = response.json()
    assert data["conditions"]["j0"] == 1
    assert data["events"][0]["beta_branch"] == 2


def test_detect_endpoint_rejects_resonant_lambda():
    payload = {"manifold": {"n": 2, "N": 16}, "family": {"kind": "theorem5", "case_id": "EqLambda", "lambda": 6}}
    response = client.post("/detect", json=payload)
    assert response.status_code == 400


@patch("main.stage_detect", side_effect=RuntimeError("boom"))
def test_detect_endpoint_unexpected_error(mock_detect):
    response = client.post("/detect", json={"manifold": {"n": 2, "N": 16}})
    assert response.status_code == 500
    assert response.json()["detail"] == "boom"
