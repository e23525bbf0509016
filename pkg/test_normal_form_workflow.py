#!/usr/bin/env python3
"""
Tests for configuration loading, the workflow and the command line
"""

import json
import sys

import pytest

from job_processor import JobProcessor, Report
from normal_form_errors import PreconditionError
from normal_form_workflow import (CONFIG_ENV_VAR, NormalFormWorkflow, WorkflowConfig, exit_code_for,
                                  load_config, main)

SADDLE_JOB = """\
name: saddle
prime: 2
degree: 4
command: normalize
map:
  vars: 2
  truncation: 4
  eigenvalues: ["2", "1/2"]
  terms:
    - {component: 1, index: [2, 1], value: "1"}
"""


@pytest.fixture
def saddle_job(tmp_path):
    path = tmp_path / "saddle.yaml"
    path.write_text(SADDLE_JOB)
    return str(path)


@pytest.fixture(autouse=True)
def no_config_env(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)


def test_config_defaults(jobs_dir):
    """Test the built-in defaults and the shipped config file"""
    config = WorkflowConfig()
    assert (config.degree, config.mode, config.report_format) == (8, "auto", "text")
    assert config.enumeration_bound == 6
    assert config.strict_certificates
    assert WorkflowConfig.from_file(str(jobs_dir / "config.yaml")) == config
    assert load_config() == config


def test_config_validation(tmp_path):
    """Test bad values and unknown keys"""
    with pytest.raises(PreconditionError):
        WorkflowConfig(mode="saddle")
    with pytest.raises(PreconditionError):
        WorkflowConfig(report_format="xml")
    with pytest.raises(PreconditionError):
        WorkflowConfig(max_concurrent=0)
    path = tmp_path / "config.yaml"
    path.write_text("degree: 6\ncolour: blue\n")
    with pytest.raises(PreconditionError, match="unknown configuration keys"):
        WorkflowConfig.from_file(str(path))
    with pytest.raises(PreconditionError):
        WorkflowConfig.from_file(str(tmp_path / "absent.yaml"))


def test_config_from_environment(tmp_path, monkeypatch):
    """Test that $PADIC_NF_CONFIG is picked up when no path is given"""
    path = tmp_path / "config.yaml"
    path.write_text("degree: 5\nreport_format: json\n")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    config = load_config()
    assert config.degree == 5
    assert config.report_format == "json"


def test_config_overrides():
    """Test that None leaves a setting alone"""
    config = WorkflowConfig().with_overrides(report_format="json", output_dir=None, log_level="DEBUG")
    assert config.report_format == "json"
    assert config.output_dir is None
    assert config.log_level == "DEBUG"


def test_exit_code_for():
    """Test that the most severe job decides the exit code"""
    assert exit_code_for([]) == 0
    assert exit_code_for([Report("a", "verify"), Report("b", "verify", exit_code=3),
                          Report("c", "normalize", exit_code=2)]) == 3


def test_workflow_run_saves_report(jobs_dir, tmp_path):
    """Test a single job with an output directory"""
    workflow = NormalFormWorkflow(WorkflowConfig(output_dir=str(tmp_path)))
    report = workflow.run(str(jobs_dir / "resonances.yaml"))
    assert report.verdict == "1 resonance(s)"
    assert (tmp_path / "001_resonances.txt").exists()


def test_workflow_overrides(jobs_dir, tmp_path):
    """Test degree and tau overrides flowing into the jobs"""
    tau = tmp_path / "tau.yaml"
    tau.write_text("variant: maxes\nlambda: \"1/2\"\n")
    workflow = NormalFormWorkflow(WorkflowConfig(), tau_file=str(tau))
    report = workflow.run(str(jobs_dir / "dyncheck_mixed.yaml"))
    assert report.result["tau"]["variant"] == "maxes"
    assert report.verdict == "pass"

    workflow = NormalFormWorkflow(WorkflowConfig(), degree=4)
    report = workflow.run(str(jobs_dir / "repelling_normalize.yaml"))
    assert report.result["normal_form"]["truncation"] == 4


@pytest.mark.asyncio
async def test_workflow_batch_summary(jobs_dir, tmp_path, saddle_job):
    """Test batch reports and batch_summary.json"""
    config = WorkflowConfig(output_dir=str(tmp_path / "out"), report_format="json", max_concurrent=2)
    workflow = NormalFormWorkflow(config)
    reports = await workflow.run_batch([str(jobs_dir / "verify_identity.yaml"), saddle_job])
    assert [r.exit_code for r in reports] == [0, 2]
    with open(tmp_path / "out" / "batch_summary.json") as f:
        summary = json.load(f)
    assert summary["total_jobs"] == 2
    assert summary["exit_code"] == 2
    assert summary["verdicts"] == {"verify_identity": "verified", "saddle": "out of scope"}
    assert summary["failed_jobs"] == ["saddle"]
    assert summary["config"]["max_concurrent"] == 2
    assert (tmp_path / "out" / "002_saddle.json").exists()


def test_main_prints_json_report(jobs_dir, monkeypatch, capsys):
    """Test --input with --report json"""
    monkeypatch.setattr(sys, "argv", ["padic-normal-form", "--input",
                                      str(jobs_dir / "verify_identity.yaml"), "--report", "json"])
    main()
    data = json.loads(capsys.readouterr().out)
    assert data["verdict"] == "verified"
    assert data["exit_code"] == 0


def test_main_exit_code(saddle_job, monkeypatch, capsys):
    """Test that an out-of-scope job exits with 2"""
    monkeypatch.setattr(sys, "argv", ["padic-normal-form", "--input", saddle_job])
    with pytest.raises(SystemExit) as excinfo:
        main()
    assert excinfo.value.code == 2
    assert "open problem" in capsys.readouterr().out


def test_main_batch(jobs_dir, tmp_path, monkeypatch):
    """Test --batch with an output directory"""
    monkeypatch.setattr(sys, "argv", ["padic-normal-form", "--batch",
                                      str(jobs_dir / "resonances.yaml"),
                                      str(jobs_dir / "dyncheck_square_exponents.yaml"),
                                      "--output", str(tmp_path)])
    main()
    assert (tmp_path / "batch_summary.json").exists()
    assert (tmp_path / "002_dyncheck_square_exponents.txt").exists()


def test_main_unexpected_failure(jobs_dir, monkeypatch, capsys):
    """Test that a crash inside a handler is reported with exit code 1"""
    def broken(self, job, ctx, report):
        raise KeyError("component")

    monkeypatch.setattr(JobProcessor, "_resonances", broken)
    monkeypatch.setattr(sys, "argv", ["padic-normal-form", "--input", str(jobs_dir / "resonances.yaml")])
    with pytest.raises(SystemExit) as excinfo:
        main()
    assert excinfo.value.code == 1
    assert "Error: KeyError" in capsys.readouterr().out



def test_main_argument_errors(tmp_path, monkeypatch, capsys):
    """Test a missing job argument and an unreadable config"""
    monkeypatch.setattr(sys, "argv", ["padic-normal-form"])
    with pytest.raises(SystemExit) as excinfo:
        main()
    assert excinfo.value.code == 2

    monkeypatch.setattr(sys, "argv", ["padic-normal-form", "--input", "job.yaml",
                                      "--config", str(tmp_path / "absent.yaml")])
    with pytest.raises(SystemExit) as excinfo:
        main()
    assert excinfo.value.code == 2
    assert "Configuration error" in capsys.readouterr().out
