#!/usr/bin/env python3
"""
Command-line workflow for p-adic normal form jobs

This module coordinates a run:
1. Load configuration (YAML file, environment, flags)
2. Load and run one job file, or a batch of them concurrently
3. Write reports and print a summary
"""

import asyncio
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from job_processor import MODES, BatchProcessor, Report, load_tau, run_job_file
from normal_form_errors import NormalFormError, PreconditionError

CONFIG_ENV_VAR = "PADIC_NF_CONFIG"


@dataclass
class WorkflowConfig:
    """Settings shared by every job of a run"""
    degree: int = 8
    mode: str = "auto"
    report_format: str = "text"
    enumeration_bound: int = 6
    max_concurrent: int = 4
    log_level: str = "INFO"
    log_file: Optional[str] = None
    strict_certificates: bool = True
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise PreconditionError(f"unknown mode {self.mode!r}")
        if self.report_format not in ("text", "json"):
            raise PreconditionError(f"report format must be text or json, got {self.report_format!r}")
        if self.max_concurrent < 1:
            raise PreconditionError("max_concurrent must be >= 1")

    @classmethod
    def from_file(cls, path: str) -> "WorkflowConfig":
        try:
            with open(path, 'r') as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise PreconditionError(f"cannot read configuration {path}: {e}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise PreconditionError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, **overrides: Any) -> "WorkflowConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def load_config(path: Optional[str] = None) -> WorkflowConfig:
    """Configuration from the given file, else from $PADIC_NF_CONFIG, else defaults"""
    path = path or os.getenv(CONFIG_ENV_VAR)
    if not path:
        return WorkflowConfig()
    return WorkflowConfig.from_file(path)


class NormalFormWorkflow:
    """Runs job files and reports on them"""

    def __init__(self, config: WorkflowConfig, degree: Optional[int] = None,
                 mode: Optional[str] = None, tau_file: Optional[str] = None):
        self.config = config
        self.logger = self._setup_logging()
        self.overrides: Dict[str, Any] = {
            "degree": degree,
            "mode": mode,
            "default_degree": config.degree,
            "default_mode": config.mode,
            "enumeration_bound": config.enumeration_bound,
            "strict": config.strict_certificates,
        }
        if tau_file:
            self.overrides["tau"] = load_tau(tau_file)

    def _setup_logging(self):
        handlers: List[logging.Handler] = [logging.StreamHandler()]
        if self.config.log_file:
            handlers.insert(0, logging.FileHandler(self.config.log_file))
        logging.basicConfig(
            level=getattr(logging, self.config.log_level.upper(), logging.INFO),
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            handlers=handlers
        )
        return logging.getLogger(__name__)

    def run(self, input_path: str) -> Report:
        """Run a single job file"""
        self.logger.info(f"Step 1: Loading job {input_path}")
        self.logger.info("Step 2: Running job")
        report = run_job_file(input_path, self.overrides)
        self.logger.info(f"Step 3: Job finished with verdict {report.verdict!r}")
        if self.config.output_dir:
            asyncio.run(self._save([report]))
        return report

    async def run_batch(self, paths: List[str]) -> List[Report]:
        """Run several job files, at most max_concurrent at a time"""
        self.logger.info(f"Step 1: Running {len(paths)} jobs")
        reports = await BatchProcessor(self.config.max_concurrent, self.overrides).process_jobs(paths)
        if self.config.output_dir:
            self.logger.info("Step 2: Writing reports")
            await self._save(reports)
            self._write_summary(reports)
        return reports

    async def _save(self, reports: List[Report]):
        processor = BatchProcessor(self.config.max_concurrent)
        await processor.save_reports(reports, self.config.output_dir, self.config.report_format)

    def _write_summary(self, reports: List[Report]):
        summary = {
            "run_date": datetime.now().isoformat(),
            "total_jobs": len(reports),
            "exit_code": exit_code_for(reports),
            "verdicts": {r.job: r.verdict for r in reports},
            "failed_jobs": [r.job for r in reports if r.exit_code],
            "config": asdict(self.config),
        }
        summary_file = Path(self.config.output_dir) / "batch_summary.json"
        with open(summary_file, 'w') as f:
            json.dump(summary, f, indent=2)
        self.logger.info(f"Summary report saved: {summary_file}")


def exit_code_for(reports: List[Report]) -> int:
    return max((r.exit_code for r in reports), default=0)


def main():
    """Main entry point"""
    import argparse

    parser = argparse.ArgumentParser(description='p-adic Poincare-Dulac and PDJ normal forms')
    parser.add_argument('--input', help='Job file (YAML or JSON)')
    parser.add_argument('--batch', nargs='+', metavar='JOB', help='Run several job files concurrently')
    parser.add_argument('--degree', type=int, help='Truncation degree N (overrides the job file)')
    parser.add_argument('--mode', choices=MODES, help='Driver selection (overrides the job file)')
    parser.add_argument('--tau', help='Tau descriptor file for dyncheck jobs')
    parser.add_argument('--report', choices=['json', 'text'], help='Report format')
    parser.add_argument('--output', help='Directory for report files')
    parser.add_argument('--config', help=f'Configuration file (default: ${CONFIG_ENV_VAR})')
    parser.add_argument('--log-level', help='Logging level')
    parser.add_argument('--log-file', help='Also log to this file')

    args = parser.parse_args()
    if not args.input and not args.batch:
        parser.error("one of --input or --batch is required")

    try:
        config = load_config(args.config).with_overrides(
            report_format=args.report, output_dir=args.output,
            log_level=args.log_level, log_file=args.log_file)
        workflow = NormalFormWorkflow(config, args.degree, args.mode, args.tau)
    except NormalFormError as e:
        print(f"Configuration error: {e}")
        sys.exit(e.exit_code)

    if args.batch:
        reports = asyncio.run(workflow.run_batch(args.batch))
    else:
        reports = [workflow.run(args.input)]

    for report in reports:
        print(report.render(config.report_format))
        print()

    code = exit_code_for(reports)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    main()
