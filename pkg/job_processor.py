#!/usr/bin/env python3
"""
Job runner for the p-adic normal form library

A job file (YAML or JSON) names a prime, a truncation degree, a command
and its payload. run_job dispatches it to the matching library operation
and turns the outcome into a Report carrying enough data (conjugator
coefficients included) for independent re-verification.
"""

import asyncio
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import aiofiles
import yaml

from dynamic_groups import DEFAULT_ENUMERATION_BOUND, TauSpec, check_dynamic, membership
from formal_series import FormalMap, growth_certificate, verify_conjugacy
from normal_form_errors import (SADDLE_MESSAGE, CertificateViolation, NormalFormError,
                                PreconditionError, UnsupportedCaseError)
from oned_normal_form import equiv_1d, normal_form_1d
from padic_field import PrimeContext, format_scalar, parse_scalar
from pdj_normal_form import (PDJForm, decide_equiv_repelling, decide_equiv_semihyperbolic,
                             pdj_reduce)
from poincare_dulac import (PDResult, classify_eigenvalues, find_resonances, pd_normalize,
                            repelling_normalize, semihyperbolic_normalize)

COMMANDS = ("normalize", "pdj", "equiv", "resonances", "dyncheck", "verify")
MODES = ("auto", "repelling", "semihyperbolic", "generic")
MAP_ARITY = {"normalize": 1, "pdj": 1, "equiv": 2}


@dataclass
class JobSpec:
    """One unit of work read from a job file"""
    prime: int
    degree: int
    command: str
    mode: str = "auto"
    maps: List[FormalMap] = field(default_factory=list)
    tau: Optional[TauSpec] = None
    n: Optional[int] = None
    eigenvalues: Optional[List] = None
    maxdeg: Optional[int] = None
    bound: int = DEFAULT_ENUMERATION_BOUND
    check: str = "strong"
    payload: Optional[Dict] = None
    name: str = "job"
    strict: bool = True

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise PreconditionError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if self.mode not in MODES:
            raise PreconditionError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.degree < 2:
            raise PreconditionError(f"degree must be >= 2, got {self.degree}")
        arity = MAP_ARITY.get(self.command)
        if arity is not None and len(self.maps) != arity:
            raise PreconditionError(f"{self.command} needs {arity} map(s), got {len(self.maps)}")
        if self.command == "resonances" and (not self.eigenvalues or len(self.eigenvalues) != 2):
            raise PreconditionError("resonances needs two eigenvalues")
        if self.command == "dyncheck" and self.tau is None:
            raise PreconditionError("dyncheck needs a tau descriptor")
        if self.command == "verify" and self.payload is None:
            raise PreconditionError("verify needs a report or payload")
        if self.check not in ("weak", "strong"):
            raise PreconditionError(f"check must be weak or strong, got {self.check!r}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> "JobSpec":
        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        if not isinstance(data, dict):
            raise PreconditionError("job file must contain a mapping")
        try:
            degree = int(overrides.get("degree", data.get("degree", overrides.get("default_degree", 8))))
            maps = [FormalMap.from_dict(m) for m in data.get("maps", [])]
            if "map" in data:
                maps.insert(0, FormalMap.from_dict(data["map"]))
            maps = [_fit_truncation(F, degree) for F in maps]
            tau = overrides.get("tau")
            if tau is None and data.get("tau") is not None:
                tau = TauSpec.from_dict(data["tau"])
            eigenvalues = data.get("eigenvalues")
            if eigenvalues is not None:
                eigenvalues = [parse_scalar(e) for e in eigenvalues]
            payload = data.get("report") or data.get("payload")
            return cls(
                prime=int(data["prime"]),
                degree=degree,
                command=data["command"],
                mode=overrides.get("mode", data.get("mode", overrides.get("default_mode", "auto"))),
                maps=maps,
                tau=tau,
                n=data.get("n"),
                eigenvalues=eigenvalues,
                maxdeg=data.get("maxdeg"),
                bound=int(data.get("bound", overrides.get("enumeration_bound", DEFAULT_ENUMERATION_BOUND))),
                check=data.get("check", "strong"),
                payload=payload,
                name=str(data.get("name", "job")),
                strict=bool(overrides.get("strict", data.get("strict", True))),
            )
        except KeyError as e:
            raise PreconditionError(f"job file is missing {e}")
        except (TypeError, ValueError) as e:
            if isinstance(e, NormalFormError):
                raise
            raise PreconditionError(f"invalid job file: {e}")

    @classmethod
    def load(cls, path: str, overrides: Optional[Dict[str, Any]] = None) -> "JobSpec":
        try:
            with open(path, 'r') as f:
                data = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise PreconditionError(f"cannot read job file {path}: {e}")
        job = cls.from_dict(data, overrides)
        if job.name == "job":
            job.name = Path(path).stem
        return job


def _fit_truncation(F: FormalMap, degree: int) -> FormalMap:
    if F.truncation < degree:
        raise PreconditionError(
            f"map is given through degree {F.truncation}, job asks for degree {degree}")
    return F.truncate(degree)


def load_tau(path: str) -> TauSpec:
    try:
        with open(path, 'r') as f:
            return TauSpec.from_dict(yaml.safe_load(f))
    except (OSError, yaml.YAMLError) as e:
        raise PreconditionError(f"cannot read tau file {path}: {e}")


@dataclass
class Report:
    """Outcome of one job"""
    job: str
    command: str
    exit_code: int = 0
    verdict: Optional[str] = None
    result: Dict[str, Any] = field(default_factory=dict)
    resonances: List[Dict] = field(default_factory=list)
    certificates: List[Dict] = field(default_factory=list)
    residual_status: str = "n/a"
    radius: Optional[str] = None
    warnings: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def worst_margin(self) -> Optional[Any]:
        margins = [c["margin"] for c in self.certificates if isinstance(c.get("margin"), int)]
        return min(margins, default=None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "job": self.job,
            "command": self.command,
            "exit_code": self.exit_code,
            "verdict": self.verdict,
            "residual": self.residual_status,
            "radius": self.radius,
            "resonances": self.resonances,
            "certificates": self.certificates,
            "result": self.result,
            "warnings": self.warnings,
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def banner(self) -> str:
        lines = ["=" * 50, "P-ADIC NORMAL FORM REPORT", "=" * 50,
                 f"Job: {self.job} ({self.command})",
                 f"Verdict: {self.verdict}",
                 f"Residual: {self.residual_status}",
                 f"Certificates: {len(self.certificates)}"
                 + (f" (worst margin {self.worst_margin})" if self.certificates else "")]
        if self.radius:
            lines.append(f"Convergence radius: {self.radius}")
        if self.error:
            lines.append(f"Error: {self.error}")
        lines.append(f"Exit code: {self.exit_code}")
        lines.append("=" * 50)
        return "\n".join(lines)

    def to_text(self) -> str:
        lines = [f"{self.command} job '{self.job}'"]
        for key in ("normal_form", "pdj_form", "witness"):
            if key in self.result:
                lines.append(f"  {key}: {json.dumps(self.result[key])}")
        if self.resonances:
            lines.append("  resonances: " + ", ".join(
                f"({r['component']}, {tuple(r['index'])})" for r in self.resonances))
        for warning in self.warnings:
            lines.append(f"  warning: {warning}")
        return "\n".join(lines) + "\n\n" + self.banner()

    def render(self, report_format: str = "text") -> str:
        return self.to_json() if report_format == "json" else self.to_text()


class JobProcessor:
    """Dispatches jobs to the library drivers"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def run(self, job: JobSpec) -> Report:
        report = Report(job.name, job.command)
        try:
            ctx = PrimeContext(job.prime)
            handler = getattr(self, f"_{job.command}")
            handler(job, ctx, report)
        except UnsupportedCaseError as e:
            self.logger.error(f"Failed to run job {job.name}: {e}")
            report.exit_code, report.verdict, report.error = e.exit_code, "out of scope", str(e)
        except NormalFormError as e:
            self.logger.error(f"Failed to run job {job.name}: {e}")
            report.exit_code, report.error = e.exit_code, str(e)
            report.verdict = report.verdict or "error"
        except Exception as e:
            self.logger.error(f"Unexpected failure in job {job.name}: {e}")
            report.exit_code, report.verdict = NormalFormError.exit_code, "error"
            report.error = f"{type(e).__name__}: {e}"
        return report

    def _pd_report(self, pd: PDResult, F: FormalMap, ctx: PrimeContext, report: Report):
        report.result.update({"input": F.to_dict(), **pd.to_dict()})
        report.resonances = [r.to_dict() for r in pd.resonances]
        report.certificates = [c.to_dict() for c in pd.certificates + pd.normal_form_margins]
        report.residual_status = "verified" if pd.residual.verified else "not verified"
        if pd.mode == "generic":
            report.warnings.append("generic normalization: no analyticity certificate is claimed")
        elif pd.certified:
            report.radius = str(growth_certificate(pd.conjugator, ctx).radius)

    def _normalize(self, job: JobSpec, ctx: PrimeContext, report: Report):
        F = job.maps[0]
        if F.var_count == 1:
            form, h = normal_form_1d(F.component(1), job.degree)
            conjugator = FormalMap.from_components([h])
            report.result = {"input": F.to_dict(),
                             "normal_form": FormalMap.from_components([form.series(job.degree)]).to_dict(),
                             "oned": form.to_dict(),
                             "conjugator": conjugator.to_dict()}
            report.residual_status = "verified"
            report.radius = str(growth_certificate(h, ctx).radius)
            report.verdict = "normalized"
            return
        pd = self._drive(F, job, ctx)
        self._pd_report(pd, F, ctx, report)
        report.verdict = "normalized"

    def _drive(self, F: FormalMap, job: JobSpec, ctx: PrimeContext) -> PDResult:
        mode, n = job.mode, job.n
        if mode == "auto":
            kind = classify_eigenvalues(*F.eigenvalues, ctx, job.maxdeg or job.degree)
            self.logger.info(f"Eigenvalues {F.eigenvalues} classified as {kind.kind}")
            if kind.kind == "saddle":
                raise UnsupportedCaseError(SADDLE_MESSAGE)
            mode = kind.kind if kind.kind in ("repelling", "semihyperbolic") else "generic"
            n = n or kind.n
        if mode == "repelling":
            if n is None:
                raise PreconditionError("repelling mode needs the resonance power n")
            return repelling_normalize(F, int(n), job.degree, ctx, job.strict)
        if mode == "semihyperbolic":
            return semihyperbolic_normalize(F, job.degree, ctx, job.strict)
        self.logger.warning("Generic normalization: no analyticity certificate is claimed")
        return pd_normalize(F, job.degree)

    def _pdj(self, job: JobSpec, ctx: PrimeContext, report: Report):
        F = job.maps[0]
        pd = semihyperbolic_normalize(F, job.degree, ctx, job.strict)
        pdj = pdj_reduce(pd.normal_form, job.degree, ctx, job.strict)
        self._pd_report(pd, F, ctx, report)
        report.result["pdj"] = pdj.to_dict()
        report.result["pdj_form"] = pdj.form.to_dict()
        report.certificates += [{"ladder": "c", **m.to_dict()} for m in pdj.ladder.c_margins]
        report.certificates += [{"ladder": "A", **m.to_dict()} for m in pdj.ladder.a_margins]
        if pdj.ladder.radius is not None:
            report.result["ladder_radius"] = str(pdj.ladder.radius)
        report.verdict = "reduced"

    def _equiv(self, job: JobSpec, ctx: PrimeContext, report: Report):
        F, G = job.maps
        if F.var_count != G.var_count:
            raise PreconditionError("maps live in different dimensions")
        if F.var_count == 1:
            verdict = equiv_1d(F.component(1), G.component(1), job.degree, ctx)
            report.result = verdict.to_dict()
            report.verdict = "equivalent" if verdict.equivalent else "inequivalent"
            return
        mode, n = job.mode, job.n
        if mode in ("auto", "generic"):
            kind = classify_eigenvalues(*F.eigenvalues, ctx, job.maxdeg or job.degree)
            if kind.kind == "saddle":
                raise UnsupportedCaseError(SADDLE_MESSAGE)
            if kind.kind not in ("repelling", "semihyperbolic"):
                raise PreconditionError(
                    f"equivalence is decided for repelling and semihyperbolic maps, got {kind.kind}")
            mode, n = kind.kind, n or kind.n
        if mode == "repelling":
            if n is None:
                raise PreconditionError("repelling mode needs the resonance power n")
            verdict = decide_equiv_repelling(F, G, int(n), job.degree, ctx, job.strict)
        else:
            verdict = decide_equiv_semihyperbolic(F, G, job.degree, ctx, job.strict)
        report.result = verdict.to_dict()
        report.verdict = verdict.label

    def _resonances(self, job: JobSpec, ctx: PrimeContext, report: Report):
        lam1, lam2 = job.eigenvalues
        maxdeg = job.maxdeg or job.degree
        found = find_resonances(lam1, lam2, maxdeg)
        report.resonances = [r.to_dict() for r in found]
        report.result = {"eigenvalues": [format_scalar(lam1), format_scalar(lam2)], "maxdeg": maxdeg,
                         "class": classify_eigenvalues(lam1, lam2, ctx, maxdeg).kind}
        report.verdict = f"{len(found)} resonance(s)"

    def _dyncheck(self, job: JobSpec, ctx: PrimeContext, report: Report):
        witness = check_dynamic(job.tau, ctx, job.bound, job.check)
        report.result = {"tau": job.tau.to_dict(), "bound": job.bound, "check": job.check,
                         "witness": witness.to_dict() if witness else None}
        report.verdict = "pass" if witness is None else "fail"
        for i, F in enumerate(job.maps, start=1):
            member = membership(F, job.tau, ctx)
            report.result[f"membership_{i}"] = member.to_dict()
            report.certificates += [c.to_dict() for c in member.certificates]
            if not member.passed:
                report.verdict = "fail"

    def _verify(self, job: JobSpec, ctx: PrimeContext, report: Report):
        data = job.payload.get("result", job.payload)
        try:
            if "pdj" in data:
                F = FormalMap.from_dict(data["normal_form"])
                pdj = data["pdj"]
                F0 = PDJForm.from_dict(pdj["pdj_form"]).as_map(F.truncation)
                Phi = FormalMap.from_dict(pdj["conjugator"])
            else:
                F = FormalMap.from_dict(data["input"])
                F0 = FormalMap.from_dict(data["normal_form"])
                Phi = FormalMap.from_dict(data["conjugator"])
        except KeyError as e:
            raise PreconditionError(f"report lacks {e}; cannot re-verify")
        residual = verify_conjugacy(F, F0, Phi)
        report.result = {"residual_terms": residual.to_list()}
        report.residual_status = "verified" if residual.verified else "not verified"
        report.verdict = report.residual_status
        if not residual.verified:
            raise CertificateViolation(f"residual not empty at {residual.first_offender}")


def run_job(job: JobSpec) -> Report:
    return JobProcessor().run(job)


def run_job_file(path: str, overrides: Optional[Dict[str, Any]] = None) -> Report:
    try:
        job = JobSpec.load(path, overrides)
    except NormalFormError as e:
        logging.getLogger(__name__).error(f"Failed to load job {path}: {e}")
        return Report(Path(path).stem, "unknown", e.exit_code, "error", error=str(e))
    return run_job(job)


class BatchProcessor:
    """Run several job files concurrently"""

    def __init__(self, max_concurrent: int = 4, overrides: Optional[Dict[str, Any]] = None):
        self.max_concurrent = max_concurrent
        self.overrides = overrides or {}
        self.logger = logging.getLogger(__name__)

    async def process_jobs(self, paths: List[str]) -> List[Report]:
        """Reports come back in input order"""
        loop = asyncio.get_running_loop()
        reports: List[Report] = []

        for i in range(0, len(paths), self.max_concurrent):
            batch = paths[i:i + self.max_concurrent]
            self.logger.info(f"Processing batch {i // self.max_concurrent + 1}/"
                             f"{(len(paths) + self.max_concurrent - 1) // self.max_concurrent}")
            tasks = [loop.run_in_executor(None, run_job_file, path, self.overrides) for path in batch]
            batch_results = await asyncio.gather(*tasks, return_exceptions=True)

            for path, result in zip(batch, batch_results):
                if isinstance(result, Exception):
                    self.logger.error(f"Failed to process job {path}: {result}")
                    reports.append(Report(Path(path).stem, "unknown", 1, "error", error=str(result)))
                else:
                    reports.append(result)
        return reports

    async def save_reports(self, reports: List[Report], output_dir: str,
                           report_format: str = "json") -> List[str]:
        os.makedirs(output_dir, exist_ok=True)
        suffix = "json" if report_format == "json" else "txt"
        written = []
        for i, report in enumerate(reports):
            filepath = os.path.join(output_dir, f"{i + 1:03d}_{report.job}.{suffix}")
            async with aiofiles.open(filepath, 'w') as f:
                await f.write(report.render(report_format))
            written.append(filepath)
        self.logger.info(f"Saved {len(written)} reports to {output_dir}")
        return written
