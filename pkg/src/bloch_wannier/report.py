"""Run reports: one JSON document for machines and the same content as text."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .errors import BlochWannierError

logger = logging.getLogger(__name__)

JSON_NAME = "report.json"
TEXT_NAME = "report.txt"


class CheckEntry(BaseModel):
    """A measured quantity against its threshold"""

    name: str
    value: float
    tolerance: Optional[float] = None
    passed: bool = True
    detail: Optional[str] = None


class ErrorEntry(BaseModel):
    name: str
    message: str
    stage: Optional[str] = None
    exit_code: int

    @classmethod
    def from_error(cls, error: BlochWannierError) -> "ErrorEntry":
        return cls(name=error.name, message=error.message, stage=error.stage, exit_code=error.exit_code)


class RunReport(BaseModel):
    pipeline: Optional[str] = None
    model: Optional[str] = None
    checks: List[CheckEntry] = Field(default_factory=list)
    sections: Dict[str, Any] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    error: Optional[ErrorEntry] = None

    model_config = ConfigDict(ser_json_inf_nan="constants")

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def check(self, name: str, value: float, tolerance: Optional[float] = None, *, below: bool = True, detail: Optional[str] = None) -> CheckEntry:
        """Record value against tolerance (value <= tolerance when below, else value > tolerance)"""
        if tolerance is None:
            passed = True
        elif below:
            passed = value <= tolerance
        else:
            passed = value > tolerance
        entry = CheckEntry(name=name, value=float(value), tolerance=tolerance, passed=passed, detail=detail)
        self.checks.append(entry)
        if not passed:
            logger.warning("check %s failed: %.3e vs %.3e", name, value, tolerance)
        return entry


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _flatten(prefix: str, value: Any) -> List[Tuple[str, Any]]:
    if isinstance(value, dict):
        out = []
        for key, item in value.items():
            out.extend(_flatten(f"{prefix}.{key}" if prefix else str(key), item))
        return out
    if isinstance(value, list) and value and isinstance(value[0], dict):
        out = []
        for i, item in enumerate(value):
            out.extend(_flatten(f"{prefix}[{i}]", item))
        return out
    return [(prefix, value)]


def render_text(report: RunReport) -> str:
    data = json.loads(report.model_dump_json())
    lines = []
    if data["pipeline"]:
        lines.append(f"pipeline: {data['pipeline']}")
    if data["model"]:
        lines.append(f"model: {data['model']}")
    for check in data["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        tolerance = "" if check["tolerance"] is None else f" (tolerance {_format_value(check['tolerance'])})"
        detail = f" {check['detail']}" if check["detail"] else ""
        lines.append(f"[{status}] {check['name']} = {_format_value(check['value'])}{tolerance}{detail}")
    for name, section in data["sections"].items():
        for key, value in _flatten(name, section):
            lines.append(f"{key}: {_format_value(value)}")
    for artifact in data["artifacts"]:
        lines.append(f"artifact: {artifact}")
    if data["error"]:
        error = data["error"]
        where = f" [{error['stage']}]" if error["stage"] else ""
        lines.append(f"error{where}: {error['name']}: {error['message']} (exit {error['exit_code']})")
    return "\n".join(lines) + "\n"


def write_report(report: RunReport, out: Path) -> Tuple[Path, Path]:
    """Write report.json and report.txt into out; I/O errors propagate unchanged"""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / JSON_NAME
    text_path = out / TEXT_NAME
    json_path.write_text(report.model_dump_json(indent=2) + "\n")
    text_path.write_text(render_text(report))
    logger.info("report written to %s", json_path)
    return json_path, text_path


def read_report(path: Path) -> RunReport:
    return RunReport.model_validate_json(Path(path).read_text())
