"""
Check reports and the report envelope, with deterministic JSON/CSV emission.
"""
import csv
import io
import json
import logging
import math
import time
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

from pydantic import BaseModel, Field, model_validator

from . import __version__
from .errors import ResourceError, XpLabError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
CSV_HEADER = ["id", "status", "lhs", "rhs", "witness", "detail", "runtime"]


class Status(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


def _jsonable(value: Any) -> Any:
    """Recursively turn tuples, enums and numpy scalars into plain JSON values."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "item") and callable(value.item):
        return value.item()
    return value


class CheckReport(BaseModel):
    id: str
    status: Status
    lhs: Optional[float] = None
    rhs: Optional[float] = None
    witness: Dict[str, Any] = Field(default_factory=dict)
    detail: Dict[str, Any] = Field(default_factory=dict)
    runtime: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def _plain_values(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            for key in ("witness", "detail"):
                if key in data and data[key] is not None:
                    data[key] = _jsonable(data[key])
        return data

    @model_validator(mode="after")
    def _fail_has_witness(self) -> "CheckReport":
        if self.status == Status.FAIL and not self.witness:
            raise ValueError(f"FAIL report {self.id} carries no witness")
        return self

    @classmethod
    def compare(cls, id: str, lhs: float, rhs: float, op: str = "<=", tol: float = 0.0,
                witness: Optional[Dict[str, Any]] = None,
                detail: Optional[Dict[str, Any]] = None) -> "CheckReport":
        """PASS when `lhs op rhs` holds up to tol."""
        if op == "<=":
            ok = lhs <= rhs + tol
        elif op == ">=":
            ok = lhs >= rhs - tol
        elif op == "<":
            ok = lhs < rhs + tol
        elif op == ">":
            ok = lhs > rhs - tol
        elif op == "==":
            ok = abs(lhs - rhs) <= tol
        else:
            raise ValueError(f"unknown comparison {op!r}")
        if ok:
            return cls(id=id, status=Status.PASS, lhs=lhs, rhs=rhs,
                       witness=witness or {}, detail=detail or {})
        return cls(id=id, status=Status.FAIL, lhs=lhs, rhs=rhs,
                   witness=witness or {"lhs": lhs, "rhs": rhs, "op": op}, detail=detail or {})

    @classmethod
    def passed(cls, id: str, **kwargs) -> "CheckReport":
        return cls(id=id, status=Status.PASS, **kwargs)

    @classmethod
    def inconclusive(cls, id: str, reason: str, **kwargs) -> "CheckReport":
        detail = dict(kwargs.pop("detail", {}) or {})
        detail["reason"] = reason
        return cls(id=id, status=Status.INCONCLUSIVE, detail=detail, **kwargs)

    @classmethod
    def failed(cls, id: str, witness: Dict[str, Any], **kwargs) -> "CheckReport":
        return cls(id=id, status=Status.FAIL, witness=witness, **kwargs)


def summarize(checks: Sequence[CheckReport]) -> Dict[str, int]:
    counts = {status.value: 0 for status in Status}
    for check in checks:
        counts[check.status.value] += 1
    counts["total"] = len(checks)
    return counts


def exit_code(checks: Sequence[CheckReport]) -> int:
    statuses = {c.status for c in checks}
    if Status.FAIL in statuses:
        return 1
    if Status.INCONCLUSIVE in statuses:
        return 2
    return 0


class ReportEnvelope(BaseModel):
    tool_version: str = __version__
    schema_version: str = SCHEMA_VERSION
    config: Dict[str, Any] = Field(default_factory=dict)
    checks: List[CheckReport] = Field(default_factory=list)
    summary: Dict[str, int] = Field(default_factory=dict)
    wall_time: Optional[float] = None

    @model_validator(mode="after")
    def _summary_matches(self) -> "ReportEnvelope":
        expected = summarize(self.checks)
        if not self.summary:
            self.summary = expected
        elif self.summary != expected:
            raise ValueError(f"summary {self.summary} does not match check tallies {expected}")
        return self

    @classmethod
    def build(cls, config: Dict[str, Any], checks: Sequence[CheckReport],
              wall_time: Optional[float] = None) -> "ReportEnvelope":
        ordered = sorted(checks, key=lambda c: c.id)
        return cls(config=_jsonable(config), checks=ordered, wall_time=wall_time)


def _body(envelope: ReportEnvelope, include_timings: bool) -> Dict[str, Any]:
    data = envelope.model_dump(mode="python")
    if not include_timings:
        data["wall_time"] = None
        for check in data["checks"]:
            check["runtime"] = None
    return _jsonable(data)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return str(value)


def emit(envelope: ReportEnvelope, fmt: OutputFormat = OutputFormat.JSON,
         include_timings: bool = False) -> bytes:
    """Serialize a report envelope.

    Args:
        envelope: the report
        fmt: JSON (sorted keys, shortest round-trip floats) or CSV (one row per check)
        include_timings: keep wall time and per-check runtime in the body

    Returns:
        UTF-8 encoded bytes
    """
    body = _body(envelope, include_timings)
    if OutputFormat(fmt) == OutputFormat.JSON:
        text = json.dumps(body, sort_keys=True, ensure_ascii=False, indent=2, allow_nan=True)
        return (text + "\n").encode("utf-8")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for check in body["checks"]:
        writer.writerow([_cell(check.get(column)) for column in CSV_HEADER])
    return buffer.getvalue().encode("utf-8")


def parse_report(data: bytes) -> ReportEnvelope:
    return ReportEnvelope.model_validate(json.loads(data.decode("utf-8")))


def emit_rows(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> bytes:
    """CSV plot data for profile and trend exports."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_cell(_jsonable(v)) for v in row])
    return buffer.getvalue().encode("utf-8")


def report_from_error(check_id: str, exc: XpLabError) -> CheckReport:
    """Budget exhaustion is INCONCLUSIVE; every other library error is a FAIL."""
    if isinstance(exc, ResourceError):
        detail = {k: v for k, v in (("estimate", exc.estimate), ("error_bound", exc.error_bound))
                  if v is not None}
        return CheckReport.inconclusive(check_id, str(exc), detail=detail)
    return CheckReport.failed(check_id, witness={"error": type(exc).__name__, "message": str(exc)})


def guarded(check_id: str, fn: Callable[..., Union[CheckReport, List[CheckReport]]],
            *args, **kwargs) -> List[CheckReport]:
    """Run one check function, timing it and converting XpLabError into a report."""
    start = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    except XpLabError as exc:
        logger.warning(f"[Report] {check_id}: {type(exc).__name__}: {exc}")
        result = report_from_error(check_id, exc)
    elapsed = time.perf_counter() - start
    reports = list(result) if isinstance(result, (list, tuple)) else [result]
    return [r.model_copy(update={"runtime": elapsed / max(1, len(reports))}) for r in reports]
