"""Tests for check reports and their emission."""
import json
import math

import pytest
from pydantic import ValidationError

from xp_lab.errors import DomainError, ResourceError
from xp_lab.report import (CSV_HEADER, CheckReport, OutputFormat, ReportEnvelope, Status, emit, emit_rows,
                           exit_code, guarded, parse_report, summarize)


@pytest.fixture
def checks():
    return [
        CheckReport.passed("b.check", lhs=1.0, rhs=2.0),
        CheckReport.compare("a.check", 3.0, 2.0, "<="),
        CheckReport.inconclusive("c.check", "budget", detail={"estimate": 0.5}),
    ]


class TestCheckReport:
    """Statuses and their invariants."""

    def test_compare(self):
        assert CheckReport.compare("x", 1.0, 1.0, "==").status == Status.PASS
        assert CheckReport.compare("x", 1.0 + 1e-10, 1.0, "==", tol=1e-9).status == Status.PASS
        assert CheckReport.compare("x", 2.0, 1.0, ">").status == Status.PASS

    def test_failed_comparison_has_a_witness(self):
        report = CheckReport.compare("x", 3.0, 2.0, "<=")
        assert report.status == Status.FAIL
        assert report.witness == {"lhs": 3.0, "rhs": 2.0, "op": "<="}

    def test_fail_needs_witness(self):
        with pytest.raises(ValidationError):
            CheckReport.failed("x", witness={})

    def test_unknown_operator(self):
        with pytest.raises(ValueError):
            CheckReport.compare("x", 1.0, 1.0, "~")

    def test_inconclusive_reason(self):
        report = CheckReport.inconclusive("x", "no chart")
        assert report.detail["reason"] == "no chart"

    def test_values_become_plain_json(self):
        report = CheckReport.passed("x", detail={"z": 1 + 2j, "pair": (1, 2)})
        assert report.detail == {"z": [1.0, 2.0], "pair": [1, 2]}


class TestSummary:
    def test_counts(self, checks):
        assert summarize(checks) == {"PASS": 1, "FAIL": 1, "INCONCLUSIVE": 1, "total": 3}

    @pytest.mark.parametrize("statuses, code", [
        ((Status.PASS,), 0),
        ((Status.PASS, Status.INCONCLUSIVE), 2),
        ((Status.INCONCLUSIVE, Status.FAIL), 1),
        ((), 0),
    ])
    def test_exit_code(self, statuses, code):
        reports = [CheckReport(id=f"c{i}", status=s, witness={"w": 1}) for i, s in enumerate(statuses)]
        assert exit_code(reports) == code


class TestEnvelope:
    """Ordering, serialization and parsing."""

    def test_sorted_by_id(self, checks):
        envelope = ReportEnvelope.build({"p_list": [7]}, checks)
        assert [c.id for c in envelope.checks] == ["a.check", "b.check", "c.check"]

    def test_summary_must_match(self, checks):
        with pytest.raises(ValidationError):
            ReportEnvelope(checks=checks, summary={"PASS": 3, "FAIL": 0, "INCONCLUSIVE": 0, "total": 3})

    def test_json_round_trip(self, checks):
        envelope = ReportEnvelope.build({"delta": 0.1}, checks, wall_time=1.5)
        data = emit(envelope)
        parsed = parse_report(data)
        assert parsed.checks == envelope.checks
        assert parsed.wall_time is None
        assert emit(parsed) == data

    def test_json_is_sorted_and_deterministic(self, checks):
        a = emit(ReportEnvelope.build({}, checks))
        b = emit(ReportEnvelope.build({}, list(reversed(checks))))
        assert a == b
        body = json.loads(a)
        assert list(body) == sorted(body)

    def test_timings_kept_on_request(self, checks):
        body = json.loads(emit(ReportEnvelope.build({}, checks, wall_time=2.0), include_timings=True))
        assert body["wall_time"] == 2.0

    def test_csv(self, checks):
        lines = emit(ReportEnvelope.build({}, checks), OutputFormat.CSV).decode().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 4
        assert lines[1].startswith("a.check,FAIL,3.0,2.0,")

    def test_rows(self):
        data = emit_rows(["t", "v"], [(0.5, math.inf), (1.0, 2)]).decode().splitlines()
        assert data == ["t,v", "0.5,inf", "1.0,2"]


class TestGuarded:
    """Library errors become report statuses at the check boundary."""

    def test_passes_through(self):
        reports = guarded("x", lambda: CheckReport.passed("x"))
        assert len(reports) == 1
        assert reports[0].runtime is not None

    def test_list_results(self):
        reports = guarded("x", lambda: [CheckReport.passed("x.a"), CheckReport.passed("x.b")])
        assert [r.id for r in reports] == ["x.a", "x.b"]

    def test_resource_error_is_inconclusive(self):
        def run():
            raise ResourceError("tile budget", estimate=1.0, error_bound=0.1)
        report, = guarded("x", run)
        assert report.status == Status.INCONCLUSIVE
        assert report.detail["estimate"] == 1.0

    def test_domain_error_is_fail(self):
        def run():
            raise DomainError("boundary point")
        report, = guarded("x", run)
        assert report.status == Status.FAIL
        assert report.witness["error"] == "DomainError"
