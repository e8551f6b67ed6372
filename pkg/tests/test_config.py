"""Tests for job configuration layering."""
import pytest
from pydantic import ValidationError

from xp_lab.config import (DEFAULT_CONSTANTS, JobConfig, RepulsionJob, build_config, env_jobs, parse_constants,
                           parse_p_list, read_ini)
from xp_lab.errors import UsageError
from xp_lab.report import OutputFormat


INI = """\
[job]
p = 7, 11
delta = 0.15
R = 2.0
r = 0.5

[constants]
C_count = 20
"""


@pytest.fixture
def ini_file(tmp_path):
    path = tmp_path / "xp_lab.ini"
    path.write_text(INI)
    return str(path)


class TestJobConfig:
    """Range validation on JobConfig."""

    def test_defaults(self, make_config):
        cfg = make_config()
        assert cfg.p_list == [7]
        assert cfg.out == OutputFormat.JSON
        assert cfg.constants == DEFAULT_CONSTANTS

    @pytest.mark.parametrize("overrides", [
        {"p_list": [3]}, {"p_list": [9]}, {"p_list": []},
        {"delta": 0.0}, {"delta": 0.25},
        {"tol": 1e-2}, {"tol": 1e-15},
        {"height_bound": 0}, {"jobs": 0},
        {"volume_check": "nope"},
        {"constants": {"C_count": -1.0}},
    ])
    def test_rejects(self, make_config, overrides):
        with pytest.raises(ValidationError):
            make_config(**overrides)

    def test_unknown_command(self):
        with pytest.raises(ValidationError):
            JobConfig(command="verify everything")

    def test_echo_leaves_out_jobs(self, make_config):
        echo = make_config(jobs=4).echo()
        assert "jobs" not in echo
        assert echo["p_list"] == [7]

    def test_repulsion_job(self, make_config):
        job = make_config("verify repulsion", delta=0.2, constants={"C_count": 3.0}).repulsion_job(11)
        assert isinstance(job, RepulsionJob)
        assert job.p == 11
        assert job.delta == 0.2
        assert job.constant("C_count") == 3.0
        assert job.constant("C_lens") == DEFAULT_CONSTANTS["C_lens"]

    def test_unknown_constant(self):
        with pytest.raises(UsageError):
            RepulsionJob(p=7).constant("C_nope")


class TestParsing:
    def test_constants(self):
        assert parse_constants(["C_count=3", " K = 1.5"]) == {"C_count": 3.0, "K": 1.5}

    @pytest.mark.parametrize("item", ["C_count", "=3", "C_count=abc"])
    def test_bad_constants(self, item):
        with pytest.raises(UsageError):
            parse_constants([item])

    def test_p_list(self):
        assert parse_p_list("7, 11 13") == [7, 11, 13]
        with pytest.raises(UsageError):
            parse_p_list("7,x")


class TestLayering:
    """INI defaults, then flags, then XP_LAB_JOBS."""

    def test_read_ini(self, ini_file):
        values = read_ini(ini_file)
        assert values["p_list"] == [7, 11]
        assert values["R"] == 2.0 and values["r"] == 0.5
        assert values["constants"] == {"C_count": 20.0}

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            read_ini(str(tmp_path / "absent.ini"))

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[job]\nwidth = 3\n")
        with pytest.raises(UsageError):
            read_ini(str(path))

    def test_flags_override_file(self, ini_file, monkeypatch):
        monkeypatch.delenv("XP_LAB_JOBS", raising=False)
        cfg = build_config("verify volume", {"delta": 0.05, "p_list": None, "constants": {"K": 1.0}}, ini_file)
        assert cfg.delta == 0.05
        assert cfg.p_list == [7, 11]
        assert cfg.constants["C_count"] == 20.0
        assert cfg.constants["K"] == 1.0
        assert cfg.jobs == 1

    def test_env_jobs(self, monkeypatch):
        monkeypatch.setenv("XP_LAB_JOBS", "3")
        assert env_jobs() == 3
        assert build_config("verify geometry", {}).jobs == 3
        assert build_config("verify geometry", {"jobs": 2}).jobs == 2

    def test_env_jobs_not_an_int(self, monkeypatch):
        monkeypatch.setenv("XP_LAB_JOBS", "many")
        with pytest.raises(UsageError):
            env_jobs()

    def test_invalid_values_become_usage_errors(self, monkeypatch):
        monkeypatch.delenv("XP_LAB_JOBS", raising=False)
        with pytest.raises(UsageError):
            build_config("verify geometry", {"delta": 0.5})
