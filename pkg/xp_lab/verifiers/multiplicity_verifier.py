import logging
from functools import partial
from typing import List

from dotenv import load_dotenv

from ..config import JobConfig
from ..errors import DomainError
from ..pool import map_ordered
from ..report import CheckReport, guarded
from ..repulsion import SpecialSet, mult_trend_check, mult_vs_volume_report, rotation_family

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def multiplicity_reports(config: JobConfig, p: int) -> List[CheckReport]:
    """Margin reports of every special set for the rotated graph through (i, i)."""
    job = config.repulsion_job(p)
    try:
        family = [rotation_family(p)]
    except DomainError as exc:
        logger.warning(f"[Multiplicity] p={p}: {exc}; margin reports skipped")
        return [CheckReport.inconclusive(f"repulsion.mult_vs_volume.{s.value}.p{p}", str(exc))
                for s in SpecialSet]
    reports: List[CheckReport] = []
    for special in SpecialSet:
        reports += guarded(f"repulsion.mult_vs_volume.{special.value}.p{p}",
                           mult_vs_volume_report, family, special, job)
    return reports


def trend_reports(reports: List[CheckReport]) -> List[CheckReport]:
    """One trend check per special set that has fitted constants at two or more primes."""
    out = []
    for special in SpecialSet:
        fitted = [r for r in reports if r.detail.get("set") == special.value and "fitted" in r.detail]
        if len(fitted) < 2:
            logger.info(f"[Multiplicity] {special.value}: {len(fitted)} fitted primes, no trend check")
            continue
        out.append(mult_trend_check(fitted))
    return out


class MultiplicityVerifier:
    """Multiplicity-versus-volume margins and their trend in p."""

    def __init__(self, name: str = "MultiplicityVerifier"):
        self.name = name
        self.running = False
        logger.info(f"MultiplicityVerifier initialized: {name}")

    async def run(self, config: JobConfig) -> List[CheckReport]:
        logger.info(f"[Multiplicity] Margin reports for p in {config.p_list}")
        try:
            batches = map_ordered(partial(multiplicity_reports, config), config.p_list, config.jobs)
        except Exception as exc:
            logger.exception("[Multiplicity] Verification failed")
            return [CheckReport.failed("multiplicity.run",
                                       witness={"error": type(exc).__name__, "message": str(exc)})]
        reports = [report for batch in batches for report in batch]
        return reports + trend_reports(reports)

    async def start(self):
        logger.info(f"Starting MultiplicityVerifier: {self.name}")
        self.running = True

    async def stop(self):
        logger.info(f"Stopping MultiplicityVerifier: {self.name}")
        self.running = False

    def is_alive(self) -> bool:
        return self.running
