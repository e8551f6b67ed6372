import logging
from functools import partial
from typing import List, Sequence

from dotenv import load_dotenv

from ..config import JobConfig
from ..errors import DomainError
from ..pool import map_ordered
from ..report import CheckReport, guarded
from ..repulsion import (check_bicusp_repulsion, check_cm_repulsion, check_constructed_cm,
                         check_cusp_repulsion, check_diag_repulsion, diag_trichotomy_report,
                         mobius_correction_terms, mobius_ratio_asymptotic)
from ..triangle import compute_vertex_params

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

MOBIUS_THETAS = (0.05, 0.1, 0.2)
MOBIUS_EPS_FRACTIONS = (0.0, 1e-3, 1e-2)
MOBIUS_TOL = 1e-3

CHART_CHECKS = (
    ("cusp", check_cusp_repulsion),
    ("bicusp", check_bicusp_repulsion),
    ("diag", check_diag_repulsion),
    ("diag_trichotomy", diag_trichotomy_report),
)


def mobius_check(thetas: Sequence[float] = MOBIUS_THETAS,
                 fractions: Sequence[float] = MOBIUS_EPS_FRACTIONS, tol: float = MOBIUS_TOL) -> CheckReport:
    """1 - |(R - R e^{it})/(1 - R^2 e^{it})| against its leading term near the boundary.

    The exact leading term is asserted; the 2 eps^2/theta^2 form is only
    reported, since it carries an O(eps + theta^2) relative error.
    """
    rows, worst, witness = [], 0.0, {}
    for theta in thetas:
        for frac in fractions:
            R = 1.0 - frac * theta
            value, predicted = mobius_ratio_asymptotic(R, theta)
            if frac == 0.0:
                deviation = abs(value - 1.0)
                rows.append({"theta": theta, "eps": 0.0, "value": value})
            else:
                terms = mobius_correction_terms(R, theta)
                deviation = terms["rel_exact"]
                rows.append({"theta": theta, "eps": 1.0 - R, "value": value, "predicted": predicted, **terms})
            if deviation > worst:
                worst, witness = deviation, {"theta": theta, "R": R}
    return CheckReport.compare("repulsion.mobius", worst, tol, "<=", witness=witness, detail={"grid": rows})


def repulsion_checks(config: JobConfig, p: int) -> List[CheckReport]:
    """Cusp, CM, bicusp and diagonal repulsion for one prime."""
    job = config.repulsion_job(p)
    logger.info(f"[Repulsion] Checking p={p}, delta={job.delta}")
    reports: List[CheckReport] = []
    reports += guarded(f"repulsion.cm.p{p}", check_cm_repulsion, job)
    reports += guarded(f"repulsion.cm_constructed.p{p}", check_constructed_cm, job)
    try:
        compute_vertex_params(p)
    except DomainError as exc:
        logger.warning(f"[Repulsion] p={p}: {exc}; chart sweeps skipped")
        return reports + [CheckReport.inconclusive(f"repulsion.{name}.p{p}", str(exc))
                          for name, _ in CHART_CHECKS]
    for name, fn in CHART_CHECKS:
        reports += guarded(f"repulsion.{name}.p{p}", fn, job)
    return reports


class RepulsionVerifier:
    """Repulsion of cusps, CM points, bicusps and diagonal translates over a list of primes."""

    def __init__(self, name: str = "RepulsionVerifier"):
        self.name = name
        self.running = False
        logger.info(f"RepulsionVerifier initialized: {name}")

    async def run(self, config: JobConfig) -> List[CheckReport]:
        logger.info(f"[Repulsion] Verifying p in {config.p_list}, delta={config.delta}")
        try:
            batches = map_ordered(partial(repulsion_checks, config), config.p_list, config.jobs)
            reports = guarded("repulsion.mobius", mobius_check)
        except Exception as exc:
            logger.exception("[Repulsion] Verification failed")
            return [CheckReport.failed("repulsion.run", witness={"error": type(exc).__name__, "message": str(exc)})]
        for batch in batches:
            reports += batch
        return reports

    async def start(self):
        logger.info(f"Starting RepulsionVerifier: {self.name}")
        self.running = True

    async def stop(self):
        logger.info(f"Stopping RepulsionVerifier: {self.name}")
        self.running = False

    def is_alive(self) -> bool:
        return self.running
