"""
Volume-lab verifier: extremal equalities, growth ratios, the collar oracle,
profile positivity, the current identity and Lelong numbers.

Work is split into independent tasks (one per check family and (r, R) pair)
so the pool can spread quadratures over workers.
"""
import logging
import math
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from ..config import JobConfig
from ..errors import DomainError
from ..pool import map_ordered
from ..report import CheckReport, Status, guarded
from ..volume import (CurvePatch, Diag2Patch, DiskMap, MapKind, ProfileKind, RadialProfile, RegionKind,
                      builtin_patches, collar_tightness_check, current_identity_check, htad_profile,
                      htad_ratio_check, htd_profile, htd_ratio_check, ht_conj_point_check, ht_diag2_check,
                      ht_diag_check, ht_point_check, lelong_estimate, profile_positivity_check)

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

HT_RADII = (0.5, 1.0, 2.0)
SMALL_RADII = (0.25, 0.5, 1.0)
LARGE_RADII = (1.5, 2.0, 3.0)
RATIO_TOL = 1e-6
RANDOM_PROFILES = 100
LELONG_TOL = 1e-3

Task = Callable[[], List[CheckReport]]


def _run_task(task: Task) -> List[CheckReport]:
    return task()


def _tagged(report: CheckReport, tag: str) -> CheckReport:
    return report.model_copy(update={"id": f"{report.id}.{tag}"})


def diag2_sample() -> Diag2Patch:
    """(z, z, -z, 0): meets the double diagonal once, transversally, at z = 0."""
    return Diag2Patch((DiskMap(MapKind.IDENTITY), DiskMap(MapKind.IDENTITY),
                       DiskMap(MapKind.NEG), DiskMap(MapKind.CONST, (0,))))


def ht_reports(r: float) -> List[CheckReport]:
    """The extremal cases of both point and diagonal bounds, plus the conjugate and Δ₂ variants."""
    reports = []
    reports += guarded(f"volume.ht_point.r{r:g}", ht_point_check, CurvePatch.const(0.2), (0j, 0.2 + 0j), r)
    reports += guarded(f"volume.ht_diag.r{r:g}", ht_diag_check, CurvePatch.neg(), r)
    reports += guarded(f"volume.ht_conj_point.r{r:g}", ht_conj_point_check,
                       CurvePatch.conj_model(1, 0), (0.1 + 0j, 0.1 + 0j), r)
    reports += guarded(f"volume.ht_diag2.r{r:g}", ht_diag2_check, diag2_sample(), r)
    return reports


def htd_reports(r: float, R: float, tol: float = RATIO_TOL) -> List[CheckReport]:
    reports = []
    for k, patch in enumerate(builtin_patches(RegionKind.DIAG_TUBE)):
        tag = f"{patch.kind.value}{k}"
        reports += [_tagged(rep, tag) for rep in
                    guarded(f"volume.htd.r{r:g}.R{R:g}", htd_ratio_check, patch, r, R, tol)]
    return reports


def htad_reports(r: float, R: float, tol: float = RATIO_TOL) -> List[CheckReport]:
    reports = []
    for k, patch in enumerate(builtin_patches(RegionKind.CONJ_DIAG_TUBE)):
        tag = f"{patch.kind.value}{k}"
        reports += [_tagged(rep, tag) for rep in
                    guarded(f"volume.htad.r{r:g}.R{R:g}", htad_ratio_check, patch, r, R, tol)]
    return reports + collar_reports(r, R)


def collar_reports(r: float, R: float) -> List[CheckReport]:
    return guarded(f"volume.htad_collar.r{r:g}.R{R:g}", collar_tightness_check, r, R)


def profile_reports(r: float, R: float) -> List[CheckReport]:
    reports = []
    for kind in ProfileKind:
        reports += guarded(f"volume.profile.{kind.value}.r{r:g}.R{R:g}",
                           profile_positivity_check, RadialProfile(kind, r, R))
    return reports


def random_profile_pairs(count: int, seed: int) -> List[Tuple[float, float]]:
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.05, 2.0, size=count)
    R = r + rng.uniform(0.1, 4.0, size=count)
    return [(float(a), float(b)) for a, b in zip(r, R)]


def random_profile_report(kind: ProfileKind, count: int = RANDOM_PROFILES, seed: int = 42,
                          grid: int = 2_000) -> List[CheckReport]:
    """One summary report for the profile conditions over random (r, R)."""
    check_id = f"volume.profile.{kind.value}.random"
    pairs = random_profile_pairs(count, seed)
    worst_junction, failures = 0.0, []
    for r, R in pairs:
        profile = RadialProfile(kind, r, R)
        report = profile_positivity_check(profile, grid=grid)
        worst_junction = max(worst_junction, *profile.junction_defects())
        if report.status == Status.FAIL:
            failures.append({"r": r, "R": R, **report.witness})
    detail = {"pairs": count, "seed": seed, "worst_junction": worst_junction}
    if failures:
        return [CheckReport.failed(check_id, witness={"first": failures[0], "count": len(failures)},
                                   detail=detail)]
    return [CheckReport.passed(check_id, lhs=worst_junction, rhs=1e-10, detail=detail)]


def lelong_reports(x: complex = complex(0.2, -0.1), tol: float = LELONG_TOL) -> List[CheckReport]:
    """Pole orders of m log|z - x| and of log|z - x| plus a smooth term."""
    cases = (
        ("log", lambda z: math.log(abs(z - x)), 1.0),
        ("log_times_3", lambda z: 3.0 * math.log(abs(z - x)), 3.0),
        ("log_plus_smooth", lambda z: math.log(abs(z - x)) + 0.5 * abs(z) ** 2, 1.0),
    )
    reports = []
    for name, potential, expected in cases:
        check_id = f"volume.lelong.{name}"
        try:
            est = lelong_estimate(potential, x)
        except DomainError as exc:
            logger.warning(f"[Volume] {check_id}: {exc}")
            reports.append(CheckReport.failed(check_id, witness={"error": str(exc)}))
            continue
        reports.append(CheckReport.compare(check_id, est.value, expected, "==", tol,
                                           detail={"error": est.error, "ratios": list(est.ratios)}))
    return reports


def _pairs(config: JobConfig) -> List[Tuple[float, float]]:
    if config.r is not None and config.R is not None:
        return [(config.r, config.R)]
    return [(r, R) for r in SMALL_RADII for R in LARGE_RADII]


def volume_tasks(config: JobConfig) -> List[Task]:
    """Independent units of work for the selected --check."""
    wanted = config.volume_check
    pick = (lambda name: wanted in ("all", name))
    pairs = _pairs(config)
    # quadrature is good to RATIO_TOL, so --tol can only loosen the comparison
    ratio_tol = max(config.tol, RATIO_TOL)
    tasks: List[Task] = []
    if pick("ht"):
        radii = [config.r] if config.r is not None else list(HT_RADII)
        tasks += [partial(ht_reports, r) for r in radii]
    if pick("htd"):
        tasks += [partial(htd_reports, r, R, ratio_tol) for r, R in pairs]
    if pick("htad"):
        tasks += [partial(htad_reports, r, R, ratio_tol) for r, R in pairs]
    elif pick("collar"):
        tasks += [partial(collar_reports, r, R) for r, R in pairs]
    if pick("profile"):
        tasks += [partial(profile_reports, r, R) for r, R in pairs]
        tasks += [partial(random_profile_report, kind, seed=config.seed) for kind in ProfileKind]
    if pick("current"):
        tasks.append(partial(guarded, "volume.current_identity", current_identity_check))
    if pick("lelong"):
        tasks.append(lelong_reports)
    return tasks


def profile_rows(config: JobConfig, points: int = 50) -> Tuple[List[str], List[Sequence[float]]]:
    """CSV plot data: s, first and second derivatives and the dominating factor, both profiles."""
    r = config.r if config.r is not None else 0.5
    R = config.R if config.R is not None else 2.0
    rows: List[Sequence[float]] = []
    for kind, table in (("htd", htd_profile(r, R, points)), ("htad", htad_profile(r, R, points))):
        rows += [(kind, r, R, *row) for row in table]
    return ["profile", "r", "R", "s", "first", "second", "domination"], rows


class VolumeVerifier:
    """Hyperbolic volume estimates for curves in the bidisk."""

    def __init__(self, name: str = "VolumeVerifier"):
        self.name = name
        self.running = False
        logger.info(f"VolumeVerifier initialized: {name}")

    async def run(self, config: JobConfig) -> List[CheckReport]:
        tasks = volume_tasks(config)
        logger.info(f"[Volume] Running check '{config.volume_check}' as {len(tasks)} tasks")
        try:
            batches = map_ordered(_run_task, tasks, config.jobs)
        except Exception as exc:
            logger.exception("[Volume] Verification failed")
            return [CheckReport.failed("volume.run", witness={"error": type(exc).__name__, "message": str(exc)})]
        return [report for batch in batches for report in batch]

    async def profile_table(self, config: JobConfig) -> Optional[Tuple[List[str], List[Sequence[float]]]]:
        try:
            return profile_rows(config)
        except DomainError as exc:
            logger.error(f"[Volume] Profile table unavailable: {exc}")
            return None

    async def start(self):
        logger.info(f"Starting VolumeVerifier: {self.name}")
        self.running = True

    async def stop(self):
        logger.info(f"Stopping VolumeVerifier: {self.name}")
        self.running = False

    def is_alive(self) -> bool:
        return self.running
