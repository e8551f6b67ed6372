import logging
import math
from functools import partial
from typing import List

from dotenv import load_dotenv

from ..arith import injectivity_radius_bound, psl2_order
from ..config import JobConfig
from ..errors import DomainError
from ..modular import (CuspId, MAX_C2DIST_HEIGHT, boundary_edge_check, c2dist_check, euler_characteristic,
                       genus_and_volume, heckepullback_ball_check, im_height_check, im_height_trend_check,
                       metric_comparison_check)
from ..pool import map_ordered
from ..report import CheckReport, guarded
from ..triangle import (TriangleGeometry, compute_vertex_params, cusp_lift_distance_check, image_closure,
                        relation_defects, triangle_angles, triangle_area, verify_disksep)

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

DEFAULT_C2DIST_RADIUS = 1.5


def params_check(geom: TriangleGeometry) -> CheckReport:
    p = geom.p
    defect = abs(math.cosh(math.log(geom.y_p)) * math.sin(math.pi / p) - 0.5)
    # y_p ~ p/pi and theta_p -> pi/3 as p grows; reported, not asserted
    return CheckReport.compare(f"triangle.params.p{p}", defect, 1e-12, "<=",
                               detail={"y_p": geom.y_p, "theta_p": geom.theta_p,
                                       "y_p_pi_over_p": geom.y_p * math.pi / p,
                                       "theta_p_minus_pi_3": geom.theta_p - math.pi / 3})


def angles_check(geom: TriangleGeometry, tol: float) -> CheckReport:
    measured = triangle_angles(geom)
    expected = (math.pi / 2, math.pi / geom.p, math.pi / 3)
    worst = max(abs(a - b) for a, b in zip(measured, expected))
    return CheckReport.compare(f"triangle.angles.p{geom.p}", worst, tol, "<=",
                               detail={"angles": list(measured), "expected": list(expected)})


def area_check(geom: TriangleGeometry, tol: float) -> CheckReport:
    area = triangle_area(geom)
    expected = math.pi * (1 / 6 - 1 / geom.p)
    return CheckReport.compare(f"triangle.area.p{geom.p}", area, expected, "==", tol,
                               detail={"gauss_bonnet": expected})


def relations_check(geom: TriangleGeometry, tol: float) -> CheckReport:
    defects = relation_defects(geom)
    name = max(defects, key=defects.get)
    return CheckReport.compare(f"triangle.relations.p{geom.p}", defects[name], tol, "<=",
                               witness={"relation": name}, detail={"defects": defects})


def surjectivity_check(p: int) -> CheckReport:
    size = image_closure(p)
    return CheckReport.compare(f"triangle.surjective.p{p}", float(size), float(psl2_order(p)), "==",
                               detail={"image": size})


def injectivity_check(p: int) -> CheckReport:
    """Shortest closed geodesic on Y(p) from the minimal semisimple trace p^2 - 2."""
    check_id = f"arith.injectivity.p{p}"
    tr, length, radius = injectivity_radius_bound(p)
    detail = {"trace": tr, "length": length, "injectivity_radius": radius,
              "window": [4 * math.log(p) - 2, 4 * math.log(p) + 1]}
    if tr != p * p - 2:
        return CheckReport.failed(check_id, witness={"trace": tr, "expected": p * p - 2}, detail=detail)
    lo, hi = detail["window"]
    if not lo <= length <= hi:
        return CheckReport.failed(check_id, witness={"length": length, "window": [lo, hi]}, detail=detail)
    return CheckReport.passed(check_id, lhs=length, rhs=hi, detail=detail)


def genus_check(p: int, tol: float) -> CheckReport:
    genus, volume = genus_and_volume(p)
    chi = euler_characteristic(p)
    detail = {"genus": genus, "volume": volume, "euler_characteristic": str(chi)}
    if 2 - 2 * genus != chi:
        return CheckReport.failed(f"modular.genus.p{p}", witness={"genus": genus, "chi": str(chi)}, detail=detail)
    expected = p * (p * p - 1) / 2 * 2 * math.pi * (1 / 6 - 1 / p)
    return CheckReport.compare(f"modular.genus.p{p}", volume, expected, "==", tol * max(1.0, abs(expected)),
                               detail=detail)


def _c2dist_radius(height_bound) -> float:
    if height_bound is None:
        return DEFAULT_C2DIST_RADIUS
    return min(0.5 * math.log(max(height_bound, 2) / 2), 0.5 * math.log(MAX_C2DIST_HEIGHT / 2))


def geometry_checks(config: JobConfig, p: int) -> List[CheckReport]:
    """Every geometry invariant for one prime; chart-free checks also run for p = 5."""
    logger.info(f"[Geometry] Checking p={p}")
    reports: List[CheckReport] = []
    reports += guarded(f"triangle.surjective.p{p}", surjectivity_check, p)
    reports += guarded(f"arith.injectivity.p{p}", injectivity_check, p)
    reports += guarded(f"modular.genus.p{p}", genus_check, p, max(config.tol, 1e-9))
    try:
        geom = compute_vertex_params(p)
    except DomainError as exc:
        logger.warning(f"[Geometry] p={p}: {exc}; chart checks skipped")
        return reports + [CheckReport.inconclusive(f"triangle.params.p{p}", str(exc))]
    c_disksep = config.constants["C_disksep"]
    reports += guarded(f"triangle.params.p{p}", params_check, geom)
    reports += guarded(f"triangle.angles.p{p}", angles_check, geom, config.tol)
    reports += guarded(f"triangle.area.p{p}", area_check, geom, config.tol)
    reports += guarded(f"triangle.relations.p{p}", relations_check, geom, config.tol)
    reports += guarded(f"triangle.disksep.p{p}", verify_disksep, geom, c_disksep)
    reports += guarded(f"triangle.cusp_separation.p{p}", cusp_lift_distance_check, geom, c_disksep)
    reports += guarded(f"modular.im_height.p{p}", im_height_check, geom, seed=config.seed)
    reports += guarded(f"modular.metric_comparison.p{p}", metric_comparison_check, geom,
                       samples=5 * config.samples, seed=config.seed)
    reports += guarded(f"modular.boundary_edges.p{p}", boundary_edge_check, geom)
    reports += guarded(f"modular.c2dist.p{p}", c2dist_check, geom, _c2dist_radius(config.height_bound))
    reports += guarded(f"modular.heckepullback.p{p}.m2", heckepullback_ball_check, CuspId(p, (1, 0)),
                       math.log(p) / 2, 2, geom, constant=config.constants["C_radius"],
                       samples=config.samples, seed=config.seed)
    return reports


def trend_reports(reports: List[CheckReport]) -> List[CheckReport]:
    """The d_im constant trend, once two or more primes have a fitted value."""
    fitted = [r for r in reports if r.id.startswith("modular.im_height.p") and "fitted" in r.detail]
    if len(fitted) < 2:
        return []
    return [im_height_trend_check(fitted)]


class GeometryVerifier:
    """Triangle tiling, modular-curve and genus invariants over a list of primes."""

    def __init__(self, name: str = "GeometryVerifier"):
        self.name = name
        self.running = False
        logger.info(f"GeometryVerifier initialized: {name}")

    async def run(self, config: JobConfig) -> List[CheckReport]:
        logger.info(f"[Geometry] Verifying p in {config.p_list} with {config.jobs} workers")
        try:
            batches = map_ordered(partial(geometry_checks, config), config.p_list, config.jobs)
        except Exception as exc:
            logger.exception("[Geometry] Verification failed")
            return [CheckReport.failed("geometry.run", witness={"error": type(exc).__name__, "message": str(exc)})]
        reports = [report for batch in batches for report in batch]
        return reports + trend_reports(reports)

    async def start(self):
        logger.info(f"Starting GeometryVerifier: {self.name}")
        self.running = True

    async def stop(self):
        logger.info(f"Stopping GeometryVerifier: {self.name}")
        self.running = False

    def is_alive(self) -> bool:
        return self.running
