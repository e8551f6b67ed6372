"""
Repulsion of special points on X(p) and X(p) x X(p), checked at desk scale.

A point of X(p) is a pair (label, z): label in PSL2(F_p), z a point of the
(2,3,p) triangle chart, standing for label.z. The distance between (L1, z1)
and (L2, z2) is the displacement of z2 by L1^-1 L2 seen from z1. The same
label is used in the modular chart on the other side of triangle_map.

Every sweep returns CheckReports. A FAIL carries a witness whose "replay"
entry re-runs the single failing instance through `replay`.
"""
import cmath
import logging
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .arith import (FpSubspace, IntMat, MatFp, ProjMatFp, SubalgebraKind, centralizer,
                    double_coset_constraints, enumerate_psl2, explain_subalgebra, is_square_mod,
                    p1_normalize, redundancy_test, small_integral_lift, solve_commutator_system, t0)
from .config import RepulsionJob
from .errors import DomainError, PrecisionError, PreconditionError, RangeError, ResourceError, StructuralError
from .hyperbolic import (EuclideanDisk, Isometry, Model, ModelPoint, apply, ball_intersection_envelope,
                         dist)
from .modular import (CMFlavor, CuspId, HeckeOp, classify_cm_pair, enumerate_cm_points,
                      hecke_image_points, hecke_on_cusps, height_bound_cuspdist, min_height_lifts,
                      triangle_map, triangle_map_inverse)
from .report import CheckReport
from .triangle import (R_MAT, S_MAT, T_MAT, TriangleGeometry, compute_vertex_params,
                       displacement_classes, in_fundamental_domain, reduce_to_fundamental, tile_ball)
from .volume import CurvePatch, DiskMap, coincidence_points, patch_volume, point_multiplicity

logger = logging.getLogger(__name__)

XpPoint = Tuple[ProjMatFp, ModelPoint]

LIFT_MERGE_TOL = 1e-6
MATCH_TOL = 1e-7
MAX_HEIGHT = 400


# ----------------------------------------------------------------------------
# Points of X(p)
# ----------------------------------------------------------------------------

def _geometry(p: int) -> TriangleGeometry:
    return compute_vertex_params(p)


def normalize_point(geom: TriangleGeometry, point: XpPoint) -> XpPoint:
    """Same point of X(p) with its chart coordinate moved into F."""
    label, z = point
    word, z0 = reduce_to_fundamental(geom, z)
    return label @ word.fp_image, z0


def point_to_json(point: XpPoint) -> Dict[str, Any]:
    label, z = point
    c = z.to(Model.HALFPLANE).coord
    return {"label": list(label.entries), "z": [c.real, c.imag]}


def point_from_json(p: int, data: Dict[str, Any]) -> XpPoint:
    return ProjMatFp.from_entries(p, data["label"]), ModelPoint.halfplane(complex(*data["z"]))


def anchor_points(geom: TriangleGeometry) -> List[ModelPoint]:
    """The vertex orbit representatives of F plus one interior point."""
    return [geom.i_vertex, geom.order3_vertex, geom.interior_point, geom.cusp_vertex]


def sample_fundamental_domain(geom: TriangleGeometry, count: int, seed: int) -> List[ModelPoint]:
    """Scrambled Halton points of F, drawn in polar coordinates around iy_p."""
    iy = 1j * geom.y_p
    v3 = geom.order3_vertex.coord
    rho_max = abs((v3 - iy) / (v3 + iy))
    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    out: List[ModelPoint] = []
    while len(out) < count:
        for u, v in sampler.random(max(8, 2 * count)):
            w = rho_max * math.sqrt(v) * cmath.exp(1j * (math.pi + (2 * u - 1) * math.pi / geom.p))
            if abs(w) < 1e-9:
                continue
            z = iy * (1 + w) / (1 - w)
            if in_fundamental_domain(geom, z):
                out.append(ModelPoint.halfplane(z))
                if len(out) == count:
                    break
    return out


def _replay_args(check: str, job: RepulsionJob, **args) -> Dict[str, Any]:
    return {"check": check, "job": job.model_dump(mode="json"), "args": args}


def _budget_report(check_id: str, exc: ResourceError) -> CheckReport:
    found = len(exc.partial) if isinstance(exc.partial, (list, tuple)) else None
    logger.warning(f"[Repulsion] {check_id}: {exc}")
    return CheckReport.inconclusive(check_id, str(exc), detail={"partial": found})


# ----------------------------------------------------------------------------
# Cusps
# ----------------------------------------------------------------------------

def cusp_lifts(geom: TriangleGeometry, center: ModelPoint, radius: float,
               label: Optional[ProjMatFp] = None,
               budget: Optional[int] = None) -> Dict[CuspId, List[Tuple[float, ModelPoint]]]:
    """Distinct lifts of cusps within radius of (label, center), nearest first per cusp."""
    label = label if label is not None else ProjMatFp.identity(geom.p)
    kwargs = {"budget": budget} if budget else {}
    out: Dict[CuspId, List[Tuple[float, ModelPoint]]] = {}
    for tile in tile_ball(geom, center, radius, **kwargs):
        v = tile.apply(geom.cusp_vertex)
        d = dist(center, v)
        if d > radius:
            continue
        lifts = out.setdefault(CuspId.from_element(label @ tile.fp_image), [])
        if any(dist(v, w) < LIFT_MERGE_TOL for _, w in lifts):
            continue
        lifts.append((d, v))
    for lifts in out.values():
        lifts.sort(key=lambda item: item[0])
    return out


def nearest_cusps(geom: TriangleGeometry, point: XpPoint, radius: float,
                  budget: Optional[int] = None) -> Dict[CuspId, float]:
    label, z = point
    return {c: lifts[0][0] for c, lifts in cusp_lifts(geom, z, radius, label, budget).items()}


def _own_cusp(p: int) -> CuspId:
    return CuspId.from_element(ProjMatFp.identity(p))


def check_cusp_preimages(job: RepulsionJob) -> CheckReport:
    """Around the cusp vertex, every other cusp has at most one lift within (2+delta) log p."""
    p = job.p
    geom = _geometry(p)
    check_id = f"repulsion.cusp.a.p{p}"
    radius = min((2 + job.delta) * math.log(p), 3 * math.log(p))
    try:
        lifts = cusp_lifts(geom, geom.cusp_vertex, radius, budget=job.max_tiles)
    except ResourceError as exc:
        return _budget_report(check_id, exc)
    own = _own_cusp(p)
    others = {c: [d for d, _ in pts] for c, pts in lifts.items() if c != own}
    worst = max(others, key=lambda c: (len(others[c]), c.vector), default=None)
    worst_count = len(others[worst]) if worst else 0
    witness = {}
    if worst_count > 1:
        witness = {"cusp": list(worst.vector), "distances": others[worst],
                   "replay": _replay_args("cusp_a", job, cusp=list(worst.vector))}
    return CheckReport.compare(check_id, float(worst_count), 1.0, "<=", witness=witness,
                               detail={"radius": radius, "cusps": len(others),
                                       "lifts": sum(map(len, others.values()))})


def lens_fits(geom: TriangleGeometry, delta: float,
              budget: Optional[int] = None) -> List[Tuple[CuspId, float, float]]:
    """(cusp, separation, fitted constant) for each lift within 2(1+delta) log p of iy_p.

    Two balls of radius (1+delta) log p around cusps at distance 2D meet inside
    a ball of radius M around the midpoint; the fitted constant is M - delta log p.
    """
    logp = math.log(geom.p)
    radius = min(2 * (1 + delta) * logp, 3 * logp)
    own = _own_cusp(geom.p)
    out = []
    for c, lifts in sorted(cusp_lifts(geom, geom.cusp_vertex, radius, budget=budget).items(),
                           key=lambda kv: kv[0].vector):
        if c == own:
            continue
        for d, z in lifts:
            excess = (1 + delta) * logp - d / 2
            if excess < 0:
                continue
            ball = ball_intersection_envelope(geom.cusp_vertex, z, d / 2, excess, tol=1e-7)
            out.append((c, d, ball.radius - delta * logp))
    return out


def check_cusp_lens(job: RepulsionJob) -> CheckReport:
    p = job.p
    geom = _geometry(p)
    check_id = f"repulsion.cusp.b.p{p}"
    try:
        fits = lens_fits(geom, job.delta, job.max_tiles)
    except ResourceError as exc:
        return _budget_report(check_id, exc)
    bound = job.constant("C_lens")
    if not fits:
        return CheckReport.passed(check_id, lhs=0.0, rhs=bound, detail={"pairs": 0})
    cusp, sep, worst = max(fits, key=lambda item: item[2])
    witness = {"cusp": list(cusp.vector), "separation": sep,
               "replay": _replay_args("cusp_b", job, cusp=list(cusp.vector))}
    return CheckReport.compare(check_id, worst, bound, "<=", witness=witness,
                               detail={"pairs": len(fits), "fitted": worst})


def check_cusp_count(job: RepulsionJob) -> CheckReport:
    """Cusps within (1+delta) log p of any sampled point number at most C_count p^{12 delta}."""
    p = job.p
    geom = _geometry(p)
    check_id = f"repulsion.cusp.c.p{p}"
    radius = (1 + job.delta) * math.log(p)
    bound = job.constant("C_count") * p ** (12 * job.delta)
    points = anchor_points(geom) + sample_fundamental_domain(geom, job.samples, job.seed)
    worst, worst_point = -1, None
    try:
        for z in points:
            count = len(cusp_lifts(geom, z, radius, budget=job.max_tiles))
            if count > worst:
                worst, worst_point = count, z
    except ResourceError as exc:
        return _budget_report(check_id, exc)
    c = worst_point.coord
    witness = {"point": [c.real, c.imag], "count": worst,
               "replay": _replay_args("cusp_c", job, z=[c.real, c.imag])}
    return CheckReport.compare(check_id, float(worst), bound, "<=", witness=witness,
                               detail={"radius": radius, "points": len(points)})


def check_cusp_repulsion(job: RepulsionJob) -> List[CheckReport]:
    """The three cusp statements: unique preimages, lens envelopes, local cusp count."""
    logger.info(f"[Repulsion] Cusp repulsion at p={job.p}, delta={job.delta}")
    return [check_cusp_preimages(job), check_cusp_lens(job), check_cusp_count(job)]


# ----------------------------------------------------------------------------
# Heegner CM points over i
# ----------------------------------------------------------------------------

def _stabilizer_labels(z: complex, p: int) -> List[ProjMatFp]:
    """Images mod p of the SL2(Z) rotations fixing a corner of the modular domain."""
    ST = S_MAT @ T_MAT
    out = [ProjMatFp.identity(p)]
    for M in (S_MAT, R_MAT, R_MAT @ R_MAT, ST, ST @ ST):
        if abs(M.act(z) - z) < MATCH_TOL:
            out.append(M.proj(p))
    return out


def on_hecke_divisor(x: Tuple[ProjMatFp, complex], y: Tuple[ProjMatFp, complex], m: int,
                     tol: float = MATCH_TOL) -> bool:
    """Whether the pair (x, y), both in the modular chart, lies on T_m."""
    label_x, zx = x
    label_y, zy = y
    p = label_x.p
    if m % p == 0 or not is_square_mod(m, p):
        return False
    targets = {label_y @ s for s in _stabilizer_labels(zy, p)}
    for label, z1 in hecke_image_points(label_x, zx, HeckeOp(m)):
        if abs(z1 - zy) < tol and label in targets:
            return True
    return False


def hecke_degree_geometric(x: Tuple[ProjMatFp, complex], y: Tuple[ProjMatFp, complex],
                           m_max: int) -> Optional[int]:
    """Smallest m <= m_max with (x, y) on T_m, by walking Hecke images."""
    for m in range(1, m_max + 1):
        if on_hecke_divisor(x, y, m):
            return m
    return None


def heegner_partners(p: int) -> List[ProjMatFp]:
    """g with (i, g.i) a Heegner CM point of X(p) x X(p), one per coset g<S>."""
    s = S_MAT.proj(p)
    ident = ProjMatFp.identity(p)
    out = []
    for pt in enumerate_cm_points(p, 2):
        if pt.stabilizer != s:
            continue
        if classify_cm_pair(s, ident, pt.g).flavor == CMFlavor.HEEGNER:
            out.append(pt.g)
    return out


def hecke_degree_algebraic(g_y: ProjMatFp) -> Tuple[int, int, int]:
    """(a, b, m) with g_y^-1 the class of a + b t0 and m = a^2 + b^2 minimal."""
    return small_integral_lift(g_y.inverse().sl2_representative())


def commutator_degree(p: int, Mx: IntMat, My: IntMat) -> Tuple[int, int, int, MatFp]:
    """Degree of the Hecke divisor through a pair of Heegner points with lifts Mx, My.

    Solves [t0, g] = 0 and [t0, My^-1 g Mx] = 0 and lifts the solution line.

    Raises:
        PreconditionError: the second relation is redundant (the points coincide)
        StructuralError: the solution space is not a line
    """
    t = t0(p)
    if redundancy_test(t, Mx, My, p):
        raise PreconditionError("the two CM points coincide: the commutator system is redundant")
    sol = solve_commutator_system(t, Mx, My, p)
    if sol.dim != 1:
        raise StructuralError(f"commutator system has a {sol.dim}-dimensional solution space")
    a, b, m = small_integral_lift(sol)
    return a, b, m, sol.matrices()[0]


def constructed_cm_instance() -> Tuple[IntMat, IntMat]:
    """(Mx, My) = (T^2, g T^2 g^-1) for g = 1 + t0, so the degree is 2."""
    return IntMat(1, 2, 0, 1), IntMat(2, 1, -1, 0)


@dataclass(frozen=True)
class CMPairAssignment:
    g_y: ProjMatFp
    h_x: ProjMatFp
    h_y: ProjMatFp
    a: int
    b: int
    m: int
    m_second: int
    consistent: bool
    on_divisors: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"g_y": list(self.g_y.entries), "h_x": list(self.h_x.entries),
                "h_y": list(self.h_y.entries), "a": self.a, "b": self.b, "m": self.m,
                "m_second": self.m_second, "consistent": self.consistent,
                "on_divisors": self.on_divisors}


def _coset_key(g: ProjMatFp, s: ProjMatFp) -> Tuple[int, ...]:
    return min(g.entries, (g @ s).entries)


def flagged_cm_pairs(p: int, moves: Sequence[ProjMatFp],
                     partners: Sequence[ProjMatFp]) -> List[Tuple[ProjMatFp, ProjMatFp, ProjMatFp]]:
    """(g_y, h_x, h_y): xi = (i, g_y i) and a distinct Heegner xi' = (h_x i, g_y h_y i).

    Both coordinates of xi' move by elements of `moves`; xi' must share xi's
    projection to X(1)_p x X(1)_p, which holds since both sit over i.
    """
    s = S_MAT.proj(p)
    stab = {ProjMatFp.identity(p), s}
    seen = set()
    out = []
    for g_y in partners:
        for h_x in moves:
            t_prime = h_x.conj(s)
            for h_y in moves:
                if h_x in stab and h_y in stab:
                    continue
                y_prime = g_y @ h_y
                if y_prime.inverse() @ t_prime @ y_prime != s:
                    continue
                try:
                    if classify_cm_pair(t_prime, h_x, y_prime).flavor != CMFlavor.HEEGNER:
                        continue
                except DomainError:
                    continue
                key = (_coset_key(g_y, s), _coset_key(h_x, s), _coset_key(y_prime, s))
                if key in seen:
                    continue
                seen.add(key)
                out.append((g_y, h_x, h_y))
    return out


def _lowest_lift(lifts: Dict[ProjMatFp, IntMat], h: ProjMatFp, s: ProjMatFp) -> IntMat:
    candidates = [lifts[k] for k in (h, h @ s) if k in lifts]
    if not candidates:
        raise RangeError(f"no integral lift of {h.entries} below the height bound")
    return min(candidates, key=lambda M: M.height)


def assign_cm_pair(p: int, g_y: ProjMatFp, h_x: ProjMatFp, h_y: ProjMatFp, H: int) -> CMPairAssignment:
    """Hecke degree of a flagged pair by the commutator system, cross-checked on T_m."""
    s = S_MAT.proj(p)
    lifts = min_height_lifts(p, H)
    Mx = _lowest_lift(lifts, h_x, s)
    My = _lowest_lift(lifts, h_y, s)
    a, b, m, line = commutator_degree(p, Mx, My)
    try:
        consistent = ProjMatFp(line).inverse() in (g_y, g_y @ s)
    except DomainError:
        consistent = False
    # xi' is related through My^-1 g Mx, which lies in span{1, t0} mod p
    transported = My.inverse().mod(p) @ line @ Mx.mod(p)
    _, _, m_second = small_integral_lift(transported)
    ident = ProjMatFp.identity(p)
    on_divisors = (on_hecke_divisor((ident, 1j), (g_y, 1j), m)
                   and on_hecke_divisor((Mx.proj(p), 1j), (g_y @ My.proj(p), 1j), m_second))
    return CMPairAssignment(g_y, h_x, h_y, a, b, m, m_second, consistent, on_divisors)


def cm_degree_agreement(p: int, partners: Sequence[ProjMatFp]) -> List[Dict[str, Any]]:
    """Heegner pairs (i, g i) whose algebraic and geometric Hecke degrees differ."""
    bad = []
    for g_y in partners:
        a, b, m = hecke_degree_algebraic(g_y)
        geometric = hecke_degree_geometric((ProjMatFp.identity(p), 1j), (g_y, 1j), m)
        if geometric != m:
            bad.append({"g_y": list(g_y.entries), "a": a, "b": b, "m": m, "geometric": geometric})
    return bad


def check_cm_repulsion(job: RepulsionJob) -> CheckReport:
    """Distinct nearby Heegner CM points over i lie on T_m with small m.

    Every Heegner pair (i, g i) is also assigned its Hecke degree twice, by the
    a + b t0 lift and by walking the Hecke images of i; the two must agree.
    """
    p = job.p
    check_id = f"repulsion.cm.p{p}"
    logger.info(f"[Repulsion] CM repulsion at p={p}, delta={job.delta}")
    partners = heegner_partners(p)
    disagreements = cm_degree_agreement(p, partners)
    degrees = Counter(hecke_degree_algebraic(g)[2] for g in partners)
    detail: Dict[str, Any] = {
        "partners": len(partners),
        "degrees": {str(m): n for m, n in sorted(degrees.items())},
        "offsets": {str(m): 0.5 * math.log(m) for m in sorted(degrees)},
    }
    if disagreements:
        first = disagreements[0]
        return CheckReport.failed(check_id, witness={
            **first, "replay": _replay_args("cm_degree", job, g_y=first["g_y"])}, detail=detail)
    try:
        geom = _geometry(p)
    except DomainError as exc:
        logger.warning(f"[Repulsion] p={p}: {exc}; nearby pairs not enumerated")
        return CheckReport.inconclusive(check_id, f"no hyperbolic triangle chart: {exc}", detail=detail)
    radius = 2 * job.delta * math.log(p)
    moves = sorted((h for h, d in displacement_classes(geom, geom.i_vertex, geom.i_vertex, radius).items()
                    if d < radius), key=lambda h: h.entries)
    H = min(MAX_HEIGHT, max(2, math.ceil(height_bound_cuspdist(p, 2 * job.delta, offset=0.0))))
    pairs = flagged_cm_pairs(p, moves, partners)
    detail.update({"flagged": len(pairs), "height_bound": H})
    worst, missing = 0, 0
    for g_y, h_x, h_y in pairs:
        replay = _replay_args("cm_pair", job, g_y=list(g_y.entries), h_x=list(h_x.entries),
                              h_y=list(h_y.entries), H=H)
        try:
            res = assign_cm_pair(p, g_y, h_x, h_y, H)
        except RangeError:
            missing += 1
            continue
        except (PreconditionError, StructuralError) as exc:
            return CheckReport.failed(check_id, witness={"error": str(exc), "replay": replay}, detail=detail)
        worst = max(worst, res.m, res.m_second)
        if not (res.consistent and res.on_divisors and max(res.m, res.m_second) <= job.m_bound):
            return CheckReport.failed(check_id, witness={**res.to_dict(), "replay": replay},
                                      lhs=float(max(res.m, res.m_second)), rhs=job.m_bound, detail=detail)
    if missing:
        return CheckReport.inconclusive(check_id, f"{missing} flagged pairs have no lift below height {H}",
                                        detail=detail)
    return CheckReport.compare(check_id, float(worst), job.m_bound, "<=", detail=detail)


def check_constructed_cm(job: RepulsionJob) -> CheckReport:
    """The pair built from g = 1 + t0 is found on T_2."""
    p = job.p
    check_id = f"repulsion.cm_constructed.p{p}"
    Mx, My = constructed_cm_instance()
    a, b, m, line = commutator_degree(p, Mx, My)
    detail: Dict[str, Any] = {"a": a, "b": b, "line": list(line.entries)}
    if is_square_mod(2, p):
        g_y = ProjMatFp(line).inverse()
        detail["on_divisor"] = on_hecke_divisor((ProjMatFp.identity(p), 1j), (g_y, 1j), m)
        if not detail["on_divisor"]:
            return CheckReport.failed(check_id, witness={"m": m, "g_y": list(g_y.entries)},
                                      lhs=float(m), rhs=2.0, detail=detail)
    else:
        detail["on_divisor"] = None
        detail["note"] = "2 is not a square mod p: T_2 lands on the other component"
    return CheckReport.compare(check_id, float(m), 2.0, "==", witness={"m": m}, detail=detail)


# ----------------------------------------------------------------------------
# Singular bicusps
# ----------------------------------------------------------------------------

def _line(c: CuspId) -> Tuple[int, int]:
    return p1_normalize(c.vector, c.p)


def singular_pairs_near(near_x: Dict[CuspId, float], near_y: Dict[CuspId, float],
                        radius: float) -> List[Tuple[CuspId, CuspId, float]]:
    """Singular bicusps (c, c') within radius in the max metric, nearest first."""
    by_line: Dict[Tuple[int, int], List[Tuple[CuspId, float]]] = {}
    for c, d in near_y.items():
        by_line.setdefault(_line(c), []).append((c, d))
    out = []
    for c, dx in near_x.items():
        for c_prime, dy in by_line.get(_line(c), ()):
            d = max(dx, dy)
            if d <= radius:
                out.append((c, c_prime, d))
    out.sort(key=lambda item: (item[2], item[0].vector, item[1].vector))
    return out


def _scalar_between(c: CuspId, c_prime: CuspId) -> int:
    """lambda with c'.vector = lambda c.vector up to sign; both cusps share a line."""
    p = c.p
    (x, y), (u, v) = c.vector, c_prime.vector
    return (u * pow(x, -1, p)) % p if x else (v * pow(y, -1, p)) % p


def bicusp_hecke_degree(pairs: Sequence[Tuple[CuspId, CuspId]], m_max: int) -> Optional[int]:
    """Smallest m <= m_max with every c' among the T_m images of c."""
    p = pairs[0][0].p
    for m in range(1, m_max + 1):
        if m % p == 0:
            continue
        T = HeckeOp(m)
        if all(c_prime in hecke_on_cusps(c, T) for c, c_prime in pairs):
            return m
    return None


def bicusp_instance(job: RepulsionJob, x: XpPoint, y: XpPoint,
                    near_x: Optional[Dict[CuspId, float]] = None,
                    near_y: Optional[Dict[CuspId, float]] = None) -> Optional[Dict[str, Any]]:
    """Pinning and Hecke degree at xi = (x, y); None below three singular bicusps."""
    geom = _geometry(job.p)
    radius = (1 + job.delta) * math.log(job.p)
    near_x = near_x if near_x is not None else nearest_cusps(geom, x, radius, job.max_tiles)
    near_y = near_y if near_y is not None else nearest_cusps(geom, y, radius, job.max_tiles)
    pairs = singular_pairs_near(near_x, near_y, radius)
    if len(pairs) < 3:
        return None
    pinning = double_coset_constraints([(c.representative, c_prime.representative)
                                        for c, c_prime, _ in pairs])
    m = bicusp_hecke_degree([(c, c_prime) for c, c_prime, _ in pairs], math.floor(job.m_bound))
    return {
        "bicusps": len(pairs),
        "pinned": pinning.pinned,
        "element": list(pinning.element.entries) if pinning.element else None,
        "consistent": pinning.consistent,
        "scalars": [_scalar_between(c, c_prime) for c, c_prime, _ in pairs],
        "m": m,
        "ok": pinning.consistent and m is not None,
    }


def check_bicusp_repulsion(job: RepulsionJob) -> CheckReport:
    """Points near three singular bicusps pin g and sit on a small Hecke divisor."""
    p = job.p
    geom = _geometry(p)
    check_id = f"repulsion.bicusp.p{p}"
    logger.info(f"[Repulsion] Bicusp repulsion at p={p}, delta={job.delta}")
    radius = (1 + job.delta) * math.log(p)
    points = anchor_points(geom) + sample_fundamental_domain(geom, job.samples, job.seed)
    ident = ProjMatFp.identity(p)
    try:
        near = [nearest_cusps(geom, (ident, z), radius, job.max_tiles) for z in points]
    except ResourceError as exc:
        return _budget_report(check_id, exc)
    flagged, skipped, degrees = 0, 0, Counter()
    for ia, za in enumerate(points):
        for ib, zb in enumerate(points):
            for g in enumerate_psl2(p):
                near_y = {c.act(g): d for c, d in near[ib].items()}
                result = bicusp_instance(job, (ident, za), (g, zb), near[ia], near_y)
                if result is None:
                    skipped += 1
                    continue
                flagged += 1
                degrees[result["m"]] += 1
                if not result["ok"]:
                    x, y = (ident, za), (g, zb)
                    return CheckReport.failed(check_id, witness={
                        **result, "x": point_to_json(x), "y": point_to_json(y),
                        "replay": _replay_args("bicusp", job, x=point_to_json(x), y=point_to_json(y))},
                        detail={"flagged": flagged, "skipped": skipped})
    worst = max((m for m in degrees if m is not None), default=0)
    return CheckReport.compare(check_id, float(worst), job.m_bound, "<=",
                               detail={"flagged": flagged, "skipped": skipped,
                                       "degrees": {str(m): n for m, n in sorted(degrees.items())}})


# ----------------------------------------------------------------------------
# Diagonal translates
# ----------------------------------------------------------------------------

XiPoint = Tuple[XpPoint, XpPoint, XpPoint, XpPoint]


@dataclass(frozen=True)
class DiagSample:
    name: str
    xi: XiPoint


def diag_neighbourhoods(geom: TriangleGeometry, xi: XiPoint, r: float) -> List[ProjMatFp]:
    """Every g with xi within r of Delta_g = {x1 = g x2, y1 = g y2}."""
    (l1, z1), (l2, z2), (l3, z3), (l4, z4) = xi
    dx = displacement_classes(geom, z1, z3, r)
    dy = displacement_classes(geom, z2, z4, r)
    out = []
    for k, d in dx.items():
        if d >= r:
            continue
        g = l1 @ k @ l3.inverse()
        if dy.get(l2.inverse() @ g @ l4, math.inf) < r:
            out.append(g)
    return sorted(out, key=lambda g: g.entries)


def transporter_span(xi: XiPoint, elements: Sequence[ProjMatFp]) -> FpSubspace:
    """Span of the transporters g h^-1, conjugated back to the first coordinate's label."""
    l1 = xi[0][0]
    inv = l1.inverse()
    mats = [(inv @ g @ h.inverse() @ l1).sl2_representative() for g in elements for h in elements]
    return FpSubspace.span(l1.p, mats)


def trichotomy_outcome(T: FpSubspace) -> Tuple[SubalgebraKind, bool, str]:
    """Kind of T and whether it obeys: a non-scalar centralizer forces a torus or F_p[x]/(x^2)."""
    kind, why = explain_subalgebra(T)
    mats = T.matrices()
    non_scalar = centralizer(mats, T.p).dim > 1 if mats else True
    return kind, not (non_scalar and kind == SubalgebraKind.OTHER), why


def bicusp_distance(geom: TriangleGeometry, x: XpPoint, y: XpPoint, radius: float) -> float:
    """Distance from (x, y) to the nearest singular bicusp, inf beyond radius."""
    pairs = singular_pairs_near(nearest_cusps(geom, x, radius), nearest_cusps(geom, y, radius), radius)
    return pairs[0][2] if pairs else math.inf


def hecke_curve_distance(geom: TriangleGeometry, x: XpPoint, y: XpPoint, m_max: int,
                         radius: float) -> Tuple[Optional[int], float]:
    """(m, d): the Hecke divisor T_m, m <= m_max, closest to (x, y) and the distance to it.

    Only y moves: d is the distance from y to the T_m images of x.
    """
    p = geom.p
    lx, wx = normalize_point(geom, x)
    ly, wy = normalize_point(geom, y)
    try:
        z0 = triangle_map_inverse(wx, geom).coord
    except DomainError:
        return None, math.inf
    best: Tuple[Optional[int], float] = (None, math.inf)
    for m in range(1, m_max + 1):
        if m % p == 0 or not is_square_mod(m, p):
            continue
        for label, z1 in hecke_image_points(lx, z0, HeckeOp(m)):
            try:
                w1 = triangle_map(ModelPoint.halfplane(z1), geom)
            except (DomainError, PrecisionError):
                continue
            d = displacement_classes(geom, wy, w1, radius).get(ly.inverse() @ label, math.inf)
            if d < best[1] - 1e-12:
                best = (m, d)
    return best


def constructed_hecke_sample(geom: TriangleGeometry, z0: complex = complex(-0.15, 1.3)) -> DiagSample:
    """xi on tau_{1,2}: x in the modular chart at z0 and y its first T_2 image."""
    ident = ProjMatFp.identity(geom.p)
    x = (ident, triangle_map(ModelPoint.halfplane(z0), geom))
    label, z1 = hecke_image_points(ident, z0, HeckeOp(2))[0]
    y = (label, triangle_map(ModelPoint.halfplane(z1), geom))
    return DiagSample("hecke_2", (x, y, x, y))


def diag_samples(geom: TriangleGeometry, count: int, seed: int) -> List[DiagSample]:
    """Vertex cases, one constructed Hecke case and random points on random Delta_g."""
    p = geom.p
    ident = ProjMatFp.identity(p)
    near_cusp = ModelPoint.halfplane(1j * geom.y_p * math.exp(-0.05))
    out = [
        DiagSample("cm_diagonal", ((ident, geom.i_vertex),) * 4),
        DiagSample("bicusp", ((ident, geom.cusp_vertex),) * 4),
        DiagSample("near_bicusp", ((ident, near_cusp),) * 4),
    ]
    if is_square_mod(2, p):
        out.append(constructed_hecke_sample(geom))
    group = enumerate_psl2(p)
    rng = np.random.default_rng(seed)
    points = sample_fundamental_domain(geom, count, seed)
    for k, z in enumerate(points):
        la, lb, g0 = (group[i] for i in rng.choice(len(group), 3))
        zb = points[(k + 1) % len(points)]
        x2, y2 = (g0.inverse() @ la, z), (g0.inverse() @ lb, zb)
        out.append(DiagSample(f"sample{k}", ((la, z), (lb, zb), x2, y2)))
    return out


def diag_instance(job: RepulsionJob, xi: XiPoint) -> Dict[str, Any]:
    """Count the Delta_g neighbourhoods of xi and test the (a)/(b) alternative."""
    p = job.p
    geom = _geometry(p)
    logp = math.log(p)
    r = job.delta * logp
    elements = diag_neighbourhoods(geom, xi, r) if r > 0 else []
    count = len(elements)
    threshold = job.constant("C_omega") * logp
    x2, y2 = xi[2], xi[3]
    d_bicusp = bicusp_distance(geom, x2, y2, 2 * logp)
    scale = p ** (1 + job.delta / 2) * math.exp(-d_bicusp) if math.isfinite(d_bicusp) else 0.0
    fitted_a = count / scale if scale > 0 else math.inf
    m_max = max(1, min(math.floor(job.m_bound), job.hecke_cap))
    hecke_radius = min(job.constant("C_radius") * r + 1.0, 3 * logp)
    m, d_hecke = hecke_curve_distance(geom, x2, y2, m_max, hecke_radius)
    case_a = fitted_a <= job.constant("C_count")
    case_b = m is not None and r + d_hecke <= job.constant("C_radius") * r
    kind, trichotomy_ok, why = trichotomy_outcome(transporter_span(xi, elements)) if elements \
        else (SubalgebraKind.OTHER, True, "no neighbourhoods")
    return {
        "count": count, "threshold": threshold, "triggered": count > threshold,
        "bicusp_distance": d_bicusp, "fitted_a": fitted_a, "case_a": case_a,
        "hecke_m": m, "hecke_distance": d_hecke, "case_b": case_b,
        "subalgebra": kind.value, "trichotomy_ok": trichotomy_ok, "why": why,
        "ok": trichotomy_ok and (count <= threshold or case_a or case_b),
    }


def check_diag_repulsion(job: RepulsionJob) -> CheckReport:
    """Points in many neighbourhoods of diagonal translates are near a bicusp or a Hecke curve."""
    p = job.p
    geom = _geometry(p)
    check_id = f"repulsion.diag.p{p}"
    logger.info(f"[Repulsion] Diagonal repulsion at p={p}, delta={job.delta}")
    detail: Dict[str, Any] = {"threshold": job.constant("C_omega") * math.log(p), "samples": {}}
    worst_count = 0
    for sample in diag_samples(geom, job.samples, job.seed):
        try:
            result = diag_instance(job, sample.xi)
        except ResourceError as exc:
            return _budget_report(check_id, exc)
        detail["samples"][sample.name] = {k: result[k] for k in ("count", "fitted_a", "hecke_m", "subalgebra")}
        worst_count = max(worst_count, result["count"])
        if not result["ok"]:
            xi_json = [point_to_json(pt) for pt in sample.xi]
            return CheckReport.failed(check_id, witness={
                **result, "sample": sample.name, "xi": xi_json,
                "replay": _replay_args("diag", job, xi=xi_json)}, detail=detail)
    return CheckReport.passed(check_id, lhs=float(worst_count), rhs=detail["threshold"], detail=detail)


def diag_trichotomy_report(job: RepulsionJob) -> CheckReport:
    """Tally the transporter subalgebras met over the diagonal samples."""
    p = job.p
    geom = _geometry(p)
    check_id = f"repulsion.diag_trichotomy.p{p}"
    r = job.delta * math.log(p)
    tally: Counter = Counter()
    for sample in diag_samples(geom, job.samples, job.seed):
        elements = diag_neighbourhoods(geom, sample.xi, r)
        if not elements:
            continue
        kind, ok, why = trichotomy_outcome(transporter_span(sample.xi, elements))
        tally[kind.value] += 1
        if not ok:
            return CheckReport.failed(check_id, witness={"sample": sample.name, "kind": kind.value, "why": why},
                                      detail={"tally": dict(tally)})
    return CheckReport.passed(check_id, detail={"tally": dict(sorted(tally.items()))})


# ----------------------------------------------------------------------------
# The boundary Möbius modulus
# ----------------------------------------------------------------------------

def _mobius_regime(R: float, theta: float) -> float:
    eps = 1.0 - R
    if not 0.0 < theta < 0.3:
        raise DomainError(f"theta must lie in (0, 0.3), got {theta}")
    if not 0.0 <= eps < theta / 10:
        raise DomainError(f"1 - R = {eps} must lie in [0, theta/10) = [0, {theta / 10})")
    return eps


def mobius_ratio_asymptotic(R: float, theta: float) -> Tuple[float, float]:
    """|(R - R e^{i theta}) / (1 - R^2 e^{i theta})| and its prediction 1 - 2 eps^2/theta^2."""
    eps = _mobius_regime(R, theta)
    e = cmath.exp(1j * theta)
    value = abs((R - R * e) / (1 - R * R * e))
    return value, 1.0 - 2.0 * eps * eps / (theta * theta)


def mobius_correction_terms(R: float, theta: float) -> Dict[str, float]:
    """1 - value without cancellation, against the stated and the exact leading terms."""
    eps = _mobius_regime(R, theta)
    s = math.sin(theta / 2)
    a = 2 * R * s
    q = (1 - R * R) ** 2 + a * a
    measured = (1 - R * R) ** 2 / (math.sqrt(q) * (math.sqrt(q) + a))
    stated = 2.0 * eps * eps / (theta * theta)
    exact = (1 - R * R) ** 2 / (8 * R * R * s * s)
    rel = (lambda ref: abs(measured - ref) / ref if ref else 0.0)
    return {"measured": measured, "stated": stated, "exact": exact,
            "rel_stated": rel(stated), "rel_exact": rel(exact)}


# ----------------------------------------------------------------------------
# Multiplicity against volume
# ----------------------------------------------------------------------------

class SpecialSet(str, Enum):
    CM_PLUS = "CM_PLUS"
    CM_MINUS = "CM_MINUS"
    SBC = "SBC"
    DIAGONALS = "DIAGONALS"


def chart_isometry(base: ModelPoint) -> Isometry:
    """Real isometry taking i to base; local coordinates are Cayley images of chart^-1 z."""
    z = base.to(Model.HALFPLANE).coord
    s = math.sqrt(z.imag)
    return Isometry((s, z.real / s, 0.0, 1.0 / s))


def to_local(chart: Isometry, q: ModelPoint) -> complex:
    return apply(chart.inverse(), q.to(Model.HALFPLANE)).to(Model.DISK).coord


def from_local(chart: Isometry, u: complex) -> ModelPoint:
    return apply(chart, ModelPoint.disk(u).to(Model.HALFPLANE))


@dataclass(frozen=True)
class XpPatch:
    """A graph patch placed on X(p) x X(p) through local charts at x and y."""
    patch: CurvePatch
    x: XpPoint
    y: XpPoint

    @property
    def charts(self) -> Tuple[Isometry, Isometry]:
        return chart_isometry(self.x[1]), chart_isometry(self.y[1])

    @property
    def footprint(self) -> Tuple[float, float]:
        """Hyperbolic radii around the base points covering both projections."""
        domain = self.patch.domain
        rho_x = 2 * math.atanh(min(abs(domain.center) + domain.radius, 1 - 1e-12))
        boundary = domain.center + domain.radius * np.exp(2j * np.pi * np.arange(256) / 256)
        reach = max(abs(self.patch.second(complex(u))) for u in boundary)
        reach = max(reach, abs(self.patch.second(domain.center)))
        return rho_x, 2 * math.atanh(min(reach, 1 - 1e-12))


def _vertex_lifts(geom: TriangleGeometry, base: ModelPoint, radius: float, vertex: ModelPoint,
                  label: ProjMatFp) -> List[Tuple[ModelPoint, ProjMatFp]]:
    out: List[Tuple[ModelPoint, ProjMatFp]] = []
    for tile in tile_ball(geom, base, radius):
        v = tile.apply(vertex)
        if dist(base, v) > radius or any(dist(v, w) < MATCH_TOL for w, _ in out):
            continue
        out.append((v, label @ tile.fp_image))
    return out


def _vertex_label_at(geom: TriangleGeometry, q: ModelPoint, vertex: ModelPoint,
                     label: ProjMatFp) -> Optional[ProjMatFp]:
    for tile in tile_ball(geom, q, 1e-6):
        if dist(tile.apply(vertex), q) < MATCH_TOL:
            return label @ tile.fp_image
    return None


def _cm_points_on(geom: TriangleGeometry, xp: XpPatch, flavor: CMFlavor) -> List[Dict[str, Any]]:
    chart_x, chart_y = xp.charts
    rho_x, _ = xp.footprint
    found = []
    for order, vertex, base in ((2, geom.i_vertex, S_MAT), (3, geom.order3_vertex, R_MAT)):
        s = base.proj(geom.p)
        powers = {s, s @ s}
        for v, lx in _vertex_lifts(geom, xp.x[1], rho_x, vertex, xp.x[0]):
            u = to_local(chart_x, v)
            if not xp.patch.domain.contains(u):
                continue
            w = xp.patch.second(u)
            ly = _vertex_label_at(geom, from_local(chart_y, w), vertex, xp.y[0])
            if ly is None:
                continue
            t = lx.conj(s)
            if ly.inverse() @ t @ ly not in powers:
                continue
            try:
                if classify_cm_pair(t, lx, ly).flavor != flavor:
                    continue
            except DomainError:
                continue
            found.append({"u": u, "order": order, "g_x": list(lx.entries), "g_y": list(ly.entries),
                          "mult": point_multiplicity(xp.patch, (u, w))})
    return found


def _singular_bicusps_on(geom: TriangleGeometry, xp: XpPatch) -> List[Dict[str, Any]]:
    chart_x, chart_y = xp.charts
    rho_x, _ = xp.footprint
    found = []
    for v, lx in _vertex_lifts(geom, xp.x[1], rho_x, geom.cusp_vertex, xp.x[0]):
        u = to_local(chart_x, v)
        if not xp.patch.domain.contains(u):
            continue
        w = xp.patch.second(u)
        ly = _vertex_label_at(geom, from_local(chart_y, w), geom.cusp_vertex, xp.y[0])
        if ly is None:
            continue
        cx, cy = CuspId.from_element(lx), CuspId.from_element(ly)
        if _line(cx) == _line(cy):
            found.append({"u": u, "x": list(cx.vector), "y": list(cy.vector),
                          "mult": point_multiplicity(xp.patch, (u, w))})
    return found


def diagonal_coincidences(geom: TriangleGeometry, xp: XpPatch) -> List[Dict[str, Any]]:
    """Points where the patch meets some Delta_g, with multiplicity.

    Raises:
        PreconditionError: the patch is a piece of a diagonal translate
    """
    chart_x, chart_y = xp.charts
    rho_x, rho_y = xp.footprint
    reach = rho_x + rho_y
    found = []
    for tile in tile_ball(geom, xp.y[1], min(reach, 3 * math.log(geom.p))):
        if dist(tile.apply(xp.x[1]), xp.y[1]) > reach:
            continue
        g = xp.y[0] @ tile.fp_image @ xp.x[0].inverse()
        psi = DiskMap.from_isometry(chart_y.inverse().compose(tile.isometry).compose(chart_x))
        try:
            points = coincidence_points(xp.patch.phi, psi, xp.patch.domain)
        except PreconditionError:
            raise PreconditionError(f"patch is a component of the Hecke curve Delta_g, g = {list(g.entries)}")
        found.extend({"u": u, "g": list(g.entries), "mult": k} for u, k in points)
    return found


def mult_vs_volume_report(patches: Sequence[XpPatch], special: SpecialSet, job: RepulsionJob) -> CheckReport:
    """Multiplicity along a special set against C_mult p^{-delta} vol; reports the fitted constant."""
    p = job.p
    special = SpecialSet(special)
    check_id = f"repulsion.mult_vs_volume.{special.value}.p{p}"
    geom = _geometry(p)
    for xp in patches:
        if xp.patch.conjugated:
            raise PreconditionError("multiplicity reports take holomorphic graphs only")
    # every report refuses Hecke components, whichever set it counts
    diagonal = [pt for xp in patches for pt in diagonal_coincidences(geom, xp)]
    if special == SpecialSet.DIAGONALS:
        points = diagonal
    elif special == SpecialSet.SBC:
        points = [pt for xp in patches for pt in _singular_bicusps_on(geom, xp)]
    else:
        flavor = CMFlavor.HEEGNER if special == SpecialSet.CM_PLUS else CMFlavor.ANTI_HEEGNER
        points = [pt for xp in patches for pt in _cm_points_on(geom, xp, flavor)]
    lhs = float(sum(pt["mult"] for pt in points))
    if special == SpecialSet.SBC:
        lhs *= p
    volume = sum(patch_volume(xp.patch, tol=1e-8) for xp in patches)
    scale = p ** (-job.delta) * volume
    logger.info(f"[Multiplicity] {special.value} p={p}: lhs={lhs:g}, volume={volume:.6g}")
    return CheckReport.compare(check_id, lhs, job.constant("C_mult") * scale, "<=",
                               witness={"points": points[:8]} if points else None,
                               detail={"p": p, "volume": volume, "fitted": lhs / scale,
                                       "points": len(points), "set": special.value})


def mult_trend_check(reports: Sequence[CheckReport]) -> CheckReport:
    """Fitted constants of one special set must not grow with p."""
    ordered = sorted(reports, key=lambda r: r.detail["p"])
    name = ordered[0].detail["set"] if ordered else "none"
    check_id = f"repulsion.mult_trend.{name}"
    fitted = [(r.detail["p"], r.detail["fitted"]) for r in ordered]
    for (p0, f0), (p1, f1) in zip(fitted, fitted[1:]):
        if f1 > f0 * (1 + 1e-9) + 1e-12:
            return CheckReport.failed(check_id, witness={"p": [p0, p1], "fitted": [f0, f1]},
                                      detail={"fitted": fitted})
    return CheckReport.passed(check_id, detail={"fitted": fitted})


def rotation_family(p: int, angle: float = 1.0) -> XpPatch:
    """Rotated graph through the Heegner point (i, i), footprint radius log p / 2."""
    geom = _geometry(p)
    ident = ProjMatFp.identity(p)
    domain = EuclideanDisk(0j, math.tanh(math.log(p) / 4))
    return XpPatch(CurvePatch.rotation(angle, domain), (ident, geom.i_vertex), (ident, geom.i_vertex))


# ----------------------------------------------------------------------------
# Replay
# ----------------------------------------------------------------------------

def replay(report: CheckReport) -> CheckReport:
    """Re-run the single instance named by a FAIL witness."""
    data = report.witness.get("replay")
    if not data:
        raise PreconditionError(f"report {report.id} carries no replay data")
    job = RepulsionJob(**data["job"])
    args = data["args"]
    p = job.p
    check = data["check"]
    if check == "cusp_a":
        geom = _geometry(p)
        radius = min((2 + job.delta) * math.log(p), 3 * math.log(p))
        cusp = CuspId(p, tuple(args["cusp"]))
        count = len(cusp_lifts(geom, geom.cusp_vertex, radius, budget=job.max_tiles).get(cusp, []))
        return CheckReport.compare(report.id, float(count), 1.0, "<=", witness={"cusp": args["cusp"]})
    if check == "cusp_b":
        cusp = CuspId(p, tuple(args["cusp"]))
        fits = [f for c, _, f in lens_fits(_geometry(p), job.delta, job.max_tiles) if c == cusp]
        return CheckReport.compare(report.id, max(fits, default=0.0), job.constant("C_lens"), "<=",
                                   witness={"cusp": args["cusp"]})
    if check == "cusp_c":
        geom = _geometry(p)
        z = ModelPoint.halfplane(complex(*args["z"]))
        count = len(cusp_lifts(geom, z, (1 + job.delta) * math.log(p), budget=job.max_tiles))
        return CheckReport.compare(report.id, float(count), job.constant("C_count") * p ** (12 * job.delta),
                                   "<=", witness={"z": args["z"]})
    if check == "cm_degree":
        bad = cm_degree_agreement(p, [ProjMatFp.from_entries(p, args["g_y"])])
        return CheckReport.failed(report.id, witness=bad[0]) if bad else CheckReport.passed(report.id)
    if check == "cm_pair":
        g_y, h_x, h_y = (ProjMatFp.from_entries(p, args[k]) for k in ("g_y", "h_x", "h_y"))
        try:
            res = assign_cm_pair(p, g_y, h_x, h_y, args["H"])
        except (PreconditionError, StructuralError) as exc:
            return CheckReport.failed(report.id, witness={"error": str(exc)})
        ok = res.consistent and res.on_divisors and max(res.m, res.m_second) <= job.m_bound
        return CheckReport.passed(report.id) if ok else CheckReport.failed(report.id, witness=res.to_dict())
    if check == "bicusp":
        result = bicusp_instance(job, point_from_json(p, args["x"]), point_from_json(p, args["y"]))
        if result is None or result["ok"]:
            return CheckReport.passed(report.id, detail={"instance": result})
        return CheckReport.failed(report.id, witness=result)
    if check == "diag":
        xi = tuple(point_from_json(p, pt) for pt in args["xi"])
        result = diag_instance(job, xi)
        return CheckReport.passed(report.id, detail=result) if result["ok"] \
            else CheckReport.failed(report.id, witness=result)
    raise PreconditionError(f"unknown replay target {check!r}")
