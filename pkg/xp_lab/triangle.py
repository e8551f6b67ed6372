"""
The (2,3,p) triangle group: fundamental triangle, generators, the map to
PSL2(F_p), point reduction and the tile search used for distances on X(p).

The fundamental domain F is the triangle (iy_p, e^{i theta_p}, -e^{-i theta_p}),
the union of the base triangle (i, iy_p, e^{i theta_p}) and its mirror. Tiles are
the translates g.F for g in the triangle group, which acts simply transitively
on them. Seen from iy_p in the disk chart w = (z - iy_p)/(z + iy_p), F is the
sector |arg w - pi| <= pi/p cut off by the unit circle |z| = 1.
"""
import cmath
import logging
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

from .arith import (IntMat, ProjMatFp, check_prime, enumerate_psl2,
                    first_column_class)
from .errors import DomainError, RangeError, ResourceError, StructuralError
from .hyperbolic import (Isometry, Model, ModelPoint, angle_at, apply, dist,
                         geodesic_triangle_area, rotation_about)
from .report import CheckReport

logger = logging.getLogger(__name__)

UNBOUNDED = math.inf
DEFAULT_TILE_BUDGET = 250_000

Letter = Tuple[str, int]

# generator images in PSL2(Z): sigma_2 -> S, sigma_p -> T, sigma_3 -> S^-1 T^-1
S_MAT = IntMat(0, -1, 1, 0)
T_MAT = IntMat(1, 1, 0, 1)
R_MAT = IntMat(0, 1, -1, 1)


@dataclass(frozen=True)
class TriangleGeometry:
    p: int
    y_p: float
    theta_p: float
    vertices: Tuple[ModelPoint, ModelPoint, ModelPoint]
    sigma2: Isometry
    sigma3: Isometry
    sigma_p: Isometry

    @property
    def i_vertex(self) -> ModelPoint:
        return self.vertices[0]

    @property
    def cusp_vertex(self) -> ModelPoint:
        return self.vertices[1]

    @property
    def order3_vertex(self) -> ModelPoint:
        return self.vertices[2]

    @property
    def mirror_vertex(self) -> ModelPoint:
        return ModelPoint.halfplane(-cmath.exp(-1j * self.theta_p))

    @property
    def interior_point(self) -> ModelPoint:
        """A point inside F, on the mirror line between i and iy_p."""
        return ModelPoint.halfplane(1j * math.sqrt(self.y_p))

    def generator(self, name: str) -> Isometry:
        return {"S": self.sigma2, "R": self.sigma3, "P": self.sigma_p}[name]


@lru_cache(maxsize=None)
def compute_vertex_params(p: int) -> TriangleGeometry:
    """Build the (2,3,p) triangle with vertices i, iy_p, e^{i theta_p}.

    y_p solves cosh(log y_p) sin(pi/p) = cos(pi/3). The side from i to
    e^{i theta_p} lies on the unit circle and has length a with
    cosh(a) = cos(pi/p)/sin(pi/3), so theta_p = 2 atan(e^{-a}).
    """
    check_prime(p)
    cosh_y = math.cos(math.pi / 3) / math.sin(math.pi / p)
    if cosh_y <= 1.0:
        raise DomainError(f"the (2,3,{p}) triangle is spherical; hyperbolic geometry needs p >= 7")
    y_p = math.exp(math.acosh(cosh_y))
    a = math.acosh(math.cos(math.pi / p) / math.sin(math.pi / 3))
    theta_p = 2.0 * math.atan(math.exp(-a))
    v_i = ModelPoint.halfplane(1j)
    v_p = ModelPoint.halfplane(1j * y_p)
    v_3 = ModelPoint.halfplane(cmath.exp(1j * theta_p))
    geom = TriangleGeometry(
        p=p, y_p=y_p, theta_p=theta_p, vertices=(v_i, v_p, v_3),
        sigma2=rotation_about(v_i, math.pi),
        sigma3=rotation_about(v_3, 2 * math.pi / 3),
        sigma_p=rotation_about(v_p, 2 * math.pi / p),
    )
    logger.debug(f"[Triangle] p={p}: y_p={y_p:.12f}, theta_p={theta_p:.12f}")
    return geom


def triangle_angles(geom: TriangleGeometry) -> Tuple[float, float, float]:
    """Interior angles at (i, iy_p, e^{i theta_p})."""
    v_i, v_p, v_3 = geom.vertices
    return angle_at(v_i, v_p, v_3), angle_at(v_p, v_3, v_i), angle_at(v_3, v_i, v_p)


def triangle_area(geom: TriangleGeometry) -> float:
    return geodesic_triangle_area(*geom.vertices)


def relation_defects(geom: TriangleGeometry) -> Dict[str, float]:
    """Distance from the identity of each defining relator, as isometries."""
    ident = Isometry.identity()

    def defect(g: Isometry) -> float:
        m = g.matrix
        return min(max(abs(x - y) for x, y in zip(m, ident.matrix)),
                   max(abs(x + y) for x, y in zip(m, ident.matrix)))

    s2, s3, sp = geom.sigma2, geom.sigma3, geom.sigma_p
    return {
        "sigma2^2": defect(s2.power(2)),
        "sigma3^3": defect(s3.power(3)),
        "sigma_p^p": defect(sp.power(geom.p)),
        "sigma2*sigma3*sigma_p": defect(s2.compose(s3).compose(sp)),
    }


@lru_cache(maxsize=None)
def fp_homomorphism(p: int) -> Dict[str, ProjMatFp]:
    """Images of the generators in PSL2(F_p), relations checked."""
    images = {"S": S_MAT.proj(p), "R": R_MAT.proj(p), "P": T_MAT.proj(p)}
    s, r, t = images["S"], images["R"], images["P"]
    checks = {
        "S^2": (s @ s).is_identity(),
        "R^3": (r @ r @ r).is_identity(),
        "P^p": ProjMatFp(t.mat.power(p)).is_identity(),
        "SRP": (s @ r @ t).is_identity(),
    }
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        raise StructuralError(f"generator relations fail in PSL2(F_{p}): {failed}")
    return images


def image_closure(p: int) -> int:
    """Size of the subgroup of PSL2(F_p) generated by the generator images."""
    gens = list(fp_homomorphism(p).values())
    seen = {ProjMatFp.identity(p)}
    frontier = list(seen)
    while frontier:
        nxt = []
        for g in frontier:
            for s in gens:
                h = g @ s
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        frontier = nxt
    return len(seen)


def _reduce_exponent(name: str, k: int, p: int) -> int:
    order = {"S": 2, "R": 3, "P": p}[name]
    return ((k + order // 2) % order) - order // 2 if order > 2 else k % 2


def _letter_data(geom: TriangleGeometry, letter: Letter):
    name, k = letter
    hom = fp_homomorphism(geom.p)
    base_int = {"S": S_MAT, "R": R_MAT, "P": T_MAT}[name]
    iso = geom.generator(name).power(k)
    fp = ProjMatFp(hom[name].mat.power(k))
    lift = IntMat.identity()
    step = base_int if k >= 0 else base_int.inverse()
    for _ in range(abs(k)):
        lift = lift @ step
    return iso, fp, lift


@dataclass(frozen=True)
class TileWord:
    """A triangle-group element naming the tile g.F."""

    word: Tuple[Letter, ...]
    isometry: Isometry
    fp_image: ProjMatFp
    lift: IntMat

    @classmethod
    def identity(cls, geom: TriangleGeometry) -> "TileWord":
        return cls((), Isometry.identity(), ProjMatFp.identity(geom.p), IntMat.identity())

    @classmethod
    def from_letters(cls, geom: TriangleGeometry, letters: Sequence[Letter]) -> "TileWord":
        result = cls.identity(geom)
        for letter in letters:
            result = result.times(geom, letter)
        return result

    def times(self, geom: TriangleGeometry, letter: Letter) -> "TileWord":
        name, k = letter
        k = _reduce_exponent(name, k, geom.p)
        if k == 0:
            return self
        iso, fp, lift = _letter_data(geom, (name, k))
        word = self.word
        if word and word[-1][0] == name:
            merged = _reduce_exponent(name, word[-1][1] + k, geom.p)
            word = word[:-1] + (((name, merged),) if merged else ())
        else:
            word = word + ((name, k),)
        return TileWord(word, self.isometry.compose(iso), self.fp_image @ fp, self.lift @ lift)

    def inverse(self, geom: TriangleGeometry) -> "TileWord":
        return TileWord.from_letters(geom, [(n, -k) for n, k in reversed(self.word)])

    def apply(self, point: ModelPoint) -> ModelPoint:
        return apply(self.isometry, point)

    def __len__(self) -> int:
        return len(self.word)


def gamma_p_of_intmat(M: IntMat, geom: TriangleGeometry) -> TileWord:
    """Write M as a word in S and T (continued fractions) and substitute generators."""
    letters: List[Letter] = []
    a, b, c, d = M.entries
    while c != 0:
        q = a // c
        if q:
            letters.append(("P", q))
        a, b = a - q * c, b - q * d
        # S^-1 (a b; c d) = (c d; -a -b)
        a, b, c, d = c, d, -a, -b
        letters.append(("S", 1))
    # now +-(1 b; 0 1) up to the sign d
    if b:
        letters.append(("P", b * d))
    return TileWord.from_letters(geom, letters)


def _sector_offset(geom: TriangleGeometry, z: complex) -> Tuple[complex, float]:
    iy = 1j * geom.y_p
    w = (z - iy) / (z + iy)
    return w, cmath.phase(-w) if w != 0 else 0.0


def in_fundamental_domain(geom: TriangleGeometry, z: complex, tol: float = 1e-12) -> bool:
    w, offset = _sector_offset(geom, z)
    if abs(w) < tol:
        return True
    return abs(offset) <= math.pi / geom.p + tol and abs(z) >= 1.0 - tol


def reduce_to_fundamental(geom: TriangleGeometry, point: ModelPoint,
                          max_steps: int = 10_000) -> Tuple[TileWord, ModelPoint]:
    """Find g with point = g.z0 and z0 in F.

    Rotations about iy_p bring the point into the sector of F; below the
    unit circle sigma_2 strictly decreases the distance to iy_p.
    """
    z = point.to(Model.HALFPLANE)
    letters: List[Letter] = []
    for _ in range(max_steps):
        w, offset = _sector_offset(geom, z.coord)
        k = round(offset / (2 * math.pi / geom.p)) if abs(w) > 1e-14 else 0
        if k:
            # z = sigma_p^k z' with z' in the base sector
            z = apply(geom.sigma_p.power(-k), z)
            letters.append(("P", k))
            continue
        if abs(z.coord) < 1.0 and abs(w) > 1e-14:
            z = apply(geom.sigma2, z)
            letters.append(("S", 1))
            continue
        return TileWord.from_letters(geom, letters), z
    raise ResourceError(f"point reduction did not terminate in {max_steps} steps",
                        partial=(letters, z))


def _segment_distance(z: complex, a: complex, b: complex) -> float:
    """Hyperbolic distance from z to the geodesic segment [a, b] in the half-plane."""
    if abs(a.real - b.real) < 1e-14 * max(1.0, abs(a), abs(b)):
        x0 = a.real
        u, ua, ub = z - x0, a - x0, b - x0
    else:
        c = (abs(a) ** 2 - abs(b) ** 2) / (2 * (a.real - b.real))
        rho = abs(a - c)
        lo, hi = c - rho, c + rho

        def h(t: complex) -> complex:
            return (t - lo) / (-t + hi)

        u, ua, ub = h(z), h(a), h(b)
    lo_h, hi_h = sorted((ua.imag, ub.imag))
    foot = abs(u)
    if lo_h <= foot <= hi_h:
        return math.asinh(abs(u.real) / u.imag)
    za = ModelPoint.halfplane(z)
    return min(dist(za, ModelPoint.halfplane(a)), dist(za, ModelPoint.halfplane(b)))


def fundamental_domain_distance(geom: TriangleGeometry, z: complex) -> float:
    """Distance from a half-plane point to the closed fundamental domain F."""
    if in_fundamental_domain(geom, z):
        return 0.0
    vp = 1j * geom.y_p
    v3 = geom.order3_vertex.coord
    vm = geom.mirror_vertex.coord
    return min(_segment_distance(z, vp, v3), _segment_distance(z, v3, vm),
               _segment_distance(z, vm, vp))


def _tile_key_point(tile: TileWord, geom: TriangleGeometry, center: ModelPoint) -> complex:
    q = tile.apply(geom.interior_point)
    c = center.to(Model.HALFPLANE).coord
    return (q.coord - c) / (q.coord - c.conjugate())


def tile_ball(geom: TriangleGeometry, center: ModelPoint, R: float,
              budget: int = DEFAULT_TILE_BUDGET) -> List[TileWord]:
    """All tiles g.F meeting the closed ball B(center, R).

    Breadth-first search across tile edges, keeping a tile when the exact
    distance from center to it is at most R. Tiles are deduplicated on their
    F_p image plus the position of an interior point.

    Raises:
        RangeError: R above 3 log p
        ResourceError: more than `budget` tiles; `partial` holds those found
    """
    if R < 0:
        raise DomainError(f"negative radius {R}")
    if R > 3 * math.log(geom.p) + 1e-12:
        raise RangeError(f"tile search radius {R:.4f} exceeds 3 log p = {3 * math.log(geom.p):.4f}")
    center = center.to(Model.HALFPLANE)
    start, _ = reduce_to_fundamental(geom, center)
    seen: Dict[ProjMatFp, List[complex]] = {}
    found: List[Tuple[TileWord, complex]] = []

    def register(tile: TileWord) -> bool:
        key_point = _tile_key_point(tile, geom, center)
        scale = 1e-7 * max(1e-300, 1.0 - abs(key_point) ** 2)
        bucket = seen.setdefault(tile.fp_image, [])
        if any(abs(key_point - other) <= scale for other in bucket):
            return False
        bucket.append(key_point)
        return True

    def near(tile: TileWord) -> bool:
        local = apply(tile.isometry.inverse(), center)
        return fundamental_domain_distance(geom, local.coord) <= R + 1e-12

    register(start)
    queue = deque([start])
    while queue:
        tile = queue.popleft()
        found.append((tile, _tile_key_point(tile, geom, center)))
        if len(found) > budget:
            raise ResourceError(f"tile budget {budget} exhausted at R={R}",
                                partial=[t for t, _ in found])
        for letter in (("S", 1), ("P", 1), ("P", -1)):
            nxt = tile.times(geom, letter)
            if near(nxt) and register(nxt):
                queue.append(nxt)
    found.sort(key=lambda item: (item[0].fp_image.entries, round(item[1].real, 9), round(item[1].imag, 9)))
    logger.debug(f"[Triangle] tile_ball p={geom.p} R={R:.4f}: {len(found)} tiles")
    return [t for t, _ in found]


def fixes_cusp_vertex(tile: TileWord, geom: TriangleGeometry, tol: float = 1e-9) -> bool:
    return dist(tile.apply(geom.cusp_vertex), geom.cusp_vertex) < tol


def verify_disksep(geom: TriangleGeometry, c_disksep: float = 1.5) -> CheckReport:
    """Tiles within log p - C of iy_p all have iy_p as a vertex."""
    radius = math.log(geom.p) - c_disksep
    inradius = math.log(geom.y_p)
    tiles = tile_ball(geom, geom.cusp_vertex, max(radius, 0.0))
    strays = [t for t in tiles if not fixes_cusp_vertex(t, geom)]
    separation = cusp_lift_separation(geom)
    detail = {
        "p": geom.p, "radius": radius, "star_inradius": inradius,
        "measured_gap": math.log(geom.p) - inradius, "tiles": len(tiles),
        "cusp_separation": separation, "separation_threshold": 2 * math.log(geom.p) - 2 * c_disksep,
        "stated_threshold": 2 * math.log(geom.p) - 2.0,
        "stated_margin": separation - (2 * math.log(geom.p) - 2.0),
    }
    if strays:
        return CheckReport.failed(
            f"triangle.disksep.p{geom.p}",
            witness={"tile_words": [list(map(list, t.word)) for t in strays[:5]]},
            lhs=float(len(strays)), rhs=0.0, detail=detail)
    return CheckReport.compare(f"triangle.disksep.p{geom.p}", separation,
                               2 * math.log(geom.p) - 2 * c_disksep, op=">", detail=detail)


def cusp_lift_separation(geom: TriangleGeometry, radius: Optional[float] = None) -> float:
    """Min distance from iy_p to a lift of a different cusp class."""
    radius = radius if radius is not None else 2 * math.log(geom.p)
    own = first_column_class(ProjMatFp.identity(geom.p))
    best = UNBOUNDED
    for tile in tile_ball(geom, geom.cusp_vertex, radius):
        if first_column_class(tile.fp_image) == own:
            continue
        best = min(best, dist(geom.cusp_vertex, tile.apply(geom.cusp_vertex)))
    return best


def cusp_lift_distance_check(geom: TriangleGeometry, c_disksep: float = 1.5) -> CheckReport:
    """d_{X(p)}(c, c') > 2 log p - 2C over cusp lifts near iy_p."""
    separation = cusp_lift_separation(geom)
    threshold = 2 * math.log(geom.p) - 2 * c_disksep
    return CheckReport.compare(f"triangle.cusp_separation.p{geom.p}", separation, threshold, op=">",
                               detail={"p": geom.p, "c_disksep": c_disksep})


def displacement_classes(geom: TriangleGeometry, a: ModelPoint, b: ModelPoint,
                         r: float) -> Dict[ProjMatFp, float]:
    """For each g in G(p), the distance on X(p) from a to g.b when it is <= r."""
    gb, b0 = reduce_to_fundamental(geom, b)
    inv_b = gb.fp_image.inverse()
    out: Dict[ProjMatFp, float] = {}
    for tile in tile_ball(geom, a, r):
        d = dist(a, tile.apply(b0))
        if d > r:
            continue
        label = tile.fp_image @ inv_b
        if d < out.get(label, UNBOUNDED):
            out[label] = d
    return out


def dist_on_Xp(geom: TriangleGeometry, a: ModelPoint, b: ModelPoint, R_max: float,
               label: Optional[ProjMatFp] = None) -> float:
    """Distance on X(p) between the images of a and label.b.

    Returns UNBOUNDED when no lift lies within R_max.
    """
    label = label if label is not None else ProjMatFp.identity(geom.p)
    return displacement_classes(geom, a, b, R_max).get(label, UNBOUNDED)


def psl2_surjective(p: int) -> bool:
    return image_closure(p) == len(enumerate_psl2(p))
