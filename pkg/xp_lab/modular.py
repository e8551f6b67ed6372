"""
Models of X(p): cusps and singular bicusps as coset data, CM points and their
Heegner flavor, Hecke correspondences, the conformal map from the modular
triangle onto the (2,3,p) triangle, and genus/volume bookkeeping.

A point of X(p) is a pair (label, z) with label in PSL2(F_p) and z in a
fundamental domain. The generator images S, R, T are shared by SL2(Z) and the
(2,3,p) triangle group, so the same label describes a point in the modular
chart (z in the standard domain) and in the compact chart (triangle_map(z) in F).
"""
import cmath
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
import sympy
from sympy.ntheory import sqrt_mod

from .arith import (IntMat, MatFp, ProjMatFp, check_prime, enumerate_bounded_height,
                    enumerate_psl2, first_column_class, is_square_mod, p1_normalize,
                    pm_vector, psl2_order)
from .errors import DomainError, PrecisionError, RangeError, ResourceError, StructuralError
from .hyperbolic import Model, ModelPoint, dist
from .report import CheckReport
from .triangle import (R_MAT, S_MAT, T_MAT, TriangleGeometry, compute_vertex_params,
                       displacement_classes, reduce_to_fundamental, tile_ball)

logger = logging.getLogger(__name__)

DEFAULT_HECKE_C = 4.0
TRIANGLE_MAP_DPS = 30
MAX_C2DIST_HEIGHT = 400

Vec2 = Tuple[int, int]


# ----------------------------------------------------------------------------
# Cusps
# ----------------------------------------------------------------------------

@lru_cache(maxsize=None)
def smallest_nonresidue(p: int) -> int:
    return next(u for u in range(2, p) if not is_square_mod(u, p))


def _twist(p: int) -> MatFp:
    """diag(1, u) with u the smallest non-residue; links the two components."""
    return MatFp(p, (1, 0, 0, smallest_nonresidue(p)))


@dataclass(frozen=True, order=True)
class CuspId:
    """A cusp as the coset g.H of the stabilizer H = <T> of iy_p.

    The coset is keyed by the first column of g up to sign. `component` is 1
    for cusps reached by a non-square Hecke degree; G(p) acts there through
    conjugation by diag(1, u).
    """

    p: int
    vector: Vec2
    component: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vector", pm_vector(self.vector, self.p))
        if self.vector == (0, 0):
            raise DomainError("cusp vector must be nonzero")
        if self.component not in (0, 1):
            raise DomainError(f"component must be 0 or 1, got {self.component}")

    @classmethod
    def from_element(cls, g: ProjMatFp) -> "CuspId":
        return cls(g.p, first_column_class(g))

    @property
    def representative(self) -> ProjMatFp:
        """Canonical g with g.e1 = vector."""
        x, y = self.vector
        p = self.p
        if x:
            return ProjMatFp(MatFp(p, (x, 0, y, pow(x, -1, p))))
        return ProjMatFp(MatFp(p, (0, -pow(y, -1, p), y, 0)))

    def stabilizer(self) -> FrozenSet[ProjMatFp]:
        g = self.representative
        t = T_MAT.proj(self.p)
        out, power = set(), ProjMatFp.identity(self.p)
        for _ in range(self.p):
            out.add(g.conj(power))
            power = power @ t
        return frozenset(out)

    def act(self, g: ProjMatFp) -> "CuspId":
        m = g.sl2_representative()
        if self.component:
            twist = _twist(self.p)
            m = twist @ m @ twist.inverse()
        return CuspId(self.p, m.apply(self.vector), self.component)


@lru_cache(maxsize=None)
def enumerate_cusps(p: int) -> Tuple[CuspId, ...]:
    """All (p^2 - 1)/2 cusps of one component, from the cosets of <T> in PSL2(F_p)."""
    check_prime(p)
    classes = sorted({first_column_class(g) for g in enumerate_psl2(p)})
    expected = (p * p - 1) // 2
    if len(classes) != expected or len(classes) * p != psl2_order(p):
        raise StructuralError(f"cusp enumeration for p={p} gave {len(classes)} classes, expected {expected}")
    return tuple(CuspId(p, v) for v in classes)


@dataclass(frozen=True, order=True)
class SingularBicusp:
    first: CuspId
    second: CuspId


def enumerate_singular_bicusps(p: int) -> List[SingularBicusp]:
    """Ordered cusp pairs with the same stabilizer.

    <T> fixes the line through e1, so g<T>g^-1 only depends on the line
    through g.e1: two cusps share a stabilizer exactly when their vectors are
    proportional.
    """
    by_line: Dict[Vec2, List[CuspId]] = defaultdict(list)
    for cusp in enumerate_cusps(p):
        by_line[p1_normalize(cusp.vector, p)].append(cusp)
    pairs = [SingularBicusp(x, y) for group in by_line.values() for x in group for y in group]
    pairs.sort()
    logger.debug(f"[Modular] p={p}: {len(pairs)} singular bicusps over {len(by_line)} lines")
    return pairs


def singular_bicusps_brute_force(p: int) -> List[SingularBicusp]:
    """Same set as enumerate_singular_bicusps, by comparing stabilizer subgroups."""
    cusps = enumerate_cusps(p)
    stabs = {c: c.stabilizer() for c in cusps}
    return sorted(SingularBicusp(x, y) for x in cusps for y in cusps if stabs[x] == stabs[y])


# ----------------------------------------------------------------------------
# CM points
# ----------------------------------------------------------------------------

class CMFlavor(str, Enum):
    HEEGNER = "HEEGNER"
    ANTI_HEEGNER = "ANTI_HEEGNER"


_CM_BASE = {2: S_MAT, 3: R_MAT}


@dataclass(frozen=True)
class CMPoint:
    """The point g.v over i (order 2) or over the order-3 vertex."""

    order: int
    g: ProjMatFp
    stabilizer: ProjMatFp


@dataclass(frozen=True)
class CMPointClass:
    order: int
    g_x: ProjMatFp
    g_y: ProjMatFp
    flavor: CMFlavor
    stabilizer: ProjMatFp
    angles: Tuple[float, float] = (0.0, 0.0)


def elliptic_rotation_angle(M: IntMat) -> float:
    """Rotation angle of an elliptic SL2(Z) element at its fixed point.

    With z0 the fixed point, M acts on the lattice side by 1/(c z0 + d); the
    derivative of the Mobius map at z0 is the square of that, so the angle
    returned is half the geometric rotation and tells M from -M.
    """
    a, b, c, d = M.entries
    tr = a + d
    if abs(tr) >= 2 or c == 0:
        raise DomainError(f"{M.entries} is not elliptic")
    root = math.sqrt(4 - tr * tr)
    z0 = complex(a - d, math.copysign(root, c)) / (2 * c)
    return -cmath.phase(c * z0 + d)


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


@lru_cache(maxsize=None)
def _cm_powers(p: int, order: int) -> Tuple[Tuple[MatFp, IntMat], ...]:
    """Non-central powers of the SL2 generator of order 2*order, with their lifts."""
    base = _CM_BASE[order]
    out, power = [], IntMat.identity()
    for _ in range(2 * order):
        power = power @ base
        if abs(power.trace) < 2:
            out.append((power.mod(p), power))
    return tuple(out)


def _local_angle(stab: MatFp, g: ProjMatFp, order: int) -> float:
    rep = g.sl2_representative()
    local = rep.inverse() @ stab @ rep
    for reduced, lifted in _cm_powers(stab.p, order):
        if reduced == local:
            return elliptic_rotation_angle(lifted)
    raise DomainError(f"{g.entries} is not fixed by the stabilizer {stab.entries}")


def classify_cm_pair(stab: ProjMatFp, g_x: ProjMatFp, g_y: ProjMatFp,
                     conjugate_second: bool = False) -> CMPointClass:
    """Heegner flavor of (g_x.v, g_y.v) with common stabilizer `stab`.

    stab is lifted once to SL2(F_p) and pulled back to the base point through
    each coordinate; HEEGNER when the two rotation angles agree, ANTI_HEEGNER
    when they are opposite. Conjugating the second coordinate negates its angle.
    """
    order = stab.order()
    if order not in _CM_BASE:
        raise DomainError(f"stabilizer {stab.entries} has order {order}, expected 2 or 3")
    lifted = stab.sl2_representative()
    angle_x = _local_angle(lifted, g_x, order)
    angle_y = _local_angle(lifted, g_y, order)
    if conjugate_second:
        angle_y = -angle_y
    if abs(_wrap(angle_x - angle_y)) < 1e-9:
        flavor = CMFlavor.HEEGNER
    elif abs(_wrap(angle_x + angle_y)) < 1e-9:
        flavor = CMFlavor.ANTI_HEEGNER
    else:
        raise DomainError(f"rotation angles {angle_x:.6f}, {angle_y:.6f} are neither equal nor opposite")
    return CMPointClass(order, g_x, g_y, flavor, stab, (angle_x, angle_y))


@lru_cache(maxsize=None)
def enumerate_cm_points(p: int, order: int) -> Tuple[CMPoint, ...]:
    """One point per coset g<s>, canonical representative the smallest entries."""
    if order not in _CM_BASE:
        raise DomainError(f"CM points have order 2 or 3, got {order}")
    s = _CM_BASE[order].proj(p)
    powers = [ProjMatFp.identity(p)]
    for _ in range(order - 1):
        powers.append(powers[-1] @ s)
    seen = set()
    points = []
    for g in enumerate_psl2(p):
        coset = [g @ h for h in powers]
        rep = min(coset, key=lambda x: x.entries)
        if rep in seen:
            continue
        seen.add(rep)
        points.append(CMPoint(order, rep, rep.conj(s)))
    points.sort(key=lambda pt: pt.g.entries)
    return tuple(points)


def _cyclic_subgroup(t: ProjMatFp) -> FrozenSet[ProjMatFp]:
    out, power = {ProjMatFp.identity(t.p)}, t
    while not power.is_identity():
        out.add(power)
        power = power @ t
    return frozenset(out)


def enumerate_cm_pairs(p: int, order: int) -> List[CMPointClass]:
    """Every ordered pair of CM points of one order sharing their stabilizer."""
    groups: Dict[FrozenSet[ProjMatFp], List[CMPoint]] = defaultdict(list)
    for pt in enumerate_cm_points(p, order):
        groups[_cyclic_subgroup(pt.stabilizer)].append(pt)
    out = [classify_cm_pair(x.stabilizer, x.g, y.g) for group in groups.values()
           for x in group for y in group]
    out.sort(key=lambda c: (c.g_x.entries, c.g_y.entries))
    return out


# ----------------------------------------------------------------------------
# Hecke correspondences
# ----------------------------------------------------------------------------

class HeckeConvention(str, Enum):
    CYCLIC = "cyclic"
    SIGMA1 = "sigma1"


def psi(n: int) -> int:
    """Index of Gamma_0(n): n * prod (1 + 1/q)."""
    out = n
    for q in sympy.factorint(n):
        out = out // q * (q + 1)
    return out


def sigma1(n: int) -> int:
    return int(sympy.divisor_sigma(n))


@lru_cache(maxsize=None)
def hecke_matrices(n: int, convention: HeckeConvention) -> Tuple[Tuple[int, int, int], ...]:
    """(a, b, d) with ad = n, 0 <= b < d, and gcd(a, b, d) = 1 for CYCLIC."""
    if n < 1:
        raise DomainError(f"Hecke index must be positive, got {n}")
    out = []
    for a in sympy.divisors(n):
        d = n // a
        for b in range(d):
            if convention == HeckeConvention.CYCLIC and math.gcd(math.gcd(a, b), d) != 1:
                continue
            out.append((a, b, d))
    return tuple(out)


@dataclass(frozen=True)
class HeckeOp:
    n: int
    convention: HeckeConvention = HeckeConvention.CYCLIC

    @property
    def matrices(self) -> Tuple[Tuple[int, int, int], ...]:
        return hecke_matrices(self.n, HeckeConvention(self.convention))

    @property
    def degree(self) -> int:
        return len(self.matrices)

    @property
    def expected_degree(self) -> int:
        return psi(self.n) if self.convention == HeckeConvention.CYCLIC else sigma1(self.n)


def hecke_degree_table(n_max: int) -> List[Dict[str, int]]:
    rows = []
    for n in range(1, n_max + 1):
        rows.append({
            "n": n,
            "cyclic": HeckeOp(n).degree,
            "sigma1": HeckeOp(n, HeckeConvention.SIGMA1).degree,
            "squarefree": int(all(e == 1 for e in sympy.factorint(n).values())),
        })
    return rows


def hecke_neighbors(z: ModelPoint, T: HeckeOp) -> List[ModelPoint]:
    zc = z.to(Model.HALFPLANE).coord
    return [ModelPoint.halfplane((a * zc + b) / d) for a, b, d in T.matrices]


def _hecke_scalar(n: int, p: int, component: int) -> Tuple[MatFp, int]:
    """alpha with det alpha = n: lambda*I for square n, lambda*diag(1,u)^(+-1) otherwise."""
    if math.gcd(n, p) != 1:
        raise DomainError(f"Hecke index {n} is not coprime to p={p}")
    if is_square_mod(n, p):
        lam = sqrt_mod(n % p, p)
        return MatFp.scalar(p, lam), component
    u = smallest_nonresidue(p)
    twist = _twist(p)
    if component == 0:
        lam = sqrt_mod((n * pow(u, -1, p)) % p, p)
        return twist.scale(lam), 1
    lam = sqrt_mod((n * u) % p, p)
    return twist.inverse().scale(lam), 0


def hecke_on_cusps(c: CuspId, T: HeckeOp) -> List[CuspId]:
    """Images of a cusp under T_n, one per matrix (a, b; 0, d): alpha.v / a."""
    p = c.p
    alpha, component = _hecke_scalar(T.n, p, c.component)
    base = alpha.apply(c.vector)
    out = []
    for a, _, _ in T.matrices:
        inv = pow(a, -1, p)
        out.append(CuspId(p, (base[0] * inv, base[1] * inv), component))
    return out


def hecke_cusp_hit_counts(p: int, T: HeckeOp) -> Counter:
    """How often each cusp is hit when T is applied to every cusp of component 0."""
    hits: Counter = Counter()
    for cusp in enumerate_cusps(p):
        hits.update(hecke_on_cusps(cusp, T))
    return hits


def reduce_modular(z: complex, max_steps: int = 1000) -> Tuple[IntMat, complex]:
    """(gamma, z1) with z = gamma.z1 and z1 in the standard domain of SL2(Z)."""
    if z.imag <= 0:
        raise DomainError(f"{z} is not in the upper half-plane")
    gamma = IntMat.identity()
    for _ in range(max_steps):
        n = math.floor(z.real + 0.5)
        if n:
            z -= n
            gamma = gamma @ IntMat(1, n, 0, 1)
        if abs(z) < 1.0 - 1e-15:
            z = -1.0 / z
            gamma = gamma @ S_MAT.inverse()
            continue
        return gamma, z
    raise ResourceError(f"modular reduction did not terminate in {max_steps} steps", partial=(gamma, z))


def in_modular_domain(z: complex, tol: float = 1e-12) -> bool:
    return z.imag > 0 and abs(z.real) <= 0.5 + tol and abs(z) >= 1.0 - tol


# ----------------------------------------------------------------------------
# The triangle map Delta(2,3,inf) -> Delta(2,3,p)
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class _SchwarzData:
    a: object
    b: object
    c: object
    scale: object
    vertex: object


@lru_cache(maxsize=None)
def _schwarz_data(p: int) -> _SchwarzData:
    """Exponents and normalization for the (2,3,p) hypergeometric equation.

    Local exponent differences 1/3 at t = 0, 1/2 at t = 1 and 1/p at infinity.
    The ratio of solutions sends t = 0 to 0 with two straight edges, so a
    single complex scale followed by the disk chart centred at the order-3
    vertex places t = 1 on i.
    """
    compute_vertex_params(p)
    with mpmath.workdps(TRIANGLE_MAP_DPS):
        a = mpmath.mpf(1) / 12 + mpmath.mpf(1) / (2 * p)
        b = mpmath.mpf(1) / 12 - mpmath.mpf(1) / (2 * p)
        c = mpmath.mpf(2) / 3
        leg = mpmath.acosh(mpmath.cos(mpmath.pi / p) / mpmath.sin(mpmath.pi / 3))
        theta = 2 * mpmath.atan(mpmath.exp(-leg))
        vertex = -mpmath.exp(-1j * theta)
        s1 = mpmath.hyp2f1(a - c + 1, b - c + 1, 2 - c, 1) / mpmath.hyp2f1(a, b, c, 1)
        phi_i = (1j - vertex) / (1j - mpmath.conj(vertex))
        return _SchwarzData(a, b, c, phi_i / s1, vertex)


def _left_map(z, data: _SchwarzData):
    """The map on the left half of the modular domain, in mpmath precision."""
    t = mpmath.kleinj(z)
    floor = mpmath.mpf(10) ** (-(TRIANGLE_MAP_DPS - 5)) * max(1, abs(t))
    if abs(mpmath.im(t)) < floor:
        # edges of the half domain land on the real axis; approach from above
        t = mpmath.mpc(mpmath.re(t), floor)
    c = data.c
    numer = mpmath.power(t, 1 - c) * mpmath.hyp2f1(data.a - c + 1, data.b - c + 1, 2 - c, t)
    denom = mpmath.hyp2f1(data.a, data.b, c, t)
    zeta = data.scale * numer / denom
    v = data.vertex
    return (v - mpmath.conj(v) * zeta) / (1 - zeta)


def _as_complex(w) -> complex:
    out = complex(w)
    if not (math.isfinite(out.real) and math.isfinite(out.imag)) or out.imag <= 0:
        raise PrecisionError(f"triangle map produced {out}")
    return out


def _map_with_speed(zc: complex, p: int) -> Tuple[complex, float]:
    """(f(z), |f'(z)|) with a vertical central difference."""
    data = _schwarz_data(p)
    reflect = zc.real > 0
    zl = complex(-zc.real, zc.imag) if reflect else zc
    with mpmath.workdps(TRIANGLE_MAP_DPS):
        z = mpmath.mpc(zl.real, zl.imag)
        h = mpmath.mpf(10) ** -10 * mpmath.im(z)
        w = _left_map(z, data)
        deriv = (_left_map(z + 1j * h, data) - _left_map(z - 1j * h, data)) / (2j * h)
        w_c, speed = _as_complex(w), float(abs(deriv))
    if reflect:
        w_c = complex(-w_c.real, w_c.imag)
    return w_c, speed


def triangle_map(z: ModelPoint, geom: TriangleGeometry, tol: float = 1e-9) -> ModelPoint:
    """Conformal map from the modular domain onto F fixing i.

    The order-3 vertex e^{i pi/3} goes to e^{i theta_p} and its mirror
    e^{2 pi i/3} to -e^{-i theta_p}; i(infinity) tends to iy_p.
    """
    zc = z.to(Model.HALFPLANE).coord
    if not in_modular_domain(zc, tol):
        raise DomainError(f"{zc} is outside the modular fundamental domain")
    data = _schwarz_data(geom.p)
    reflect = zc.real > 0
    zl = complex(-zc.real, zc.imag) if reflect else zc
    with mpmath.workdps(TRIANGLE_MAP_DPS):
        w = _as_complex(_left_map(mpmath.mpc(zl.real, zl.imag), data))
    if reflect:
        w = complex(-w.real, w.imag)
    return ModelPoint.halfplane(w)


def _clamp_left(z: complex) -> complex:
    x = min(0.0, max(-0.5, z.real))
    y = z.imag
    floor = math.sqrt(max(0.0, 1.0 - x * x))
    return complex(x, max(y, floor))


def triangle_map_inverse(w: ModelPoint, geom: TriangleGeometry, tol: float = 1e-11,
                         max_iter: int = 80) -> ModelPoint:
    """Newton inversion of triangle_map for w in F (away from iy_p)."""
    wc = w.to(Model.HALFPLANE).coord
    reflect = wc.real > 0
    target = complex(-wc.real, wc.imag) if reflect else wc
    data = _schwarz_data(geom.p)
    d_c = dist(ModelPoint.halfplane(target), geom.cusp_vertex)
    if d_c < 1e-12:
        raise DomainError("the cusp vertex has no preimage")
    y0 = max(-geom.p / (2 * math.pi) * math.log(math.tanh(d_c / 2)), 1.0)
    x0 = max(-0.5, min(0.0, 0.5 * target.real / math.cos(geom.theta_p)))
    z = _clamp_left(complex(x0, y0))
    with mpmath.workdps(TRIANGLE_MAP_DPS):
        goal = mpmath.mpc(target.real, target.imag)
        for _ in range(max_iter):
            zm = mpmath.mpc(z.real, z.imag)
            h = mpmath.mpf(10) ** -10 * mpmath.im(zm)
            fz = _left_map(zm, data)
            err = fz - goal
            if abs(err) <= tol * max(1, abs(goal)):
                break
            deriv = (_left_map(zm + 1j * h, data) - _left_map(zm - 1j * h, data)) / (2j * h)
            step = complex(err / deriv)
            nxt = _clamp_left(z - step)
            # halve steps that push the iterate to y < 0.5 of its height
            while nxt.imag < 0.5 * z.imag and abs(step) > 1e-14:
                step /= 2
                nxt = _clamp_left(z - step)
            z = nxt
        else:
            raise PrecisionError(f"triangle map inversion did not converge at {wc}")
    if reflect:
        z = complex(-z.real, z.imag)
    return ModelPoint.halfplane(z)


def cusp_distance(geom: TriangleGeometry, point: ModelPoint) -> float:
    """Distance on X(1)_p from a point to the cusp vertex orbit."""
    _, w0 = reduce_to_fundamental(geom, point)
    d0 = dist(w0, geom.cusp_vertex)
    if d0 < 1e-14:
        return 0.0
    best = d0
    for tile in tile_ball(geom, w0, d0):
        best = min(best, dist(w0, tile.apply(geom.cusp_vertex)))
    return best


def d_cusp_and_d_im(z: ModelPoint, geom: TriangleGeometry) -> Tuple[float, float]:
    """(d_cusp, d_im) for a point of X(1)_p given in the (2,3,p) chart."""
    _, w0 = reduce_to_fundamental(geom, z)
    d_cusp = cusp_distance(geom, w0)
    if d_cusp < 1e-12:
        return 0.0, math.inf
    return d_cusp, triangle_map_inverse(w0, geom).coord.imag


def im_height_check(geom: TriangleGeometry, samples: int = 200, seed: int = 42,
                    heights: Tuple[float, float] = (2.0, 10.0), c_max: float = 10.0) -> CheckReport:
    """Fit C in |-2 pi d_im/p - log tanh(d_cusp/2)| <= C/p over seeded samples with d_im in `heights`."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-0.5, 0.5, size=samples)
    ys = rng.uniform(heights[0], heights[1], size=samples)
    worst, witness = 0.0, {}
    for x, y in zip(xs, ys):
        w = triangle_map(ModelPoint.halfplane(complex(x, y)), geom)
        d_c = cusp_distance(geom, w)
        residual = abs(-2 * math.pi * y / geom.p - math.log(math.tanh(d_c / 2)))
        if residual * geom.p > worst:
            worst = residual * geom.p
            witness = {"z": [float(x), float(y)], "d_cusp": d_c}
    detail = {"p": geom.p, "fitted": worst, "samples": samples, "seed": seed,
              "heights": list(heights), "c_max": c_max}
    return CheckReport.compare(f"modular.im_height.p{geom.p}", worst, c_max, op="<=",
                               witness=witness if worst > c_max else {}, detail=detail)


def im_height_trend_check(reports: Sequence[CheckReport]) -> CheckReport:
    """The fitted d_im constant must not grow with p."""
    fitted = sorted((r.detail["p"], r.detail["fitted"]) for r in reports)
    for (p0, c0), (p1, c1) in zip(fitted, fitted[1:]):
        if c1 > c0 * (1 + 1e-9) + 1e-12:
            return CheckReport.failed("modular.im_height_trend", witness={"p": [p0, p1], "fitted": [c0, c1]},
                                      detail={"fitted": fitted})
    return CheckReport.passed("modular.im_height_trend", detail={"fitted": fitted})


def sample_modular_domain(rng: np.random.Generator, count: int, y_max: float) -> List[complex]:
    xs = rng.uniform(-0.5, 0.5, size=count)
    out = []
    for x in xs:
        floor = math.sqrt(1.0 - x * x) + 1e-3
        out.append(complex(x, floor + rng.uniform(0.0, max(y_max - floor, 0.0))))
    return out


def metric_comparison_check(geom: TriangleGeometry, samples: int = 40, seed: int = 42,
                            tol: float = 1e-6,
                            points: Optional[Iterable[complex]] = None) -> CheckReport:
    """tanh^2(d_cusp/2) <= f*h / h <= 1 at sampled points of the modular domain."""
    rng = np.random.default_rng(seed)
    zs = list(points) if points is not None else sample_modular_domain(rng, samples, float(geom.p))
    worst, witness, skipped, max_ratio = math.inf, {}, 0, 0.0
    rows = []
    for zc in zs:
        try:
            w, speed = _map_with_speed(zc, geom.p)
            d_c = cusp_distance(geom, ModelPoint.halfplane(w))
        except (PrecisionError, ResourceError, DomainError) as exc:
            logger.debug(f"[Modular] metric sample {zc} skipped: {exc}")
            skipped += 1
            continue
        ratio = (speed * zc.imag / w.imag) ** 2
        lower = math.tanh(d_c / 2) ** 2
        margin = min(ratio - lower, 1.0 - ratio)
        rows.append((zc, ratio, d_c))
        max_ratio = max(max_ratio, ratio)
        if margin < worst:
            worst = margin
            witness = {"z": zc, "ratio": ratio, "lower": lower, "d_cusp": d_c}
    if not rows:
        return CheckReport.inconclusive(f"modular.metric_comparison.p{geom.p}",
                                        "no sample could be evaluated", detail={"skipped": skipped})
    return CheckReport.compare(f"modular.metric_comparison.p{geom.p}", worst, 0.0, op=">=", tol=tol,
                               witness=witness,
                               detail={"samples": len(rows), "skipped": skipped, "max_ratio": max_ratio})


def boundary_edge_check(geom: TriangleGeometry, samples: int = 100, tol: float = 1e-6) -> CheckReport:
    """Edges of the modular domain land on the matching edges of F."""
    chart_left = math.pi - math.pi / geom.p
    iy = 1j * geom.y_p
    worst, witness = 0.0, {}
    ts = np.linspace(0.0, 1.0, samples + 2)[1:-1]
    for t in ts:
        arc = cmath.exp(1j * (math.pi / 2 + (math.pi / 6) * t))
        axis = complex(0.0, 1.0 + 1e-3 + 6.0 * t)
        side = complex(-0.5, math.sqrt(3) / 2 + 1e-3 + 6.0 * t)
        w_arc = triangle_map(ModelPoint.halfplane(arc), geom).coord
        w_axis = triangle_map(ModelPoint.halfplane(axis), geom).coord
        w_side = triangle_map(ModelPoint.halfplane(side), geom).coord
        u = (w_side - iy) / (w_side + iy)
        for edge, z, dev in (("arc", arc, abs(abs(w_arc) - 1.0)),
                             ("axis", axis, abs(w_axis.real)),
                             ("side", side, abs(cmath.phase(u) - chart_left))):
            if dev > worst:
                worst, witness = dev, {"edge": edge, "z": z}
    return CheckReport.compare(f"modular.boundary_edges.p{geom.p}", worst, tol, op="<=",
                               witness=witness, detail={"samples": 3 * len(ts)})


# ----------------------------------------------------------------------------
# Hecke pullback of cusp balls
# ----------------------------------------------------------------------------

def _point_near_cusp(geom: TriangleGeometry, r: float, phi: float) -> ModelPoint:
    iy = 1j * geom.y_p
    u = math.tanh(r / 2) * cmath.exp(1j * phi)
    return ModelPoint.halfplane(iy * (1 + u) / (1 - u))


def hecke_image_points(label: ProjMatFp, z0: complex, T: HeckeOp) -> List[Tuple[ProjMatFp, complex]]:
    """Images of the X(p) point (label, z0) in the modular chart.

    For h reducing to label and alpha = alpha(n), the image through (a, b; 0, d)
    is h sigma M z0 with sigma = alpha M^-1 mod p; with M z0 = gamma z1 its
    label is alpha.label.M^-1.gamma.
    """
    p = label.p
    alpha, _ = _hecke_scalar(T.n, p, 0)
    rep = label.sl2_representative()
    out = []
    for a, b, d in T.matrices:
        gamma, z1 = reduce_modular((a * z0 + b) / d)
        m_inv = MatFp(p, (d, -b, 0, a)).scale(pow(T.n, -1, p))
        new_label = ProjMatFp(alpha @ rep @ m_inv @ gamma.mod(p))
        out.append((new_label, z1))
    return out


def distance_to_cusps(geom: TriangleGeometry, label: ProjMatFp, w: ModelPoint,
                      targets: Iterable[Vec2], radius: float) -> float:
    """Distance on X(p) from (label, w) to the nearest cusp among targets."""
    wanted = {pm_vector(v, geom.p) for v in targets}
    best = math.inf
    for tile in tile_ball(geom, w, radius):
        if first_column_class(label @ tile.fp_image) in wanted:
            best = min(best, dist(w, tile.apply(geom.cusp_vertex)))
    return best


def heckepullback_ball_check(c: CuspId, R: float, m: int, geom: TriangleGeometry,
                             constant: float = DEFAULT_HECKE_C, samples: int = 8,
                             seed: int = 42, tol: float = 1e-6) -> CheckReport:
    """Hecke images of B(c, R) stay within R + log m + constant of the image cusps."""
    p = geom.p
    check_id = f"modular.heckepullback.p{p}.m{m}"
    if R >= 2 * math.log(p):
        raise RangeError(f"R={R:.4f} must be below 2 log p = {2 * math.log(p):.4f}")
    T = HeckeOp(m)
    targets = [img.vector for img in hecke_on_cusps(c, T)]
    bound = R + math.log(m) + constant
    search = min(bound, 3 * math.log(p))
    rng = np.random.default_rng(seed)
    g_c = c.representative
    worst, witness, skipped, evaluated = -math.inf, {}, 0, 0
    for _ in range(samples):
        r = math.acosh(1 + rng.uniform() * (math.cosh(R) - 1))
        r = max(r, 1e-3)
        phi = rng.uniform(0, 2 * math.pi)
        word, w0 = reduce_to_fundamental(geom, _point_near_cusp(geom, r, phi))
        label = g_c @ word.fp_image
        try:
            z0 = triangle_map_inverse(w0, geom).coord
            images = hecke_image_points(label, z0, T)
            for new_label, z1 in images:
                w1 = triangle_map(ModelPoint.halfplane(z1), geom)
                d = distance_to_cusps(geom, new_label, w1, targets, search)
                excess = d - R - math.log(m)
                evaluated += 1
                if excess > worst:
                    worst, witness = excess, {"r": r, "phi": phi, "label": list(new_label.entries), "distance": d}
        except (PrecisionError, DomainError) as exc:
            logger.debug(f"[Modular] heckepullback sample skipped: {exc}")
            skipped += 1
    if not evaluated:
        return CheckReport.inconclusive(check_id, "no Hecke image could be evaluated", detail={"skipped": skipped})
    if math.isinf(worst) and search < bound:
        return CheckReport.inconclusive(check_id, f"no image cusp within the search radius {search:.3f}")
    return CheckReport.compare(check_id, worst, constant, op="<=", tol=tol, witness=witness,
                               detail={"R": R, "m": m, "images": evaluated, "skipped": skipped,
                                       "worst_margin": worst})


# ----------------------------------------------------------------------------
# Heights
# ----------------------------------------------------------------------------

def height_bound_c2dist(R: float) -> float:
    """Explicit h(M) <= 2 e^{2R} for d(i, M i) <= R."""
    return 2.0 * math.exp(2.0 * R)


def height_bound_cuspdist(p: int, delta: float, offset: float = 1.0) -> float:
    """Height bound for points within delta log p + offset of a cusp-adjacent vertex."""
    return height_bound_c2dist(delta * math.log(p) + offset)


@lru_cache(maxsize=8)
def min_height_lifts(p: int, H: int) -> Dict[ProjMatFp, IntMat]:
    """For each class of PSL2(F_p) reached below height H, its lowest lift."""
    best: Dict[ProjMatFp, IntMat] = {}
    for M in enumerate_bounded_height(H):
        key = M.proj(p)
        if key not in best or M.height < best[key].height:
            best[key] = M
    return best


def c2dist_check(geom: TriangleGeometry, R: float) -> CheckReport:
    """Every gamma moving the image of i by at most R lifts to height <= 2 e^{2d}."""
    H = math.ceil(height_bound_c2dist(R))
    if H > MAX_C2DIST_HEIGHT:
        raise RangeError(f"height bound {H} for R={R} exceeds {MAX_C2DIST_HEIGHT}")
    p = geom.p
    heights = {label: M.height for label, M in min_height_lifts(p, H).items()}
    s = S_MAT.proj(p)
    worst, witness = -math.inf, {}
    for label, d in sorted(displacement_classes(geom, geom.i_vertex, geom.i_vertex, R).items(),
                           key=lambda item: item[0].entries):
        found = min(heights.get(label, math.inf), heights.get(label @ s, math.inf))
        ratio = found / height_bound_c2dist(d)
        if ratio > worst:
            worst, witness = ratio, {"label": list(label.entries), "distance": d, "height": found}
    return CheckReport.compare(f"modular.c2dist.p{p}", worst, 1.0, op="<=", witness=witness,
                               detail={"R": R, "height_bound": H})


# ----------------------------------------------------------------------------
# Genus and volume
# ----------------------------------------------------------------------------

def euler_characteristic(p: int) -> Fraction:
    """Riemann-Hurwitz over X(1): ramification p, 2, 3 over the cusp, i and omega."""
    order = psl2_order(check_prime(p))
    return Fraction(2 * order) - Fraction(order, 2) - 2 * Fraction(order, 3) - Fraction(order * (p - 1), p)


def genus_and_volume(p: int) -> Tuple[int, float]:
    chi = euler_characteristic(p)
    genus = 1 - chi / 2
    closed = 1 + Fraction((p * p - 1) * (p - 6), 24)
    if genus != closed or genus.denominator != 1:
        raise DomainError(f"genus mismatch for p={p}: {genus} vs {closed}")
    volume = psl2_order(p) * 2 * math.pi * (1 / 6 - 1 / p)
    if p < 7:
        logger.warning(f"[Modular] p={p}: X(p) is spherical, volume {volume:.4f} is the signed orbifold value")
    return int(genus), volume
