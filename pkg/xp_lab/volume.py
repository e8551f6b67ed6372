"""
Volumes of holomorphic curve patches inside tubes of the bidisk, the radial
potentials controlling how those volumes grow, and Lelong numbers.

Volumes are Riemannian areas for the product of two curvature -1 disks, so a
ball of radius r in one factor has area 4π sinh²(r/2). A patch is a graph
z -> (z, w(z)) over a euclidean disk of parameters; a Diag2Patch is a curve in
the product of two bidisks given by four coordinate maps of one parameter.
"""
import cmath
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, optimize

from .errors import DomainError, PreconditionError, ResourceError, StructuralError
from .hyperbolic import EuclideanDisk, Isometry, hyperbolic_ball_area, tanh2_half_dist
from .report import CheckReport, Status

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
RAY_SCAN_POINTS = 48
SERIES_ORDER = 8
SERIES_TOL = 1e-10
ROOT_CLUSTER_TOL = 1e-5
LEVI_DPS = 30

Point2 = Tuple[complex, complex]


def disk_distance(z: complex, w: complex) -> float:
    t2 = tanh2_half_dist(z, w)
    if t2 >= 1.0:
        return math.inf
    return 2.0 * math.atanh(math.sqrt(t2))


# ----------------------------------------------------------------------------
# Coordinate maps and patches
# ----------------------------------------------------------------------------

class MapKind(str, Enum):
    IDENTITY = "identity"
    MOBIUS = "mobius"
    NEG = "neg"
    CONST = "const"
    POLY = "poly"


_PARAM_COUNT = {MapKind.IDENTITY: 0, MapKind.NEG: 0, MapKind.CONST: 1, MapKind.MOBIUS: 2}


@dataclass(frozen=True)
class DiskMap:
    """A holomorphic map of one parameter into the disk.

    MOBIUS params (alpha, beta) act as w -> (alpha w + beta)/(conj(beta) w + conj(alpha)),
    normalized to |alpha|^2 - |beta|^2 = 1. POLY params are coefficients, lowest first.
    """
    kind: MapKind
    params: Tuple[complex, ...] = ()

    def __post_init__(self):
        kind = MapKind(self.kind)
        params = tuple(complex(c) for c in self.params)
        if kind in _PARAM_COUNT and len(params) != _PARAM_COUNT[kind]:
            raise DomainError(f"{kind.value} map takes {_PARAM_COUNT[kind]} parameters, got {len(params)}")
        if kind == MapKind.POLY and not params:
            raise DomainError("polynomial map needs at least one coefficient")
        if kind == MapKind.CONST and not abs(params[0]) < 1:
            raise DomainError(f"constant {params[0]!r} is not in the disk")
        if kind == MapKind.MOBIUS:
            alpha, beta = params
            det = abs(alpha) ** 2 - abs(beta) ** 2
            if not det > 0:
                raise DomainError(f"({alpha}, {beta}) is not a disk automorphism")
            s = 1.0 / math.sqrt(det)
            params = (alpha * s, beta * s)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", params)

    @classmethod
    def from_isometry(cls, g: Isometry) -> "DiskMap":
        return cls(MapKind.MOBIUS, g.disk_coefficients())

    def matrix(self) -> np.ndarray:
        if self.kind == MapKind.IDENTITY:
            return np.eye(2, dtype=complex)
        if self.kind == MapKind.NEG:
            return np.array([[1j, 0], [0, -1j]], dtype=complex)
        if self.kind == MapKind.MOBIUS:
            a, b = self.params
            return np.array([[a, b], [b.conjugate(), a.conjugate()]], dtype=complex)
        raise DomainError(f"{self.kind.value} map is not an automorphism")

    def __call__(self, z: complex) -> complex:
        if self.kind == MapKind.IDENTITY:
            return z
        if self.kind == MapKind.NEG:
            return -z
        if self.kind == MapKind.CONST:
            return self.params[0]
        if self.kind == MapKind.MOBIUS:
            a, b = self.params
            return (a * z + b) / (b.conjugate() * z + a.conjugate())
        return complex(P.polyval(z, self.params))

    def derivative(self, z: complex) -> complex:
        if self.kind == MapKind.IDENTITY:
            return 1.0 + 0j
        if self.kind == MapKind.NEG:
            return -1.0 + 0j
        if self.kind == MapKind.CONST:
            return 0j
        if self.kind == MapKind.MOBIUS:
            a, b = self.params
            return 1.0 / (b.conjugate() * z + a.conjugate()) ** 2
        return complex(P.polyval(z, P.polyder(self.params)))

    def taylor(self, z0: complex, order: int = SERIES_ORDER) -> np.ndarray:
        """Coefficients c_0..c_order of the expansion about z0."""
        coeffs = np.zeros(order + 1, dtype=complex)
        coeffs[0] = self(z0)
        if order == 0 or self.kind == MapKind.CONST:
            return coeffs
        if self.kind in (MapKind.IDENTITY, MapKind.NEG):
            coeffs[1] = self.derivative(z0)
        elif self.kind == MapKind.MOBIUS:
            a, b = self.params
            d0 = b.conjugate() * z0 + a.conjugate()
            for n in range(1, order + 1):
                coeffs[n] = (-b.conjugate()) ** (n - 1) / d0 ** (n + 1)
        else:
            poly = np.asarray(self.params, dtype=complex)
            for n in range(1, order + 1):
                poly = P.polyder(poly) if len(poly) > 1 else np.zeros(1, dtype=complex)
                coeffs[n] = P.polyval(z0, poly) / math.factorial(n)
        return coeffs

    def rational(self) -> Tuple[np.ndarray, np.ndarray]:
        """(numerator, denominator) coefficient arrays, lowest degree first."""
        if self.kind == MapKind.IDENTITY:
            return np.array([0, 1], dtype=complex), np.array([1], dtype=complex)
        if self.kind == MapKind.NEG:
            return np.array([0, -1], dtype=complex), np.array([1], dtype=complex)
        if self.kind == MapKind.CONST:
            return np.array([self.params[0]], dtype=complex), np.array([1], dtype=complex)
        if self.kind == MapKind.MOBIUS:
            a, b = self.params
            return np.array([b, a], dtype=complex), np.array([a.conjugate(), b.conjugate()], dtype=complex)
        return np.asarray(self.params, dtype=complex), np.array([1], dtype=complex)

    def conjugated_by(self, g: Isometry) -> "DiskMap":
        """g o self o g^-1, the same map seen after moving the parameter by g."""
        if self.kind == MapKind.CONST:
            a, b = g.disk_coefficients()
            w = self.params[0]
            return DiskMap(MapKind.CONST, ((a * w + b) / (b.conjugate() * w + a.conjugate()),))
        if self.kind == MapKind.POLY:
            raise DomainError("polynomial maps are not transported by isometries")
        m = DiskMap.from_isometry(g).matrix()
        conj = m @ self.matrix() @ np.linalg.inv(m)
        return DiskMap(MapKind.MOBIUS, (conj[0, 0], conj[0, 1]))


IDENTITY_MAP = DiskMap(MapKind.IDENTITY)


def _complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def vanishing_order(f: DiskMap, g: DiskMap, z0: complex, order: int = SERIES_ORDER) -> Optional[int]:
    """Order of vanishing of f - g at z0, or None when the series agree to `order`."""
    diff = f.taylor(z0, order) - g.taylor(z0, order)
    for k, c in enumerate(diff):
        if abs(c) > SERIES_TOL:
            return k
    return None


def coincidence_points(f: DiskMap, g: DiskMap, domain: EuclideanDisk) -> List[Tuple[complex, int]]:
    """Points of the domain where f = g, with algebraic multiplicity.

    Raises:
        PreconditionError: f and g agree identically
    """
    pf, qf = f.rational()
    pg, qg = g.rational()
    numerator = P.polysub(P.polymul(pf, qg), P.polymul(pg, qf))
    scale = max(1.0, float(np.max(np.abs(numerator))))
    numerator = np.trim_zeros(np.where(np.abs(numerator) > 1e-13 * scale, numerator, 0), "b")
    if numerator.size == 0:
        raise PreconditionError(f"{f.kind.value} and {g.kind.value} maps coincide identically")
    if numerator.size == 1:
        return []
    roots = P.polyroots(numerator)
    clusters: List[List[complex]] = []
    for root in roots:
        for cluster in clusters:
            if abs(cluster[0] - root) < ROOT_CLUSTER_TOL:
                cluster.append(root)
                break
        else:
            clusters.append([root])
    points = []
    for cluster in clusters:
        z0 = complex(np.mean(cluster))
        if domain.contains(z0, tol=-1e-12):
            points.append((z0, len(cluster)))
    return sorted(points, key=lambda item: (item[0].real, item[0].imag))


class PatchKind(str, Enum):
    GRAPH_MOBIUS = "graph_mobius"
    GRAPH_NEG = "graph_neg"
    GRAPH_CONST = "graph_const"
    GRAPH_POLY = "graph_poly"
    GRAPH_CONJ_MODEL = "graph_conj_model"


_PATCH_MAP = {
    PatchKind.GRAPH_MOBIUS: MapKind.MOBIUS,
    PatchKind.GRAPH_NEG: MapKind.NEG,
    PatchKind.GRAPH_CONST: MapKind.CONST,
    PatchKind.GRAPH_POLY: MapKind.POLY,
    PatchKind.GRAPH_CONJ_MODEL: MapKind.MOBIUS,
}

DEFAULT_DOMAIN = EuclideanDisk(0j, 0.999)


def _check_domain(domain: EuclideanDisk) -> None:
    if abs(domain.center) + domain.radius > 1.0 + 1e-15:
        raise DomainError(f"parameter disk {domain} leaves the unit disk")


@dataclass(frozen=True)
class CurvePatch:
    """Graph z -> (z, w(z)) over `domain`.

    For GRAPH_CONJ_MODEL the stored second coordinate is conj(phi(z)), the
    coordinate of the conjugate disk; every other kind stores phi(z) itself.
    `multiplicities` lists (z0, order) where the graph meets the diagonal (the
    conjugate diagonal for GRAPH_CONJ_MODEL); leave empty to have them computed.
    """
    kind: PatchKind
    params: Tuple[complex, ...] = ()
    domain: EuclideanDisk = DEFAULT_DOMAIN
    multiplicities: Tuple[Tuple[complex, int], ...] = ()
    phi: DiskMap = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = PatchKind(self.kind)
        object.__setattr__(self, "kind", kind)
        phi = DiskMap(_PATCH_MAP[kind], self.params)
        object.__setattr__(self, "params", phi.params)
        object.__setattr__(self, "phi", phi)
        _check_domain(self.domain)
        object.__setattr__(self, "multiplicities",
                           tuple((complex(z), int(k)) for z, k in self.multiplicities))

    @classmethod
    def mobius(cls, alpha: complex, beta: complex, domain: EuclideanDisk = DEFAULT_DOMAIN) -> "CurvePatch":
        return cls(PatchKind.GRAPH_MOBIUS, (alpha, beta), domain)

    @classmethod
    def diagonal(cls, domain: EuclideanDisk = DEFAULT_DOMAIN) -> "CurvePatch":
        return cls(PatchKind.GRAPH_MOBIUS, (1, 0), domain)

    @classmethod
    def rotation(cls, angle: float, domain: EuclideanDisk = DEFAULT_DOMAIN) -> "CurvePatch":
        """Graph of w = e^{i angle} z."""
        return cls(PatchKind.GRAPH_MOBIUS, (cmath.exp(0.5j * angle), 0), domain)

    @classmethod
    def neg(cls, domain: EuclideanDisk = DEFAULT_DOMAIN) -> "CurvePatch":
        return cls(PatchKind.GRAPH_NEG, (), domain)

    @classmethod
    def const(cls, w0: complex, domain: EuclideanDisk = DEFAULT_DOMAIN) -> "CurvePatch":
        return cls(PatchKind.GRAPH_CONST, (w0,), domain)

    @classmethod
    def poly(cls, coefficients: Sequence[complex], domain: EuclideanDisk = DEFAULT_DOMAIN,
             multiplicities: Sequence[Tuple[complex, int]] = ()) -> "CurvePatch":
        return cls(PatchKind.GRAPH_POLY, tuple(coefficients), domain, tuple(multiplicities))

    @classmethod
    def conj_model(cls, alpha: complex, beta: complex,
                   domain: EuclideanDisk = DEFAULT_DOMAIN) -> "CurvePatch":
        return cls(PatchKind.GRAPH_CONJ_MODEL, (alpha, beta), domain)

    @property
    def conjugated(self) -> bool:
        return self.kind == PatchKind.GRAPH_CONJ_MODEL

    def second(self, z: complex) -> complex:
        w = self.phi(z)
        return w.conjugate() if self.conjugated else w

    def density(self, z: complex) -> float:
        """Area density of the graph against dx dy in the parameter."""
        w = self.phi(z)
        one_z = 1.0 - abs(z) ** 2
        one_w = 1.0 - abs(w) ** 2
        if not (one_z > 0 and one_w > 0):
            raise DomainError(f"graph leaves the bidisk at z={z!r}")
        return 4.0 / one_z ** 2 + 4.0 * abs(self.phi.derivative(z)) ** 2 / one_w ** 2

    def diagonal_points(self) -> List[Tuple[complex, int]]:
        """Where phi(z) = z, i.e. where the graph meets its diagonal."""
        return coincidence_points(self.phi, IDENTITY_MAP, self.domain)

    def diagonal_multiplicities(self) -> List[Tuple[complex, int]]:
        if self.multiplicities:
            return list(self.multiplicities)
        return self.diagonal_points()

    def validate_multiplicities(self) -> None:
        for z0, declared in self.multiplicities:
            actual = vanishing_order(self.phi, IDENTITY_MAP, z0)
            if actual != declared:
                raise StructuralError(f"declared order {declared} at {z0!r}, series gives {actual}")

    def translate(self, g: Isometry) -> "CurvePatch":
        """Image of the patch under the diagonal action of g."""
        phi = self.phi.conjugated_by(g)
        kind = PatchKind.GRAPH_CONST if phi.kind == MapKind.CONST else (
            PatchKind.GRAPH_CONJ_MODEL if self.conjugated else PatchKind.GRAPH_MOBIUS)
        moved = tuple((_apply_disk(g, z), k) for z, k in self.multiplicities)
        return CurvePatch(kind, phi.params, _mobius_disk_image(g, self.domain), moved)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "params": [[c.real, c.imag] for c in self.params],
            "domain": {"center": [self.domain.center.real, self.domain.center.imag],
                       "radius": self.domain.radius},
            "multiplicities": [[[z.real, z.imag], k] for z, k in self.multiplicities],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CurvePatch":
        domain = data.get("domain")
        disk = DEFAULT_DOMAIN if domain is None else EuclideanDisk(_complex(domain["center"]),
                                                                   float(domain["radius"]))
        return cls(PatchKind(data["kind"]), tuple(_complex(c) for c in data.get("params", ())), disk,
                   tuple((_complex(z), int(k)) for z, k in data.get("multiplicities", ())))


def _apply_disk(g: Isometry, w: complex) -> complex:
    a, b = g.disk_coefficients()
    return (a * w + b) / (b.conjugate() * w + a.conjugate())


def _mobius_disk_image(g: Isometry, disk: EuclideanDisk) -> EuclideanDisk:
    """Image of a euclidean disk under a disk automorphism, via its circumcircle."""
    a, b, c = (_apply_disk(g, disk.center + disk.radius * cmath.exp(2j * math.pi * k / 3))
               for k in range(3))
    d = 2.0 * (a.real * (b.imag - c.imag) + b.real * (c.imag - a.imag) + c.real * (a.imag - b.imag))
    ux = (abs(a) ** 2 * (b.imag - c.imag) + abs(b) ** 2 * (c.imag - a.imag) + abs(c) ** 2 * (a.imag - b.imag)) / d
    uy = (abs(a) ** 2 * (c.real - b.real) + abs(b) ** 2 * (a.real - c.real) + abs(c) ** 2 * (b.real - a.real)) / d
    center = complex(ux, uy)
    radius = abs(a - center)
    # rounding can push a disk that touches the circle just outside it
    radius = min(radius, 1.0 - abs(center))
    return EuclideanDisk(center, radius)


@dataclass(frozen=True)
class Diag2Patch:
    """Curve z -> (x1, y1, x2, y2) in the product of two bidisks.

    `multiplicities` lists (z0, order) where the curve meets
    Δ₂ = {x1 = x2, y1 = y2}; leave empty to have them computed.
    """
    maps: Tuple[DiskMap, DiskMap, DiskMap, DiskMap]
    domain: EuclideanDisk = DEFAULT_DOMAIN
    multiplicities: Tuple[Tuple[complex, int], ...] = ()

    def __post_init__(self):
        if len(self.maps) != 4:
            raise DomainError(f"a curve in the double bidisk needs 4 coordinate maps, got {len(self.maps)}")
        _check_domain(self.domain)
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "multiplicities",
                           tuple((complex(z), int(k)) for z, k in self.multiplicities))

    def coordinates(self, z: complex) -> Tuple[complex, complex, complex, complex]:
        return tuple(m(z) for m in self.maps)

    def density(self, z: complex) -> float:
        total = 0.0
        for m in self.maps:
            w = m(z)
            one_w = 1.0 - abs(w) ** 2
            if not one_w > 0:
                raise DomainError(f"curve leaves the double bidisk at z={z!r}")
            total += 4.0 * abs(m.derivative(z)) ** 2 / one_w ** 2
        return total

    def contained_in_diagonal(self) -> bool:
        x1, y1, x2, y2 = self.maps
        z0 = self.domain.center
        return vanishing_order(x1, x2, z0) is None and vanishing_order(y1, y2, z0) is None

    def diagonal_points(self) -> List[Tuple[complex, int]]:
        x1, y1, x2, y2 = self.maps
        if self.contained_in_diagonal():
            raise PreconditionError("curve lies inside Δ₂")
        try:
            candidates = coincidence_points(x1, x2, self.domain)
        except PreconditionError:
            candidates = coincidence_points(y1, y2, self.domain)
        points = []
        for z0, _ in candidates:
            ox = vanishing_order(x1, x2, z0)
            oy = vanishing_order(y1, y2, z0)
            if ox and oy:
                points.append((z0, min(ox, oy)))
            elif ox is None and oy:
                points.append((z0, oy))
            elif oy is None and ox:
                points.append((z0, ox))
        return points

    def diagonal_multiplicities(self) -> List[Tuple[complex, int]]:
        if self.multiplicities:
            return list(self.multiplicities)
        return self.diagonal_points()

    def validate_multiplicities(self) -> None:
        x1, y1, x2, y2 = self.maps
        for z0, declared in self.multiplicities:
            orders = [o for o in (vanishing_order(x1, x2, z0), vanishing_order(y1, y2, z0)) if o is not None]
            actual = min(orders) if orders else None
            if actual != declared:
                raise StructuralError(f"declared Δ₂ order {declared} at {z0!r}, series gives {actual}")


# ----------------------------------------------------------------------------
# Regions and quadrature
# ----------------------------------------------------------------------------

class RegionKind(str, Enum):
    POINT_BALL = "point_ball"
    DIAG_TUBE = "diag_tube"
    CONJ_DIAG_TUBE = "conj_diag_tube"
    DIAG2_TUBE = "diag2_tube"


@dataclass(frozen=True)
class RegionSpec:
    kind: RegionKind
    radius: float
    anchor: Optional[Point2] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RegionKind(self.kind))
        if not self.radius > 0:
            raise DomainError(f"region radius must be positive, got {self.radius}")
        if self.kind == RegionKind.POINT_BALL:
            if self.anchor is None:
                raise DomainError("a point ball needs an anchor")
            object.__setattr__(self, "anchor", (complex(self.anchor[0]), complex(self.anchor[1])))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value, "radius": self.radius}
        if self.anchor is not None:
            data["anchor"] = [[c.real, c.imag] for c in self.anchor]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegionSpec":
        anchor = data.get("anchor")
        if anchor is not None:
            anchor = (_complex(anchor[0]), _complex(anchor[1]))
        return cls(RegionKind(data["kind"]), float(data["radius"]), anchor)


Patch = Union[CurvePatch, Diag2Patch]


def _region_distance(patch: Patch, region: RegionSpec) -> Callable[[complex], float]:
    """The function whose sublevel set {< radius} is the region, on parameters."""
    if isinstance(patch, Diag2Patch):
        if region.kind != RegionKind.DIAG2_TUBE:
            raise DomainError(f"{region.kind.value} does not apply to curves in the double bidisk")

        def diag2(z: complex) -> float:
            x1, y1, x2, y2 = patch.coordinates(z)
            return max(disk_distance(x1, x2), disk_distance(y1, y2))
        return diag2
    if region.kind == RegionKind.POINT_BALL:
        a1, a2 = region.anchor
        return lambda z: max(disk_distance(z, a1), disk_distance(patch.second(z), a2))
    if region.kind == RegionKind.DIAG_TUBE:
        return lambda z: disk_distance(z, patch.second(z))
    if region.kind == RegionKind.CONJ_DIAG_TUBE:
        return lambda z: disk_distance(z, patch.second(z).conjugate())
    raise DomainError("Δ₂ tubes need a curve in the double bidisk")


def _pivot(patch: Patch, region: RegionSpec) -> complex:
    """Polar centre for the quadrature: a point of the region inside the domain."""
    candidates: List[complex] = []
    if region.kind == RegionKind.POINT_BALL:
        candidates.append(region.anchor[0])
    try:
        if region.kind in (RegionKind.DIAG_TUBE, RegionKind.DIAG2_TUBE) or (
                isinstance(patch, CurvePatch) and patch.conjugated):
            candidates.extend(z for z, _ in patch.diagonal_multiplicities())
    except PreconditionError:
        pass
    for z in candidates:
        if patch.domain.contains(z, tol=-1e-9):
            return z
    return patch.domain.center


def _ray_exit(center: complex, ray: complex, domain: EuclideanDisk) -> float:
    """Distance from `center` along `ray` to the boundary circle of `domain`."""
    offset = center - domain.center
    b = (offset * ray.conjugate()).real
    disc = b * b - (abs(offset) ** 2 - domain.radius ** 2)
    return -b + math.sqrt(max(disc, 0.0))


def _ray_intervals(excess: Callable[[float], float], rho_max: float,
                   scan: int = RAY_SCAN_POINTS) -> List[Tuple[float, float]]:
    """Sub-intervals of [0, rho_max] where excess < 0, scanned then refined by brentq."""
    grid = np.linspace(0.0, rho_max, scan + 1)
    values = [excess(float(rho)) for rho in grid]
    intervals = []
    start = 0.0 if values[0] < 0 else None
    for a, b, fa, fb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if (fa < 0) == (fb < 0):
            continue
        if not (math.isfinite(fa) and math.isfinite(fb)):
            root = float(b) if fa < 0 else float(a)
        else:
            root = optimize.brentq(excess, float(a), float(b), xtol=1e-15)
        if fb < 0:
            start = root
        else:
            intervals.append((start, root))
            start = None
    if start is not None:
        intervals.append((start, rho_max))
    return intervals


def _polar_volume(density: Callable[[complex], float], distance: Callable[[complex], float],
                  radius: float, domain: EuclideanDisk, center: complex, tol: float) -> Tuple[float, float]:
    touches = abs(domain.center) + domain.radius >= 1.0 - 1e-9
    inner_error = [0.0]

    def inner(theta: float) -> float:
        ray = cmath.exp(1j * theta)
        rho_max = _ray_exit(center, ray, domain)
        if touches:
            rho_max *= 1.0 - 1e-12
        total = 0.0
        for a, b in _ray_intervals(lambda rho: distance(center + rho * ray) - radius, rho_max):
            if touches and b >= rho_max:
                raise ResourceError(f"region reaches the unit circle along angle {theta:.6f}",
                                    estimate=math.inf, error_bound=math.inf)
            value, err = integrate.quad(lambda rho: density(center + rho * ray) * rho, a, b,
                                        epsabs=tol * 1e-2, epsrel=tol, limit=200)
            total += value
            inner_error[0] = max(inner_error[0], err)
        return total

    value, err = integrate.quad(inner, 0.0, 2.0 * math.pi, epsabs=tol, epsrel=tol, limit=400)
    return value, err + 2.0 * math.pi * inner_error[0]


def curve_volume(patch: Union[Patch, Sequence[Patch]], region: RegionSpec, tol: float = DEFAULT_TOL) -> float:
    """Volume of patch ∩ region for the product metric.

    Args:
        patch: a patch, or a sequence of patches whose volumes add up
        region: tube or ball in the bidisk (double bidisk for DIAG2_TUBE)
        tol: relative quadrature tolerance

    Returns:
        the volume

    Raises:
        ResourceError: quadrature error above the tolerance, or a divergent volume
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if isinstance(patch, (list, tuple)):
        return sum(curve_volume(p, region, tol) for p in patch)
    distance = _region_distance(patch, region)
    value, err = _polar_volume(patch.density, distance, region.radius, patch.domain,
                               _pivot(patch, region), tol)
    bound = max(10.0 * tol, 10.0 * tol * abs(value))
    if err > bound:
        raise ResourceError(f"quadrature error {err:.3e} above {bound:.3e}",
                            estimate=value, error_bound=err)
    logger.debug(f"[Volume] {region.kind.value} r={region.radius:g}: {value:.12g} (err {err:.1e})")
    return value


def patch_volume(patch: Patch, tol: float = DEFAULT_TOL) -> float:
    """Volume of the whole patch over its parameter disk."""
    value, err = _polar_volume(patch.density, lambda z: 0.0, 1.0, patch.domain, patch.domain.center, tol)
    bound = max(10.0 * tol, 10.0 * tol * abs(value))
    if err > bound:
        raise ResourceError(f"quadrature error {err:.3e} above {bound:.3e}",
                            estimate=value, error_bound=err)
    return value


# ----------------------------------------------------------------------------
# Lower bounds
# ----------------------------------------------------------------------------

def _as_list(patches) -> List:
    return list(patches) if isinstance(patches, (list, tuple)) else [patches]


def point_multiplicity(patch: CurvePatch, xi: Point2, tol: float = 1e-9) -> int:
    """mult of a graph at xi, in chart coordinates; graphs are smooth."""
    z, w = xi
    if not patch.domain.contains(z):
        return 0
    return int(abs(patch.second(z) - w) <= tol)


def ht_point_check(patches: Union[CurvePatch, Sequence[CurvePatch]], xi: Point2, r: float,
                   tol: float = 1e-6) -> CheckReport:
    """vol(C ∩ B(xi, r)) >= 4π sinh²(r/2) mult_xi(C)."""
    patches = _as_list(patches)
    region = RegionSpec(RegionKind.POINT_BALL, r, xi)
    volume = curve_volume(patches, region)
    mult = sum(point_multiplicity(p, region.anchor) for p in patches)
    bound = hyperbolic_ball_area(r) * mult
    return CheckReport.compare(f"volume.ht_point.r{r:g}", volume, bound, ">=", tol * max(1.0, bound),
                               detail={"mult": mult, "margin": volume - bound, "patches": len(patches)})


def ht_conj_point_check(patch: CurvePatch, xi: Point2, r: float, tol: float = 1e-6) -> CheckReport:
    """Point bound for a conjugate-model patch; xi is given as a pair of disk points.

    The volume must agree with the holomorphic graph of the same phi, since the
    conjugation only relabels the second factor.
    """
    if not patch.conjugated:
        raise PreconditionError(f"{patch.kind.value} is not a conjugate-model patch")
    chart = (complex(xi[0]), complex(xi[1]).conjugate())
    volume = curve_volume(patch, RegionSpec(RegionKind.POINT_BALL, r, chart))
    twin = CurvePatch(PatchKind.GRAPH_MOBIUS, patch.params, patch.domain)
    twin_volume = curve_volume(twin, RegionSpec(RegionKind.POINT_BALL, r, xi))
    mult = point_multiplicity(patch, chart)
    bound = hyperbolic_ball_area(r) * mult
    detail = {"mult": mult, "margin": volume - bound, "holomorphic_twin": twin_volume}
    if abs(volume - twin_volume) > tol * max(1.0, volume):
        return CheckReport.failed(f"volume.ht_conj_point.r{r:g}",
                                  witness={"conj_volume": volume, "twin_volume": twin_volume},
                                  lhs=volume, rhs=bound, detail=detail)
    return CheckReport.compare(f"volume.ht_conj_point.r{r:g}", volume, bound, ">=",
                               tol * max(1.0, bound), detail=detail)


def ht_diag_check(patches: Union[CurvePatch, Sequence[CurvePatch]], r: float,
                  tol: float = 1e-6) -> CheckReport:
    """vol(C ∩ B(Δ, r)) >= 8π sinh²(r/4) (C·Δ)."""
    patches = _as_list(patches)
    volume = 0.0
    intersection = 0
    for patch in patches:
        kind = RegionKind.CONJ_DIAG_TUBE if patch.conjugated else RegionKind.DIAG_TUBE
        volume += curve_volume(patch, RegionSpec(kind, r))
        intersection += sum(k for _, k in patch.diagonal_multiplicities())
    bound = 2.0 * hyperbolic_ball_area(r / 2.0) * intersection
    return CheckReport.compare(f"volume.ht_diag.r{r:g}", volume, bound, ">=", tol * max(1.0, bound),
                               detail={"intersection": intersection, "margin": volume - bound})


def ht_diag2_check(patches: Union[Diag2Patch, Sequence[Diag2Patch]], r: float,
                   tol: float = 1e-6) -> CheckReport:
    """vol(C ∩ B(Δ₂, r)) >= 8π sinh²(r/4) Σ mult over C ∩ Δ₂."""
    patches = _as_list(patches)
    volume = 0.0
    mult = 0
    for patch in patches:
        if patch.contained_in_diagonal():
            raise PreconditionError("curve lies inside Δ₂")
        volume += curve_volume(patch, RegionSpec(RegionKind.DIAG2_TUBE, r))
        mult += sum(k for _, k in patch.diagonal_multiplicities())
    bound = 2.0 * hyperbolic_ball_area(r / 2.0) * mult
    return CheckReport.compare(f"volume.ht_diag2.r{r:g}", volume, bound, ">=", tol * max(1.0, bound),
                               detail={"mult": mult, "margin": volume - bound})


def _ratio_check(id: str, patch: CurvePatch, kind: RegionKind, r: float, R: float,
                 bound: float, tol: float) -> CheckReport:
    if not 0 < r <= R:
        raise DomainError(f"ratio checks need 0 < r <= R, got r={r}, R={R}")
    small = curve_volume(patch, RegionSpec(kind, r))
    large = curve_volume(patch, RegionSpec(kind, R))
    detail = {"vol_r": small, "vol_R": large, "bound": bound, "patch": patch.kind.value, "tol": tol}
    if small == 0.0:
        return CheckReport.passed(id, lhs=large, rhs=0.0, detail={**detail, "vacuous": True})
    ratio = large / small
    detail["margin"] = ratio / bound
    report = CheckReport.compare(id, ratio, bound, ">=", tol, detail=detail)
    if report.status == Status.FAIL:
        report.witness.update(patch=patch.to_dict(), region=RegionSpec(kind, R).to_dict())
    return report


def htd_ratio_check(patch: CurvePatch, r: float, R: float, tol: float = 1e-6) -> CheckReport:
    """vol(C ∩ B(Δ, R)) >= cosh(R/2)/cosh(r/2) vol(C ∩ B(Δ, r))."""
    bound = math.cosh(R / 2.0) / math.cosh(r / 2.0)
    return _ratio_check(f"volume.htd.r{r:g}.R{R:g}", patch, RegionKind.DIAG_TUBE, r, R, bound, tol)


def htad_ratio_check(patch: CurvePatch, r: float, R: float, tol: float = 1e-6) -> CheckReport:
    """vol(C ∩ B(Δ̄, R)) >= sinh(R/2)/sinh(r/2) vol(C ∩ B(Δ̄, r))."""
    ring = [patch.domain.center + 0.5 * patch.domain.radius * cmath.exp(2j * math.pi * k / 5)
            for k in range(5)]
    if all(abs(patch.second(z).conjugate() - z) < 1e-12 for z in ring):
        raise PreconditionError("patch is the conjugate diagonal")
    bound = math.sinh(R / 2.0) / math.sinh(r / 2.0)
    return _ratio_check(f"volume.htad.r{r:g}.R{R:g}", patch, RegionKind.CONJ_DIAG_TUBE, r, R, bound, tol)


def builtin_patches(tube: RegionKind = RegionKind.DIAG_TUBE) -> List[CurvePatch]:
    """Built-in graphs whose trace on the tube stays well inside the parameter disk.

    Graphs meeting the conjugate diagonal along a whole geodesic are left out of
    the CONJ_DIAG_TUBE family; the collar oracle covers that case exactly.
    """
    if RegionKind(tube) == RegionKind.DIAG_TUBE:
        return [
            CurvePatch.neg(),
            CurvePatch.const(0.3),
            CurvePatch.rotation(1.0),
            CurvePatch.rotation(2.5),
            CurvePatch.poly((0, 0, 0.5), multiplicities=((0j, 1),)),
        ]
    if RegionKind(tube) == RegionKind.CONJ_DIAG_TUBE:
        return [
            CurvePatch.const(0.3),
            CurvePatch.const(complex(0.4, 0.2)),
            CurvePatch.poly((0, 0, 0.5)),
        ]
    raise DomainError(f"no built-in family for {RegionKind(tube).value}")


# ----------------------------------------------------------------------------
# Collar oracle
# ----------------------------------------------------------------------------

def collar_area(half_width: float, length: float) -> float:
    return 2.0 * length * math.sinh(half_width)


def _fermi_point(t: float, rho: float) -> complex:
    """Disk point at signed distance rho from the real diameter, above arc length t."""
    z = math.exp(t) * complex(math.tanh(rho), 1.0 / math.cosh(rho))
    return (z - 1j) / (z + 1j)


def collar_volume(r: float, length: float = 1.0, tol: float = DEFAULT_TOL) -> float:
    """Volume of the identity graph inside the conjugate-diagonal tube, over a
    segment of the real diameter of the given length.

    The graph meets the tube d(z, conj z) < r in the collar of half-width r/2,
    integrated in Fermi coordinates along the diameter.
    """
    patch = CurvePatch.diagonal(EuclideanDisk(0j, 1.0))

    def excess(t: float, rho: float) -> float:
        w = _fermi_point(t, rho)
        return disk_distance(w, patch.second(w).conjugate()) - r

    def weight(t: float, rho: float) -> float:
        w = _fermi_point(t, rho)
        # patch density over the hyperbolic area element, times cosh(rho) from Fermi coordinates
        return patch.density(w) * (1.0 - abs(w) ** 2) ** 2 / 4.0 * math.cosh(rho)

    def across(t: float) -> float:
        total = 0.0
        for sign in (1.0, -1.0):
            for a, b in _ray_intervals(lambda rho: excess(t, sign * rho), r):
                value, _ = integrate.quad(lambda rho: weight(t, sign * rho), a, b, epsabs=tol * 1e-2, epsrel=tol)
                total += value
        return total

    value, _ = integrate.quad(across, 0.0, length, epsabs=tol, epsrel=tol)
    return value


def collar_tightness_check(r: float, R: float, length: float = 1.0, tol: float = 1e-4) -> CheckReport:
    """The identity graph realizes the conjugate-diagonal growth bound with equality."""
    small = collar_volume(r, length)
    large = collar_volume(R, length)
    oracle_small = 2.0 * collar_area(r / 2.0, length)
    oracle_large = 2.0 * collar_area(R / 2.0, length)
    bound = math.sinh(R / 2.0) / math.sinh(r / 2.0)
    detail = {"vol_r": small, "vol_R": large, "oracle_r": oracle_small, "oracle_R": oracle_large}
    for got, want in ((small, oracle_small), (large, oracle_large)):
        if abs(got - want) > tol * want:
            return CheckReport.failed(f"volume.htad_collar.r{r:g}.R{R:g}",
                                      witness={"volume": got, "oracle": want}, detail=detail)
    return CheckReport.compare(f"volume.htad_collar.r{r:g}.R{R:g}", large / small, bound, "==",
                               tol * bound, detail=detail)


# ----------------------------------------------------------------------------
# Radial profiles
# ----------------------------------------------------------------------------

class ProfileKind(str, Enum):
    HTD = "htd"
    HTAD = "htad"


@dataclass(frozen=True)
class RadialProfile:
    """Piecewise radial potential between the junctions c < C.

    HTD is a function of s = log tanh²(d/2) with derivative
    2A/sqrt(1-e^s) + 2B/(1-e^s); HTAD is a function of s = -log(1 - tanh²(d/2))
    with h'(s) = (1 - sqrt((e^c-1)/(e^s-1))) / (1 - sqrt((e^c-1)/(e^C-1))).
    Below c both are constant; above C they follow the potential of the full
    product metric.
    """
    kind: ProfileKind
    r: float
    R: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        if not 0 < self.r < self.R:
            raise DomainError(f"profiles need 0 < r < R, got r={self.r}, R={self.R}")

    @property
    def c(self) -> float:
        if self.kind == ProfileKind.HTD:
            return 2.0 * math.log(math.tanh(self.r / 2.0))
        return 2.0 * math.log(math.cosh(self.r / 2.0))

    @property
    def C(self) -> float:
        if self.kind == ProfileKind.HTD:
            return 2.0 * math.log(math.tanh(self.R / 2.0))
        return 2.0 * math.log(math.cosh(self.R / 2.0))

    @property
    def A(self) -> float:
        ch_r, ch_R = math.cosh(self.r / 2.0), math.cosh(self.R / 2.0)
        return -ch_r * ch_R / (ch_R - ch_r)

    @property
    def B(self) -> float:
        ch_r, ch_R = math.cosh(self.r / 2.0), math.cosh(self.R / 2.0)
        return ch_R / (ch_R - ch_r)

    def _ratio_scale(self) -> Tuple[float, float]:
        k = math.sinh(self.r / 2.0)
        return k, 1.0 - k / math.sinh(self.R / 2.0)

    def first(self, s):
        """f'(s) for HTD, h'(s) for HTAD on the middle piece."""
        s = np.asarray(s, dtype=float)
        if self.kind == ProfileKind.HTD:
            one = -np.expm1(s)
            return 2.0 * self.A / np.sqrt(one) + 2.0 * self.B / one
        k, denom = self._ratio_scale()
        return (1.0 - k / np.sqrt(np.expm1(s))) / denom

    def second(self, s):
        s = np.asarray(s, dtype=float)
        es = np.exp(s)
        if self.kind == ProfileKind.HTD:
            one = -np.expm1(s)
            return self.A * es / one ** 1.5 + 2.0 * self.B * es / one ** 2
        k, denom = self._ratio_scale()
        return 0.5 * k * es / np.expm1(s) ** 1.5 / denom

    def domination(self, s):
        """The factor in front of the product metric bounding the Levi form."""
        s = np.asarray(s, dtype=float)
        if self.kind == ProfileKind.HTD:
            return np.full_like(s, self.B)
        return self.first(s) + 2.0 * (-np.expm1(-s)) * self.second(s)

    def junction_defects(self) -> Tuple[float, float]:
        """Jumps of the first derivative at c and at C against the outer pieces."""
        if self.kind == ProfileKind.HTD:
            outer = 2.0 / -math.expm1(self.C)
            return abs(float(self.first(self.c))), abs(float(self.first(self.C)) - outer) / outer
        return abs(float(self.first(self.c))), abs(float(self.first(self.C)) - 1.0)

    def levi_matrices(self, s) -> Tuple[np.ndarray, np.ndarray]:
        """Levi form of the potential and of the product metric at (0, w), |w|² fixed by s.

        Returns arrays of shape (n, 2, 2) in the (dz, dw) basis.
        """
        s = np.atleast_1d(np.asarray(s, dtype=float))
        d1, d2 = self.first(s), self.second(s)
        levi = np.zeros((s.size, 2, 2))
        std = np.zeros((s.size, 2, 2))
        if self.kind == ProfileKind.HTD:
            es = np.exp(s)
            one = -np.expm1(s)
            levi[:, 0, 1] = levi[:, 1, 0] = d1
            levi[:, 0, 0] += d2 / es * one ** 2
            levi[:, 0, 1] += d2 / es * (es - 1.0)
            levi[:, 1, 0] += d2 / es * (es - 1.0)
            levi[:, 1, 1] += d2 / es
            std[:, 0, 0] = 2.0
            std[:, 1, 1] = 2.0 / one ** 2
            return levi, std
        psi = -np.expm1(-s)
        one = 1.0 - psi
        f1 = d1 / one
        f2 = (d2 + d1) / one ** 2
        levi[:, 0, 0] = f1 * one ** 2 + f2 * psi * one ** 2
        levi[:, 0, 1] = levi[:, 1, 0] = f1 * psi - f2 * psi * one
        levi[:, 1, 1] = f1 + f2 * psi
        std[:, 0, 0] = 2.0
        std[:, 1, 1] = 2.0 / one ** 2
        return levi, std

    def table(self, s_values: Sequence[float]) -> List[Tuple[float, float, float, float]]:
        s = np.asarray(s_values, dtype=float)
        return list(zip(s.tolist(), np.atleast_1d(self.first(s)).tolist(),
                        np.atleast_1d(self.second(s)).tolist(),
                        np.atleast_1d(self.domination(s)).tolist()))


def _profile_grid(profile: RadialProfile, points: int) -> np.ndarray:
    c, C = profile.c, profile.C
    return c + (C - c) * (np.arange(points) + 0.5) / points


def htd_profile(r: float, R: float, points: int = 50) -> List[Tuple[float, float, float, float]]:
    profile = RadialProfile(ProfileKind.HTD, r, R)
    return profile.table(_profile_grid(profile, points))


def htad_profile(r: float, R: float, points: int = 50) -> List[Tuple[float, float, float, float]]:
    profile = RadialProfile(ProfileKind.HTAD, r, R)
    return profile.table(_profile_grid(profile, points))


def _min_eigenvalue(matrices: np.ndarray) -> np.ndarray:
    scale = np.maximum(1.0, np.max(np.abs(matrices), axis=(1, 2)))
    return np.linalg.eigvalsh(matrices)[:, 0] / scale


def profile_positivity_check(profile: RadialProfile, grid: int = 10_000, tol: float = 1e-9,
                             junction_tol: float = 1e-10) -> CheckReport:
    """Sign, junction and eigenvalue conditions of a radial profile on a grid of (c, C).

    HTD: A < 0, B > 1 and B·ω_std - ω_F is positive semidefinite.
    HTAD: ω_F is positive semidefinite and dominated by the factor times ω_std/2.
    """
    id = f"volume.profile.{profile.kind.value}.r{profile.r:g}.R{profile.R:g}"
    s = _profile_grid(profile, grid)
    levi, std = profile.levi_matrices(s)
    low, high = profile.junction_defects()
    detail: Dict[str, Any] = {"c": profile.c, "C": profile.C, "junction_c": low, "junction_C": high,
                              "grid": grid}
    if profile.kind == ProfileKind.HTD:
        detail.update(A=profile.A, B=profile.B)
        if not (profile.A < 0 and profile.B > 1):
            return CheckReport.failed(id, witness={"A": profile.A, "B": profile.B}, detail=detail)
        margins = _min_eigenvalue(profile.B * std - levi)
    else:
        dom = profile.domination(s)
        detail["domination_spread"] = float(np.max(dom) - np.min(dom))
        margins = np.minimum(_min_eigenvalue(levi), _min_eigenvalue(dom[:, None, None] * std / 2.0 - levi))
    if low > junction_tol or high > junction_tol:
        return CheckReport.failed(id, witness={"junction_c": low, "junction_C": high}, detail=detail)
    worst = int(np.argmin(margins))
    violation = max(0.0, -float(margins[worst]))
    if violation > tol:
        return CheckReport.failed(id, witness={"s": float(s[worst]), "min_eigenvalue": float(margins[worst])},
                                  lhs=violation, rhs=tol, detail=detail)
    return CheckReport.compare(id, violation, tol, "<=", detail=detail)


# ----------------------------------------------------------------------------
# Current identity
# ----------------------------------------------------------------------------

def _std_potential_diagonal(z, w):
    """F0 = f0(log ψ) with f0(s) = -2 log(e^{-s} - 1)."""
    psi = abs((w - z) / (1 - mpmath.conj(z) * w)) ** 2
    return 2 * mpmath.log(psi) - 2 * mpmath.log(1 - psi)


def levi_form(potential: Callable, z: complex, w: complex, dps: int = LEVI_DPS) -> np.ndarray:
    """Complex Hessian ∂_j ∂̄_k of potential(z, w) by numerical differentiation."""
    with mpmath.workdps(dps):
        def real_form(x1, y1, x2, y2):
            return potential(mpmath.mpc(x1, y1), mpmath.mpc(x2, y2))

        point = (z.real, z.imag, w.real, w.imag)

        def partial(a: int, b: int) -> complex:
            orders = [0, 0, 0, 0]
            orders[a] += 1
            orders[b] += 1
            return mpmath.diff(real_form, point, tuple(orders))

        H = np.zeros((2, 2), dtype=complex)
        for j in range(2):
            for k in range(2):
                xx = partial(2 * j, 2 * k)
                yy = partial(2 * j + 1, 2 * k + 1)
                xy = partial(2 * j, 2 * k + 1)
                yx = partial(2 * j + 1, 2 * k)
                H[j, k] = complex(0.25 * (xx + yy), 0.25 * (xy - yx))
    return H


def std_levi(z: complex, w: complex) -> np.ndarray:
    return np.diag([2.0 / (1.0 - abs(z) ** 2) ** 2, 2.0 / (1.0 - abs(w) ** 2) ** 2]).astype(complex)


def diagonal_atom_mass(x: complex = 0j, radius: float = 0.05, eps: Optional[float] = None) -> float:
    """Mass of ω_{F0} minus ω_std on a transverse disk through (x, x).

    F0 is mollified as f0(log(ψ + ε²)); the disk is {(x, w) : |w'| < radius}
    in the coordinate w' recentred at x. The mass is π ∫ (F'' ρ + F') dρ for the
    radial profile F, and the product-metric area is 4π ρ²/(1 - ρ²).
    """
    eps = radius / 20.0 if eps is None else eps
    centre = mpmath.mpc(x)

    def profile(rho):
        w = (rho + centre) / (1 + mpmath.conj(centre) * rho)
        psi = abs((w - centre) / (1 - mpmath.conj(centre) * w)) ** 2 + eps * eps
        return 2 * mpmath.log(psi) - 2 * mpmath.log(1 - psi)

    def laplacian_weight(rho: float) -> float:
        with mpmath.workdps(LEVI_DPS):
            return float(mpmath.diff(profile, rho, 2) * rho + mpmath.diff(profile, rho, 1))

    mass, _ = integrate.quad(laplacian_weight, 0.0, radius, points=[eps, 3 * eps], limit=200)
    mass *= math.pi
    std_area = 4.0 * math.pi * radius ** 2 / (1.0 - radius ** 2)
    return mass - std_area


def current_identity_check(points: Sequence[Point2] = ((0j, 0.5 + 0j),), diagonal_point: complex = 0j,
                           radius: float = 0.05, tol: float = 1e-6, atom_tol: float = 0.01) -> CheckReport:
    """ω_{F0} = ω_std away from the diagonal, plus an atom of mass 4π across it."""
    deviations = []
    for z, w in points:
        if abs(complex(z) - complex(w)) < 1e-6:
            raise DomainError(f"pointwise comparison at the diagonal point {z!r}")
        H = levi_form(_std_potential_diagonal, complex(z), complex(w))
        target = std_levi(complex(z), complex(w))
        deviations.append(float(np.max(np.abs(H - target))) / max(1.0, float(np.max(np.abs(target)))))
    worst = max(deviations, default=0.0)
    atoms = {f"{rho:g}": diagonal_atom_mass(diagonal_point, rho) for rho in (radius, radius / 2.0)}
    atom_errors = {k: abs(v - 4.0 * math.pi) / (4.0 * math.pi) for k, v in atoms.items()}
    detail = {"pointwise": deviations, "atoms": atoms}
    if max(atom_errors.values()) > atom_tol:
        return CheckReport.failed("volume.current_identity", witness={"atoms": atoms}, lhs=worst,
                                  rhs=tol, detail=detail)
    return CheckReport.compare("volume.current_identity", worst, tol, "<=", detail=detail)


# ----------------------------------------------------------------------------
# Lelong numbers
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class LelongEstimate:
    value: float
    error: float
    ratios: Tuple[float, ...]


def lelong_estimate(potential: Callable[[complex], float], x: complex,
                    exponents: Sequence[int] = (3, 4, 5, 6, 7, 8), directions: int = 8,
                    stability: float = 0.05) -> LelongEstimate:
    """liminf of potential(z)/log|z - x|, extrapolated to the centre.

    The ratio is taken as the minimum over `directions` rays at radii 10^-k.
    For nu log|z - x| plus a smooth term it is linear in t = -1/log(radius) up
    to O(radius), so the linear intercept is the estimate; a quadratic fit
    serves as the stability check.

    Raises:
        DomainError: the ratios do not settle like a logarithmic singularity
    """
    x = complex(x)
    ratios = []
    for k in exponents:
        rho = 10.0 ** (-k)
        values = [potential(x + rho * cmath.exp(2j * math.pi * j / directions)) / math.log(rho)
                  for j in range(directions)]
        ratios.append(min(values))
    if not all(math.isfinite(q) for q in ratios):
        raise DomainError(f"potential is not finite near {x!r}")
    t = np.array([-1.0 / math.log(10.0 ** (-k)) for k in exponents])
    q = np.array(ratios)
    linear = np.polyfit(t, q, 1)[-1]
    quadratic = np.polyfit(t, q, 2)[-1] if len(t) > 3 else linear
    error = abs(quadratic - linear)
    if error > stability * max(1.0, abs(linear)):
        raise DomainError(f"no logarithmic singularity at {x!r}: ratios {ratios}")
    return LelongEstimate(float(linear), float(error), tuple(ratios))
