"""
Hyperbolic plane primitives: the upper half-plane and Poincaré disk models,
SL2(R) isometries, distances, balls and the max product metric.

Conventions:
    - Cayley map z -> (z - i)/(z + i), so i -> 0, 0 -> -1, infinity -> 1.
    - An Isometry always stores a real determinant-1 matrix acting on the
      half-plane; a DISK-tagged isometry applies the Cayley conjugate of it.
"""
import cmath
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, PrecisionError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12


class Model(str, Enum):
    HALFPLANE = "HALFPLANE"
    DISK = "DISK"


class IsometryKind(str, Enum):
    IDENTITY = "IDENTITY"
    ELLIPTIC = "ELLIPTIC"
    PARABOLIC = "PARABOLIC"
    HYPERBOLIC = "HYPERBOLIC"


@dataclass(frozen=True)
class ModelPoint:
    """A point of the hyperbolic plane tagged with its model."""

    model: Model
    coord: complex

    def __post_init__(self):
        z = complex(self.coord)
        object.__setattr__(self, "coord", z)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise DomainError(f"non-finite coordinate {z!r}")
        if self.model == Model.HALFPLANE and not z.imag > 0:
            raise DomainError(f"half-plane point needs Im > 0, got {z!r}")
        if self.model == Model.DISK and not abs(z) < 1:
            raise DomainError(f"disk point needs |z| < 1, got {z!r}")

    @classmethod
    def halfplane(cls, z: complex) -> "ModelPoint":
        return cls(Model.HALFPLANE, z)

    @classmethod
    def disk(cls, w: complex) -> "ModelPoint":
        return cls(Model.DISK, w)

    def to(self, model: Model) -> "ModelPoint":
        """Return this point expressed in `model`."""
        if model == self.model:
            return self
        return cayley(self)


@dataclass(frozen=True)
class EuclideanDisk:
    center: complex
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise DomainError(f"negative euclidean radius {self.radius}")

    def contains(self, w: complex, tol: float = 0.0) -> bool:
        return abs(complex(w) - self.center) <= self.radius + tol


def cayley(a: ModelPoint) -> ModelPoint:
    """Map a point to the other model.

    Args:
        a: a valid point in either model

    Returns:
        The same hyperbolic point in the other model.
    """
    if a.model == Model.HALFPLANE:
        z = a.coord
        w = (z - 1j) / (z + 1j)
        if abs(w) >= 1:
            raise PrecisionError(f"Cayley image of {z!r} rounded onto the unit circle")
        return ModelPoint(Model.DISK, w)
    w = a.coord
    z = 1j * (1 + w) / (1 - w)
    if not z.imag > 0:
        raise PrecisionError(f"inverse Cayley image of {w!r} rounded onto the real axis")
    return ModelPoint(Model.HALFPLANE, z)


def _one_minus_abs2(w: complex) -> float:
    r = abs(w)
    return (1.0 - r) * (1.0 + r)


def dist(a: ModelPoint, b: ModelPoint) -> float:
    """Hyperbolic distance between two points (curvature -1).

    Mixed models are converted to the model of `a` first. Both forms use
    sinh(d/2) so that nearby and far points keep full relative precision.
    """
    b = b.to(a.model)
    z, w = a.coord, b.coord
    if a.model == Model.HALFPLANE:
        return 2.0 * math.asinh(abs(z - w) / (2.0 * math.sqrt(z.imag * w.imag)))
    return 2.0 * math.asinh(abs(z - w) / math.sqrt(_one_minus_abs2(z) * _one_minus_abs2(w)))


def tanh2_half_dist(z: complex, w: complex) -> float:
    """tanh^2(d(z, w)/2) in the disk, the pseudo-hyperbolic form."""
    return abs((w - z) / (1 - z.conjugate() * w)) ** 2


@dataclass(frozen=True)
class Isometry:
    """Orientation-preserving isometry stored as a real SL2 matrix (a, b, c, d)."""

    matrix: Tuple[float, float, float, float]
    model: Model = Model.HALFPLANE

    def __post_init__(self):
        a, b, c, d = (float(x) for x in self.matrix)
        det = a * d - b * c
        if not det > 0:
            raise DomainError(f"isometry matrix needs positive determinant, got {det}")
        s = 1.0 / math.sqrt(det)
        a, b, c, d = a * s, b * s, c * s, d * s
        first = next((x for x in (a, b, c, d) if x != 0.0), 1.0)
        if first < 0:
            a, b, c, d = -a, -b, -c, -d
        object.__setattr__(self, "matrix", (a, b, c, d))

    @classmethod
    def identity(cls, model: Model = Model.HALFPLANE) -> "Isometry":
        return cls((1.0, 0.0, 0.0, 1.0), model)

    @property
    def trace(self) -> float:
        return self.matrix[0] + self.matrix[3]

    @property
    def det(self) -> float:
        a, b, c, d = self.matrix
        return a * d - b * c

    def disk_coefficients(self) -> Tuple[complex, complex]:
        """(alpha, beta) with w -> (alpha w + beta)/(conj(beta) w + conj(alpha))."""
        a, b, c, d = self.matrix
        return complex(a + d, b - c) / 2, complex(a - d, -(b + c)) / 2

    def compose(self, other: "Isometry") -> "Isometry":
        """self after other."""
        if other.model != self.model:
            raise DomainError("cannot compose isometries tagged with different models")
        a, b, c, d = self.matrix
        e, f, g, h = other.matrix
        return Isometry((a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h), self.model)

    def inverse(self) -> "Isometry":
        a, b, c, d = self.matrix
        return Isometry((d, -b, -c, a), self.model)

    def power(self, k: int) -> "Isometry":
        result = Isometry.identity(self.model)
        base = self if k >= 0 else self.inverse()
        for _ in range(abs(k)):
            result = result.compose(base)
        return result

    def with_model(self, model: Model) -> "Isometry":
        return Isometry(self.matrix, model)

    def is_close(self, other: "Isometry", tol: float = 1e-9) -> bool:
        """Equality in PSL2(R): matrices agree up to sign."""
        m, n = np.array(self.matrix), np.array(other.matrix)
        return bool(min(np.max(np.abs(m - n)), np.max(np.abs(m + n))) <= tol)

    def __call__(self, point: ModelPoint) -> ModelPoint:
        return apply(self, point)


def apply(g: Isometry, a: ModelPoint) -> ModelPoint:
    """Apply an isometry to a point of the same model.

    Args:
        g: isometry
        a: point tagged with g.model

    Returns:
        g.a in the same model.
    """
    if a.model != g.model:
        raise DomainError(f"isometry is {g.model.value} but point is {a.model.value}")
    if g.model == Model.HALFPLANE:
        p, q, r, s = g.matrix
        z = a.coord
        den = r * z + s
        if den == 0:
            raise PrecisionError(f"image of {z!r} is the point at infinity")
        image = (p * z + q) / den
        # Im(gz) = Im z / |cz + d|^2 for determinant 1
        im = z.imag / (abs(den) ** 2)
        if not (im > 0 and math.isfinite(image.real)):
            raise PrecisionError(f"image of {z!r} lies on the boundary numerically")
        return ModelPoint(Model.HALFPLANE, complex(image.real, im))
    alpha, beta = g.disk_coefficients()
    w = a.coord
    den = beta.conjugate() * w + alpha.conjugate()
    image = (alpha * w + beta) / den
    if not abs(image) < 1:
        raise PrecisionError(f"image of {w!r} lies on the boundary numerically")
    return ModelPoint(Model.DISK, image)


def isometry_compose(g: Isometry, h: Isometry) -> Isometry:
    return g.compose(h)


def isometry_inverse(g: Isometry) -> Isometry:
    return g.inverse()


def translation_length(g: Isometry, tol: float = DEFAULT_TOL) -> Tuple[float, IsometryKind]:
    """Translation length and type of g.

    Returns:
        (0, IDENTITY/ELLIPTIC/PARABOLIC) when |tr| <= 2, otherwise
        (2 arcosh(|tr|/2), HYPERBOLIC).
    """
    tr = abs(g.trace)
    if tr < 2 - tol:
        return 0.0, IsometryKind.ELLIPTIC
    if tr <= 2 + tol:
        if g.is_close(Isometry.identity(g.model), tol=1e-9):
            return 0.0, IsometryKind.IDENTITY
        return 0.0, IsometryKind.PARABOLIC
    return 2.0 * math.acosh(tr / 2.0), IsometryKind.HYPERBOLIC


def rotation_about(center: ModelPoint, angle: float) -> Isometry:
    """Counterclockwise elliptic rotation by `angle` about `center`."""
    z0 = center.to(Model.HALFPLANE).coord
    x, y = z0.real, z0.imag
    sy = math.sqrt(y)
    # A sends z0 to i; k(angle/2) rotates the disk about i by `angle`
    to_i = Isometry((1 / sy, -x / sy, 0.0, sy))
    half = angle / 2.0
    k = Isometry((math.cos(half), math.sin(half), -math.sin(half), math.cos(half)))
    rot = to_i.inverse().compose(k).compose(to_i)
    return rot.with_model(center.model)


def hyperbolic_ball_as_euclidean(center: ModelPoint, r: float) -> EuclideanDisk:
    """The disk-model ball {z : dist(center, z) < r} as a euclidean disk."""
    if r < 0:
        raise DomainError(f"negative radius {r}")
    c = center.to(Model.DISK).coord
    t = math.tanh(r / 2.0)
    denom = 1.0 - t * t * abs(c) ** 2
    return EuclideanDisk(c * (1.0 - t * t) / denom, t * _one_minus_abs2(c) / denom)


@dataclass(frozen=True)
class HyperbolicBall:
    center: ModelPoint
    radius: float

    @property
    def euclidean(self) -> EuclideanDisk:
        return hyperbolic_ball_as_euclidean(self.center, self.radius)

    def contains(self, point: ModelPoint, tol: float = 0.0) -> bool:
        return dist(self.center, point) <= self.radius + tol


def _recentre(z: complex, w: complex) -> complex:
    """Disk automorphism sending z to 0, applied to w."""
    return (w - z) / (1 - z.conjugate() * w)


def _uncentre(z: complex, v: complex) -> complex:
    return (v + z) / (1 + z.conjugate() * v)


def geodesic_midpoint(a: ModelPoint, b: ModelPoint) -> ModelPoint:
    za, zb = a.to(Model.DISK).coord, b.to(Model.DISK).coord
    u = _recentre(za, zb)
    if u == 0:
        return a
    d = dist(a, b)
    v = u / abs(u) * math.tanh(d / 4.0)
    return ModelPoint(Model.DISK, _uncentre(za, v)).to(a.model)


def ball_intersection_envelope(z: ModelPoint, z_prime: ModelPoint, D: float, R: float,
                               tol: float = 1e-9) -> HyperbolicBall:
    """Ball around the midpoint containing B(z, D+R) ∩ B(z', D+R).

    Args:
        z, z_prime: points at distance 2D
        D: half the separation
        R: excess radius

    Returns:
        HyperbolicBall at the geodesic midpoint with radius 2 artanh(sqrt(tanh(R/2))).
    """
    if R < 0 or D < 0:
        raise DomainError(f"envelope needs D, R >= 0, got D={D}, R={R}")
    separation = dist(z, z_prime)
    if abs(separation - 2 * D) > tol * max(1.0, separation):
        raise DomainError(f"dist(z, z') = {separation!r} is not 2D = {2 * D!r}")
    s = math.tanh(R / 2.0)
    return HyperbolicBall(geodesic_midpoint(z, z_prime), 2.0 * math.atanh(math.sqrt(s)))


def product_dist(xi: Sequence[ModelPoint], xi_prime: Sequence[ModelPoint]) -> float:
    """Max metric on finite products of the plane."""
    if len(xi) != len(xi_prime):
        raise DomainError(f"product points of different shapes: {len(xi)} vs {len(xi_prime)}")
    return max((dist(a, b) for a, b in zip(xi, xi_prime)), default=0.0)


def hyperbolic_ball_area(r: float) -> float:
    return 4.0 * math.pi * math.sinh(r / 2.0) ** 2


def hyperbolic_ball_area_quadrature(r: float) -> float:
    """Area of a radius-r ball by integrating circumference 2π sinh(ρ)."""
    value, _ = integrate.quad(lambda rho: 2.0 * math.pi * math.sinh(rho), 0.0, r)
    return value


def angle_at(vertex: ModelPoint, p: ModelPoint, q: ModelPoint) -> float:
    """Interior angle at `vertex` between the geodesics towards p and q."""
    v = vertex.to(Model.DISK).coord
    u1 = _recentre(v, p.to(Model.DISK).coord)
    u2 = _recentre(v, q.to(Model.DISK).coord)
    return abs(cmath.phase(u2 / u1))


def geodesic_triangle_area(a: ModelPoint, b: ModelPoint, c: ModelPoint) -> float:
    """Gauss-Bonnet area: pi minus the angle sum."""
    return math.pi - angle_at(a, b, c) - angle_at(b, c, a) - angle_at(c, a, b)


def geodesic_triangle_area_quadrature(a: ModelPoint, b: ModelPoint, c: ModelPoint) -> float:
    """Area of a geodesic triangle by polar quadrature around vertex a."""
    va = a.to(Model.DISK).coord
    ub = _recentre(va, b.to(Model.DISK).coord)
    uc = _recentre(va, c.to(Model.DISK).coord)
    phi_b = cmath.phase(ub)
    sweep = cmath.phase(uc / ub)

    def side(w: complex) -> float:
        # sign of w relative to the geodesic through ub and uc
        return (_recentre(ub, w) * _recentre(ub, uc).conjugate()).imag

    inside_sign = math.copysign(1.0, side(0j))

    def edge_radius(phi: float) -> float:
        ray = cmath.exp(1j * phi)
        hi = 1.0 - 1e-15
        if side(hi * ray) * inside_sign > 0:
            return hi
        return optimize.brentq(lambda rho: side(rho * ray) * inside_sign, 0.0, hi, xtol=1e-15)

    def integrand(t: float) -> float:
        rho = edge_radius(phi_b + t)
        return 2.0 * rho * rho / ((1.0 - rho) * (1.0 + rho))

    lo, hi = sorted((0.0, sweep))
    value, _ = integrate.quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return value
