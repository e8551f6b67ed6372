"""
Exact arithmetic in SL2(Z), Gamma(p) and PSL2(F_p), plus the small amount of
F_p linear algebra on 2x2 matrices needed by the repulsion checks.

Matrices over F_p are vectorized in reading order (m11, m12, m21, m22).
"""
import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import galois
import numpy as np
import sympy
from sympy.ntheory import sqrt_mod

from .errors import DomainError, RangeError, StructuralError

logger = logging.getLogger(__name__)

Vec4 = Tuple[int, int, int, int]
P1Point = Tuple[int, int]


@lru_cache(maxsize=None)
def check_prime(p: int) -> int:
    """Validate p as a prime > 3 and return it."""
    if not isinstance(p, (int, np.integer)) or p <= 3 or not sympy.isprime(int(p)):
        raise DomainError(f"p must be a prime > 3, got {p!r}")
    return int(p)


@lru_cache(maxsize=None)
def prime_field(p: int):
    return galois.GF(check_prime(p))


def is_square_mod(x: int, p: int) -> bool:
    x %= p
    return x != 0 and pow(x, (p - 1) // 2, p) == 1


def centered(x: int, p: int) -> int:
    """Representative of x mod p in (-p/2, p/2]."""
    r = x % p
    return r - p if r > p // 2 else r


# ----------------------------------------------------------------------------
# SL2(Z)
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class IntMat:
    """Integer 2x2 matrix of determinant exactly 1."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if self.a * self.d - self.b * self.c != 1:
            raise DomainError(f"IntMat needs determinant 1: {self.entries}")

    @classmethod
    def identity(cls) -> "IntMat":
        return cls(1, 0, 0, 1)

    @property
    def entries(self) -> Vec4:
        return (self.a, self.b, self.c, self.d)

    @property
    def trace(self) -> int:
        return self.a + self.d

    @property
    def height(self) -> int:
        return max(abs(x) for x in self.entries)

    def __matmul__(self, other: "IntMat") -> "IntMat":
        a, b, c, d = self.entries
        e, f, g, h = other.entries
        return IntMat(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)

    def inverse(self) -> "IntMat":
        return IntMat(self.d, -self.b, -self.c, self.a)

    def __neg__(self) -> "IntMat":
        return IntMat(-self.a, -self.b, -self.c, -self.d)

    def mod(self, p: int) -> "MatFp":
        return MatFp(p, self.entries)

    def proj(self, p: int) -> "ProjMatFp":
        return ProjMatFp.from_entries(p, self.entries)

    def act(self, z: complex) -> complex:
        return (self.a * z + self.b) / (self.c * z + self.d)


def height(M: IntMat) -> int:
    return M.height


def is_in_gamma_p(M: IntMat, p: int) -> bool:
    return all((x - y) % p == 0 for x, y in zip(M.entries, (1, 0, 0, 1)))


def enumerate_bounded_height(H: int) -> Iterator[IntMat]:
    """All of SL2(Z) with height <= H, lexicographic in (a, b, c, d).

    For a != 0 the congruence b*c = -1 (mod |a|) fixes c in one residue
    class, so the inner loop only visits admissible c.
    """
    if H < 1:
        raise RangeError(f"height bound must be >= 1, got {H}")
    for a in range(-H, H + 1):
        for b in range(-H, H + 1):
            if a == 0:
                if b not in (-1, 1):
                    continue
                c = -b
                for d in range(-H, H + 1):
                    yield IntMat(0, b, c, d)
                continue
            m = abs(a)
            if math.gcd(a, b) != 1:
                continue
            c0 = (-pow(b, -1, m)) % m if m > 1 else 0
            start = -H + ((c0 + H) % m)
            for c in range(start, H + 1, m):
                num = 1 + b * c
                if num % a:
                    continue
                d = num // a
                if abs(d) <= H:
                    yield IntMat(a, b, c, d)


def min_semisimple_trace(p: int, H: int) -> Tuple[int, IntMat]:
    """Minimal |trace| over non-identity, non-parabolic elements of Gamma(p).

    Ties are broken on the smallest (a, c).

    Args:
        p: prime > 3
        H: height bound, at least p^2

    Returns:
        (minimal |trace|, witness)
    """
    check_prime(p)
    if H < p * p:
        raise RangeError(f"height bound {H} is below p^2 = {p * p}")
    best: Optional[Tuple[int, int, int]] = None
    witness: Optional[IntMat] = None
    a_values = [a for a in range(-H, H + 1) if a % p == 1 and a != 0]
    c_values = [c for c in range(-H, H + 1, 1) if c % p == 0 and c != 0]
    for a in a_values:
        for c in c_values:
            for b in range(-(H // p) * p, H + 1, p):
                num = 1 + b * c
                if num % a:
                    continue
                d = num // a
                if abs(d) > H or d % p != 1:
                    continue
                tr = abs(a + d)
                if tr == 2:
                    continue
                key = (tr, a, c)
                if best is None or key < best:
                    best = key
                    witness = IntMat(a, b, c, d)
    if witness is None:
        raise RangeError(f"no semisimple element of Gamma({p}) with height <= {H}")
    logger.debug(f"[Arith] min |tr| on Gamma({p}) at H={H}: {best[0]} via {witness.entries}")
    return best[0], witness


def injectivity_radius_bound(p: int) -> Tuple[int, float, float]:
    """(minimal trace, shortest geodesic length, injectivity radius) for Y(p)."""
    tr, _ = min_semisimple_trace(p, p * p + p)
    length = 2.0 * math.acosh(tr / 2.0)
    return tr, length, length / 2.0


def bezout(x: int, y: int) -> Tuple[int, int, int]:
    """(g, s, t) with s*x + t*y = g = gcd(x, y) >= 0."""
    s0, s1, t0, t1 = 1, 0, 0, 1
    while y:
        q, r = divmod(x, y)
        x, y = y, r
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    if x < 0:
        x, s0, t0 = -x, -s0, -t0
    return x, s0, t0


# ----------------------------------------------------------------------------
# Matrices over F_p
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MatFp:
    p: int
    entries: Vec4

    def __post_init__(self):
        check_prime(self.p)
        object.__setattr__(self, "entries", tuple(int(x) % self.p for x in self.entries))

    @classmethod
    def identity(cls, p: int) -> "MatFp":
        return cls(p, (1, 0, 0, 1))

    @classmethod
    def scalar(cls, p: int, k: int) -> "MatFp":
        return cls(p, (k, 0, 0, k))

    @property
    def det(self) -> int:
        a, b, c, d = self.entries
        return (a * d - b * c) % self.p

    @property
    def trace(self) -> int:
        return (self.entries[0] + self.entries[3]) % self.p

    def is_scalar(self) -> bool:
        a, b, c, d = self.entries
        return b == 0 and c == 0 and a == d

    def is_zero(self) -> bool:
        return not any(self.entries)

    def __matmul__(self, other: "MatFp") -> "MatFp":
        a, b, c, d = self.entries
        e, f, g, h = other.entries
        return MatFp(self.p, (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h))

    def __add__(self, other: "MatFp") -> "MatFp":
        return MatFp(self.p, tuple(x + y for x, y in zip(self.entries, other.entries)))

    def __sub__(self, other: "MatFp") -> "MatFp":
        return MatFp(self.p, tuple(x - y for x, y in zip(self.entries, other.entries)))

    def scale(self, k: int) -> "MatFp":
        return MatFp(self.p, tuple(k * x for x in self.entries))

    def inverse(self) -> "MatFp":
        det = self.det
        if det == 0:
            raise DomainError(f"singular matrix {self.entries} mod {self.p}")
        inv = pow(det, -1, self.p)
        a, b, c, d = self.entries
        return MatFp(self.p, (d * inv, -b * inv, -c * inv, a * inv))

    def power(self, k: int) -> "MatFp":
        result = MatFp.identity(self.p)
        base = self if k >= 0 else self.inverse()
        for _ in range(abs(k)):
            result = result @ base
        return result

    def apply(self, v: Tuple[int, int]) -> Tuple[int, int]:
        a, b, c, d = self.entries
        return ((a * v[0] + b * v[1]) % self.p, (c * v[0] + d * v[1]) % self.p)


def proportional(x: MatFp, y: MatFp) -> bool:
    """True when x = k*y for a nonzero scalar k (both nonzero)."""
    if x.is_zero() or y.is_zero():
        return False
    ex, ey = x.entries, y.entries
    return all((ex[i] * ey[j] - ex[j] * ey[i]) % x.p == 0 for i in range(4) for j in range(i + 1, 4))


@dataclass(frozen=True)
class ProjMatFp:
    """Projective class of an invertible F_p matrix, first nonzero entry 1."""

    mat: MatFp

    def __post_init__(self):
        m = self.mat
        if m.det == 0:
            raise DomainError(f"projective class needs det != 0: {m.entries} mod {m.p}")
        lead = next(x for x in m.entries if x)
        if lead != 1:
            object.__setattr__(self, "mat", m.scale(pow(lead, -1, m.p)))

    @classmethod
    def from_entries(cls, p: int, entries: Sequence[int]) -> "ProjMatFp":
        return cls(MatFp(p, tuple(entries)))

    @classmethod
    def identity(cls, p: int) -> "ProjMatFp":
        return cls(MatFp.identity(p))

    @property
    def p(self) -> int:
        return self.mat.p

    @property
    def entries(self) -> Vec4:
        return self.mat.entries

    def __matmul__(self, other: "ProjMatFp") -> "ProjMatFp":
        return ProjMatFp(self.mat @ other.mat)

    def inverse(self) -> "ProjMatFp":
        return ProjMatFp(self.mat.inverse())

    def conj(self, other: "ProjMatFp") -> "ProjMatFp":
        """self * other * self^-1"""
        return self @ other @ self.inverse()

    def is_identity(self) -> bool:
        return self.mat.is_scalar()

    @property
    def in_psl(self) -> bool:
        return is_square_mod(self.mat.det, self.p)

    def order(self) -> int:
        g, k = self, 1
        while not g.is_identity():
            g = g @ self
            k += 1
        return k

    def sl2_representative(self) -> MatFp:
        """A determinant-1 matrix in this class (requires membership in PSL2)."""
        det = self.mat.det
        if not is_square_mod(det, self.p):
            raise DomainError(f"{self.entries} mod {self.p} is not in PSL2")
        lam = sqrt_mod(pow(det, -1, self.p), self.p)
        return self.mat.scale(lam)

    def __repr__(self) -> str:
        return f"ProjMatFp(p={self.p}, {list(self.entries)})"


def pm_vector(v: Tuple[int, int], p: int) -> Tuple[int, int]:
    """Canonical representative of {v, -v}: first nonzero entry in [1, (p-1)/2]."""
    x, y = v[0] % p, v[1] % p
    lead = x if x else y
    if lead > p // 2:
        x, y = (-x) % p, (-y) % p
    return x, y


def first_column_class(g: ProjMatFp) -> Tuple[int, int]:
    """First column of the SL2 representative of g, up to sign."""
    m = g.sl2_representative()
    return pm_vector((m.entries[0], m.entries[2]), g.p)


@lru_cache(maxsize=None)
def enumerate_psl2(p: int) -> Tuple[ProjMatFp, ...]:
    """Every element of PSL2(F_p) once, in canonical-entry order."""
    check_prime(p)
    out = []
    for entries in itertools.product(range(p), repeat=4):
        lead = next((x for x in entries if x), 0)
        if lead != 1:
            continue
        a, b, c, d = entries
        if is_square_mod(a * d - b * c, p):
            out.append(ProjMatFp(MatFp(p, entries)))
    expected = p * (p * p - 1) // 2
    if len(out) != expected:
        raise StructuralError(f"PSL2(F_{p}) enumeration gave {len(out)} elements, expected {expected}")
    return tuple(out)


def psl2_order(p: int) -> int:
    return p * (p * p - 1) // 2


# ----------------------------------------------------------------------------
# Subspaces of M2(F_p)
# ----------------------------------------------------------------------------

def _rref_rows(p: int, rows) -> Tuple[Vec4, ...]:
    if len(rows) == 0:
        return ()
    GF = prime_field(p)
    reduced = GF(np.asarray(rows, dtype=np.int64) % p).row_reduce()
    return tuple(tuple(int(x) for x in row) for row in reduced if np.any(row))


def _null_space_rows(p: int, rows, width: int = 4) -> List[Vec4]:
    if len(rows) == 0:
        return [tuple(int(i == j) for j in range(width)) for i in range(width)]
    GF = prime_field(p)
    ns = GF(np.asarray(rows, dtype=np.int64) % p).null_space()
    return [tuple(int(x) for x in row) for row in ns]


@dataclass(frozen=True)
class FpSubspace:
    """A subspace of M2(F_p), stored as its reduced row-echelon basis."""

    p: int
    basis: Tuple[Vec4, ...]

    @classmethod
    def span(cls, p: int, vectors: Sequence[Union[MatFp, Sequence[int]]]) -> "FpSubspace":
        rows = [v.entries if isinstance(v, MatFp) else tuple(v) for v in vectors]
        return cls(p, _rref_rows(p, rows))

    @classmethod
    def full(cls, p: int) -> "FpSubspace":
        return cls.span(p, [MatFp(p, (1, 0, 0, 0)), MatFp(p, (0, 1, 0, 0)),
                            MatFp(p, (0, 0, 1, 0)), MatFp(p, (0, 0, 0, 1))])

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrices(self) -> List[MatFp]:
        return [MatFp(self.p, v) for v in self.basis]

    def contains(self, m: MatFp) -> bool:
        return FpSubspace.span(self.p, list(self.basis) + [m.entries]).dim == self.dim

    def annihilator(self) -> List[Vec4]:
        return _null_space_rows(self.p, list(self.basis))

    def intersection(self, other: "FpSubspace") -> "FpSubspace":
        constraints = self.annihilator() + other.annihilator()
        return FpSubspace.span(self.p, _null_space_rows(self.p, constraints))

    def elements(self) -> Iterator[MatFp]:
        for coeffs in itertools.product(range(self.p), repeat=self.dim):
            total = [0, 0, 0, 0]
            for k, v in zip(coeffs, self.basis):
                for i in range(4):
                    total[i] += k * v[i]
            yield MatFp(self.p, tuple(total))


_UNIT_MATRICES = ((1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1))


def _solution_space(p: int, maps: Sequence[Callable[[MatFp], MatFp]]) -> FpSubspace:
    """Common kernel of linear maps M2(F_p) -> M2(F_p)."""
    rows: List[List[int]] = []
    for f in maps:
        images = [f(MatFp(p, e)).entries for e in _UNIT_MATRICES]
        # row i of the 4x4 block is coordinate i of f applied to each unit matrix
        rows.extend([[images[k][i] for k in range(4)] for i in range(4)])
    return FpSubspace.span(p, _null_space_rows(p, rows))


def centralizer(S: Sequence[MatFp], p: Optional[int] = None) -> FpSubspace:
    """{g in M2(F_p) : g s = s g for every s in S}."""
    if p is None:
        if not S:
            raise DomainError("centralizer of an empty set needs an explicit p")
        p = S[0].p
    return _solution_space(p, [lambda g, s=s: g @ s - s @ g for s in S])


class SubalgebraKind(str, Enum):
    SCALARS = "SCALARS"
    SPLIT_TORUS = "SPLIT_TORUS"
    NONSPLIT_TORUS = "NONSPLIT_TORUS"
    NILPOTENT_EXT = "NILPOTENT_EXT"
    OTHER = "OTHER"


def explain_subalgebra(T: FpSubspace) -> Tuple[SubalgebraKind, str]:
    """Classify a subspace of M2(F_p) and say why."""
    p = T.p
    if T.dim == 0:
        return SubalgebraKind.OTHER, "zero subspace"
    if not T.contains(MatFp.identity(p)):
        return SubalgebraKind.OTHER, "not unital: identity missing"
    mats = T.matrices()
    for x, y in itertools.product(mats, repeat=2):
        if not T.contains(x @ y):
            return SubalgebraKind.OTHER, f"not closed: {x.entries} * {y.entries} leaves the span"
    if T.dim == 1:
        return SubalgebraKind.SCALARS, "span of the identity"
    if T.dim > 2:
        return SubalgebraKind.OTHER, f"dimension {T.dim} subalgebra"
    n = next(m for m in mats if not m.is_scalar())
    half_trace = n.trace * pow(2, -1, p)
    n0 = n - MatFp.scalar(p, half_trace)
    square = (-n0.det) % p
    if square == 0:
        return SubalgebraKind.NILPOTENT_EXT, f"{n0.entries} squares to zero"
    if is_square_mod(square, p):
        return SubalgebraKind.SPLIT_TORUS, f"x^2 = {square} has roots mod {p}"
    return SubalgebraKind.NONSPLIT_TORUS, f"x^2 = {square} is irreducible mod {p}"


def classify_subalgebra(T: FpSubspace) -> SubalgebraKind:
    return explain_subalgebra(T)[0]


def t0(p: int) -> MatFp:
    """The order-4 rotation [[0, 1], [-1, 0]] mod p."""
    return MatFp(p, (0, 1, -1, 0))


def solve_commutator_system(t: MatFp, Mx: IntMat, My: IntMat, p: int) -> FpSubspace:
    """Solutions g of t g = g t and t (My^-1 g Mx) = (My^-1 g Mx) t over F_p."""
    if t.is_scalar():
        raise DomainError("commutator system needs a non-scalar t")
    X = Mx.mod(p)
    Y = My.inverse().mod(p)
    return _solution_space(p, [
        lambda g: t @ g - g @ t,
        lambda g: t @ (Y @ g @ X) - (Y @ g @ X) @ t,
    ])


def _minors_vanish(p: int, columns: Sequence[Vec4]) -> bool:
    m = sympy.Matrix([[col[i] for col in columns] for i in range(4)])
    for rows in itertools.combinations(range(4), 3):
        if m.extract(list(rows), [0, 1, 2]).det() % p:
            return False
    return True


def redundancy_test(t: MatFp, Mx: IntMat, My: IntMat, p: int) -> bool:
    """Whether My^-1 Mx and My^-1 t Mx both lie in span{1, t} mod p.

    Decided by the 3x3 minors of [vec 1, vec t, vec W] computed over Z.
    """
    if t.is_scalar():
        raise DomainError("redundancy test needs a non-scalar t")
    t_int = sympy.Matrix(2, 2, list(t.entries))
    X = sympy.Matrix(2, 2, list(Mx.entries))
    Y = sympy.Matrix(2, 2, list(My.inverse().entries))
    ident = (1, 0, 0, 1)
    vec_t = tuple(int(x) for x in t.entries)
    for w in (Y * X, Y * t_int * X):
        if not _minors_vanish(p, [ident, vec_t, tuple(int(x) for x in w)]):
            return False
    return True


# ----------------------------------------------------------------------------
# Integral lifts
# ----------------------------------------------------------------------------

def _rotation_coords(g: MatFp) -> Tuple[int, int]:
    a, b, c, d = g.entries
    if a != d or (b + c) % g.p:
        raise StructuralError(f"{g.entries} mod {g.p} is not in span{{1, t0}}")
    return a, b


def centered_lift(g: MatFp) -> Tuple[int, int, int]:
    """(a, b, a^2 + b^2) from the centered residues of g = a + b t0."""
    a, b = _rotation_coords(g)
    a, b = centered(a, g.p), centered(b, g.p)
    return a, b, a * a + b * b


def small_integral_lift(sol: Union[FpSubspace, MatFp]) -> Tuple[int, int, int]:
    """Smallest-degree integral representative a + b t0 of a line in span{1, t0}.

    Scans the nonzero scalings of the line and keeps the minimal a^2 + b^2 over
    centered residues; the sign is fixed so the first nonzero of (a, b) is positive.
    For span{2 + 3 t0} mod 11 this gives (3, -1, 10), from the scaling by 7; the
    literal residues (2, 3, 13) are what `centered_lift` returns.

    Returns:
        (a, b, m) with m = a^2 + b^2 = det(a + b t0)
    """
    if isinstance(sol, FpSubspace):
        if sol.dim != 1:
            raise StructuralError(f"integral lift needs a line, got dimension {sol.dim}")
        g = sol.matrices()[0]
    else:
        g = sol
    p = g.p
    a0, b0 = _rotation_coords(g)
    best: Optional[Tuple[int, int, int]] = None
    for lam in range(1, p):
        a, b = centered(lam * a0, p), centered(lam * b0, p)
        if (a, b) == (0, 0):
            continue
        if (a if a else b) < 0:
            a, b = -a, -b
        key = (a * a + b * b, a, b)
        if best is None or key < best:
            best = key
    m, a, b = best
    return a, b, m


def lift_to_sl2z(A: Union[MatFp, ProjMatFp]) -> IntMat:
    """A small SL2(Z) matrix reducing to A mod p (up to sign for projective input)."""
    if isinstance(A, ProjMatFp):
        A = A.sl2_representative()
    p = A.p
    if A.det != 1:
        raise DomainError(f"{A.entries} mod {p} does not have determinant 1")
    a, b, c, d = (centered(x, p) for x in A.entries)
    best_col = None
    for i, j in sorted(itertools.product(range(-3, 4), repeat=2), key=lambda ij: (max(abs(ij[0]), abs(ij[1])), ij)):
        a1, c1 = a + i * p, c + j * p
        if math.gcd(a1, c1) == 1:
            key = (max(abs(a1), abs(c1)), abs(a1) + abs(c1), a1, c1)
            if best_col is None or key < best_col[0]:
                best_col = (key, a1, c1)
    if best_col is None:
        raise StructuralError(f"no primitive first column for {A.entries} mod {p}")
    _, a1, c1 = best_col
    _, s, t = bezout(a1, -c1)
    # a1*s - c1*t = 1, so (b, d) = (t, s) + k (a1, c1)
    if a1 % p:
        k0 = ((b - t) * pow(a1, -1, p)) % p
    else:
        k0 = ((d - s) * pow(c1, -1, p)) % p
    norm = a1 * a1 + c1 * c1
    center = -(t * a1 + s * c1) / norm
    base = k0 + p * round((center - k0) / p)
    candidates = []
    for j in range(-2, 3):
        k = base + j * p
        M = IntMat(a1, t + k * a1, c1, s + k * c1)
        candidates.append((M.height, M.entries, M))
    return min(candidates)[2]


def hecke_normal_form(g: Vec4) -> Tuple[IntMat, IntMat, int]:
    """SL2(Z) matrices U, V with U g V = [[0, m], [-1, 0]] for primitive g.

    Args:
        g: integer matrix entries with det m > 0 and content 1

    Returns:
        (U, V, m)
    """
    a, b, c, d = g
    m = a * d - b * c
    if m <= 0:
        raise DomainError(f"Hecke normal form needs positive determinant, got {m}")
    if math.gcd(math.gcd(a, b), math.gcd(c, d)) != 1:
        raise StructuralError(f"{g} is not primitive")
    U, V = IntMat.identity(), IntMat.identity()
    cur = [a, b, c, d]

    def left(L: IntMat):
        nonlocal U, cur
        U = L @ U
        x, y, z, w = cur
        cur = [L.a * x + L.b * z, L.a * y + L.b * w, L.c * x + L.d * z, L.c * y + L.d * w]

    def right(R: IntMat):
        nonlocal V, cur
        V = V @ R
        x, y, z, w = cur
        cur = [x * R.a + y * R.c, x * R.b + y * R.d, z * R.a + w * R.c, z * R.b + w * R.d]

    for _ in range(64):
        x, _, z, _ = cur
        if z:
            gg, s, t = bezout(x, z)
            left(IntMat(s, t, -z // gg, x // gg))
        x, y, _, _ = cur
        if y:
            gg, s, t = bezout(x, y)
            right(IntMat(s, -y // gg, t, x // gg))
        x, y, z, w = cur
        if y == 0 and z == 0:
            if abs(x) == 1:
                break
            # gcd(x, w) = 1 by primitivity; fold w into the first row and repeat
            left(IntMat(1, 1, 0, 1))
    else:
        raise StructuralError(f"Hecke normal form did not converge for {g}")
    if cur[0] < 0:
        left(IntMat(-1, 0, 0, -1))
    left(IntMat(0, 1, -1, 0))
    if cur != [0, m, -1, 0]:
        raise StructuralError(f"Hecke normal form ended at {cur} for {g}")
    return U, V, m


def _fixed_vector(M: IntMat) -> Tuple[int, int]:
    a, b, c, d = M.entries
    u = (b, 1 - a) if (b, 1 - a) != (0, 0) else (1 - d, c)
    g = math.gcd(*u)
    u = (u[0] // g, u[1] // g)
    if (u[0] if u[0] else u[1]) < 0:
        u = (-u[0], -u[1])
    return u


def _basis_from_vector(u: Tuple[int, int]) -> IntMat:
    _, x, y = bezout(u[0], u[1])
    return IntMat(u[0], -y, u[1], x)


def unipotent_transporter(M1: IntMat, M2: IntMat, A: ProjMatFp) -> Optional[IntMat]:
    """B in SL2(Z) sending the fixed vector of M1 to that of M2.

    Returns None unless A conjugates <M1> onto <M2> mod p and A B^-1 then
    normalizes <M2> mod p.
    """
    for M in (M1, M2):
        if M.trace != 2 or M == IntMat.identity():
            raise DomainError(f"{M.entries} is not a nontrivial unipotent")
    p = A.p
    n1 = M1.mod(p) - MatFp.identity(p)
    n2 = M2.mod(p) - MatFp.identity(p)
    a_mat = A.mat
    if not proportional(a_mat @ n1 @ a_mat.inverse(), n2):
        logger.debug(f"[Arith] transporter hypothesis fails for A={A.entries}")
        return None
    u, v = _fixed_vector(M1), _fixed_vector(M2)
    B = _basis_from_vector(v) @ _basis_from_vector(u).inverse()
    ab = a_mat @ B.inverse().mod(p)
    if not proportional(ab @ n2 @ ab.inverse(), n2):
        return None
    return B


# ----------------------------------------------------------------------------
# Projective line over F_p
# ----------------------------------------------------------------------------

P1_INFINITY: P1Point = (1, 0)


def p1_normalize(v: Tuple[int, int], p: int) -> P1Point:
    x, y = v[0] % p, v[1] % p
    if y:
        return (x * pow(y, -1, p)) % p, 1
    if x == 0:
        raise DomainError("zero vector is not a point of P^1")
    return P1_INFINITY


def p1_points(p: int) -> List[P1Point]:
    return [(x, 1) for x in range(p)] + [P1_INFINITY]


def p1_action(g: ProjMatFp, x: P1Point) -> P1Point:
    return p1_normalize(g.mat.apply(x), g.p)


@dataclass(frozen=True)
class PinningResult:
    pinned: int
    mapping: Dict[P1Point, P1Point]
    element: Optional[ProjMatFp]
    consistent: bool


def _frame(p: int, pts: Sequence[P1Point]) -> MatFp:
    """Matrix sending (inf, 0, 1)-style frame (e1, e2, e1+e2) to pts."""
    (x1, y1), (x2, y2), (x3, y3) = pts
    det = (x1 * y2 - x2 * y1) % p
    if det == 0:
        raise DomainError("frame points are not distinct")
    inv = pow(det, -1, p)
    lam = ((x3 * y2 - x2 * y3) * inv) % p
    mu = ((x1 * y3 - x3 * y1) * inv) % p
    return MatFp(p, (lam * x1, mu * x2, lam * y1, mu * y2))


def double_coset_constraints(pairs: Sequence[Tuple[ProjMatFp, ProjMatFp]]) -> PinningResult:
    """Intersect the constraints g(gamma2 inf) = gamma1 inf over all pairs.

    Three or more distinct pinned points determine g; it is returned when it
    exists in PSL2 and satisfies every constraint.
    """
    if not pairs:
        return PinningResult(0, {}, None, True)
    p = pairs[0][0].p
    mapping: Dict[P1Point, P1Point] = {}
    consistent = True
    for gamma1, gamma2 in pairs:
        src = p1_action(gamma2, P1_INFINITY)
        dst = p1_action(gamma1, P1_INFINITY)
        if mapping.get(src, dst) != dst:
            consistent = False
        mapping.setdefault(src, dst)
    if len(set(mapping.values())) != len(mapping):
        consistent = False
    element = None
    if consistent and len(mapping) >= 3:
        sources = sorted(mapping)[:3]
        g = ProjMatFp(_frame(p, [mapping[s] for s in sources]) @ _frame(p, sources).inverse())
        if g.in_psl and all(p1_action(g, s) == t for s, t in mapping.items()):
            element = g
        else:
            consistent = False
    return PinningResult(len(mapping), dict(mapping), element, consistent)
