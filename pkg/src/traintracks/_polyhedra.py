"""Exact polyhedral cone computations.

All cones here live inside the nonnegative orthant of a labeled coordinate
space (weights are nonnegative), so every cone is pointed and has a unique
set of extreme rays.  Rays are kept in canonical form: primitive integral,
lexicographically sorted.

The two workhorses are a double description sweep (`rays_for_constraints`)
and a phase-1 simplex over Fractions (`lp_feasible`) used for membership,
extremality and relative-interior tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from ._ratlin import dot, in_span, nullspace, primitive, rank

IntVec = tuple[int, ...]


# ---------------------------------------------------------------------------
# double description


def _combine(rp, rn, ap, an):
    # ap = a.rp > 0, an = a.rn < 0; the combination lies on {a.x = 0}
    return tuple(ap * y - an * x for x, y in zip(rp, rn))


def _dd_sweep(n: int, eqs, ineqs):
    """Extreme rays of {x >= 0, E x = 0, A x >= 0} with tight-set tracking."""
    rays = []
    for i in range(n):
        e = tuple(Fraction(1) if j == i else Fraction(0) for j in range(n))
        tight = frozenset(j for j in range(n) if j != i)
        rays.append((e, tight))

    def adjacent(t1, t2, others):
        t = t1 & t2
        return not any(t <= t3 for t3 in others)

    def step(a, keep_positive, new_index):
        nonlocal rays
        pos, zero, neg = [], [], []
        for r, t in rays:
            s = dot(a, r)
            if s > 0:
                pos.append((r, t))
            elif s == 0:
                zero.append((r, t if new_index is None else t | {new_index}))
            else:
                neg.append((r, t))
        new = list(zero)
        if keep_positive:
            new.extend(pos)
        if pos and neg:
            all_tights = [t for _, t in rays]
            for rp, tp in pos:
                for rn, tn in neg:
                    others = [t for t in all_tights if t is not tp and t is not tn]
                    if adjacent(tp, tn, others):
                        comb = _combine(rp, rn, dot(a, rp), dot(a, rn))
                        t = tp & tn
                        if new_index is not None:
                            t = t | {new_index}
                        new.append((comb, t))
        rays = new

    for e in eqs:
        step(tuple(map(Fraction, e)), keep_positive=False, new_index=None)
    idx = n
    for a in ineqs:
        step(tuple(map(Fraction, a)), keep_positive=True, new_index=idx)
        idx += 1
    return [r for r, _ in rays]


def canonical_rays(raw) -> tuple[IntVec, ...]:
    out = {primitive(r) for r in raw}
    out.discard(tuple(0 for _ in next(iter(out))) if out else None)
    return tuple(sorted(r for r in out if any(r)))


def rays_for_constraints(n: int, eqs=(), ineqs=()) -> tuple[IntVec, ...]:
    """Canonical extreme rays of {x >= 0, eqs . x = 0, ineqs . x >= 0}."""
    if n == 0:
        return ()
    return canonical_rays(_dd_sweep(n, eqs, ineqs))


# ---------------------------------------------------------------------------
# exact LP (phase-1 simplex, Bland's rule)


def lp_feasible(rows, rhs, n: int):
    """A nonnegative solution of A x = b, or None.

    rows: list of coefficient vectors of length n; rhs: values.  Exact.
    """
    m = len(rows)
    if m == 0:
        return tuple(Fraction(0) for _ in range(n))
    T = []
    for r, b in zip(rows, rhs):
        r = [Fraction(x) for x in r]
        b = Fraction(b)
        if b < 0:
            r = [-x for x in r]
            b = -b
        T.append(r + [b])
    ncols = n + m
    basis = []
    for i in range(m):
        row = T[i][:n] + [Fraction(0)] * m + [T[i][n]]
        row[n + i] = Fraction(1)
        T[i] = row
        basis.append(n + i)
    # objective: minimize sum of artificials (their reduced costs start at 0)
    obj = [Fraction(0)] * (ncols + 1)
    for i in range(m):
        obj = [o - t for o, t in zip(obj, T[i])]
    for i in range(m):
        obj[n + i] = Fraction(0)

    while True:
        enter = None
        for j in range(ncols):
            if obj[j] < 0:
                enter = j
                break
        if enter is None:
            break
        leave = None
        best = None
        for i in range(m):
            if T[i][enter] > 0:
                ratio = T[i][-1] / T[i][enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave is None:
            break  # unbounded in phase 1 cannot happen, defensive
        piv = T[leave][enter]
        T[leave] = [x / piv for x in T[leave]]
        for i in range(m):
            if i != leave and T[i][enter] != 0:
                f = T[i][enter]
                T[i] = [a - f * b for a, b in zip(T[i], T[leave])]
        f = obj[enter]
        if f != 0:
            obj = [a - f * b for a, b in zip(obj, T[leave])]
        basis[leave] = enter

    if -obj[-1] != 0:
        return None
    x = [Fraction(0)] * n
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = T[i][-1]
    return tuple(x)


def in_cone(vec, rays) -> bool:
    """Is vec a nonnegative combination of the given rays?"""
    rays = list(rays)
    if not rays:
        return all(Fraction(x) == 0 for x in vec)
    n = len(vec)
    cols = [[Fraction(r[i]) for r in rays] for i in range(n)]
    return lp_feasible(cols, list(vec), len(rays)) is not None


def positive_combination_exists(rays_a, rays_b) -> bool:
    """Do strictly positive combinations of rays_a and rays_b meet?

    Tests relint(cone(rays_a)) & relint(cone(rays_b)) != empty; rays must be
    the extreme rays of the respective cones.
    """
    ra, rb = list(rays_a), list(rays_b)
    if not ra or not rb:
        return False
    n = len(ra[0])
    ka, kb = len(ra), len(rb)
    # lam >= 1, mu >= 1, sum lam_i ra_i = sum mu_j rb_j; substitute lam = 1+l
    rows = []
    rhs = []
    for i in range(n):
        row = [Fraction(ra[s][i]) for s in range(ka)] + [Fraction(-rb[s][i]) for s in range(kb)]
        rows.append(row)
        rhs.append(-sum(Fraction(ra[s][i]) for s in range(ka)) + sum(Fraction(rb[s][i]) for s in range(kb)))
    return lp_feasible(rows, rhs, ka + kb) is not None


def filter_extreme(raw) -> tuple[IntVec, ...]:
    """Reduce a generating set to the extreme rays of its conic hull."""
    rays = list(canonical_rays(raw)) if raw else []
    out = []
    for i, r in enumerate(rays):
        others = rays[:i] + rays[i + 1:]
        if not in_cone(r, others):
            out.append(r)
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# cones


@dataclass(frozen=True)
class Cone:
    """Pointed rational cone, canonical V-representation over labeled axes."""

    labels: tuple[str, ...]
    rays: tuple[IntVec, ...]

    def __post_init__(self):
        for r in self.rays:
            if len(r) != len(self.labels):
                raise ValueError("ray length does not match label count")

    @property
    def dim(self) -> int:
        if not self.rays:
            return 0
        return rank([list(r) for r in self.rays])

    def is_apex(self) -> bool:
        return not self.rays

    def contains(self, vec) -> bool:
        return in_cone([Fraction(x) for x in vec], self.rays)

    def contains_cone(self, other: "Cone") -> bool:
        self._check_ambient(other)
        return all(self.contains(r) for r in other.rays)

    def __eq__(self, other):
        if not isinstance(other, Cone):
            return NotImplemented
        return self.labels == other.labels and self.rays == other.rays

    def __hash__(self):
        return hash((self.labels, self.rays))

    def _check_ambient(self, other: "Cone"):
        if self.labels != other.labels:
            raise ValueError("cones live in different ambient weight spaces")

    def intersection(self, other: "Cone") -> "Cone":
        self._check_ambient(other)
        if self.is_apex() or other.is_apex():
            return Cone(self.labels, ())
        ra, rb = self.rays, other.rays
        ka, kb = len(ra), len(rb)
        n = len(self.labels)
        eqs = []
        for i in range(n):
            eqs.append([Fraction(ra[s][i]) for s in range(ka)] + [Fraction(-rb[s][i]) for s in range(kb)])
        prod = rays_for_constraints(ka + kb, eqs=eqs)
        imgs = []
        for lam in prod:
            v = [sum(Fraction(lam[s]) * ra[s][i] for s in range(ka)) for i in range(n)]
            if any(v):
                imgs.append(tuple(v))
        return Cone(self.labels, filter_extreme(imgs))

    def hull_union(self, other: "Cone") -> "Cone":
        self._check_ambient(other)
        return Cone(self.labels, filter_extreme(self.rays + other.rays))

    def relint_meets(self, other: "Cone") -> bool:
        self._check_ambient(other)
        return positive_combination_exists(self.rays, other.rays)

    def relint_contains(self, vec) -> bool:
        """Is vec in the relative interior of this cone?"""
        if self.is_apex():
            return all(Fraction(x) == 0 for x in vec)
        point = Cone(self.labels, (primitive(vec),)) if any(Fraction(x) for x in vec) else None
        if point is None:
            return False
        return positive_combination_exists(self.rays, point.rays)

    def span_contains(self, vec) -> bool:
        return in_span([Fraction(x) for x in vec], [list(map(Fraction, r)) for r in self.rays])

    def span_equations(self) -> list[tuple[Fraction, ...]]:
        """Rows vanishing exactly on the linear span of the cone."""
        n = len(self.labels)
        if not self.rays:
            return [tuple(Fraction(1) if j == i else Fraction(0) for j in range(n)) for i in range(n)]
        return nullspace([list(map(Fraction, r)) for r in self.rays], n)


def cone_from_constraints(labels, eqs=(), ineqs=()) -> Cone:
    rays = rays_for_constraints(len(labels), eqs=eqs, ineqs=ineqs)
    return Cone(tuple(labels), rays)
