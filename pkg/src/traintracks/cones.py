"""Measure cones of train tracks.

V(t) is the polyhedral cone of nonnegative branch weights satisfying the
switch equations (weight of the large half equals the sum of the two small
halves at every switch).  Everything is exact: rays are primitive integral
vectors in canonical order, so cone equality is list comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from ._polyhedra import Cone, cone_from_constraints
from ._ratlin import rank
from .errors import InvariantViolation, PreconditionError
from .track import (
    TrackMap,
    TrainTrack,
    is_orientable,
    is_recurrent,
    maximal_recurrent_subtrack,
    recurrent_branches,
    subtrack,
)


@dataclass(frozen=True)
class WeightVector:
    """Exact nonnegative rational weights satisfying the switch equations."""

    track: TrainTrack
    weights: tuple[tuple[str, Fraction], ...]

    @staticmethod
    def make(track: TrainTrack, mapping) -> "WeightVector":
        w = {b: Fraction(mapping.get(b, 0)) for b in track.branches}
        wv = WeightVector(track, tuple(sorted(w.items())))
        wv.check()
        return wv

    def check(self):
        w = self.as_dict()
        for b, x in w.items():
            if x < 0:
                raise PreconditionError(f"negative weight on {b}")
        for sw in self.track.switches:
            lhs = w[sw.large[0]]
            rhs = w[sw.small_left[0]] + w[sw.small_right[0]]
            if lhs != rhs:
                raise PreconditionError(
                    f"switch equation fails at {sw.id}: {lhs} != {rhs}")

    def as_dict(self) -> dict[str, Fraction]:
        return dict(self.weights)

    def vector(self) -> tuple[Fraction, ...]:
        return tuple(x for _, x in self.weights)

    def __getitem__(self, b: str) -> Fraction:
        return self.as_dict()[b]

    def is_integral(self) -> bool:
        return all(x.denominator == 1 for _, x in self.weights)

    def total(self) -> Fraction:
        return sum((x for _, x in self.weights), Fraction(0))


@dataclass(frozen=True)
class MeasureCone:
    """The cone V(t): canonical extreme rays over the track's branch axes."""

    track: TrainTrack
    cone: Cone

    @property
    def labels(self):
        return self.cone.labels

    @property
    def rays(self):
        return self.cone.rays

    @property
    def dimension(self) -> int:
        return self.cone.dim

    def ray_weightvectors(self) -> tuple[WeightVector, ...]:
        return tuple(WeightVector.make(self.track, dict(zip(self.labels, r))) for r in self.rays)

    def sum_of_rays(self) -> dict[str, Fraction]:
        out = {b: Fraction(0) for b in self.labels}
        for r in self.rays:
            for b, x in zip(self.labels, r):
                out[b] += x
        return out


def switch_equations(t: TrainTrack) -> list[list[Fraction]]:
    """Rows over sorted branches: large weight minus the two small weights."""
    labels = t.branches
    idx = {b: i for i, b in enumerate(labels)}
    rows = []
    for sw in t.switches:
        row = [Fraction(0)] * len(labels)
        row[idx[sw.large[0]]] += 1
        row[idx[sw.small_left[0]]] -= 1
        row[idx[sw.small_right[0]]] -= 1
        rows.append(row)
    return rows


@lru_cache(maxsize=4096)
def _extreme_rays_cached(t: TrainTrack) -> Cone:
    return cone_from_constraints(t.branches, eqs=switch_equations(t))


def extreme_rays(t: TrainTrack) -> MeasureCone:
    """Complete extreme-ray description of V(t) by double description."""
    t.check_structure()
    return MeasureCone(t, _extreme_rays_cached(t))


def recurrence_agrees(t: TrainTrack) -> bool:
    """Digraph recurrence and the extreme-ray criterion must coincide."""
    by_rays = {b for b, x in extreme_rays(t).sum_of_rays().items() if x > 0}
    by_cycles = set(recurrent_branches(t))
    if by_rays != by_cycles:
        raise InvariantViolation(
            f"recurrence criteria disagree: rays {sorted(by_rays)} vs cycles {sorted(by_cycles)}")
    return True


def cone_dimension(t: TrainTrack) -> int:
    """Dimension of V(t); refuses non-recurrent input.

    For a connected recurrent track without circles this equals |b|/3,
    plus one when the track is orientable; disconnected tracks sum their
    component dimensions (block structure of the switch equations).
    """
    if not is_recurrent(t):
        raise PreconditionError("cone_dimension requires a recurrent track")
    dim = len(t.branches) - rank(switch_equations(t))
    if t.is_connected() and not t.circles and t.branches:
        expected = len(t.branches) // 3 + (1 if is_orientable(t)[0] else 0)
        if dim != expected:
            raise InvariantViolation(
                f"dimension count fails: dim {dim}, |b|/3(+1) gives {expected}")
    ray_dim = extreme_rays(t).dimension
    if ray_dim != dim:
        raise InvariantViolation(f"ray span {ray_dim} != linear dimension {dim}")
    return dim


def vertex_cycles(t: TrainTrack) -> tuple[WeightVector, ...]:
    """Extreme rays as carried curves; every entry is an integer <= 2."""
    if not is_recurrent(t):
        raise PreconditionError("vertex cycles require a recurrent track")
    mc = extreme_rays(t)
    for r in mc.rays:
        if any(x > 2 for x in r):
            raise InvariantViolation(f"extreme ray {r} has an entry above 2")
    return mc.ray_weightvectors()


def face_subtrack(t: TrainTrack, zero: set[str]):
    """Maximal recurrent subtrack supporting the face {w : w|zero = 0}.

    Returns (SubtrackResult of the composite surgery, MeasureCone of the
    face inside V(t)'s coordinates).
    """
    res = subtrack(t, set(zero))
    rec = maximal_recurrent_subtrack(res.track)
    composed = TrackMap(rec.track, t, res.tmap.compose(rec.tmap).branch_image)
    face = cone_image(extreme_rays(rec.track), composed)
    zero_idx = [i for i, b in enumerate(t.branches) if b in zero]
    for r in face.rays:
        if any(r[i] for i in zero_idx):
            raise InvariantViolation("face cone is not supported off the zero set")
    rec = rec.__class__(rec.track, composed, res.removed | rec.removed,
                        res.pruned | rec.pruned, res.illegal_turns + rec.illegal_turns)
    return rec, face


def cone_image(mc: MeasureCone, tmap: TrackMap) -> Cone:
    """Push a cone on tmap.src forward into tmap.dst's weight space."""
    if tmap.src.branches != mc.track.branches:
        raise PreconditionError("cone does not live on the map's source track")
    labels = tmap.dst.branches
    rays = []
    for r in mc.rays:
        rays.append(tmap.push_ray(r, mc.labels, labels))
    from ._polyhedra import filter_extreme
    return Cone(labels, filter_extreme(rays))


def cone_contains(c: Cone, w) -> bool:
    vec = w.vector() if isinstance(w, WeightVector) else tuple(Fraction(x) for x in w)
    return c.contains(vec)


def cones_equal(c1: Cone, c2: Cone) -> bool:
    """Exact equality via canonical ray lists."""
    return c1.labels == c2.labels and c1.rays == c2.rays


def cone_intersection(c1: Cone, c2: Cone) -> Cone:
    return c1.intersection(c2)


def combinatorial_length(t: TrainTrack, a: WeightVector) -> Fraction:
    """Sum of the weights of a carried measure."""
    if a.track.branches != t.branches:
        raise PreconditionError("weight vector lives on a different track")
    return a.total()


def measure_cone_of(t: TrainTrack) -> Cone:
    return extreme_rays(t).cone
