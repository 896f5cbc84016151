"""The split / subtrack move calculus.

Moves are single surgeries: a left, right or central split at a large
branch, or passing to a codimension-one subtrack.  A MoveSequence chains
single moves away from a start track, keeping, for every prefix track, the
carrying map back to the start and the active / stationary token sets.

Chirality convention.  For a large branch b running from switch u (end 0)
to switch v (end 1), the four corner half-branches are

    NW = u.small_right   NE = v.small_left
    SW = u.small_left    SE = v.small_right

and the diagonal weight of a carried measure is d(w) = w[NW] - w[NE].
The right split carries measures with d >= 0 (diagonal joins NW to SE),
the left split carries d <= 0, the central split carries d = 0.  The
convention is arbitrary; every consequence is certified against cone
identities in the tests, not against pictures.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

from ._polyhedra import Cone, filter_extreme
from .cones import (
    MeasureCone,
    WeightVector,
    cone_image,
    cones_equal,
    extreme_rays,
    face_subtrack,
    measure_cone_of,
)
from .errors import InvariantViolation, PreconditionError, StructureError
from .track import (
    LARGE,
    SMALL_LEFT,
    SMALL_RIGHT,
    Dart,
    Piece,
    SubtrackResult,
    Switch,
    TrackMap,
    TrainTrack,
    _State,
    identity_map,
    is_recurrent,
    isomorphic,
    isomorphism,
    maximal_recurrent_subtrack,
    subtrack,
)

Token = tuple  # ('b', branch) or ('h', branch, end)

LEFT, RIGHT, CENTRAL = "L", "R", "C"


# ---------------------------------------------------------------------------
# corner geometry


def split_corners(t: TrainTrack, b: str):
    """(u, v, NW, SW, NE, SE) at a large branch; raises unless b is large."""
    if b not in t.branches or b in t.circles:
        raise PreconditionError(f"{b} is not a branch suitable for splitting")
    at = t.attachments()
    (u_id, slot0) = at[(b, 0)]
    (v_id, slot1) = at[(b, 1)]
    if slot0 != LARGE or slot1 != LARGE:
        raise PreconditionError(f"branch {b} is not large")
    u = t.switch_by_id(u_id)
    v = t.switch_by_id(v_id)
    return u, v, u.small_right, u.small_left, v.small_left, v.small_right


def diagonal_weight(t: TrainTrack, b: str, w: WeightVector) -> Fraction:
    _, _, nw, _, ne, _ = split_corners(t, b)
    d = w.as_dict()
    return d[nw[0]] - d[ne[0]]


# ---------------------------------------------------------------------------
# move records


@dataclass(frozen=True)
class Move:
    kind: str  # "L" | "R" | "C" | "SUB"
    branch: str | None = None
    removed: frozenset[str] = frozenset()

    def word(self) -> str:
        if self.kind == "SUB":
            return "SUB {%s}" % ",".join(sorted(self.removed))
        return f"{self.kind} {self.branch}"


@dataclass(frozen=True)
class MoveStep:
    move: Move
    track: TrainTrack
    tmap: TrackMap  # result -> previous
    rel: dict  # stationary relation: result token -> previous token
    active_prev: frozenset  # per-move active tokens on the previous track


def _branch_halo(t: TrainTrack, bs) -> frozenset:
    """Branches plus every half-branch attached at their switches."""
    at = t.attachments()
    tokens = {("b", b) for b in bs}
    sw_ids = set()
    for b in bs:
        for e in (0, 1):
            if (b, e) in at:
                sw_ids.add(at[(b, e)][0])
    for sw in t.switches:
        if sw.id in sw_ids:
            for _, (c, e) in sw.slots():
                if c not in bs:
                    tokens.add(("h", c, e))
    return frozenset(tokens)


def _split_active_prev(t: TrainTrack, b: str) -> frozenset:
    u, v, nw, sw_, ne, se = split_corners(t, b)
    toks = {("b", b)}
    for c, e in (nw, sw_, ne, se):
        toks.add(("h", c, e))
    return frozenset(toks)


def complement_tokens(t: TrainTrack, X: frozenset) -> frozenset:
    """The complementary branch set of a collection of (half-)branch tokens."""
    out = set()
    for b in t.branches:
        bt = ("b", b)
        h0, h1 = ("h", b, 0), ("h", b, 1)
        if bt not in X and h0 not in X and h1 not in X:
            out.add(bt)
        for h in (h0, h1):
            if h not in X and bt not in X:
                out.add(h)
    return frozenset(out)


def all_tokens(t: TrainTrack) -> frozenset:
    out = set()
    for b in t.branches:
        out.add(("b", b))
        out.add(("h", b, 0))
        out.add(("h", b, 1))
    return frozenset(out)


# ---------------------------------------------------------------------------
# single-move surgeries


def _identity_rel(t_new: TrainTrack, skip=()):
    rel = {}
    for b in t_new.branches:
        if b in skip:
            continue
        rel[("b", b)] = ("b", b)
        rel[("h", b, 0)] = ("h", b, 0)
        rel[("h", b, 1)] = ("h", b, 1)
    return rel


def split_lr(t: TrainTrack, b: str, direction: str) -> MoveStep:
    """Left or right split at a large branch; branch ids persist, the
    diagonal inherits the id of the split branch."""
    if direction not in (LEFT, RIGHT):
        raise PreconditionError("direction must be L or R")
    u, v, nw, sw_, ne, se = split_corners(t, b)
    if direction == RIGHT:
        new_u = Switch(u.id, large=nw, small_left=ne, small_right=(b, 0))
        new_v = Switch(v.id, large=se, small_left=sw_, small_right=(b, 1))
        moved = {ne: (v.id, u.id), sw_: (u.id, v.id)}
    else:
        new_u = Switch(u.id, large=sw_, small_left=(b, 0), small_right=se)
        new_v = Switch(v.id, large=ne, small_left=(b, 1), small_right=nw)
        moved = {se: (v.id, u.id), nw: (u.id, v.id)}
    switches = tuple(swi for swi in t.switches if swi.id not in (u.id, v.id)) + (new_u, new_v)
    nt = TrainTrack(t.surface, t.branches, t.circles, switches, (), t.transversely_recurrent)

    image: dict[str, list[Dart]] = {c: [(c, 1)] for c in t.branches if c != b}
    image[b] = [(b, 1)]  # the diagonal runs over the split branch
    for (c, e), (old_sw, new_sw) in moved.items():
        # the reattached end now reaches across the split branch
        if e == 0:
            cross = (b, 1) if (new_sw, old_sw) == (u.id, v.id) else (b, -1)
            image[c] = [cross] + image[c]
        else:
            cross = (b, 1) if (old_sw, new_sw) == (u.id, v.id) else (b, -1)
            image[c] = image[c] + [cross]

    # regions are preserved by a one-sided split: transfer pieces dartwise
    old_regions = t.regions()
    new_regions = nt.regions()
    assign = {}
    for ni, (walk, _) in enumerate(new_regions):
        src = None
        for dart in walk:
            if dart[0] == b:
                continue
            for oi, (ow, _) in enumerate(old_regions):
                if dart in ow:
                    src = oi
                    break
            if src is not None:
                break
        if src is None:
            raise InvariantViolation("split produced a region bounded only by the diagonal")
        assign[ni] = src
    if sorted(assign.values()) != list(range(len(old_regions))):
        raise InvariantViolation("one-sided split failed to preserve the region list")
    inv = {oi: ni for ni, oi in assign.items()}
    pieces = tuple(Piece(tuple(sorted(inv[r] for r in p.regions)), p.punctures, p.genus)
                   for p in t.pieces)
    nt = replace(nt, pieces=pieces)

    tmap = TrackMap(nt, t, {c: tuple(p) for c, p in image.items()})
    rel = _identity_rel(nt, skip=(b,))
    return MoveStep(Move(direction, b), nt, tmap, rel, _split_active_prev(t, b))


def split_central(t: TrainTrack, b: str) -> MoveStep:
    """Central split: remove the large branch, dissolve its two switches,
    and join the corner strands pairwise (NW-NE and SW-SE)."""
    u, v, nw, sw_, ne, se = split_corners(t, b)
    st = _State(t)
    old_walks = st._walks

    def cusp_region(s: Switch):
        c, e = s.small_left
        dart = (c, -1) if e == 0 else (c, 1)  # dart arriving at the switch
        return st.region_of_dart(old_walks, dart)

    ra, rb = cusp_region(u), cusp_region(v)
    pa, pb = st.region_piece[ra], st.region_piece[rb]
    merges = []
    if pa != pb:
        merges.append((pa, pb))
    elif ra != rb:
        st.piece_data[pa]["genus"] += 1
    # ra == rb: the walk splits in two, topology unchanged

    del st.slots[u.id]
    del st.slots[v.id]
    st.branches.discard(b)
    st.image.pop(b)

    relabel: dict[Dart, Dart] = {}
    halves = {"nw": nw, "sw": sw_, "ne": ne, "se": se}

    def join(k1: str, k2: str):
        h1, h2 = halves[k1], halves[k2]
        (x, ex), (y, ey) = h1, h2
        if x == y:
            # the two strands close up into a circle crossing b once per join
            st.circles.add(x)
            cross = (b, 1) if ex == 1 or ey == 0 else (b, -1)
            st.image[x] = tuple(st.image[x]) + (cross,)
            return
        nid = min(x, y)
        ix = st.image[x] if ex == 1 else tuple((bb, -d) for bb, d in reversed(st.image[x]))
        iy = st.image[y] if ey == 0 else tuple((bb, -d) for bb, d in reversed(st.image[y]))
        # the joined strand crosses the removed branch between its halves
        cross = (b, 1) if k1 in ("nw", "sw") else (b, -1)
        dx = 1 if ex == 1 else -1
        dy = 1 if ey == 0 else -1
        for dd, nd in (((x, dx), (nid, 1)), ((x, -dx), (nid, -1)),
                       ((y, dy), (nid, 1)), ((y, -dy), (nid, -1))):
            relabel[dd] = nd
        at = st.attach()
        farx, fary = (x, 1 - ex), (y, 1 - ey)
        sx, sy = at.get(farx), at.get(fary)
        st.branches.discard(x)
        st.branches.discard(y)
        st.branches.add(nid)
        st.image.pop(x, None)
        st.image.pop(y, None)
        st.image[nid] = tuple(ix) + (cross,) + tuple(iy)
        if sx is not None:
            st.slots[sx[0]][sx[1]] = (nid, 0)
        if sy is not None:
            st.slots[sy[0]][sy[1]] = (nid, 1)
        # keep the corner table coherent for the second join
        for k, (bb, e) in halves.items():
            if (bb, e) == farx:
                halves[k] = (nid, 0)
            elif (bb, e) == fary:
                halves[k] = (nid, 1)

    top_names = (nw[0], ne[0])
    bot_names = (sw_[0], se[0])
    join("nw", "ne")
    join("sw", "se")
    st._reassociate(old_walks, merges=merges, relabel=relabel)
    nt, image = st.freeze()

    tmap = TrackMap(nt, t, image)
    rel = {}
    for c in nt.branches:
        if c in top_names or c in bot_names or c not in t.branches:
            continue
        rel[("b", c)] = ("b", c)
        rel[("h", c, 0)] = ("h", c, 0)
        rel[("h", c, 1)] = ("h", c, 1)
    # end halves of merged strands identify with the far halves of the
    # constituent branches
    for c, path in image.items():
        if c in rel or c in t.circles:
            continue
        if c in nt.circles:
            continue
        first_b, first_d = path[0]
        last_b, last_d = path[-1]
        if first_b in t.branches and first_b != b:
            rel[("h", c, 0)] = ("h", first_b, 0 if first_d > 0 else 1)
        if last_b in t.branches and last_b != b:
            rel[("h", c, 1)] = ("h", last_b, 1 if last_d > 0 else 0)
    return MoveStep(Move(CENTRAL, b), nt, tmap, rel, _split_active_prev(t, b))


def subtrack_move(t: TrainTrack, removed: frozenset[str]) -> MoveStep:
    """Pass to the subtrack deleting the given small branches."""
    for r in removed:
        kind = t.branch_kind(r)
        if kind not in ("small", "circle"):
            raise PreconditionError(f"subtrack moves remove small branches, {r} is {kind}")
    res = subtrack(t, set(removed))
    gone = res.removed | res.pruned
    active = _branch_halo(t, gone)
    rel = {}
    for c, path in res.tmap.branch_image.items():
        touched = [bb for bb, _ in path]
        if len(touched) == 1 and touched[0] == c and c in t.branches:
            rel[("b", c)] = ("b", c)
            rel[("h", c, 0)] = ("h", c, 0)
            rel[("h", c, 1)] = ("h", c, 1)
        else:
            if c in res.track.circles:
                continue
            fb, fd = path[0]
            lb, ld = path[-1]
            rel[("h", c, 0)] = ("h", fb, 0 if fd > 0 else 1)
            rel[("h", c, 1)] = ("h", lb, 1 if ld > 0 else 0)
    return MoveStep(Move("SUB", removed=frozenset(removed)), res.track, res.tmap, rel, active)


def apply_move(t: TrainTrack, m: Move) -> MoveStep:
    if m.kind in (LEFT, RIGHT):
        return split_lr(t, m.branch, m.kind)
    if m.kind == CENTRAL:
        return split_central(t, m.branch)
    if m.kind == "SUB":
        return subtrack_move(t, m.removed)
    raise PreconditionError(f"unknown move kind {m.kind}")


# ---------------------------------------------------------------------------
# the three candidate splits and the recurrence resolution


@dataclass(frozen=True)
class SplitOutcome:
    left: MoveStep
    right: MoveStep
    central: MoveStep
    left_recurrent: bool
    right_recurrent: bool
    central_recurrent: bool
    resolution: str  # "S1" | "S2" | "S3"


def apply_split(t: TrainTrack, b: str) -> SplitOutcome:
    """Build all three splits at a large branch and resolve recurrence.

    Recurrence obeys a strict trichotomy on recurrent input: either all
    three outcomes are recurrent (S1, a genuine subdivision) or exactly one
    is (S2 for a one-sided split, S3 for the central one).
    """
    left = split_lr(t, b, LEFT)
    right = split_lr(t, b, RIGHT)
    central = split_central(t, b)
    lr = is_recurrent(left.track)
    rr = is_recurrent(right.track)
    cr = is_recurrent(central.track)
    flags = (lr, rr, cr)
    if all(flags):
        res = "S1"
    elif flags == (True, False, False) or flags == (False, True, False):
        res = "S2"
    elif flags == (False, False, True):
        res = "S3"
    else:
        if is_recurrent(t):
            raise InvariantViolation(
                f"split recurrence pattern {flags} violates the all-or-exactly-one rule")
        res = "S2" if (lr or rr) else "S3"
    return SplitOutcome(left, right, central, lr, rr, cr, res)


def transport_weights(step: MoveStep, w: WeightVector) -> WeightVector:
    """Carry a measure on the pre-move track onto the post-move track."""
    prev = step.tmap.dst
    if w.track.branches != prev.branches:
        raise PreconditionError("weights live on the wrong track")
    d = w.as_dict()
    m = step.move
    if m.kind in (LEFT, RIGHT):
        _, _, nw, _, ne, _ = split_corners(prev, m.branch)
        delta = d[nw[0]] - d[ne[0]]
        if m.kind == RIGHT and delta < 0:
            raise PreconditionError("measure is not carried by the right split")
        if m.kind == LEFT and delta > 0:
            raise PreconditionError("measure is not carried by the left split")
        out = {c: d[c] for c in prev.branches if c != m.branch}
        out[m.branch] = abs(delta)
        return WeightVector.make(step.track, out)
    # central splits and subtrack moves: every covered branch carries the
    # common weight of its constituents
    out = {}
    for c, path in step.tmap.branch_image.items():
        vals = {d[bb] for bb, _ in path if bb != m.branch}
        if m.kind == CENTRAL:
            vals = {d[bb] for bb, _ in path if bb != m.branch}
        if len(vals) != 1:
            raise PreconditionError("measure is not carried by the move result")
        out[c] = vals.pop()
    return WeightVector.make(step.track, out)


def split_toward(t: TrainTrack, w: WeightVector, b: str) -> tuple[Move, MoveStep, WeightVector]:
    """The unique split at b carrying w; the trichotomy on the diagonal
    weight is total."""
    delta = diagonal_weight(t, b, w)
    if delta > 0:
        step = split_lr(t, b, RIGHT)
    elif delta < 0:
        step = split_lr(t, b, LEFT)
    else:
        step = split_central(t, b)
    return step.move, step, transport_weights(step, w)


# ---------------------------------------------------------------------------
# move sequences


@dataclass
class MoveSequence:
    start: TrainTrack
    steps: list[MoveStep] = field(default_factory=list)

    @property
    def final(self) -> TrainTrack:
        return self.steps[-1].track if self.steps else self.start

    def tracks(self) -> list[TrainTrack]:
        return [self.start] + [s.track for s in self.steps]

    def __len__(self):
        return len(self.steps)

    def extend(self, step: MoveStep) -> "MoveSequence":
        if step.tmap.dst.branches != self.final.branches:
            raise PreconditionError("step does not chain onto the sequence")
        return MoveSequence(self.start, self.steps + [step])

    def apply(self, move: Move) -> "MoveSequence":
        return self.extend(apply_move(self.final, move))

    def carrying_map(self, upto: int | None = None) -> TrackMap:
        """Composite map final -> start (or prefix track `upto` -> start)."""
        steps = self.steps if upto is None else self.steps[:upto]
        m = identity_map(self.start)
        for s in steps:
            m = m.compose(s.tmap)
        return m

    def word(self) -> str:
        return " ; ".join(s.move.word() for s in self.steps)

    # -- active/stationary bookkeeping --

    def stationary_at(self, j: int) -> frozenset:
        """Sequence-stationary tokens at prefix track j (0 = start)."""
        down = [all_tokens(self.start)]
        for s in self.steps:
            prev_station = complement_tokens(s.tmap.dst, s.active_prev)
            ok_prev = down[-1] & prev_station
            nxt = frozenset(x for x, y in s.rel.items() if y in ok_prev)
            down.append(nxt)
        up = list(down)
        for i in range(len(self.steps), 0, -1):
            s = self.steps[i - 1]
            up[i - 1] = frozenset(s.rel[x] for x in up[i] if x in s.rel) & down[i - 1]
        return up[j]

    def active_at(self, j: int) -> frozenset:
        return complement_tokens(self.tracks()[j], self.stationary_at(j))

    def active_branches_at(self, j: int) -> frozenset:
        return frozenset(b for kind, *rest in self.active_at(j) if kind == "b" for b in [rest[0]])


def empty_sequence(t: TrainTrack) -> MoveSequence:
    return MoveSequence(t, [])


def sequence_from_moves(t: TrainTrack, moves) -> MoveSequence:
    seq = empty_sequence(t)
    for m in moves:
        seq = seq.apply(m)
    return seq


# -- move word format --------------------------------------------------------


def parse_move_word(text: str) -> list[Move]:
    moves = []
    for part in [p.strip() for p in text.split(";") if p.strip()]:
        if part.startswith("SUB"):
            inner = part[3:].strip()
            if not (inner.startswith("{") and inner.endswith("}")):
                raise StructureError(f"bad subtrack move literal: {part!r}")
            names = [x.strip() for x in inner[1:-1].split(",") if x.strip()]
            moves.append(Move("SUB", removed=frozenset(names)))
        else:
            bits = part.split()
            if len(bits) != 2 or bits[0] not in (LEFT, RIGHT, CENTRAL):
                raise StructureError(f"bad move literal: {part!r}")
            moves.append(Move(bits[0], bits[1]))
    return moves


def emit_move_word(moves) -> str:
    return " ; ".join(m.word() for m in moves)


# ---------------------------------------------------------------------------
# full splitting sequences


@dataclass
class FullSplitResult:
    seq: MoveSequence
    weights: WeightVector
    full: bool
    fullness_ledger: list[frozenset[str]]
    exhausted: bool


def full_splitting_sequence(t: TrainTrack, w: WeightVector, budget: int = 200,
                            stop_at_unit_weights: bool = True) -> FullSplitResult:
    """Split toward a carried measure, cycling through large branches.

    Fullness: every large branch of every prefix must eventually be active;
    the driver picks the large branch longest overdue, so the ledger
    certifies fullness on the prefix it covers.  Integral measures stop
    once every weight is at most one.
    """
    seq = empty_sequence(t)
    cur = w
    last_active: dict[str, int] = {}
    ledger = []
    for n in range(budget):
        track = seq.final
        large = [b for b in track.large_branches()]
        if not large:
            return FullSplitResult(seq, cur, True, ledger, False)
        if stop_at_unit_weights and cur.is_integral() and all(x <= 1 for _, x in cur.weights):
            return FullSplitResult(seq, cur, True, ledger, False)
        pick = min(large, key=lambda b: (last_active.get(b, -1), b))
        _, step, cur = split_toward(track, cur, pick)
        seq = seq.extend(step)
        last_active[pick] = n
        ledger.append(frozenset([pick]))
    done = stop_at_unit_weights and cur.is_integral() and all(x <= 1 for _, x in cur.weights)
    return FullSplitResult(seq, cur, done, ledger, not done)


# ---------------------------------------------------------------------------
# image cones of sequences


def final_cone_image(seq: MoveSequence) -> Cone:
    """V(final) pushed into the start track's weight coordinates."""
    return cone_image(extreme_rays(seq.final), seq.carrying_map())


def carrying_matrix(seq: MoveSequence) -> dict[str, dict[str, int]]:
    """Nonnegative integral matrix: final-track weights to start-track weights."""
    return seq.carrying_map().matrix()


# ---------------------------------------------------------------------------
# preimages of cones through carrying maps


def preimage_cone(tmap: TrackMap, target: Cone) -> Cone:
    """{y in V(src) : M y in target}, as a cone in src coordinates."""
    src = tmap.src
    if target.labels != tmap.dst.branches:
        raise PreconditionError("target cone lives in the wrong coordinates")
    from .cones import switch_equations

    labels = src.branches
    n = len(labels)
    k = len(target.rays)
    M = tmap.matrix()
    eqs = []
    for row in switch_equations(src):
        eqs.append(list(row) + [Fraction(0)] * k)
    for i, db in enumerate(tmap.dst.branches):
        row = [Fraction(M[db].get(sb, 0)) for sb in labels]
        row += [Fraction(-target.rays[j][i]) for j in range(k)]
        eqs.append(row)
    from ._polyhedra import rays_for_constraints

    prod = rays_for_constraints(n + k, eqs=eqs)
    rays = []
    for r in prod:
        y = r[:n]
        if any(y):
            rays.append(y)
    return Cone(labels, filter_extreme(rays))


def zero_branch_set(c: Cone) -> frozenset[str]:
    """Branches on which every ray of the cone vanishes."""
    out = set()
    for i, b in enumerate(c.labels):
        if all(r[i] == 0 for r in c.rays):
            out.add(b)
    return frozenset(out)


# ---------------------------------------------------------------------------
# graded subtrack chains


def graded_subtrack_chain(t: TrainTrack, face: Cone) -> MoveSequence:
    """Codimension-one subtrack moves from t down to the face's subtrack.

    `face` is a face of V(t) in t's coordinates.  Faces of a polyhedral
    cone form a graded lattice, so a chain of single codimension drops
    always exists; each move removes one (rarely two) small branches.
    """
    if face.labels != t.branches:
        raise PreconditionError("face must be given in the track's coordinates")
    seq = empty_sequence(t)
    fuel = 4 * len(t.branches) + 8
    while fuel:
        fuel -= 1
        cur = seq.final
        img = final_cone_image(seq)
        if cones_equal(img, Cone(img.labels, filter_extreme(face.rays))):
            return seq
        cur_face = preimage_cone(seq.carrying_map(), face)
        dead = zero_branch_set(cur_face)
        dim_cur = extreme_rays(cur).dimension
        candidates = sorted(b for b in dead if cur.branch_kind(b) in ("small", "circle"))
        picked = None
        for group in ([(b,) for b in candidates] +
                      [(a, b) for i, a in enumerate(candidates) for b in candidates[i + 1:]]):
            try:
                step = subtrack_move(cur, frozenset(group))
            except PreconditionError:
                continue
            sub_img = cone_image(extreme_rays(step.track),
                                 seq.carrying_map().compose(step.tmap))
            if sub_img.dim == dim_cur - 1 and all(sub_img.contains(r) for r in face.rays):
                picked = step
                break
        if picked is None:
            raise InvariantViolation("no codimension-one subtrack move toward the face")
        seq = seq.extend(picked)
    raise InvariantViolation("graded subtrack chain did not terminate")


# ---------------------------------------------------------------------------
# replay helpers: sequences are rebuilt from move words


def transport_moves(moves, branch_map: dict[str, str]):
    out = []
    for m in moves:
        if m.kind == "SUB":
            out.append(Move("SUB", removed=frozenset(branch_map.get(b, b) for b in m.removed)))
        else:
            out.append(Move(m.kind, branch_map.get(m.branch, m.branch)))
    return out


def moves_of(seq: MoveSequence):
    return [s.move for s in seq.steps]


def _iso_branch_map(t1: TrainTrack, t2: TrainTrack) -> dict[str, str]:
    iso = isomorphism(t1, t2)
    if iso is None:
        raise InvariantViolation("expected isomorphic tracks")
    return {b: img for b, (img, _) in iso.items()}


# ---------------------------------------------------------------------------
# commuting and front-loading


def _move_tokens_ok(seq_prefix_active: frozenset, move_active: frozenset) -> bool:
    return not (seq_prefix_active & move_active)


def commute(s_inner: MoveSequence, s_outer: MoveSequence):
    """Swap an inner sequence past an outer one.

    s_outer runs from tau to mid, s_inner from mid onward; requires the
    inner active tokens at mid to be stationary for the outer sequence.
    Returns (front, back): front applies the inner moves at tau, back the
    outer moves after them; counts are preserved and the final tracks are
    isomorphic.
    """
    mid = s_outer.final
    if s_inner.start.branches != mid.branches:
        raise PreconditionError("sequences do not share the middle track")
    inner_active = s_inner.active_at(0)
    outer_station = s_outer.stationary_at(len(s_outer))
    if not inner_active <= outer_station:
        raise PreconditionError("inner active tokens are not outer-stationary")
    tau = s_outer.start
    front = sequence_from_moves(tau, moves_of(s_inner))
    back = sequence_from_moves(front.final, moves_of(s_outer))
    if not isomorphic(back.final, s_inner.final):
        raise InvariantViolation("commuting moves changed the final track")
    if len(front) != len(s_inner) or len(back) != len(s_outer):
        raise InvariantViolation("commuting moves changed a move count")
    if front.active_at(0) != inner_active:
        raise InvariantViolation("commuting moves changed the active locus")
    return front, back


def front_load(seq: MoveSequence, b: str) -> MoveSequence:
    """Rewrite so the first move is a split or central split at b.

    b must be large in the start track and active for the sequence.  A
    subtrack move that consumes b exchanges into a split followed by the
    subtrack move; the activating split then commutes to the front.
    """
    if ("b", b) not in seq.active_at(0):
        raise PreconditionError(f"branch {b} is stationary throughout the sequence")
    if b not in seq.start.large_branches():
        raise PreconditionError(f"branch {b} is not large in the start track")
    moves = moves_of(seq)
    start = seq.start
    fuel = 8 * (len(moves) + 2) ** 2 + 16
    while fuel:
        fuel -= 1
        cur = sequence_from_moves(start, moves)
        # trace b's copy forward until a move consumes it
        name = b
        j = None
        for idx, step in enumerate(cur.steps):
            inv = {v: k for k, v in step.rel.items()}
            tok = ("b", name)
            if tok in step.active_prev or tok not in inv:
                j = idx
                break
            name = inv[tok][1]
        if j is None:
            raise InvariantViolation("active branch never consumed by a move")
        mj = cur.steps[j].move
        base_j = cur.tracks()[j]
        if mj.kind in (LEFT, RIGHT, CENTRAL) and mj.branch == name:
            if j == 0:
                if not isomorphic(cur.final, seq.final):
                    raise InvariantViolation("front-loading changed the final track")
                # the tail after the front move is at most the original count
                if len(cur) - 1 > len(seq):
                    raise InvariantViolation("front-loading lengthened the tail")
                return cur
            # bubble the split one step toward the front
            prev_step = cur.steps[j - 1]
            split_active_mid = cur.steps[j].active_prev
            rel_prev = prev_step.rel
            mapped = set()
            ok = True
            for tok in split_active_mid:
                if tok not in rel_prev:
                    ok = False
                    break
                mapped.add(rel_prev[tok])
            if not ok or (mapped & prev_step.active_prev):
                raise InvariantViolation("activating split does not commute past the prefix")
            base_prev = cur.tracks()[j - 1]
            swapped = sequence_from_moves(base_prev, [cur.steps[j].move, prev_step.move])
            if not isomorphic(swapped.final, cur.steps[j].track):
                raise InvariantViolation("adjacent swap changed the local result")
            rename = _iso_branch_map(cur.steps[j].track, swapped.final)
            tail = transport_moves([s.move for s in cur.steps[j + 1:]], rename)
            moves = [s.move for s in cur.steps[: j - 1]] + moves_of(swapped) + tail
            continue
        if mj.kind == "SUB":
            # exchange: split the large branch first, then remove the small
            done = False
            for direction in (LEFT, RIGHT):
                try:
                    probe = sequence_from_moves(base_j, [Move(direction, name), mj])
                except (PreconditionError, StructureError):
                    continue
                if isomorphic(probe.final, cur.steps[j].track):
                    rename = _iso_branch_map(cur.steps[j].track, probe.final)
                    tail = transport_moves([s.move for s in cur.steps[j + 1:]], rename)
                    moves = [s.move for s in cur.steps[:j]] + moves_of(probe) + tail
                    done = True
                    break
            if done:
                continue
            raise InvariantViolation("subtrack move does not exchange into split-then-subtrack")
        raise InvariantViolation(f"unexpected activating move {mj}")
    raise InvariantViolation("front-loading did not terminate")


def disjoint_merge(s1: MoveSequence, s2: MoveSequence):
    """Realize two token-disjoint sequences from one track simultaneously.

    Returns (merged, to_final1_count, to_final2_count): `merged` plays s1's
    moves then s2's; its end track sigma satisfies
    V(sigma) = V(final s1) cap V(final s2) inside the start coordinates.
    """
    if s1.start.branches != s2.start.branches:
        raise PreconditionError("sequences start at different tracks")
    a1 = s1.active_at(0)
    a2 = s2.active_at(0)
    if a1 & a2:
        raise PreconditionError("active token sets overlap")
    tau = s1.start
    merged = sequence_from_moves(tau, moves_of(s1) + moves_of(s2))
    other = sequence_from_moves(tau, moves_of(s2) + moves_of(s1))
    if not isomorphic(merged.final, other.final):
        raise InvariantViolation("disjoint merge is not symmetric")
    v = final_cone_image(merged)
    v12 = final_cone_image(s1).intersection(final_cone_image(s2))
    if not cones_equal(v, v12):
        raise InvariantViolation("merged cone is not the intersection")
    return merged, len(s2), len(s1)


# ---------------------------------------------------------------------------
# restriction to a subtrack


@dataclass
class Restriction:
    seq: MoveSequence  # from the subtrack of the start
    embed: TrackMap  # final of seq -> final of the original sequence


def _embed_via_face(base: TrainTrack, face: Cone, current: TrainTrack) -> tuple[TrainTrack, TrackMap]:
    """Face subtrack of `base` for `face`, glued to `current` by isomorphism."""
    res, img = face_subtrack(base, set(zero_branch_set(face)))
    if not cones_equal(img, Cone(img.labels, filter_extreme(face.rays))):
        raise InvariantViolation("face subtrack does not realize the face")
    iso = isomorphism(current, res.track)
    if iso is None:
        raise InvariantViolation("restriction track is not the face subtrack")
    image = {b1: ((b2, -1 if flip else 1),) for b1, (b2, flip) in iso.items()}
    return res.track, res.tmap.compose(TrackMap(current, res.track, image))


def restrict_to_subtrack(seq: MoveSequence, sub: SubtrackResult) -> Restriction:
    """Restrict a move sequence to a subtrack of its start track.

    Given moves from tau and a birecurrent subtrack tau' with inclusion
    `sub`, produce moves from tau' whose end track sigma' satisfies
    V(sigma') = V(sigma) cap V(tau') in tau coordinates, with at most
    len(seq) + dim V(tau') - dim V(sigma') moves.
    """
    if sub.tmap.dst.branches != seq.start.branches:
        raise PreconditionError("subtrack does not include into the sequence start")
    out = empty_sequence(sub.track)
    # face of the restriction inside the current prefix track's coordinates
    face = cone_image(extreme_rays(sub.track), sub.tmap)
    embed = TrackMap(sub.track, seq.start, sub.tmap.branch_image)
    for step in seq.steps:
        base_prev = step.tmap.dst
        kind = step.move.kind
        zero = zero_branch_set(face)
        if kind in (LEFT, RIGHT, CENTRAL):
            bsite = step.move.branch
            u, v, nw, sw_, ne, se = split_corners(base_prev, bsite)
            site_branches = {bsite, nw[0], sw_[0], ne[0], se[0]}
            if not (site_branches & zero):
                # the subtrack keeps the whole splitting site: same move applies
                copy = None
                for c, path in embed.branch_image.items():
                    if len(path) == 1 and path[0][0] == bsite:
                        copy = c
                        break
                if copy is None:
                    raise InvariantViolation("splitting site not found in the restriction")
                out = out.apply(Move(kind, copy))
                target = preimage_cone(step.tmap, face)
                new_final, embed = _embed_via_face(step.track, target, out.final)
                face = target
                continue
        # generic case: the restriction passes to a deeper face: intersect the
        # current face with the image of the next prefix track, step down to
        # it by codimension-one subtrack moves, and re-embed
        img_next = cone_image(extreme_rays(step.track), step.tmap)
        cur_img = cone_image(extreme_rays(embed.src), embed)
        inter = cur_img.intersection(img_next)
        local_face = preimage_cone(embed, inter)
        chain = graded_subtrack_chain(out.final, local_face)
        for st in chain.steps:
            out = out.extend(st)
        face = preimage_cone(step.tmap, inter)
        new_final, embed = _embed_via_face(step.track, face, out.final)
    # final checks: cone identity and the move-count bound
    final_in_start = cone_image(
        extreme_rays(out.final),
        TrackMap(out.final, seq.start,
                 seq.carrying_map().compose(embed).branch_image))
    want = final_cone_image(seq).intersection(
        cone_image(extreme_rays(sub.track), sub.tmap))
    if not cones_equal(final_in_start, want):
        raise InvariantViolation("restriction cone identity fails")
    bound = len(seq) + extreme_rays(sub.track).dimension - extreme_rays(out.final).dimension
    if len(out) > bound:
        raise InvariantViolation(f"restriction used {len(out)} moves, bound {bound}")
    return Restriction(out, embed)


# ---------------------------------------------------------------------------
# surjectivity: sequences whose final cone meets the start's relative interior
# rewrite to splits and central splits only


def meets_relint(sub: Cone, sup: Cone) -> bool:
    """Does `sub` (a subcone) meet the relative interior of `sup`?"""
    from ._polyhedra import lp_feasible

    if not sub.rays or not sup.rays:
        return False
    n = len(sub.labels)
    ka, kb = len(sub.rays), len(sup.rays)
    rows = []
    rhs = []
    # sum lam_i sub_i - sum mu_j sup_j = 0 with lam >= 0, mu >= 1
    for i in range(n):
        rows.append([Fraction(sub.rays[s][i]) for s in range(ka)]
                    + [Fraction(-sup.rays[s][i]) for s in range(kb)])
        rhs.append(sum(Fraction(sup.rays[s][i]) for s in range(kb)))
    return lp_feasible(rows, rhs, ka + kb) is not None


def rewrite_surjective(seq: MoveSequence) -> MoveSequence:
    """Rewrite to splits and central splits only.

    Precondition: the final cone meets the relative interior of the start
    cone (so the composed carrying map is surjective).  One-sided splits
    whose diagonal the rest of the sequence misses become central splits,
    with the tail restricted to the diagonal-free subtrack.
    """
    if not meets_relint(final_cone_image(seq), measure_cone_of(seq.start)):
        raise PreconditionError("final cone misses the start cone's relative interior")
    out_moves: list[Move] = []
    cur = seq
    fuel = 6 * len(seq) + 12
    while cur.steps:
        fuel -= 1
        if fuel < 0:
            raise InvariantViolation("surjectivity rewrite did not terminate")
        first = cur.steps[0]
        rest = MoveSequence(first.track, cur.steps[1:])
        if first.move.kind == "SUB":
            raise InvariantViolation("subtrack move in a surjective sequence")
        if meets_relint(final_cone_image(rest), measure_cone_of(first.track)):
            out_moves.append(first.move)
            cur = rest
            continue
        if first.move.kind == CENTRAL:
            raise InvariantViolation("central split result misses its own interior")
        # the tail misses the diagonal: the one-sided split was really central
        b = first.move.branch
        central = split_central(cur.start, b)
        sub = subtrack(first.track, {b})
        if not isomorphic(sub.track, central.track):
            raise InvariantViolation("removing the diagonal is not the central split")
        r = restrict_to_subtrack(rest, sub)
        rename = _iso_branch_map(sub.track, central.track)
        moves = transport_moves(moves_of(r.seq), rename)
        out_moves.append(central.move)
        cur = sequence_from_moves(central.track, moves)
    result = sequence_from_moves(seq.start, out_moves)
    if any(s.move.kind == "SUB" for s in result.steps):
        raise InvariantViolation("rewrite left a subtrack move")
    if not cones_equal(final_cone_image(result), final_cone_image(seq)):
        raise InvariantViolation("surjectivity rewrite changed the final cone")
    return result


# ---------------------------------------------------------------------------
# shared active large branches


def forced_large_branches(t: TrainTrack, b: str) -> frozenset[str]:
    """Large branches that must be active in any sequence activating b.

    From each small end of a branch, the branch holding the large slot at
    that switch must activate first; following these constraints from b
    terminates at large branches.
    """
    at = t.attachments()
    out = set()
    seen = set()
    frontier = [b]
    while frontier:
        x = frontier.pop()
        if x in seen:
            continue
        seen.add(x)
        if x in t.circles:
            continue
        if t.branch_kind(x) == "large":
            out.add(x)
            continue
        for e in (0, 1):
            sid, slot = at[(x, e)]
            if slot != LARGE:
                lb = t.switch_by_id(sid).large[0]
                frontier.append(lb)
    return frozenset(out)


def splitting_cycle_witness(seq: MoveSequence):
    """A vertex cycle of the start track all of whose branches are active.

    Returns the witness WeightVector, or None; used to measure, over a
    corpus, how long a sequence can run without containing a vertex cycle
    in its active locus.
    """
    from .cones import vertex_cycles

    if not seq.steps:
        return None
    active = seq.active_branches_at(0)
    for vc in vertex_cycles(seq.start):
        supp = {b for b, x in vc.weights if x > 0}
        if supp <= active:
            return vc
    return None


# ---------------------------------------------------------------------------
# the track intersection algorithm


@dataclass
class Intersection:
    """Outcome of intersecting two carried tracks over a common base.

    sigma_minus carries exactly the laminations carried by both finals;
    the diagram runs sigma_minus -> sub_i -> sigma_plus -> tau.
    """

    sigma_minus: TrainTrack
    sigma_plus: TrainTrack
    sub1: TrainTrack
    sub2: TrainTrack
    seq_plus: MoveSequence  # from tau to sigma_plus
    seq1: MoveSequence  # from sigma_plus to sub1
    seq2: MoveSequence  # from sigma_plus to sub2
    merged: MoveSequence  # from sigma_plus to sigma_minus
    cone: Cone  # V(sigma_minus) in tau coordinates
    rounds: int


def _pop_first(seq: MoveSequence) -> MoveSequence:
    return MoveSequence(seq.steps[0].track, seq.steps[1:])


def intersect_tracks(s1: MoveSequence, s2: MoveSequence, fuel: int = 64) -> Intersection:
    """Find a track whose cone is the intersection of two carried cones.

    Both sequences must start at the same track and their final cones must
    share a nonzero measure.  Alternates restriction to the smallest
    birecurrent subtrack containing the intersection (dropping dimension)
    with front-loaded shared splits (dropping move counts), finishing with
    a disjoint merge.
    """
    if s1.start.branches != s2.start.branches:
        raise PreconditionError("sequences start at different tracks")
    tau = s1.start
    I0 = final_cone_image(s1).intersection(final_cone_image(s2))
    if I0.is_apex():
        raise PreconditionError("carried cones meet only at the apex")
    plus_seq = empty_sequence(tau)
    cur1, cur2 = s1, s2
    prev_measure = None
    rounds = 0
    while fuel:
        fuel -= 1
        rounds += 1
        base = plus_seq.final
        c1 = final_cone_image(cur1)
        c2 = final_cone_image(cur2)
        inter = c1.intersection(c2)
        if inter.is_apex():
            raise InvariantViolation("intersection vanished during the descent")
        zero = zero_branch_set(inter)
        if zero:
            # step (1): descend to the smallest birecurrent subtrack
            res, img = face_subtrack(base, set(zero))
            chain = graded_subtrack_chain(base, img)
            sub = SubtrackResult(chain.final, chain.carrying_map(), set(zero), set(), [])
            r1 = restrict_to_subtrack(cur1, sub)
            r2 = restrict_to_subtrack(cur2, sub)
            for st in chain.steps:
                plus_seq = plus_seq.extend(st)
            cur1 = rewrite_surjective(r1.seq)
            cur2 = rewrite_surjective(r2.seq)
            base = plus_seq.final
        a1 = cur1.active_at(0)
        a2 = cur2.active_at(0)
        shared = a1 & a2
        measure = (extreme_rays(base).dimension, len(cur1) + len(cur2))
        if prev_measure is not None and not measure < prev_measure:
            raise InvariantViolation("intersection monovariant failed to decrease")
        prev_measure = measure
        if not shared:
            merged, _, _ = disjoint_merge(cur1, cur2)
            cone = cone_image(
                extreme_rays(merged.final),
                plus_seq.carrying_map().compose(merged.carrying_map()))
            return Intersection(merged.final, base, cur1.final, cur2.final,
                                plus_seq, cur1, cur2, merged, cone, rounds)
        # step (2): front-load a shared active large branch
        name = sorted(shared)[0][1]
        forced = forced_large_branches(base, name)
        act1 = cur1.active_branches_at(0)
        act2 = cur2.active_branches_at(0)
        cands = sorted(b for b in forced if b in act1 and b in act2)
        if not cands:
            raise InvariantViolation("no shared active large branch despite shared tokens")
        bstar = cands[0]
        cur1 = front_load(cur1, bstar)
        cur2 = front_load(cur2, bstar)
        f1 = cur1.steps[0].move
        f2 = cur2.steps[0].move
        if f1 == f2:
            step = cur1.steps[0]
            plus_seq = plus_seq.extend(step)
            if cur2.steps[0].track.branches != step.track.branches:
                raise InvariantViolation("identical front moves produced different tracks")
            cur1 = _pop_first(cur1)
            cur2 = MoveSequence(step.track, cur2.steps[1:])
        else:
            central = split_central(base, bstar)
            plus_seq = plus_seq.extend(central)
            new_curs = []
            for cur in (cur1, cur2):
                first = cur.steps[0]
                if first.move.kind == CENTRAL:
                    new_curs.append(MoveSequence(central.track, cur.steps[1:]))
                    continue
                sub = subtrack(first.track, {bstar})
                if not isomorphic(sub.track, central.track):
                    raise InvariantViolation("diagonal removal missed the central split")
                rest = MoveSequence(first.track, cur.steps[1:])
                r = restrict_to_subtrack(rest, sub)
                rename = _iso_branch_map(sub.track, central.track)
                new_curs.append(sequence_from_moves(
                    central.track, transport_moves(moves_of(r.seq), rename)))
            cur1, cur2 = new_curs
    raise InvariantViolation("track intersection exceeded its move budget")
