"""Ribbon-graph train tracks.

A generic track is a trivalent ribbon graph: every switch has one large
slot and two tangent small slots (`small_left`, `small_right`).  The fixed
chirality convention is that the counterclockwise cyclic order of the three
half-branches around a switch is (large, small_right, small_left); every
split surgery downstream is derived from this convention and certified
against cone identities rather than against pictures.

Complementary topology is tracked exactly: boundary walks of the thickened
graph are computed from the ribbon structure, and walks are grouped into
"pieces" (connected complementary components) each carrying declared
puncture and genus counts.  A track alone does not determine its ambient
surface, so punctures and genus are input data validated against the Euler
characteristic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

from .errors import PreconditionError, StructureError

HalfBranch = tuple[str, int]  # (branch id, end 0 or 1)
Dart = tuple[str, int]  # (branch id, direction +1 / -1)

LARGE, SMALL_LEFT, SMALL_RIGHT = "large", "small_left", "small_right"
_SLOTS = (LARGE, SMALL_LEFT, SMALL_RIGHT)


@dataclass(frozen=True)
class SurfaceSig:
    """Genus and puncture count of the ambient surface."""

    genus: int
    punctures: int

    @property
    def ml_dim(self) -> int:
        return 6 * self.genus - 6 + 2 * self.punctures

    @property
    def euler(self) -> int:
        return 2 - 2 * self.genus - self.punctures


@dataclass(frozen=True)
class Switch:
    id: str
    large: HalfBranch
    small_left: HalfBranch
    small_right: HalfBranch

    def slots(self):
        return ((LARGE, self.large), (SMALL_LEFT, self.small_left), (SMALL_RIGHT, self.small_right))

    def half(self, slot: str) -> HalfBranch:
        return getattr(self, slot)


@dataclass(frozen=True)
class Piece:
    """A connected complementary component.

    `regions` are indices into the canonical boundary-walk list of the
    owning track; punctures and genus are declared data.
    """

    regions: tuple[int, ...]
    punctures: int
    genus: int

    @property
    def euler(self) -> int:
        return 2 - 2 * self.genus - len(self.regions) - self.punctures


@dataclass(frozen=True)
class Region:
    """One boundary walk with the declared data of its piece."""

    boundary_walk: tuple[Dart, ...]
    cusps: int
    piece: int
    declared_punctures: int
    declared_genus: int


@dataclass(frozen=True)
class TrainTrack:
    surface: SurfaceSig
    branches: tuple[str, ...]
    circles: frozenset[str]
    switches: tuple[Switch, ...]
    pieces: tuple[Piece, ...]
    transversely_recurrent: bool = True

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(sorted(self.branches)))
        object.__setattr__(self, "switches", tuple(sorted(self.switches, key=lambda s: s.id)))

    # -- structure ---------------------------------------------------------

    def attachments(self) -> dict[HalfBranch, tuple[str, str]]:
        at = {}
        for sw in self.switches:
            for slot, half in sw.slots():
                if half in at:
                    raise StructureError(f"half-branch {half} attached twice")
                at[half] = (sw.id, slot)
        return at

    def switch_by_id(self, sid: str) -> Switch:
        for sw in self.switches:
            if sw.id == sid:
                return sw
        raise StructureError(f"no switch {sid}")

    def check_structure(self):
        """Raise StructureError unless ids resolve into a well-formed ribbon graph."""
        seen = set(self.branches)
        if len(seen) != len(self.branches):
            raise StructureError("duplicate branch ids")
        for c in self.circles:
            if c not in seen:
                raise StructureError(f"circle flag on unknown branch {c}")
        at = self.attachments()
        for half, _ in at.items():
            b, e = half
            if b not in seen:
                raise StructureError(f"switch references unknown branch {b}")
            if e not in (0, 1):
                raise StructureError(f"bad end {e} on branch {b}")
            if b in self.circles:
                raise StructureError(f"circle branch {b} attached to a switch")
        for b in self.branches:
            if b in self.circles:
                continue
            for e in (0, 1):
                if (b, e) not in at:
                    raise StructureError(f"free end: branch {b} end {e} unattached")
        for sw in self.switches:
            halves = [sw.large, sw.small_left, sw.small_right]
            if len(set(halves)) != 3:
                raise StructureError(f"switch {sw.id} has repeated slots")
        n = len(self.regions())
        used = set()
        for p in self.pieces:
            for r in p.regions:
                if r in used or not (0 <= r < n):
                    raise StructureError("piece region indices must partition the walk list")
                used.add(r)
        if len(used) != n:
            raise StructureError("piece region indices must partition the walk list")

    # -- boundary walks ----------------------------------------------------

    def regions(self) -> tuple[tuple[tuple[Dart, ...], int], ...]:
        return _regions_cached(self)

    def region_objects(self) -> tuple[Region, ...]:
        walks = self.regions()
        out = []
        for idx, (walk, cusps) in enumerate(walks):
            pi = self.piece_of_region(idx)
            p = self.pieces[pi]
            first = min(p.regions)
            out.append(Region(walk, cusps, pi,
                              p.punctures if idx == first else 0,
                              p.genus if idx == first else 0))
        return tuple(out)

    def piece_of_region(self, idx: int) -> int:
        for i, p in enumerate(self.pieces):
            if idx in p.regions:
                return i
        raise StructureError(f"region {idx} not assigned to a piece")

    def euler_lhs(self) -> int:
        """Euler characteristic of the track as a graph."""
        return len(self.switches) - (len(self.branches) - len(self.circles))

    # -- branch classification ----------------------------------------------

    def branch_kind(self, b: str) -> str:
        """'large', 'small', 'mixed' or 'circle' according to the two half-branches."""
        if b in self.circles:
            return "circle"
        at = self.attachments()
        kinds = []
        for e in (0, 1):
            _, slot = at[(b, e)]
            kinds.append("large" if slot == LARGE else "small")
        if kinds == ["large", "large"]:
            return "large"
        if "large" in kinds:
            return "mixed"
        return "small"

    def large_branches(self) -> tuple[str, ...]:
        return tuple(b for b in self.branches if b not in self.circles and self.branch_kind(b) == "large")

    def is_connected(self) -> bool:
        comps = _components(self)
        return len(comps) <= 1

    def relabeled(self, branch_map: dict[str, str], switch_map: dict[str, str] | None = None,
                  flips: set[str] | None = None) -> "TrainTrack":
        """Rename branches/switches; `flips` lists branches whose ends swap."""
        flips = flips or set()
        switch_map = switch_map or {}

        def h(half):
            b, e = half
            return (branch_map.get(b, b), 1 - e if b in flips else e)

        sws = tuple(Switch(switch_map.get(s.id, s.id), h(s.large), h(s.small_left), h(s.small_right))
                    for s in self.switches)
        t = TrainTrack(self.surface, tuple(branch_map.get(b, b) for b in self.branches),
                       frozenset(branch_map.get(b, b) for b in self.circles), sws,
                       (), self.transversely_recurrent)
        # carry pieces across via dart correspondence
        old = self.regions()
        new = t.regions()
        mapping = {}
        for oi, (walk, _) in enumerate(old):
            b, d = walk[0]
            nd = (branch_map.get(b, b), -d if b in flips else d)
            for ni, (w2, _) in enumerate(new):
                if nd in w2:
                    mapping[oi] = ni
                    break
        pieces = tuple(Piece(tuple(sorted(mapping[r] for r in p.regions)), p.punctures, p.genus)
                       for p in self.pieces)
        return replace(t, pieces=pieces)


# ---------------------------------------------------------------------------
# boundary walk machinery (works on partial structures too)


def _next_dart(attach, circles, dart: Dart, switch_slots) -> tuple[Dart, bool]:
    """Boundary successor of a dart; second value marks a cusp crossing.

    `switch_slots`: switch id -> {slot: half or None}.  Partial switches are
    allowed: missing slots smooth the corner or U-turn at a tip.
    """
    b, d = dart
    if b in circles:
        return dart, False
    e = 1 if d > 0 else 0
    if (b, e) not in attach:
        return (b, -d), False  # wrap a free tip
    sid, slot = attach[(b, e)]
    slots = switch_slots[sid]
    order = [LARGE, SMALL_LEFT, SMALL_RIGHT]  # clockwise from each slot
    i = order.index(slot)
    for k in (1, 2):
        nxt = order[(i + k) % 3]
        half = slots.get(nxt)
        if half is not None:
            cusp = slot == SMALL_LEFT and nxt == SMALL_RIGHT
            nb, ne = half
            nd = 1 if ne == 0 else -1
            return (nb, nd), cusp
    return (b, -d), False  # lone slot: tip


def _walks_from(attach, circles, branch_list, switch_slots):
    darts = []
    for b in sorted(branch_list):
        darts.append((b, 1))
        darts.append((b, -1))
    seen = set()
    walks = []
    for start in darts:
        if start in seen:
            continue
        walk = []
        cusps = 0
        d = start
        while True:
            walk.append(d)
            seen.add(d)
            d, cusp = _next_dart(attach, circles, d, switch_slots)
            if cusp:
                cusps += 1
            if d == start:
                break
            if d in seen and d != start:
                raise StructureError("boundary walk is not a permutation orbit")
        # rotate to least token
        key = min(range(len(walk)), key=lambda i: (walk[i][0], -walk[i][1]))
        walk = walk[key:] + walk[:key]
        walks.append((tuple(walk), cusps))
    walks.sort(key=lambda w: (w[0][0][0], -w[0][0][1]))
    return tuple(walks)


@lru_cache(maxsize=4096)
def _regions_cached(t: TrainTrack):
    attach = t.attachments()
    slots = {sw.id: {LARGE: sw.large, SMALL_LEFT: sw.small_left, SMALL_RIGHT: sw.small_right}
             for sw in t.switches}
    return _walks_from(attach, t.circles, t.branches, slots)


def _components(t: TrainTrack) -> list[set[str]]:
    adj = {b: set() for b in t.branches}
    for sw in t.switches:
        bs = [sw.large[0], sw.small_left[0], sw.small_right[0]]
        for x in bs:
            adj[x].update(y for y in bs if y != x)
    comps = []
    left = set(t.branches)
    while left:
        root = min(left)
        comp = {root}
        stack = [root]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in comp:
                    comp.add(y)
                    stack.append(y)
        comps.append(comp)
        left -= comp
    return comps


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    structural: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.structural and not self.violations


def validate_track(t: TrainTrack) -> ValidationReport:
    """Check every track invariant; empty report iff valid."""
    rep = ValidationReport()
    try:
        t.check_structure()
    except StructureError as e:
        rep.structural.append(str(e))
        return rep

    if t.surface.ml_dim < 2:
        rep.violations.append(
            f"surface ({t.surface.genus},{t.surface.punctures}) has ml_dim {t.surface.ml_dim} < 2")

    walks = t.regions()
    for i, piece in enumerate(t.pieces):
        cusps = sum(walks[r][1] for r in piece.regions)
        if len(piece.regions) == 1:
            if piece.genus == 0 and piece.punctures == 0 and cusps <= 2:
                kind = {0: "smooth disk", 1: "monogon", 2: "bigon"}[cusps]
                rep.violations.append(f"piece {i} is a {kind}")
            if piece.genus == 0 and piece.punctures == 1 and cusps == 0:
                rep.violations.append(f"piece {i} is a smooth punctured disk")

    total = t.euler_lhs() + sum(p.euler for p in t.pieces)
    if total != t.surface.euler:
        rep.violations.append(
            f"Euler mismatch: graph+regions give {total}, surface has {t.surface.euler}")
    declared = sum(p.punctures for p in t.pieces)
    if declared != t.surface.punctures:
        rep.violations.append(
            f"declared punctures {declared} != surface punctures {t.surface.punctures}")
    nb = len(t.branches) - len(t.circles)
    nv = len(t.switches)
    if 2 * nb != 3 * nv:
        rep.violations.append(f"genericity count fails: 2|b|={2 * nb} vs 3|v|={3 * nv}")
    return rep


def complementary_regions(t: TrainTrack) -> tuple[Region, ...]:
    """Deterministic boundary-walk list with cusp counts and piece data."""
    t.check_structure()
    return t.region_objects()


# ---------------------------------------------------------------------------
# orientability


def is_orientable(t: TrainTrack):
    """Consistent branch orientation, or an obstruction cycle.

    Returns (True, {branch: +1/-1}) or (False, obstruction branch list).
    An orientation is consistent when at every switch the large half-branch
    points into the switch exactly when both smalls point out.
    """
    # parity graph: node per branch, edge constraint between branches at a switch
    val = {}
    parent = {}
    for comp in _components(t):
        root = min(comp)
        val[root] = 1
        stack = [root]
        cons = _orientation_constraints(t)
        while stack:
            x = stack.pop()
            for y, par in cons.get(x, []):
                want = val[x] * par
                if y not in val:
                    val[y] = want
                    parent[y] = x
                    stack.append(y)
                elif val[y] != want:
                    cycle = _parity_cycle(parent, x, y)
                    return False, cycle
    for c in t.circles:
        val.setdefault(c, 1)
    return True, val


def _orientation_constraints(t: TrainTrack):
    # into(b, e) == orient(b) if e == 1 else -orient(b)
    def sign(e):
        return 1 if e == 1 else -1

    cons: dict[str, list[tuple[str, int]]] = {}
    for sw in t.switches:
        lb, le = sw.large
        for small in (sw.small_left, sw.small_right):
            sb, se = small
            # into(large) = -into(small):  orient(lb)*sign(le) = -orient(sb)*sign(se)
            par = -sign(le) * sign(se)
            cons.setdefault(lb, []).append((sb, par))
            cons.setdefault(sb, []).append((lb, par))
    return cons


def _parity_cycle(parent, x, y):
    ax, ay = [x], [y]
    seen = {x: 0}
    cur = x
    while cur in parent:
        cur = parent[cur]
        seen[cur] = len(ax)
        ax.append(cur)
    cur = y
    while cur not in seen and cur in parent:
        cur = parent[cur]
        ay.append(cur)
    if cur in seen:
        return ax[: seen[cur] + 1] + list(reversed(ay))
    return ax + list(reversed(ay))


# ---------------------------------------------------------------------------
# largeness, recurrence


def is_large(t: TrainTrack) -> bool:
    """True iff every complementary piece is a disk or once-punctured disk."""
    return all(len(p.regions) == 1 and p.genus == 0 and p.punctures <= 1 for p in t.pieces)


def legal_turn_digraph(t: TrainTrack) -> dict[Dart, list[Dart]]:
    """Directed graph of legal continuations on oriented branches."""
    at = t.attachments()
    edges: dict[Dart, list[Dart]] = {}
    for b in t.branches:
        if b in t.circles:
            edges[(b, 1)] = [(b, 1)]
            edges[(b, -1)] = [(b, -1)]
            continue
        for d in (1, -1):
            e = 1 if d > 0 else 0
            sid, slot = at[(b, e)]
            sw = t.switch_by_id(sid)
            outs = []
            if slot == LARGE:
                targets = [sw.small_left, sw.small_right]
            else:
                targets = [sw.large]
            for nb, ne in targets:
                outs.append((nb, 1 if ne == 0 else -1))
            edges[(b, d)] = outs
    return edges


def _sccs(edges):
    index = {}
    low = {}
    onstack = {}
    stack = []
    out = []
    counter = [0]
    for v0 in edges:
        if v0 in index:
            continue
        work = [(v0, iter(edges[v0]))]
        index[v0] = low[v0] = counter[0]
        counter[0] += 1
        stack.append(v0)
        onstack[v0] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    onstack[w] = True
                    work.append((w, iter(edges[w])))
                    advanced = True
                    break
                elif onstack.get(w):
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    onstack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def recurrent_branches(t: TrainTrack) -> frozenset[str]:
    """Branches lying on a directed cycle of the legal-turn digraph."""
    edges = legal_turn_digraph(t)
    comp_of = {}
    comps = _sccs(edges)
    for i, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = i
    good = set()
    for i, comp in enumerate(comps):
        cyclic = len(comp) > 1 or any(w in edges[comp[0]] for w in comp)
        if cyclic:
            good.update(b for b, _ in comp)
    return frozenset(good)


def is_recurrent(t: TrainTrack) -> bool:
    """True iff every branch lies on a closed legal curve (digraph criterion).

    The extreme-ray criterion is wired up as an independent oracle in the
    cones module; the two must agree.
    """
    return recurrent_branches(t) == set(t.branches)


# ---------------------------------------------------------------------------
# subtrack surgery


@dataclass(frozen=True)
class TrackMap:
    """Carrying data: each src branch maps onto a legal dart path in dst."""

    src: TrainTrack
    dst: TrainTrack
    branch_image: dict[str, tuple[Dart, ...]]

    def matrix(self) -> dict[str, dict[str, int]]:
        """dst branch -> {src branch: multiplicity}; w_dst = M . w_src."""
        M: dict[str, dict[str, int]] = {b: {} for b in self.dst.branches}
        for sb, path in self.branch_image.items():
            for (db, _) in path:
                M[db][sb] = M[db].get(sb, 0) + 1
        return M

    def push_weights(self, w: dict[str, Fraction]) -> dict[str, Fraction]:
        out = {b: Fraction(0) for b in self.dst.branches}
        for sb, path in self.branch_image.items():
            for (db, _) in path:
                out[db] += Fraction(w[sb])
        return out

    def push_ray(self, ray, labels_src, labels_dst):
        w = {b: Fraction(x) for b, x in zip(labels_src, ray)}
        out = self.push_weights(w)
        return tuple(out[b] for b in labels_dst)

    def compose(self, inner: "TrackMap") -> "TrackMap":
        """self: mid->dst composed with inner: src->mid gives src->dst."""
        if inner.dst is not self.src and inner.dst.branches != self.src.branches:
            raise PreconditionError("track maps do not chain")
        image = {}
        for sb, path in inner.branch_image.items():
            full: list[Dart] = []
            for (mb, d) in path:
                seg = self.branch_image[mb]
                full.extend(seg if d > 0 else tuple((b, -dd) for b, dd in reversed(seg)))
            image[sb] = tuple(full)
        return TrackMap(inner.src, self.dst, image)


def identity_map(t: TrainTrack) -> TrackMap:
    return TrackMap(t, t, {b: ((b, 1),) for b in t.branches})


@dataclass
class SubtrackResult:
    track: TrainTrack
    tmap: TrackMap
    removed: set[str]
    pruned: set[str]
    illegal_turns: list[str]


class _State:
    """Mutable working copy of a track used by surgeries."""

    def __init__(self, t: TrainTrack):
        self.surface = t.surface
        self.circles = set(t.circles)
        self.branches = set(t.branches)
        self.slots: dict[str, dict[str, HalfBranch | None]] = {
            sw.id: {LARGE: sw.large, SMALL_LEFT: sw.small_left, SMALL_RIGHT: sw.small_right}
            for sw in t.switches}
        self.flag = t.transversely_recurrent
        # piece data keyed by token; regions tracked by walk recomputation
        walks = t.regions()
        self.piece_data: list[dict] = []
        self.region_piece: dict[int, int] = {}
        for pi, p in enumerate(t.pieces):
            self.piece_data.append({"punctures": p.punctures, "genus": p.genus})
            for r in p.regions:
                self.region_piece[r] = pi
        self._walks = walks
        # image of every current branch as a dart path in the ORIGINAL track
        self.image: dict[str, tuple[Dart, ...]] = {b: ((b, 1),) for b in t.branches}

    # -- plumbing --

    def attach(self):
        at = {}
        for sid, sl in self.slots.items():
            for slot, half in sl.items():
                if half is not None:
                    at[half] = (sid, slot)
        return at

    def walks(self):
        return _walks_from(self.attach(), self.circles, self.branches, self.slots)

    def region_of_dart(self, walks, dart):
        for i, (w, _) in enumerate(walks):
            if dart in w:
                return i
        return None

    def _reassociate(self, old_walks, merges: list[tuple[int, int]] | None = None,
                     relabel: dict[Dart, Dart] | None = None):
        """Recompute walks and reattach piece indices via surviving darts."""
        relabel = relabel or {}
        uf = list(range(len(self.piece_data)))

        def find(i):
            while uf[i] != i:
                uf[i] = uf[uf[i]]
                i = uf[i]
            return i

        if merges:
            for a, b in merges:
                ra, rb = find(a), find(b)
                if ra != rb:
                    self.piece_data[ra]["punctures"] += self.piece_data[rb]["punctures"]
                    self.piece_data[ra]["genus"] += self.piece_data[rb]["genus"]
                    uf[rb] = ra
        new_walks = self.walks()
        new_region_piece = {}
        for ni, (w, _) in enumerate(new_walks):
            pi = None
            for dart in w:
                src = None
                for od, nd in relabel.items():
                    if nd == dart:
                        src = od
                        break
                probe = src if src is not None else dart
                oi = self.region_of_dart(old_walks, probe)
                if oi is not None and oi in self.region_piece:
                    pi = find(self.region_piece[oi])
                    break
            if pi is None:
                raise StructureError("cannot associate a new boundary walk to a piece")
            new_region_piece[ni] = pi
        self.region_piece = new_region_piece
        self._walks = new_walks

    # -- elementary surgeries --

    def delete_branch(self, b: str):
        old_walks = self._walks
        dp = self.region_of_dart(old_walks, (b, 1))
        dm = self.region_of_dart(old_walks, (b, -1))
        at = self.attach()
        attached0 = (b, 0) in at
        attached1 = (b, 1) in at
        pp = self.region_piece.get(dp) if dp is not None else None
        pm = self.region_piece.get(dm) if dm is not None else None
        merges = []
        if b in self.circles:
            if pp is not None and pm is not None:
                if pp != pm:
                    merges.append((pp, pm))
                else:
                    self.piece_data[pp]["genus"] += 1
        elif attached0 and attached1:
            if pp != pm:
                merges.append((pp, pm))
            elif dp != dm:
                self.piece_data[pp]["genus"] += 1
            # same walk: the walk splits, topology of the piece unchanged
        # tips (one or both ends free): no topological change
        for e in (0, 1):
            if (b, e) in at:
                sid, slot = at[(b, e)]
                self.slots[sid][slot] = None
        self.branches.discard(b)
        self.circles.discard(b)
        self.image.pop(b, None)
        self._reassociate(old_walks, merges=merges)

    def smooth(self, sid: str):
        """Merge the two branches at a legal valence-2 switch (large + one small)."""
        sl = self.slots[sid]
        present = [(slot, h) for slot, h in sl.items() if h is not None]
        assert len(present) == 2 and any(s == LARGE for s, _ in present)
        (s1, h1), (s2, h2) = present
        if s1 != LARGE:
            (s1, h1), (s2, h2) = (s2, h2), (s1, h1)
        (x, ex), (y, ey) = h1, h2
        old_walks = self._walks
        del self.slots[sid]
        at = self.attach()
        if x == y:
            # the branch closes up into a circle
            self.circles.add(x)
            self._reassociate(old_walks)
            return
        nid = min(x, y)
        # new branch: traverse x from far end to sid, then y from sid to far end
        ix = self.image[x] if ex == 1 else tuple((b, -d) for b, d in reversed(self.image[x]))
        iy = self.image[y] if ey == 0 else tuple((b, -d) for b, d in reversed(self.image[y]))
        relabel = {}
        dx = 1 if ex == 1 else -1  # dart of x pointing toward sid
        dy = 1 if ey == 0 else -1  # dart of y pointing away from sid
        relabel[(x, dx)] = (nid, 1)
        relabel[(x, -dx)] = (nid, -1)
        relabel[(y, dy)] = (nid, 1)
        relabel[(y, -dy)] = (nid, -1)
        farx = (x, 1 - ex)
        fary = (y, 1 - ey)
        sx = at.get(farx)
        sy = at.get(fary)
        self.branches.discard(x)
        self.branches.discard(y)
        self.branches.add(nid)
        self.image.pop(x, None)
        self.image.pop(y, None)
        self.image[nid] = ix + iy
        if sx is not None:
            self.slots[sx[0]][sx[1]] = (nid, 0)
        if sy is not None:
            self.slots[sy[0]][sy[1]] = (nid, 1)
        self._reassociate(old_walks, relabel=relabel)

    # -- normalization --

    def dead_halves(self):
        at = self.attach()
        out = []
        for b in sorted(self.branches):
            if b in self.circles:
                continue
            for e in (0, 1):
                if (b, e) not in at:
                    out.append((b, e))
                    continue
                sid, slot = at[(b, e)]
                sl = self.slots[sid]
                if slot == LARGE:
                    if sl[SMALL_LEFT] is None and sl[SMALL_RIGHT] is None:
                        out.append((b, e))
                else:
                    if sl[LARGE] is None:
                        out.append((b, e))
        return out

    def normalize(self) -> tuple[set[str], list[str]]:
        """Prune dead ends, smooth valence-2 switches, drop empty switches."""
        pruned = set()
        illegal = []
        while True:
            # report isolated illegal turns before pruning them away
            for sid in sorted(self.slots):
                sl = self.slots[sid]
                if sl[LARGE] is None and sl[SMALL_LEFT] is not None and sl[SMALL_RIGHT] is not None:
                    illegal.append(sid)
            dead = self.dead_halves()
            if dead:
                b = dead[0][0]
                pruned.add(b)
                self.delete_branch(b)
                continue
            smoothable = None
            for sid in sorted(self.slots):
                sl = self.slots[sid]
                present = [h for h in sl.values() if h is not None]
                if len(present) == 0:
                    del self.slots[sid]
                    smoothable = sid
                    break
                if len(present) == 2 and sl[LARGE] is not None:
                    self.smooth(sid)
                    smoothable = sid
                    break
            if smoothable is None:
                break
        return pruned, illegal

    def freeze(self) -> tuple[TrainTrack, dict[str, tuple[Dart, ...]]]:
        switches = []
        for sid in sorted(self.slots):
            sl = self.slots[sid]
            if any(h is None for h in sl.values()):
                raise StructureError(f"switch {sid} is incomplete after surgery")
            switches.append(Switch(sid, sl[LARGE], sl[SMALL_LEFT], sl[SMALL_RIGHT]))
        t = TrainTrack(self.surface, tuple(sorted(self.branches)), frozenset(self.circles),
                       tuple(switches), (), self.flag)
        walks = t.regions()
        if len(walks) != len(self._walks):
            raise StructureError("walk bookkeeping lost a region")
        groups: dict[int, list[int]] = {}
        for ri, pi in self.region_piece.items():
            groups.setdefault(pi, []).append(ri)
        pieces = tuple(sorted(
            (Piece(tuple(sorted(rs)), self.piece_data[pi]["punctures"], self.piece_data[pi]["genus"])
             for pi, rs in groups.items()),
            key=lambda p: p.regions))
        t = replace(t, pieces=pieces)
        return t, dict(self.image)


def subtrack(t: TrainTrack, remove: set[str]) -> SubtrackResult:
    """Delete branches, smooth legal valence-2 switches, prune dead ends.

    Merged complementary pieces inherit summed punctures and genus; an
    isolated illegal turn left by the removal is reported and pruned.
    """
    bad = set(remove) - set(t.branches)
    if bad:
        raise PreconditionError(f"cannot remove unknown branches {sorted(bad)}")
    st = _State(t)
    for b in sorted(remove):
        st.delete_branch(b)
    pruned, illegal = st.normalize()
    nt, image = st.freeze()
    return SubtrackResult(nt, TrackMap(nt, t, image), set(remove), pruned, illegal)


def maximal_recurrent_subtrack(t: TrainTrack) -> SubtrackResult:
    """Subtrack on the branches lying on closed legal curves; recurrent, idempotent."""
    keep = recurrent_branches(t)
    res = subtrack(t, set(t.branches) - keep)
    assert is_recurrent(res.track)
    return res


# ---------------------------------------------------------------------------
# canonical form / isomorphism


def canonical_form(t: TrainTrack):
    """Canonical key plus a relabeling realizing it.

    Returns (key, branch_map, flips) where branch_map renames branches to
    canonical ids, flips is the set of original branches whose ends swap.
    """
    comps = _components(t)
    best_overall = []
    sw_by_id = {sw.id: sw for sw in t.switches}
    comp_keys = []
    for comp in comps:
        comp_switches = [sw.id for sw in t.switches
                         if sw.large[0] in comp]
        if not comp_switches:
            continue  # circle components are keyed by their count below
        best = None
        for start in comp_switches:
            enc, bmap, flips = _encode_from(t, sw_by_id, start)
            cand = (enc, bmap, flips)
            if best is None or enc < best[0]:
                best = cand
        comp_keys.append(best)
    comp_keys.sort(key=lambda c: c[0])
    branch_map = {}
    flips = set()
    key_parts = []
    offset = 0
    for enc, bmap, fl in comp_keys:
        for b, i in bmap.items():
            branch_map[b] = f"e{i + offset + 1}"
        flips |= fl
        key_parts.append(tuple(enc))
        offset += len(bmap)
    for i, c in enumerate(sorted(t.circles)):
        branch_map[c] = f"c{i + 1}"
    circle_part = len(t.circles)
    # decorate with surface and piece data under the canonical labels
    relab = t.relabeled(branch_map, {sw.id: f"s{i + 1}" for i, sw in enumerate(t.switches)}, flips)
    piece_sig = tuple(sorted((p.regions, p.genus, p.punctures) for p in relab.pieces))
    key = (tuple(sorted(key_parts)), circle_part, t.surface.genus, t.surface.punctures,
           piece_sig, t.transversely_recurrent)
    return key, branch_map, flips


def _encode_from(t: TrainTrack, sw_by_id, start: str):
    bmap: dict[str, int] = {}
    flips: set[str] = set()
    smap: dict[str, int] = {start: 0}
    queue = [start]
    enc = []
    at = t.attachments()
    qi = 0
    while qi < len(queue):
        sid = queue[qi]
        qi += 1
        sw = sw_by_id[sid]
        for _, (b, e) in sw.slots():
            if b not in bmap:
                bmap[b] = len(bmap)
                if e == 1:
                    flips.add(b)
            eff = 1 - e if b in flips else e
            enc.append((bmap[b], eff))
            other = (b, 1 - e)
            os, _ = at[other]
            if os not in smap:
                smap[os] = len(smap)
                queue.append(os)
    return tuple(enc), bmap, flips


def canonical_key(t: TrainTrack):
    return canonical_form(t)[0]


def isomorphic(t1: TrainTrack, t2: TrainTrack) -> bool:
    return canonical_key(t1) == canonical_key(t2)


def isomorphism(t1: TrainTrack, t2: TrainTrack):
    """Branch bijection {b1: (b2, flipped)} realizing an isomorphism, or None."""
    k1, m1, f1 = canonical_form(t1)
    k2, m2, f2 = canonical_form(t2)
    if k1 != k2:
        return None
    inv2 = {v: k for k, v in m2.items()}
    out = {}
    for b1, c in m1.items():
        b2 = inv2[c]
        out[b1] = (b2, (b1 in f1) != (b2 in f2))
    return out
