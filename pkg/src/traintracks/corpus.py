"""Corpus generation: connected generic recurrent tracks up to a branch budget.

Tracks are enumerated as slot assignments (each switch has a large and two
small slots, each non-circle branch two ends) with symmetry breaking: fresh
branches always take the next id, and every switch after the first must
consume the least pending branch end.  Isomorphic duplicates are removed by
canonical form.

Each abstract ribbon structure gets its canonical surface: every boundary
walk is filled with a disk, punctured once when it has one or two cusps and
twice when it has none (the minimal declarations making the track valid);
the ambient genus is then forced by the Euler characteristic.
"""

from __future__ import annotations

from dataclasses import replace

from .track import (
    LARGE,
    Piece,
    SurfaceSig,
    Switch,
    TrainTrack,
    canonical_key,
    is_recurrent,
    validate_track,
)


def _assemble(k: int, assignment) -> TrainTrack | None:
    """Build a track from a slot assignment; None if it cannot be completed."""
    switches = []
    for i in range(2 * k):
        l, sl, sr = assignment[3 * i], assignment[3 * i + 1], assignment[3 * i + 2]
        switches.append(Switch(f"s{i + 1}", l, sl, sr))
    branches = sorted({h[0] for h in assignment})
    t = TrainTrack(SurfaceSig(0, 0), tuple(branches), frozenset(), tuple(switches), ())
    if not t.is_connected():
        return None
    walks = t.regions()
    data = []
    for _, cusps in walks:
        if cusps >= 3:
            data.append((0, 0))
        elif cusps >= 1:
            data.append((1, 0))
        else:
            data.append((2, 0))
    punctures = sum(p for p, _ in data)
    chi_fill = t.euler_lhs() + len(walks)
    if chi_fill % 2:
        return None  # cannot happen for an oriented thickening
    genus = (2 - chi_fill) // 2
    if genus < 0:
        return None
    surface = SurfaceSig(genus, punctures)
    t = replace(t, surface=surface,
                pieces=tuple(Piece((i,), p, g) for i, (p, g) in enumerate(data)))
    return t


def enumerate_tracks(max_branches: int = 6):
    """All valid generic connected recurrent tracks, up to isomorphism.

    Exhaustive per switch count; the budget is the number of branches
    (3 per switch pair).
    """
    out = []
    seen = set()
    for k in range(1, max_branches // 3 + 1):
        for t in _enumerate_k(k):
            if not is_recurrent(t):
                continue
            if not validate_track(t).ok:
                continue
            key = canonical_key(t)
            if key in seen:
                continue
            seen.add(key)
            out.append(t)
    return out


def _enumerate_k(k: int):
    nslots = 6 * k
    assignment: list = [None] * nslots
    pending: list = []  # open branch ends (b, 1) awaiting a slot
    next_branch = [1]
    results = []

    def rec(slot: int):
        if slot == nslots:
            t = _assemble(k, assignment)
            if t is not None:
                results.append(t)
            return
        remaining = nslots - slot
        if len(pending) > remaining:
            return
        # a new switch must consume the least pending end somewhere in its slots
        at_switch_start = slot % 3 == 0
        if at_switch_start and slot > 0:
            if not pending:
                return  # earlier switches closed up: disconnected
            least = min(pending)
            if all(h != least for h in assignment[:slot]) and len(pending) > 3:
                pass  # pruning handled below by the forced-consumption rule
        choices = []
        if at_switch_start and slot > 0:
            # the least pending end must appear in this switch: if this is the
            # last slot of the switch that could take it, force it
            least = min(pending)
            upcoming = 3 - (slot % 3)
            taken = any(assignment[s] == least for s in range(slot - slot % 3, slot))
            if not taken and upcoming == 1:
                choices = [least]
        if not choices:
            choices = list(pending)
            if next_branch[0] <= 3 * k:
                b = f"e{next_branch[0]:02d}"
                choices.append((b, 0))
        sw_start = slot - slot % 3
        least = min(pending) if pending else None
        in_switch = slot % 3
        for h in sorted(set(choices)):
            fresh = h[1] == 0 and h not in pending
            # forced-consumption pruning: the least pending end must be taken
            # by the current switch
            if least is not None and sw_start > 0:
                taken = any(assignment[s] == least for s in range(sw_start, slot))
                if not taken and in_switch == 2 and h != least:
                    continue
            if fresh:
                assignment[slot] = (f"e{next_branch[0]:02d}", 0)
                pending.append((f"e{next_branch[0]:02d}", 1))
                next_branch[0] += 1
                rec(slot + 1)
                next_branch[0] -= 1
                pending.pop()
            else:
                assignment[slot] = h
                pending.remove(h)
                rec(slot + 1)
                pending.append(h)
            assignment[slot] = None

    rec(0)
    return results


def split_closure(tracks, rounds: int = 1):
    """Add every recurrent split outcome of every large branch, `rounds` deep."""
    from .moves import apply_split

    seen = {canonical_key(t): t for t in tracks}
    frontier = list(tracks)
    for _ in range(rounds):
        new = []
        for t in frontier:
            for b in t.large_branches():
                out = apply_split(t, b)
                for step, rec in ((out.left, out.left_recurrent),
                                  (out.right, out.right_recurrent),
                                  (out.central, out.central_recurrent)):
                    if not rec or not step.track.branches:
                        continue
                    key = canonical_key(step.track)
                    if key not in seen:
                        seen[key] = step.track
                        new.append(step.track)
        frontier = new
    return list(seen.values())
