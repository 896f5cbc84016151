from dataclasses import replace

import pytest

from traintracks.errors import PreconditionError
from traintracks.library import farey_track, nonorientable_track_with_pieces
from traintracks.track import (
    Piece,
    SurfaceSig,
    Switch,
    TrainTrack,
    canonical_key,
    complementary_regions,
    is_large,
    is_orientable,
    is_recurrent,
    isomorphic,
    isomorphism,
    maximal_recurrent_subtrack,
    recurrent_branches,
    subtrack,
    validate_track,
)

# hand-checked boundary walk of the standard punctured-torus track: a single
# region crossing all six darts with two cusps (a once-punctured bigon)
FAREY_WALK = (("e1", 1), ("e2", -1), ("e3", 1), ("e1", -1), ("e2", 1), ("e3", -1))


def test_farey_track_is_valid():
    t = farey_track()
    rep = validate_track(t)
    assert rep.ok, (rep.structural, rep.violations)
    # Euler cross-check: (|v| - |b|) + chi(region) = -1 = chi(S_{1,1})
    assert t.euler_lhs() == -1
    assert t.pieces[0].euler == 0
    assert t.surface.euler == -1


def test_farey_regions_match_hand_walk():
    t = farey_track()
    regions = complementary_regions(t)
    assert len(regions) == 1
    r = regions[0]
    assert r.boundary_walk == FAREY_WALK
    assert r.cusps == 2
    assert r.declared_punctures == 1
    assert r.declared_genus == 0


def test_region_walks_partition_darts():
    for t in (farey_track(), nonorientable_track_with_pieces()):
        darts = set()
        for walk, _ in t.regions():
            for d in walk:
                assert d not in darts
                darts.add(d)
        expect = {(b, s) for b in t.branches for s in (1, -1)}
        assert darts == expect


def test_redeclared_region_breaks_euler_and_bigon():
    t = farey_track()
    bad = replace(t, pieces=(Piece((0,), 0, 0),))
    rep = validate_track(bad)
    assert any("bigon" in v for v in rep.violations)
    assert any("Euler" in v for v in rep.violations)
    assert any("punctures" in v for v in rep.violations)


def test_circle_declared_as_punctured_disk_is_invalid():
    t = TrainTrack(SurfaceSig(0, 3), ("c1",), frozenset(("c1",)), (),
                   (Piece((0,), 1, 0), Piece((1,), 2, 0)))
    rep = validate_track(t)
    assert any("punctured disk" in v for v in rep.violations)


def test_orientability_oracle_brute_force():
    # brute force over all orientation assignments must agree with the 2-coloring
    for t in (farey_track(), nonorientable_track_with_pieces()):
        ok, _ = is_orientable(t)
        n = len(t.branches)
        found = False
        for mask in range(1 << n):
            orient = {b: 1 if mask >> i & 1 else -1 for i, b in enumerate(t.branches)}
            good = True
            for sw in t.switches:
                def into(half):
                    b, e = half
                    return orient[b] if e == 1 else -orient[b]
                if not (into(sw.large) == -into(sw.small_left) == -into(sw.small_right)):
                    good = False
                    break
            if good:
                found = True
                break
        assert found == ok


def test_disjoint_union_orientable_componentwise():
    t = farey_track()
    sws = t.switches + tuple(
        Switch(sw.id + "b", (sw.large[0] + "b", sw.large[1]),
               (sw.small_left[0] + "b", sw.small_left[1]),
               (sw.small_right[0] + "b", sw.small_right[1]))
        for sw in t.switches)
    t2 = TrainTrack(SurfaceSig(2, 2), tuple(list(t.branches) + [b + "b" for b in t.branches]),
                    frozenset(), sws, ())
    walks = t2.regions()
    t2 = replace(t2, pieces=tuple(Piece((i,), 1, 0) for i in range(len(walks))))
    ok, orient = is_orientable(t2)
    assert ok and set(orient) == set(t2.branches)


def test_farey_is_large_but_circle_complement_is_not():
    assert is_large(farey_track())
    s = subtrack(farey_track(), {"e1"})
    # complement of a circle on the torus is a once-punctured annulus
    assert not is_large(s.track)
    assert s.track.pieces[0].punctures == 1
    assert len(s.track.pieces[0].regions) == 2


def test_recurrence_and_dead_end():
    assert is_recurrent(farey_track())
    # a track with a dead-end branch is not recurrent: hang an extra switch
    # configuration that cannot close up legally
    t = farey_track()
    sws = list(t.switches)
    sws[0] = Switch("s1", large=("e3", 0), small_left=("e1", 0), small_right=("e4", 0))
    sws.append(Switch("s3", large=("e4", 1), small_left=("e2", 0), small_right=("e5", 0)))
    sws.append(Switch("s4", large=("e5", 1), small_left=("e6", 0), small_right=("e6", 1)))
    t2 = TrainTrack(t.surface, ("e1", "e2", "e3", "e4", "e5", "e6"), frozenset(), tuple(sws), ())
    rec = recurrent_branches(t2)
    assert "e1" not in rec or not is_recurrent(t2)


def test_maximal_recurrent_subtrack_idempotent():
    t = farey_track()
    r = maximal_recurrent_subtrack(t)
    assert r.track.branches == t.branches
    again = maximal_recurrent_subtrack(r.track)
    assert isomorphic(again.track, r.track)


def test_subtrack_empty_and_all():
    t = farey_track()
    assert subtrack(t, set()).track.branches == t.branches
    assert subtrack(t, set(t.branches)).track.branches == ()
    with pytest.raises(PreconditionError):
        subtrack(t, {"zz"})


def test_subtrack_minus_e1_is_slope_zero_circle():
    s = subtrack(farey_track(), {"e1"})
    assert s.track.circles == frozenset(s.track.branches)
    assert len(s.track.branches) == 1
    # covered darts: the circle runs over e2 and e3 once each
    (img,) = s.tmap.branch_image.values()
    assert sorted(b for b, _ in img) == ["e2", "e3"]


def test_subtrack_composition_up_to_relabeling():
    t = farey_track()
    a = subtrack(t, {"e1"})
    b1 = subtrack(a.track, set())
    direct = subtrack(t, {"e1"})
    assert isomorphic(b1.track, direct.track)


def test_canonical_form_invariant_under_relabeling():
    t = farey_track()
    t2 = t.relabeled({"e1": "x", "e2": "y", "e3": "z"}, {"s1": "p", "s2": "q"})
    assert canonical_key(t) == canonical_key(t2)
    iso = isomorphism(t, t2)
    assert iso is not None
    assert iso["e1"][0] in ("x", "y")  # e1 and e2 play symmetric roles
    assert iso["e3"][0] == "z"


def test_canonical_form_distinguishes_nonisomorphic():
    assert canonical_key(farey_track()) != canonical_key(nonorientable_track_with_pieces())
