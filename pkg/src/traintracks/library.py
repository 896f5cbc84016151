"""Named example tracks used by tests, demos and the CLI docs."""

from __future__ import annotations

from .track import Piece, SurfaceSig, Switch, TrainTrack


def farey_track() -> TrainTrack:
    """The standard track on the once-punctured torus.

    Branches e1, e2 (small) and the large branch e3; the single
    complementary piece is a once-punctured bigon.  The cone of carried
    measures has extreme rays (1,0,1) and (0,1,1) on (e1,e2,e3): the curves
    of slope 0 and slope infinity, with slope(q,p) = p/q on weights
    (w1,w2) = (q,p).
    """
    return TrainTrack(
        surface=SurfaceSig(genus=1, punctures=1),
        branches=("e1", "e2", "e3"),
        circles=frozenset(),
        switches=(
            Switch("s1", large=("e3", 0), small_left=("e1", 0), small_right=("e2", 0)),
            Switch("s2", large=("e3", 1), small_left=("e1", 1), small_right=("e2", 1)),
        ),
        pieces=(Piece(regions=(0,), punctures=1, genus=0),),
    )


def nonorientable_track() -> TrainTrack:
    """A non-orientable 3-branch track: two small loops joined by a large branch.

    Lives on the 4-punctured sphere; its measure cone is the single ray
    (1,1,2), a curve crossing the large branch twice.
    """
    return TrainTrack(
        surface=SurfaceSig(genus=0, punctures=4),
        branches=("e1", "e2", "e3"),
        circles=frozenset(),
        switches=(
            Switch("s1", large=("e3", 0), small_left=("e1", 0), small_right=("e1", 1)),
            Switch("s2", large=("e3", 1), small_left=("e2", 0), small_right=("e2", 1)),
        ),
        pieces=(),  # filled in below once walks are known
    )


def _with_default_pieces(t: TrainTrack, data):
    return TrainTrack(t.surface, t.branches, t.circles, t.switches,
                      tuple(Piece((i,), p, g) for i, (p, g) in enumerate(data)),
                      t.transversely_recurrent)


def nonorientable_track_with_pieces() -> TrainTrack:
    t = nonorientable_track()
    walks = t.regions()
    data = []
    for walk, cusps in walks:
        if cusps == 1:
            data.append((1, 0))  # punctured monogon
        else:
            data.append((2, 0))  # twice-punctured smooth piece
    return _with_default_pieces(t, data)
