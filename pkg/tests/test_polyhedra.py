import random
from fractions import Fraction

from traintracks._polyhedra import (
    Cone,
    cone_from_constraints,
    filter_extreme,
    in_cone,
    lp_feasible,
    rays_for_constraints,
)
from traintracks._ratlin import nullspace, primitive, rank, rref, solve


def test_rref_rank_nullspace():
    rows = [[1, 2, 3], [2, 4, 6], [0, 1, 1]]
    assert rank(rows) == 2
    ns = nullspace(rows, 3)
    assert len(ns) == 1
    v = ns[0]
    for r in rows:
        assert sum(Fraction(a) * b for a, b in zip(r, v)) == 0


def test_solve_consistency():
    rows = [[1, 1], [1, -1]]
    x = solve(rows, [3, 1])
    assert x == (Fraction(2), Fraction(1))
    assert solve([[1, 1], [2, 2]], [1, 3]) is None


def test_primitive_normalization():
    assert primitive([Fraction(1, 2), Fraction(1, 3)]) == (3, 2)
    assert primitive([-2, -4]) == (1, 2)
    assert primitive([0, 0]) == (0, 0)


def test_farey_style_cone_rays():
    # w3 = w1 + w2 over (w1,w2,w3): rays (1,0,1) and (0,1,1)
    rays = rays_for_constraints(3, eqs=[[1, 1, -1]])
    assert rays == ((0, 1, 1), (1, 0, 1))


def test_two_equation_cone_single_ray():
    rays = rays_for_constraints(3, eqs=[[2, 0, -1], [0, 2, -1]])
    assert rays == ((1, 1, 2),)


def test_inequality_cut():
    # positive quadrant cut by x >= y
    rays = rays_for_constraints(2, ineqs=[[1, -1]])
    assert rays == ((1, 0), (1, 1))


def test_lp_feasibility():
    # x + y = 1 with x,y >= 0 is feasible, x + y = -1 is not
    assert lp_feasible([[1, 1]], [1], 2) is not None
    assert lp_feasible([[1, 1]], [-1], 2) is None
    # x - y = 0, x + y = 2
    sol = lp_feasible([[1, -1], [1, 1]], [0, 2], 2)
    assert sol == (Fraction(1), Fraction(1))


def test_in_cone_membership():
    rays = [(1, 0, 1), (0, 1, 1)]
    assert in_cone([1, 1, 2], rays)
    assert in_cone([0, 0, 0], rays)
    assert not in_cone([1, 1, 1], rays)


def test_filter_extreme_drops_interior_generators():
    rays = filter_extreme([(1, 0), (0, 1), (1, 1), (2, 3)])
    assert rays == ((0, 1), (1, 0))


def test_cone_intersection_and_union():
    labels = ("x", "y")
    left = Cone(labels, ((1, 0), (1, 1)))
    right = Cone(labels, ((1, 1), (0, 1)))
    mid = left.intersection(right)
    assert mid.rays == ((1, 1),)
    hull = left.hull_union(right)
    assert hull.rays == ((0, 1), (1, 0))
    assert left.relint_meets(left)
    assert not left.relint_meets(Cone(labels, ((0, 1),)))


def test_relint_membership():
    c = cone_from_constraints(("a", "b", "c"), eqs=[[1, 1, -1]])
    assert c.relint_contains([1, 1, 2])
    assert not c.relint_contains([1, 0, 1])
    assert not c.relint_contains([1, 1, 1])


def test_random_cones_membership_agrees_with_combination(seed=7):
    rng = random.Random(seed)
    for _ in range(25):
        n = rng.randint(2, 4)
        k = rng.randint(1, 3)
        eqs = [[rng.randint(-2, 2) for _ in range(n)] for _ in range(k)]
        rays = rays_for_constraints(n, eqs=eqs)
        for r in rays:
            for row in eqs:
                assert sum(a * b for a, b in zip(row, r)) == 0
            assert all(x >= 0 for x in r)
        if rays:
            coeffs = [rng.randint(0, 3) for _ in rays]
            v = [sum(c * r[i] for c, r in zip(coeffs, rays)) for i in range(n)]
            assert in_cone(v, rays)
