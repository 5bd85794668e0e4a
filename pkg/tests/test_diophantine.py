import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anosov_lab.actions import element
from anosov_lab.diophantine import (
    EnumerationLimitError,
    LatticeIntersectionError,
    admissible_r_bound,
    empirical_threshold,
    h_box,
    katznelson_probe,
    separation_check,
)

PHI = (1 + math.sqrt(5)) / 2
UNSTABLE = [[PHI], [1.0]]


def brute_min_product_2d(direction, radius):
    """Exhaustive oracle in the plane: d(z, V) = |z x u| for the unit direction u."""
    ux, uy = np.asarray(direction, dtype=float) / np.linalg.norm(direction)
    best, arg = math.inf, None
    for x in range(-radius, radius + 1):
        for y in range(-radius, radius + 1):
            if (x, y) == (0, 0) or x * x + y * y > radius * radius:
                continue
            val = abs(x * uy - y * ux) * (x * x + y * y)
            if val < best:
                best, arg = val, (x, y)
    return best, arg


def fibonacci_pairs(count):
    a, b = 0, 1
    out = []
    for _ in range(count):
        out.append((b, a))
        a, b = b, a + b
    return out


def test_cat_unstable_line_radius_100():
    res = katznelson_probe(UNSTABLE, 100)
    assert res.min_product > 0
    assert tuple(abs(v) for v in res.worst_z) in fibonacci_pairs(15)
    oracle, _ = brute_min_product_2d((PHI, 1), 100)
    assert math.isclose(res.min_product, oracle, rel_tol=1e-12)


def test_unstable_floor_is_the_analytic_value():
    # attained at (1, 0): d = 1 / sqrt(phi^2 + 1)
    res = katznelson_probe(UNSTABLE, 300)
    assert math.isclose(res.min_product, 1 / math.sqrt(PHI**2 + 1), rel_tol=1e-12)


def test_lattice_intersection_is_reported():
    with pytest.raises(LatticeIntersectionError) as exc:
        katznelson_probe([[1.0], [0.0]], 1)
    assert exc.value.z in {(1, 0), (-1, 0)}


def test_radius_one_checks_four_points():
    u = np.array([math.sqrt(2), math.sqrt(3)])
    res = katznelson_probe(u.reshape(2, 1), 1)
    assert res.points_checked == 4
    oracle, _ = brute_min_product_2d(u, 1)
    assert math.isclose(res.min_product, oracle, rel_tol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0), st.integers(3, 25))
def test_probe_matches_brute_force_and_trend_is_monotone(slope, radius):
    direction = (1.0, slope * math.sqrt(2))
    res = katznelson_probe(np.reshape(direction, (2, 1)), radius)
    oracle, _ = brute_min_product_2d(direction, radius)
    assert math.isclose(res.min_product, oracle, rel_tol=1e-9)
    values = [v for _, v in res.trend]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[-1] == res.min_product


def test_probe_in_three_dimensions(torus3_spec):
    cls = torus3_spec.coarse_classes[0]
    res = katznelson_probe(cls.basis, 20)
    assert res.min_product > 0 and res.exponent == 3


def test_probe_refuses_huge_balls():
    with pytest.raises(EnumerationLimitError):
        katznelson_probe(UNSTABLE, 5000)


def test_h_box_examples():
    assert h_box(0, 3.7, 2).bound == 1
    box = h_box(12, 1.1, 2)
    assert box.bound == 3 and box.size == 49
    assert h_box(3, 2, 1).bound == 8
    assert len(h_box(0, 1.5, 3).points()) == 26


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.fractions(min_value=Fraction(101, 100), max_value=Fraction(3)))
def test_h_box_bound_is_exact_floor(l, r):
    b = h_box(l, r, 2).bound
    assert b <= r**l < b + 1


def brute_separated(action, bound, a):
    M = element(action, a)
    for z in itertools.product(range(-bound, bound + 1), repeat=action.n):
        if any(z) and all(abs(v) <= bound for v in M @ z):
            return False
    return True


def test_separation_examples(cat_action):
    sigma_cat = 0.5 * math.log((3 + math.sqrt(5)) / 2)
    assert math.isclose(admissible_r_bound(sigma_cat, 2), 1.1278, abs_tol=1e-4)
    res = separation_check(cat_action, 1.1, 8, (8,))
    assert res and res.hypothesis_met and res.witness is None
    res = separation_check(cat_action, 1.1, 8, (1,))
    assert not res.hypothesis_met
    assert not res.separated and res.witness is not None
    z = res.witness
    image = element(cat_action, (1,)) @ z
    assert all(abs(v) <= res.bound for v in image)


@pytest.mark.parametrize("l", [2, 5, 9, 12])
def test_separation_matches_brute_force(cat_action, l):
    bound = h_box(l, 1.1, 2).bound
    for a in range(-3 * l, 3 * l + 1):
        if a == 0:
            continue
        assert separation_check(cat_action, 1.1, l, (a,)).separated == brute_separated(cat_action, bound, (a,))


def test_separation_rejects_inadmissible_r(cat_action):
    with pytest.raises(ValueError, match="admissible"):
        separation_check(cat_action, 1.2, 8, (8,))
    with pytest.raises(ValueError, match="admissible"):
        separation_check(cat_action, 1.0, 8, (8,))


def test_empirical_threshold_cat(cat_action):
    l0, failures = empirical_threshold(cat_action, 1.1, range(1, 13))
    assert l0 is not None and l0 <= 6
    assert all(l < l0 for l, _, _ in failures)
