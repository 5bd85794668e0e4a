"""Lattice-avoidance probes: distance of integer points to invariant subspaces and box separation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from anosov_lab.actions import element

MAX_POINTS = 10**7
INTERSECTION_TOL = 1e-12


class LatticeIntersectionError(ValueError):
    """A nonzero integer point lies (numerically) on the subspace."""

    def __init__(self, z, distance):
        self.z = tuple(int(v) for v in z)
        self.distance = distance
        super().__init__(f"lattice intersection: d({self.z}, V) = {distance:.3e}")


class EnumerationLimitError(ValueError):
    pass


@dataclass(frozen=True)
class KatznelsonProbeResult:
    radius: int
    worst_z: tuple
    min_product: float
    trend: tuple
    exponent: int
    points_checked: int


def _ball_count_estimate(n, radius):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * (radius + math.sqrt(n)) ** n


def katznelson_probe(V_basis, radius, trend_radii=None, max_points=MAX_POINTS):
    """Minimise d(z, V) * |z|^n over nonzero integer z in the Euclidean ball of given radius.

    Exhaustive; the trend reports the running minimum at each radius in ``trend_radii``.
    """
    V_basis = np.atleast_2d(np.asarray(V_basis, dtype=float))
    if V_basis.shape[0] == 1 and V_basis.shape[1] > 1:
        V_basis = V_basis.T
    n = V_basis.shape[0]
    radius = int(radius)
    if radius < 1:
        raise ValueError("radius must be a positive integer")
    if _ball_count_estimate(n, radius) > max_points:
        raise EnumerationLimitError(f"ball of radius {radius} in Z^{n} exceeds {max_points} points")
    Q, _ = np.linalg.qr(V_basis)
    if trend_radii is None:
        trend_radii = sorted({2**j for j in range(int(math.log2(radius)) + 1)} | {radius})
    trend_radii = np.array(sorted(trend_radii), dtype=float)
    bucket_min = np.full(len(trend_radii), np.inf)
    best, best_z, checked = np.inf, None, 0

    rng = np.arange(-radius, radius + 1)
    inner = np.array(list(itertools.product(rng, repeat=n - 1)), dtype=np.int64).reshape(-1, n - 1)
    for z0 in rng:
        rest_max = radius**2 - z0**2
        sub = inner[np.sum(inner.astype(np.float64) ** 2, axis=1) <= rest_max] if n > 1 else inner
        z = np.hstack([np.full((len(sub), 1), z0, dtype=np.int64), sub])
        z = z[np.any(z != 0, axis=1)]
        if not len(z):
            continue
        checked += len(z)
        zf = z.astype(float)
        resid = zf - (zf @ Q) @ Q.T
        dist = np.linalg.norm(resid, axis=1)
        i_small = int(np.argmin(dist))
        if dist[i_small] < INTERSECTION_TOL:
            raise LatticeIntersectionError(z[i_small], float(dist[i_small]))
        norms = np.linalg.norm(zf, axis=1)
        prod = dist * norms**n
        i = int(np.argmin(prod))
        if prod[i] < best:
            best, best_z = float(prod[i]), tuple(int(v) for v in z[i])
        buckets = np.searchsorted(trend_radii, norms - 1e-9)
        ok = buckets < len(trend_radii)
        np.minimum.at(bucket_min, buckets[ok], prod[ok])
    running = np.minimum.accumulate(bucket_min)
    trend = tuple((int(r), float(v)) for r, v in zip(trend_radii, running))
    return KatznelsonProbeResult(radius, best_z, best, trend, n, checked)


def _exact_rational(r):
    if isinstance(r, Fraction):
        return r
    if isinstance(r, str):
        return Fraction(r)
    return Fraction(r)


@dataclass(frozen=True)
class HBox:
    """Integer cube {z : |z_i| <= r^l} in Z^n."""

    l: int
    r: Fraction
    n: int
    bound: int

    @property
    def size(self):
        return (2 * self.bound + 1) ** self.n

    def contains(self, z):
        return all(abs(int(v)) <= self.bound for v in z)

    def points(self, nonzero=True):
        rng = range(-self.bound, self.bound + 1)
        pts = np.array(list(itertools.product(rng, repeat=self.n)), dtype=np.int64).reshape(-1, self.n)
        if nonzero:
            pts = pts[np.any(pts != 0, axis=1)]
        return pts


def h_box(l, r, n):
    """The box H_l; ``floor(r^l)`` is computed in exact rational arithmetic."""
    rq = _exact_rational(r)
    if rq <= 1:
        raise ValueError("r must exceed 1")
    if l < 0:
        raise ValueError("l must be nonnegative")
    return HBox(int(l), rq, int(n), math.floor(rq ** int(l)))


@dataclass(frozen=True)
class SeparationResult:
    separated: bool
    hypothesis_met: bool
    witness: tuple | None
    l: int
    a: tuple
    bound: int

    def __bool__(self):
        return self.separated


def admissible_r_bound(sigma_value, n):
    return math.exp(sigma_value / (n + 2))


def _apply_exact(M, pts):
    big = max(abs(v) for row in M.rows for v in row)
    bound = int(np.max(np.abs(pts))) if len(pts) else 0
    if big * bound * M.n < 2**62:
        return pts @ np.array(M.rows, dtype=np.int64).T
    return np.array(pts, dtype=object) @ np.array(M.rows, dtype=object).T


def separation_check(action, r, l, a, sigma_value=None, max_points=MAX_POINTS):
    """Exact test of tau(a)(H_l) and H_l meeting only at 0."""
    if sigma_value is None:
        from anosov_lab.spectrum import compute_spectrum, sigma
        sigma_value = sigma(compute_spectrum(action))
    upper = admissible_r_bound(sigma_value, action.n)
    if not 1 < float(r) < upper:
        raise ValueError(f"r = {float(r)} outside the admissible interval (1, {upper:.6g})")
    box = h_box(l, r, action.n)
    if box.size > max_points:
        raise EnumerationLimitError(f"H_{l} has {box.size} points")
    a = tuple(int(v) for v in a)
    hypothesis_met = math.sqrt(sum(v * v for v in a)) >= l
    pts = box.points()
    image = _apply_exact(element(action, a), pts)
    inside = np.all(np.abs(image) <= box.bound, axis=1) if len(pts) else np.zeros(0, dtype=bool)
    hits = np.flatnonzero(inside)
    witness = tuple(int(v) for v in pts[hits[0]]) if len(hits) else None
    return SeparationResult(witness is None, hypothesis_met, witness, int(l), a, box.bound)


def annulus_elements(k, lo, hi):
    """Integer vectors with lo <= |a| <= hi (Euclidean)."""
    top = int(math.floor(hi))
    out = []
    for a in itertools.product(range(-top, top + 1), repeat=k):
        norm = math.sqrt(sum(v * v for v in a))
        if lo <= norm <= hi:
            out.append(a)
    return out


def empirical_threshold(action, r, l_values, a_factor=3, sigma_value=None):
    """Smallest l0 among ``l_values`` such that every tested l >= l0 separates.

    Returns (l0, failures) where failures lists (l, a, witness); l0 is None if the
    largest tested l still fails.
    """
    if sigma_value is None:
        from anosov_lab.spectrum import compute_spectrum, sigma
        sigma_value = sigma(compute_spectrum(action))
    failures = []
    passed = {}
    for l in sorted(l_values):
        ok = True
        for a in annulus_elements(action.k, l, a_factor * l):
            res = separation_check(action, r, l, a, sigma_value=sigma_value)
            if not res:
                ok = False
                failures.append((l, a, res.witness))
        passed[l] = ok
    l0 = None
    for l in sorted(l_values, reverse=True):
        if not passed[l]:
            break
        l0 = l
    return l0, failures
