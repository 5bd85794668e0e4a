"""Lyapunov functionals, Weyl chambers and coarse Lyapunov subspaces of a linear action."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np
from scipy.optimize import linprog, minimize, minimize_scalar

from anosov_lab.actions import box_elements

ZERO_TOL = 1e-9
MERGE_TOL = 1e-9
HYPERPLANE_TOL = 1e-9
# irrational weights for the generic combination sum_j w_j g_j
_WEIGHTS = (1.0, 0.6180339887498949, 0.4142135623730951, 0.7320508075688772, 0.2360679774997897,
            0.6457513110645907, 0.3166247903554, 0.1622776601683795)


class SpectralDegeneracyError(ArithmeticError):
    """Distinct eigenvalue moduli could not be separated at working precision."""


class ErgodicityWarning(UserWarning):
    pass


class SpectralDegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class LyapunovFunctional:
    coefficients: np.ndarray
    multiplicity: int
    subspace_basis: np.ndarray
    jordan: bool = False

    def __call__(self, a):
        return float(np.dot(self.coefficients, np.asarray(a, dtype=float)))


@dataclass(frozen=True, eq=False)
class CoarseClass:
    """Positively proportional functionals with their aggregated subspace V.

    ``coords`` maps a vector to its V-coordinates along the complement W, so the
    oblique projector onto V along W is ``basis @ coords``.
    """

    members: tuple
    normal: np.ndarray
    hyperplane: int
    basis: np.ndarray
    complement: np.ndarray
    coords: np.ndarray
    conditioning: float
    exact_crosscheck: bool | None = None

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def projector(self):
        return self.basis @ self.coords

    def restriction(self, A):
        """Matrix of A restricted to V in the basis ``basis``."""
        return self.coords @ np.asarray(A, dtype=float) @ self.basis


@dataclass(frozen=True, eq=False)
class SpectralData:
    n: int
    k: int
    functionals: tuple
    hyperplanes: np.ndarray
    chambers: tuple
    chamber_points: np.ndarray
    coarse_classes: tuple
    degenerate: bool
    notes: tuple = field(default=())

    @property
    def coefficient_matrix(self):
        if not self.functionals:
            return np.zeros((0, self.k))
        return np.array([f.coefficients for f in self.functionals])

    def values(self, a):
        return self.coefficient_matrix @ np.asarray(a, dtype=float)

    def chamber_of(self, a, tol=1e-12):
        """Sign vector of ``a``, or None if ``a`` lies on a wall."""
        a = np.asarray(a, dtype=float)
        vals = self.values(a)
        scale = max(1.0, float(np.linalg.norm(a)))
        if vals.size and np.min(np.abs(vals)) <= tol * scale:
            return None
        if self.hyperplanes.size == 0:
            return ()
        return tuple(int(s) for s in np.sign(self.hyperplanes @ a))


def _generic_combination(mats):
    return sum(w * m for w, m in zip(itertools.cycle(_WEIGHTS), mats))


def _cluster(eigs, rel_tol=1e-5):
    order = sorted(range(len(eigs)), key=lambda i: (round(eigs[i].real, 6), round(eigs[i].imag, 6)))
    clusters = []
    for i in order:
        z = eigs[i]
        for c in clusters:
            ref = eigs[c[0]]
            if abs(z - ref) <= rel_tol * max(1.0, abs(ref)):
                c.append(i)
                break
        else:
            clusters.append([i])
    return [np.mean([eigs[i] for i in c]) for c in clusters], [len(c) for c in clusters]


def _null_basis(N, dim):
    _, s, vt = np.linalg.svd(N)
    scale = max(s[0], 1.0)
    if s[-dim] > 1e-6 * scale or (dim < len(s) and s[-dim - 1] < 1e-4 * scale):
        raise SpectralDegeneracyError(f"generalized eigenspace of dimension {dim} is not numerically isolated")
    return vt[-dim:].T


def _joint_blocks(mats):
    """Joint generalized eigenspaces (real form) with per-generator log-moduli."""
    n = mats[0].shape[0]
    M = _generic_combination(mats)
    centers, mults = _cluster(np.linalg.eigvals(M))
    ident = np.eye(n)
    blocks = []
    for nu, m in zip(centers, mults):
        if abs(nu.imag) > 1e-9 * max(1.0, abs(nu)):
            if nu.imag < 0:
                continue
            quad = M @ M - 2 * nu.real * M + abs(nu) ** 2 * ident
            basis = _null_basis(np.linalg.matrix_power(quad, m), 2 * m)
            local = basis.T @ M @ basis
            residual = local @ local - 2 * nu.real * local + abs(nu) ** 2 * np.eye(2 * m)
        else:
            basis = _null_basis(np.linalg.matrix_power(M - nu.real * ident, m), m)
            local = basis.T @ M @ basis
            residual = local - nu.real * np.eye(m)
        coeffs = []
        for g in mats:
            moduli = np.abs(np.linalg.eigvals(basis.T @ g @ basis))
            logs = np.log(moduli)
            if np.ptp(logs) > 1e-6 * max(1.0, np.max(np.abs(logs))):
                raise SpectralDegeneracyError("a joint eigenspace carries several eigenvalue moduli")
            coeffs.append(float(np.mean(logs)))
        jordan = m > 1 and bool(np.linalg.norm(residual) > 1e-6 * max(1.0, abs(nu)))
        blocks.append((np.array(coeffs), basis, jordan))
    if sum(b[1].shape[1] for b in blocks) != n:
        raise SpectralDegeneracyError("joint eigenspaces do not span R^n")
    return blocks


def _angle(u, v):
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    return 2.0 * np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v))


def _canonical_normal(c):
    u = c / np.linalg.norm(c)
    nz = np.flatnonzero(np.abs(u) > 1e-12)
    return -u if u[nz[0]] < 0 else u


def _chamber_lp(normals, signs):
    """Interior direction with maximal margin for a sign vector, or None if empty."""
    k = normals.shape[1]
    A_ub = np.hstack([-(np.asarray(signs)[:, None] * normals), np.ones((len(signs), 1))])
    res = linprog(np.r_[np.zeros(k), -1.0], A_ub=A_ub, b_ub=np.zeros(len(signs)),
                  bounds=[(-1, 1)] * k + [(None, 1)], method="highs")
    if res.status != 0 or -res.fun <= 1e-9:
        return None
    return res.x[:k]


def _enumerate_chambers(normals, k):
    if len(normals) == 0:
        return [()], np.zeros((1, k))
    chambers = [()]
    for h in range(len(normals)):
        grown = []
        for signs in chambers:
            for s in (1, -1):
                cand = signs + (s,)
                if _chamber_lp(normals[:h + 1], cand) is not None:
                    grown.append(cand)
        chambers = grown
    chambers.sort(reverse=True)
    points = np.array([_chamber_lp(normals, c) for c in chambers])
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    return chambers, points


def _high_precision_logs(matrix_rows, dps=40):
    from anosov_lab.actions import IntegerMatrix
    p = IntegerMatrix(matrix_rows).charpoly()
    with mpmath.workdps(dps):
        roots = mpmath.polyroots(list(reversed(p)), maxsteps=200, extraprec=2 * dps)
        return [mpmath.log(abs(z)) for z in roots]


def _crosscheck(action, first, other, max_exponent=8, dps=40):
    """Are the moduli of two grouped functionals multiplicatively dependent (small exponents)?"""
    ratio = np.linalg.norm(other.coefficients) / np.linalg.norm(first.coefficients)
    frac = Fraction(ratio).limit_denominator(max_exponent)
    p, q = frac.numerator, frac.denominator
    if p > max_exponent or p == 0:
        return False
    for j, g in enumerate(action.generators):
        logs = _high_precision_logs(g.rows, dps)
        with mpmath.workdps(dps):
            lf = min(logs, key=lambda v: abs(float(v) - first.coefficients[j]))
            lo = min(logs, key=lambda v: abs(float(v) - other.coefficients[j]))
            if abs(q * lo - p * lf) > mpmath.mpf(10) ** (-(dps // 2)):
                return False
    return True


def compute_spectrum(action, prop_tol=1e-9, crosscheck=False):
    """Full spectral data of the linearization: functionals, walls, chambers, coarse classes."""
    mats = [g.to_array() for g in action.generators]
    n, k = action.n, action.k
    blocks = _joint_blocks(mats)

    merged = []
    for coeffs, basis, jordan in blocks:
        for entry in merged:
            if np.linalg.norm(entry[0] - coeffs) <= MERGE_TOL * max(1.0, np.linalg.norm(coeffs)):
                entry[1].append(basis)
                entry[2] = entry[2] or jordan
                break
        else:
            merged.append([coeffs, [basis], jordan])
    functionals = []
    for coeffs, bases, jordan in merged:
        basis, _ = np.linalg.qr(np.hstack(bases))
        functionals.append(LyapunovFunctional(coeffs, basis.shape[1], basis, jordan))
    functionals.sort(key=lambda f: tuple(-np.round(f.coefficients, 12)))
    functionals = tuple(functionals)

    nonzero = [i for i, f in enumerate(functionals) if np.linalg.norm(f.coefficients) > ZERO_TOL]
    degenerate = len(nonzero) < len(functionals)
    notes = []
    if degenerate:
        notes.append("zero Lyapunov functional present: no element of the action is Anosov")

    normals = []
    for i in nonzero:
        u = _canonical_normal(functionals[i].coefficients)
        if not any(np.linalg.norm(u - v) <= HYPERPLANE_TOL for v in normals):
            normals.append(u)
    hyperplanes = np.array(normals) if normals else np.zeros((0, k))
    chambers, points = _enumerate_chambers(hyperplanes, k)

    classes = []
    assigned = set()
    for i in nonzero:
        if i in assigned:
            continue
        members = [i] + [j for j in nonzero if j != i and j not in assigned
                         and _angle(functionals[i].coefficients, functionals[j].coefficients) < prop_tol]
        assigned.update(members)
        normal = functionals[i].coefficients / np.linalg.norm(functionals[i].coefficients)
        hp = next(h for h, v in enumerate(hyperplanes) if abs(abs(v @ normal) - 1) <= HYPERPLANE_TOL)
        V = np.hstack([functionals[j].subspace_basis for j in members])
        others = [functionals[j].subspace_basis for j in range(len(functionals)) if j not in members]
        W = np.hstack(others) if others else np.zeros((n, 0))
        full = np.hstack([V, W])
        coords = np.linalg.inv(full)[: V.shape[1]]
        check = None
        if crosscheck and len(members) > 1:
            check = all(_crosscheck(action, functionals[i], functionals[j]) for j in members[1:])
            if not check:
                warnings.warn("functionals grouped as proportional are not multiplicatively dependent "
                              "with small exponents", SpectralDegeneracyWarning)
        classes.append(CoarseClass(tuple(members), normal, hp, V, W, coords, float(np.linalg.cond(full)), check))

    return SpectralData(n, k, functionals, hyperplanes, tuple(chambers), points, tuple(classes), degenerate,
                        tuple(notes))


def anosov_elements_per_chamber(spec, radius):
    """Regular lattice points (all functionals nonzero) with sup-norm <= radius, by chamber."""
    found = {c: [] for c in spec.chambers}
    if radius < 1:
        return found
    for a in box_elements(spec.k, radius):
        c = spec.chamber_of(a)
        if c is not None:
            found[c].append(a)
    return found


def s_of(spec, a):
    """S(a): the largest Lyapunov exponent of tau(a)."""
    vals = spec.values(a)
    return float(np.max(vals)) if vals.size else 0.0


def _distinct_rows(C):
    rows = []
    for c in C:
        if np.linalg.norm(c) > ZERO_TOL and not any(np.linalg.norm(c - r) <= MERGE_TOL for r in rows):
            rows.append(c)
    return np.array(rows) if rows else np.zeros((0, C.shape[1]))


def _recession_nontrivial(C):
    """Is there a nonzero a with every functional <= 0 at a?"""
    k = C.shape[1]
    if len(C) == 0:
        return True
    for j in range(k):
        for s in (1.0, -1.0):
            obj = np.zeros(k)
            obj[j] = -s
            res = linprog(obj, A_ub=C, b_ub=np.zeros(len(C)), bounds=[(-1, 1)] * k, method="highs")
            if res.status == 0 and -res.fun > 1e-9:
                return True
    return False


def sigma(spec):
    """Half the minimum of S over the unit sphere, computed from the vertices of {S <= 1}.

    S is positively homogeneous and convex, so min_{|a|=1} S = 1 / max |v| over the
    vertices v of the polytope {a : lambda_i(a) <= 1 for all i}. Each vertex is a ray
    where k functionals tie, i.e. a boundary ray of the cells on which S is linear.
    """
    C = _distinct_rows(spec.coefficient_matrix)
    k = spec.k
    if _recession_nontrivial(C):
        warnings.warn("S vanishes on a nonzero direction: some element is not ergodic and sigma = 0",
                      ErgodicityWarning)
        return 0.0
    best = 0.0
    for combo in itertools.combinations(range(len(C)), k):
        sub = C[list(combo)]
        if np.linalg.cond(sub) > 1e12:
            continue
        v = np.linalg.solve(sub, np.ones(k))
        if np.all(C @ v <= 1 + 1e-9):
            best = max(best, float(np.linalg.norm(v)))
    return 0.5 / best


def sigma_by_sampling(spec, samples=10_000, seed=0, refine=True):
    """Independent estimate of sigma: dense direction sampling plus local refinement."""
    C = spec.coefficient_matrix
    k = spec.k

    def S(a):
        return float(np.max(C @ a)) if len(C) else 0.0

    if k == 1:
        return 0.5 * min(S(np.array([1.0])), S(np.array([-1.0])))
    if k == 2:
        theta = np.linspace(0, 2 * np.pi, samples, endpoint=False)
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        vals = np.max(dirs @ C.T, axis=1)
        best = float(vals.min())
        if refine:
            step = 2 * np.pi / samples
            for i in np.argsort(vals)[:5]:
                res = minimize_scalar(lambda t: S(np.array([np.cos(t), np.sin(t)])),
                                      bounds=(theta[i] - step, theta[i] + step), method="bounded",
                                      options={"xatol": 1e-13})
                best = min(best, float(res.fun))
        return 0.5 * best
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, k))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = np.max(dirs @ C.T, axis=1)
    best = float(vals.min())
    if refine:
        for i in np.argsort(vals)[:5]:
            res = minimize(lambda a: S(a / np.linalg.norm(a)), dirs[i], method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20_000})
            best = min(best, float(res.fun))
    return 0.5 * best


def sampled_chamber_count(spec, samples=10_000, seed=0):
    """Number of distinct sign patterns realized by random directions."""
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, spec.k))
    patterns = set()
    for a in dirs:
        c = spec.chamber_of(a)
        if c is not None:
            patterns.add(c)
    return len(patterns)
