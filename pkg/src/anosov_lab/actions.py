"""Exact integer core for Z^k actions by toral automorphisms."""

from __future__ import annotations

import itertools
import json
import operator
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import mpmath
import numpy as np

from anosov_lab import intpoly


class ActionValidationError(ValueError):
    """An action file or matrix violates a structural invariant."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}" if detail else invariant)


class IndeterminateError(ArithmeticError):
    """Interval arithmetic could not separate an eigenvalue modulus from 1."""


@dataclass(frozen=True)
class IntegerMatrix:
    """Square matrix of arbitrary-precision integers, stored row-major."""

    rows: tuple

    def __post_init__(self):
        try:
            rows = tuple(tuple(operator.index(v) for v in row) for row in self.rows)
        except TypeError as exc:
            raise ActionValidationError("integer entries", str(exc)) from None
        if not rows or any(len(r) != len(rows) for r in rows):
            raise ActionValidationError("square", f"got row lengths {[len(r) for r in rows]}")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def identity(cls, n):
        return cls(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)))

    @property
    def n(self):
        return len(self.rows)

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def __matmul__(self, other):
        if isinstance(other, IntegerMatrix):
            cols = list(zip(*other.rows))
            return IntegerMatrix(tuple(tuple(sum(a * b for a, b in zip(r, c)) for c in cols) for r in self.rows))
        vec = [int(v) for v in other]
        return tuple(sum(a * b for a, b in zip(r, vec)) for r in self.rows)

    def __sub__(self, other):
        return IntegerMatrix(tuple(tuple(a - b for a, b in zip(r, s)) for r, s in zip(self.rows, other.rows)))

    def scale(self, c):
        return IntegerMatrix(tuple(tuple(c * a for a in r) for r in self.rows))

    def transpose(self):
        return IntegerMatrix(tuple(zip(*self.rows)))

    def det(self):
        """Bareiss fraction-free elimination."""
        m = [list(r) for r in self.rows]
        n, sign, prev = self.n, 1, 1
        for k in range(n - 1):
            if m[k][k] == 0:
                for i in range(k + 1, n):
                    if m[i][k] != 0:
                        m[k], m[i] = m[i], m[k]
                        sign = -sign
                        break
                else:
                    return 0
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
            prev = m[k][k]
        return sign * m[n - 1][n - 1]

    def is_unimodular(self):
        return abs(self.det()) == 1

    def inverse(self):
        """Exact inverse; integral because the determinant is a unit."""
        if not self.is_unimodular():
            raise ActionValidationError("unimodular", f"det = {self.det()}")
        n = self.n
        aug = [[Fraction(v) for v in r] + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(self.rows)]
        for c in range(n):
            piv = next(r for r in range(c, n) if aug[r][c] != 0)
            aug[c], aug[piv] = aug[piv], aug[c]
            pv = aug[c][c]
            aug[c] = [v / pv for v in aug[c]]
            for r in range(n):
                if r != c and aug[r][c] != 0:
                    f = aug[r][c]
                    aug[r] = [a - f * b for a, b in zip(aug[r], aug[c])]
        return IntegerMatrix(tuple(tuple(int(v) for v in r[n:]) for r in aug))

    def power(self, e):
        e = int(e)
        base = self if e >= 0 else self.inverse()
        e = abs(e)
        result = IntegerMatrix.identity(self.n)
        while e:
            if e & 1:
                result = result @ base
            base = base @ base
            e >>= 1
        return result

    def charpoly(self):
        """Characteristic polynomial det(xI - A), lowest degree first (Faddeev-LeVerrier)."""
        n = self.n
        coeffs = [0] * (n + 1)
        coeffs[n] = 1
        ident = IntegerMatrix.identity(n)
        mk = ident
        for k in range(1, n + 1):
            amk = self @ mk
            trace = sum(amk.rows[i][i] for i in range(n))
            c = -trace // k
            assert c * k == -trace
            coeffs[n - k] = c
            mk = IntegerMatrix(tuple(tuple(v + (c if i == j else 0) for j, v in enumerate(r))
                                     for i, r in enumerate(amk.rows)))
        return coeffs

    def to_array(self, dtype=float):
        return np.array(self.rows, dtype=dtype)

    def mod(self, modulus):
        """Entries reduced mod ``modulus`` as an int64 array (exact for huge entries)."""
        return np.array([[v % modulus for v in r] for r in self.rows], dtype=np.int64)

    def tolist(self):
        return [list(r) for r in self.rows]

    def __repr__(self):
        return f"IntegerMatrix({self.tolist()})"


def as_matrix(m):
    return m if isinstance(m, IntegerMatrix) else IntegerMatrix(tuple(tuple(r) for r in m))


def _require_unimodular(A):
    d = A.det()
    if abs(d) != 1:
        raise ActionValidationError("unimodular", f"det = {d}")


@dataclass(frozen=True)
class AbelianLinearAction:
    """k commuting unimodular integer matrices acting on the n-torus."""

    generators: tuple

    def __post_init__(self):
        gens = tuple(as_matrix(g) for g in self.generators)
        if not gens:
            raise ActionValidationError("rank", "an action needs at least one generator")
        n = gens[0].n
        for i, g in enumerate(gens):
            if g.n != n:
                raise ActionValidationError("dimension", f"generator {i} is {g.n}x{g.n}, expected {n}x{n}")
            d = g.det()
            if abs(d) != 1:
                raise ActionValidationError("unimodular", f"generator {i} has det {d}")
        for i, j in itertools.combinations(range(len(gens)), 2):
            if gens[i] @ gens[j] != gens[j] @ gens[i]:
                raise ActionValidationError("commutation", f"generators {i} and {j} do not commute")
        object.__setattr__(self, "generators", gens)

    @property
    def n(self):
        return self.generators[0].n

    @property
    def k(self):
        return len(self.generators)

    def element(self, a):
        return element(self, a)

    @classmethod
    def from_dict(cls, data):
        try:
            gens = data["generators"]
        except (KeyError, TypeError):
            raise ActionValidationError("schema", "missing 'generators'") from None
        action = cls(tuple(IntegerMatrix(tuple(tuple(r) for r in g)) for g in gens))
        if "n" in data and int(data["n"]) != action.n:
            raise ActionValidationError("dimension", f"declared n={data['n']} but generators are {action.n}x{action.n}")
        if "k" in data and int(data["k"]) != action.k:
            raise ActionValidationError("rank", f"declared k={data['k']} but {action.k} generators given")
        return action

    def to_dict(self):
        return {"n": self.n, "k": self.k, "generators": [g.tolist() for g in self.generators]}


def load_action(path):
    with open(path) as fh:
        data = json.load(fh)
    return AbelianLinearAction.from_dict(data), data


def save_action(action, path):
    Path(path).write_text(json.dumps(action.to_dict()))


def element(action, a):
    """The matrix tau(a) = prod_i g_i^{a_i}, computed exactly."""
    a = tuple(int(v) for v in a)
    if len(a) != action.k:
        raise ValueError(f"element needs {action.k} exponents, got {len(a)}")
    result = IntegerMatrix.identity(action.n)
    for g, e in zip(action.generators, a):
        if e:
            result = result @ g.power(e)
    return result


def is_ergodic(A):
    """No eigenvalue is a root of unity: Phi_d does not divide the charpoly for any phi(d) <= n."""
    A = as_matrix(A)
    _require_unimodular(A)
    p = A.charpoly()
    for d in intpoly.cyclotomic_orders(A.n):
        if intpoly.divides(list(intpoly.cyclotomic(d)), p):
            return False
    return True


def certified_moduli(p, dps=50):
    """Rigorous enclosures of |mu| for every root of a squarefree integer polynomial.

    Roots are located with mpmath and enclosed by Weierstrass inclusion disks
    evaluated in interval arithmetic; pairwise disjoint disks each hold one root.
    Returns a list of (lo, hi) mpf pairs.
    """
    p = intpoly.primitive(p)
    deg = intpoly.degree(p)
    if deg < 1:
        return []
    with mpmath.workdps(dps):
        roots = mpmath.polyroots(list(reversed(p)), maxsteps=200, extraprec=2 * dps)
    ctx = mpmath.iv
    saved = ctx.dps
    ctx.dps = dps
    try:
        with mpmath.workdps(dps):
            return _enclose(p, deg, roots, ctx)
    finally:
        ctx.dps = saved


def _lower(x):
    return mpmath.mpf(x._mpi_[0])


def _upper(x):
    return mpmath.mpf(x._mpi_[1])


def _enclose(p, deg, roots, ctx):
    lead = ctx.mpf(p[-1])
    centers = [ctx.mpc(ctx.mpf(mpmath.mpf(mpmath.re(z))), ctx.mpf(mpmath.mpf(mpmath.im(z)))) for z in roots]
    radii = []
    for i, z in enumerate(centers):
        val = ctx.mpf(0)
        for c in reversed(p):
            val = val * z + c
        denom = lead
        for j, w in enumerate(centers):
            if j != i:
                denom = denom * (z - w)
        if 0 in abs(denom):
            raise IndeterminateError("coincident root approximations")
        radii.append(_upper(deg * abs(val / denom)))
    enclosures = []
    for i, z in enumerate(roots):
        for j in range(i + 1, len(roots)):
            if abs(z - roots[j]) <= radii[i] + radii[j]:
                raise IndeterminateError("inclusion disks overlap; increase precision")
        mod = abs(centers[i])
        enclosures.append((_lower(mod) - radii[i], _upper(mod) + radii[i]))
    return enclosures


def is_anosov_linear(A, tol=1e-9, dps=50):
    """Hyperbolicity of a unimodular integer matrix, certified by interval arithmetic."""
    A = as_matrix(A)
    _require_unimodular(A)
    if not is_ergodic(A):
        return False
    sqf = intpoly.squarefree_part(A.charpoly())
    lo_band, hi_band = 1 - tol, 1 + tol
    for lo, hi in certified_moduli(sqf, dps=dps):
        if hi < lo_band or lo > hi_band:
            continue
        if lo >= lo_band and hi <= hi_band:
            return False
        raise IndeterminateError(f"|mu| in [{mpmath.nstr(lo, 15)}, {mpmath.nstr(hi, 15)}] straddles 1 +/- {tol}")
    return True


@dataclass(frozen=True)
class LatticeCheck:
    ok: bool
    failing: tuple | None
    checked: int

    def __bool__(self):
        return self.ok


def box_elements(k, box):
    """Nonzero integer vectors with sup-norm <= box, ordered by sup-norm then lexicographically."""
    pts = [a for a in itertools.product(range(-box, box + 1), repeat=k) if any(a)]
    pts.sort(key=lambda a: (max(abs(v) for v in a), a))
    return pts


def ergodic_lattice_check(action, box):
    """Ergodicity of every nonzero element in the sup-norm box.

    A finite box can only refute ergodicity of the whole group, never certify it.
    """
    checked = 0
    for a in box_elements(action.k, box):
        checked += 1
        if not is_ergodic(element(action, a)):
            return LatticeCheck(False, a, checked)
    return LatticeCheck(True, None, checked)
