"""Closed-form toral maps: affine part plus a trigonometric-polynomial perturbation."""

from __future__ import annotations

import itertools
import math

import numpy as np

from anosov_lab.actions import AbelianLinearAction, ActionValidationError, IntegerMatrix, as_matrix
from anosov_lab.reduce import apply_linear

TWO_PI = 2.0 * math.pi
NEWTON_TOL = 1e-13
NEWTON_MAXITER = 50


class NewtonFailure(ArithmeticError):
    pass


class TrigPolynomial:
    """p(x) = sum_t amp_t * s_t(2 pi m_t . x) with s_t in {sin, cos}; values in R^c."""

    def __init__(self, n, terms=()):
        self.n = int(n)
        freqs, amps, kinds = [], [], []
        for m, amp, kind in terms:
            if kind not in ("sin", "cos"):
                raise ValueError(f"phase must be 'sin' or 'cos', got {kind!r}")
            m = [int(v) for v in m]
            if len(m) != self.n:
                raise ValueError(f"frequency {m} has wrong length for n={self.n}")
            freqs.append(m)
            amps.append([float(v) for v in amp])
            kinds.append(kind == "sin")
        self.freqs = np.array(freqs, dtype=np.int64).reshape(-1, self.n)
        self.amps = np.array(amps, dtype=float).reshape(len(freqs), -1) if freqs else np.zeros((0, self.n))
        self.is_sin = np.array(kinds, dtype=bool)

    @classmethod
    def from_spec(cls, n, entries):
        """Build from dicts {"frequency": [...], "amplitude": [...], "phase": "sin"|"cos"}."""
        return cls(n, [(e["frequency"], e["amplitude"], e.get("phase", "sin")) for e in entries])

    def to_spec(self):
        return [{"frequency": m.tolist(), "amplitude": a.tolist(), "phase": "sin" if s else "cos"}
                for m, a, s in zip(self.freqs, self.amps, self.is_sin)]

    @property
    def components(self):
        return self.amps.shape[1]

    @property
    def is_zero(self):
        return len(self.freqs) == 0 or not np.any(self.amps)

    def transform(self, B):
        """The polynomial x -> B p(x)."""
        B = np.asarray(B, dtype=float)
        out = TrigPolynomial(self.n)
        out.freqs = self.freqs.copy()
        out.amps = self.amps @ B.T
        out.is_sin = self.is_sin.copy()
        return out

    def _phases(self, x):
        return TWO_PI * apply_linear(self.freqs, np.asarray(x, dtype=float))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not len(self.freqs):
            return np.zeros(x.shape[:-1] + (self.components,))
        th = self._phases(x)
        w = np.where(self.is_sin, np.sin(th), np.cos(th))
        return np.einsum("...t,tc->...c", w, self.amps, optimize=False)

    def jet(self, x, order):
        """[p, Dp, D^2p, D^3p][:order+1] with D^r p of shape (..., c) + (n,)*r."""
        if order > 3:
            raise ValueError("derivatives are provided up to order 3")
        x = np.asarray(x, dtype=float)
        c, n = self.components, self.n
        if not len(self.freqs):
            return [np.zeros(x.shape[:-1] + (c,) + (n,) * r) for r in range(order + 1)]
        th = self._phases(x)
        s, co = np.sin(th), np.cos(th)
        # r-th derivative of sin cycles sin, cos, -sin, -cos; of cos cycles cos, -sin, -cos, sin
        cycle_sin = (s, co, -s, -co)
        cycle_cos = (co, -s, -co, s)
        m = self.freqs.astype(float)
        out = []
        for r in range(order + 1):
            w = np.where(self.is_sin, cycle_sin[r], cycle_cos[r]) * TWO_PI**r
            if r == 0:
                out.append(np.einsum("...t,tc->...c", w, self.amps, optimize=False))
            elif r == 1:
                out.append(np.einsum("...t,tc,ta->...ca", w, self.amps, m, optimize=False))
            elif r == 2:
                out.append(np.einsum("...t,tc,ta,tb->...cab", w, self.amps, m, m, optimize=False))
            else:
                out.append(np.einsum("...t,tc,ta,tb,td->...cabd", w, self.amps, m, m, m, optimize=False))
        return out


def _inv(J):
    return np.linalg.inv(J)


class ToralMap:
    """Lift x -> A x + d(x) of a toral map, d periodic."""

    linear: IntegerMatrix

    @property
    def n(self):
        return self.linear.n

    @property
    def A(self):
        return self.linear.to_array()

    def displacement(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def inverse(self):
        raise NotImplementedError

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return apply_linear(self.A, x) + self.displacement(x)

    def __call__(self, x):
        return np.mod(self.lift(x), 1.0)

    def step(self, x):
        """Displacement at x and the image point reduced mod 1."""
        x = np.asarray(x, dtype=float)
        d = self.displacement(x)
        return d, np.mod(apply_linear(self.A, x) + d, 1.0)


class NonlinearMap(ToralMap):
    """x -> A x + p(x) with p a trigonometric polynomial."""

    def __init__(self, linear, perturbation=None):
        self.linear = as_matrix(linear)
        if not self.linear.is_unimodular():
            raise ActionValidationError("unimodular", f"linear part has det {self.linear.det()}")
        self.perturbation = perturbation if perturbation is not None else TrigPolynomial(self.linear.n)
        if self.perturbation.n != self.n or (len(self.perturbation.freqs) and self.perturbation.components != self.n):
            raise ValueError("perturbation dimension does not match the linear part")

    def displacement(self, x):
        x = np.asarray(x, dtype=float)
        if self.perturbation.is_zero:
            return np.zeros(x.shape)
        return self.perturbation(x)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        _, dp = self.perturbation.jet(x, 1)
        return self.A + dp

    def jet(self, x, order):
        parts = self.perturbation.jet(x, order)
        x = np.asarray(x, dtype=float)
        parts[0] = parts[0] + apply_linear(self.A, x)
        if order >= 1:
            parts[1] = parts[1] + self.A
        return parts

    def inverse(self):
        return InverseMap(self)


def newton_solve(func, jac, target, guess, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
    """Per-point Newton iteration for func(z) = target; each point stops on its own."""
    z = np.array(guess, dtype=float, copy=True)
    active = np.ones(z.shape[0], dtype=bool)
    for _ in range(maxiter):
        idx = np.flatnonzero(active)
        if not len(idx):
            return z
        r = func(z[idx]) - target[idx]
        done = np.max(np.abs(r), axis=1) <= tol
        step = np.linalg.solve(jac(z[idx]), r[..., None])[..., 0]
        upd = idx[~done]
        z[upd] -= step[~done]
        active[idx[done]] = False
    idx = np.flatnonzero(active)
    if len(idx):
        r = func(z[idx]) - target[idx]
        if np.max(np.abs(r)) > tol:
            raise NewtonFailure(f"Newton inversion did not reach {tol:g} in {maxiter} iterations")
    return z


class InverseMap(ToralMap):
    """Inverse of a NonlinearMap, evaluated by Newton iteration from the linear guess."""

    def __init__(self, forward):
        self.forward = forward
        self.linear = forward.linear.inverse()

    def lift_inverse(self, y):
        y = np.asarray(y, dtype=float)
        shape = y.shape
        flat = y.reshape(-1, self.n)
        z = newton_solve(self.forward.lift, self.forward.jacobian, flat, apply_linear(self.A, flat))
        return z.reshape(shape)

    def displacement(self, y):
        y = np.asarray(y, dtype=float)
        return self.lift_inverse(y) - apply_linear(self.A, y)

    def jacobian(self, y):
        return _inv(self.forward.jacobian(self.lift_inverse(y)))

    def inverse(self):
        return self.forward


class NearIdentity:
    """psi(x) = x + p(x); its inverse is evaluated by Newton iteration."""

    def __init__(self, perturbation):
        self.perturbation = perturbation
        self.n = perturbation.n

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.perturbation(x)

    def jacobian(self, x):
        _, dp = self.perturbation.jet(x, 1)
        return np.eye(self.n) + dp

    def inverse(self, y, tol=NEWTON_TOL):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1, self.n)
        return newton_solve(self, self.jacobian, flat, flat, tol=tol).reshape(y.shape)


class ConjugatedMap(ToralMap):
    """psi o A o psi^-1 for a near-identity psi; commuting A's give commuting maps."""

    def __init__(self, linear, psi):
        self.linear = as_matrix(linear)
        if not self.linear.is_unimodular():
            raise ActionValidationError("unimodular", f"linear part has det {self.linear.det()}")
        self.psi = psi if isinstance(psi, NearIdentity) else NearIdentity(psi)

    def displacement(self, y):
        y = np.asarray(y, dtype=float)
        z = self.psi.inverse(y)
        p = self.psi.perturbation
        return p(apply_linear(self.A, z)) - apply_linear(self.A, p(z))

    def jacobian(self, y):
        z = self.psi.inverse(np.asarray(y, dtype=float))
        inner = self.psi.jacobian(apply_linear(self.A, z))
        return np.einsum("...ij,jk,...kl->...il", inner, self.A, _inv(self.psi.jacobian(z)), optimize=False)

    def inverse(self):
        return ConjugatedMap(self.linear.inverse(), self.psi)


class IdentityMap(ToralMap):
    def __init__(self, n):
        self.linear = IntegerMatrix.identity(n)

    def displacement(self, x):
        return np.zeros(np.shape(x))

    def jacobian(self, x):
        x = np.asarray(x)
        return np.broadcast_to(np.eye(self.n), x.shape[:-1] + (self.n, self.n)).copy()

    def inverse(self):
        return self


class ComposedMap(ToralMap):
    """f_K o ... o f_1 for ``maps = [f_1, ..., f_K]``; points are reduced mod 1 between factors."""

    def __init__(self, maps):
        if not maps:
            raise ValueError("empty word")
        self.maps = list(maps)
        lin = self.maps[0].linear
        for f in self.maps[1:]:
            lin = f.linear @ lin
        self.linear = lin

    def step(self, x):
        y = np.mod(np.asarray(x, dtype=float), 1.0)
        total = np.zeros(y.shape)
        for f in self.maps:
            d, y = f.step(y)
            total = apply_linear(f.A, total) + d
        return total, y

    def displacement(self, x):
        return self.step(x)[0]

    def __call__(self, x):
        return self.step(x)[1]

    def jacobian(self, x):
        y = np.mod(np.asarray(x, dtype=float), 1.0)
        J = None
        for f in self.maps:
            Jf = f.jacobian(y)
            J = Jf if J is None else np.einsum("...ij,...jk->...ik", Jf, J, optimize=False)
            y = f(y)
        return J

    def jet(self, x, order):
        parts = None
        y = np.mod(np.asarray(x, dtype=float), 1.0)
        for f in self.maps:
            g = f.jet(y, order)
            parts = g if parts is None else compose_jets(g, parts)
            y = np.mod(parts[0], 1.0)
        return parts

    def inverse(self):
        return ComposedMap([f.inverse() for f in reversed(self.maps)])


def compose_jets(outer, inner):
    """Jets of G o F from jets of G (evaluated at F(x)) and of F (at x), up to order 3."""
    order = min(len(outer), len(inner)) - 1
    out = [outer[0]]
    if order >= 1:
        out.append(np.einsum("...ij,...ja->...ia", outer[1], inner[1], optimize=False))
    if order >= 2:
        d2 = np.einsum("...ijk,...ja,...kb->...iab", outer[2], inner[1], inner[1], optimize=False)
        d2 = d2 + np.einsum("...ij,...jab->...iab", outer[1], inner[2], optimize=False)
        out.append(d2)
    if order >= 3:
        G1, G2, G3 = outer[1], outer[2], outer[3]
        F1, F2, F3 = inner[1], inner[2], inner[3]
        d3 = np.einsum("...ijkl,...ja,...kb,...lc->...iabc", G3, F1, F1, F1, optimize=False)
        mixed = np.einsum("...ijk,...jab,...kc->...iabc", G2, F2, F1, optimize=False)
        d3 = d3 + mixed + mixed.swapaxes(-1, -2) + np.moveaxis(mixed, -1, -3)
        d3 = d3 + np.einsum("...ij,...jabc->...iabc", G1, F3, optimize=False)
        out.append(d3)
    return out


def word(maps, a):
    """Composite g_1^{a_1} ... g_k^{a_k} as a ComposedMap (generators commute)."""
    factors = []
    for g, e in zip(maps, a):
        f = g if e > 0 else g.inverse()
        factors.extend([f] * abs(int(e)))
    if not factors:
        return IdentityMap(maps[0].n)
    return ComposedMap(factors)


def torus_distance(x, y):
    d = np.mod(np.asarray(x) - np.asarray(y) + 0.5, 1.0) - 0.5
    return np.sqrt(np.sum(d * d, axis=-1))


class NonlinearAction:
    """k commuting toral maps; linear parts must commute exactly and the maps on a check grid."""

    def __init__(self, maps, commutation_tol=1e-10, check_resolution=8):
        self.maps = list(maps)
        if not self.maps:
            raise ActionValidationError("rank", "need at least one map")
        if any(f.n != self.maps[0].n for f in self.maps):
            raise ActionValidationError("dimension", "maps act on tori of different dimensions")
        self.linear_action = AbelianLinearAction(tuple(f.linear for f in self.maps))
        self.commutation_tol = commutation_tol
        self.commutation_defect = 0.0
        if len(self.maps) > 1:
            pts = _check_points(self.n, check_resolution)
            for f, g in itertools.combinations(self.maps, 2):
                err = float(np.max(torus_distance(f(g(pts)), g(f(pts)))))
                self.commutation_defect = max(self.commutation_defect, err)
            if self.commutation_defect > commutation_tol:
                raise ActionValidationError(
                    "commutation", f"maps commute only to {self.commutation_defect:.3e} on the check grid "
                    f"(tolerance {commutation_tol:g}); use rank-one mode for a single map")

    @classmethod
    def rank_one(cls, f):
        return cls([f])

    @property
    def n(self):
        return self.maps[0].n

    @property
    def k(self):
        return len(self.maps)

    def element(self, a):
        a = tuple(int(v) for v in a)
        if len(a) != self.k:
            raise ValueError(f"element needs {self.k} exponents")
        return word(self.maps, a)

    def restrict(self, index):
        return NonlinearAction.rank_one(self.maps[index])


def _check_points(n, resolution):
    axes = [np.arange(resolution) / resolution + 0.5 / resolution] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)


def q_of(f):
    """Q(x) = A^-1 (f(x) - A x); a TrigPolynomial when f is a NonlinearMap, else a callable."""
    Ainv = f.linear.inverse().to_array()
    if isinstance(f, NonlinearMap):
        return f.perturbation.transform(Ainv)
    return lambda x: apply_linear(Ainv, f.displacement(x))


def conjugated_action(linear_action, psi_perturbation, **kwargs):
    psi = NearIdentity(psi_perturbation)
    return NonlinearAction([ConjugatedMap(g, psi) for g in linear_action.generators], **kwargs)


def perturbed_action(linear_action, perturbations, **kwargs):
    """One TrigPolynomial (or None) per generator."""
    return NonlinearAction([NonlinearMap(g, p) for g, p in zip(linear_action.generators, perturbations)], **kwargs)
