"""Diagnostics: derivative growth along orbits, composition norms, Fourier decay of h."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from anosov_lab.conjugacy.maps import ComposedMap, NonlinearMap, compose_jets
from anosov_lab.mixing import GridFunction, frequency_grid, grid_points
from anosov_lab.reduce import linear_fit, tree_mean


class SpectralField:
    """Trigonometric interpolant of a vector GridFunction, truncated to its significant modes."""

    def __init__(self, h, rel_threshold=1e-13):
        coeffs = h.fourier
        if coeffs.ndim == h.n:
            coeffs = coeffs[..., None]
        mags = np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=-1))
        cut = rel_threshold * float(mags.max()) if mags.size else 0.0
        keep = mags > cut
        self.freqs = frequency_grid(h.resolution, h.n)[keep].astype(float)
        self.coeffs = coeffs[keep]
        self.n = h.n

    def _waves(self, x):
        phase = 2j * np.pi * np.einsum("...j,tj->...t", np.asarray(x, dtype=float), self.freqs, optimize=False)
        return np.exp(phase)

    def __call__(self, x):
        return np.real(np.einsum("...t,tc->...c", self._waves(x), self.coeffs, optimize=False))

    def jacobian(self, x):
        w = self._waves(x) * (2j * np.pi)
        return np.real(np.einsum("...t,tc,tj->...cj", w, self.coeffs, self.freqs, optimize=False))


@dataclass
class ExpansionReport:
    element: tuple
    class_index: int
    steps: list
    rate_max: list
    rate_min: list
    band: tuple
    epsilon: float
    slack: float
    transport: str

    @property
    def final_max(self):
        return self.rate_max[-1]

    @property
    def final_min(self):
        return self.rate_min[-1]

    @property
    def within_band(self):
        lo, hi = self.band
        return self.final_min >= lo * math.exp(-self.epsilon) and self.final_max <= hi * math.exp(self.epsilon)


def expansion_band(spec, cls, b, slack=1.0):
    """[e^{chi_m}, e^{chi_M}] over the class's functionals at b, widened by the slack factor in (0, 1]."""
    vals = spec.coefficient_matrix[list(cls.members)] @ np.asarray(b, dtype=float)
    lo, hi = float(vals.min()), float(vals.max())
    return (math.exp(min(slack * lo, lo / slack)), math.exp(max(slack * hi, hi / slack)))


def _oblique(E, F, vecs):
    """Component of vecs (..., n, d) in span E along span F, per point."""
    full = np.concatenate([E, F], axis=-1)
    c = np.linalg.solve(full, vecs)
    return np.einsum("...ij,...jk->...ik", E, c[..., : E.shape[-1], :], optimize=False)


def expansion_probe(action, spec, class_index, b, n_max, resolution, h=None, slack=1.0, epsilon=0.05):
    """n-th root growth of D(alpha(b)^n) on the transported class subspace, max/min over the grid.

    With ``h`` given, the subspace at y is D phi(y)^-1 V along D phi(y)^-1 W with phi = I + h;
    otherwise the linear V and W are used at every point.
    """
    cls = spec.coarse_classes[class_index]
    f = action.element(b)
    pts = grid_points(resolution, spec.n).reshape(-1, spec.n)
    N, n, d = len(pts), spec.n, cls.dim
    field = SpectralField(h) if h is not None else None

    def frames(y):
        if field is None:
            return (np.broadcast_to(cls.basis, (len(y), n, d)),
                    np.broadcast_to(cls.complement, (len(y), n, n - d)))
        Dphi_inv = np.linalg.inv(np.eye(n) + field.jacobian(y))
        return Dphi_inv @ cls.basis, Dphi_inv @ cls.complement

    E0, _ = frames(pts)
    T, _ = np.linalg.qr(E0)
    logscale = np.zeros(N)
    y = pts.copy()
    rate_max, rate_min = [], []
    for step in range(1, n_max + 1):
        J = f.jacobian(y)
        y = f(y)
        T = np.einsum("...ij,...jk->...ik", J, T, optimize=False)
        E, F = frames(y)
        T = _oblique(E, F, T)
        size = np.linalg.norm(T, axis=(-2, -1))
        T = T / size[:, None, None]
        logscale = logscale + np.log(size)
        sv = np.linalg.svd(T, compute_uv=False)
        top = (logscale + np.log(sv[:, 0])) / step
        bottom = (logscale + np.log(sv[:, -1])) / step
        rate_max.append(float(np.exp(top.max())))
        rate_min.append(float(np.exp(bottom.min())))
    return ExpansionReport(tuple(int(v) for v in b), class_index, list(range(1, n_max + 1)), rate_max, rate_min,
                           expansion_band(spec, cls, b, slack), float(epsilon), float(slack),
                           "computed h" if field is not None else "linear subspace")


@dataclass
class CompositionReport:
    order: int
    m: list
    norms: list
    n1: float
    slope: float
    bound_slope: float
    r_squared: float

    @property
    def within_bound(self):
        return self.slope <= self.bound_slope


def _jet(f, x, order):
    if isinstance(f, (NonlinearMap, ComposedMap)):
        return f.jet(x, order)
    raise TypeError("composition probe needs maps with analytic jets")


def composition_norm_probe(f, k, m_max, resolution, slack=0.05):
    """Grid sup of the Frobenius norm of D^k(f^m) for m <= m_max and the fitted log-growth slope.

    N1 is the grid sup of the operator norm of Df; the bound slope is k log N1 (1 + slack).
    """
    if not 1 <= k <= 3:
        raise ValueError("order k must be 1, 2 or 3")
    pts = grid_points(resolution, f.n).reshape(-1, f.n)
    base = _jet(f, pts, 1)
    n1 = float(np.max(np.linalg.norm(base[1], ord=2, axis=(-2, -1))))
    parts = _jet(f, pts, k)
    norms = []
    for m in range(1, m_max + 1):
        if m > 1:
            y = np.mod(parts[0], 1.0)
            parts = compose_jets(_jet(f, y, k), parts)
        dk = parts[k].reshape(len(pts), -1)
        norms.append(float(np.max(np.sqrt(np.sum(dk * dk, axis=1)))))
    ms = list(range(1, m_max + 1))
    positive = [(m, math.log(v)) for m, v in zip(ms, norms) if v > 0]
    if len(positive) >= 2:
        slope, _, r2 = linear_fit(*zip(*positive))
    else:
        slope, r2 = float("-inf"), float("nan")
    return CompositionReport(k, ms, norms, n1, slope, k * math.log(n1) * (1 + slack), r2)


@dataclass
class DecayFit:
    shells: list
    amplitudes: list
    floor: float
    used: int
    poly_exponent: float | None
    poly_r_squared: float | None
    exp_rate: float | None
    exp_r_squared: float | None
    degenerate: bool
    reaches_floor: bool

    @property
    def note(self):
        return "degenerate spectrum" if self.degenerate else ""


def shell_amplitudes(h):
    """Radial averages of |h^(m)| over shells round(|m|) = s, s = 1..R/2."""
    coeffs = h.fourier if h.samples.ndim > h.n else h.fourier[..., None]
    mags = np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=-1)).reshape(-1)
    radius = np.rint(np.linalg.norm(frequency_grid(h.resolution, h.n).reshape(-1, h.n), axis=1)).astype(int)
    shells, amps = [], []
    for s in range(1, h.resolution // 2 + 1):
        sel = mags[radius == s]
        if len(sel):
            shells.append(s)
            amps.append(float(tree_mean(sel)))
    return shells, amps


def fourier_decay_fit(h, floor=1e-12):
    """Polynomial and exponential fits to shell-averaged Fourier amplitudes above ``floor``.

    Fewer than three shells above the floor is flagged as a degenerate spectrum.
    """
    if not isinstance(h, GridFunction):
        raise TypeError("expected a GridFunction")
    shells, amps = shell_amplitudes(h)
    above = [(s, a) for s, a in zip(shells, amps) if a > floor]
    reaches = any(a <= floor for a in amps)
    if len(above) < 3:
        return DecayFit(shells, amps, floor, len(above), None, None, None, None, True, reaches)
    s, a = zip(*above)
    la = [math.log(v) for v in a]
    pslope, _, pr2 = linear_fit([math.log(v) for v in s], la)
    eslope, _, er2 = linear_fit(s, la)
    return DecayFit(shells, amps, floor, len(above), -pslope, pr2, -eslope, er2, False, reaches)
