"""Fourier analysis on dyadic torus grids and matrix-coefficient decay experiments."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from anosov_lab.actions import as_matrix, element, is_ergodic
from anosov_lab.reduce import chunked, linear_fit, tree_mean


def _check_resolution(resolution):
    if resolution < 2 or resolution & (resolution - 1):
        raise ValueError(f"resolution must be a power of two >= 2, got {resolution}")


class GridFunction:
    """Samples of f at the points j/R of the n-torus, with their discrete Fourier coefficients.

    ``samples`` has shape (R,)*n, or (R,)*n + (c,) for an R^c-valued function.
    ``fourier[m]`` is the coefficient of exp(2 pi i m.x); negative frequencies sit at m mod R.
    """

    def __init__(self, samples, n=None):
        samples = np.asarray(samples)
        if n is None:
            n = samples.ndim
        if samples.ndim not in (n, n + 1):
            raise ValueError("samples must have n grid axes and at most one component axis")
        R = samples.shape[0]
        _check_resolution(R)
        if any(s != R for s in samples.shape[:n]):
            raise ValueError("grid must have the same resolution on every axis")
        self.samples = samples
        self.n = n
        self.resolution = R

    @classmethod
    def from_fourier(cls, coeffs, n=None):
        coeffs = np.asarray(coeffs)
        n = coeffs.ndim if n is None else n
        R = coeffs.shape[0]
        samples = np.fft.ifftn(coeffs, axes=tuple(range(n))) * R**n
        return cls(samples, n)

    @classmethod
    def from_callable(cls, func, resolution, n):
        return cls(func(grid_points(resolution, n)), n)

    @property
    def components(self):
        return 1 if self.samples.ndim == self.n else self.samples.shape[-1]

    @cached_property
    def fourier(self):
        axes = tuple(range(self.n))
        return np.fft.fftn(self.samples, axes=axes) / self.resolution**self.n

    def inverse(self):
        """Samples rebuilt from ``fourier`` (round-trip check)."""
        return np.fft.ifftn(self.fourier, axes=tuple(range(self.n))) * self.resolution**self.n

    def mean(self):
        flat = self.samples.reshape((-1,) + self.samples.shape[self.n:])
        return tree_mean(flat, axis=0)

    def l2_norm(self):
        flat = self.samples.reshape((-1,) + self.samples.shape[self.n:])
        sq = np.abs(flat) ** 2
        if sq.ndim > 1:
            sq = sq.sum(axis=-1)
        return float(math.sqrt(tree_mean(sq)))

    def sup_norm(self):
        return float(np.max(self._pointwise_abs(self.samples)))

    def _pointwise_abs(self, values):
        if values.ndim == self.n:
            return np.abs(values)
        return np.sqrt(np.sum(np.abs(values) ** 2, axis=-1))

    def real(self):
        return GridFunction(np.real(self.samples), self.n)

    def __sub__(self, other):
        return GridFunction(self.samples - other.samples, self.n)


def grid_points(resolution, n):
    """Array of shape (R,)*n + (n,) holding the grid points j/R."""
    axes = [np.arange(resolution) / resolution] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def frequency_grid(resolution, n):
    """Signed integer frequencies matching ``GridFunction.fourier`` index order."""
    freqs = np.fft.fftfreq(resolution, d=1.0 / resolution).astype(np.int64)
    return np.stack(np.meshgrid(*[freqs] * n, indexing="ij"), axis=-1)


# observables

def character(m, resolution):
    m = np.asarray(m, dtype=np.int64)
    x = grid_points(resolution, len(m))
    phase = np.zeros(x.shape[:-1])
    for i, mi in enumerate(m):
        # j*m mod R keeps the phase exact before scaling
        j = np.rint(x[..., i] * resolution).astype(np.int64)
        phase = phase + ((j * int(mi)) % resolution)
    return GridFunction(np.exp(2j * np.pi * (phase % resolution) / resolution), len(m))


def sawtooth_wave(t, peak=0.5):
    """Continuous 1-periodic wave rising linearly from 0 to 1 on [0, peak], falling back on [peak, 1]."""
    if not 0 < peak < 1:
        raise ValueError("peak must lie in (0, 1)")
    t = np.mod(t, 1.0)
    return np.where(t < peak, t / peak, (1.0 - t) / (1.0 - peak))


def sawtooth(resolution, peaks):
    """Product over coordinates of sawtooth waves; a ``None`` peak makes that factor 1."""
    n = len(peaks)
    x = grid_points(resolution, n)
    out = np.ones(x.shape[:-1])
    for i, w in enumerate(peaks):
        if w is not None:
            out = out * sawtooth_wave(x[..., i], w)
    return GridFunction(out, n)


def triangle(resolution, n, axes=(0,)):
    """2 * dist(x_i, Z) multiplied over the chosen axes."""
    return sawtooth(resolution, [0.5 if i in axes else None for i in range(n)])


def fourier_series(resolution, n, terms):
    """Finite sum of c_m exp(2 pi i m.x) given as {m: c_m}."""
    coeffs = np.zeros((resolution,) * n, dtype=complex)
    for m, c in terms.items():
        if any(abs(int(v)) >= resolution // 2 for v in m):
            raise ValueError(f"frequency {m} is beyond Nyquist for resolution {resolution}")
        coeffs[tuple(int(v) % resolution for v in m)] += complex(c)
    return GridFunction.from_fourier(coeffs, n)


# Fejer kernels

def fejer_weights(l, resolution):
    """Triangular weights 1 - |j|/(l+1) on |j| <= l, laid out in FFT order."""
    _check_resolution(resolution)
    if l < 0 or l >= resolution // 2:
        raise ValueError(f"Fejer order {l} is beyond Nyquist for resolution {resolution}")
    j = np.fft.fftfreq(resolution, d=1.0 / resolution)
    return np.where(np.abs(j) <= l, 1.0 - np.abs(j) / (l + 1), 0.0)


def _tensor_weights(w, n):
    out = w
    for _ in range(n - 1):
        out = np.multiply.outer(out, w)
    return out


def fejer_kernel(l, resolution):
    return fejer_product_kernel(l, resolution, 1)


def fejer_product_kernel(l, resolution, n):
    coeffs = _tensor_weights(fejer_weights(l, resolution), n)
    g = GridFunction.from_fourier(coeffs.astype(complex), n)
    return GridFunction(np.real(g.samples), n)


def fejer_approximate(f, m):
    """F_m convolved with f, done as a Fourier multiplier."""
    w = _tensor_weights(fejer_weights(m, f.resolution), f.n)
    coeffs = f.fourier * (w if f.samples.ndim == f.n else w[..., None])
    out = GridFunction.from_fourier(coeffs, f.n)
    if not np.iscomplexobj(f.samples):
        out = out.real()
    return out


# Holder norms

@dataclass(frozen=True)
class HolderEstimate:
    theta: float
    sup_norm: float
    seminorm: float
    offsets_used: int

    @property
    def total(self):
        return self.sup_norm + self.seminorm


def holder_offsets(resolution, n):
    """Deterministic offset schedule in grid units.

    Nearest neighbours first (one of each +/- pair), then 2^j along each axis up to R/2.
    """
    near = []
    for h in itertools.product((-1, 0, 1), repeat=n):
        nz = [v for v in h if v]
        if nz and nz[0] > 0:
            near.append(h)
    near.sort(key=lambda h: (sum(abs(v) for v in h), tuple(-v for v in h)))
    dyadic = []
    step = 2
    while step <= resolution // 2:
        for i in range(n):
            dyadic.append(tuple(step if j == i else 0 for j in range(n)))
        step *= 2
    return near + dyadic


def holder_norm(f, theta, pairs=None):
    """Lower estimate of the theta-Holder norm from the offset schedule.

    ``pairs`` caps how many offsets are used; every offset is compared at all grid points.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    offsets = holder_offsets(f.resolution, f.n)
    if pairs is not None:
        offsets = offsets[:max(int(pairs), 0)]
    axes = tuple(range(f.n))
    semi = 0.0
    for h in offsets:
        diff = np.roll(f.samples, tuple(-v for v in h), axis=axes) - f.samples
        length = math.sqrt(sum((v / f.resolution) ** 2 for v in h))
        semi = max(semi, float(np.max(f._pointwise_abs(diff))) / length**theta)
    return HolderEstimate(float(theta), f.sup_norm(), semi, len(offsets))


# matrix coefficients

def _grid_indices(resolution, n):
    idx = np.indices((resolution,) * n).reshape(n, -1).T
    return idx.astype(np.int64)


def composed_samples(f, A, threads=1):
    """Samples of x -> f(A x mod 1); exact because A permutes the grid."""
    A = as_matrix(A)
    if A.n != f.n:
        raise ValueError("matrix and grid dimensions differ")
    R = f.resolution
    Am = A.mod(R)

    def gather(block):
        img = np.zeros_like(block)
        for j in range(f.n):
            img = img + block[:, j, None] * Am[:, j]
        img %= R
        return f.samples[tuple(img.T)]

    vals = chunked(gather, _grid_indices(R, f.n), threads=threads)
    return vals.reshape(f.samples.shape)


def matrix_coefficient(f, g, A, threads=1):
    """<f o A, g> - (mean f)(conj mean g) with Haar quadrature on the grid."""
    if f.resolution != g.resolution or f.n != g.n:
        raise ValueError("f and g must share the grid")
    fa = composed_samples(f, A, threads=threads).reshape(-1)
    corr = tree_mean(fa * np.conj(g.samples.reshape(-1)))
    return complex(corr - f.mean() * np.conj(g.mean()))


# calibration and decay experiment

def admissible_r(sigma_value, n):
    """Midpoint of the admissible interval (1, e^{sigma/(n+2)})."""
    return 0.5 * (1.0 + math.exp(sigma_value / (n + 2)))


def envelope_factor(f_holder, g_holder, f_l2, g_l2):
    return 4.0 * f_holder.total * g_l2 + 2.0 * g_holder.total * f_l2


def fejer_constant(theta, resolution, n, peaks=(0.1, 0.3, 0.5, 0.7, 0.9), orders=None, pairs=None):
    """Smallest C with |F_m * f - f|_sup <= C |f|_theta m^-theta over a sawtooth probe family."""
    if orders is None:
        orders = [2**j for j in range(int(math.log2(resolution // 2)))]
    best = 0.0
    for w in peaks:
        f = sawtooth(resolution, [w] * n)
        norm = holder_norm(f, theta, pairs).total
        for m in orders:
            err = (fejer_approximate(f, m) - f).sup_norm()
            best = max(best, err * m**theta / norm)
    return best


def is_grid_resolved(M, resolution):
    """True when every entry of M fits in (-R/2, R/2], so f o M is not dominated by grid aliasing."""
    return max(abs(v) for row in M.rows for v in row) <= resolution // 2


@dataclass
class DecayRow:
    a: tuple
    norm: float
    coefficient: float
    envelope: float
    ergodic: bool
    resolved: bool


@dataclass
class DecayReport:
    rows: list
    theta: float
    r: float
    sigma: float
    constant: float
    calibration: str
    factor: float
    beta: float
    intercept: float
    r_squared: float
    beta_resolved: float | None
    r_squared_resolved: float | None
    nonergodic: list = field(default_factory=list)

    @property
    def envelope_holds(self):
        return all(row.coefficient <= row.envelope * (1 + 1e-12) for row in self.rows if row.ergodic)


def _fit(rows):
    pts = [(row.norm, math.log(row.coefficient)) for row in rows if row.ergodic and row.coefficient > 0]
    if len(pts) < 2 or len({p[0] for p in pts}) < 2:
        return None, None, None
    slope, intercept, r2 = linear_fit(*zip(*pts))
    return -slope, intercept, r2


def decay_experiment(action, f, g, theta, elements, calibration="first", sigma_value=None,
                     pairs=None, threads=1):
    """Measured |<f o tau(a), g> - int f int g| against the Holder envelope.

    ``calibration`` is "first" (C fitted at the smallest element) or "fejer"
    (C from the Fejer approximation probe family).
    """
    if sigma_value is None:
        from anosov_lab.spectrum import compute_spectrum, sigma
        sigma_value = sigma(compute_spectrum(action))
    elements = sorted((tuple(int(v) for v in a) for a in elements),
                      key=lambda a: (math.sqrt(sum(v * v for v in a)), a))
    if not elements:
        raise ValueError("no elements given")
    r = admissible_r(sigma_value, action.n)
    fh, gh = holder_norm(f, theta, pairs), holder_norm(g, theta, pairs)
    factor = envelope_factor(fh, gh, f.l2_norm(), g.l2_norm())

    measured = []
    for a in elements:
        M = element(action, a)
        measured.append((a, math.sqrt(sum(v * v for v in a)), abs(matrix_coefficient(f, g, M, threads)),
                         is_ergodic(M), is_grid_resolved(M, f.resolution)))

    if calibration == "first":
        a0, norm0, c0, _, _ = measured[0]
        constant = c0 / (factor * r ** (-theta * norm0))
    elif calibration == "fejer":
        constant = fejer_constant(theta, f.resolution, f.n, pairs=pairs)
    else:
        raise ValueError(f"unknown calibration {calibration!r}")

    rows = [DecayRow(a, norm, c, constant * factor * r ** (-theta * norm), erg, res)
            for a, norm, c, erg, res in measured]
    beta, intercept, r2 = _fit(rows)
    beta_res, _, r2_res = _fit([row for row in rows if row.resolved])
    return DecayReport(rows, float(theta), r, float(sigma_value), float(constant), calibration, factor,
                       beta, intercept, r2, beta_res, r2_res,
                       [row.a for row in rows if not row.ergodic])
