"""Fixed-point series for the conjugacy correction, one coarse subspace at a time."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from anosov_lab.actions import box_elements
from anosov_lab.mixing import GridFunction, grid_points
from anosov_lab.reduce import CHUNK, apply_linear, chunked
from anosov_lab.spectrum import compute_spectrum

log = logging.getLogger(__name__)


class ConjugacyError(RuntimeError):
    """Solver failure; ``kind`` is one of the documented failure names."""

    def __init__(self, kind, detail="", **info):
        self.kind = kind
        self.info = info
        super().__init__(f"{kind}: {detail}" if detail else kind)


def expanding_elements(spec, cls, radius):
    """Candidates with sup-norm <= radius, best first: largest minimal exponent on the class.

    Ties go to the smaller l1 norm, then lexicographic order.
    """
    C = spec.coefficient_matrix[list(cls.members)]
    scored = []
    for a in box_elements(spec.k, radius):
        worst = float(np.min(C @ np.asarray(a, dtype=float)))
        if worst > 0:
            scored.append((-round(worst, 12), sum(abs(v) for v in a), a))
    scored.sort()
    return [a for _, _, a in scored]


def select_expanding_element(spec, cls, radius):
    found = expanding_elements(spec, cls, radius)
    if not found:
        raise ConjugacyError("no expanding element in radius", f"radius {radius}")
    return found[0]


@dataclass
class ComponentSolution:
    """Truncated series h_V = sum_{m<terms} A_V^{-m} Q_V(a^m x) for one coarse class."""

    class_index: int
    element: tuple
    terms: int
    term_norms: list
    ratios: list
    contraction: float
    basis: np.ndarray
    coords: np.ndarray
    c_inv: np.ndarray
    word: object
    values: GridFunction | None = None

    @property
    def last_term_norm(self):
        return self.term_norms[-1]

    def coordinates(self, points, threads=1):
        """V-coordinates of h_V at arbitrary points, with the same truncation."""
        return chunked(lambda block: _series_block(self, block, self.terms)[0], points, threads=threads)

    def evaluate(self, points, threads=1):
        return apply_linear(self.basis, self.coordinates(points, threads))


def _series_block(sol, x, terms):
    """Sum the first ``terms`` series terms at the rows of x; also returns per-term sup norms."""
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    total = np.zeros((len(x), sol.c_inv.shape[0]))
    power = sol.c_inv.copy()
    norms = []
    for _ in range(terms):
        d, x_next = sol.word.step(x)
        term = apply_linear(power, apply_linear(sol.coords, d))
        total = total + term
        norms.append(float(np.max(np.linalg.norm(apply_linear(sol.basis, term), axis=1))) if len(x) else 0.0)
        power = power @ sol.c_inv
        x = x_next
    return total, norms


def solve_component(action, spec, class_index, a, resolution, tol=1e-9, max_terms=400, threads=1):
    """Sum the series on the grid until the geometric tail bound drops below ``tol``."""
    cls = spec.coarse_classes[class_index]
    a = tuple(int(v) for v in a)
    worst = float(np.min(spec.coefficient_matrix[list(cls.members)] @ np.asarray(a, dtype=float)))
    lin_inv = action.linear_action.element(a).inverse().to_array()
    c_inv = cls.restriction(lin_inv)
    rho = float(np.max(np.abs(np.linalg.eigvals(c_inv)))) if c_inv.size else 0.0
    if worst <= 0 or rho >= 1:
        raise ConjugacyError("non-contraction", f"spectral radius of A_V^-1 at a={a} is {rho:.6g}",
                             element=a, spectral_radius=rho)
    sol = ComponentSolution(class_index, a, 0, [], [], rho, cls.basis, cls.coords, c_inv, action.element(a))

    pts = grid_points(resolution, spec.n).reshape(-1, spec.n)
    blocks = [pts[i:i + CHUNK] for i in range(0, len(pts), CHUNK)]
    states = [(b.copy(), np.zeros((len(b), cls.dim))) for b in blocks]
    power = c_inv.copy()

    def advance(state):
        x, total = state
        d, x_next = sol.word.step(x)
        term = apply_linear(power, apply_linear(cls.coords, d))
        return (x_next, total + term), float(np.max(np.linalg.norm(apply_linear(cls.basis, term), axis=1)))

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for m in range(max_terms):
            results = list(pool.map(advance, states)) if pool else [advance(s) for s in states]
            states = [r[0] for r in results]
            norm = max(r[1] for r in results)
            sol.term_norms.append(norm)
            power = power @ c_inv
            if m > 0 and sol.term_norms[-2] > 0:
                sol.ratios.append(norm / sol.term_norms[-2])
            sol.terms = m + 1
            if norm == 0.0:
                break
            if sol.ratios:
                q = sol.ratios[-1]
                if q < 1 and norm < tol * (1 - q) / q:
                    break
        else:
            raise ConjugacyError("truncation failure", f"last term {sol.term_norms[-1]:.3e} after {max_terms} terms",
                                 element=a, last_term=sol.term_norms[-1])
    finally:
        if pool:
            pool.shutdown()
    coords = np.concatenate([s[1] for s in states])
    values = apply_linear(cls.basis, coords).reshape((resolution,) * spec.n + (spec.n,))
    sol.values = GridFunction(values, spec.n)
    log.info("class %d, element %s: %d terms, last %.3e", class_index, a, sol.terms, sol.last_term_norm)
    return sol


def fixed_point_defect(action, sol, points, threads=1):
    """sup |F_V(h_V) - h_V| with F_V(h)(x) = Q_V(x) + A_V^-1 h(a x)."""
    points = np.asarray(points, dtype=float)
    d, image = sol.word.step(points)
    qv = apply_linear(sol.c_inv, apply_linear(sol.coords, d))
    mapped = apply_linear(sol.c_inv, sol.coordinates(image, threads))
    diff = apply_linear(sol.basis, qv + mapped - sol.coordinates(points, threads))
    return float(np.max(np.linalg.norm(diff, axis=1)))


@dataclass
class ConjugacyReport:
    h: GridFunction
    components: list
    per_generator_residual: list
    residual_tol: float
    tol: float
    h_at_zero: np.ndarray
    h_mean: np.ndarray
    fourier_decay: object = None
    expansion_probe: list = field(default_factory=list)

    @property
    def success(self):
        return all(r <= self.residual_tol for r in self.per_generator_residual)

    def evaluate(self, points, threads=1):
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape)
        for sol in self.components:
            out = out + sol.evaluate(points, threads)
        return out


def generator_residuals(action, components, resolution, threads=1):
    """sup over the grid of |d_g(x) + h(g x) - A_g h(x)| for every generator g."""
    pts = grid_points(resolution, action.n).reshape(-1, action.n)

    def h_at(x):
        out = np.zeros(x.shape)
        for sol in components:
            out = out + sol.evaluate(x, threads)
        return out

    h_grid = sum(sol.values.samples.reshape(-1, action.n) for sol in components) if components \
        else np.zeros(pts.shape)
    res = []
    for g in action.maps:
        d, image = g.step(pts)
        r = d + h_at(image) - apply_linear(g.A, h_grid)
        res.append(float(np.max(np.linalg.norm(r, axis=1))))
    return res


def solve_conjugacy(action, resolution, tol=1e-9, residual_tol=1e-6, radius=1, max_terms=400,
                    elements=None, spec=None, threads=1, check=True):
    """Assemble h = sum_V h_V over all coarse classes and verify every generator.

    ``elements`` may fix the expanding element per class index.
    """
    spec = spec if spec is not None else compute_spectrum(action.linear_action)
    if spec.degenerate:
        raise ConjugacyError("non-contraction", "the linear part has a zero Lyapunov functional")
    components = []
    for i, cls in enumerate(spec.coarse_classes):
        a = (elements or {}).get(i) or select_expanding_element(spec, cls, radius)
        components.append(solve_component(action, spec, i, a, resolution, tol, max_terms, threads))
    shape = (resolution,) * spec.n + (spec.n,)
    h = np.zeros(shape)
    for sol in components:
        h = h + sol.values.samples
    hgrid = GridFunction(h, spec.n)
    residuals = generator_residuals(action, components, resolution, threads)
    report = ConjugacyReport(hgrid, components, residuals, residual_tol, tol, h.reshape(-1, spec.n)[0].copy(),
                             np.asarray(hgrid.mean()))
    if check:
        for i, r in enumerate(residuals):
            if r > residual_tol:
                raise ConjugacyError("residual exceeds tol", f"generator {i}: {r:.3e} > {residual_tol:g}",
                                     generator=i, residual=r, report=report)
    return report
