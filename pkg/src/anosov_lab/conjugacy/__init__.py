"""Conjugacy solver for perturbed affine actions and its diagnostics."""

from anosov_lab.conjugacy.maps import (
    ComposedMap,
    ConjugatedMap,
    NearIdentity,
    NonlinearAction,
    NonlinearMap,
    TrigPolynomial,
    conjugated_action,
    perturbed_action,
    q_of,
)
from anosov_lab.conjugacy.solver import (
    ConjugacyError,
    ConjugacyReport,
    select_expanding_element,
    solve_component,
    solve_conjugacy,
)

__all__ = [
    "ComposedMap", "ConjugatedMap", "NearIdentity", "NonlinearAction", "NonlinearMap", "TrigPolynomial",
    "conjugated_action", "perturbed_action", "q_of", "ConjugacyError", "ConjugacyReport",
    "select_expanding_element", "solve_component", "solve_conjugacy",
]
