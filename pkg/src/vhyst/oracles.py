"""
Reference solutions of the unregularized (eps = 0) problems.

In one dimension the forward minimizer is a play operator in closed form. For
d >= 2 and for the inverse problem no closed form is used; the regularized
solvers are run at a tiny eps instead, which by the regularization error
bounds sits within ~(2 chi sqrt(eps)/gamma)^(1/2) of the true minimizer.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import numpy.typing as npt

from .forward import evaluate_forward
from .inverse import InverseResult, evaluate_inverse
from .model import Array, MagnetizationState, MaterialModel, PinningCell, SolverConfig, energy_grad

REFERENCE_EPS = 1e-14
REFERENCE_TOL = 1e-12
# At eps = 1e-14 one ulp of J moves the gradient of a pinned cell by ~1e-8 A/m,
# so the relative test alone can be unreachable; 1e-6 A/m is worth < 1e-7 T.
REFERENCE_ABS_TOL = 1e-6
REFERENCE_CONFIG = SolverConfig(
    eps=REFERENCE_EPS, tol=REFERENCE_TOL, abs_tol=REFERENCE_ABS_TOL, max_newton=1000, max_backtracks=200
)
# The coupled solve crawls through the damped phase when started far from the
# minimizer at tiny eps; walking eps down from here keeps every stage short.
_CONTINUATION = (1e-8, 1e-10, 1e-12)


def _anhysteretic_inverse(cell: PinningCell, y: float) -> float:
    return 2.0 * cell.j_s / np.pi * np.arctan(y / cell.a_s)


def scalar_play_exact(cell: PinningCell, h: float, j_prev: float) -> float:
    """Exact 1-D minimizer of U(j) - h j + chi |j - j_prev|."""
    if not abs(j_prev) < cell.j_s:
        raise ValueError("j_prev outside the energy domain")
    drive = h - cell.a_s * np.tan(0.5 * np.pi * j_prev / cell.j_s)
    if abs(drive) <= cell.chi:
        return float(j_prev)
    if drive > cell.chi:
        return float(_anhysteretic_inverse(cell, h - cell.chi))
    return float(_anhysteretic_inverse(cell, h + cell.chi))


def is_stuck(cell: PinningCell, H: npt.ArrayLike, J_prev: npt.ArrayLike) -> bool:
    """True iff J_prev itself minimizes the unregularized forward objective."""
    J_prev = np.asarray(J_prev, dtype=float)
    residual = np.asarray(H, dtype=float) - energy_grad(cell, J_prev)
    return bool(np.linalg.norm(residual) <= cell.chi)


def reference_unregularized(
    model: MaterialModel, field: npt.ArrayLike, state: MagnetizationState, mode: str = "forward"
) -> Array:
    """
    Tiny-eps proxy for the eps = 0 partial polarizations, shape (K, d).
    ``field`` is H for mode "forward" and B for mode "inverse".
    """
    if mode == "forward":
        return evaluate_forward(model, REFERENCE_CONFIG, field, state).state.j_prev
    if mode == "inverse":
        return reference_inverse(model, field, state).state.j_prev
    raise ValueError(f"unknown mode {mode!r}")


def reference_inverse(model: MaterialModel, B: npt.ArrayLike, state: MagnetizationState) -> InverseResult:
    """Inverse operator at REFERENCE_CONFIG, reached by eps-continuation."""
    guess = None
    for eps in _CONTINUATION:
        cfg = dataclasses.replace(REFERENCE_CONFIG, eps=eps)
        guess = evaluate_inverse(model, cfg, B, state, initial=guess).state.j_prev
    return evaluate_inverse(model, REFERENCE_CONFIG, B, state, initial=guess)
