"""
Material mathematics of the energy-based vector hysteresis model.

Every kernel here is batched: field arrays carry the vector components on the
last axis, and cell parameters broadcast against the leading axes. A single
``PinningCell`` with float parameters and a ``(d,)`` vector works, and so does
the stacked cell returned by ``MaterialModel.stacked`` with ``(K, d)`` arrays.

Units: fields H in A/m, polarizations J and fluxes B in tesla, regularization
eps in T^2 (it sits under the same square root as |J|^2).
"""

from __future__ import annotations

import dataclasses
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import numpy.typing as npt

Array = npt.NDArray[np.float64]

MU0 = 4e-7 * np.pi  # Vacuum permeability [T m / A]

# Below this radius (relative to j_s) the analytic r -> 0 limits are used.
_SMALL_RADIUS = 1e-12
# Relative round-off allowance of one gradient evaluation.
_ROUNDOFF = 16 * np.finfo(float).eps


class DomainError(ValueError):
    """A polarization lies on or outside the saturation sphere |J| >= j_s."""


class DegenerateInputError(ValueError):
    """The unregularized norm was differentiated at the origin."""


@dataclasses.dataclass(frozen=True)
class PinningCell:
    """
    One partial-polarization channel.

    ``a_s`` [A/m] and ``j_s`` [T] parametrize the internal energy density,
    ``chi`` [A/m] is the pinning strength. Fields may be floats or equally
    shaped arrays (a stack of cells).
    """

    a_s: float | Array
    j_s: float | Array
    chi: float | Array

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.a_s)) or not np.all(np.asarray(self.a_s) > 0):
            raise ValueError(f"a_s must be positive: {self.a_s}")
        if not np.all(np.isfinite(self.j_s)) or not np.all(np.asarray(self.j_s) > 0):
            raise ValueError(f"j_s must be positive: {self.j_s}")
        if not np.all(np.isfinite(self.chi)) or not np.all(np.asarray(self.chi) >= 0):
            raise ValueError(f"chi must be non-negative: {self.chi}")

    @property
    def gamma(self) -> float | Array:
        """Uniform lower bound of the energy Hessian, a_s * pi / (2 j_s)."""
        return np.asarray(self.a_s) * np.pi / (2.0 * np.asarray(self.j_s))


@dataclasses.dataclass(frozen=True)
class MaterialModel:
    cells: tuple[PinningCell, ...]
    mu0: float = MU0

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise ValueError("a material needs at least one pinning cell")
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be positive: {self.mu0}")

    @property
    def K(self) -> int:
        return len(self.cells)

    @property
    def nu0(self) -> float:
        return 1.0 / self.mu0

    @cached_property
    def stacked(self) -> PinningCell:
        """All cells as one PinningCell with (K,) parameter arrays."""
        return PinningCell(
            a_s=np.array([c.a_s for c in self.cells], dtype=float),
            j_s=np.array([c.j_s for c in self.cells], dtype=float),
            chi=np.array([c.chi for c in self.cells], dtype=float),
        )

    @property
    def gamma(self) -> float:
        """Strong convexity constant shared by all cells: min_k a_s,k pi / (2 j_s,k)."""
        return float(np.min(self.stacked.gamma))

    @classmethod
    def from_lists(
        cls, a_s: Sequence[float], j_s: Sequence[float], chi: Sequence[float], mu0: float = MU0
    ) -> MaterialModel:
        if not len(a_s) == len(j_s) == len(chi):
            raise ValueError("a_s, j_s and chi must have equal lengths")
        return cls(tuple(PinningCell(float(a), float(j), float(c)) for a, j, c in zip(a_s, j_s, chi)), mu0)


@dataclasses.dataclass(frozen=True)
class MagnetizationState:
    """The K previous partial polarizations, shape (K, d); the hysteresis memory."""

    j_prev: Array

    def __post_init__(self) -> None:
        j = np.array(self.j_prev, dtype=float)
        if j.ndim != 2 or not 1 <= j.shape[1] <= 3:
            raise ValueError(f"expected a (K, d) array with d in 1..3, got shape {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("state contains non-finite values")
        j.setflags(write=False)
        object.__setattr__(self, "j_prev", j)

    @classmethod
    def demagnetized(cls, K: int, d: int) -> MagnetizationState:
        return cls(np.zeros((K, d)))

    @property
    def K(self) -> int:
        return self.j_prev.shape[0]

    @property
    def d(self) -> int:
        return self.j_prev.shape[1]

    @property
    def total(self) -> Array:
        return self.j_prev.sum(axis=0)

    def check_feasible(self, model: MaterialModel) -> None:
        if self.K != model.K:
            raise ValueError(f"state has {self.K} cells, material has {model.K}")
        r = np.linalg.norm(self.j_prev, axis=-1)
        bad = np.flatnonzero(r >= model.stacked.j_s)
        if bad.size:
            raise DomainError(f"state outside the energy domain in cell(s) {bad.tolist()}")


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    """
    Parameters of the damped Newton solvers.

    A solve stops once |grad| <= max(tol * |grad_0|, floor). The floor is the
    larger of ``abs_tol`` (default 1e-14 * a_s) and the round-off level of
    the gradient itself, see ``gradient_resolution``.
    """

    eps: float = 1e-8
    tol: float = 1e-8
    abs_tol: float | None = None
    rho: float = 0.5
    sigma: float = 0.1
    max_newton: int = 100
    max_backtracks: int = 60

    def __post_init__(self) -> None:
        if not self.eps >= 0:
            raise ValueError(f"eps must be >= 0: {self.eps}")
        if not 0 < self.tol < 1:
            raise ValueError(f"tol must lie in (0, 1): {self.tol}")
        if self.abs_tol is not None and not self.abs_tol >= 0:
            raise ValueError(f"abs_tol must be >= 0: {self.abs_tol}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1): {self.rho}")
        if not 0 < self.sigma < 0.5:
            raise ValueError(f"sigma must lie in (0, 1/2): {self.sigma}")
        if self.max_newton < 1 or self.max_backtracks < 1:
            raise ValueError("iteration caps must be >= 1")


# --------------------------------------------------------------------------- smoothed norm


def smooth_norm(x: npt.ArrayLike, eps: float) -> float | Array:
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1) + eps)


def smooth_norm_grad(x: npt.ArrayLike, eps: float) -> Array:
    x = np.asarray(x, dtype=float)
    n = smooth_norm(x, eps)
    if np.any(n == 0):
        raise DegenerateInputError("gradient of |x| at x = 0 with eps = 0")
    return x / n[..., None]


def smooth_norm_hess(x: npt.ArrayLike, eps: float) -> Array:
    x = np.asarray(x, dtype=float)
    n = smooth_norm(x, eps)
    if np.any(n == 0):
        raise DegenerateInputError("Hessian of |x| at x = 0 with eps = 0")
    n = n[..., None, None]
    eye = np.eye(x.shape[-1])
    return eye / n - x[..., :, None] * x[..., None, :] / n**3


def smooth_norm_increment(x: Array, step: Array, eps: float) -> Array:
    """|x + step|_eps - |x|_eps without cancellation."""
    n0 = smooth_norm(x, eps)
    n1 = smooth_norm(x + step, eps)
    num = np.sum((2.0 * x + step) * step, axis=-1)
    den = n0 + n1
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


# --------------------------------------------------------------------------- energy density


def _radius(cell: PinningCell, J: Array) -> tuple[Array, Array, Array]:
    a_s = np.asarray(cell.a_s, dtype=float)
    j_s = np.asarray(cell.j_s, dtype=float)
    r = np.linalg.norm(J, axis=-1)
    if np.any(r >= j_s):
        raise DomainError("polarization outside the energy domain |J| < j_s")
    return r, a_s, j_s


def energy_value(cell: PinningCell, J: npt.ArrayLike) -> float | Array:
    """U(J) = -(2 a_s j_s / pi) log cos(pi |J| / (2 j_s))."""
    J = np.asarray(J, dtype=float)
    r, a_s, j_s = _radius(cell, J)
    return -(2.0 * a_s * j_s / np.pi) * np.log(np.cos(0.5 * np.pi * r / j_s))


def _radial_coefficients(cell: PinningCell, J: Array) -> tuple[Array, Array, Array]:
    """Return (u'(r)/r, u''(r), r), using the r -> 0 limits near the origin."""
    r, a_s, j_s = _radius(cell, J)
    k = 0.5 * np.pi / j_s
    theta = k * r
    small = r < _SMALL_RADIUS * j_s
    safe_r = np.where(small, 1.0, r)
    d1_over_r = np.where(small, a_s * k, a_s * np.tan(theta) / safe_r)
    d2 = a_s * k / np.cos(theta) ** 2
    return d1_over_r, d2, r


def energy_grad(cell: PinningCell, J: npt.ArrayLike) -> Array:
    J = np.asarray(J, dtype=float)
    d1_over_r, _, _ = _radial_coefficients(cell, J)
    return d1_over_r[..., None] * J


def energy_hess(cell: PinningCell, J: npt.ArrayLike) -> Array:
    J = np.asarray(J, dtype=float)
    d1_over_r, d2, r = _radial_coefficients(cell, J)
    d = J.shape[-1]
    safe_r = np.where(r > 0, r, 1.0)
    unit = J / safe_r[..., None]
    radial = np.where(r < _SMALL_RADIUS * np.asarray(cell.j_s), 0.0, d2 - d1_over_r)
    return (
        d1_over_r[..., None, None] * np.eye(d)
        + radial[..., None, None] * unit[..., :, None] * unit[..., None, :]
    )


def energy_increment(cell: PinningCell, J: Array, step: Array) -> Array:
    """
    U(J + step) - U(J) evaluated without cancellation; +inf where J + step
    leaves the domain. Needed by the line search once Newton steps shrink
    below the round-off level of U itself.
    """
    a_s = np.asarray(cell.a_s, dtype=float)
    j_s = np.asarray(cell.j_s, dtype=float)
    r0 = np.linalg.norm(J, axis=-1)
    r1 = np.linalg.norm(J + step, axis=-1)
    inside = r1 < j_s
    num = np.sum((2.0 * J + step) * step, axis=-1)
    den = r0 + r1
    dr = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    k = 0.5 * np.pi / j_s
    theta0 = k * r0
    dtheta = k * dr
    cos0 = np.cos(theta0)
    # cos(t0 + dt) - cos(t0) = -2 sin(t0 + dt/2) sin(dt/2)
    rel = -2.0 * np.sin(theta0 + 0.5 * dtheta) * np.sin(0.5 * dtheta) / cos0
    with np.errstate(invalid="ignore", divide="ignore"):
        du = -(2.0 * a_s * j_s / np.pi) * np.log1p(np.where(inside, rel, 0.0))
    return np.where(inside, du, np.inf)


def gradient_resolution(cell: PinningCell, J_prev: npt.ArrayLike, eps: float, drive: float | Array) -> Array:
    """
    Round-off level of |grad| of the pinned objective near J_prev.

    Each gradient term carries a relative error of a few ulps, and one ulp of
    J - J_prev is amplified by the chi / sqrt(eps) curvature of the smoothed
    norm. ``drive`` is the size of the linear term (|H| for the forward
    objective). Gradients below this level carry no information, so a
    relative tolerance finer than it cannot be met.
    """
    J_prev = np.asarray(J_prev, dtype=float)
    chi = np.asarray(cell.chi, dtype=float)
    j_s = np.asarray(cell.j_s, dtype=float)
    grad_u = np.linalg.norm(energy_grad(cell, J_prev), axis=-1)
    return _ROUNDOFF * (drive + chi + grad_u + chi * j_s / np.sqrt(eps))


# --------------------------------------------------------------------------- objectives


def forward_objective(
    cell: PinningCell, H: npt.ArrayLike, J_prev: npt.ArrayLike, eps: float, J: npt.ArrayLike
) -> tuple[float | Array, Array, Array]:
    """
    Value, gradient and Hessian of
    F(J) = U(J) - <H, J> + chi |J - J_prev|_eps.
    """
    H = np.asarray(H, dtype=float)
    J = np.asarray(J, dtype=float)
    x = J - np.asarray(J_prev, dtype=float)
    chi = np.asarray(cell.chi, dtype=float)
    value = energy_value(cell, J) - np.sum(H * J, axis=-1) + chi * smooth_norm(x, eps)
    grad = energy_grad(cell, J) - H + chi[..., None] * smooth_norm_grad(x, eps)
    hess = energy_hess(cell, J) + chi[..., None, None] * smooth_norm_hess(x, eps)
    return value, grad, hess


def pinned_energy_grad_hess(
    cell: PinningCell, J_prev: Array, eps: float, J: Array
) -> tuple[Array, Array]:
    """Gradient and Hessian of g(J) = U(J) + chi |J - J_prev|_eps."""
    x = J - J_prev
    chi = np.asarray(cell.chi, dtype=float)
    grad = energy_grad(cell, J) + chi[..., None] * smooth_norm_grad(x, eps)
    hess = energy_hess(cell, J) + chi[..., None, None] * smooth_norm_hess(x, eps)
    return grad, hess


def pinned_energy_increment(cell: PinningCell, J_prev: Array, eps: float, J: Array, step: Array) -> Array:
    return energy_increment(cell, J, step) + np.asarray(cell.chi) * smooth_norm_increment(J - J_prev, step, eps)


def forward_increment(
    cell: PinningCell, H: Array, J_prev: Array, eps: float, J: Array, step: Array
) -> Array:
    """F(J + step) - F(J) for the forward objective; +inf outside the domain."""
    return pinned_energy_increment(cell, J_prev, eps, J, step) - np.sum(H * step, axis=-1)


class InverseObjective(NamedTuple):
    """
    Value and derivatives of the coupled objective
    G(J_1..J_K) = (nu0/2)|B - sum_k J_k|^2 + sum_k U_k(J_k) + chi_k |J_k - J_k,p|_eps.

    The Hessian is ``blockdiag(blocks) + nu0 * E^T E``: every d x d block of
    the full matrix gains ``nu0 * I`` on top of the diagonal blocks.
    """

    value: float
    grad: Array  # (K, d)
    blocks: Array  # (K, d, d)
    nu0: float

    def dense_hessian(self) -> Array:
        K, d = self.grad.shape
        full = self.nu0 * np.kron(np.ones((K, K)), np.eye(d))
        for k in range(K):
            full[k * d : (k + 1) * d, k * d : (k + 1) * d] += self.blocks[k]
        return full


def inverse_objective(
    model: MaterialModel, B: npt.ArrayLike, state: MagnetizationState, eps: float, J_all: npt.ArrayLike
) -> InverseObjective:
    B = np.asarray(B, dtype=float)
    J_all = np.asarray(J_all, dtype=float)
    cells = model.stacked
    residual = B - J_all.sum(axis=0)
    x = J_all - state.j_prev
    value = 0.5 * model.nu0 * float(residual @ residual) + float(
        np.sum(energy_value(cells, J_all) + cells.chi * smooth_norm(x, eps))
    )
    g, blocks = pinned_energy_grad_hess(cells, state.j_prev, eps, J_all)
    grad = g - model.nu0 * residual
    return InverseObjective(value, grad, blocks, model.nu0)


def inverse_increment(
    model: MaterialModel, B: Array, state: MagnetizationState, eps: float, J_all: Array, step: Array
) -> float:
    """G(J + step) - G(J) without cancellation; +inf outside the domain."""
    residual = B - J_all.sum(axis=0)
    total_step = step.sum(axis=0)
    coupling = model.nu0 * (0.5 * float(total_step @ total_step) - float(residual @ total_step))
    cells = pinned_energy_increment(model.stacked, state.j_prev, eps, J_all, step)
    return coupling + float(np.sum(cells))
