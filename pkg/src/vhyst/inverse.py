"""
Inverse operator B -> H.

All K partial polarizations are found together by a damped Newton method on
the coupled objective. The Newton matrix is ``blockdiag(D_k) + nu0 E^T E``
with E = [I I ... I]; it can be solved densely, or by eliminating the
aggregate update s = sum_k dJ_k, which costs K block solves and one d x d
solve.
"""

from __future__ import annotations

import dataclasses
import enum
import time
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from . import _kernels
from .forward import SolverError, SolveStats
from .model import (
    Array,
    MagnetizationState,
    MaterialModel,
    SolverConfig,
    gradient_resolution,
    pinned_energy_grad_hess,
)


class NewtonDirectionMethod(str, enum.Enum):
    DENSE = "dense"
    SCHUR = "schur"


@dataclasses.dataclass
class OpCounter:
    """Block operation tally for one or more Schur solves."""

    factorizations: int = 0
    multiplies: int = 0
    schur_solves: int = 0


class InverseResult(NamedTuple):
    H: Array
    state: MagnetizationState
    stats: SolveStats


def dense_newton_direction(blocks: npt.ArrayLike, nu0: float, grad: npt.ArrayLike) -> Array:
    """Assemble the full Kd x Kd Newton matrix and solve it by LU."""
    blocks = np.asarray(blocks, dtype=float)
    grad = np.asarray(grad, dtype=float)
    K, d = grad.shape
    full = np.kron(np.full((K, K), nu0), np.eye(d))
    for k in range(K):
        full[k * d : (k + 1) * d, k * d : (k + 1) * d] += blocks[k]
    return np.linalg.solve(full, -grad.reshape(-1)).reshape(K, d)


def schur_newton_direction(
    blocks: npt.ArrayLike, nu0: float, grad: npt.ArrayLike, counter: OpCounter | None = None
) -> Array:
    """
    Solve (blockdiag(D_k) + nu0 E^T E) dJ = -grad in O(K).

    With s = sum_k dJ_k every block row reads D_k dJ_k = b_k - nu0 s, so
    dJ_k = D_k^-1 b_k - nu0 D_k^-1 s. Summing over k leaves the d x d system
    (I + nu0 sum_k D_k^-1) s = sum_k D_k^-1 b_k.
    """
    blocks = np.asarray(blocks, dtype=float)
    rhs = -np.asarray(grad, dtype=float)
    K, d = rhs.shape
    # One factorization per block, applied to [b_k | I].
    stacked_rhs = np.concatenate([rhs[:, :, None], np.broadcast_to(np.eye(d), (K, d, d))], axis=2)
    sol = np.linalg.solve(blocks, stacked_rhs)
    y, W = sol[:, :, 0], sol[:, :, 1:]
    schur = np.eye(d) + nu0 * W.sum(axis=0)
    s = np.linalg.solve(schur, y.sum(axis=0))
    direction = y - nu0 * (W @ s)
    if counter is not None:
        counter.factorizations += K
        # K recoveries W_k s, plus assembling the Schur matrix and its right-hand side
        counter.multiplies += K + 2
        counter.schur_solves += 1
    return direction


def evaluate_inverse(
    model: MaterialModel,
    cfg: SolverConfig,
    B: npt.ArrayLike,
    state: MagnetizationState,
    method: NewtonDirectionMethod | str = NewtonDirectionMethod.SCHUR,
    record: bool = False,
    initial: npt.ArrayLike | None = None,
) -> InverseResult:
    """
    H = nu0 (B - sum_k J_k) with the J_k jointly minimizing the coupled objective.

    The iteration starts from ``initial`` if given, else from the memory state.
    """
    method = NewtonDirectionMethod(method)
    if not cfg.eps > 0:
        raise ValueError("the Newton solver needs eps > 0")
    B = np.ascontiguousarray(B, dtype=float)
    state.check_feasible(model)
    if B.shape != (state.d,):
        raise ValueError(f"B has shape {B.shape}, expected ({state.d},)")
    cells = model.stacked
    base = cfg.abs_tol if cfg.abs_tol is not None else 1e-14 * float(np.min(cells.a_s))
    # the coupling term nu0 (B - sum J) is resolved to ~nu0 ulp(|B| + sum j_s)
    drive = model.nu0 * (float(np.linalg.norm(B)) + float(np.sum(cells.j_s)))
    floor = max(base, float(np.linalg.norm(gradient_resolution(cells, state.j_prev, cfg.eps, drive))))
    trace = np.zeros((cfg.max_newton if record else 0, 4))
    j_prev = np.ascontiguousarray(state.j_prev)
    J0 = j_prev if initial is None else np.ascontiguousarray(initial, dtype=float)
    if J0.shape != j_prev.shape:
        raise ValueError(f"initial guess has shape {J0.shape}, expected {j_prev.shape}")
    t0 = time.perf_counter()
    J, n, g0, gn, info = _kernels.inverse_solve(
        cells.a_s, cells.j_s, cells.chi, model.nu0, B, j_prev, J0,
        cfg.eps, cfg.tol, floor, cfg.rho, cfg.sigma, cfg.max_newton, cfg.max_backtracks,
        method is NewtonDirectionMethod.DENSE, trace,
    )
    wall = time.perf_counter() - t0
    status, _, backtracks = (int(v) for v in info)
    if status == _kernels.NO_CONVERGENCE:
        raise SolverError(f"no convergence within {cfg.max_newton} Newton iterations")
    if status == _kernels.STALLED:
        raise SolverError(f"line search stalled after {cfg.max_backtracks} backtracks")
    stats = SolveStats(
        newton_iters=np.full(model.K, n),
        backtracks=backtracks,
        converged=np.ones(model.K, dtype=bool),
        final_grad=np.array([gn]),
        initial_grad=np.array([g0]),
        grad_floor=np.array([floor]),
        wall_time=wall,
        trace=[trace[:n]] if record else None,
    )
    H = model.nu0 * (B - J.sum(axis=0))
    return InverseResult(H, MagnetizationState(J), stats)


def inverse_jacobian(
    model: MaterialModel, cfg: SolverConfig, state: MagnetizationState, new_state: MagnetizationState
) -> Array:
    """
    dH/dB at the converged minimizers ``new_state`` (prior memory ``state``).

    Differentiating nu0 (sum_l J_l - B) + grad g_k(J_k) = 0 in B gives
    dJ_k/dB = D_k^-1 nu0 (I - S) with S = sum_k dJ_k/dB, hence
    (I + nu0 W) S = nu0 W for W = sum_k D_k^-1 and dH/dB = nu0 (I - S)
    = nu0 (I + nu0 W)^-1.
    """
    _, blocks = pinned_energy_grad_hess(model.stacked, state.j_prev, cfg.eps, new_state.j_prev)
    d = state.d
    W = np.linalg.solve(blocks, np.broadcast_to(np.eye(d), blocks.shape)).sum(axis=0)
    nu0 = model.nu0
    jac = nu0 * np.linalg.inv(np.eye(d) + nu0 * W)
    return 0.5 * (jac + jac.T)
