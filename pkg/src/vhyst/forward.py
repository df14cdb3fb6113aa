"""Forward operator H -> B via K independent damped Newton solves."""

from __future__ import annotations

import dataclasses
import time
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from . import _kernels
from .model import (
    Array,
    DomainError,
    MagnetizationState,
    MaterialModel,
    PinningCell,
    SolverConfig,
    gradient_resolution,
    pinned_energy_grad_hess,
)


class SolverError(RuntimeError):
    """A Newton solve failed to converge or its line search stalled."""

    def __init__(self, message: str, cell: int | None = None, step: int | None = None):
        super().__init__(message)
        self.cell = cell
        self.step = step

    def at_step(self, step: int) -> SolverError:
        where = f" (cell {self.cell})" if self.cell is not None else ""
        return SolverError(f"step {step}{where}: {self.args[0]}", self.cell, step)


@dataclasses.dataclass
class SolveStats:
    newton_iters: Array  # per cell
    backtracks: int
    converged: Array  # per cell
    final_grad: Array  # per cell (forward) or a single entry (inverse)
    initial_grad: Array
    wall_time: float = 0.0
    # absolute gradient floor of the stopping rule, per cell or single
    grad_floor: Array | None = None
    # Per cell (forward) or single (inverse) arrays of accepted steps, rows
    # (tau, objective increment, <grad, direction>, |grad| before the step).
    trace: list[Array] | None = None

    @property
    def total_iters(self) -> int:
        return int(np.sum(self.newton_iters))

    @property
    def max_iters(self) -> int:
        return int(np.max(self.newton_iters))

    @property
    def mean_iters(self) -> float:
        return float(np.mean(self.newton_iters))


class ForwardResult(NamedTuple):
    B: Array
    state: MagnetizationState
    stats: SolveStats


def _abs_floor(cfg: SolverConfig, cells: PinningCell, H: Array, J_prev: Array) -> Array:
    base = np.full(J_prev.shape[0], cfg.abs_tol) if cfg.abs_tol is not None else 1e-14 * cells.a_s
    return np.maximum(base, gradient_resolution(cells, J_prev, cfg.eps, np.linalg.norm(H)))


def solve_cells(
    cells: PinningCell,
    H: npt.ArrayLike,
    J_prev: npt.ArrayLike,
    cfg: SolverConfig,
    record: bool = False,
) -> tuple[Array, SolveStats]:
    """
    Minimize F_k(J) = U_k(J) - <H, J> + chi_k |J - J_prev,k|_eps for a stack
    of cells, each by its own damped Newton iteration started at J_prev,k.
    """
    if not cfg.eps > 0:
        raise ValueError("the Newton solver needs eps > 0")
    J_prev = np.ascontiguousarray(np.atleast_2d(np.asarray(J_prev, dtype=float)))
    H = np.ascontiguousarray(H, dtype=float)
    K = J_prev.shape[0]
    a_s = np.ascontiguousarray(np.broadcast_to(np.asarray(cells.a_s, dtype=float), (K,)))
    j_s = np.ascontiguousarray(np.broadcast_to(np.asarray(cells.j_s, dtype=float), (K,)))
    chi = np.ascontiguousarray(np.broadcast_to(np.asarray(cells.chi, dtype=float), (K,)))
    trace = np.zeros((K, cfg.max_newton if record else 0, 4))
    floor = _abs_floor(cfg, PinningCell(a_s, j_s, chi), H, J_prev)
    J, iters, g0, gfin, info = _kernels.forward_solve(
        a_s, j_s, chi, H, J_prev, cfg.eps, cfg.tol, floor,
        cfg.rho, cfg.sigma, cfg.max_newton, cfg.max_backtracks, trace,
    )
    status, cell, backtracks = (int(v) for v in info)
    if status == _kernels.NO_CONVERGENCE:
        raise SolverError(f"no convergence within {cfg.max_newton} Newton iterations", cell=cell)
    if status == _kernels.STALLED:
        raise SolverError(f"line search stalled after {cfg.max_backtracks} backtracks", cell=cell)
    stats = SolveStats(
        newton_iters=iters,
        backtracks=backtracks,
        converged=np.ones(K, dtype=bool),
        final_grad=gfin,
        initial_grad=g0,
        grad_floor=floor,
        trace=[trace[k, : iters[k]] for k in range(K)] if record else None,
    )
    return J, stats


def newton_solve_cell(
    cell: PinningCell,
    H: npt.ArrayLike,
    J_prev: npt.ArrayLike,
    cfg: SolverConfig,
    record: bool = False,
) -> tuple[Array, SolveStats]:
    """Damped Newton solve for one cell, started from J_prev."""
    J_prev = np.asarray(J_prev, dtype=float)
    r = np.linalg.norm(J_prev)
    if r >= cell.j_s:
        raise DomainError("J_prev outside the energy domain")
    J, stats = solve_cells(cell, H, J_prev[None, :], cfg, record)
    return J[0], stats


def evaluate_forward(
    model: MaterialModel,
    cfg: SolverConfig,
    H: npt.ArrayLike,
    state: MagnetizationState,
    record: bool = False,
) -> ForwardResult:
    """B = mu0 H + sum_k J_k, each J_k the regularized minimizer started from state."""
    H = np.asarray(H, dtype=float)
    state.check_feasible(model)
    if H.shape != (state.d,):
        raise ValueError(f"H has shape {H.shape}, expected ({state.d},)")
    t0 = time.perf_counter()
    J, stats = solve_cells(model.stacked, H, state.j_prev, cfg, record)
    stats.wall_time = time.perf_counter() - t0
    B = model.mu0 * H + J.sum(axis=0)
    return ForwardResult(B, MagnetizationState(J), stats)


def forward_jacobian(
    model: MaterialModel, cfg: SolverConfig, state: MagnetizationState, new_state: MagnetizationState
) -> Array:
    """
    dB/dH = mu0 I + sum_k [Hess F_k(J_k)]^-1, from differentiating the
    per-cell optimality conditions grad F_k(J_k; H) = 0 in H. ``state`` is the
    prior memory and ``new_state`` the converged minimizers at H.
    """
    _, blocks = pinned_energy_grad_hess(model.stacked, state.j_prev, cfg.eps, new_state.j_prev)
    d = state.d
    inv = np.linalg.solve(blocks, np.broadcast_to(np.eye(d), blocks.shape))
    jac = model.mu0 * np.eye(d) + inv.sum(axis=0)
    return 0.5 * (jac + jac.T)
