"""
Numerical experiments: benchmark material, excitations, time-stepping loops,
the eps convergence study, forward/inverse roundtrips and the timing table.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt

from .forward import SolverError, evaluate_forward
from .inverse import NewtonDirectionMethod, evaluate_inverse
from .model import Array, MagnetizationState, MaterialModel, PinningCell, SolverConfig
from .oracles import REFERENCE_CONFIG

logger = logging.getLogger(__name__)

BENCH_A_S = 50.0  # A/m
BENCH_J_S = 1.545  # T, total saturation polarization
BENCH_CHI_MAX = 140.0  # A/m
BENCH_AMPLITUDE = 500.0  # A/m
DEFAULT_STEPS = 500

METHODS = ("forward", "inverse-dense", "inverse-schur")


def benchmark_material(K: int, mu0: float | None = None) -> MaterialModel:
    """K cells with a_s = 50, j_s = 1.545/K and chi uniformly spread over [0, 140]."""
    if K < 1:
        raise ValueError("K must be >= 1")
    chi = [BENCH_CHI_MAX * k / (K - 1) if K > 1 else 0.0 for k in range(K)]
    cells = tuple(PinningCell(BENCH_A_S, BENCH_J_S / K, c) for c in chi)
    return MaterialModel(cells) if mu0 is None else MaterialModel(cells, mu0)


def sample_times(N: int) -> Array:
    if N < 1:
        raise ValueError("need at least one time step")
    return np.zeros(1) if N == 1 else np.arange(N) / (N - 1)


def _time(i: int, N: int) -> float:
    if not 0 <= i < N:
        raise IndexError(f"step {i} outside 0..{N - 1}")
    return 0.0 if N == 1 else i / (N - 1)


def excitation_uni(i: int, N: int) -> Array:
    t = _time(i, N)
    return np.array([BENCH_AMPLITUDE * np.sin(2.5 * np.pi * t), 0.0])


def excitation_rot(i: int, N: int) -> Array:
    t = _time(i, N)
    amplitude = BENCH_AMPLITUDE * min(t, 0.75)
    return amplitude * np.array([np.sin(5 * np.pi * t), np.cos(5 * np.pi * t)])


_EXCITATIONS = {"uni": excitation_uni, "rot": excitation_rot}


@dataclasses.dataclass(frozen=True)
class ExcitationSequence:
    kind: str
    samples: Array  # (N, d)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def t(self) -> Array:
        return sample_times(self.N)

    @classmethod
    def build(cls, kind: str, N: int = DEFAULT_STEPS) -> ExcitationSequence:
        if kind not in _EXCITATIONS:
            raise ValueError(f"unknown excitation {kind!r}; expected one of {sorted(_EXCITATIONS)}")
        f = _EXCITATIONS[kind]
        return cls(kind, np.array([f(i, N) for i in range(N)]))

    @classmethod
    def from_samples(cls, samples: npt.ArrayLike) -> ExcitationSequence:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        return cls("file", samples)


@dataclasses.dataclass
class TrajectoryRecord:
    t: Array
    H: Array  # (N, d)
    B: Array  # (N, d)
    J: Array  # (N, K, d)
    iters: Array  # mean Newton iterations per cell, per step
    backtracks: Array
    wall_time: Array  # seconds per step, solver only

    @property
    def N(self) -> int:
        return self.H.shape[0]

    @property
    def mean_iters(self) -> float:
        return float(np.mean(self.iters))

    @property
    def total_time(self) -> float:
        return float(np.sum(self.wall_time))


def run_loop(
    model: MaterialModel,
    cfg: SolverConfig,
    samples: npt.ArrayLike,
    mode: str = "forward",
    method: NewtonDirectionMethod | str = NewtonDirectionMethod.SCHUR,
) -> TrajectoryRecord:
    """
    Step through ``samples`` (H for mode "forward", B for "inverse") starting
    from the demagnetized state, each step remembering the previous one.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    N, d = samples.shape
    K = model.K
    if mode not in ("forward", "inverse"):
        raise ValueError(f"unknown mode {mode!r}")
    H = np.empty((N, d))
    B = np.empty((N, d))
    J = np.empty((N, K, d))
    iters = np.empty(N)
    backtracks = np.empty(N, dtype=int)
    wall = np.empty(N)
    state = MagnetizationState.demagnetized(K, d)
    for i, x in enumerate(samples):
        try:
            if mode == "forward":
                out, state, stats = evaluate_forward(model, cfg, x, state)
                H[i], B[i] = x, out
            else:
                out, state, stats = evaluate_inverse(model, cfg, x, state, method)
                H[i], B[i] = out, x
        except SolverError as err:
            raise err.at_step(i) from err
        J[i] = state.j_prev
        iters[i] = stats.mean_iters
        backtracks[i] = stats.backtracks
        wall[i] = stats.wall_time
    return TrajectoryRecord(sample_times(N), H, B, J, iters, backtracks, wall)


def relative_error_sq(seq_a: npt.ArrayLike, seq_b: npt.ArrayLike) -> float:
    """sum_i |a_i - b_i|^2 / sum_i |b_i|^2 (not square-rooted)."""
    a = np.asarray(seq_a, dtype=float)
    b = np.asarray(seq_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"sequence shapes differ: {a.shape} vs {b.shape}")
    denom = float(np.sum(b * b))
    if denom == 0:
        raise ZeroDivisionError("reference sequence is identically zero")
    return float(np.sum((a - b) ** 2)) / denom


def dissipation_increment(model: MaterialModel, state: MagnetizationState, new_state: MagnetizationState) -> float:
    """Energy dissipated by pinning in one step, sum_k chi_k |J_k' - J_k| [J/m^3]."""
    if state.K != model.K or new_state.K != model.K:
        raise ValueError("state and material disagree on K")
    moves = np.linalg.norm(new_state.j_prev - state.j_prev, axis=-1)
    return float(np.sum(model.stacked.chi * moves))


def trajectory_dissipation(model: MaterialModel, record: TrajectoryRecord) -> Array:
    """Per-step dissipation along a trajectory, starting from the demagnetized state."""
    J = np.concatenate([np.zeros((1,) + record.J.shape[1:]), record.J])
    moves = np.linalg.norm(np.diff(J, axis=0), axis=-1)
    return moves @ model.stacked.chi


@dataclasses.dataclass(frozen=True)
class SweepRow:
    eps: float
    err_forward: float
    err_inverse: float


def eps_sweep(
    K: int,
    excitation: str | ExcitationSequence,
    eps_list: Sequence[float],
    N: int = DEFAULT_STEPS,
    method: NewtonDirectionMethod | str = NewtonDirectionMethod.SCHUR,
) -> list[SweepRow]:
    """
    Relative squared errors of the regularized forward (B) and inverse (H)
    trajectories against the tiny-eps reference, with tol = eps for each run.
    The inverse runs consume the reference B trajectory.
    """
    eps_list = list(eps_list)
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and strictly descending")
    seq = excitation if isinstance(excitation, ExcitationSequence) else ExcitationSequence.build(excitation, N)
    model = benchmark_material(K)
    reference = run_loop(model, REFERENCE_CONFIG, seq.samples, "forward")
    rows = []
    for eps in eps_list:
        cfg = SolverConfig(eps=eps, tol=eps)
        fwd = run_loop(model, cfg, seq.samples, "forward")
        inv = run_loop(model, cfg, reference.B, "inverse", method)
        row = SweepRow(eps, relative_error_sq(fwd.B, reference.B), relative_error_sq(inv.H, reference.H))
        logger.info("eps=%g forward=%.3e inverse=%.3e", row.eps, row.err_forward, row.err_inverse)
        rows.append(row)
    return rows


def loglog_slope(x: Iterable[float], y: Iterable[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(list(x))), np.log(np.asarray(list(y))), 1)[0])


def roundtrip(
    K: int,
    excitation: str | ExcitationSequence,
    cfg: SolverConfig | None = None,
    N: int = DEFAULT_STEPS,
    method: NewtonDirectionMethod | str = NewtonDirectionMethod.SCHUR,
) -> dict[str, float]:
    """
    Forward trajectory, then its B replayed through the inverse operator.
    Per-step deviations |H_inv - H| are normalized by max_i |H_i|.
    """
    cfg = cfg or SolverConfig()
    seq = excitation if isinstance(excitation, ExcitationSequence) else ExcitationSequence.build(excitation, N)
    model = benchmark_material(K)
    fwd = run_loop(model, cfg, seq.samples, "forward")
    inv = run_loop(model, cfg, fwd.B, "inverse", method)
    scale = float(np.max(np.linalg.norm(fwd.H, axis=-1)))
    dev = np.linalg.norm(inv.H - fwd.H, axis=-1) / scale
    return {
        "K": K,
        "excitation": seq.kind,
        "steps": seq.N,
        "eps": cfg.eps,
        "tol": cfg.tol,
        "max_rel_err": float(np.max(dev)),
        "mean_rel_err": float(np.mean(dev)),
        "rel_err_sq": relative_error_sq(inv.H, fwd.H),
        "max_state_diff": float(np.max(np.abs(inv.J - fwd.J))),
    }


@dataclasses.dataclass(frozen=True)
class BenchRow:
    K: int
    method: str
    time_ms: float
    mean_iters: float


def _warm_up() -> None:
    model = benchmark_material(2)
    samples = ExcitationSequence.build("uni", 4).samples
    fwd = run_loop(model, SolverConfig(), samples, "forward")
    for method in NewtonDirectionMethod:
        run_loop(model, SolverConfig(), fwd.B, "inverse", method)


def bench(
    K_list: Sequence[int],
    methods: Sequence[str] = METHODS,
    excitation: str | ExcitationSequence = "uni",
    N: int = DEFAULT_STEPS,
    cfg: SolverConfig | None = None,
) -> list[BenchRow]:
    """
    Wall time of a full loop and mean Newton iterations per step for each
    (K, method). Inverse runs replay the B trajectory of a forward run with
    the same configuration.
    """
    cfg = cfg or SolverConfig()
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    seq = excitation if isinstance(excitation, ExcitationSequence) else ExcitationSequence.build(excitation, N)
    _warm_up()
    rows = []
    for K in K_list:
        model = benchmark_material(K)
        fwd = None
        for m in methods:
            if m == "forward" or fwd is None:
                t0 = time.perf_counter()
                fwd = run_loop(model, cfg, seq.samples, "forward")
                elapsed = time.perf_counter() - t0
                if m == "forward":
                    rows.append(BenchRow(K, m, 1e3 * elapsed, fwd.mean_iters))
                    continue
            method = NewtonDirectionMethod.DENSE if m == "inverse-dense" else NewtonDirectionMethod.SCHUR
            t0 = time.perf_counter()
            inv = run_loop(model, cfg, fwd.B, "inverse", method)
            elapsed = time.perf_counter() - t0
            rows.append(BenchRow(K, m, 1e3 * elapsed, inv.mean_iters))
        logger.info("bench K=%d done", K)
    return rows
