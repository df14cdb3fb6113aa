"""
Command-line front end.

    vhyst loop --mode forward --excitation uni --K 20 --steps 500 --out loop.csv
    vhyst loop --mode inverse --input-b loop.csv --K 20 --out inv.csv
    vhyst sweep-eps --K 20 --excitation uni --eps 1e-2,1e-3,1e-4,1e-5,1e-6,1e-7,1e-8 --out sweep.csv
    vhyst roundtrip --K 20 --excitation rot --out roundtrip.json
    vhyst bench --K 5,10,20,50,100 --methods forward,inverse-dense,inverse-schur --out bench.csv

Exit codes: 0 success, 1 solver failure, 2 bad arguments.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from . import experiments as ex
from .forward import SolverError
from .model import MU0, DomainError, MaterialModel, SolverConfig

logger = logging.getLogger("vhyst")

_COMPONENTS = "xyz"
_CONFIG_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def solver_config(args: argparse.Namespace) -> SolverConfig:
    """Defaults, then the JSON --config file, then explicit flags."""
    values: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config {args.config}: {err}")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        return SolverConfig(**values)
    except (TypeError, ValueError) as err:
        raise UsageError(f"invalid solver configuration: {err}")


def material(args: argparse.Namespace, K: int) -> MaterialModel:
    if not args.material:
        return ex.benchmark_material(K)
    try:
        data = json.loads(Path(args.material).read_text())
        return MaterialModel.from_lists(data["a_s"], data["j_s"], data["chi"], data.get("mu0", MU0))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as err:
        raise UsageError(f"cannot read material {args.material}: {err}")


def read_vectors(path: str, prefix: str) -> np.ndarray:
    """Read the {prefix}x, {prefix}y, ... columns of a trajectory CSV."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            cols = [f"{prefix}{c}" for c in _COMPONENTS if f"{prefix}{c}" in (reader.fieldnames or [])]
            if not cols:
                raise UsageError(f"{path} has no {prefix}x column")
            rows = [[float(row[c]) for c in cols] for row in reader]
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err}")
    except ValueError as err:
        raise UsageError(f"bad number in {path}: {err}")
    if not rows:
        raise UsageError(f"{path} contains no data rows")
    return np.array(rows)


def write_trajectory(record: ex.TrajectoryRecord, out: TextIO) -> None:
    d = record.H.shape[1]
    comps = _COMPONENTS[:d]
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["i", "t", *(f"H{c}" for c in comps), *(f"B{c}" for c in comps), "iters", "backtracks", "time_s"])
    for i in range(record.N):
        writer.writerow(
            [
                i,
                _fmt(record.t[i]),
                *(_fmt(v) for v in record.H[i]),
                *(_fmt(v) for v in record.B[i]),
                _fmt(record.iters[i]),
                int(record.backtracks[i]),
                _fmt(record.wall_time[i]),
            ]
        )


def _open_out(path: str | None):
    if path is None or path == "-":
        return _Stdout()
    return open(path, "w", newline="")


class _Stdout:
    def __enter__(self) -> TextIO:
        return sys.stdout

    def __exit__(self, *exc) -> None:
        sys.stdout.flush()


def cmd_loop(args: argparse.Namespace) -> int:
    cfg = solver_config(args)
    model = material(args, args.K)
    if args.mode == "inverse":
        if not args.input_b:
            raise UsageError("--mode inverse needs --input-b")
        samples = read_vectors(args.input_b, "B")
    elif args.input_h:
        samples = read_vectors(args.input_h, "H")
    else:
        samples = ex.ExcitationSequence.build(args.excitation, args.steps).samples
    record = ex.run_loop(model, cfg, samples, args.mode, args.method)
    with _open_out(args.out) as out:
        write_trajectory(record, out)
    logger.info("loop: %d steps, mean iterations %.3f", record.N, record.mean_iters)
    return 0


def cmd_sweep_eps(args: argparse.Namespace) -> int:
    seq = ex.ExcitationSequence.build(args.excitation, args.steps)
    rows = ex.eps_sweep(args.K, seq, args.eps_list, method=args.method)
    with _open_out(args.out) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["eps", "err_forward", "err_inverse"])
        for r in rows:
            writer.writerow([_fmt(r.eps), _fmt(r.err_forward), _fmt(r.err_inverse)])
    return 0


def cmd_roundtrip(args: argparse.Namespace) -> int:
    cfg = solver_config(args)
    seq = ex.ExcitationSequence.build(args.excitation, args.steps)
    result = ex.roundtrip(args.K, seq, cfg, method=args.method)
    with _open_out(args.out) as out:
        json.dump(result, out, indent=2)
        out.write("\n")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = solver_config(args)
    seq = ex.ExcitationSequence.build(args.excitation, args.steps)
    rows = ex.bench(args.K_list, args.methods, seq, cfg=cfg)
    with _open_out(args.out) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["K", "method", "time_ms", "mean_iters"])
        for r in rows:
            writer.writerow([r.K, r.method, _fmt(r.time_ms), _fmt(r.mean_iters)])
    return 0


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with solver settings; flags take precedence")
    p.add_argument("--eps", type=float, default=None, help="regularization eps [T^2] (default 1e-8)")
    p.add_argument("--tol", type=float, default=None, help="relative gradient tolerance (default 1e-8)")
    p.add_argument("--abs-tol", dest="abs_tol", type=float, default=None)
    p.add_argument("--rho", type=float, default=None, help="backtracking factor (default 0.5)")
    p.add_argument("--sigma", type=float, default=None, help="Armijo slope factor (default 0.1)")
    p.add_argument("--max-newton", dest="max_newton", type=int, default=None)
    p.add_argument("--max-backtracks", dest="max_backtracks", type=int, default=None)


def _add_common(p: argparse.ArgumentParser, multi_k: bool = False) -> None:
    if multi_k:
        p.add_argument("--K", dest="K_list", type=_int_list, default=[5, 10, 20, 50, 100])
    else:
        p.add_argument("--K", type=int, default=20, help="number of pinning cells")
    p.add_argument("--excitation", choices=["uni", "rot"], default="uni")
    p.add_argument("--steps", type=int, default=ex.DEFAULT_STEPS)
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vhyst", description="Energy-based vector hysteresis operators")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loop", help="time-stepping loop, trajectory CSV")
    _add_common(p)
    _add_solver_flags(p)
    p.add_argument("--mode", choices=["forward", "inverse"], default="forward")
    p.add_argument("--method", choices=["schur", "dense"], default="schur")
    p.add_argument("--input-b", dest="input_b", help="trajectory CSV whose B columns drive the inverse loop")
    p.add_argument("--input-h", dest="input_h", help="trajectory CSV whose H columns drive the forward loop")
    p.add_argument("--material", help="JSON with a_s, j_s, chi lists (optional mu0)")
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("sweep-eps", help="regularization error study, CSV")
    _add_common(p)
    p.add_argument("--eps", dest="eps_list", type=_float_list, default=[1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])
    p.add_argument("--method", choices=["schur", "dense"], default="schur")
    p.set_defaults(func=cmd_sweep_eps)

    p = sub.add_parser("roundtrip", help="forward then inverse replay, JSON")
    _add_common(p)
    _add_solver_flags(p)
    p.add_argument("--method", choices=["schur", "dense"], default="schur")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("bench", help="timing and iteration table, CSV")
    _add_common(p, multi_k=True)
    _add_solver_flags(p)
    p.add_argument("--methods", type=_str_list, default=list(ex.METHODS))
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, DomainError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
