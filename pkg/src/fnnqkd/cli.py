"""Command-line front end ``fnn-qkd-lab``.

Exit codes: 0 success (or Useful), 1 criteria failure or aborted run,
2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import oracle
from .exceptions import ConfigError, FnnQkdError, InsufficientStatistics
from .protocol import Variant, load_config, run
from .qber import qber_min_over_mubs
from .qstate import SingularTriple, parse_state
from .security import (
    CHSH_PRODUCT_BOUND,
    MISCLASSIFICATION_SUM,
    SQRT2,
    TWO_23,
    TWO_56,
    TRILOCAL_PRODUCT_BOUND,
    Classification,
    Protocol,
    all_thresholds,
    compare_protocols,
    security_report,
    triples_identical,
)
from .trilocal import CLASSICAL_BOUND, analytic_bound

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
CSV_HEADER = "# fnn-qkd-lab sweep v1"

SWEEP_FAMILIES = {
    "IdenticalPlane": None,
    "Ext1": (0.95, 0.95, 0.96),
    "Ext2": (0.92, 0.91, 0.93),
    "Ext3": (0.92, 0.94, 0.95),
    "Ext4": (0.92, 0.91, 0.94),
}


class InputError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _states(descs: Sequence[str]):
    if len(descs) not in (1, 3):
        raise InputError("give one --state (three identical copies) or three")
    try:
        states = [parse_state(json.loads(d)) for d in descs]
    except json.JSONDecodeError as exc:
        raise InputError(f"--state is not valid JSON: {exc}") from exc
    except (FnnQkdError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"invalid state: {exc}") from exc
    return states * 3 if len(states) == 1 else states


def _triples_arg(values: Sequence[str]) -> list[SingularTriple]:
    try:
        triples = [SingularTriple.from_values([float(x) for x in v.split(",")]) for v in values]
    except ValueError as exc:
        raise InputError(f"invalid --t value: {exc}") from exc
    if len(triples) == 1:
        triples *= 3
    if len(triples) != 3:
        raise InputError("give one --t (identical) or three")
    return triples


# --- characterize ----------------------------------------------------------------


def cmd_characterize(args) -> int:
    states = _states(args.state)
    triples = [s.singular_values() for s in states]
    identical = len(args.state) == 1 or triples_identical(triples)
    reports = {p: security_report(triples, p, identical) for p in (Protocol.TRILOCAL, Protocol.CHSH)}
    data = {
        "singular_values": [list(t) for t in triples],
        "identical": identical,
        "analytic_bound": analytic_bound(triples),
        "qber_min": qber_min_over_mubs(triples),
        "protocols": {p.value: r.to_dict() for p, r in reports.items()},
        "comparison": compare_protocols(triples, identical).to_dict(),
        "thresholds": {t.label: t.value for t in all_thresholds()},
    }
    if args.json:
        _emit(json.dumps(data, indent=2) + "\n", args.out)
    else:
        lines = [f"singular values: {', '.join('(' + ', '.join(f'{v:.6f}' for v in t) + ')' for t in triples)}",
                 f"identical states: {identical}",
                 f"trilocal bound: {data['analytic_bound']:.6f} (classical {CLASSICAL_BOUND:.6f})",
                 f"minimum QBER over MUBs: {data['qber_min']:.6f}"]
        for p, r in reports.items():
            lines.append(f"[{p.value}] classification {r.classification.value}, "
                         f"threshold {r.threshold.label} = {r.threshold.value:.6f}")
            for chk in (r.first_check, r.second_check):
                line = f"  {chk.name}: {'pass' if chk.passed else 'fail'}  lhs {chk.lhs:.6f}  rhs {chk.rhs:.6f}  margin {chk.margin:+.6f}"
                if "expanded_lhs" in chk.extra:
                    line += f"  expanded lhs {chk.extra['expanded_lhs']:.4f}"
                lines.append(line)
        _emit("\n".join(lines) + "\n", args.out)
    chosen = reports[Protocol(args.protocol)]
    return EXIT_OK if chosen.classification is Classification.USEFUL else EXIT_FAIL


# --- verify-thresholds --------------------------------------------------------------


def cmd_verify_thresholds(args) -> int:
    start = time.perf_counter()
    rows = oracle.verify_thresholds(args.grid_step, raise_on_failure=False)
    tol = oracle.tolerance_for(args.grid_step)
    elapsed = time.perf_counter() - start
    ok = all(r.delta <= tol for r in rows)
    if args.json:
        text = json.dumps({"tolerance": tol, "seconds": elapsed, "passed": ok,
                           "rows": [r.to_dict() for r in rows]}, indent=2) + "\n"
    else:
        lines = [f"{'kind':<18} {'analytic':>10} {'numeric':>10} {'|delta|':>10}  status"]
        for r in rows:
            lines.append(f"{r.kind:<18} {r.analytic:>10.6f} {r.numeric:>10.6f} {r.delta:>10.2e}  "
                         f"{'ok' if r.delta <= tol else 'FAIL'}")
        lines.append(f"tolerance {tol:.1e}, {elapsed:.1f} s")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK if ok else EXIT_FAIL


# --- simulate ---------------------------------------------------------------------------


def bundled_config(name: str) -> Path | None:
    base = resources.files("fnnqkd") / "configs"
    stem = Path(name).name
    for candidate in (stem, stem + ".json"):
        path = base / candidate
        if path.is_file():
            return Path(str(path))
    return None


def _resolve_config(name: str) -> Path:
    path = Path(name)
    if path.is_file():
        return path
    bundled = bundled_config(name)
    if bundled is None:
        raise InputError(f"config {name} not found (and no bundled config of that name)")
    return bundled


def cmd_simulate(args) -> int:
    path = _resolve_config(args.config)
    overrides = {"seed": args.seed, "rounds": args.rounds}
    if args.variant:
        overrides["variant"] = Variant.parse(args.variant).value
    if args.sampled:
        overrides["sampled"] = True
    if args.force_continue:
        overrides["force_continue"] = True
    try:
        config = load_config(path, **overrides)
        result = run(config)
    except (ConfigError, InsufficientStatistics) as exc:
        raise InputError(str(exc)) from exc
    if args.out:
        Path(args.out).write_text(result.to_json(include_keys=True) + "\n")
    if args.json:
        sys.stdout.write(result.to_json(include_keys=False) + "\n")
    else:
        d = result.to_dict()
        w, q = d["witness"], d["qber"]
        lines = [f"variant: {d['variant']}",
                 f"witness: {w['value']:.6f} ± {w['se']:.6f} vs bound {w['bound']:.6f} -> "
                 f"{'pass' if w['passed'] else 'fail'}",
                 f"sifted rounds: {d['sifted_length']} of {d['sifting_rounds']}"]
        if q["estimate"] is not None:
            lines.append(f"QBER: {q['estimate']:.6f} ± {q['se']:.6f} (model {q['model']:.6f}), "
                         f"threshold {d['threshold']['kind']} = {d['threshold']['value']:.6f}")
        lines.append(f"abort stage: {d['abort_stage']}")
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if result.abort_stage is None else EXIT_FAIL


# --- sweep ------------------------------------------------------------------------------------


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(np.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(n + 1), 12)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def _labels(first_ok, second_ok, local: str, not_useful: str) -> np.ndarray:
    return np.where(~first_ok, local, np.where(~second_ok, not_useful, Classification.USEFUL.value))


def sweep_rows(family: str, step: float, lo: float = 0.0, hi: float = 1.0):
    """Header and columns of a region sweep, in lexicographic coordinate order.

    The criteria are closed-form in the singular values, so the whole grid is
    evaluated as arrays; the security module remains the reference for each
    point (see the tests).
    """
    if not step > 0:
        raise InputError("sweep step must be positive")
    if not 0.0 <= lo <= hi <= 1.0:
        raise InputError("sweep range must lie within [0, 1]")
    if family not in SWEEP_FAMILIES:
        raise InputError(f"unknown family {family}; choose from {', '.join(SWEEP_FAMILIES)}")
    axis = _grid(lo, hi, step)
    if family == "IdenticalPlane":
        t1, t2 = (g.ravel() for g in np.meshgrid(axis, axis, indexing="ij"))
        sq, s = t1**2 + t2**2, t1 + t2
        prod = (2.0 + s) ** 3
        cols = {
            "t1": t1, "t2": t2,
            "fnn_first_margin": sq - TWO_23,
            "fnn_second_identical_margin": s - TWO_56,
            "fnn_second_general_margin": prod - TRILOCAL_PRODUCT_BOUND,
            "chsh_first_margin": sq - 1.0,
            "chsh_second_identical_margin": s - SQRT2,
            "chsh_second_general_margin": prod - CHSH_PRODUCT_BOUND,
            "qber_min": 1.0 - prod / 64.0,
            "class_trilocal": _labels(sq > TWO_23, s > TWO_56, Classification.TRILOCAL.value,
                                      Classification.FNN_NOT_USEFUL.value),
            "class_chsh": _labels(sq > 1.0, s > SQRT2, Classification.CHSH_LOCAL.value,
                                  Classification.CHSH_NOT_USEFUL.value),
            "misclassified": (sq > TWO_23) & (s > TWO_56) & (s <= MISCLASSIFICATION_SUM),
        }
        return cols
    fixed = np.array(SWEEP_FAMILIES[family])
    free = [axis[axis <= t + 1e-12] for t in fixed]
    t2 = np.stack([g.ravel() for g in np.meshgrid(*free, indexing="ij")], axis=1)
    first = np.cbrt(np.prod(fixed)) ** 2 + np.cbrt(np.prod(t2, axis=1)) ** 2
    prod = np.prod(2.0 + fixed + t2, axis=1)
    chsh_min = np.min(fixed**2 + t2**2, axis=1)
    f_n, s_n = first > TWO_23, prod > TRILOCAL_PRODUCT_BOUND
    f_c, s_c = chsh_min > 1.0, prod > CHSH_PRODUCT_BOUND
    return {
        "t12": t2[:, 0], "t22": t2[:, 1], "t32": t2[:, 2],
        "fnn_first_margin": first - TWO_23,
        "fnn_second_margin": prod - TRILOCAL_PRODUCT_BOUND,
        "fnn_second_expanded_lhs": prod - np.prod(2.0 + fixed),
        "chsh_first_margin": chsh_min - 1.0,
        "chsh_second_margin": prod - CHSH_PRODUCT_BOUND,
        "qber_min": 1.0 - prod / 64.0,
        "class_trilocal": _labels(f_n, s_n, Classification.TRILOCAL.value, Classification.FNN_NOT_USEFUL.value),
        "class_chsh": _labels(f_c, s_c, Classification.CHSH_LOCAL.value, Classification.CHSH_NOT_USEFUL.value),
        "chsh_pass_fnn_fail": f_c & ~f_n,
        "product_band": s_c & ~s_n,
    }


def write_sweep_csv(cols: dict, stream, comment: str = "") -> None:
    stream.write(CSV_HEADER + "\n")
    if comment:
        stream.write(f"# {comment}\n")
    writer = csv.writer(stream, lineterminator="\n")
    names = list(cols)
    writer.writerow(names)
    for row in zip(*(cols[n] for n in names)):
        writer.writerow([_fmt(v) for v in row])


def cmd_sweep(args) -> int:
    step = args.grid_step if args.grid_step is not None else 0.01
    cols = sweep_rows(args.family, step, *args.range)
    buf = io.StringIO()
    if args.json:
        names = list(cols)
        rows = [dict(zip(names, (v.item() if isinstance(v, np.generic) else v for v in row)))
                for row in zip(*(cols[n] for n in names))]
        json.dump({"schema": "fnn-qkd-lab sweep v1", "family": args.family, "step": step, "rows": rows}, buf)
        buf.write("\n")
    else:
        write_sweep_csv(cols, buf, f"family {args.family} step {step} range {args.range[0]} {args.range[1]}")
    try:
        _emit(buf.getvalue(), args.out)
    except OSError as exc:
        raise InputError(f"cannot write {args.out}: {exc}") from exc
    return EXIT_OK


# --- bound ------------------------------------------------------------------------------------------


def cmd_bound(args) -> int:
    if bool(args.state) == bool(args.t):
        raise InputError("give either --state or --t")
    triples = _triples_arg(args.t) if args.t else [s.singular_values() for s in _states(args.state)]
    b = analytic_bound(triples)
    data = {"singular_values": [list(t) for t in triples], "bound": b, "classical_bound": CLASSICAL_BOUND,
            "violation": b > CLASSICAL_BOUND, "fnn_margin": b**2 - CLASSICAL_BOUND**2}
    if args.json:
        _emit(json.dumps(data, indent=2) + "\n", args.out)
    else:
        _emit(f"bound {b:.6f}  classical {CLASSICAL_BOUND:.6f}  "
              f"{'violation' if data['violation'] else 'no violation'}  margin {data['fnn_margin']:+.6f}\n", args.out)
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--seed", type=int, default=None, help="random seed (u64)")
    common.add_argument("--grid-step", type=float, default=None, help="grid step for oracle or sweep")
    common.add_argument("--out", default=None, help="write output to this path")

    parser = argparse.ArgumentParser(prog="fnn-qkd-lab",
                                     description="Star-network QKD: criteria, thresholds, simulation and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("characterize", parents=[common], help="criteria and classification of states")
    p.add_argument("--state", action="append", required=True, help="JSON state descriptor (1 or 3 times)")
    p.add_argument("--protocol", choices=["Trilocal", "Chsh"], default="Trilocal",
                   help="protocol whose classification sets the exit code")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("verify-thresholds", parents=[common], help="grid-search check of all QBER thresholds")
    p.set_defaults(func=cmd_verify_thresholds)

    p = sub.add_parser("simulate", parents=[common], help="run a protocol simulation from a JSON config")
    p.add_argument("config", help="config path or name of a bundled config")
    p.add_argument("--variant", choices=["trilocal", "chsh", "N4_Trilocal", "N4_Chsh"])
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--sampled", action="store_true", help="estimate the witness from sampled rounds")
    p.add_argument("--force-continue", action="store_true", help="generate keys even after a witness abort")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="CSV of criteria over a parameter grid")
    p.add_argument("--family", choices=list(SWEEP_FAMILIES), default="IdenticalPlane")
    p.add_argument("--range", nargs=2, type=float, default=(0.0, 1.0), metavar=("LO", "HI"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bound", parents=[common], help="quantum bound of the trilocal witness")
    p.add_argument("--state", action="append", help="JSON state descriptor (1 or 3 times)")
    p.add_argument("--t", action="append", help="singular values 't1,t2[,t3]' (1 or 3 times)")
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FnnQkdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
