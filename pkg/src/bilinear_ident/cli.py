"""Command-line interface.

Exit codes:

* ``0`` success (``check``: the instance is identifiable)
* ``2`` bad usage, malformed input or invalid configuration
* ``3`` ``check``: the sufficient condition failed or an ambiguity was found
* ``4`` ``check``: no conclusion could be drawn
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds as bd
from .bilinear_core import RankOneInstance, apply_lifted, lift_linear_convolution
from .experiments import (CellResult, ExperimentConfig, FailureCurve, InsufficientDataError,
                          curve_to_csv, fit_slope, run_experiment, slope_record)
from .identifiability import DEFAULT_DELTA_TEST, IDENTIFIABLE, check_sufficient_instance
from .null_space import empty_family, family_bernoulli, family_biorthogonal
from .solver import InfeasibleError, SolverConfig, kernel_basis, solve_min_rank_near

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILED = 3
EXIT_UNKNOWN = 4
SCHEMA_VERSION = 1

_DEFAULT_FIT_MODE = {"A": "loglog", "B": "semilog", "C": "semilog"}
_BOUNDS = {
    "lemma1": bd.lemma1_bound,
    "lemma2": bd.lemma2_bound,
    "lemma3": bd.lemma3_gaussian_bound,
    "lemma4": bd.lemma4_bernoulli_bound,
    "theorem3": bd.theorem3_prob,
    "corollary3": bd.corollary3_prob,
    "delta-from-prime": bd.delta_from_prime,
    "theorem4": bd.theorem4_prob,
    "theorem5": bd.theorem5_prob,
    "covering": bd.covering_number_bounds,
}
_SUCCESS_KIND = {"theorem3", "corollary3", "theorem4", "theorem5"}


class UsageError(Exception):
    """Raised for anything that should end with exit code 2."""


# --------------------------------------------------------------------------
# input helpers

def read_signal_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Header ``m n`` followed by ``m + n`` reals: ``x`` then ``y``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise UsageError(f"{path}: empty signal file")
    try:
        m, n = (int(t) for t in lines[0].split())
        values = [float(t) for ln in lines[1:] for t in ln.split()]
    except ValueError as exc:
        raise UsageError(f"{path}: malformed signal file ({exc})") from exc
    if m < 1 or n < 1:
        raise UsageError(f"{path}: dimensions must be positive")
    if len(values) != m + n:
        raise UsageError(f"{path}: expected {m + n} values, found {len(values)}")
    x, y = np.array(values[:m]), np.array(values[m:])
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise UsageError(f"{path}: values must be finite")
    return x, y


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        out[k] = _merge(out.get(k, {}), v) if isinstance(v, dict) else v
    return out


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be an object")
    data = _merge(data, _parse_overrides(overrides))
    version = data.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise UsageError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    try:
        return ExperimentConfig.from_mapping(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def read_curve_csv(path) -> FailureCurve:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UsageError(f"{path}: no data rows")
    try:
        example = rows[0]["example"]
        cells = tuple(CellResult(int(r["m"]), int(r["n"]), int(r["trials"]), int(r["failures"]))
                      for r in rows)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{path}: malformed curve file ({exc})") from exc
    return FailureCurve(example, cells)


def _emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands

def lift_info_report(m: int, n: int) -> str:
    if m < 1 or n < 1:
        raise UsageError("m and n must be positive")
    op = lift_linear_convolution(m, n)
    kdim = kernel_basis(op).dim
    dof = m + n - 3 if m >= 2 and n >= 2 else "n/a"
    return (f"operator=linear_convolution\nm={m}\nn={n}\nq={op.q}\n"
            f"kernel_dim={kdim}\nrank_two_dof={dof}\n")


def cmd_lift_info(args) -> int:
    sys.stdout.write(lift_info_report(args.m, args.n))
    return EXIT_OK


def _family(name, m, n, tau):
    try:
        if name == "empty":
            return empty_family(m, n)
        if name == "biorthogonal":
            return family_biorthogonal(m, n)
        return family_bernoulli(m, n, tau)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _check_alternative(x, y, alt_path) -> int:
    xa, ya = read_signal_file(alt_path)
    if xa.shape != x.shape or ya.shape != y.shape:
        raise UsageError("alternative signals have different dimensions")
    op = lift_linear_convolution(x.size, y.size)
    z, za = np.convolve(x, y), np.convolve(xa, ya)
    D = np.outer(x, y) - np.outer(xa, ya)
    rank = int(np.linalg.matrix_rank(D))
    kernel_res = float(np.abs(apply_lifted(op, D).z).max())
    same = RankOneInstance.from_signals(x, y).same_class(RankOneInstance.from_signals(xa, ya))
    print(f"observation_match={np.array_equal(z, za)}")
    print(f"difference_rank={rank}")
    print(f"difference_kernel_residual={kernel_res:.3e}")
    if np.allclose(z, za, rtol=0, atol=1e-12 * max(np.abs(z).max(), 1.0)) and not same:
        print("verdict=not_identifiable (two inequivalent factorizations of the same observation)")
        return EXIT_FAILED
    print("verdict=unknown (the alternative does not witness an ambiguity)")
    return EXIT_UNKNOWN


def _check_convolution(x, y, mu) -> int:
    op = lift_linear_convolution(x.size, y.size)
    M = RankOneInstance.from_signals(x, y).normalized()
    try:
        res = solve_min_rank_near(op, M, SolverConfig(mu=mu))
    except InfeasibleError as exc:
        print(f"verdict=unknown ({exc})")
        return EXIT_UNKNOWN
    sv = " ".join(f"{s:.6g}" for s in res.singular_values[:3])
    print(f"solver_converged={res.converged}")
    print(f"numerical_rank={res.numerical_rank}")
    print(f"leading_singular_values={sv}")
    if res.converged and res.numerical_rank == 2:
        print(f"verdict=ambiguity_event (rank-two kernel element within {mu} of M)")
        return EXIT_FAILED
    print("verdict=unknown (no rank-two kernel element found)")
    return EXIT_UNKNOWN


def cmd_check(args) -> int:
    x, y = read_signal_file(args.signal_file)
    if not (x.any() and y.any()):
        raise UsageError("signals must be nonzero")
    if args.alternative:
        return _check_alternative(x, y, args.alternative)
    if args.family == "convolution":
        return _check_convolution(x, y, args.mu)
    family = _family(args.family, x.size, y.size, args.tau)
    verdict = check_sufficient_instance(RankOneInstance.from_signals(x, y), family, args.delta_test)
    print(f"family={family.name}")
    print(f"parts={family.f}")
    print(f"verdict={verdict.outcome}")
    if verdict.outcome == IDENTIFIABLE:
        return EXIT_OK
    cm, rm = verdict.margins[[_label_index(family, verdict.witness)]][0]
    print(f"witness={verdict.witness}")
    print(f"witness_margins={cm:.12g} {rm:.12g}")
    return EXIT_FAILED


def _label_index(family, label):
    i, j = (v - family.label_base for v in label)
    return i * family.row_frames.shape[0] + j


def cmd_bounds(args) -> int:
    params = _parse_overrides(args.param)
    if args.kind == "figure1":
        allowed = {"m", "n_min", "n_max", "epsilon", "delta", "theta_constant"}
        if set(params) - allowed:
            raise UsageError(f"unknown parameters: {sorted(set(params) - allowed)}")
        try:
            m, lo, hi = int(params["m"]), int(params["n_min"]), int(params["n_max"])
        except KeyError as exc:
            raise UsageError(f"missing parameter {exc}") from exc
        extra = (params.get("epsilon", 0.1), params.get("delta", 1e-4), params.get("theta_constant"))
        try:
            curve = bd.figure1_curve(m, range(lo, hi + 1), *extra)
            logs = bd.figure1_log10_curve(m, range(lo, hi + 1), *extra)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        _emit("n,failure_bound,log10_failure_bound\n"
              + "".join(f"{n},{v!r},{lv!r}\n" for (n, v), (_, lv) in zip(curve, logs)), args.output)
        return EXIT_OK
    fn = _BOUNDS[args.kind]
    names = list(inspect.signature(fn).parameters)
    if set(params) - set(names):
        raise UsageError(f"unknown parameters: {sorted(set(params) - set(names))}; expected {names}")
    try:
        value = fn(**params)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if isinstance(value, tuple):
        _emit(f"kind={args.kind}\nlower={value[0]!r}\nupper={value[1]!r}\n", args.output)
        return EXIT_OK
    text = f"kind={args.kind}\nvalue={value!r}\n"
    if args.kind.startswith(("lemma", "theorem", "corollary")):
        kind = "success" if args.kind in _SUCCESS_KIND else "failure"
        text += f"vacuous={bd.is_vacuous(value, kind)}\n"
    _emit(text, args.output)
    return EXIT_OK


def _fit_lines(curve: FailureCurve, mode: str, log_base: float, only_m=None) -> str:
    out = []
    for m in curve.m_values if only_m is None else [only_m]:
        try:
            out.append(slope_record(fit_slope(curve, mode, m, log_base)))
        except InsufficientDataError as exc:
            out.append(f"mode={mode}\nm={m}\nerror={exc}\n")
    return "\n".join(out)


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    curve = run_experiment(cfg, workers=args.workers)
    _emit(curve_to_csv(curve), args.output)
    mode = args.fit_mode or _DEFAULT_FIT_MODE[cfg.example]
    record = _fit_lines(curve, mode, args.log_base)
    if args.fit_output:
        Path(args.fit_output).write_text(record)
    elif args.output:
        sys.stdout.write(record)
    return EXIT_OK


def cmd_fit(args) -> int:
    curve = read_curve_csv(args.csv)
    if args.m is not None and args.m not in curve.m_values:
        raise UsageError(f"m = {args.m} does not occur in {args.csv}")
    _emit(_fit_lines(curve, args.mode, args.log_base, args.m), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bilinear-ident",
                                description="Identifiability checks for lifted bilinear inverse problems.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("lift-info", help="dimensions of the lifted linear convolution operator")
    s.add_argument("m", type=int)
    s.add_argument("n", type=int)
    s.set_defaults(func=cmd_lift_info)

    s = sub.add_parser("check", help="test one instance (exit 0 identifiable, 3 failed, 4 unknown)")
    s.add_argument("signal_file")
    s.add_argument("--family", choices=["empty", "biorthogonal", "bernoulli", "convolution"],
                   default="convolution")
    s.add_argument("--tau", type=float, default=0.2)
    s.add_argument("--delta-test", type=float, default=DEFAULT_DELTA_TEST)
    s.add_argument("--mu", type=float, default=0.8)
    s.add_argument("--alternative", help="second signal file claimed to give the same observation")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("bounds", help="evaluate a closed-form bound or the Gaussian theory curve")
    s.add_argument("kind", choices=sorted(_BOUNDS) + ["figure1"])
    s.add_argument("param", nargs="*", help="key=value parameters")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("run", help="run a Monte Carlo experiment from a JSON config")
    s.add_argument("config")
    s.add_argument("-o", "--output", help="CSV destination (default stdout)")
    s.add_argument("--fit-output", help="slope record destination")
    s.add_argument("--fit-mode", choices=["loglog", "semilog"])
    s.add_argument("--log-base", type=float, default=10.0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("fit", help="fit a slope to a failure curve CSV")
    s.add_argument("csv")
    s.add_argument("--mode", choices=["loglog", "semilog"], required=True)
    s.add_argument("--m", type=int)
    s.add_argument("--log-base", type=float, default=10.0)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be positive")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
