"""Command-line front end.

Structured results go to JSON, tables to CSV (17 significant digits).  Exit
codes: 0 success, 2 bad input, 3 degenerate spectrum, 4 convergence or
contour failure, 5 oracle mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .errors import InvalidSpectrumError, OracleMismatchError, ShapeError, SpectrumError
from .estimators import estimate, estimate_clt_covariance, estimate_precision_eigs
from .model import (
    ObservationMatrix,
    SampleSpectrum,
    hermitian_eigenvalues,
    load_population,
    make_population,
    sample_covariance,
    smi_spectrum,
)
from .montecarlo import (
    ExperimentConfig,
    load_config,
    run_bias_mse,
    run_clt_study,
    run_g1_comparison,
    run_timing,
    run_trial,
    write_csv,
)
from .oracle import build_contour, clt_covariance_parts, contour_estimate, contour_pair
from .support import support_clusters

__all__ = ["main", "build_parser"]

ORACLE_EIG_RTOL = 1e-8
ORACLE_THETA_RTOL = 1e-6
ORACLE_I1_ATOL = 1e-6
DEFAULT_ORACLE_RHO = (4.0, 3.0, 2.0, 1.0)
DEFAULT_ORACLE_MULTS = "2,2"
DEFAULT_ORACLE_K = 8


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(";", ",").replace(" ", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise ShapeError(f"{what} must be a comma-separated list of numbers: {exc}") from exc
    if not vals:
        raise ShapeError(f"{what} is empty")
    return vals


def _ints(text: str, what: str) -> list[int]:
    vals = _floats(text, what)
    if any(v != int(v) or v <= 0 for v in vals):
        raise ShapeError(f"{what} must be positive integers, got {text!r}")
    return [int(v) for v in vals]


def _emit(doc: dict, out: str | None, stdout: TextIO) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        stdout.write(text)


def read_matrix(source: TextIO | str | Path) -> np.ndarray:
    """Whitespace- or comma-separated numeric matrix; complex entries like ``1+2j`` allowed."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ShapeError("observation matrix is empty")
    rows = [ln.replace(",", " ").split() for ln in lines]
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ShapeError(f"ragged observation matrix (row lengths {sorted(width)})")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        try:
            data = np.array([[complex(v.replace("i", "j")) for v in r] for r in rows])
        except ValueError as exc:
            raise ShapeError(f"observation matrix has a non-numeric entry: {exc}") from exc
    if not np.all(np.isfinite(data)):
        raise ShapeError("observation matrix contains non-finite values")
    return data


def _sample_from_args(args, stdin: TextIO) -> SampleSpectrum:
    if args.eigs is not None:
        if args.K is None:
            raise ShapeError("--eigs needs --K (the number of observations)")
        sigma = np.sort(np.asarray(_floats(args.eigs, "--eigs")))
        return smi_spectrum(sigma, args.K)
    source = stdin if args.data in (None, "-") else args.data
    raw = read_matrix(source)
    Y = ObservationMatrix.from_raw(raw)
    if args.K is not None and args.K != Y.K:
        raise ShapeError(f"--K {args.K} disagrees with the {Y.K} observation columns")
    return smi_spectrum(hermitian_eigenvalues(sample_covariance(Y)), Y.K)


def cmd_estimate(args, stdout: TextIO, stdin: TextIO) -> int:
    sample = _sample_from_args(args, stdin)
    mults = _ints(args.mults, "--mults")
    result = estimate(sample, mults)
    doc = {"N": sample.N, "K": sample.K, "c_K": sample.c_K, "mults": mults}
    doc.update(result.to_dict())
    _emit(doc, args.out, stdout)
    return 0


def _population_from_args(args):
    if args.config:
        return load_population(args.config)
    if args.eigs is None or args.mults is None:
        raise InvalidSpectrumError("support needs --config or both --eigs and --mults")
    return make_population(_floats(args.eigs, "--eigs"), _ints(args.mults, "--mults"))


def cmd_support(args, stdout: TextIO, stdin: TextIO) -> int:
    spec = _population_from_args(args)
    if args.c is None:
        raise InvalidSpectrumError("support needs the aspect ratio --c")
    report = support_clusters(spec, args.c)
    doc = {"population": spec.to_dict()}
    doc.update(report.to_dict())
    _emit(doc, args.out, stdout)
    return 0


def _config_from_args(args) -> ExperimentConfig:
    if not args.config:
        raise InvalidSpectrumError(f"{args.command} needs --config")
    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.field is not None:
        changes["field_kind"] = args.field
    return config.with_(**changes) if changes else config


def _write_table(text: str, out: str | None, stdout: TextIO) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        stdout.write(text)


def _export_eigs(config: ExperimentConfig, path: str) -> None:
    """One JSON line per trial: SCM eigenvalues and the proposed estimate."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for N in config.N_grid:
            for index in range(config.trials):
                rec = run_trial(config.with_(estimators=("proposed",)), N, index, keep_sample=True)
                fh.write(
                    json.dumps(
                        {
                            "N": N,
                            "K": rec.K,
                            "trial": index,
                            "seed": rec.seed,
                            "mults": list(config.population(N).mults),
                            "sigma_hat": [float(v) for v in rec.sample.sigma_hat],
                            "gamma_breve": [float(v) for v in rec.estimates["proposed"]],
                        }
                    )
                    + "\n"
                )


def cmd_simulate(args, stdout: TextIO, stdin: TextIO) -> int:
    config = _config_from_args(args)
    if "g1" in config.outputs and not {"bias", "mse"} & set(config.outputs):
        text = write_csv(run_g1_comparison(config))
    else:
        text = write_csv(run_bias_mse(config))
        if "g1" in config.outputs:
            text += "\n" + write_csv(run_g1_comparison(config))
    _write_table(text, args.out, stdout)
    if args.export_eigs:
        _export_eigs(config, args.export_eigs)
    return 0


def cmd_clt_check(args, stdout: TextIO, stdin: TextIO) -> int:
    config = _config_from_args(args)
    study = run_clt_study(config)
    if args.out:
        write_csv(study.rows(), args.out, header=("trial", "m", "s_value"))
    _emit(study.to_dict(), None, stdout)
    return 0


def cmd_timing(args, stdout: TextIO, stdin: TextIO) -> int:
    config = _config_from_args(args)
    _write_table(write_csv(run_timing(config)), args.out, stdout)
    return 0


def cmd_oracle_check(args, stdout: TextIO, stdin: TextIO) -> int:
    mults = _ints(args.mults if args.mults is not None else DEFAULT_ORACLE_MULTS, "--mults")
    K = args.K if args.K is not None else DEFAULT_ORACLE_K
    if args.eigs is None:
        rho = np.array(DEFAULT_ORACLE_RHO)
        sample = SampleSpectrum(1.0 / rho[::-1], rho, K)
    else:
        sample = smi_spectrum(np.sort(np.asarray(_floats(args.eigs, "--eigs"))), K)
    single = args.nodes or 512
    double = args.nodes or 128
    closed = estimate_precision_eigs(sample, mults)
    theta = estimate_clt_covariance(sample, mults)
    L = len(mults)
    quad = np.array([contour_estimate(sample, mults, m, build_contour(None, sample, mults, m, nodes_per_edge=single)) for m in range(L)])
    quad_theta = np.zeros((L, L))
    worst_i1 = 0.0
    for m in range(L):
        for n in range(L):
            I1, I2 = clt_covariance_parts(sample, mults, m, n, contour_pair(None, sample, mults, m, n, double))
            quad_theta[m, n] = (I1 + I2).real
            worst_i1 = max(worst_i1, abs(I1))
    eig_dev = float(np.max(np.abs(quad - closed) / np.abs(closed)))
    theta_dev = float(np.max(np.abs(quad_theta - theta) / np.abs(theta)))
    ok = eig_dev <= ORACLE_EIG_RTOL and theta_dev <= ORACLE_THETA_RTOL and worst_i1 <= ORACLE_I1_ATOL
    doc = {
        "N": sample.N,
        "K": sample.K,
        "mults": mults,
        "gamma_breve": [float(v) for v in closed],
        "gamma_quadrature": [float(v) for v in quad],
        "max_rel_dev_gamma": eig_dev,
        "theta_hat": theta.tolist(),
        "theta_quadrature": quad_theta.tolist(),
        "max_rel_dev_theta": theta_dev,
        "max_abs_I1": worst_i1,
        "passed": ok,
    }
    _emit(doc, args.out, stdout)
    if not ok:
        raise OracleMismatchError(
            f"closed form and quadrature disagree (gamma {eig_dev:.2e}, theta {theta_dev:.2e}, I1 {worst_i1:.2e})"
        )
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "support": cmd_support,
    "simulate": cmd_simulate,
    "clt-check": cmd_clt_check,
    "oracle-check": cmd_oracle_check,
    "timing": cmd_timing,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file (population spec or experiment config)")
    common.add_argument("--eigs", help="comma-separated eigenvalues")
    common.add_argument("--mults", help="comma-separated multiplicities")
    common.add_argument("--K", type=int, help="number of observations")
    common.add_argument("--c", type=float, help="aspect ratio N/K")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    common.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("--field", choices=("complex", "real"), help="entry distribution")
    common.add_argument("--nodes", type=int, help="quadrature nodes per edge")

    parser = argparse.ArgumentParser(
        prog="precision-spectrum",
        description="Estimate distinct precision-matrix eigenvalues and run the validation suite.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    p = sub.add_parser(
        "estimate",
        parents=[common],
        help="estimate from data or SCM eigenvalues",
        description=(
            "Estimate from raw observations (rows = dimensions, columns = the K unscaled "
            "observations y_1..y_K; the 1/sqrt(K) scaling is applied internally) or from "
            "sample covariance eigenvalues given with --eigs and --K."
        ),
    )
    p.add_argument("data", nargs="?", help="observation matrix file, '-' or omitted for stdin")
    sub.add_parser("support", parents=[common], help="limiting supports and separability")
    p = sub.add_parser("simulate", parents=[common], help="bias/MSE (and g1) Monte Carlo table")
    p.add_argument("--export-eigs", help="write per-trial SCM eigenvalues as JSON lines")
    sub.add_parser("clt-check", parents=[common], help="standardised-deviation study")
    sub.add_parser("oracle-check", parents=[common], help="closed forms against contour quadrature")
    sub.add_parser("timing", parents=[common], help="per-realization timing table")
    return parser


def main(argv: Sequence[str] | None = None, stdout: TextIO | None = None, stdin: TextIO | None = None) -> int:
    stdout = stdout or sys.stdout
    stdin = stdin or sys.stdin
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "estimate" and args.mults is None:
        parser.print_usage(sys.stderr)
        print("error: estimate needs --mults", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, stdout, stdin)
    except SpectrumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
