"""Command-line front end.

Subcommands: ``simulate`` (replication grid from a YAML config),
``estimate`` (one dataset CSV), ``oracle`` (population diagnostics under a
known DGP), and ``dgp-sample`` (write a synthetic dataset).  Exit codes:
0 success, 1 runtime or estimation failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from typing import IO

from . import estimators as est
from .config import load_config
from .data import Dataset, format_float, read_dataset_csv, write_dataset_csv
from .errors import ConfigError, EstimationError
from .estimators import ESTIMATORS
from .nuisance import FitOptions, fit_nuisances
from .projections import DEFAULT_DRAWS, McEstimate, PopulationOracle, uniform_knots
from .simulation import (
    OUTCOME_FORMS,
    DgpSpec,
    MetricsTable,
    apply_local_perturbation,
    overlap_constant,
    run_replications,
    sample_dgp,
)

ESTIMATE_HEADER = (
    "estimator,n,alpha,psi,sigma,ci_lower,ci_upper,model_size,truncation"
)
ORACLE_HEADER = "quantity,value,mc_se"


def _out_stream(path: str | None):
    if path is None:
        return nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


def _read_data(path: str) -> Dataset:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return read_dataset_csv(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ConfigError("--alpha must lie strictly in (0, 1)")


def _dgp_from_args(args: argparse.Namespace) -> DgpSpec:
    spec = DgpSpec(gamma=args.gamma, outcome_form=args.outcome_form)
    if args.perturbed:
        if args.n is None:
            raise ConfigError("--perturbed requires --n for the 1/sqrt(n) scale")
        spec = apply_local_perturbation(spec, args.n)
    return spec


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc}") from None
    out_path = args.out if args.out is not None else cfg.output
    if out_path is None:
        raise ConfigError(
            "config: output: missing; set `output` in the config or pass --out"
        )
    reps = cfg.replications if args.reps is None else args.reps
    if reps < 1:
        raise ConfigError("--reps must be positive")
    rows = []
    for gamma in cfg.gammas:
        for form in cfg.outcome_forms:
            for n in cfg.sample_sizes:
                spec = DgpSpec(
                    gamma=gamma,
                    outcome_form=form,
                    noise_variance=cfg.noise_variance,
                )
                if cfg.perturbed:
                    spec = apply_local_perturbation(spec, n)
                table = run_replications(
                    spec,
                    n,
                    cfg.estimators,
                    reps,
                    cfg.master_seed,
                    alpha=cfg.alpha,
                    options=cfg.fit,
                    truth_draws=cfg.truth_draws,
                )
                rows.extend(table.rows)
    with _out_stream(out_path) as fh:
        MetricsTable(rows=rows).write_csv(fh)
    return 0


def _model_size(bundle, name: str) -> int:
    if name == est.PARTIALLY_LINEAR:
        return bundle.rlearner_support.shape[1]
    if name == est.INTERCEPT:
        return 1
    return bundle.outcome_support_obs.shape[1]


def cmd_estimate(args: argparse.Namespace) -> int:
    _check_alpha(args.alpha)
    if args.fixed_propensity is not None and not 0.0 < args.fixed_propensity < 1.0:
        raise ConfigError("--fixed-propensity must lie strictly in (0, 1)")
    if args.knots_per_cov is not None and args.knots_per_cov < 0:
        raise ConfigError("--knots-per-cov must be nonnegative")
    data = _read_data(args.data)
    options = FitOptions(knots_per_covariate=args.knots_per_cov)
    bundle = fit_nuisances(
        data,
        options=options,
        seed=args.seed,
        fixed_propensity=args.fixed_propensity,
    )
    result = ESTIMATORS[args.estimator](data, bundle, alpha=args.alpha)
    fields = [
        result.estimator,
        str(result.n),
        format_float(result.alpha),
        format_float(result.psi),
        format_float(result.sigma),
        format_float(result.ci[0]),
        format_float(result.ci[1]),
        str(_model_size(bundle, args.estimator)),
        format_float(bundle.propensity.truncation),
    ]
    with _out_stream(args.out) as fh:
        fh.write(ESTIMATE_HEADER + "\n")
        fh.write(",".join(fields) + "\n")
    return 0


def _write_oracle_rows(fh: IO[str], rows: list[tuple[str, McEstimate]]) -> None:
    fh.write(ORACLE_HEADER + "\n")
    for name, mc in rows:
        fh.write(f"{name},{format_float(mc.value)},{format_float(mc.mc_se)}\n")


def cmd_oracle(args: argparse.Namespace) -> int:
    if args.knots_per_cov < 0:
        raise ConfigError("--knots-per-cov must be nonnegative")
    if args.draws < 1:
        raise ConfigError("--draws must be positive")
    spec = _dgp_from_args(args)
    K = args.knots_per_cov
    K_oracle = args.oracle_knots_per_cov
    if K_oracle is None:
        K_oracle = 2 * K + 1
    if K_oracle < K:
        raise ConfigError("--oracle-knots-per-cov must be at least --knots-per-cov")
    working = uniform_knots(K, spec.n_covariates)
    oracle_basis = uniform_knots(K_oracle, spec.n_covariates)
    oracle = PopulationOracle(spec, n_draws=args.draws, seed=args.seed)
    rows = [
        ("true_ate", oracle.true_ate()),
        ("working_estimand", oracle.working_estimand(working)),
        ("plug_in_estimand", oracle.plug_in_estimand(working)),
        ("oracle_bias_plug_in", oracle.oracle_bias_plug_in(working, oracle_basis)),
        (
            "oracle_bias_partially_linear",
            oracle.oracle_bias_partially_linear(working, oracle_basis),
        ),
        ("overlap_constant", McEstimate(overlap_constant(spec), 0.0)),
    ]
    with _out_stream(args.out) as fh:
        _write_oracle_rows(fh, rows)
    return 0


def cmd_dgp_sample(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise ConfigError("--n must be positive")
    spec = _dgp_from_args(args)
    data = sample_dgp(spec, args.n, args.seed)
    with _out_stream(args.out) as fh:
        write_dataset_csv(data, fh)
    return 0


# --------------------------------------------------------------------------
# parser


def _add_dgp_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gamma", type=float, default=0.5, help="overlap slope")
    parser.add_argument(
        "--outcome-form", choices=OUTCOME_FORMS, default="linear",
        help="control-arm mean family",
    )
    parser.add_argument(
        "--perturbed", action="store_true",
        help="apply the 1/sqrt(n) least-favorable perturbation",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adml",
        description="Adaptive debiased machine learning for the average treatment effect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a replication grid from a config file")
    sim.add_argument("--config", required=True, help="YAML experiment config")
    sim.add_argument("--reps", type=int, default=None, help="override replication count")
    sim.add_argument("--out", default=None, help="override the config output path")
    sim.set_defaults(func=cmd_simulate)

    est_p = sub.add_parser("estimate", help="estimate the ATE from a dataset CSV")
    est_p.add_argument("--data", required=True, help="CSV with columns W1..Wd,A,Y")
    est_p.add_argument(
        "--estimator", choices=sorted(ESTIMATORS), default=est.PLUG_IN
    )
    est_p.add_argument("--alpha", type=float, default=0.05, help="interval level")
    est_p.add_argument("--seed", type=int, default=0, help="cross-validation seed")
    est_p.add_argument(
        "--knots-per-cov", type=int, default=None,
        help="hinge knots per covariate (default: sample-size schedule)",
    )
    est_p.add_argument(
        "--fixed-propensity", type=float, default=None,
        help="known constant treatment probability; skips the propensity fit",
    )
    est_p.add_argument("--out", default=None, help="output path (default stdout)")
    est_p.set_defaults(func=cmd_estimate)

    orc = sub.add_parser("oracle", help="population diagnostics under a known DGP")
    _add_dgp_flags(orc)
    orc.add_argument("--n", type=int, default=None, help="perturbation sample size")
    orc.add_argument(
        "--knots-per-cov", type=int, default=4, help="working-basis knots per covariate"
    )
    orc.add_argument(
        "--oracle-knots-per-cov", type=int, default=None,
        help="oracle-basis knots per covariate (default 2K+1, which nests the working basis)",
    )
    orc.add_argument("--draws", type=int, default=DEFAULT_DRAWS, help="MC draws")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--out", default=None, help="output path (default stdout)")
    orc.set_defaults(func=cmd_oracle)

    smp = sub.add_parser("dgp-sample", help="write a synthetic dataset CSV")
    _add_dgp_flags(smp)
    smp.add_argument("--n", type=int, required=True, help="sample size")
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--out", default=None, help="output path (default stdout)")
    smp.set_defaults(func=cmd_dgp_sample)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
