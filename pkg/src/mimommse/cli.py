"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 self-test failure.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import largesys
from .experiments import (
    FAULTS,
    SCHEMES,
    ExperimentConfig,
    figure_config,
    run_figure,
    run_scheme,
    run_timing,
    selftest,
)
from .matcore import as_cmatrix
from .mcsim import emi_samples, emi_estimate, write_samples_csv
from .optimize import PGOptions, antenna_selection_iid, antenna_selection_values

LOG2 = math.log(2.0)
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_SELFTEST = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _common(p):
    p.add_argument("--config", help="JSON experiment configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-mc", type=int, dest="n_mc")
    p.add_argument("--out", help="output file (stdout when omitted)")


def _build_parser():
    parser = _Parser(prog="mimommse", description="MMSE MIMO mutual information tools")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fixed-point", help="solve the deterministic equivalent and report the approximations")
    _common(p)
    p.add_argument("--snr-db", type=float)

    p = sub.add_parser("emi", help="Monte Carlo estimate of the MMSE mutual information")
    _common(p)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--precoder", help="JSON matrix file for K (identity when omitted)")
    p.add_argument("--samples-csv", help="write per-realization values here")

    p = sub.add_parser("optimize", help="optimize the precoder with the configured scheme")
    _common(p)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--max-iter", type=int)

    p = sub.add_parser("select-antennas", help="optimal number of active antennas for i.i.d. channels")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--out")

    p = sub.add_parser("figure", help="write the data of one figure as CSV")
    _common(p)
    p.add_argument("--id", type=int, required=True, dest="fig_id", choices=[1, 2, 3, 4, 5])

    p = sub.add_parser("timing", help="time the optimizers")
    _common(p)
    p.add_argument("--schemes", default="ibar_structured,ihat_structured,true_structured")
    p.add_argument("--max-iter", type=int)

    p = sub.add_parser("selftest", help="run the seeded property suite")
    p.add_argument("--inject-fault", action="append", default=[], choices=FAULTS)
    p.add_argument("--seed", type=int)
    return parser


def _load_config(args, base=None):
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = ExperimentConfig.from_json(fh.read())
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    else:
        cfg = base or ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, n_mc=args.n_mc)


def _snr(args, cfg):
    return cfg.snr_grid_db[0] if getattr(args, "snr_db", None) is None else args.snr_db


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _cmd_fixed_point(args):
    cfg = _load_config(args)
    snr = _snr(args, cfg)
    m = cfg.model(snr)
    fp = largesys.solve_fixed_point(m.c_t, m.c_r, m.sigma2)
    rep = largesys.i_bar(fp)
    out = dict(
        snr_db=snr,
        sigma2=m.sigma2,
        delta=fp.delta,
        delta_tilde=fp.delta_tilde,
        gamma=fp.gamma,
        gamma_tilde=fp.gamma_tilde,
        stability=fp.stability,
        residual=fp.residual,
        iterations=fp.iterations,
        **rep.to_dict(),
        i_hat_bits=rep.i_hat / LOG2,
        i_bar_bits=rep.i_bar / LOG2,
    )
    _emit(_json(out), args.out)


def _cmd_emi(args):
    cfg = _load_config(args)
    snr = _snr(args, cfg)
    m = cfg.model(snr)
    k = None
    if args.precoder:
        from .channel import matrix_from_json

        with open(args.precoder) as fh:
            k = as_cmatrix(matrix_from_json(fh.read()), square=True)
    est = emi_estimate(m, k, cfg.n_mc, cfg.seed)
    if args.samples_csv:
        vals, _ = emi_samples(m, np.eye(m.t) if k is None else k, cfg.n_mc, cfg.seed)
        write_samples_csv(args.samples_csv, vals[:, None], header=["emi_nats"])
    out = json.loads(est.to_json())
    out.update(snr_db=snr, mean_bits=est.mean / LOG2, std_error_bits=est.std_error / LOG2)
    _emit(_json(out), args.out)


def _cmd_optimize(args):
    cfg = _load_config(args)
    if args.scheme:
        cfg = cfg.with_overrides(scheme=args.scheme)
    snr = _snr(args, cfg)
    options = PGOptions(max_iter=args.max_iter) if args.max_iter else None
    k, res = run_scheme(cfg, snr, cfg.scheme, options)
    m = cfg.model(snr)
    # a block of streams that no optimizer touches
    est = emi_estimate(m, k, cfg.n_mc, cfg.seed, start=2**40)
    out = dict(scheme=cfg.scheme, snr_db=snr, emi=json.loads(est.to_json()), emi_bits=est.mean / LOG2)
    out["precoder"] = {"re": k.real.tolist(), "im": k.imag.tolist()}
    if res is not None:
        out["result"] = res.to_dict()
    _emit(_json(out), args.out)


def _cmd_select(args):
    if args.t < 1:
        raise UsageError("--t must be positive")
    sigma2 = 10.0 ** (-args.snr_db / 10.0)
    s, value = antenna_selection_iid(args.t, sigma2)
    values = antenna_selection_values(args.t, sigma2)
    out = dict(t=args.t, snr_db=args.snr_db, s_opt=s, value_nats=value, value_bits=value / LOG2, values_nats=list(map(float, values)))
    _emit(_json(out), args.out)


def _cmd_figure(args):
    cfg = _load_config(args, base=figure_config(args.fig_id))
    text = run_figure(args.fig_id, cfg=cfg)
    _emit(text, args.out)


def _cmd_timing(args):
    cfg = _load_config(args, base=figure_config(5).with_overrides(snr_grid_db=(10.0,)))
    schemes = tuple(s for s in args.schemes.split(",") if s)
    bad = set(schemes) - {"ibar_structured", "ihat_structured", "true_structured", "true_general"}
    if bad:
        raise UsageError(f"unknown timing schemes {sorted(bad)}")
    options = PGOptions(max_iter=args.max_iter) if args.max_iter else None
    _emit(_json(run_timing(cfg, schemes, options)), args.out)


def _cmd_selftest(args):
    kw = {} if args.seed is None else {"seed": args.seed}
    report = selftest(tuple(args.inject_fault), **kw)
    failed = 0
    for name, ok, detail in report:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    print(f"{len(report) - failed}/{len(report)} checks passed")
    return EXIT_SELFTEST if failed else EXIT_OK


COMMANDS = {
    "fixed-point": _cmd_fixed_point,
    "emi": _cmd_emi,
    "optimize": _cmd_optimize,
    "select-antennas": _cmd_select,
    "figure": _cmd_figure,
    "timing": _cmd_timing,
    "selftest": _cmd_selftest,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args) or EXIT_OK
    except ArithmeticError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except (UsageError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
