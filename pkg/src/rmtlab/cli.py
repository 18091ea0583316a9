"""Command-line entry point: ``rmtlab <subcommand> [options]``.

Exit status is 0 on success, 2 when a computation is refused for exceeding
its budget, and 1 on any other error.
"""

from __future__ import annotations

import argparse
import math
import sys
from fractions import Fraction

import numpy as np

from . import experiments as ex
from .anticoncentration import build_atoms, levy_exact, levy_mc, threshold
from .linalg import qn_singular_count, singularity_polynomial
from .model import (BudgetExceeded, Config, IidBernoulli, ParameterError, Slice, SliceWindow,
                    DiscreteDensity, load_config, parse_probability)
from .rng import RandomSource, derive_seed
from .rounding import randomized_round
from .smoothing import (build_step_record, direct_table, eval_f_recursive,
                        product_identity_check)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def parse_model(text: str):
    """``iid:P``, ``slice:M`` or ``window:P,GAMMA``."""
    kind, _, arg = text.partition(":")
    if kind == "iid":
        return IidBernoulli(parse_probability(arg))
    if kind == "slice":
        return Slice(int(arg))
    if kind == "window":
        p, g = arg.split(",")
        return SliceWindow(parse_probability(p), parse_probability(g))
    raise ParameterError(f"unknown model {text!r}; use iid:P, slice:M or window:P,GAMMA")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file {seed, constants, experiment}")
    common.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("--out", default="-", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "text"), default="csv")
    common.add_argument("--timing", action="store_true", help="fill the wall_ms column")

    parser = argparse.ArgumentParser(prog="rmtlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("singularity", parents=[common], help="P[B_n(p) singular] by Monte Carlo")
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--p", nargs="+", help="probabilities, e.g. 1/2 0.35")
    s.add_argument("--trials", type=int)
    s.add_argument("--checkpoint", help="sidecar file for partial counts")

    s = sub.add_parser("qn", parents=[common], help="P[Q_n singular] by Monte Carlo")
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--trials", type=int)
    s.add_argument("--checkpoint")

    s = sub.add_parser("structure", parents=[common], help="kernel vector classification")
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--p")
    s.add_argument("--samples", type=int)
    s.add_argument("--delta", type=float)
    s.add_argument("--rho", type=float)
    s.add_argument("--gamma")

    s = sub.add_parser("block-residual", parents=[common], help="tiny residuals of A x = 1")
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--p")
    s.add_argument("--trials", type=int)

    s = sub.add_parser("levy", parents=[common], help="concentration of sum b_i x_i")
    s.add_argument("--x", required=True, help="comma-separated coefficients")
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--model", default="iid:1/2")
    s.add_argument("--trials", type=int, help="Monte Carlo trials (exact if omitted)")

    s = sub.add_parser("threshold", parents=[common], help="threshold T_{p,gamma}(x, L)")
    s.add_argument("--x", required=True)
    s.add_argument("--L", type=float, required=True)
    s.add_argument("--p", default="1/2")
    s.add_argument("--gamma", default="1/2")

    s = sub.add_parser("round", parents=[common], help="randomized rounding of a vector")
    s.add_argument("--y", required=True)
    s.add_argument("--lam", type=float, default=0.0)
    s.add_argument("--mu", type=float, default=1.0)
    s.add_argument("--model", default="iid:1/2")
    s.add_argument("--max-attempts", type=int, default=64)

    s = sub.add_parser("smooth-demo", parents=[common], help="slice-average identities on a random instance")
    s.add_argument("--ell", type=int, default=8)
    s.add_argument("--s", type=int, default=3)
    s.add_argument("--span", type=int, default=6, help="steps X_i drawn from [-span, span]")

    s = sub.add_parser("enumerate", parents=[common], help="exhaustive singularity counts")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--qn", action="store_true", help="central-slice rows instead of iid entries")
    return parser


def _config(args, overrides: dict) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    experiment = dict(cfg.experiment)
    experiment.update({k: v for k, v in overrides.items() if v is not None})
    seed = cfg.seed if args.seed is None else args.seed
    return Config(seed, cfg.constants, experiment)


def _single(name: str, cfg: Config, row: ex.EstimateRow, details: dict) -> ex.CampaignReport:
    return ex.CampaignReport(name, cfg.to_dict(), (row,), cfg.seed, details)


def run(args) -> ex.CampaignReport:
    cmd = args.command
    if cmd == "singularity":
        cfg = _config(args, {"n": args.n, "p": args.p, "trials": args.trials})
        return ex.run_singularity_campaign(cfg, args.workers, args.checkpoint, args.timing)
    if cmd == "qn":
        cfg = _config(args, {"n": args.n, "trials": args.trials})
        return ex.run_qn_campaign(cfg, args.workers, args.checkpoint, args.timing)
    if cmd == "structure":
        cfg = _config(args, {"n": args.n, "p": args.p, "samples": args.samples,
                             "delta": args.delta, "rho": args.rho, "gamma": args.gamma})
        return ex.run_structure_experiment(cfg, args.workers, args.timing)
    if cmd == "block-residual":
        cfg = _config(args, {"n": args.n, "p": args.p, "trials": args.trials})
        return ex.run_block_residual_experiment(cfg, args.workers, args.timing)

    if cmd == "levy":
        cfg = _config(args, {"x": args.x, "r": args.r, "model": args.model, "trials": args.trials})
        x = _floats(args.x)
        model = parse_model(args.model)
        p = getattr(model, "p", None)
        if args.trials:
            rng = RandomSource(derive_seed(cfg.seed, "levy"))
            est = levy_mc(x, args.r, model, args.trials, rng, cfg.constants.tolerances.ci_z)
            row = ex.EstimateRow("levy", len(x), p, args.trials, est.value, est.ci_halfwidth)
        else:
            est = levy_exact(build_atoms(x, model), args.r)
            row = ex.EstimateRow("levy", len(x), p, 0, float(est.value), 0.0, est.value)
        return _single("levy", cfg, row, {"method": est.method})
    if cmd == "threshold":
        cfg = _config(args, {"x": args.x, "L": args.L, "p": args.p, "gamma": args.gamma})
        x = _floats(args.x)
        T = threshold(x, args.L, parse_probability(args.p), parse_probability(args.gamma))
        row = ex.EstimateRow("threshold", len(x), parse_probability(args.p), 0, T, 0.0)
        return _single("threshold", cfg, row, {"T_sqrt_n": T * math.sqrt(len(x))})
    if cmd == "round":
        cfg = _config(args, {"y": args.y, "lam": args.lam, "mu": args.mu, "model": args.model})
        y = np.array(_floats(args.y))
        res = randomized_round(y, args.lam, parse_model(args.model), args.mu, cfg.constants,
                               RandomSource(derive_seed(cfg.seed, "round")), args.max_attempts)
        row = ex.EstimateRow("round", y.size, None, res.attempts,
                             float(abs(y.sum() - res.y_prime.sum())), None)
        return _single("round", cfg, row, {"y_prime": res.y_prime.tolist(), "checks": res.checks,
                                           "success": res.success, "failed": list(res.failed)})
    if cmd == "smooth-demo":
        cfg = _config(args, {"ell": args.ell, "s": args.s, "span": args.span})
        if not 0 <= args.s <= args.ell <= 16:
            raise ParameterError("need 0 <= s <= ell <= 16")
        rng = RandomSource(derive_seed(cfg.seed, "smooth-demo"))
        w = rng.words(args.ell + 5)
        X = [int(v % (2 * args.span + 1)) - args.span for v in w[:args.ell]]
        f = DiscreteDensity.from_weights(-2, [int(v % 7) + 1 for v in w[args.ell:]])
        table = eval_f_recursive(f, X, args.s, args.ell)
        agree = direct_table(f, X, args.s, args.ell) == table.table(args.s, args.ell)
        t_max = max(table.table(args.s, args.ell), key=table.table(args.s, args.ell).get)
        rec = build_step_record(f, X, args.s, args.ell, t_max, table)
        lhs, rhs = product_identity_check(rec)
        row = ex.EstimateRow("smooth-demo", args.ell, None, 1, float(rec.h_seq[-1]), None,
                             rec.h_seq[-1])
        return _single("smooth-demo", cfg, row, {
            "X": X, "recursion_matches_direct": agree, "t": t_max,
            "w": list(rec.w_seq), "t_seq": list(rec.t_seq),
            "h": [str(h) for h in rec.h_seq], "product": str(lhs), "inverse_binomial": str(rhs)})
    if cmd == "enumerate":
        cfg = _config(args, {"n": args.n, "qn": args.qn})
        if args.qn:
            s, tot = qn_singular_count(args.n)
            row = ex.EstimateRow("enumerate-qn", args.n, None, tot, s / tot, 0.0, Fraction(s, tot))
            return _single("enumerate-qn", cfg, row, {"singular": s, "total": tot})
        poly = singularity_polynomial(args.n, workers=args.workers)
        half = poly.evaluate(Fraction(1, 2))
        row = ex.EstimateRow("enumerate", args.n, Fraction(1, 2), 2 ** (args.n * args.n),
                             float(half), 0.0, half)
        return _single("enumerate", cfg, row, {"counts": [str(c) for c in poly.counts]})
    raise ParameterError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = run(args)
        text = ex.write_report(report, args.out, args.format)
        if args.out in (None, "-"):
            sys.stdout.write(text)
    except BudgetExceeded as err:
        print(f"rmtlab: refused: {err}", file=sys.stderr)
        return 2
    except (ParameterError, ValueError, OSError) as err:
        print(f"rmtlab: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
