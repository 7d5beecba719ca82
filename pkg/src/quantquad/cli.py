"""Command-line interface: quantize, quad, adversary, rates, widths, info.

All randomness flows from one --seed flag; sub-streams are derived
deterministically.  Outputs are plain CSV or JSON, written atomically,
and echo the fully resolved configuration including seeds.  Exit codes:
0 ok, 1 usage or configuration error, 2 numeric failure, 3 a pass/fail
check failed.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .adversary import (
    bakhvalov_lower_bound,
    event_probability,
    fooling_family,
    gap_identity_check,
    lipschitz_check,
)
from .config import (
    load_experiment_config,
    parse_functional,
    parse_measure,
    parse_norm,
    parse_seed,
)
from .errors import ConfigurationError, NumericError
from .experiments import kl_tail_width, run_rate_experiment, width_estimate
from .measures import (
    BrownianKL,
    Diffusion,
    is_path_measure,
    measure_tag,
    reference_value,
)
from .paths import Grid, make_kl_subspace
from .quadrature import (
    SmallBallProfile,
    classical_mc,
    euler_mc,
    euler_mc_schedule,
    gaussian_subspace_mc,
    subspace_mc_schedule,
    voronoi_quadrature,
    vr_mc,
)
from .quantize import LloydOptions, lloyd, voronoi_weights
from .storage import (
    atomic_write,
    load_codebook,
    save_codebook,
    write_plot_data_csv,
    write_rate_report_csv,
    write_result_json,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_CHECK_FAILED = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the documented code is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_(EXIT_USAGE, f"{self.prog}: error: {message}")


class SystemExit_(Exception):
    def __init__(self, code, message=""):
        super().__init__(message)
        self.code = code


def _build_parser() -> _Parser:
    parser = _Parser(prog="quantquad", description=__doc__)
    parser.add_argument("--version", action="store_true", help="print version and exit")
    sub = parser.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", default="0", help="master seed (integer)")
    common.add_argument(
        "--workers",
        type=int,
        default=1,
        help="worker hint; results are identical for any value",
    )

    p = sub.add_parser("quantize", parents=[common], help="build a codebook")
    p.add_argument("--measure", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, default=2, choices=(1, 2))
    p.add_argument("--norm", default=None)
    p.add_argument("--pool", type=int, default=None, help="Lloyd pool size")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument(
        "--weight-samples",
        type=int,
        default=200_000,
        help="samples for the Voronoi weight estimate",
    )
    p.add_argument("--out", required=True)

    p = sub.add_parser("quad", parents=[common], help="run a quadrature algorithm")
    p.add_argument(
        "--algo", required=True, choices=("voronoi", "mc", "vrmc", "euler", "gauss-sub")
    )
    p.add_argument("--measure", default=None)
    p.add_argument("--functional", required=True)
    p.add_argument("--codebook", default=None, help="codebook file (voronoi/vrmc)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--budget", type=int, default=None, help="cost budget N")
    p.add_argument("--alpha", type=float, default=2.0, help="small-ball exponent")
    p.add_argument("--beta", type=float, default=0.0, help="small-ball log exponent")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("adversary", parents=[common], help="lower-bound checks")
    p.add_argument(
        "--check",
        required=True,
        choices=("gap-identity", "lipschitz", "events", "bakhvalov"),
    )
    p.add_argument("--measure", default=None)
    p.add_argument("--codebook", default=None)
    p.add_argument("--functional", default=None)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--pairs", type=int, default=10_000)
    p.add_argument("--segments", type=int, default=2)
    p.add_argument("--window", type=float, default=1.0)
    p.add_argument("--n", type=int, default=1, help="evaluation count for bakhvalov")
    p.add_argument("--lip-claim", type=float, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("rates", parents=[common], help="run a rate experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("widths", parents=[common], help="subspace width ladder")
    p.add_argument("--measure", required=True)
    p.add_argument("--dims", required=True, help="comma-separated subspace dims")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--norm", default="l2")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--out", required=True)

    p = sub.add_parser("info", parents=[common], help="version and environment")
    p.add_argument("--version", action="store_true")

    return parser


def _echo(args, **extra) -> dict:
    skip = {"command"}
    config = {
        key: value
        for key, value in vars(args).items()
        if key not in skip and value is not None
    }
    config.update(extra)
    config["version"] = __version__
    return config


def _cmd_quantize(args) -> int:
    measure = parse_measure(args.measure)
    seed = parse_seed(args.seed)
    norm = parse_norm(args.norm) if args.norm else None
    opts = LloydOptions(iters=args.iters, restarts=args.restarts, pool_size=args.pool)
    codebook = lloyd(measure, args.n, args.r, opts, seed, norm)
    voronoi_weights(codebook, measure, args.weight_samples, seed.child(999))
    extra = {"seed": seed.tag()}
    for key, value in sorted(_echo(args).items()):
        if key not in ("out", "seed"):
            extra[f"cfg_{key}"] = str(value).replace(",", ";").replace(" ", "_")
    save_codebook(codebook, args.out, extra)
    print(f"wrote codebook n={codebook.n} to {args.out}")
    return EXIT_OK


def _cmd_quad(args) -> int:
    seed = parse_seed(args.seed)
    measure = parse_measure(args.measure) if args.measure else None
    grid = Grid.uniform(args.grid) if args.grid else None
    codebook = load_codebook(args.codebook) if args.codebook else None
    functional_measure = measure
    if functional_measure is None and codebook is not None and codebook.grid is not None:
        functional_measure = BrownianKL(200, codebook.grid)
    f = parse_functional(args.functional, functional_measure)

    echo_extra = {}
    if args.algo == "voronoi":
        if codebook is None:
            raise ConfigurationError("voronoi needs --codebook")
        result = voronoi_quadrature(codebook, f)
    elif args.algo == "mc":
        if measure is None or args.n is None:
            raise ConfigurationError("mc needs --measure and --n")
        result = classical_mc(measure, f, args.n, seed)
    elif args.algo == "vrmc":
        if codebook is None or measure is None or args.n is None:
            raise ConfigurationError("vrmc needs --codebook, --measure and --n")
        result = vr_mc(codebook, measure, f, args.n, seed)
    elif args.algo == "euler":
        if not isinstance(measure, Diffusion):
            raise ConfigurationError("euler needs a kind=diffusion measure")
        n, k = args.n, args.k
        if args.budget is not None:
            n, k = euler_mc_schedule(args.budget)
            echo_extra["scheduled_n"] = n
            echo_extra["scheduled_k"] = k
        if n is None or k is None:
            k = k if k is not None else measure.k_steps
            if n is None:
                raise ConfigurationError("euler needs --n (or --budget)")
        result = euler_mc(measure.spec, f, k, n, seed, grid or measure.grid)
    else:  # gauss-sub
        profile = SmallBallProfile(args.alpha, args.beta)
        n, k = args.n, args.k
        if args.budget is not None:
            n, k = subspace_mc_schedule(args.budget, profile)
            echo_extra["scheduled_n"] = n
            echo_extra["scheduled_k"] = k
        if n is None or k is None:
            raise ConfigurationError("gauss-sub needs --n and --k (or --budget)")
        if grid is None and isinstance(measure, BrownianKL):
            grid = measure.grid
        if grid is None:
            # a k-term subspace needs more than k grid points; double up
            size = 257
            while size <= 2 * k:
                size = 2 * (size - 1) + 1
            grid = Grid.uniform(size)
            echo_extra["grid"] = size
        sub = make_kl_subspace(k, grid)
        result = gaussian_subspace_mc(sub, f, n, seed)

    payload = {
        "estimate": result.estimate,
        "stderr": result.stderr,
        "n": result.cardinality,
        "k": result.subspace_dim,
        "oracle_cost": result.cost.oracle_cost,
        "rng_calls": result.cost.rng_calls,
        "arithmetic_proxy": result.cost.arithmetic_proxy,
        "seed": seed.tag(),
        "config": _echo(args, **echo_extra),
    }
    write_result_json(args.out, payload)
    print(
        f"{args.algo}: estimate={result.estimate!r} stderr={result.stderr!r} "
        f"n={result.cardinality} k={result.subspace_dim} "
        f"oracle_cost={result.cost.oracle_cost}"
    )
    return EXIT_OK


def _rows_out(rows, out):
    text = "\n".join(rows) + "\n"
    if out:
        atomic_write(out, text)
    sys.stdout.write(text)


def _cmd_adversary(args) -> int:
    seed = parse_seed(args.seed)
    rows = []
    ok = True
    if args.check == "gap-identity":
        if not (args.codebook and args.measure):
            raise ConfigurationError("gap-identity needs --codebook and --measure")
        codebook = load_codebook(args.codebook)
        measure = parse_measure(args.measure)
        report = gap_identity_check(codebook, measure, args.samples, seed)
        ok = report.passed
        rows.append(
            "check=gap-identity "
            f"passed={str(ok).lower()} difference={report.difference!r} "
            f"combined_stderr={report.combined_stderr!r} "
            f"mean_f_last={report.mean_f_last!r} half_gap={report.half_gap!r}"
        )
    elif args.check == "lipschitz":
        if not (args.functional and args.measure):
            raise ConfigurationError("lipschitz needs --functional and --measure")
        measure = parse_measure(args.measure)
        f = parse_functional(args.functional, measure)
        if args.lip_claim is not None:
            f.lip_claim = args.lip_claim
        report = lipschitz_check(f, measure, args.pairs, seed)
        ok = not report.flagged
        rows.append(
            "check=lipschitz "
            f"passed={str(ok).lower()} max_ratio={report.max_ratio!r} "
            f"claim={report.lip_claim!r} pairs={report.pairs}"
        )
    elif args.check == "events":
        report = event_probability(args.segments, args.window, args.samples, seed)
        ok = report.passed
        rows.append(
            "check=events "
            f"passed={str(ok).lower()} estimate={report.estimate!r} "
            f"analytic={report.analytic!r} stderr={report.stderr!r} "
            f"upper_bound={report.upper_bound!r}"
        )
    else:  # bakhvalov
        if not (args.codebook and args.measure):
            raise ConfigurationError("bakhvalov needs --codebook and --measure")
        codebook = load_codebook(args.codebook)
        measure = parse_measure(args.measure)
        family = fooling_family(codebook)
        means = []
        for i, member in enumerate(family.functionals):
            est = reference_value(member, measure, args.samples, seed.child(i))
            means.append((est.value, est.stderr))
        bound = bakhvalov_lower_bound(args.n, means)
        ok = True
        rows.append(
            "check=bakhvalov "
            f"passed=true lower_bound={bound!r} n={args.n} family={len(means)}"
        )
    rows.append(f"seed={seed.tag()}")
    _rows_out(rows, args.out)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _cmd_rates(args) -> int:
    seed = parse_seed(args.seed) if args.seed != "0" else None
    config = load_experiment_config(args.config, seed)
    report = run_rate_experiment(config)
    os.makedirs(args.out_dir, exist_ok=True)
    echo = {
        "name": report.name,
        "algorithm": report.algorithm,
        "seed": report.seed_tag,
        "reference_value": report.reference[0],
        "reference_stderr": report.reference[1],
        "config_file": args.config,
        "version": __version__,
    }
    base = os.path.join(args.out_dir, report.name)
    write_rate_report_csv(base + ".csv", report, echo)
    write_plot_data_csv(base + ".plot.csv", report)
    print(
        f"{report.name}: slope={report.fit.slope:.4f} "
        f"r2={report.fit.r_squared:.4f} passed={str(report.passed).lower()}"
    )
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_widths(args) -> int:
    seed = parse_seed(args.seed)
    measure = parse_measure(args.measure)
    if not is_path_measure(measure):
        raise ConfigurationError("widths needs a path measure")
    norm = parse_norm(args.norm)
    dims = [int(tok) for tok in args.dims.split(",")]
    lines = [
        f"# measure={measure_tag(measure)} p={args.p!r} norm={norm.value} "
        f"samples={args.samples} seed={seed.tag()}",
        "k,width,stderr,analytic_l2_tail",
    ]
    for i, k in enumerate(dims):
        sub = make_kl_subspace(k, measure.grid)
        point = width_estimate(measure, sub, args.p, args.samples, seed.child(i), norm)
        lines.append(
            f"{k},{point.error!r},{point.stderr!r},{kl_tail_width(k)!r}"
        )
    atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(dims)} width rows to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            if getattr(args, "version", False):
                print(f"quantquad {__version__}")
                return EXIT_OK
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if args.command == "info":
            print(f"quantquad {__version__}")
            return EXIT_OK
        if getattr(args, "workers", 1) < 1:
            raise ConfigurationError("--workers must be >= 1")
        handler = {
            "quantize": _cmd_quantize,
            "quad": _cmd_quad,
            "adversary": _cmd_adversary,
            "rates": _cmd_rates,
            "widths": _cmd_widths,
        }[args.command]
        return handler(args)
    except SystemExit_ as exc:
        if str(exc):
            print(str(exc), file=sys.stderr)
        return exc.code
    except ConfigurationError as exc:
        print(f"quantquad: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"quantquad: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"quantquad: i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def console_entry():
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
