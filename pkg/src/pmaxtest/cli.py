"""Command line entry point.

Exit codes: 0 success, 2 invalid input (flags, data, design file), 3 a
collinear nuisance block or a test column collinear with it.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .bootstrap import BootMode, BootstrapSpec, bootstrap_pvalue, bootstrap_pvalue_multiplier
from .dataset import DatasetError, load_csv, schema_from_header
from .dgp import k_growth
from .harness import DEFAULT_ALPHAS, PRESETS, DesignError, McDesign, run_grid, write_outputs
from .maxtest import WeightMode, max_statistic
from .pols import CollinearNuisanceError, DegenerateModelError, build_gram, fit_all, fit_restricted

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DEGENERATE = 3


def _alphas(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None
    if not vals or any(not 0 < a < 1 for a in vals):
        raise argparse.ArgumentTypeError("alphas must lie in (0, 1)")
    return vals


def _columns(text: str) -> list[str]:
    return [c.strip() for c in text.split(",") if c.strip()]


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0, or the preset's)")
    p.add_argument("--replicates", type=int, default=None, help="bootstrap replicates R")
    p.add_argument("--alpha", type=_alphas, default=None, help="comma-separated levels (default .01,.05,.10)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--output", default=None, help="report file (test) or output directory (simulate)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmaxtest", description="Parsimonious max-tests of many zero restrictions."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run the bootstrapped max-test on a CSV file")
    t.add_argument("--data", required=True)
    t.add_argument("--response", required=True)
    t.add_argument("--nuisance", type=_columns, default=[])
    g = t.add_mutually_exclusive_group(required=True)
    g.add_argument("--test", type=_columns, dest="test_cols")
    g.add_argument("--test-all-remaining", action="store_true")
    t.add_argument("--weights", choices=["flat", "invse"], default="invse")
    t.add_argument("--mode", choices=["wild", "multiplier"], default="wild")
    _common(t)

    s = sub.add_parser("simulate", help="run a Monte Carlo grid")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--design", help="JSON design file")
    src.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}")
    s.add_argument("--mc-samples", type=int, default=None)
    s.add_argument("--full-scale", action="store_true", help="use 1000 samples and 1000 replicates")
    _common(s)

    d = sub.add_parser("diagnose", help="growth rules and heuristic bound checks")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--k-theta", type=int, default=None)
    d.add_argument("--p", type=float, default=4.0, help="moment order for the L_p case (default 4)")
    return parser


def cmd_test(args) -> int:
    try:
        schema = schema_from_header(
            args.data, args.response, args.nuisance,
            None if args.test_all_remaining else args.test_cols,
        )
        ds = load_csv(args.data, schema)
        spec = BootstrapSpec(args.replicates or 1000, args.seed or 0, args.mode)
    except (DatasetError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    try:
        g = build_gram(ds)
        fs = fit_all(ds, g)
        if len(fs.degenerate):
            raise DegenerateModelError(fs.degenerate, ds.test_names)
        stat = max_statistic(fs, WeightMode(args.weights), ds.n, ds.test_names)
    except (CollinearNuisanceError, DegenerateModelError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    if spec.mode is BootMode.WILD:
        out = bootstrap_pvalue(ds, g, fit_restricted(ds, g), fs, stat, spec, args.threads)
    else:
        out = bootstrap_pvalue_multiplier(ds, g, fs, stat, spec, args.threads)

    name = ds.test_names[stat.argmax]
    print(f"n           : {ds.n}  (k_delta={ds.k_delta}, k_theta={ds.k_theta})")
    print(f"statistic   : {stat.t_n:.4f}")
    print(f"argmax      : {name} (test column {stat.argmax + 1})")
    print(f"p_value     : {out.p_value:.4f}")
    print(f"replicates  : {spec.replicates}")
    print(f"weights     : {args.weights}")
    print(f"mode        : {spec.mode.value}")
    print(f"seed        : {spec.seed}")
    for a in args.alpha or DEFAULT_ALPHAS:
        print(f"reject@{a:g}  : {'yes' if out.p_value < a else 'no'}")
    print(f"elapsed_s   : {out.elapsed:.3f}")
    if args.output:
        report = {
            "statistic": stat.t_n,
            "p_value": out.p_value,
            "argmax": name,
            "argmax_index": stat.argmax,
            "weights": args.weights,
            "mode": spec.mode.value,
            "replicates": spec.replicates,
            "seed": spec.seed,
            "n": ds.n,
            "k_delta": ds.k_delta,
            "k_theta": ds.k_theta,
            "elapsed_s": out.elapsed,
        }
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _load_design(args) -> McDesign:
    if args.preset:
        if args.preset not in PRESETS:
            raise DesignError("preset", f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        cfg = json.loads(json.dumps(PRESETS[args.preset]))
    else:
        try:
            with open(args.design, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as e:
            raise DesignError("design", str(e)) from None
        except json.JSONDecodeError as e:
            raise DesignError("design", f"not valid JSON ({e})") from None
    if not isinstance(cfg, dict):
        raise DesignError("<root>", "design must be a JSON object")
    if args.full_scale:
        cfg["mc_samples"] = cfg["replicates"] = 1000
    if args.mc_samples is not None:
        cfg["mc_samples"] = args.mc_samples
    if args.replicates is not None:
        cfg["replicates"] = args.replicates
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.alpha is not None:
        cfg["alpha_list"] = args.alpha
    return McDesign.from_dict(cfg)


def cmd_simulate(args) -> int:
    try:
        design = _load_design(args)
    except DesignError as e:
        print(f"error: design key {e}", file=sys.stderr)
        return EXIT_INVALID

    def progress(rep, seconds):
        print(f"# {rep.cell.cell_id}: {seconds:.1f}s", file=sys.stderr)

    result = run_grid(design, threads=args.threads, progress=progress)
    print(result.text)
    if args.output:
        for p in write_outputs(result, args.output):
            print(f"wrote {p}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    n = args.n
    if n < 2:
        print("error: --n must be >= 2", file=sys.stderr)
        return EXIT_INVALID
    k1, k2 = k_growth(n, "k1"), k_growth(n, "k2")
    print(f"n  : {n}")
    print(f"k1 : {k1}    [exp(3.2 n^(1/7 - 1e-10))], bounded covariates")
    print(f"k2 : {k2}    [0.02 n^2], covariates with all moments")
    if args.k_theta is None:
        return EXIT_OK
    k, p = args.k_theta, args.p
    print(f"k_theta : {k}")
    print("bound regimes for the bootstrapped p-value (heuristic: rates are asymptotic,")
    print("finite-n checks below compare against the constant used by the k1 rule)")
    budget = 3.2 * n ** (1.0 / 7.0)
    ok = math.log(k) <= budget
    print(f"  cases (i)-(iii) ln(k) = o(n^(1/7)): ln(k) = {math.log(k):.3f}, "
          f"3.2 n^(1/7) = {budget:.3f} -> {'within' if ok else 'outside'}")
    cap = (n / math.log(n) ** 2) ** (p / 8.0)
    ok = k <= cap
    print(f"  case (iv)  k = o((n/ln(n)^2)^(p/8)), p = {p:g}: cap = {cap:.3f} "
          f"-> {'within' if ok else 'outside'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code not in (0, None) else EXIT_OK
    if getattr(args, "replicates", None) is not None and args.replicates < 1:
        print("error: --replicates must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    handler = {"test": cmd_test, "simulate": cmd_simulate, "diagnose": cmd_diagnose}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
