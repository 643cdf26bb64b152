"""Command-line front end: ``hhe {asymptotics,sweep,simulate,verify}``.

Exit codes: 0 success, 2 configuration error, 3 numerical instability,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager

import numpy as np

from .asymptotics import CSV_COLUMNS, summarize, sweep
from .contact_models import ContactModel, SwappedModel, load_model, model_from_dict
from .gontcharoff import MAX_HOUSEHOLD, Mode, NumericalInstability
from .simulator import PopulationSpec, run_batch, run_until_majors, write_runs_csv
from .stats import classify_and_estimate, parse_cutoff

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

MODEL_TYPES = ("constant", "poisson", "binomial", "mixed_poisson", "joint_table")


class ConfigError(ValueError):
    pass


# argument parsing helpers


def parse_int_list(text: str) -> list[int]:
    """``2``, ``2,3,5`` or an inclusive range ``2:6``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            bits = part.split(":")
            if len(bits) not in (2, 3):
                raise ConfigError(f"bad integer range {part!r}")
            lo, hi = int(bits[0]), int(bits[1])
            step = int(bits[2]) if len(bits) == 3 else 1
            if step < 1 or hi < lo:
                raise ConfigError(f"empty integer range {part!r}")
            out.extend(range(lo, hi + 1, step))
        elif part:
            out.append(int(part))
    if not out:
        raise ConfigError("empty integer list")
    return out


def parse_float_grid(text: str) -> list[float]:
    """``0.3``, ``0,0.5,1`` or ``start:step:stop`` (stop included)."""
    out: list[float] = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            bits = part.split(":")
            if len(bits) != 3:
                raise ConfigError(f"grid {part!r} must be start:step:stop")
            lo, step, hi = map(float, bits)
            if step <= 0 or hi < lo:
                raise ConfigError(f"empty grid {part!r}")
            k = int(round((hi - lo) / step))
            # integer stepping avoids accumulating 0.1-style drift
            out.extend(float(np.round(lo + i * step, 12)) for i in range(k + 1))
        elif part:
            out.append(float(part))
    if not out:
        raise ConfigError("empty grid")
    return out


def parse_mixing(text: str) -> dict:
    """``gamma:SHAPE,RATE``, ``exp:RATE`` or ``point:VALUE``."""
    kind, _, arg = text.partition(":")
    vals = [float(v) for v in arg.split(",") if v]
    if kind == "gamma" and len(vals) == 2:
        return {"gamma": {"shape": vals[0], "rate": vals[1]}}
    if kind in ("exp", "exponential") and len(vals) == 1:
        return {"exponential": {"rate": vals[0]}}
    if kind in ("point", "point_mass") and len(vals) == 1:
        return {"point": {"value": vals[0]}}
    raise ConfigError(f"bad mixing {text!r}; use gamma:SHAPE,RATE, exp:RATE or point:VALUE")


def model_from_args(args) -> ContactModel:
    if args.model_file:
        if args.model:
            raise ConfigError("give --model or --model-file, not both")
        model = load_model(args.model_file)
    else:
        if not args.model:
            raise ConfigError("a contact model is required (--model or --model-file)")
        d: dict = {"type": args.model}

        def need(*names):
            for n in names:
                v = getattr(args, n)
                if v is None:
                    raise ConfigError(f"--model {args.model} needs --{n.replace('_', '-')}")
                d[n] = v

        if args.model == "constant":
            need("g", "l")
        elif args.model == "poisson":
            need("lambda_g", "lambda_l")
        elif args.model == "binomial":
            need("n_g", "q_g", "n_l", "q_l")
        elif args.model == "mixed_poisson":
            need("beta_g", "beta_l")
            if args.mixing is None:
                raise ConfigError("--model mixed_poisson needs --mixing")
            d["mixing"] = parse_mixing(args.mixing)
        elif args.model == "joint_table":
            if args.pmf is None:
                raise ConfigError("--model joint_table needs --pmf 'g,l,p;g,l,p;...'")
            d["pmf"] = [[float(x) for x in atom.split(",")] for atom in args.pmf.split(";") if atom.strip()]
        model = model_from_dict(d)
    if args.swap_p is not None:
        if not 0.0 <= args.swap_p <= 1.0:
            raise ConfigError("--swap-p must lie in [0, 1]")
        model = SwappedModel(model, args.swap_p)
    return model


def _check_h(hs):
    for h in hs:
        if not 1 <= h <= MAX_HOUSEHOLD:
            raise ConfigError(f"household size must lie in [1, {MAX_HOUSEHOLD}], got {h}")


def _check_p(ps):
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {p}")


def _single(values, flag):
    if len(values) != 1:
        raise ConfigError(f"{flag} takes a single value for this command")
    return values[0]


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _dump_json(obj, fh):
    json.dump(obj, fh, indent=2)
    fh.write("\n")


# commands


def cmd_asymptotics(args) -> int:
    model = model_from_args(args)
    h = _single(parse_int_list(args.h), "--h")
    p = _single(parse_float_grid(args.p), "--p")
    _check_h([h])
    _check_p([p])
    s = summarize(model, h, p, args.m, args.local_mode)
    with _output(args.out) as fh:
        _dump_json(s.to_dict(), fh)
    return EXIT_NUMERIC if s.unstable or not s.converged else EXIT_OK


def cmd_sweep(args) -> int:
    model = model_from_args(args)
    hs = parse_int_list(args.h)
    ps = parse_float_grid(args.p)
    _check_h(hs)
    _check_p(ps)
    rows, report = sweep(model, hs, ps, args.m, args.local_mode)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(["" if getattr(r, c) is None else repr(getattr(r, c)) for c in CSV_COLUMNS])
    with _output(args.report) if args.report else _report_stream(args.out) as fh:
        _dump_json(report, fh)
    return EXIT_OK


@contextmanager
def _report_stream(csv_path):
    # keep stdout parseable: the report goes to stderr when the CSV is on stdout
    yield sys.stdout if csv_path not in (None, "-") else sys.stderr


def cmd_simulate(args) -> int:
    model = model_from_args(args)
    h = _single(parse_int_list(args.h), "--h")
    p = _single(parse_float_grid(args.p), "--p")
    _check_p([p])
    if h < 1:
        raise ConfigError("--h must be at least 1")
    if args.households is None or args.households < 1:
        raise ConfigError("--households must be a positive integer")
    cutoff = parse_cutoff(args.cutoff)
    spec = PopulationSpec(
        n=args.households, h=h, model=model, m=args.m, p=p,
        local_mode=args.local_mode, global_mode=args.global_mode, seed=args.seed,
    )
    if args.until_majors:
        batch = run_until_majors(spec, args.until_majors, cutoff, threads=args.threads)
    else:
        if args.runs < 1:
            raise ConfigError("--runs must be at least 1")
        batch = run_batch(spec, args.runs, threads=args.threads)
    asym = None
    if args.ks:
        if h > MAX_HOUSEHOLD:
            raise ConfigError(f"--ks needs h <= {MAX_HOUSEHOLD}")
        s = summarize(model, h, p, args.m, args.local_mode)
        if s.sigma2 is None:
            raise ConfigError("--ks needs a supercritical model (R_* > 1)")
        asym = (s.z, s.sigma2)
    summary = classify_and_estimate(batch, spec.N, cutoff, h=h, asymptotic=asym)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_runs_csv(batch, fh)
    with _output(args.summary) as fh:
        _dump_json(summary.to_dict(), fh)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    only = [b for part in (args.only or []) for b in part.split(",") if b]
    try:
        checks = run_checks(only, full=args.full, tol_scale=args.tol_scale)
    except KeyError as e:
        raise ConfigError(e.args[0]) from None
    for c in checks:
        print(c.line(), file=sys.stderr)
    ok = all(c.passed for c in checks)
    report = {
        "passed": ok,
        "n_checks": len(checks),
        "n_failed": sum(not c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
    }
    with _output(args.out) as fh:
        json.dump(report, fh, indent=2, default=str)
        fh.write("\n")
    return EXIT_OK if ok else EXIT_VERIFY


# parser


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("contact model")
    g.add_argument("--model", choices=MODEL_TYPES, help="catalog model kind")
    g.add_argument("--model-file", help="JSON model spec (alternative to --model)")
    g.add_argument("--g", type=int, help="constant: global contacts")
    g.add_argument("--l", type=int, help="constant: local contacts")
    g.add_argument("--lambda-g", type=float, help="poisson: global rate")
    g.add_argument("--lambda-l", type=float, help="poisson: local rate")
    g.add_argument("--n-g", type=int, help="binomial: global trials")
    g.add_argument("--q-g", type=float, help="binomial: global success probability")
    g.add_argument("--n-l", type=int, help="binomial: local trials")
    g.add_argument("--q-l", type=float, help="binomial: local success probability")
    g.add_argument("--beta-g", type=float, help="mixed_poisson: global scale")
    g.add_argument("--beta-l", type=float, help="mixed_poisson: local scale")
    g.add_argument("--mixing", help="mixed_poisson: gamma:SHAPE,RATE | exp:RATE | point:VALUE")
    g.add_argument("--pmf", help="joint_table: 'g,l,p;g,l,p;...'")
    g.add_argument("--swap-p", type=float, help="wrap the model in a local-to-global swap")


def _add_regime_flags(p, h_default="2", p_default="0"):
    p.add_argument("--h", default=h_default, help="household size: N, list a,b,c or range lo:hi")
    p.add_argument("--p", default=p_default, help="swap probability: value, list or start:step:stop")
    p.add_argument("--m", type=int, default=1, help="initial infectives (default 1)")
    p.add_argument("--local-mode", type=Mode.parse, default=Mode.WITH, metavar="{with,without}",
                   help="local contacts with or without replacement")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hhe", description="Household epidemic asymptotics, sweeps, simulation and self-checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("asymptotics", help="large-population summary for one (h, p)")
    _add_model_flags(a)
    _add_regime_flags(a)
    a.add_argument("--out", help="write JSON here instead of stdout")
    a.set_defaults(func=cmd_asymptotics)

    s = sub.add_parser("sweep", help="summary over an (h, p) grid, CSV plus monotonicity report")
    _add_model_flags(s)
    _add_regime_flags(s, h_default="2:6", p_default="0:0.1:1")
    s.add_argument("--out", help="CSV path (default stdout; the report then goes to stderr)")
    s.add_argument("--report", help="JSON path for the monotonicity report")
    s.add_argument("--threads", type=int, help="accepted for symmetry; sweeps run serially")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="Monte Carlo batch with summary statistics")
    _add_model_flags(m)
    _add_regime_flags(m)
    m.add_argument("--households", type=int, help="number of households n (N = n h)")
    m.add_argument("--runs", type=int, default=10_000, help="number of runs (default 10000)")
    m.add_argument("--until-majors", type=int, metavar="K",
                   help="instead of --runs, simulate until K major outbreaks are seen")
    m.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
    m.add_argument("--cutoff", default="frac:0.2", help="frac:Z or households:log (default frac:0.2)")
    m.add_argument("--global-mode", type=Mode.parse, default=Mode.WITH, metavar="{with,without}",
                   help="global contacts with or without replacement")
    m.add_argument("--ks", action="store_true", help="add the KS distance to N(z, sigma^2/N)")
    m.add_argument("--out", help="per-run CSV path")
    m.add_argument("--summary", help="summary JSON path (default stdout)")
    m.add_argument("--threads", type=int, help="worker threads (default HHE_THREADS or all cores)")
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", action="append", metavar="BLOCK",
                   help="run only these blocks (repeatable or comma separated)")
    v.add_argument("--full", action="store_true", help="include the long N=10000 simulation cells")
    v.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance (diagnostics)")
    v.add_argument("--out", help="JSON report path (default stdout)")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalInstability as e:
        print(f"hhe: numerical instability: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as e:
        print(f"hhe: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
