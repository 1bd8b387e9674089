"""Command-line entry point: ``lrdsojourn <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 admissibility or regime
rejection, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import check_lrd_conditions, eval_cov, model_from_dict
from .errors import (DomainError, EmbeddingDefectError, InadmissibleThresholdError, NotPSDError,
                     ParameterError, RankError, RegimeError, SizeCapError, SojournError, ZeroDenominatorError)
from .fields import simulate_grid_exact, simulate_grid_fast, write_field_binary, write_field_csv
from .geomprob import (convex_distance_density, distance_cdf, sphere_chord_cdf, sphere_chord_density)
from .harness import (MIN_TEST_SAMPLES, ConfigError, ExperimentConfig, export_report, make_body, make_grid,
                      run_clt_experiment, run_reduction_check)
from .sojourn import ThresholdSpec, moving_threshold
from .sphere import SphereGrid, SphericalSpectrum, simulate_sphere_field, time_grid, write_sphere_binary
from .variance import sigma2_table, write_sigma2_csv

log = logging.getLogger("lrdsojourn")

EXIT_OK, EXIT_CONFIG, EXIT_REJECT, EXIT_NUMERIC = 0, 2, 3, 4


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _load_config(args) -> dict:
    if not args.config:
        return {}
    try:
        return json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None


def _model(args, conf):
    if getattr(args, "model", None):
        text = args.model
        p = Path(text)
        obj = json.loads(p.read_text()) if p.exists() else json.loads(text)
    elif "model" in conf:
        obj = conf["model"]
    else:
        raise ConfigError("no covariance model given (use --model or a config with 'model')")
    return model_from_dict(obj)


def _emit(rows: list, columns: list, args, name: str):
    """Write rows to <out>/<name>.<fmt> and echo them on stdout."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        path = out / f"{name}.json"
        path.write_text(json.dumps([dict(zip(columns, r)) for r in rows], indent=1))
    else:
        path = out / f"{name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            w.writerows(rows)
    print(path.read_text().rstrip())
    return path


# ---------------------------------------------------------------- subcommands

def cmd_density(args, conf):
    z = np.array(_floats(args.z))
    d = args.d
    if args.kind == "sphere":
        rows = [[v, float(sphere_chord_density(d, v)), float(sphere_chord_cdf(d, v))] for v in z]
    else:
        body = make_body(conf.get("body", args.body), d)
        rows = [[v, float(convex_distance_density(body, args.scale, v)), float(distance_cdf(body, args.scale, v))]
                for v in z]
    _emit(rows, ["z", "density", "cdf"], args, "density")


def cmd_cov(args, conf):
    model = _model(args, conf)
    z, tau = _floats(args.z), _floats(args.tau)
    if len(z) != len(tau):
        if len(z) == 1:
            z = z * len(tau)
        elif len(tau) == 1:
            tau = tau * len(z)
        else:
            raise ConfigError("--z and --tau need equal lengths or a single value")
    rows = [[a, b, float(eval_cov(model, a, b))] for a, b in zip(z, tau)]
    _emit(rows, ["z", "tau", "C"], args, "cov")
    if args.check_lrd:
        res = check_lrd_conditions(model, args.m, args.gamma, args.d)
        print(json.dumps({"verdict": res.verdict, "regime": res.regime, "delta1": res.delta1,
                          "delta2": res.delta2, "explanation": res.explanation}))
        if args.require_lrd and not res.accepted:
            raise RegimeError(f"model not accepted as long-range dependent: {res.explanation}")


def cmd_variance(args, conf):
    model = _model(args, conf)
    body = make_body(conf.get("body", args.body), args.d)
    T = _floats(args.T) if args.T else conf.get("T")
    if not T:
        raise ConfigError("no T grid given")
    rows = sigma2_table(T, args.m, body, args.gamma, model, args.delta1, args.delta2)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        path = out / "sigma2.json"
        path.write_text(json.dumps(rows, indent=1, default=float))
    else:
        path = out / "sigma2.csv"
        write_sigma2_csv(rows, path)
    print(path.read_text().rstrip())


def cmd_simulate(args, conf):
    cfg = ExperimentConfig.from_dict({**conf, **({"seed": args.seed} if args.seed is not None else {})})
    grid = make_grid(cfg, 0)
    model = cfg.model_obj
    sim = simulate_grid_exact if cfg.sampler == "exact" else simulate_grid_fast
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in range(args.reps):
        fld = sim(model, grid, cfg.seed, rep=r)
        path = out / f"field_{r}.bin"
        write_field_binary(fld, path)
        print(path)
        if args.format == "csv":
            try:
                write_field_csv(fld, out / f"field_{r}.csv")
            except SizeCapError as exc:
                log.warning("CSV export skipped: %s", exc)


def _run_report(args, conf, runner):
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    cfg = ExperimentConfig.from_dict({**conf, **over})
    if cfg.replicates < MIN_TEST_SAMPLES:
        raise ConfigError(f"test subcommands need replicates >= {MIN_TEST_SAMPLES}, got {cfg.replicates}")
    rep = runner(cfg, threads=args.threads)
    files = export_report(rep, args.out, plots=not args.no_plots)
    print((Path(args.out) / "summary.csv").read_text().rstrip())
    if rep.kind == "reduction":
        print(json.dumps(rep.trend))
    log.info("wrote %d files under %s", len(files), args.out)


def cmd_clt(args, conf):
    _run_report(args, conf, run_clt_experiment)


def cmd_reduce(args, conf):
    _run_report(args, conf, run_reduction_check)


def cmd_sphere(args, conf):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.action == "sojourn":
        conf = {**conf, "body": "sphere", "d": 3}
        return _run_report(args, conf, run_clt_experiment)
    model = _model(args, conf)
    g = conf.get("grid", {})
    T = float(args.T if args.T is not None else (conf.get("T") or [10.0])[0])
    nt = int(g.get("nt", args.nt))
    L = int(g.get("L_max", args.L_max))
    spec = SphericalSpectrum.from_model(model, L, np.arange(nt) * (T / nt), 3)
    if args.action == "spectrum":
        path = out / "spectrum.csv"
        spec.to_csv(path)
        print(path)
        print(json.dumps({"L_max": L, "tail_bound": spec.tail_bound(L)}))
        return
    grid = SphereGrid(int(g.get("n_lat", 64)), int(g.get("n_lon", 128)), g.get("kind", "latlon"))
    seed = args.seed if args.seed is not None else int(conf.get("seed", 0))
    for r in range(args.reps):
        fld = simulate_sphere_field(spec, time_grid(T, nt), L, seed, grid, rep=r)
        path = out / f"sphere_field_{r}.bin"
        write_sphere_binary(fld, path)
        print(path)


def cmd_check_threshold(args, conf):
    th = conf.get("threshold")
    if args.kind:
        th = {"kind": args.kind}
        if args.kind == "fixed":
            th["u"] = args.u
        else:
            th["c"] = args.c
        if args.kind == "logpow":
            th["eta"] = args.eta
    if th is None:
        raise ConfigError("no threshold given")
    spec = ThresholdSpec.from_dict(th)
    model = None
    if args.model or "model" in conf:
        model = _model(args, conf)
    T = args.T if args.T is not None else float((conf.get("T") or [100.0])[-1])
    d = int(conf.get("d", conf.get("domain", {}).get("d", args.d)))
    gamma = float(conf.get("gamma", conf.get("domain", {}).get("gamma", args.gamma)))
    res = moving_threshold(spec, T, model, gamma, d)
    print(json.dumps({"admissible": res.admissible, "u": res.u, "betas": res.betas, "detail": res.detail}))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for replicates")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lrdsojourn", parents=[common],
                                description="Sojourn functionals of long-range-dependent space-time Gaussian fields")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("density", parents=[common], help="inter-point distance densities")
    s.add_argument("--kind", choices=("body", "sphere"), default="body")
    s.add_argument("--body", default="unit-ball")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--z", default="0.5,1.0,1.5")
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("cov", parents=[common], help="evaluate a covariance model / LRD check")
    s.add_argument("--model", help="model JSON (inline or file)")
    s.add_argument("--z", default="0")
    s.add_argument("--tau", default="0")
    s.add_argument("--check-lrd", action="store_true")
    s.add_argument("--require-lrd", action="store_true", help="exit 3 unless accepted")
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--gamma", type=float, default=0.0)
    s.add_argument("--d", type=int, default=2)
    s.set_defaults(func=cmd_cov)

    s = sub.add_parser("variance", parents=[common], help="sigma_m^2 table over T")
    s.add_argument("--model")
    s.add_argument("--body", default="unit-ball")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--gamma", type=float, default=0.0)
    s.add_argument("--T", default=None)
    s.add_argument("--delta1", type=float, default=0.0)
    s.add_argument("--delta2", type=float, default=0.0)
    s.set_defaults(func=cmd_variance)

    s = sub.add_parser("simulate", parents=[common], help="simulate grid fields and export them")
    s.add_argument("--reps", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("clt", parents=[common], help="Monte Carlo CLT experiment")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_clt)

    s = sub.add_parser("reduce", parents=[common], help="reduction-gap check")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("sphere", parents=[common], help="sphere spectra, fields and sojourn runs")
    s.add_argument("action", choices=("spectrum", "simulate", "sojourn"))
    s.add_argument("--model")
    s.add_argument("--T", type=float, default=None)
    s.add_argument("--nt", type=int, default=16)
    s.add_argument("--L-max", dest="L_max", type=int, default=64)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_sphere)

    s = sub.add_parser("check-threshold", parents=[common], help="moving-threshold admissibility")
    s.add_argument("--kind", choices=("fixed", "loglog", "logpow"))
    s.add_argument("--u", type=float, default=1.0)
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--eta", type=float, default=0.5)
    s.add_argument("--T", type=float, default=None)
    s.add_argument("--model")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--gamma", type=float, default=0.0)
    s.set_defaults(func=cmd_check_threshold)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        conf = _load_config(args)
        args.func(args, conf)
    except (InadmissibleThresholdError, RegimeError, RankError) as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECT
    except (NotPSDError, EmbeddingDefectError, SizeCapError, ZeroDenominatorError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ParameterError, DomainError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SojournError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
