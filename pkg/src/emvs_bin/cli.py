"""Command-line entry point: simulate, fit, predict, study, ssvs.

Exit codes: 0 success, 2 usage or invalid input, 3 I/O failure,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import DesignSpec, ResponseSpec, generate_binary_response, generate_design, generate_replicate_betas
from .harness import (
    Nu0Grid,
    StudyConfig,
    _fmt,
    arange_grid,
    default_hyper,
    run_path,
    run_study,
    selection_metrics,
    write_rows,
)
from .logistic import LogisticEmConfig, PenaltyMode, fit_logistic, predict_logistic
from .probit import BetaSolver, ProbitEmConfig, SingularSystem, fit_probit, predict_probit
from .sdca import SolverConfig
from .ssvs import SsvsConfig, run_ssvs_probit
from .types import (
    Coding,
    EmvsError,
    SpikeSlabHyper,
    apply_standardization,
    column_stats,
    make_dataset,
    standardize,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class IOFailure(Exception):
    pass


class NumericalFailure(Exception):
    pass


# ---------------------------------------------------------------- file helpers

def read_table(path):
    """Header row plus a float matrix from a comma-separated file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise UsageError(f"{path} is empty; a header row is required")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise UsageError(f"{path}: non-numeric entry ({exc})") from exc
    if data.size == 0:
        data = data.reshape(0, len(header))
    if data.shape[1] != len(header):
        raise UsageError(f"{path}: rows have {data.shape[1]} fields, header has {len(header)}")
    return header, data


def write_table(path, columns, rows):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        write_rows(path, [dict(zip(columns, r)) for r in rows], columns)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_json(path, obj):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


def _floats(values):
    # 17 significant digits round-trip through JSON as exact decimals
    return [float(_fmt(float(v))) for v in values]


def load_xy(args, require_labels=True):
    """Design matrix and labels from --data with --label-col or --labels."""
    header, data = read_table(args.data)
    if args.labels:
        lh, ld = read_table(args.labels)
        if ld.shape[1] != 1:
            raise UsageError(f"{args.labels} must hold a single label column, found {ld.shape[1]}")
        if ld.shape[0] != data.shape[0]:
            raise UsageError(f"{args.labels} has {ld.shape[0]} rows, {args.data} has {data.shape[0]}")
        return header, data, ld[:, 0]
    if args.label_col in header:
        j = header.index(args.label_col)
        return header[:j] + header[j + 1:], np.delete(data, j, axis=1), data[:, j]
    if require_labels:
        raise UsageError(
            f"label column {args.label_col!r} not found in {args.data}; expected a header column "
            f"named {args.label_col!r} (set --label-col) or a separate --labels file"
        )
    return header, data, None


def parse_float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_grid(text, model):
    """'default', 'start:step:stop' or a comma list."""
    if text == "default":
        return Nu0Grid.logistic_default() if model == "logistic" else Nu0Grid.probit_default()
    try:
        if ":" in text:
            start, step, stop = (float(v) for v in text.split(":"))
            if step <= 0:
                raise UsageError("grid step must be positive")
            return Nu0Grid(arange_grid(start, stop, step))
        return Nu0Grid(parse_float_list(text))
    except EmvsError as exc:
        raise UsageError(f"invalid --nu0-grid: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"invalid --nu0-grid {text!r}") from exc


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    if not 0.0 <= args.rho < 1.0:
        raise UsageError(f"--rho must lie in [0, 1), got {args.rho}")
    spec = DesignSpec(args.n, args.p, args.p_gamma, args.rho, seed=args.seed)
    try:
        spec.validate()
    except EmvsError as exc:
        raise UsageError(str(exc)) from exc
    if args.beta is not None:
        head = parse_float_list(args.beta)
        if len(head) > args.p:
            raise UsageError(f"--beta has {len(head)} entries but p={args.p}")
        beta = np.zeros(args.p)
        beta[: len(head)] = head
    else:
        if args.beta_max is None or args.beta_max < 0:
            raise UsageError("give --beta or a non-negative --beta-max")
        beta = generate_replicate_betas(args.p, args.p_gamma, args.beta_max, args.seed + 1)
    x = standardize(generate_design(spec))
    coding = Coding(args.coding)
    d = generate_binary_response(x, ResponseSpec(beta, args.sigma_eps2, coding), args.seed + 2)
    out = Path(args.out_dir)
    cols = [f"x{j + 1}" for j in range(args.p)]
    write_table(out / f"{args.prefix}design.csv", cols, d.x.tolist())
    write_table(out / f"{args.prefix}truth.csv", ["j", "beta"], [[j + 1, float(b)] for j, b in enumerate(beta)])
    write_table(out / f"{args.prefix}labels.csv", [args.label_col], [[int(v)] for v in d.y])
    print(f"seed={args.seed} n={args.n} p={args.p} nonzero={int(np.sum(beta != 0))} "
          f"positives={int(np.sum(d.y == 1))} out={out}")
    return EXIT_OK


def _hyper(args, model, p):
    base = default_hyper(model, p)
    nu1 = args.nu1 if args.nu1 is not None else base.nu1
    b = args.b if args.b is not None else base.b
    nu0 = args.nu0 if args.nu0 is not None else (1.5 if model == "logistic" else 0.005)
    try:
        return SpikeSlabHyper(nu0=nu0, nu1=nu1, a=args.a, b=b, nu=args.nu, lam=args.lam)
    except EmvsError as exc:
        raise UsageError(str(exc)) from exc


def _em_config(args, model, hyper):
    sdca = SolverConfig(max_picks=args.sdca_picks, seed=args.seed)
    if args.init_penalty is not None and not args.init_penalty > 0:
        raise UsageError("--init-penalty must be positive")
    common = dict(hyper=hyper, max_em_iterations=args.max_iter, sdca=sdca, theta_init=args.theta0,
                  convergence_tol=args.tol, init_penalty=args.init_penalty)
    if model == "logistic":
        return LogisticEmConfig(sigma_init=args.sigma0, penalty_mode=PenaltyMode(args.penalty_mode), **common)
    return ProbitEmConfig(beta_solver=BetaSolver(args.beta_solver), **common)


def _finite_or_fail(fit):
    if fit is None or not np.all(np.isfinite(fit.beta)):
        raise NumericalFailure("solver produced non-finite coefficients")


def cmd_fit(args):
    header, x_raw, y = load_xy(args)
    model = args.model
    if args.standardize:
        mean, sd = column_stats(x_raw)
        x = apply_standardization(x_raw, mean, sd)
    else:
        mean, sd = np.zeros(x_raw.shape[1]), np.ones(x_raw.shape[1])
        x = x_raw
    d = make_dataset(x, y)
    p = x.shape[1]
    hyper = _hyper(args, model, p)
    cfg = _em_config(args, model, hyper)
    fitter = fit_logistic if model == "logistic" else fit_probit
    with np.errstate(over="ignore", under="ignore"):
        fit = fitter(d, cfg)
    _finite_or_fail(fit)
    result = {
        "schema_version": SCHEMA_VERSION,
        "model": model,
        "hyper": {"nu0": hyper.nu0, "nu1": hyper.nu1, "a": hyper.a, "b": hyper.b, "nu": hyper.nu, "lam": hyper.lam},
        "nu0": hyper.nu0,
        "beta": _floats(fit.beta),
        "p_star": _floats(fit.p_star),
        "selected": [int(j) + 1 for j in np.flatnonzero(fit.selected)],
        "iterations": int(fit.state.iteration),
        "converged": bool(fit.converged),
        "objective_first": float(fit.objective_trace[0]),
        "objective_last": float(fit.objective_trace[-1]),
        "sigma": float(fit.state.sigma),
        "theta": float(fit.state.theta),
        "wall_time_s": fit.wall_time,
        "seed": args.seed,
        "columns": header,
        "train_stats": {"mean": _floats(mean), "sd": _floats(sd)},
        "coding": d.coding.value,
    }
    write_json(args.out, result)
    print(f"model={model} nu0={hyper.nu0:g} selected={result['selected']} iterations={result['iterations']} "
          f"converged={result['converged']} wall_time_s={fit.wall_time:.3f}")
    if args.nu0_grid:
        grid = parse_grid(args.nu0_grid, model)
        try:
            grid.check_against(hyper.nu1)
        except EmvsError as exc:
            raise UsageError(str(exc)) from exc
        with np.errstate(over="ignore", under="ignore"):
            path = run_path(d, grid, cfg)
        rows = []
        for nu0, f, err in zip(path.nu0, path.fits, path.errors):
            if f is None:
                rows.append([float(nu0), None, None, None, None, err])
                continue
            sel = " ".join(str(j + 1) for j in np.flatnonzero(f.selected))
            rows.append([float(nu0), int(f.converged), int(f.state.iteration), int(f.selected.sum()), sel, ""])
        path_out = args.path_out or str(Path(args.out).with_suffix("")) + "_path.csv"
        write_table(path_out, ["nu0", "converged", "iterations", "n_selected", "selected", "error"], rows)
        coef_out = str(Path(path_out).with_suffix("")) + "_coef.csv"
        coef_rows = [[float(nu0), j + 1, float(f.beta[j]), float(f.p_star[j])]
                     for nu0, f in zip(path.nu0, path.fits) if f is not None for j in range(p)]
        write_table(coef_out, ["nu0", "j", "beta", "p_star"], coef_rows)
        print(f"path: {len(grid)} grid points in {path.wall_time:.3f}s -> {path_out}")
    return EXIT_OK


def _load_stats(path, p):
    obj = read_json(path)
    stats = obj.get("train_stats", obj)
    try:
        mean, sd = np.asarray(stats["mean"], float), np.asarray(stats["sd"], float)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path} has no 'mean'/'sd' standardization stats") from exc
    if mean.shape != (p,) or sd.shape != (p,):
        raise UsageError(f"{path}: stats have {mean.shape[0]} columns, fit has {p}")
    return mean, sd


def cmd_predict(args):
    fit = read_json(args.fit)
    try:
        beta = np.asarray(fit["beta"], dtype=float)
        model = fit["model"]
    except KeyError as exc:
        raise UsageError(f"{args.fit} is missing field {exc}") from exc
    p = beta.shape[0]
    header, x_raw, y = load_xy(args, require_labels=False)
    if x_raw.shape[1] != p:
        raise UsageError(f"{args.data} has {x_raw.shape[1]} predictor columns, the fit expects {p}")
    if args.standardize_with:
        mean, sd = _load_stats(args.standardize_with, p)
    else:
        mean, sd = _load_stats(args.fit, p)
    x = apply_standardization(x_raw, mean, sd)
    prob = predict_logistic(beta, x) if model == "logistic" else predict_probit(beta, x)
    positive = prob >= args.cutoff
    neg_label = -1 if model == "logistic" else 0
    cls = np.where(positive, 1, neg_label)
    write_table(args.out, ["row", "probability", "class"],
                [[i + 1, float(pr), int(c)] for i, (pr, c) in enumerate(zip(prob, cls))])
    if y is not None:
        truth = y == 1
        m = selection_metrics(positive, truth)
        acc = (m.tp + m.tn) / len(truth) if len(truth) else float("nan")
        print(f"tp={m.tp} fp={m.fp} tn={m.tn} fn={m.fn} correct={m.tp + m.tn}/{len(truth)} accuracy={acc:.4f}")
    else:
        print(f"wrote {len(prob)} predictions to {args.out}")
    return EXIT_OK


def cmd_study(args):
    if not (args.beta_max >= 0 and math.isfinite(args.beta_max)):
        raise UsageError(f"--beta-max must be finite and >= 0, got {args.beta_max}")
    if not 0.0 <= args.rho < 1.0:
        raise UsageError(f"--rho must lie in [0, 1), got {args.rho}")
    kw = {}
    if args.logistic_grid:
        kw["logistic_grid"] = tuple(parse_grid(args.logistic_grid, "logistic").values)
    if args.probit_grid:
        kw["probit_grid"] = tuple(parse_grid(args.probit_grid, "probit").values)
    try:
        cfg = StudyConfig(n=args.n, p=args.p, p_gamma=args.p_gamma, rho=args.rho, sigma_eps2=args.sigma_eps2,
                          beta_max=args.beta_max, replicates=args.replicates, model=args.model,
                          base_seed=args.seed, workers=args.workers, max_em_iterations=args.max_iter,
                          logistic_picks=args.logistic_picks, probit_picks=args.probit_picks,
                          probit_solver=args.probit_solver, init_penalty=args.init_penalty, **kw)
    except EmvsError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise IOFailure(f"output directory {out} is not writable: {exc.strerror or exc}") from exc

    def progress(done, total):
        if not args.quiet:
            print(f"\rcells {done}/{total}", end="", file=sys.stderr, flush=True)

    with np.errstate(over="ignore", under="ignore"):
        res = run_study(cfg, out_dir=out, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    print(f"rows={len(res.rows)} skipped_cells={res.skipped_cells} failures={len(res.failures)} "
          f"out={out / 'study.csv'}")
    return EXIT_OK


def cmd_ssvs(args):
    header, x_raw, y = load_xy(args)
    x = apply_standardization(x_raw, *column_stats(x_raw)) if args.standardize else x_raw
    d = make_dataset(x, y)
    if args.sweeps < 0:
        raise UsageError("--sweeps must be >= 0")
    burn = min(args.burn_in, max(args.sweeps - 1, 0))
    try:
        cfg = SsvsConfig(nu1=args.nu1, nu0=args.nu0, a=args.a, b=args.b, iterations=args.sweeps, burn_in=burn,
                         metropolis_steps_per_sweep=args.steps_per_sweep, seed=args.seed,
                         time_budget=args.seconds)
    except EmvsError as exc:
        raise UsageError(str(exc)) from exc
    res = run_ssvs_probit(d, cfg)
    rows = [] if res.kept_sweeps == 0 else [
        [j + 1, float(f), int(f > 0.5)] for j, f in enumerate(res.gamma_inclusion_freq)
    ]
    write_table(args.out, ["j", "inclusion_freq", "selected"], rows)
    selected = [int(j) + 1 for j in np.flatnonzero(res.selected)] if res.kept_sweeps else []
    summary = {
        "schema_version": SCHEMA_VERSION,
        "sweeps": res.sweeps,
        "kept_sweeps": res.kept_sweeps,
        "acceptance_rate": res.acceptance_rate,
        "selected": selected,
        "seed": args.seed,
        "overflow_sweeps": res.overflow_sweeps,
    }
    write_json(args.summary_out or str(Path(args.out).with_suffix("")) + "_summary.json", summary)
    print(f"sweeps={res.sweeps} acceptance_rate={res.acceptance_rate:.6g} selected={selected}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _default_workers():
    env = os.environ.get("EMVS_BIN_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _add_data_args(sp):
    sp.add_argument("--data", required=True, help="CSV with a header row; rows are observations")
    sp.add_argument("--label-col", default="y", help="name of the response column (default: y)")
    sp.add_argument("--labels", help="separate single-column label CSV instead of --label-col")


def _add_hyper_args(sp):
    sp.add_argument("--nu0", type=float, help="spike variance (default 1.5 logistic, 0.005 probit)")
    sp.add_argument("--nu1", type=float, help="slab variance (default 1000 logistic, 100 probit)")
    sp.add_argument("--a", type=float, default=1.0)
    sp.add_argument("--b", type=float, help="default: p")
    sp.add_argument("--nu", type=float, default=1.0)
    sp.add_argument("--lam", type=float, default=0.001)


def build_parser():
    parser = argparse.ArgumentParser(prog="emvs-bin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key=value file; command-line flags take precedence")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate a correlated design and binary labels")
    sp.add_argument("--n", type=_positive_int, default=100)
    sp.add_argument("--p", type=_positive_int, default=1000)
    sp.add_argument("--p-gamma", type=_positive_int, default=10)
    sp.add_argument("--rho", type=float, default=0.6)
    sp.add_argument("--beta", help="leading coefficients, e.g. '1,2,3'; the rest are 0")
    sp.add_argument("--beta-max", type=float, help="draw p_gamma coefficients from U(-beta_max, beta_max)")
    sp.add_argument("--sigma-eps2", type=float, default=3.0)
    sp.add_argument("--coding", choices=["pm1", "01"], default="pm1")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", default=".")
    sp.add_argument("--prefix", default="")
    sp.add_argument("--label-col", default="y")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit logistic or probit EMVS")
    _add_data_args(sp)
    sp.add_argument("--model", choices=["logistic", "probit"], default="logistic")
    _add_hyper_args(sp)
    sp.add_argument("--theta0", type=float, default=0.5)
    sp.add_argument("--sigma0", type=float, default=1.0)
    sp.add_argument("--max-iter", type=_positive_int, default=100)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--sdca-picks", type=_positive_int, default=5000)
    sp.add_argument("--beta-solver", choices=["grr", "sdca"], default="grr")
    sp.add_argument("--penalty-mode", choices=["paper", "q1"], default="paper")
    sp.add_argument("--init-penalty", type=float, help="ridge penalty of the logistic start (default 1/n)")
    sp.add_argument("--nu0-grid", help="'default', 'start:step:stop' or a comma list; writes a path CSV")
    sp.add_argument("--path-out")
    sp.add_argument("--no-standardize", dest="standardize", action="store_false")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="fit.json")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="class probabilities from a fit")
    sp.add_argument("--fit", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--label-col", default="y", help="truth column, used when present")
    sp.add_argument("--labels")
    sp.add_argument("--cutoff", type=float, default=0.5)
    sp.add_argument("--standardize-with", help="JSON with training 'mean'/'sd' (default: the fit's own)")
    sp.add_argument("--out", default="predictions.csv")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("study", help="replicate simulation study")
    sp.add_argument("--n", type=_positive_int, default=100)
    sp.add_argument("--p", type=_positive_int, default=1000)
    sp.add_argument("--p-gamma", type=_positive_int, default=10)
    sp.add_argument("--rho", type=float, default=0.6)
    sp.add_argument("--sigma-eps2", type=float, default=3.0)
    sp.add_argument("--beta-max", type=float, default=2.0)
    sp.add_argument("--replicates", type=_positive_int, default=500)
    sp.add_argument("--model", choices=["logistic", "probit", "both"], default="both")
    sp.add_argument("--seed", type=int, default=0, help="base seed")
    sp.add_argument("--workers", type=_positive_int, default=_default_workers())
    sp.add_argument("--max-iter", type=_positive_int, default=100)
    sp.add_argument("--logistic-picks", type=_positive_int, default=5000)
    sp.add_argument("--probit-picks", type=_positive_int, default=6000)
    sp.add_argument("--probit-solver", choices=["grr", "sdca"], default="grr")
    sp.add_argument("--init-penalty", type=float, help="ridge penalty of the logistic start (default 1/n)")
    sp.add_argument("--logistic-grid")
    sp.add_argument("--probit-grid")
    sp.add_argument("--out-dir", default="study_out")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_study)

    sp = sub.add_parser("ssvs", help="Gibbs/Metropolis SSVS baseline for probit")
    _add_data_args(sp)
    sp.add_argument("--sweeps", type=int, default=1000)
    sp.add_argument("--seconds", type=float, help="wall-clock budget; stops early once spent")
    sp.add_argument("--burn-in", type=int, default=0)
    sp.add_argument("--steps-per-sweep", type=_positive_int, default=1000)
    sp.add_argument("--nu1", type=float, default=1000.0)
    sp.add_argument("--nu0", type=float, default=0.0)
    sp.add_argument("--a", type=float, default=1.0)
    sp.add_argument("--b", type=float, default=1.0)
    sp.add_argument("--no-standardize", dest="standardize", action="store_false")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="ssvs.csv")
    sp.add_argument("--summary-out")
    sp.set_defaults(func=cmd_ssvs)
    return parser


def read_config(path):
    """key=value lines, '#' comments; keys may use dashes or underscores."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc.strerror or exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _subparser(parser, name):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[name]


def _apply_config(parser, argv):
    pre, _ = parser.parse_known_args(argv)
    if not pre.config:
        return parser.parse_args(argv)
    values = read_config(pre.config)
    sp = _subparser(parser, pre.command)
    known = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known or key in ("help", "func"):
            raise UsageError(f"config key {key!r} is not an option of '{pre.command}'")
        action = known[key]
        if isinstance(action, argparse._StoreFalseAction):
            defaults[key] = raw.lower() not in ("1", "true", "yes")
        elif isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes")
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
            if action.choices and defaults[key] not in action.choices:
                raise UsageError(f"config key {key!r} must be one of {sorted(action.choices)}")
        if action.required:
            action.required = False
    sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    missing = [a.dest for a in sp._actions if a.dest in defaults and getattr(args, a.dest) is None]
    if missing:
        raise UsageError(f"missing values for {missing}")
    return args


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, SingularSystem, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EmvsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
