"""Regularization paths over nu0, selection metrics, the replicate study and
the budget-matched SSVS comparison."""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datagen import (
    DesignSpec,
    ResponseSpec,
    generate_binary_response,
    generate_design,
    generate_replicate_betas,
)
from .logistic import LogisticEmConfig, fit_logistic
from .probit import BetaSolver, ProbitEmConfig, fit_probit
from .sdca import SolverConfig
from .ssvs import SsvsConfig, run_ssvs_probit
from .types import Coding, DimensionMismatch, EmvsError, SpikeSlabHyper, recode, standardize

STUDY_COLUMNS = ["replicate", "model", "nu0", "tpr", "tnr", "ppv", "npv", "defined_flags", "seed",
                 "tp", "fp", "tn", "fn", "converged"]
METRICS = ("tpr", "tnr", "ppv", "npv")


def derive_seed(*keys):
    """Stable 63-bit seed from integer keys (base seed, replicate, grid index, ...)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)[0] >> 1)


def arange_grid(start, stop, step):
    count = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(count), 12)


@dataclass(frozen=True, eq=False)
class Nu0Grid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise EmvsError("nu0 grid must be a non-empty 1-D sequence")
        if np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise EmvsError("nu0 grid must be positive and strictly increasing")
        object.__setattr__(self, "values", v)

    def check_against(self, nu1):
        if np.any(self.values >= nu1):
            raise EmvsError(f"every nu0 must be below nu1={nu1}")
        return self

    def __len__(self):
        return self.values.size

    @classmethod
    def logistic_default(cls):
        return cls(arange_grid(1.02, 2.0, 0.02))

    @classmethod
    def probit_default(cls):
        return cls(arange_grid(0.0002, 0.01, 0.0002))


@dataclass(frozen=True)
class SelectionMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    tpr: float | None
    tnr: float | None
    ppv: float | None
    npv: float | None

    @property
    def defined_flags(self):
        return "".join("0" if getattr(self, m) is None else "1" for m in METRICS)


def _ratio(num, den):
    return None if den == 0 else num / den


def selection_metrics(selected, truth):
    selected = np.asarray(selected, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if selected.shape != truth.shape:
        raise DimensionMismatch(f"selected {selected.shape} vs truth {truth.shape}")
    tp = int(np.sum(selected & truth))
    fp = int(np.sum(selected & ~truth))
    tn = int(np.sum(~selected & ~truth))
    fn = int(np.sum(~selected & truth))
    return SelectionMetrics(tp, fp, tn, fn, _ratio(tp, tp + fn), _ratio(tn, tn + fp),
                            _ratio(tp, tp + fp), _ratio(tn, tn + fn))


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True, eq=False)
class PathResult:
    model: str
    nu0: np.ndarray
    fits: list
    errors: list
    wall_time: float

    @property
    def betas(self):
        return np.vstack([f.beta if f is not None else np.full(self._p, np.nan) for f in self.fits])

    @property
    def p_stars(self):
        return np.vstack([f.p_star if f is not None else np.full(self._p, np.nan) for f in self.fits])

    @property
    def selected(self):
        return np.vstack([f.selected if f is not None else np.zeros(self._p, bool) for f in self.fits])

    @property
    def _p(self):
        for f in self.fits:
            if f is not None:
                return f.beta.shape[0]
        return 0

    def selected_sets(self):
        return [tuple(np.flatnonzero(s)) if f is not None else None for s, f in zip(self.selected, self.fits)]

    def modal_selection(self):
        """Most frequent selected set along the path (ties: smallest nu0 first)."""
        sets = [s for s in self.selected_sets() if s is not None]
        if not sets:
            return None
        counts = {}
        for s in sets:
            counts[s] = counts.get(s, 0) + 1
        best = max(counts.values())
        return next(s for s in sets if counts[s] == best)

    def metrics(self, truth):
        return [selection_metrics(s, truth) if f is not None else None for s, f in zip(self.selected, self.fits)]


def model_name(cfg):
    if isinstance(cfg, LogisticEmConfig):
        return "logistic"
    if isinstance(cfg, ProbitEmConfig):
        return "probit"
    raise EmvsError(f"unsupported config type {type(cfg).__name__}")


def path_fit_config(cfg, nu0, index):
    """Config of grid point ``index``: nu0 swapped in, SDCA seed derived."""
    sdca = replace(cfg.sdca, seed=derive_seed(cfg.sdca.seed, index))
    return replace(cfg, hyper=replace(cfg.hyper, nu0=float(nu0)), sdca=sdca)


def fit_one(d, cfg, backend=None):
    if isinstance(cfg, LogisticEmConfig):
        return fit_logistic(d, cfg, backend=backend)
    return fit_probit(d, cfg, backend=backend)


def run_path(d, grid, cfg, backend=None):
    """Independent fits at every nu0 of ``grid``; failed points are kept as None."""
    if not isinstance(grid, Nu0Grid):
        grid = Nu0Grid(grid)
    grid.check_against(cfg.hyper.nu1)
    name = model_name(cfg)
    t0 = time.perf_counter()
    fits, errors = [], []
    for i, nu0 in enumerate(grid.values):
        try:
            fits.append(fit_one(d, path_fit_config(cfg, nu0, i), backend))
            errors.append(None)
        except (EmvsError, FloatingPointError, np.linalg.LinAlgError) as exc:
            fits.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
    return PathResult(name, grid.values.copy(), fits, errors, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# replicate study


def default_hyper(model, p, nu0=1.0):
    nu1 = 1000.0 if model == "logistic" else 100.0
    return SpikeSlabHyper(nu0=nu0, nu1=nu1, a=1.0, b=float(p), nu=1.0, lam=0.001)


@dataclass(frozen=True)
class StudyConfig:
    n: int = 100
    p: int = 1000
    p_gamma: int = 10
    rho: float = 0.6
    sigma_eps2: float = 3.0
    beta_max: float = 2.0
    replicates: int = 500
    model: str = "both"
    base_seed: int = 0
    workers: int = 1
    logistic_grid: tuple = tuple(Nu0Grid.logistic_default().values)
    probit_grid: tuple = tuple(Nu0Grid.probit_default().values)
    max_em_iterations: int = 100
    logistic_picks: int = 5000
    probit_picks: int = 6000
    probit_solver: str = "grr"
    init_penalty: float | None = None  # ridge-logistic start penalty; None -> 1/n

    def __post_init__(self):
        if self.replicates < 1:
            raise EmvsError("replicates must be >= 1")
        if self.beta_max < 0 or not math.isfinite(self.beta_max):
            raise EmvsError("beta_max must be finite and >= 0")
        if self.model not in ("logistic", "probit", "both"):
            raise EmvsError(f"unknown model {self.model!r}")
        if self.workers < 1:
            raise EmvsError("workers must be >= 1")
        if self.init_penalty is not None and not self.init_penalty > 0:
            raise EmvsError("init_penalty must be positive")
        DesignSpec(self.n, self.p, self.p_gamma, self.rho).validate()

    @property
    def models(self):
        return ("logistic", "probit") if self.model == "both" else (self.model,)

    def em_config(self, model):
        if model == "logistic":
            return LogisticEmConfig(
                hyper=default_hyper("logistic", self.p),
                max_em_iterations=self.max_em_iterations,
                sdca=SolverConfig(max_picks=self.logistic_picks),
                init_penalty=self.init_penalty,
            )
        return ProbitEmConfig(
            hyper=default_hyper("probit", self.p, nu0=1e-3),
            max_em_iterations=self.max_em_iterations,
            sdca=SolverConfig(max_picks=self.probit_picks),
            beta_solver=BetaSolver(self.probit_solver),
            init_penalty=self.init_penalty,
        )

    def grid(self, model):
        return Nu0Grid(np.asarray(self.logistic_grid if model == "logistic" else self.probit_grid))


def make_replicate(cfg, replicate):
    """Design, true coefficients and binary response of one study replicate."""
    seed = derive_seed(cfg.base_seed, replicate)
    s_design, s_beta, s_resp = (derive_seed(seed, k) for k in range(3))
    x = standardize(generate_design(DesignSpec(cfg.n, cfg.p, cfg.p_gamma, cfg.rho, seed=s_design)))
    beta = generate_replicate_betas(cfg.p, cfg.p_gamma, cfg.beta_max, s_beta)
    d = generate_binary_response(x, ResponseSpec(beta, cfg.sigma_eps2), s_resp)
    return d, beta, seed


def run_cell(cfg, replicate, model, backend=None):
    """All grid rows for one (replicate, model) cell."""
    d, beta, seed = make_replicate(cfg, replicate)
    if model == "probit":
        d = recode(d, Coding.ZERO_ONE)
    em = cfg.em_config(model)
    em = replace(em, sdca=replace(em.sdca, seed=derive_seed(seed, 1000 + (model == "probit"))))
    truth = beta != 0
    rows = []
    try:
        path = run_path(d, cfg.grid(model), em, backend)
    except EmvsError as exc:
        return {"replicate": replicate, "model": model, "error": str(exc), "rows": []}
    for nu0, fit, m in zip(path.nu0, path.fits, path.metrics(truth)):
        if fit is None:
            continue
        rows.append({
            "replicate": replicate, "model": model, "nu0": float(nu0),
            "tpr": m.tpr, "tnr": m.tnr, "ppv": m.ppv, "npv": m.npv,
            "defined_flags": m.defined_flags, "seed": seed,
            "tp": m.tp, "fp": m.fp, "tn": m.tn, "fn": m.fn,
            "converged": int(fit.converged),
        })
    errors = [e for e in path.errors if e]
    return {"replicate": replicate, "model": model, "error": "; ".join(errors) or None, "rows": rows}


def _cell_worker(args):
    cfg, replicate, model = args
    return run_cell(cfg, replicate, model)


@dataclass
class StudyResult:
    rows: list
    summary: list
    failures: list = field(default_factory=list)
    skipped_cells: int = 0


def summarize(rows):
    """Grid-wise means with Monte-Carlo standard errors, order independent."""
    groups = {}
    for r in rows:
        groups.setdefault((r["model"], r["nu0"]), []).append(r)
    out = []
    for (model, nu0) in sorted(groups):
        g = sorted(groups[(model, nu0)], key=lambda r: r["replicate"])
        rec = {"model": model, "nu0": nu0, "replicates": len(g)}
        for m in METRICS:
            vals = [r[m] for r in g if r[m] is not None and not (isinstance(r[m], float) and math.isnan(r[m]))]
            k = len(vals)
            mean = math.fsum(vals) / k if k else None
            se = (math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (k - 1) / k) if k > 1 else None)
            rec[f"{m}_mean"] = mean
            rec[f"{m}_se"] = se
            rec[f"{m}_defined"] = k
        out.append(rec)
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".17g")
    return str(v)


def write_rows(path, rows, columns):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    os.replace(tmp, path)


def _parse_cell(v, col):
    if v == "":
        return None
    if col in ("replicate", "seed", "tp", "fp", "tn", "fn", "converged"):
        return int(v)
    if col in ("model", "defined_flags"):
        return v
    return float(v)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        return [{k: _parse_cell(v, k) for k, v in row.items()} for row in rd]


SUMMARY_COLUMNS = ["model", "nu0", "replicates"] + [
    f"{m}_{s}" for m in METRICS for s in ("mean", "se", "defined")
]


def run_study(cfg, out_dir=None, progress=None):
    """Run every (replicate, model) cell; with ``out_dir`` the study is resumable.

    Finished cells are written to ``out_dir/cells`` and listed in
    ``out_dir/manifest.txt``; a rerun skips them.
    """
    cells = [(r, m) for r in range(cfg.replicates) for m in cfg.models]
    done = {}
    manifest = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "cells").mkdir(parents=True, exist_ok=True)
        manifest = out_dir / "manifest.txt"
        if manifest.exists():
            for line in manifest.read_text().split():
                r, m = line.split(",")
                f = out_dir / "cells" / f"{r}_{m}.csv"
                if f.exists():
                    done[(int(r), m)] = read_rows(f)
    todo = [c for c in cells if c not in done]
    failures = []

    def record(res):
        key = (res["replicate"], res["model"])
        if res["error"]:
            failures.append({"replicate": key[0], "model": key[1], "error": res["error"]})
        done[key] = res["rows"]
        if out_dir is not None:
            write_rows(out_dir / "cells" / f"{key[0]}_{key[1]}.csv", res["rows"], STUDY_COLUMNS)
            with open(manifest, "a", encoding="utf-8") as fh:
                fh.write(f"{key[0]},{key[1]}\n")
        if progress:
            progress(len(done), len(cells))

    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for res in pool.map(_cell_worker, [(cfg, r, m) for r, m in todo]):
                record(res)
    else:
        for r, m in todo:
            record(run_cell(cfg, r, m))

    rows = [row for key in sorted(done) for row in done[key]]
    rows.sort(key=lambda r: (r["replicate"], r["model"], r["nu0"]))
    result = StudyResult(rows=rows, summary=summarize(rows), failures=failures,
                         skipped_cells=len(cells) - len(todo))
    if out_dir is not None:
        write_rows(out_dir / "study.csv", result.rows, STUDY_COLUMNS)
        write_rows(out_dir / "summary.csv", result.summary, SUMMARY_COLUMNS)
    return result


# --------------------------------------------------------------------------
# SSVS comparison


@dataclass(frozen=True, eq=False)
class ComparisonRecord:
    ssvs_sweeps: int
    ssvs_acceptance_rate: float
    ssvs_selected: tuple
    ssvs_inclusion_freq: np.ndarray
    ssvs_wall_time: float
    emvs_selected: tuple | None
    budget_seconds: float | None
    budget_sweeps: int | None


def run_ssvs_comparison(d, ssvs_cfg, budget_seconds=None, budget_sweeps=None, emvs_path=None,
                        backend=None):
    """SSVS under a wall-time or sweep budget, paired with an EMVS path's modal selection."""
    iterations = ssvs_cfg.iterations if budget_sweeps is None else int(budget_sweeps)
    if budget_seconds is not None and budget_sweeps is None:
        iterations = max(ssvs_cfg.iterations, 10**9)
    burn = min(ssvs_cfg.burn_in, max(iterations - 1, 0))
    cfg = replace(ssvs_cfg, iterations=iterations, burn_in=burn,
                  time_budget=budget_seconds if budget_seconds is not None else ssvs_cfg.time_budget)
    if iterations == 0 or (budget_seconds is not None and budget_seconds <= 0):
        p = d.x.shape[1]
        return ComparisonRecord(0, 0.0, (), np.zeros(p), 0.0,
                                emvs_path.modal_selection() if emvs_path is not None else None,
                                budget_seconds, budget_sweeps)
    res = run_ssvs_probit(d, cfg, backend=backend)
    return ComparisonRecord(
        ssvs_sweeps=res.sweeps,
        ssvs_acceptance_rate=res.acceptance_rate,
        ssvs_selected=tuple(int(j) for j in np.flatnonzero(res.selected)),
        ssvs_inclusion_freq=res.gamma_inclusion_freq,
        ssvs_wall_time=res.wall_time,
        emvs_selected=emvs_path.modal_selection() if emvs_path is not None else None,
        budget_seconds=budget_seconds,
        budget_sweeps=budget_sweeps,
    )


def replica_dataset(seed, n=100, p=1000, p_gamma=3, rho=0.6, sigma_eps2=3.0, beta_head=(1.0, 2.0, 3.0)):
    """The fixed-coefficient replica: beta = (1, 2, 3, 0, ..., 0), labels -1/+1."""
    s_design, s_resp = derive_seed(seed, 0), derive_seed(seed, 1)
    x = standardize(generate_design(DesignSpec(n, p, p_gamma, rho, seed=s_design)))
    beta = np.zeros(p)
    beta[: len(beta_head)] = beta_head
    return generate_binary_response(x, ResponseSpec(beta, sigma_eps2), s_resp), beta
