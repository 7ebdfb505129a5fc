import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emvs_bin.harness import (
    Nu0Grid,
    StudyConfig,
    default_hyper,
    derive_seed,
    fit_one,
    path_fit_config,
    read_rows,
    run_path,
    run_ssvs_comparison,
    run_study,
    selection_metrics,
    summarize,
)
from emvs_bin.logistic import LogisticEmConfig
from emvs_bin.probit import ProbitEmConfig
from emvs_bin.ssvs import SsvsConfig
from emvs_bin.types import EmvsError, make_dataset, standardize

TINY = dict(n=40, p=30, p_gamma=3, logistic_grid=(1.1, 1.6), probit_grid=(0.002, 0.008),
            max_em_iterations=20, logistic_picks=800, probit_picks=800)


def test_metrics_perfect():
    m = selection_metrics([1, 1, 0, 0], [1, 1, 0, 0])
    assert (m.tpr, m.tnr, m.ppv, m.npv) == (1.0, 1.0, 1.0, 1.0)


def test_metrics_inverted():
    t = np.array([1, 1, 0, 0], bool)
    m = selection_metrics(~t, t)
    assert (m.tpr, m.tnr, m.ppv, m.npv) == (0.0, 0.0, 0.0, 0.0)


def test_metrics_empty_selection():
    m = selection_metrics([0, 0, 0, 0, 0], [1, 0, 1, 0, 0])
    assert m.tpr == 0.0 and m.tnr == 1.0 and m.ppv is None and m.npv == 3 / 5
    assert m.defined_flags == "1101"


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=40))
def test_metrics_identities(pairs):
    sel, truth = map(np.array, zip(*pairs))
    m = selection_metrics(sel, truth)
    assert m.tp + m.fp + m.tn + m.fn == len(pairs)
    for v in (m.tpr, m.tnr, m.ppv, m.npv):
        assert v is None or 0.0 <= v <= 1.0


def test_metrics_length_mismatch():
    with pytest.raises(EmvsError):
        selection_metrics([1, 0], [1, 0, 0])


def test_default_grids():
    lg, pg = Nu0Grid.logistic_default(), Nu0Grid.probit_default()
    assert len(lg) == 50 and len(pg) == 50
    assert lg.values[0] == 1.02 and lg.values[-1] == 2.0 and lg.values[1] == 1.04
    assert pg.values[0] == 0.0002 and pg.values[-1] == 0.01
    np.testing.assert_allclose(np.diff(lg.values), 0.02, rtol=1e-9)
    np.testing.assert_allclose(np.diff(pg.values), 0.0002, rtol=1e-9)


def test_grid_validation():
    with pytest.raises(EmvsError):
        Nu0Grid([0.5, 0.4])
    with pytest.raises(EmvsError):
        Nu0Grid([0.0, 1.0])
    with pytest.raises(EmvsError):
        Nu0Grid([1.0, 200.0]).check_against(100.0)


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert len({derive_seed(0, r) for r in range(1000)}) == 1000
    assert 0 <= derive_seed(2**40, 3) < 2**63


def _data(seed=0, n=60, p=12):
    rng = np.random.default_rng(seed)
    x = standardize(rng.standard_normal((n, p)))
    y = np.where(x[:, 0] * 2 + rng.standard_normal(n) > 0, 1, -1)
    return make_dataset(x, y)


@pytest.mark.parametrize("model", ["logistic", "probit"])
def test_single_point_path_equals_direct_fit(model):
    d = _data()
    cls = LogisticEmConfig if model == "logistic" else ProbitEmConfig
    cfg = cls(default_hyper(model, d.p, 0.1 if model == "logistic" else 0.005))
    nu0 = cfg.hyper.nu0
    path = run_path(d, [nu0], cfg)
    direct = fit_one(d, path_fit_config(cfg, nu0, 0))
    assert len(path.fits) == 1
    np.testing.assert_array_equal(path.betas[0], direct.beta)
    np.testing.assert_array_equal(path.p_stars[0], direct.p_star)


def test_path_shapes_and_modal_selection():
    d = _data(1)
    path = run_path(d, [0.05, 0.1, 0.5], LogisticEmConfig(default_hyper("logistic", d.p)))
    assert path.betas.shape == (3, d.p) and path.selected.shape == (3, d.p)
    assert path.modal_selection() in path.selected_sets()
    assert all(e is None for e in path.errors)


def test_study_with_null_truth():
    res = run_study(StudyConfig(replicates=1, beta_max=0.0, model="logistic", **TINY))
    assert res.rows
    for r in res.rows:
        assert r["tpr"] is None and r["tnr"] is not None
        assert r["defined_flags"][0] == "0"


def test_study_deterministic_and_resumable(tmp_path):
    cfg = StudyConfig(replicates=2, beta_max=2.0, base_seed=3, **TINY)
    first = run_study(cfg, out_dir=tmp_path / "a")
    again = run_study(cfg)
    assert first.rows == again.rows
    assert (tmp_path / "a" / "study.csv").read_bytes() == (tmp_path / "a" / "study.csv").read_bytes()
    # drop one finished cell from the manifest; only that cell is recomputed
    manifest = tmp_path / "a" / "manifest.txt"
    lines = manifest.read_text().split()
    manifest.write_text("\n".join(lines[1:]) + "\n")
    resumed = run_study(cfg, out_dir=tmp_path / "a")
    assert resumed.skipped_cells == len(lines) - 1
    assert resumed.rows == first.rows
    assert read_rows(tmp_path / "a" / "study.csv") == first.rows


def test_study_parallel_matches_serial():
    cfg = StudyConfig(replicates=2, beta_max=2.0, base_seed=5, **TINY)
    serial = run_study(cfg)
    parallel = run_study(StudyConfig(replicates=2, beta_max=2.0, base_seed=5, workers=2, **TINY))
    assert serial.rows == parallel.rows
    assert serial.summary == parallel.summary


def test_summary_order_independent():
    rows = run_study(StudyConfig(replicates=3, beta_max=1.0, model="probit", **TINY)).rows
    shuffled = rows[:]
    random.Random(0).shuffle(shuffled)
    assert summarize(rows) == summarize(shuffled)
    s = summarize(rows)[0]
    vals = [r["tnr"] for r in rows if r["nu0"] == s["nu0"]]
    assert s["tnr_mean"] == pytest.approx(math.fsum(vals) / len(vals))


def test_study_config_validation():
    with pytest.raises(EmvsError):
        StudyConfig(replicates=0)
    with pytest.raises(EmvsError):
        StudyConfig(beta_max=-1)


def test_zero_budget_comparison():
    d = _data(2)
    rec = run_ssvs_comparison(d, SsvsConfig(), budget_sweeps=0)
    assert rec.ssvs_sweeps == 0 and rec.ssvs_selected == ()
    rec = run_ssvs_comparison(d, SsvsConfig(), budget_seconds=0.0)
    assert rec.ssvs_sweeps == 0


def test_sweep_budget_comparison_pairs_emvs():
    d = _data(3)
    path = run_path(d, [0.05, 0.1], LogisticEmConfig(default_hyper("logistic", d.p)))
    rec = run_ssvs_comparison(d, SsvsConfig(metropolis_steps_per_sweep=20, seed=1), budget_sweeps=30,
                              emvs_path=path)
    assert rec.ssvs_sweeps == 30
    assert rec.emvs_selected == path.modal_selection()


@pytest.mark.slow
def test_smoke_study_orderings():
    res = run_study(StudyConfig(replicates=20, p=200, p_gamma=5, beta_max=2.0))
    s = {(r["model"], r["nu0"]): r for r in res.summary}
    probit = [s[k] for k in sorted(s) if k[0] == "probit"]
    logit = [s[k] for k in sorted(s) if k[0] == "logistic"]
    small_probit_ppv = np.nanmean([r["ppv_mean"] for r in probit[:10] if r["ppv_mean"] is not None])
    logit_ppv = np.nanmean([r["ppv_mean"] for r in logit if r["ppv_mean"] is not None])
    assert small_probit_ppv >= logit_ppv
    large_logit_tpr = np.mean([r["tpr_mean"] for r in logit[-10:]])
    probit_tpr = np.mean([r["tpr_mean"] for r in probit])
    assert large_logit_tpr >= probit_tpr
