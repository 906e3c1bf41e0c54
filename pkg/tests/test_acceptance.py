"""Release gate: one test per shipping criterion, tolerances pinned.

Run with -v to get one pass/fail line per criterion. The two study-scale
checks (4 and 5/6) fit full-size synthetic designs and dominate the
runtime; everything else is seconds.
"""

import math
import os
import time

import numpy as np
import pytest

from hmmlasso.cli import main
from hmmlasso.data import build_design, filter_min_attempts
from hmmlasso.fit import FitConfig, WorkingObjective, fit
from hmmlasso.inference import avg_pred_prob, brier_score, make_records
from hmmlasso.model import (ModelSpec, SequenceSet, stationary_distribution,
                            total_loglik)
from hmmlasso.penalty import PenaltyConfig
from hmmlasso.selection import fit_path, make_grid, select
from hmmlasso.simulation import (ScenarioConfig, StudyConfig, generate,
                                 generate_panel, run_study)

from conftest import random_data, random_params, random_sequence
from test_cli import (TINY_STUDY, TINY_FIT, make_panel, mask_seconds,
                      mask_volatile, read, write_config, write_panel)

# frozen realizations; see the recovery notes in the fit tests for why the
# full-scale scenario draw is pinned
PAPER_SCENARIO_SEED = 24
DESK_STUDY_SEED = 12


@pytest.fixture(autouse=True)
def fresh_logging():
    import logging
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    yield
    for handler in root.handlers[:]:
        root.removeHandler(handler)


def test_criterion_01_likelihood_matches_path_enumeration():
    from test_model import enumerated_loglik
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 4))
        t = int(rng.integers(2, 9))
        k = int(rng.integers(1, 4))
        params = random_params(rng, n, k)
        seq = random_sequence(rng, t, k)
        ll = total_loglik(SequenceSet((seq,)), params)
        oracle = enumerated_loglik(seq, params)
        rel = abs(ll - oracle) / max(abs(oracle), 1e-12)
        worst = max(worst, rel)
        assert rel < 1e-10
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print(f"criterion 1: PASS (200 instances, max rel err {worst:.2e}, "
          f"{elapsed:.2f}s)")


def test_criterion_02_stationary_distribution_values():
    tpm = np.array([[0.978, 0.022], [0.680, 0.320]])
    delta = stationary_distribution(tpm)
    assert np.allclose(delta, [0.969, 0.031], atol=5e-4)
    symmetric = np.array([[0.7, 0.3], [0.3, 0.7]])
    assert np.allclose(stationary_distribution(symmetric), [0.5, 0.5],
                       atol=1e-12)
    print(f"criterion 2: PASS (delta = ({delta[0]:.4f}, {delta[1]:.4f}))")


def test_criterion_03_gradient_matches_central_differences():
    rng = np.random.default_rng(1003)
    worst = 0.0
    for i in range(20):
        n = int(rng.integers(2, 4))
        k = int(rng.integers(1, 4))
        data = random_data(rng, 2, 30, k)
        lam = 0.0 if i % 4 == 0 else float(rng.uniform(0.1, 5.0))
        obj = WorkingObjective(data, ModelSpec(n_states=n, n_covariates=k),
                               PenaltyConfig(lam=lam))
        w = rng.uniform(-1.0, 1.0, size=obj.spec.n_working)
        _, g = obj.value_and_grad(w)
        g_fd = obj.fd_grad(w)
        rel = np.max(np.abs(g - g_fd) / np.maximum(np.abs(g_fd), 1e-8))
        worst = max(worst, rel)
        assert rel < 1e-5
    print(f"criterion 3: PASS (20 points, max rel err {worst:.2e})")


def test_criterion_04_shrinkage_limits_full_scale():
    train, _, _ = generate(ScenarioConfig(seed=PAPER_SCENARIO_SEED), 0)
    spec = ModelSpec(n_states=2, n_covariates=50)

    crushed = fit(train, spec, PenaltyConfig(lam=5000.0), FitConfig(seed=101))
    assert crushed.active_set.size == 0

    config_a = FitConfig(seed=101, convergence_tol=1e-7)
    config_b = FitConfig(seed=202, convergence_tol=1e-7)
    first = fit(train, spec, PenaltyConfig(lam=0.0), config_a)
    second = fit(train, spec, PenaltyConfig(lam=0.0), config_b)
    gaps = [np.max(np.abs(first.params.tpm - second.params.tpm)),
            np.max(np.abs(first.params.intercepts - second.params.intercepts)),
            np.max(np.abs(first.params.slopes - second.params.slopes))]
    assert max(gaps) < 1e-3
    print(f"criterion 4: PASS (0 active at lam=5000; independent 5-start "
          f"fits agree to {max(gaps):.2e})")


@pytest.fixture(scope="module")
def desk_study():
    t0 = time.perf_counter()
    result = run_study(StudyConfig.desk_scale(seed=DESK_STUDY_SEED))
    return result, time.perf_counter() - t0


def test_criterion_05_desk_scale_study_metrics(desk_study):
    result, elapsed = desk_study
    med = result.medians
    for scheme in ("MLE", "LASSO-AIC", "relaxed-AIC", "relaxed-BIC"):
        assert med[scheme]["tpr"] == 1.0, scheme
    assert med["relaxed-BIC"]["fpr"] <= med["LASSO-AIC"]["fpr"]
    assert med["relaxed-BIC"]["fpr"] <= med["LASSO-BIC"]["fpr"]
    for scheme in ("MLE", "relaxed-AIC", "relaxed-BIC"):
        assert abs(med[scheme]["gamma11"] - 0.9) <= 0.07, scheme
        assert abs(med[scheme]["gamma22"] - 0.9) <= 0.07, scheme
    assert med["relaxed-BIC"]["mse_beta"] <= med["MLE"]["mse_beta"]
    assert elapsed < 1800.0
    print(f"criterion 5: PASS (median TPR 1.0; relaxed-BIC FPR "
          f"{med['relaxed-BIC']['fpr']:.3f} <= LASSO FPRs; gamma medians "
          f"({med['MLE']['gamma11']:.3f}, {med['MLE']['gamma22']:.3f}); "
          f"{elapsed:.0f}s)")


def test_criterion_06_aic_selects_no_higher_penalty_than_bic(desk_study):
    result, _ = desk_study
    chosen = {(sel.run, sel.scheme): sel for sel in result.selections}
    checked = violations = 0
    n_runs = 1 + max(sel.run for sel in result.selections)
    for run in range(n_runs):
        for family in ("LASSO", "relaxed"):
            a = chosen.get((run, f"{family}-AIC"))
            b = chosen.get((run, f"{family}-BIC"))
            if a is None or b is None or not (a.interior and b.interior):
                continue
            checked += 1
            if a.lam > b.lam:
                violations += 1
    assert checked > 0
    assert violations == 0
    print(f"criterion 6: PASS (0 violations on {checked} interior "
          f"AIC/BIC pairs)")


def test_criterion_07_scoring_identities():
    rng = np.random.default_rng(1007)
    worst = 0.0
    for _ in range(1000):
        h = int(rng.integers(1, 41))
        probs = rng.uniform(0.001, 0.999, size=h)
        outcomes = rng.integers(0, 2, size=h)
        records = make_records(probs, outcomes)
        a = avg_pred_prob(records)
        identity = 1.0 - np.mean(np.abs(probs - outcomes))
        worst = max(worst, abs(a - identity))
        assert abs(a - identity) < 1e-12
    coin = make_records(np.full(10, 0.5), rng.integers(0, 2, size=10))
    assert brier_score(coin) == 0.25
    assert avg_pred_prob(coin) == 0.5
    print(f"criterion 7: PASS (identity gap {worst:.2e}; coin forecast "
          f"exact)")


def test_criterion_08_planted_goalkeeper_recovery():
    hits = 0
    for rep in range(20):
        records, target = generate_panel(seed=rep)
        kept, _ = filter_min_attempts(records)
        data, catalog, _ = build_design(kept)
        spec = ModelSpec(n_states=2, n_covariates=data.n_covariates)
        grid = make_grid(5, 200.0, 0.1)
        path = fit_path(data, spec, grid, FitConfig(n_random_starts=2, seed=0))
        sel = select(path, "relaxed-BIC")
        col = catalog.index(f"gk:{target}")
        if col in set(sel.result.active_set.tolist()) \
                and sel.result.params.slopes[col] < 0.0:
            hits += 1
    assert hits >= 16
    print(f"criterion 8: PASS ({hits}/20 replications select the planted "
          f"goalkeeper with a negative sign)")


def test_criterion_09_real_data_targets():
    pytest.skip("published real-data point estimates are not targets "
                "without the proprietary dataset; none is bundled")


def test_criterion_10_manifest_rerun_byte_identity(tmp_path):
    config = write_config(tmp_path, TINY_STUDY)
    s1, s2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["simulate", "--config", config, "--out", str(s1)]) == 0
    assert main(["simulate", "--config", str(s1 / "manifest.ini"),
                 "--out", str(s2), "--workers", "2"]) == 0
    assert (mask_seconds(read(s1 / "study_table.csv"))
            == mask_seconds(read(s2 / "study_table.csv")))
    assert read(s1 / "median_table.csv") == read(s2 / "median_table.csv")
    assert (mask_volatile(read(s1 / "manifest.ini"))
            == mask_volatile(read(s2 / "manifest.ini")))

    data_path = write_panel(tmp_path, make_panel())
    fit_config = write_config(tmp_path, TINY_FIT, name="fit.ini")
    f1, f2 = tmp_path / "f1", tmp_path / "f2"
    assert main(["fit", data_path, "--config", fit_config,
                 "--out", str(f1)]) == 0
    assert main(["fit", data_path, "--config", str(f1 / "manifest.ini"),
                 "--out", str(f2)]) == 0
    for name in os.listdir(f1):
        ours, theirs = read(f1 / name), read(f2 / name)
        if name == "manifest.ini":
            assert mask_volatile(ours) == mask_volatile(theirs)
        else:
            assert ours == theirs, name
    print("criterion 10: PASS (simulate and fit reproduce byte-identically "
          "from their manifests, workers varied)")
