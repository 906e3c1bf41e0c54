"""Simulation scenario, study runner, and evaluation metrics.

One run draws a single long training sequence plus a held-out test block
from the two-state switching-logistic generative model, fits the five
schemes (unpenalized MLE, LASSO with AIC/BIC tuning, relaxed LASSO with
AIC/BIC tuning), and scores parameter recovery, selection accuracy, and
out-of-sample forecasts. Runs use independent substreams seeded by
(seed, run index), so results do not depend on execution order or worker
count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .fit import FitConfig, FitError, fit
from .inference import avg_pred_prob, brier_score, forecast, make_records
from .model import ModelError, ModelSpec, Sequence, SequenceSet, stationary_distribution
from .penalty import PenaltyConfig
from .selection import (LambdaGrid, SCHEMES, SelectionError, fit_path,
                        make_grid, select)

DEFAULT_TPM = ((0.9, 0.1), (0.1, 0.9))
# the generative intercepts: inverse-logit of 0.75 and 0.35, giving a hot
# and a cold state on the predictor scale
DEFAULT_INTERCEPTS = (float(expit(0.75)), float(expit(0.35)))
SIGNAL_SLOPES = (0.5, 0.7, -0.8)


def _default_slopes():
    return np.array(SIGNAL_SLOPES + (0.0,) * 47)


@dataclass(frozen=True)
class ScenarioConfig:
    """Generative design: defaults are the full-size scenario."""

    n_states: int = 2
    true_tpm: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_TPM))
    true_intercepts: np.ndarray = field(
        default_factory=lambda: np.array(DEFAULT_INTERCEPTS))
    true_slopes: np.ndarray = field(default_factory=_default_slopes)
    covariate_low: float = -2.0
    covariate_high: float = 2.0
    t_train: int = 5000
    t_test: int = 100
    n_runs: int = 100
    seed: int = 0

    def __post_init__(self):
        tpm = np.asarray(self.true_tpm, dtype=np.float64)
        intercepts = np.asarray(self.true_intercepts, dtype=np.float64)
        slopes = np.asarray(self.true_slopes, dtype=np.float64)
        n = self.n_states
        if tpm.shape != (n, n) or np.any(tpm < 0) or \
                np.max(np.abs(tpm.sum(axis=1) - 1.0)) > 1e-8:
            raise ValueError("true_tpm must be row-stochastic and n_states-square")
        if intercepts.shape != (n,):
            raise ValueError("true_intercepts must have one entry per state")
        if slopes.ndim != 1 or slopes.size < 1:
            raise ValueError("true_slopes must be a non-empty vector")
        if min(self.t_train, self.t_test, self.n_runs) < 1:
            raise ValueError("t_train, t_test, n_runs must be >= 1")
        if not self.covariate_high > self.covariate_low:
            raise ValueError("covariate range is empty")
        for name, arr in (("true_tpm", tpm), ("true_intercepts", intercepts),
                          ("true_slopes", slopes)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def t_total(self):
        return self.t_train + self.t_test

    @property
    def n_covariates(self):
        return int(self.true_slopes.size)

    @classmethod
    def paper_scale(cls, seed=0):
        return cls(seed=seed)

    @classmethod
    def desk_scale(cls, seed=0):
        """Halved design: T=2550 train, 25 covariates (22 noise), 25 runs."""
        return cls(true_slopes=np.array(SIGNAL_SLOPES + (0.0,) * 22),
                   t_train=2550, n_runs=25, seed=seed)


def generate(config, run_index):
    """(training SequenceSet, test covariates, test outcomes) for one run.

    The latent chain starts from its stationary distribution. Draw order
    is fixed: covariates, then the initial state, then the chain, then the
    outcomes, all from the (seed, run_index) substream.
    """
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, run_index)))
    t_total, k, n = config.t_total, config.n_covariates, config.n_states
    x = rng.uniform(config.covariate_low, config.covariate_high, size=(t_total, k))
    try:
        delta = stationary_distribution(config.true_tpm)
    except ModelError:
        # chains without a unique stationary law (identity, absorbing
        # blocks) start uniformly instead
        delta = np.full(n, 1.0 / n)
    states = np.empty(t_total, dtype=np.int64)
    states[0] = min(int(np.searchsorted(np.cumsum(delta), rng.random(),
                                        side="right")), n - 1)
    cum = np.cumsum(config.true_tpm, axis=1)
    steps = rng.random(t_total - 1)
    for t in range(1, t_total):
        states[t] = min(int(np.searchsorted(cum[states[t - 1]], steps[t - 1],
                                            side="right")), n - 1)
    eta = config.true_intercepts[states] + x @ config.true_slopes
    y = (rng.random(t_total) < expit(eta)).astype(np.int8)
    train = Sequence(player_id=f"sim-run{run_index}",
                     outcomes=y[:config.t_train],
                     covariates=x[:config.t_train])
    return (SequenceSet((train,)), x[config.t_train:], y[config.t_train:])


def mse(estimates, truth):
    """Mean squared componentwise error."""
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape or e.size < 1:
        raise ValueError("estimates and truth must have equal non-zero length")
    return float(np.mean((e - t) ** 2))


def tpr_fpr(active_set, n_covariates, true_nonzero=(0, 1, 2)):
    """True/false positive rates of a selected index set (0-based)."""
    active = set(int(i) for i in active_set)
    if active and (min(active) < 0 or max(active) >= n_covariates):
        raise ValueError("active set index outside 0..K-1")
    true = set(true_nonzero)
    noise = n_covariates - len(true)
    tpr = len(active & true) / len(true) if true else 0.0
    fpr = len(active - true) / noise if noise else 0.0
    return tpr, fpr


@dataclass(frozen=True)
class StudyConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    grid_length: int = 50
    grid_max: float = 5000.0
    grid_min: float = 1e-4
    fit: FitConfig = field(default_factory=FitConfig)
    penalty_c: float = 1e-5
    penalty_mode: str = "smooth"
    workers: int = 1

    @classmethod
    def desk_scale(cls, seed=0, workers=1):
        return cls(scenario=ScenarioConfig.desk_scale(seed=seed),
                   grid_length=20, workers=workers)

    @classmethod
    def paper_scale(cls, seed=0, workers=1):
        return cls(scenario=ScenarioConfig.paper_scale(seed=seed),
                   workers=workers)


@dataclass(frozen=True)
class StudyRow:
    run: int
    scheme: str
    mse_beta: float
    mse_intercepts: float
    mse_tpm: float
    tpr: float
    fpr: float
    brier: float
    avg_prob: float
    seconds: float
    failed: bool
    # recovered self-transition probabilities; carried for diagnostics,
    # not part of the study table
    gamma11: float = math.nan
    gamma22: float = math.nan


@dataclass(frozen=True)
class SchemeSelection:
    """Grid position chosen by a scheme in one run (for path diagnostics)."""

    run: int
    scheme: str
    lam: float
    index: int
    interior: bool


@dataclass(frozen=True)
class StudyResult:
    rows: tuple
    selections: tuple
    medians: dict


_FAILED_METRICS = dict(mse_beta=math.nan, mse_intercepts=math.nan,
                       mse_tpm=math.nan, tpr=math.nan, fpr=math.nan,
                       brier=math.nan, avg_prob=math.nan)


def _scheme_metrics(result, config, train, x_test, y_test):
    params = result.params
    scenario_order = np.argsort(-config.true_intercepts, kind="stable")
    true_b0 = config.true_intercepts[scenario_order]
    true_diag = np.diag(config.true_tpm[np.ix_(scenario_order, scenario_order)])
    tpr, fpr = tpr_fpr(result.active_set, config.n_covariates)
    probs = forecast(train, x_test, params)
    records = make_records(probs, y_test)
    return dict(
        mse_beta=mse(params.slopes, config.true_slopes),
        mse_intercepts=mse(params.intercepts, true_b0),
        mse_tpm=mse(np.diag(params.tpm), true_diag),
        tpr=tpr,
        fpr=fpr,
        brier=brier_score(records),
        avg_prob=avg_pred_prob(records),
        gamma11=float(params.tpm[0, 0]),
        gamma22=float(params.tpm[1, 1]),
    )


def _fit_seed(scenario, run_index):
    words = np.random.SeedSequence((scenario.seed, run_index, 1)).generate_state(2)
    return int(words[0]) ^ (int(words[1]) << 32)


def run_one(study, run_index):
    """All scheme rows for a single replication."""
    scenario = study.scenario
    data, x_test, y_test = generate(scenario, run_index)
    train = data.sequences[0]
    spec = ModelSpec(n_states=scenario.n_states,
                     n_covariates=scenario.n_covariates)
    fcfg = replace(study.fit, seed=_fit_seed(scenario, run_index))
    pen0 = PenaltyConfig(lam=0.0, c=study.penalty_c, mode=study.penalty_mode)

    t0 = time.perf_counter()
    try:
        mle = fit(data, spec, pen0, fcfg)
    except (FitError, ModelError):
        mle = None
    t_mle = time.perf_counter() - t0

    if study.grid_length == 1:
        # degenerate study: a single unpenalized grid point, so every
        # scheme reduces to the maximum-likelihood fit
        grid = LambdaGrid((0.0,))
    else:
        grid = make_grid(study.grid_length, study.grid_max, study.grid_min)
    t0 = time.perf_counter()
    path = fit_path(data, spec, grid, fcfg, penalty_c=study.penalty_c,
                    penalty_mode=study.penalty_mode)
    t_path = time.perf_counter() - t0

    rows, selections = [], []
    for scheme in SCHEMES:
        seconds = t_mle if scheme == "MLE" else t_path
        result = None
        if scheme == "MLE":
            result = mle
        else:
            try:
                chosen = select(path, scheme)
                result = chosen.result
                selections.append(SchemeSelection(
                    run=run_index, scheme=scheme, lam=chosen.lam,
                    index=chosen.index,
                    interior=bool(0 < chosen.index < len(grid) - 1)))
            except SelectionError:
                result = None
        if result is None:
            rows.append(StudyRow(run=run_index, scheme=scheme, seconds=seconds,
                                 failed=True, **_FAILED_METRICS))
            continue
        try:
            metrics = _scheme_metrics(result, scenario, train, x_test, y_test)
        except (ValueError, ModelError):
            rows.append(StudyRow(run=run_index, scheme=scheme, seconds=seconds,
                                 failed=True, **_FAILED_METRICS))
            continue
        rows.append(StudyRow(run=run_index, scheme=scheme, seconds=seconds,
                             failed=False, **metrics))
    return rows, selections


_METRIC_FIELDS = ("mse_beta", "mse_intercepts", "mse_tpm", "tpr", "fpr",
                  "brier", "avg_prob")
_MEDIAN_FIELDS = _METRIC_FIELDS + ("gamma11", "gamma22")


def run_study(study):
    """Run every replication and aggregate per-scheme medians.

    Failed runs keep their row (failure flagged) but are excluded from the
    medians. With workers > 1, replications run in separate processes and
    are merged by run index.
    """
    indices = range(study.scenario.n_runs)
    if study.workers > 1:
        with ProcessPoolExecutor(max_workers=study.workers) as pool:
            outcomes = list(pool.map(_run_one_task,
                                     ((study, r) for r in indices)))
    else:
        outcomes = [run_one(study, r) for r in indices]
    rows = tuple(row for res, _ in outcomes for row in res)
    selections = tuple(sel for _, sels in outcomes for sel in sels)
    medians = {}
    for scheme in SCHEMES:
        ok = [r for r in rows if r.scheme == scheme and not r.failed]
        medians[scheme] = {
            f: (float(np.median([getattr(r, f) for r in ok])) if ok else math.nan)
            for f in _MEDIAN_FIELDS
        }
        medians[scheme]["n_ok"] = len(ok)
    return StudyResult(rows=rows, selections=selections, medians=medians)


def _run_one_task(args):
    return run_one(*args)


STUDY_HEADER = ("run", "scheme", "mse_beta", "mse_intercepts", "mse_tpm",
                "tpr", "fpr", "brier", "avg_prob", "seconds", "failed")


def write_study_table(result, fh):
    """Long-format per-run metrics; seconds is measured wall time."""
    fh.write(",".join(STUDY_HEADER) + "\n")
    for r in result.rows:
        cells = [str(r.run), r.scheme]
        cells += [f"{getattr(r, f):.17g}" for f in _METRIC_FIELDS]
        cells += [f"{r.seconds:.17g}", str(int(r.failed))]
        fh.write(",".join(cells) + "\n")


def write_median_table(result, fh):
    """Per-scheme medians over non-failed runs (no timing columns)."""
    fh.write("scheme,n_ok," + ",".join(_METRIC_FIELDS) + "\n")
    for scheme in SCHEMES:
        med = result.medians[scheme]
        cells = [scheme, str(med["n_ok"])]
        cells += [f"{med[f]:.17g}" for f in _METRIC_FIELDS]
        fh.write(",".join(cells) + "\n")


def generate_panel(n_players=50, n_goalkeepers=10, attempts=20,
                   keeper_effect=-1.5, seed=0):
    """Synthetic penalty-kick panel with one influential goalkeeper.

    Every player runs their own two-state chain (persistent transition
    matrix, hot and cold intercepts); the first goalkeeper id carries the
    planted effect and faces takers more often than the rest. Returns the
    record list and the planted goalkeeper id.
    """
    from .data import PenaltyRecord

    rng = np.random.default_rng(np.random.SeedSequence((seed, 777)))
    keepers = [f"gk{j:02d}" for j in range(n_goalkeepers)]
    target = keepers[0]
    tpm = np.array(DEFAULT_TPM)
    intercepts = np.array([1.5, 0.2])
    records = []
    for i in range(n_players):
        pid = f"player{i:02d}"
        state = int(rng.random() < 0.5)
        for k in range(attempts):
            state = int(rng.random() >= tpm[state, 0])
            if rng.random() < 0.25:
                keeper = target
            else:
                keeper = keepers[1 + int(rng.integers(0, n_goalkeepers - 1))]
            eta = intercepts[state] + (keeper_effect if keeper == target else 0.0)
            # timestamps increase with k so the chronological sort used by
            # the design builder preserves the latent chain order
            records.append(PenaltyRecord(
                player_id=pid,
                goalkeeper_id=keeper,
                season_start_year=1980 + k // 38,
                matchday=1 + k % 38,
                home=int(rng.integers(0, 2)),
                minute=int(rng.integers(1, 91)),
                experience_taker=float(np.round(rng.uniform(0, 15), 1)),
                experience_keeper=float(np.round(rng.uniform(0, 15), 1)),
                score_diff=int(rng.integers(-3, 4)),
                outcome=int(rng.random() < expit(eta)),
            ))
    return records, target
