"""Command-line front end: simulation studies, panel fitting, scoring.

Three subcommands share one INI-style configuration schema. Every run
writes its fully materialized configuration into a manifest next to the
outputs, so any result can be regenerated with --config manifest.ini.
Unknown configuration keys are hard errors (with a close-match hint)
because a silently ignored typo in a seed or grid bound would invalidate
a study.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import difflib
import hashlib
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .data import (DataError, DesignBuilder, descriptives,
                   filter_min_attempts, load_csv, write_catalog,
                   write_descriptives)
from .fit import FitConfig, FitError, fit
from .inference import (avg_pred_prob, brier_score, decode, filtered_last,
                        forecast_from, make_records)
from .model import ModelError, ModelSpec, Params, stationary_distribution
from .penalty import MODES, PenaltyConfig
from .selection import (SCHEMES, LambdaGrid, SelectionError, fit_path,
                        make_grid, select)
from .simulation import (SIGNAL_SLOPES, ScenarioConfig, StudyConfig,
                         run_study, write_median_table, write_study_table)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2     # bad flags, config keys/values, or input data
EXIT_NUMERIC = 3    # every estimation scheme failed
EXIT_IO = 4         # missing or unwritable files

MANIFEST_NAME = "manifest.ini"
ARTIFACTS_NAME = "model_artifacts.json"


class ConfigError(ValueError):
    """Invalid configuration file content or option values."""


def _positive_int(raw):
    value = int(raw)
    if value < 1:
        raise ValueError("must be >= 1")
    return value


def _positive_float(raw):
    value = float(raw)
    if not value > 0.0 or not math.isfinite(value):
        raise ValueError("must be a positive finite number")
    return value


def _nonneg_float(raw):
    value = float(raw)
    if value < 0.0 or not math.isfinite(value):
        raise ValueError("must be a non-negative finite number")
    return value


def _any_int(raw):
    return int(raw)


def _choice(options):
    def parse(raw):
        if raw not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return raw
    return parse


def _auto_or(parse):
    def wrapped(raw):
        if raw == "auto":
            return "auto"
        return parse(raw)
    return wrapped


def _optional(parse):
    def wrapped(raw):
        if raw == "":
            return None
        return parse(raw)
    return wrapped


# section -> key -> (parser, default as the string that appears in manifests)
_SCHEMA = {
    "model": {
        "states": (_positive_int, "2"),
        "penalty_mode": (_choice(MODES), "smooth"),
        "penalty_c": (_positive_float, "1e-05"),
        # empty = fit the whole grid; a number = fit that single penalty
        "lambda": (_optional(_nonneg_float), ""),
    },
    "grid": {
        "length": (_auto_or(_positive_int), "auto"),
        "max": (_positive_float, "5000.0"),
        "min": (_positive_float, "0.0001"),
    },
    "fit": {
        "max_iterations": (_positive_int, "2000"),
        "n_random_starts": (_positive_int, "5"),
        "convergence_tol": (_positive_float, "1e-06"),
        "nonzero_threshold": (_positive_float, "0.001"),
        "seed": (_any_int, "0"),
        "workers": (_auto_or(_positive_int), "auto"),
    },
    "study": {
        "scale": (_choice(("desk", "paper")), "desk"),
        "t_train": (_auto_or(_positive_int), "auto"),
        "t_test": (_auto_or(_positive_int), "auto"),
        "n_runs": (_auto_or(_positive_int), "auto"),
        "n_covariates": (_auto_or(_positive_int), "auto"),
    },
    "data": {
        "min_attempts": (_positive_int, "5"),
    },
}

# written by this tool into manifests; accepted on re-read, never user-set
_RUN_SECTION = "run"

_SCALE_DEFAULTS = {
    "desk": dict(t_train=2550, t_test=100, n_runs=25, n_covariates=25,
                 grid_length=20),
    "paper": dict(t_train=5000, t_test=100, n_runs=100, n_covariates=50,
                  grid_length=50),
}


def _all_keys():
    return sorted({key for section in _SCHEMA.values() for key in section})


def _suggest_hint(bad, candidates):
    close = difflib.get_close_matches(bad, candidates, n=1, cutoff=0.6)
    return f'; did you mean "{close[0]}"?' if close else ""


def load_config(path):
    """Strictly parsed configuration: {section: {key: raw string}}."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raw = {}
    for section in parser.sections():
        if section == _RUN_SECTION:
            continue
        if section not in _SCHEMA:
            hint = _suggest_hint(section, sorted(_SCHEMA))
            raise ConfigError(f'{path}: unknown section "[{section}]"{hint}')
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                hint = _suggest_hint(key, _all_keys())
                raise ConfigError(
                    f'{path}: unknown key "{key}" in [{section}]{hint}')
            raw.setdefault(section, {})[key] = value.strip()
    return raw


def _materialize(file_values, flag_values):
    """Defaults overlaid with config-file values, then with CLI flags.

    Returns {section: {key: parsed value}} plus the raw strings used for
    manifest rendering.
    """
    parsed, rendered = {}, {}
    for section, keys in _SCHEMA.items():
        parsed[section] = {}
        rendered[section] = {}
        for key, (parse, default) in keys.items():
            raw = file_values.get(section, {}).get(key, default)
            if (section, key) in flag_values:
                raw = flag_values[(section, key)]
            try:
                parsed[section][key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(
                    f'bad value {raw!r} for {section}.{key}: {exc}') from exc
            rendered[section][key] = raw
    return parsed, rendered


def _flag_overrides(args):
    flags = {}
    if args.seed is not None:
        flags[("fit", "seed")] = str(args.seed)
    if args.workers is not None:
        flags[("fit", "workers")] = str(args.workers)
    if getattr(args, "paper_scale", False):
        flags[("study", "scale")] = "paper"
    if args.grid_max is not None:
        flags[("grid", "max")] = repr(args.grid_max)
    if args.grid_min is not None:
        flags[("grid", "min")] = repr(args.grid_min)
    if args.grid_len is not None:
        flags[("grid", "length")] = str(args.grid_len)
    if args.states is not None:
        flags[("model", "states")] = str(args.states)
    if args.penalty_mode is not None:
        flags[("model", "penalty_mode")] = args.penalty_mode
    return flags


def _resolve_settings(args):
    file_values = load_config(args.config) if args.config else {}
    return _materialize(file_values, _flag_overrides(args))


def _resolve_workers(settings):
    workers = settings["fit"]["workers"]
    if workers == "auto":
        return os.cpu_count() or 1
    return workers


def _resolve_grid_length(settings, scale):
    length = settings["grid"]["length"]
    if length == "auto":
        return _SCALE_DEFAULTS[scale]["grid_length"]
    return length


def _render_config(rendered):
    lines = []
    for section, keys in rendered.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in keys.items())
        lines.append("")
    return "\n".join(lines)


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, rendered, command, inputs, workers, wall_time):
    parts = [_render_config(rendered)]
    parts.append(f"[{_RUN_SECTION}]")
    parts.append(f"command = {command}")
    parts.append(f"version = {__version__}")
    parts.append(f"workers = {workers}")
    parts.append(f"wall_time_seconds = {wall_time:.6f}")
    joined = ";".join(f"{name}={digest}" for name, digest in inputs)
    parts.append(f"inputs = {joined if joined else 'none'}")
    parts.append("")
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts))
    return path


def _g17(value):
    return f"{float(value):.17g}"


def _open_out(out_dir, name):
    return open(os.path.join(out_dir, name), "w", encoding="utf-8",
                newline="\n")


def _echo(rendered):
    sys.stdout.write(_render_config(rendered))
    sys.stdout.flush()


# ---------------------------------------------------------------- simulate

def _scenario_from_settings(settings):
    if settings["model"]["states"] != 2:
        raise ConfigError("the simulation scenario is defined for states = 2")
    scale = settings["study"]["scale"]
    base = _SCALE_DEFAULTS[scale]
    study = settings["study"]

    def pick(key):
        return base[key] if study[key] == "auto" else study[key]

    n_cov = pick("n_covariates")
    if n_cov < len(SIGNAL_SLOPES):
        raise ConfigError(
            f"n_covariates must be at least {len(SIGNAL_SLOPES)} to carry "
            "the non-noise slopes")
    slopes = np.array(SIGNAL_SLOPES + (0.0,) * (n_cov - len(SIGNAL_SLOPES)))
    return ScenarioConfig(true_slopes=slopes, t_train=pick("t_train"),
                          t_test=pick("t_test"), n_runs=pick("n_runs"),
                          seed=settings["fit"]["seed"])


def _fit_config_from_settings(settings):
    f = settings["fit"]
    return FitConfig(max_iterations=f["max_iterations"],
                     n_random_starts=f["n_random_starts"],
                     convergence_tol=f["convergence_tol"],
                     nonzero_threshold=f["nonzero_threshold"],
                     seed=f["seed"])


def cmd_simulate(args):
    settings, rendered = _resolve_settings(args)
    workers = _resolve_workers(settings)
    scale = settings["study"]["scale"]
    grid_length = _resolve_grid_length(settings, scale)
    rendered["grid"]["length"] = str(grid_length)
    for key in ("t_train", "t_test", "n_runs", "n_covariates"):
        if settings["study"][key] == "auto":
            rendered["study"][key] = str(_SCALE_DEFAULTS[scale][key])
    _echo(rendered)

    scenario = _scenario_from_settings(settings)
    study = StudyConfig(scenario=scenario,
                        grid_length=grid_length,
                        grid_max=settings["grid"]["max"],
                        grid_min=settings["grid"]["min"],
                        fit=_fit_config_from_settings(settings),
                        penalty_c=settings["model"]["penalty_c"],
                        penalty_mode=settings["model"]["penalty_mode"],
                        workers=workers)

    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    log.info("running %d replications on %d worker(s)",
             scenario.n_runs, workers)
    result = run_study(study)
    wall = time.perf_counter() - t0

    with _open_out(args.out, "study_table.csv") as fh:
        write_study_table(result, fh)
    with _open_out(args.out, "median_table.csv") as fh:
        write_median_table(result, fh)
    _write_manifest(args.out, rendered, "simulate", [], workers, wall)

    for scheme in SCHEMES:
        med = result.medians[scheme]
        log.info("%-12s n_ok=%d tpr=%.3f fpr=%.3f mse_beta=%.6f",
                 scheme, med["n_ok"], med["tpr"], med["fpr"], med["mse_beta"])
    log.info("study finished in %.1f s; outputs in %s", wall, args.out)
    return EXIT_OK


# -------------------------------------------------------------------- fit

def _state_label(index, n_states):
    if n_states == 1:
        return "only"
    if index == 0:
        return "hot"
    if index == n_states - 1:
        return "cold"
    return f"mid{index}"


def _selected_value(result, k):
    return result.params.slopes[k] if k in set(result.active_set.tolist()) else 0.0


def _write_coefficient_path(path_result, catalog, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["lambda"] + list(catalog))
    for pt in path_result.points:
        if pt.lasso is None:
            writer.writerow([_g17(pt.lam)] + [""] * len(catalog))
            continue
        writer.writerow([_g17(pt.lam)]
                        + [_g17(v) for v in pt.lasso.params.slopes])


def _write_criteria_path(path_result, selections, fh):
    chosen = {}
    for sel in selections.values():
        if sel is not None:
            chosen.setdefault(sel.index, []).append(sel.scheme)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("lambda", "converged", "loglik", "df", "aic", "bic",
                     "relaxed_converged", "relaxed_loglik", "relaxed_aic",
                     "relaxed_bic", "selected_by"))
    for i, pt in enumerate(path_result.points):
        lasso_cells = ([_g17(pt.lasso.loglik), str(pt.df), _g17(pt.aic),
                        _g17(pt.bic)] if pt.lasso is not None
                       else ["", str(pt.df), "", ""])
        relaxed_cells = ([_g17(pt.relaxed.loglik), _g17(pt.relaxed_aic),
                          _g17(pt.relaxed_bic)] if pt.relaxed is not None
                         else ["", "", ""])
        schemes = ";".join(s for s in SCHEMES if s in chosen.get(i, []))
        writer.writerow([_g17(pt.lam), str(int(pt.lasso_ok))] + lasso_cells
                        + [str(int(pt.relaxed_ok))] + relaxed_cells
                        + [schemes])


def _write_selected_models(results, catalog, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["covariate"] + list(SCHEMES))
    for k, name in enumerate(catalog):
        row = [name]
        for scheme in SCHEMES:
            result = results.get(scheme)
            row.append(_g17(_selected_value(result, k)) if result else "")
        writer.writerow(row)


def _write_tpm_report(results, fh):
    writer = csv.writer(fh, lineterminator="\n")
    n_max = max(r.params.n_states for r in results.values() if r is not None)
    writer.writerow(["scheme", "state", "label", "intercept", "stationary"]
                    + [f"gamma_to_{j + 1}" for j in range(n_max)])
    for scheme in SCHEMES:
        result = results.get(scheme)
        if result is None:
            continue
        params = result.params
        delta = stationary_distribution(params.tpm)
        for i in range(params.n_states):
            writer.writerow(
                [scheme, str(i + 1), _state_label(i, params.n_states),
                 _g17(params.intercepts[i]), _g17(delta[i])]
                + [_g17(params.tpm[i, j]) for j in range(params.n_states)])


def _write_decodings(results, data, fh):
    writer = csv.writer(fh, lineterminator="\n")
    n_states = next(r.params.n_states for r in results.values()
                    if r is not None)
    writer.writerow(["scheme", "player_id", "t", "outcome", "viterbi_state"]
                    + [f"smoothed_{i + 1}" for i in range(n_states)])
    for scheme in SCHEMES:
        result = results.get(scheme)
        if result is None:
            continue
        for seq in data.sequences:
            decoding = decode(seq, result.params)
            for t in range(len(seq.outcomes)):
                writer.writerow(
                    [scheme, seq.player_id, str(t + 1),
                     str(int(seq.outcomes[t])), str(int(decoding.viterbi[t]))]
                    + [_g17(v) for v in decoding.smoothed[t]])


def _artifact_payload(results, selections, data, builder, settings):
    schemes = {}
    for scheme, result in results.items():
        if result is None:
            continue
        filtered = {seq.player_id: filtered_last(seq, result.params).tolist()
                    for seq in data.sequences}
        sel = selections.get(scheme)
        schemes[scheme] = {
            "lambda": result.lam,
            "loglik": result.loglik,
            "converged": bool(result.converged),
            "criterion": (None if sel is None or math.isnan(sel.criterion)
                          else sel.criterion),
            "tpm": result.params.tpm.tolist(),
            "intercepts": result.params.intercepts.tolist(),
            "slopes": result.params.slopes.tolist(),
            "active_set": result.active_set.tolist(),
            "filtered": filtered,
        }
    return {
        "version": __version__,
        "n_states": settings["model"]["states"],
        "penalty_mode": settings["model"]["penalty_mode"],
        "penalty_c": settings["model"]["penalty_c"],
        "design": {
            "players": list(builder.players),
            "goalkeepers": list(builder.goalkeepers),
            "means": builder.means.tolist(),
            "sds": builder.sds.tolist(),
        },
        "schemes": schemes,
    }


def cmd_fit(args):
    settings, rendered = _resolve_settings(args)
    workers = _resolve_workers(settings)
    grid_length = _resolve_grid_length(settings, settings["study"]["scale"])
    rendered["grid"]["length"] = str(grid_length)
    _echo(rendered)

    t0 = time.perf_counter()
    records = load_csv(args.data)
    kept, report = filter_min_attempts(records,
                                       settings["data"]["min_attempts"])
    log.info("loaded %d attempts, kept %d after the %d-attempt filter",
             len(records), len(kept), settings["data"]["min_attempts"])
    if not kept:
        raise DataError("no players left after the minimum-attempt filter")

    builder = DesignBuilder.from_records(kept)
    data = builder.apply(kept)
    spec = ModelSpec(n_states=settings["model"]["states"],
                     n_covariates=data.n_covariates)
    fit_config = _fit_config_from_settings(settings)
    mode = settings["model"]["penalty_mode"]
    penalty_c = settings["model"]["penalty_c"]

    single_lam = settings["model"]["lambda"]
    if single_lam is None:
        grid = make_grid(grid_length, settings["grid"]["max"],
                         settings["grid"]["min"])
    else:
        grid = LambdaGrid((single_lam,))

    results, selections = {}, {}
    try:
        results["MLE"] = fit(data, spec,
                             PenaltyConfig(lam=0.0, c=penalty_c, mode=mode),
                             fit_config)
    except (FitError, ModelError) as exc:
        log.warning("unpenalized fit failed: %s", exc)
        results["MLE"] = None
    selections["MLE"] = None

    log.info("fitting %d grid point(s), %d state(s), %d covariates",
             len(grid), spec.n_states, data.n_covariates)
    path_result = fit_path(data, spec, grid, fit_config,
                           penalty_c=penalty_c, penalty_mode=mode)
    for scheme in SCHEMES:
        if scheme == "MLE":
            continue
        try:
            chosen = select(path_result, scheme)
            results[scheme] = chosen.result
            selections[scheme] = chosen
        except SelectionError as exc:
            log.warning("%s selection failed: %s", scheme, exc)
            results[scheme] = None
            selections[scheme] = None

    if all(r is None for r in results.values()):
        raise FitError("every scheme failed; nothing to report")

    os.makedirs(args.out, exist_ok=True)
    with _open_out(args.out, "descriptives.csv") as fh:
        write_descriptives(descriptives(kept), fh)
    with _open_out(args.out, "counts.csv") as fh:
        fh.write("n_attempts,n_players,n_goalkeepers\n")
        fh.write(f"{len(kept)},{len(builder.players)},"
                 f"{len(builder.goalkeepers)}\n")
    with _open_out(args.out, "catalog.csv") as fh:
        write_catalog(builder, fh)
    with _open_out(args.out, "coefficient_path.csv") as fh:
        _write_coefficient_path(path_result, builder.catalog, fh)
    with _open_out(args.out, "criteria_path.csv") as fh:
        _write_criteria_path(path_result, selections, fh)
    with _open_out(args.out, "selected_models.csv") as fh:
        _write_selected_models(results, builder.catalog, fh)
    with _open_out(args.out, "tpm_report.csv") as fh:
        _write_tpm_report(results, fh)
    with _open_out(args.out, "decodings.csv") as fh:
        _write_decodings(results, data, fh)
    payload = _artifact_payload(results, selections, data, builder, settings)
    with _open_out(args.out, ARTIFACTS_NAME) as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    wall = time.perf_counter() - t0
    _write_manifest(args.out, rendered, "fit",
                    [(args.data, _digest(args.data))], workers, wall)

    for scheme in SCHEMES:
        result = results.get(scheme)
        if result is None:
            log.info("%-12s failed", scheme)
        else:
            log.info("%-12s lambda=%-12g loglik=%.6f active=%d",
                     scheme, result.lam, result.loglik,
                     result.active_set.size)
    log.info("outputs in %s", args.out)
    return EXIT_OK


# ------------------------------------------------------------------ score

def _params_from_artifact(entry):
    return Params(tpm=np.array(entry["tpm"]),
                  intercepts=np.array(entry["intercepts"]),
                  slopes=np.array(entry["slopes"]))


def cmd_score(args):
    artifact_path = os.path.join(args.fit_dir, ARTIFACTS_NAME)
    if not os.path.exists(artifact_path):
        raise OSError(f"no model artifacts at {artifact_path}; run fit first")
    with open(artifact_path, encoding="utf-8") as fh:
        payload = json.load(fh)

    records = load_csv(args.test)
    if not records:
        raise DataError(f"{args.test}: empty test file")
    design = payload["design"]
    builder = DesignBuilder(players=tuple(design["players"]),
                            goalkeepers=tuple(design["goalkeepers"]),
                            means=np.array(design["means"]),
                            sds=np.array(design["sds"]))
    test_data = builder.apply(records)

    out_dir = args.out or os.path.join(args.fit_dir, "score")
    os.makedirs(out_dir, exist_ok=True)

    t0 = time.perf_counter()
    summary = []
    with _open_out(out_dir, "forecasts.csv") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("scheme", "player_id", "horizon", "prob", "outcome"))
        for scheme in SCHEMES:
            entry = payload["schemes"].get(scheme)
            if entry is None:
                continue
            params = _params_from_artifact(entry)
            pooled = []
            for seq in test_data.sequences:
                phi = entry["filtered"].get(seq.player_id)
                if phi is None:
                    raise DataError(
                        f"player {seq.player_id} has no fitted state "
                        "distribution in the model artifacts")
                probs = forecast_from(np.array(phi), seq.covariates, params)
                recs = make_records(probs, seq.outcomes)
                pooled.extend(recs)
                for rec in recs:
                    writer.writerow((scheme, seq.player_id, str(rec.horizon),
                                     _g17(rec.prob), str(rec.outcome)))
            summary.append((scheme, brier_score(pooled),
                            avg_pred_prob(pooled)))
    with _open_out(out_dir, "scores.csv") as fh:
        fh.write("scheme,brier,avg_prob\n")
        for scheme, brier, avg in summary:
            fh.write(f"{scheme},{_g17(brier)},{_g17(avg)}\n")
    wall = time.perf_counter() - t0

    settings, rendered = _resolve_settings(args)
    workers = _resolve_workers(settings)
    _write_manifest(out_dir, rendered, "score",
                    [(args.test, _digest(args.test)),
                     (artifact_path, _digest(artifact_path))],
                    workers, wall)
    for scheme, brier, avg in summary:
        log.info("%-12s brier=%.6f avg_prob=%.6f", scheme, brier, avg)
    log.info("outputs in %s", out_dir)
    return EXIT_OK


# ------------------------------------------------------------------- main

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hmmlasso",
        description="Penalized hidden-Markov logistic regression for binary "
                    "time series")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="override fit.seed")
    common.add_argument("--workers", type=int, help="override fit.workers")
    common.add_argument("--grid-max", type=float,
                        help="largest penalty on the grid")
    common.add_argument("--grid-min", type=float,
                        help="smallest penalty on the grid")
    common.add_argument("--grid-len", type=int,
                        help="number of grid points")
    common.add_argument("--states", type=int, help="number of latent states")
    common.add_argument("--penalty-mode", choices=MODES,
                        help="absolute-value approximation variant")

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="run the seeded replication study")
    p_sim.add_argument("--paper-scale", action="store_true",
                       help="full-size study design instead of the desk "
                            "default")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", parents=[common],
                           help="fit all schemes to a panel CSV")
    p_fit.add_argument("data", help="panel CSV conforming to the data schema")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.set_defaults(func=cmd_fit)

    p_score = sub.add_parser("score", parents=[common],
                             help="forecast a test CSV from a fit directory")
    p_score.add_argument("fit_dir", help="directory produced by fit")
    p_score.add_argument("test", help="test CSV with the same schema")
    p_score.add_argument("--out", help="output directory "
                                       "(default: <fit_dir>/score)")
    p_score.set_defaults(func=cmd_score)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    parser = _build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        return args.func(args)
    except (ConfigError, DataError, ValueError) as exc:
        log.error("error: %s", exc)
        return EXIT_CONFIG
    except (FitError, ModelError, SelectionError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("i/o failure: %s", exc)
        return EXIT_IO
    finally:
        log.debug("total %.1f s", time.perf_counter() - t0)


if __name__ == "__main__":
    sys.exit(main())
