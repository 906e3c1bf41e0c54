"""Penalty-kick panel ingestion, design-matrix construction, descriptives.

CSV schema (comma-delimited, UTF-8, exact header order):

    player_id,goalkeeper_id,season_start_year,matchday,home,minute,
    experience_taker,experience_keeper,score_diff,outcome

The design matrix uses a fixed, documented column order: home, the four
metric covariates, six score-difference dummies (level score is the
reference), their minute interactions, three rule-era dummies (1997/1998
onward is the reference era), then one dummy per penalty taker and per
goalkeeper in sorted id order. Metric columns (and the interactions, which
are minute-valued) are centered and scaled by the training sample's mean
and standard deviation; 0/1 dummies are left untouched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Sequence, SequenceSet

HEADER = ("player_id", "goalkeeper_id", "season_start_year", "matchday",
          "home", "minute", "experience_taker", "experience_keeper",
          "score_diff", "outcome")

# (name, lower bound inclusive, upper bound inclusive) on score_diff;
# score 0 ("level") is the reference category and gets no dummy
SCORE_CATEGORIES = (
    ("score_behind_gt2", None, -3),
    ("score_behind_2", -2, -2),
    ("score_behind_1", -1, -1),
    ("score_ahead_1", 1, 1),
    ("score_ahead_2", 2, 2),
    ("score_ahead_gt2", 3, None),
)

# era of the penalty rule in force, by season start year; the open-ended
# era from 1997/1998 onward is the reference and gets no dummy
ERA_CATEGORIES = (
    ("era_pre1986", None, 1985),
    ("era_1986_1995", 1986, 1995),
    ("era_1996", 1996, 1996),
)


class DataError(ValueError):
    """Schema violation, malformed row, or unknown category."""


@dataclass(frozen=True)
class PenaltyRecord:
    player_id: str
    goalkeeper_id: str
    season_start_year: int
    matchday: int
    home: int
    minute: int
    experience_taker: float
    experience_keeper: float
    score_diff: int
    outcome: int

    def __post_init__(self):
        if not self.player_id or not self.goalkeeper_id:
            raise ValueError("player_id and goalkeeper_id must be non-empty")
        if not 1 <= self.matchday <= 38:
            raise ValueError(f"matchday {self.matchday} outside 1..38")
        if self.home not in (0, 1):
            raise ValueError(f"home must be 0 or 1, got {self.home}")
        if self.minute < 1:
            raise ValueError(f"minute {self.minute} outside the 1..90+ range")
        if self.experience_taker < 0 or self.experience_keeper < 0:
            raise ValueError("experience years must be >= 0")
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {self.outcome}")


_PARSERS = (str, str, int, int, int, int, float, float, int, int)


def load_csv(path):
    """Read and validate records; any malformed row fails the load.

    Errors carry 1-based line numbers. The header must match the schema
    exactly, including column order.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file: missing header") from None
        if tuple(header) != HEADER:
            raise DataError(
                f"header mismatch: expected {','.join(HEADER)}, got {','.join(header)}"
            )
        records, problems = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(HEADER):
                problems.append(f"line {lineno}: expected {len(HEADER)} fields, got {len(row)}")
                continue
            try:
                values = [parse(cell) for parse, cell in zip(_PARSERS, row)]
                records.append(PenaltyRecord(*values))
            except ValueError as exc:
                problems.append(f"line {lineno}: {exc}")
    if problems:
        raise DataError("; ".join(problems))
    return records


def _format_number(value):
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def write_csv(records, fh):
    """Canonical writer: integers without decimal point, shortest floats."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow([
            r.player_id, r.goalkeeper_id, r.season_start_year, r.matchday,
            r.home, r.minute, _format_number(r.experience_taker),
            _format_number(r.experience_keeper), r.score_diff, r.outcome,
        ])


@dataclass(frozen=True)
class FilterReport:
    n_records_in: int
    n_records_kept: int
    n_players_in: int
    n_players_kept: int
    n_goalkeepers_kept: int


def filter_min_attempts(records, min_n=5):
    """Drop every record of players with fewer than min_n attempts."""
    counts = {}
    for r in records:
        counts[r.player_id] = counts.get(r.player_id, 0) + 1
    keep = {p for p, n in counts.items() if n >= min_n}
    kept = [r for r in records if r.player_id in keep]
    report = FilterReport(
        n_records_in=len(records),
        n_records_kept=len(kept),
        n_players_in=len(counts),
        n_players_kept=len(keep),
        n_goalkeepers_kept=len({r.goalkeeper_id for r in kept}),
    )
    return kept, report


def _in_range(value, lo, hi):
    return (lo is None or value >= lo) and (hi is None or value <= hi)


@dataclass(frozen=True)
class ColumnScaling:
    name: str
    standardized: bool
    mean: float
    sd: float


@dataclass(frozen=True)
class DesignBuilder:
    """Frozen design recipe: category sets and standardization statistics.

    Built from training records; apply() then produces the same columns
    for any record set (test rows must only use known player/goalkeeper
    ids). Zero-variance metric columns are centered but not scaled.
    """

    players: tuple
    goalkeepers: tuple
    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def from_records(cls, records):
        if not records:
            raise DataError("no records to build a design from")
        players = tuple(sorted({r.player_id for r in records}))
        goalkeepers = tuple(sorted({r.goalkeeper_id for r in records}))
        raw = _raw_matrix(records, players, goalkeepers)
        metric = _metric_mask(raw.shape[1])
        means = np.zeros(raw.shape[1])
        sds = np.ones(raw.shape[1])
        means[metric] = raw[:, metric].mean(axis=0)
        if len(records) > 1:
            sd = raw[:, metric].std(axis=0, ddof=1)
            sds[metric] = np.where(sd > 0.0, sd, 1.0)
        return cls(players=players, goalkeepers=goalkeepers, means=means, sds=sds)

    @property
    def catalog(self):
        names = ["home", "matchday", "minute", "experience_taker",
                 "experience_keeper"]
        names += [name for name, _, _ in SCORE_CATEGORIES]
        names += [f"{name}_x_minute" for name, _, _ in SCORE_CATEGORIES]
        names += [name for name, _, _ in ERA_CATEGORIES]
        names += [f"player:{p}" for p in self.players]
        names += [f"gk:{g}" for g in self.goalkeepers]
        return tuple(names)

    @property
    def scaling_report(self):
        metric = _metric_mask(len(self.means))
        return tuple(
            ColumnScaling(name=name, standardized=bool(metric[i]),
                          mean=float(self.means[i]), sd=float(self.sds[i]))
            for i, name in enumerate(self.catalog)
        )

    def apply(self, records):
        """Standardized design split into one chronological sequence per player."""
        unknown_p = sorted({r.player_id for r in records} - set(self.players))
        unknown_g = sorted({r.goalkeeper_id for r in records} - set(self.goalkeepers))
        if unknown_p or unknown_g:
            raise DataError(
                "ids absent from the design: "
                + ", ".join([f"player:{p}" for p in unknown_p]
                            + [f"gk:{g}" for g in unknown_g])
            )
        ordered = _chronological(records)
        raw = _raw_matrix(ordered, self.players, self.goalkeepers)
        design = (raw - self.means) / self.sds
        by_player = {}
        for i, r in enumerate(ordered):
            by_player.setdefault(r.player_id, []).append(i)
        seqs = []
        for pid in sorted(by_player):
            idx = np.array(by_player[pid])
            outcomes = np.array([ordered[i].outcome for i in idx], dtype=np.int8)
            seqs.append(Sequence(player_id=pid, outcomes=outcomes,
                                 covariates=design[idx]))
        return SequenceSet(tuple(seqs))


# columns before the era block: home + 4 metric + 6 score dummies
# + 6 interactions (minute-valued, standardized like the metric block)
_N_BASE_COLUMNS = 5 + 2 * len(SCORE_CATEGORIES)


def _metric_mask(k_total):
    n_score = len(SCORE_CATEGORIES)
    mask = np.zeros(k_total, dtype=bool)
    mask[1:5] = True                       # matchday, minute, experiences
    mask[5 + n_score:5 + 2 * n_score] = True  # minute-valued interactions
    return mask


def _chronological(records):
    return sorted(records, key=lambda r: (r.season_start_year, r.matchday, r.minute))


def _raw_matrix(records, players, goalkeepers):
    p_index = {p: i for i, p in enumerate(players)}
    g_index = {g: i for i, g in enumerate(goalkeepers)}
    n_score = len(SCORE_CATEGORIES)
    n_era = len(ERA_CATEGORIES)
    k = _N_BASE_COLUMNS + n_era + len(players) + len(goalkeepers)
    out = np.zeros((len(records), k))
    for i, r in enumerate(records):
        out[i, 0] = r.home
        out[i, 1] = r.matchday
        out[i, 2] = r.minute
        out[i, 3] = r.experience_taker
        out[i, 4] = r.experience_keeper
        for j, (_, lo, hi) in enumerate(SCORE_CATEGORIES):
            if _in_range(r.score_diff, lo, hi):
                out[i, 5 + j] = 1.0
                out[i, 5 + n_score + j] = r.minute
        for j, (_, lo, hi) in enumerate(ERA_CATEGORIES):
            if _in_range(r.season_start_year, lo, hi):
                out[i, 5 + 2 * n_score + j] = 1.0
        out[i, _N_BASE_COLUMNS + n_era + p_index[r.player_id]] = 1.0
        out[i, _N_BASE_COLUMNS + n_era + len(players) + g_index[r.goalkeeper_id]] = 1.0
    return out


def build_design(records):
    """(SequenceSet, column catalog, standardization report) for records."""
    builder = DesignBuilder.from_records(records)
    return builder.apply(records), builder.catalog, builder.scaling_report


def write_catalog(builder, fh):
    """Column catalog with the applied centering and scaling, as CSV."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("index", "name", "standardized", "mean", "sd"))
    for i, col in enumerate(builder.scaling_report):
        writer.writerow((i, col.name, int(col.standardized),
                         f"{col.mean:.17g}", f"{col.sd:.17g}"))


_DESCRIPTIVE_FIELDS = (
    ("outcome", lambda r: r.outcome, True),
    ("home", lambda r: r.home, True),
    ("experience_taker", lambda r: r.experience_taker, True),
    ("experience_keeper", lambda r: r.experience_keeper, True),
    ("minute", lambda r: r.minute, True),
    ("matchday", lambda r: r.matchday, False),
)


@dataclass(frozen=True)
class DescriptiveRow:
    name: str
    mean: Optional[float]
    sd: Optional[float]
    minimum: float
    maximum: float


def descriptives(records):
    """Summary rows; matchday reports its range only. Sample (ddof=1) sd."""
    if not records:
        raise DataError("no records")
    rows = []
    for name, get, with_moments in _DESCRIPTIVE_FIELDS:
        values = np.array([get(r) for r in records], dtype=float)
        mean = sd = None
        if with_moments:
            mean = float(values.mean())
            sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
        rows.append(DescriptiveRow(name=name, mean=mean, sd=sd,
                                   minimum=float(values.min()),
                                   maximum=float(values.max())))
    return tuple(rows)


def write_descriptives(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("variable", "mean", "sd", "min", "max"))
    for row in rows:
        writer.writerow((
            row.name,
            "" if row.mean is None else f"{row.mean:.17g}",
            "" if row.sd is None else f"{row.sd:.17g}",
            f"{row.minimum:.17g}",
            f"{row.maximum:.17g}",
        ))
