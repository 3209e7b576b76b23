"""Two-arm mixed-type datasets with missing cells and censored outcomes.

Categorical cells are stored as level indices with ``-1`` for missing, and
continuous cells as floats with ``NaN`` for missing. Survival outcomes are
kept on the log scale once loaded.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Column",
    "CovariateSchema",
    "CensoredOutcome",
    "MixedDataset",
    "StudyData",
    "DataError",
    "load_csv",
    "write_csv",
    "merge_historical",
    "validate_ratio",
    "standardize",
    "TREATMENT",
    "RWD",
]

TREATMENT = 1
RWD = 2
DEFAULT_NA = ("", "NA")


class DataError(ValueError):
    """Raised for malformed inputs; the message names the offending cell."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # "categorical" or "continuous"
    num_levels: int = 0

    def __post_init__(self):
        if self.kind not in ("categorical", "continuous"):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and self.num_levels < 2:
            raise DataError(f"column {self.name!r}: categorical needs num_levels >= 2")


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered covariate columns; fixed for the life of a study."""

    columns: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")

    @classmethod
    def from_spec(cls, spec: Sequence[tuple]) -> "CovariateSchema":
        """Build from ``[(name, num_levels_or_0), ...]``; 0 marks continuous."""
        cols = []
        for name, levels in spec:
            if levels:
                cols.append(Column(name, "categorical", int(levels)))
            else:
                cols.append(Column(name, "continuous"))
        return cls(tuple(cols))

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    @property
    def categorical(self) -> list:
        return [c for c in self.columns if c.kind == "categorical"]

    @property
    def continuous(self) -> list:
        return [c for c in self.columns if c.kind == "continuous"]

    @property
    def num_levels(self) -> list:
        return [c.num_levels for c in self.categorical]

    def to_spec(self) -> list:
        return [(c.name, c.num_levels if c.kind == "categorical" else 0) for c in self.columns]


@dataclass
class CensoredOutcome:
    """Outcomes with optional interval censoring.

    Attributes
    ----------
    y : ndarray
        Observed value, or the censoring bound for censored rows
        (log scale in survival mode).
    lower, upper : ndarray
        Censoring interval; ``(y, y)`` for observed rows.
    observed : ndarray of bool
    log_scale : bool
        True when ``y`` holds log survival times.
    """

    y: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    observed: np.ndarray
    log_scale: bool = False

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.observed = np.asarray(self.observed, dtype=bool)
        c = ~self.observed
        if np.any(self.lower[c] >= self.upper[c]):
            raise DataError("censoring intervals must satisfy lower < upper")

    def __len__(self):
        return self.y.size

    @classmethod
    def fully_observed(cls, y, log_scale=False) -> "CensoredOutcome":
        y = np.asarray(y, dtype=float)
        return cls(y, y.copy(), y.copy(), np.ones(y.size, bool), log_scale)

    @classmethod
    def right_censored(cls, time, event, log_transform=True) -> "CensoredOutcome":
        """Survival data; ``event`` is 1 for an observed death, 0 if censored."""
        time = np.asarray(time, dtype=float)
        if np.any(~(time > 0)) and log_transform:
            raise DataError("survival times must be positive")
        y = np.log(time) if log_transform else time
        obs = np.asarray(event).astype(bool)
        lower = y.copy()
        upper = np.where(obs, y, np.inf)
        return cls(y, lower, upper, obs, log_transform)

    def subset(self, idx) -> "CensoredOutcome":
        return CensoredOutcome(self.y[idx], self.lower[idx], self.upper[idx],
                               self.observed[idx], self.log_scale)

    @staticmethod
    def concat(items: Sequence["CensoredOutcome"]) -> "CensoredOutcome":
        return CensoredOutcome(np.concatenate([o.y for o in items]),
                               np.concatenate([o.lower for o in items]),
                               np.concatenate([o.upper for o in items]),
                               np.concatenate([o.observed for o in items]),
                               items[0].log_scale)


@dataclass
class MixedDataset:
    """One arm's covariates (and optionally outcomes) with provenance."""

    schema: CovariateSchema
    arm: int
    cat: np.ndarray
    cont: np.ndarray
    outcome: CensoredOutcome | None = None
    source: np.ndarray | None = None
    row_index: np.ndarray | None = None

    def __post_init__(self):
        n = np.shape(self.cat)[0]
        self.cat = np.asarray(self.cat, dtype=np.int64).reshape(n, len(self.schema.categorical))
        self.cont = np.asarray(self.cont, dtype=float).reshape(n, len(self.schema.continuous))
        if self.arm not in (TREATMENT, RWD):
            raise DataError(f"arm must be {TREATMENT} or {RWD}")
        for l, col in enumerate(self.schema.categorical):
            v = self.cat[:, l]
            bad = np.flatnonzero((v < -1) | (v >= col.num_levels))
            if bad.size:
                raise DataError(f"row {bad[0]}, column {col.name!r}: level {v[bad[0]]} "
                                f"outside [0, {col.num_levels})")
        if self.source is None:
            self.source = np.array(["data"] * n, dtype=object)
        if self.row_index is None:
            self.row_index = np.arange(n)
        self.source = np.asarray(self.source, dtype=object)
        self.row_index = np.asarray(self.row_index, dtype=np.int64)
        if self.outcome is not None and len(self.outcome) != n:
            raise DataError("outcome length does not match covariate rows")

    @property
    def n(self) -> int:
        return self.cat.shape[0]

    def missing_mask(self) -> np.ndarray:
        """Boolean (n, p) mask in schema column order; True marks Missing."""
        mask = np.zeros((self.n, len(self.schema.columns)), dtype=bool)
        ic = iq = 0
        for j, col in enumerate(self.schema.columns):
            if col.kind == "categorical":
                mask[:, j] = self.cat[:, ic] < 0
                ic += 1
            else:
                mask[:, j] = np.isnan(self.cont[:, iq])
                iq += 1
        return mask

    def subset(self, idx) -> "MixedDataset":
        idx = np.asarray(idx)
        return replace(self, cat=self.cat[idx], cont=self.cont[idx],
                       outcome=None if self.outcome is None else self.outcome.subset(idx),
                       source=self.source[idx], row_index=self.row_index[idx])

    def with_outcome(self, outcome: CensoredOutcome | None) -> "MixedDataset":
        return replace(self, outcome=outcome)


@dataclass
class StudyData:
    """Treatment arm and RWD sharing one schema."""

    treatment: MixedDataset
    rwd: MixedDataset
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.treatment.schema != self.rwd.schema:
            raise DataError("treatment and RWD must share the same schema")
        if self.treatment.arm != TREATMENT or self.rwd.arm != RWD:
            raise DataError("arm labels do not match their slots")

    @property
    def schema(self) -> CovariateSchema:
        return self.treatment.schema

    @property
    def n1(self) -> int:
        return self.treatment.n

    @property
    def n2(self) -> int:
        return self.rwd.n

    @property
    def has_outcome(self) -> bool:
        return self.treatment.outcome is not None and self.rwd.outcome is not None

    @property
    def survival(self) -> bool:
        return self.has_outcome and self.treatment.outcome.log_scale


# -- CSV ingestion ---------------------------------------------------------

def _parse_cell(text, col, r, na):
    t = text.strip()
    if t in na:
        return None
    try:
        if col.kind == "categorical":
            v = float(t)
            if v != int(v):
                raise ValueError
            v = int(v)
            if not 0 <= v < col.num_levels:
                raise DataError(f"row {r}, column {col.name!r}: level {v} outside "
                                f"[0, {col.num_levels})")
            return v
        v = float(t)
        if not math.isfinite(v):
            raise ValueError
        return v
    except DataError:
        raise
    except ValueError:
        raise DataError(f"row {r}, column {col.name!r}: cannot parse {text!r}") from None


def load_csv(path, schema: CovariateSchema, arm: int, outcome_columns: Sequence[str] | None = None,
             survival: bool = False, na_values: Iterable[str] = DEFAULT_NA,
             source: str | None = None) -> MixedDataset:
    """Read one arm from a CSV file.

    Parameters
    ----------
    path : path-like
    schema : CovariateSchema
    arm : int
        ``TREATMENT`` (1) or ``RWD`` (2).
    outcome_columns : sequence of str, optional
        ``(y,)`` or ``(y, status)``. ``status`` is 1 for observed and 0 for
        right-censored. With ``survival=True`` the values are positive times
        and are log-transformed.
    survival : bool
    na_values : iterable of str
        Sentinels read as Missing.
    source : str, optional
        Provenance tag; defaults to the file name.

    Returns
    -------
    MixedDataset
        Carries a ``load_report`` dict attribute with row and missing counts.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    na = set(na_values)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if any(c.strip() for c in r)]
    known = set(schema.names) | set(outcome_columns or ())
    unknown = [h for h in header if h not in known and h not in ("source", "row_index")]
    if unknown:
        raise DataError(f"{path}: unknown column {unknown[0]!r}")
    missing_cols = [c for c in list(schema.names) + list(outcome_columns or ()) if c not in header]
    if missing_cols:
        raise DataError(f"{path}: required column {missing_cols[0]!r} not in header")
    pos = {h: i for i, h in enumerate(header)}

    n = len(rows)
    cat = np.full((n, len(schema.categorical)), -1, dtype=np.int64)
    cont = np.full((n, len(schema.continuous)), np.nan)
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        ic = iq = 0
        for col in schema.columns:
            v = _parse_cell(row[pos[col.name]], col, r, na)
            if col.kind == "categorical":
                if v is not None:
                    cat[r - 1, ic] = v
                ic += 1
            else:
                if v is not None:
                    cont[r - 1, iq] = v
                iq += 1

    outcome = None
    if outcome_columns:
        ycol = outcome_columns[0]
        yv = np.empty(n)
        status = np.ones(n, dtype=np.int64)
        for r, row in enumerate(rows, start=1):
            t = row[pos[ycol]].strip()
            try:
                yv[r - 1] = float(t)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {ycol!r}: cannot parse {t!r}") from None
            if survival and not yv[r - 1] > 0:
                raise DataError(f"{path}: row {r}, column {ycol!r}: survival time must be "
                                f"positive, got {t}")
            if len(outcome_columns) > 1:
                s = row[pos[outcome_columns[1]]].strip()
                if s not in ("0", "1"):
                    raise DataError(f"{path}: row {r}, column {outcome_columns[1]!r}: "
                                    f"status must be 0 or 1, got {s!r}")
                status[r - 1] = int(s)
        if survival:
            outcome = CensoredOutcome.right_censored(yv, status, log_transform=True)
        else:
            y = yv
            outcome = CensoredOutcome(y, y.copy(), np.where(status == 1, y, np.inf),
                                      status == 1, False)

    if "row_index" in pos:
        row_index = np.array([int(r[pos["row_index"]]) for r in rows], dtype=np.int64)
    else:
        row_index = np.arange(n)
    if "source" in pos:
        src = np.array([r[pos["source"]] for r in rows], dtype=object)
    else:
        src = np.array([source or path.name] * n, dtype=object)
    ds = MixedDataset(schema, arm, cat, cont, outcome, src, row_index)
    mask = ds.missing_mask()
    ds.load_report = {
        "path": str(path),
        "rows": n,
        "missing_per_column": dict(zip(schema.names, mask.sum(axis=0).tolist())),
        "missing_total": int(mask.sum()),
    }
    logger.info("loaded %s: %d rows, %d missing cells", path, n, int(mask.sum()))
    return ds


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(ds: MixedDataset, path, outcome_columns: Sequence[str] = ("y", "status"),
              na: str = "NA", provenance: bool = True) -> None:
    """Write a dataset in the dialect accepted by :func:`load_csv`.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    path = Path(path)
    header = list(ds.schema.names)
    if ds.outcome is not None:
        header += list(outcome_columns)
    if provenance:
        header += ["source", "row_index"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n):
            row = []
            ic = iq = 0
            for col in ds.schema.columns:
                if col.kind == "categorical":
                    v = ds.cat[i, ic]
                    row.append(na if v < 0 else str(int(v)))
                    ic += 1
                else:
                    v = ds.cont[i, iq]
                    row.append(na if np.isnan(v) else _fmt(v))
                    iq += 1
            if ds.outcome is not None:
                o = ds.outcome
                y = math.exp(o.y[i]) if o.log_scale else o.y[i]
                row.append(_fmt(y))
                row.append("1" if o.observed[i] else "0")
            if provenance:
                row += [str(ds.source[i]), str(int(ds.row_index[i]))]
            w.writerow(row)


# -- combining and checking ------------------------------------------------

def merge_historical(datasets: Sequence[MixedDataset]) -> MixedDataset:
    """Row-concatenate several RWD sources into one, keeping provenance."""
    if not datasets:
        raise DataError("no datasets to merge")
    base = datasets[0].schema
    for k, d in enumerate(datasets):
        if d.arm != RWD:
            raise DataError(f"dataset {k} is not an RWD arm")
        if d.schema != base:
            for a, b in zip(base.columns, d.schema.columns):
                if a != b:
                    raise DataError(f"dataset {k}: schema mismatch at column {a.name!r}")
            raise DataError(f"dataset {k}: schema mismatch (column count)")
    if len(datasets) == 1:
        return datasets[0]
    has_y = [d.outcome is not None for d in datasets]
    if any(has_y) and not all(has_y):
        raise DataError("either all or none of the merged datasets must carry outcomes")
    outcome = CensoredOutcome.concat([d.outcome for d in datasets]) if all(has_y) else None
    return MixedDataset(base, RWD,
                        np.concatenate([d.cat for d in datasets]),
                        np.concatenate([d.cont for d in datasets]),
                        outcome,
                        np.concatenate([d.source for d in datasets]),
                        np.concatenate([d.row_index for d in datasets]))


def validate_ratio(study: StudyData) -> dict:
    """Report n1, n2 and n2/n1; warn when the RWD is smaller than the trial."""
    n1, n2 = study.n1, study.n2
    ratio = n2 / n1 if n1 else math.inf
    out = {"n1": n1, "n2": n2, "ratio": ratio, "warnings": []}
    if ratio < 1:
        msg = f"RWD smaller than treatment arm (n2/n1 = {ratio:.3g})"
        out["warnings"].append(msg)
        warnings.warn(msg, stacklevel=2)
    return out


def standardize(study: StudyData) -> tuple[StudyData, dict]:
    """Center and scale continuous covariates with pooled-arm moments.

    Returns the transformed study and the ``{"mean", "sd"}`` used.
    """
    pooled = np.vstack([study.treatment.cont, study.rwd.cont])
    mean = np.nanmean(pooled, axis=0) if pooled.size else np.zeros(0)
    sd = np.nanstd(pooled, axis=0, ddof=1) if pooled.size else np.ones(0)
    sd = np.where(sd > 0, sd, 1.0)
    t = replace(study.treatment, cont=(study.treatment.cont - mean) / sd)
    r = replace(study.rwd, cont=(study.rwd.cont - mean) / sd)
    return StudyData(t, r, dict(study.meta)), {"mean": mean, "sd": sd}
