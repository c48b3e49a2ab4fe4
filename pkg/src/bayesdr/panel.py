"""Longitudinal panel containers, CSV ingestion and column transforms.

A panel is a collection of unit trajectories: repeated (outcome, dose,
covariates) measurements indexed by an ordinal time. Everything here is
immutable after construction so datasets can be shared freely across
parallel workers.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Trajectory",
    "PanelDataset",
    "PanelArrays",
    "Transform",
    "SchemaError",
    "PanelParseError",
    "IntegrityError",
    "parse_panel_csv",
    "write_panel_csv",
    "apply_transform",
    "pooled_rows",
]

FAMILIES = ("gaussian_identity", "poisson_log")


class SchemaError(ValueError):
    """A required column is missing from the CSV header."""


class PanelParseError(ValueError):
    """A cell could not be parsed as a number."""


class IntegrityError(ValueError):
    """Structural violation: duplicate keys, ragged rows, bad outcome values."""


@dataclass(frozen=True)
class Trajectory:
    """One unit's repeated measurements, sorted by time.

    Parameters
    ----------
    unit_id : str
        Opaque unit identifier.
    times : ndarray of int
        Strictly increasing ordinal time indices.
    outcomes : ndarray of float
        Response at each time. Counts (non-negative integers) when the
        owning dataset has the Poisson family.
    doses : ndarray of float
        Continuous treatment at each time.
    covariates : ndarray, shape (K, P)
        Covariate row per time; P may be zero.
    """

    unit_id: str
    times: np.ndarray
    outcomes: np.ndarray
    doses: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=int)
        outcomes = np.asarray(self.outcomes, dtype=float)
        doses = np.asarray(self.doses, dtype=float)
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim != 2:
            covariates = covariates.reshape(len(times), -1)
        k = len(times)
        if k < 1:
            raise IntegrityError(f"unit {self.unit_id!r}: empty trajectory")
        if not (len(outcomes) == len(doses) == covariates.shape[0] == k):
            raise IntegrityError(
                f"unit {self.unit_id!r}: ragged lengths "
                f"(times={k}, outcomes={len(outcomes)}, doses={len(doses)}, "
                f"covariates={covariates.shape[0]})"
            )
        if k > 1 and not np.all(np.diff(times) > 0):
            raise IntegrityError(f"unit {self.unit_id!r}: times not strictly increasing")
        for arr, name in ((outcomes, "outcomes"), (doses, "doses"), (covariates, "covariates")):
            if not np.all(np.isfinite(arr)):
                raise IntegrityError(f"unit {self.unit_id!r}: non-finite value in {name}")
        for name, value in (("times", times), ("outcomes", outcomes),
                            ("doses", doses), ("covariates", covariates)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class PanelArrays:
    """Pooled row-major view of a dataset (one row per unit-time).

    Rows are ordered by unit (dataset order) then time. ``starts`` has
    length n+1; unit i owns rows ``starts[i]:starts[i+1]``.
    """

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    times: np.ndarray
    row_unit: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def n_units(self) -> int:
        return len(self.lengths)

    def rows_for_units(self, units: np.ndarray) -> np.ndarray:
        """Row indices of the given units, concatenated in argument order.

        Vectorized grouped-arange; used heavily when materializing
        resampled datasets.
        """
        units = np.asarray(units, dtype=np.intp)
        lens = self.lengths[units]
        total = int(lens.sum())
        if total == 0:
            return np.empty(0, dtype=np.intp)
        offsets = np.repeat(self.starts[units], lens)
        within = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
        return offsets + within


@dataclass(frozen=True)
class PanelDataset:
    """A longitudinal sample: n unit trajectories sharing one link family.

    Invariants enforced at construction: unique unit ids, a common
    covariate dimension, and integer non-negative outcomes under the
    Poisson family.
    """

    trajectories: tuple[Trajectory, ...]
    family: str
    covariate_names: tuple[str, ...]
    _arrays_cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if len(self.trajectories) < 1:
            raise IntegrityError("dataset has no trajectories")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        p = len(self.covariate_names)
        ids = set()
        for traj in self.trajectories:
            if traj.unit_id in ids:
                raise IntegrityError(f"duplicate unit_id {traj.unit_id!r}")
            ids.add(traj.unit_id)
            if traj.n_covariates != p:
                raise IntegrityError(
                    f"unit {traj.unit_id!r}: covariate dimension {traj.n_covariates} != {p}"
                )
            if self.family == "poisson_log":
                y = traj.outcomes
                if np.any(y < 0) or np.any(y != np.floor(y)):
                    raise IntegrityError(
                        f"unit {traj.unit_id!r}: Poisson outcomes must be integers >= 0"
                    )

    @property
    def n_units(self) -> int:
        return len(self.trajectories)

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    @property
    def unit_ids(self) -> tuple[str, ...]:
        return tuple(t.unit_id for t in self.trajectories)

    def arrays(self) -> PanelArrays:
        """Pooled numpy view, built once and cached."""
        if not self._arrays_cache:
            lengths = np.array([t.n_times for t in self.trajectories], dtype=np.intp)
            starts = np.concatenate([[0], np.cumsum(lengths)]).astype(np.intp)
            y = np.concatenate([t.outcomes for t in self.trajectories])
            d = np.concatenate([t.doses for t in self.trajectories])
            x = np.concatenate([t.covariates for t in self.trajectories], axis=0)
            times = np.concatenate([t.times for t in self.trajectories])
            row_unit = np.repeat(np.arange(self.n_units, dtype=np.intp), lengths)
            for arr in (y, d, x, times, row_unit, starts, lengths):
                arr.setflags(write=False)
            self._arrays_cache.append(
                PanelArrays(y=y, d=d, x=x, times=times, row_unit=row_unit,
                            starts=starts, lengths=lengths)
            )
        return self._arrays_cache[0]


@dataclass(frozen=True)
class Transform:
    """Elementwise column transform: identity, log, or log1p.

    log requires strictly positive inputs, log1p inputs > -1.
    """

    kind: str

    KINDS = ("identity", "log", "log1p")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown transform {self.kind!r}; expected one of {self.KINDS}")

    def __call__(self, values: np.ndarray, column: str = "<column>") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.kind == "identity":
            return values.copy()
        lim = 0.0 if self.kind == "log" else -1.0
        bad = np.nonzero(values <= lim)[0]
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"{self.kind} transform of column {column!r} undefined for value "
                f"{values[i]!r} at row {i}"
            )
        return np.log(values) if self.kind == "log" else np.log1p(values)


def _parse_cell(raw: str, column: str, line_no: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise PanelParseError(
            f"line {line_no}: cannot parse {column}={raw!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise PanelParseError(f"line {line_no}: non-finite {column}={raw!r}")
    return value


def parse_panel_csv(path, schema: dict, family: str) -> PanelDataset:
    """Read a panel from CSV: one row per (unit, time), header required.

    Parameters
    ----------
    path : str or Path
        CSV file, UTF-8, comma separated.
    schema : dict
        Column-name map with keys ``unit_id``, ``time``, ``outcome``,
        ``dose`` and ``covariates`` (a list, possibly empty).
    family : str
        "gaussian_identity" or "poisson_log".

    Rows are grouped by unit (order of first appearance) and sorted by
    time within unit. Extra columns are ignored with a warning; a
    duplicated (unit, time) pair is an integrity error.
    """
    needed = {k: schema[k] for k in ("unit_id", "time", "outcome", "dose")}
    cov_cols = list(schema.get("covariates", []))

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        col_idx = {name: i for i, name in enumerate(header)}
        for role, col in list(needed.items()) + [("covariate", c) for c in cov_cols]:
            if col not in col_idx:
                raise SchemaError(f"{path}: missing column {col!r} (role: {role})")
        used = set(needed.values()) | set(cov_cols)
        extra = [c for c in header if c not in used]
        if extra:
            warnings.warn(f"{path}: ignoring extra columns {extra}", stacklevel=2)

        per_unit: dict[str, list] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PanelParseError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            uid = row[col_idx[needed["unit_id"]]]
            t = _parse_cell(row[col_idx[needed["time"]]], needed["time"], line_no)
            if t != int(t):
                raise PanelParseError(f"line {line_no}: time {t!r} is not an integer")
            y = _parse_cell(row[col_idx[needed["outcome"]]], needed["outcome"], line_no)
            d = _parse_cell(row[col_idx[needed["dose"]]], needed["dose"], line_no)
            xs = [_parse_cell(row[col_idx[c]], c, line_no) for c in cov_cols]
            per_unit.setdefault(uid, []).append((int(t), y, d, xs))

    if not per_unit:
        raise IntegrityError(f"{path}: no data rows")

    trajectories = []
    for uid, rows in per_unit.items():
        rows.sort(key=lambda r: r[0])
        times = [r[0] for r in rows]
        if len(set(times)) != len(times):
            dup = next(t for i, t in enumerate(times) if t in times[:i])
            raise IntegrityError(f"duplicate (unit_id={uid!r}, time={dup}) row")
        trajectories.append(
            Trajectory(
                unit_id=uid,
                times=np.array(times, dtype=int),
                outcomes=np.array([r[1] for r in rows]),
                doses=np.array([r[2] for r in rows]),
                covariates=np.array([r[3] for r in rows], dtype=float).reshape(len(rows), -1),
            )
        )
    return PanelDataset(trajectories=tuple(trajectories), family=family,
                        covariate_names=tuple(cov_cols))


def write_panel_csv(data: PanelDataset, path, schema: dict) -> None:
    """Write a panel back to CSV with round-trip-safe number formatting.

    Uses 17 significant digits so parse_panel_csv(write_panel_csv(d))
    reproduces every value exactly.
    """
    cov_cols = list(schema.get("covariates", []))
    if len(cov_cols) != data.n_covariates:
        raise SchemaError(
            f"schema names {len(cov_cols)} covariates, dataset has {data.n_covariates}"
        )
    header = [schema["unit_id"], schema["time"], schema["outcome"], schema["dose"], *cov_cols]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for traj in data.trajectories:
            for k in range(traj.n_times):
                writer.writerow(
                    [traj.unit_id, int(traj.times[k]),
                     format(traj.outcomes[k], ".17g"), format(traj.doses[k], ".17g")]
                    + [format(v, ".17g") for v in traj.covariates[k]]
                )


def apply_transform(data: PanelDataset, column: str, t: Transform) -> PanelDataset:
    """Return a new dataset with one column transformed elementwise.

    ``column`` is "outcome", "dose", or a covariate name. The input
    dataset is never modified. Domain violations raise with the
    offending value and row.
    """
    if column not in ("outcome", "dose") and column not in data.covariate_names:
        raise KeyError(f"unknown column {column!r}")
    new_trajs = []
    for traj in data.trajectories:
        if column == "outcome":
            new_trajs.append(
                Trajectory(traj.unit_id, traj.times, t(traj.outcomes, column),
                           traj.doses, traj.covariates)
            )
        elif column == "dose":
            new_trajs.append(
                Trajectory(traj.unit_id, traj.times, traj.outcomes,
                           t(traj.doses, column), traj.covariates)
            )
        else:
            j = data.covariate_names.index(column)
            cov = np.array(traj.covariates)
            cov[:, j] = t(cov[:, j], column)
            new_trajs.append(
                Trajectory(traj.unit_id, traj.times, traj.outcomes, traj.doses, cov)
            )
    family = data.family
    if column == "outcome" and family == "poisson_log" and t.kind != "identity":
        family = "gaussian_identity"  # transformed counts are no longer counts
    return PanelDataset(trajectories=tuple(new_trajs), family=family,
                        covariate_names=data.covariate_names)


def pooled_rows(data: PanelDataset):
    """Iterate rows as (unit_index, time, y, d, x) in unit-then-time order."""
    arr = data.arrays()
    return [
        (int(arr.row_unit[i]), int(arr.times[i]), float(arr.y[i]), float(arr.d[i]),
         arr.x[i].copy())
        for i in range(arr.n_rows)
    ]
