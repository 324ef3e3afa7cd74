"""Right-censored survival datasets and their CSV form.

CSV layout: ``time,status,z1..zp,x1..xd`` (header required).  Linear covariates are
the columns whose name starts with ``z``, nonparametric ones those starting with
``x``, unless explicit column lists are given.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass
class SurvivalDataset:
    time: np.ndarray
    status: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    z_names: list = field(default_factory=list)
    x_names: list = field(default_factory=list)
    split: str = "train"

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float).reshape(-1)
        self.status = np.asarray(self.status, dtype=float).reshape(-1)
        n = self.time.shape[0]
        self.Z = np.asarray(self.Z, dtype=float).reshape(n, -1)
        self.X = np.asarray(self.X, dtype=float).reshape(n, -1)
        if self.status.shape[0] != n:
            raise DataError("time and status lengths differ")
        if self.X.shape[1] < 1:
            raise DataError("need at least one nonparametric covariate")
        for name, arr in (("time", self.time), ("status", self.status), ("Z", self.Z), ("X", self.X)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite entries in {name}")
        if np.any(self.time <= 0):
            raise DataError("observed times must be positive")
        if np.any((self.status != 0) & (self.status != 1)):
            raise DataError("status must be 0 or 1")
        if not self.z_names:
            self.z_names = [f"z{j + 1}" for j in range(self.p)]
        if not self.x_names:
            self.x_names = [f"x{j + 1}" for j in range(self.d)]

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, idx, split: str | None = None) -> "SurvivalDataset":
        idx = np.asarray(idx)
        return SurvivalDataset(self.time[idx], self.status[idx], self.Z[idx], self.X[idx],
                               list(self.z_names), list(self.x_names), split or self.split)

    def censoring_rate(self) -> float:
        return float(1.0 - self.status.mean())

    def equals(self, other: "SurvivalDataset") -> bool:
        return (self.z_names == other.z_names and self.x_names == other.x_names
                and all(np.array_equal(a, b) for a, b in
                        ((self.time, other.time), (self.status, other.status),
                         (self.Z, other.Z), (self.X, other.X))))


def split_indices(n: int, fractions, rng) -> list:
    """Seeded shuffle followed by contiguous cuts; sizes are rounded so they sum to ``n``."""
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions <= 0) or not math.isclose(fractions.sum(), 1.0, abs_tol=1e-9):
        raise ValueError(f"split fractions must be positive and sum to 1, got {fractions}")
    perm = np.random.default_rng(rng).permutation(n)
    cuts = np.round(np.cumsum(fractions)[:-1] * n).astype(int)
    return np.split(perm, cuts)


def split(data: SurvivalDataset, fractions=(0.8, 0.2), rng=0):
    names = ["train", "validation", "test"][:len(fractions)]
    return tuple(data.subset(np.sort(ix), nm)
                 for ix, nm in zip(split_indices(data.n, fractions, rng), names))


def read_csv(path, z_columns=None, x_columns=None, time_column="time",
             status_column="status") -> SurvivalDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such data file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in (time_column, status_column):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r}")
        if z_columns is None:
            z_columns = [h for h in header if h.startswith("z")]
        if x_columns is None:
            x_columns = [h for h in header if h.startswith("x")]
        missing = [c for c in list(z_columns) + list(x_columns) if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        cols = [time_column, status_column] + list(z_columns) + list(x_columns)
        pos = [header.index(c) for c in cols]
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(row[i]) for i in pos]
            except ValueError:
                raise DataError(f"{path}, line {line}: non-numeric or missing value") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}, line {line}: missing or non-finite value")
            if vals[0] <= 0:
                raise DataError(f"{path}, line {line}: time must be positive")
            if vals[1] not in (0.0, 1.0):
                raise DataError(f"{path}, line {line}: status must be 0 or 1")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    p = len(z_columns)
    return SurvivalDataset(arr[:, 0], arr[:, 1], arr[:, 2:2 + p], arr[:, 2 + p:],
                           list(z_columns), list(x_columns))


def write_csv(data: SurvivalDataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "status"] + data.z_names + data.x_names)
        for i in range(data.n):
            w.writerow([repr(float(data.time[i])), int(data.status[i])]
                       + [repr(float(v)) for v in data.Z[i]] + [repr(float(v)) for v in data.X[i]])
