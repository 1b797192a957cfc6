"""Observation container and the W1..Wd,A,Y CSV interchange format."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO

import numpy as np


def format_float(x: float) -> str:
    """Serialize with 17 significant digits (lossless float64 round trip)."""
    return format(float(x), ".17g")


@dataclass
class Dataset:
    """One observational sample: covariates, binary treatment, outcome."""

    W: np.ndarray
    A: np.ndarray
    Y: np.ndarray

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.W.ndim != 2:
            raise ValueError("W must be 2-d")
        n = self.W.shape[0]
        if self.A.shape != (n,) or self.Y.shape != (n,):
            raise ValueError("A and Y must match the number of rows of W")
        if not (
            np.all(np.isfinite(self.W))
            and np.all(np.isfinite(self.A))
            and np.all(np.isfinite(self.Y))
        ):
            raise ValueError("data must be finite")
        if not np.all((self.A == 0.0) | (self.A == 1.0)):
            raise ValueError("treatment must be coded 0/1")

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.W.shape[1]


def csv_header(n_covariates: int) -> list[str]:
    return [f"W{j + 1}" for j in range(n_covariates)] + ["A", "Y"]


def write_dataset_csv(data: Dataset, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(csv_header(data.n_covariates))
    for i in range(data.n):
        row = [format_float(v) for v in data.W[i]]
        row.append(format_float(data.A[i]))
        row.append(format_float(data.Y[i]))
        writer.writerow(row)


def read_dataset_csv(fh: IO[str]) -> Dataset:
    """Parse the W1..Wd,A,Y format; errors name the offending (1-based) row."""
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty file: missing header") from None
    header = [h.strip() for h in header]
    if len(header) < 3 or header[-2:] != ["A", "Y"]:
        raise ValueError("header must be W1..Wd,A,Y")
    d = len(header) - 2
    if header[:d] != [f"W{j + 1}" for j in range(d)]:
        raise ValueError("header must be W1..Wd,A,Y")
    Ws: list[list[float]] = []
    As: list[float] = []
    Ys: list[float] = []
    for i, row in enumerate(reader, start=1):
        if len(row) != d + 2:
            raise ValueError(f"row {i}: expected {d + 2} fields, got {len(row)}")
        try:
            values = [float(field) for field in row]
        except ValueError:
            raise ValueError(f"row {i}: non-numeric field") from None
        if not np.all(np.isfinite(values)):
            raise ValueError(f"row {i}: non-finite value")
        a = values[d]
        if a not in (0.0, 1.0):
            raise ValueError(f"row {i}: treatment must be 0 or 1, got {row[d]}")
        Ws.append(values[:d])
        As.append(a)
        Ys.append(values[d + 1])
    if not Ws:
        raise ValueError("no data rows")
    return Dataset(W=np.array(Ws), A=np.array(As), Y=np.array(Ys))
