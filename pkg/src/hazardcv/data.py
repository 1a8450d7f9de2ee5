"""Occurrence/exposure samples on a uniform time grid.

Integrals against the exposure and counting processes are Riemann sums over
cell midpoints: ``int f(s) Y(s) ds ~ sum_r f(t_r) Y_r`` with ``Y_r`` the
exposure already integrated over cell ``r`` (individual-time units) and
``int f(s) dN(s) ~ sum_r f(t_r) O_r``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "DataError",
    "IngestionError",
    "ParseError",
    "ValidationError",
    "IndividualRecord",
    "GridSample",
    "WeightScheme",
    "aggregate",
    "load_grid_csv",
    "load_records_csv",
    "write_grid_csv",
]

SPACING_RTOL = 1e-9


class DataError(ValueError):
    pass


class IngestionError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(DataError):
    pass


@dataclass(frozen=True)
class IndividualRecord:
    entry: float
    exit: float
    event: bool


@dataclass(frozen=True, eq=False)
class GridSample:
    """Aggregated occurrences and exposures on ``R`` cells of width ``delta``.

    Cell ``r`` (0-based) is ``[t0 + r*delta, t0 + (r+1)*delta)`` and its grid
    point is the midpoint. ``t_end`` is the end of the study window; cells may
    stop short of it (the simulation grid uses ``delta = (t_end - t0)/(R+1)``).
    ``fractional=True`` admits real-valued occurrences, used for noiseless
    surrogates where ``O_r`` is replaced by ``alpha(t_r) * Y_r``.
    """

    t0: float
    t_end: float
    occurrences: np.ndarray
    exposures: np.ndarray
    n: int
    delta: Optional[float] = None
    fractional: bool = False

    def __post_init__(self):
        occ = np.asarray(self.occurrences)
        if occ.size and not np.all(np.isfinite(occ)):
            raise ValidationError("occurrences must be finite")
        if self.fractional:
            occ = occ.astype(float)
        else:
            if occ.size and np.any(occ != np.round(occ)):
                raise ValidationError("occurrences must be integers")
            occ = occ.astype(np.int64)
        exp = np.asarray(self.exposures, dtype=float)
        if occ.ndim != 1 or exp.ndim != 1 or occ.shape != exp.shape:
            raise ValidationError("occurrences and exposures must be 1-d of equal length")
        R = occ.size
        if R == 0:
            raise ValidationError("empty sample")
        if not (np.isfinite(self.t0) and np.isfinite(self.t_end) and self.t_end > self.t0):
            raise ValidationError("study window must be a finite interval")
        delta = (self.t_end - self.t0) / R if self.delta is None else float(self.delta)
        if not delta > 0 or R * delta > (self.t_end - self.t0) * (1 + SPACING_RTOL):
            raise ValidationError("grid does not fit inside the study window")
        if np.any(occ < 0):
            raise ValidationError(f"negative occurrences at row {int(np.argmax(occ < 0))}")
        if not np.all(np.isfinite(exp)) or np.any(exp < 0):
            raise ValidationError("exposures must be finite and non-negative")
        bad = np.flatnonzero((occ > 0) & (exp == 0))
        if bad.size:
            raise ValidationError(f"occurrences without exposure at row {int(bad[0])}")
        if int(self.n) < 1:
            raise ValidationError("n must be positive")
        if not self.fractional and occ.sum() > int(self.n):
            raise ValidationError(f"{int(occ.sum())} occurrences exceed n = {int(self.n)}")
        occ.setflags(write=False)
        exp.setflags(write=False)
        object.__setattr__(self, "occurrences", occ)
        object.__setattr__(self, "exposures", exp)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", delta)

    @property
    def R(self) -> int:
        return self.occurrences.size

    @cached_property
    def times(self) -> np.ndarray:
        t = self.t0 + (np.arange(self.R) + 0.5) * self.delta
        t.setflags(write=False)
        return t

    @cached_property
    def lags(self) -> np.ndarray:
        """``lags[r, q] = t_q - t_r`` (source time minus estimation time)."""
        t = self.times
        d = t[None, :] - t[:, None]
        d.setflags(write=False)
        return d

    def replace(self, occurrences=None, exposures=None, n=None, fractional=None) -> "GridSample":
        return GridSample(
            self.t0,
            self.t_end,
            self.occurrences if occurrences is None else occurrences,
            self.exposures if exposures is None else exposures,
            self.n if n is None else n,
            self.delta,
            self.fractional if fractional is None else fractional,
        )

    def noiseless(self, hazard) -> "GridSample":
        """Surrogate with ``O_r = hazard(t_r) * Y_r`` (real-valued occurrences)."""
        values = hazard(self.times) if callable(hazard) else np.asarray(hazard, dtype=float)
        return self.replace(occurrences=np.asarray(values, dtype=float) * self.exposures, fractional=True)


@dataclass(frozen=True)
class WeightScheme:
    """Weights ``w_r`` entering scores and ISE as ``sum_r f(t_r) Y_r w_r``.

    ``unit_product`` realizes ``w(s) Y(s) = 1`` where exposure is positive:
    ``w_r = delta / Y_r``, so the exposure-weighted sum becomes a plain
    integral over covered time.
    """

    kind: str = "unit_product"
    threshold: float = 0.0
    custom: Optional[tuple[float, ...]] = field(default=None)

    @classmethod
    def unit_product(cls) -> "WeightScheme":
        return cls("unit_product")

    @classmethod
    def exposure_significant(cls, threshold: float) -> "WeightScheme":
        return cls("exposure_significant", threshold=float(threshold))

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "WeightScheme":
        vals = tuple(float(v) for v in values)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValidationError("weights must be finite and non-negative")
        return cls("custom", custom=vals)

    def values(self, sample: GridSample) -> np.ndarray:
        y = sample.exposures
        if self.kind == "unit_product":
            w = np.zeros(sample.R)
            pos = y > 0
            w[pos] = sample.delta / y[pos]
            return w
        if self.kind == "exposure_significant":
            return (y > self.threshold).astype(float)
        if self.kind == "custom":
            if self.custom is None or len(self.custom) != sample.R:
                raise ValidationError(f"custom weights need {sample.R} values")
            return np.asarray(self.custom, dtype=float)
        raise ValidationError(f"unknown weight scheme {self.kind!r}")


def aggregate(records: Iterable[IndividualRecord], window: tuple[float, float], R: int) -> GridSample:
    """Bin individual ``(entry, exit, event)`` records on ``R`` equal cells.

    Exposure is the overlap length of ``[entry, exit)`` with each cell. An
    event falls in the cell containing its exit time, with exits on a cell
    boundary assigned to the left cell.
    """
    t0, t_end = float(window[0]), float(window[1])
    if R < 2:
        raise ValidationError("R must be at least 2")
    if not t_end > t0:
        raise ValidationError("window must have positive length")
    recs = list(records)
    entry = np.array([r.entry for r in recs], dtype=float)
    exit_ = np.array([r.exit for r in recs], dtype=float)
    event = np.array([bool(r.event) for r in recs], dtype=bool)
    slack = 1e-12 * max(1.0, abs(t0), abs(t_end))
    for i in range(len(recs)):
        if not (entry[i] >= t0 - slack and exit_[i] <= t_end + slack and entry[i] < exit_[i]):
            raise IngestionError(f"record {i} ({entry[i]}, {exit_[i]}) is outside window [{t0}, {t_end}] or empty")
    delta = (t_end - t0) / R
    edges = t0 + delta * np.arange(R + 1)
    edges[-1] = t_end
    # F(x) = sum_i max(0, min(x, Z_i) - L_i) evaluated at the cell edges
    cum = _cumulative_exposure(edges, entry) - _cumulative_exposure(edges, exit_)
    exposures = np.maximum(np.diff(cum), 0.0)
    occ = np.zeros(R, dtype=np.int64)
    if event.any():
        pos = (exit_[event] - t0) / delta
        near = np.round(pos)
        on_edge = np.abs(pos - near) <= 1e-9 * np.maximum(1.0, near)
        idx = np.where(on_edge, near - 1, np.floor(pos)).astype(np.int64)
        np.add.at(occ, np.clip(idx, 0, R - 1), 1)
    return GridSample(t0, t_end, occ, exposures, n=max(len(recs), 1), delta=delta)


def _cumulative_exposure(x: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """``sum_i max(0, x - starts_i)`` for each ``x``."""
    if starts.size == 0:
        return np.zeros_like(x)
    s = np.sort(starts)
    csum = np.concatenate([[0.0], np.cumsum(s)])
    k = np.searchsorted(s, x, side="left")
    return k * x - csum[k]


# --------------------------------------------------------------------- csv io
def _rows(path: Path, expected: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip().lower() for h in header]
        if header[: len(expected)] != list(expected):
            raise ParseError(f"expected header {','.join(expected)}, got {','.join(header)}", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(expected):
                raise ParseError(f"expected {len(expected)} fields, got {len(row)}", line_no)
            yield line_no, row


def _number(text: str, line: int, name: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{name} {text!r} is not a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"{name} must be finite", line)
    return value


def load_grid_csv(path, n: Optional[int] = None) -> GridSample:
    """Read ``time,occurrences,exposure`` rows on a uniform grid.

    ``time`` is the cell midpoint. Without ``n`` the number of individuals is
    taken as the largest risk set ``max(exposure)/delta`` (rounded up), and
    never less than the total number of occurrences.
    """
    path = Path(path)
    times, occ, exp, lines = [], [], [], []
    for line, row in _rows(path, ("time", "occurrences", "exposure")):
        t = _number(row[0], line, "time")
        o = _number(row[1], line, "occurrences")
        y = _number(row[2], line, "exposure")
        if o < 0 or o != round(o):
            raise ParseError("occurrences must be a non-negative integer", line)
        if y < 0:
            raise ParseError("exposure must be non-negative", line)
        if o > 0 and y == 0:
            raise ValidationError(f"line {line}: occurrences {int(o)} with zero exposure")
        times.append(t)
        occ.append(int(round(o)))
        exp.append(y)
        lines.append(line)
    if not times:
        raise ValidationError(f"{path}: no data rows (empty sample)")
    if len(times) < 2:
        raise ValidationError(f"{path}: need at least two rows to infer the grid spacing")
    t = np.asarray(times)
    steps = np.diff(t)
    delta = float(steps.mean())
    if delta <= 0 or np.any(np.abs(steps - delta) > SPACING_RTOL * abs(delta) * max(1.0, len(steps))):
        bad = int(np.argmax(np.abs(steps - delta)))
        raise ValidationError(f"line {lines[bad + 1]}: grid spacing is not uniform")
    y = np.asarray(exp)
    o = np.asarray(occ, dtype=np.int64)
    if n is None:
        n = max(int(math.ceil(y.max() / delta - 1e-9)), int(o.sum()), 1)
    t0 = t[0] - delta / 2
    return GridSample(t0, t0 + delta * len(t), o, y, n=n, delta=delta)


def load_records_csv(path) -> list[IndividualRecord]:
    """Read ``entry,exit,event`` rows with ``event`` in ``{0, 1}``."""
    out = []
    for line, row in _rows(Path(path), ("entry", "exit", "event")):
        entry = _number(row[0], line, "entry")
        exit_ = _number(row[1], line, "exit")
        ev = row[2].strip()
        if ev not in ("0", "1"):
            raise ParseError(f"event must be 0 or 1, got {ev!r}", line)
        if entry < 0 or not exit_ > entry:
            raise ValidationError(f"line {line}: need 0 <= entry < exit")
        out.append(IndividualRecord(entry, exit_, ev == "1"))
    return out


def write_grid_csv(sample: GridSample, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "occurrences", "exposure"])
        for t, o, y in zip(sample.times, sample.occurrences, sample.exposures):
            w.writerow([repr(float(t)), int(o), repr(float(y))])
