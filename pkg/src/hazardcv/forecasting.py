"""Run-off triangle forecasting with a multiplicative density ``f(x, z) = f1(x) f2(z)``.

Underwriting period ``x`` and reporting delay ``z`` are both 1-indexed in
``1..m``; cell ``(x, z)`` is observed iff ``x + z <= m + 1``. On the reversed
scales ``x' = m + 1 - x`` and ``z' = m + 1 - z`` the right truncation
``x + z <= m + 1`` becomes left truncation: a count at ``(x, z)`` is at risk
for the first component on ``z <= x'' <= x'`` and for the second on
``x <= z'' <= z'``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .data import DataError, GridSample, IngestionError, ParseError, ValidationError, WeightScheme
from .estimators import EstimatorKind, HazardEstimate, estimate
from .kernels import Kernel
from .selection import BandwidthGrid, select

__all__ = [
    "RunOffTriangle",
    "ComponentEstimates",
    "Forecast",
    "DegenerateForecastError",
    "load_triangle_csv",
    "reverse_components",
    "component_weights",
    "survival_and_density",
    "component_estimates",
    "fit_components",
    "forecast",
    "chain_ladder",
]


class DegenerateForecastError(ArithmeticError):
    """The fitted density puts no mass on the observed triangle."""


@dataclass(frozen=True, eq=False)
class RunOffTriangle:
    """Upper triangle of counts; ``counts[x-1, z-1]`` with unobserved cells held at zero.

    Counts may be real-valued (noiseless surrogates) but must be finite and
    non-negative.
    """

    m: int
    counts: np.ndarray

    def __post_init__(self):
        m = int(self.m)
        if m < 1:
            raise ValidationError("triangle dimension must be positive")
        c = np.array(self.counts, dtype=float)
        if c.shape != (m, m):
            raise ValidationError(f"counts must be {m}x{m}")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValidationError("counts must be finite and non-negative")
        if np.any(c[~self.observed_mask(m)] != 0):
            raise ValidationError("counts outside the observed triangle x + z <= m + 1")
        c.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "counts", c)

    @staticmethod
    def observed_mask(m: int) -> np.ndarray:
        x = np.arange(1, m + 1)
        return (x[:, None] + x[None, :]) <= m + 1

    @classmethod
    def from_cells(cls, m: int, cells: Mapping[tuple[int, int], float]) -> "RunOffTriangle":
        counts = np.zeros((int(m), int(m)))
        for (x, z), v in cells.items():
            if not (1 <= x <= m and 1 <= z <= m and x + z <= m + 1):
                raise ValidationError(f"cell ({x}, {z}) outside the observed triangle of dimension {m}")
            counts[x - 1, z - 1] = v
        return cls(int(m), counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "z", "count"])
            for x, z in zip(*np.nonzero(self.counts)):
                v = self.counts[x, z]
                w.writerow([x + 1, z + 1, int(v) if v == int(v) else repr(float(v))])


def load_triangle_csv(path, m: Optional[int] = None) -> RunOffTriangle:
    """Read ``x,z,count`` rows; ``m`` defaults to the smallest dimension holding every cell."""
    cells: dict[tuple[int, int], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["x", "z", "count"]:
            raise ParseError("expected header x,z,count", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", lineno)
            try:
                x, z, v = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if x < 1 or z < 1:
                raise ParseError("x and z are 1-indexed", lineno)
            if not (math.isfinite(v) and v >= 0):
                raise ParseError("count must be finite and non-negative", lineno)
            if (x, z) in cells:
                raise ParseError(f"duplicate cell ({x}, {z})", lineno)
            cells[(x, z)] = v
    if not cells:
        raise IngestionError("empty triangle")
    need = max(max(x, z, x + z - 1) for x, z in cells)
    m = need if m is None else int(m)
    if m < need:
        raise ValidationError(f"cells need dimension {need}, got m = {m}")
    return RunOffTriangle.from_cells(m, cells)


# ---------------------------------------------------------------- reversal
def reverse_components(triangle: RunOffTriangle) -> tuple[GridSample, GridSample]:
    """Occurrences and exposures of both components on the reversed scales.

    Grid points are ``1..m`` (cells of width one). ``O1[k]`` counts claims with
    ``x' = k`` and ``Y1[k]`` those with ``z <= k <= x'``; the second component
    swaps the roles of ``x`` and ``z``.
    """
    m, N = triangle.m, triangle.counts
    if not triangle.total > 0:
        raise IngestionError("empty triangle")
    fractional = bool(np.any(N != np.round(N)))

    def component(counts: np.ndarray) -> GridSample:
        # counts[a-1, c-1] with a the reversed variable's source index, c the truncation index
        rev = counts[::-1, :]  # rev[k'-1, c-1]: reversed time k' = m + 1 - a
        occ = rev.sum(axis=1)
        # at risk at k: reversed time >= k and truncation index c <= k
        tail = np.cumsum(rev[::-1], axis=0)[::-1]  # tail[k-1, c-1] = sum_{k' >= k}
        exposure = np.array([tail[k, : k + 1].sum() for k in range(m)])
        n = int(math.ceil(counts.sum()))
        return GridSample(0.5, m + 0.5, occ, exposure, max(n, 1), 1.0, fractional)

    return component(N), component(N.T)


def survival_and_density(hazard: HazardEstimate | np.ndarray, delta: Optional[float] = None):
    """Product-limit survival ``S_r = prod_{q<r} (1 - a_q delta)`` in ``[0, 1]`` and ``f = a S``."""
    if isinstance(hazard, HazardEstimate):
        values, delta = np.asarray(hazard.values, dtype=float), hazard.sample.delta
    else:
        values = np.clip(np.asarray(hazard, dtype=float), 0.0, None)
        delta = 1.0 if delta is None else float(delta)
    factors = np.clip(1.0 - values * delta, 0.0, 1.0)
    survival = np.concatenate([[1.0], np.cumprod(factors)[:-1]])
    return survival, values * survival


@dataclass(frozen=True, eq=False)
class ComponentEstimates:
    """Backward hazards of both components with their survival and density sequences.

    ``alpha1_hat``/``alpha2_hat`` may be ``None`` when the sequences come from
    raw occurrence/exposure ratios rather than a kernel fit.
    """

    S1_hat: np.ndarray
    S2_hat: np.ndarray
    f1_hat: np.ndarray
    f2_hat: np.ndarray
    alpha1_hat: Optional[HazardEstimate] = None
    alpha2_hat: Optional[HazardEstimate] = None

    def __post_init__(self):
        for name in ("S1_hat", "S2_hat"):
            s = np.asarray(getattr(self, name), dtype=float)
            if s.size and (abs(s[0] - 1.0) > 1e-12 or np.any(np.diff(s) > 1e-12) or np.any(s < 0)):
                raise ValidationError(f"{name} must start at 1 and be nonincreasing in [0, 1]")
        for name in ("f1_hat", "f2_hat"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValidationError(f"{name} must be non-negative")


def component_estimates(alpha1: HazardEstimate, alpha2: HazardEstimate) -> ComponentEstimates:
    s1, f1 = survival_and_density(alpha1)
    s2, f2 = survival_and_density(alpha2)
    return ComponentEstimates(s1, s2, f1, f2, alpha1, alpha2)


def _raw_components(triangle: RunOffTriangle) -> ComponentEstimates:
    """Histogram estimates ``O/Y`` (zero where exposure vanishes)."""
    out = []
    for sample in reverse_components(triangle):
        y = sample.exposures
        raw = np.divide(sample.occurrences, y, out=np.zeros(sample.R), where=y > 0)
        out.append(survival_and_density(raw, sample.delta))
    (s1, f1), (s2, f2) = out
    return ComponentEstimates(s1, s2, f1, f2)


def component_weights(component: int, estimates: ComponentEstimates, sample: GridSample) -> WeightScheme:
    """``w1 = S1^2 (1 - S2)^2 / Y1``; component 2 swaps the survival roles."""
    if component not in (1, 2):
        raise ValueError("component must be 1 or 2")
    own, other = (estimates.S1_hat, estimates.S2_hat) if component == 1 else (estimates.S2_hat, estimates.S1_hat)
    y = sample.exposures
    num = np.asarray(own) ** 2 * (1.0 - np.asarray(other)) ** 2
    w = np.divide(num, y, out=np.zeros(sample.R), where=y > 0)
    return WeightScheme.from_values(w)


def fit_components(
    triangle: RunOffTriangle,
    kernel: Kernel,
    estimator: str = "LL",
    method: str = "BO",
    grid: Optional[BandwidthGrid] = None,
    bandwidths: Optional[tuple[float, float]] = None,
    mode: str = "exposure",
):
    """Kernel estimates of both backward hazards.

    With ``bandwidths`` given they are used directly. Otherwise each component's
    bandwidth is selected by ``method`` with the forecasting weights, whose
    survival functions come from the raw ``O/Y`` hazards. Returns the
    estimates and the selection results (``None`` when bandwidths are fixed).
    """
    est = estimator.upper()
    kind = EstimatorKind(est)
    s1, s2 = reverse_components(triangle)
    if bandwidths is not None:
        b1, b2 = (float(b) for b in bandwidths)
        selections = None
    else:
        pilot = _raw_components(triangle)
        grid = grid or BandwidthGrid.linspace(1.5, max(triangle.m / 2.0, 3.0), 100)
        r1 = select(method, s1, grid, est, kernel, component_weights(1, pilot, s1), mode)
        r2 = select(method, s2, grid, est, kernel, component_weights(2, pilot, s2), mode)
        b1, b2 = r1.bandwidth, r2.bandwidth
        selections = (r1, r2)
    a1 = estimate(s1, b1, kernel, kind)
    a2 = estimate(s2, b2, kernel, kind)
    return component_estimates(a1, a2), selections


# ---------------------------------------------------------------- forecast
@dataclass(frozen=True, eq=False)
class Forecast:
    """Expected counts in the unobserved cells ``x + z > m + 1``.

    ``by_calendar_period[k-1]`` sums the cells with ``x + z = m + 1 + k``.
    """

    m: int
    cells: np.ndarray

    @property
    def cell_forecasts(self) -> dict[tuple[int, int], float]:
        m = self.m
        future = ~RunOffTriangle.observed_mask(m)
        return {(int(x) + 1, int(z) + 1): float(self.cells[x, z]) for x, z in zip(*np.nonzero(future))}

    @property
    def by_calendar_period(self) -> np.ndarray:
        m = self.m
        out = np.zeros(max(m - 1, 0))
        x = np.arange(1, m + 1)
        period = x[:, None] + x[None, :] - (m + 1)
        for k in range(1, m):
            out[k - 1] = math.fsum(self.cells[period == k])
        return out

    @property
    def grand_total(self) -> float:
        return math.fsum(self.by_calendar_period)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["calendar_period", "forecast"])
            for k, v in enumerate(self.by_calendar_period, start=1):
                w.writerow([k, repr(float(v))])
            w.writerow(["total", repr(self.grand_total)])

    def cells_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "z", "forecast"])
            for (x, z), v in sorted(self.cell_forecasts.items()):
                w.writerow([x, z, repr(v)])


def forecast(triangle: RunOffTriangle, estimates: ComponentEstimates) -> Forecast:
    """Fill the lower triangle with ``c f1(x) f2(z)``, ``c`` matching the observed total."""
    m = triangle.m
    f1 = np.asarray(estimates.f1_hat, dtype=float)[::-1]  # back to x = 1..m
    f2 = np.asarray(estimates.f2_hat, dtype=float)[::-1]
    if f1.size != m or f2.size != m:
        raise ValidationError(f"component densities must have length {m}")
    model = np.outer(f1, f2)
    observed = RunOffTriangle.observed_mask(m)
    mass = math.fsum(model[observed])
    if not mass > 0:
        raise DegenerateForecastError("fitted density has no mass on the observed triangle")
    cells = np.where(observed, 0.0, model * (triangle.total / mass))
    return Forecast(m, cells)


def chain_ladder(triangle: RunOffTriangle) -> Forecast:
    """Development-factor completion of the cumulative triangle.

    ``lambda_j = sum_x C[x, j+1] / sum_x C[x, j]`` over rows with both columns
    observed; a zero denominator gives ``lambda_j = 1``.
    """
    m = triangle.m
    cum = np.cumsum(triangle.counts, axis=1)
    full = cum.copy()
    for j in range(m - 1):  # development from column j to j + 1 (0-based)
        rows = m - 1 - j  # rows x = 1..m-j-1 observe column j + 1
        num, den = cum[:rows, j + 1].sum(), cum[:rows, j].sum()
        lam = num / den if den > 0 else 1.0
        start = rows  # rows whose column j + 1 is in the future
        full[start:, j + 1] = full[start:, j] * lam
    incr = np.diff(np.concatenate([np.zeros((m, 1)), full], axis=1), axis=1)
    observed = RunOffTriangle.observed_mask(m)
    return Forecast(m, np.where(observed, 0.0, incr))
