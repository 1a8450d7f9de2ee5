"""Cross-validation scores and grid-search bandwidth selectors.

Leave-one-out on aggregated data removes a single occurrence from cell ``r``
when the estimator is evaluated at ``t_r``; exposures are left unchanged.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import GridSample, WeightScheme
from .estimators import (
    DegeneratePilotError,
    EstimatorKind,
    SideMode,
    _BestOneSided,
    _check_bandwidth,
    _Fit,
)
from .kernels import Kernel, Side, one_sided, rho

__all__ = [
    "BandwidthGrid",
    "SelectionMethod",
    "SelectionDiagnostics",
    "SelectionResult",
    "SelectionError",
    "ScoreUndefinedError",
    "cv_score",
    "score_trace",
    "select_cv",
    "select_oscv",
    "select_do",
    "select_bo",
    "select",
]


class SelectionError(ArithmeticError):
    """No bandwidth on the grid produced a defined score."""


class ScoreUndefinedError(ArithmeticError):
    """The estimator is undefined at every cell for this bandwidth."""


class SelectionMethod(str, enum.Enum):
    CV = "CV"
    OSCV_L = "OSCV_L"
    OSCV_R = "OSCV_R"
    DO = "DO"
    BO = "BO"


@dataclass(frozen=True)
class BandwidthGrid:
    """Strictly increasing positive candidate bandwidths."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        arr = np.asarray(vals)
        if arr.size < 2:
            raise ValueError("a bandwidth grid needs at least two values")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("bandwidths must be finite and positive")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("bandwidths must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def linspace(cls, lo: float, hi: float, count: int = 100) -> "BandwidthGrid":
        return cls(tuple(np.linspace(float(lo), float(hi), int(count))))

    @classmethod
    def parse(cls, spec: str) -> "BandwidthGrid":
        """Parse ``"min:max:count"``."""
        try:
            lo, hi, count = spec.split(":")
            return cls.linspace(float(lo), float(hi), int(count))
        except ValueError as exc:
            raise ValueError(f"bad bandwidth grid {spec!r}: expected min:max:count") from exc

    def check(self, sample: GridSample) -> None:
        if self.values[0] <= sample.delta:
            raise ValueError(f"smallest bandwidth {self.values[0]} must exceed the grid step {sample.delta}")

    def __len__(self) -> int:
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class SelectionDiagnostics:
    minimum_at_grid_edge: bool = False
    multiple_local_minima: bool = False
    side_score_degenerate: bool = False


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Chosen bandwidth with the score trace it came from.

    ``bandwidth = rho * raw_bandwidth``; ``rho`` is 1 for ordinary CV. For DO
    the trace holds the left scores and ``side_results`` both one-sided runs.
    """

    bandwidth: float
    method: SelectionMethod
    estimator_kind: str
    score_trace: np.ndarray
    diagnostics: SelectionDiagnostics
    raw_bandwidth: float
    rho: float = 1.0
    side_results: tuple = field(default=())

    def trace_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bandwidth", "score"])
            for b, s in self.score_trace:
                w.writerow([repr(float(b)), repr(float(s))])


# ------------------------------------------------------------------- scores
def _base_kind(kind) -> str:
    kind = EstimatorKind(str(kind).upper() if not isinstance(kind, EstimatorKind) else kind)
    return "MBC" if kind in (EstimatorKind.MBC, EstimatorKind.BO_MBC) else "LL"


def _fit_and_loo(sample: GridSample, b: float, kernel: Kernel, kind: EstimatorKind, mode):
    """Raw estimate, undefined mask and leave-one-occurrence-out values at every cell."""
    if kind in (EstimatorKind.LL, EstimatorKind.MBC):
        fit = _Fit(sample, b, kernel)
        if kind is EstimatorKind.LL:
            return fit.ll_raw(), fit.undefined, fit.ll_loo()
        pilot = fit.ll_raw()
        raw, undefined = fit.mbc(pilot)
        return raw, undefined, fit.mbc_loo(pilot)
    bo = _BestOneSided(sample, b, kernel, mode)
    if kind is EstimatorKind.BO_LL:
        raw, undefined = bo.ll()
        return raw, undefined, bo.ll_loo()
    raw, undefined = bo.mbc()
    return raw, undefined, bo.mbc_loo()


def cv_score(
    sample: GridSample,
    b: float,
    estimator_kind,
    kernel: Kernel,
    weights: Optional[WeightScheme] = None,
    mode: SideMode | str = SideMode.EXPOSURE,
) -> float:
    """Cross-validation score ``n^-1 [sum a(t_r)^2 Y_r w_r - 2 sum a^{[r,-1]}(t_r) w_r O_r]``.

    ``estimator_kind`` is one of ``LL``, ``MBC``, ``BO_LL`` or ``BO_MBC``; pass
    a one-sided kernel with ``LL``/``MBC`` for one-sided scores.

    Raises
    ------
    ScoreUndefinedError
        If the estimator is undefined at every cell or an MBC pilot vanishes.
    """
    b = _check_bandwidth(b)
    kind = EstimatorKind(estimator_kind)
    weights = WeightScheme.unit_product() if weights is None else weights
    w = weights.values(sample)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    try:
        raw, undefined, loo = _fit_and_loo(sample, b, kernel, kind, mode)
    except DegeneratePilotError as exc:
        raise ScoreUndefinedError(str(exc)) from exc
    if np.all(undefined):
        raise ScoreUndefinedError(f"estimator undefined at every cell for b = {b}")
    raw = np.where(undefined, 0.0, raw)
    loo = np.where(undefined, 0.0, loo)
    fit_term = np.sum(raw * raw * sample.exposures * w)
    loo_term = np.sum(loo * w * sample.occurrences)
    return float((fit_term - 2.0 * loo_term) / sample.n)


def score_trace(sample, grid: BandwidthGrid, estimator_kind, kernel, weights=None, mode=SideMode.EXPOSURE) -> np.ndarray:
    """``(len(grid), 2)`` array of ``(b, score)``; undefined scores are NaN."""
    out = np.empty((len(grid), 2))
    for i, b in enumerate(grid.values):
        try:
            s = cv_score(sample, b, estimator_kind, kernel, weights, mode)
        except ScoreUndefinedError:
            s = np.nan
        out[i] = b, s
    return out


# ---------------------------------------------------------------- minimizer
def _argmin(trace: np.ndarray) -> tuple[int, SelectionDiagnostics]:
    scores = trace[:, 1]
    finite = np.flatnonzero(np.isfinite(scores))
    if finite.size == 0:
        raise SelectionError("score undefined at every grid bandwidth")
    s = scores[finite]
    k = int(np.argmin(s))  # first occurrence: ties go to the smallest b
    best = int(finite[k])
    edge = best in (0, len(scores) - 1)
    lower_than_left = np.r_[True, s[1:] < s[:-1]]
    lower_than_right = np.r_[s[:-1] < s[1:], True]
    n_minima = int(np.sum(lower_than_left & lower_than_right)) if s.size > 1 else 1
    return best, SelectionDiagnostics(minimum_at_grid_edge=edge, multiple_local_minima=n_minima > 1)


def _minimize(trace, method, base, rho_value) -> SelectionResult:
    best, diag = _argmin(trace)
    raw_b = float(trace[best, 0])
    return SelectionResult(rho_value * raw_b, SelectionMethod(method), base, trace, diag, raw_b, rho_value)


def _prepare(sample, grid, estimator_kind):
    grid.check(sample)
    return _base_kind(estimator_kind)


def select_cv(sample, grid: BandwidthGrid, estimator_kind, kernel: Kernel, weights=None) -> SelectionResult:
    """Ordinary cross-validation: argmin of :func:`cv_score` over ``grid``."""
    base = _prepare(sample, grid, estimator_kind)
    trace = score_trace(sample, grid, base, kernel, weights)
    return _minimize(trace, SelectionMethod.CV, base, 1.0)


def select_oscv(sample, grid: BandwidthGrid, estimator_kind, kernel: Kernel, side: Side, weights=None) -> SelectionResult:
    """One-sided CV with ``one_sided(kernel, side)``, rescaled by ``rho``."""
    base = _prepare(sample, grid, estimator_kind)
    side = Side(side)
    trace = score_trace(sample, grid, base, one_sided(kernel, side), weights)
    method = SelectionMethod.OSCV_L if side is Side.LEFT else SelectionMethod.OSCV_R
    return _minimize(trace, method, base, rho(kernel, base))


def select_do(sample, grid: BandwidthGrid, estimator_kind, kernel: Kernel, weights=None) -> SelectionResult:
    """Double one-sided validation: ``rho * (b_L + b_R) / 2``.

    A side whose scores are all undefined is dropped (with the degenerate
    flag set); if both fail the selection fails.
    """
    base = _prepare(sample, grid, estimator_kind)
    sides = []
    for side in (Side.LEFT, Side.RIGHT):
        try:
            sides.append(select_oscv(sample, grid, base, kernel, side, weights))
        except SelectionError:
            pass
    if not sides:
        raise SelectionError("both one-sided scores are undefined on the whole grid")
    r = rho(kernel, base)
    raw_b = float(np.mean([s.raw_bandwidth for s in sides]))
    degenerate = len(sides) < 2 or any(s.diagnostics.minimum_at_grid_edge for s in sides)
    diag = SelectionDiagnostics(
        minimum_at_grid_edge=any(s.diagnostics.minimum_at_grid_edge for s in sides),
        multiple_local_minima=any(s.diagnostics.multiple_local_minima for s in sides),
        side_score_degenerate=degenerate,
    )
    return SelectionResult(r * raw_b, SelectionMethod.DO, base, sides[0].score_trace, diag, raw_b, r, tuple(sides))


def select_bo(
    sample,
    grid: BandwidthGrid,
    estimator_kind,
    kernel: Kernel,
    weights=None,
    mode: SideMode | str = SideMode.EXPOSURE,
) -> SelectionResult:
    """Best one-sided validation; the side mask is recomputed for every candidate ``b``."""
    base = _prepare(sample, grid, estimator_kind)
    kind = EstimatorKind.BO_LL if base == "LL" else EstimatorKind.BO_MBC
    trace = score_trace(sample, grid, kind, kernel, weights, mode)
    return _minimize(trace, SelectionMethod.BO, base, rho(kernel, base))


def select(method, sample, grid, estimator_kind, kernel, weights=None, mode=SideMode.EXPOSURE) -> SelectionResult:
    """Dispatch on ``method`` in ``{CV, DO, BO, OSCV_L, OSCV_R}`` (case-insensitive)."""
    m = SelectionMethod(str(method).upper())
    if m is SelectionMethod.CV:
        return select_cv(sample, grid, estimator_kind, kernel, weights)
    if m is SelectionMethod.DO:
        return select_do(sample, grid, estimator_kind, kernel, weights)
    if m is SelectionMethod.BO:
        return select_bo(sample, grid, estimator_kind, kernel, weights, mode)
    side = Side.LEFT if m is SelectionMethod.OSCV_L else Side.RIGHT
    return select_oscv(sample, grid, estimator_kind, kernel, side, weights)
