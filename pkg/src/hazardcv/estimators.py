"""Local linear, multiplicatively bias corrected and best one-sided hazard estimators.

All estimators are evaluated at the grid points of a :class:`GridSample`.
A kernel ``K`` with bandwidth ``b`` weights source time ``s`` for estimation
time ``t`` by ``K((s - t)/b)/b``; for symmetric kernels this is the usual
``K_b(t - s)``, and it makes ``one_sided(K, Side.LEFT)`` use the window
``[t - b, t]``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import GridSample
from .kernels import Kernel, Side, one_sided

__all__ = [
    "EstimatorKind",
    "SideMode",
    "HazardEstimate",
    "DegeneratePilotError",
    "stochastic_moments",
    "ll_hazard",
    "mbc_hazard",
    "one_sided_hazard",
    "side_select",
    "side_mask",
    "bo_ll_hazard",
    "bo_mbc_hazard",
    "estimate",
    "PILOT_FLOOR",
]

# Pilot values below PILOT_FLOOR * max(pilot) drop out of the MBC correction.
PILOT_FLOOR = 1e-12
# Relative size of a0*a2 - a1^2 below which the local linear fit is undefined.
DET_RTOL = 1e-10


class EstimatorKind(str, enum.Enum):
    LL = "LL"
    MBC = "MBC"
    BO_LL = "BO_LL"
    BO_MBC = "BO_MBC"


class SideMode(str, enum.Enum):
    OCCURRENCE = "occurrence"
    EXPOSURE = "exposure"


class DegeneratePilotError(ArithmeticError):
    """The local linear pilot of an MBC fit is zero everywhere."""


@dataclass(frozen=True, eq=False)
class HazardEstimate:
    """A hazard curve on the grid of ``sample``.

    ``values`` are clipped at zero; ``raw`` keeps the unclipped fit that the
    cross-validation scores use. ``undefined`` marks cells where the local
    linear moment determinant vanished (value set to zero).
    """

    sample: GridSample
    values: np.ndarray
    raw: np.ndarray
    kind: EstimatorKind
    bandwidth: float
    kernel: Kernel
    undefined: np.ndarray
    side_mask: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return self.sample.times

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["time", "hazard"] + (["side"] if self.side_mask is not None else [])
            w.writerow(header)
            for r, (t, v) in enumerate(zip(self.times, self.values)):
                row = [repr(float(t)), repr(float(v))]
                if self.side_mask is not None:
                    row.append(Side.LEFT.value if self.side_mask[r] else Side.RIGHT.value)
                w.writerow(row)


def _check_bandwidth(b: float) -> float:
    b = float(b)
    if not (np.isfinite(b) and b > 0):
        raise ValueError(f"bandwidth must be positive, got {b!r}")
    return b


def _moments(W: np.ndarray, lags: np.ndarray, mass: np.ndarray):
    """``a_j[r] = sum_q W[r,q] (t_r - t_q)^j mass[q]`` for j = 0, 1, 2."""
    d = -lags
    wm = W * mass
    a0 = wm.sum(axis=-1)
    a1 = (wm * d).sum(axis=-1)
    a2 = (wm * d * d).sum(axis=-1)
    return a0, a1, a2


def _local_linear_matrix(W, lags, mass):
    """Local linear weights ``(a2 - a1 (t - s)) / (a0 a2 - a1^2) * W`` and the undefined mask."""
    a0, a1, a2 = _moments(W, lags, mass)
    det = a0 * a2 - a1 * a1
    bad = ~(det > DET_RTOL * np.abs(a0 * a2)) | ~(a0 > 0)
    safe = np.where(bad, 1.0, det)
    coef0 = np.where(bad, 0.0, a2 / safe)
    coef1 = np.where(bad, 0.0, a1 / safe)
    kbar = (coef0[..., None] + coef1[..., None] * lags) * W
    return kbar, bad


def stochastic_moments(sample: GridSample, t: float, b: float, kernel: Kernel, weighted_by=None):
    """Discrete ``a_j(t) = sum_q K_b(s_q - t) (t - s_q)^j Y_q [* alpha(s_q)^2]``.

    ``weighted_by`` is an optional sequence of pilot hazard values at the grid
    points; each summand is multiplied by its square (MBC moments).
    """
    b = _check_bandwidth(b)
    t = float(t)
    if not (sample.t0 <= t <= sample.t_end):
        raise ValueError(f"t = {t} outside the study window")
    lags = sample.times - t
    W = kernel.eval(lags / b) / b
    mass = sample.exposures.astype(float)
    if weighted_by is not None:
        mass = mass * np.asarray(weighted_by, dtype=float) ** 2
    a0, a1, a2 = _moments(W, lags, mass)
    return float(a0), float(a1), float(a2)


# --------------------------------------------------------------- core passes
class _Fit:
    """Local linear machinery for one sample, bandwidth and kernel.

    On a uniform grid the lag ``t_q - t_r`` is ``(q - r) * delta``, so every
    row only needs the offsets inside the kernel support. Arrays are stored
    banded with shape ``(R, m)``; column ``j`` of row ``r`` refers to cell
    ``r + off[j]``.
    """

    def __init__(self, sample: GridSample, b: float, kernel: Kernel):
        self.sample = sample
        self.b = b
        self.kernel = kernel
        R, delta = sample.R, sample.delta
        lo, hi = kernel.support
        first = max(int(np.floor(lo * b / delta)) - 1, -(R - 1))
        last = min(int(np.ceil(hi * b / delta)) + 1, R - 1)
        off = np.arange(first, last + 1)
        w = kernel.eval(off * delta / b) / b
        nz = np.flatnonzero(w != 0)
        keep = slice(nz[0], nz[-1] + 1) if nz.size else np.flatnonzero(off == 0)
        off, w = off[keep], w[keep]
        self.off = off
        self.pad = int(max(abs(off[0]), abs(off[-1])))
        self.idx = np.arange(R)[:, None] + off[None, :] + self.pad
        inside = (self.idx >= self.pad) & (self.idx < R + self.pad)
        self.W = w[None, :] * inside
        self.lags = np.broadcast_to(off * delta, self.W.shape)
        self.kbar, self.undefined = _local_linear_matrix(self.W, self.lags, self._gather(sample.exposures))
        zero = np.flatnonzero(off == 0)
        self.centre = int(zero[0]) if zero.size else None
        # column holding offset -off[j], or -1 when -off[j] is outside the band
        pos = {int(o): j for j, o in enumerate(off)}
        self.mirror = np.array([pos.get(-int(o), -1) for o in off])

    def _gather(self, values: np.ndarray) -> np.ndarray:
        padded = np.zeros(values.shape[-1] + 2 * self.pad)
        padded[self.pad : self.pad + values.shape[-1]] = values
        return padded[self.idx]

    def _own(self, band: np.ndarray) -> np.ndarray:
        """Entries at offset zero (the ``[r, r]`` diagonal)."""
        if self.centre is None:
            return np.zeros(band.shape[0])
        return band[:, self.centre]

    def _transposed(self, band: np.ndarray) -> np.ndarray:
        """Band of the transpose: entry ``[r, j]`` is ``full[r + off[j], r]``."""
        R = band.shape[0]
        padded = np.zeros((R + 2 * self.pad, band.shape[1]))
        padded[self.pad : self.pad + R] = band
        cols = np.where(self.mirror >= 0, self.mirror, 0)
        out = padded[self.idx, cols[None, :]]
        return np.where(self.mirror[None, :] >= 0, out, 0.0)

    def ll_raw(self, occ=None) -> np.ndarray:
        occ = self.sample.occurrences if occ is None else occ
        return np.einsum("rj,rj->r", self.kbar, self._gather(np.asarray(occ, dtype=float)))

    def ll_loo(self) -> np.ndarray:
        """LL value at ``t_r`` after removing one occurrence from cell ``r``."""
        return self.ll_raw() - self._own(self.kbar)

    def mbc(self, pilot_raw: np.ndarray):
        """MBC fit from a pilot; returns ``(raw, undefined)``."""
        pilot = np.clip(pilot_raw, 0.0, None)
        top = pilot.max() if pilot.size else 0.0
        if not top > 0:
            raise DegeneratePilotError("local linear pilot is identically zero")
        p = np.where(pilot > PILOT_FLOOR * top, pilot, 0.0)
        sample = self.sample
        pq = self._gather(p)
        kbar_m, bad = _local_linear_matrix(self.W, self.lags, self._gather(sample.exposures) * pq * pq)
        # kbar_m * p_s^2 * p_t / p_s = kbar_m * p_s * p_t
        occ = self._gather(sample.occurrences.astype(float))
        raw = p * np.einsum("rj,rj->r", kbar_m, pq * occ)
        return raw, bad | (p == 0)

    def _loo_pilot_top(self, pilot_raw: np.ndarray) -> np.ndarray:
        """Row maxima of the leave-one-out pilots.

        Removing an occurrence at ``r`` changes the pilot only at cells
        ``q = r - off[j]``; elsewhere the clipped full pilot is unchanged.
        """
        R = pilot_raw.size
        p = np.clip(pilot_raw, 0.0, None)
        lo_off, hi_off = int(self.off[0]), int(self.off[-1])
        prefix = np.maximum.accumulate(p)
        suffix = np.maximum.accumulate(p[::-1])[::-1]
        r = np.arange(R)
        left_end = r - hi_off - 1
        right_start = r - lo_off + 1
        outside = np.zeros(R)
        ok = left_end >= 0
        outside[ok] = prefix[left_end[ok]]
        ok = right_start <= R - 1
        outside[ok] = np.maximum(outside[ok], suffix[right_start[ok]])
        # changed cells: q = r - off[j], value pilot_raw[q] - kbar[q, j]
        q = r[:, None] - self.off[None, :]
        inside = (q >= 0) & (q < R)
        qc = np.clip(q, 0, R - 1)
        cols = np.broadcast_to(np.arange(self.off.size), q.shape)
        changed = np.where(inside, np.clip(pilot_raw[qc] - self.kbar[qc, cols], 0.0, None), 0.0)
        return np.maximum(outside, changed.max(axis=1))

    def mbc_loo(self, pilot_raw: np.ndarray) -> np.ndarray:
        """MBC value at ``t_r`` with one occurrence removed from cell ``r``.

        Removing an occurrence at ``r`` lowers the pilot at every ``q`` by
        ``kbar[q, r]``; row ``r`` of ``P`` is that leave-one-out pilot.
        """
        sample = self.sample
        top = self._loo_pilot_top(pilot_raw)[:, None]
        P = np.clip(self._gather(pilot_raw) - self._transposed(self.kbar), 0.0, None)
        valid = (P > PILOT_FLOOR * top) & (top > 0)
        P = np.where(valid, P, 0.0)
        kbar_m, bad = _local_linear_matrix(self.W, self.lags, self._gather(sample.exposures) * P * P)
        occ = self._gather(sample.occurrences.astype(float))
        if self.centre is not None:
            occ[:, self.centre] -= 1.0
        own_p = self._own(P)
        vals = own_p * np.einsum("rj,rj->r", kbar_m, P * occ)
        return np.where(bad, 0.0, vals)


def _pack(sample, raw, undefined, kind, b, kernel, side=None) -> HazardEstimate:
    raw = np.where(undefined, 0.0, raw)
    values = np.clip(raw, 0.0, None)
    for arr in (raw, values, undefined):
        arr.setflags(write=False)
    if side is not None:
        side = np.asarray(side, dtype=bool)
        side.setflags(write=False)
    return HazardEstimate(sample, values, raw, EstimatorKind(kind), b, kernel, undefined, side)


def ll_hazard(sample: GridSample, b: float, kernel: Kernel) -> HazardEstimate:
    """Local linear hazard ``sum_q Kbar_{t_r,b}(t_r - t_q) O_q`` at every grid point."""
    b = _check_bandwidth(b)
    fit = _Fit(sample, b, kernel)
    return _pack(sample, fit.ll_raw(), fit.undefined.copy(), "LL", b, kernel)


def mbc_hazard(sample: GridSample, b: float, kernel: Kernel) -> HazardEstimate:
    """Multiplicatively bias corrected hazard with a local linear pilot (same ``b``, ``kernel``)."""
    b = _check_bandwidth(b)
    fit = _Fit(sample, b, kernel)
    raw, undefined = fit.mbc(fit.ll_raw())
    return _pack(sample, raw, undefined, "MBC", b, kernel)


def one_sided_hazard(sample: GridSample, b: float, kernel: Kernel, side: Side, estimator: str = "LL") -> HazardEstimate:
    """LL or MBC fit with ``one_sided(kernel, side)``."""
    k = one_sided(kernel, Side(side))
    return ll_hazard(sample, b, k) if estimator.upper() == "LL" else mbc_hazard(sample, b, k)


# ----------------------------------------------------------- side selection
def _window_values(sample: GridSample, mode) -> np.ndarray:
    mode = SideMode(mode)
    values = sample.occurrences if mode is SideMode.OCCURRENCE else sample.exposures
    return np.asarray(values, dtype=float)


def side_select(sample: GridSample, t: float, b: float, mode: SideMode | str = SideMode.EXPOSURE) -> bool:
    """True (use the left kernel) iff the window ``[t-b, t]`` holds strictly more
    occurrences or exposure than ``[t, t+b]``. Windows are cut at the grid."""
    b = _check_bandwidth(b)
    values = _window_values(sample, mode)
    lags = sample.times - float(t)
    reach = b * (1 + 1e-12)
    left = values[(lags <= 0) & (lags >= -reach)].sum()
    right = values[(lags >= 0) & (lags <= reach)].sum()
    return bool(left > right)


def side_mask(sample: GridSample, b: float, mode: SideMode | str = SideMode.EXPOSURE) -> np.ndarray:
    """:func:`side_select` at every grid point."""
    b = _check_bandwidth(b)
    values = _window_values(sample, mode)
    R = sample.R
    k = int(np.floor(b / sample.delta * (1 + 1e-12)))
    cs = np.concatenate([[0.0], np.cumsum(values)])
    r = np.arange(R)
    left = cs[r + 1] - cs[np.maximum(r - k, 0)]
    right = cs[np.minimum(r + k + 1, R)] - cs[r]
    return left > right


class _BestOneSided:
    """Left and right one-sided fits combined by the side mask."""

    def __init__(self, sample: GridSample, b: float, kernel: Kernel, mode):
        self.sample = sample
        self.mask = side_mask(sample, b, mode)
        self.fits = {
            Side.LEFT: _Fit(sample, b, one_sided(kernel, Side.LEFT)),
            Side.RIGHT: _Fit(sample, b, one_sided(kernel, Side.RIGHT)),
        }

    def _used(self):
        sides = []
        if self.mask.any():
            sides.append(Side.LEFT)
        if (~self.mask).any():
            sides.append(Side.RIGHT)
        return sides

    def combine(self, per_side: dict) -> np.ndarray:
        r = per_side.get(Side.RIGHT)
        left = per_side.get(Side.LEFT)
        if r is None:
            return left
        if left is None:
            return r
        return np.where(self.mask, left, r)

    def ll(self):
        raw = self.combine({s: self.fits[s].ll_raw() for s in self._used()})
        und = self.combine({s: self.fits[s].undefined for s in self._used()})
        return raw, und

    def ll_loo(self):
        return self.combine({s: self.fits[s].ll_loo() for s in self._used()})

    def mbc(self):
        raws, unds = {}, {}
        for s in self._used():
            fit = self.fits[s]
            raws[s], unds[s] = fit.mbc(fit.ll_raw())
        return self.combine(raws), self.combine(unds)

    def mbc_loo(self):
        out = {}
        for s in self._used():
            fit = self.fits[s]
            out[s] = fit.mbc_loo(fit.ll_raw())
        return self.combine(out)


def bo_ll_hazard(sample: GridSample, b: float, kernel: Kernel, mode: SideMode | str = SideMode.EXPOSURE) -> HazardEstimate:
    """Best one-sided local linear hazard: left kernel where :func:`side_mask` is true."""
    b = _check_bandwidth(b)
    bo = _BestOneSided(sample, b, kernel, mode)
    raw, und = bo.ll()
    return _pack(sample, raw, und, "BO_LL", b, kernel, bo.mask)


def bo_mbc_hazard(sample: GridSample, b: float, kernel: Kernel, mode: SideMode | str = SideMode.EXPOSURE) -> HazardEstimate:
    """Best one-sided MBC hazard; each side uses its own one-sided local linear pilot."""
    b = _check_bandwidth(b)
    bo = _BestOneSided(sample, b, kernel, mode)
    raw, und = bo.mbc()
    return _pack(sample, raw, und, "BO_MBC", b, kernel, bo.mask)


def estimate(sample: GridSample, b: float, kernel: Kernel, kind: EstimatorKind | str, mode=SideMode.EXPOSURE) -> HazardEstimate:
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.LL:
        return ll_hazard(sample, b, kernel)
    if kind is EstimatorKind.MBC:
        return mbc_hazard(sample, b, kernel)
    if kind is EstimatorKind.BO_LL:
        return bo_ll_hazard(sample, b, kernel, mode)
    return bo_mbc_hazard(sample, b, kernel, mode)
