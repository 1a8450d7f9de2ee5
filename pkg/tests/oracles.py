"""Independent dense reference implementations used as test oracles.

Everything here is written from the defining sums with plain loops over
grid cells, sharing no code with the banded library implementation.
"""

from __future__ import annotations

import math

import numpy as np

DET_RTOL = 1e-10
PILOT_FLOOR = 1e-12


def base_kernel(name):
    const, power = {"epanechnikov": (0.75, 1), "quartic": (15 / 16, 2), "sextic": (3003 / 2048, 6)}[name]

    def k(u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1, const * (1 - u * u) ** power, 0.0)

    return k


def left_kernel(k):
    return lambda u: np.where(np.asarray(u) <= 0, 2 * k(u), 0.0)


def right_kernel(k):
    return lambda u: np.where(np.asarray(u) >= 0, 2 * k(u), 0.0)


def kernel_rows(times, b, k):
    """``W[r, q] = k((t_q - t_r) / b) / b`` and ``d[r, q] = t_r - t_q``."""
    R = len(times)
    W = np.zeros((R, R))
    d = np.zeros((R, R))
    for r in range(R):
        for q in range(R):
            W[r, q] = float(k((times[q] - times[r]) / b)) / b
            d[r, q] = times[r] - times[q]
    return W, d


def local_linear_weights(W, d, mass):
    """Dense equivalent-kernel matrix and undefined flags."""
    R = W.shape[0]
    K = np.zeros_like(W)
    bad = np.zeros(R, dtype=bool)
    for r in range(R):
        a0 = math.fsum(W[r] * mass)
        a1 = math.fsum(W[r] * d[r] * mass)
        a2 = math.fsum(W[r] * d[r] ** 2 * mass)
        det = a0 * a2 - a1 * a1
        if not (det > DET_RTOL * abs(a0 * a2)) or not a0 > 0:
            bad[r] = True
            continue
        K[r] = (a2 - a1 * d[r]) / det * W[r]
    return K, bad


def ll(times, O, Y, b, k):
    W, d = kernel_rows(times, b, k)
    K, bad = local_linear_weights(W, d, np.asarray(Y, float))
    vals = np.array([math.fsum(K[r] * O) for r in range(len(times))])
    return np.where(bad, 0.0, vals), bad


def mbc(times, O, Y, b, k):
    """MBC fit; ``None`` when the local linear pilot vanishes identically."""
    pilot, _ = ll(times, O, Y, b, k)
    p = np.clip(pilot, 0, None)
    if not p.max() > 0:
        return None
    p = np.where(p > PILOT_FLOOR * p.max(), p, 0.0)
    W, d = kernel_rows(times, b, k)
    K, bad = local_linear_weights(W, d, np.asarray(Y, float) * p * p)
    R = len(times)
    vals = np.zeros(R)
    for r in range(R):
        if bad[r] or p[r] == 0:
            continue
        terms = [K[r, q] * p[q] ** 2 * p[r] / p[q] * O[q] for q in range(R) if p[q] > 0]
        vals[r] = math.fsum(terms)
    return vals, bad | (p == 0)


def side_mask(times, values, b):
    out = []
    for t in times:
        lag = np.asarray(times) - t
        reach = b * (1 + 1e-12)
        left = math.fsum(values[(lag <= 0) & (lag >= -reach)])
        right = math.fsum(values[(lag >= 0) & (lag <= reach)])
        out.append(left > right)
    return np.array(out)


def fit(kind, times, O, Y, b, k, mode="exposure"):
    """``(values, undefined)`` for LL, MBC, BO_LL or BO_MBC; ``None`` if a used pilot vanishes."""
    O = np.asarray(O, float)
    if kind in ("LL", "MBC"):
        return ll(times, O, Y, b, k) if kind == "LL" else mbc(times, O, Y, b, k)
    xi = side_mask(times, O if mode == "occurrence" else np.asarray(Y, float), b)
    one = ll if kind == "BO_LL" else mbc
    vals = np.zeros(len(times))
    bad = np.zeros(len(times), dtype=bool)
    for use, kern in ((xi, left_kernel(k)), (~xi, right_kernel(k))):
        if not use.any():
            continue
        res = one(times, O, Y, b, kern)
        if res is None:
            return None
        vals = np.where(use, res[0], vals)
        bad = np.where(use, res[1], bad)
    return vals, bad


def cv_score(kind, times, O, Y, n, b, k, w, mode="exposure"):
    """Score with every leave-one-occurrence-out fit recomputed from scratch.

    Returns ``None`` where the library must raise (undefined everywhere or a
    vanishing pilot in the full fit).
    """
    O = np.asarray(O, float)
    full = fit(kind, times, O, Y, b, k, mode)
    if full is None or full[1].all():
        return None
    vals, bad = full
    first = math.fsum(np.where(bad, 0.0, vals) ** 2 * Y * w)
    second = []
    for r in range(len(times)):
        if O[r] == 0 or bad[r]:
            continue
        o = O.copy()
        o[r] -= 1
        loo = fit(kind, times, o, Y, b, k, mode)
        value = 0.0 if loo is None or loo[1][r] else loo[0][r]
        second.append(value * w[r] * O[r])
    return (first - 2 * math.fsum(second)) / n


# ------------------------------------------------------------ quadrature
def gauss_legendre(f, a, b, tol=1e-10, order=30):
    """Composite Gauss-Legendre with panel doubling, independent of the library rule."""
    x, w = np.polynomial.legendre.leggauss(order)

    def rule(panels):
        edges = np.linspace(a, b, panels + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            total += half * float(np.dot(w, f(mid + half * x)))
        return total

    prev, panels = rule(1), 2
    while panels < 1 << 14:
        cur = rule(panels)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev, panels = cur, panels * 2
    raise RuntimeError("oracle quadrature did not converge")
