"""Exact piecewise polynomials on a compact support.

Pieces are stored as ``sympy.Poly`` objects over the rationals, so the kernel
algebra (products, derivatives, moments, convolution) carries no rounding
error. Float evaluation goes through coefficients re-expanded around each
piece's midpoint, which keeps high-degree pieces well conditioned.
"""

from __future__ import annotations

from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import sympy
from sympy import Poly, QQ

X = sympy.Symbol("x")

_ZERO = Poly(0, X, domain=QQ)


def to_rational(value) -> sympy.Rational:
    """Exact rational for an int, Fraction, float or sympy number."""
    if isinstance(value, sympy.Rational):
        return value
    if isinstance(value, Fraction):
        return sympy.Rational(value.numerator, value.denominator)
    if isinstance(value, (int, np.integer)):
        return sympy.Rational(int(value))
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return sympy.Rational(Fraction(float(value)).numerator, Fraction(float(value)).denominator)
    return sympy.Rational(value)


def poly(coeffs_low_to_high: Sequence) -> Poly:
    """Polynomial from coefficients given lowest degree first."""
    cs = [to_rational(c) for c in coeffs_low_to_high]
    if not cs:
        return _ZERO
    return Poly(list(reversed(cs)), X, domain=QQ)


def _as_poly(value) -> Poly:
    if isinstance(value, Poly):
        return value
    return Poly(value, X, domain=QQ)


def _linear(a, b) -> Poly:
    """The polynomial ``a + b*x``."""
    return Poly([to_rational(b), to_rational(a)], X, domain=QQ)


class PiecewisePolynomial:
    """A function equal to a polynomial on each ``[breaks[i], breaks[i+1]]`` and 0 outside.

    Values exactly at an interior breakpoint are taken from the right piece,
    except at the last breakpoint, which belongs to the last piece.
    """

    __slots__ = ("breaks", "pieces", "__dict__")

    def __init__(self, breaks: Iterable, pieces: Iterable[Poly]):
        self.breaks = tuple(to_rational(b) for b in breaks)
        self.pieces = tuple(pieces)
        if len(self.breaks) != len(self.pieces) + 1:
            raise ValueError("need exactly one more breakpoint than pieces")
        if any(b1 <= b0 for b0, b1 in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def from_coeffs(cls, breaks: Sequence, coeffs: Sequence[Sequence]) -> "PiecewisePolynomial":
        """Build from per-piece coefficient lists (lowest degree first)."""
        return cls(breaks, [poly(c) for c in coeffs])

    # ------------------------------------------------------------------ shape
    @property
    def support(self) -> tuple[sympy.Rational, sympy.Rational]:
        return self.breaks[0], self.breaks[-1]

    def __repr__(self) -> str:
        lo, hi = self.support
        return f"PiecewisePolynomial(support=[{lo}, {hi}], pieces={len(self.pieces)})"

    def refine(self, breaks: Iterable) -> "PiecewisePolynomial":
        """Same function expressed on the union of its breakpoints and ``breaks``.

        Points of ``breaks`` outside the current support extend it with zero pieces.
        """
        new = sorted(set(self.breaks) | {to_rational(b) for b in breaks})
        pieces = []
        for a, b in zip(new, new[1:]):
            mid = (a + b) / 2
            pieces.append(self._piece_at(mid))
        return PiecewisePolynomial(new, pieces)

    def _piece_at(self, point) -> Poly:
        if point < self.breaks[0] or point > self.breaks[-1]:
            return _ZERO
        for i in range(len(self.pieces)):
            if point <= self.breaks[i + 1]:
                return self.pieces[i]
        return self.pieces[-1]

    def simplify(self) -> "PiecewisePolynomial":
        """Drop zero pieces at the ends and merge equal neighbours."""
        breaks = list(self.breaks)
        pieces = list(self.pieces)
        while len(pieces) > 1 and pieces[0].is_zero:
            pieces.pop(0)
            breaks.pop(0)
        while len(pieces) > 1 and pieces[-1].is_zero:
            pieces.pop()
            breaks.pop()
        out_b, out_p = [breaks[0]], []
        for i, p in enumerate(pieces):
            if out_p and out_p[-1] == p:
                out_b[-1] = breaks[i + 1]
            else:
                out_p.append(p)
                out_b.append(breaks[i + 1])
        return PiecewisePolynomial(out_b, out_p)

    # ------------------------------------------------------------ arithmetic
    def _binary(self, other: "PiecewisePolynomial", op) -> "PiecewisePolynomial":
        a = self.refine(other.breaks)
        b = other.refine(self.breaks)
        return PiecewisePolynomial(a.breaks, [op(p, q) for p, q in zip(a.pieces, b.pieces)])

    def __add__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        return self._binary(other, lambda p, q: p + q)

    def __sub__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        return self._binary(other, lambda p, q: p - q)

    def __neg__(self) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.breaks, [-p for p in self.pieces])

    def __mul__(self, other) -> "PiecewisePolynomial":
        if isinstance(other, PiecewisePolynomial):
            return self._binary(other, lambda p, q: p * q)
        if isinstance(other, Poly):
            return PiecewisePolynomial(self.breaks, [p * other for p in self.pieces])
        c = to_rational(other)
        return PiecewisePolynomial(self.breaks, [p * c for p in self.pieces])

    __rmul__ = __mul__

    def deriv(self) -> "PiecewisePolynomial":
        """Piecewise derivative (jumps at breakpoints are ignored)."""
        return PiecewisePolynomial(self.breaks, [p.diff(X) for p in self.pieces])

    def reflect(self) -> "PiecewisePolynomial":
        """The function ``u -> f(-u)``."""
        neg = _linear(0, -1)
        breaks = [-b for b in reversed(self.breaks)]
        pieces = [p.compose(neg) for p in reversed(self.pieces)]
        return PiecewisePolynomial(breaks, pieces)

    def scale_argument(self, c) -> "PiecewisePolynomial":
        """The function ``u -> f(c*u)`` for ``c > 0``."""
        c = to_rational(c)
        if c <= 0:
            raise ValueError("scale must be positive")
        lin = _linear(0, c)
        return PiecewisePolynomial([b / c for b in self.breaks], [p.compose(lin) for p in self.pieces])

    def restrict(self, lo=None, hi=None) -> "PiecewisePolynomial":
        """Zero the function outside ``[lo, hi]``."""
        s_lo, s_hi = self.support
        lo = s_lo if lo is None else max(s_lo, to_rational(lo))
        hi = s_hi if hi is None else min(s_hi, to_rational(hi))
        if hi <= lo:
            return PiecewisePolynomial([s_lo, s_hi], [_ZERO])
        ref = self.refine([lo, hi])
        keep = [(a, b, p) for a, b, p in zip(ref.breaks, ref.breaks[1:], ref.pieces) if a >= lo and b <= hi]
        return PiecewisePolynomial([keep[0][0]] + [k[1] for k in keep], [k[2] for k in keep])

    # -------------------------------------------------------------- integrals
    def integral(self) -> sympy.Rational:
        total = sympy.Rational(0)
        for a, b, p in zip(self.breaks, self.breaks[1:], self.pieces):
            antider = p.integrate()
            total += antider.eval(b) - antider.eval(a)
        return total

    def moment(self, j: int) -> sympy.Rational:
        """Exact ``int u**j f(u) du``."""
        return (self * Poly(X**j, X, domain=QQ)).integral()

    def convolve(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        """Exact convolution ``(f*g)(x) = int f(u) g(x-u) du``.

        Uses ``g(x-u) = sum_j (-u)**j g^(j)(x) / j!`` so each piece pair costs
        one antiderivative per derivative order of ``g``.
        """
        out_breaks = sorted({a + c for a in self.breaks for c in other.breaks})
        acc: dict = {}
        for a, b, p in zip(self.breaks, self.breaks[1:], self.pieces):
            if p.is_zero:
                continue
            anti: list[Poly] = []
            for c, d, q in zip(other.breaks, other.breaks[1:], other.pieces):
                if q.is_zero:
                    continue
                deg = q.degree()
                while len(anti) <= deg:
                    j = len(anti)
                    anti.append((p * Poly(X**j, X, domain=QQ)).integrate())
                derivs = [q]
                for _ in range(deg):
                    derivs.append(derivs[-1].diff(X))
                for lo_x, hi_x in zip(out_breaks, out_breaks[1:]):
                    if hi_x <= a + c or lo_x >= b + d:
                        continue
                    mid = (lo_x + hi_x) / 2
                    piece = _ZERO
                    for j in range(deg + 1):
                        # limits: lo = max(a, x-d), hi = min(b, x-c)
                        hi_val = anti[j].shift(-c) if mid - c < b else anti[j].eval(b)
                        lo_val = anti[j].shift(-d) if mid - d > a else anti[j].eval(a)
                        span = _as_poly(hi_val) - _as_poly(lo_val)
                        piece += derivs[j] * span * (sympy.Rational(-1) ** j / sympy.factorial(j))
                    acc[lo_x] = acc.get(lo_x, _ZERO) + piece
        pieces = [acc.get(lo_x, _ZERO) for lo_x in out_breaks[:-1]]
        return PiecewisePolynomial(out_breaks, pieces).simplify()

    # ------------------------------------------------------------- evaluation
    @cached_property
    def _float_pieces(self):
        lo = np.array([float(b) for b in self.breaks[:-1]])
        hi = np.array([float(b) for b in self.breaks[1:]])
        mids, coeffs = [], []
        for a, b, p in zip(self.breaks, self.breaks[1:], self.pieces):
            m = (a + b) / 2
            mids.append(float(m))
            coeffs.append([float(c) for c in p.shift(m).all_coeffs()])
        return lo, hi, np.array(mids), coeffs

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        lo, hi, mids, coeffs = self._float_pieces
        last = len(coeffs) - 1
        for i, c in enumerate(coeffs):
            mask = (u >= lo[i]) & ((u < hi[i]) if i < last else (u <= hi[i]))
            if np.any(mask):
                out[mask] = np.polyval(c, u[mask] - mids[i])
        return out

    def eval_exact(self, point) -> sympy.Rational:
        point = to_rational(point)
        s_lo, s_hi = self.support
        if point < s_lo or point > s_hi:
            return sympy.Rational(0)
        for i in range(len(self.pieces)):
            if point < self.breaks[i + 1] or i == len(self.pieces) - 1:
                return self.pieces[i].eval(point)
        raise AssertionError("unreachable")

    def float_breaks(self) -> np.ndarray:
        return np.array([float(b) for b in self.breaks])
