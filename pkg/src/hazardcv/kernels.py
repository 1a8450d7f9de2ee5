"""Kernel algebra for local linear and multiplicatively corrected hazard smoothing.

Kernels come in two flavours:

* *exact* kernels are piecewise polynomials with rational coefficients. Every
  derived kernel (one-sided, equivalent local linear, twicing) and every
  constant (moments, roughness, rho, psi) is computed by exact polynomial
  algebra, with Gauss-Legendre quadrature used only for the final squared
  integrals that involve an irrational rescaling.
* *callable* kernels wrap an arbitrary function on a compact support. They go
  through adaptive quadrature instead and serve as an independent route for
  checking the exact one.

Conventions
-----------
``one_sided(K, Side.LEFT)`` is ``2 K(u) 1{u <= 0}`` and ``Side.RIGHT`` is
``2 K(u) 1{u >= 0}``. The hazard estimators evaluate kernels at ``(s - t)/b``
so that the left kernel looks at the data window ``[t - b, t]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
import sympy

from . import quadrature
from ._piecewise import PiecewisePolynomial, poly, to_rational
from .quadrature import QuadratureError

__all__ = [
    "Side",
    "Kernel",
    "KernelMoments",
    "KernelError",
    "SingularKernelError",
    "AsymmetricKernelError",
    "DerivativeUnavailableError",
    "QuadratureError",
    "epanechnikov",
    "quartic",
    "sextic",
    "get_kernel",
    "custom_kernel",
    "callable_kernel",
    "moments",
    "one_sided",
    "equivalent_local_linear",
    "twicing",
    "rho_ll",
    "rho_mbc",
    "rho",
    "psi_factor",
    "psi_table",
    "BUILTIN_KERNELS",
]

NORMALIZATION_TOL = 1e-10


class KernelError(ValueError):
    pass


class SingularKernelError(KernelError):
    """The local linear denominator ``mu2 - mu1**2`` vanishes."""


class AsymmetricKernelError(KernelError):
    """An operation that needs a symmetric kernel received an asymmetric one."""


class DerivativeUnavailableError(KernelError):
    """The kernel does not expose a derivative."""


class Side(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def other(self) -> "Side":
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


@dataclass(frozen=True)
class KernelMoments:
    mu0: float
    mu1: float
    mu2: float
    roughness: float


class Kernel:
    """A compactly supported kernel with value and derivative.

    Build kernels with the module-level factories rather than directly.
    """

    def __init__(
        self,
        name: str,
        kind: str,
        *,
        pp: Optional[PiecewisePolynomial] = None,
        func: Optional[Callable] = None,
        dfunc: Optional[Callable] = None,
        support: Optional[tuple[float, float]] = None,
        breaks: Sequence[float] = (),
        base: Optional["Kernel"] = None,
        side: Optional[Side] = None,
    ):
        self.name = name
        self.kind = kind
        self.base = base
        self.side = side
        self._pp = pp
        if pp is not None:
            lo, hi = pp.support
            self.support = (float(lo), float(hi))
            self.breaks = tuple(float(b) for b in pp.breaks)
            self._func = pp
            self._dfunc = pp.deriv()
        else:
            if func is None or support is None:
                raise KernelError("callable kernels need func and support")
            lo, hi = float(support[0]), float(support[1])
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise KernelError("support must be a finite interval")
            self.support = (lo, hi)
            self.breaks = tuple(sorted({lo, hi} | {float(b) for b in breaks if lo < b < hi}))
            self._func = func
            self._dfunc = dfunc

    def __repr__(self) -> str:
        return f"Kernel({self.name})"

    @property
    def exact(self) -> bool:
        return self._pp is not None

    @property
    def pp(self) -> PiecewisePolynomial:
        if self._pp is None:
            raise KernelError(f"{self.name} is not a piecewise polynomial kernel")
        return self._pp

    def __call__(self, u) -> np.ndarray:
        return self.eval(u)

    def eval(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        lo, hi = self.support
        inside = (u >= lo) & (u <= hi)
        out = np.zeros(u.shape)
        if np.any(inside):
            out[inside] = np.asarray(self._func(u[inside]), dtype=float)
        return out

    def deriv(self, u) -> np.ndarray:
        if self._dfunc is None:
            raise DerivativeUnavailableError(f"no derivative available for {self.name}")
        u = np.asarray(u, dtype=float)
        lo, hi = self.support
        inside = (u >= lo) & (u <= hi)
        out = np.zeros(u.shape)
        if np.any(inside):
            out[inside] = np.asarray(self._dfunc(u[inside]), dtype=float)
        return out

    @property
    def has_derivative(self) -> bool:
        return self._dfunc is not None

    @property
    def is_symmetric(self) -> bool:
        return _is_symmetric(self)

    def integrate(self, f: Callable[[np.ndarray], np.ndarray], tol: float = 1e-12) -> float:
        """Adaptive quadrature of ``f`` over this kernel's support and breaks."""
        return quadrature.integrate(f, self.breaks, tol=tol)


# ---------------------------------------------------------------- factories
def _polynomial_kernel(name: str, const: Fraction, power: int) -> Kernel:
    body = poly([1, 0, -1]) ** power * sympy.Rational(const.numerator, const.denominator)
    pp = PiecewisePolynomial([-1, 1], [body])
    return Kernel(name, name, pp=pp)


@lru_cache(maxsize=None)
def epanechnikov() -> Kernel:
    """``0.75 (1 - u^2)`` on ``[-1, 1]``."""
    return _polynomial_kernel("epanechnikov", Fraction(3, 4), 1)


@lru_cache(maxsize=None)
def quartic() -> Kernel:
    """``(15/16) (1 - u^2)^2`` on ``[-1, 1]``."""
    return _polynomial_kernel("quartic", Fraction(15, 16), 2)


@lru_cache(maxsize=None)
def sextic() -> Kernel:
    """``(3003/2048) (1 - u^2)^6`` on ``[-1, 1]``."""
    return _polynomial_kernel("sextic", Fraction(3003, 2048), 6)


BUILTIN_KERNELS = {"epanechnikov": epanechnikov, "quartic": quartic, "sextic": sextic}


def get_kernel(name: str) -> Kernel:
    try:
        return BUILTIN_KERNELS[name.lower()]()
    except KeyError:
        raise KernelError(f"unknown kernel {name!r}; expected one of {sorted(BUILTIN_KERNELS)}") from None


def custom_kernel(breaks: Sequence, coeffs: Sequence[Sequence], name: str = "custom") -> Kernel:
    """Piecewise polynomial kernel; ``coeffs[i]`` holds piece ``i`` lowest degree first.

    Floats are converted to rationals exactly, so the kernel must integrate to
    one up to ``1e-10``.
    """
    pp = PiecewisePolynomial.from_coeffs(breaks, coeffs)
    total = float(pp.integral())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise KernelError(f"kernel integrates to {total!r}, not 1")
    return Kernel(name, "custom", pp=pp)


def callable_kernel(
    func: Callable,
    support: tuple[float, float],
    deriv: Optional[Callable] = None,
    breaks: Sequence[float] = (),
    name: str = "custom",
    check: bool = True,
) -> Kernel:
    """Kernel backed by a vectorised function; constants come from quadrature."""
    k = Kernel(name, "custom", func=func, dfunc=deriv, support=support, breaks=breaks)
    if check:
        total = k.integrate(k.eval)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise KernelError(f"kernel integrates to {total!r}, not 1")
    return k


# ------------------------------------------------------------------ algebra
def _is_symmetric(k: Kernel) -> bool:
    if k.exact:
        lo, hi = k.pp.support
        if lo != -hi:
            return False
        diff = (k.pp - k.pp.reflect()).simplify()
        return all(p.is_zero for p in diff.pieces)
    lo, hi = k.support
    if not np.isclose(lo, -hi):
        return False
    u = np.linspace(0.0, hi, 257)
    return bool(np.allclose(k.eval(u), k.eval(-u), rtol=1e-12, atol=1e-14))


@lru_cache(maxsize=None)
def _exact_moments(k: Kernel) -> tuple[sympy.Rational, ...]:
    pp = k.pp
    return pp.moment(0), pp.moment(1), pp.moment(2), (pp * pp).integral()


def moments(kernel: Kernel) -> KernelMoments:
    """Zeroth to second moments and roughness ``R = int K^2``."""
    if kernel.exact:
        m0, m1, m2, r = (float(v) for v in _exact_moments(kernel))
        return KernelMoments(m0, m1, m2, r)
    f = kernel.eval
    m0 = kernel.integrate(f)
    m1 = kernel.integrate(lambda u: u * f(u))
    m2 = kernel.integrate(lambda u: u * u * f(u))
    r = kernel.integrate(lambda u: f(u) ** 2)
    return KernelMoments(m0, m1, m2, r)


@lru_cache(maxsize=None)
def one_sided(kernel: Kernel, side: Side) -> Kernel:
    """Doubled kernel restricted to ``u <= 0`` (left) or ``u >= 0`` (right)."""
    side = Side(side)
    if not kernel.is_symmetric:
        raise AsymmetricKernelError(f"one-sided construction needs a symmetric kernel, got {kernel.name}")
    name = f"one_sided({kernel.name}, {side.value})"
    if kernel.exact:
        pp = kernel.pp.restrict(None, 0) if side is Side.LEFT else kernel.pp.restrict(0, None)
        return Kernel(name, "one_sided", pp=pp * 2, base=kernel, side=side)

    def mask(u):
        return (u <= 0) if side is Side.LEFT else (u >= 0)

    lo, hi = kernel.support
    support = (lo, 0.0) if side is Side.LEFT else (0.0, hi)
    dfunc = None
    if kernel.has_derivative:
        dfunc = lambda u: 2.0 * kernel.deriv(u) * mask(u)  # noqa: E731
    return Kernel(
        name,
        "one_sided",
        func=lambda u: 2.0 * kernel.eval(u) * mask(u),
        dfunc=dfunc,
        support=support,
        breaks=kernel.breaks,
        base=kernel,
        side=side,
    )


@lru_cache(maxsize=None)
def equivalent_local_linear(kernel: Kernel) -> Kernel:
    """``(mu2 - mu1 u) / (mu2 - mu1^2) * L(u)``; the identity for symmetric kernels.

    The result has zeroth moment one and first moment zero. Its second moment
    is negative for one-sided inputs, so only a vanishing denominator is an
    error. A kernel with zero first moment is returned unchanged, which also
    covers fourth-order kernels such as twicing kernels.
    """
    name = f"equivalent({kernel.name})"
    if kernel.exact:
        _, m1, m2, _ = _exact_moments(kernel)
        if m1 == 0:
            return kernel
        denom = m2 - m1**2
        if denom == 0:
            raise SingularKernelError(f"mu2 - mu1^2 = {denom} for {kernel.name}")
        pp = kernel.pp * poly([m2, -m1]) * (1 / denom)
        return Kernel(name, "equivalent", pp=pp, base=kernel, side=kernel.side)
    mom = moments(kernel)
    if abs(mom.mu1) < 1e-14:
        return kernel
    denom = mom.mu2 - mom.mu1**2
    if abs(denom) < 1e-14:
        raise SingularKernelError(f"mu2 - mu1^2 = {denom} for {kernel.name}")
    m1, m2 = mom.mu1, mom.mu2
    dfunc = None
    if kernel.has_derivative:
        dfunc = lambda u: ((m2 - m1 * u) * kernel.deriv(u) - m1 * kernel.eval(u)) / denom  # noqa: E731
    return Kernel(
        name,
        "equivalent",
        func=lambda u: (m2 - m1 * u) / denom * kernel.eval(u),
        dfunc=dfunc,
        support=kernel.support,
        breaks=kernel.breaks,
        base=kernel,
        side=kernel.side,
    )


@lru_cache(maxsize=None)
def twicing(kernel: Kernel) -> Kernel:
    """``2 L - L * L``; support doubles."""
    name = f"twicing({kernel.name})"
    if kernel.exact:
        pp = (kernel.pp * 2 - kernel.pp.convolve(kernel.pp)).simplify()
        return Kernel(name, "twicing", pp=pp, base=kernel, side=kernel.side)
    lo, hi = kernel.support
    inner_breaks = kernel.breaks

    def self_convolution(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(x.shape)
        for i, xi in enumerate(x):
            pts = sorted({*inner_breaks, *(xi - b for b in inner_breaks)})
            pts = [p for p in pts if lo <= p <= hi]
            if len(pts) < 2:
                out[i] = 0.0
                continue
            out[i] = quadrature.integrate(lambda u: kernel.eval(u) * kernel.eval(xi - u), pts, tol=1e-13)
        return out

    outer = sorted({a + b for a in inner_breaks for b in inner_breaks} | set(inner_breaks))
    return Kernel(
        name,
        "twicing",
        func=lambda u: 2.0 * kernel.eval(u) - self_convolution(u),
        support=(2 * lo, 2 * hi),
        breaks=outer,
        base=kernel,
        side=kernel.side,
    )


def _require_symmetric(kernel: Kernel) -> None:
    if not kernel.is_symmetric:
        raise AsymmetricKernelError(f"{kernel.name} is not symmetric")


def _roughness(k: Kernel) -> float:
    return moments(k).roughness


@lru_cache(maxsize=None)
def rho_ll(kernel: Kernel, side: Side = Side.LEFT) -> float:
    """Rescaling from a one-sided local linear bandwidth to the ``kernel`` bandwidth."""
    _require_symmetric(kernel)
    eq = equivalent_local_linear(one_sided(kernel, Side(side)))
    mk, me = moments(kernel), moments(eq)
    return (mk.roughness / me.roughness * me.mu2**2 / mk.mu2**2) ** 0.2


@lru_cache(maxsize=None)
def rho_mbc(kernel: Kernel, side: Side = Side.LEFT) -> float:
    """As :func:`rho_ll` for the multiplicatively bias corrected estimator."""
    _require_symmetric(kernel)
    eq = equivalent_local_linear(one_sided(kernel, Side(side)))
    mk, me = moments(kernel), moments(eq)
    r_k = _roughness(twicing(kernel))
    r_e = _roughness(twicing(eq))
    return (r_k / r_e * me.mu2**4 / mk.mu2**4) ** (1.0 / 9.0)


def rho(kernel: Kernel, estimator: str) -> float:
    """``rho_ll`` or ``rho_mbc`` by estimator name (``"LL"``/``"MBC"``)."""
    est = estimator.upper()
    if est == "LL":
        return rho_ll(kernel)
    if est == "MBC":
        return rho_mbc(kernel)
    raise ValueError(f"unknown estimator {estimator!r}")


# ---------------------------------------------------------------------- psi
# For a kernel L with equivalent kernel E = equivalent_local_linear(L):
#   E1(u) = -E(u) - u E'(u)
#   G_L(w) = 2 E1(w)
#   H_L(w) = int E(u) {E1(u + w) + E1(u - w)} du = C(w) + C(-w),  C = E(-.) * E1
# One-sided G enters the selector variance only through its even part, since
# the leave-one-out term is a U-statistic over unordered pairs.

PSI_METHODS = ("BO", "DO", "CV", "MISE")


@dataclass(frozen=True)
class _PsiParts:
    g: Callable
    h: Callable
    g_even: Callable
    breaks: tuple[float, ...]
    roughness: float


@lru_cache(maxsize=None)
def _psi_parts(kernel: Kernel) -> _PsiParts:
    eq = equivalent_local_linear(kernel)
    if eq.exact:
        e = eq.pp
        e1 = -e - e.deriv() * poly([0, 1])
        g = e1 * 2
        c = e.reflect().convolve(e1)
        h = (c + c.reflect()).simplify()
        g_even = ((g + g.reflect()) * sympy.Rational(1, 2)).simplify()
        brk = tuple(sorted({float(b) for b in (*h.breaks, *g.breaks, *g_even.breaks)}))
        return _PsiParts(g, h, g_even, brk, float((e * e).integral()))
    if not eq.has_derivative:
        raise DerivativeUnavailableError(f"psi factors need the derivative of {kernel.name}")

    def e1(u):
        return -eq.eval(u) - u * eq.deriv(u)

    def g(w):
        return 2.0 * e1(np.asarray(w, dtype=float))

    lo, hi = eq.support
    eb = eq.breaks

    def h(w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        out = np.empty(w.shape)
        for i, wi in enumerate(w):
            pts = sorted({*eb, *(b - wi for b in eb), *(b + wi for b in eb)})
            pts = [p for p in pts if lo <= p <= hi]
            out[i] = quadrature.integrate(lambda u: eq.eval(u) * (e1(u + wi) + e1(u - wi)), pts, tol=1e-12)
        return out

    def g_even(w):
        w = np.asarray(w, dtype=float)
        return 0.5 * (g(w) + g(-w))

    width = hi - lo
    brk = sorted({*eb, *(-b for b in eb), *(b - c for b in eb for c in eb), *(c - b for b in eb for c in eb)})
    brk = tuple(p for p in brk if -width <= p <= width)
    return _PsiParts(g, h, g_even, brk, _roughness(eq))


def _squared_integral(f: Callable, breaks: Sequence[float], tol: float) -> float:
    order = 64
    return quadrature.integrate(lambda u: f(u) ** 2, breaks, tol=tol, order=order)


def _psi_kernels(kernel: Kernel, estimator: str) -> tuple[Kernel, Kernel, float]:
    """Target kernel, one-sided comparison kernel and rho for an estimator."""
    eq_left = equivalent_local_linear(one_sided(kernel, Side.LEFT))
    if estimator == "LL":
        return kernel, eq_left, rho_ll(kernel)
    return twicing(kernel), twicing(eq_left), rho_mbc(kernel)


def psi_factor(method: str, estimator: str, kernel: Kernel, tol: Optional[float] = None) -> float:
    """Asymptotic variance factor of a bandwidth selector.

    Parameters
    ----------
    method : {"BO", "DO", "CV", "MISE"}
        Best one-sided, double one-sided, ordinary cross-validation, or the
        infeasible MISE-optimal (plug-in target) bandwidth.
    estimator : {"LL", "MBC"}
    kernel : Kernel
        Symmetric, differentiable inside its support.
    tol : float, optional
        Quadrature tolerance for the outer squared integral. Defaults to
        ``1e-10`` for exact kernels and ``1e-6`` for callable ones.
    """
    method, estimator = method.upper(), estimator.upper()
    if method not in PSI_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if estimator not in ("LL", "MBC"):
        raise ValueError(f"unknown estimator {estimator!r}")
    _require_symmetric(kernel)
    if not kernel.has_derivative:
        raise DerivativeUnavailableError(f"psi factors need the derivative of {kernel.name}")
    if tol is None:
        tol = 1e-10 if kernel.exact else 1e-6
    target, side_kernel, r = _psi_kernels(kernel, estimator)
    tp = _psi_parts(target)
    if method == "CV":
        return _squared_integral(tp.g, tp.breaks, tol)
    if method == "MISE":
        return _squared_integral(tp.h, tp.breaks, tol)
    sp = _psi_parts(side_kernel)
    scale = tp.roughness / sp.roughness

    def integrand(u):
        ru = r * u
        return scale * (sp.h(ru) - sp.g_even(ru)) - tp.h(u)

    breaks = sorted({*tp.breaks, *(b / r for b in sp.breaks)})
    return _squared_integral(integrand, breaks, tol)


def psi_table(kernels: Sequence[Kernel] = ()) -> dict[tuple[str, str, str], float]:
    """All psi factors keyed by ``(method, estimator, kernel name)``."""
    kernels = list(kernels) or [f() for f in BUILTIN_KERNELS.values()]
    table = {}
    for k in kernels:
        for est in ("LL", "MBC"):
            for method in PSI_METHODS:
                if method == "DO" and ("BO", est, k.name) in table:
                    # identical formula
                    table[(method, est, k.name)] = table[("BO", est, k.name)]
                    continue
                table[(method, est, k.name)] = psi_factor(method, est, k)
    return table
