"""Simulation studies: true hazard models, binomial grid data and error metrics.

Replication ``k`` of a study with seed ``s`` draws from
``Generator(Philox(SeedSequence(s, spawn_key=(k,))))``, which equals the
``k``-th child of ``SeedSequence(s).spawn(...)`` and can be regenerated alone.
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from . import quadrature
from .data import GridSample, WeightScheme
from .estimators import EstimatorKind, HazardEstimate, estimate
from .kernels import Kernel, equivalent_local_linear, get_kernel, moments, twicing
from .selection import BandwidthGrid, SelectionError, select

__all__ = [
    "ConfigurationError",
    "UnboundedBandwidthError",
    "HazardModel",
    "beta_mixture",
    "exponential_decay",
    "custom_model",
    "DEFAULT_MODELS",
    "default_model",
    "SimulationConfig",
    "StudyConfig",
    "replication_rng",
    "generate",
    "generate_replication",
    "expected_exposure",
    "ise",
    "RerrResult",
    "relative_error",
    "StudyResult",
    "run_study",
    "empirical_mise",
    "rerr",
    "mise_optimal_bandwidth",
    "theorem_constants",
    "load_study_config",
]


class ConfigurationError(ValueError):
    """Invalid simulation or study configuration."""


class UnboundedBandwidthError(ArithmeticError):
    """The bias functional vanishes, so the MISE-optimal bandwidth is infinite."""


# ------------------------------------------------------------------ models
def _five_point_dd(f: Callable, t: np.ndarray, h: float) -> np.ndarray:
    return (-f(t + 2 * h) + 16 * f(t + h) - 30 * f(t) + 16 * f(t - h) - f(t - 2 * h)) / (12 * h * h)


@dataclass(frozen=True, eq=False)
class HazardModel:
    """True hazard on ``window`` with its second derivative.

    ``alpha_dd`` defaults to a five-point finite difference. ``h`` is the MBC
    bias function ``alpha * (alpha''/alpha)''``; when not given it is obtained
    by differencing ``alpha''/alpha``.
    """

    alpha: Callable[[np.ndarray], np.ndarray]
    window: tuple[float, float]
    alpha_dd: Optional[Callable[[np.ndarray], np.ndarray]] = None
    kind: str = "custom"
    params: Mapping = field(default_factory=dict)
    name: str = "custom"
    h: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        t0, t1 = (float(x) for x in self.window)
        if not (np.isfinite(t0) and np.isfinite(t1) and t1 > t0):
            raise ConfigurationError("model window must be a finite interval")
        object.__setattr__(self, "window", (t0, t1))
        probe = np.linspace(t0, t1, 257)[1:-1]
        vals = np.asarray(self.alpha(probe), dtype=float)
        if vals.shape != probe.shape or not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ConfigurationError(f"hazard of model {self.name!r} must be finite and non-negative")
        if self.alpha_dd is not None:
            self._check_second_derivative(probe)

    @property
    def length(self) -> float:
        return self.window[1] - self.window[0]

    def _step(self) -> float:
        return 1e-3 * self.length

    def second_derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.alpha_dd is not None:
            return np.asarray(self.alpha_dd(t), dtype=float)
        return _five_point_dd(self.alpha, t, self._step())

    def bias_function(self, t) -> np.ndarray:
        """``h(t) = alpha(t) * (alpha''(t)/alpha(t))''``."""
        t = np.asarray(t, dtype=float)
        if self.h is not None:
            return np.asarray(self.h(t), dtype=float)
        step = 10 * self._step()
        t0, t1 = self.window
        # keep the stencil inside the window (one-sided near the ends)
        centre = np.clip(t, t0 + 2.5 * step, t1 - 2.5 * step)
        ratio = lambda s: self.second_derivative(s) / self.alpha(s)  # noqa: E731
        return self.alpha(t) * _five_point_dd(ratio, centre, step)

    def _check_second_derivative(self, probe: np.ndarray) -> None:
        t0, t1 = self.window
        h = 1e-3 * self.length
        t = probe[(probe > t0 + 0.05 * self.length) & (probe < t1 - 0.05 * self.length)][::16]
        exact = np.asarray(self.alpha_dd(t), dtype=float)
        approx = _five_point_dd(self.alpha, t, h)
        level = np.max(np.abs(self.alpha(t))) / self.length**2
        scale = max(np.max(np.abs(exact)), np.max(np.abs(approx)), level, 1e-300)
        if np.max(np.abs(exact - approx)) > 1e-4 * scale:
            raise ConfigurationError(f"alpha_dd of model {self.name!r} disagrees with finite differences")


def _beta_pdf_dd(x: np.ndarray, a: float, b: float) -> np.ndarray:
    """Second derivative of the Beta(a, b) density on (0, 1)."""
    x = np.clip(x, 1e-300, 1 - 1e-16)
    p, q = a - 1.0, b - 1.0
    f = stats.beta.pdf(x, a, b)
    g = p / x - q / (1 - x)
    return f * (g * g - p / x**2 - q / (1 - x) ** 2)


def beta_mixture(
    components: Sequence[tuple[float, float, float]],
    scale: float = math.log(4.0),
    window: tuple[float, float] = (0.0, 1.0),
    name: str = "beta_mixture",
) -> HazardModel:
    """``alpha(t) = scale * sum_k w_k Beta(u; a_k, b_k) / L`` with ``u = (t - t0)/L``.

    The mixture integrates to one over the window, so ``scale`` is the
    cumulative hazard; the default ``log 4`` leaves a quarter of an untruncated
    cohort censored at the end of the window.
    """
    comps = tuple((float(w), float(a), float(b)) for w, a, b in components)
    if not comps or any(w < 0 or a <= 0 or b <= 0 for w, a, b in comps):
        raise ConfigurationError("beta mixture needs positive shape parameters and non-negative weights")
    total = sum(w for w, _, _ in comps)
    if not total > 0:
        raise ConfigurationError("beta mixture weights sum to zero")
    comps = tuple((w / total, a, b) for w, a, b in comps)
    t0, t1 = float(window[0]), float(window[1])
    L = t1 - t0

    def alpha(t):
        u = (np.asarray(t, dtype=float) - t0) / L
        return scale * sum(w * stats.beta.pdf(u, a, b) for w, a, b in comps) / L

    def alpha_dd(t):
        u = (np.asarray(t, dtype=float) - t0) / L
        return scale * sum(w * _beta_pdf_dd(u, a, b) for w, a, b in comps) / L**3

    params = {"components": [list(c) for c in comps], "scale": scale}
    return HazardModel(alpha, (t0, t1), alpha_dd, "beta_mixture", params, name)


def exponential_decay(
    level: float,
    rate: float,
    window: tuple[float, float] = (40.0, 110.0),
    name: str = "exponential_decay",
) -> HazardModel:
    """``alpha(t) = level * exp(rate * (t - t0))``.

    A positive ``rate`` gives a Gompertz-type mortality hazard whose risk set
    decays at an accelerating pace; a negative one a decaying hazard.
    ``alpha''/alpha`` is constant, so ``h`` vanishes identically.
    """
    level, rate = float(level), float(rate)
    if not level > 0:
        raise ConfigurationError("exponential model needs a positive level")
    t0 = float(window[0])

    def alpha(t):
        return level * np.exp(rate * (np.asarray(t, dtype=float) - t0))

    def alpha_dd(t):
        return rate * rate * alpha(t)

    def h(t):
        return np.zeros_like(np.asarray(t, dtype=float))

    params = {"level": level, "rate": rate}
    return HazardModel(alpha, (t0, float(window[1])), alpha_dd, "exponential_decay", params, name, h)


def custom_model(alpha, window, alpha_dd=None, name: str = "custom", h=None) -> HazardModel:
    return HazardModel(alpha, tuple(window), alpha_dd, "custom", {}, name, h)


def _old_age() -> HazardModel:
    rate = 0.1
    level = math.log(4.0) * rate / math.expm1(70 * rate)
    return exponential_decay(level, rate, (40.0, 110.0), name="old_age")


# Non-canonical defaults: qualitative regimes only, not the unpublished models.
# Beta shapes stay >= 5 so that h = alpha (alpha''/alpha)'' is square integrable.
DEFAULT_MODELS: dict[str, Callable[[], HazardModel]] = {
    "unimodal": lambda: beta_mixture([(1.0, 5.0, 5.0)], name="unimodal"),
    "bimodal": lambda: beta_mixture([(0.5, 5.0, 14.0), (0.5, 14.0, 5.0)], name="bimodal"),
    "sharp": lambda: beta_mixture([(0.7, 5.0, 5.0), (0.3, 40.0, 40.0)], name="sharp"),
    "boundary": lambda: beta_mixture([(0.6, 5.0, 30.0), (0.4, 30.0, 5.0)], name="boundary"),
    "old_age": _old_age,
}


def default_model(name: str) -> HazardModel:
    try:
        return DEFAULT_MODELS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown model {name!r}; choose from {sorted(DEFAULT_MODELS)}") from None


# -------------------------------------------------------------- generation
@dataclass(frozen=True, eq=False)
class SimulationConfig:
    model: HazardModel
    n: int
    R: int = 500
    truncation: str = "none"
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if int(self.R) < 2:
            raise ConfigurationError("R must be at least 2")
        if int(self.n) < 1:
            raise ConfigurationError("n must be positive")
        if int(self.replications) < 1:
            raise ConfigurationError("replications must be positive")
        if self.truncation not in ("none", "uniform"):
            raise ConfigurationError(f"truncation must be 'none' or 'uniform', got {self.truncation!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    @property
    def delta(self) -> float:
        return self.model.length / (self.R + 1)

    @property
    def grid_times(self) -> np.ndarray:
        """``t_r = t0 + r * delta`` for ``r = 1..R``."""
        return self.model.window[0] + self.delta * np.arange(1, self.R + 1)

    def event_probabilities(self) -> np.ndarray:
        p = np.asarray(self.model.alpha(self.grid_times), dtype=float) * self.delta
        bad = np.flatnonzero(p > 1)
        if bad.size:
            r = int(bad[0])
            raise ConfigurationError(f"alpha(t_r) * delta = {p[r]:.6g} > 1 at cell {r + 1} (t = {self.grid_times[r]:.6g})")
        return p


def replication_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(k),))))


def _draw(config: SimulationConfig, rng: np.random.Generator) -> GridSample:
    p = config.event_probabilities()
    R, n, d = config.R, int(config.n), config.delta
    if config.truncation == "uniform":
        entries = rng.multinomial(n, np.full(R, 1.0 / R))
    else:
        entries = np.zeros(R, dtype=np.int64)
        entries[0] = n
    occ = np.zeros(R, dtype=np.int64)
    risk = np.zeros(R, dtype=np.int64)
    carry = 0
    for r in range(R):
        at_risk = carry + int(entries[r])
        risk[r] = at_risk
        occ[r] = rng.binomial(at_risk, p[r]) if at_risk else 0
        carry = at_risk - int(occ[r])
    t0, t1 = config.model.window
    # cells of width delta centred on t_r = t0 + r*delta
    return GridSample(t0 + 0.5 * d, t1, occ, risk * d, n, d)


def generate_replication(config: SimulationConfig, k: int) -> GridSample:
    """Sample of replication ``k`` (0-based)."""
    return _draw(config, replication_rng(config.seed, k))


def generate(config: SimulationConfig) -> GridSample:
    """Binomial grid sample: ``O_r ~ Bin(Y_r, alpha(t_r) delta)`` over a shrinking risk set.

    ``Y_r`` counts individuals at risk at the start of cell ``r``; the stored
    exposure is ``Y_r * delta``. Uniform truncation draws each individual's
    entry cell uniformly over the grid. Returns replication 0.
    """
    return generate_replication(config, 0)


def expected_exposure(config: SimulationConfig) -> Callable[[np.ndarray], np.ndarray]:
    """``gamma(t) = E[Y(t)]/n`` of the generator, interpolated between grid points."""
    p = config.event_probabilities()
    R = config.R
    survive = np.concatenate([[1.0], np.cumprod(1.0 - p)[:-1]])
    if config.truncation == "uniform":
        # sum over entry cells e <= r of (1/R) * prod_{e <= q < r} (1 - p_q)
        gamma = np.empty(R)
        acc = 0.0
        for r in range(R):
            acc = acc * (1.0 - p[r - 1]) + 1.0 / R if r else 1.0 / R
            gamma[r] = acc
    else:
        gamma = survive
    t = config.grid_times

    def oracle(s):
        return np.interp(np.asarray(s, dtype=float), t, gamma)

    oracle.breaks = tuple(t)  # kinks of the interpolant, used as quadrature breaks
    return oracle


# ------------------------------------------------------------------ metrics
def ise(est: HazardEstimate, model: HazardModel, weights: Optional[WeightScheme] = None) -> float:
    """``n^-1 sum_r (alpha_hat(t_r) - alpha(t_r))^2 Y_r w_r``."""
    sample = est.sample
    w = (weights or WeightScheme.unit_product()).values(sample)
    err = est.values - np.asarray(model.alpha(sample.times), dtype=float)
    return float(math.fsum(err * err * sample.exposures * w) / sample.n)


@dataclass(frozen=True)
class RerrResult:
    value: float
    degenerate: bool


def relative_error(m1_cv: float, m1_method: float, m1_ise: float) -> RerrResult:
    """``(m1(CV) - m1(ISE)) / (m1(method) - m1(ISE))``; a non-positive denominator is degenerate."""
    den = m1_method - m1_ise
    if not den > 0:
        return RerrResult(float("nan"), True)
    return RerrResult((m1_cv - m1_ise) / den, False)


# -------------------------------------------------------------------- study
@dataclass(frozen=True, eq=False)
class StudyConfig:
    """A Monte Carlo comparison of bandwidth selectors.

    ``grid=None`` builds 100 equally spaced bandwidths from
    ``max(2 delta, b0/4)`` to ``3 b0``, with ``b0`` the MISE-optimal local
    linear bandwidth of the model.
    """

    simulation: SimulationConfig
    estimator: str = "LL"
    kernel: str = "sextic"
    methods: tuple[str, ...] = ("CV", "DO", "BO")
    grid: Optional[BandwidthGrid] = None
    mode: str = "exposure"
    workers: int = 1

    def __post_init__(self):
        est = self.estimator.upper()
        if est not in ("LL", "MBC"):
            raise ConfigurationError(f"estimator must be LL or MBC, got {self.estimator!r}")
        object.__setattr__(self, "estimator", est)
        methods = tuple(m.upper() for m in self.methods)
        allowed = {"CV", "DO", "BO", "OSCV_L", "OSCV_R"}
        if not set(methods) <= allowed:
            raise ConfigurationError(f"methods must be among {sorted(allowed)}")
        object.__setattr__(self, "methods", methods)

    def kernel_obj(self) -> Kernel:
        return get_kernel(self.kernel)

    def bandwidth_grid(self) -> BandwidthGrid:
        if self.grid is not None:
            return self.grid
        sim = self.simulation
        b0 = mise_optimal_bandwidth(sim.model, self.kernel_obj(), "LL", expected_exposure(sim), sim.n)
        lo = max(2.0 * sim.delta, 0.25 * b0)
        hi = max(3.0 * b0, 2.0 * lo)
        return BandwidthGrid.linspace(lo, min(hi, sim.model.length), 100)


def _replicate(args) -> dict:
    study, grid, k = args
    sim = study.simulation
    sample = generate_replication(sim, k)
    kernel = study.kernel_obj()
    kind = EstimatorKind(study.estimator)
    w = WeightScheme.unit_product()
    trace = np.array([ise(estimate(sample, b, kernel, kind), sim.model, w) for b in grid.values])
    row = {"ISE_trace": trace, "ISE": float(np.min(trace)), "b_ISE": grid.values[int(np.argmin(trace))]}
    for method in study.methods:
        try:
            res = select(method, sample, grid, study.estimator, kernel, w, study.mode)
        except SelectionError:
            row[method], row["b_" + method], row["edge_" + method] = float("nan"), float("nan"), True
            continue
        row["b_" + method] = res.bandwidth
        row["edge_" + method] = res.diagnostics.minimum_at_grid_edge
        row[method] = ise(estimate(sample, res.bandwidth, kernel, kind), sim.model, w)
    return row


@dataclass(frozen=True, eq=False)
class StudyResult:
    config: StudyConfig
    grid: BandwidthGrid
    replications: tuple[dict, ...]

    def m1(self, method: str) -> float:
        """Empirical MISE of a method; ``MISE`` is the best fixed grid bandwidth."""
        method = method.upper()
        if method == "MISE":
            traces = np.array([r["ISE_trace"] for r in self.replications])
            return float(np.min([math.fsum(col) / len(col) for col in traces.T]))
        vals = [r[method] for r in self.replications]
        return math.fsum(vals) / len(vals)

    def bandwidths(self, method: str) -> np.ndarray:
        return np.array([r["b_" + method.upper()] for r in self.replications])

    def edge_flags(self, method: str) -> np.ndarray:
        return np.array([r["edge_" + method.upper()] for r in self.replications], dtype=bool)

    def rerr(self, method: str) -> RerrResult:
        return relative_error(self.m1("CV"), self.m1(method), self.m1("ISE"))

    def rows(self) -> list[list]:
        sim = self.config.simulation
        out = []
        for method in ("ISE", "MISE") + self.config.methods:
            r = self.rerr(method) if method in ("DO", "BO", "OSCV_L", "OSCV_R") and "CV" in self.config.methods else None
            out.append([
                sim.model.name,
                sim.n,
                self.config.estimator,
                method,
                repr(self.m1(method)),
                "" if r is None or r.degenerate else repr(r.value),
            ])
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "n", "estimator", "method", "m1", "rerr"])
            w.writerows(self.rows())

    def bandwidths_to_csv(self, path) -> None:
        methods = ("ISE",) + self.config.methods
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replication"] + [f"b_{m}" for m in methods])
            for k, rep in enumerate(self.replications):
                w.writerow([k] + [repr(float(rep["b_" + m])) for m in methods])


_SHARED: tuple = ()


def _init_worker(study, grid) -> None:
    global _SHARED
    _SHARED = (study, grid)


def _replicate_shared(k: int) -> dict:
    return _replicate(_SHARED + (k,))


def run_study(study: StudyConfig) -> StudyResult:
    """Run every replication; results are ordered by replication index."""
    grid = study.bandwidth_grid()
    n_rep = study.simulation.replications
    if study.workers > 1 and n_rep > 1:
        # models hold closures, so workers inherit the study by forking instead of pickling it
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(min(study.workers, n_rep), ctx, _init_worker, (study, grid)) as pool:
            reps = list(pool.map(_replicate_shared, range(n_rep)))
    else:
        reps = [_replicate((study, grid, k)) for k in range(n_rep)]
    return StudyResult(study, grid, tuple(reps))


def _needed_methods(study: StudyConfig, extra: Sequence[str]) -> StudyConfig:
    methods = tuple(dict.fromkeys(tuple(study.methods) + tuple(m.upper() for m in extra)))
    return replace(study, methods=methods)


def empirical_mise(method: str, study: StudyConfig) -> float:
    """Monte Carlo mean ISE of ``method`` (``ISE`` and ``MISE`` name the oracles)."""
    m = method.upper()
    extra = () if m in ("ISE", "MISE") else (m,)
    return run_study(_needed_methods(study, extra)).m1(m)


def rerr(method: str, study: StudyConfig) -> RerrResult:
    m = method.upper()
    if m not in ("BO", "DO"):
        raise ConfigurationError("rerr compares BO or DO against CV")
    return run_study(_needed_methods(study, ("CV", m))).rerr(m)


# ----------------------------------------------------------------- oracles
def _weight_function(weights, gamma):
    """``None`` means ``w Y == 1``, i.e. ``w = 1/gamma`` up to the factor ``1/n``."""
    if weights is None:
        return lambda t: np.where(gamma(t) > 0, 1.0 / np.maximum(gamma(t), 1e-300), 0.0)
    if callable(weights):
        return lambda t: np.broadcast_to(np.asarray(weights(t), dtype=float), np.shape(t))
    c = float(weights)
    return lambda t: np.full(np.shape(t), c)


def _window_integral(f: Callable, model: HazardModel, kinks=()) -> float:
    t0, t1 = model.window
    kinks = np.asarray(kinks, dtype=float)
    breaks = np.union1d(np.linspace(t0, t1, 17), kinks[(kinks > t0) & (kinks < t1)])
    first = quadrature.fixed_gauss(f, breaks, 1, 20)
    return quadrature.integrate(f, breaks, tol=1e-11 * max(abs(first), 1e-300), order=20)


def _kernel_constants(kernel: Kernel, estimator: str):
    eq = equivalent_local_linear(kernel)
    mu2 = float(moments(eq).mu2)
    if estimator == "LL":
        return mu2, float(moments(eq).roughness)
    return mu2, float(moments(twicing(eq)).roughness)


def _zero_tolerance(model: HazardModel, f: Callable, power: int) -> bool:
    t = np.linspace(*model.window, 401)[1:-1]
    scale = np.max(np.abs(model.alpha(t))) / model.length**power
    # h from two nested finite differences carries noise near 1e-6 relative
    rel = 1e-4 if power == 4 and model.h is None and model.alpha_dd is None else 1e-7
    return bool(np.max(np.abs(f(t))) <= rel * max(scale, 1e-300))


def mise_optimal_bandwidth(
    model: HazardModel,
    kernel: Kernel,
    estimator_kind: str,
    gamma: Callable[[np.ndarray], np.ndarray],
    n: int,
    weights=None,
) -> float:
    """Deterministic MISE-optimal bandwidth ``C0 n^{-1/5}`` (LL) or ``C0 n^{-1/9}`` (MBC).

    ``weights`` is a function of time, a constant, or ``None`` for the
    unit-product convention ``w = 1/gamma``.

    Raises
    ------
    UnboundedBandwidthError
        If ``alpha''`` (LL) or ``h`` (MBC) vanishes on the window.
    """
    est = str(estimator_kind).upper()
    if est not in ("LL", "MBC"):
        raise ConfigurationError(f"estimator must be LL or MBC, got {estimator_kind!r}")
    w = _weight_function(weights, gamma)
    kinks = getattr(gamma, "breaks", ())
    mu2, rough = _kernel_constants(kernel, est)
    num = rough * _window_integral(lambda t: model.alpha(t) * w(t), model, kinks)
    if est == "LL":
        if _zero_tolerance(model, model.second_derivative, 2):
            raise UnboundedBandwidthError("alpha'' vanishes: the local linear bias is zero")
        den = mu2**2 * _window_integral(lambda t: model.second_derivative(t) ** 2 * gamma(t) * w(t), model, kinks)
        power = 5
    else:
        if _zero_tolerance(model, model.bias_function, 4):
            raise UnboundedBandwidthError("h = alpha (alpha''/alpha)'' vanishes: the MBC bias is zero")
        den = 0.5 * mu2**4 * _window_integral(lambda t: model.bias_function(t) ** 2 * gamma(t) * w(t), model, kinks)
        power = 9
    if not den > 0:
        raise UnboundedBandwidthError("bias functional is zero")
    return (num / den) ** (1.0 / power) * float(n) ** (-1.0 / power)


def theorem_constants(model: HazardModel, kernel: Kernel, estimator_kind: str, gamma, weights=None) -> tuple[float, float]:
    """The asymptotic variance constants ``(S1, S2)`` of the selector limit theorems."""
    est = str(estimator_kind).upper()
    w = _weight_function(weights, gamma)
    kinks = getattr(gamma, "breaks", ())
    mk = moments(kernel)
    mu2 = float(mk.mu2)
    a_w = _window_integral(lambda t: model.alpha(t) * w(t), model, kinks)
    a2_w2 = _window_integral(lambda t: model.alpha(t) ** 2 * w(t) ** 2, model, kinks)
    if est == "LL":
        rk = float(mk.roughness)
        bias = model.second_derivative
        b_gw = _window_integral(lambda t: bias(t) ** 2 * gamma(t) * w(t), model, kinks)
        b_gw2a = _window_integral(lambda t: bias(t) ** 2 * gamma(t) * w(t) ** 2 * model.alpha(t), model, kinks)
        s1 = rk ** (-7 / 5) * a2_w2 / (25 * mu2 ** (6 / 5) * b_gw ** (3 / 5) * a_w ** (-7 / 5))
        s2 = 4 * rk ** (-2 / 5) * b_gw2a / (25 * mu2 ** (6 / 5) * a_w ** (2 / 5) * b_gw ** (8 / 5))
        return float(s1), float(s2)
    if est != "MBC":
        raise ConfigurationError(f"estimator must be LL or MBC, got {estimator_kind!r}")
    rg = float(moments(twicing(kernel)).roughness)
    bias = model.bias_function
    b_gw = _window_integral(lambda t: bias(t) ** 2 * gamma(t) * w(t), model, kinks)
    b_gw2a = _window_integral(lambda t: bias(t) ** 2 * gamma(t) * w(t) ** 2 * model.alpha(t), model, kinks)
    if not b_gw > 0:
        raise UnboundedBandwidthError("h = alpha (alpha''/alpha)'' vanishes: the MBC bias is zero")
    s1 = 2 ** (1 / 3) / 81 * rg ** (-15 / 18) * a2_w2 / (mu2 ** (12 / 9) * b_gw ** (3 / 9) * a_w ** (-15 / 9))
    s2 = 2 ** (30 / 9) / 81 * rg ** (-6 / 9) * b_gw2a / (mu2 ** (12 / 9) * a_w ** (6 / 9) * b_gw ** (12 / 9))
    return float(s1), float(s2)


# ------------------------------------------------------------ config files
def _model_from_spec(spec) -> HazardModel:
    if isinstance(spec, str):
        return default_model(spec)
    kind = spec.get("kind")
    if kind == "beta_mixture":
        return beta_mixture(spec["components"], spec.get("scale", math.log(4.0)), tuple(spec.get("window", (0.0, 1.0))), spec.get("name", "beta_mixture"))
    if kind == "exponential_decay":
        return exponential_decay(spec["level"], spec["rate"], tuple(spec.get("window", (40.0, 110.0))), spec.get("name", "exponential_decay"))
    raise ConfigurationError(f"unknown model specification {spec!r}")


def load_study_config(path, overrides: Optional[Mapping] = None) -> StudyConfig:
    """Read a JSON study description; ``overrides`` (e.g. from CLI flags) take precedence.

    Keys: ``model`` (default name or ``{"kind": ...}`` object), ``n``, ``R``,
    ``truncation``, ``seed``, ``replications``, ``estimator``, ``kernel``,
    ``methods``, ``grid`` (``"min:max:count"``), ``mode``, ``workers``.
    """
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    else:
        raw = {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "model" not in raw or "n" not in raw:
        raise ConfigurationError("study configuration needs 'model' and 'n'")
    sim = SimulationConfig(
        _model_from_spec(raw["model"]),
        int(raw["n"]),
        int(raw.get("R", 500)),
        raw.get("truncation", "none"),
        int(raw.get("seed", 0)),
        int(raw.get("replications", 1)),
    )
    grid = raw.get("grid")
    if isinstance(grid, str):
        grid = BandwidthGrid.parse(grid)
    elif grid is not None:
        grid = BandwidthGrid(tuple(grid))
    methods = raw.get("methods", ("CV", "DO", "BO"))
    if isinstance(methods, str):
        methods = tuple(m.strip() for m in methods.split(","))
    return StudyConfig(
        sim,
        raw.get("estimator", "LL"),
        raw.get("kernel", "sextic"),
        tuple(methods),
        grid,
        raw.get("mode", "exposure"),
        int(raw.get("workers", 1)),
    )
