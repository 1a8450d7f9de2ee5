import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import oracles
from hazardcv import kernels
from hazardcv.kernels import Side

BUILTIN = ("epanechnikov", "quartic", "sextic")


def _integral(k, f=lambda u: 1.0):
    return k.integrate(lambda u: k.eval(u) * f(u))


def _oracle_moments(f, lo, hi):
    mu2 = oracles.gauss_legendre(lambda u: u * u * f(u), lo, hi)
    mu1 = oracles.gauss_legendre(lambda u: u * f(u), lo, hi)
    mu0 = oracles.gauss_legendre(f, lo, hi)
    rough = oracles.gauss_legendre(lambda u: f(u) ** 2, lo, hi)
    return mu0, mu1, mu2, rough


def _oracle_equivalent_left(name):
    k = oracles.base_kernel(name)
    kl = oracles.left_kernel(k)
    _, mu1, mu2, _ = _oracle_moments(kl, -1, 0)
    return lambda u: (mu2 - mu1 * u) / (mu2 - mu1 * mu1) * kl(u)


def _oracle_twicing_roughness(f, lo, hi):
    """R(2L - L*L) with the self-convolution integrated exactly on its polynomial pieces."""
    x, w = np.polynomial.legendre.leggauss(40)

    def conv(u):
        out = np.empty_like(u)
        for i, ui in enumerate(u):
            a, b = max(lo, ui - hi), min(hi, ui - lo)
            if b <= a:
                out[i] = 0.0
                continue
            v = 0.5 * (a + b) + 0.5 * (b - a) * x
            out[i] = 0.5 * (b - a) * np.dot(w, f(v) * f(ui - v))
        return out

    gamma = lambda u: 2 * f(u) - conv(u)
    mid = 0.5 * (lo + hi)
    pieces = sorted({2 * lo, lo, mid, hi, 2 * hi, lo + hi})
    return sum(oracles.gauss_legendre(lambda u: gamma(u) ** 2, a, b) for a, b in zip(pieces[:-1], pieces[1:]))


# ------------------------------------------------------------------ moments
def test_epanechnikov_moments():
    m = kernels.moments(kernels.epanechnikov())
    assert m.mu1 == 0.0
    assert_allclose([m.mu0, m.mu2, m.roughness], [1.0, 0.2, 0.6], rtol=0, atol=1e-14)


def test_sextic_is_normalised():
    assert_allclose(kernels.moments(kernels.sextic()).mu0, 1.0, rtol=0, atol=1e-14)


@pytest.mark.parametrize("name", BUILTIN)
def test_moments_match_quadrature(name):
    got = kernels.moments(kernels.get_kernel(name))
    want = _oracle_moments(oracles.base_kernel(name), -1, 1)
    assert_allclose([got.mu0, got.mu1, got.mu2, got.roughness], want, rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("name", BUILTIN)
def test_derived_kernels_integrate_to_one(name):
    k = kernels.get_kernel(name)
    derived = [k, kernels.one_sided(k, Side.LEFT), kernels.one_sided(k, Side.RIGHT), kernels.twicing(k)]
    derived.append(kernels.equivalent_local_linear(derived[1]))
    derived.append(kernels.twicing(derived[-1]))
    for d in derived:
        assert_allclose(_integral(d), 1.0, atol=1e-10)


# ------------------------------------------------------------------ one-sided
def test_one_sided_left_epanechnikov():
    kl = kernels.one_sided(kernels.epanechnikov(), Side.LEFT)
    assert_allclose(_integral(kl), 1.0, atol=1e-14)
    assert_allclose(kl.eval(np.array([0.25, 0.5, 0.99])), 0.0)
    assert_allclose(kl.eval(-0.5), 1.125, rtol=1e-15)


def test_one_sided_right_mirrors_left():
    k = kernels.quartic()
    u = np.linspace(-1, 1, 41)
    assert_allclose(kernels.one_sided(k, Side.RIGHT).eval(u), kernels.one_sided(k, Side.LEFT).eval(-u))


def test_one_sided_rejects_asymmetric_kernel():
    asym = kernels.one_sided(kernels.epanechnikov(), Side.LEFT)
    with pytest.raises(kernels.AsymmetricKernelError):
        kernels.one_sided(asym, Side.LEFT)


# ------------------------------------------------- equivalent kernel, twicing
@pytest.mark.parametrize("name", BUILTIN)
def test_equivalent_kernel_of_symmetric_kernel_is_itself(name):
    k = kernels.get_kernel(name)
    u = np.linspace(-1.2, 1.2, 97)
    assert_allclose(kernels.equivalent_local_linear(k).eval(u), k.eval(u), rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("name", BUILTIN)
@pytest.mark.parametrize("side", list(Side))
def test_equivalent_kernel_is_second_order(name, side):
    eq = kernels.equivalent_local_linear(kernels.one_sided(kernels.get_kernel(name), side))
    assert_allclose(_integral(eq), 1.0, atol=1e-10)
    assert_allclose(_integral(eq, lambda u: u), 0.0, atol=1e-10)


def test_left_equivalent_epanechnikov_against_quadrature():
    got = kernels.moments(kernels.equivalent_local_linear(kernels.one_sided(kernels.epanechnikov(), Side.LEFT)))
    _, _, mu2, rough = _oracle_moments(_oracle_equivalent_left("epanechnikov"), -1, 0)
    assert_allclose([got.mu2, got.roughness], [mu2, rough], rtol=1e-10)
    # frozen from the quadrature oracle
    assert_allclose(got.mu2, -11 / 95, rtol=1e-12)


def test_twicing_epanechnikov_at_zero():
    g = kernels.twicing(kernels.epanechnikov())
    assert_allclose(g.eval(0.0), 0.9, rtol=1e-14)
    assert g.support == (-2.0, 2.0)


@pytest.mark.parametrize("name", BUILTIN)
def test_twicing_preserves_symmetry(name):
    g = kernels.twicing(kernels.get_kernel(name))
    u = np.linspace(0, 2, 33)
    assert_allclose(g.eval(u), g.eval(-u), atol=1e-14)


# ----------------------------------------------------------------------- rho
def _oracle_rho(name, estimator):
    base = oracles.base_kernel(name)
    eq = _oracle_equivalent_left(name)
    _, _, mu2_k, r_k = _oracle_moments(base, -1, 1)
    _, _, mu2_l, r_l = _oracle_moments(eq, -1, 0)
    if estimator == "LL":
        return (r_k / r_l * mu2_l**2 / mu2_k**2) ** 0.2
    rg_k = _oracle_twicing_roughness(base, -1.0, 1.0)
    rg_l = _oracle_twicing_roughness(eq, -1.0, 0.0)
    return (rg_k / rg_l * mu2_l**4 / mu2_k**4) ** (1 / 9)


@pytest.mark.parametrize("name", BUILTIN)
def test_rho_ll_matches_oracle(name):
    assert_allclose(kernels.rho_ll(kernels.get_kernel(name)), _oracle_rho(name, "LL"), rtol=1e-6)


@pytest.mark.parametrize("name", BUILTIN)
def test_rho_mbc_matches_oracle(name):
    assert_allclose(kernels.rho_mbc(kernels.get_kernel(name)), _oracle_rho(name, "MBC"), rtol=1e-6)


@pytest.mark.parametrize("name", BUILTIN)
def test_rho_is_side_invariant_and_estimator_specific(name):
    k = kernels.get_kernel(name)
    assert_allclose(kernels.rho_ll(k, Side.LEFT), kernels.rho_ll(k, Side.RIGHT), rtol=1e-13)
    assert_allclose(kernels.rho_mbc(k, Side.LEFT), kernels.rho_mbc(k, Side.RIGHT), rtol=1e-13)
    assert abs(kernels.rho_ll(k) - kernels.rho_mbc(k)) > 1e-3


# ----------------------------------------------------------------------- psi
@pytest.mark.parametrize(
    "method, estimator, name, published",
    [("CV", "LL", "epanechnikov", 3.6), ("BO", "LL", "quartic", 0.95), ("DO", "LL", "quartic", 0.95), ("MISE", "MBC", "sextic", 1.31)],
)
def test_psi_published_values(method, estimator, name, published):
    assert_allclose(kernels.psi_factor(method, estimator, kernels.get_kernel(name)), published, atol=0.02)


@pytest.mark.parametrize("estimator", ["LL", "MBC"])
def test_psi_bo_equals_do(estimator):
    k = kernels.epanechnikov()
    assert kernels.psi_factor("BO", estimator, k) == kernels.psi_factor("DO", estimator, k)


def test_psi_needs_a_derivative():
    k = kernels.callable_kernel(lambda u: 0.75 * (1 - u * u), (-1.0, 1.0), name="no-derivative")
    with pytest.raises(kernels.DerivativeUnavailableError):
        kernels.psi_factor("CV", "LL", k)


# -------------------------------------------------------------- properties
@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5, allow_nan=False))
def test_one_sided_halves_sum_to_twice_kernel(u):
    k = kernels.sextic()
    total = kernels.one_sided(k, Side.LEFT).eval(u) + kernels.one_sided(k, Side.RIGHT).eval(u)
    expected = 2 * k.eval(u) * (2.0 if u == 0 else 1.0)
    # expanded polynomials round on the scale of their coefficients (order 1), so near the
    # support edge the absolute error dominates
    assert_allclose(total, expected, rtol=1e-12, atol=1e-14)
