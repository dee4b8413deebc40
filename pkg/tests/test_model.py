"""Core model tests: reparameterization, forward model, potentials, gradients."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from ppnmm.model import (
    AbundanceMatrix,
    EndmemberMatrix,
    LatentCoefficients,
    ModelState,
    NoiseVariances,
    NonlinearityVector,
    SpectralImage,
    endmember_grad,
    endmember_potential,
    latent_grad,
    latent_potential,
    neg_log_likelihood,
    ppnmm_image,
    ppnmm_pixel,
    stick_breaking_forward,
    stick_breaking_inverse,
)


# ---------------------------------------------------------------------------
# stick breaking
# ---------------------------------------------------------------------------

def test_forward_hand_examples():
    np.testing.assert_allclose(
        stick_breaking_forward(np.array([0.5, 0.5])), [0.5, 0.25, 0.25]
    )
    np.testing.assert_allclose(stick_breaking_forward(np.array([0.3])), [0.7, 0.3])


def test_inverse_hand_examples():
    np.testing.assert_allclose(
        stick_breaking_inverse(np.array([0.5, 0.25, 0.25])), [0.5, 0.5]
    )
    np.testing.assert_allclose(
        stick_breaking_inverse(np.full(3, 1.0 / 3.0)), [2.0 / 3.0, 0.5]
    )


def test_forward_rejects_boundary():
    for bad in ([0.0, 0.5], [0.5, 1.0], [-0.1, 0.5], [0.5, 1.1]):
        with pytest.raises(ValueError):
            stick_breaking_forward(np.array(bad))


def test_inverse_rejects_bad_input():
    with pytest.raises(ValueError):
        stick_breaking_inverse(np.array([0.5, 0.5, 0.1]))  # sum != 1
    with pytest.raises(ValueError):
        stick_breaking_inverse(np.array([1.0, 0.0]))  # zero entry


def test_forward_simplex_property_bulk(rng):
    # 1e5 draws across dimensions: output positive, sums to 1 within 1e-12
    for r in range(2, 11):
        z = rng.uniform(1e-6, 1.0 - 1e-6, size=(r - 1, 100_000 // 9))
        a = stick_breaking_forward(z)
        assert np.all(a > 0.0)
        assert np.max(np.abs(a.sum(axis=0) - 1.0)) < 1e-12


def test_round_trip_identities(rng):
    for r in (2, 3, 6):
        z = rng.uniform(1e-4, 1.0 - 1e-4, size=(r - 1, 1000))
        z_back = stick_breaking_inverse(stick_breaking_forward(z))
        assert np.max(np.abs(z_back - z)) < 1e-12
    a = rng.dirichlet(np.ones(6), size=1000).T
    a_back = stick_breaking_forward(stick_breaking_inverse(a))
    assert np.max(np.abs(a_back - a)) < 1e-12


@given(
    st.lists(st.floats(min_value=1e-3, max_value=1.0 - 1e-3), min_size=1, max_size=9)
)
def test_round_trip_hypothesis(zs):
    z = np.array(zs)
    a = stick_breaking_forward(z)
    assert abs(a.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(stick_breaking_inverse(a), z, atol=1e-12)


def test_beta_stick_prior_is_uniform_on_simplex(rng):
    # z_r ~ Beta(R-r, 1) pushed through the map vs a direct flat-Dirichlet oracle
    r, n = 4, 10_000
    z = np.vstack([rng.beta(r - k, 1.0, size=n) for k in range(1, r)])
    a = stick_breaking_forward(z)
    oracle = rng.dirichlet(np.ones(r), size=n).T
    se = np.sqrt(a.var(axis=1) / n + oracle.var(axis=1) / n)
    assert np.all(np.abs(a.mean(axis=1) - oracle.mean(axis=1)) < 3 * se)
    # marginal mean of a flat Dirichlet is exactly 1/R
    assert np.all(np.abs(a.mean(axis=1) - 1.0 / r) < 3 * np.sqrt(a.var(axis=1) / n))


# ---------------------------------------------------------------------------
# forward model
# ---------------------------------------------------------------------------

def test_pixel_reduces_to_linear_for_zero_b(rng):
    m = rng.uniform(0.0, 1.0, (12, 3))
    a = rng.dirichlet(np.ones(3))
    np.testing.assert_array_equal(ppnmm_pixel(m, a, 0.0), m @ a)


def test_pixel_hand_values():
    m = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(
        ppnmm_pixel(m, np.array([0.6, 0.4]), 0.5), [0.78, 0.48]
    )


def test_image_matches_pixelwise(rng):
    m = rng.uniform(0.0, 1.0, (20, 3))
    a = rng.dirichlet(np.ones(3), size=50).T
    b = rng.uniform(-0.3, 0.3, 50)
    x = ppnmm_image(m, a, b)
    for n in range(50):
        np.testing.assert_allclose(x[:, n], ppnmm_pixel(m, a[:, n], b[n]), atol=1e-14)
    np.testing.assert_array_equal(ppnmm_image(m, a, np.zeros(50)), m @ a)


def test_image_dimension_mismatch():
    with pytest.raises(ValueError):
        ppnmm_image(np.ones((4, 3)), np.ones((2, 5)) / 2, np.zeros(5))
    with pytest.raises(ValueError):
        ppnmm_image(np.ones((4, 2)), np.ones((2, 5)) / 2, np.zeros(4))


# ---------------------------------------------------------------------------
# likelihood
# ---------------------------------------------------------------------------

def test_nll_trivial_cases():
    y = np.full((3, 2), 0.5)
    assert neg_log_likelihood(y, y, np.ones(3)) == 0.0


def test_nll_single_residual():
    # one residual of 2 at unit variance -> 0.5 * 4 = 2
    y = np.array([[3.0], [1.0]])
    x = np.array([[1.0], [1.0]])
    assert neg_log_likelihood(y, x, np.ones(2)) == pytest.approx(2.0)


def test_nll_matches_gaussian_density_ratios(rng):
    l, n = 7, 4
    y = rng.uniform(0, 1, (l, n))
    sigma2_a = rng.uniform(0.1, 2.0, l)
    sigma2_b = rng.uniform(0.1, 2.0, l)
    x_a = rng.uniform(0, 1, (l, n))
    x_b = rng.uniform(0, 1, (l, n))

    def oracle(x, sigma2):
        total = 0.0
        for j in range(n):
            total += multivariate_normal(mean=x[:, j], cov=np.diag(sigma2)).logpdf(y[:, j])
        return total

    ours = neg_log_likelihood(y, x_a, sigma2_a) - neg_log_likelihood(y, x_b, sigma2_b)
    theirs = -(oracle(x_a, sigma2_a) - oracle(x_b, sigma2_b))
    assert ours == pytest.approx(theirs, abs=1e-10)


def test_nll_rejects_bad_variance():
    y = np.zeros((2, 2))
    with pytest.raises(ValueError):
        neg_log_likelihood(y, y, np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# latent potential and gradient
# ---------------------------------------------------------------------------

def _random_latent_setup(rng, r, l):
    z = rng.uniform(0.05, 0.95, r - 1)
    m = rng.uniform(0.05, 0.95, (l, r))
    b = float(rng.uniform(-0.3, 0.3))
    sigma2 = rng.uniform(1e-4, 1e-2, l)
    y = rng.uniform(0, 1, l)
    return z, y, m, b, sigma2


def test_latent_potential_r2_is_pure_data_term(rng):
    z, y, m, b, sigma2 = _random_latent_setup(rng, 2, 9)
    a = stick_breaking_forward(z)
    x = ppnmm_pixel(m, a, b)
    expected = 0.5 * np.sum((y - x) ** 2 / sigma2)
    assert latent_potential(z, y, m, b, sigma2) == pytest.approx(expected, rel=1e-12)


def test_latent_potential_zero_residual_r3():
    m = np.array([[0.2, 0.5, 0.7], [0.4, 0.1, 0.3], [0.6, 0.8, 0.2]])
    z = np.array([0.5, 0.5])
    x = ppnmm_pixel(m, stick_breaking_forward(z), 0.2)
    val = latent_potential(z, x, m, 0.2, np.ones(3))
    assert val == pytest.approx(-np.log(0.5))


def test_latent_potential_matches_density_ratios(rng):
    # exp(-U) proportional to likelihood x stick-breaking beta prior
    r, l = 4, 6
    _, y, m, b, sigma2 = _random_latent_setup(rng, r, l)

    def oracle_logpdf(z):
        a = stick_breaking_forward(z)
        x = ppnmm_pixel(m, a, b)
        log_lik = multivariate_normal(mean=x, cov=np.diag(sigma2)).logpdf(y)
        expo = r - np.arange(1, r) - 1.0
        return log_lik + np.sum(expo * np.log(z))

    z1 = rng.uniform(0.1, 0.9, r - 1)
    z2 = rng.uniform(0.1, 0.9, r - 1)
    du = latent_potential(z1, y, m, b, sigma2) - latent_potential(z2, y, m, b, sigma2)
    assert du == pytest.approx(-(oracle_logpdf(z1) - oracle_logpdf(z2)), abs=1e-10)


def _central_diff(f, x, h=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2.0 * h)
    return out


@pytest.mark.parametrize("r,l", [(2, 5), (3, 20), (6, 50)])
def test_latent_grad_finite_differences(rng, r, l):
    for _ in range(20):
        z, y, m, b, sigma2 = _random_latent_setup(rng, r, l)
        grad = latent_grad(z, y, m, b, sigma2)
        fd = _central_diff(lambda q: latent_potential(q, y, m, b, sigma2), z)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
        assert np.max(rel) <= 1e-5


def test_latent_grad_zero_residual_r2():
    m = np.array([[0.3, 0.6], [0.7, 0.2], [0.5, 0.9]])
    z = np.array([0.4])
    x = ppnmm_pixel(m, stick_breaking_forward(z), 0.1)
    np.testing.assert_allclose(
        latent_grad(z, x, m, 0.1, np.ones(3)), np.zeros(1), atol=1e-14
    )


def test_latent_grad_linear_case_reduction(rng):
    # with b = 0 the data-term Jacobian is the plain linear-model one
    r, l = 3, 8
    z, y, m, _, sigma2 = _random_latent_setup(rng, r, l)
    a = stick_breaking_forward(z)
    grad_a = -(m.T @ ((y - m @ a) / sigma2))
    jac = np.zeros((r, r - 1))
    for row in range(r):
        for i in range(r - 1):
            if i > row:
                continue
            jac[row, i] = a[row] / (z[i] - 1.0) if i == row else a[row] / z[i]
    expo = r - np.arange(1, r) - 1.0
    expected = grad_a @ jac - expo / z
    np.testing.assert_allclose(
        latent_grad(z, y, m, 0.0, sigma2), expected, rtol=1e-12
    )


# ---------------------------------------------------------------------------
# endmember potential and gradient
# ---------------------------------------------------------------------------

def test_endmember_potential_zero_case(rng):
    a = rng.dirichlet(np.ones(3), size=5).T
    m_row = rng.uniform(0.1, 0.9, 3)
    y_row = a.T @ m_row
    assert endmember_potential(
        m_row, y_row, a, np.zeros(5), 1.0, 50.0, m_row
    ) == pytest.approx(0.0)


def test_endmember_potential_hand_value():
    # single pixel, single coefficient with full weight, unit noise
    a = np.ones((1, 1))
    val = endmember_potential(
        np.array([0.5]), np.array([0.9]), a, np.array([1.0]), 1.0, 1e12, np.array([0.5])
    )
    assert val == pytest.approx(0.5 * 0.15**2, abs=1e-12)


def test_endmember_potential_matches_density_ratio(rng):
    r, n = 3, 12
    a = rng.dirichlet(np.ones(r), size=n).T
    b = rng.uniform(-0.3, 0.3, n)
    y_row = rng.uniform(0, 1, n)
    mbar = rng.uniform(0.2, 0.8, r)
    sl2, s2 = 0.01, 50.0

    def oracle_logpdf(m_row):
        t = a.T @ m_row + b * (a.T @ m_row) ** 2
        lik = multivariate_normal(mean=t, cov=sl2 * np.eye(n)).logpdf(y_row)
        prior = multivariate_normal(mean=mbar, cov=s2 * np.eye(r)).logpdf(m_row)
        return lik + prior

    m1 = rng.uniform(0.1, 0.9, r)
    m2 = rng.uniform(0.1, 0.9, r)
    dv = endmember_potential(m1, y_row, a, b, sl2, s2, mbar) - endmember_potential(
        m2, y_row, a, b, sl2, s2, mbar
    )
    assert dv == pytest.approx(-(oracle_logpdf(m1) - oracle_logpdf(m2)), abs=1e-10)


@pytest.mark.parametrize("r,n", [(2, 10), (3, 40), (6, 25)])
def test_endmember_grad_finite_differences(rng, r, n):
    for _ in range(20):
        a = rng.dirichlet(np.ones(r), size=n).T
        b = rng.uniform(-0.3, 0.3, n)
        m_row = rng.uniform(0.1, 0.9, r)
        mbar = rng.uniform(0.0, 1.0, r)
        y_row = rng.uniform(0, 1, n)
        sl2 = float(rng.uniform(1e-4, 1e-2))
        grad = endmember_grad(m_row, y_row, a, b, sl2, 50.0, mbar)
        fd = _central_diff(
            lambda q: endmember_potential(q, y_row, a, b, sl2, 50.0, mbar), m_row
        )
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
        assert np.max(rel) <= 1e-5


def test_endmember_grad_zero_at_prior_mode(rng):
    a = rng.dirichlet(np.ones(4), size=6).T
    m_row = rng.uniform(0.2, 0.8, 4)
    y_row = a.T @ m_row
    np.testing.assert_allclose(
        endmember_grad(m_row, y_row, a, np.zeros(6), 1.0, 50.0, m_row),
        np.zeros(4),
        atol=1e-12,
    )


def test_endmember_grad_linear_case_closed_form(rng):
    # b = 0: gradient of a ridge-regularized least squares, known in closed form
    r, n = 3, 30
    a = rng.dirichlet(np.ones(r), size=n).T
    m_row = rng.uniform(0.1, 0.9, r)
    mbar = rng.uniform(0.0, 1.0, r)
    y_row = rng.uniform(0, 1, n)
    sl2, s2 = 0.01, 50.0
    expected = (a @ (a.T @ m_row - y_row)) / sl2 + (m_row - mbar) / s2
    np.testing.assert_allclose(
        endmember_grad(m_row, y_row, a, np.zeros(n), sl2, s2, mbar),
        expected,
        rtol=1e-10,
    )


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

def test_container_validation():
    with pytest.raises(ValueError):
        SpectralImage(np.ones((1, 5)))  # too few bands
    with pytest.raises(ValueError):
        SpectralImage(np.array([[np.nan, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        EndmemberMatrix(np.full((3, 2), 1.5))
    with pytest.raises(ValueError):
        EndmemberMatrix(np.ones((2, 3)))  # R > L
    with pytest.raises(ValueError):
        AbundanceMatrix(np.array([[0.6, 0.2], [0.5, 0.8]]))  # bad column sum
    with pytest.raises(ValueError):
        LatentCoefficients(np.array([[0.0], [0.5]]))
    with pytest.raises(ValueError):
        NonlinearityVector(np.array([np.inf]))
    with pytest.raises(ValueError):
        NoiseVariances(np.array([0.0, 1.0]))


def test_model_state_cross_checks(rng):
    l, r, n = 6, 3, 4
    state = ModelState(
        z=LatentCoefficients(rng.uniform(0.2, 0.8, (r - 1, n))),
        m=EndmemberMatrix(rng.uniform(0.0, 1.0, (l, r))),
        b=NonlinearityVector(np.zeros(n)),
        sigma2=NoiseVariances(np.full(l, 1e-4)),
        sigma_b2=1.0,
        w=0.5,
    )
    state.validate()
    with pytest.raises(ValueError):
        ModelState(
            z=LatentCoefficients(rng.uniform(0.2, 0.8, (r, n))),  # wrong row count
            m=state.m,
            b=state.b,
            sigma2=state.sigma2,
            sigma_b2=1.0,
            w=0.5,
        )
    with pytest.raises(ValueError):
        ModelState(
            z=state.z, m=state.m, b=state.b, sigma2=state.sigma2,
            sigma_b2=0.0, w=0.5,
        )
