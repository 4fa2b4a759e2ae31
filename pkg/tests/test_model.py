import math

import numpy as np
import pytest
from scipy import integrate

from eprscan import model
from eprscan.errors import ParameterError, ResolutionError
from eprscan.model import SourceParams

GAUSS = SourceParams(q_ring=0.0)


def test_fwhm_round_trip():
    assert model.sigma_to_fwhm(model.fwhm_to_sigma(83.5)) == pytest.approx(83.5, rel=1e-14)
    assert model.fwhm_to_sigma(2.0 * math.sqrt(2.0 * math.log(2.0))) == pytest.approx(1.0)


@pytest.mark.parametrize("field", ["sigma_plus", "sigma_minus", "lambda_pump", "lambda_signal"])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_bad_widths_rejected(field, bad):
    with pytest.raises(ParameterError):
        SourceParams(**{field: bad})


def test_negative_ring_or_rate_rejected():
    with pytest.raises(ParameterError):
        SourceParams(q_ring=-1)
    with pytest.raises(ParameterError):
        SourceParams(pair_rate=-1)


def test_anticorrelated_state_is_valid():
    p = SourceParams(sigma_plus=0.01, sigma_minus=0.1, q_ring=0)
    assert model.joint_position_density([0, 0], [0, 0], p) > 0


def test_non_finite_coordinate_rejected():
    with pytest.raises(ParameterError):
        model.joint_position_density([np.nan, 0], [0, 0], GAUSS)


def test_position_density_peaks_at_origin():
    p = GAUSS
    peak = model.joint_position_density([0, 0], [0, 0], p)
    rng = np.random.default_rng(3)
    r = rng.normal(scale=0.05, size=(1000, 2, 2))
    assert np.all(model.joint_position_density(r[:, 0], r[:, 1], p) < peak)


def test_position_density_normalized():
    # per-axis factor integrates to 1, and the 2D density is the product
    p = GAUSS
    ext = 8 * p.sigma_plus
    val, _ = integrate.dblquad(lambda b, a: model.position_density_1d(a, b, p), -ext, ext, -ext, ext, epsabs=1e-10)
    assert val == pytest.approx(1.0, abs=1e-3)


def test_separable_state_factorizes():
    s = 0.03
    p = SourceParams(sigma_plus=s, sigma_minus=s, q_ring=0)
    rng = np.random.default_rng(0)
    r1, r2 = rng.normal(scale=0.04, size=(2, 200, 2))
    # equal widths: each photon is an independent Gaussian with std s
    g = lambda r: np.exp(-0.5 * np.sum(r**2, -1) / s**2) / (2 * math.pi * s**2)
    np.testing.assert_allclose(model.joint_position_density(r1, r2, p), g(r1) * g(r2), rtol=1e-12)


def test_density_factorizes_in_x_and_y():
    rng = np.random.default_rng(1)
    r1, r2 = rng.normal(scale=0.05, size=(2, 100, 2))
    full = model.joint_position_density(r1, r2, GAUSS)
    parts = model.position_density_1d(r1[:, 0], r2[:, 0], GAUSS) * model.position_density_1d(r1[:, 1], r2[:, 1], GAUSS)
    np.testing.assert_allclose(full, parts, rtol=1e-12)
    q1, q2 = rng.normal(scale=20, size=(2, 100, 2))
    full = model.joint_momentum_density(q1, q2, GAUSS)
    parts = model.momentum_density_1d(q1[:, 0], q2[:, 0], GAUSS) * model.momentum_density_1d(q1[:, 1], q2[:, 1], GAUSS)
    np.testing.assert_allclose(full, parts, rtol=1e-12)


@pytest.mark.parametrize("ring", [0.0, 27.0])
def test_exchange_symmetry(ring):
    p = SourceParams(q_ring=ring)
    rng = np.random.default_rng(2)
    a, b = rng.normal(scale=0.05, size=(2, 50, 2))
    np.testing.assert_allclose(model.joint_position_density(a, b, p), model.joint_position_density(b, a, p), rtol=1e-14)
    a, b = rng.normal(scale=30, size=(2, 50, 2))
    np.testing.assert_allclose(model.joint_momentum_density(a, b, p), model.joint_momentum_density(b, a, p), rtol=1e-14)


def _conditional_variance(f, x2, lim):
    # lim only truncates the range [-|x2| - lim, |x2| + lim]; quad does the rest
    a, b = -abs(x2) - lim, abs(x2) + lim
    kw = dict(epsabs=1e-14, epsrel=1e-10, limit=400)
    norm = integrate.quad(lambda x: f(x, x2), a, b, **kw)[0]
    mean = integrate.quad(lambda x: x * f(x, x2), a, b, **kw)[0] / norm
    m2 = integrate.quad(lambda x: (x - mean) ** 2 * f(x, x2), a, b, **kw)[0]
    return mean, m2 / norm


@pytest.mark.parametrize("sp,sm", [(0.095, 0.019), (0.05, 0.05), (0.01, 0.08), (0.2, 0.004)])
def test_conditional_position_variance_by_quadrature(sp, sm):
    p = SourceParams(sigma_plus=sp, sigma_minus=sm, q_ring=0)
    _, var = _conditional_variance(lambda a, b: model.position_density_1d(a, b, p), 0.0, 12 * min(sp, sm) * math.sqrt(2))
    assert var == pytest.approx(model.conditional_position_variance(p), rel=1e-6)
    # closed form written out, with the sum/difference variances doubled
    assert var == pytest.approx(2 * sp**2 * sm**2 / (sp**2 + sm**2), rel=1e-6)


@pytest.mark.parametrize("sp,sm", [(0.095, 0.019), (0.05, 0.05), (0.01, 0.08)])
def test_conditional_momentum_variance_by_quadrature(sp, sm):
    p = SourceParams(sigma_plus=sp, sigma_minus=sm, q_ring=0)
    q2 = 7.0
    mean, var = _conditional_variance(lambda a, b: model.momentum_density_1d(a, b, p), q2, 12 / max(sp, sm))
    assert var == pytest.approx(model.conditional_momentum_variance(p), rel=1e-6)
    if sp > sm:
        assert mean < 0  # anti-correlated


def test_momentum_conditional_mean_pure_anticorrelation_limit():
    p = SourceParams(sigma_plus=1.0, sigma_minus=0.001, q_ring=0)
    mean, _ = _conditional_variance(lambda a, b: model.momentum_density_1d(a, b, p), 5.0, 12.0)
    assert mean == pytest.approx(-5.0, rel=1e-5)


def test_momentum_density_is_fourier_transform_of_amplitude():
    # independent oracle: FFT the 1D amplitude on a grid and compare |phi|^2
    p = SourceParams(sigma_plus=0.06, sigma_minus=0.02, q_ring=0)
    n, ext = 512, 0.8
    x = np.linspace(-ext, ext, n, endpoint=False)
    dx = x[1] - x[0]
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    amp = np.sqrt(model.position_density_1d(X1, X2, p))
    phi = np.fft.fftshift(np.fft.fft2(amp))
    q = np.fft.fftshift(np.fft.fftfreq(n, dx)) * 2 * np.pi
    dens = np.abs(phi) ** 2
    dq = q[1] - q[0]
    dens /= dens.sum() * dq * dq
    Q1, Q2 = np.meshgrid(q, q, indexing="ij")
    ref = model.momentum_density_1d(Q1, Q2, p)
    assert np.max(np.abs(dens - ref)) < 1e-8 * ref.max() + 1e-6 * ref.max()


def test_momentum_density_max_on_antidiagonal():
    q2 = np.array([10.0, -4.0])
    q1 = np.stack(np.meshgrid(np.linspace(-30, 30, 121), np.linspace(-30, 30, 121), indexing="ij"), -1)
    d = model.joint_momentum_density(q1, q2, GAUSS)
    i, j = np.unravel_index(np.argmax(d), d.shape)
    # q1 at argmax is -q2 shrunk by the sum/difference ratio; sign must be opposite
    assert q1[i, j, 0] < 0 and q1[i, j, 1] > 0


def test_ring_branch_puts_singles_on_ring():
    p = SourceParams()
    rho = np.linspace(0, 80, 801)
    prof = model.momentum_marginal(np.stack([rho, 0 * rho], -1), p)
    assert rho[np.argmax(prof)] > 0.5 * p.q_ring


def test_ring_marginal_normalized():
    p = SourceParams()
    r = np.linspace(0, 200, 4001)
    prof = model.momentum_marginal(np.stack([r, 0 * r], -1), p)
    total = np.trapezoid(2 * np.pi * r * prof, r)
    assert total == pytest.approx(1.0, abs=1e-3)


def test_blurred_ring_matches_2d_convolution():
    radius, width, blur = 10.0, 2.0, 3.0
    g = np.linspace(-30, 30, 601)
    d = g[1] - g[0]
    X, Y = np.meshgrid(g, g, indexing="ij")
    ring = model.ring_profile(np.hypot(X, Y), radius, width)
    from scipy.ndimage import gaussian_filter

    ref = gaussian_filter(ring, blur / d, mode="constant", truncate=6)
    got = model.blurred_ring_profile(np.abs(g), radius, width, blur)
    np.testing.assert_allclose(got, ref[:, 300], atol=2e-3 * ref.max())


def test_marginal_variance_by_quadrature():
    p = GAUSS
    ext = 10 * p.sigma_plus
    xs = np.linspace(-ext, ext, 4001)
    # integrate x2 out on a grid, then the second moment of x1
    X1, X2 = np.meshgrid(xs, xs, indexing="ij")
    marg = np.trapezoid(model.position_density_1d(X1, X2, p), xs, axis=1)
    var = np.trapezoid(xs**2 * marg, xs) / np.trapezoid(marg, xs)
    assert var == pytest.approx(model.marginal_position_variance(p), rel=1e-4)


def test_product_bound_sweep():
    for sp in (0.02, 0.05, 0.1):
        for ratio in (0.1, 0.5, 1.0, 2.0, 8.0):
            p = SourceParams(sigma_plus=sp, sigma_minus=sp / ratio, q_ring=0)
            prod = model.conditional_position_variance(p) * model.conditional_momentum_variance(p)
            # pure state: at or below 1/4, equality only for the separable case
            if ratio == 1.0:
                assert prod == pytest.approx(0.25, rel=1e-12)
            else:
                assert prod < 0.25 - 1e-6


def test_product_approaches_quarter_at_separable_limit():
    sp = 0.05
    prods = [
        model.conditional_position_variance(SourceParams(sigma_plus=sp, sigma_minus=sp * f, q_ring=0))
        * model.conditional_momentum_variance(SourceParams(sigma_plus=sp, sigma_minus=sp * f, q_ring=0))
        for f in (0.5, 0.9, 0.99, 0.999)
    ]
    assert np.all(np.diff(prods) > 0)
    assert prods[-1] == pytest.approx(0.25, rel=1e-5)


def test_schmidt_oracle_separable():
    p = SourceParams(sigma_plus=0.05, sigma_minus=0.05, q_ring=0)
    assert model.schmidt_oracle(p) == pytest.approx(1.0, abs=0.01)


@pytest.mark.parametrize("ratio", [2, 5, 10])
def test_schmidt_oracle_matches_closed_form_and_is_swap_invariant(ratio):
    p = SourceParams(sigma_plus=0.1, sigma_minus=0.1 / ratio, q_ring=0)
    k = model.schmidt_oracle(p)
    assert k == pytest.approx(model.schmidt_number_analytic(p), rel=1e-3)
    swapped = p.with_(sigma_plus=p.sigma_minus, sigma_minus=p.sigma_plus)
    assert model.schmidt_oracle(swapped) == pytest.approx(k, rel=1e-6)


def test_schmidt_oracle_preconditions():
    with pytest.raises(ParameterError):
        model.schmidt_oracle(SourceParams())  # ring model
    with pytest.raises(ParameterError):
        model.schmidt_oracle(GAUSS, grid_n=32)
    with pytest.raises(ParameterError):
        model.schmidt_oracle(GAUSS, extent=2 * GAUSS.sigma_plus)
    with pytest.raises(ResolutionError):
        model.schmidt_oracle(SourceParams(sigma_plus=0.1, sigma_minus=0.001, q_ring=0), grid_n=64)


def test_from_pump_waist_marginal_matches_pump():
    p = SourceParams.from_pump_waist(83.5)
    sd = math.sqrt(model.marginal_position_variance(p)) * 1e3
    assert model.sigma_to_fwhm(sd) == pytest.approx(83.5, rel=0.01)
