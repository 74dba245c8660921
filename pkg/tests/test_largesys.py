import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimommse.channel import ClusterSpec, clustered_correlation, normalize_trace
from mimommse.errors import ConvergenceError, DegeneratePointError, DomainError, StabilityError
from mimommse.largesys import (
    diagonal_objective,
    grad_lambda,
    i_bar,
    i_hat,
    j_bar,
    j_bar_reduced,
    quadform_variance_prediction,
    solve_fixed_point,
    solve_spectral,
)
from mimommse.matcore import rng_stream

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _random_psd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return normalize_trace(a @ a.conj().T)


def _fp(seed, t=4, r=4, sigma2=0.5):
    rng = rng_stream(seed, 0)
    return solve_fixed_point(_random_psd(rng, t), _random_psd(rng, r), sigma2)


def test_iid_unit_noise_golden_ratio():
    fp = solve_fixed_point(np.eye(4), np.eye(4), 1.0)
    assert fp.delta == pytest.approx(GOLDEN, abs=1e-12)
    assert fp.delta_tilde == pytest.approx(GOLDEN, abs=1e-12)


def test_iid_unit_noise_approximations():
    # closed forms: i_hat = 4 log(1 + delta_t), gamma = gamma_t = 1/(1 + delta_t)^2
    rep = i_bar(solve_fixed_point(np.eye(4), np.eye(4), 1.0))
    assert rep.i_hat == pytest.approx(1.9248473002384139, abs=1e-12)
    assert rep.j_bar == pytest.approx(0.08541019662496846, abs=1e-12)
    assert rep.i_bar == rep.i_hat + rep.j_bar


def test_zero_transmit_correlation():
    fp = solve_fixed_point(np.zeros((3, 3)), np.eye(3), 2.0)
    assert fp.delta == 0.0
    assert fp.delta_tilde == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(fp.T_T, np.eye(3) / 2.0, atol=1e-15)
    assert j_bar(fp) == 0.0
    assert i_hat(fp)[0] == 0.0


def test_large_noise_first_order():
    fp = solve_fixed_point(np.eye(4), np.eye(4), 1e6)
    assert 0.999 <= fp.delta * 1e6 <= 1.001


def test_bad_noise_and_nonconvergence():
    with pytest.raises(DomainError):
        solve_fixed_point(np.eye(2), np.eye(2), 0.0)
    with pytest.raises(ConvergenceError) as info:
        solve_fixed_point(np.eye(2), np.eye(2), 0.01, max_iter=2)
    assert info.value.iterations == 2 and info.value.residual > 0


@settings(max_examples=100, deadline=None)
@given(
    t=st.sampled_from([2, 4, 8, 16]),
    r=st.sampled_from([2, 4, 8, 16]),
    log_s2=st.floats(-3.0, 1.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_fixed_point_properties(t, r, log_s2, seed):
    rng = rng_stream(seed, 0)
    c_t, c_r = _random_psd(rng, t), _random_psd(rng, r)
    s2 = 10.0**log_s2
    fp = solve_fixed_point(c_t, c_r, s2)
    assert fp.residual < 1e-12
    assert fp.delta > 0 and fp.delta_tilde > 0 and fp.stability > 0
    # both scalars are normalized traces of the approximants
    assert abs(np.trace(c_t @ fp.T_T).real / t - fp.delta) <= 1e-10 * max(1.0, fp.delta)
    assert abs(np.trace(c_r @ fp.T_R).real / t - fp.delta_tilde) <= 1e-10 * max(1.0, fp.delta_tilde)
    diag = s2 * fp.diag_T_T()
    assert np.all(diag > 0) and np.all(diag <= 1 + 1e-12)
    rep = i_bar(fp)
    assert rep.i_hat >= 0 and np.all(rep.per_stream >= -1e-15) and rep.j_bar >= 0


def test_initialization_does_not_matter():
    rng = rng_stream(1, 0)
    c_t, c_r = _random_psd(rng, 8), _random_psd(rng, 8)
    a = solve_fixed_point(c_t, c_r, 0.1)
    b = solve_fixed_point(c_t, c_r, 0.1, delta0=10 * np.trace(c_t).real / 8 / 0.1)
    assert abs(a.delta - b.delta) <= 1e-10 and abs(a.delta_tilde - b.delta_tilde) <= 1e-10


def test_scaled_delta_tilde_is_increasing():
    lam = np.array([2.0, 1.0, 0.6, 0.4])
    d_r = np.array([1.8, 1.2, 0.7, 0.3])
    mu = np.linspace(0.1, 10.0, 100)
    vals = [m * solve_spectral(m * lam, d_r, 0.3).delta_tilde for m in mu]
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("seed", range(5))
def test_correction_dual_path_on_diagonal_input(seed):
    rng = rng_stream(seed, 1)
    lam = rng.uniform(0.0, 2.0, 4)
    fp = solve_fixed_point(np.diag(lam), _random_psd(rng, 4), float(10 ** rng.uniform(-1.5, 0.5)))
    assert abs(j_bar(fp) - j_bar_reduced(fp)) <= 1e-12


def test_correction_depends_on_noise_fourth_power():
    # dropping sigma^4 would leave the two paths equal only at sigma2 = 1
    fp = solve_spectral(np.array([1.5, 0.5]), np.array([1.2, 0.8]), 0.3)
    wrong = 0.5 * fp.gamma * fp.gamma_tilde / (1 - fp.sigma2**2 * fp.gamma * fp.gamma_tilde)
    assert abs(j_bar(fp) - wrong) > 1e-3


def test_general_correction_for_rotated_input():
    # a unitary rotation of the effective correlation changes the diagonal of T_T
    rng = rng_stream(4, 0)
    c_t, c_r = _random_psd(rng, 4), _random_psd(rng, 4)
    fp = solve_fixed_point(c_t, c_r, 0.2)
    w = np.abs(fp.u) ** 2
    d1 = w @ (fp.sigma2 * fp.t_diag)
    d2 = w @ (fp.sigma2 * fp.t_diag) ** 2
    expect = fp.gamma_tilde / (2 * fp.delta_tilde**2 * fp.stability) * np.mean((1 - d2 / d1) ** 2)
    assert j_bar(fp) == pytest.approx(expect, rel=1e-13)
    np.testing.assert_allclose(np.diag(fp.T_T).real, fp.diag_T_T(), rtol=1e-12)
    assert j_bar(fp) <= j_bar_reduced(fp) + 1e-12


def test_stability_error():
    fp = dataclasses.replace(_fp(0), gamma=1e9)
    with pytest.raises(StabilityError):
        j_bar(fp)
    with pytest.raises(StabilityError):
        quadform_variance_prediction(fp, np.eye(4)[0])


def test_variance_prediction_formula():
    fp = solve_spectral(np.array([1.6, 1.0, 0.9, 0.5]), np.array([1.3, 1.0, 0.9, 0.8]), 0.4)
    u = np.zeros(4)
    u[0] = 1.0
    expect = fp.sigma2**2 * fp.gamma_tilde / fp.stability * (fp.d[0] * fp.t_diag[0] ** 2) ** 2 / 4
    assert quadform_variance_prediction(fp, u) == pytest.approx(expect, rel=1e-14)
    zero = solve_spectral(np.zeros(4), np.ones(4), 0.4)
    assert quadform_variance_prediction(zero, u) == 0.0
    with pytest.raises(DomainError):
        quadform_variance_prediction(fp, 2 * u)


def test_diagonal_objective_matches_general_path():
    lam = np.array([1.2, 0.7, 0.1])
    c_r = clustered_correlation(ClusterSpec(0.4, 0.5, 3))
    ih, jb, _ = diagonal_objective(lam, np.linalg.eigvalsh(c_r), 0.25)
    rep = i_bar(solve_fixed_point(np.diag(lam), c_r, 0.25))
    assert ih == pytest.approx(rep.i_hat, abs=1e-12)
    assert jb == pytest.approx(rep.j_bar, abs=1e-12)


def _fd(lam, d_r, s2, corrected, j):
    h = 1e-6 * max(1.0, lam[j])
    e = np.zeros_like(lam)
    e[j] = h

    def f(x):
        ih, jb, _ = diagonal_objective(x, d_r, s2)
        return ih + jb if corrected else ih

    return (f(lam + e) - f(lam - e)) / (2 * h)


@pytest.mark.parametrize("corrected", [True, False])
def test_gradient_matches_finite_differences(corrected):
    rng = rng_stream(12, 0)
    for _ in range(5):
        lam = rng.uniform(0.05, 2.0, 4)
        d_r = np.sort(rng.uniform(0.1, 2.0, 4))[::-1]
        s2 = float(10 ** rng.uniform(-1.5, 0.5))
        g = grad_lambda(lam, d_r, s2, corrected=corrected)
        fd = np.array([_fd(lam, d_r, s2, corrected, j) for j in range(4)])
        np.testing.assert_allclose(g, fd, rtol=1e-5)


def test_gradient_symmetry():
    g = grad_lambda(np.full(4, 0.8), np.array([1.5, 1.0, 0.9, 0.6]), 0.2)
    np.testing.assert_allclose(g, g[0], rtol=1e-12)


def test_gradient_scaling_chain_rule():
    lam = np.array([1.4, 0.9, 0.3])
    d_r = np.array([1.5, 1.0, 0.5])
    s2, mu, h = 0.3, 0.8, 1e-6

    def f(m):
        ih, jb, _ = diagonal_objective(m * lam, d_r, s2)
        return ih + jb

    dmu = (f(mu + h) - f(mu - h)) / (2 * h)
    assert lam @ grad_lambda(mu * lam, d_r, s2) == pytest.approx(dmu, rel=1e-7)


def test_gradient_degenerate_point():
    fp = dataclasses.replace(solve_spectral(np.ones(2), np.ones(2), 1.0), gamma=1e9)
    with pytest.raises(DegeneratePointError):
        grad_lambda(np.ones(2), np.ones(2), 1.0, fp=fp)
