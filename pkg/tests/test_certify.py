import numpy as np
import pytest

from wbp.cascades import DeterministicCascade, ScaledUniformCascade, UniformSplitCascade
from wbp.certify import (
    CertificationError,
    MDCertificate,
    certify_md,
    estimate_c1,
    estimate_c3,
    fit_tail_ratio,
    gamma_witness,
    proxy_gap_bound,
    theorem1_rhs,
    weighted_sup_norm,
)
from wbp.spectral import MeanKernel, TypeGrid, attach_alpha, power_iteration
from wbp.streams import derive_stream

ONE_POINT = TypeGrid.finite(1)


def scalar_kernel(value, order=1.0):
    return MeanKernel(np.array([[value]]), ONE_POINT, order)


def certified_uniform_split(independent=True, n_max=40):
    law = UniformSplitCascade(independent=independent)
    k1 = scalar_kernel(law.factor_moment(1.0))
    kp = scalar_kernel(law.factor_moment(2.0), order=2.0)
    sd = power_iteration(k1)
    ones = np.ones(1)
    attach_alpha(k1, ones, sd, ones, n_max)
    cert = certify_md(k1, kp, sd, ones, ones, n_max, law=law, rng=derive_stream(0, 0))
    return law, k1, kp, sd, cert


def test_gamma_witness_uniform_split_exact():
    # Q^(2) is the scalar 2/3: gamma_n = (2/3)^(n/2), Gamma_0 = 1/(1 - sqrt(2/3))
    law, k1, kp, sd, cert = certified_uniform_split()
    n = np.arange(cert.n_max + 1)
    assert np.allclose(cert.gamma, (2.0 / 3.0) ** (n / 2.0), rtol=1e-12)
    r = np.sqrt(2.0 / 3.0)
    assert cert.tail_ratio == pytest.approx(r, rel=1e-12)
    assert cert.Gamma(0) == pytest.approx(1.0 / (1.0 - r), rel=1e-9)
    # geometric series oracle at general m
    for m in (1, 5, 17, 60):
        assert cert.Gamma(m) == pytest.approx(r**m / (1.0 - r), rel=1e-9)


def test_c1_is_one_for_conservative_kernel():
    law, k1, kp, sd, cert = certified_uniform_split()
    assert cert.c1 == 1.0


def test_c3_upper_bound_close_to_variance():
    # exact one-step dispersion for p = 2 is Var(U - U') = 1/6
    law = UniformSplitCascade(independent=True)
    k1 = scalar_kernel(1.0)
    c3 = estimate_c3(law, k1, np.ones(1), np.ones(1), 2.0, derive_stream(1, 0), budget=4000)
    assert 1.0 / 6.0 <= c3 <= 1.0 / 6.0 * 1.25  # inflated, but not by much


def test_deterministic_one_child_certificate():
    # Q and Q^(p) are 1x1 scalars: all certificate numbers exact
    law = DeterministicCascade((0.75,))
    k1 = scalar_kernel(0.75)
    kp = scalar_kernel(0.75**2, order=2.0)
    sd = power_iteration(k1)
    ones = np.ones(1)
    attach_alpha(k1, ones, sd, ones, 20)
    cert = certify_md(k1, kp, sd, ones, ones, 20, law=law, rng=derive_stream(0, 1))
    assert cert.c1 == 1.0
    # scalar arithmetic oracle: gamma_n = theta^-n (theta_p)^(n/2) = 1
    assert np.allclose(cert.gamma, 1.0)
    assert cert.c3 == 0.0
    assert cert.c0 == 0.0
    # RHS vanishes: no dispersion, no deviation
    assert theorem1_rhs(cert, sd, 1.0, 1.0, 1.0, 1.0, 5, 5) == 0.0


def test_certification_refused_without_decay():
    # positive dispersion but non-summable witnesses: refuse
    law = ScaledUniformCascade(c=2.0)  # E sum u^2 = 4/3 > 1 = theta^2
    k1 = scalar_kernel(1.0)
    kp = scalar_kernel(4.0 / 3.0, order=2.0)
    sd = power_iteration(k1)
    ones = np.ones(1)
    attach_alpha(k1, ones, sd, ones, 20)
    with pytest.raises(CertificationError):
        certify_md(k1, kp, sd, ones, ones, 20, law=law, rng=derive_stream(0, 2))


def test_theorem1_rhs_zero_when_all_terms_vanish():
    cert = MDCertificate(
        p=2.0,
        psi1=np.ones(1),
        psi2=np.ones(1),
        c1=1.0,
        c2=1.0,
        c3=0.125,
        gamma=np.zeros(5),
        tail_ratio=0.0,
        n_max=4,
    )
    sd_stub = power_iteration(scalar_kernel(1.0))
    sd_stub.alpha = np.zeros(8)
    assert theorem1_rhs(cert, sd_stub, 1.0, 1.0, 1.0, 1.0, 2, 3) == 0.0


def test_theorem1_rhs_beta_zero_bracket_drops():
    # with beta = 0 only the Gamma_m term and the alpha_n c1 term survive
    law, k1, kp, sd, cert = certified_uniform_split()
    sd.alpha = np.full(20, 0.01)
    m, n = 3, 2
    rhs = theorem1_rhs(cert, sd, 1.0, 1.0, 1.0, 1.0, m, n)
    expected = (
        cert.c0 / sd.theta * (cert.c1 * 1.0 + 1.0) * cert.Gamma(m) * 1.0
        + (0.01 * cert.c1) * (cert.c0 / sd.theta * cert.Gamma(0) * 1.0 + 1.0)
    )
    assert rhs == pytest.approx(expected, rel=1e-12)


def test_theorem1_rhs_term_by_term_recomputation():
    # independent spreadsheet-style evaluation of every named term
    law, k1, kp, sd, cert = certified_uniform_split()
    m, n, p = 10, 10, 2.0
    f_norm = eta_norm = 1.0
    init_p = init_1 = 1.0
    r = np.sqrt(2.0 / 3.0)
    gamma_m = r**m / (1.0 - r)
    gamma_0 = 1.0 / (1.0 - r)
    c0 = np.sqrt(2.0 * 1.0 * cert.c3)
    alpha_n = float(sd.alpha[n - 1])
    term1 = c0 * (cert.c1 * f_norm + eta_norm) * gamma_m * init_p ** (1 / p)
    term2 = (alpha_n * cert.c1 + eta_norm * 0.0) * (c0 * gamma_0 * init_p ** (1 / p) + init_1 ** (1 / p))
    rhs = theorem1_rhs(cert, sd, f_norm, eta_norm, init_p, init_1, m, n)
    assert rhs == pytest.approx(term1 + term2, rel=1e-9)


def test_theorem1_rhs_monotone_in_m():
    law, k1, kp, sd, cert = certified_uniform_split()
    values = [theorem1_rhs(cert, sd, 1.0, 1.0, 1.0, 1.0, m, 4) for m in range(1, 30)]
    assert all(a >= b - 1e-15 for a, b in zip(values[:-1], values[1:]))


def test_theorem1_rhs_polynomial_ratio_terms():
    # beta = 1: ratio terms enter both summands
    cert = MDCertificate(
        p=2.0,
        psi1=np.ones(1),
        psi2=np.ones(1),
        c1=2.0,
        c2=1.0,
        c3=0.5,
        gamma=np.array([1.0, 0.5, 0.25]),
        tail_ratio=0.5,
        n_max=2,
    )
    sd = power_iteration(scalar_kernel(1.0))
    sd.beta = 1
    sd.alpha = np.array([0.5, 0.25, 0.125, 0.0625])
    m, n = 2, 4
    c0 = np.sqrt(2 * 0.5)
    ratio_prod = (n * m) / (n + m)
    ratio_n = n / (n + m)
    inner = c0 / 1.0 * cert.Gamma(0) * 1.0 + 1.0
    expected = (
        c0 * (2.0 * 1.0 + 1.0) * cert.Gamma(m)
        + (sd.alpha[n - 1] * ratio_prod * 2.0 + 1.0 * (1 - ratio_n)) * inner
    )
    assert theorem1_rhs(cert, sd, 1.0, 1.0, 1.0, 1.0, m, n) == pytest.approx(expected)


def test_proxy_gap_bound_matches_gamma_tail():
    law, k1, kp, sd, cert = certified_uniform_split()
    gap = proxy_gap_bound(cert, sd, 1.0, 1.0, 20)
    assert gap == pytest.approx(cert.c0 * cert.Gamma(20), rel=1e-12)


def test_weighted_sup_norm():
    assert weighted_sup_norm([2.0, -6.0], [1.0, 2.0]) == 3.0


def test_fit_tail_ratio_geometric_exact():
    gamma = 0.7 ** np.arange(20)
    assert fit_tail_ratio(gamma) == pytest.approx(0.7, rel=1e-12)


def test_estimate_c1_with_growth():
    # kernel with row mass 1.2: theta = 1.2 so scaled powers stay at 1
    k = scalar_kernel(1.2)
    sd = power_iteration(k)
    assert estimate_c1(k, sd, np.ones(1), 10) == pytest.approx(1.0)
