import json
import math
from fractions import Fraction

import pytest

from chargeflow.equilibria import (
    EquilibriumCertificate,
    adler_moser,
    certify,
    cylinder_pair,
    hermite_pair,
    laguerre_pair,
    monomial_pair,
)
from chargeflow.errors import BadK, CertificationFailure, ValidationError
from chargeflow.operators import bilinear_H, lambda_nm
from chargeflow.polynomials import Polynomial, hermite


def proportional(p: Polynomial, q: Polynomial) -> bool:
    if p.degree != q.degree:
        return False
    ratio = None
    for a, b in zip(p.coeffs, q.coeffs):
        if a.is_zero != b.is_zero:
            return False
        if not a.is_zero:
            r = a / b
            if ratio is None:
                ratio = r
            elif r != ratio:
                return False
    return True


# -- hermite pairs ----------------------------------------------------------------


def test_hermite_pair_worked_example():
    cert = hermite_pair([2, 4, 6], -2)
    assert cert.residual_exact_zero
    assert cert.degrees == (9, 5)
    target_p = Polynomial([0, 0, 0, -15, 0, 18, 0, -12, 0, 8]).scale(8192)
    target_q = Polynomial([0, 3, 0, -4, 0, 4]).scale(32)
    assert proportional(cert.p, target_p)
    assert proportional(cert.q, target_q)
    at_zero = [c for z, c in cert.inventory if abs(z) < 1e-9]
    assert at_zero == [2]
    plus = [z for z, c in cert.inventory if c == 1]
    minus = [z for z, c in cert.inventory if c == -1]
    assert len(plus) == 6 and len(minus) == 4
    assert all(abs(z.imag) > 1e-3 for z in minus)


def test_hermite_pair_single_index():
    cert = hermite_pair([4], -2)
    assert cert.p == hermite(4)
    assert cert.q == Polynomial([1])
    assert cert.residual_exact_zero


def test_hermite_pair_k1_small():
    cert = hermite_pair([0, 1], -2)
    assert cert.degrees == (0, 0)
    assert cert.residual_exact_zero


def test_hermite_pair_various_b_and_sets():
    for indices, b in ([(1, 2), Fraction(1, 3)], [(0, 2, 5), -1], [(3, 5), Fraction(-7, 2)]):
        cert = hermite_pair(indices, b)
        assert cert.residual_exact_zero
        k = len(indices) - 1
        assert cert.degrees[0] == sum(indices) - k * (k + 1) // 2
        assert cert.degrees[1] == sum(indices[:k]) - k * (k - 1) // 2


def test_hermite_pair_validation():
    with pytest.raises(ValidationError):
        hermite_pair([2, 2], -2)
    with pytest.raises(ValidationError):
        hermite_pair([1, 3], 0)


# -- laguerre pairs ----------------------------------------------------------------


def test_laguerre_pair_k0():
    b = Fraction(1)
    cert = laguerre_pair([3], b)
    assert cert.residual_exact_zero
    assert cert.degrees == (3, 0)
    # governing field carries the -1/2 offset
    assert cert.sys.U.coeff(0) == -Fraction(1, 2)


def test_laguerre_pair_k4_consecutive():
    cert = laguerre_pair([0, 1, 2, 3, 4], 1)
    assert cert.residual_exact_zero
    assert cert.degrees == (4, 2)


def test_laguerre_pair_k4_nonconsecutive():
    cert = laguerre_pair([0, 1, 2, 3, 5], 2)
    assert cert.residual_exact_zero
    # n = sum(I) - k(k+2)/4, m = sum(I[:k]) - k^2/4 with k = 4
    assert cert.degrees == (11 - 6, 6 - 4)


def test_laguerre_pair_badk():
    with pytest.raises(BadK):
        laguerre_pair([0, 1], 1)
    with pytest.raises(BadK):
        laguerre_pair([0, 1, 2], 1)


# -- monomial pairs ----------------------------------------------------------------


def test_monomial_pair_single():
    cert = monomial_pair([5], 2)
    assert cert.p == Polynomial([0, 0, 0, 0, 0, 1])
    assert cert.q == Polynomial([1])
    assert cert.residual_exact_zero


def test_monomial_pair_small_sets():
    c01 = monomial_pair([0, 1], 1)
    assert c01.degrees == (1, 0)
    assert c01.residual_exact_zero
    c13 = monomial_pair([1, 3], Fraction(5, 3))
    assert c13.degrees == (4, 1)
    assert c13.residual_exact_zero
    c3 = monomial_pair([0, 2, 3], Fraction(1, 2))
    assert c3.degrees == (5, 2)
    assert c3.residual_exact_zero


# -- chain pairs ----------------------------------------------------------------


def test_adler_moser_k0():
    cert = adler_moser(0)
    assert cert.p == Polynomial([0, 1])
    assert cert.q == Polynomial([1])
    assert cert.residual_exact_zero


def test_adler_moser_k1_parameter():
    for tau in (Fraction(0), Fraction(3, 7), Fraction(-2)):
        cert = adler_moser(1, [tau])
        assert cert.residual_exact_zero
        assert proportional(cert.p, Polynomial([-tau, 0, 0, Fraction(1, 3)]))


def test_adler_moser_degrees():
    rng_ts = [Fraction(1, 3), Fraction(-2), Fraction(5, 7), Fraction(1), Fraction(-1, 9), Fraction(4)]
    for k in range(7):
        cert = adler_moser(k, rng_ts[:k])
        assert cert.p.degree == (k + 1) * (k + 2) // 2
        assert cert.q.degree == k * (k + 1) // 2
        assert cert.residual_exact_zero


def test_adler_moser_consecutive_only():
    # (theta_{k+2}, theta_k) must NOT satisfy the free bilinear identity
    ts = [Fraction(1, 2), Fraction(2)]
    c2 = adler_moser(2, ts)
    c1 = adler_moser(1, ts[:1])
    theta3, theta2, theta1 = c2.p, c2.q, c1.q
    sys = c2.sys
    resid = bilinear_H(sys, theta3, theta1, lam=lambda_nm(theta3.degree, theta1.degree, sys))
    assert not resid.is_zero


def test_adler_moser_wrong_parameter_count():
    with pytest.raises(ValidationError):
        adler_moser(2, [Fraction(1)])


# -- cylinder pairs ----------------------------------------------------------------


def test_cylinder_single_harmonic():
    cert = cylinder_pair([1], [0.0])
    assert cert.residual_exact_zero
    assert cert.degrees == (1, 0)
    # p = r sin(phi) = Y
    assert cert.bivariate["p_xy"][0] == [0.0, 0.0]
    assert abs(cert.bivariate["p_xy"][1][0] - 1.0) < 1e-15


def test_cylinder_pair_12():
    for ts in ([0.0, math.pi / 6], [0.3, 1.1]):
        cert = cylinder_pair([1, 2], ts)
        assert cert.residual_exact_zero
        assert cert.degrees == (3, 1)
        assert cert.bivariate["residual_norm_at_ts"] < 1e-10


def test_cylinder_degree_formula():
    for indices, ts in (
        ([0, 2, 3], [0.4, 0.9, 2.2]),
        ([1, 3, 4], [0.25, 1.5, 0.75]),
    ):
        cert = cylinder_pair(indices, ts)
        assert cert.degrees == (sum(indices), sum(indices[:-1]))
        assert cert.residual_exact_zero


def test_cylinder_phase_count_validation():
    with pytest.raises(ValidationError):
        cylinder_pair([1, 2], [0.0])


def test_cylinder_degenerate_phases_rejected():
    from chargeflow.errors import DegenerateWronskian

    # zero-frequency mode with zero phase collapses to the zero function
    with pytest.raises(DegenerateWronskian):
        cylinder_pair([0, 2], [0.0, 0.7])


# -- inventory / charge counting ---------------------------------------------------


def test_charge_count_identity():
    for cert in (
        hermite_pair([2, 4, 6], -2),
        hermite_pair([1, 2], Fraction(1, 2)),
        laguerre_pair([0, 1, 2, 3, 4], 1),
        monomial_pair([1, 3], 1),
    ):
        total = sum(c for _, c in cert.inventory)
        pbar, qbar = cert.reduced
        assert total == pbar.degree - qbar.degree


# -- certification ----------------------------------------------------------------


def test_certify_worked_example():
    cert = hermite_pair([2, 4, 6], -2)
    out = certify(cert)
    assert out.residual_exact_zero
    assert out.notes["gradient_max"] < 1e-9


def test_certify_all_recipes():
    certs = [
        hermite_pair([1, 3, 4], -2),
        laguerre_pair([0, 1, 2, 3, 4], 2),
        monomial_pair([0, 2, 5], Fraction(3, 4)),
        adler_moser(3, [Fraction(1, 3), Fraction(5), Fraction(-2, 9)]),
        cylinder_pair([1, 2], [0.2, 1.4]),
    ]
    for cert in certs:
        out = certify(cert)
        assert out.residual_exact_zero
        assert out.notes["gradient_max"] < 1e-7


def test_certify_detects_perturbation():
    cert = hermite_pair([2, 4], -2)
    broken = Polynomial(
        [c + (Fraction(1, 1000) if k == 1 else 0) for k, c in enumerate(cert.p.coeffs)]
    )
    cert.p = broken
    with pytest.raises(CertificationFailure) as err:
        certify(cert)
    assert err.value.coefficient_index is not None


def test_certificate_json_replay():
    cert = certify(hermite_pair([2, 4, 6], -2))
    doc = json.loads(json.dumps(cert.to_json()))
    back = EquilibriumCertificate.from_json(doc)
    assert back.p == cert.p
    assert back.q == cert.q
    assert back.lam == cert.lam
    again = certify(back)
    assert again.residual_exact_zero


def test_cylinder_certificate_json_replay():
    cert = certify(cylinder_pair([1, 2], [0.3, 1.1]))
    doc = json.loads(json.dumps(cert.to_json()))
    back = EquilibriumCertificate.from_json(doc)
    assert back.bivariate == cert.bivariate
    again = certify(back)
    assert again.residual_exact_zero


def test_certificates_sum_i_up_to_18():
    index_sets = [
        (2, 4, 6),
        (1, 2, 4, 6),
        (0, 1, 3, 5, 8),
        (5, 6, 7),
        (2, 7, 9),
    ]
    for indices in index_sets:
        assert sum(indices) <= 18
        cert = hermite_pair(list(indices), -2)
        assert cert.residual_exact_zero
    for indices in ((0, 1, 2, 3, 4), (0, 1, 2, 4, 5), (1, 2, 3, 4, 5)):
        assert sum(indices) <= 18
        cert = laguerre_pair(list(indices), 1)
        assert cert.residual_exact_zero
    for indices in ((0, 1, 4), (2, 5, 7), (1, 6)):
        cert = monomial_pair(list(indices), Fraction(2, 3))
        assert cert.residual_exact_zero
