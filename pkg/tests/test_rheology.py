import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridice.rheology import (RheologyParams, delta, delta_plastic, ice_strength,
                                strain_rate, stress, stress_linearization,
                                viscosities_and_strength)

PAR = RheologyParams()


def test_strain_rate_examples():
    z = strain_rate(np.zeros((2, 2)))
    assert not np.any(z.eps) and not np.any(z.eps_dev)
    g = 3e-7
    s = strain_rate(np.array([[0, g], [0, 0]]))
    assert np.allclose(s.eps, [[0, g / 2], [g / 2, 0]]) and s.trace == 0
    a = 2e-7
    d = strain_rate(np.array([[a, 0], [0, a]]))
    assert np.allclose(d.eps_dev, 0) and np.isclose(d.trace, 2 * a)


def test_delta_examples():
    assert delta(strain_rate(np.zeros((2, 2))), PAR) == 2e-9
    a = -4e-7
    assert np.isclose(delta_plastic(strain_rate(np.diag([a, a])), PAR), 2 * abs(a))
    g = 5e-7
    # eps_dev:eps_dev = g^2/2, so sqrt((2/4) * g^2/2) = g/2
    assert np.isclose(delta_plastic(strain_rate(np.array([[0, g], [0, 0]])), PAR), g / 2)


def test_strength_and_viscosity_examples():
    eps = strain_rate(np.array([[1e-7, 2e-7], [0, -3e-7]]))
    eta, zeta, P = viscosities_and_strength(eps, 0.3, 1.0, PAR)
    assert np.isclose(P, 8250.0) and np.isclose(eta, zeta / 4)
    assert viscosities_and_strength(eps, 0.0, 0.7, PAR) == (0.0, 0.0, 0.0)


def test_stress_examples():
    P = 8250.0
    sig0 = stress(strain_rate(np.zeros((2, 2))), 1.0, 4.0, P)
    assert np.allclose(sig0, -P / 2 * np.eye(2))
    g = 1e-6
    eps = strain_rate(np.array([[0, g], [0, 0]]))
    eta, zeta, P = viscosities_and_strength(eps, 0.3, 1.0, PAR)
    sig = stress(eps, eta, zeta, P)
    assert np.isclose(sig[0, 1], 2 * eta * g / 2) and np.allclose(np.diag(sig), -P / 2)


def test_rheology_identities_on_random_states():
    rng = np.random.default_rng(0)
    G = rng.standard_normal((10_000, 2, 2)) * 10.0 ** rng.uniform(-12, -5, (10_000, 1, 1))
    H = rng.uniform(0, 3, 10_000)
    A = rng.uniform(0, 1, 10_000)
    eps = strain_rate(G)
    d = delta(eps, PAR)
    assert np.all(d >= 2e-9)
    eta, zeta, P = viscosities_and_strength(eps, H, A, PAR)
    assert np.allclose(eta, zeta / 4, rtol=1e-15, atol=0)
    sig = stress(eps, eta, zeta, P)
    tr = sig[:, 0, 0] + sig[:, 1, 1]
    expect = 2 * zeta * eps.trace - P
    assert np.all(np.abs(tr - expect) <= 1e-14 * np.maximum(np.abs(expect), P))
    trdev = eps.eps_dev[:, 0, 0] + eps.eps_dev[:, 1, 1]
    assert np.all(np.abs(trdev) <= 1e-15 * np.abs(eps.eps).max(axis=(1, 2)))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 1), st.floats(0, 1))
def test_strength_monotone(h1, h2, a1, a2):
    lo = ice_strength(min(h1, h2), min(a1, a2), PAR)
    hi = ice_strength(max(h1, h2), max(a1, a2), PAR)
    assert lo <= hi


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10).filter(lambda c: abs(c) > 1e-3),
       st.lists(st.floats(-1e-5, 1e-5), min_size=4, max_size=4))
def test_plastic_rate_homogeneous(c, g):
    G = np.array(g).reshape(2, 2)
    lhs = delta_plastic(strain_rate(c * G), PAR)
    assert np.isclose(lhs, abs(c) * delta_plastic(strain_rate(G), PAR), rtol=1e-12, atol=1e-30)


def _sigma(G, H, A):
    eps = strain_rate(G)
    return stress(eps, *viscosities_and_strength(eps, H, A, PAR))


def test_linearization_matches_finite_differences():
    rng = np.random.default_rng(3)
    errs = []
    for _ in range(100):
        G = rng.standard_normal((2, 2)) * 1e-6
        dG = rng.standard_normal((2, 2))
        H, A = rng.uniform(0.1, 2), rng.uniform(0.5, 1)
        C = stress_linearization(strain_rate(G), PAR, H, A)
        h = 1e-7 * np.linalg.norm(G) / np.linalg.norm(dG)
        fd = (_sigma(G + h * dG, H, A) - _sigma(G - h * dG, H, A)) / (2 * h)
        an = np.einsum("ijkl,kl->ij", C, dG)
        errs.append(np.linalg.norm(an - fd) / np.linalg.norm(fd))
    assert max(errs) <= 1e-5
    assert np.median(errs) < 1e-6


def test_linearization_at_rest_is_constant_viscosity():
    C = stress_linearization(strain_rate(np.zeros((2, 2))), PAR, 0.3, 1.0)
    C0 = stress_linearization(strain_rate(np.zeros((2, 2))), PAR, 0.3, 1.0, theta=0.0)
    assert np.array_equal(C, C0)


def test_params_validated():
    with pytest.raises(ValueError):
        RheologyParams(e=0.0)
