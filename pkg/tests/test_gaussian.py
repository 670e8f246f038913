import numpy as np
import pytest
from hypothesis import given, strategies as st

from qnm import gaussian as g


def random_symplectic_1(rng):
    A = rng.normal(size=(2, 2))
    if np.linalg.det(A) < 0:
        A[0] *= -1
    return A / np.sqrt(np.linalg.det(A))


def random_physical_cov(rng, nu_min=0.5):
    S = random_symplectic_1(rng)
    nu = nu_min + rng.exponential(0.5)
    return S @ (nu * np.eye(2)) @ S.T


def test_constructors():
    assert np.allclose(g.make_gaussian("vacuum").cov, 0.5 * np.eye(2))
    sm = g.make_gaussian("smsv", N=1)
    assert sm.cov[0, 0] == pytest.approx(1.5 + np.sqrt(2), abs=1e-12)
    assert np.allclose(g.make_gaussian("tmsv", N=0).cov, 0.5 * np.eye(4))
    with pytest.raises(ValueError):
        g.make_gaussian("smsv", N=-1)
    with pytest.raises(ValueError):
        g.make_gaussian("squid")


def test_channel_examples():
    vac = g.make_gaussian("vacuum")
    assert np.allclose(g.encode_1d(0.3).apply(vac).cov, np.diag([0.5, 0.59]))
    sm = g.make_gaussian("smsv", N=2.0)
    assert np.allclose(g.loss(0.0).apply(sm).cov, sm.cov)
    out = g.encode_1d(0.1).apply(g.loss(0.1).apply(vac))
    assert np.allclose(out.cov, np.diag([0.5, 0.51]))
    with pytest.raises((ValueError, IndexError)):
        g.loss(0.1, mode=3).apply(vac)
    with pytest.raises(ValueError):
        g.classical_noise(np.diag([1.0, -1.0])).apply(vac)


def test_qfi_covariance_examples():
    # sigma = 0 exactly: the limit uses the second derivative of the covariance
    assert g.qfi_covariance(0.5 * np.eye(2), np.zeros((2, 2)), np.diag([0, 2.0])) == pytest.approx(2.0, abs=1e-12)
    s = 1e-4
    assert g.qfi_covariance(np.diag([0.5, 0.5 + s * s]), np.diag([0, 2 * s])) == pytest.approx(2.0, rel=1e-6)
    assert g.qfi_covariance(np.diag([0.5, 1.5]), np.diag([0, 2.0])) == pytest.approx(1.0, abs=1e-12)
    assert g.qfi_covariance(np.diag([0.7, 0.9]), np.zeros((2, 2))) == 0.0


def test_vacuum_qfi_matches_closed_form():
    for s in (0.01, 0.3, 1.0, 3.0):
        cov = np.diag([0.5, 0.5 + s * s])
        assert g.qfi_covariance(cov, np.diag([0, 2 * s])) == pytest.approx(2 / (1 + s * s), rel=1e-12)


def test_symplectic_eigenvalues_examples():
    assert np.allclose(g.symplectic_eigenvalues(0.5 * np.eye(6)), [0.5] * 3)
    s = 0.37
    # oracle: eigenvalues of i*Omega*Sigma come in +-nu pairs
    cov = np.diag([0.5, 0.5 + s * s])
    ev = np.abs(np.linalg.eigvals(1j * g.omega_xpxp(1) @ cov))
    assert g.symplectic_eigenvalues(cov)[0] == pytest.approx(ev.max(), abs=1e-14)
    assert g.symplectic_eigenvalues(cov)[0] == pytest.approx(np.sqrt(0.25 + s * s / 2), abs=1e-14)
    assert g.symplectic_eigenvalues(np.diag([1.7, 1.7]))[0] == pytest.approx(1.7)


def test_xxpp_round_trip(rng):
    M = rng.normal(size=(6, 6))
    assert np.array_equal(g.from_xxpp(g.to_xxpp(M)), M)
    assert np.allclose(g.to_xxpp(g.omega_xpxp(3)), g.omega_xxpp(3))


def test_tmsv_perp_examples():
    cov = g.make_gaussian("tmsv", N=1).cov.copy()
    cov[0, 0] += 0.25
    P = np.zeros((4, 4))
    P[1, 1] = 1.0
    assert g.qfi_zero_signal(cov, P) == pytest.approx(16 / 3, abs=1e-9)


def test_tmsv_zero_signal_matches_small_sigma_multimode():
    cov0 = g.make_gaussian("tmsv", N=2.0).cov.copy()
    cov0[0, 0] += 0.1
    P = np.zeros((4, 4))
    P[1, 1] = 1.0
    s = 1e-4
    direct = g.qfi_covariance_multimode(cov0 + s * s * P, 2 * s * P)
    assert direct == pytest.approx(g.qfi_zero_signal(cov0, P), rel=1e-4)


def test_qfim_vacuum_examples():
    I2 = np.eye(2)
    F0 = g.qfim_gaussian([0, 0], 0.5 * I2, [[0, 1], [0, 0]], [np.zeros((2, 2))] * 2,
                         [None, np.diag([0.0, 2.0])])
    assert np.allclose(F0, np.diag([2.0, 2.0]))
    s = 0.5
    F = g.qfim_gaussian([0, 0], np.diag([0.5, 0.5 + s * s]), [[0, 1], [0, 0]],
                        [np.zeros((2, 2)), np.diag([0, 2 * s])])
    assert np.allclose(F, np.diag([2 / 1.5, 2 / 1.25]), atol=1e-12)


def test_qfim_one_parameter_matches_qfi(rng):
    cov = random_physical_cov(rng, 0.6)
    d = rng.normal(size=(2, 2))
    d = d + d.T
    F = g.qfim_gaussian([0, 0], cov, [[0, 0]], [d])
    assert F[0, 0] == pytest.approx(g.qfi_covariance(cov, d), rel=1e-12)


@given(st.floats(0.0, 0.99), st.integers(0, 2**31))
def test_loss_channel_consistency(eta, seed):
    rng = np.random.default_rng(seed)
    cov = random_physical_cov(rng)
    st_in = g.GaussianState(np.zeros(2), cov)
    out = g.loss(eta).apply(st_in)
    assert np.allclose(out.cov, (1 - eta) * cov + eta * 0.5 * np.eye(2), atol=1e-12)


@given(st.integers(0, 2**31), st.floats(0, 0.9), st.floats(0, 1))
def test_purity_bound(seed, eta, s):
    rng = np.random.default_rng(seed)
    state = g.GaussianState(np.zeros(2), random_physical_cov(rng))
    out = g.encode_1d(s).apply(g.loss(eta).apply(state))
    assert out.purity <= 1 + 1e-12
    for kind, kw in (("vacuum", {}), ("smsv", {"N": 3.3}), ("tmsv", {"N": 1.7}), ("coherent", {"alpha": 1 + 2j})):
        assert g.make_gaussian(kind, **kw).purity == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 2**31))
def test_multimode_formula_reduces_to_single_mode(seed):
    rng = np.random.default_rng(seed)
    cov = random_physical_cov(rng, nu_min=0.51)
    d = rng.normal(size=(2, 2))
    d = d + d.T
    a = g.qfi_covariance(cov, d)
    b = g.qfi_covariance_multimode(cov, d)
    # strongly squeezed draws lose digits in both routes alike
    rel = max(1e-10, 10 * np.finfo(float).eps * np.linalg.cond(cov))
    assert b == pytest.approx(a, rel=rel, abs=1e-10)


@pytest.mark.parametrize("N", [0.5, 1, 2, 5])
@pytest.mark.parametrize("s", [1e-3, 0.1])
def test_smsv_optimality_witness(N, s):
    out = g.encode_1d(s).apply(g.make_gaussian("smsv", N=N))
    q = g.qfi_covariance(out.cov, np.diag([0, 2 * s]))
    assert q == pytest.approx(4 / (2 * s * s + 1 / g.xi(N)), abs=1e-9)


@given(st.floats(0.0, 2.0))
def test_vacuum_qfim_is_diagonal(s):
    cov = np.diag([0.5, 0.5 + s * s])
    F = g.qfim_gaussian([0, 0], cov, [[0, 1], [0, 0]], [np.zeros((2, 2)), np.diag([0, 2 * s])],
                        [None, np.diag([0.0, 2.0])])
    assert abs(F[0, 1]) < 1e-14


def test_rayleigh_diagnostic_vacuum():
    res = g.rayleigh_curse_diagnostic(lambda s: np.diag([0.5, 0.5 + s * s]), np.logspace(-3, -1, 8))
    assert res["cursed"] is False
    assert res["fitted_k"] == pytest.approx(0.5, rel=0.02)


def test_rayleigh_diagnostic_rejects_short_grid():
    with pytest.raises(ValueError):
        g.rayleigh_curse_diagnostic(lambda s: np.diag([0.5, 0.5 + s * s]), [0.01, 0.02])
