import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_density
from qnm import gaussian
from qnm.channels import loss_channel, random_displacement_channel
from qnm.fisher import (Povm, cfi_homodyne, cfi_povm, cfim_povm, drho, number_povm, qfi_spectral, qfim,
                        sld, small_signal_qfi, weak_commutativity)
from qnm.fock import make_state, operators, squeeze


def vacuum_out(s, dim=60):
    vac = make_state("fock", {"n": 0}, dim).density().matrix
    ch = random_displacement_channel(s, "p", dim)
    return ch.apply(vac), ch.apply_derivative(vac)


def _psd_sqrt(a):
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def bures_qfi(rho_of, theta, h=1e-2):
    """Oracle: QFI = 8 (1 - sqrt F) / h^2 from the Uhlmann fidelity of neighbours."""
    a, b = rho_of(theta - h / 2), rho_of(theta + h / 2)
    ra = _psd_sqrt(a)
    root_f = np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(ra @ b @ ra), 0, None)))
    return 8 * (1 - root_f) / h**2


def test_vacuum_examples():
    rho, d = vacuum_out(0.1)
    assert qfi_spectral(rho, d).value == pytest.approx(2 / 1.01, abs=1e-8)
    assert qfi_spectral(rho, np.zeros_like(d)).value == 0.0
    rho, d = vacuum_out(0.5)
    assert cfi_povm(number_povm(60), rho, d) == pytest.approx(1.6, abs=1e-8)
    assert cfi_povm(Povm([np.eye(60)]), rho, d) == pytest.approx(0.0, abs=1e-14)


def test_qfi_against_fidelity_oracle():
    dim = 50
    rho_in = loss_channel(0.2, dim).apply(make_state("smsv", {"N": 0.7}, dim).density().matrix)

    def family(s):
        return random_displacement_channel(s, "p", dim).apply(rho_in)

    ch = random_displacement_channel(0.4, "p", dim)
    q = qfi_spectral(ch.apply(rho_in), ch.apply_derivative(rho_in)).value
    assert q == pytest.approx(bures_qfi(family, 0.4), rel=1e-3)


def test_homodyne_examples():
    rho, d = vacuum_out(1.0)
    assert cfi_homodyne(rho, d) == pytest.approx(2 / 1.5**2, abs=1e-8)
    rho, d = vacuum_out(0.01)
    assert cfi_homodyne(rho, d) == pytest.approx(8e-4, rel=0.02)
    assert cfi_homodyne(rho, np.zeros_like(d)) == 0.0


def test_homodyne_grid_check():
    rho, d = vacuum_out(0.5)
    with pytest.raises(ValueError):
        cfi_homodyne(rho, d, grid=np.linspace(-5, 5, 100))
    with pytest.raises(RuntimeError):
        cfi_homodyne(rho, d, grid=np.linspace(-3, 3, 401), tol=1e-9)


@pytest.mark.parametrize("N", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("s", [0.05, 0.3])
def test_spectral_matches_gaussian_squeezed_thermal(N, s):
    # squeezed thermal input: thermal occupation 0.2, then squeezing
    dim, nbar = 160, 0.2
    r = np.arcsinh(np.sqrt(N))
    th = np.diag(nbar**np.arange(dim) / (1 + nbar) ** (np.arange(dim) + 1)).astype(complex)
    S = squeeze(r, dim)
    rho = S @ th @ S.conj().T
    ch = random_displacement_channel(s, "p", dim).converged(rho)
    q = qfi_spectral(ch.apply(rho), ch.apply_derivative(rho)).value
    ops = operators(dim)
    vx = np.trace(ops.position @ ops.position @ rho).real
    vp = np.trace(ops.momentum @ ops.momentum @ rho).real
    cov = np.diag([vx, vp + s * s])
    assert q == pytest.approx(gaussian.qfi_covariance(cov, np.diag([0, 2 * s])), rel=1e-3)


@given(st.integers(0, 2**31), st.floats(0.05, 1.0), st.floats(0.0, 0.5))
def test_measurement_hierarchy(seed, s, eta):
    rng = np.random.default_rng(seed)
    dim = 16
    rho = random_density(rng, dim, rank=2)
    P = np.diag((np.arange(dim) < 6).astype(float))
    rho = P @ rho @ P
    rho /= np.trace(rho).real
    rho = loss_channel(eta, dim).apply(rho)
    ch = random_displacement_channel(s, "p", dim)
    out, d = ch.apply(rho), ch.apply_derivative(rho)
    q = qfi_spectral(out, d).value
    assert cfi_povm(number_povm(dim), out, d) <= q + 1e-6
    assert cfi_homodyne(out, d, check=False) <= q + 1e-6


@given(st.integers(0, 2**31))
def test_convexity(seed):
    rng = np.random.default_rng(seed)
    dim = 8
    ch = random_displacement_channel(0.3, "p", dim)
    r1, r2 = random_density(rng, dim, 2), random_density(rng, dim, 3)
    q = lambda r: qfi_spectral(ch.apply(r), ch.apply_derivative(r)).value
    assert q(0.5 * (r1 + r2)) <= 0.5 * q(r1) + 0.5 * q(r2) + 1e-6


@pytest.mark.parametrize("s", [0.1, 0.5, 1.0])
def test_sigma_variance_chain_rule(s):
    dim = 40
    rho_in = make_state("coherent", {"alpha": 0.7}, dim).density().matrix
    out = random_displacement_channel(s, "p", dim).apply(rho_in)
    q_sigma = qfi_spectral(out, drho(lambda t: random_displacement_channel(t, "p", dim), rho_in, s)).value
    # derivative with respect to the variance v = sigma^2, by finite differences in v
    d_var = drho(lambda v: random_displacement_channel(np.sqrt(v), "p", dim), rho_in, s * s,
                 method="central_diff", h=1e-5)
    q_var = qfi_spectral(out, 0.5 * (d_var + d_var.conj().T)).value
    assert q_sigma == pytest.approx(4 * s * s * q_var, rel=1e-7)


def test_drho_methods_agree():
    dim = 20
    rho = make_state("fock", {"n": 2}, dim).density().matrix
    fam = lambda t: random_displacement_channel(t, "p", dim)
    a = drho(fam, rho, 0.2)
    b = drho(fam, rho, 0.2, method="central_diff")
    assert np.max(np.abs(a - b)) < 1e-6
    # even in sigma: derivative vanishes at the origin
    assert np.max(np.abs(drho(fam, rho, 0.0))) < 1e-14
    assert np.max(np.abs(drho(fam, rho, 0.0, method="central_diff", h=1e-4))) < 1e-3
    with pytest.raises(RuntimeError):
        drho(fam, rho, 0.2, method="central_diff", h=1e-13)
    with pytest.raises(ValueError):
        drho(fam, rho, 0.2, method="spline")


def test_small_signal_examples():
    dim = 50
    ops = operators(dim)
    rho = loss_channel(0.1, dim).apply(make_state("fock", {"n": 8}, dim).density().matrix)
    assert small_signal_qfi(rho, ops.position) == pytest.approx(2 * 0.9**8 * 9, abs=1e-6)
    full = np.diag(np.full(dim, 1.0 / dim)).astype(complex)
    assert small_signal_qfi(full, ops.position) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        two_d = small_signal_qfi(rho, [ops.position, ops.momentum])
    assert two_d == pytest.approx(4 * 0.9**8 * 9, abs=1e-6)


def test_small_signal_matches_spectral_limit():
    dim = 40
    rho = loss_channel(0.1, dim).apply(make_state("fock", {"n": 3}, dim).density().matrix)
    s = 1e-4
    ch = random_displacement_channel(s, "p", dim)
    q = qfi_spectral(ch.apply(rho), ch.apply_derivative(rho)).value
    assert q == pytest.approx(small_signal_qfi(rho, operators(dim).position), rel=1e-3)


def test_qfim_and_weak_commutativity_pure_rotation():
    # pure qubit, two rotation parameters: QFIM is 4 Cov of the generators
    psi = np.array([1.0, 1.0j]) / np.sqrt(2)
    rho = np.outer(psi, psi.conj())
    X = np.array([[0, 1], [1, 0]]) / 2
    Z = np.diag([1.0, -1.0]) / 2
    ds = [-1j * (G @ rho - rho @ G) for G in (X, Z)]
    F = qfim(rho, ds)
    assert np.allclose(F, np.eye(2), atol=1e-12)
    L = [sld(rho, d) for d in ds]
    # for a pure state the SLD is twice the derivative
    assert np.allclose(L[0], 2 * ds[0], atol=1e-12)
    W = weak_commutativity(rho, L)
    direct = np.trace(rho @ (4 * ds[0] @ ds[1] - 4 * ds[1] @ ds[0]))
    assert W[0, 1] == pytest.approx(direct, abs=1e-12)
    assert abs(W[0, 1]) == pytest.approx(2.0, abs=1e-12)


def test_cfim_number_rank_one():
    dim = 40
    rho, d = vacuum_out(0.3, dim)
    C = cfim_povm(number_povm(dim), rho, [d, 2 * d])
    assert np.linalg.eigvalsh(C)[0] < 1e-12


def test_fisher_result_metadata():
    rho, d = vacuum_out(0.2)
    res = qfi_spectral(rho, d)
    assert set(res.sensitivity) == {1e-10, 1e-14}
    assert not res.flagged
    assert float(res) == res.value
    with pytest.raises(ValueError):
        qfi_spectral(rho, d + 1j * np.eye(60))
