"""Numbered end-to-end checks shared by the test suite and ``qnm selftest``.

Each check returns a ``CheckResult``; closed-form targets come from
``bounds`` or are written out inline.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bounds, gaussian
from .channels import (compose, classical_noise_channel, dark_count_channel, loss_channel,
                       qubit_random_rotation, random_displacement_channel, swap_control)
from .fisher import (cfi_homodyne, cfi_povm, cfim_povm, number_povm, qfi_spectral, qfim, sld,
                     small_signal_qfi, weak_commutativity)
from .fock import displacement, make_state, operators, squeeze
from .optimize import optimize_sparse
from .protocols import joint_bruteforce_check, joint_measurement_cfim, simulate_adaptive, simulate_nonadaptive
from .waveform import acceleration_ratios, qfi_psd, vacuum_qfi_psd


@dataclass
class CheckResult:
    key: str
    title: str
    passed: bool
    details: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.key}: {self.title} ({self.seconds:.1f}s)"


class _Recorder:
    def __init__(self):
        self.ok = True
        self.details = []

    def close(self, label, got, want, tol, rel=False):
        err = abs(got - want) / (abs(want) if rel else 1.0)
        good = bool(err <= tol)
        self.ok &= good
        self.details.append(f"{label}: got {got:.10g}, want {want:.10g}, {'rel' if rel else 'abs'} err {err:.2e} (tol {tol:g})")
        return good

    def true(self, label, cond, note=""):
        cond = bool(cond)
        self.ok &= cond
        self.details.append(f"{label}: {'ok' if cond else 'violated'} {note}".rstrip())
        return cond


CHECKS: list[tuple[str, str, bool, Callable]] = []


def check(key: str, title: str, slow: bool = False):
    def deco(fn):
        CHECKS.append((key, title, slow, fn))
        return fn
    return deco


def _vacuum_output(sigma, dim):
    vac = make_state("fock", {"n": 0}, dim).density().matrix
    ch = random_displacement_channel(sigma, "p", dim)
    return ch.apply(vac), ch.apply_derivative(vac)


@check("vacuum_baseline", "vacuum QFI and photon-counting CFI equal 2/(1+s^2)")
def vacuum_baseline(r: _Recorder):
    for s in (0.01, 0.1, 0.5, 1.0):
        rho, d = _vacuum_output(s, 60)
        want = 2.0 / (1.0 + s * s)
        r.close(f"qfi s={s}", qfi_spectral(rho, d).value, want, 1e-6)
        r.close(f"cfi_number s={s}", cfi_povm(number_povm(60), rho, d), want, 1e-6)


@check("homodyne_rayleigh", "quadrature CFI of the vacuum vanishes as 8 s^2")
def homodyne_rayleigh(r: _Recorder):
    for s in (0.01, 0.1, 0.5, 1.0):
        rho, d = _vacuum_output(s, 60)
        r.close(f"cfi_p s={s}", cfi_homodyne(rho, d), 2 * s * s / (0.5 + s * s) ** 2, 1e-6)
    rho, d = _vacuum_output(0.01, 60)
    r.close("cfi_p / 8s^2 at s=0.01", cfi_homodyne(rho, d) / (8 * 0.01**2), 1.0, 0.02)


@check("smsv_lossless", "squeezed vacuum attains the energy-constrained bound without loss")
def smsv_lossless(r: _Recorder):
    for N in (0.5, 1.0, 2.0, 5.0):
        for s in (0.05, 0.1, 0.5):
            st = gaussian.encode_1d(s).apply(gaussian.make_gaussian("smsv", N=N))
            dcov = np.diag([0.0, 2 * s])
            r.close(f"gaussian N={N} s={s}", gaussian.qfi_covariance(st.cov, dcov),
                    4.0 / (2 * s * s + 1.0 / gaussian.xi(N)), 1e-9)
    dim = 200
    for N in (1.0, 3.0, 5.0):
        psi = make_state("smsv", {"N": N}, dim).density().matrix
        for s in (0.1, 0.5):
            ch = random_displacement_channel(s, "p", dim).converged(psi)
            q = qfi_spectral(ch.apply(psi), ch.apply_derivative(psi)).value
            r.close(f"fock N={N} s={s}", q, bounds.ecqfi_lossless(s, N), 1e-3, rel=True)


@check("lossy_fock_optimum", "lossy Fock small-signal QFI and its optimum")
def lossy_fock_optimum(r: _Recorder):
    dim, eta = 50, 0.1
    ops = operators(dim)
    L = loss_channel(eta, dim)
    vals = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for N in range(0, 31):
            rho = L.apply(make_state("fock", {"n": N}, dim).density().matrix)
            vals[N] = small_signal_qfi(rho, ops.position)
            r.close(f"N={N}", vals[N], 2 * (1 - eta) ** N * (N + 1), 1e-6)
    best = max(vals.values())
    top = sorted(n for n, v in vals.items() if v >= best - 1e-9)
    r.true("argmax in {8, 9}", set(top) <= {8, 9} and top, f"argmax {top}")
    r.close("optimal value", best, 7.748, 0.002)


def gkp_lossy_qfi(delta: float, dim: int, eta: float = 0.1, sigma: float = 1e-3, axis: str = "p",
                  leakage_tol: float = 1e-5):
    state = make_state("gkp_delta", {"delta": delta}, dim, leakage_tol=leakage_tol)
    L = loss_channel(eta, dim)
    A = L.kraus_images(state.amplitudes, min_norm=1e-14)
    rho = A @ A.conj().T
    ch = random_displacement_channel(sigma, axis, dim)
    return state.mean_number, qfi_spectral(ch.apply(rho), ch.apply_derivative(rho)).value


def tmsv_storage_qfi(N: float, sigma: float, eta: float, eta_a: float = 0.0) -> float:
    st = gaussian.make_gaussian("tmsv", N=N)
    st = gaussian.loss(eta_a, 1).apply(gaussian.loss(eta, 0).apply(st))
    st = gaussian.encode_1d(sigma, 0).apply(st)
    dcov = np.zeros((4, 4))
    dcov[1, 1] = 2 * sigma
    return gaussian.qfi_covariance_multimode(st.cov, dcov)


@check("gkp_fast", "GKP (delta=0.2) under loss tracks the perfect-storage TMSV value")
def gkp_fast(r: _Recorder):
    n, q = gkp_lossy_qfi(0.2, 300)
    ref = tmsv_storage_qfi(n, 1e-3, 0.1)
    r.details.append(f"<n> = {n:.4f}")
    r.close("gkp vs tmsv", q, ref, 0.05, rel=True)


@check("gkp_slow", "GKP with <n> > 100 at dimension ~1200 reaches QFI >= 19", slow=True)
def gkp_slow(r: _Recorder):
    n, q = gkp_lossy_qfi(0.07, 1200)
    r.details.append(f"delta=0.07 dim=1200 <n> = {n:.2f}, qfi = {q:.4f}")
    r.true("<n> > 100", n > 100)
    r.true("qfi >= 19", q >= 19.0, f"(qfi {q:.4f})")


@check("sparse_search", "sparse Fock superposition search reaches QFI >= 17.5", slow=True)
def sparse_search(r: _Recorder):
    run = optimize_sparse(20, 24, 1e-3, 0.1, 490, particles=64, iters=100, polish_steps=10, seed=1)
    r.details.append(f"budget 64 particles x 100 iterations + 10 polish steps, seed 1; "
                     f"surrogate {run.surrogate_value:.4f}; <n> = {run.mean_number:.2f}")
    r.true("qfi >= 17.5", run.qfi >= 17.5, f"(qfi {run.qfi:.4f})")


@check("tmsv_formulas", "TMSV covariance QFI vs high-energy and perpendicular-noise forms")
def tmsv_formulas(r: _Recorder):
    for eta_a in (0.0, 0.01):
        q = tmsv_storage_qfi(1e4, 1e-3, 0.1, eta_a)
        r.close(f"N=1e4 eta_a={eta_a}", q, bounds.qfi_tmsv_1d_he(1e-3, 0.1, eta_a), 0.01, rel=True)
    for N in (1, 2, 5):
        cov0 = gaussian.make_gaussian("tmsv", N=N).cov.copy()
        cov0[0, 0] += 0.25
        P = np.zeros((4, 4))
        P[1, 1] = 1.0
        r.close(f"perp N={N}", gaussian.qfi_zero_signal(cov0, P), bounds.qfi_tmsv_perp(N), 1e-9)


@check("classical_noise_vacuum", "vacuum QFI with extra classical noise")
def classical_noise_vacuum(r: _Recorder):
    s, sx, sp, dim = 0.1, 0.2, 0.15, 80
    vac = make_state("fock", {"n": 0}, dim).density().matrix
    ch = compose(random_displacement_channel(s, "p", dim), classical_noise_channel(np.diag([sx**2, sp**2]), dim))
    q = qfi_spectral(ch.apply(vac), ch.apply_derivative(vac)).value
    r.close("qfi", q, bounds.qfi_vacuum_classical(s, sx, sp), 0.005, rel=True)


def _mean_variance_family(mu, s, dim):
    ops = operators(dim)
    vac = make_state("fock", {"n": 0}, dim).density().matrix
    ch = random_displacement_channel(s, "p", dim)
    U = displacement(1j * mu / np.sqrt(2), dim)
    rho = U @ ch.apply(vac) @ U.conj().T
    dmu = 1j * (ops.position @ rho - rho @ ops.position)
    ds = U @ ch.apply_derivative(vac) @ U.conj().T
    return rho, dmu, ds


@check("simultaneous", "joint mean/variance QFIM, counting CFIM and weak commutativity")
def simultaneous(r: _Recorder):
    dim = 60
    for mu, s in ((0.0, 0.1), (0.0, 0.5), (1e-4, 2e-4)):
        rho, dmu, ds = _mean_variance_family(mu, s, dim)
        Q = qfim(rho, [dmu, ds])
        want = np.diag([2 / (1 + 2 * s * s), 2 / (1 + s * s)])
        r.close(f"qfim mu={mu} s={s}", float(np.max(np.abs(Q - want))), 0.0, 1e-6)
        C = cfim_povm(number_povm(dim), rho, [dmu, ds])
        A = 2 / ((mu**2 + s**2) * (1 - mu**2 + s**2)) * np.array([[mu * mu, mu * s], [mu * s, s * s]])
        r.close(f"number cfim mu={mu} s={s}", float(np.max(np.abs(C - A))), 0.0, 1e-6)
        ev = np.linalg.eigvalsh(C)
        r.true(f"rank one mu={mu} s={s}", ev[0] < 1e-6 * ev[-1] + 1e-12, f"(eigenvalues {ev[0]:.2e}, {ev[-1]:.4f})")
        W = weak_commutativity(rho, [sld(rho, dmu), sld(rho, ds)])
        r.close(f"weak commutativity mu={mu} s={s}", float(np.max(np.abs(W))), 0.0, 1e-8)


@check("adaptive_protocol", "Monte Carlo non-adaptive and adaptive mean/variance estimation")
def adaptive_protocol(r: _Recorder):
    s, M, trials = 0.05, 10_000, 1000
    non = {}
    for ratio in (0.0, 0.5, 1.0):
        tr = simulate_nonadaptive(ratio * s, s, M, seed=11, trials=trials).summary()
        non[ratio] = M * tr["mse_sigma"]
        r.close(f"non-adaptive M*mse mu/s={ratio}", non[ratio], 1 + 2 * ratio**2, 0.10, rel=True)
    ad_small = M // 10 * simulate_adaptive(0.5 * s, s, M // 10, seed=12, trials=trials).summary()["mse_sigma"]
    ad = M * simulate_adaptive(0.5 * s, s, M, seed=12, trials=trials).summary()["mse_sigma"]
    r.details.append(f"adaptive M*mse at M={M // 10}: {ad_small:.4f}, at M={M}: {ad:.4f}")
    r.true("adaptive moves toward 1", abs(ad - 1) < abs(ad_small - 1))
    r.true("adaptive below non-adaptive at mu/s=0.5", ad < non[0.5], f"({ad:.4f} vs {non[0.5]:.4f})")
    floor = 0.5 * 1.05
    r.true("nothing below the quantum bound", min([ad] + list(non.values())) >= floor)


@check("joint_measurement", "collective measurement CFIM")
def joint_measurement(r: _Recorder):
    ops = operators(40)
    vac = make_state("fock", {"n": 0}, 40).amplitudes
    V = float(np.real(vac.conj() @ ops.position @ ops.position @ vac))
    for M in (2, 3, 10):
        r.close(f"vacuum M={M}", float(np.max(np.abs(joint_measurement_cfim(M, V) - 2 * np.diag([M, M - 1.0])))), 0.0, 1e-12)
    psi = np.array([1.0, 1.0]) / np.sqrt(2)
    H = np.diag([0.5, -0.5])
    C = joint_bruteforce_check(psi, H, 2, 1e-3, 1e-3)
    ref = joint_measurement_cfim(2, 0.25)
    r.close("brute force M=2", float(np.max(np.abs(C - ref)) / np.max(ref)), 0.0, 1e-4)


@check("qubit_diffusion", "qubit phase-diffusion QFI")
def qubit_diffusion(r: _Recorder):
    plus = np.full((2, 2), 0.5, dtype=complex)
    for s in (0.1, 1.0, 2.0):
        ch = qubit_random_rotation(s)
        q = qfi_spectral(ch.apply(plus), ch.apply_derivative(plus)).value
        r.close(f"s={s}", q, s * s / np.expm1(s * s), 1e-10)


def dark_count_cfi(sigma: float, nbar: float, k: int | None, dim: int = 120, N: float = 1.0) -> float:
    """Photon-counting CFI after anti-squeezing, optional |1> <-> |k> swap, and dark counts."""
    psi = make_state("smsv", {"N": N}, dim).density().matrix
    r_sq = np.arcsinh(np.sqrt(N))
    U = squeeze(r_sq, dim)
    if abs(np.diag(U @ psi @ U.conj().T)[0]) < 0.99:
        U = squeeze(-r_sq, dim)
    ch = random_displacement_channel(sigma, "p", dim)
    rho, d = ch.apply(psi), ch.apply_derivative(psi)
    ops = [U]
    if k is not None:
        ops.append(swap_control(k, dim))
    for W in ops:
        rho, d = W @ rho @ W.conj().T, W @ d @ W.conj().T
    dark = dark_count_channel(nbar, dim)
    return cfi_povm(number_povm(dim), dark.apply(rho), dark.apply(d))


@check("dark_counts", "dark counts curse photon counting unless |1> is moved out of reach")
def dark_counts(r: _Recorder):
    xi = gaussian.xi(1.0)
    nbar = 0.1
    sig = np.sqrt(np.array([1e-6, 1e-5, 1e-4]) / xi)
    cfis = np.array([dark_count_cfi(s, nbar, None) for s in sig])
    slope = np.polyfit(np.log(sig), np.log(cfis), 1)[0]
    r.close("no-control slope", slope, 2.0, 0.05)
    s0 = np.sqrt(1e-4 / xi)
    for k in (50, 80):
        c = dark_count_cfi(s0, nbar, k)
        r.true(f"swap k={k}: cfi >= 0.95*4xi", c >= 0.95 * 4 * xi, f"(cfi {c:.4f}, 4xi {4 * xi:.4f})")


def _fock_2d(N, dim=50, eta=0.1):
    ops = operators(dim)
    rho = loss_channel(eta, dim).apply(make_state("fock", {"n": N}, dim).density().matrix)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return small_signal_qfi(rho, [ops.position, ops.momentum])


@check("axion_2d", "two-quadrature encoding: Fock small-signal QFI")
def axion_2d(r: _Recorder):
    for N in range(0, 21):
        r.close(f"N={N}", _fock_2d(N), 4 * 0.9**N * (N + 1), 1e-6)


@check("axion_2d_gkp", "two-quadrature encoding: GKP reaches QFI >= 36", slow=True)
def axion_2d_gkp(r: _Recorder):
    n, q = gkp_lossy_qfi(0.07, 1400, axis="both")
    r.details.append(f"delta=0.07 dim=1400 <n> = {n:.2f}")
    r.true("qfi >= 36", q >= 36.0, f"(qfi {q:.4f}, bound {bounds.ecqfi_axion_2d(1e-3, 0.1, bounds.INF):.4f})")


def _diagnostic_family(kind, eta=0.1):
    base = gaussian.make_gaussian("smsv", N=1.0) if kind == "smsv" else gaussian.make_gaussian("coherent", alpha=1.0)
    lossy = gaussian.loss(eta).apply(base)
    return lambda s: gaussian.encode_1d(s).apply(lossy).cov


def _fock_trend(kind, sigmas, dim=60, eta=0.1):
    st = make_state("smsv", {"N": 1.0}, dim) if kind == "smsv" else make_state("coherent", {"alpha": 1.0}, dim)
    rho = loss_channel(eta, dim).apply(st.density().matrix)
    out = []
    for s in sigmas:
        ch = random_displacement_channel(s, "p", dim)
        out.append(qfi_spectral(ch.apply(rho), ch.apply_derivative(rho)).value)
    return np.array(out)


@check("curse_diagnostic", "normal-mode purification diagnostic agrees with the QFI trend")
def curse_diagnostic(r: _Recorder):
    grid = np.logspace(-3, -1, 9)
    smsv = gaussian.rayleigh_curse_diagnostic(_diagnostic_family("smsv"), grid)
    coh = gaussian.rayleigh_curse_diagnostic(_diagnostic_family("coherent"), grid)
    r.true("lossy SMSV cursed", smsv["cursed"] is True)
    r.true("lossy coherent not cursed", coh["cursed"] is False)
    if coh["fitted_k"] is not None:
        r.close("coherent k", coh["fitted_k"], 0.5, 0.05, rel=True)
    ends = np.array([1e-3, 1e-1])
    qs, qc = _fock_trend("smsv", ends), _fock_trend("coherent", ends)
    r.true("SMSV QFI collapses toward sigma=0", qs[0] < 0.05 * qs[1], f"({qs[0]:.3e} vs {qs[1]:.3e})")
    r.close("coherent QFI flat", qc[0], 2.0 / (1 + 1e-6), 1e-4, rel=True)


@check("waveform", "spectral-density information and acceleration ratios")
def waveform(r: _Recorder):
    for G, S in ((1.0, 1.0), (2.0, 0.5), (1e3, 1e-4), (0.3, 7.0)):
        s = np.sqrt(G * S)
        r.close(f"vacuum G={G} S={S}", qfi_psd(G, S, qfi_sigma=bounds.qfi_vacuum(s)), vacuum_qfi_psd(G, S), 1e-9, rel=True)
    sigma, eta = 1e-2, 0.1
    ratios = acceleration_ratios(sigma, eta)
    r.close("counting/quadrature", ratios["counting_vs_quadrature"], 1 / (4 * sigma**2), 0.02, rel=True)
    r.close("optimal/counting", ratios["optimal_vs_counting"], 1 / eta, 0.02, rel=True)
    r.close("optimal/quadrature", ratios["optimal_vs_quadrature"], 1 / (4 * sigma**2 * eta), 0.02, rel=True)


def run_check(key: str) -> CheckResult:
    for k, title, _, fn in CHECKS:
        if k == key:
            rec = _Recorder()
            t0 = time.perf_counter()
            try:
                fn(rec)
            except Exception as exc:  # a crash is a failure, reported with its message
                rec.ok = False
                rec.details.append(f"error: {type(exc).__name__}: {exc}")
            return CheckResult(k, title, rec.ok, rec.details, time.perf_counter() - t0)
    raise KeyError(key)


def run_all(include_slow: bool = False, stream=None) -> list[CheckResult]:
    results = []
    for key, _, slow, _ in CHECKS:
        if slow and not include_slow:
            continue
        res = run_check(key)
        results.append(res)
        if stream is not None:
            print(res.line(), file=stream, flush=True)
    return results
