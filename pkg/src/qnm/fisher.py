"""Classical and quantum Fisher information on truncated spaces."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channels import Channel
from .fock import DensityMatrix, hermite_functions

DEFAULT_CUTOFF = 1e-12
LEAKAGE_FLAG = 1e-4


@dataclass(frozen=True)
class FisherResult:
    value: float
    derivative_method: str = "analytic"
    eigen_cutoff: float = DEFAULT_CUTOFF
    leakage: float = 0.0
    dim: int = 0
    sensitivity: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return self.leakage >= LEAKAGE_FLAG

    def __float__(self):
        return float(self.value)


def _matrix(rho) -> tuple[np.ndarray, float]:
    if isinstance(rho, DensityMatrix):
        return rho.matrix, rho.leakage
    m = np.asarray(rho, dtype=complex)
    return m, max(0.0, 1.0 - float(np.real(np.trace(m))))


def _check_hermitian(m: np.ndarray, name: str, tol: float = 1e-8):
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.conj().T)) > tol * scale:
        raise ValueError(f"{name} is not Hermitian")


def _spectral(rho: np.ndarray, drhos: Sequence[np.ndarray]):
    p, U = np.linalg.eigh(rho)
    return p, [U.conj().T @ d @ U for d in drhos], U


def _qfi_sum(p, D, cutoff):
    S = p[:, None] + p[None, :]
    mask = S > cutoff
    return float(np.sum(2.0 * np.abs(D[mask]) ** 2 / S[mask]))


def qfi_spectral(rho, drho, eigen_cutoff: float = DEFAULT_CUTOFF, derivative_method: str = "analytic") -> FisherResult:
    """QFI from the eigendecomposition of ``rho``; pairs with ``p_j + p_k <= eigen_cutoff`` are dropped."""
    m, leak = _matrix(rho)
    drho = np.asarray(drho, dtype=complex)
    _check_hermitian(m, "rho")
    _check_hermitian(drho, "drho")
    p, (D,), _ = _spectral(m, [drho])
    value = _qfi_sum(p, D, eigen_cutoff)
    sens = {c: _qfi_sum(p, D, c) for c in (1e-10, 1e-14)}
    return FisherResult(max(value, 0.0), derivative_method, eigen_cutoff, leak, m.shape[0], sens)


def sld(rho, drho, eigen_cutoff: float = DEFAULT_CUTOFF) -> np.ndarray:
    """Symmetric logarithmic derivative, zero outside the retained support."""
    m, _ = _matrix(rho)
    p, (D,), U = _spectral(m, [np.asarray(drho, dtype=complex)])
    S = p[:, None] + p[None, :]
    L = np.zeros_like(D)
    mask = S > eigen_cutoff
    L[mask] = 2.0 * D[mask] / S[mask]
    L = 0.5 * (L + L.conj().T)
    out = U @ L @ U.conj().T
    return 0.5 * (out + out.conj().T)


def qfim(rho, drho_list: Sequence[np.ndarray], eigen_cutoff: float = DEFAULT_CUTOFF) -> np.ndarray:
    m, _ = _matrix(rho)
    p, Ds, _ = _spectral(m, [np.asarray(d, dtype=complex) for d in drho_list])
    S = p[:, None] + p[None, :]
    mask = S > eigen_cutoff
    k = len(Ds)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            val = np.sum(2.0 * np.real(Ds[i][mask] * Ds[j].T[mask]) / S[mask])
            out[i, j] = out[j, i] = val
    return out


def weak_commutativity(rho, L_list: Sequence[np.ndarray]) -> np.ndarray:
    """Matrix of ``Tr(rho [L_i, L_j])`` (purely imaginary for Hermitian SLDs)."""
    m, _ = _matrix(rho)
    k = len(L_list)
    out = np.zeros((k, k), dtype=complex)
    for i in range(k):
        for j in range(k):
            Li, Lj = L_list[i], L_list[j]
            out[i, j] = np.trace(m @ (Li @ Lj - Lj @ Li))
    return out


# ---------------------------------------------------------------------------
# measurements

class Povm:
    """Effects given as full matrices."""

    def __init__(self, effects: Sequence[np.ndarray], tol: float = 1e-9):
        self.effects = [np.asarray(E, dtype=complex) for E in effects]
        total = sum(self.effects)
        if np.max(np.abs(total - np.eye(total.shape[0]))) > tol:
            raise ValueError("POVM effects do not sum to the identity")
        for E in self.effects:
            if np.linalg.eigvalsh(0.5 * (E + E.conj().T)).min() < -tol:
                raise ValueError("POVM effect is not positive semi-definite")

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.real(np.trace(E @ rho)) for E in self.effects])


class NumberPovm(Povm):
    """Projective photon counting; the last outcome absorbs nothing beyond the cutoff."""

    def __init__(self, dim: int):
        self.dim = dim

    @property
    def effects(self):
        out = []
        for n in range(self.dim):
            E = np.zeros((self.dim, self.dim), dtype=complex)
            E[n, n] = 1.0
            out.append(E)
        return out

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.real(np.diag(rho)).copy()


def number_povm(dim: int) -> NumberPovm:
    return NumberPovm(dim)


def _cfi_from_probs(p: np.ndarray, dps: Sequence[np.ndarray], tol: float = 1e-14) -> np.ndarray:
    dps = np.array(dps)
    keep = ~((p < tol) & (np.max(np.abs(dps), axis=0) < tol)) & (p > 0)
    D = dps[:, keep]
    return (D / p[keep]) @ D.T


def cfi_povm(povm: Povm, rho, drho) -> float:
    m, _ = _matrix(rho)
    p = povm.probabilities(m)
    dp = povm.probabilities(np.asarray(drho, dtype=complex))
    return float(_cfi_from_probs(p, [dp])[0, 0])


def cfim_povm(povm: Povm, rho, drho_list: Sequence[np.ndarray]) -> np.ndarray:
    m, _ = _matrix(rho)
    p = povm.probabilities(m)
    return _cfi_from_probs(p, [povm.probabilities(np.asarray(d, dtype=complex)) for d in drho_list])


def _rotate(m: np.ndarray, angle: float) -> np.ndarray:
    ph = np.exp(-1j * angle * np.arange(m.shape[0]))
    return ph[:, None] * m * ph.conj()[None, :]


def quadrature_density(rho, angle: float, grid: np.ndarray) -> np.ndarray:
    """Outcome density of the quadrature ``x cos(angle) + p sin(angle)`` on ``grid``."""
    m, _ = _matrix(rho)
    psi = hermite_functions(m.shape[0], grid)
    r = _rotate(m, angle)
    return np.real(np.einsum("ng,nm,mg->g", psi, r, psi))


def default_grid(dim: int, std: float = 1.0, points: int | None = None) -> np.ndarray:
    half = max(8.0 * std, np.sqrt(2.0 * dim + 1.0) + 4.0)
    if points is None:
        points = max(801, int(16 * half * np.sqrt(2.0 * dim + 1.0)) | 1)
    return np.linspace(-half, half, points)


def cfi_homodyne(rho, drho, angle: float = np.pi / 2, grid: np.ndarray | None = None,
                 check: bool = True, tol: float = 1e-6) -> float:
    """CFI of a quadrature measurement (trapezoid rule on ``grid``).

    With ``check`` the value is recomputed on a grid with twice the resolution
    and an error is raised if it moves by more than ``tol``.
    """
    m, _ = _matrix(rho)
    d = np.asarray(drho, dtype=complex)
    if grid is None:
        grid = default_grid(m.shape[0])
    if grid.size < 400:
        raise ValueError("homodyne grid needs at least 400 points")

    def on(g):
        p = quadrature_density(m, angle, g)
        dp = quadrature_density(d, angle, g)
        keep = (p > 1e-300) & ~((p < 1e-14) & (np.abs(dp) < 1e-14))
        f = np.where(keep, dp * dp / np.where(keep, p, 1.0), 0.0)
        return float(np.trapezoid(f, g))

    val = on(grid)
    if check:
        fine = np.linspace(grid[0], grid[-1], 2 * grid.size - 1)
        if abs(on(fine) - val) > tol:
            raise RuntimeError("homodyne grid under-resolved")
    return val


# ---------------------------------------------------------------------------
# small-signal limit and derivatives

def small_signal_qfi(rho_pre, generators, rank_cutoff: float = 1e-10, T: float = 1.0) -> float:
    """Zero-signal QFI ``4 T sum_j <Y_j^dag P Y_j>``, ``P`` the projector on the kernel of ``rho_pre``.

    ``generators`` is one operator or a list of jump operators.
    """
    m, _ = _matrix(rho_pre)
    if isinstance(generators, np.ndarray) and generators.ndim == 2:
        generators = [generators]
    p, U = np.linalg.eigh(m)
    near = (p > rank_cutoff / 100) & (p < rank_cutoff * 100)
    if np.any(near):
        warnings.warn("spectrum is not well separated at the rank cutoff")
    null = U[:, p < rank_cutoff]
    total = 0.0
    for Y in generators:
        W = null.conj().T @ np.asarray(Y, dtype=complex)
        total += float(np.real(np.trace(W @ m @ W.conj().T)))
    return 4.0 * T * total


def drho(channel_family: Callable[[float], Channel], rho_in, sigma: float, method: str = "analytic",
         h: float = 1e-4) -> np.ndarray:
    """Derivative of ``channel_family(sigma)(rho_in)`` with respect to ``sigma``."""
    m, _ = _matrix(rho_in)
    if method == "analytic":
        ch = channel_family(sigma)
        if not ch.depends_on_signal:
            raise ValueError("channel has no analytic signal derivative")
        return ch.apply_derivative(m)
    if method != "central_diff":
        raise ValueError("method must be 'analytic' or 'central_diff'")

    def diff(step):
        if sigma - step >= 0:
            return (channel_family(sigma + step).apply(m) - channel_family(sigma - step).apply(m)) / (2 * step)
        f0, f1, f2 = (channel_family(sigma + k * step).apply(m) for k in range(3))
        return (-3 * f0 + 4 * f1 - f2) / (2 * step)

    d1 = diff(h)
    if np.max(np.abs(d1 - diff(2 * h))) > 1e-5:
        raise RuntimeError("finite-difference derivative is unstable; adjust the step")
    return d1


def channel_qfi(channel: Channel, rho_in, eigen_cutoff: float = DEFAULT_CUTOFF) -> FisherResult:
    """QFI of the channel output with respect to its signal parameter."""
    m, leak = _matrix(rho_in)
    out = channel.apply(m)
    out = 0.5 * (out + out.conj().T)
    d = channel.apply_derivative(m)
    d = 0.5 * (d + d.conj().T)
    res = qfi_spectral(out, d, eigen_cutoff)
    return FisherResult(res.value, "analytic", eigen_cutoff, leak, res.dim, res.sensitivity)
