"""Gaussian-state calculus on (mean, covariance) data.

Quadratures are ordered ``(x1, p1, x2, p2, ...)`` and the vacuum covariance
is ``0.5 * I``.  Multimode formulas internally reorder to ``(x..., p...)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import schur

PHYSICAL_TOL = 1e-9
SYMMETRY_TOL = 1e-12


def xi(N: float) -> float:
    """Largest quadrature variance reachable with mean occupation ``N``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    return N + 0.5 + np.sqrt(N * (N + 1.0))


# ---------------------------------------------------------------------------
# orderings and symplectic forms

def xxpp_permutation(num_modes: int) -> np.ndarray:
    return np.array([2 * i for i in range(num_modes)] + [2 * i + 1 for i in range(num_modes)])


def to_xxpp(mat: np.ndarray) -> np.ndarray:
    perm = xxpp_permutation(mat.shape[0] // 2)
    if mat.ndim == 1:
        return mat[perm]
    return mat[np.ix_(perm, perm)]


def from_xxpp(mat: np.ndarray) -> np.ndarray:
    inv = np.argsort(xxpp_permutation(mat.shape[0] // 2))
    if mat.ndim == 1:
        return mat[inv]
    return mat[np.ix_(inv, inv)]


def omega_xxpp(num_modes: int) -> np.ndarray:
    eye = np.eye(num_modes)
    zero = np.zeros((num_modes, num_modes))
    return np.block([[zero, eye], [-eye, zero]])


def omega_xpxp(num_modes: int) -> np.ndarray:
    return np.kron(np.eye(num_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


# ---------------------------------------------------------------------------
# state types

@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
            raise ValueError("cov must be a square matrix of even size")
        if mean.shape[0] != cov.shape[0]:
            raise ValueError("mean and cov sizes differ")
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(cov))):
            raise ValueError("cov is not symmetric")
        mean.setflags(write=False)
        cov = 0.5 * (cov + cov.T)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def num_modes(self) -> int:
        return self.cov.shape[0] // 2

    @property
    def purity(self) -> float:
        """``det(2 cov)^(-1/2)``; equals 1 for pure states."""
        return purity(self.cov)

    def symplectic_eigenvalues(self) -> np.ndarray:
        return symplectic_eigenvalues(self.cov)

    def is_physical(self, tol: float = PHYSICAL_TOL) -> bool:
        return bool(np.all(self.symplectic_eigenvalues() >= 0.5 - tol))


@dataclass(frozen=True)
class GaussianNoiseConfig:
    eta: float = 0.0
    eta_a: float = 0.0
    sigma_x: float = 0.0
    sigma_p: float = 0.0

    def __post_init__(self):
        for name in ("eta", "eta_a"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        for name in ("sigma_x", "sigma_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def purity(cov: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(2.0 * np.asarray(cov, dtype=float))
    if sign <= 0:
        raise ValueError("covariance is not positive definite")
    return float(np.exp(-0.5 * logdet))


# ---------------------------------------------------------------------------
# constructors

def make_gaussian(kind: str, **params) -> GaussianState:
    """Build a vacuum, coherent, single-mode or two-mode squeezed state.

    ``smsv`` and ``tmsv`` take the mean occupation ``N`` per mode.  The
    single-mode squeezed state is anti-squeezed along x.  The two-mode state
    puts the system in mode 0 and the ancilla in mode 1.
    """
    if kind == "vacuum":
        modes = int(params.get("modes", 1))
        return GaussianState(np.zeros(2 * modes), 0.5 * np.eye(2 * modes))
    if kind == "coherent":
        alpha = complex(params.get("alpha", 0.0))
        return GaussianState(np.sqrt(2.0) * np.array([alpha.real, alpha.imag]), 0.5 * np.eye(2))
    if kind in ("smsv", "tmsv"):
        N = float(params.get("N", 0.0))
        if N < 0:
            raise ValueError("N must be non-negative")
        if kind == "smsv":
            x = xi(N)
            return GaussianState(np.zeros(2), np.diag([x, 0.25 / x]))
        c = N + 0.5
        s = np.sqrt(N * (N + 1.0))
        cov = np.array([[c, 0, s, 0], [0, c, 0, -s], [s, 0, c, 0], [0, -s, 0, c]], dtype=float)
        return GaussianState(np.zeros(4), cov)
    raise ValueError(f"unknown Gaussian state kind {kind!r}")


# ---------------------------------------------------------------------------
# channels

@dataclass(frozen=True)
class GaussianChannel:
    """Affine map ``mean -> X mean + d``, ``cov -> X cov X^T + Y`` built per state size."""

    name: str
    params: dict = field(default_factory=dict)

    def apply(self, state: GaussianState) -> GaussianState:
        n = state.cov.shape[0]
        M = state.num_modes
        X = np.eye(n)
        Y = np.zeros((n, n))
        d = np.zeros(n)
        p = self.params
        if self.name == "displace":
            v = np.asarray(p["v"], dtype=float).reshape(-1)
            if v.shape[0] != n:
                raise ValueError("displacement length does not match state")
            d = v
        elif self.name == "classical_noise":
            sc = np.asarray(p["cov_c"], dtype=float)
            if sc.shape != (n, n):
                raise ValueError("classical noise matrix has the wrong shape")
            if np.min(np.linalg.eigvalsh(0.5 * (sc + sc.T))) < -1e-12:
                raise ValueError("classical noise matrix is not positive semi-definite")
            Y = 0.5 * (sc + sc.T)
        else:
            mode = int(p.get("mode", 0))
            if not 0 <= mode < M:
                raise ValueError(f"mode {mode} out of range for {M}-mode state")
            i, j = 2 * mode, 2 * mode + 1
            if self.name == "loss":
                eta = p["eta"]
                X[i, i] = X[j, j] = np.sqrt(1.0 - eta)
                Y[i, i] = Y[j, j] = 0.5 * eta
            elif self.name == "encode_1d":
                Y[j, j] = p["sigma"] ** 2
            elif self.name == "encode_2d":
                Y[i, i] = Y[j, j] = p["sigma"] ** 2
            elif self.name == "squeeze":
                r = p["r"]
                X[i, i] = np.exp(-r)
                X[j, j] = np.exp(r)
            else:
                raise ValueError(f"unknown channel {self.name!r}")
        return GaussianState(X @ state.mean + d, X @ state.cov @ X.T + Y)


def loss(eta: float, mode: int = 0) -> GaussianChannel:
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    return GaussianChannel("loss", {"eta": float(eta), "mode": mode})


def encode_1d(sigma: float, mode: int = 0) -> GaussianChannel:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return GaussianChannel("encode_1d", {"sigma": float(sigma), "mode": mode})


def encode_2d(sigma: float, mode: int = 0) -> GaussianChannel:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return GaussianChannel("encode_2d", {"sigma": float(sigma), "mode": mode})


def classical_noise(cov_c) -> GaussianChannel:
    return GaussianChannel("classical_noise", {"cov_c": np.asarray(cov_c, dtype=float)})


def squeeze(r: float, mode: int = 0) -> GaussianChannel:
    return GaussianChannel("squeeze", {"r": float(r), "mode": mode})


def displace(v) -> GaussianChannel:
    return GaussianChannel("displace", {"v": np.asarray(v, dtype=float)})


def apply_gaussian_channel(state: GaussianState, channel: GaussianChannel) -> GaussianState:
    return channel.apply(state)


# ---------------------------------------------------------------------------
# symplectic spectrum

def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Sorted moduli of the spectrum of ``i Omega cov`` (one per mode)."""
    cov = np.asarray(cov, dtype=float)
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(cov))):
        raise ValueError("cov is not symmetric")
    w, U = np.linalg.eigh(cov)
    if np.min(w) <= 0:
        raise ValueError("cov is not positive definite")
    root = (U * np.sqrt(w)) @ U.T
    herm = 1j * root @ omega_xpxp(cov.shape[0] // 2) @ root
    ev = np.linalg.eigvalsh(0.5 * (herm + herm.conj().T))
    return np.sort(ev[ev > 0])


def _williamson_frame(cov_xxpp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(nu, S)`` with ``cov = S diag(nu, nu) S^T`` and ``S`` symplectic.

    Used only as a well-conditioned basis for the multimode QFI.
    """
    n = cov_xxpp.shape[0] // 2
    w, U = np.linalg.eigh(cov_xxpp)
    if np.min(w) <= 0:
        raise ValueError("cov is not positive definite")
    inv_root = (U / np.sqrt(w)) @ U.T
    root = (U * np.sqrt(w)) @ U.T
    A = inv_root @ omega_xxpp(n) @ inv_root
    T, O = schur(0.5 * (A - A.T), output="real")
    nus = np.empty(n)
    xs, ps = [], []
    # the real Schur form of an antisymmetric matrix is 2x2 blocks [[0, t], [-t, 0]]
    for m in range(n):
        t = T[2 * m, 2 * m + 1]
        a, b = O[:, 2 * m], O[:, 2 * m + 1]
        if t < 0:
            a, b, t = b, a, -t
        nus[m] = 1.0 / t
        xs.append(a)
        ps.append(b)
    Op = np.column_stack(xs + ps)
    d = np.concatenate([nus, nus])
    S = root @ Op / np.sqrt(d)
    return nus, S


# ---------------------------------------------------------------------------
# Fisher information from covariance data

def _jacobi_dgamma(cov: np.ndarray, dcov: np.ndarray, gamma: float) -> float:
    return -0.5 * gamma * float(np.trace(np.linalg.solve(cov, dcov)))


def qfi_covariance(cov, dcov, d2cov=None) -> float:
    """Single-mode QFI when only the covariance depends on the parameter.

    ``I = tr((C^-1 dC)^2) / (2 (1 + g^2)) + 2 dg^2 / (1 - g^4)`` with purity
    ``g = det(2C)^(-1/2)``.  For a pure state with vanishing first derivative
    the second term is replaced by its limit, which needs ``d2cov``.
    """
    cov = np.asarray(cov, dtype=float)
    dcov = np.asarray(dcov, dtype=float)
    if cov.shape != (2, 2) or dcov.shape != (2, 2):
        raise ValueError("qfi_covariance expects 2x2 matrices")
    if abs(np.linalg.det(cov)) < 1e-300:
        raise ValueError("singular covariance")
    g = purity(cov)
    K = np.linalg.solve(cov, dcov)
    first = float(np.trace(K @ K)) / (2.0 * (1.0 + g * g))
    dg = _jacobi_dgamma(cov, dcov, g)
    denom = 1.0 - g ** 4
    if denom > 1e-14:
        return first + 2.0 * dg * dg / denom
    if np.max(np.abs(dcov)) > 0 or d2cov is None:
        # pure state: the purity term is 0/0 and has no first-order content
        return first
    return first + 0.5 * float(np.trace(np.linalg.solve(cov, np.asarray(d2cov, dtype=float))))


def qfi_covariance_multimode(cov, dcov, pure_tol: float = 1e-15) -> float:
    """Multimode QFI ``2 vec(dC)^T (4 C (x) C - w (x) w)^-1 vec(dC)``.

    The kernel is inverted in the normal-mode frame of ``cov`` where it is
    block diagonal with 2x2 blocks, so the near-singular directions of
    nearly pure modes are handled in closed form.  Pairs of exactly pure
    modes (0/0 contributions) are dropped.
    """
    cov = to_xxpp(np.asarray(cov, dtype=float))
    dcov = to_xxpp(np.asarray(dcov, dtype=float))
    n = cov.shape[0] // 2
    nu, S = _williamson_frame(cov)
    if np.min(nu) < 0.5 - PHYSICAL_TOL:
        raise ValueError("covariance violates the uncertainty principle")
    om = omega_xxpp(n)
    S_inv = -om @ S.T @ om
    D = S_inv @ dcov @ S_inv.T
    excess = np.maximum(nu - 0.5, 0.0)
    total = 0.0
    for k in range(n):
        for l in range(n):
            a = 4.0 * nu[k] * nu[l]
            a_minus = 4.0 * excess[k] * excess[l] + 2.0 * excess[k] + 2.0 * excess[l]
            xx, pp = D[k, l], D[n + k, n + l]
            xp, px = D[k, n + l], D[n + k, l]
            if a_minus > pure_tol:
                total += ((xx + pp) ** 2 + (xp - px) ** 2) / a_minus
            total += ((xx - pp) ** 2 + (xp + px) ** 2) / (a + 1.0)
    return float(total)


def qfi_zero_signal(cov0, dcov_dvar, pure_tol: float = 1e-9) -> float:
    """Exact ``sigma -> 0`` QFI for ``cov(sigma) = cov0 + sigma^2 * dcov_dvar``.

    Only modes of ``cov0`` that are pure contribute; in the normal-mode frame
    the limit is twice the trace of the transformed perturbation restricted
    to those modes.
    """
    cov0 = to_xxpp(np.asarray(cov0, dtype=float))
    P = to_xxpp(np.asarray(dcov_dvar, dtype=float))
    n = cov0.shape[0] // 2
    nu, S = _williamson_frame(cov0)
    if np.min(nu) < 0.5 - PHYSICAL_TOL:
        raise ValueError("covariance violates the uncertainty principle")
    om = omega_xxpp(n)
    S_inv = -om @ S.T @ om
    B = S_inv @ P @ S_inv.T
    return float(sum(2.0 * (B[k, k] + B[n + k, n + k]) for k in range(n) if nu[k] - 0.5 < pure_tol))


def qfim_gaussian(mean, cov, dmean_list: Sequence, dcov_list: Sequence, d2cov_list=None) -> np.ndarray:
    """Single-mode Gaussian QFIM for parameters entering mean and covariance.

    Parameters whose covariance derivative vanishes at a pure state (signal
    strength exactly zero) use the second derivative in ``d2cov_list``.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or mean.shape != (2,):
        raise ValueError("qfim_gaussian is single-mode")
    if len(dmean_list) != len(dcov_list) or not dmean_list:
        raise ValueError("need matching, non-empty derivative lists")
    k = len(dcov_list)
    dmeans = [np.asarray(v, dtype=float).reshape(2) for v in dmean_list]
    dcovs = [np.asarray(c, dtype=float).reshape(2, 2) for c in dcov_list]
    g = purity(cov)
    inv = np.linalg.inv(cov)
    dg = [_jacobi_dgamma(cov, c, g) for c in dcovs]
    denom = 1.0 - g ** 4
    pure = denom <= 1e-14
    F = np.zeros((k, k))
    limit_params = []
    for i in range(k):
        for j in range(i, k):
            val = float(np.trace(inv @ dcovs[i] @ inv @ dcovs[j])) / (2.0 * (1.0 + g * g))
            val += float(dmeans[i] @ inv @ dmeans[j])
            if not pure:
                val += 2.0 * dg[i] * dg[j] / denom
            F[i, j] = F[j, i] = val
    if pure and d2cov_list is not None:
        for i in range(k):
            if np.max(np.abs(dcovs[i])) == 0 and d2cov_list[i] is not None:
                limit_params.append(i)
        if len(limit_params) > 1:
            raise ValueError("the pure-state limit is direction dependent for several signal parameters")
        for i in limit_params:
            F[i, i] += 0.5 * float(np.trace(inv @ np.asarray(d2cov_list[i], dtype=float)))
    return F


# ---------------------------------------------------------------------------
# Rayleigh-curse diagnostic

def rayleigh_curse_diagnostic(cov_of_sigma: Callable[[float], np.ndarray], sigma_grid) -> dict:
    """Decide whether some normal mode purifies as ``1/2 + k sigma^2``.

    Each sorted symplectic-eigenvalue track is fitted by weighted least
    squares of ``log(nu - 1/2)`` against ``log sigma``.  A track escapes the
    curse when the slope is ``2 +- 0.05`` and the extrapolated intercept at
    ``sigma = 0`` sits at 1/2 within 1e-6.
    """
    grid = np.sort(np.asarray(sigma_grid, dtype=float))
    if grid.size < 4 or np.any(grid <= 0) or grid[-1] / grid[0] < 10.0:
        raise ValueError("need >= 4 positive sigma values spanning at least a decade")
    tracks = np.array([symplectic_eigenvalues(cov_of_sigma(s)) for s in grid])
    best = None
    indeterminate = False
    logs = np.log(grid)
    for col in tracks.T:
        excess = col - 0.5
        if np.any(excess <= 0):
            continue
        diffs = np.diff(excess)
        if np.any(diffs < -1e-12 * np.max(np.abs(col))):
            indeterminate = True
            continue
        y = np.log(excess)
        # weight points by their relative resolution above round-off
        w = excess / (excess + 1e-15 * np.max(col))
        slope, icpt = np.polyfit(logs, y, 1, w=w)
        k = float(np.exp(icpt))
        resid = float(np.max(np.abs(excess - k * grid ** slope)))
        if abs(slope - 2.0) <= 0.05 and abs(col[0] - k * grid[0] ** 2 - 0.5) < 1e-6:
            cand = {"slope": float(slope), "fitted_k": k, "residual": resid}
            if best is None or cand["fitted_k"] < best["fitted_k"]:
                best = cand
    if best is not None:
        return {"cursed": False, **best}
    return {"cursed": None if indeterminate else True, "fitted_k": None, "slope": None}
