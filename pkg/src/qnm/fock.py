"""Truncated Fock-space states and operators."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

LEAKAGE_TOL = 1e-8


@dataclass(frozen=True)
class TruncatedSpace:
    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError("dim must be an integer >= 2")


@dataclass(frozen=True)
class PureState:
    space: TruncatedSpace
    amplitudes: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.shape[0] % self.space.dim:
            raise ValueError("amplitude vector does not fit the space")
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state is not normalised (norm {norm})")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def mean_number(self) -> float:
        return mean_number(self)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()), self.leakage)


@dataclass(frozen=True)
class DensityMatrix:
    space: TruncatedSpace
    matrix: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValueError("density matrix is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, leakage_tol: float = 1e-4) -> None:
        ev = np.linalg.eigvalsh(self.matrix)
        if ev.min() < -1e-10:
            raise ValueError(f"density matrix has negative eigenvalue {ev.min():.3e}")
        tr = self.trace
        if tr > 1 + 1e-10 or tr < 1 - leakage_tol:
            raise ValueError(f"trace {tr} outside [1 - {leakage_tol}, 1]")


class Operators(NamedTuple):
    annihilate: np.ndarray
    create: np.ndarray
    position: np.ndarray
    momentum: np.ndarray
    number: np.ndarray


def operators(space: TruncatedSpace | int) -> Operators:
    """Ladder, quadrature and number matrices with ``x = (a + a^dag)/sqrt 2``."""
    dim = space.dim if isinstance(space, TruncatedSpace) else int(space)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)
    ad = a.conj().T
    x = (a + ad) / np.sqrt(2.0)
    p = (a - ad) / (1j * np.sqrt(2.0))
    n = np.diag(np.arange(dim, dtype=float)).astype(complex)
    return Operators(a, ad, x, p, n)


def quadrature_eigensystem(dim: int, axis: str = "x") -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of the truncated x (or p) quadrature.

    The x matrix is real tridiagonal; ``p = R x R^dag`` with ``R = diag(i^n)``.
    """
    from scipy.linalg import eigh_tridiagonal

    vals, vecs = eigh_tridiagonal(np.zeros(dim), np.sqrt(np.arange(1, dim) / 2.0))
    vecs = vecs.astype(complex)
    if axis == "p":
        vecs = (1j ** np.arange(dim))[:, None] * vecs
    elif axis != "x":
        raise ValueError("axis must be 'x' or 'p'")
    return vals, vecs


def hermite_functions(nmax: int, x: np.ndarray) -> np.ndarray:
    """Normalised Hermite functions ``phi_0..phi_{nmax-1}`` on points ``x``.

    Runs the three-term recurrence with a per-point log scale so that
    values far in the classically forbidden region neither under- nor
    overflow.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax, x.size))
    cur = np.ones_like(x)
    prev = np.zeros_like(x)
    logscale = -0.5 * x * x - 0.25 * np.log(np.pi)
    for n in range(nmax):
        out[n] = cur * np.exp(np.minimum(logscale, 700.0))
        nxt = np.sqrt(2.0 / (n + 1)) * x * cur - np.sqrt(n / (n + 1.0)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e100
        if big.any():
            cur[big] *= 1e-100
            prev[big] *= 1e-100
            logscale[big] += 100.0 * np.log(10.0)
    return out


def _check_tail(amp: np.ndarray, total_norm_sq: float, tol: float) -> float:
    leak = max(0.0, float(total_norm_sq - np.sum(np.abs(amp) ** 2)))
    if leak > tol:
        raise ValueError(f"state support exceeds the cutoff (|tail|^2 = {leak:.3e})")
    return leak


def _gkp_amplitudes(delta: float, dim: int) -> np.ndarray:
    if delta <= 0:
        raise ValueError("delta must be positive")
    J = int(np.ceil(np.sqrt(20.0 / (2.0 * np.pi * delta * delta))))
    spacing = 2.0 * np.sqrt(np.pi)
    centres = spacing * np.arange(-J, J + 1)
    weights = np.exp(-2.0 * np.pi * delta ** 2 * np.arange(-J, J + 1) ** 2)
    h = min(0.01, delta / 10.0)

    def wavefunction(x):
        psi = np.zeros_like(x)
        for c, w in zip(centres, weights):
            psi += w * np.exp(-((x - c) ** 2) / (2.0 * delta * delta))
        return psi

    # normalise on a grid covering every peak, project on the Fock-supported range
    wide = np.arange(-centres[-1] - 12 * delta - 1, centres[-1] + 12 * delta + 1 + h, h)
    norm = np.sqrt(np.sum(wavefunction(wide) ** 2) * h)
    R = np.sqrt(2.0 * dim + 1.0) + 15.0
    grid = np.arange(-R, R + h / 2, h)
    psi = wavefunction(grid) / norm
    return hermite_functions(dim, grid) @ psi * h


def make_state(kind: str, params: dict | None = None, space: TruncatedSpace | int = 50,
               leakage_tol: float = LEAKAGE_TOL) -> PureState:
    """Construct a normalised pure state in the truncated space.

    Kinds: ``fock`` (n), ``coherent`` (alpha), ``smsv`` (N), ``cat`` (alpha,
    parity), ``gkp_delta`` (delta), ``sparse`` (m, coeffs) and ``tmsv`` (N),
    the last returned on the ``dim**2`` product basis with system index
    first.
    """
    params = dict(params or {})
    space = space if isinstance(space, TruncatedSpace) else TruncatedSpace(int(space))
    dim = space.dim
    n = np.arange(dim)
    if kind == "fock":
        k = int(params.get("n", 0))
        if not 0 <= k < dim:
            raise ValueError("Fock index outside the space")
        amp = np.zeros(dim, complex)
        amp[k] = 1.0
        return PureState(space, amp)
    if kind == "coherent":
        alpha = complex(params.get("alpha", 0.0))
        amp = _coherent_amplitudes(alpha, dim)
        leak = _check_tail(amp, 1.0, leakage_tol)
        return PureState(space, amp / np.linalg.norm(amp), leak)
    if kind == "smsv":
        N = float(params.get("N", 0.0))
        if N < 0:
            raise ValueError("N must be non-negative")
        r = np.arcsinh(np.sqrt(N))
        k = n[: (dim + 1) // 2]
        amp = np.zeros(dim, complex)
        if r == 0:
            amp[0] = 1.0
        else:
            # anti-squeezed along x, matching the Gaussian constructor
            logmag = 0.5 * gammaln(2 * k + 1) - k * np.log(2.0) - gammaln(k + 1) + k * np.log(np.tanh(r))
            amp[2 * k] = np.exp(logmag - 0.5 * np.log(np.cosh(r)))
        leak = _check_tail(amp, 1.0, leakage_tol)
        return PureState(space, amp / np.linalg.norm(amp), leak)
    if kind == "cat":
        alpha = complex(params.get("alpha", 1.0))
        parity = float(params.get("parity", 1.0))
        plus = _coherent_amplitudes(alpha, dim)
        minus = _coherent_amplitudes(-alpha, dim)
        amp = plus + parity * minus
        full = 2.0 + 2.0 * parity * np.exp(-2.0 * abs(alpha) ** 2)
        if full <= 0:
            raise ValueError("odd cat with zero amplitude is undefined")
        leak = _check_tail(amp / np.sqrt(full), 1.0, leakage_tol)
        return PureState(space, amp / np.linalg.norm(amp), leak)
    if kind == "gkp_delta":
        amp = _gkp_amplitudes(float(params["delta"]), dim)
        leak = _check_tail(amp, 1.0, leakage_tol)
        return PureState(space, (amp / np.linalg.norm(amp)).astype(complex), leak)
    if kind == "sparse":
        m = int(params.get("m", 1))
        coeffs = np.asarray(params["coeffs"], dtype=complex).reshape(-1)
        if m < 1:
            raise ValueError("spacing m must be >= 1")
        if m * (coeffs.size - 1) >= dim:
            raise ValueError(f"sparse support needs dim >= {m * (coeffs.size - 1) + 1}")
        if np.linalg.norm(coeffs) == 0:
            raise ValueError("coefficients are all zero")
        amp = np.zeros(dim, complex)
        amp[m * np.arange(coeffs.size)] = coeffs / np.linalg.norm(coeffs)
        return PureState(space, amp)
    if kind == "tmsv":
        N = float(params.get("N", 0.0))
        if N < 0:
            raise ValueError("N must be non-negative")
        lam = np.sqrt(N / (N + 1.0))
        diag = np.sqrt(1.0 - lam * lam) * lam ** n
        leak = _check_tail(diag, 1.0, leakage_tol)
        amp = np.zeros(dim * dim, complex)
        amp[n * dim + n] = diag / np.linalg.norm(diag)
        return PureState(space, amp, leak)
    raise ValueError(f"unknown state kind {kind!r}")


def _coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    if alpha == 0:
        amp = np.zeros(dim, complex)
        amp[0] = 1.0
        return amp
    logmag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def mean_number(state: PureState | DensityMatrix) -> float:
    dim = state.space.dim
    n = np.arange(dim, dtype=float)
    if isinstance(state, PureState):
        amp = state.amplitudes
        if amp.size == dim:
            return float(np.sum(n * np.abs(amp) ** 2))
        probs = np.abs(amp.reshape(dim, dim)) ** 2
        return float(np.sum(n[:, None] * probs))
    return float(np.real(np.trace(np.diag(n) @ state.matrix)))


def _truncated_exp(generator_big: np.ndarray, dim: int, leakage_tol: float) -> np.ndarray:
    U = expm(generator_big)[:dim, :dim]
    leak = 1.0 - float(np.sum(np.abs(U[:, 0]) ** 2))
    if leak > leakage_tol:
        raise ValueError(f"unitary leaks {leak:.3e} of the vacuum image out of the cutoff")
    return U


def displacement(alpha: complex, space: TruncatedSpace | int, leakage_tol: float = 1e-6) -> np.ndarray:
    """``exp(alpha a^dag - conj(alpha) a)`` computed in a padded space and cropped."""
    dim = space.dim if isinstance(space, TruncatedSpace) else int(space)
    big = dim + max(40, dim)
    ops = operators(big)
    return _truncated_exp(alpha * ops.create - np.conj(alpha) * ops.annihilate, dim, leakage_tol)


def squeeze(r: float, space: TruncatedSpace | int, leakage_tol: float = 1e-6) -> np.ndarray:
    """``exp(r (a^2 - a^dag^2) / 2)``; maps ``x -> e^{-r} x``."""
    dim = space.dim if isinstance(space, TruncatedSpace) else int(space)
    big = dim + max(40, dim)
    ops = operators(big)
    a2 = ops.annihilate @ ops.annihilate
    return _truncated_exp(0.5 * r * (a2 - a2.conj().T), dim, leakage_tol)


def state_to_json(state: PureState) -> str:
    amp = state.amplitudes
    return json.dumps({"dim": state.space.dim, "amplitudes": [[float(z.real), float(z.imag)] for z in amp]})


def state_from_json(text: str) -> PureState:
    data = json.loads(text)
    amp = np.array([complex(re, im) for re, im in data["amplitudes"]])
    return PureState(TruncatedSpace(int(data["dim"])), amp)
