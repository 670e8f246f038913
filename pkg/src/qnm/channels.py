"""Quantum channels on truncated Fock spaces and on qubits.

Every channel acts on plain complex matrices.  Channels that depend on a
signal strength also expose ``apply_derivative``, the derivative of the
output with respect to that strength, and ``adjoint`` / ``adjoint_derivative``
for Heisenberg-picture use.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .fock import DensityMatrix, TruncatedSpace, quadrature_eigensystem

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def _dim_of(space) -> int:
    if isinstance(space, TruncatedSpace):
        return space.dim
    return int(space)


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


class Channel:
    """Base class; subclasses override ``apply`` and friends."""

    label = "channel"

    def __init__(self, dim: int, params: dict | None = None):
        self.dim = int(dim)
        self.params = dict(params or {})
        self._superop = None

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(K @ rho @ K.conj().T for K in self.kraus())

    def adjoint(self, X: np.ndarray) -> np.ndarray:
        return sum(K.conj().T @ X @ K for K in self.kraus())

    def apply_derivative(self, rho: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim, self.dim), dtype=complex)

    def adjoint_derivative(self, X: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim, self.dim), dtype=complex)

    @property
    def depends_on_signal(self) -> bool:
        return False

    def kraus(self) -> list[np.ndarray]:
        raise NotImplementedError

    def superoperator(self) -> np.ndarray:
        """Row-major ``vec`` superoperator, built once and cached."""
        if self._superop is None:
            d = self.dim
            cols = []
            for idx in range(d * d):
                E = np.zeros(d * d, dtype=complex)
                E[idx] = 1.0
                cols.append(self.apply(E.reshape(d, d)).reshape(-1))
            self._superop = np.array(cols).T
        return self._superop

    def completeness_defect(self) -> float:
        eye = np.eye(self.dim, dtype=complex)
        return float(np.max(np.abs(self.adjoint(eye) - eye)))

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, {self.params})"


class KrausChannel(Channel):
    """Explicit Kraus family, optionally with derivatives of each operator."""

    def __init__(self, kraus: Sequence[np.ndarray], label: str = "kraus", params: dict | None = None,
                 dkraus: Sequence[np.ndarray] | None = None):
        ops = [np.asarray(K, dtype=complex) for K in kraus]
        super().__init__(ops[0].shape[1], params)
        self._kraus = ops
        self._dkraus = None if dkraus is None else [np.asarray(K, dtype=complex) for K in dkraus]
        self.label = label

    def kraus(self):
        return list(self._kraus)

    @property
    def depends_on_signal(self) -> bool:
        return self._dkraus is not None

    def apply_derivative(self, rho):
        if self._dkraus is None:
            return super().apply_derivative(rho)
        out = np.zeros_like(rho, dtype=complex)
        for K, dK in zip(self._kraus, self._dkraus):
            term = dK @ rho @ K.conj().T
            out += term + term.conj().T
        return out

    def adjoint_derivative(self, X):
        if self._dkraus is None:
            return super().adjoint_derivative(X)
        out = np.zeros_like(X, dtype=complex)
        for K, dK in zip(self._kraus, self._dkraus):
            out += dK.conj().T @ X @ K + K.conj().T @ X @ dK
        return out


class UnitaryChannel(KrausChannel):
    def __init__(self, U: np.ndarray, label: str = "unitary", params: dict | None = None):
        super().__init__([U], label, params)

    def apply(self, rho):
        U = self._kraus[0]
        return U @ rho @ U.conj().T

    def adjoint(self, X):
        U = self._kraus[0]
        return U.conj().T @ X @ U


class LossChannel(Channel):
    """Pure loss with Kraus operators ``(sqrt(eta) a)^k (1-eta)^((n-k)/2) / sqrt(k!)``.

    Each Kraus operator is a single super-diagonal band, stored as a vector.
    """

    label = "loss"

    def __init__(self, eta: float, space):
        if not 0.0 <= eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        super().__init__(_dim_of(space), {"eta": float(eta)})
        self.eta = float(eta)
        d = self.dim
        bands = []
        for k in range(d):
            m = np.arange(d - k)
            if self.eta == 0.0:
                band = np.ones(d - k) if k == 0 else np.zeros(d - k)
            else:
                logc = (0.5 * (gammaln(m + k + 1) - gammaln(m + 1) - gammaln(k + 1))
                        + 0.5 * k * np.log(self.eta) + 0.5 * m * np.log1p(-self.eta))
                band = np.exp(logc)
            if k > 0 and np.max(band) < 1e-300:
                break
            bands.append(band)
        self._bands = bands

    def kraus(self):
        d = self.dim
        return [np.diag(band, k).astype(complex) for k, band in enumerate(self._bands)]

    def kraus_images(self, psi: np.ndarray, min_norm: float = 0.0) -> np.ndarray:
        """Columns ``K_k psi`` for a pure input (only ``k`` with non-negligible norm)."""
        d = self.dim
        cols = []
        for k, band in enumerate(self._bands):
            v = np.zeros(d, dtype=complex)
            v[: d - k] = band * psi[k:]
            if k > 0 and np.linalg.norm(v) <= min_norm:
                continue
            cols.append(v)
        return np.array(cols).T

    def apply(self, rho):
        rho = np.asarray(rho, dtype=complex)
        d = self.dim
        out = np.zeros((d, d), dtype=complex)
        for k, band in enumerate(self._bands):
            out[: d - k, : d - k] += band[:, None] * rho[k:, k:] * band[None, :]
        return out

    def adjoint(self, X):
        X = np.asarray(X, dtype=complex)
        d = self.dim
        out = np.zeros((d, d), dtype=complex)
        for k, band in enumerate(self._bands):
            out[k:, k:] += band[:, None] * X[: d - k, : d - k] * band[None, :]
        return out


class DisplacementChannel(Channel):
    """Gaussian random displacement along one phase-space direction.

    The direction angle ``phi`` is measured from the x axis (``phi = pi/2``
    displaces p, generated by x).  The Kraus family is
    ``sqrt(w_k) exp(i alpha_k G)`` over Gauss-Hermite nodes ``alpha_k``;
    it is applied elementwise in the eigenbasis of the generator ``G``.
    """

    label = "random_displacement"

    def __init__(self, sigma: float, space, phi: float = np.pi / 2, quad_nodes: int = 41):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        if quad_nodes < 11 or quad_nodes % 2 == 0:
            raise ValueError("quad_nodes must be odd and >= 11")
        super().__init__(_dim_of(space), {"sigma": float(sigma), "phi": float(phi), "quad_nodes": quad_nodes})
        self.sigma = float(sigma)
        self.phi = float(phi)
        self.quad_nodes = quad_nodes
        vals, vecs = quadrature_eigensystem(self.dim, "x")
        # G = sin(phi) x - cos(phi) p is the x quadrature rotated by phi - pi/2
        beta = self.phi - np.pi / 2
        self._q = vals
        self._V = np.exp(1j * beta * np.arange(self.dim))[:, None] * vecs
        t, w = np.polynomial.hermite.hermgauss(quad_nodes)
        self._t = t
        self._w = w / np.sqrt(np.pi)
        self._diff = vals[:, None] - vals[None, :]
        self._kernel = None
        self._dkernel = None

    @property
    def depends_on_signal(self) -> bool:
        return True

    @property
    def generator(self) -> np.ndarray:
        return (self._V * self._q) @ self._V.conj().T

    def _kernels(self):
        if self._kernel is None:
            g = np.zeros_like(self._diff)
            dg = np.zeros_like(self._diff)
            for t, w in zip(self._t, self._w):
                arg = np.sqrt(2.0) * t * self._diff
                g += w * np.cos(self.sigma * arg)
                dg -= w * arg * np.sin(self.sigma * arg)
            self._kernel, self._dkernel = g, dg
        return self._kernel, self._dkernel

    def _in_frame(self, rho, kernel):
        V = self._V
        return V @ ((V.conj().T @ rho @ V) * kernel) @ V.conj().T

    def apply(self, rho):
        return self._in_frame(np.asarray(rho, dtype=complex), self._kernels()[0])

    def adjoint(self, X):
        # the kernel is real and symmetric, so the channel is self-adjoint
        return self.apply(X)

    def apply_derivative(self, rho):
        return self._in_frame(np.asarray(rho, dtype=complex), self._kernels()[1])

    def adjoint_derivative(self, X):
        return self.apply_derivative(X)

    def kraus(self):
        out = []
        for t, w in zip(self._t, self._w):
            alpha = np.sqrt(2.0) * self.sigma * t
            out.append(np.sqrt(w) * (self._V * np.exp(1j * alpha * self._q)) @ self._V.conj().T)
        return out

    def with_nodes(self, quad_nodes: int) -> "DisplacementChannel":
        return DisplacementChannel(self.sigma, self.dim, self.phi, quad_nodes)

    def check_convergence(self, rho, tol: float = 1e-8) -> float:
        """Population shift when the node count is doubled; raises above ``tol``."""
        a = np.real(np.diag(self.apply(rho)))
        b = np.real(np.diag(self.with_nodes(2 * self.quad_nodes + 1).apply(rho)))
        shift = float(np.max(np.abs(a - b)))
        if shift > tol:
            raise RuntimeError(f"quadrature not converged: populations move by {shift:.3e}")
        return shift

    def converged(self, rho, tol: float = 1e-8, max_nodes: int = 1001) -> "DisplacementChannel":
        """Smallest channel in the doubling sequence 41, 83, ... that passes ``check_convergence``."""
        ch = self
        while True:
            try:
                ch.check_convergence(rho, tol)
                return ch
            except RuntimeError:
                if 2 * ch.quad_nodes + 1 > max_nodes:
                    raise
                ch = ch.with_nodes(2 * ch.quad_nodes + 1)


class ComposedChannel(Channel):
    """``outer o inner``; derivatives follow the product rule."""

    def __init__(self, outer: Channel, inner: Channel):
        if outer.dim != inner.dim:
            raise ValueError("cannot compose channels on different spaces")
        super().__init__(outer.dim, {"outer": outer.params, "inner": inner.params})
        self.outer = outer
        self.inner = inner
        self.label = f"{outer.label}*{inner.label}"

    @property
    def depends_on_signal(self) -> bool:
        return self.outer.depends_on_signal or self.inner.depends_on_signal

    def apply(self, rho):
        return self.outer.apply(self.inner.apply(rho))

    def adjoint(self, X):
        return self.inner.adjoint(self.outer.adjoint(X))

    def apply_derivative(self, rho):
        out = np.zeros((self.dim, self.dim), dtype=complex)
        if self.inner.depends_on_signal:
            out += self.outer.apply(self.inner.apply_derivative(rho))
        if self.outer.depends_on_signal:
            out += self.outer.apply_derivative(self.inner.apply(rho))
        return out

    def adjoint_derivative(self, X):
        out = np.zeros((self.dim, self.dim), dtype=complex)
        if self.inner.depends_on_signal:
            out += self.inner.adjoint_derivative(self.outer.adjoint(X))
        if self.outer.depends_on_signal:
            out += self.inner.adjoint(self.outer.adjoint_derivative(X))
        return out

    def kraus(self):
        return [A @ B for A in self.outer.kraus() for B in self.inner.kraus()]


class IdentityChannel(Channel):
    label = "identity"

    def apply(self, rho):
        return np.array(rho, dtype=complex)

    def adjoint(self, X):
        return np.array(X, dtype=complex)

    def kraus(self):
        return [np.eye(self.dim, dtype=complex)]


# ---------------------------------------------------------------------------
# constructors

def loss_channel(eta: float, space) -> LossChannel:
    return LossChannel(eta, space)


def random_displacement_channel(sigma: float, axis: str = "p", space=50, quad_nodes: int = 41) -> Channel:
    """Random displacement of standard deviation ``sigma`` along p, x or both."""
    if axis == "p":
        return DisplacementChannel(sigma, space, np.pi / 2, quad_nodes)
    if axis == "x":
        return DisplacementChannel(sigma, space, 0.0, quad_nodes)
    if axis == "both":
        return ComposedChannel(DisplacementChannel(sigma, space, 0.0, quad_nodes),
                               DisplacementChannel(sigma, space, np.pi / 2, quad_nodes))
    raise ValueError("axis must be 'p', 'x' or 'both'")


class _FixedDisplacement(DisplacementChannel):
    """Displacement noise whose strength is not the estimated parameter."""

    @property
    def depends_on_signal(self) -> bool:
        return False

    def apply_derivative(self, rho):
        return np.zeros((self.dim, self.dim), dtype=complex)

    def adjoint_derivative(self, X):
        return self.apply_derivative(X)


def classical_noise_channel(cov_c, space, quad_nodes: int = 41) -> Channel:
    """Random displacement with phase-space covariance ``cov_c`` (x, p order)."""
    cov_c = np.asarray(cov_c, dtype=float)
    if cov_c.shape != (2, 2):
        raise ValueError("classical noise covariance must be 2x2")
    if np.max(np.abs(cov_c - cov_c.T)) > 1e-12:
        raise ValueError("classical noise covariance must be symmetric")
    vals, vecs = np.linalg.eigh(cov_c)
    if vals.min() < -1e-12:
        raise ValueError("classical noise covariance is not positive semi-definite")
    dim = _dim_of(space)
    parts = []
    for lam, v in zip(vals, vecs.T):
        if lam > 0:
            parts.append(_FixedDisplacement(np.sqrt(lam), dim, float(np.arctan2(v[1], v[0])), quad_nodes))
    if not parts:
        return IdentityChannel(dim, {"cov_c": cov_c.tolist()})
    ch = parts[0]
    for extra in parts[1:]:
        ch = ComposedChannel(extra, ch)
    ch.label = "classical_noise"
    return ch


def thermal_distribution(nbar: float, nmax: int) -> np.ndarray:
    m = np.arange(nmax)
    if nbar == 0:
        out = np.zeros(nmax)
        out[0] = 1.0
        return out
    return np.exp(m * np.log(nbar) - (m + 1) * np.log1p(nbar))


class DarkCountChannel(Channel):
    """Adds ``m`` quanta with thermal probability, independently of the state.

    Kraus operators ``K_n = sum_m sqrt(p_th(m)) |n+m><n|``; number statistics
    of the output are the input statistics convolved with ``p_th``.
    """

    label = "dark_count"

    def __init__(self, nbar: float, space):
        if nbar < 0:
            raise ValueError("nbar must be non-negative")
        super().__init__(_dim_of(space), {"nbar": float(nbar)})
        self.nbar = float(nbar)
        d = self.dim
        amp = np.sqrt(thermal_distribution(self.nbar, d))
        self._B = np.zeros((d, d))
        for n in range(d):
            self._B[n:, n] = amp[: d - n]

    def apply(self, rho):
        # K_n rho K_n^dag = rho_nn |v_n><v_n| with v_n the n-th column of B
        diag = np.real(np.diag(rho))
        return (self._B * diag) @ self._B.T + 0j

    def adjoint(self, X):
        return np.diag(np.einsum("in,ij,jn->n", self._B, X, self._B)).astype(complex)

    def kraus(self):
        d = self.dim
        out = []
        for n in range(d):
            K = np.zeros((d, d), dtype=complex)
            K[:, n] = self._B[:, n]
            out.append(K)
        return out


def dark_count_channel(nbar: float, space) -> DarkCountChannel:
    return DarkCountChannel(nbar, space)


def swap_control(k: int, space) -> np.ndarray:
    """Permutation unitary exchanging |1> and |k>; fixes every other Fock state."""
    d = _dim_of(space)
    if not 1 < k < d:
        raise ValueError(f"k must satisfy 1 < k < {d}")
    perm = np.arange(d)
    perm[1], perm[k] = k, 1
    U = np.zeros((d, d), dtype=complex)
    U[perm, np.arange(d)] = 1.0
    return U


def weak_decay_channel(jump_ops: Sequence[np.ndarray], gamma_t: float, warn_threshold: float = 0.1,
                       rho: np.ndarray | None = None) -> KrausChannel:
    """Short-time Kraus form of a decay with common rate for all jump operators.

    Derivatives are taken with respect to ``s = sqrt(gamma_t)``.  The trace is
    preserved to second order in ``gamma_t``.
    """
    if gamma_t < 0:
        raise ValueError("gamma_t must be non-negative")
    ops = [np.asarray(Y, dtype=complex) for Y in jump_ops]
    m = len(ops)
    d = ops[0].shape[0]
    eye = np.eye(d, dtype=complex)
    s = np.sqrt(gamma_t)
    if rho is not None:
        c = max(float(np.real(np.trace(Y @ rho @ Y.conj().T))) for Y in ops)
        if gamma_t * m * c > warn_threshold:
            import warnings

            warnings.warn(f"weak-decay expansion parameter {gamma_t * m * c:.3g} exceeds {warn_threshold}")
    kraus, dkraus = [], []
    for Y in ops:
        YY = Y.conj().T @ Y
        kraus.append(eye / np.sqrt(m) - 0.5 * gamma_t * np.sqrt(m) * YY)
        dkraus.append(-s * np.sqrt(m) * YY)
        kraus.append(s * Y)
        dkraus.append(Y.copy())
    return KrausChannel(kraus, "weak_decay", {"gamma_t": float(gamma_t), "jumps": m}, dkraus)


def qubit_dephasing(gamma_t: float) -> KrausChannel:
    """Coherences decay by ``exp(-gamma_t)``."""
    if gamma_t < 0:
        raise ValueError("rate must be non-negative")
    lam = np.exp(-gamma_t)
    return KrausChannel([np.sqrt((1 + lam) / 2) * np.eye(2), np.sqrt((1 - lam) / 2) * SIGMA_Z],
                        "qubit_dephasing", {"gamma_t": gamma_t})


def qubit_amplitude_damping(gamma_t: float) -> KrausChannel:
    """Excited population (index 1) decays by ``exp(-gamma_t)``."""
    if gamma_t < 0:
        raise ValueError("rate must be non-negative")
    keep = np.exp(-gamma_t)
    K0 = np.diag([1.0, np.sqrt(keep)])
    K1 = np.array([[0.0, np.sqrt(1 - keep)], [0.0, 0.0]])
    return KrausChannel([K0, K1], "qubit_amplitude_damping", {"gamma_t": gamma_t})


def qubit_random_rotation(sigma: float) -> KrausChannel:
    """Gaussian random z-rotation; derivatives with respect to ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    c = np.exp(-0.5 * sigma * sigma)
    a = np.sqrt((1 + c) / 2)
    b = np.sqrt((1 - c) / 2)
    dc = -sigma * c
    da = dc / (4 * a)
    db = -dc / (4 * b) if b > 0 else 0.0
    return KrausChannel([a * np.eye(2), b * SIGMA_Z], "qubit_random_rotation", {"sigma": sigma},
                        [da * np.eye(2), db * SIGMA_Z])


def qubit_channels() -> dict:
    return {"dephasing": qubit_dephasing, "amplitude_damping": qubit_amplitude_damping,
            "random_rotation": qubit_random_rotation}


# ---------------------------------------------------------------------------
# generic operations

def apply(channel: Channel, rho) -> DensityMatrix:
    m = _as_matrix(rho)
    if m.shape != (channel.dim, channel.dim):
        raise ValueError("state and channel live on different spaces")
    out = channel.apply(m)
    out = 0.5 * (out + out.conj().T)
    leak = 1.0 - float(np.real(np.trace(out)))
    return DensityMatrix(TruncatedSpace(channel.dim), out, max(leak, 0.0))


def compose(a: Channel, b: Channel) -> ComposedChannel:
    """Channel that applies ``b`` first, then ``a``."""
    return ComposedChannel(a, b)


def completeness_defect(channel: Channel) -> float:
    return channel.completeness_defect()


def vacuum_number_distribution(sigma: float, nmax: int) -> np.ndarray:
    """Number statistics of the vacuum after a p-axis random displacement."""
    n = np.arange(nmax)
    s2 = sigma * sigma
    if s2 == 0:
        out = np.zeros(nmax)
        out[0] = 1.0
        return out
    logp = (gammaln(2 * n + 1) - 2 * n * np.log(2.0) - 2 * gammaln(n + 1)
            + n * np.log(s2) - (n + 0.5) * np.log1p(s2))
    return np.exp(logp)
