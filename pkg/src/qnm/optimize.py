"""Searches for good input states.

Two approaches: alternate convex search on the biconvex objective whose
optimum is the channel QFI, and a brute-force search over equally spaced
Fock superpositions (particle swarm followed by a gradient polish).
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .channels import Channel, LossChannel, compose, random_displacement_channel
from .fisher import qfi_spectral, sld
from .fock import PureState, TruncatedSpace, operators


@dataclass
class OptimizationRun:
    method: str
    seed: int | None
    config: dict
    budget: dict
    history: list = field(default_factory=list)
    best_coeffs: np.ndarray | None = None
    best_state: PureState | None = None
    qfi: float = float("nan")
    surrogate_value: float = float("nan")
    mean_number: float = float("nan")

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("best_state", "best_coeffs")}
        out["history"] = [float(v) for v in self.history]
        if self.best_coeffs is not None:
            out["best_coeffs"] = [[float(z.real), float(z.imag)] for z in self.best_coeffs]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())


# ---------------------------------------------------------------------------
# alternate convex search

def _check_hermitian(X):
    if np.max(np.abs(X - X.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(X))):
        raise ValueError("X must be Hermitian")


def heisenberg_operator(X: np.ndarray, channel: Channel) -> np.ndarray:
    """``2 d/ds Lambda^dag(X) - Lambda^dag(X^2)``; its expectation in the input state is ``-f``."""
    _check_hermitian(X)
    A = 2.0 * channel.adjoint_derivative(X) - channel.adjoint(X @ X)
    return 0.5 * (A + A.conj().T)


def biconvex_objective(psi, X: np.ndarray, channel: Channel) -> float:
    """``f(psi, X)``; its minimum over both arguments is minus the channel QFI."""
    v = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    return -float(np.real(v.conj() @ heisenberg_operator(X, channel) @ v))


def _output(channel: Channel, v: np.ndarray):
    rho = np.outer(v, v.conj())
    out = channel.apply(rho)
    d = channel.apply_derivative(rho)
    return 0.5 * (out + out.conj().T), 0.5 * (d + d.conj().T)


def acs_search(psi0, channel: Channel, max_iters: int = 100, tol: float = 1e-10,
               monotone_tol: float = 1e-9) -> OptimizationRun:
    """Alternate between the SLD (X step) and the top eigenvector of the Heisenberg operator (state step)."""
    v = psi0.amplitudes if isinstance(psi0, PureState) else np.asarray(psi0, dtype=complex)
    v = v / np.linalg.norm(v)
    run = OptimizationRun("acs", None, {"dim": channel.dim, "channel": channel.label},
                          {"max_iters": max_iters, "tol": tol})
    prev = -np.inf
    for _ in range(max_iters):
        rho, d = _output(channel, v)
        X = sld(rho, d)
        A = heisenberg_operator(X, channel)
        vals, vecs = np.linalg.eigh(A)
        if vals[-1] < float(np.real(v.conj() @ A @ v)) - monotone_tol:
            raise RuntimeError("eigen-solver returned a worse state")
        v = vecs[:, -1]
        value = float(vals[-1])
        if value < prev - monotone_tol * max(1.0, abs(prev)):
            raise RuntimeError("alternate convex search lost monotonicity")
        run.history.append(value)
        if abs(value - prev) < tol:
            break
        prev = value
    rho, d = _output(channel, v)
    run.best_coeffs = v
    run.best_state = PureState(TruncatedSpace(channel.dim), v)
    run.qfi = qfi_spectral(rho, d).value
    run.mean_number = run.best_state.mean_number
    return run


# ---------------------------------------------------------------------------
# sparse Fock superpositions

def finite_diff_gradient(objective: Callable[[np.ndarray], float], coeffs: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient with respect to a real coordinate vector."""
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-7, 1e-3]")
    x = np.asarray(coeffs, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fp, fm = objective(x + e), objective(x - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError("objective is not finite")
        g[i] = (fp - fm) / (2 * h)
    return g


def _to_complex(x: np.ndarray) -> np.ndarray:
    k = x.size // 2
    c = x[:k] + 1j * x[k:]
    return c / np.linalg.norm(c)


class SparseProblem:
    """QFI of ``sum_k c_k |m k>`` sent through loss then random displacement.

    ``objective="small_signal"`` evaluates the zero-signal limit from the
    Kraus images of the lossy state (cheap, no channel application);
    ``"spectral"`` applies the full channel at ``sigma``.
    """

    def __init__(self, m: int, K: int, sigma: float, eta: float, dim: int, axes: str = "p",
                 objective: str = "small_signal", rank_cutoff: float = 1e-10,
                 energy_target: float | None = None, penalty: float = 0.0):
        if K < 1 or m < 1:
            raise ValueError("m and K must be positive")
        if m * (K - 1) >= dim:
            raise ValueError(f"dimension {dim} too small for spacing {m} and {K} peaks")
        self.m, self.K, self.sigma, self.eta, self.dim = m, K, sigma, eta, dim
        self.axes = axes
        self.objective_kind = objective
        self.rank_cutoff = rank_cutoff
        self.energy_target = energy_target
        self.penalty = penalty
        self.idx = m * np.arange(K)
        self.loss = LossChannel(eta, dim)
        ops = operators(dim)
        self.generators = {"p": [ops.position], "x": [ops.momentum], "both": [ops.position, ops.momentum]}[axes]
        self._channel = None

    @property
    def channel(self) -> Channel:
        if self._channel is None:
            self._channel = compose(random_displacement_channel(self.sigma, self.axes, self.dim), self.loss)
        return self._channel

    def state(self, c: np.ndarray) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.idx] = c / np.linalg.norm(c)
        return v

    def small_signal(self, c: np.ndarray) -> float:
        A = self.loss.kraus_images(self.state(c), min_norm=1e-12)
        U, s, _ = np.linalg.svd(A, full_matrices=False)
        Q = U[:, s**2 > self.rank_cutoff]
        total = 0.0
        for H in self.generators:
            HA = H @ A
            total += np.sum(np.abs(HA) ** 2) - np.sum(np.abs(Q.conj().T @ HA) ** 2)
        return 4.0 * float(total)

    def spectral(self, c: np.ndarray) -> float:
        rho, d = _output(self.channel, self.state(c))
        return qfi_spectral(rho, d).value

    def value(self, c: np.ndarray) -> float:
        val = self.small_signal(c) if self.objective_kind == "small_signal" else self.spectral(c)
        if self.energy_target is not None and self.penalty > 0:
            n = float(np.sum(self.idx * np.abs(c) ** 2) / np.sum(np.abs(c) ** 2))
            val -= self.penalty * (n - self.energy_target) ** 2
        return val

    def real_objective(self, x: np.ndarray) -> float:
        return self.value(_to_complex(x))


def _ball(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    z = rng.normal(size=(count, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * rng.random((count, 1)) ** (1.0 / n)


def particle_swarm(f: Callable[[np.ndarray], float], n: int, rng: np.random.Generator, particles: int = 64,
                   iters: int = 500, inertia: float = 0.7, c1: float = 1.5, c2: float = 1.5,
                   workers: int = 1, history: list | None = None) -> tuple[np.ndarray, float]:
    """Maximize ``f`` over the unit sphere in R^n; positions are renormalized every step."""
    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def evaluate(P):
        return np.array(list(pool.map(f, P)) if pool else [f(p) for p in P])

    pos = _ball(rng, particles, n)
    pos /= np.linalg.norm(pos, axis=1, keepdims=True)
    vel = np.zeros_like(pos)
    best_pos, best_val = pos.copy(), evaluate(pos)
    g = int(np.argmax(best_val))
    gpos, gval = best_pos[g].copy(), float(best_val[g])
    try:
        for _ in range(iters):
            r1, r2 = rng.random(pos.shape), rng.random(pos.shape)
            vel = inertia * vel + c1 * r1 * (best_pos - pos) + c2 * r2 * (gpos - pos)
            pos = pos + vel
            pos /= np.linalg.norm(pos, axis=1, keepdims=True)
            vals = evaluate(pos)
            better = vals > best_val
            best_pos[better], best_val[better] = pos[better], vals[better]
            g = int(np.argmax(best_val))
            if best_val[g] > gval:
                gpos, gval = best_pos[g].copy(), float(best_val[g])
            if history is not None:
                history.append(gval)
    finally:
        if pool:
            pool.shutdown()
    return gpos, gval


def gradient_polish(f: Callable[[np.ndarray], float], x0: np.ndarray, steps: int = 20, h: float = 1e-5,
                    step0: float = 0.05, history: list | None = None) -> tuple[np.ndarray, float]:
    """Projected gradient ascent on the sphere with backtracking."""
    x = x0 / np.linalg.norm(x0)
    fx = f(x)
    step = step0
    for _ in range(steps):
        g = finite_diff_gradient(f, x, h)
        g -= (g @ x) * x
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        while step > 1e-8:
            cand = x + step * g / gn
            cand /= np.linalg.norm(cand)
            fc = f(cand)
            if fc > fx:
                x, fx = cand, fc
                step *= 1.5
                break
            step *= 0.5
        else:
            break
        if history is not None:
            history.append(fx)
    return x, fx


def optimize_sparse(m: int, K: int, sigma: float, eta: float, dim: int, method: str = "swarm_then_gradient",
                    particles: int = 64, iters: int = 500, polish_steps: int = 20, seed: int = 0,
                    objective: str = "small_signal", axes: str = "p", workers: int = 1,
                    energy_target: float | None = None, penalty: float = 0.0,
                    x0: np.ndarray | None = None) -> OptimizationRun:
    """Optimize the coefficients of ``sum_k c_k |m k>``; the final QFI is the spectral value at ``sigma``."""
    if method not in ("swarm", "gradient", "swarm_then_gradient"):
        raise ValueError("unknown method")
    prob = SparseProblem(m, K, sigma, eta, dim, axes, objective, energy_target=energy_target, penalty=penalty)
    rng = np.random.default_rng(seed)
    config = {"m": m, "K": K, "sigma": sigma, "eta": eta, "dim": dim, "objective": objective, "axes": axes,
              "energy_target": energy_target, "penalty": penalty}
    budget = {"particles": particles, "iters": iters, "polish_steps": polish_steps,
              "inertia": 0.7, "c1": 1.5, "c2": 1.5}
    run = OptimizationRun(method, seed, config, budget)
    f = prob.real_objective
    if K == 1:
        x = np.array([1.0, 0.0])
        val = f(x)
    else:
        if method == "gradient":
            x = x0 if x0 is not None else _ball(rng, 1, 2 * K)[0]
            val = f(x)
        else:
            x, val = particle_swarm(f, 2 * K, rng, particles, iters, workers=workers, history=run.history)
        if method != "swarm":
            x, val = gradient_polish(f, x, polish_steps, history=run.history)
    c = _to_complex(x)
    run.best_coeffs = c
    run.best_state = PureState(TruncatedSpace(dim), prob.state(c))
    run.surrogate_value = float(val)
    run.qfi = prob.spectral(c)
    run.mean_number = run.best_state.mean_number
    return run
