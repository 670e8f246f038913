"""Monte Carlo simulation of joint mean/variance estimation of a random displacement.

The signal displaces the p quadrature of the vacuum by ``alpha ~ N(mu, sigma^2)``.
Half the shots measure p, half count photons.  ``M`` is always the total
number of shots, so each scheme has ``M // 2`` shots of each kind.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.stats import poisson

QUAD_VAR = 0.5


# ---------------------------------------------------------------------------
# number statistics

def number_distribution(offset, sigma: float, nmax: int) -> np.ndarray:
    """Photon-number distribution of the vacuum displaced in p by ``N(offset, sigma^2)``.

    Closed form ``exp(-mu^2/(2(1+s2))) (s2/(1+s2))^n L_n^(-1/2)(-y) / sqrt(1+s2)``
    with ``y = mu^2 / (2 s2 (1+s2))``, evaluated by the Laguerre three-term
    recurrence with the geometric factor folded in.  ``offset`` may be an array;
    the result then has shape ``offset.shape + (nmax,)``.
    """
    mu = np.asarray(offset, dtype=float)
    s2 = float(sigma) ** 2
    out = np.zeros(mu.shape + (nmax,))
    pref = np.exp(-mu**2 / (2 * (1 + s2))) / np.sqrt(1 + s2)
    if s2 == 0:
        lam = mu**2 / 2
        n = np.arange(nmax)
        return poisson.pmf(n, lam[..., None])
    g = s2 / (1 + s2)
    y = mu**2 / (2 * s2 * (1 + s2))
    q_prev = np.ones_like(mu)
    out[..., 0] = pref
    if nmax > 1:
        q = g * (0.5 + y)
        out[..., 1] = pref * q
    for n in range(1, nmax - 1):
        q, q_prev = (g * (2 * n + 0.5 + y) * q - g * g * (n - 0.5) * q_prev) / (n + 1), q
        out[..., n + 1] = pref * q
    return out


def number_distribution_quadrature(offset: float, sigma: float, nmax: int, nodes: int = 120) -> np.ndarray:
    """Same distribution by Gauss-Hermite averaging of Poisson weights (independent check)."""
    from scipy.special import gammaln

    t, w = np.polynomial.hermite.hermgauss(nodes)
    alpha = offset + np.sqrt(2.0) * sigma * t
    lam = alpha**2 / 2
    n = np.arange(nmax)[:, None]
    logp = -lam + n * np.log(np.maximum(lam, 1e-300)) - gammaln(n + 1)
    return (np.exp(logp) * w).sum(axis=1) / np.sqrt(np.pi)


def _table_size(max_offset: float, sigma: float) -> int:
    mean = (max_offset**2 + sigma**2) / 2
    return int(40 + 4 * mean + 12 * np.sqrt(mean + 1))


def sample_numbers(offsets, sigma: float, uniforms: np.ndarray, tail_tol: float = 1e-12) -> np.ndarray:
    """Inverse-CDF sampling, one outcome per (offset, uniform) pair.

    A scalar ``offset`` shares a single table across all uniforms.
    """
    if np.ndim(offsets) == 0:
        offset = float(offsets)
        nmax = _table_size(abs(offset), sigma)
        while True:
            table = number_distribution(offset, sigma, nmax)
            if 1.0 - table.sum() < tail_tol:
                break
            nmax *= 2
        return np.minimum(np.searchsorted(np.cumsum(table), uniforms, side="right"), nmax - 1)
    offsets = np.broadcast_to(np.asarray(offsets, dtype=float), uniforms.shape)
    nmax = _table_size(float(np.max(np.abs(offsets))) if offsets.size else 0.0, sigma)
    while True:
        table = number_distribution(offsets, sigma, nmax)
        tail = 1.0 - table.sum(axis=-1)
        if np.max(tail) < tail_tol:
            break
        nmax *= 2
    cdf = np.cumsum(table, axis=-1)
    return np.minimum((cdf < uniforms[..., None]).sum(axis=-1), nmax - 1)


# ---------------------------------------------------------------------------
# Monte Carlo

def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent counter-based stream per trial, so results do not depend on scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial,))))


def _draws(seed: int, trials: int, shots: int):
    z = np.empty((trials, shots))
    u = np.empty((trials, shots))
    for t in range(trials):
        rng = trial_rng(seed, t)
        z[t] = rng.standard_normal(shots)
        u[t] = rng.random(shots)
    return z, u


@dataclass
class ProtocolTrace:
    scheme: str
    seed: int
    M: int
    mu: float
    sigma: float
    mu_est: np.ndarray
    sigma_est: np.ndarray
    clamped: np.ndarray
    p: np.ndarray | None = None
    n: np.ndarray | None = None
    displacements: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return self.sigma_est.size

    @property
    def sq_err_sigma(self) -> np.ndarray:
        return (self.sigma_est - self.sigma) ** 2

    @property
    def sq_err_mu(self) -> np.ndarray:
        return (self.mu_est - self.mu) ** 2

    def summary(self) -> dict:
        e = self.sq_err_sigma
        return {
            "M": self.M,
            "scheme": self.scheme,
            "mu_over_sigma": self.mu / self.sigma,
            "mse_sigma": float(e.mean()),
            "mse_mu": float(self.sq_err_mu.mean()),
            "stderr": float(e.std(ddof=1) / np.sqrt(e.size)) if e.size > 1 else float("nan"),
            "clamp_rate": float(self.clamped.mean()),
        }


def _validate(mu, sigma, M):
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not np.isfinite(mu):
        raise ValueError("mu must be finite")
    if M < 2 or M % 2:
        raise ValueError("M must be an even integer >= 2")


def _sigma_estimate(radicand: np.ndarray):
    clamped = radicand < 0
    return np.sqrt(np.maximum(radicand, 0.0)), clamped


def simulate_nonadaptive(mu: float, sigma: float, M: int, seed: int = 0, trials: int = 1,
                         keep_records: bool = False) -> ProtocolTrace:
    _validate(mu, sigma, M)
    m = M // 2
    z, u = _draws(seed, trials, m)
    p = mu + np.sqrt(QUAD_VAR + sigma**2) * z
    n = sample_numbers(mu, sigma, u)
    mu_est = p.mean(axis=1)
    sig, clamped = _sigma_estimate(2.0 * n.mean(axis=1) - mu_est**2)
    return ProtocolTrace("nonadaptive", seed, M, mu, sigma, mu_est, sig, clamped,
                         p if keep_records else None, n if keep_records else None)


def simulate_adaptive(mu: float, sigma: float, M: int, seed: int = 0, trials: int = 1,
                      keep_records: bool = False) -> ProtocolTrace:
    """Null the running mean estimate after every quadrature shot, then count photons."""
    _validate(mu, sigma, M)
    m = M // 2
    z, u = _draws(seed, trials, m)
    D = np.zeros(trials)
    p = np.empty((trials, m))
    n = np.empty((trials, m), dtype=int)
    disp = np.empty((trials, m))
    for k in range(1, m + 1):
        pk = mu + D + np.sqrt(QUAD_VAR + sigma**2) * z[:, k - 1]
        D = D - pk / k
        p[:, k - 1] = pk
        disp[:, k - 1] = D
        n[:, k - 1] = sample_numbers(mu + D, sigma, u[:, k - 1])
    mu_est = -D
    offs = disp - D[:, None]
    sig, clamped = _sigma_estimate(2.0 * n.mean(axis=1) - (offs**2).mean(axis=1))
    return ProtocolTrace("adaptive", seed, M, mu, sigma, mu_est, sig, clamped,
                         p if keep_records else None, n if keep_records else None,
                         disp if keep_records else None)


def fig4_rows(sigma: float, ratios, Ms, trials: int, seed: int = 0, schemes=("nonadaptive", "adaptive")) -> list[dict]:
    sims = {"nonadaptive": simulate_nonadaptive, "adaptive": simulate_adaptive}
    rows = []
    for M in Ms:
        for scheme in schemes:
            for r in ratios:
                rows.append(sims[scheme](r * sigma, sigma, int(M), seed, trials).summary())
    return rows


CSV_COLUMNS = ["M", "scheme", "mu_over_sigma", "mse_sigma", "mse_mu", "stderr", "clamp_rate"]


def write_csv(rows: list[dict], path_or_file, header: str | None = None) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        if header:
            fh.write(f"# {header}\n")
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in CSV_COLUMNS})
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------------------
# joint (collective) measurement

def joint_measurement_cfim(M: int, V: float) -> np.ndarray:
    """Small-signal CFIM for (mu, sigma) of the collective measurement on ``M`` copies."""
    if M < 2:
        raise ValueError("the anti-symmetric sector needs M >= 2")
    if V <= 0:
        raise ValueError("generator variance must be positive")
    return 4.0 * V * np.diag([M, M - 1.0])


def _random_unitary_state(psi: np.ndarray, H: np.ndarray, mu: float, sigma: float):
    """Exact output of ``E[exp(i a H) |psi><psi| exp(-i a H)]``, ``a ~ N(mu, sigma^2)``, and its derivatives."""
    h, W = np.linalg.eigh(H)
    c = W.conj().T @ psi
    rho = np.outer(c, c.conj())
    dh = h[:, None] - h[None, :]
    k = np.exp(1j * mu * dh - 0.5 * sigma**2 * dh**2)
    out = rho * k
    dmu = rho * k * (1j * dh)
    dsig = rho * k * (-sigma * dh**2)
    back = lambda X: W @ X @ W.conj().T
    return back(out), back(dmu), back(dsig)


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def joint_bruteforce_check(psi: np.ndarray, H: np.ndarray, M: int, mu: float = 1e-3, sigma: float = 1e-3) -> np.ndarray:
    """CFIM of the explicit collective projective measurement on ``M`` copies."""
    psi = np.asarray(psi, dtype=complex)
    H = np.asarray(H, dtype=complex)
    d = psi.size
    if M < 2 or M > 3 or d > 8:
        raise ValueError("brute force limited to 2 <= M <= 3 and dim <= 8")
    H = H - np.real(psi.conj() @ H @ psi) * np.eye(d)
    V = float(np.real(psi.conj() @ H @ H @ psi))
    if V <= 0:
        raise ValueError("generator has zero variance in this state")
    phi1 = H @ psi / np.sqrt(V)

    def e(i):
        return _kron_all([phi1 if j == i else psi for j in range(M)])

    es = [e(i) for i in range(M)]
    base = _kron_all([psi] * M)
    sym = sum(es) / np.sqrt(M)
    coeffs = null_space(np.ones((1, M))).T
    anti = [sum(cf * ei for cf, ei in zip(row, es)) for row in coeffs]
    vecs = [(base + 1j * sym) / np.sqrt(2)] + anti
    proj = [np.outer(v, v.conj()) for v in vecs]
    rest = np.eye(d**M) - sum(proj)
    effects = proj + [rest]

    rho1, dmu1, dsig1 = _random_unitary_state(psi, H, mu, sigma)

    def derivative(d1):
        return sum(_kron_all([d1 if j == i else rho1 for j in range(M)]) for i in range(M))

    rho = _kron_all([rho1] * M)
    drs = [derivative(dmu1), derivative(dsig1)]
    p = np.array([np.real(np.trace(E @ rho)) for E in effects])
    dp = np.array([[np.real(np.trace(E @ dr)) for E in effects] for dr in drs])
    keep = p > 1e-300
    return (dp[:, keep] / p[keep]) @ dp[:, keep].T
