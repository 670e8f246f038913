"""Closed-form Fisher informations and precision limits.

Every formula is a plain function of keyword parameters.  ``N = INF`` selects
the infinite-energy limit where that limit is finite; formulas that diverge
reject it.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable


class Limit(enum.Enum):
    INF = "inf"

    def __repr__(self):
        return "INF"


INF = Limit.INF


class DomainError(ValueError):
    pass


def _is_inf(N) -> bool:
    return N is INF


def _nonneg(**kw):
    for k, v in kw.items():
        if v is INF:
            continue
        if not (v >= 0) or not math.isfinite(v):
            raise DomainError(f"{k} must be a finite non-negative number, got {v}")


def _fraction(**kw):
    for k, v in kw.items():
        if not 0 <= v < 1:
            raise DomainError(f"{k} must lie in [0, 1), got {v}")


def _divergent(name):
    raise DomainError(f"{name} diverges as N -> infinity")


def xi_N(N) -> float:
    """Largest quadrature variance reachable with mean occupation ``N``."""
    if _is_inf(N):
        _divergent("xi_N")
    _nonneg(N=N)
    return N + 0.5 + math.sqrt(N * (N + 1))


def ecqfi_lossless(sigma, N) -> float:
    _nonneg(sigma=sigma, N=N)
    if _is_inf(N):
        if sigma == 0:
            _divergent("ecqfi_lossless at sigma=0")
        return 2.0 / sigma**2
    return 4.0 / (2 * sigma**2 + 1.0 / xi_N(N))


def ecqfi_lossy(sigma, eta) -> float:
    _nonneg(sigma=sigma)
    _fraction(eta=eta)
    if eta + sigma**2 == 0:
        raise DomainError("ecqfi_lossy diverges at eta = sigma = 0")
    return 2.0 / (eta + sigma**2)


def ub_lossy_constrained(sigma, eta, N) -> float:
    _nonneg(sigma=sigma, N=N)
    _fraction(eta=eta)
    if _is_inf(N):
        return ecqfi_lossy(sigma, eta)
    return 4.0 / (2 * (eta + sigma**2) + (1 - eta) / xi_N(N))


def qfi_vacuum(sigma) -> float:
    _nonneg(sigma=sigma)
    return 2.0 / (1 + sigma**2)


def cfi_quadrature_vacuum(sigma) -> float:
    _nonneg(sigma=sigma)
    return 2 * sigma**2 / (0.5 + sigma**2) ** 2


def qfi_smsv_lossy_he(sigma, eta) -> float:
    _nonneg(sigma=sigma)
    _fraction(eta=eta)
    if eta == 0 and sigma == 0:
        raise DomainError("undefined at eta = sigma = 0")
    return 8 * sigma**2 / (eta + 2 * sigma**2) ** 2


def qfi_vacuum_classical(sigma, sigma_x, sigma_p) -> float:
    _nonneg(sigma=sigma, sigma_x=sigma_x, sigma_p=sigma_p)
    sx2, sp2, s2 = sigma_x**2, sigma_p**2, sigma**2
    if sx2 == 0 and sp2 == 0:
        return qfi_vacuum(sigma)
    kappa = s2 + sx2 + sp2 + 2 * sx2 * (s2 + sp2)
    return 2 * s2 * (1 + 2 * sx2) ** 2 / (kappa * (kappa + 1))


def ecqfi_parallel(sigma, sigma_p, N) -> float:
    _nonneg(sigma=sigma, sigma_p=sigma_p, N=N)
    tot = sigma**2 + sigma_p**2
    if tot == 0:
        return ecqfi_lossless(0.0, N)
    if _is_inf(N):
        return 2 * sigma**2 / tot**2
    return 4 * sigma**2 / (tot * (2 * tot + 1.0 / xi_N(N)))


def ecqfi_parallel_loss(sigma, sigma_p, eta) -> float:
    _nonneg(sigma=sigma, sigma_p=sigma_p)
    _fraction(eta=eta)
    tot = sigma**2 + sigma_p**2
    if tot == 0:
        return ecqfi_lossy(0.0, eta)
    return 2 * sigma**2 / ((eta + tot) * tot)


def qfi_fock(N, eta) -> float:
    _nonneg(N=N)
    _fraction(eta=eta)
    if _is_inf(N):
        if eta == 0:
            _divergent("qfi_fock without loss")
        return 0.0
    return 2 * math.exp(N * math.log1p(-eta)) * (N + 1)


def _tmsv_gain(eta, eta_a):
    return eta + eta_a - 2 * eta * eta_a


def qfi_tmsv_1d_he(sigma, eta, eta_a) -> float:
    """High-energy TMSV QFI, one-dimensional encoding, ancilla storage loss ``eta_a``."""
    _nonneg(sigma=sigma)
    _fraction(eta=eta, eta_a=eta_a)
    g = _tmsv_gain(eta, eta_a)
    x = 2 * (1 - eta) * eta * eta_a * (eta**2 * (2 * (eta_a - 1) * eta_a + 1) - 2 * eta * eta_a**2 + eta_a**2)
    den = x + sigma**2 * g**3
    if den == 0:
        raise DomainError("undefined at this parameter point")
    return 2 * (1 - eta_a) * sigma**2 * g**2 / den


def qfi_tmsv_2d_he(sigma, eta, eta_a) -> float:
    _nonneg(sigma=sigma)
    _fraction(eta=eta, eta_a=eta_a)
    den = (eta + sigma**2) * ((1 - eta) * eta_a + (1 - eta_a) * sigma**2)
    if den == 0:
        raise DomainError("undefined at this parameter point")
    return 4 * (1 - eta_a) * sigma**2 / den


def qfi_tmsv_perp(N) -> float:
    if _is_inf(N):
        _divergent("qfi_tmsv_perp")
    _nonneg(N=N)
    return 8 * N * (N + 1) / (2 * N + 1)


def ecqfi_axion_2d(sigma, eta, N) -> float:
    _nonneg(sigma=sigma, N=N)
    _fraction(eta=eta)
    s2 = sigma**2
    if _is_inf(N):
        if eta + s2 == 0:
            _divergent("ecqfi_axion_2d without loss")
        return 4.0 / (eta + s2)
    return 4 * (eta + N * (eta + 2 * s2) + s2) / ((eta + s2) * (N * (eta + 2 * s2) + s2 + 1))


def ecqfi_det_lossless(N) -> float:
    if _is_inf(N):
        _divergent("ecqfi_det_lossless")
    return 4 * xi_N(N)


def ecqfi_det_lossy(N, eta) -> float:
    _nonneg(N=N)
    _fraction(eta=eta)
    if _is_inf(N):
        if eta == 0:
            _divergent("ecqfi_det_lossy without loss")
        return 2.0 / eta
    x = xi_N(N)
    return 4 * x / (eta * (2 * x - 1) + 1)


def ecqfi_qubit_rotation(sigma) -> float:
    _nonneg(sigma=sigma)
    s2 = sigma**2
    if s2 == 0:
        return 1.0
    return s2 / math.expm1(s2)


def variance_form(sigma, qfi) -> float:
    """QFI with respect to the variance ``sigma**2`` given the QFI with respect to ``sigma``."""
    _nonneg(qfi=qfi)
    if sigma <= 0:
        raise DomainError("variance form needs sigma > 0")
    return qfi / (4 * sigma**2)


CATALOG: dict[str, Callable[..., float]] = {
    f.__name__: f
    for f in (xi_N, ecqfi_lossless, ecqfi_lossy, ub_lossy_constrained, qfi_vacuum, cfi_quadrature_vacuum,
              qfi_smsv_lossy_he, qfi_vacuum_classical, ecqfi_parallel, ecqfi_parallel_loss, qfi_fock,
              qfi_tmsv_1d_he, qfi_tmsv_2d_he, qfi_tmsv_perp, ecqfi_axion_2d, ecqfi_det_lossless,
              ecqfi_det_lossy, ecqfi_qubit_rotation, variance_form)
}


def parameters(name: str) -> list[str]:
    import inspect

    return list(inspect.signature(CATALOG[name]).parameters)


@dataclass(frozen=True)
class BoundSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in CATALOG:
            raise DomainError(f"unknown bound {self.name!r}")
        missing = set(parameters(self.name)) - set(self.params)
        extra = set(self.params) - set(parameters(self.name))
        if missing or extra:
            raise DomainError(f"{self.name} takes {parameters(self.name)}, got {sorted(self.params)}")


def eval_bound(spec: BoundSpec | str, **params) -> float:
    if isinstance(spec, str):
        spec = BoundSpec(spec, params)
    return float(CATALOG[spec.name](**spec.params))


def list_bounds() -> list[tuple[str, list[str]]]:
    return [(name, parameters(name)) for name in CATALOG]


def _fock_scan(eta: float) -> tuple[list[int], float]:
    if not 0 < eta < 1:
        raise DomainError("eta must lie in (0, 1)")
    top = int(math.ceil(2.0 / -math.log1p(-eta))) + 10
    vals = [qfi_fock(n, eta) for n in range(top + 1)]
    best = max(vals)
    return [n for n, v in enumerate(vals) if v >= best * (1 - 1e-12)], best


def optimal_fock_N(eta: float) -> int:
    """Fock number maximizing the lossy small-signal QFI; ties go to the smaller N."""
    return _fock_scan(eta)[0][0]


def optimal_fock_set(eta: float) -> tuple[list[int], float]:
    """All Fock numbers attaining the optimum (within 1e-12 relative) and the optimal value."""
    return _fock_scan(eta)
