"""From single-mode Fisher information to spectral-density estimation.

Each frequency bin carries an independent mode whose excess variance is
``sigma^2 = G(Omega) S_yy(Omega)``.  Per-bin information about ``S_yy`` is
summed into a Fisher matrix for the parameters of a spectral model.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bounds

PsdModel = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class WaveformModel:
    omega: np.ndarray
    gain: np.ndarray
    psd: PsdModel
    delta_omega: float | None = None
    delta_t: float | None = None

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.gain = np.asarray(self.gain, dtype=float)
        if self.omega.shape != self.gain.shape:
            raise ValueError("omega and gain must have the same shape")
        if np.any(self.gain < 0):
            raise ValueError("gain must be non-negative")

    @classmethod
    def from_susceptibility(cls, omega, chi, psd: PsdModel, **kw) -> "WaveformModel":
        return cls(omega, 0.5 * np.abs(np.asarray(chi)) ** 2, psd, **kw)

    @property
    def measurements(self) -> float:
        """Independent measurements available in the band, ``dOmega dT / pi``."""
        if self.delta_omega is None or self.delta_t is None:
            raise ValueError("bandwidth and duration not set")
        return self.delta_omega * self.delta_t / np.pi

    def s_yy(self, theta) -> np.ndarray:
        s = np.asarray(self.psd(self.omega, np.atleast_1d(np.asarray(theta, dtype=float))), dtype=float)
        if np.any(s < 0):
            raise ValueError("spectral density must be non-negative")
        return s

    def index(self, omega: float) -> int:
        hits = np.flatnonzero(np.isclose(self.omega, omega, rtol=1e-12, atol=0))
        if hits.size == 0:
            raise ValueError(f"frequency {omega} is not on the model grid")
        return int(hits[0])


def tabulated_psd(omega_tab, values, scale_param: bool = True) -> PsdModel:
    """Linear interpolation of a tabulated shape; with ``scale_param`` the model is ``theta[0] * shape``."""
    omega_tab = np.asarray(omega_tab, dtype=float)
    values = np.asarray(values, dtype=float)

    def psd(omega, theta):
        shape = np.interp(omega, omega_tab, values)
        return theta[0] * shape if scale_param else shape

    return psd


def geontropic_placeholder(omega) -> np.ndarray:
    """Synthetic, non-fiducial spectral shape (smooth low-pass).  For demonstrations only."""
    omega = np.asarray(omega, dtype=float)
    return 1.0 / (1.0 + (omega / (2 * np.pi * 1e6)) ** 2)


def load_model_csv(path, psd_column: str | None = None) -> WaveformModel:
    """Read columns ``Omega, G`` and one of ``Phi`` (scaled by theta[0]) or ``S_yy`` (fixed)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(row for row in fh if not row.startswith("#")))
    if not rows:
        raise ValueError("empty model file")
    omega = np.array([float(r["Omega"]) for r in rows])
    gain = np.array([float(r["G"]) for r in rows])
    col = psd_column or ("Phi" if "Phi" in rows[0] else "S_yy")
    vals = np.array([float(r[col]) for r in rows])
    return WaveformModel(omega, gain, tabulated_psd(omega, vals, scale_param=(col == "Phi")))


def sigma_at(model: WaveformModel, omega: float, theta) -> float:
    i = model.index(omega)
    return float(np.sqrt(model.gain[i] * model.s_yy(theta)[i]))


def qfi_psd(gain: float, s_yy: float, qfi_sigma: float | None = None, qfi_variance: float | None = None) -> float:
    """Fisher information about ``S_yy`` at one frequency (both quadrature components counted).

    Give either the QFI with respect to ``sigma`` or, where ``sigma`` may vanish,
    the QFI with respect to ``sigma^2``.
    """
    if (qfi_sigma is None) == (qfi_variance is None):
        raise ValueError("give exactly one of qfi_sigma and qfi_variance")
    if qfi_variance is not None:
        return 2.0 * gain**2 * qfi_variance
    s2 = gain * s_yy
    if qfi_sigma == 0:
        return 0.0
    if s2 <= 0:
        raise ValueError("sigma = 0: pass qfi_variance instead")
    return gain**2 / (2.0 * s2) * qfi_sigma


def vacuum_qfi_psd(gain, s_yy):
    return gain / (s_yy * (1.0 + gain * s_yy))


def _dpsd(model: WaveformModel, theta: np.ndarray, h: float) -> np.ndarray:
    out = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        step = h * max(1.0, abs(theta[i]))
        e[i] = step
        out.append((model.s_yy(theta + e) - model.s_yy(theta - e)) / (2 * step))
    return np.array(out)


def qfim_psd_params(model: WaveformModel, theta, qfi_s: np.ndarray, dpsd: np.ndarray | None = None,
                    h: float = 1e-6, weights: np.ndarray | None = None) -> np.ndarray:
    """Sum over frequencies of ``I[S_yy] dS/dtheta_i dS/dtheta_j``.

    ``dpsd`` has shape ``(n_params, n_freq)``; central differences are used when omitted.
    ``weights`` multiplies each bin (for instance the number of repeated measurements).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    qfi_s = np.asarray(qfi_s, dtype=float)
    D = _dpsd(model, theta, h) if dpsd is None else np.atleast_2d(np.asarray(dpsd, dtype=float))
    w = qfi_s if weights is None else qfi_s * np.asarray(weights, dtype=float)
    Q = (D * w) @ D.T
    return 0.5 * (Q + Q.T)


def write_qfim_json(Q: np.ndarray, path, meta: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump({"qfim": np.asarray(Q).tolist(), "meta": meta or {}}, fh, indent=2)


# ---------------------------------------------------------------------------
# temporal modes

@dataclass
class TemporalBasis:
    times: np.ndarray
    functions: np.ndarray
    labels: list
    tol: float = 1e-6

    def gram(self) -> np.ndarray:
        dt = np.gradient(self.times)
        return (self.functions * dt) @ self.functions.conj().T

    def orthonormality_error(self) -> float:
        G = self.gram()
        return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def build_quadrature_basis(frequencies, times, T: float | None = None) -> TemporalBasis:
    """Normalized cos/sin pair per positive frequency on ``[0, T]``."""
    times = np.asarray(times, dtype=float)
    T = float(times[-1] - times[0]) if T is None else float(T)
    dt = float(np.max(np.diff(times)))
    funcs, labels = [], []
    for f in np.atleast_1d(frequencies):
        if f <= 0:
            raise ValueError("frequencies must be positive")
        period = 2 * np.pi / f
        if dt > period / 4:
            raise ValueError(f"time grid under-samples frequency {f}")
        if T < 10 * period:
            warnings.warn(f"record spans fewer than 10 periods of frequency {f}")
        norm = np.sqrt(2.0 / T)
        funcs.append(norm * np.cos(f * times))
        funcs.append(norm * np.sin(f * times))
        labels += [("cos", float(f)), ("sin", float(f))]
    return TemporalBasis(times, np.array(funcs), labels)


def karhunen_loeve(kernel: np.ndarray, times: np.ndarray, count: int | None = None):
    """Eigenpairs of a symmetric correlation kernel on a uniform time grid.

    Returns the mode variances (descending) and a ``TemporalBasis`` of the
    corresponding orthonormal modes.
    """
    kernel = np.asarray(kernel, dtype=float)
    if np.max(np.abs(kernel - kernel.T)) > 1e-10 * max(1.0, np.max(np.abs(kernel))):
        raise ValueError("kernel must be symmetric")
    dt = float(np.mean(np.diff(times)))
    vals, vecs = np.linalg.eigh(kernel * dt)
    order = np.argsort(vals)[::-1][:count]
    modes = vecs[:, order].T / np.sqrt(dt)
    return vals[order], TemporalBasis(np.asarray(times), modes, [("kl", i) for i in range(order.size)])


# ---------------------------------------------------------------------------
# acceleration factors

def acceleration_ratios(sigma: float, eta: float) -> dict:
    """Information-rate ratios between strategies, built from the closed forms in ``bounds``."""
    quad = bounds.cfi_quadrature_vacuum(sigma)
    count = bounds.qfi_vacuum(sigma)
    best = bounds.ecqfi_lossy(sigma, eta)
    return {
        "counting_vs_quadrature": count / quad,
        "optimal_vs_quadrature": best / quad,
        "optimal_vs_counting": best / count,
        "smsv_vs_quadrature": bounds.qfi_smsv_lossy_he(sigma, eta) / quad,
    }
