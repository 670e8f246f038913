"""Command-line front end.  Emits numbers, CSV and JSON; no plotting."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__, bounds
from .channels import classical_noise_channel, compose, loss_channel, random_displacement_channel
from .fisher import cfi_homodyne, cfi_povm, number_povm, qfi_spectral

DEFAULT_MAX_DIM = 1500
STATES = ("vacuum", "coherent", "smsv", "fock", "gkp")
SWEEP_COLUMNS = ["state", "N", "sigma", "eta", "qfi", "cfi_number", "cfi_quadrature", "leakage",
                 "dim", "derivative_method", "nodes"]


class ConfigError(Exception):
    """Bad user input; ``field`` names the offending option."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _max_dim() -> int:
    raw = os.environ.get("QNM_MAX_DIM", str(DEFAULT_MAX_DIM))
    try:
        return int(raw)
    except ValueError:
        raise ConfigError("QNM_MAX_DIM", f"not an integer: {raw!r}") from None


def _float_list(text: str, field: str) -> list[float]:
    """Comma list, or ``start:stop:count`` (linear) / ``log:start:stop:count`` (log-spaced)."""
    text = text.strip()
    try:
        if not text:
            return []
        if text.startswith("log:"):
            a, b, n = text[4:].split(":")
            return list(np.logspace(math.log10(float(a)), math.log10(float(b)), int(n)))
        if ":" in text:
            a, b, n = text.split(":")
            return list(np.linspace(float(a), float(b), int(n)))
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(field, f"cannot parse {text!r}") from None


def _parse_N(text):
    if text is None:
        return None
    if str(text).lower() in ("inf", "infinity"):
        return bounds.INF
    try:
        return float(text)
    except ValueError:
        raise ConfigError("N", f"not a number: {text!r}") from None


def _load_config(args) -> dict:
    """Structured config file values, overridden by any flag the user set."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(cfg, dict):
            raise ConfigError("config", "must be a JSON object")
    for k, v in vars(args).items():
        if v is not None and k not in ("func", "config"):
            cfg[k] = v
    return cfg


def _dim(cfg) -> int:
    dim = int(cfg.get("dim", 60))
    if dim < 2:
        raise ConfigError("dim", "must be at least 2")
    if dim > _max_dim():
        raise ConfigError("dim", f"{dim} exceeds the ceiling {_max_dim()} (set QNM_MAX_DIM to raise it)")
    return dim


def _nodes(cfg) -> int:
    nodes = int(cfg.get("nodes", 41))
    if nodes < 11 or nodes % 2 == 0:
        raise ConfigError("nodes", "must be odd and >= 11")
    return nodes


def _eta(cfg, key="eta") -> float:
    eta = float(cfg.get(key, 0.0))
    if not 0 <= eta < 1:
        raise ConfigError(key, "must lie in [0, 1)")
    return eta


def _input_state(cfg, dim):
    from .fock import make_state

    state = cfg.get("state", "vacuum")
    if state not in STATES:
        raise ConfigError("state", f"unknown state {state!r}; choose from {', '.join(STATES)}")
    tol = 1e-5
    if state == "vacuum":
        st = make_state("fock", {"n": 0}, dim)
    elif state == "fock":
        st = make_state("fock", {"n": int(cfg.get("N", 0))}, dim)
    elif state == "coherent":
        st = make_state("coherent", {"alpha": math.sqrt(float(cfg.get("N", 1.0)))}, dim, leakage_tol=tol)
    elif state == "smsv":
        st = make_state("smsv", {"N": float(cfg.get("N", 1.0))}, dim, leakage_tol=tol)
    else:
        if cfg.get("delta") is None:
            raise ConfigError("delta", "required for the gkp state")
        st = make_state("gkp_delta", {"delta": float(cfg["delta"])}, dim, leakage_tol=tol)
    return st


def _point(cfg, sigma: float, with_cfi: bool) -> dict:
    dim = _dim(cfg)
    if sigma < 0:
        raise ConfigError("sigma", "must be non-negative")
    st = _input_state(cfg, dim)
    eta = _eta(cfg)
    rho = st.density().matrix
    if eta > 0:
        rho = loss_channel(eta, dim).apply(rho)
    ch = random_displacement_channel(sigma, cfg.get("axis", "p"), dim, _nodes(cfg))
    sx, sp = float(cfg.get("sigma_x", 0.0)), float(cfg.get("sigma_p", 0.0))
    if sx < 0 or sp < 0:
        raise ConfigError("sigma_x" if sx < 0 else "sigma_p", "must be non-negative")
    if sx or sp:
        ch = compose(ch, classical_noise_channel(np.diag([sx * sx, sp * sp]), dim))
    out, d = ch.apply(rho), ch.apply_derivative(rho)
    res = qfi_spectral(out, d)
    row = {"state": cfg.get("state", "vacuum"), "N": st.mean_number, "sigma": sigma, "eta": eta,
           "qfi": res.value, "cfi_number": "", "cfi_quadrature": "", "leakage": st.leakage, "dim": dim,
           "derivative_method": "analytic", "nodes": _nodes(cfg)}
    if with_cfi:
        row["cfi_number"] = cfi_povm(number_povm(dim), out, d)
        row["cfi_quadrature"] = cfi_homodyne(out, d, check=False)
    return row


def _write_text(text: str, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _header(cfg) -> str:
    shown = {k: v for k, v in sorted(cfg.items()) if k != "out"}
    return f"# qnm {__version__} config={json.dumps(shown, default=str, sort_keys=True)}\n"


# ---------------------------------------------------------------------------
# subcommands

def cmd_qfi(args) -> int:
    cfg = _load_config(args)
    row = _point(cfg, float(cfg.get("sigma", 0.1)), with_cfi=False)
    print(f"{row['qfi']:.10g}")
    return 0


def cmd_cfi(args) -> int:
    cfg = _load_config(args)
    row = _point(cfg, float(cfg.get("sigma", 0.1)), with_cfi=True)
    key = "cfi_number" if cfg.get("measurement", "number") == "number" else "cfi_quadrature"
    print(f"{row[key]:.10g}")
    return 0


def cmd_bounds(args) -> int:
    if args.action == "list":
        for name, params in bounds.list_bounds():
            print(f"{name}({', '.join(params)})")
        return 0
    if not args.name:
        raise ConfigError("name", "required for eval")
    if args.name not in bounds.CATALOG:
        raise ConfigError("name", f"unknown bound {args.name!r}")
    supplied = {"sigma": args.sigma, "eta": args.eta, "eta_a": args.eta_a, "sigma_x": args.sigma_x,
                "sigma_p": args.sigma_p, "N": _parse_N(args.N), "qfi": args.qfi}
    params = {}
    for p in bounds.parameters(args.name):
        if supplied.get(p) is None:
            raise ConfigError(p, f"required by {args.name}")
        params[p] = supplied[p]
    try:
        print(f"{bounds.eval_bound(args.name, **params):.10g}")
    except bounds.DomainError as exc:
        raise ConfigError(args.name, str(exc)) from None
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if cfg.get("sigma_grid") is not None:
        grid = _float_list(str(cfg["sigma_grid"]), "sigma_grid")
    elif cfg.get("sigma") is not None:
        grid = [float(cfg["sigma"])]
    else:
        grid = []
    grid = [s for s in grid if s > 0]
    if not grid:
        raise ConfigError("sigma_grid", "the sigma grid is empty (zero is excluded from sweeps)")
    cfg["sigma_grid"] = [float(s) for s in grid]
    rows = [_point(cfg, s, with_cfi=not cfg.get("no_cfi", False)) for s in grid]
    if cfg.get("format", "csv") == "json":
        text = json.dumps({"config": cfg, "rows": rows}, indent=2, default=str) + "\n"
    else:
        buf = io.StringIO()
        buf.write(_header(cfg))
        w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})
        text = buf.getvalue()
    _write_text(text, cfg.get("out"))
    return 0


def cmd_optimize(args) -> int:
    from .optimize import optimize_sparse

    cfg = _load_config(args)
    dim = _dim(cfg)
    sigma = float(cfg.get("sigma", 1e-3))
    m, K = int(cfg.get("m", 20)), int(cfg.get("K", 24))
    if m < 1:
        raise ConfigError("m", "must be positive")
    if K < 1 or m * (K - 1) >= dim:
        raise ConfigError("K", f"needs m*(K-1) < dim ({m}*({K}-1) vs {dim})")
    run = optimize_sparse(m, K, sigma, _eta(cfg), dim, particles=int(cfg.get("particles", 64)),
                          iters=int(cfg.get("iters", 100)), polish_steps=int(cfg.get("polish", 10)),
                          seed=int(cfg.get("seed", 0)), axes=cfg.get("axis", "p"))
    _write_text(run.to_json() + "\n", cfg.get("out"))
    return 0


def cmd_protocol(args) -> int:
    from .protocols import fig4_rows, write_csv

    cfg = _load_config(args)
    sigma = float(cfg.get("sigma", 0.05))
    if sigma <= 0:
        raise ConfigError("sigma", "must be positive")
    ratios = _float_list(str(cfg.get("mu_over_sigma", "0,0.5,1")), "mu_over_sigma")
    Ms = [int(v) for v in _float_list(str(cfg.get("M", "1000,10000")), "M")]
    if not ratios:
        raise ConfigError("mu_over_sigma", "empty")
    if not Ms or min(Ms) < 2 or any(M % 2 for M in Ms):
        raise ConfigError("M", "shot counts must be even and >= 2")
    schemes = ("nonadaptive", "adaptive") if cfg.get("scheme", "both") == "both" else (cfg["scheme"],)
    rows = fig4_rows(sigma, ratios, Ms, int(cfg.get("trials", 1000)), int(cfg.get("seed", 0)), schemes)
    buf = io.StringIO()
    write_csv(rows, buf, header=_header(cfg)[2:-1])
    _write_text(buf.getvalue(), cfg.get("out"))
    return 0


def cmd_waveform(args) -> int:
    from .waveform import load_model_csv, qfi_psd, qfim_psd_params, write_qfim_json

    cfg = _load_config(args)
    if not cfg.get("model"):
        raise ConfigError("model", "a CSV model file is required")
    try:
        model = load_model_csv(cfg["model"])
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from None
    theta = _float_list(str(cfg.get("theta", "1")), "theta")
    S = model.s_yy(theta)
    eta = _eta(cfg)
    strategy = cfg.get("strategy", "counting")
    per_bin = []
    for g, s in zip(model.gain, S):
        sig = math.sqrt(g * s)
        if strategy == "counting":
            q = bounds.qfi_vacuum(sig)
        elif strategy == "quadrature":
            q = bounds.cfi_quadrature_vacuum(sig)
        elif strategy == "optimal":
            q = bounds.ecqfi_lossy(sig, eta)
        else:
            raise ConfigError("strategy", f"unknown strategy {strategy!r}")
        per_bin.append(qfi_psd(g, s, qfi_sigma=q) if sig > 0 else 0.0)
    Q = qfim_psd_params(model, theta, np.array(per_bin))
    out = cfg.get("out")
    meta = {k: v for k, v in cfg.items() if k != "out"}
    if out:
        write_qfim_json(Q, out, meta)
    else:
        print(json.dumps({"qfim": Q.tolist(), "meta": meta}, indent=2, default=str))
    return 0


def cmd_selftest(args) -> int:
    from .acceptance import run_all

    results = run_all(include_slow=args.slow, stream=sys.stdout)
    failed = [r for r in results if not r.passed]
    for r in failed:
        for d in r.details:
            print(f"    {r.key}: {d}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------

def _physics_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with default values; flags override it")
    p.add_argument("--state", choices=STATES)
    p.add_argument("--N", type=float, help="mean photon number (Fock index for --state fock)")
    p.add_argument("--delta", type=float, help="GKP envelope width")
    p.add_argument("--sigma", type=float)
    p.add_argument("--eta", type=float, help="loss before the signal")
    p.add_argument("--sigma-x", dest="sigma_x", type=float)
    p.add_argument("--sigma-p", dest="sigma_p", type=float)
    p.add_argument("--axis", choices=("p", "x", "both"))
    p.add_argument("--dim", type=int)
    p.add_argument("--nodes", type=int, help="Gauss-Hermite nodes for the displacement channel")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qnm", description="Fisher information for random displacement sensing")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qfi", help="QFI of one state/channel point")
    _physics_flags(p)
    p.set_defaults(func=cmd_qfi)

    p = sub.add_parser("cfi", help="CFI of photon counting or homodyne")
    _physics_flags(p)
    p.add_argument("--measurement", choices=("number", "homodyne"))
    p.set_defaults(func=cmd_cfi)

    p = sub.add_parser("bounds", help="closed-form limits")
    p.add_argument("action", choices=("list", "eval"))
    p.add_argument("--name")
    p.add_argument("--sigma", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--eta-a", dest="eta_a", type=float)
    p.add_argument("--sigma-x", dest="sigma_x", type=float)
    p.add_argument("--sigma-p", dest="sigma_p", type=float)
    p.add_argument("--N", help="number or 'inf'")
    p.add_argument("--qfi", type=float)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="table of QFI/CFI over a sigma grid")
    _physics_flags(p)
    p.add_argument("--sigma-grid", dest="sigma_grid", help="a,b,c | start:stop:n | log:start:stop:n")
    p.add_argument("--no-cfi", dest="no_cfi", action="store_true", default=None)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="sparse Fock superposition search (JSON)")
    p.add_argument("--config")
    p.add_argument("--m", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--axis", choices=("p", "both"))
    p.add_argument("--particles", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--polish", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("protocol", help="Monte Carlo mean/variance estimation (CSV)")
    p.add_argument("--config")
    p.add_argument("--sigma", type=float)
    p.add_argument("--mu-over-sigma", dest="mu_over_sigma")
    p.add_argument("--M", help="total shot counts, comma list")
    p.add_argument("--trials", type=int)
    p.add_argument("--scheme", choices=("nonadaptive", "adaptive", "both"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("waveform", help="Fisher matrix for spectral-model parameters (JSON)")
    p.add_argument("--config")
    p.add_argument("--model", help="CSV with Omega, G and Phi or S_yy")
    p.add_argument("--theta", help="model parameters, comma list")
    p.add_argument("--strategy", choices=("counting", "quadrature", "optimal"))
    p.add_argument("--eta", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_waveform)

    p = sub.add_parser("selftest", help="run the built-in checks")
    p.add_argument("--slow", action="store_true", help="include the long-running checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"qnm: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
