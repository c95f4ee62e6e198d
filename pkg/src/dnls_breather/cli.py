"""Command-line front end.

Each subcommand reads an optional JSON config file (``--config``); explicit
flags override its values.  Exit codes: 0 ok, 1 numerical failure, 2 usage
or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .breather import solve_breather
from .errors import ConfigError, NumericalFailure
from .integrate import integrate, lattice_rhs
from .lattice import LatticeConfig
from .linops import build_M, build_pack, zero_modes
from .modulation import (ModulationFrame, decompose_fixed_frame, default_stopping_time, drift_rate,
                         iterate_epochs, _Branch)
from .spectral import damping_rates, gap_analysis, overshoot, spectrum

LATTICE_KEYS = ("n", "eps", "gamma", "newton_tol", "ode_rtol", "ode_atol")

DEFAULTS = {
    "breather": {"n": 3, "eps": 0.1, "phi0": 0.0, "out": None},
    "spectrum": {"n": 3, "eps": 0.1, "gamma": 0.0, "phi0": 0.0, "sweep_eps": None, "out": None,
                 "summary": None},
    "evolve": {"n": 3, "eps": 0.1, "gamma": 0.1, "phi0": 0.0, "t_end": 100.0, "sample_dt": 0.5,
               "perturb": 0.0, "seed": 0, "frame": "rotating", "decompose": False, "out": None},
    "epochs": {"n": 3, "eps": 0.1, "gamma": 0.1, "phi0": 0.0, "k": 5, "T": None, "sample_dt": None,
               "enforce_window": False, "out": None, "spiral": None},
    "sweep": {"n": 3, "eps_list": "0.02:0.16:8", "gamma_list": "0.1", "phi0": 0.0, "out_dir": "sweep_out",
              "workers": 4},
}
for _d in DEFAULTS.values():
    _d.update({"newton_tol": 1e-12, "ode_rtol": 1e-11, "ode_atol": 1e-13})
DEFAULTS["breather"]["gamma"] = 0.0


class UsageError(Exception):
    pass


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


def _parse_range(text: str) -> np.ndarray:
    """'a:b:k' -> k points from a to b; otherwise a comma list."""
    try:
        if ":" in text:
            a, b, k = text.split(":")
            return np.linspace(float(a), float(b), int(k))
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"cannot parse range '{text}': {exc}") from exc


def _open_out(path):
    if path is None:
        return sys.stdout, False
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8"), True


def write_csv(path, header, rows, params):
    fh, close = _open_out(path)
    try:
        fh.write("# config: " + json.dumps(params, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    finally:
        if close:
            fh.close()


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _lattice(params) -> LatticeConfig:
    return LatticeConfig(**{k: params[k] for k in LATTICE_KEYS})


# -- commands -------------------------------------------------------------------------------


def cmd_breather(params) -> int:
    cfg = _lattice(params)
    prof = solve_breather(cfg, params["phi0"])
    write_json(params["out"], {
        "n": cfg.n, "eps": cfg.eps, "phi0": prof.phi0, "p": prof.p.tolist(),
        "residual": prof.residual, "dp_dphi": prof.dp_dphi.tolist(),
    })
    return 0


def _spectrum_point(cfg, phi0):
    prof = solve_breather(cfg.replace(gamma=0.0), phi0)
    ge = cfg.gamma * cfg.eps
    M_rep = spectrum(build_M(prof, cfg), zero_modes=zero_modes(prof, cfg))
    rep = damping_rates(prof, cfg) if cfg.gamma > 0 else M_rep
    damp = np.full(rep.eigenvalues.size, np.nan)
    if ge > 0:
        mask = rep.nonzero_mask
        damp[mask] = -rep.eigenvalues.real[mask] / ge
    C = np.nan
    if cfg.gamma > 0:
        pack = build_pack(cfg, phi0, profile=prof)
        C = max(overshoot(pack, rep.kappa_estimate), 0.0) / cfg.gamma
    rows = [(lam.real, lam.imag, d) for lam, d in zip(rep.eigenvalues, damp)]
    summary = {"eps": cfg.eps, "min_gap_over_eps": _num(M_rep.intra_cluster_gap() / abs(cfg.eps)) if cfg.eps else None,
               "kappa_estimate": _num(rep.kappa_estimate), "C_estimate": _num(C)}
    return rows, summary


def cmd_spectrum(params) -> int:
    cfg = _lattice(params)
    header = ["eigenvalue_re", "eigenvalue_im", "damping_over_gamma_eps"]
    if params["sweep_eps"]:
        eps_list = _parse_range(params["sweep_eps"])
        rows, summaries, reports = [], [], []
        for e in eps_list:
            c = cfg.replace(eps=float(e))
            r, s = _spectrum_point(c, params["phi0"])
            rows += [(float(e),) + row for row in r]
            summaries.append(s)
            prof = solve_breather(c.replace(gamma=0.0), params["phi0"])
            reports.append(spectrum(build_M(prof, c), zero_modes=zero_modes(prof, c)))
        fit = gap_analysis(reports, eps_list)
        summary = {"points": summaries, "gap_fit": {"C_lower": _num(fit["C_lower"]), "slope": _num(fit["slope"])}}
        header = ["eps"] + header
    else:
        rows, summary = _spectrum_point(cfg, params["phi0"])
    write_csv(params["out"], header, rows, params)
    text = json.dumps(summary, indent=2, sort_keys=True)
    if params["summary"]:
        with open(params["summary"], "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=sys.stderr)
    return 0


def cmd_evolve(params) -> int:
    cfg = _lattice(params)
    if params["frame"] not in ("rotating", "lab"):
        raise UsageError("--frame must be 'rotating' or 'lab'")
    phi0 = params["phi0"]
    prof = solve_breather(cfg.replace(gamma=0.0), phi0)
    w0 = prof.p.astype(complex)
    if params["perturb"]:
        rng = np.random.default_rng(params["seed"])
        w0 = w0 + params["perturb"] * (rng.standard_normal(cfg.n) + 1j * rng.standard_normal(cfg.n))
    shift = phi0 if params["frame"] == "rotating" else 0.0
    traj = integrate(lattice_rhs(cfg, shift), w0, 0.0, params["t_end"], cfg, params["sample_dt"])
    header = ["t"] + [f"{c}_w{j + 1}" for j in range(cfg.n) for c in ("re", "im")] + ["H", "norm_sq"]
    rows = []
    extra = None
    if params["decompose"]:
        header += ["phi", "theta", "zeta_norm", "delta", "s"]
        branch = _Branch(cfg)
        extra, prev, int_phi = [], None, 0.0
        for t, w in zip(traj.times, traj.states):
            fr = decompose_fixed_frame(w, t, phi0, prev, cfg, frame_shift=shift, branch=branch)
            if prev is not None:
                int_phi += 0.5 * (fr.phi + prev.phi) * (t - prev.t)
            theta0 = extra[0][1] if extra else fr.theta
            s = t * fr.phi + fr.theta - theta0 - int_phi
            extra.append((fr.phi, fr.theta, fr.zeta_norm, fr.delta, s))
            prev = fr
    for i, (t, w) in enumerate(zip(traj.times, traj.states)):
        row = [t] + [v for x in w for v in (x.real, x.imag)] + [traj.hamiltonians[i], traj.norms_sq[i]]
        if extra is not None:
            row += list(extra[i])
        rows.append(row)
    write_csv(params["out"], header, rows, params)
    return 0


def cmd_epochs(params) -> int:
    cfg = _lattice(params)
    k = params["k"]
    if int(k) != k or k < 1:
        raise UsageError("--k must be a positive integer")
    phi0 = params["phi0"]
    T = params["T"] if params["T"] is not None else default_stopping_time(cfg)
    frame = ModulationFrame(t=0.0, phi=phi0, theta=0.0, zeta=np.zeros(2 * cfg.n), base_phi=phi0)
    res = iterate_epochs(frame, int(k), cfg, T=T, enforce_window=params["enforce_window"],
                         sample_dt=params["sample_dt"])
    rows = []
    for i, rep in enumerate(res.reports, start=1):
        rows.append((i, rep.T, res.phis[i], res.phis[i] - res.phis[0], rep.zeta_norm_max, rep.zeta_norm_end,
                     rep.zeta_norm_after_reproj, rep.bounds_ok["a"], rep.bounds_ok["b"], rep.bounds_ok["c"]))
    header = ["k", "T", "phi_k", "phi_shift", "zeta_norm_max", "zeta_norm_end", "zeta_norm_reproj",
              "pass_a", "pass_b", "pass_c"]
    write_csv(params["out"], header, rows, params)
    if params["spiral"]:
        sp = res.spiral
        write_csv(params["spiral"], ["t", "winding_phase", "phi"],
                  zip(sp["t"], sp["winding_phase"], sp["phi"]), params)
    if res.window_stopped:
        print(f"stopped after {len(res.reports)} epochs: drift window gamma*eps^n reached", file=sys.stderr)
    print(f"predicted drift per epoch {drift_rate(cfg) * T:.6e}", file=sys.stderr)
    return 0


def _sweep_point(i, eps, gamma, params):
    cfg = _lattice({**params, "eps": float(eps), "gamma": float(gamma)})
    prof = solve_breather(cfg.replace(gamma=0.0), params["phi0"])
    _, summary = _spectrum_point(cfg, params["phi0"])
    out = {"n": cfg.n, "eps": cfg.eps, "gamma": cfg.gamma, "phi0": params["phi0"], "p": prof.p.tolist(),
           "residual": prof.residual, **{k: summary[k] for k in ("min_gap_over_eps", "kappa_estimate", "C_estimate")}}
    path = os.path.join(params["out_dir"], f"point_{i:03d}.json")
    write_json(path, out)
    return i, cfg.eps, cfg.gamma, path


def cmd_sweep(params) -> int:
    eps_list = _parse_range(params["eps_list"])
    gam_list = _parse_range(str(params["gamma_list"]))
    for e in eps_list:  # validate all points before fanning out
        for g in gam_list:
            _lattice({**params, "eps": float(e), "gamma": float(g)})
    os.makedirs(params["out_dir"], exist_ok=True)
    pts = [(e, g) for e in eps_list for g in gam_list]
    with ThreadPoolExecutor(max_workers=max(1, int(params["workers"]))) as ex:
        futs = [ex.submit(_sweep_point, i, e, g, params) for i, (e, g) in enumerate(pts)]
        done = [f.result() for f in futs]
    write_csv(os.path.join(params["out_dir"], "index.csv"), ["index", "eps", "gamma", "file"],
              [(i, e, g, os.path.basename(p)) for i, e, g, p in done], params)
    return 0


COMMANDS = {"breather": cmd_breather, "spectrum": cmd_spectrum, "evolve": cmd_evolve,
            "epochs": cmd_epochs, "sweep": cmd_sweep}


def _add_lattice(p, gamma=True):
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    if gamma:
        p.add_argument("--gamma", type=float)
    p.add_argument("--phi0", type=float)
    p.add_argument("--newton-tol", dest="newton_tol", type=float)
    p.add_argument("--ode-rtol", dest="ode_rtol", type=float)
    p.add_argument("--ode-atol", dest="ode_atol", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnls-breather", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("breather", help="compute a breather profile", argument_default=S)
    _add_lattice(p, gamma=False)
    p.add_argument("--out")

    p = sub.add_parser("spectrum", help="spectrum of the linearization", argument_default=S)
    _add_lattice(p)
    p.add_argument("--sweep-eps", dest="sweep_eps", help="start:stop:count or comma list")
    p.add_argument("--out")
    p.add_argument("--summary")

    p = sub.add_parser("evolve", help="integrate the damped lattice", argument_default=S)
    _add_lattice(p)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--sample-dt", dest="sample_dt", type=float)
    p.add_argument("--perturb", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--frame", choices=["rotating", "lab"])
    p.add_argument("--decompose", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("epochs", help="chained epochs with re-orthogonalization", argument_default=S)
    _add_lattice(p)
    p.add_argument("--k", type=int)
    p.add_argument("--T", dest="T", type=float)
    p.add_argument("--sample-dt", dest="sample_dt", type=float)
    p.add_argument("--enforce-window", dest="enforce_window", action="store_true")
    p.add_argument("--out")
    p.add_argument("--spiral")

    p = sub.add_parser("sweep", help="parallel breather/spectrum sweep", argument_default=S)
    _add_lattice(p, gamma=False)
    p.add_argument("--eps-list", dest="eps_list")
    p.add_argument("--gamma-list", dest="gamma_list")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--workers", type=int)

    for sp in sub.choices.values():
        sp.add_argument("--config", help="JSON file with parameter values")
    return ap


def resolve_params(command: str, flags: dict) -> dict:
    params = dict(DEFAULTS[command])
    cfg_path = flags.pop("config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {cfg_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(data) - set(params))
        if unknown:
            raise UsageError(f"unknown config keys for '{command}': {', '.join(unknown)}")
        params.update(data)
    params.update(flags)
    return params


def main(argv=None) -> int:
    ap = build_parser()
    args = vars(ap.parse_args(argv))
    cmd = args.pop("command")
    try:
        params = resolve_params(cmd, args)
        return COMMANDS[cmd](params)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
