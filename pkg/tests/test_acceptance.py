"""One test per acceptance criterion, at the stated tolerances.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""
import math

import numpy as np
import pytest

from dnls_breather.breather import solve_breather
from dnls_breather.integrate import integrate, lattice_rhs, monitor
from dnls_breather.lattice import LatticeConfig
from dnls_breather.linops import build_M, build_pack, hat, perturbation_split, zero_modes
from dnls_breather.modulation import (ModulationFrame, decompose_fixed_frame, default_stopping_time, drift_rate,
                                      iterate_epochs, predicted_winding_time, reconstruct, reorthogonalize,
                                      run_epoch, winding_phase, winding_times)
from dnls_breather.spectral import damping_rates, gap_analysis, overshoot, semigroup_norms, spectrum

EPS_SWEEP = np.array([0.02, 0.04, 0.08, 0.16])


def slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def test_c1_breather_asymptotics(record):
    P = np.array([solve_breather(LatticeConfig(3, e), 0.0).p for e in EPS_SWEEP])
    ratio = np.abs(P[:, 1] + EPS_SWEEP) / EPS_SWEEP**2
    s2, s3 = slope(EPS_SWEEP, np.abs(P[:, 1])), slope(EPS_SWEEP, np.abs(P[:, 2]))
    ok = bool(np.all(ratio <= 0.5)) and abs(s2 - 1) <= 0.05 and abs(s3 - 2) <= 0.05
    record("C1", ok, f"max |p2+eps|/eps^2 = {ratio.max():.3f} (<= 0.5); slopes p2 {s2:.3f} (1), p3 {s3:.3f} (2)")
    assert ok


def _box():
    for n in range(2, 7):
        for eps in (-0.16, -0.08, 0.02, 0.04, 0.08, 0.16):
            for phi in (-0.25, 0.0, 0.25):
                # the single-site branch folds near eps ~ (1 + phi0)/5.3; stay clear of it
                if eps < (1 + phi) / 5.5:
                    yield n, eps, phi


def test_c2_zero_eigenspace(record):
    worst1 = worst2 = 0.0
    count = 0
    for n, eps, phi in _box():
        cfg = LatticeConfig(n, eps)
        prof = solve_breather(cfg, phi)
        M = build_M(prof, cfg)
        v1, v2, _, _ = zero_modes(prof, cfg)
        worst1 = max(worst1, np.linalg.norm(M @ v1))
        worst2 = max(worst2, np.linalg.norm(M @ v2 - v1))
        count += 1
    ok = worst1 <= 1e-11 and worst2 <= 1e-11
    record("C2", ok, f"{count} box points: max ||M v1|| = {worst1:.2e}, max ||M v2 - v1|| = {worst2:.2e}")
    assert ok


def test_c3_spectral_structure(record):
    details, ok = [], True
    for n in (3, 4, 5, 6):
        reps = []
        for e in EPS_SWEEP:
            cfg = LatticeConfig(n, e)
            prof = solve_breather(cfg)
            reps.append(spectrum(build_M(prof, cfg), zero_modes=zero_modes(prof, cfg)))
        re_max = max(r.max_abs_real_part_undamped for r in reps)
        simple = all(r.min_gap_nonzero > 0 for r in reps)
        fit = gap_analysis(reps, EPS_SWEEP)
        good = re_max <= 1e-9 and simple and fit["C_lower"] > 0 and abs(fit["slope"] - 1) <= 0.1
        ok &= good
        details.append(f"n={n}: max|Re|={re_max:.1e}, gap/eps>={fit['C_lower']:.3f}, slope={fit['slope']:.3f}")
    record("C3", ok, "; ".join(details))
    assert ok


def test_c4_e12_cancellation(record):
    worst = 0.0
    for n in (3, 4, 5):
        for phi in (0.0, 0.05):
            cfg = LatticeConfig(n, 0.1)
            M0, E1, E2, E11, E12 = perturbation_split(solve_breather(cfg, phi), cfg)
            _, V = np.linalg.eig(hat(M0) + E11)
            V = V / np.linalg.norm(V, axis=0)
            worst = max(worst, max(abs(np.vdot(v, E12 @ v)) for v in V.T))
    slopes = []
    for n in (3, 4):
        norms = [np.linalg.norm(perturbation_split(solve_breather(LatticeConfig(n, e)), LatticeConfig(n, e))[2], 2)
                 for e in EPS_SWEEP]
        slopes.append(slope(EPS_SWEEP, norms))
    ok = worst <= 1e-11 and min(slopes) >= 1.9
    record("C4", ok, f"max |<v, E12 v>| = {worst:.2e}; ||E2|| slopes {', '.join(f'{s:.3f}' for s in slopes)} (>= 1.9)")
    assert ok


def test_c5_uniform_damping(record):
    n, eps = 3, 0.1
    gammas = (0.05, 0.1, 0.2)
    prof = solve_breather(LatticeConfig(n, eps))
    rates = {}
    for g in gammas:
        cfg = LatticeConfig(n, eps, g)
        rates[g] = np.sort(damping_rates(prof, cfg).damping_rates) / (g * eps)
    R = np.array([rates[g] for g in gammas])
    spread = float(np.max(np.ptp(R, axis=0) / R.min(axis=0)))
    positive = bool(np.all(R > 0))
    # envelope fitted on the outer gammas, checked on all three on a finer time grid
    kap_hat = min(rates[0.05].min(), rates[0.2].min())
    C_hat = max(overshoot(build_pack(LatticeConfig(n, eps, g), profile=prof), kap_hat, dt=0.02) / g
                for g in (0.05, 0.2))
    env_ok, worst = True, {}
    for g in gammas:
        pk = build_pack(LatticeConfig(n, eps, g), profile=prof)
        tmax = 10 / (g * eps)
        ts, norms = semigroup_norms(pk, tmax, int(np.ceil(tmax / 0.02)) + 1)
        env = (1 + C_hat * g) * np.exp(-kap_hat * g * eps * ts)
        worst[g] = float(np.max(norms / env))
        env_ok &= bool(np.all(norms <= env))
    ok = positive and spread <= 0.10 and env_ok
    record("C5", ok, f"rates/(gamma eps) spread {spread:.3%} (<= 10%), positive={positive}; "
                     f"kappa^={kap_hat:.4f}, C^={C_hat:.3f} (fit on gamma 0.05, 0.2); max norm/envelope "
                     + ", ".join(f"g={g}: {r:.4f}" for g, r in worst.items()))
    assert ok


def test_c6_norm_identity_and_energy(record):
    rng = np.random.default_rng(7)
    cases = [
        (LatticeConfig(3, 0.1, 0.1), None, 200.0),
        (LatticeConfig(4, 0.12, 0.3), 0.02, 200.0),
        (LatticeConfig(2, 0.16, 0.5), 0.05, 200.0),
        (LatticeConfig(5, 0.05, 0.2), 0.01, 200.0),
        (LatticeConfig(3, 0.1, 0.0), 0.05, 200.0),
    ]
    worst = 0.0
    for cfg, amp, t1 in cases:
        w0 = solve_breather(cfg).p.astype(complex)
        if amp:
            w0 = w0 + amp * (rng.normal(size=cfg.n) + 1j * rng.normal(size=cfg.n))
        tr = integrate(lattice_rhs(cfg), w0, 0.0, t1, cfg, 0.01)
        worst = max(worst, monitor(tr, cfg)["norm_identity_residual"])
    cfg = LatticeConfig(3, 0.1, 0.0)
    w0 = solve_breather(cfg).p + 0.1 * (rng.normal(size=3) + 1j * rng.normal(size=3))
    tr = integrate(lattice_rhs(cfg), w0, 0.0, 1000.0, cfg, 1.0)
    dH = monitor(tr, cfg)["H_drift"]
    ok = worst <= 1e-9 and dH <= 1e-9
    record("C6", ok, f"max norm-identity residual {worst:.2e} over {len(cases)} runs; |dH| over t=1000: {dH:.2e}")
    assert ok


@pytest.fixture(scope="module")
def n3_setup():
    cfg = LatticeConfig(3, 0.1, 0.1)
    return cfg, default_stopping_time(cfg)


def test_c7_metastable_tracking(record, n3_setup):
    cfg, T = n3_setup
    scale = cfg.gamma * cfg.eps**3
    rep, nxt = run_epoch(ModulationFrame(0.0, 0.0, 0.0, np.zeros(6), 0.0), cfg, T=T)
    a = rep.zeta_norm_max <= 2 * scale
    b = nxt.zeta_norm <= scale
    c_err = abs(rep.phi_shift_measured + 2 * cfg.gamma * cfg.eps**5 * T)
    c_tol = 2 * cfg.gamma * cfg.eps**4.5 * T
    ok = a and b and c_err <= c_tol
    record("C7", ok, f"T={T:.1f}: sup||zeta||/(g e^3)={rep.zeta_norm_max / scale:.3f} (<= 2), "
                     f"||zeta_hat||/(g e^3)={nxt.zeta_norm / scale:.3f} (<= 1), "
                     f"|delta+2g e^5 T|={c_err:.3e} vs {c_tol:.3e}; "
                     f"delta/(-2g e^5 T)={rep.phi_shift_measured / (drift_rate(cfg) * T):.3f}")
    assert ok


def test_c8_iterated_epochs(record, n3_setup):
    cfg, T = n3_setup
    # the validity window gamma*eps^n is already exceeded by one epoch here, so it is not enforced
    res = iterate_epochs(ModulationFrame(0.0, 0.0, 0.0, np.zeros(6), 0.0), 5, cfg, T=T, enforce_window=False)
    k = np.arange(1, 6)
    pred = drift_rate(cfg) * k * T
    rel = np.abs(res.phis[1:] - res.phis[0] - pred) / np.abs(pred)
    ceilings = all(all(r.bounds_ok.values()) for r in res.reports)
    ok = bool(np.all(rel <= 2 * math.sqrt(cfg.eps))) and ceilings
    flags = "".join("".join("1" if r.bounds_ok[x] else "0" for x in "abc") + " " for r in res.reports)
    record("C8", ok, f"K=5: max rel drift error {rel.max():.3f} (<= {2 * math.sqrt(cfg.eps):.3f}); "
                     f"per-epoch a/b/c flags: {flags.strip()}")
    assert ok


def test_c9_winding_times(record):
    cfg = LatticeConfig(2, 0.1, 0.1)
    tm_pred = np.array([predicted_winding_time(cfg, m) for m in (1, 2, 3)])
    t_end = 1.25 * tm_pred[-1]
    prof = solve_breather(cfg)
    tr = integrate(lattice_rhs(cfg, 0.0), prof.p, 0.0, t_end, cfg, 0.5)
    # phase of t*phi + theta from the decomposition at the fixed base phi0 = 0
    frames, prev = [], None
    for t, w in zip(tr.times, tr.states):
        prev = decompose_fixed_frame(w, t, 0.0, prev, cfg)
        frames.append(prev)
    ph = np.array([f.t * f.phi + f.theta for f in frames])
    ph -= ph[0]
    tm = winding_times(tr.times, ph, 3)
    tm_arg = winding_times(tr.times, winding_phase(tr), 3)
    ratio = tm / tm_pred
    ok = bool(np.all(np.abs(ratio - 1) <= 0.2))
    record("C9", ok, f"t_m measured {np.round(tm, 1).tolist()} vs predicted {np.round(tm_pred, 1).tolist()} "
                     f"(ratios {np.round(ratio, 3).tolist()}); arg(w1) gives {np.round(tm_arg, 1).tolist()}")
    assert ok


def test_c10_reorthogonalization(record):
    cfg = LatticeConfig(3, 0.1, 0.1)
    scale = cfg.gamma * cfg.eps**3
    pk = build_pack(cfg)
    rng = np.random.default_rng(11)
    rt = 0.0
    for t, phi, theta in ((0.0, 0.0, 0.0), (10.0, 0.002, 0.5), (100.0, -0.001, 3.0)):
        z = pk.P @ rng.normal(size=6)
        fr = ModulationFrame(t, phi, theta, scale * z / np.linalg.norm(z), 0.0)
        back = decompose_fixed_frame(reconstruct(fr, cfg), t, 0.0, fr, cfg)
        rt = max(rt, abs(back.phi - phi), abs(back.theta - theta), float(np.linalg.norm(back.zeta - fr.zeta)))
    z = pk.P @ rng.normal(size=6)
    zeta = scale * z / np.linalg.norm(z)
    deltas = 1e-4 * 2.0 ** np.arange(5)
    Cs = []
    for d in deltas:
        W = reconstruct(ModulationFrame(0.0, d, 0.0, zeta, 0.0), cfg)
        hat_fr = reorthogonalize(W, 0.0, d, 0.0, cfg)
        Cs.append(abs(hat_fr.zeta_norm / scale - 1) / (d * scale))
    Cs = np.array(Cs)
    stable = Cs.max() / Cs.min() <= 1.5
    ok = rt <= 1e-11 and stable
    record("C10", ok, f"round trip max err {rt:.1e}; fitted C over delta sweep {Cs.min():.4g}..{Cs.max():.4g} "
                      f"(max/min {Cs.max() / Cs.min():.3f} <= 1.5)")
    assert ok
