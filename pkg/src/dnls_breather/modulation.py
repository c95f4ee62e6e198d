"""Decomposition of trajectories near the breather cylinder and the epoch driver.

A lab-frame state is written W = exp(i(t*phi + theta)) (p(phi) + z) with the
real form zeta of z constrained by <n1, zeta> = <n2, zeta> = 0, where n1, n2
are the adjoint zero modes at a base frequency.  Integration runs in a frame
rotating at ``frame_shift``; a state W_rot in that frame corresponds to
W = exp(i*frame_shift*t) W_rot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .breather import BreatherProfile, solve_breather
from .errors import CeilingExceeded, NonConvergence, OutOfNeighborhood
from .integrate import integrate, lattice_rhs
from .lattice import LatticeConfig, to_real, to_complex
from .linops import build_M, build_pack, zero_modes
from .spectral import estimate_constants

DECOMP_TOL = 1e-13
MAX_NEWTON = 40


@dataclass(frozen=True, eq=False)
class ModulationFrame:
    t: float
    phi: float
    theta: float
    zeta: np.ndarray
    base_phi: float
    s: float = 0.0

    @property
    def delta(self) -> float:
        return self.phi - self.base_phi

    @property
    def zeta_norm(self) -> float:
        return float(np.linalg.norm(self.zeta))


class _Branch:
    """Breather profiles and adjoint modes with warm-started Newton solves."""

    def __init__(self, cfg: LatticeConfig):
        self.cfg = cfg.replace(gamma=0.0)
        self._last: BreatherProfile | None = None
        self._modes: dict[float, tuple] = {}

    def profile(self, phi: float) -> BreatherProfile:
        last = self._last
        if last is not None and last.phi0 == phi:
            return last
        guess = None if last is None else last.p + (phi - last.phi0) * last.dp_dphi
        prof = solve_breather(self.cfg, phi, guess=guess)
        self._last = prof
        return prof

    def modes(self, phi: float):
        m = self._modes.get(phi)
        if m is None:
            prof = solve_breather(self.cfg, phi)
            m = zero_modes(prof, self.cfg)
            self._modes = {phi: m}
        return m


def _phase(t, phi, theta, frame_shift):
    return t * (phi - frame_shift) + theta


def reconstruct(frame: ModulationFrame, cfg: LatticeConfig, frame_shift: float = 0.0,
                branch: _Branch | None = None) -> np.ndarray:
    branch = branch or _Branch(cfg)
    p = branch.profile(frame.phi).p
    return np.exp(1j * _phase(frame.t, frame.phi, frame.theta, frame_shift)) * (p + to_complex(frame.zeta))


def _cylinder_distance(W, p) -> float:
    """min over theta of ||exp(-i theta) W - p||."""
    d2 = np.vdot(W, W).real + p @ p - 2 * abs(np.vdot(p, W))
    return math.sqrt(max(d2, 0.0))


def _newton_frame(W, t, phi, theta, frame_shift, branch, modes_at, tol, max_iter=MAX_NEWTON):
    """Solve <n1, zeta> = <n2, zeta> = 0 for (phi, theta).

    ``modes_at(phi)`` gives the adjoint pair used in the constraint.  The
    Jacobian neglects the phi-dependence of the adjoint pair, which only
    enters at order ||zeta||, so the iteration still converges quickly.
    """
    res_hist = []
    for it in range(max_iter):
        prof = branch.profile(phi)
        n1, n2 = modes_at(phi)
        w = np.exp(-1j * _phase(t, phi, theta, frame_shift)) * W
        z = w - prof.p
        zeta = to_real(z)
        r = np.array([n1 @ zeta, n2 @ zeta])
        res_hist.append(float(np.max(np.abs(r))))
        if res_hist[-1] <= tol:
            return phi, theta, prof, zeta, r
        d_theta = to_real(-1j * w)
        d_phi = to_real(-1j * t * w) - np.concatenate([prof.dp_dphi, np.zeros_like(prof.p)])
        J = np.array([[n1 @ d_phi, n1 @ d_theta], [n2 @ d_phi, n2 @ d_theta]])
        dphi, dtheta = np.linalg.solve(J, -r)
        phi, theta = phi + dphi, theta + dtheta
        if it > 4 and abs(dphi) + abs(dtheta) < 1e-15 * (1 + abs(phi) + abs(theta)) and res_hist[-1] <= 100 * tol:
            return phi, theta, prof, zeta, r
    raise NonConvergence(f"frame Newton failed at t={t}: residuals {res_hist[-3:]}", residuals=res_hist)


def decompose_fixed_frame(W, t: float, base_phi: float, guess: ModulationFrame | None, cfg: LatticeConfig,
                          frame_shift: float = 0.0, branch: _Branch | None = None,
                          tol: float = DECOMP_TOL) -> ModulationFrame:
    """Coordinates (phi, theta, zeta) of W with zeta normal to the cylinder at ``base_phi``."""
    branch = branch or _Branch(cfg)
    W = np.asarray(W, dtype=complex)
    if guess is None:
        phi0 = base_phi
        theta0 = float(np.angle(np.vdot(branch.profile(base_phi).p, W))) - _phase(t, base_phi, 0.0, frame_shift)
        s = 0.0
    else:
        phi0, theta0, s = guess.phi, guess.theta, guess.s
    if _cylinder_distance(W, branch.profile(phi0).p) > 0.1:
        raise OutOfNeighborhood(f"state is farther than 0.1 from the breather cylinder at t={t}")
    base_modes = branch.modes(base_phi)
    phi, theta, _, zeta, _ = _newton_frame(W, t, phi0, theta0, frame_shift, branch,
                                           lambda _phi: base_modes[2:], tol)
    return ModulationFrame(t=float(t), phi=float(phi), theta=float(theta), zeta=zeta,
                           base_phi=float(base_phi), s=s)


def reorthogonalize(W, t: float, guess_phi: float, guess_theta: float, cfg: LatticeConfig,
                    frame_shift: float = 0.0, branch: _Branch | None = None,
                    tol: float = DECOMP_TOL) -> ModulationFrame:
    """New base point (phi_hat, theta_hat) whose own adjoint modes annihilate zeta_hat."""
    branch = branch or _Branch(cfg)
    W = np.asarray(W, dtype=complex)
    w = np.exp(-1j * _phase(t, guess_phi, guess_theta, frame_shift)) * W
    if _cylinder_distance(w, branch.profile(guess_phi).p) > 0.05:
        raise OutOfNeighborhood(f"candidate zeta is outside the 0.05 neighborhood at t={t}")

    def modes_at(phi):
        return zero_modes(branch.profile(phi), branch.cfg)[2:]

    phi, theta, _, zeta, _ = _newton_frame(W, t, guess_phi, guess_theta, frame_shift, branch, modes_at, tol)
    return ModulationFrame(t=float(t), phi=float(phi), theta=float(theta), zeta=zeta, base_phi=float(phi))


def drift_rate(cfg: LatticeConfig) -> float:
    """Leading-order frequency drift, -2 gamma eps^(2n-1)."""
    return -2.0 * cfg.gamma * cfg.eps ** (2 * cfg.n - 1)


def exact_drift_rate(cfg: LatticeConfig, phi: float = 0.0) -> float:
    """Drift -gamma*eps*c*p_n^2 at finite eps, from projecting the damping on n2."""
    prof = solve_breather(cfg.replace(gamma=0.0), phi)
    n2 = zero_modes(prof, cfg)[3]
    return -cfg.gamma * cfg.eps * n2[cfg.n - 1] * prof.p[-1]


def stopping_time(cfg: LatticeConfig, kappa_n: float, C_n: float, C_floor: float = 0.125) -> float:
    """Arrival time T = 8 C / (kappa eps).

    C is floored at ``C_floor`` so that T stays of order 1/eps when the fitted
    overshoot vanishes (as it does for n = 2).
    """
    C = max(C_n, C_floor)
    T = 8.0 * C / (kappa_n * abs(cfg.eps))
    ge = cfg.gamma * abs(cfg.eps)
    if ge > 0 and (1 + 1.5 * C * cfg.gamma) * math.exp(-kappa_n * ge * T / 4) > 1:
        T = 4.0 * math.log1p(1.5 * C * cfg.gamma) / (kappa_n * ge)
    return T


def default_stopping_time(cfg: LatticeConfig) -> float:
    c = estimate_constants(cfg.n)
    return stopping_time(cfg, c["kappa_n"], c["C_n"])


@dataclass(frozen=True, eq=False)
class EpochReport:
    T: float
    base_phi: float
    phi_end: float
    phi_shift_measured: float
    zeta_norm_max: float
    zeta_norm_end: float
    zeta_norm_after_reproj: float
    s_end: float
    bounds_ok: dict
    samples: dict = field(default_factory=dict)
    phase_jump: float = 0.0


def run_epoch(frame0: ModulationFrame, cfg: LatticeConfig, T: float | None = None,
              sample_dt: float | None = None, check_pre: bool = True):
    """Integrate the full flow for one epoch, decomposing on a fixed base frame.

    The epoch starts at local time 0 from exp(i theta0)(p(phi0) + z0); any
    accumulated global phase is dropped (gauge normalization).  Returns the
    report and the re-orthogonalized frame for the next epoch, at local time 0.
    """
    n, eps, gamma = cfg.n, cfg.eps, cfg.gamma
    scale = gamma * abs(eps) ** n
    if check_pre and frame0.zeta_norm > scale * (1 + 1e-9) + 1e-15:
        raise ValueError(f"initial ||zeta|| = {frame0.zeta_norm:.3e} exceeds gamma*eps^n = {scale:.3e}")
    if T is None:
        T = default_stopping_time(cfg)
    if sample_dt is None:
        sample_dt = min(0.5, T / 2000)
    base = frame0.base_phi
    branch = _Branch(cfg)
    start = replace(frame0, t=0.0, s=0.0)
    W0 = reconstruct(start, cfg, frame_shift=base, branch=branch)

    rec = {"t": [], "phi": [], "theta": [], "zeta_norm": [], "s": []}
    state = {"prev": start, "prev2": None, "int_phi": 0.0}

    def on_sample(t, w):
        prev, prev2 = state["prev"], state["prev2"]
        if prev2 is not None and prev.t > prev2.t:
            r = (t - prev.t) / (prev.t - prev2.t)
            guess = replace(prev, phi=prev.phi + r * (prev.phi - prev2.phi),
                            theta=prev.theta + r * (prev.theta - prev2.theta))
        else:
            guess = prev
        fr = decompose_fixed_frame(w, t, base, guess, cfg, frame_shift=base, branch=branch)
        if rec["t"]:
            state["int_phi"] += 0.5 * (fr.phi + prev.phi) * (t - prev.t)
        s = t * fr.phi + fr.theta - start.theta - state["int_phi"]
        fr = replace(fr, s=s)
        zn = fr.zeta_norm
        for k, v in zip(rec, (t, fr.phi, fr.theta, zn, s)):
            rec[k].append(v)
        if gamma > 0 and zn > 4 * scale:
            raise CeilingExceeded(f"||zeta|| = {zn:.3e} > 4 gamma eps^n at t={t:.3f}", t=t, zeta_norm=zn)
        state["prev2"], state["prev"] = prev, fr

    traj = integrate(lattice_rhs(cfg, base), W0, 0.0, T, cfg, sample_dt, callback=on_sample)
    end = state["prev"]
    W_end = traj.states[-1]
    # gauge normalization: rotate the accumulated phase away, then restart the clock
    chi = T * (end.phi - base) + end.theta
    W_hat = np.exp(-1j * chi) * W_end
    nxt = reorthogonalize(W_hat, 0.0, end.phi, 0.0, cfg, branch=branch)

    zmax = float(np.max(rec["zeta_norm"]))
    delta_T = end.phi - base
    bounds = {
        "a": zmax <= 2 * scale,
        "b": nxt.zeta_norm <= scale,
        "c": abs(delta_T - drift_rate(cfg) * T) <= 2 * gamma * abs(eps) ** (2 * n - 1.5) * T,
    }
    rep = EpochReport(T=T, base_phi=base, phi_end=end.phi, phi_shift_measured=delta_T,
                      zeta_norm_max=zmax, zeta_norm_end=end.zeta_norm,
                      zeta_norm_after_reproj=nxt.zeta_norm, s_end=end.s, bounds_ok=bounds,
                      samples={k: np.asarray(v) for k, v in rec.items()},
                      phase_jump=base * T + chi)
    return rep, nxt


@dataclass(frozen=True, eq=False)
class IterationResult:
    reports: list
    phis: np.ndarray  # phi_0, phi_1, ..., re-orthogonalized base points
    times: np.ndarray  # global epoch start times
    window_stopped: bool
    drift_ok: bool
    spiral: dict


def iterate_epochs(frame0: ModulationFrame, K: int, cfg: LatticeConfig, T: float | None = None,
                   enforce_window: bool = True, sample_dt: float | None = None) -> IterationResult:
    """Chain K epochs, re-basing the projector at each new base point.

    With ``enforce_window`` the run stops before the predicted cumulative drift
    exceeds gamma*eps^n; the reports collected so far are returned.
    """
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    if T is None:
        T = default_stopping_time(cfg)
    window = cfg.gamma * abs(cfg.eps) ** cfg.n
    per_epoch = abs(drift_rate(cfg)) * T
    reports, phis, starts = [], [frame0.base_phi], [0.0]
    phi_ref = frame0.base_phi
    offset = 0.0  # winding phase at the start of the current epoch, frame rotating at phi_ref
    spiral = {"t": [], "winding_phase": [], "phi": []}
    theta_init = frame0.theta
    frame = frame0
    stopped = False
    for k in range(int(K)):
        if enforce_window and (k + 1) * per_epoch > window:
            stopped = True
            break
        rep, frame = run_epoch(frame, cfg, T=T, sample_dt=sample_dt, check_pre=(k == 0))
        smp = rep.samples
        t0 = starts[-1]
        spiral["t"].append(t0 + smp["t"])
        spiral["winding_phase"].append(offset + smp["t"] * (smp["phi"] - phi_ref) + smp["theta"] - theta_init)
        spiral["phi"].append(smp["phi"])
        offset += T * (rep.phi_end - phi_ref) + smp["theta"][-1]
        reports.append(rep)
        phis.append(frame.base_phi)
        starts.append(t0 + T)
    phis = np.asarray(phis)
    ks = np.arange(len(phis))
    pred = drift_rate(cfg) * ks * T
    rel = 2 * math.sqrt(abs(cfg.eps))
    drift_ok = bool(np.all(np.abs(phis[1:] - phis[0] - pred[1:]) <= rel * np.abs(pred[1:]))) if len(phis) > 1 else True
    spiral = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in spiral.items()}
    return IterationResult(reports=reports, phis=phis, times=np.asarray(starts), window_stopped=stopped,
                           drift_ok=drift_ok, spiral=spiral)


def predicted_winding_time(cfg: LatticeConfig, m: int) -> float:
    return math.sqrt(2 * math.pi * m / (cfg.gamma * abs(cfg.eps) ** (2 * cfg.n - 1)))


def winding_phase(traj, phi_ref: float = 0.0, frame_shift: float = 0.0) -> np.ndarray:
    """Unwrapped arg(w_1) in the frame rotating at phi_ref, relative to t = 0."""
    ph = np.unwrap(np.angle(traj.states[:, 0])) + (frame_shift - phi_ref) * traj.times
    return ph - ph[0]


def winding_times(times, phase, m_max: int) -> np.ndarray:
    """Times at which |phase| first reaches 2*pi*m, m = 1..m_max (nan if never)."""
    a = np.abs(np.asarray(phase))
    out = np.full(m_max, np.nan)
    for m in range(1, m_max + 1):
        level = 2 * math.pi * m
        idx = np.nonzero(a >= level)[0]
        if idx.size and idx[0] > 0:
            i = idx[0]
            out[m - 1] = times[i - 1] + (level - a[i - 1]) * (times[i] - times[i - 1]) / (a[i] - a[i - 1])
    return out


def lemma_residuals(pack, profile_at_phi: BreatherProfile, zeta, cfg: LatticeConfig) -> dict:
    """Inner products of the modulation-equation terms with the base adjoint modes.

    ``pack`` is built at the base frequency; ``profile_at_phi`` is p at the
    current frequency, so delta = phi - phi_base.
    """
    zeta = np.asarray(zeta, dtype=float)
    n = cfg.n
    n1, n2 = pack.n1, pack.n2
    delta = profile_at_phi.phi0 - pack.phi0
    p, dp = profile_at_phi.p, profile_at_phi.dp_dphi
    xi, eta = zeta[:n], zeta[n:]
    Uz = build_M(profile_at_phi, cfg) @ zeta
    cg = np.zeros(n)
    cg[-1] = cfg.gamma * cfg.eps
    gterm = np.concatenate([-cg * (xi + p), -cg * eta])
    rot = np.concatenate([eta, -(p + xi)])  # real form of -i(p + z)
    dpv = np.concatenate([dp, np.zeros(n)])
    zn = float(np.linalg.norm(zeta))
    return {
        "delta": delta,
        "U_n1": float(n1 @ Uz),
        "U_n2": float(n2 @ Uz),
        "U_order": abs(delta) * zn,
        "Gamma_n1": float(n1 @ gterm),
        "Gamma_n2": float(n2 @ gterm),
        "Gamma_leading": drift_rate(cfg),
        "rot_n1": float(n1 @ rot),
        "rot_n2": float(n2 @ rot),
        "rot_leading": -1.0,
        "phi_n1": float(n1 @ dpv),
        "phi_n2": float(n2 @ dpv),
        "phi_leading": 1.0,
        "zeta_norm": zn,
    }
