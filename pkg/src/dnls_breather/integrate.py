"""Adaptive time integration with sampling, step statistics and invariant monitoring.

The stepper is scipy's DOP853 (embedded 8(5,3) Dormand-Prince pair), driven
one step at a time so that accepted/rejected steps can be counted and the
output sampled on a fixed grid through the dense interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import DOP853

from .errors import NonFiniteState, StepUnderflow
from .lattice import LatticeConfig, hamiltonian_complex, rhs_complex

# dense output of DOP853 is degree 7, so |w_n|^2 is degree 14 and 8 nodes are exact
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n), complex
    hamiltonians: np.ndarray
    norms_sq: np.ndarray
    accepted_steps: int
    rejected_steps: int
    gamma_eps: float = 0.0
    # cumulative integral of 2*gamma*eps*|w_n|^2 at the sample times, accumulated per step
    dissipation: np.ndarray | None = None


def lattice_rhs(cfg: LatticeConfig, phi_shift: float = 0.0):
    def f(t, w):
        return rhs_complex(w, cfg, phi_shift)
    return f


def _sample_grid(t0, t1, sample_dt):
    k = int(np.floor((t1 - t0) / sample_dt * (1 + 1e-14)))
    ts = t0 + sample_dt * np.arange(k + 1)
    if t1 - ts[-1] > 1e-12 * max(1.0, abs(t1)):
        ts = np.append(ts, t1)
    else:
        ts[-1] = t1
    return ts


def integrate(rhs, state0, t0: float, t1: float, cfg: LatticeConfig, sample_dt: float,
              fixed_step: float | None = None, callback=None) -> TrajectoryRecord:
    """Integrate ``dw/dt = rhs(t, w)`` from t0 to t1, sampling every ``sample_dt``.

    ``fixed_step`` switches off error control (used for order checks).
    ``callback(t, w)`` is called at each sample; it may raise to abort.
    """
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    if not sample_dt > 0:
        raise ValueError("sample_dt must be positive")
    w0 = np.asarray(state0, dtype=complex).copy()
    if not np.all(np.isfinite(w0)):
        raise NonFiniteState("initial state is not finite")
    ts = _sample_grid(t0, t1, sample_dt)
    out = np.empty((ts.size, w0.size), dtype=complex)
    out[0] = w0
    if callback is not None:
        callback(ts[0], w0)

    nfev = [0]

    def f(t, w):
        nfev[0] += 1
        return rhs(t, w)

    diss = None
    if fixed_step is not None:
        acc = _fixed_dop853(f, w0, ts, out, fixed_step, callback)
        rej = 0
    else:
        diss = np.zeros(ts.size)
        acc, rej = _adaptive(f, w0, ts, out, cfg, nfev, callback, diss)
    H = np.array([hamiltonian_complex(w, cfg) for w in out])
    N = np.sum(np.abs(out) ** 2, axis=1)
    return TrajectoryRecord(times=ts, states=out, hamiltonians=H, norms_sq=N,
                            accepted_steps=acc, rejected_steps=rej, gamma_eps=cfg.gamma * cfg.eps,
                            dissipation=diss)


def _gauss(dense, a, b, ge):
    if b <= a:
        return 0.0
    x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    return 0.5 * (b - a) * float(_GL_W @ (2.0 * ge * np.abs(dense(x)[-1]) ** 2))


def _adaptive(f, w0, ts, out, cfg, nfev, callback, diss):
    t0, t1 = ts[0], ts[-1]
    h0 = min(0.1, (t1 - t0) / 10)
    solver = DOP853(f, t0, w0, t1, rtol=cfg.ode_rtol, atol=cfg.ode_atol, first_step=h0)
    stages = solver.n_stages
    min_step = 1e-14 * (t1 - t0)
    ge = cfg.gamma * cfg.eps
    acc = rej = 0
    k = 1
    total = 0.0
    while solver.status == "running":
        t_prev = solver.t
        before = nfev[0]
        msg = solver.step()
        attempts = (nfev[0] - before) // stages
        if solver.status == "failed":
            raise StepUnderflow(f"step failed at t={solver.t}: {msg}")
        acc += 1
        rej += max(attempts - 1, 0)
        if not np.all(np.isfinite(solver.y)):
            raise NonFiniteState(f"non-finite state at t={solver.t}")
        if solver.step_size < min_step and solver.t < t1:
            raise StepUnderflow(f"step size {solver.step_size:.3e} below {min_step:.3e} at t={solver.t}")
        dense = solver.dense_output() if (ge or (k < ts.size and ts[k] <= solver.t)) else None
        a = t_prev
        while k < ts.size and ts[k] <= solver.t:
            out[k] = solver.y if ts[k] == solver.t else dense(ts[k])
            if ge:
                total += _gauss(dense, a, ts[k], ge)
                a = ts[k]
            diss[k] = total
            if callback is not None:
                callback(ts[k], out[k])
            k += 1
        if ge:
            total += _gauss(dense, a, solver.t, ge)
    while k < ts.size:  # t1 reached exactly
        out[k] = solver.y
        diss[k] = total
        k += 1
    return acc, rej


def _fixed_dop853(f, w0, ts, out, h, callback):
    """Constant-step DOP853 using scipy's tableau; steps are clipped to land on samples."""
    A, B, C = DOP853.A, DOP853.B, DOP853.C
    s = DOP853.n_stages
    w = w0.copy()
    t = ts[0]
    steps = 0
    K = np.empty((s, w.size), dtype=complex)
    for k in range(1, ts.size):
        while t < ts[k] - 1e-15 * max(1.0, abs(ts[k])):
            dt = min(h, ts[k] - t)
            K[0] = f(t, w)
            for i in range(1, s):
                K[i] = f(t + C[i] * dt, w + dt * (A[i, :i] @ K[:i]))
            w = w + dt * (B @ K)
            t += dt
            steps += 1
        t = ts[k]
        out[k] = w
        if callback is not None:
            callback(t, w)
    return steps


def dissipated(traj: TrajectoryRecord) -> np.ndarray:
    """Cumulative integral of 2*gamma*eps*|w_n|^2 at the samples.

    Uses the per-step quadrature when available, else trapezoid on the samples.
    """
    if traj.dissipation is not None:
        return traj.dissipation
    g = 2.0 * traj.gamma_eps * np.abs(traj.states[:, -1]) ** 2
    out = np.zeros_like(g)
    out[1:] = np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(traj.times))
    return out


def monitor(traj: TrajectoryRecord, cfg: LatticeConfig, budget: float = 1e-9) -> dict:
    H = traj.hamiltonians
    H_drift = float(np.max(np.abs(H - H[0])))
    ident = traj.norms_sq - traj.norms_sq[0] + dissipated(traj)
    resid = float(np.max(np.abs(ident)))
    flags = []
    if cfg.gamma == 0 and H_drift > budget:
        flags.append("H_drift")
    if resid > budget:
        flags.append("norm_identity")
    dn = np.diff(traj.norms_sq)
    return {
        "H_drift": H_drift,
        "norm_identity_residual": resid,
        "norm_monotone": bool(np.all(dn <= 0)),
        "step_stats": {"accepted": traj.accepted_steps, "rejected": traj.rejected_steps},
        "violations": flags,
        "ok": not flags,
    }
