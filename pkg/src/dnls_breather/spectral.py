"""Spectra of M and L = M - Gamma, cluster gaps, and semigroup envelopes."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .breather import BreatherProfile, solve_breather
from .errors import NonPositiveDamping, SpectrumError
from .lattice import LatticeConfig
from .linops import LinearPack, build_L, build_pack


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    zero_idx: tuple
    min_gap_nonzero: float
    max_abs_real_part_undamped: float
    damping_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kappa_estimate: float = float("nan")
    C_estimate: float = float("nan")

    @property
    def nonzero_mask(self) -> np.ndarray:
        m = np.ones(self.eigenvalues.shape[0], dtype=bool)
        m[list(self.zero_idx)] = False
        return m

    def clusters(self):
        """Nonzero eigenvalues split into the +i and -i clusters."""
        lam = self.eigenvalues[self.nonzero_mask]
        return lam[lam.imag > 0], lam[lam.imag < 0]

    def intra_cluster_gap(self) -> float:
        gaps = []
        for c in self.clusters():
            if c.size > 1:
                d = np.abs(c[:, None] - c[None, :])
                gaps.append(d[np.triu_indices(c.size, 1)].min())
        return float(min(gaps)) if gaps else float("inf")


def _deflated_eig(mat, modes):
    """Eigenpairs using an exactly invariant splitting span{v1, v2} + Range(P).

    The zero pair of M is a Jordan block, so a plain eigen-solve splits it by
    ~sqrt(machine eps).  Here the nonzero part comes from M restricted to
    Range(P), and the pair is reported as the mean of its 2x2 block's
    eigenvalues (the trace, which is well conditioned).
    """
    v1, v2, n1, n2 = modes
    P = np.eye(v1.size) - np.outer(v1, n1) - np.outer(v2, n2)
    U = sla.orth(P)
    lam_r, Y = np.linalg.eig(U.T @ mat @ U)
    Vs = np.column_stack([v1, v2])
    K = np.vstack([n1, n2]) @ mat @ Vs
    z = 0.5 * np.trace(K)
    lam = np.concatenate([[z, z], lam_r]).astype(complex)
    V = np.column_stack([Vs.astype(complex), U @ Y])
    return lam, V


def spectrum(mat, gamma_eps: float | None = None, zero_modes=None) -> SpectrumReport:
    """Sorted eigen-decomposition; pass ``zero_modes`` = (v1, v2, n1, n2) to deflate the Jordan pair."""
    mat = np.asarray(mat, dtype=float)
    if not np.all(np.isfinite(mat)):
        raise SpectrumError("matrix has non-finite entries", matrix=mat)
    try:
        lam, V = _deflated_eig(mat, zero_modes) if zero_modes is not None else np.linalg.eig(mat)
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(f"eigen-solver failed: {exc}", matrix=mat) from exc
    order = sorted(range(lam.size), key=lambda k: (round(lam[k].imag), lam[k].imag, lam[k].real))
    lam, V = lam[order], V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    zero = tuple(sorted(np.argsort(np.abs(lam))[:2].tolist()))
    mask = np.ones(lam.size, dtype=bool)
    mask[list(zero)] = False
    nz = lam[mask]
    d = np.abs(nz[:, None] - nz[None, :])
    gap = float(d[np.triu_indices(nz.size, 1)].min()) if nz.size > 1 else float("inf")
    rates = -nz.real
    kappa = float(rates.min() / gamma_eps) if gamma_eps else float("nan")
    return SpectrumReport(eigenvalues=lam, eigenvectors=V, zero_idx=zero, min_gap_nonzero=gap,
                          max_abs_real_part_undamped=float(np.abs(lam.real).max()),
                          damping_rates=rates, kappa_estimate=kappa)


def gap_analysis(reports, eps_values) -> dict:
    """Intra-cluster gap / eps across an eps sweep, with a log-log slope."""
    eps_values = np.asarray(eps_values, dtype=float)
    gaps = np.array([r.intra_cluster_gap() for r in reports])
    cross = np.array([float(np.min(np.abs(r.clusters()[0][:, None] - r.clusters()[1][None, :])))
                      for r in reports])
    if np.all(np.isinf(gaps)):
        return {"C_lower": float("inf"), "slope": float("nan"), "ratios": gaps, "cross_gap": cross}
    ratios = gaps / np.abs(eps_values)
    slope = float(np.polyfit(np.log(np.abs(eps_values)), np.log(gaps), 1)[0])
    return {"C_lower": float(ratios.min()), "slope": slope, "ratios": ratios, "cross_gap": cross}


def damping_rates(profile: BreatherProfile, cfg: LatticeConfig) -> SpectrumReport:
    ge = cfg.gamma * cfg.eps
    rep = spectrum(build_L(profile, cfg), gamma_eps=ge if ge else None)
    if cfg.gamma > 0 and np.any(rep.damping_rates <= 0):
        raise NonPositiveDamping(f"non-positive damping rate {rep.damping_rates.min():.3e} "
                                 f"at eps={cfg.eps}, gamma={cfg.gamma}")
    return rep


def damping_linearity(profile: BreatherProfile, cfg: LatticeConfig, rel: float = 0.10) -> dict:
    """kappa at gamma/4, gamma/2, gamma; linear regime means they agree within ``rel``."""
    ks = []
    for g in (cfg.gamma / 4, cfg.gamma / 2, cfg.gamma):
        ks.append(damping_rates(profile, cfg.replace(gamma=g)).kappa_estimate)
    ks = np.array(ks)
    return {"kappas": ks, "ok": bool(np.ptp(ks) <= rel * ks.max())}


def range_basis(pack: LinearPack) -> np.ndarray:
    return sla.orth(pack.P)


def normal_generator(pack: LinearPack) -> np.ndarray:
    """P L P: the damped linear flow with the zero-mode directions removed."""
    return pack.P @ pack.L @ pack.P


def semigroup_norm(pack: LinearPack, t: float) -> float:
    """||exp(t PLP) U||_2 with U an orthonormal basis of Range(P)."""
    U = range_basis(pack)
    return float(np.linalg.norm(sla.expm(t * normal_generator(pack)) @ U, 2))


def semigroup_norms(pack: LinearPack, t_max: float, num: int) -> tuple[np.ndarray, np.ndarray]:
    """Norms on a uniform grid, reusing one exponential of the time step."""
    ts = np.linspace(0.0, t_max, num)
    U = range_basis(pack)
    step = sla.expm((ts[1] - ts[0]) * normal_generator(pack))
    out = np.empty(num)
    E = U
    for k in range(num):
        out[k] = np.linalg.norm(E, 2)
        E = step @ E
    return ts, out


def overshoot(pack: LinearPack, kappa: float, t_max: float | None = None, dt: float = 0.1) -> float:
    """max_t ||exp(tPLP)|_P|| * exp(kappa*gamma*eps*t) - 1."""
    ge = pack.gamma * pack.eps
    if t_max is None:
        t_max = 10.0 / ge
    num = int(np.ceil(t_max / dt)) + 1
    ts, norms = semigroup_norms(pack, t_max, num)
    return float(np.max(norms * np.exp(kappa * ge * ts)) - 1.0)


@lru_cache(maxsize=64)
def _constants(n, eps_grid, gamma_grid, phi0):
    rows = []
    for eps in eps_grid:
        base = LatticeConfig(n, eps)
        prof = solve_breather(base, phi0)
        for g in gamma_grid:
            cfg = base.replace(gamma=g)
            pack = build_pack(cfg, phi0, profile=prof)
            kappa = damping_rates(prof, cfg).kappa_estimate
            rows.append((eps, g, kappa, overshoot(pack, kappa)))
    return tuple(rows)


def estimate_constants(n: int, eps_grid=(0.05, 0.1), gamma_grid=(0.05, 0.1, 0.2), phi0: float = 0.0) -> dict:
    """Fit kappa_n (smallest damping ratio) and C_n (largest overshoot / gamma) over a grid.

    Results are cached per argument tuple.
    """
    rows = _constants(int(n), tuple(eps_grid), tuple(gamma_grid), float(phi0))
    kap = np.array([r[2] for r in rows])
    cs = np.array([max(r[3], 0.0) / r[1] for r in rows])
    return {
        "kappa_n": float(kap.min()),
        "C_n": float(cs.max()),
        "grid": [{"eps": r[0], "gamma": r[1], "kappa": r[2], "overshoot": r[3]} for r in rows],
        "kappa_spread": float(np.ptp(kap) / kap.max()),
        "C_spread": float(np.ptp(cs) / cs.max()) if cs.max() > 0 else 0.0,
    }
