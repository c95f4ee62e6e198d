"""Single-site breather family p(phi0, eps) of the undamped lattice."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, JacobianSingular, NonConvergence
from .lattice import LatticeConfig, laplacian, laplacian_matrix

PHI_MAX = 0.25
CONT_STEP = 0.05
MAX_ITER = 50


@dataclass(frozen=True, eq=False)
class BreatherProfile:
    phi0: float
    eps: float
    p: np.ndarray
    residual: float
    dp_dphi: np.ndarray

    @property
    def n(self) -> int:
        return self.p.shape[0]


def breather_seed(n: int) -> np.ndarray:
    p = np.zeros(n)
    p[0] = 1.0
    return p


def residual_F(p, phi0: float, eps: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return -eps * laplacian(p) - (1.0 + phi0) * p + p**3


def jacobian_F(p, phi0: float, eps: float) -> np.ndarray:
    """DF = -eps*Lap - (1+phi0) I + 3 diag(p^2); this is also the matrix B."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    return -eps * laplacian_matrix(n) - (1.0 + phi0) * np.eye(n) + np.diag(3.0 * p * p)


def _newton(p, phi0, eps, tol):
    p = np.array(p, dtype=float)
    res = np.linalg.norm(residual_F(p, phi0, eps))
    for _ in range(MAX_ITER):
        if res <= tol:
            # one polishing step; quadratic convergence takes it to round-off
            J = jacobian_F(p, phi0, eps)
            p_new = p - np.linalg.solve(J, residual_F(p, phi0, eps))
            r_new = np.linalg.norm(residual_F(p_new, phi0, eps))
            return (p_new, r_new) if r_new <= res else (p, res)
        J = jacobian_F(p, phi0, eps)
        scale = np.prod(np.linalg.norm(J, axis=1))
        if abs(np.linalg.det(J)) < 1e-14 * scale:
            raise JacobianSingular(f"singular Jacobian at phi0={phi0}, eps={eps}")
        p = p - np.linalg.solve(J, residual_F(p, phi0, eps))
        res = np.linalg.norm(residual_F(p, phi0, eps))
        if not np.isfinite(res):
            break
    raise NonConvergence(f"Newton did not converge (phi0={phi0}, eps={eps})", residuals=[res])


def _localized(p) -> bool:
    """Single-site shape: p_1 > 0 and |p_j| non-increasing along the chain."""
    a = np.abs(p)
    return bool(p[0] > a[1] and np.all(np.diff(a) <= 0))


def breather_derivative(profile: BreatherProfile, cfg: LatticeConfig | None = None) -> np.ndarray:
    """dp/dphi0 = B^{-1} p."""
    B = jacobian_F(profile.p, profile.phi0, profile.eps)
    return np.linalg.solve(B, profile.p)


def solve_breather(cfg: LatticeConfig, phi0: float = 0.0, guess=None) -> BreatherProfile:
    """Newton from the seed (or ``guess``), falling back to eps-continuation."""
    if abs(phi0) > PHI_MAX:
        raise ConfigError(f"|phi0| = {abs(phi0)} exceeds {PHI_MAX}")
    n, eps, tol = cfg.n, cfg.eps, cfg.newton_tol
    p = None
    try:
        start = breather_seed(n) if guess is None else np.asarray(guess, dtype=float)
        p, res = _newton(start, phi0, eps, tol)
        if not _localized(p):
            p = None  # landed on another branch
    except (NonConvergence, JacobianSingular):
        p = None
    if p is None:
        m = max(1, math.ceil(abs(eps) / CONT_STEP - 1e-12))
        p = breather_seed(n)
        for e in np.linspace(0.0, eps, m + 1)[1:]:
            p, res = _newton(p, phi0, e, tol)
            if not _localized(p):
                raise NonConvergence(f"breather branch lost localization at eps={e:.4g}, phi0={phi0}")
    if p[0] < 0:
        p = -p
    prof = BreatherProfile(phi0=float(phi0), eps=float(eps), p=p, residual=float(res), dp_dphi=np.zeros(n))
    object.__setattr__(prof, "dp_dphi", breather_derivative(prof))
    return prof


def asymptotic_profile(cfg: LatticeConfig, phi0: float = 0.0) -> np.ndarray:
    """Leading-order expansion of the breather in eps and phi0."""
    eps = cfg.eps
    j = np.arange(cfg.n)
    p = (-1.0) ** j * eps**j
    p[0] = 1.0 + 0.5 * (phi0 - eps)
    return p
