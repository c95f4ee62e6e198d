"""Linearization at the breather: A, B, M, Gamma, zero modes, projector, X."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .breather import BreatherProfile, jacobian_F, solve_breather
from .errors import ZeroOffDiagonal
from .lattice import LatticeConfig, laplacian_matrix


def build_A(profile: BreatherProfile, cfg: LatticeConfig) -> np.ndarray:
    n = profile.n
    return cfg.eps * laplacian_matrix(n) + (1.0 + profile.phi0) * np.eye(n) - np.diag(profile.p**2)


def build_B(profile: BreatherProfile, cfg: LatticeConfig) -> np.ndarray:
    return jacobian_F(profile.p, profile.phi0, cfg.eps)


def _blocks(A, B):
    n = A.shape[0]
    Z = np.zeros((n, n))
    return np.block([[Z, A], [B, Z]])


def build_M(profile: BreatherProfile, cfg: LatticeConfig) -> np.ndarray:
    return _blocks(build_A(profile, cfg), build_B(profile, cfg))


def build_Gamma(cfg: LatticeConfig) -> np.ndarray:
    d = np.zeros(2 * cfg.n)
    d[cfg.n - 1] = d[-1] = cfg.gamma * cfg.eps
    return np.diag(d)


def build_L(profile: BreatherProfile, cfg: LatticeConfig) -> np.ndarray:
    return build_M(profile, cfg) - build_Gamma(cfg)


def zero_modes(profile: BreatherProfile, cfg: LatticeConfig):
    """Generalized kernel (v1, v2) of M and the biorthogonal adjoint pair (n1, n2)."""
    n = profile.n
    p = profile.p
    Binv_p = np.linalg.solve(build_B(profile, cfg), p)
    c = 1.0 / float(p @ Binv_p)
    z = np.zeros(n)
    v1 = np.concatenate([z, p])
    v2 = np.concatenate([Binv_p, z])
    n1 = c * np.concatenate([z, Binv_p])
    n2 = c * np.concatenate([p, z])
    return v1, v2, n1, n2


def normalization_constant(profile: BreatherProfile, cfg: LatticeConfig) -> float:
    p = profile.p
    return 1.0 / float(p @ np.linalg.solve(build_B(profile, cfg), p))


@dataclass(frozen=True, eq=False)
class LinearPack:
    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    Gamma: np.ndarray
    L: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    P: np.ndarray
    phi0: float
    eps: float
    gamma: float

    @property
    def n(self) -> int:
        return self.A.shape[0]


def projector(pack_or_modes):
    """Return (P, Q) with Q the oblique projector onto span{v1, v2}."""
    if isinstance(pack_or_modes, LinearPack):
        v1, v2, n1, n2 = pack_or_modes.v1, pack_or_modes.v2, pack_or_modes.n1, pack_or_modes.n2
    else:
        v1, v2, n1, n2 = pack_or_modes
    Q = np.outer(v1, n1) + np.outer(v2, n2)
    return np.eye(v1.shape[0]) - Q, Q


def build_pack(cfg: LatticeConfig, phi0: float = 0.0, profile: BreatherProfile | None = None) -> LinearPack:
    if profile is None:
        profile = solve_breather(cfg, phi0)
    A, B = build_A(profile, cfg), build_B(profile, cfg)
    G = build_Gamma(cfg)
    M = _blocks(A, B)
    modes = zero_modes(profile, cfg)
    P, _ = projector(modes)
    return LinearPack(A=A, B=B, M=M, Gamma=G, L=M - G, v1=modes[0], v2=modes[1], n1=modes[2],
                      n2=modes[3], P=P, phi0=profile.phi0, eps=cfg.eps, gamma=cfg.gamma)


def transform_X(n: int) -> np.ndarray:
    """Unitary whose columns are the normalized eigenvectors of M at eps = phi0 = 0."""
    s = 1.0 / np.sqrt(2.0)
    X = np.zeros((2 * n, 2 * n), dtype=complex)
    X[n, 0] = 1.0
    X[0, 1] = 1.0
    for k in range(1, n):
        X[k, 1 + k] = s
        X[n + k, 1 + k] = 1j * s
        X[k, n + k] = s
        X[n + k, n + k] = -1j * s
    return X


def hat(mat: np.ndarray) -> np.ndarray:
    X = transform_X(mat.shape[0] // 2)
    return X.conj().T @ mat @ X


def E1_matrix(n: int) -> np.ndarray:
    """d/d eps of M at eps = 0, phi0 fixed.

    Away from site 1 this is just +/-Lap.  At site 1 the profile itself moves,
    d(p_1^2)/d eps = -1, which shifts the corners to 0 (A) and -2 (B).
    """
    DA = laplacian_matrix(n)
    DB = -laplacian_matrix(n)
    DA[0, 0] = 0.0
    DB[0, 0] = -2.0
    return _blocks(DA, DB)


def M_decoupled(n: int, phi0: float) -> np.ndarray:
    a = np.full(n, 1.0 + phi0)
    a[0] = 0.0
    b = np.full(n, -(1.0 + phi0))
    b[0] = 2.0 * (1.0 + phi0)
    return _blocks(np.diag(a), np.diag(b))


def _block_diag_part(H: np.ndarray) -> np.ndarray:
    n = H.shape[0] // 2
    out = np.zeros_like(H)
    for sl in (slice(0, 2), slice(2, n + 1), slice(n + 1, 2 * n)):
        out[sl, sl] = H[sl, sl]
    return out


def perturbation_split(profile: BreatherProfile, cfg: LatticeConfig):
    """Return (M_phi0_0, E1, E2, E11_hat, E12_hat).

    E1 is multiplied by eps so that M = M_phi0_0 + E1 + E2.  The hatted
    pieces split X* E1 X into its block-diagonal part and the coupling
    through the first two rows and columns.
    """
    n = profile.n
    M0 = M_decoupled(n, profile.phi0)
    E1 = cfg.eps * E1_matrix(n)
    E2 = build_M(profile, cfg) - M0 - E1
    E1h = hat(E1)
    E11 = _block_diag_part(E1h)
    E12 = E1h - E11
    return M0, E1, E2, E11, E12


def S_block(profile: BreatherProfile, cfg: LatticeConfig) -> np.ndarray:
    """Real tridiagonal S with E11_hat = i*eps*diag(corner, S, -S)."""
    n = profile.n
    E11 = perturbation_split(profile, cfg)[3]
    S = E11[2:n + 1, 2:n + 1] / (1j * cfg.eps)
    return S.real


def tridiagonal_check(U: np.ndarray) -> dict:
    U = np.asarray(U, dtype=float)
    m = U.shape[0]
    if m == 1:
        return {"simple": True, "min_gap": np.inf, "first_last_nonzero": True,
                "eigenvalues": U.diagonal().copy()}
    off = np.diag(U, 1)
    if np.any(off == 0) or not np.allclose(off, np.diag(U, -1), rtol=0, atol=1e-14 * np.abs(U).max()):
        raise ZeroOffDiagonal("tridiagonal matrix needs equal nonzero off-diagonals")
    w, V = np.linalg.eigh(U)
    gap = float(np.min(np.diff(w)))
    ends = bool(np.all(np.abs(V[0]) > 1e-10) and np.all(np.abs(V[-1]) > 1e-10))
    return {"simple": gap > 0, "min_gap": gap, "first_last_nonzero": ends, "eigenvalues": w}
