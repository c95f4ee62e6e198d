"""Damped DNLS lattice: vector fields, Hamiltonian and gauge action.

State conventions: a complex state is a length-n array ``w``; the real
layout is the block vector ``(p_1..p_n, q_1..q_n)`` with ``w = p + i q``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class LatticeConfig:
    n: int
    eps: float
    gamma: float = 0.0
    newton_tol: float = 1e-12
    ode_rtol: float = 1e-11
    ode_atol: float = 1e-13
    eps_max: float = 0.25

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n}")
        if not math.isfinite(self.eps):
            raise ConfigError("eps must be finite")
        if abs(self.eps) >= self.eps_max:
            raise ConfigError(f"|eps| = {abs(self.eps)} must be below eps_max = {self.eps_max}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ConfigError(f"gamma must be finite and >= 0, got {self.gamma}")
        for name in ("newton_tol", "ode_rtol", "ode_atol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")

    def replace(self, **kw) -> "LatticeConfig":
        d = dict(self.__dict__)
        d.update(kw)
        return LatticeConfig(**d)


def laplacian(u):
    """Neumann-type discrete Laplacian (no ghost cells)."""
    u = np.asarray(u)
    if u.ndim != 1 or u.shape[0] < 2:
        raise DimensionError(f"laplacian needs a vector of length >= 2, got shape {u.shape}")
    out = np.empty_like(u)
    out[1:-1] = u[:-2] - 2 * u[1:-1] + u[2:]
    out[0] = u[1] - u[0]
    out[-1] = u[-2] - u[-1]
    return out


def laplacian_matrix(n: int) -> np.ndarray:
    if n < 2:
        raise DimensionError("n must be >= 2")
    D = np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    D[0, 0] = D[-1, -1] = -1.0
    return D


def _check_len(x, m, what):
    if x.ndim != 1 or x.shape[0] != m:
        raise DimensionError(f"{what} must have length {m}, got shape {x.shape}")


def rhs_complex(W, cfg: LatticeConfig, phi_shift: float = 0.0):
    """dw/dt for the damped lattice, optionally in a frame rotating at 1+phi_shift."""
    W = np.asarray(W, dtype=complex)
    _check_len(W, cfg.n, "W")
    out = -1j * cfg.eps * laplacian(W) - 1j * (1.0 + phi_shift) * W + 1j * (W.real**2 + W.imag**2) * W
    out[-1] -= cfg.gamma * cfg.eps * W[-1]
    return out


def rhs_real(z, cfg: LatticeConfig, phi0: float = 0.0):
    """Real block form of :func:`rhs_complex`, written out component by component."""
    z = np.asarray(z, dtype=float)
    _check_len(z, 2 * cfg.n, "z")
    n, eps, ge = cfg.n, cfg.eps, cfg.gamma * cfg.eps
    p, q = z[:n], z[n:]
    r2 = p * p + q * q
    pdot = eps * laplacian(q) + (1.0 + phi0) * q - r2 * q
    qdot = -eps * laplacian(p) - (1.0 + phi0) * p + r2 * p
    pdot[-1] -= ge * p[-1]
    qdot[-1] -= ge * q[-1]
    return np.concatenate([pdot, qdot])


def to_real(w) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return np.concatenate([w.real, w.imag])


def to_complex(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.shape[0] % 2:
        raise DimensionError(f"real state must have even length, got shape {z.shape}")
    n = z.shape[0] // 2
    return z[:n] + 1j * z[n:]


def hamiltonian(z, cfg: LatticeConfig) -> float:
    z = np.asarray(z, dtype=float)
    _check_len(z, 2 * cfg.n, "z")
    n = cfg.n
    p, q = z[:n], z[n:]
    r2 = p * p + q * q
    coupling = 0.5 * cfg.eps * (np.sum(np.diff(p) ** 2) + np.sum(np.diff(q) ** 2))
    return float(coupling - np.sum(0.5 * r2 - 0.25 * r2 * r2))


def hamiltonian_complex(w, cfg: LatticeConfig) -> float:
    return hamiltonian(to_real(w), cfg)


def gauge_rotate(z, theta: float) -> np.ndarray:
    """Real form of exp(i theta) (p + i q). Also maps tangent vectors."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0] // 2
    p, q = z[:n], z[n:]
    c, s = math.cos(theta), math.sin(theta)
    return np.concatenate([c * p - s * q, s * p + c * q])


def norm_decay_rate(W, cfg: LatticeConfig) -> float:
    """Exact d/dt of sum |w_j|^2 along the flow."""
    W = np.asarray(W, dtype=complex)
    _check_len(W, cfg.n, "W")
    return -2.0 * cfg.gamma * cfg.eps * float(abs(W[-1]) ** 2)
