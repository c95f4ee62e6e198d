"""Breathers of a damped discrete nonlinear Schroedinger lattice: construction,
linear analysis and long-time tracking of their slow frequency drift."""
from .breather import BreatherProfile, asymptotic_profile, breather_derivative, breather_seed, residual_F, solve_breather
from .lattice import LatticeConfig, gauge_rotate, hamiltonian, laplacian, norm_decay_rate, rhs_complex, rhs_real
from .linops import LinearPack, build_pack, projector, transform_X
from .modulation import ModulationFrame, decompose_fixed_frame, iterate_epochs, reconstruct, reorthogonalize, run_epoch
from .spectral import SpectrumReport, damping_rates, estimate_constants, spectrum

__version__ = "0.1.0"
