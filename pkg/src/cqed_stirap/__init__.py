"""Exact-diagonalization and mean-field tools for a three-cavity STIRAP chain
with a Jaynes-Cummings qubit in the last cavity."""

from .fock import ConservedBasis, FockState, HermitianOperator, Qubit, apply, build_bilinear, enumerate_basis
from .hamiltonian import (CrossingMetrics, ModelParams, SpectrumSlice, assemble, crossing_metrics, diagonalize,
                          pulse_values, spectrum_scan, track_branch)
from .semiclassical import (LyapunovConfig, MeanFieldState, SPSolution, chaotic_window, continue_branch,
                            lyapunov, mean_field_rhs, solve_sp, sp_residual)
from .otoc import OTOCSeries, GrowthFit, fit_growth, heisenberg_matrix, microcanonical_otoc, thermal_otoc
from .dynamics import (SweepConfig, SweepResult, adiabatic_projection, build_dark_state, efficiency,
                       efficiency_vs_N, evolve, participation_number, purity_scan, single_particle_purity)

__version__ = "0.1.0"
