"""Parametric electron-field factorization for quantized light-matter dynamics.

The electron is propagated for every sample of the field quadratures under a
classical-like vector potential, and the field wavefunction evolves under the
electron-averaged Hamiltonian.  A brute-force joint solver provides the
reference against which the approximation is measured.
"""

from .analysis import (QuadratureReport, SqueezingReport, fidelity, mode_entanglement,
                       photon_statistics, quadrature_stats, reduced_purity, squeezing_detect)
from .backaction import (BackactionCoefficients, GaussianFieldState, GridHamiltonian,
                         backaction_from_expectations, build_backaction, propagate_field_grid,
                         propagate_gaussian, zeros_guard)
from .config import ConfigError, ScenarioConfig, config_to_text, load_config, parse_config
from .coupling import (ParametricField, beta_scaling_estimate, interaction_picture_map,
                       local_substitution, vector_potential)
from .electron import (ElectronEnsemble, PotentialSpec, SpatialGrid, ensemble_propagate,
                       gaussian_packet, split_step, static_gauge_residual, volkov_evolve,
                       volkov_integrals)
from .field import (C_LIGHT, FieldStateGrid, ModeSpec, QuadratureGrid, apply_ladder,
                    coherent_state, coherent_wavefunction, evolve_vacuum, expectation,
                    grid_for_mode, load_field_state, save_field_state, vacuum_state)
from .joint import (JointPropagator, JointWavefunction, compare_to_parametric, exact_factorize,
                    fit_loglog_slope, joint_propagate, product_state)
from .pipeline import emit_plot_data, run

__version__ = "0.1.0"

__all__ = [
    "C_LIGHT", "BackactionCoefficients", "ConfigError", "ElectronEnsemble", "FieldStateGrid",
    "GaussianFieldState", "GridHamiltonian", "JointPropagator", "JointWavefunction", "ModeSpec",
    "ParametricField", "PotentialSpec", "QuadratureGrid", "QuadratureReport", "ScenarioConfig",
    "SpatialGrid", "SqueezingReport", "apply_ladder", "backaction_from_expectations",
    "beta_scaling_estimate", "build_backaction", "coherent_state", "coherent_wavefunction",
    "compare_to_parametric", "config_to_text", "emit_plot_data", "ensemble_propagate",
    "evolve_vacuum", "exact_factorize", "expectation", "fidelity", "fit_loglog_slope",
    "gaussian_packet", "grid_for_mode", "interaction_picture_map", "joint_propagate",
    "load_config", "load_field_state", "local_substitution", "mode_entanglement",
    "parse_config", "photon_statistics", "product_state", "propagate_field_grid",
    "propagate_gaussian", "quadrature_stats", "reduced_purity", "run", "save_field_state",
    "split_step", "squeezing_detect", "static_gauge_residual", "vacuum_state",
    "vector_potential", "volkov_evolve", "volkov_integrals", "zeros_guard",
]
