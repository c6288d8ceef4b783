"""Numerical laboratory for Kahler-Einstein existence criteria on toric models.

The package verifies, on explicit torus-invariant models of CP^n (n <= 3),
the computable content of an existence criterion for Kahler-Einstein
metrics: the I_k / I / J energy functionals and their integral identities,
Bergman kernels and their normalization and approximation properties,
alpha-invariant thresholds, the Aubin continuity path solved as a real
Monge-Ampere continuation, and the exact rational parameter algebra of the
criterion itself.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .geometry import InvariantPotential, ToricFanoModel, mixed_ma_density, wedge_density
from .potentials import get_potential, library, library_names, random_potential
from .functionals import (
    aubin_energies,
    energy_ik,
    functional_report,
    verify_ik_stability,
)
from .bergman import (
    SectionSubspace,
    bergman_approximation,
    bergman_density_values,
    bergman_kernel,
    eigenvalue_control_probe,
    section_basis,
)
from .alpha import alpha_mk_estimate, lct_threshold
from .criterion import (
    check_alpha_criterion,
    choose_parameters,
    epsilon_margin,
    verify_linear_combination,
)
from .continuity import (
    run_path,
    solve_ma,
    verify_apriori_estimates,
    verify_path_identity,
)
from .acceptance import run_battery

__all__ = [
    "__version__",
    "InvariantPotential",
    "ToricFanoModel",
    "mixed_ma_density",
    "wedge_density",
    "get_potential",
    "library",
    "library_names",
    "random_potential",
    "aubin_energies",
    "energy_ik",
    "functional_report",
    "verify_ik_stability",
    "SectionSubspace",
    "bergman_approximation",
    "bergman_density_values",
    "bergman_kernel",
    "eigenvalue_control_probe",
    "section_basis",
    "alpha_mk_estimate",
    "lct_threshold",
    "check_alpha_criterion",
    "choose_parameters",
    "epsilon_margin",
    "verify_linear_combination",
    "run_path",
    "solve_ma",
    "verify_apriori_estimates",
    "verify_path_identity",
    "run_battery",
]
