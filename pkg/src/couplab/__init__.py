"""Numerical laboratory for coupling-based transport-distance decay.

The package builds explicit couplings of pairs of stochastic processes
(diffusions, pure-jump scatterings, firing models, Kac ensembles) and of
deterministic flows (lattice heat, porous media), records the coupled
cost over time, and cross-checks against exact small-scale transport
solvers.  The central empirical claim it exercises: under the hypotheses
of each model family, the transport distance between the two laws never
increases, and decays at the predicted rate when a rate is predicted.

Entry points:

* :func:`wasserstein_lp`, :func:`wasserstein_1d` — exact distances;
* :func:`run_diffusion`, :func:`scattering_run`, ... — coupled runs;
* :func:`parse_config` + :func:`run_scenario` — config-driven harness;
* ``couplab`` console script — run/distance/residual/report.
"""

from .config import (ConfigError, ScenarioConfig, parse_config,
                     parse_config_dict, parse_config_text)
from .costs import (CustomCost, DFunctionCost, KineticSumCost, PowerCost,
                    RegularizedAbsCost, jump_dominance_check,
                    stable_identity_residual, weight_pde_residual)
from .diffusion import (CoupledEnsemble, run_diffusion, simulate_nltr,
                        step_fokker_planck, step_fractional, step_heat,
                        step_varcoef)
from .errors import CouplabError
from .gridpde import (discrete_duality_experiment, solve_coupling_fp,
                      solve_coupling_heat, solve_coupling_varcoef,
                      solve_discrete_heat)
from .jumps import (BoltzmannKac, KineticScattering, NeuronIIE, Scattering,
                    kac_run, kinetic_run, neuron_run, scattering_run,
                    tanaka_collision)
from .measures import (BarenblattProfile, EmpiricalMeasure, GridDensity,
                       load_cloud, sample_family, save_cloud)
from .porous import (NonlinearityA, brenier_map_1d, check_admissible,
                     dissipation_terms, pme_contraction_experiment,
                     power_nonlinearity, solve_pme_1d)
from .runner import (ScenarioResult, evaluate_verdict, run_and_write,
                     run_scenario)
from .series import (DistanceSeries, bootstrap_series, fit_decay_rate,
                     monotonicity_verdict, pool_series)
from .transport import (TransportPlan, coupled_cost,
                        potential_feasibility_gap, rationalize_weights,
                        wasserstein_1d, wasserstein_grid_1d, wasserstein_lp)

__version__ = "1.0.0"

__all__ = [
    "__version__",
    # errors
    "CouplabError",
    # measures
    "EmpiricalMeasure", "GridDensity", "BarenblattProfile",
    "sample_family", "save_cloud", "load_cloud",
    # costs
    "PowerCost", "KineticSumCost", "DFunctionCost", "RegularizedAbsCost",
    "CustomCost", "weight_pde_residual", "stable_identity_residual",
    "jump_dominance_check",
    # transport
    "TransportPlan", "wasserstein_1d", "wasserstein_grid_1d",
    "wasserstein_lp", "coupled_cost", "potential_feasibility_gap",
    "rationalize_weights",
    # series
    "DistanceSeries", "bootstrap_series", "pool_series", "fit_decay_rate",
    "monotonicity_verdict",
    # diffusion
    "CoupledEnsemble", "step_heat", "step_fokker_planck", "step_varcoef",
    "step_fractional", "run_diffusion", "simulate_nltr",
    # jumps
    "Scattering", "KineticScattering", "NeuronIIE", "BoltzmannKac",
    "scattering_run", "kinetic_run", "neuron_run", "kac_run",
    "tanaka_collision",
    # grid PDE
    "solve_coupling_heat", "solve_coupling_fp", "solve_coupling_varcoef",
    "solve_discrete_heat", "discrete_duality_experiment",
    # porous media
    "NonlinearityA", "power_nonlinearity", "check_admissible",
    "solve_pme_1d", "brenier_map_1d", "dissipation_terms",
    "pme_contraction_experiment",
    # harness
    "ScenarioConfig", "ConfigError", "parse_config", "parse_config_text",
    "parse_config_dict", "run_scenario", "run_and_write",
    "evaluate_verdict", "ScenarioResult",
]
