"""Scenarios, ground truth and experiment runners."""
from .experiments import (
    Method,
    RmseReport,
    default_methods,
    mean_reports,
    run_scenario,
    run_seeds,
    sweep,
    van_der_pol_identification,
    write_reports,
)
from .ode import ODEBlowUpError, OdeSolution, ode_integrate
from .scenarios import (
    SCENARIOS,
    Scenario,
    get_scenario,
    linear_ode_scenario,
    poisson_scenario,
    van_der_pol_problem,
    van_der_pol_scenario,
)

__all__ = [
    "Method",
    "ODEBlowUpError",
    "OdeSolution",
    "RmseReport",
    "SCENARIOS",
    "Scenario",
    "default_methods",
    "get_scenario",
    "linear_ode_scenario",
    "mean_reports",
    "ode_integrate",
    "poisson_scenario",
    "run_scenario",
    "run_seeds",
    "sweep",
    "van_der_pol_identification",
    "van_der_pol_problem",
    "van_der_pol_scenario",
    "write_reports",
]
