"""Remote state estimation over finite-state Markov links with random
measurement withholding for secrecy against an eavesdropper."""
from .channel import (
    FsmcModel,
    ModeDistribution,
    avg_reception,
    effective_reception,
    mode_distribution_step,
    sample_step,
    stationary_distribution,
)
from .errors import *  # noqa: F401,F403
from .riccati import (
    CareOutcome,
    LinearPlant,
    SolverOptions,
    asymptotic_growth_rate,
    covariance_recursion_step,
    gains_from_solution,
    solve_care,
    x_lambda,
)
from .scenario import PendulumParams, Scenario, load_scenario, pendulum_plant, save_scenario, scenario_from_dict
from .secrecy import (
    CriticalLambda,
    EavesdropperBound,
    SecrecyDesign,
    boundedness_verdict,
    build_A_e,
    critical_lambda,
    design_secrecy,
    eavesdropper_bound,
    s_recursion_step,
    secrecy_interval,
    spectral_radius,
)
from .sim import (
    MonteCarloSummary,
    SimConfig,
    TrajectoryRecord,
    gain_schedule,
    monte_carlo,
    simulate_trajectory,
    theoretical_mse_curve,
)

__version__ = "0.1.0"
