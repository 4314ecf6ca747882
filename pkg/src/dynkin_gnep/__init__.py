"""Threshold equilibria of two-player stopping games on the unit interval.

The package finds, certifies, and stress-tests Nash equilibria in threshold
strategies: closed-form payoff reductions, best-response iteration with
certificates, local and global contraction diagnostics, a diagonal-concavity
uniqueness criterion, a reduction of drifted and discounted diffusions to the
driftless normalized setting, and a Monte Carlo oracle that retraces every
closed form by simulation.  The ``dynkin`` command exposes the same pipeline
from the shell.
"""

from .rewards import (
    GameSpec,
    PiecewisePoly,
    SpecError,
    builtin_example,
    load_spec,
    save_spec,
    spec_from_dict,
    validate,
    validate_all,
)
from .harmonic import (
    hit_probability,
    interval_threshold_payoff,
    two_threshold_payoff,
)
from .gnep import IntervalGame, ThresholdGame
from .valuefn import (
    player1_interval_problem,
    player1_problem,
    player2_problem,
    solve_auxiliary,
    upper_concave_hull,
)
from .equilibrium import (
    Certificate,
    certify_three_player,
    certify_threshold,
    dp_policy_iteration,
    gauss_seidel,
    solve,
    solve_three_player,
)
from .analysis import (
    global_stability,
    local_rate,
    rosen_uniqueness,
    stability_product,
)
from .transform import (
    DiffusionSpec,
    TransformResult,
    constant_dynamics,
    transform_game,
)
from .montecarlo import (
    convergence_ladder,
    deviation_scan,
    discounted_exit_estimate,
    estimate_payoff,
    martingale_estimate,
    verify_payoffs,
)

__version__ = "0.1.0"

__all__ = [
    "GameSpec",
    "PiecewisePoly",
    "SpecError",
    "builtin_example",
    "load_spec",
    "save_spec",
    "spec_from_dict",
    "validate",
    "validate_all",
    "hit_probability",
    "interval_threshold_payoff",
    "two_threshold_payoff",
    "IntervalGame",
    "ThresholdGame",
    "player1_interval_problem",
    "player1_problem",
    "player2_problem",
    "solve_auxiliary",
    "upper_concave_hull",
    "Certificate",
    "certify_three_player",
    "certify_threshold",
    "dp_policy_iteration",
    "gauss_seidel",
    "solve",
    "solve_three_player",
    "global_stability",
    "local_rate",
    "rosen_uniqueness",
    "stability_product",
    "DiffusionSpec",
    "TransformResult",
    "constant_dynamics",
    "transform_game",
    "convergence_ladder",
    "deviation_scan",
    "discounted_exit_estimate",
    "estimate_payoff",
    "martingale_estimate",
    "verify_payoffs",
    "__version__",
]
