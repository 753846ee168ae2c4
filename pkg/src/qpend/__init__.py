"""Inverted pendulum balancing on a robot flange: simulation, system
identification by ODE curve fitting, closed-loop inverse kinematics
tracking, and tabular Q-learning with domain randomization.
"""

from .clik import (
    Gains,
    JointState,
    PlanarArm,
    TrackingChannel,
    TrackingError,
    clik_joint_accel,
    eef_accel,
    tracking_accel,
)
from .dynamics import (
    ContinuousState,
    OscillationTrace,
    PendulumParams,
    default_params,
    free_oscillation_rhs,
    is_failure,
    linearized_step,
    natural_period,
    simulate_free_oscillation,
)
from .errors import (
    DataInsufficiencyWarning,
    DegenerateDataError,
    ModelDomainError,
    ParseError,
    ShapeError,
    SingularityError,
    StepSizeWarning,
    ValidationError,
)
from .rl import (
    ACTIONS,
    BalanceEnv,
    DiscreteState,
    EpisodeStats,
    EvalSummary,
    LearningConfig,
    QTable,
    TabularMDP,
    discretize,
    evaluate,
    greedy_rollout,
    oracle_value_iteration,
    q_update,
    reward,
    run_episode,
    select_action,
    train,
)
from .sysid import (
    FitConfig,
    FitResult,
    estimate_initial_guess,
    fit_parameters,
    generate_synthetic_encoder_data,
    residuals,
)

__version__ = "0.1.0"
