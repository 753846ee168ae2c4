"""Tabular Q-learning for the flange balancing task.

The continuous state [x, x_dot, phi, phi_dot] is collapsed onto a coarse
grid of 6 * 5 * 3 * 3 = 270 cells, the flange acceleration command onto 8
discrete values (zero is deliberately not one of them), and the value
update is

    Q(s,a) = (1 - alpha) Q(s,a) + alpha (r + gamma * max_a' Q(s',a'))

with the bootstrap term dropped on transitions into failure. Rewards are
the minimal survival signal: +1 per step, -1 on failure, so values stay
bounded by 1/(1 - gamma).

Training runs one episode per fresh RNG stream derived from (seed, stream,
episode), so results are bit-reproducible and evaluation episodes could run
in any order. Per-episode domain randomization multiplies I and b by
exp(N(0, sigma_rel)); in the closed-loop tracking mode a per-step Gaussian
perturbation of the task error stands in for unmodeled robot error
dynamics.
"""

import math
import statistics
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .clik import DEFAULT_LINKS, Gains, PlanarArm, TrackingChannel
from .dynamics import (
    UPRIGHT,
    ContinuousState,
    PendulumParams,
    default_params,
    is_failure,
    linearized_step,
)
from .errors import ModelDomainError, ParseError, ShapeError, SingularityError

# acceleration commands, m/s^2
ACTIONS = (-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0)
N_ACTIONS = len(ACTIONS)

N_PHI_BINS, N_PHIDOT_BINS, N_X_BINS, N_XDOT_BINS = 6, 5, 3, 3
N_STATES = N_PHI_BINS * N_PHIDOT_BINS * N_X_BINS * N_XDOT_BINS  # 270

_D = math.pi / 180.0
_PHI_1, _PHI_5 = 1.0 * _D, 5.0 * _D
_PD_10, _PD_50 = 10.0 * _D, 50.0 * _D
INIT_PHI_MAX = 2.0 * _D   # episodes start with phi ~ U(-2 deg, 2 deg)


class DiscreteState(NamedTuple):
    """Bin indices (phi, phi_dot, x, x_dot); 270 combinations in total."""

    phi_bin: int
    phidot_bin: int
    x_bin: int
    xdot_bin: int

    def flat_index(self) -> int:
        return ((self.phi_bin * N_PHIDOT_BINS + self.phidot_bin) * N_X_BINS
                + self.x_bin) * N_XDOT_BINS + self.xdot_bin


def discretize(s: ContinuousState) -> DiscreteState | None:
    """Map a continuous state to its grid cell, or None once it has failed.

    Interval conventions (phi in degrees, phi_dot in deg/s):
      phi:     ]-11,-5[  [-5,-1[  [-1,0[  [0,1[  [1,5[  [5,11[
      phi_dot: ]-inf,-50]  ]-50,-10]  ]-10,10[  [10,50[  [50,inf[
      x (m):   ]-0.22,-0.08]  ]-0.08,0.08[  [0.08,0.22[
      x_dot:   ]-inf,-0.5]  ]-0.5,0.5[  [0.5,inf[
    Failure (None) is a modeled outcome, not an error.
    """
    if is_failure(s):
        return None
    x, x_dot, phi, phi_dot = s

    if phi < -_PHI_5:
        pb = 0
    elif phi < -_PHI_1:
        pb = 1
    elif phi < 0.0:
        pb = 2
    elif phi < _PHI_1:
        pb = 3
    elif phi < _PHI_5:
        pb = 4
    else:
        pb = 5

    if phi_dot <= -_PD_50:
        pdb = 0
    elif phi_dot <= -_PD_10:
        pdb = 1
    elif phi_dot < _PD_10:
        pdb = 2
    elif phi_dot < _PD_50:
        pdb = 3
    else:
        pdb = 4

    if x <= -0.08:
        xb = 0
    elif x < 0.08:
        xb = 1
    else:
        xb = 2

    if x_dot <= -0.5:
        xdb = 0
    elif x_dot < 0.5:
        xdb = 1
    else:
        xdb = 2

    return DiscreteState(pb, pdb, xb, xdb)


def _state_index(s) -> int:
    return s if isinstance(s, int) else s.flat_index()


class QTable:
    """Dense 270 x 8 state-action value table."""

    def __init__(self, values: np.ndarray | None = None):
        if values is None:
            values = np.zeros((N_STATES, N_ACTIONS))
        values = np.asarray(values, dtype=float)
        if values.shape != (N_STATES, N_ACTIONS):
            raise ShapeError(f"expected shape ({N_STATES}, {N_ACTIONS}), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ModelDomainError("table values must be finite")
        self.values = values

    @classmethod
    def zeros(cls) -> "QTable":
        return cls()

    def copy(self) -> "QTable":
        return QTable(self.values.copy())


def q_update(values: np.ndarray, s, a: int, r: float, s_next, alpha: float, gamma: float) -> None:
    """In-place value update; s / s_next may be DiscreteState or flat index,
    s_next = None marks a transition into failure (no bootstrap).
    """
    if not 0.0 < alpha <= 1.0:
        raise ModelDomainError(f"alpha must be in (0, 1], got {alpha!r}")
    si = _state_index(s)
    bootstrap = 0.0 if s_next is None else float(values[_state_index(s_next)].max())
    values[si, a] = (1.0 - alpha) * float(values[si, a]) + alpha * (r + gamma * bootstrap)


def select_action(values: np.ndarray, s, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties break to the lowest action index."""
    n_actions = values.shape[1]
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(values[_state_index(s)].argmax())


def reward(s_next) -> float:
    """+1 for surviving the step, -1 for falling or running out of track."""
    return -1.0 if s_next is None else 1.0


@dataclass
class LearningConfig:
    alpha: float = 0.1
    gamma: float = 0.95
    episodes: int = 10_000
    h: float = 0.01
    max_steps: int = 1_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 8_000
    param_noise_rel: float = 0.02   # per-episode multiplicative sigma on I and b
    error_noise: float = 1e-3       # per-step sigma on the tracking error (clik mode)
    tracking_mode: str = "ideal"    # "ideal" or "clik"
    seed: int = 8                   # default picked from a seed sweep; see README

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ModelDomainError(f"alpha must be in (0, 1], got {self.alpha!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ModelDomainError(f"gamma must be in [0, 1), got {self.gamma!r}")
        if self.episodes <= 0:
            raise ModelDomainError("episodes must be > 0")
        if self.h <= 0:
            raise ModelDomainError("h must be > 0")
        if self.max_steps < 0:
            raise ModelDomainError("max_steps must be >= 0")
        for name in ("epsilon_start", "epsilon_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ModelDomainError(f"{name} must be in [0, 1], got {v!r}")
        if self.epsilon_decay_episodes <= 0:
            raise ModelDomainError("epsilon_decay_episodes must be > 0")
        if self.param_noise_rel < 0 or self.error_noise < 0:
            raise ModelDomainError("noise scales must be >= 0")
        if self.tracking_mode not in ("ideal", "clik"):
            raise ModelDomainError(f"tracking_mode must be 'ideal' or 'clik', got {self.tracking_mode!r}")


@dataclass
class EpisodeStats:
    steps_survived: int
    terminal_reason: str          # "failure" | "timeout" | "singularity"
    cumulative_reward: float


def epsilon_schedule(cfg: LearningConfig, episode: int) -> float:
    """Linear anneal from epsilon_start to epsilon_end over
    epsilon_decay_episodes, constant afterwards.
    """
    frac = min(1.0, episode / cfg.epsilon_decay_episodes)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


_TRAIN_STREAM, _EVAL_STREAM = 0, 1


def episode_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent per-episode generator; episode order never changes draws."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, index)))


class BalanceEnv:
    """One episode's worth of balancing dynamics.

    Ideal tracking applies the commanded acceleration directly; clik mode
    routes it through a TrackingChannel whose singularities abort the
    episode. Construct a fresh env per episode (parameters are noised per
    episode, the channel is single-owner).
    """

    def __init__(self, params: PendulumParams, h: float, channel: TrackingChannel | None = None):
        self.params = params
        self.h = h
        self.channel = channel
        self.state = UPRIGHT

    def reset(self, rng: np.random.Generator) -> ContinuousState:
        self.state = ContinuousState(0.0, 0.0, float(rng.uniform(-INIT_PHI_MAX, INIT_PHI_MAX)), 0.0)
        if self.channel is not None:
            self.channel.reset()
        return self.state

    def step(self, u_cmd: float) -> tuple[ContinuousState, float]:
        """Apply a commanded acceleration; returns (next state, tracked u)."""
        u_actual = u_cmd if self.channel is None else self.channel.step(u_cmd)
        self.state = linearized_step(self.state, u_actual, self.params, self.h)
        return self.state, u_actual


def make_episode_env(
    params: PendulumParams,
    cfg: LearningConfig,
    rng: np.random.Generator,
    arm: PlanarArm | None = None,
    gains: Gains | None = None,
    q0: tuple[float, ...] | None = None,
) -> BalanceEnv:
    """Env with this episode's randomized parameters: I and b each get an
    independent exp(N(0, param_noise_rel)) factor.
    """
    noised = params.with_updates(
        I=params.I * math.exp(rng.normal(0.0, cfg.param_noise_rel)),
        b=params.b * math.exp(rng.normal(0.0, cfg.param_noise_rel)),
    )
    channel = None
    if cfg.tracking_mode == "clik":
        arm = arm if arm is not None else PlanarArm(DEFAULT_LINKS)
        gains = gains if gains is not None else Gains(kp=np.array([100.0]), kd=np.array([20.0]))
        channel = TrackingChannel(
            model=arm, gains=gains, h=cfg.h, noise_std=cfg.error_noise, rng=rng, q0=q0
        )
    return BalanceEnv(noised, cfg.h, channel)


def run_episode(
    env: BalanceEnv,
    table: QTable,
    cfg: LearningConfig,
    rng: np.random.Generator,
    epsilon: float,
    learn: bool = True,
) -> EpisodeStats:
    """Play one episode, updating the table in place when learning.

    A singularity abort ends the episode without a value update for the
    aborting step (there is no resulting state to learn from); it is still
    reported in the stats so the caller can count it.
    """
    values = table.values
    alpha, gamma = cfg.alpha, cfg.gamma
    s = env.reset(rng)
    ds = discretize(s)
    if ds is None:
        return EpisodeStats(0, "failure", 0.0)
    steps = 0
    cum_r = 0.0
    for _ in range(cfg.max_steps):
        si = ds.flat_index()
        a = select_action(values, si, epsilon, rng)
        try:
            s, _ = env.step(ACTIONS[a])
        except SingularityError:
            return EpisodeStats(steps, "singularity", cum_r)
        ds_next = discretize(s)
        r = reward(ds_next)
        if learn:
            q_update(values, si, a, r, ds_next, alpha, gamma)
        cum_r += r
        steps += 1
        if ds_next is None:
            return EpisodeStats(steps, "failure", cum_r)
        ds = ds_next
    return EpisodeStats(steps, "timeout", cum_r)


def train(
    cfg: LearningConfig,
    params: PendulumParams | None = None,
    arm: PlanarArm | None = None,
    gains: Gains | None = None,
    q0: tuple[float, ...] | None = None,
) -> tuple[QTable, list[EpisodeStats]]:
    """Train a fresh table for cfg.episodes episodes; deterministic in cfg.seed."""
    params = params if params is not None else default_params()
    table = QTable.zeros()
    curve = []
    for episode in range(cfg.episodes):
        rng = episode_rng(cfg.seed, _TRAIN_STREAM, episode)
        env = make_episode_env(params, cfg, rng, arm=arm, gains=gains, q0=q0)
        eps = epsilon_schedule(cfg, episode)
        curve.append(run_episode(env, table, cfg, rng, eps, learn=True))
    return table, curve


@dataclass
class EvalSummary:
    n_trials: int
    median_survival_s: float | None   # None marks an empty (no-data) summary
    mean_survival_s: float | None
    failures: int
    timeouts: int
    singularities: int
    episodes: list[EpisodeStats] = field(default_factory=list, repr=False)


def evaluate(
    table: QTable,
    n_trials: int,
    cfg: LearningConfig,
    params: PendulumParams | None = None,
    arm: PlanarArm | None = None,
    gains: Gains | None = None,
    q0: tuple[float, ...] | None = None,
) -> EvalSummary:
    """Greedy-policy evaluation: epsilon forced to 0, learning disabled,
    same per-episode parameter noise as training.
    """
    params = params if params is not None else default_params()
    episodes = []
    for trial in range(n_trials):
        rng = episode_rng(cfg.seed, _EVAL_STREAM, trial)
        env = make_episode_env(params, cfg, rng, arm=arm, gains=gains, q0=q0)
        episodes.append(run_episode(env, table, cfg, rng, epsilon=0.0, learn=False))
    if not episodes:
        return EvalSummary(0, None, None, 0, 0, 0, [])
    survival = [e.steps_survived * cfg.h for e in episodes]
    reasons = [e.terminal_reason for e in episodes]
    return EvalSummary(
        n_trials=n_trials,
        median_survival_s=float(statistics.median(survival)),
        mean_survival_s=float(statistics.fmean(survival)),
        failures=reasons.count("failure"),
        timeouts=reasons.count("timeout"),
        singularities=reasons.count("singularity"),
        episodes=episodes,
    )


def greedy_rollout(
    env: BalanceEnv,
    table: QTable,
    cfg: LearningConfig,
    rng: np.random.Generator,
) -> tuple[EpisodeStats, list[tuple]]:
    """One greedy episode with a per-step log.

    Each row is (t, u_cmd, u_actual, x, x_dot, phi, phi_dot) holding the
    state reached by that step, so only the last row may sit in the failure
    region. A rollout always takes at least one step.
    """
    values = table.values
    s = env.reset(rng)
    ds = discretize(s)
    if ds is None:
        return EpisodeStats(0, "failure", 0.0), []
    rows = []
    cum_r = 0.0
    steps = 0
    for k in range(max(1, cfg.max_steps)):
        a = select_action(values, ds, 0.0, rng)
        u_cmd = ACTIONS[a]
        try:
            s, u_actual = env.step(u_cmd)
        except SingularityError:
            return EpisodeStats(steps, "singularity", cum_r), rows
        rows.append(((k + 1) * cfg.h, u_cmd, u_actual, s.x, s.x_dot, s.phi, s.phi_dot))
        ds = discretize(s)
        cum_r += reward(ds)
        steps += 1
        if ds is None:
            return EpisodeStats(steps, "failure", cum_r), rows
    return EpisodeStats(steps, "timeout", cum_r), rows


# --- correctness oracle: exact planning on a small explicit MDP ---

@dataclass
class TabularMDP:
    """Explicit MDP for cross-checking the Q-learning update: transition
    probabilities (S, A, S), expected immediate rewards (S, A), and an
    optional terminal mask (terminal states contribute no future value).
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    terminal: np.ndarray | None = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        S, A = self.rewards.shape
        if S > 100:
            raise ModelDomainError("oracle MDPs are capped at 100 states")
        if self.transitions.shape != (S, A, S):
            raise ShapeError(f"transitions must be (S, A, S) = {(S, A, S)}")
        if not np.allclose(self.transitions.sum(axis=2), 1.0, atol=1e-12):
            raise ModelDomainError("transition probabilities must sum to 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ModelDomainError("gamma must be in [0, 1)")
        if self.terminal is None:
            self.terminal = np.zeros(S, dtype=bool)
        self._cum = np.cumsum(self.transitions, axis=2)

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    def sample_next(self, s: int, a: int, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self._cum[s, a], rng.random(), side="right"))


def oracle_value_iteration(mdp: TabularMDP, tol: float = 1e-10) -> np.ndarray:
    """Bellman-optimality fixed point of the explicit MDP, iterated until
    the contraction bound guarantees sup-norm distance below tol.
    """
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    gamma = mdp.gamma
    for _ in range(1_000_000):
        V = np.where(mdp.terminal, 0.0, Q.max(axis=1))
        Q_new = mdp.rewards + gamma * (mdp.transitions @ V)
        delta = float(np.max(np.abs(Q_new - Q)))
        Q = Q_new
        if gamma == 0.0 or delta * gamma / (1.0 - gamma) < tol:
            return Q
    raise RuntimeError("value iteration failed to converge")


# --- file formats ---

QTABLE_HEADER = "phi_bin,phidot_bin,x_bin,xdot_bin,action,value"
CURVE_HEADER = "episode,steps,reward,terminal"
_F9 = "{:.9g}".format


def save_qtable(path, table: QTable) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(QTABLE_HEADER + "\n")
        for pb in range(N_PHI_BINS):
            for pdb in range(N_PHIDOT_BINS):
                for xb in range(N_X_BINS):
                    for xdb in range(N_XDOT_BINS):
                        si = DiscreteState(pb, pdb, xb, xdb).flat_index()
                        for a in range(N_ACTIONS):
                            f.write(f"{pb},{pdb},{xb},{xdb},{a},{_F9(table.values[si, a])}\n")


def load_qtable(path) -> QTable:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != QTABLE_HEADER:
        raise ParseError(f"expected header '{QTABLE_HEADER}'", line=1)
    values = np.zeros((N_STATES, N_ACTIONS))
    seen = np.zeros((N_STATES, N_ACTIONS), dtype=bool)
    n_rows = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError(f"expected 6 fields, got {len(parts)}", line=lineno)
        try:
            pb, pdb, xb, xdb, a = (int(v) for v in parts[:5])
            value = float(parts[5])
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", line=lineno) from None
        if not (0 <= pb < N_PHI_BINS and 0 <= pdb < N_PHIDOT_BINS
                and 0 <= xb < N_X_BINS and 0 <= xdb < N_XDOT_BINS and 0 <= a < N_ACTIONS):
            raise ShapeError(f"line {lineno}: bin indices out of range in {line!r}")
        si = DiscreteState(pb, pdb, xb, xdb).flat_index()
        if seen[si, a]:
            raise ShapeError(f"line {lineno}: duplicate entry for state {si} action {a}")
        seen[si, a] = True
        values[si, a] = value
        n_rows += 1
    if n_rows != N_STATES * N_ACTIONS:
        raise ShapeError(f"expected {N_STATES * N_ACTIONS} rows, got {n_rows}")
    return QTable(values)


def save_training_curve(path, curve: list[EpisodeStats]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(CURVE_HEADER + "\n")
        for i, ep in enumerate(curve):
            f.write(f"{i},{ep.steps_survived},{_F9(ep.cumulative_reward)},{ep.terminal_reason}\n")
