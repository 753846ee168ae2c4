"""Flat key=value run configuration.

One diff-friendly text file configures the whole pipeline; `#` starts a
comment, blank lines are skipped, command-line flags override file values.
Angles cross this boundary in degrees (keys carry a _deg suffix); inside
the toolkit everything is radians.
"""

import math
from dataclasses import dataclass

import numpy as np

from .clik import DEFAULT_LINKS, Gains, PlanarArm
from .dynamics import PendulumParams
from .errors import ParseError, ValidationError
from .rl import LearningConfig

_FLOAT_KEYS = {
    "m", "l", "g", "b", "I",
    "alpha", "gamma", "h",
    "epsilon_start", "epsilon_end",
    "param_noise_rel", "error_noise",
    "kp", "kd",
    "theta0_deg", "theta_dot0_deg", "duration", "trace_h",
    "guess_I", "guess_b", "guess_theta0", "guess_theta_dot0",
    "fit_tolerance",
}
_INT_KEYS = {
    "episodes", "max_steps", "epsilon_decay_episodes", "seed",
    "trials", "fit_max_iterations",
}
_STR_KEYS = {"tracking_mode"}
_LIST_KEYS = {"links", "q0"}

KNOWN_KEYS = _FLOAT_KEYS | _INT_KEYS | _STR_KEYS | _LIST_KEYS

# mgl/I ratio giving the 0.75 s bench natural period; used when I is not set
_DEFAULT_MGL_OVER_I = 70.18

DEFAULTS = {
    "m": 0.05,
    "l": 0.05,
    "g": 9.81,
    "b": 6e-5,
    "alpha": 0.1,
    "gamma": 0.95,
    "episodes": 10_000,
    "h": 0.01,
    "max_steps": 1_000,
    "epsilon_start": 1.0,
    "epsilon_end": 0.05,
    "epsilon_decay_episodes": 8_000,
    "param_noise_rel": 0.02,
    "error_noise": 1e-3,
    "tracking_mode": "ideal",
    "seed": 8,
    "links": list(DEFAULT_LINKS),
    "kp": 100.0,
    "kd": 20.0,
    "theta0_deg": 20.0,
    "theta_dot0_deg": 0.0,
    "duration": 5.0,
    "trace_h": 0.002,
    "trials": 100,
    "fit_max_iterations": 2_000,
    "fit_tolerance": 1e-7,
}


def _parse_value(key: str, raw: str, lineno: int | None):
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _LIST_KEYS:
            return [float(v) for v in raw.split(",") if v.strip()]
        return raw
    except ValueError:
        raise ParseError(f"bad value {raw!r} for key {key!r}", line=lineno) from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", line=lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ValidationError(f"unknown config key {key!r} (line {lineno})")
        values[key] = _parse_value(key, raw, lineno)
    return values


def parse_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


@dataclass
class RunConfig:
    """Everything a command needs, validated against the owning types."""

    pendulum: PendulumParams
    learning: LearningConfig
    arm: PlanarArm
    gains: Gains
    q0: tuple[float, ...] | None
    theta0_deg: float
    theta_dot0_deg: float
    duration: float
    trace_h: float
    trials: int
    fit_max_iterations: int
    fit_tolerance: float
    fit_guess: tuple[float, float, float, float] | None   # None -> data-driven

    @property
    def theta0(self) -> float:
        return math.radians(self.theta0_deg)

    @property
    def theta_dot0(self) -> float:
        return math.radians(self.theta_dot0_deg)


def build_run_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Layer defaults <- config file <- flag overrides, then validate.

    Every constructed object applies its own invariants, so a bad value
    fails here, before any command runs.
    """
    cfg = dict(DEFAULTS)
    cfg.update(file_values or {})
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})

    for key in ("duration", "trace_h"):
        if cfg[key] <= 0:
            raise ValidationError(f"{key} must be > 0, got {cfg[key]!r}")
    if cfg["trials"] < 0:
        raise ValidationError(f"trials must be >= 0, got {cfg['trials']!r}")

    m, l, g = cfg["m"], cfg["l"], cfg["g"]
    inertia = cfg.get("I")
    if inertia is None:
        inertia = m * g * l / _DEFAULT_MGL_OVER_I
    pendulum = PendulumParams(I=inertia, b=cfg["b"], m=m, g=g, l=l)

    learning = LearningConfig(
        alpha=cfg["alpha"],
        gamma=cfg["gamma"],
        episodes=cfg["episodes"],
        h=cfg["h"],
        max_steps=cfg["max_steps"],
        epsilon_start=cfg["epsilon_start"],
        epsilon_end=cfg["epsilon_end"],
        epsilon_decay_episodes=cfg["epsilon_decay_episodes"],
        param_noise_rel=cfg["param_noise_rel"],
        error_noise=cfg["error_noise"],
        tracking_mode=cfg["tracking_mode"],
        seed=cfg["seed"],
    )

    arm = PlanarArm(tuple(cfg["links"]))
    gains = Gains(kp=np.array([cfg["kp"]]), kd=np.array([cfg["kd"]]))
    q0 = tuple(cfg["q0"]) if "q0" in cfg else None

    guess_keys = ("guess_I", "guess_b", "guess_theta0", "guess_theta_dot0")
    fit_guess = None
    if any(k in cfg for k in guess_keys):
        missing = [k for k in guess_keys if k not in cfg]
        if missing:
            raise ValidationError(f"incomplete fit guess, missing {missing}")
        fit_guess = tuple(cfg[k] for k in guess_keys)

    return RunConfig(
        pendulum=pendulum,
        learning=learning,
        arm=arm,
        gains=gains,
        q0=q0,
        theta0_deg=cfg["theta0_deg"],
        theta_dot0_deg=cfg["theta_dot0_deg"],
        duration=cfg["duration"],
        trace_h=cfg["trace_h"],
        trials=cfg["trials"],
        fit_max_iterations=cfg["fit_max_iterations"],
        fit_tolerance=cfg["fit_tolerance"],
        fit_guess=fit_guess,
    )
