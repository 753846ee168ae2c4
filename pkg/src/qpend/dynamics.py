"""Continuous-time pendulum models.

Two views of the same physical pendulum live here:

* the linearized flange/pendulum model used by the control loop, valid
  near the unstable upright equilibrium (phi measured from upright),

      x_ddot   = u
      phi_ddot = (m*g*l/I)*phi - (b/I)*phi_dot - (m*l/I)*u

  stepped with explicit Euler at a fixed control period, and

* the full nonlinear free-oscillation model about the hanging position
  (theta measured from vertical down, theta + phi = pi),

      I*theta_ddot + b*theta_dot + m*g*l*sin(theta) = 0

  integrated with fixed-step RK4 for system identification work.

All angles are radians; degrees appear only at the CLI/file boundary.
Every function here is pure.
"""

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ModelDomainError, ParseError, StepSizeWarning

# Failure limits: the pendulum may not lean past 11 degrees and the flange
# may not run past 0.22 m from home. Both bounds are inclusive.
PHI_LIMIT_RAD = math.radians(11.0)
X_LIMIT_M = 0.22


@dataclass(frozen=True)
class PendulumParams:
    """Physical constants of the pendulum/encoder assembly.

    I  - moment of inertia about the rotation axis, kg m^2
    b  - viscous friction coefficient, N m s/rad
    m  - pendulum mass, kg
    g  - gravity acceleration, m/s^2
    l  - distance from the center of mass to the rotation axis, m
    """

    I: float
    b: float
    m: float
    g: float
    l: float

    def __post_init__(self):
        for name in ("I", "m", "g", "l"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ModelDomainError(f"{name} must be finite and > 0, got {v!r}")
        if not (math.isfinite(self.b) and self.b >= 0):
            raise ModelDomainError(f"b must be finite and >= 0, got {self.b!r}")

    @property
    def mgl(self) -> float:
        """Gravity torque coefficient m*g*l, N m."""
        return self.m * self.g * self.l

    def with_updates(self, **kwargs) -> "PendulumParams":
        return replace(self, **kwargs)


def default_params() -> PendulumParams:
    """Bench-scale defaults: a 50 g bob 5 cm from the axis, inertia picked
    so the small-angle natural period is 0.75 s (mgl/I = 70.18 1/s^2), and
    light viscous damping. All overridable through the config file.
    """
    m, g, l = 0.05, 9.81, 0.05
    mgl = m * g * l
    return PendulumParams(I=mgl / 70.18, b=6e-5, m=m, g=g, l=l)


class ContinuousState(NamedTuple):
    """Flange and pendulum state [x, x_dot, phi, phi_dot].

    x, x_dot     - flange displacement (m) and velocity (m/s) along the base x axis
    phi, phi_dot - pendulum angle (rad) and rate (rad/s) from vertical upright
    """

    x: float
    x_dot: float
    phi: float
    phi_dot: float


UPRIGHT = ContinuousState(0.0, 0.0, 0.0, 0.0)


def _check_finite_state(s: ContinuousState, u: float | None = None) -> None:
    if not all(map(math.isfinite, s)):
        raise ModelDomainError(f"non-finite state {s!r}")
    if u is not None and not math.isfinite(u):
        raise ModelDomainError(f"non-finite acceleration command {u!r}")


def linearized_step(
    s: ContinuousState, u_actual: float, p: PendulumParams, h: float
) -> ContinuousState:
    """One explicit-Euler step of the linearized model driven by the
    tracked flange acceleration u_actual.

    The upright state with u = 0 is an exact fixed point, and the map is
    strictly linear in (s, u), so superposition holds to the last bit.
    """
    if h <= 0 or not math.isfinite(h):
        raise ModelDomainError(f"step size must be positive and finite, got {h!r}")
    _check_finite_state(s, u_actual)
    x, x_dot, phi, phi_dot = s
    phi_ddot = (p.mgl * phi - p.b * phi_dot) / p.I - (p.m * p.l / p.I) * u_actual
    return ContinuousState(
        x + h * x_dot,
        x_dot + h * u_actual,
        phi + h * phi_dot,
        phi_dot + h * phi_ddot,
    )


def is_failure(s: ContinuousState) -> bool:
    """True once the pendulum leans to +/-11 deg or the flange runs to +/-0.22 m."""
    return abs(s.phi) >= PHI_LIMIT_RAD or abs(s.x) >= X_LIMIT_M


def free_oscillation_rhs(theta: float, theta_dot: float, p: PendulumParams) -> float:
    """Angular acceleration of the freely swinging pendulum,
    theta_ddot = -(b*theta_dot + m*g*l*sin(theta)) / I.

    Vanishes at the hanging (theta = 0) and upright (theta = pi) equilibria.
    """
    return -(p.b * theta_dot + p.mgl * math.sin(theta)) / p.I


def natural_period(p: PendulumParams) -> float:
    """Small-angle period 2*pi*sqrt(I/(m*g*l)) about the hanging position."""
    return 2.0 * math.pi * math.sqrt(p.I / p.mgl)


@dataclass
class OscillationTrace:
    """A free-oscillation recording: theta(t) sampled at strictly
    increasing timestamps. Iterating yields (t, theta) pairs.
    """

    t: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.t.shape != self.theta.shape or self.t.ndim != 1:
            raise ModelDomainError("t and theta must be 1-D arrays of equal length")
        if len(self.t) == 0:
            raise ModelDomainError("empty trace")
        if self.t[0] < 0 or np.any(np.diff(self.t) <= 0):
            raise ModelDomainError("timestamps must be non-negative and strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        return zip(self.t, self.theta)


def _rk4_theta(
    p: PendulumParams, theta0: float, theta_dot0: float, h: float, n_steps: int
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 on the free-oscillation ODE. Returns (theta, theta_dot)
    arrays of length n_steps + 1. The RHS is inlined: this loop sits inside
    every least-squares objective evaluation.
    """
    c_b = p.b / p.I
    c_g = p.mgl / p.I
    sin = math.sin
    th, td = float(theta0), float(theta_dot0)
    thetas = [th]
    theta_dots = [td]
    half = 0.5 * h
    sixth = h / 6.0
    for _ in range(n_steps):
        a1 = -(c_b * td + c_g * sin(th))
        k2t = td + half * a1
        a2 = -(c_b * k2t + c_g * sin(th + half * td))
        k3t = td + half * a2
        a3 = -(c_b * k3t + c_g * sin(th + half * k2t))
        k4t = td + h * a3
        a4 = -(c_b * k4t + c_g * sin(th + h * k3t))
        th += sixth * (td + 2.0 * k2t + 2.0 * k3t + k4t)
        td += sixth * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        thetas.append(th)
        theta_dots.append(td)
    return np.array(thetas), np.array(theta_dots)


def simulate_free_oscillation(
    p: PendulumParams,
    theta0: float,
    theta_dot0: float = 0.0,
    h: float = 0.002,
    duration: float = 5.0,
) -> OscillationTrace:
    """Integrate the free-oscillation ODE with fixed-step RK4.

    The trace starts at (0, theta0) and holds floor(duration/h) + 1 samples.
    A step coarser than a twentieth of the natural period still integrates
    but raises a StepSizeWarning.
    """
    if h <= 0:
        raise ModelDomainError(f"step size must be positive, got {h!r}")
    if duration <= h:
        raise ModelDomainError(f"duration {duration!r} must exceed the step {h!r}")
    if not (math.isfinite(theta0) and math.isfinite(theta_dot0)):
        raise ModelDomainError("non-finite initial conditions")
    if h > natural_period(p) / 20.0:
        warnings.warn(
            f"step {h} s is coarse for a {natural_period(p):.3f} s period",
            StepSizeWarning,
            stacklevel=2,
        )
    # tiny slack so duration = n*h yields exactly n steps despite rounding
    n_steps = int(duration / h + 1e-9)
    theta, _ = _rk4_theta(p, theta0, theta_dot0, h, n_steps)
    return OscillationTrace(t=np.arange(n_steps + 1) * h, theta=theta)


def oscillation_energy(p: PendulumParams, theta: np.ndarray, theta_dot: np.ndarray) -> np.ndarray:
    """Total mechanical energy 0.5*I*theta_dot^2 + m*g*l*(1 - cos(theta)).

    Constant along undamped trajectories; non-increasing with b > 0.
    """
    return 0.5 * p.I * np.asarray(theta_dot) ** 2 + p.mgl * (1.0 - np.cos(theta))


def zero_crossing_times(trace: OscillationTrace, level: float = 0.0) -> np.ndarray:
    """Times where theta crosses the given level, by linear interpolation
    between bracketing samples. Exact hits count once.
    """
    y = trace.theta - level
    t = trace.t
    crossings = []
    for i in range(len(y) - 1):
        y0, y1 = y[i], y[i + 1]
        if y0 == 0.0:
            crossings.append(t[i])
        elif (y0 < 0.0 < y1) or (y0 > 0.0 > y1):
            crossings.append(t[i] + (t[i + 1] - t[i]) * (-y0) / (y1 - y0))
    if len(y) > 1 and y[-1] == 0.0:
        crossings.append(t[-1])
    return np.array(crossings)


def estimate_period_from_crossings(trace: OscillationTrace) -> float:
    """Oscillation period as twice the mean spacing of same-direction zero
    crossings about the trace mean. Needs at least three crossings.
    """
    centered = OscillationTrace(trace.t, trace.theta - float(np.mean(trace.theta)))
    times = zero_crossing_times(centered)
    if len(times) < 3:
        raise ModelDomainError("too few zero crossings to estimate a period")
    spacings = np.diff(times)
    return 2.0 * float(np.mean(spacings))


# --- trace file format: CSV, header `t,theta_rad`, 9 significant digits ---

TRACE_HEADER = "t,theta_rad"
_F9 = "{:.9g}".format


def save_trace(path, trace: OscillationTrace) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(TRACE_HEADER + "\n")
        for t, theta in trace:
            f.write(f"{_F9(t)},{_F9(theta)}\n")


def load_trace(path) -> OscillationTrace:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise ParseError(f"expected header '{TRACE_HEADER}'", line=1)
    ts, thetas = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 2 comma-separated fields, got {len(parts)}", line=lineno)
        try:
            ts.append(float(parts[0]))
            thetas.append(float(parts[1]))
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", line=lineno) from None
    if not ts:
        raise ParseError("trace file has no samples", line=len(lines))
    return OscillationTrace(t=np.array(ts), theta=np.array(thetas))
