"""Estimate pendulum inertia and friction from free-oscillation traces.

The trajectory of the freely swinging pendulum depends on its parameters
only through I, b (and the fixed gravity torque m*g*l): scaling I, b, and
m*g*l together leaves theta(t) unchanged, so m, g, l stay fixed and only
I and b are fit, together with the release conditions (theta0, theta_dot0),
which are unknown when the pendulum is released by hand.

The fit is a nonlinear least-squares in disguise: simulate the ODE for a
candidate, interpolate to the measured timestamps, and minimize the sum of
squared angle residuals with a Nelder-Mead simplex. Positivity of I is
enforced by searching over log(I); negative friction is vetoed with an
infinite objective.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    OscillationTrace,
    PendulumParams,
    _rk4_theta,
    natural_period,
    simulate_free_oscillation,
    zero_crossing_times,
)
from .errors import DataInsufficiencyWarning, DegenerateDataError, ModelDomainError
from .simplex import nelder_mead


@dataclass
class FitConfig:
    initial_guess: tuple[float, float, float, float]  # (I, b, theta0, theta_dot0)
    max_iterations: int = 2000
    tolerance: float = 1e-7        # relative simplex spread
    h: float | None = None         # integrator step; None -> min(data spacing, period/100)

    def __post_init__(self):
        if self.max_iterations <= 0:
            raise ModelDomainError("max_iterations must be > 0")
        if self.tolerance <= 0:
            raise ModelDomainError("tolerance must be > 0")
        I, b, _, _ = self.initial_guess
        if I <= 0 or b < 0:
            raise ModelDomainError("initial guess needs I > 0 and b >= 0")


@dataclass
class FitResult:
    params: PendulumParams    # fitted I, b with the fixed m, g, l carried through
    theta0: float
    theta_dot0: float
    rss: float                # residual sum of squares, rad^2
    iterations: int
    converged: bool


def _fit_step(data: OscillationTrace, fixed: tuple[float, float, float], I_guess: float,
              h: float | None) -> float:
    if h is not None:
        return h
    m, g, l = fixed
    period = 2.0 * math.pi * math.sqrt(I_guess / (m * g * l))
    spacing = float(np.min(np.diff(data.t))) if len(data) > 1 else period / 100.0
    return min(spacing, period / 100.0)


def _simulated_theta(candidate, data: OscillationTrace, fixed, h: float) -> np.ndarray:
    """Integrate the free-oscillation model for a candidate and linearly
    interpolate theta onto the data timestamps. Initial conditions are taken
    at the first timestamp.
    """
    I, b, theta0, theta_dot0 = candidate
    m, g, l = fixed
    p = PendulumParams(I=I, b=b, m=m, g=g, l=l)
    span = float(data.t[-1] - data.t[0])
    n_steps = max(1, int(math.ceil(span / h - 1e-9)))
    theta, _ = _rk4_theta(p, theta0, theta_dot0, h, n_steps)
    grid = data.t[0] + np.arange(n_steps + 1) * h
    return np.interp(data.t, grid, theta)


def residuals(
    candidate: tuple[float, float, float, float],
    data: OscillationTrace,
    fixed: tuple[float, float, float],
    h: float,
) -> np.ndarray:
    """theta_sim(t_i) - theta_data_i for one candidate (I, b, theta0, theta_dot0).

    Candidates with I <= 0 or b < 0 are rejected before any integration.
    """
    I, b, _, _ = candidate
    if I <= 0 or b < 0 or not all(map(math.isfinite, candidate)):
        raise ModelDomainError(f"invalid candidate (I={I!r}, b={b!r})")
    if len(data) == 0:
        raise ModelDomainError("empty data")
    if len(data) == 1:
        return np.array([candidate[2] - data.theta[0]])
    return _simulated_theta(candidate, data, fixed, h) - data.theta


def fit_parameters(
    data: OscillationTrace,
    fixed: tuple[float, float, float],
    cfg: FitConfig,
) -> FitResult:
    """Least-squares fit of (I, b, theta0, theta_dot0) to a free-oscillation trace.

    A stalled simplex restarts fresh from the incumbent while the iteration
    budget lasts; `converged` reports whether the final pass collapsed below
    the tolerance. Degenerate (constant-angle) data is rejected outright.
    Short data only warns: fewer than 50 samples or a span under two
    oscillation periods.
    """
    if float(np.ptp(data.theta)) < 1e-12:
        raise DegenerateDataError("constant-angle trace carries no dynamics to fit")
    I0, b0, theta00, theta_dot00 = cfg.initial_guess
    m, g, l = fixed
    period = 2.0 * math.pi * math.sqrt(I0 / (m * g * l))
    span = float(data.t[-1] - data.t[0])
    if len(data) < 50 or span < 2.0 * period:
        warnings.warn(
            f"{len(data)} samples over {span:.3g} s may underdetermine the fit",
            DataInsufficiencyWarning,
            stacklevel=2,
        )
    h = _fit_step(data, fixed, I0, cfg.h)

    # search in comparably-scaled coordinates: log(I) keeps inertia positive,
    # friction is measured in units of its initial guess (or I0 when b0 = 0)
    b_scale = b0 if b0 > 0 else I0

    def objective(z: np.ndarray) -> float:
        if z[1] < 0 or abs(z[0]) > 50.0:
            return math.inf
        candidate = (math.exp(z[0]), z[1] * b_scale, z[2], z[3])
        try:
            r = _simulated_theta(candidate, data, fixed, h) - data.theta
        except (OverflowError, ValueError):
            return math.inf
        rss = float(r @ r)
        return rss if math.isfinite(rss) else math.inf

    z = np.array([math.log(I0), b0 / b_scale if b0 > 0 else 0.0, theta00, theta_dot00])
    best = None
    iterations = 0
    converged = False
    # restart with a fresh simplex while the budget lasts and the previous
    # pass stalled without collapsing
    for _ in range(3):
        budget = cfg.max_iterations - iterations
        if budget <= 0:
            break
        res = nelder_mead(
            objective, z, max_iterations=budget, tolerance=cfg.tolerance
        )
        iterations += res.iterations
        if best is None or res.fun < best.fun:
            best = res
        converged = res.converged
        if converged:
            break
        z = res.x

    I_fit, b_fit = math.exp(best.x[0]), best.x[1] * b_scale
    return FitResult(
        params=PendulumParams(I=I_fit, b=b_fit, m=m, g=g, l=l),
        theta0=float(best.x[2]),
        theta_dot0=float(best.x[3]),
        rss=best.fun,
        iterations=iterations,
        converged=converged,
    )


def generate_synthetic_encoder_data(
    p: PendulumParams,
    theta0: float,
    theta_dot0: float = 0.0,
    duration: float = 5.0,
    sample_rate: float = 200.0,
    noise_std: float = 0.0,
    counts_per_rev: int | None = None,
    rng: np.random.Generator | None = None,
) -> OscillationTrace:
    """Encoder-like measurements of a free oscillation.

    The reference trajectory is the RK4 solution resampled at sample_rate,
    with optional i.i.d. Gaussian angle noise and optional quantization to
    the nearest encoder count (2*pi/counts_per_rev), mimicking an
    incremental encoder referenced at the hanging position.
    """
    if sample_rate <= 0:
        raise ModelDomainError(f"sample_rate must be > 0, got {sample_rate!r}")
    if duration <= 0:
        raise ModelDomainError(f"duration must be > 0, got {duration!r}")
    h_int = min(1.0 / sample_rate, natural_period(p) / 100.0)
    ref = simulate_free_oscillation(p, theta0, theta_dot0, h=h_int, duration=duration)
    n = int(duration * sample_rate + 1e-9)
    t = np.arange(n + 1) / sample_rate
    theta = np.interp(t, ref.t, ref.theta)
    if noise_std > 0.0:
        rng = rng if rng is not None else np.random.default_rng()
        theta = theta + rng.normal(0.0, noise_std, size=theta.shape)
    if counts_per_rev is not None:
        step = 2.0 * math.pi / counts_per_rev
        theta = np.round(theta / step) * step
    return OscillationTrace(t=t, theta=theta)


def _agm(a: float, b: float) -> float:
    for _ in range(60):
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        if abs(a - b) < 1e-15 * a:
            break
    return a


def _large_amplitude_factor(amplitude: float) -> float:
    """Pendulum period ratio T(amplitude)/T_small = (2/pi) * K(sin(a/2)),
    with the elliptic integral evaluated by the AGM.
    """
    amplitude = min(abs(amplitude), math.pi - 1e-6)
    k = math.sin(0.5 * amplitude)
    return 1.0 / _agm(1.0, math.sqrt(1.0 - k * k))


def estimate_initial_guess(
    data: OscillationTrace, fixed: tuple[float, float, float]
) -> tuple[float, float, float, float]:
    """Heuristic starting point for fit_parameters, from the data alone.

    I comes from the zero-crossing period corrected for amplitude; b from
    the decay of successive oscillation peaks (clamped to >= 0); the release
    state from the first sample and a first finite difference.
    """
    m, g, l = fixed
    mgl = m * g * l
    offset = float(np.mean(data.theta))
    centered = data.theta - offset
    amplitude = float(np.max(np.abs(centered)))
    if amplitude < 1e-9:
        raise DegenerateDataError("constant-angle trace carries no dynamics to fit")
    crossings = zero_crossing_times(OscillationTrace(data.t, centered))
    if len(crossings) >= 3:
        # near the separatrix the period shrinks fast as damping bleeds
        # energy, so estimate from the tail of the trace where the swing
        # is most decayed, with the amplitude of that same window
        tail = crossings[-min(len(crossings) - 1, 4) - 1:]
        period = 2.0 * float(np.mean(np.diff(tail)))
        amp_tail = float(np.max(np.abs(centered[data.t >= tail[0]])))
        period /= _large_amplitude_factor(amp_tail)
    else:
        period = 0.75  # no full swing visible; any plausible scale will do
    I_guess = mgl * (period / (2.0 * math.pi)) ** 2

    # peak-to-peak decay -> log decrement -> b ~ 2*I*delta/period
    peaks = [
        abs(centered[i])
        for i in range(1, len(centered) - 1)
        if abs(centered[i]) >= abs(centered[i - 1]) and abs(centered[i]) >= abs(centered[i + 1])
        and abs(centered[i]) > 0.2 * amplitude
    ]
    if len(peaks) >= 2 and peaks[-1] < peaks[0]:
        n_half = max(1, len(peaks) - 1)
        delta = math.log(peaks[0] / peaks[-1]) / n_half
        b_guess = max(0.0, 2.0 * I_guess * delta / period)
    else:
        b_guess = 0.0

    theta0 = float(data.theta[0])
    if len(data) > 1:
        theta_dot0 = float((data.theta[1] - data.theta[0]) / (data.t[1] - data.t[0]))
    else:
        theta_dot0 = 0.0
    return I_guess, b_guess, theta0, theta_dot0


# --- fit result file: flat key=value text ---

def save_fit_result(path, fit: FitResult) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"I={fit.params.I:.9g}\n")
        f.write(f"b={fit.params.b:.9g}\n")
        f.write(f"theta0={fit.theta0:.9g}\n")
        f.write(f"theta_dot0={fit.theta_dot0:.9g}\n")
        f.write(f"rss={fit.rss:.9g}\n")
        f.write(f"converged={'true' if fit.converged else 'false'}\n")
