"""Second-order closed-loop inverse kinematics for a planar serial arm.

The balancing loop commands a flange acceleration u along the base x axis.
A real arm tracks it by solving, at every step,

    q_ddot = J^-1 (Gamma_cmd + Kd*e_dot + Kp*e - J_dot*q_dot)

and the acceleration the flange actually sees follows from differential
kinematics, Gamma = J*q_ddot + J_dot*q_dot. Substituting one into the
other gives the closure identity

    Gamma_actual = Gamma_cmd + Kd*e_dot + Kp*e

so with zero tracking error the channel is transparent and the x component
of Gamma_actual is exactly the commanded u. The arm here is a desk-scale
planar stand-in (2 links with a position task, or 3 links with a
position+orientation task); either way the Jacobian is square, which is
what the control structure requires.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelDomainError, SingularityError

SINGULARITY_DET_MIN = 1e-8   # on the row-normalized Jacobian


@dataclass(frozen=True)
class PlanarArm:
    """Planar serial arm with as many task coordinates as joints.

    n = 2 links: task = (x, y) flange position.
    n = 3 links: task = (x, y, yaw), yaw = q1 + q2 + q3.
    """

    link_lengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "link_lengths", tuple(float(L) for L in self.link_lengths))
        if len(self.link_lengths) not in (2, 3):
            raise ModelDomainError("supported arms have 2 or 3 links")
        if any(not (math.isfinite(L) and L > 0) for L in self.link_lengths):
            raise ModelDomainError("link lengths must be finite and > 0")

    @property
    def n(self) -> int:
        return len(self.link_lengths)

    @property
    def task_dim(self) -> int:
        return self.n

    def fk(self, q) -> np.ndarray:
        """Task-space pose of the flange."""
        q = np.asarray(q, dtype=float)
        angles = np.cumsum(q)
        x = float(np.dot(self.link_lengths, np.cos(angles)))
        y = float(np.dot(self.link_lengths, np.sin(angles)))
        if self.n == 2:
            return np.array([x, y])
        return np.array([x, y, float(angles[-1])])

    def jacobian(self, q) -> np.ndarray:
        """Analytic Jacobian d(task)/d(q); square by construction."""
        q = np.asarray(q, dtype=float)
        if len(q) != self.n:
            raise ModelDomainError(f"expected {self.n} joint angles, got {len(q)}")
        angles = np.cumsum(q)
        s, c = np.sin(angles), np.cos(angles)
        L = self.link_lengths
        J = np.zeros((self.task_dim, self.n))
        # joint j moves every link k >= j
        for j in range(self.n):
            J[0, j] = -sum(L[k] * s[k] for k in range(j, self.n))
            J[1, j] = sum(L[k] * c[k] for k in range(j, self.n))
        if self.n == 3:
            J[2, :] = 1.0
        return J

    def jacobian_dot(self, q, q_dot) -> np.ndarray:
        """Time derivative of the Jacobian along q_dot (chain rule);
        linear in q_dot.
        """
        q = np.asarray(q, dtype=float)
        q_dot = np.asarray(q_dot, dtype=float)
        if len(q) != self.n or len(q_dot) != self.n:
            raise ModelDomainError(f"expected {self.n} joint angles and rates")
        angles = np.cumsum(q)
        rates = np.cumsum(q_dot)          # d(angles_k)/dt
        s, c = np.sin(angles), np.cos(angles)
        L = self.link_lengths
        Jd = np.zeros((self.task_dim, self.n))
        for j in range(self.n):
            Jd[0, j] = -sum(L[k] * c[k] * rates[k] for k in range(j, self.n))
            Jd[1, j] = -sum(L[k] * s[k] * rates[k] for k in range(j, self.n))
        return Jd


@dataclass
class JointState:
    q: np.ndarray
    q_dot: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.q_dot = np.asarray(self.q_dot, dtype=float)
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.q_dot))):
            raise ModelDomainError("non-finite joint state")


@dataclass
class Gains:
    """Diagonal PD gains on the task-space error, all entries > 0."""

    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        self.kp = np.atleast_1d(np.asarray(self.kp, dtype=float))
        self.kd = np.atleast_1d(np.asarray(self.kd, dtype=float))
        if np.any(self.kp <= 0) or np.any(self.kd <= 0):
            raise ModelDomainError("gains must be positive definite (diagonal > 0)")

    def expand(self, dim: int) -> "Gains":
        """Broadcast scalar gains to the task dimension."""
        kp = np.full(dim, self.kp[0]) if self.kp.size == 1 else self.kp
        kd = np.full(dim, self.kd[0]) if self.kd.size == 1 else self.kd
        if kp.size != dim or kd.size != dim:
            raise ModelDomainError(f"gain dimension does not match task dimension {dim}")
        return Gains(kp=kp, kd=kd)


@dataclass
class TrackingError:
    """Task-space pose error e and velocity error e_dot."""

    e: np.ndarray
    e_dot: np.ndarray

    def __post_init__(self):
        self.e = np.atleast_1d(np.asarray(self.e, dtype=float))
        self.e_dot = np.atleast_1d(np.asarray(self.e_dot, dtype=float))
        if self.e.shape != self.e_dot.shape:
            raise ModelDomainError("e and e_dot must have the same dimension")
        if not (np.all(np.isfinite(self.e)) and np.all(np.isfinite(self.e_dot))):
            raise ModelDomainError("non-finite tracking error")

    @classmethod
    def zero(cls, dim: int) -> "TrackingError":
        return cls(e=np.zeros(dim), e_dot=np.zeros(dim))


def normalized_det(J: np.ndarray) -> float:
    """Determinant after scaling each row to unit norm. Rows of zero norm
    make the matrix singular outright.
    """
    norms = np.linalg.norm(J, axis=1)
    if np.any(norms < 1e-300):
        return 0.0
    return float(np.linalg.det(J / norms[:, None]))


def clik_joint_accel(
    model: PlanarArm,
    js: JointState,
    gamma_cmd: np.ndarray,
    err: TrackingError,
    gains: Gains,
) -> np.ndarray:
    """Joint accelerations tracking a commanded task acceleration with PD
    correction: J^-1 (Gamma + Kd*e_dot + Kp*e - J_dot*q_dot).

    Near-singular configurations raise SingularityError instead of damping;
    the caller decides whether that aborts an episode.
    """
    gamma_cmd = np.asarray(gamma_cmd, dtype=float)
    if gamma_cmd.shape != (model.task_dim,):
        raise ModelDomainError(
            f"task acceleration must have dimension {model.task_dim}, got {gamma_cmd.shape}"
        )
    if err.e.shape != (model.task_dim,):
        raise ModelDomainError(
            f"tracking error must have dimension {model.task_dim}, got {err.e.shape}"
        )
    g = gains.expand(model.task_dim)
    J = model.jacobian(js.q)
    det = normalized_det(J)
    if abs(det) <= SINGULARITY_DET_MIN:
        raise SingularityError(det)
    rhs = gamma_cmd + g.kd * err.e_dot + g.kp * err.e - model.jacobian_dot(js.q, js.q_dot) @ js.q_dot
    return np.linalg.solve(J, rhs)


def eef_accel(model: PlanarArm, js: JointState, q_ddot: np.ndarray) -> np.ndarray:
    """Task acceleration produced by joint accelerations: J*q_ddot + J_dot*q_dot."""
    q_ddot = np.asarray(q_ddot, dtype=float)
    if q_ddot.shape != (model.n,):
        raise ModelDomainError(f"expected {model.n} joint accelerations, got {q_ddot.shape}")
    return model.jacobian(js.q) @ q_ddot + model.jacobian_dot(js.q, js.q_dot) @ js.q_dot


def tracking_accel(gamma_actual: np.ndarray) -> float:
    """Tracked flange acceleration along the base x axis: the first task
    component (projection by n = [1, 0, ...]).
    """
    gamma_actual = np.asarray(gamma_actual, dtype=float)
    if gamma_actual.size < 1:
        raise ModelDomainError("empty task acceleration")
    return float(gamma_actual.flat[0])


DEFAULT_LINKS = (0.4, 0.4)
DEFAULT_HOME = {2: (math.pi / 4.0, -math.pi / 2.0), 3: (math.pi / 4.0, -math.pi / 2.0, math.pi / 4.0)}


@dataclass
class TrackingChannel:
    """The environment-facing acceleration channel, one instance per episode.

    Holds the arm's joint state and a commanded task trajectory. Each step
    builds Gamma_cmd with u_cmd in the x slot, perturbs the tracking error
    with zero-mean Gaussian noise, runs the CLIK loop, integrates the arm,
    and returns the x component of the achieved task acceleration.

    When no explicit error is supplied the channel synthesizes one as the
    gap between the commanded trajectory (u_cmd double-integrated, other
    task coordinates held) and the arm's integrated motion. Not shareable
    across threads: single owner.
    """

    model: PlanarArm
    gains: Gains
    h: float
    noise_std: float = 0.0
    rng: np.random.Generator | None = None
    q0: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.h <= 0:
            raise ModelDomainError(f"step size must be > 0, got {self.h!r}")
        if self.noise_std < 0:
            raise ModelDomainError("noise_std must be >= 0")
        self.gains = self.gains.expand(self.model.task_dim)
        if self.q0 is None:
            self.q0 = DEFAULT_HOME[self.model.n]
        if len(self.q0) != self.model.n:
            raise ModelDomainError(f"home pose needs {self.model.n} joint angles")
        self.reset()

    def reset(self) -> None:
        """Return the arm to its home pose at rest, commanded trajectory aligned."""
        self.js = JointState(q=np.array(self.q0, dtype=float), q_dot=np.zeros(self.model.n))
        self.p_cmd = self.model.fk(self.js.q)
        self.v_cmd = np.zeros(self.model.task_dim)

    def _synthesized_error(self) -> TrackingError:
        e = self.p_cmd - self.model.fk(self.js.q)
        e_dot = self.v_cmd - self.model.jacobian(self.js.q) @ self.js.q_dot
        return TrackingError(e=e, e_dot=e_dot)

    def step(self, u_cmd: float, err: TrackingError | None = None) -> float:
        """Advance one control period; returns the tracked acceleration u_actual.

        Raises SingularityError when the arm reaches a singular pose; the
        channel state is untouched in that case.
        """
        if err is None:
            err = self._synthesized_error()
        if self.noise_std > 0.0:
            rng = self.rng if self.rng is not None else np.random.default_rng()
            err = TrackingError(
                e=err.e + rng.normal(0.0, self.noise_std, size=err.e.shape),
                e_dot=err.e_dot,
            )
        gamma_cmd = np.zeros(self.model.task_dim)
        gamma_cmd[0] = u_cmd
        q_ddot = clik_joint_accel(self.model, self.js, gamma_cmd, err, self.gains)
        u_actual = tracking_accel(eef_accel(self.model, self.js, q_ddot))
        # integrate both sides with the same explicit-Euler order the
        # balancing environment uses (position advances on the old velocity)
        self.js.q = self.js.q + self.h * self.js.q_dot
        self.js.q_dot = self.js.q_dot + self.h * q_ddot
        self.p_cmd = self.p_cmd + self.h * self.v_cmd
        self.v_cmd = self.v_cmd + self.h * gamma_cmd
        return u_actual
