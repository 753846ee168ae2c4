"""Acceptance suite: the seven release criteria, each printed as a
pass/fail line with its measured numbers (run with `pytest -s` to see them).
"""

import math
import re
import statistics
import time

import numpy as np
import pytest

from qpend import cli
from qpend.clik import Gains, JointState, PlanarArm, clik_joint_accel, eef_accel, normalized_det, TrackingError
from qpend.dynamics import ContinuousState, default_params, simulate_free_oscillation
from qpend.rl import (
    LearningConfig,
    QTable,
    TabularMDP,
    discretize,
    evaluate,
    oracle_value_iteration,
    q_update,
    train,
)
from qpend.sysid import FitConfig, fit_parameters, generate_synthetic_encoder_data


def report(criterion: str, ok: bool, detail: str):
    print(f"\n[acceptance] {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="session")
def default_training():
    """The criterion-5 training run: library defaults, nothing overridden."""
    cfg = LearningConfig()
    t0 = time.perf_counter()
    table, curve = train(cfg)
    wall = time.perf_counter() - t0
    return cfg, table, curve, wall


def test_criterion_1_natural_period(tmp_path, capsys):
    t0 = time.perf_counter()
    out = tmp_path / "trace.csv"
    code = cli.main(["oscillate", "--out", str(out)])
    wall = time.perf_counter() - t0
    text = capsys.readouterr().out
    assert code == 0
    reported = float(re.search(r"natural_period_s=([0-9.eE+-]+)", text).group(1))
    crossing = float(re.search(r"zero_crossing_period_s=([0-9.eE+-]+)", text).group(1))
    ok = (
        abs(reported - 0.75) / 0.75 < 0.02
        and abs(crossing - reported) / reported < 0.02
        and wall < 1.0
    )
    report(
        "criterion 1 (natural period)",
        ok,
        f"reported {reported:.4f} s, crossings {crossing:.4f} s, wall {wall:.2f} s",
    )


def test_criterion_2_sysid_round_trip():
    p = default_params()
    fixed = (p.m, p.g, p.l)
    theta0 = math.pi - 0.3
    t0 = time.perf_counter()

    # noiseless: 5 s at h = 0.005, guess perturbed +/-30 percent
    clean = simulate_free_oscillation(p, theta0, 0.0, h=0.005, duration=5.0)
    guess = (1.3 * p.I, 0.7 * p.b, theta0 + 0.1, 0.3)
    fit = fit_parameters(clean, fixed, FitConfig(initial_guess=guess))
    err_I = abs(fit.params.I - p.I) / p.I
    err_b = abs(fit.params.b - p.b) / p.b

    # noisy: sigma = 0.002 rad, median over 20 seeds
    errs_I, errs_b = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        noisy = generate_synthetic_encoder_data(
            p, theta0, 0.0, duration=5.0, sample_rate=200.0, noise_std=0.002, rng=rng
        )
        # the noise floor dominates well before 1e-7 simplex spread
        nfit = fit_parameters(noisy, fixed, FitConfig(initial_guess=guess, tolerance=1e-6))
        errs_I.append(abs(nfit.params.I - p.I) / p.I)
        errs_b.append(abs(nfit.params.b - p.b) / p.b)
    med_I = statistics.median(errs_I)
    med_b = statistics.median(errs_b)
    wall = time.perf_counter() - t0

    ok = err_I < 0.01 and err_b < 0.01 and med_I < 0.03 and med_b < 0.15 and wall < 30.0
    report(
        "criterion 2 (sysid round-trip)",
        ok,
        f"noiseless I {err_I:.2e} b {err_b:.2e}; noisy medians I {med_I:.2e} b {med_b:.2e}; "
        f"wall {wall:.1f} s",
    )


def test_criterion_3_clik_closure():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2718)
    worst_closure = 0.0
    worst_jac = 0.0
    worst_jdot = 0.0
    arms = [PlanarArm((0.4, 0.4)), PlanarArm((0.5, 0.4, 0.3))]
    count = 0
    while count < 1000:
        arm = arms[count % 2]
        q = rng.uniform(-math.pi, math.pi, arm.n)
        if abs(normalized_det(arm.jacobian(q))) < 1e-3:
            continue
        count += 1
        dim = arm.task_dim
        js = JointState(q=q, q_dot=rng.normal(0, 1.0, arm.n))
        gains = Gains(kp=rng.uniform(10, 200, dim), kd=rng.uniform(1, 50, dim))
        err = TrackingError(e=rng.normal(0, 0.02, dim), e_dot=rng.normal(0, 0.2, dim))
        gamma = rng.normal(0, 2.0, dim)
        qdd = clik_joint_accel(arm, js, gamma, err, gains)
        achieved = eef_accel(arm, js, qdd)
        expected = gamma + gains.kd * err.e_dot + gains.kp * err.e
        worst_closure = max(worst_closure, float(np.max(np.abs(achieved - expected))))

        # analytic J against forward-kinematics differences
        J = arm.jacobian(q)
        delta = 1e-7
        for j in range(arm.n):
            dq = np.zeros(arm.n)
            dq[j] = delta
            fd = (arm.fk(q + dq) - arm.fk(q)) / delta
            worst_jac = max(worst_jac, float(np.max(np.abs(fd - J[:, j]))))
        # analytic J_dot against central differences along the flow
        d = 1e-6
        fd_jdot = (arm.jacobian(q + d * js.q_dot) - arm.jacobian(q - d * js.q_dot)) / (2 * d)
        worst_jdot = max(worst_jdot, float(np.max(np.abs(fd_jdot - arm.jacobian_dot(q, js.q_dot)))))
    wall = time.perf_counter() - t0

    ok = worst_closure < 1e-10 and worst_jac < 1e-6 and worst_jdot < 1e-5 and wall < 5.0
    report(
        "criterion 3 (CLIK closure identity)",
        ok,
        f"closure {worst_closure:.2e}, J fd {worst_jac:.2e}, Jdot fd {worst_jdot:.2e}, "
        f"wall {wall:.1f} s",
    )


def test_criterion_4_q_learning_oracle_equivalence():
    # deterministic 2-state chain, gamma = 0.5, uniform-random behavior,
    # alpha = 1/visit-count, 1e6 steps against the value-iteration fixed point
    t0 = time.perf_counter()
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0
    P[0, 1, 1] = 1.0
    P[1, 0, 1] = 1.0
    P[1, 1, 0] = 1.0
    R = np.array([[0.0, 1.0], [2.0, 0.0]])
    mdp = TabularMDP(transitions=P, rewards=R, gamma=0.5)
    q_star = oracle_value_iteration(mdp, tol=1e-10)
    assert q_star == pytest.approx(np.array([[1.5, 3.0], [4.0, 1.5]]), abs=1e-9)

    q = np.zeros((2, 2))
    visits = np.zeros((2, 2), dtype=int)
    rng = np.random.default_rng(123)
    s = 0
    for _ in range(1_000_000):
        a = int(rng.integers(2))
        s_next = mdp.sample_next(s, a, rng)
        visits[s, a] += 1
        q_update(q, s, a, float(R[s, a]), s_next, alpha=1.0 / visits[s, a], gamma=mdp.gamma)
        s = s_next
    err = float(np.max(np.abs(q - q_star)))
    wall = time.perf_counter() - t0

    ok = err < 1e-2 and wall < 30.0
    report(
        "criterion 4 (Q-learning oracle equivalence)",
        ok,
        f"max|Q - Q*| {err:.2e}, wall {wall:.1f} s",
    )


def test_criterion_5_end_to_end_training(default_training, tmp_path, capsys):
    import dataclasses

    from qpend.rl import _EVAL_STREAM, episode_rng, make_episode_env, run_episode, save_qtable

    cfg, table, curve, wall_train = default_training
    t0 = time.perf_counter()
    summary = evaluate(table, 100, cfg)
    baseline = evaluate(QTable.zeros(), 100, cfg)
    wall = wall_train + (time.perf_counter() - t0)

    # the same benchmark through the CLI surface agrees with the library
    table_path = tmp_path / "table.csv"
    save_qtable(table_path, table)
    assert cli.main(["eval", "--table", str(table_path), "--trials", "100"]) == 0
    cli_median = float(
        re.search(r"median_survival_s=([0-9.eE+-]+)", capsys.readouterr().out).group(1)
    )

    early = statistics.median(e.steps_survived for e in curve[:1000])
    late = statistics.median(e.steps_survived for e in curve[9000:])

    # pre-trained table, greedy, parameter noise off: the typical episode
    # balances all the way to the step cap
    quiet = dataclasses.replace(cfg, param_noise_rel=0.0)
    noise_free = []
    for i in range(20):
        rng = episode_rng(cfg.seed, _EVAL_STREAM, i)
        env = make_episode_env(default_params(), quiet, rng)
        noise_free.append(run_episode(env, table, quiet, rng, epsilon=0.0, learn=False))
    noise_free_median = statistics.median(e.steps_survived for e in noise_free)

    ok = (
        wall < 300.0
        and summary.median_survival_s >= 5.0
        and cli_median >= 5.0
        and baseline.median_survival_s < 1.0
        and late >= 500          # final-1000-episode median, 5 s at h = 0.01
        and late > early         # monotone learning signal
        and noise_free_median == cfg.max_steps
    )
    report(
        "criterion 5 (end-to-end training)",
        ok,
        f"train {wall_train:.0f} s, eval median {summary.median_survival_s:.2f} s "
        f"(CLI {cli_median:.2f} s), baseline {baseline.median_survival_s:.2f} s, "
        f"final-1000 median {late:.0f} steps (first-1000 {early:.0f}), "
        f"noise-free greedy median {noise_free_median:.0f}/{cfg.max_steps} steps, "
        f"total wall {wall:.0f} s",
    )


def test_criterion_6_discretization_partition():
    t0 = time.perf_counter()
    rng = np.random.default_rng(31415)
    n = 1_000_000
    D = math.radians
    phi = rng.uniform(-D(11), D(11), n)
    phidot = rng.uniform(-D(150), D(150), n)
    x = rng.uniform(-0.22, 0.22, n)
    xdot = rng.uniform(-1.5, 1.5, n)
    # keep strictly inside the failure boundary: the criterion samples
    # in-range states (boundary membership is checked separately below)
    phi[np.abs(phi) >= D(11)] = 0.0
    x[np.abs(x) >= 0.22] = 0.0

    phi_members = np.stack([
        phi < -D(5), (-D(5) <= phi) & (phi < -D(1)), (-D(1) <= phi) & (phi < 0),
        (0 <= phi) & (phi < D(1)), (D(1) <= phi) & (phi < D(5)), D(5) <= phi,
    ])
    pd_members = np.stack([
        phidot <= -D(50), (-D(50) < phidot) & (phidot <= -D(10)),
        (-D(10) < phidot) & (phidot < D(10)), (D(10) <= phidot) & (phidot < D(50)),
        D(50) <= phidot,
    ])
    x_members = np.stack([x <= -0.08, (-0.08 < x) & (x < 0.08), 0.08 <= x])
    xd_members = np.stack([xdot <= -0.5, (-0.5 < xdot) & (xdot < 0.5), 0.5 <= xdot])
    exclusive = all(
        bool(np.all(m.sum(axis=0) == 1))
        for m in (phi_members, pd_members, x_members, xd_members)
    )

    # the discretize map agrees with the interval memberships
    stride = 50   # 20,000 spot checks across the million samples
    agree = True
    for i in range(0, n, stride):
        ds = discretize(ContinuousState(x[i], xdot[i], phi[i], phidot[i]))
        if ds is None or ds != (
            int(np.argmax(phi_members[:, i])), int(np.argmax(pd_members[:, i])),
            int(np.argmax(x_members[:, i])), int(np.argmax(xd_members[:, i])),
        ):
            agree = False
            break

    # every listed boundary lands where the bracket notation says
    s = lambda **kw: ContinuousState(
        kw.get("x", 0.0), kw.get("xdot", 0.0), kw.get("phi", 0.0), kw.get("phidot", 0.0)
    )
    boundaries_ok = (
        discretize(s(phi=-D(11))) is None
        and discretize(s(phi=D(11))) is None
        and discretize(s(phi=-D(5))).phi_bin == 1
        and discretize(s(phi=-D(1))).phi_bin == 2
        and discretize(s(phi=0.0)).phi_bin == 3
        and discretize(s(phi=D(1))).phi_bin == 4
        and discretize(s(phi=D(5))).phi_bin == 5
        and discretize(s(phidot=-D(50))).phidot_bin == 0
        and discretize(s(phidot=-D(10))).phidot_bin == 1
        and discretize(s(phidot=D(10))).phidot_bin == 3
        and discretize(s(phidot=D(50))).phidot_bin == 4
        and discretize(s(x=-0.22)) is None
        and discretize(s(x=0.22)) is None
        and discretize(s(x=-0.08)).x_bin == 0
        and discretize(s(x=0.08)).x_bin == 2
        and discretize(s(xdot=-0.5)).xdot_bin == 0
        and discretize(s(xdot=0.5)).xdot_bin == 2
    )
    wall = time.perf_counter() - t0

    ok = exclusive and agree and boundaries_ok and wall < 5.0
    report(
        "criterion 6 (discretization partition)",
        ok,
        f"exclusive {exclusive}, map agreement {agree}, boundaries {boundaries_ok}, "
        f"wall {wall:.1f} s",
    )


def test_criterion_7_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text("episodes = 500\nseed = 8\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    code_a = cli.main(["train", "--config", str(cfg), "--out", str(a),
                       "--curve", str(tmp_path / "ca.csv")])
    code_b = cli.main(["train", "--config", str(cfg), "--out", str(b),
                       "--curve", str(tmp_path / "cb.csv")])
    identical = a.read_bytes() == b.read_bytes()
    curves_identical = (tmp_path / "ca.csv").read_bytes() == (tmp_path / "cb.csv").read_bytes()
    ok = code_a == 0 and code_b == 0 and identical and curves_identical
    report(
        "criterion 7 (determinism)",
        ok,
        f"table bytes identical {identical}, curve bytes identical {curves_identical}",
    )
