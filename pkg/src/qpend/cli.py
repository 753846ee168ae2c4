"""Command-line pipeline: synthesize/fit oscillation data, train, evaluate,
and roll out trajectories as figure-ready CSVs.

Commands
    oscillate  simulate a free oscillation, write `t,theta_rad` CSV
    fit        least-squares fit of I and b to a trace CSV
    train      train the balancing policy, write table + training curve CSVs
    eval       greedy evaluation of a trained table
    rollout    one greedy episode as a per-step trajectory CSV

Exit codes: 0 ok, 2 validation, 3 I/O, 4 parse, 5 fit did not converge,
6 wrong table/trace shape. All outputs are UTF-8 CSV, 9 significant digits,
angles in radians unless the header says _deg.
"""

import argparse
import statistics
import sys

from . import dynamics, rl, sysid
from .config import RunConfig, build_run_config, parse_config_file
from .errors import ParseError, ShapeError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_NONCONVERGENCE = 5
EXIT_SHAPE = 6

ROLLOUT_HEADER = "t,u_cmd,u_actual,x,x_dot,phi,phi_dot"
EVAL_HEADER = "trial,steps,survival_s,terminal"
_F9 = "{:.9g}".format


def _load_run_config(args) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {"seed": getattr(args, "seed", None)}
    if getattr(args, "episodes", None) is not None:
        overrides["episodes"] = args.episodes
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    return build_run_config(file_values, overrides)


def cmd_oscillate(args) -> int:
    cfg = _load_run_config(args)
    trace = dynamics.simulate_free_oscillation(
        cfg.pendulum, cfg.theta0, cfg.theta_dot0, h=cfg.trace_h, duration=cfg.duration
    )
    dynamics.save_trace(args.out, trace)
    period = dynamics.natural_period(cfg.pendulum)
    print(f"natural_period_s={_F9(period)}")
    try:
        measured = dynamics.estimate_period_from_crossings(trace)
        print(f"zero_crossing_period_s={_F9(measured)}")
    except ValidationError:
        print("zero_crossing_period_s=nan")
    print(f"wrote {args.out} ({len(trace)} samples)")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_run_config(args)
    data = dynamics.load_trace(args.data)
    fixed = (cfg.pendulum.m, cfg.pendulum.g, cfg.pendulum.l)
    guess = cfg.fit_guess
    if guess is None:
        guess = sysid.estimate_initial_guess(data, fixed)
    fit = sysid.fit_parameters(
        data,
        fixed,
        sysid.FitConfig(
            initial_guess=guess,
            max_iterations=cfg.fit_max_iterations,
            tolerance=cfg.fit_tolerance,
        ),
    )
    sysid.save_fit_result(args.out, fit)
    print(f"I={_F9(fit.params.I)}")
    print(f"b={_F9(fit.params.b)}")
    print(f"rss={_F9(fit.rss)}")
    print(f"converged={'true' if fit.converged else 'false'}")
    print(f"wrote {args.out}")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGENCE


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    table, curve = rl.train(
        cfg.learning, cfg.pendulum, arm=cfg.arm, gains=cfg.gains, q0=cfg.q0
    )
    rl.save_qtable(args.out, table)
    curve_path = args.curve if args.curve else _derive_curve_path(args.out)
    rl.save_training_curve(curve_path, curve)
    last = curve[-min(1000, len(curve)):]
    median_steps = statistics.median(e.steps_survived for e in last)
    print(f"episodes={len(curve)}")
    print(f"final_median_survival_s={_F9(median_steps * cfg.learning.h)}")
    print(f"wrote {args.out} and {curve_path}")
    return EXIT_OK


def _derive_curve_path(table_path: str) -> str:
    stem, dot, ext = table_path.rpartition(".")
    return f"{stem}_curve.{ext}" if dot else f"{table_path}_curve.csv"


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    table = rl.load_qtable(args.table)
    summary = rl.evaluate(
        table, cfg.trials, cfg.learning, cfg.pendulum,
        arm=cfg.arm, gains=cfg.gains, q0=cfg.q0,
    )
    if summary.n_trials == 0:
        print("no_data=true")
        return EXIT_OK
    print(f"trials={summary.n_trials}")
    print(f"median_survival_s={_F9(summary.median_survival_s)}")
    print(f"mean_survival_s={_F9(summary.mean_survival_s)}")
    print(f"failures={summary.failures}")
    print(f"timeouts={summary.timeouts}")
    print(f"singularities={summary.singularities}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(EVAL_HEADER + "\n")
            for i, ep in enumerate(summary.episodes):
                f.write(
                    f"{i},{ep.steps_survived},{_F9(ep.steps_survived * cfg.learning.h)},"
                    f"{ep.terminal_reason}\n"
                )
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    cfg = _load_run_config(args)
    table = rl.load_qtable(args.table)
    rng = rl.episode_rng(cfg.learning.seed, rl._EVAL_STREAM, 0)
    env = rl.make_episode_env(
        cfg.pendulum, cfg.learning, rng, arm=cfg.arm, gains=cfg.gains, q0=cfg.q0
    )
    stats, rows = rl.greedy_rollout(env, table, cfg.learning, rng)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(ROLLOUT_HEADER + "\n")
        for row in rows:
            f.write(",".join(_F9(v) for v in row) + "\n")
    print(f"steps={stats.steps_survived}")
    print(f"terminal={stats.terminal_reason}")
    print(f"survival_s={_F9(stats.steps_survived * cfg.learning.h)}")
    print(f"wrote {args.out} ({len(rows)} rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpend",
        description="Inverted pendulum balancing: simulation, system identification, tabular Q-learning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override the RNG seed")
        p.add_argument("--out", required=out_required, help="output path")

    p = sub.add_parser("oscillate", help="simulate a free oscillation to CSV")
    common(p)
    p.set_defaults(func=cmd_oscillate)

    p = sub.add_parser("fit", help="fit I and b to an oscillation trace")
    common(p)
    p.add_argument("--data", required=True, help="input trace CSV (t,theta_rad)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", help="train the balancing policy")
    common(p)
    p.add_argument("--curve", help="training curve CSV path (default: <out>_curve.csv)")
    p.add_argument("--episodes", type=int, help="override the episode count")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained table")
    common(p, out_required=False)
    p.add_argument("--table", required=True, help="trained table CSV")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="log one greedy episode to CSV")
    common(p)
    p.add_argument("--table", required=True, help="trained table CSV")
    p.set_defaults(func=cmd_rollout)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
