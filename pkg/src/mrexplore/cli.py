"""Command-line front end.

Subcommands::

    mrexplore run        one policy on one scenario, per-episode CSV + trace
    mrexplore compare    all four policies side by side on one scenario
    mrexplore formation  team-composition sweep on one scenario
    mrexplore comm-sweep comm-reach x autonomy grid

``--scenario`` accepts the built-in names ``urban7`` and ``subt121`` or a
path to a scenario file.  Exit status: 0 on success, 1 on runtime errors
(unreadable or invalid scenario, bad option values), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .planner import MctsParams
from .scenarios import (
    DEFAULT_AUTONOMY_LEVELS,
    DEFAULT_COMM_FRACTIONS,
    ScenarioError,
    build_subt121,
    build_urban7,
    comm_autonomy_grid,
    formation_variants,
    load_scenario_file,
)
from .simulator import POLICY_KINDS, run_batch, run_episode, trace_records

COMPARE_ORDER = ("mcts", "supervised", "naive", "random")


class CliError(Exception):
    pass


def _load_scenario(spec: str):
    if spec == "urban7":
        return build_urban7()
    if spec == "subt121":
        return build_subt121()
    if not os.path.exists(spec):
        raise CliError(
            f"scenario {spec!r} is neither a built-in (urban7, subt121) "
            "nor an existing file"
        )
    return load_scenario_file(spec)


def _mcts_params(args) -> MctsParams:
    kwargs = {}
    if getattr(args, "iterations", None) is not None:
        kwargs["iterations"] = args.iterations
    if getattr(args, "horizon", None) is not None:
        kwargs["horizon"] = args.horizon
    try:
        return MctsParams(**kwargs)
    except ValueError as e:
        raise CliError(str(e)) from None


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _print_stats(stats):
    print(
        f"{stats.scenario} {stats.policy}: n={stats.n} "
        f"reward {stats.reward.mean:.3f}±{stats.reward.ci95:.3f} "
        f"failures {stats.failures.mean:.3f}±{stats.failures.ci95:.3f} "
        f"time {stats.mission_time.mean:.2f}±{stats.mission_time.ci95:.2f} "
        f"coverage {stats.coverage.mean:.3f}"
    )


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario)
    params = _mcts_params(args)
    if args.trace:
        results = []
        with open(args.trace, "w", encoding="utf-8") as fh:
            for seed in range(args.seed, args.seed + args.episodes):
                res = run_episode(
                    scenario, args.policy, seed, params=params, collect_trace=True
                )
                for record in trace_records(res.trace):
                    record["episode"] = seed
                    fh.write(json.dumps(record) + "\n")
                results.append(res)
        from .simulator import summarize

        stats = summarize(scenario.name, args.policy, results)
    else:
        stats = run_batch(
            scenario,
            args.policy,
            args.episodes,
            base_seed=args.seed,
            params=params,
            workers=args.workers,
        )
    _print_stats(stats)
    if args.out:
        _write_csv(
            args.out,
            (
                "scenario",
                "policy",
                "seed",
                "reward",
                "reported",
                "failures",
                "mission_time",
                "coverage",
            ),
            [
                (
                    e.scenario,
                    e.policy,
                    e.seed,
                    e.reward,
                    e.reported,
                    e.failures,
                    e.mission_time,
                    e.coverage,
                )
                for e in stats.episodes
            ],
        )
    return 0


def cmd_compare(args) -> int:
    scenario = _load_scenario(args.scenario)
    params = _mcts_params(args)
    rows = []
    for policy in COMPARE_ORDER:
        stats = run_batch(
            scenario,
            policy,
            args.episodes,
            base_seed=args.seed,
            params=params,
            workers=args.workers,
        )
        _print_stats(stats)
        rows.append(
            (
                policy,
                stats.reward.mean,
                stats.reward.ci95,
                stats.failures.mean,
                stats.failures.ci95,
                stats.mission_time.mean,
                stats.mission_time.ci95,
                stats.coverage.mean,
            )
        )
    if args.out:
        _write_csv(
            args.out,
            (
                "policy",
                "reward_mean",
                "reward_ci",
                "failures_mean",
                "failures_ci",
                "mission_time_mean",
                "mission_time_ci",
                "coverage_mean",
            ),
            rows,
        )
    return 0


def cmd_formation(args) -> int:
    scenario = _load_scenario(args.scenario)
    params = _mcts_params(args)
    rows = []
    for variant in formation_variants(scenario):
        tag = variant.name.rsplit("-", 1)[-1]
        # formation_variants names end with the composition tag after the
        # base name; recover it robustly from the known tag set
        for known in (
            "multi_hybrid",
            "multi_wheeled",
            "multi_legged",
            "single_wheeled",
            "single_legged",
        ):
            if variant.name.endswith(known):
                tag = known
                break
        stats = run_batch(
            variant,
            args.policy,
            args.episodes,
            base_seed=args.seed,
            params=params,
            workers=args.workers,
        )
        _print_stats(stats)
        rows.append(
            (
                tag,
                stats.reward.mean,
                stats.reward.ci95,
                stats.failures.mean,
                stats.failures.ci95,
            )
        )
    if args.out:
        _write_csv(
            args.out,
            ("formation", "reward_mean", "reward_ci", "failures_mean", "failures_ci"),
            rows,
        )
    return 0


def _parse_float_list(text, what):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise CliError(f"{what}: expected comma-separated numbers") from None


def cmd_comm_sweep(args) -> int:
    scenario = _load_scenario(args.scenario)
    params = _mcts_params(args)
    fractions = (
        _parse_float_list(args.fractions, "--fractions")
        if args.fractions
        else DEFAULT_COMM_FRACTIONS
    )
    levels = (
        _parse_float_list(args.levels, "--levels")
        if args.levels
        else DEFAULT_AUTONOMY_LEVELS
    )
    cells = comm_autonomy_grid(scenario, fractions, levels)
    coords = [(f, lam) for f in fractions for lam in levels]
    rows = []
    for (fraction, level), cell in zip(coords, cells):
        stats = run_batch(
            cell,
            args.policy,
            args.episodes,
            base_seed=args.seed,
            params=params,
            workers=args.workers,
        )
        pct_mean = 100.0 * stats.scored_fraction.mean
        pct_ci = 100.0 * stats.scored_fraction.ci95
        print(
            f"comm={fraction:g} autonomy={level:g}: "
            f"scored {pct_mean:.1f}%±{pct_ci:.1f}"
        )
        rows.append((fraction, level, pct_mean, pct_ci))
    if args.out:
        _write_csv(
            args.out,
            (
                "comm_fraction",
                "autonomy_level",
                "scored_artifact_pct_mean",
                "scored_artifact_pct_ci",
            ),
            rows,
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrexplore",
        description="Multi-robot exploration planning experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policy_default, episodes_default):
        p.add_argument("--scenario", default="urban7", help="built-in name or file")
        if policy_default is not None:
            p.add_argument("--policy", choices=POLICY_KINDS, default=policy_default)
        p.add_argument("--episodes", type=int, default=episodes_default)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--out", default=None, help="write results CSV here")
        p.add_argument("--workers", type=int, default=1)

    p_run = sub.add_parser("run", help="run one policy on one scenario")
    common(p_run, "mcts", 20)
    p_run.add_argument("--trace", default=None, help="write a JSONL step log here")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare all policies on one scenario")
    common(p_cmp, None, 100)
    p_cmp.set_defaults(func=cmd_compare)

    p_form = sub.add_parser("formation", help="sweep team compositions")
    common(p_form, "mcts", 100)
    p_form.set_defaults(func=cmd_formation)

    p_sweep = sub.add_parser("comm-sweep", help="sweep comm reach x autonomy")
    common(p_sweep, "naive", 100)
    p_sweep.add_argument("--fractions", default=None, help="comma list, e.g. 0.1,0.5")
    p_sweep.add_argument("--levels", default=None, help="comma list, e.g. 0.25,1.0")
    p_sweep.set_defaults(func=cmd_comm_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ScenarioError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
