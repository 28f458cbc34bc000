"""Episode execution, batch statistics, and trace validation.

An episode pits one policy against the ground-truth generative model while
the policy itself only ever sees the belief-side model, so nothing about
unrevealed topology or artifact placement can leak into planning.  Episode
randomness is split into two independent streams derived from the seed —
one for the environment, one for the planner — so changing planner
internals never perturbs world outcomes for the same seed.
"""

from __future__ import annotations

import math
import multiprocessing
import random
import statistics
from dataclasses import dataclass
from typing import Optional

from .mdp_core import (
    BeliefModel,
    GroundTruthModel,
    GUIDED_EXPLORATION,
    reward_value,
)
from .planner import MctsParams, run_policy
from .scenarios import Scenario, load_scenario

POLICY_KINDS = ("mcts", "supervised", "naive", "random")


@dataclass(frozen=True)
class TraceStep:
    state: object
    action: tuple
    next_state: object
    reward: float
    events: tuple


@dataclass(frozen=True)
class EpisodeResult:
    scenario: str
    policy: str
    seed: int
    reward: float
    reported: int
    failures: int
    mission_time: int
    coverage: float
    revealed: float
    artifact_total: int
    termination: str = ""
    trace: Optional[tuple] = None

    @property
    def scored_fraction(self) -> float:
        if self.artifact_total <= 0:
            return 0.0
        return self.reported / self.artifact_total


@dataclass(frozen=True)
class MetricStats:
    mean: float
    std: float
    ci95: float
    n: int

    @classmethod
    def from_values(cls, values):
        vals = list(values)
        n = len(vals)
        if n == 0:
            return cls(math.nan, math.nan, math.nan, 0)
        mean = statistics.fmean(vals)
        std = statistics.stdev(vals) if n > 1 else 0.0
        return cls(mean, std, 1.96 * std / math.sqrt(n), n)


@dataclass(frozen=True)
class BatchStats:
    scenario: str
    policy: str
    n: int
    reward: MetricStats
    failures: MetricStats
    mission_time: MetricStats
    coverage: MetricStats
    scored_fraction: MetricStats
    revealed: MetricStats
    episodes: tuple = ()


def _policy_ok(policy: str) -> str:
    if policy not in POLICY_KINDS:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICY_KINDS}")
    return policy


def run_episode(
    scenario: Scenario,
    policy: str,
    seed: int,
    params: Optional[MctsParams] = None,
    collect_trace: bool = False,
) -> EpisodeResult:
    """Run one full episode of ``policy`` on ``scenario`` with ``seed``."""
    _policy_ok(policy)
    config = scenario.env_config()
    truth = GroundTruthModel(scenario.map, scenario.team, config)
    belief = BeliefModel(scenario.team, config)
    env_rng = random.Random(f"{seed}|env")
    plan_rng = random.Random(f"{seed}|plan")

    state = truth.initial_state()
    total = 0.0
    trace = [] if collect_trace else None
    reason = truth.is_terminal(state)
    while not reason:
        action = run_policy(policy, state, belief, plan_rng, params)
        outcome = truth.step(state, action, env_rng, collect_events=collect_trace)
        total += outcome.reward
        if trace is not None:
            trace.append(
                TraceStep(state, action, outcome.next, outcome.reward, outcome.events)
            )
        state = outcome.next
        reason = truth.is_terminal(state)

    sectors = truth.truth.sectors
    searched = config.searched_level
    coverage = sum(
        1 for sid in sectors if state.map.coverage.get(sid, 0) >= searched
    ) / len(sectors)
    revealed = len(state.map.expanded) / len(sectors)
    return EpisodeResult(
        scenario=scenario.name,
        policy=policy,
        seed=seed,
        reward=total,
        reported=state.mission.reported_total,
        failures=sum(1 for r in state.robots if not r.mobility_ok),
        mission_time=state.mission.step,
        coverage=coverage,
        revealed=revealed,
        artifact_total=sum(s.artifact_count for s in sectors.values()),
        termination=reason,
        trace=tuple(trace) if trace is not None else None,
    )


# ---------------------------------------------------------------------------
# batches

_WORKER_STATE = {}


def _worker_init(scenario_text, policy, params):
    _WORKER_STATE["scenario"] = load_scenario(scenario_text)
    _WORKER_STATE["policy"] = policy
    _WORKER_STATE["params"] = params


def _worker_run(seed):
    return run_episode(
        _WORKER_STATE["scenario"],
        _WORKER_STATE["policy"],
        seed,
        params=_WORKER_STATE["params"],
    )


def run_batch(
    scenario: Scenario,
    policy: str,
    episodes: int,
    base_seed: int = 0,
    params: Optional[MctsParams] = None,
    workers: int = 1,
) -> BatchStats:
    """Run ``episodes`` independent episodes with seeds base_seed..base_seed+n-1.

    Results are identical whichever ``workers`` value is used: each episode
    depends only on its own seed, and results are aggregated in seed order.
    """
    _policy_ok(policy)
    seeds = range(base_seed, base_seed + episodes)
    if workers <= 1 or episodes <= 1:
        results = [run_episode(scenario, policy, s, params=params) for s in seeds]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(
            min(workers, episodes),
            initializer=_worker_init,
            initargs=(scenario.to_text(), policy, params),
        ) as pool:
            results = pool.map(
                _worker_run, seeds, chunksize=max(1, episodes // (workers * 4))
            )
    return summarize(scenario.name, policy, results)


def summarize(scenario_name: str, policy: str, results) -> BatchStats:
    results = tuple(results)
    return BatchStats(
        scenario=scenario_name,
        policy=policy,
        n=len(results),
        reward=MetricStats.from_values(r.reward for r in results),
        failures=MetricStats.from_values(r.failures for r in results),
        mission_time=MetricStats.from_values(r.mission_time for r in results),
        coverage=MetricStats.from_values(r.coverage for r in results),
        scored_fraction=MetricStats.from_values(r.scored_fraction for r in results),
        revealed=MetricStats.from_values(r.revealed for r in results),
        episodes=results,
    )


# ---------------------------------------------------------------------------
# trace validation


class TraceInvariantError(AssertionError):
    pass


def _fail(step_index, message):
    raise TraceInvariantError(f"trace step {step_index}: {message}")


def validate_trace(trace, model: GroundTruthModel) -> int:
    """Re-check every recorded transition against the model's invariants.

    Verifies step counting, monotone knowledge growth, irreversible robot
    health, supervisor capacity, artifact conservation against ground
    truth, and that each recorded reward equals the pure recomputation
    from its (state, action, next-state) triple.  Returns the number of
    transitions checked.
    """
    config = model.config
    truth_sectors = model.truth.sectors
    prev_next = None
    for i, step in enumerate(trace):
        s, a, nxt = step.state, step.action, step.next_state
        if prev_next is not None and nxt is not prev_next and s is not prev_next:
            if s.key() != prev_next.key():
                _fail(i, "trace is not contiguous")
        prev_next = nxt

        if nxt.mission.step != s.mission.step + 1:
            _fail(i, "mission step must advance by exactly 1")
        if nxt.mission.reported_total < s.mission.reported_total:
            _fail(i, "reported total decreased")
        if sum(1 for act in a if act.kind == GUIDED_EXPLORATION) > 1:
            _fail(i, "more than one guided action in a joint action")
        if not s.map.expanded <= nxt.map.expanded:
            _fail(i, "revealed-sector set shrank")
        for sid, level in s.map.coverage.items():
            if nxt.map.coverage.get(sid, 0) < level:
                _fail(i, f"coverage regressed in {sid}")
        for sid, k in s.map.rewarded.items():
            if nxt.map.rewarded.get(sid, 0) < k:
                _fail(i, f"scored count regressed in {sid}")
        for before, after in zip(s.robots, nxt.robots):
            if not before.mobility_ok and after.mobility_ok:
                _fail(i, "mobility health came back")
            if not before.perception_ok and after.perception_ok:
                _fail(i, "perception health came back")
            if before.position is None and after.position is not None:
                _fail(i, "a lost robot moved")
        for sid, k in nxt.map.rewarded.items():
            cap = truth_sectors[sid].artifact_count
            if k > cap:
                _fail(i, f"{sid} scored {k} of {cap} artifacts")
        carried = sum(len(r.unreported) for r in nxt.robots)
        if nxt.mission.reported_total + carried > sum(
            t.artifact_count for t in truth_sectors.values()
        ):
            _fail(i, "scored + carried exceeds the artifacts that exist")
        want = reward_value(s, a, nxt, config)
        if abs(step.reward - want) > 1e-9:
            _fail(i, f"reward {step.reward} != recomputed {want}")
    return len(trace)


def trace_records(trace):
    """Yield JSON-serializable dicts, one per trace step."""
    for i, step in enumerate(trace):
        nxt = step.next_state
        yield {
            "step": i,
            "actions": [[a.kind, a.target] for a in step.action],
            "reward": step.reward,
            "events": [list(e) for e in step.events],
            "reported_total": nxt.mission.reported_total,
            "positions": [r.position for r in nxt.robots],
            "operational": [bool(r.mobility_ok) for r in nxt.robots],
            "revealed": sorted(nxt.map.expanded),
            "coverage": dict(sorted(nxt.map.coverage.items())),
        }
