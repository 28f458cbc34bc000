"""The factored decision process: joint state, actions, transitions, reward.

The joint state splits into the shared map belief, the per-robot states,
and the mission tally.  A joint action assigns one action per robot under
the constraint that at most one robot per step can be guided by the human
supervisor.  Transitions factor per robot: each robot's stochastic effects
are drawn independently, in robot-index order, from the shared stream.

Two generative models share one transition engine:

* :class:`GroundTruthModel` — the real environment; reveals true topology,
  real artifacts, real comm membership.
* :class:`BeliefModel` — what a planner simulates against; entering an
  unexplored stub reveals nothing new, hidden artifacts materialize from an
  optimistic prior, and unknown sectors are assumed out of comm range.  It
  never touches ground truth.
"""

from __future__ import annotations

import heapq
import math
from typing import NamedTuple, Optional

from . import chance, robot_model, world_model
from .robot_model import RobotCapability, RobotState
from .world_model import EnvConfig, MapBelief, MapGraph, UNVISITED, VISITED

STAY = "stay"
LOCAL_SEARCH = "local-search"
FRONTIER_SEEKING = "frontier-seeking"
GUIDED_EXPLORATION = "guided-exploration"

_KIND_ORDER = {STAY: 0, LOCAL_SEARCH: 1, FRONTIER_SEEKING: 2, GUIDED_EXPLORATION: 3}

TERM_ALL_LOST = "AllRobotsLost"
TERM_TIMEOUT = "Timeout"
TERM_COMPLETE = "FullCompletion"


class RobotAction(NamedTuple):
    kind: str
    target: Optional[str] = None


A_STAY = RobotAction(STAY)
A_SEARCH = RobotAction(LOCAL_SEARCH)
A_FRONTIER = RobotAction(FRONTIER_SEEKING)


def guided(target: str) -> RobotAction:
    return RobotAction(GUIDED_EXPLORATION, target)


def action_sort_key(action: RobotAction):
    return (_KIND_ORDER[action.kind], action.target or "")


class Mission(NamedTuple):
    reported_total: int = 0
    step: int = 0


class JointState:
    __slots__ = ("map", "robots", "mission", "_key")

    def __init__(self, map_belief: MapBelief, robots: tuple, mission: Mission):
        self.map = map_belief
        self.robots = robots
        self.mission = mission
        self._key = None

    def key(self):
        k = self._key
        if k is None:
            k = (self.map.key(), self.robots, self.mission)
            self._key = k
        return k

    def __repr__(self):
        return (
            f"JointState(step={self.mission.step}, "
            f"reported={self.mission.reported_total}, "
            f"robots={[r.position for r in self.robots]})"
        )


class TransitionOutcome(NamedTuple):
    next: JointState
    reward: float
    events: tuple = ()


# ---------------------------------------------------------------------------
# path helpers (deterministic: adjacency lists are id-sorted)


def frontier_target(adj, coverage, searched_level, source):
    """Nearest reachable sector, other than ``source``, still worth covering.

    Returns ``(target, first_hop)`` for the hop-nearest under-covered
    sector (ties broken by lowest id, paths by lexicographically first
    parent), or ``None`` when no such sector is reachable.
    """
    best = None
    parent = {source: None}
    layer = [source]
    while layer and best is None:
        nxt = []
        for u in layer:
            for v, _ in adj.get(u, ()):
                if v not in parent:
                    parent[v] = u
                    nxt.append(v)
                    if coverage.get(v, UNVISITED) < searched_level:
                        if best is None or v < best:
                            best = v
        layer = nxt
    if best is None:
        return None
    hop = best
    while parent[hop] != source:
        hop = parent[hop]
    return best, hop


def risk_route_table(adj, source, edge_success):
    """Single-source safest routes.

    Minimizes cumulative ``-log(success)`` with hop count as tie-break.
    ``edge_success(hazard)`` gives the per-edge traversal probability.
    Returns ``{target: (first_hop, survival_probability, hops)}`` for
    every reachable target.  Zero-probability edges are kept at a large
    finite cost so a route always exists in a connected belief graph.
    """
    dist = {source: (0.0, 0)}
    first = {}
    heap = [(0.0, 0, source, None)]
    while heap:
        cost, hops, u, via = heapq.heappop(heap)
        cur = dist.get(u)
        if cur is not None and (cost, hops) > cur:
            continue
        if via is not None:
            first[u] = via
        for v, hz in adj.get(u, ()):
            p = edge_success(hz)
            w = 60.0 if p <= 0.0 else -math.log(p) if p < 1.0 else 0.0
            cand = (cost + w, hops + 1)
            known = dist.get(v)
            if known is None or cand < known:
                dist[v] = cand
                heapq.heappush(
                    heap, (cand[0], cand[1], v, via if via is not None else v)
                )
    table = {}
    for tgt, (cost, hops) in dist.items():
        if tgt == source:
            continue
        table[tgt] = (first[tgt], math.exp(-cost) if cost < 59.0 else 0.0, hops)
    return table


# ---------------------------------------------------------------------------
# action legality


class JointActionSpace:
    """Legal joint actions for one state, under supervisor capacity one.

    Holds the per-robot legal lists split into guided / non-guided parts;
    supports exact counting, uniform sampling over the constrained product,
    and deterministic enumeration for small instances.
    """

    __slots__ = ("plain", "guided", "count")

    def __init__(self, per_robot):
        self.plain = []
        self.guided = []
        for acts in per_robot:
            p = [a for a in acts if a.kind != GUIDED_EXPLORATION]
            g = [a for a in acts if a.kind == GUIDED_EXPLORATION]
            self.plain.append(p)
            self.guided.append(g)
        base = 1
        for p in self.plain:
            base *= len(p)
        total = base
        for i, g in enumerate(self.guided):
            if g:
                total += base // len(self.plain[i]) * len(g)
        self.count = total

    def sample(self, rng) -> tuple:
        """Uniform draw from the constrained product."""
        u = rng.randrange(self.count)
        plain = self.plain
        base = 1
        for p in plain:
            base *= len(p)
        if u < base:
            return self._decode_plain(u)
        u -= base
        for i, g in enumerate(self.guided):
            if not g:
                continue
            block = base // len(plain[i]) * len(g)
            if u < block:
                rest = base // len(plain[i])
                gi, u = divmod(u, rest)
                choice = list(self._decode_plain_skipping(u, i))
                choice[i] = g[gi]
                return tuple(choice)
            u -= block
        raise AssertionError("sample index out of range")

    def _decode_plain(self, u):
        out = []
        for p in self.plain:
            u, r = divmod(u, len(p))
            out.append(p[r])
        return tuple(out)

    def _decode_plain_skipping(self, u, skip):
        out = []
        for i, p in enumerate(self.plain):
            if i == skip:
                out.append(None)
                continue
            u, r = divmod(u, len(p))
            out.append(p[r])
        return tuple(out)

    def enumerate_actions(self):
        """All legal joint actions, in a fixed deterministic order."""

        def product(lists, pos=0):
            if pos == len(lists):
                yield ()
                return
            for head in lists[pos]:
                for tail in product(lists, pos + 1):
                    yield (head,) + tail

        yield from product(self.plain)
        for i, g in enumerate(self.guided):
            if not g:
                continue
            lists = list(self.plain)
            lists[i] = g
            yield from product(lists)


def legal_robot_actions(state: JointState, index: int, searched_level: int):
    """Legal actions for one robot, in canonical sorted order."""
    r = state.robots[index]
    if r.position is None:
        return [A_STAY]
    belief = state.map
    acts = [A_STAY, A_SEARCH]
    if frontier_target(belief.adjacency, belief.coverage, searched_level, r.position):
        acts.append(A_FRONTIER)
    for t in sorted(belief.sectors):
        if t != r.position:
            acts.append(guided(t))
    return acts


# ---------------------------------------------------------------------------
# reward


def reward_value(state: JointState, action, next_state: JointState, config: EnvConfig):
    """Reward recomputed from a state pair.

    One point per artifact reported this step, plus ``beta`` times the
    coverage value gained in sectors whose prior expected yield has not yet
    been exhausted by scored artifacts.
    """
    reported = next_state.mission.reported_total - state.mission.reported_total
    values = config.coverage_values
    pre_cov = state.map.coverage
    pre_rewarded = state.map.rewarded
    prior = config.artifact_prior
    bonus = 0.0
    for sector, level in next_state.map.coverage.items():
        before = pre_cov.get(sector, UNVISITED)
        if level > before and pre_rewarded.get(sector, 0) < prior:
            bonus += values[level] - values[before]
    return reported * 1.0 + config.beta * bonus


# ---------------------------------------------------------------------------
# the shared transition engine


class _Model:
    """Common engine; subclasses supply reveal/detect semantics."""

    __slots__ = ("team", "config", "truth", "_route_cache")

    def __init__(self, team, config: EnvConfig, truth: Optional[MapGraph]):
        self.team = tuple(team)
        self.config = config
        self.truth = truth
        self._route_cache = {}

    # -- action surface --------------------------------------------------

    @property
    def searched_level(self) -> int:
        return len(self.config.coverage_values) - 1

    def legal_robot_actions(self, state, index):
        return legal_robot_actions(state, index, self.searched_level)

    def action_space(self, state) -> JointActionSpace:
        return JointActionSpace(
            [self.legal_robot_actions(state, i) for i in range(len(state.robots))]
        )

    # -- routing ----------------------------------------------------------

    def guided_route(self, belief, index, source):
        """Cached safest-route table for one robot from one sector."""
        adj = belief.adjacency
        key = (id(adj), index, source)
        hit = self._route_cache.get(key)
        if hit is not None and hit[0] is adj:
            return hit[1]
        cap = self.team[index]
        cfg = self.config
        sup = cfg.supervision_factor
        scale = cfg.autonomy_scale

        def succ(hz):
            return robot_model.traversal_success_prob(
                cap, hz, True, supervision_factor=sup, autonomy_scale=scale
            )

        table = risk_route_table(adj, source, succ)
        if len(self._route_cache) > 4096:
            self._route_cache.clear()
        self._route_cache[key] = (adj, table)
        return table

    # -- hooks ------------------------------------------------------------

    def _reveal(self, belief, sector, events):
        raise NotImplementedError

    def _detect(self, belief, sector, crossed, perception, rng):
        raise NotImplementedError

    def _completed(self, state) -> bool:
        return False

    # -- transition -------------------------------------------------------

    def step(self, state: JointState, action, rng, collect_events=False):
        config = self.config
        team = self.team
        values = config.coverage_values
        searched = len(values) - 1
        belief = state.map
        robots = list(state.robots)
        events = [] if collect_events else None
        bonus = 0.0
        reported_n = 0
        pre_rewarded = belief.rewarded
        prior = config.artifact_prior

        # 1. perception wear
        pd = config.perception_degrade
        if pd > 0.0:
            for i, r in enumerate(robots):
                if r.position is not None and r.perception_ok:
                    if chance.bernoulli(rng, pd):
                        robots[i] = r._replace(perception_ok=False)
                        if events is not None:
                            events.append(("perception_failure", i))

        # 2. movement, resolved against the pre-step belief
        adj = belief.adjacency
        pre_cov = belief.coverage
        entered = []
        for i, act in enumerate(action):
            r = robots[i]
            if r.position is None:
                continue
            kind = act.kind
            dest = None
            supervised = False
            if kind == FRONTIER_SEEKING:
                found = frontier_target(adj, pre_cov, searched, r.position)
                if found is not None:
                    dest = found[1]
            elif kind == GUIDED_EXPLORATION:
                if act.target != r.position:
                    route = self.guided_route(belief, i, r.position).get(act.target)
                    if route is not None:
                        dest = route[0]
                        supervised = True
            if dest is None:
                continue
            hz = None
            for nbr, h in adj[r.position]:
                if nbr == dest:
                    hz = h
                    break
            new_r, failed = robot_model.apply_traversal(
                r,
                team[i],
                (r.position, dest, hz),
                supervised,
                rng,
                supervision_factor=config.supervision_factor,
                autonomy_scale=config.autonomy_scale,
            )
            robots[i] = new_r
            if failed:
                if events is not None:
                    events.append(("traversal_failure", i))
            elif dest not in belief.expanded:
                entered.append(dest)

        # 3. reveal newly entered sectors
        for dest in entered:
            pre_level = belief.coverage.get(dest, UNVISITED)
            belief2 = self._reveal(belief, dest, events)
            if belief2 is not belief:
                belief = belief2
                if pre_rewarded.get(dest, 0) < prior:
                    bonus += values[belief.coverage[dest]] - values[pre_level]

        # 4. active search and detection
        for i, act in enumerate(action):
            if act.kind != LOCAL_SEARCH:
                continue
            r = robots[i]
            if r.position is None:
                continue
            sector = r.position
            pre_level = belief.coverage.get(sector, UNVISITED)
            belief2, delta = world_model.update_coverage(
                belief, sector, [(r, team[i])], rng, coverage_values=values
            )
            if delta > 0.0:
                belief = belief2
                if pre_rewarded.get(sector, 0) < prior:
                    bonus += delta
            crossed = pre_level < searched and belief.coverage.get(sector) == searched
            perception = team[i].perception if r.perception_ok else 0.0
            found = self._detect(belief, sector, crossed, perception, rng)
            if found:
                detected = dict(belief.detected)
                detected[sector] = detected.get(sector, 0) + found
                belief = belief.with_detected(detected)
                robots[i] = r._replace(unreported=r.unreported + (sector,) * found)
                if events is not None:
                    events.append(("detection", i, sector, found))

        # 5. report everything that can reach base
        staying = [
            robots[i].position
            for i, act in enumerate(action)
            if robots[i].position is not None and act.kind == STAY
        ]
        connected = world_model.comm_closure(belief, staying, relay=config.relay)
        new_rewarded = None
        for i, r in enumerate(robots):
            if r.position is not None and r.unreported and r.position in connected:
                sources = r.unreported
                robots[i], n = robot_model.report(r, True)
                reported_n += n
                if new_rewarded is None:
                    new_rewarded = dict(belief.rewarded)
                for src in sources:
                    new_rewarded[src] = new_rewarded.get(src, 0) + 1
                if events is not None:
                    events.append(("report", i, n))
        if new_rewarded is not None:
            belief = belief.with_rewarded(new_rewarded)

        mission = Mission(
            state.mission.reported_total + reported_n, state.mission.step + 1
        )
        next_state = JointState(belief, tuple(robots), mission)
        reward = reported_n * 1.0 + config.beta * bonus
        return TransitionOutcome(next_state, reward, tuple(events) if events else ())

    # -- termination -------------------------------------------------------

    def is_terminal(self, state: JointState):
        for r in state.robots:
            if r.position is not None:
                break
        else:
            return TERM_ALL_LOST
        if self._completed(state):
            return TERM_COMPLETE
        if state.mission.step >= self.config.time_limit:
            return TERM_TIMEOUT
        return None


class GroundTruthModel(_Model):
    """The real environment; also the episode driver's source of metrics."""

    def __init__(self, truth: MapGraph, team, config: EnvConfig):
        super().__init__(team, config, truth)

    def initial_state(self) -> JointState:
        staging = self.truth.staging
        belief = world_model.reveal_on_visit(MapBelief.empty(), self.truth, staging)
        robots = tuple(RobotState(staging) for _ in self.team)
        return JointState(belief, robots, Mission())

    def _reveal(self, belief, sector, events):
        out = world_model.reveal_on_visit(belief, self.truth, sector)
        if out is not belief and events is not None:
            events.append(("reveal", sector))
        return out

    def _detect(self, belief, sector, crossed, perception, rng):
        if not crossed:
            return 0
        remaining = self.truth.sectors[sector].artifact_count - belief.detected.get(
            sector, 0
        )
        return chance.binomial(rng, remaining, perception)

    def _completed(self, state):
        searched = self.searched_level
        coverage = state.map.coverage
        total = len(self.truth.sectors)
        if len(coverage) < total:
            return False
        done = 0
        for level in coverage.values():
            if level >= searched:
                done += 1
        if done < total:
            return False
        for r in state.robots:
            if r.position is not None and r.unreported:
                return False
        return True


class BeliefModel(_Model):
    """Planner-side imagination: simulates forward using the belief only.

    Entering a frontier stub marks it visited but invents no topology
    beyond it; whether an unexplored sector holds anything is drawn from
    the scenario's optimistic prior, at most once per sector; stubs are
    assumed out of comm range until actually visited in reality.
    """

    def __init__(self, team, config: EnvConfig):
        super().__init__(team, config, None)

    def _reveal(self, belief, sector, events):
        if belief.coverage.get(sector, UNVISITED) >= VISITED:
            return belief
        coverage = dict(belief.coverage)
        coverage[sector] = VISITED
        return belief.with_coverage(coverage)

    def _detect(self, belief, sector, crossed, perception, rng):
        if not crossed:
            return 0
        if belief.detected.get(sector, 0) or belief.rewarded.get(sector, 0):
            return 0
        p = self.config.artifact_prior * perception
        return 1 if chance.bernoulli(rng, p) else 0
