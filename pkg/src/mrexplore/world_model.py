"""Topological world state: ground truth, shared team belief, coverage, comms.

The environment is a graph of sectors.  Edges may carry a terrain hazard
that determines per-robot traversal risk.  The team maintains one shared
belief over the map: which sectors and edges have been revealed so far, how
thoroughly each sector has been searched (a short ladder of coverage
levels), which sectors can reach the base station, and what has already
been found (and scored) where.

Ground truth (:class:`MapGraph`) is immutable for the whole mission.  The
belief (:class:`MapBelief`) is a persistent value object: operations return
new instances and share unchanged internals, so beliefs are cheap to copy
and safe to use as search-tree states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from . import chance

# Coverage is a ladder of named values; index 0 is always "never entered",
# index 1 is reached by merely entering a sector, and the top index means the
# sector has been searched exhaustively enough for anything in it to have had
# a chance of being found.
DEFAULT_COVERAGE_VALUES = (0.0, 0.5, 1.0)
UNVISITED = 0
VISITED = 1

TERRAIN_CLASSES = (
    "Flat",
    "Stairs",
    "Rubble",
    "NarrowPassage",
    "VerticalShaft",
    "Mud",
    "Rails",
    "Doorway",
)


def validate_coverage_values(values) -> tuple:
    values = tuple(float(v) for v in values)
    if len(values) < 2:
        raise ValueError("coverage ladder needs at least two levels")
    if values[0] != 0.0:
        raise ValueError("coverage ladder must start at 0")
    for lo, hi in zip(values, values[1:]):
        if not hi > lo:
            raise ValueError("coverage ladder must be strictly increasing")
    return values


@dataclass(frozen=True)
class HazardSpec:
    """A terrain obstacle attached to an edge.

    ``difficulty`` scales severity: 0 is trivially passable for every
    mobility class, 1 is the worst instance of that terrain.
    """

    id: str
    terrain: str
    difficulty: float

    def __post_init__(self):
        if not 0.0 <= self.difficulty <= 1.0:
            raise ValueError(
                f"hazard {self.id!r}: difficulty {self.difficulty} outside [0, 1]"
            )


@dataclass(frozen=True)
class SectorGroundTruth:
    id: str
    artifact_count: int = 0
    in_comm_range: bool = False
    is_staging: bool = False

    def __post_init__(self):
        if self.artifact_count < 0:
            raise ValueError(f"sector {self.id!r}: negative artifact count")


@dataclass(frozen=True)
class EnvConfig:
    """Scenario-level environment constants shared by all transition code."""

    coverage_values: tuple = DEFAULT_COVERAGE_VALUES
    artifact_prior: float = 0.5
    relay: bool = True
    beta: float = 0.1
    supervision_factor: float = 0.5
    autonomy_scale: float = 1.0
    perception_degrade: float = 0.0
    time_limit: int = 40

    def __post_init__(self):
        object.__setattr__(
            self, "coverage_values", validate_coverage_values(self.coverage_values)
        )
        if self.time_limit < 1:
            raise ValueError("time_limit must be >= 1")

    @property
    def searched_level(self) -> int:
        return len(self.coverage_values) - 1


class MapGraph:
    """Immutable ground-truth sector graph.

    ``sectors`` maps id to :class:`SectorGroundTruth`; ``edges`` holds
    canonical ``(a, b, hazard)`` triples with ``a < b`` and ``hazard`` either
    a :class:`HazardSpec` or ``None`` (a hazard-free link).
    """

    __slots__ = (
        "sectors",
        "edges",
        "hazards",
        "adjacency",
        "staging",
        "artifact_total",
        "comm_sectors",
    )

    def __init__(self, sectors: Iterable[SectorGroundTruth], edges: Iterable[tuple]):
        sector_map = {}
        for s in sectors:
            if s.id in sector_map:
                raise ValueError(f"duplicate sector id: {s.id!r}")
            sector_map[s.id] = s
        staging = [s.id for s in sector_map.values() if s.is_staging]
        if len(staging) != 1:
            raise ValueError(
                f"exactly one staging sector required, found {len(staging)}"
            )

        canonical = []
        seen = set()
        hazards = {}
        for a, b, hz in edges:
            if a == b:
                raise ValueError(f"self-loop edge on sector {a!r}")
            for end in (a, b):
                if end not in sector_map:
                    raise ValueError(f"edge references unknown sector {end!r}")
            if a > b:
                a, b = b, a
            if (a, b) in seen:
                raise ValueError(f"duplicate edge {a!r}--{b!r}")
            seen.add((a, b))
            if hz is not None:
                known = hazards.get(hz.id)
                if known is not None and known != hz:
                    raise ValueError(f"conflicting definitions for hazard {hz.id!r}")
                hazards[hz.id] = hz
            canonical.append((a, b, hz))
        canonical.sort(key=lambda e: (e[0], e[1]))

        adj = {sid: [] for sid in sector_map}
        for a, b, hz in canonical:
            adj[a].append((b, hz))
            adj[b].append((a, hz))
        adjacency = {
            sid: tuple(sorted(nbrs, key=lambda t: t[0])) for sid, nbrs in adj.items()
        }

        # every sector must be reachable from staging
        start = staging[0]
        seen_s = {start}
        frontier = [start]
        while frontier:
            nxt = []
            for u in frontier:
                for v, _ in adjacency[u]:
                    if v not in seen_s:
                        seen_s.add(v)
                        nxt.append(v)
            frontier = nxt
        if len(seen_s) != len(sector_map):
            missing = sorted(set(sector_map) - seen_s)
            raise ValueError(f"sectors unreachable from staging: {missing}")

        self.sectors = sector_map
        self.edges = tuple(canonical)
        self.hazards = hazards
        self.adjacency = adjacency
        self.staging = start
        self.artifact_total = sum(s.artifact_count for s in sector_map.values())
        self.comm_sectors = frozenset(
            s.id for s in sector_map.values() if s.in_comm_range
        )

    def __eq__(self, other):
        if not isinstance(other, MapGraph):
            return NotImplemented
        return self.sectors == other.sectors and self.edges == other.edges

    def __hash__(self):
        return hash((frozenset(self.sectors), self.edges))


class MapBelief:
    """The team's shared picture of the map.

    ``sectors`` includes frontier stubs: sectors whose existence is known
    from an adjacent visit but that have never been entered.  ``expanded``
    holds only sectors whose own adjacency has been revealed by a visit.
    ``coverage`` maps every known sector to a level index.  ``rewarded`` and
    ``detected`` count artifacts scored / found per source sector.
    """

    __slots__ = (
        "sectors",
        "expanded",
        "edges",
        "coverage",
        "known_comm",
        "rewarded",
        "detected",
        "_adj",
        "_key",
    )

    def __init__(
        self,
        sectors: frozenset,
        expanded: frozenset,
        edges: frozenset,
        coverage: dict,
        known_comm: frozenset,
        rewarded: dict,
        detected: dict,
        adj: Optional[dict] = None,
    ):
        self.sectors = sectors
        self.expanded = expanded
        self.edges = edges
        self.coverage = coverage
        self.known_comm = known_comm
        self.rewarded = rewarded
        self.detected = detected
        self._adj = adj
        self._key = None

    @classmethod
    def empty(cls) -> "MapBelief":
        return cls(frozenset(), frozenset(), frozenset(), {}, frozenset(), {}, {})

    @property
    def adjacency(self) -> dict:
        adj = self._adj
        if adj is None:
            lists = {s: [] for s in self.sectors}
            for a, b, hz in self.edges:
                lists[a].append((b, hz))
                lists[b].append((a, hz))
            adj = {
                s: tuple(sorted(nbrs, key=lambda t: t[0]))
                for s, nbrs in lists.items()
            }
            self._adj = adj
        return adj

    def key(self):
        """Hashable snapshot for state deduplication.

        Edges and comm knowledge are deterministic functions of ``expanded``
        for a fixed ground truth, so they are omitted.
        """
        k = self._key
        if k is None:
            k = (
                self.expanded,
                tuple(sorted(self.coverage.items())),
                tuple(sorted(self.rewarded.items())),
                tuple(sorted(self.detected.items())),
            )
            self._key = k
        return k

    # --- cheap functional updates -------------------------------------

    def with_coverage(self, coverage: dict) -> "MapBelief":
        return MapBelief(
            self.sectors,
            self.expanded,
            self.edges,
            coverage,
            self.known_comm,
            self.rewarded,
            self.detected,
            adj=self._adj,
        )

    def with_rewarded(self, rewarded: dict) -> "MapBelief":
        return MapBelief(
            self.sectors,
            self.expanded,
            self.edges,
            self.coverage,
            self.known_comm,
            rewarded,
            self.detected,
            adj=self._adj,
        )

    def with_detected(self, detected: dict) -> "MapBelief":
        return MapBelief(
            self.sectors,
            self.expanded,
            self.edges,
            self.coverage,
            self.known_comm,
            self.rewarded,
            detected,
            adj=self._adj,
        )


# ---------------------------------------------------------------------------
# operations


def reveal_on_visit(belief: MapBelief, truth: MapGraph, sector: str) -> MapBelief:
    """Reveal a sector by entering it.

    The sector's incident edges (with their hazards) are added to the
    belief, adjacent sectors appear as unvisited stubs, the sector's
    coverage rises to at least the visited level, and its comm-range
    membership becomes known.  Revealing an already-expanded sector is a
    no-op and returns the same object.
    """
    if sector not in truth.sectors:
        raise ValueError(f"unknown sector id: {sector!r}")
    if sector in belief.expanded:
        return belief

    sectors = set(belief.sectors)
    edges = set(belief.edges)
    coverage = dict(belief.coverage)
    adj = dict(belief.adjacency)

    sectors.add(sector)
    coverage[sector] = max(coverage.get(sector, UNVISITED), VISITED)
    for nbr, hz in truth.adjacency[sector]:
        a, b = (sector, nbr) if sector < nbr else (nbr, sector)
        edge = (a, b, hz)
        if edge in edges:
            continue
        edges.add(edge)
        if nbr not in sectors:
            sectors.add(nbr)
            coverage.setdefault(nbr, UNVISITED)
        adj[sector] = tuple(
            sorted(adj.get(sector, ()) + ((nbr, hz),), key=lambda t: t[0])
        )
        adj[nbr] = tuple(
            sorted(adj.get(nbr, ()) + ((sector, hz),), key=lambda t: t[0])
        )

    known = belief.known_comm
    if truth.sectors[sector].in_comm_range:
        known = known | {sector}

    return MapBelief(
        frozenset(sectors),
        belief.expanded | {sector},
        frozenset(edges),
        coverage,
        known,
        belief.rewarded,
        belief.detected,
        adj=adj,
    )


def update_coverage(
    belief: MapBelief,
    sector: str,
    searching_robots,
    rng,
    *,
    coverage_values=DEFAULT_COVERAGE_VALUES,
):
    """Apply one step of active search by the listed robots.

    ``searching_robots`` is a list of ``(robot_state, capability)`` pairs,
    all located in ``sector``.  Robots apply sequentially: each raises the
    coverage one level with probability equal to its effective perception
    (zero if its perception hardware has failed).  Returns the new belief
    and the total coverage-value increase.
    """
    if sector not in belief.sectors:
        raise ValueError(f"cannot search unrevealed sector {sector!r}")
    top = len(coverage_values) - 1
    start = belief.coverage.get(sector, UNVISITED)
    level = start
    for state, cap in searching_robots:
        if state.position != sector:
            raise ValueError(
                f"robot at {state.position!r} cannot search sector {sector!r}"
            )
        if not state.mobility_ok:
            raise ValueError("a failed robot cannot search")
        if level >= top:
            break
        p = cap.perception if state.perception_ok else 0.0
        if chance.bernoulli(rng, p):
            level += 1
    if level == start:
        return belief, 0.0
    coverage = dict(belief.coverage)
    coverage[sector] = level
    return belief.with_coverage(coverage), coverage_values[level] - coverage_values[start]


def sample_detection(
    truth_sector: SectorGroundTruth,
    belief: MapBelief,
    coverage_delta: float,
    perception: float,
    rng,
    *,
    coverage_values=DEFAULT_COVERAGE_VALUES,
) -> int:
    """Artifacts found by the search step that produced ``coverage_delta``.

    Finding anything requires the step to have pushed the sector *into* the
    searched (top) level; each artifact still hidden there is then found
    independently with probability ``perception``.  The caller moves found
    artifacts into the searching robot's unreported set and bumps the
    belief's detected count.
    """
    if coverage_delta < 0:
        raise ValueError("coverage_delta must be >= 0")
    if coverage_delta == 0:
        return 0
    sid = truth_sector.id
    level = belief.coverage.get(sid, UNVISITED)
    top = len(coverage_values) - 1
    if level != top:
        return 0
    pre_value = coverage_values[level] - coverage_delta
    if pre_value > coverage_values[top] - 1e-12:
        return 0  # was already searched before this step
    remaining = truth_sector.artifact_count - belief.detected.get(sid, 0)
    return chance.binomial(rng, remaining, perception)


def comm_closure(belief: MapBelief, staying_positions, *, relay: bool = True):
    """Fixed point of the relay rule over the sectors known to reach base."""
    base = belief.known_comm
    if not relay or not staying_positions:
        return frozenset(base)
    connected = set(base)
    adj = belief.adjacency
    pending = list(staying_positions)
    changed = True
    while changed:
        changed = False
        rest = []
        for pos in pending:
            if pos in connected:
                for nbr, _ in adj.get(pos, ()):
                    if nbr not in connected:
                        connected.add(nbr)
                        changed = True
            else:
                rest.append(pos)
        pending = rest
        if not pending:
            break
    return frozenset(connected)


def effective_comm_set(belief: MapBelief, robot_states, joint_action, *, relay=True):
    """Sectors from which a report reaches base, given who is relaying.

    A sector is connected if it is known to be in base comm range, or if it
    is one edge away from a connected sector hosting an operational robot
    whose current action is to stay put (acting as a relay).
    """
    staying = [
        r.position
        for r, a in zip(robot_states, joint_action)
        if r.position is not None and getattr(a, "kind", None) == "stay"
    ]
    return comm_closure(belief, staying, relay=relay)
