"""Scenario definition: text format, validation, and built-in worlds.

A scenario file is line-oriented with five sections::

    [config]
    name = demo
    time_limit = 40
    coverage_levels = 0.0,0.5,1.0
    artifact_prior = 0.5
    beta = 0.1
    relay = on
    supervision_factor = 0.5
    autonomy_scale = 1.0
    perception_degrade = 0.0
    matrix.Wheeled.Stairs = 0.2        # capability-matrix override

    [hazards]
    stairs1 terrain=Stairs difficulty=1.0

    [sectors]
    m0 staging comm                     # flags: staging, comm; artifacts=N
    m1 comm artifacts=1

    [edges]
    m0 m1                               # optional hazard=ID
    m1 m2 hazard=stairs1

    [team]
    walker mobility=Legged perception=0.95 autonomy=0.0

``#`` starts a comment anywhere; blank lines are ignored; every scenario a
builder produces serializes back to this format, so experiments are always
file-reproducible.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .robot_model import (
    DEFAULT_CAPABILITY_MATRIX,
    RobotCapability,
    make_mobility,
)
from .world_model import (
    DEFAULT_COVERAGE_VALUES,
    EnvConfig,
    HazardSpec,
    MapGraph,
    SectorGroundTruth,
    validate_coverage_values,
)


class ScenarioError(Exception):
    pass


class ScenarioParseError(ScenarioError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ScenarioValidationError(ScenarioError):
    pass


@dataclass
class Scenario:
    name: str
    map: MapGraph
    team: tuple
    time_limit: int = 40
    coverage_values: tuple = DEFAULT_COVERAGE_VALUES
    artifact_prior: float = 0.5
    relay: bool = True
    beta: float = 0.1
    supervision_factor: float = 0.5
    autonomy_scale: float = 1.0
    perception_degrade: float = 0.0
    matrix: dict = field(default_factory=lambda: _copy_matrix(DEFAULT_CAPABILITY_MATRIX))

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            coverage_values=self.coverage_values,
            artifact_prior=self.artifact_prior,
            relay=self.relay,
            beta=self.beta,
            supervision_factor=self.supervision_factor,
            autonomy_scale=self.autonomy_scale,
            perception_degrade=self.perception_degrade,
            time_limit=self.time_limit,
        )

    def validate(self):
        if not self.team:
            raise ScenarioValidationError("team must not be empty")
        try:
            self.env_config()
            validate_coverage_values(self.coverage_values)
        except ValueError as e:
            raise ScenarioValidationError(str(e)) from None
        if self.artifact_prior < 0:
            raise ScenarioValidationError("artifact_prior must be >= 0")
        for cap in self.team:
            row = cap.mobility.base_success
            for hz in self.map.hazards.values():
                if hz.terrain not in row:
                    raise ScenarioValidationError(
                        f"terrain class {hz.terrain!r} unknown to mobility "
                        f"{cap.mobility.name!r}"
                    )
        return self

    def to_text(self) -> str:
        lines = ["[config]"]
        lines.append(f"name = {self.name}")
        lines.append(f"time_limit = {self.time_limit}")
        lines.append(
            "coverage_levels = " + ",".join(repr(v) for v in self.coverage_values)
        )
        lines.append(f"artifact_prior = {self.artifact_prior!r}")
        lines.append(f"beta = {self.beta!r}")
        lines.append(f"relay = {'on' if self.relay else 'off'}")
        lines.append(f"supervision_factor = {self.supervision_factor!r}")
        lines.append(f"autonomy_scale = {self.autonomy_scale!r}")
        lines.append(f"perception_degrade = {self.perception_degrade!r}")
        for mob in sorted(self.matrix):
            for terrain in sorted(self.matrix[mob]):
                v = self.matrix[mob][terrain]
                if DEFAULT_CAPABILITY_MATRIX.get(mob, {}).get(terrain) != v:
                    lines.append(f"matrix.{mob}.{terrain} = {v!r}")

        lines.append("")
        lines.append("[hazards]")
        for hid in sorted(self.map.hazards):
            hz = self.map.hazards[hid]
            lines.append(f"{hid} terrain={hz.terrain} difficulty={hz.difficulty!r}")

        lines.append("")
        lines.append("[sectors]")
        for sid in sorted(self.map.sectors):
            s = self.map.sectors[sid]
            parts = [sid]
            if s.is_staging:
                parts.append("staging")
            if s.in_comm_range:
                parts.append("comm")
            if s.artifact_count:
                parts.append(f"artifacts={s.artifact_count}")
            lines.append(" ".join(parts))

        lines.append("")
        lines.append("[edges]")
        for a, b, hz in self.map.edges:
            lines.append(f"{a} {b}" + (f" hazard={hz.id}" if hz is not None else ""))

        lines.append("")
        lines.append("[team]")
        for cap in self.team:
            lines.append(
                f"{cap.label} mobility={cap.mobility.name} "
                f"perception={cap.perception!r} autonomy={cap.autonomy_level!r}"
            )
        lines.append("")
        return "\n".join(lines)


def _copy_matrix(matrix):
    return {m: dict(row) for m, row in matrix.items()}


# ---------------------------------------------------------------------------
# parsing

_SECTIONS = ("config", "hazards", "sectors", "edges", "team")

_CONFIG_KEYS = {
    "name",
    "time_limit",
    "coverage_levels",
    "artifact_prior",
    "beta",
    "relay",
    "supervision_factor",
    "autonomy_scale",
    "perception_degrade",
}


def _kv_tokens(tokens, lineno, allowed, flags=()):
    out = {}
    for tok in tokens:
        if "=" in tok:
            k, v = tok.split("=", 1)
            if k not in allowed:
                raise ScenarioParseError(lineno, f"unknown field {k!r}")
            out[k] = v
        elif tok in flags:
            out[tok] = True
        else:
            raise ScenarioParseError(lineno, f"unrecognized token {tok!r}")
    return out


def _parse_float(value, lineno, what):
    try:
        return float(value)
    except ValueError:
        raise ScenarioParseError(lineno, f"{what}: not a number: {value!r}") from None


def _parse_bool(value, lineno, what):
    v = value.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ScenarioParseError(lineno, f"{what}: expected on/off, got {value!r}")


def load_scenario(text: str) -> Scenario:
    config = {}
    matrix_overrides = []
    hazard_lines = []
    sector_lines = []
    edge_lines = []
    team_lines = []
    section = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioParseError(lineno, "malformed section header")
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ScenarioParseError(lineno, f"unknown section [{section}]")
            continue
        if section is None:
            raise ScenarioParseError(lineno, "content before any [section]")
        if section == "config":
            if "=" not in line:
                raise ScenarioParseError(lineno, "expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key.startswith("matrix."):
                parts = key.split(".")
                if len(parts) != 3 or not parts[1] or not parts[2]:
                    raise ScenarioParseError(
                        lineno, f"matrix override must be matrix.<mobility>.<terrain>"
                    )
                matrix_overrides.append(
                    (parts[1], parts[2], _parse_float(value, lineno, key))
                )
            elif key in _CONFIG_KEYS:
                config[key] = (value, lineno)
            else:
                raise ScenarioParseError(lineno, f"unknown config key {key!r}")
        else:
            {
                "hazards": hazard_lines,
                "sectors": sector_lines,
                "edges": edge_lines,
                "team": team_lines,
            }[section].append((lineno, line.split()))

    # config values
    def conf(key, default=None):
        return config.get(key, (default, 0))

    name = conf("name", "unnamed")[0]
    time_limit_s, tl_line = conf("time_limit", "40")
    try:
        time_limit = int(time_limit_s)
    except ValueError:
        raise ScenarioParseError(tl_line, f"time_limit: not an integer") from None
    cov_s, cov_line = conf("coverage_levels")
    if cov_s is None:
        coverage_values = DEFAULT_COVERAGE_VALUES
    else:
        coverage_values = tuple(
            _parse_float(v, cov_line, "coverage_levels") for v in cov_s.split(",")
        )
    artifact_prior = _parse_float(*conf("artifact_prior", "0.5"), "artifact_prior")
    beta = _parse_float(*conf("beta", "0.1"), "beta")
    relay = _parse_bool(*conf("relay", "on"), "relay")
    supervision_factor = _parse_float(
        *conf("supervision_factor", "0.5"), "supervision_factor"
    )
    autonomy_scale = _parse_float(*conf("autonomy_scale", "1.0"), "autonomy_scale")
    perception_degrade = _parse_float(
        *conf("perception_degrade", "0.0"), "perception_degrade"
    )

    matrix = _copy_matrix(DEFAULT_CAPABILITY_MATRIX)
    for mob, terrain, value in matrix_overrides:
        matrix.setdefault(mob, {})[terrain] = value

    # hazards
    hazards = {}
    for lineno, tokens in hazard_lines:
        hid = tokens[0]
        if "=" in hid:
            raise ScenarioParseError(lineno, "hazard line must start with its id")
        if hid in hazards:
            raise ScenarioParseError(lineno, f"duplicate hazard id {hid!r}")
        kv = _kv_tokens(tokens[1:], lineno, {"terrain", "difficulty"})
        if "terrain" not in kv or "difficulty" not in kv:
            raise ScenarioParseError(lineno, "hazard needs terrain= and difficulty=")
        try:
            hazards[hid] = HazardSpec(
                hid, kv["terrain"], _parse_float(kv["difficulty"], lineno, "difficulty")
            )
        except ValueError as e:
            raise ScenarioParseError(lineno, str(e)) from None

    # sectors
    sectors = []
    seen_ids = set()
    for lineno, tokens in sector_lines:
        sid = tokens[0]
        if "=" in sid:
            raise ScenarioParseError(lineno, "sector line must start with its id")
        if sid in seen_ids:
            raise ScenarioParseError(lineno, f"duplicate sector id {sid!r}")
        seen_ids.add(sid)
        kv = _kv_tokens(tokens[1:], lineno, {"artifacts"}, flags=("staging", "comm"))
        try:
            count = int(kv.get("artifacts", 0))
        except ValueError:
            raise ScenarioParseError(lineno, "artifacts: not an integer") from None
        try:
            sectors.append(
                SectorGroundTruth(
                    sid,
                    artifact_count=count,
                    in_comm_range=bool(kv.get("comm")),
                    is_staging=bool(kv.get("staging")),
                )
            )
        except ValueError as e:
            raise ScenarioParseError(lineno, str(e)) from None

    # edges
    edges = []
    for lineno, tokens in edge_lines:
        plain = [t for t in tokens if "=" not in t]
        if len(plain) != 2:
            raise ScenarioParseError(lineno, "edge needs exactly two sector ids")
        kv = _kv_tokens(tokens[2:], lineno, {"hazard"})
        hz = None
        if "hazard" in kv:
            hz = hazards.get(kv["hazard"])
            if hz is None:
                raise ScenarioValidationError(
                    f"line {lineno}: edge references unknown hazard id {kv['hazard']!r}"
                )
        edges.append((plain[0], plain[1], hz))

    # team
    team = []
    for lineno, tokens in team_lines:
        label = tokens[0]
        if "=" in label:
            raise ScenarioParseError(lineno, "team line must start with the label")
        kv = _kv_tokens(tokens[1:], lineno, {"mobility", "perception", "autonomy"})
        if "mobility" not in kv:
            raise ScenarioParseError(lineno, "team member needs mobility=")
        if kv["mobility"] not in matrix:
            raise ScenarioValidationError(
                f"line {lineno}: unknown mobility class {kv['mobility']!r}"
            )
        try:
            team.append(
                RobotCapability(
                    label,
                    make_mobility(kv["mobility"], matrix),
                    perception=_parse_float(
                        kv.get("perception", "1.0"), lineno, "perception"
                    ),
                    autonomy_level=_parse_float(
                        kv.get("autonomy", "0.0"), lineno, "autonomy"
                    ),
                )
            )
        except ValueError as e:
            raise ScenarioParseError(lineno, str(e)) from None

    try:
        graph = MapGraph(sectors, edges)
    except ValueError as e:
        raise ScenarioValidationError(str(e)) from None

    return Scenario(
        name=name,
        map=graph,
        team=tuple(team),
        time_limit=time_limit,
        coverage_values=coverage_values,
        artifact_prior=artifact_prior,
        relay=relay,
        beta=beta,
        supervision_factor=supervision_factor,
        autonomy_scale=autonomy_scale,
        perception_degrade=perception_degrade,
        matrix=matrix,
    ).validate()


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def serialize_scenario(scenario: Scenario) -> str:
    return scenario.to_text()


# ---------------------------------------------------------------------------
# built-in worlds


def build_urban7() -> Scenario:
    """Two-floor building: seven sectors, one staircase between floors.

    The ground floor (m0..m3) is reachable on wheels — the loading-dock
    rails at the entrance barely slow a wheeled platform but are awkward
    for legs — while the staircase up to m4 is where a wheeled platform is
    likely to break.  Base comm covers
    everything except the far corner m6, so whatever is found there has to
    be walked back.  Four artifacts sit in the sectors farthest from
    staging on each floor.
    """
    rails = HazardSpec("rails12", "Rails", 0.6)
    rubble = HazardSpec("rubble23", "Rubble", 0.7)
    stairs = HazardSpec("stairs14", "Stairs", 1.0)
    narrow = HazardSpec("narrow56", "NarrowPassage", 0.8)
    sectors = [
        SectorGroundTruth("m0", in_comm_range=True, is_staging=True),
        SectorGroundTruth("m1", in_comm_range=True),
        SectorGroundTruth("m2", artifact_count=1, in_comm_range=True),
        SectorGroundTruth("m3", artifact_count=1, in_comm_range=True),
        SectorGroundTruth("m4", in_comm_range=True),
        SectorGroundTruth("m5", artifact_count=1, in_comm_range=True),
        SectorGroundTruth("m6", artifact_count=1),
    ]
    edges = [
        ("m0", "m1", None),
        ("m1", "m2", rails),
        ("m2", "m3", rubble),
        ("m1", "m4", stairs),
        ("m4", "m5", None),
        ("m5", "m6", narrow),
    ]
    team = (
        RobotCapability("wheeled-1", make_mobility("Wheeled"), perception=0.80),
        RobotCapability("legged-1", make_mobility("Legged"), perception=0.80),
    )
    return Scenario(
        name="urban7",
        map=MapGraph(sectors, edges),
        team=team,
        time_limit=40,
        artifact_prior=0.38,
    ).validate()


_REGIONS = (
    ("t", (("Flat", 0.30), ("Rails", 0.30), ("Mud", 0.40)), (0.05, 0.30)),
    (
        "u",
        (
            ("Doorway", 0.30),
            ("Stairs", 0.30),
            ("NarrowPassage", 0.25),
            ("VerticalShaft", 0.15),
        ),
        (0.10, 0.40),
    ),
    ("c", (("Rubble", 0.60), ("NarrowPassage", 0.40)), (0.15, 0.50)),
)

# Per-scenario capability overrides for the long underground course.  The
# stock matrix is tuned for short missions; over 120 steps its per-hop
# failure rates compound until nobody survives, so field-hardened platforms
# get better odds on their home terrain.  Catastrophic mismatches (ground
# robots in shafts, wheels on stairs) keep their stock values — those
# differences are the point of a mixed team.
_SUBT_MATRIX_TUNE = {
    "Wheeled": {
        "Rubble": 0.75,
        "NarrowPassage": 0.9,
        "Mud": 0.7,
        "Rails": 0.95,
        "Doorway": 0.95,
    },
    "Legged": {
        "Stairs": 0.95,
        "Rubble": 0.93,
        "NarrowPassage": 0.95,
        "Mud": 0.88,
        "Rails": 0.9,
        "Doorway": 0.97,
    },
    "Aerial": {"NarrowPassage": 0.8, "VerticalShaft": 0.98, "Doorway": 0.85},
}


def _bfs_order(adjacency, start):
    order = [start]
    seen = {start}
    layer = [start]
    while layer:
        nxt = []
        for u in layer:
            for v, _ in adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        nxt.sort()
        order.extend(nxt)
        layer = nxt
    return order


def _comm_flags(graph: MapGraph, fraction: float):
    want = max(1, math.ceil(fraction * len(graph.sectors)))
    order = _bfs_order(graph.adjacency, graph.staging)
    return frozenset(order[:want])


def build_subt121(
    layout_seed: int = 7,
    comm_fraction: float = 0.3,
    autonomy_level: float = 0.0,
) -> Scenario:
    """Synthetic three-branch underground course.

    121 sectors in tunnel / urban / cave branches radiating from a staging
    sector, with the three deep ends linked into a ring so cross-branch
    travel does not have to pass staging.  40 artifacts are biased toward
    the deep ends; hazard terrain and difficulty are drawn per branch.
    Base comm reaches the given fraction of sectors, grown outward from
    staging; every robot runs at the given autonomy level.
    """
    rng = random.Random(f"subt121|{layout_seed}")
    sectors = {"base": 0}
    edges = []
    region_ids = []
    for prefix, pool, (lo, hi) in _REGIONS:
        names = [w for w, _ in pool]
        weights = [w for _, w in pool]
        ids = [f"{prefix}{i:02d}" for i in range(40)]
        region_ids.append(ids)
        for sid in ids:
            sectors[sid] = 0
        edges.append(("base", ids[0], None))
        pairs = {("base", ids[0])}
        for k in range(1, 40):
            parent = ids[k - 1] if rng.random() < 0.97 else ids[rng.randrange(k)]
            hz = HazardSpec(
                f"{prefix}h{k:02d}",
                rng.choices(names, weights)[0],
                round(rng.uniform(lo, hi), 3),
            )
            edges.append((parent, ids[k], hz))
            pairs.add((min(parent, ids[k]), max(parent, ids[k])))
        # Loop edges stay depth-local so they model side passages, not
        # wormholes that would collapse the region's distance structure.
        added = 0
        guard = 0
        while added < 2 and guard < 200:
            guard += 1
            i = rng.randrange(39)
            a, b = ids[i], ids[min(39, i + rng.randint(2, 6))]
            key = (min(a, b), max(a, b))
            if key in pairs:
                continue
            pairs.add(key)
            hz = HazardSpec(
                f"{prefix}x{added}",
                rng.choices(names, weights)[0],
                round(rng.uniform(lo, hi), 3),
            )
            edges.append((a, b, hz))
            added += 1

    # The deep ends interconnect, so traffic between branches does not have
    # to funnel back through staging; the connectors are hazard-free bores.
    for r in range(len(region_ids)):
        edges.append((region_ids[r][-1], region_ids[(r + 1) % len(region_ids)][-1], None))

    graph = MapGraph(
        [SectorGroundTruth(sid, is_staging=sid == "base") for sid in sectors],
        [(a, b, h) for a, b, h in edges],
    )
    depth = {graph.staging: 0}
    layer = [graph.staging]
    d = 0
    while layer:
        d += 1
        nxt = []
        for u in layer:
            for v, _ in graph.adjacency[u]:
                if v not in depth:
                    depth[v] = d
                    nxt.append(v)
        layer = nxt
    pool_ids = sorted(s for s in sectors if s != "base")
    weights = [depth[s] for s in pool_ids]
    for sid in rng.choices(pool_ids, weights, k=40):
        sectors[sid] += 1

    comm = _comm_flags(graph, comm_fraction)
    truth = MapGraph(
        [
            SectorGroundTruth(
                sid,
                artifact_count=sectors[sid],
                in_comm_range=sid in comm,
                is_staging=sid == "base",
            )
            for sid in sectors
        ],
        edges,
    )
    matrix = _copy_matrix(DEFAULT_CAPABILITY_MATRIX)
    for mob, row in _SUBT_MATRIX_TUNE.items():
        matrix[mob].update(row)
    team = tuple(
        RobotCapability(
            label,
            make_mobility(mobility, matrix),
            perception=0.9,
            autonomy_level=autonomy_level,
        )
        for label, mobility in (
            ("legged-1", "Legged"),
            ("legged-2", "Legged"),
            ("legged-3", "Legged"),
            ("legged-4", "Legged"),
            ("wheeled-1", "Wheeled"),
            ("wheeled-2", "Wheeled"),
            ("aerial-1", "Aerial"),
        )
    )
    return Scenario(
        name=f"subt121-s{layout_seed}-c{comm_fraction:g}-a{autonomy_level:g}",
        map=truth,
        team=team,
        time_limit=120,
        matrix=matrix,
    ).validate()


def with_comm_fraction(scenario: Scenario, fraction: float) -> Scenario:
    """Same world, base comm regrown from staging to cover ``fraction``."""
    comm = _comm_flags(scenario.map, fraction)
    truth = MapGraph(
        [
            replace(s, in_comm_range=s.id in comm)
            for s in scenario.map.sectors.values()
        ],
        scenario.map.edges,
    )
    return replace(scenario, map=truth, name=f"{scenario.name}|c={fraction:g}")


def with_autonomy(scenario: Scenario, level: float) -> Scenario:
    team = tuple(
        RobotCapability(c.label, c.mobility, c.perception, level)
        for c in scenario.team
    )
    return replace(scenario, team=team, name=f"{scenario.name}|a={level:g}")


def formation_variants(base: Scenario):
    """Five team compositions on the same map: both mixed-pair robots, two
    of each single type, and each type alone."""
    wheeled = next(c for c in base.team if c.mobility.name == "Wheeled")
    legged = next(c for c in base.team if c.mobility.name == "Legged")

    def clone(cap, label):
        return RobotCapability(label, cap.mobility, cap.perception, cap.autonomy_level)

    rows = (
        ("multi_hybrid", (clone(wheeled, "wheeled-1"), clone(legged, "legged-1"))),
        ("multi_wheeled", (clone(wheeled, "wheeled-1"), clone(wheeled, "wheeled-2"))),
        ("multi_legged", (clone(legged, "legged-1"), clone(legged, "legged-2"))),
        ("single_wheeled", (clone(wheeled, "wheeled-1"),)),
        ("single_legged", (clone(legged, "legged-1"),)),
    )
    return [
        replace(base, team=team, name=f"{base.name}-{tag}").validate()
        for tag, team in rows
    ]


DEFAULT_COMM_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_AUTONOMY_LEVELS = (0.25, 0.5, 0.75, 1.0)


def comm_autonomy_grid(base: Scenario, comm_fractions=None, autonomy_levels=None):
    """Cartesian sweep over base-comm reach and robot autonomy.

    Returns one scenario per grid cell in fraction-major order, i.e. the
    cell for (fractions[i], levels[j]) sits at index ``i * len(levels) + j``.
    """
    fractions = (
        DEFAULT_COMM_FRACTIONS if comm_fractions is None else tuple(comm_fractions)
    )
    levels = (
        DEFAULT_AUTONOMY_LEVELS if autonomy_levels is None else tuple(autonomy_levels)
    )
    out = []
    for f in fractions:
        tuned = with_comm_fraction(base, f)
        for lam in levels:
            out.append(with_autonomy(tuned, lam))
    return out
