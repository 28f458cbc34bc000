"""Robot capability and per-robot state.

A robot is described by its mobility class (how well it copes with each
terrain class), a perception rating (per-step probability that active
search raises coverage / finds what is there), and an autonomy level that
discounts capability-attributable traversal failures.  Mission state per
robot is its position, two irreversible health flags, and the artifacts it
has found but not yet reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from . import chance

# Base traversal success per (mobility class, terrain class) at difficulty
# 1.0.  These are calibration defaults and can be overridden per scenario;
# orderings (legged beats wheeled on stairs, nothing ground-based enters a
# vertical shaft, aerial dislikes tight spaces) are the meaningful content.
DEFAULT_CAPABILITY_MATRIX = {
    "Wheeled": {
        "Flat": 1.0,
        "Stairs": 0.2,
        "Rubble": 0.6,
        "NarrowPassage": 0.8,
        "VerticalShaft": 0.0,
        "Mud": 0.5,
        "Rails": 0.9,
        "Doorway": 0.9,
    },
    "Legged": {
        "Flat": 1.0,
        "Stairs": 0.9,
        "Rubble": 0.85,
        "NarrowPassage": 0.9,
        "VerticalShaft": 0.0,
        "Mud": 0.7,
        "Rails": 0.8,
        "Doorway": 0.95,
    },
    "Aerial": {
        "Flat": 1.0,
        "Stairs": 1.0,
        "Rubble": 1.0,
        "NarrowPassage": 0.6,
        "VerticalShaft": 0.95,
        "Mud": 1.0,
        "Rails": 1.0,
        "Doorway": 0.7,
    },
}


@dataclass(eq=False)
class MobilityClass:
    name: str
    base_success: dict

    def __post_init__(self):
        for terrain, v in self.base_success.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(
                    f"mobility {self.name!r}: base success for {terrain!r} "
                    f"is {v}, outside [0, 1]"
                )
        if self.base_success.get("Flat", 1.0) != 1.0:
            raise ValueError(f"mobility {self.name!r}: Flat must map to 1.0")

    def __eq__(self, other):
        if not isinstance(other, MobilityClass):
            return NotImplemented
        return self.name == other.name and self.base_success == other.base_success


def make_mobility(name: str, matrix: Optional[dict] = None) -> MobilityClass:
    rows = matrix if matrix is not None else DEFAULT_CAPABILITY_MATRIX
    if name not in rows:
        raise ValueError(f"unknown mobility class {name!r}")
    return MobilityClass(name, dict(rows[name]))


@dataclass(eq=False)
class RobotCapability:
    label: str
    mobility: MobilityClass
    perception: float = 1.0
    autonomy_level: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.perception <= 1.0:
            raise ValueError(f"robot {self.label!r}: perception outside [0, 1]")
        if not 0.0 <= self.autonomy_level <= 1.0:
            raise ValueError(f"robot {self.label!r}: autonomy outside [0, 1]")

    def __eq__(self, other):
        if not isinstance(other, RobotCapability):
            return NotImplemented
        return (
            self.label == other.label
            and self.mobility == other.mobility
            and self.perception == other.perception
            and self.autonomy_level == other.autonomy_level
        )


class RobotState(NamedTuple):
    """position is None once mobility has failed; unreported holds the
    source sector id of each artifact found but not yet radioed in."""

    position: Optional[str]
    mobility_ok: bool = True
    perception_ok: bool = True
    unreported: tuple = ()


FAILED = RobotState(None, False, True, ())


def traversal_success_prob(
    capability: RobotCapability,
    hazard,
    supervised: bool,
    *,
    supervision_factor: float = 0.5,
    autonomy_scale: float = 1.0,
) -> float:
    """Probability that a single edge traversal succeeds.

    Failure mass is what the mobility class cannot handle, scaled by the
    hazard's difficulty, discounted by on-board autonomy, and halved (by
    default) when a human supervisor is guiding the robot through.
    """
    if hazard is None:
        return 1.0
    base = capability.mobility.base_success[hazard.terrain]
    f = (1.0 - base) * hazard.difficulty
    f *= 1.0 - autonomy_scale * capability.autonomy_level
    if supervised:
        f *= supervision_factor
    if f <= 0.0:
        return 1.0
    if f >= 1.0:
        return 0.0
    return 1.0 - f


def apply_traversal(
    state: RobotState,
    capability: RobotCapability,
    edge,
    supervised: bool,
    rng,
    *,
    supervision_factor: float = 0.5,
    autonomy_scale: float = 1.0,
):
    """Attempt to cross ``edge`` from the robot's current sector.

    Returns ``(new_state, failed)``.  On failure the robot is permanently
    lost along with everything it had not yet reported.
    """
    a, b, hazard = edge
    if not state.mobility_ok or state.position is None:
        raise ValueError("cannot move a failed robot")
    if state.position == a:
        dest = b
    elif state.position == b:
        dest = a
    else:
        raise ValueError(
            f"robot at {state.position!r} is not on edge {a!r}--{b!r}"
        )
    p = traversal_success_prob(
        capability,
        hazard,
        supervised,
        supervision_factor=supervision_factor,
        autonomy_scale=autonomy_scale,
    )
    if chance.bernoulli(rng, p):
        return state._replace(position=dest), False
    return RobotState(None, False, state.perception_ok, ()), True


def report(state: RobotState, connected: bool):
    """Empty the unreported set if the robot can currently reach base."""
    if not connected or not state.unreported:
        return state, 0
    return state._replace(unreported=()), len(state.unreported)
