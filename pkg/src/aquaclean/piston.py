"""Valve and piston state machine of the waste-collection mechanism.

Container "a" is the piston chamber, "b" the waste store and "c" the air
store. Piston 2 moves left/right inside "a" and piston 1 moves
upper/lower to push waste into "b". Valve 1 is the intake, valve 2 opens
"a" towards "b", valve 3 opens "a" towards the buoyancy module, and the
air valve connects "c".
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

__all__ = [
    "IllegalTransition",
    "PistonState",
    "StrokeParams",
    "ACTIONS",
    "CYCLE_ACTIONS",
    "initial_state",
    "micro_step",
    "run_cycle",
    "reachable_configurations",
]

log = logging.getLogger(__name__)

UPPER, LOWER = "upper", "lower"
LEFT, RIGHT = "left", "right"

VALVES = ("valve1", "valve2", "valve3", "air_valve")
ACTIONS = (
    ("contract_p2", "stretch_p2", "contract_p1", "stretch_p1")
    + tuple(f"open_{v}" for v in VALVES)
    + tuple(f"close_{v}" for v in VALVES)
)

# Steps 1-3 of the collection procedure, in order.
CYCLE_ACTIONS = (
    # step 1: intake, then eject the water into the buoyancy module
    "contract_p2", "close_valve1", "open_valve3", "stretch_p2", "close_valve3",
    # step 2: push the waste from "a" into "b"
    "open_air_valve", "contract_p2", "open_valve2", "stretch_p1", "close_valve2",
    # step 3: return to the rest position
    "contract_p1", "stretch_p2", "close_air_valve", "open_valve1",
)

INVERSE = {
    "contract_p2": "stretch_p2",
    "stretch_p2": "contract_p2",
    "contract_p1": "stretch_p1",
    "stretch_p1": "contract_p1",
    **{f"open_{v}": f"close_{v}" for v in VALVES},
    **{f"close_{v}": f"open_{v}" for v in VALVES},
}


class IllegalTransition(RuntimeError):
    pass


@dataclass(frozen=True)
class StrokeParams:
    t: float
    v: float
    S: float

    def __post_init__(self):
        if self.t < 0 or self.v < 0:
            raise ValueError("t and v must be non-negative")
        if not self.S > 0:
            raise ValueError("S must be positive")

    @property
    def volume(self) -> float:
        return self.t * self.v * self.S


@dataclass(frozen=True)
class PistonState:
    valve1: bool = True
    valve2: bool = False
    valve3: bool = False
    air_valve: bool = False
    piston1_pos: str = UPPER
    piston2_pos: str = LEFT
    a_water: float = 0.0
    a_waste: float = 0.0
    b_waste: float = 0.0

    def __post_init__(self):
        if self.valve1 and self.valve3:
            raise IllegalTransition("valve1 and valve3 open together")
        if min(self.a_water, self.a_waste, self.b_waste) < 0:
            raise ValueError("container contents must be non-negative")

    def configuration(self) -> tuple:
        """Valve flags and piston positions, without container contents."""
        return (self.valve1, self.valve2, self.valve3, self.air_valve,
                self.piston1_pos, self.piston2_pos)

    def valve_bitmap(self) -> int:
        return sum(1 << i for i, v in enumerate(VALVES) if getattr(self, v))


def initial_state() -> PistonState:
    return PistonState()


def micro_step(state: PistonState, action: str, stroke: Optional[StrokeParams] = None,
               item_gravity: float = 0.0) -> PistonState:
    """Apply one actuator action.

    ``stroke`` and ``item_gravity`` describe what enters container "a"
    when piston 2 retracts with valve 1 open; they are ignored otherwise.
    """
    s = state
    if action == "contract_p2":
        if s.piston2_pos != LEFT:
            raise IllegalTransition("contract_p2 requires piston2 at left")
        new = replace(s, piston2_pos=RIGHT)
        if s.valve1:
            vol = stroke.volume if stroke is not None else 0.0
            new = replace(new, a_water=s.a_water + vol, a_waste=s.a_waste + item_gravity)
    elif action == "stretch_p2":
        if s.piston2_pos != RIGHT:
            raise IllegalTransition("stretch_p2 requires piston2 at right")
        new = replace(s, piston2_pos=LEFT)
        if s.valve3:
            new = replace(new, a_water=0.0)
    elif action == "stretch_p1":
        if s.piston1_pos != UPPER:
            raise IllegalTransition("stretch_p1 requires piston1 at upper")
        new = replace(s, piston1_pos=LOWER)
        if s.valve2:
            new = replace(new, a_waste=0.0, b_waste=s.b_waste + s.a_waste)
    elif action == "contract_p1":
        if s.piston1_pos != LOWER:
            raise IllegalTransition("contract_p1 requires piston1 at lower")
        new = replace(s, piston1_pos=UPPER)
    elif action.startswith(("open_", "close_")):
        verb, _, valve = action.partition("_")
        if valve not in VALVES:
            raise IllegalTransition(f"unknown valve in action {action!r}")
        want = verb == "open"
        if getattr(s, valve) == want:
            raise IllegalTransition(f"{action} requires {valve} {'closed' if want else 'open'}")
        if want and valve == "valve3" and s.valve1:
            raise IllegalTransition("open_valve3 requires valve1 closed")
        if want and valve == "valve1" and s.valve3:
            raise IllegalTransition("open_valve1 requires valve3 closed")
        new = replace(s, **{valve: want})
    else:
        raise IllegalTransition(f"unknown action {action!r}")
    if log.isEnabledFor(logging.DEBUG):
        log.debug("piston %s valves=%s p1=%s p2=%s", action, format(new.valve_bitmap(), "04b"),
                  new.piston1_pos, new.piston2_pos)
    return new


def run_cycle(state: PistonState, stroke: StrokeParams, item_gravity: float):
    """Run one full collection cycle starting from the rest configuration.

    Returns ``(state, ejected_water_volume, waste_to_b)``.
    """
    if state.configuration() != initial_state().configuration():
        raise IllegalTransition("run_cycle requires the initial valve/piston configuration")
    ejected = 0.0
    b_before = state.b_waste
    s = state
    for action in CYCLE_ACTIONS:
        if action == "stretch_p2" and s.valve3:
            ejected += s.a_water
        s = micro_step(s, action, stroke, item_gravity)
    return s, ejected, s.b_waste - b_before


def reachable_configurations():
    """Every valve/piston configuration reachable from the initial state.

    Container contents are abstracted away; the discrete part of the state
    space has at most 64 members, so plain breadth-first search suffices.
    """
    start = initial_state()
    seen = {start.configuration(): start}
    frontier = [start]
    while frontier:
        nxt = []
        for s in frontier:
            for a in ACTIONS:
                try:
                    t = micro_step(s, a)
                except IllegalTransition:
                    continue
                key = t.configuration()
                if key not in seen:
                    seen[key] = t
                    nxt.append(t)
        frontier = nxt
    return seen
