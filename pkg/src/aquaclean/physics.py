"""Buoyancy, ballast and waste-capacity model of a single fish.

All functions are pure. SI units throughout: densities in kg/m^3, forces
in N, volumes in m^3.

The dry gravity ``G`` of the hull and the accumulated waste gravity
``G_waste`` are tracked separately so the capacity condition sees the
cumulative load over a mission.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

__all__ = [
    "PhysicsError",
    "InfeasibleBallast",
    "BallastExhausted",
    "OverCapacity",
    "PhysicsConstants",
    "FishBody",
    "CollectionEvent",
    "neutral_ballast_volume",
    "collection_added_gravity",
    "remaining_water_gravity",
    "capacity_ok",
    "apply_collection",
    "buoyancy_residual",
]

REL_TOL = 1e-9


class PhysicsError(ValueError):
    pass


class InfeasibleBallast(PhysicsError):
    """The hull is denser than water even with an empty ballast tank."""


class BallastExhausted(PhysicsError):
    """Not enough ballast water is left to compensate a collection."""


class OverCapacity(PhysicsError):
    """Collecting the item would break the capacity condition."""


@dataclass(frozen=True)
class PhysicsConstants:
    rho: float = 1000.0
    g: float = 9.8

    def __post_init__(self):
        if not (self.rho > 0 and self.g > 0):
            raise ValueError(f"rho and g must be positive, got rho={self.rho}, g={self.g}")

    @property
    def weight_density(self) -> float:
        """Gravity of one cubic metre of water (N/m^3)."""
        return self.rho * self.g


@dataclass(frozen=True)
class FishBody:
    G: float
    V_f: float
    V_w: float = 0.0
    G_waste: float = 0.0

    def __post_init__(self):
        if not self.V_f > 0:
            raise ValueError(f"V_f must be positive, got {self.V_f}")
        if self.G < 0 or self.G_waste < 0:
            raise ValueError("G and G_waste must be non-negative")
        if not (0.0 <= self.V_w <= self.V_f):
            raise ValueError(f"V_w must lie in [0, V_f], got {self.V_w}")

    def buoyancy(self, k: PhysicsConstants) -> float:
        return k.rho * k.g * self.V_f

    def total_gravity(self, k: PhysicsConstants) -> float:
        return self.G + self.G_waste + k.rho * self.V_w * k.g

    def to_dict(self) -> dict:
        return {"G": self.G, "V_f": self.V_f, "V_w": self.V_w, "G_waste": self.G_waste}


@dataclass(frozen=True)
class CollectionEvent:
    t: float
    v: float
    S: float
    G_r: float

    def __post_init__(self):
        if self.t < 0 or self.v < 0 or self.G_r < 0:
            raise ValueError("t, v and G_r must be non-negative")
        if not self.S > 0:
            raise ValueError(f"S must be positive, got {self.S}")

    @property
    def stroke_volume(self) -> float:
        return self.t * self.v * self.S


def neutral_ballast_volume(body: FishBody, k: PhysicsConstants) -> float:
    """Ballast volume that makes ``body`` neutrally buoyant.

    ``body.V_w`` is ignored. Raises :class:`InfeasibleBallast` when the dry
    hull plus waste already outweighs the displaced water.
    """
    buoyancy = k.rho * k.g * body.V_f
    load = body.G + body.G_waste
    if load > buoyancy:
        raise InfeasibleBallast(f"load {load} N exceeds buoyancy {buoyancy} N")
    return body.V_f - load / (k.rho * k.g)


def collection_added_gravity(e: CollectionEvent, k: PhysicsConstants) -> float:
    """Gravity added by one collection: inhaled stroke water plus the item."""
    return k.rho * (e.t * e.v * e.S) * k.g + e.G_r


def remaining_water_gravity(body: FishBody, e: CollectionEvent, k: PhysicsConstants) -> float:
    """Ballast gravity left after ejecting the added gravity of ``e``.

    Negative values mean the reservoir cannot cover the ejection.
    """
    return k.rho * body.V_w * k.g - k.rho * (e.t * e.v * e.S) * k.g - e.G_r


def capacity_ok(body: FishBody, next_item_gravity: float, k: PhysicsConstants) -> bool:
    """Strict capacity condition for taking one more item."""
    return body.G + body.G_waste + next_item_gravity < k.rho * k.g * body.V_f


def apply_collection(body: FishBody, e: CollectionEvent, k: PhysicsConstants) -> FishBody:
    """Account for one collection cycle and re-balance the ballast.

    The stroke water drawn into container "a" is pushed into the buoyancy
    module during the cycle, after which the module ejects water of gravity
    ``collection_added_gravity(e)``. The net ballast change is therefore
    ``-G_r / (rho * g)`` and neutrality is preserved.

    Raises
    ------
    OverCapacity
        If the capacity condition fails for ``e.G_r``.
    BallastExhausted
        If the reservoir, including the transferred stroke water, cannot
        supply the ejection.
    """
    if not capacity_ok(body, e.G_r, k):
        raise OverCapacity(
            f"G + G_waste + G_r = {body.G + body.G_waste + e.G_r} N "
            f">= buoyancy {k.rho * k.g * body.V_f} N"
        )
    if e.stroke_volume == 0.0 and e.G_r == 0.0:
        return body
    # stroke water reaches the reservoir before the ejection
    g_w = remaining_water_gravity(body, e, k) + k.rho * (e.t * e.v * e.S) * k.g
    # volume form avoids round-off pushing V_w above its old value
    v_w = body.V_w - e.G_r / (k.rho * k.g)
    if g_w < 0.0 or v_w < 0.0:
        raise BallastExhausted(f"remaining water gravity would be {g_w} N")
    return replace(body, V_w=v_w, G_waste=body.G_waste + e.G_r)


def buoyancy_residual(body: FishBody, k: PhysicsConstants) -> float:
    """Relative imbalance between buoyancy and total gravity."""
    b = k.rho * k.g * body.V_f
    return abs(b - body.total_gravity(k)) / b
