"""Tiered object classification: MEC first, then cloud, then the biosensor.

Phase 1 seeds footprint databases with biosensor-labelled captures. In
phase 2 each capture is matched at the fish's serving MEC, then at the
cloud. When both miss, the onboard biosensor decides and the new record
is written back so later captures of the same object resolve at a lower
tier.

Database writes produced by :func:`resolve` are returned, not applied;
the engine commits them at event boundaries with :func:`commit_writes`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

from . import channel, imaging, kernels, physics, piston
from .imaging import Decision, Footprint, RawCapture

__all__ = [
    "Tier",
    "SourceTier",
    "FootprintRecord",
    "FootprintDB",
    "DecisionOutcome",
    "TierConfig",
    "biosensor_decide",
    "phase1_collect",
    "resolve",
    "commit_writes",
    "act_on_decision",
]


class Tier(str, enum.Enum):
    MEC = "mec"
    CLOUD = "cloud"
    BIOSENSOR = "biosensor"

    @property
    def rank(self) -> int:
        return _TIER_RANK[self]


_TIER_RANK = {Tier.MEC: 0, Tier.CLOUD: 1, Tier.BIOSENSOR: 2}


class SourceTier(str, enum.Enum):
    PHASE1 = "phase1"
    MEC = "mec"
    CLOUD = "cloud"
    BIOSENSOR = "biosensor"


@dataclass(frozen=True, eq=False)
class FootprintRecord:
    record_id: int
    footprint: Footprint
    decision: Decision
    source_tier: SourceTier
    class_id: Optional[int] = None


class FootprintDB:
    """Footprint records keyed by id, matched by nearest neighbour.

    Insertion is idempotent. The match matrix is rebuilt lazily in
    ascending id order so distance ties resolve to the lowest id.
    """

    def __init__(self, capacity: Optional[int] = None):
        self.capacity = capacity
        self._records: dict = {}
        self._cache = None

    def __len__(self):
        return len(self._records)

    def __contains__(self, record_id):
        return record_id in self._records

    def __iter__(self) -> Iterator[FootprintRecord]:
        return iter(sorted(self._records.values(), key=lambda r: r.record_id))

    def get(self, record_id):
        return self._records.get(record_id)

    def insert(self, record: FootprintRecord) -> bool:
        if record.record_id in self._records:
            return False
        if self.capacity is not None and len(self._records) >= self.capacity:
            return False
        self._records[record.record_id] = record
        self._cache = None
        return True

    def match(self, fp: Footprint, theta_match: float):
        if not self._records:
            return None
        if self._cache is None:
            recs = list(self)
            self._cache = (recs, np.stack([r.footprint.vector for r in recs]))
        recs, mat = self._cache
        idx, d2 = kernels.nearest_sq(fp.vector, mat)
        dist = float(np.sqrt(d2))
        if dist <= theta_match:
            return recs[idx], dist
        return None


@dataclass(frozen=True)
class TierConfig:
    T_bio: float = 300.0
    theta_match: float = 0.35
    theta_bg: float = 0.2
    flip_probability: float = 0.0


@dataclass(eq=False)
class DecisionOutcome:
    decision: Decision
    tier: Tier
    latency: float
    breakdown: channel.LatencyBreakdown
    T_k: float
    T_p: float
    T_bio: float
    db_writes: list = field(default_factory=list)
    serving_mec: Optional[str] = None
    matched_record: Optional[int] = None
    match_distance: Optional[float] = None
    footprint: Optional[Footprint] = None


def biosensor_decide(world, obj, fish) -> Decision:
    """Ground-truth label of ``obj``, optionally flipped for sensitivity runs."""
    truth = world.classes[obj.class_id].decision
    p = world.tiers.flip_probability
    if p > 0:
        rng = np.random.default_rng([world.seed, 7, obj.object_id, fish.fish_id])
        if rng.random() < p:
            return truth.flipped()
    return truth


def _capture_footprint(world, capture: RawCapture) -> Footprint:
    return imaging.run_pipeline(capture, world.tiers.theta_bg).footprint


def phase1_collect(fish, obj, world, capture: Optional[RawCapture] = None):
    """Label ``obj`` with the biosensor and seed the area's databases.

    The record goes to every MEC in the fish's area and to the cloud. The
    fish waits for the biosensor and for the upload to its serving MEC;
    the MEC-to-cloud forwarding does not block it.

    Returns ``(record, latency, db_writes)``; the writes are already
    committed.
    """
    if capture is None:
        capture = world.capture(obj)
    fp = _capture_footprint(world, capture)
    decision = biosensor_decide(world, obj, fish)
    rec = FootprintRecord(world.new_record_id(), fp, decision, SourceTier.PHASE1, obj.class_id)
    to_mec = channel.route(fish.node, channel.CLOUD, world.topology()).to_mec()
    t_k = channel.transmission_latency(world.request, to_mec.rates())
    writes = [(m, rec) for m in world.area_mecs(fish.area)] + [(channel.CLOUD, rec)]
    commit_writes(world, writes)
    return rec, world.tiers.T_bio + t_k, writes


def resolve(fish, capture: RawCapture, world, obj) -> DecisionOutcome:
    """Classify ``capture`` through the MEC, cloud and biosensor tiers.

    ``obj`` is only consulted by the biosensor fallback.

    Raises
    ------
    channel.Unreachable
        The fish cannot reach any access point.
    imaging.EmptyForeground
        Nothing was segmented in the capture.
    """
    fp = _capture_footprint(world, capture)
    tiers = world.tiers
    req = world.request
    full = channel.route(fish.node, channel.CLOUD, world.topology())
    to_mec = full.to_mec()
    mec = world.mecs[to_mec.mec]
    mec_bd = channel.total_latency(req, to_mec.rates(), mec.spec)

    hit = mec.db.match(fp, tiers.theta_match)
    if hit is not None:
        rec, dist = hit
        return DecisionOutcome(rec.decision, Tier.MEC, mec_bd.T, mec_bd, mec_bd.T_k, mec_bd.T_p,
                               0.0, [], mec.server_id, rec.record_id, dist, fp)

    # the MEC spent its processing time on the miss before forwarding
    cloud = world.cloud
    cloud_bd = channel.total_latency(req, full.rates(), cloud.spec)
    t_p = mec_bd.T_p + cloud_bd.T_p
    hit = cloud.db.match(fp, tiers.theta_match)
    if hit is not None:
        rec, dist = hit
        new = FootprintRecord(world.new_record_id(), fp, rec.decision, SourceTier.CLOUD, obj.class_id)
        return DecisionOutcome(rec.decision, Tier.CLOUD, cloud_bd.T + mec_bd.T_p, cloud_bd,
                               cloud_bd.T_k, t_p, 0.0, [(mec.server_id, new)],
                               mec.server_id, rec.record_id, dist, fp)

    decision = biosensor_decide(world, obj, fish)
    new = FootprintRecord(world.new_record_id(), fp, decision, SourceTier.BIOSENSOR, obj.class_id)
    latency = cloud_bd.T + mec_bd.T_p + tiers.T_bio
    return DecisionOutcome(decision, Tier.BIOSENSOR, latency, cloud_bd, cloud_bd.T_k, t_p,
                           tiers.T_bio, [(mec.server_id, new), (channel.CLOUD, new)],
                           mec.server_id, None, None, fp)


def commit_writes(world, writes) -> int:
    """Insert records into their target databases; returns how many were new."""
    n = 0
    for server_id, rec in writes:
        server = world.cloud if server_id == channel.CLOUD else world.mecs[server_id]
        n += server.db.insert(rec)
    return n


def act_on_decision(fish, decision: Decision, obj, world):
    """Collect a non-biodegradable object or leave a biodegradable one.

    A fish whose capacity condition fails, or whose ballast cannot absorb
    the item, stops for the rest of the mission without collecting it.
    """
    if fish.stopped:
        return fish
    if decision is Decision.BIODEGRADABLE:
        return replace(fish, left=fish.left + (obj.object_id,))
    k = world.physics
    if not physics.capacity_ok(fish.body, obj.G_r, k):
        return replace(fish, stopped=True, stop_reason="capacity", rejected=obj.object_id)
    st = fish.stroke
    event = physics.CollectionEvent(st.t, st.v, st.S, obj.G_r)
    try:
        body = physics.apply_collection(fish.body, event, k)
    except physics.BallastExhausted:
        return replace(fish, stopped=True, stop_reason="ballast", rejected=obj.object_id)
    pstate, _, _ = piston.run_cycle(fish.piston, st, obj.G_r)
    return replace(fish, body=body, piston=pstate, collected=fish.collected + (obj.object_id,))
