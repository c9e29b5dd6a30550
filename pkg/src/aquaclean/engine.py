"""Deterministic discrete-event run of a built world.

Events pop in ``(time, seq)`` order; sequence numbers are assigned when an
event is scheduled, so equal-time events run in scheduling order. Each
executed event appends one row to the event log.

Per fish the cycle is::

    arrive_at_object -> capture_done -> decision_received
        -> collection_done | (left, next target) | fish_stopped

A fish does not move while its decision is in flight.
"""
from __future__ import annotations

import csv
import hashlib
import heapq
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import channel, decision, imaging
from .decision import Tier
from .imaging import Decision
from .world import SCHEMA_VERSION, World, build_world

__all__ = ["EVENT_COLUMNS", "EVENT_KINDS", "RunResult", "run", "run_config", "replay_check"]

log = logging.getLogger(__name__)

EVENT_COLUMNS = ("time", "seq", "fish_id", "event_kind", "class_id", "tier",
                 "T_k", "T_p", "T_bio", "T_total", "G_r", "G_waste_cum")
EVENT_KINDS = ("phase1_record", "arrive_at_object", "capture_done", "decision_received",
               "collection_done", "object_skipped", "fish_stopped")
# piston moves per collection cycle
CYCLE_MOVES = 6


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunResult:
    metrics: dict
    rows: list
    world: World = field(repr=False, default=None)
    resolutions: list = field(repr=False, default_factory=list)
    skipped: list = field(repr=False, default_factory=list)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.csv_text().encode()).hexdigest()


class _Sim:
    def __init__(self, world: World):
        self.w = world
        self.heap = []
        self.seq = 0
        self.rows = []
        self.claimed = {}
        self.done = set()
        self.idle = set()
        self.pending = {}
        self.resolutions = []
        self.skipped = []
        self.start = 0.0
        self.now = 0.0

    # -- scheduling -------------------------------------------------------
    def schedule(self, t, kind, fish_id, obj_id=None):
        heapq.heappush(self.heap, (t, self.seq, kind, fish_id, obj_id))
        self.seq += 1

    def row(self, t, seq, fish_id, kind, class_id=None, tier=None, T_k=None, T_p=None,
            T_bio=None, T_total=None, G_r=None, G_waste=None):
        self.rows.append((t, seq, fish_id, kind, class_id, tier, T_k, T_p, T_bio, T_total, G_r, G_waste))

    # -- phase 1 ----------------------------------------------------------
    def phase1(self):
        w = self.w
        clock = {}
        entries = []
        for order, (fid, sample) in enumerate(w.phase1_plan):
            fish = w.fish[fid]
            t0 = clock.get(fid, 0.0)
            try:
                rec, lat, _ = decision.phase1_collect(fish, sample, w)
            except (imaging.EmptyForeground, channel.Unreachable) as exc:
                log.info("phase-1 sample %d skipped: %s", sample.object_id, exc)
                entries.append((t0, order, fid, "object_skipped", sample.class_id, None, None, None))
                continue
            clock[fid] = t0 + lat
            entries.append((t0 + lat, order, fid, "phase1_record", sample.class_id,
                            lat - w.tiers.T_bio, w.tiers.T_bio, lat))
        entries.sort(key=lambda e: (e[0], e[1]))
        for t, _, fid, kind, cid, t_k, t_bio, lat in entries:
            tier = Tier.BIOSENSOR.value if kind == "phase1_record" else None
            self.row(t, self.seq, fid, kind, cid, tier, t_k, 0.0 if t_k is not None else None, t_bio, lat)
            self.seq += 1
        self.start = max(clock.values(), default=0.0)

    # -- phase 2 ----------------------------------------------------------
    def dispatch(self, fid, t):
        fish = self.w.fish[fid]
        if fish.stopped:
            return
        best = None
        for oid, obj in self.w.objects.items():
            if obj.area != fish.area or oid in self.done or oid in self.claimed:
                continue
            dist = math.dist(fish.position, obj.position)
            if best is None or dist < best[0]:
                best = (dist, oid)
        if best is None:
            self.idle.add(fid)
            return
        self.idle.discard(fid)
        dist, oid = best
        self.claimed[oid] = fid
        self.schedule(t + dist / fish.speed, "arrive_at_object", fid, oid)

    def release(self, oid, t):
        self.claimed.pop(oid, None)
        area = self.w.objects[oid].area
        for fid in sorted(self.idle):
            if self.w.fish[fid].area == area:
                self.dispatch(fid, t)

    def finish(self, oid, fid, t):
        self.done.add(oid)
        self.claimed.pop(oid, None)
        self.dispatch(fid, t)

    def execute(self, t, seq, kind, fid, oid):
        w = self.w
        fish = w.fish[fid]
        obj = w.objects.get(oid)
        cid = obj.class_id if obj is not None else None
        if kind == "arrive_at_object":
            w.fish[fid] = replace(fish, position=obj.position)
            self.row(t, seq, fid, kind, cid)
            self.schedule(t, "capture_done", fid, oid)
        elif kind == "capture_done":
            self.row(t, seq, fid, kind, cid)
            try:
                out = decision.resolve(fish, w.capture(obj), w, obj)
            except (imaging.EmptyForeground, channel.Unreachable) as exc:
                log.info("object %d skipped by fish %d: %s", oid, fid, exc)
                self.skipped.append((oid, fid, type(exc).__name__))
                self.schedule(t, "object_skipped", fid, oid)
                return
            self.pending[(fid, oid)] = (t, out)
            self.schedule(t + out.latency, "decision_received", fid, oid)
        elif kind == "object_skipped":
            self.row(t, seq, fid, kind, cid)
            self.finish(oid, fid, t)
        elif kind == "decision_received":
            t0, out = self.pending.pop((fid, oid))
            decision.commit_writes(w, out.db_writes)
            self.row(t, seq, fid, kind, cid, out.tier.value, out.T_k, out.T_p, out.T_bio,
                     out.latency, obj.G_r, fish.body.G_waste)
            truth = w.classes[cid].decision
            self.resolutions.append({
                "start": t0, "time": t, "fish": fid, "object": oid, "class_id": cid,
                "area": fish.area, "tier": out.tier, "latency": out.latency,
                "decision": out.decision, "truth": truth, "serving_mec": out.serving_mec,
            })
            new = decision.act_on_decision(fish, out.decision, obj, w)
            w.fish[fid] = new
            if new.stopped:
                self.schedule(t, "fish_stopped", fid, oid)
            elif len(new.collected) > len(fish.collected):
                self.schedule(t + CYCLE_MOVES * fish.stroke.t, "collection_done", fid, oid)
            else:
                self.finish(oid, fid, t)
        elif kind == "collection_done":
            self.row(t, seq, fid, kind, cid, G_r=obj.G_r, G_waste=fish.body.G_waste)
            self.finish(oid, fid, t)
        elif kind == "fish_stopped":
            self.row(t, seq, fid, kind, cid, G_r=obj.G_r if obj else None, G_waste=fish.body.G_waste)
            self.release(oid, t)
        else:  # pragma: no cover
            raise RuntimeError(f"unknown event kind {kind}")

    def run(self):
        self.phase1()
        for fid in sorted(self.w.fish):
            self.dispatch(fid, self.start)
        end = self.start
        while self.heap:
            t, seq, kind, fid, oid = heapq.heappop(self.heap)
            if t < self.now:  # pragma: no cover
                raise RuntimeError("event scheduled in the past")
            self.now = end = t
            self.execute(t, seq, kind, fid, oid)
        return end


def _percentiles(xs):
    if not xs:
        return {"p50": None, "p95": None, "max": None, "count": 0}
    a = np.asarray(xs, dtype=np.float64)
    return {"p50": float(np.percentile(a, 50)), "p95": float(np.percentile(a, 95)),
            "max": float(a.max()), "count": int(a.size)}


def _metrics(sim: _Sim, end: float) -> dict:
    w = sim.w
    res = sim.resolutions
    k = w.physics
    hits = {t.value: 0 for t in Tier}
    lat = {t.value: [] for t in Tier}
    for r in res:
        hits[r["tier"].value] += 1
        lat[r["tier"].value].append(r["latency"])
    collected = [oid for f in w.fish.values() for oid in f.collected]
    left = [oid for f in w.fish.values() for oid in f.left]
    nb = Decision.NON_BIODEGRADABLE
    coll_ok = sum(w.classes[w.objects[o].class_id].decision is nb for o in collected)
    left_ok = sum(w.classes[w.objects[o].class_id].decision is not nb for o in left)
    correct = sum(r["decision"] is r["truth"] for r in res)
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": w.seed,
        "resolutions": len(res),
        "tier_hits": hits,
        "latency": {t: _percentiles(v) for t, v in lat.items()},
        "collected_count": len(collected),
        "collected_gravity": float(sum(w.objects[o].G_r for o in collected)),
        "capacity_bound": float(sum(k.rho * k.g * f.body.V_f - f.body.G for f in w.fish.values())),
        "left_count": len(left),
        "left_biodegradable": left_ok,
        "skipped_count": len(sim.skipped),
        "remaining_count": len(w.objects) - len(sim.done),
        "accuracy": {
            "decision": correct / len(res) if res else None,
            "collected_non_biodegradable": coll_ok / len(collected) if collected else None,
            "left_biodegradable": left_ok / len(left) if left else None,
        },
        "phase1_records": sum(1 for r in sim.rows if r[3] == "phase1_record"),
        "phase1_duration": sim.start,
        "makespan": end - sim.start,
        "fish": [
            {"fish_id": f.fish_id, "area": f.area, "stopped": f.stopped, "stop_reason": f.stop_reason,
             "rejected_object": f.rejected, "collected": len(f.collected), "left": len(f.left),
             "body": f.body.to_dict()}
            for f in sorted(w.fish.values(), key=lambda f: f.fish_id)
        ],
    }


def run(world: World) -> RunResult:
    """Run phase 1 and phase 2 to completion; ``world`` is mutated."""
    sim = _Sim(world)
    end = sim.run()
    result = RunResult(_metrics(sim, end), sim.rows, world, sim.resolutions, sim.skipped)
    result.metrics["event_log_sha256"] = result.digest()
    return result


def run_config(config: dict, seed: Optional[int] = None) -> RunResult:
    return run(build_world(config, seed))


def replay_check(config: dict, seed: Optional[int] = None) -> bool:
    """Run ``config`` twice from scratch and compare event-log digests."""
    return run_config(config, seed).digest() == run_config(config, seed).digest()
