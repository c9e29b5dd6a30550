"""Scenario configuration, validation and world construction.

A scenario is one JSON document (``schema_version`` 1). The shipped
default lives in ``aquaclean/data/default_scenario.json`` and doubles as
the reference for every field; ``docs/config_schema.md`` describes them.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import channel, physics, piston
from .channel import LinkSpec, ServerSpec, WapSpec
from .decision import FootprintDB, TierConfig
from .imaging import ObjectClass, synth_capture

__all__ = [
    "SCHEMA_VERSION",
    "ConfigInvalid",
    "Diagnostic",
    "default_config",
    "load_config",
    "validate_config",
    "build_world",
    "World",
    "FishState",
    "WorldObject",
    "Server",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str
    rule: str = "field"

    def __str__(self):
        return f"[{self.rule}] {self.path}: {self.message}"


class ConfigInvalid(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


def default_config() -> dict:
    text = resources.files("aquaclean").joinpath("data/default_scenario.json").read_text()
    return json.loads(text)


def load_config(path) -> dict:
    """Read a scenario file. Raises ``OSError`` or ``json.JSONDecodeError``."""
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# validation

def _num(cfg, path, diags, *, gt=None, ge=None, le=None, rule="field"):
    """Fetch a numeric field by dotted path, recording a diagnostic on failure."""
    cur = cfg
    for part in path.split("."):
        if isinstance(cur, list):
            try:
                cur = cur[int(part)]
            except (ValueError, IndexError):
                cur = None
        elif isinstance(cur, dict):
            cur = cur.get(part)
        else:
            cur = None
        if cur is None:
            diags.append(Diagnostic(path, "missing", rule))
            return None
    if isinstance(cur, bool) or not isinstance(cur, (int, float)) or not math.isfinite(cur):
        diags.append(Diagnostic(path, f"expected a finite number, got {cur!r}", rule))
        return None
    if gt is not None and not cur > gt:
        diags.append(Diagnostic(path, f"must be > {gt}, got {cur}", rule))
        return None
    if ge is not None and not cur >= ge:
        diags.append(Diagnostic(path, f"must be >= {ge}, got {cur}", rule))
        return None
    if le is not None and not cur <= le:
        diags.append(Diagnostic(path, f"must be <= {le}, got {cur}", rule))
        return None
    return float(cur)


def _link(cfg, path, diags, fixed_distance: bool):
    vals = {
        "B": _num(cfg, f"{path}.B", diags, gt=0),
        "P": _num(cfg, f"{path}.P", diags, ge=0),
        "sigma2": _num(cfg, f"{path}.sigma2", diags, gt=0),
    }
    vals["d"] = _num(cfg, f"{path}.d", diags, gt=0) if fixed_distance else 1.0
    if any(v is None for v in vals.values()):
        return None
    return vals


def _box_ok(box, path, diags, dims):
    ok = True
    for ax in dims:
        rng = box.get(ax) if isinstance(box, dict) else None
        if not (isinstance(rng, list) and len(rng) == 2
                and all(isinstance(v, (int, float)) for v in rng) and rng[0] < rng[1]):
            diags.append(Diagnostic(f"{path}.{ax}", f"expected [lo, hi] with lo < hi, got {rng!r}"))
            ok = False
    return ok


def _in_box(p, box, dims="xyz"):
    return all(box[ax][0] <= p[i] <= box[ax][1] for i, ax in enumerate(dims))


def _overlap2d(a, b):
    return (a["x"][0] < b["x"][1] and b["x"][0] < a["x"][1]
            and a["y"][0] < b["y"][1] and b["y"][0] < a["y"][1])


def _rate(link: dict, d: float, c: float) -> float:
    return channel.achievable_rate(LinkSpec(link["B"], link["P"], link["sigma2"], d, c))


def validate_config(cfg) -> list:
    """Return a list of :class:`Diagnostic`; empty means the config is valid.

    Besides per-field checks two tier-ordering rules apply:

    ``TIER-CLOUD``
        The extra transmission time of the MEC-to-cloud hops must exceed
        the processing time a cloud server saves over each MEC, for every
        payload in ``channel.payload_bits_range``.
    ``TIER-BIO``
        ``tiers.T_bio`` must exceed twice a worst-case cloud-path latency
        (largest payload, fish at the edge of coverage, the longest
        possible relay chain).
    """
    d = []
    if not isinstance(cfg, dict):
        return [Diagnostic("$", "config must be a JSON object", "schema")]
    if cfg.get("schema_version") != SCHEMA_VERSION:
        d.append(Diagnostic("schema_version", f"expected {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}", "schema"))
    if isinstance(cfg.get("seed"), bool) or not isinstance(cfg.get("seed"), int):
        d.append(Diagnostic("seed", "expected an integer"))

    rho = _num(cfg, "physics.rho", d, gt=0)
    g = _num(cfg, "physics.g", d, gt=0)

    c = _num(cfg, "channel.c", d, gt=0)
    radio = _link(cfg, "channel.fish_radio", d, fixed_distance=False)
    d2d = _num(cfg, "channel.d2d_range", d, gt=0)
    fixed = {k: _link(cfg, f"channel.{k}", d, fixed_distance=True) for k in ("wap_mec", "mec_bs", "bs_cloud")}
    payload = _num(cfg, "channel.payload_bits", d, gt=0)
    cpb = _num(cfg, "channel.cycles_per_bit", d, ge=0)
    prange = cfg.get("channel", {}).get("payload_bits_range") if isinstance(cfg.get("channel"), dict) else None
    if prange is None and payload is not None:
        prange = [payload, payload]
    if not (isinstance(prange, list) and len(prange) == 2
            and all(isinstance(v, (int, float)) and v > 0 for v in prange) and prange[0] <= prange[1]):
        d.append(Diagnostic("channel.payload_bits_range", f"expected [lo, hi] with 0 < lo <= hi, got {prange!r}"))
        prange = None
    elif payload is not None and not prange[0] <= payload <= prange[1]:
        d.append(Diagnostic("channel.payload_bits", "must lie inside payload_bits_range"))

    t_bio = _num(cfg, "tiers.T_bio", d, gt=0)
    _num(cfg, "tiers.theta_match", d, gt=0)
    _num(cfg, "tiers.theta_bg", d, gt=0)
    _num(cfg, "tiers.flip_probability", d, ge=0, le=1)
    f_cloud = _num(cfg, "cloud.f_c", d, gt=0)
    _num(cfg, "imaging.size", d, ge=8)
    _num(cfg, "imaging.noise_sigma", d, ge=0)
    size = cfg.get("imaging", {}).get("size") if isinstance(cfg.get("imaging"), dict) else None
    if isinstance(size, int) and size % 2:
        d.append(Diagnostic("imaging.size", "must be even"))

    classes = cfg.get("classes")
    class_ids = set()
    if not isinstance(classes, list) or not classes:
        d.append(Diagnostic("classes", "expected a non-empty list"))
        classes = []
    for i, cl in enumerate(classes):
        try:
            obj = ObjectClass.from_dict(cl)
        except (KeyError, ValueError, TypeError) as exc:
            d.append(Diagnostic(f"classes.{i}", f"invalid class: {exc}"))
            continue
        if obj.class_id in class_ids:
            d.append(Diagnostic(f"classes.{i}.class_id", f"duplicate class id {obj.class_id}"))
        class_ids.add(obj.class_id)

    areas = cfg.get("areas")
    if not isinstance(areas, list) or not areas:
        d.append(Diagnostic("areas", "expected a non-empty list"))
        areas = []
    area_ids, mec_ids, wap_ids = {}, {}, set()
    good_areas = []
    mec_f = []
    max_hyp = 0.0
    for i, a in enumerate(areas):
        p = f"areas.{i}"
        if not isinstance(a, dict):
            d.append(Diagnostic(p, "expected an object"))
            continue
        aid = a.get("id")
        if not isinstance(aid, str) or aid in area_ids:
            d.append(Diagnostic(f"{p}.id", f"missing or duplicate area id {aid!r}"))
            continue
        area_ids[aid] = i
        if not _box_ok(a.get("extent"), f"{p}.extent", d, "xy"):
            continue
        ext = a["extent"]
        wbs = a.get("water_bodies")
        if not isinstance(wbs, list) or not wbs:
            d.append(Diagnostic(f"{p}.water_bodies", "expected a non-empty list"))
            continue
        zmin = 0.0
        for j, wb in enumerate(wbs):
            if _box_ok(wb, f"{p}.water_bodies.{j}", d, "xyz"):
                if not (ext["x"][0] <= wb["x"][0] and wb["x"][1] <= ext["x"][1]
                        and ext["y"][0] <= wb["y"][0] and wb["y"][1] <= ext["y"][1]):
                    d.append(Diagnostic(f"{p}.water_bodies.{j}", "water body leaves the area extent"))
                if wb["z"][1] > 0:
                    d.append(Diagnostic(f"{p}.water_bodies.{j}.z", "water bodies lie below the surface (z <= 0)"))
                zmin = min(zmin, wb["z"][0])
        for j, m in enumerate(a.get("mecs") or []):
            mid = m.get("id") if isinstance(m, dict) else None
            if not isinstance(mid, str) or mid in mec_ids or mid in (channel.CLOUD, channel.BS):
                d.append(Diagnostic(f"{p}.mecs.{j}.id", f"missing or duplicate server id {mid!r}"))
                continue
            mec_ids[mid] = aid
            f = _num(cfg, f"{p}.mecs.{j}.f_c", d, gt=0)
            if f is not None:
                mec_f.append((f"{p}.mecs.{j}", f))
        if not a.get("mecs"):
            d.append(Diagnostic(f"{p}.mecs", "area needs at least one MEC server"))
        for j, w in enumerate(a.get("waps") or []):
            wp = f"{p}.waps.{j}"
            wid = w.get("id") if isinstance(w, dict) else None
            if not isinstance(wid, str) or wid in wap_ids:
                d.append(Diagnostic(f"{wp}.id", f"missing or duplicate WAP id {wid!r}"))
                continue
            wap_ids.add(wid)
            r = _num(cfg, f"{wp}.radius", d, gt=0)
            pos = w.get("position")
            if not (isinstance(pos, list) and len(pos) == 3 and all(isinstance(v, (int, float)) for v in pos)):
                d.append(Diagnostic(f"{wp}.position", "expected [x, y, z]"))
                continue
            if pos[2] < 0:
                d.append(Diagnostic(f"{wp}.position", "access points sit at or above the surface (z >= 0)"))
            if w.get("mec") not in {m.get("id") for m in a.get("mecs") or [] if isinstance(m, dict)}:
                d.append(Diagnostic(f"{wp}.mec", f"unknown MEC {w.get('mec')!r} in area {aid}"))
            if r is not None:
                max_hyp = max(max_hyp, math.hypot(r, pos[2] - zmin))
        if not a.get("waps"):
            d.append(Diagnostic(f"{p}.waps", "area needs at least one access point"))
        good_areas.append((p, a))
    for x in range(len(good_areas)):
        for y in range(x + 1, len(good_areas)):
            if _overlap2d(good_areas[x][1]["extent"], good_areas[y][1]["extent"]):
                d.append(Diagnostic(f"{good_areas[y][0]}.extent",
                                    f"overlaps {good_areas[x][0]}", "area-overlap"))

    fleet = cfg.get("fleet")
    if not isinstance(fleet, list):
        d.append(Diagnostic("fleet", "expected a list"))
        fleet = []
    fish_ids = set()
    per_area = {}
    for i, f in enumerate(fleet):
        p = f"fleet.{i}"
        if not isinstance(f, dict):
            d.append(Diagnostic(p, "expected an object"))
            continue
        fid = f.get("id")
        if isinstance(fid, bool) or not isinstance(fid, int) or fid in fish_ids:
            d.append(Diagnostic(f"{p}.id", f"missing or duplicate fish id {fid!r}"))
        fish_ids.add(fid)
        _num(cfg, f"{p}.speed", d, gt=0)
        G = _num(cfg, f"{p}.G", d, ge=0)
        V_f = _num(cfg, f"{p}.V_f", d, gt=0)
        for k in ("t", "v"):
            _num(cfg, f"{p}.piston.{k}", d, ge=0)
        _num(cfg, f"{p}.piston.S", d, gt=0)
        if None not in (G, V_f, rho, g) and G >= rho * g * V_f:
            d.append(Diagnostic(f"{p}.G", "hull cannot float: G >= rho*g*V_f", "ballast"))
        start = f.get("start")
        if not (isinstance(start, list) and len(start) == 3 and all(isinstance(v, (int, float)) for v in start)):
            d.append(Diagnostic(f"{p}.start", "expected [x, y, z]"))
            continue
        owner = [a["id"] for _, a in good_areas if _in_box(start, a["extent"], "xy")]
        if not owner:
            d.append(Diagnostic(f"{p}.start", "start position is outside every area", "fish-area"))
        else:
            per_area[owner[0]] = per_area.get(owner[0], 0) + 1

    objs = cfg.get("objects")
    if not isinstance(objs, dict):
        d.append(Diagnostic("objects", "expected an object"))
    else:
        cnt = objs.get("count")
        if isinstance(cnt, bool) or not isinstance(cnt, int) or cnt < 0:
            d.append(Diagnostic("objects.count", f"expected a non-negative integer, got {cnt!r}"))
        lo = _num(cfg, "objects.G_r.0", d, ge=0)
        hi = _num(cfg, "objects.G_r.1", d, ge=0)
        if lo is not None and hi is not None and lo > hi:
            d.append(Diagnostic("objects.G_r", "lower bound exceeds upper bound"))
        mix = objs.get("class_mix")
        if mix is not None:
            if not isinstance(mix, dict) or not mix:
                d.append(Diagnostic("objects.class_mix", "expected a mapping class_id -> weight"))
            else:
                for k, w in mix.items():
                    if not (k.lstrip("-").isdigit() and int(k) in class_ids):
                        d.append(Diagnostic(f"objects.class_mix.{k}", "unknown class id"))
                    if isinstance(w, bool) or not isinstance(w, (int, float)) or w < 0:
                        d.append(Diagnostic(f"objects.class_mix.{k}", "weight must be >= 0"))

    ph = cfg.get("phase1", {})
    if not isinstance(ph, dict):
        d.append(Diagnostic("phase1", "expected an object"))
        ph = {}
    k1 = ph.get("samples_per_class", 1)
    if isinstance(k1, bool) or not isinstance(k1, int) or k1 < 0:
        d.append(Diagnostic("phase1.samples_per_class", "expected a non-negative integer"))
    for aid in ph.get("areas") or []:
        if aid not in area_ids:
            d.append(Diagnostic("phase1.areas", f"unknown area {aid!r}"))
    for cid in ph.get("classes") or []:
        if cid not in class_ids:
            d.append(Diagnostic("phase1.classes", f"unknown class {cid!r}"))

    # tier ordering rules need the link and server fields to be sane
    if d or None in (c, d2d, payload, cpb, t_bio, f_cloud) or radio is None \
            or any(v is None for v in fixed.values()) or prange is None:
        return d
    extra_per_bit = sum(1.0 / _rate(fixed[k], fixed[k]["d"], c) for k in ("mec_bs", "bs_cloud"))
    for path, f_mec in mec_f:
        saving_per_bit = cpb * (1.0 / f_mec - 1.0 / f_cloud)
        if not extra_per_bit > saving_per_bit:
            d.append(Diagnostic(f"{path}.f_c",
                                f"cloud path adds {extra_per_bit:.3e} s/bit but the cloud saves "
                                f"{saving_per_bit:.3e} s/bit of processing", "TIER-CLOUD"))
    n_relay = max(per_area.values(), default=1) - 1
    worst_per_bit = (n_relay / _rate(radio, d2d, c) + 1.0 / _rate(radio, max(max_hyp, 1e-3), c)
                     + sum(1.0 / _rate(fixed[k], fixed[k]["d"], c) for k in fixed))
    f_mec_min = min((f for _, f in mec_f), default=f_cloud)
    worst = prange[1] * worst_per_bit + cpb * prange[1] * (1.0 / f_mec_min + 1.0 / f_cloud)
    if not t_bio > 2.0 * worst:
        d.append(Diagnostic("tiers.T_bio", f"must exceed twice the worst cloud-path latency {worst:.4g} s",
                            "TIER-BIO"))
    return d


# ---------------------------------------------------------------------------
# world

@dataclass(frozen=True)
class WorldObject:
    object_id: int
    class_id: int
    area: str
    position: tuple
    G_r: float
    capture_seed: int


@dataclass(frozen=True)
class FishState:
    fish_id: int
    area: str
    position: tuple
    speed: float
    body: physics.FishBody
    stroke: piston.StrokeParams
    piston: piston.PistonState
    stopped: bool = False
    stop_reason: Optional[str] = None
    rejected: Optional[int] = None
    collected: tuple = ()
    left: tuple = ()

    @property
    def node(self) -> str:
        return channel.fish_node(self.fish_id)


@dataclass
class Server:
    server_id: str
    spec: ServerSpec
    area: Optional[str]
    db: FootprintDB


@dataclass
class World:
    config: dict
    seed: int
    physics: physics.PhysicsConstants
    tiers: TierConfig
    request: channel.OffloadRequest
    classes: dict
    areas: dict
    waps: list
    mecs: dict
    cloud: Server
    fish: dict
    objects: dict
    phase1_plan: list
    radio: LinkSpec
    d2d_range: float
    wap_mec: LinkSpec
    mec_bs: LinkSpec
    bs_cloud: LinkSpec
    image_size: int = 64
    noise_sigma: float = 0.02
    _next_record: int = field(default=0, repr=False)

    def new_record_id(self) -> int:
        self._next_record += 1
        return self._next_record

    def area_mecs(self, area: str) -> list:
        return sorted(m for m, s in self.mecs.items() if s.area == area)

    def topology(self) -> channel.Topology:
        return channel.Topology(
            fish_positions={f.node: f.position for f in self.fish.values()},
            waps=self.waps,
            radio=self.radio,
            d2d_range=self.d2d_range,
            wap_mec=self.wap_mec,
            mec_bs=self.mec_bs,
            bs_cloud=self.bs_cloud,
            fish_area={f.node: f.area for f in self.fish.values()},
            wap_area={w.wap_id: self.mecs[w.mec_id].area for w in self.waps},
        )

    def capture(self, obj: WorldObject):
        return synth_capture(self.classes[obj.class_id], obj.capture_seed, self.noise_sigma,
                             self.image_size, subject_id=obj.object_id)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.config, sort_keys=True).encode())
        for o in self.objects.values():
            h.update(repr((o.object_id, o.class_id, o.area, o.position, o.G_r, o.capture_seed)).encode())
        for f in self.fish.values():
            h.update(repr((f.fish_id, f.area, f.position, f.body)).encode())
        return h.hexdigest()


def _link_spec(d: dict, c: float, dist: float = 1.0) -> LinkSpec:
    return LinkSpec(float(d["B"]), float(d["P"]), float(d["sigma2"]), float(d.get("d", dist)), c)


def build_world(config: dict, seed: Optional[int] = None) -> World:
    """Validate ``config`` and instantiate a deterministic world.

    ``seed`` overrides ``config["seed"]``. Raises :class:`ConfigInvalid`.
    """
    cfg = copy.deepcopy(config)
    if seed is not None:
        cfg["seed"] = int(seed)
    diags = validate_config(cfg)
    if diags:
        raise ConfigInvalid(diags)
    rng = np.random.default_rng(cfg["seed"])
    k = physics.PhysicsConstants(cfg["physics"]["rho"], cfg["physics"]["g"])
    ch = cfg["channel"]
    c = float(ch["c"])
    t = cfg["tiers"]
    tiers = TierConfig(float(t["T_bio"]), float(t["theta_match"]), float(t["theta_bg"]),
                       float(t.get("flip_probability", 0.0)))
    payload = float(ch["payload_bits"])
    request = channel.OffloadRequest(payload, payload * float(ch["cycles_per_bit"]))
    classes = {cl.class_id: cl for cl in map(ObjectClass.from_dict, cfg["classes"])}

    areas, waps, mecs = {}, [], {}
    for a in cfg["areas"]:
        areas[a["id"]] = a
        for m in a["mecs"]:
            mecs[m["id"]] = Server(m["id"], ServerSpec(float(m["f_c"]), m.get("db_capacity")),
                                   a["id"], FootprintDB(m.get("db_capacity")))
        for w in a["waps"]:
            waps.append(WapSpec(w["id"], tuple(float(v) for v in w["position"]), float(w["radius"]), w["mec"]))
    cl = cfg["cloud"]
    cloud = Server(channel.CLOUD, ServerSpec(float(cl["f_c"]), cl.get("db_capacity")), None,
                   FootprintDB(cl.get("db_capacity")))

    fish = {}
    for f in cfg["fleet"]:
        start = tuple(float(v) for v in f["start"])
        area = next(a["id"] for a in cfg["areas"] if _in_box(start, a["extent"], "xy"))
        dry = physics.FishBody(float(f["G"]), float(f["V_f"]))
        body = physics.FishBody(dry.G, dry.V_f, physics.neutral_ballast_volume(dry, k))
        p = f["piston"]
        fish[f["id"]] = FishState(f["id"], area, start, float(f["speed"]), body,
                                  piston.StrokeParams(float(p["t"]), float(p["v"]), float(p["S"])),
                                  piston.initial_state())

    # object placement: water bodies weighted by volume, classes by mix weight
    bodies = [(a["id"], wb) for a in cfg["areas"] for wb in a["water_bodies"]]
    vols = np.array([math.prod(wb[ax][1] - wb[ax][0] for ax in "xyz") for _, wb in bodies])
    oc = cfg["objects"]
    mix = oc.get("class_mix") or {str(cid): 1.0 for cid in classes}
    mix_ids = sorted(int(cid) for cid in mix)
    mix_w = np.array([float(mix[str(cid)]) for cid in mix_ids])
    lo, hi = oc["G_r"]
    objects = {}
    for i in range(oc["count"]):
        b = int(rng.choice(len(bodies), p=vols / vols.sum()))
        aid, wb = bodies[b]
        pos = tuple(float(rng.uniform(wb[ax][0], wb[ax][1])) for ax in "xyz")
        cid = mix_ids[int(rng.choice(len(mix_ids), p=mix_w / mix_w.sum()))]
        objects[i] = WorldObject(i, cid, aid, pos, float(rng.uniform(lo, hi)), int(rng.integers(2**31)))

    # phase-1 samples are extra captures, not part of the collectible population
    ph = cfg.get("phase1", {})
    ph_areas = list(areas) if ph.get("areas") is None else ph["areas"]
    ph_classes = sorted(classes) if ph.get("classes") is None else ph["classes"]
    plan = []
    next_id = oc["count"]
    for aid in ph_areas:
        crew = sorted(fid for fid, fs in fish.items() if fs.area == aid)
        if not crew:
            continue
        n = 0
        for cid in ph_classes:
            for _ in range(ph.get("samples_per_class", 1)):
                sample = WorldObject(next_id, cid, aid, fish[crew[n % len(crew)]].position, 0.0,
                                     int(rng.integers(2**31)))
                plan.append((crew[n % len(crew)], sample))
                next_id += 1
                n += 1

    return World(
        config=cfg, seed=cfg["seed"], physics=k, tiers=tiers, request=request, classes=classes,
        areas=areas, waps=waps, mecs=mecs, cloud=cloud, fish=fish, objects=objects,
        phase1_plan=plan, radio=_link_spec(ch["fish_radio"], c), d2d_range=float(ch["d2d_range"]),
        wap_mec=_link_spec(ch["wap_mec"], c), mec_bs=_link_spec(ch["mec_bs"], c),
        bs_cloud=_link_spec(ch["bs_cloud"], c),
        image_size=int(cfg["imaging"]["size"]), noise_sigma=float(cfg["imaging"]["noise_sigma"]),
    )
