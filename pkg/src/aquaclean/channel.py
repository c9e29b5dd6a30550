"""Link rates, offload latency and routing over the fish/WAP/MEC/cloud graph.

Node ids are strings. Fish are ``"fish:<n>"``, access points and MEC
servers use their configured ids, and the macro base station and cloud are
:data:`BS` and :data:`CLOUD`.

A fish inside a WAP's coverage reaches that WAP's MEC in two hops. A fish
outside coverage relays over fish-to-fish (d2d) links first. The cloud
sits two further hops away, through the macro base station.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

__all__ = [
    "ChannelError",
    "InvalidLink",
    "ZeroRateHop",
    "Unreachable",
    "LinkSpec",
    "OffloadRequest",
    "ServerSpec",
    "LatencyBreakdown",
    "WapSpec",
    "Topology",
    "Route",
    "BS",
    "CLOUD",
    "achievable_rate",
    "transmission_latency",
    "processing_latency",
    "total_latency",
    "route",
    "fish_node",
    "node_key",
]

BS = "bs"
CLOUD = "cloud"


class ChannelError(ValueError):
    pass


class InvalidLink(ChannelError):
    pass


class ZeroRateHop(ChannelError):
    pass


class Unreachable(ChannelError):
    pass


@dataclass(frozen=True)
class LinkSpec:
    B: float
    P: float
    sigma2: float
    d: float
    c: float = 1.0

    def validate(self):
        bad = []
        if not self.B > 0:
            bad.append("B")
        if not self.P >= 0:
            bad.append("P")
        if not self.sigma2 > 0:
            bad.append("sigma2")
        if not self.d > 0:
            bad.append("d")
        if not self.c > 0:
            bad.append("c")
        if bad:
            raise InvalidLink(f"invalid link parameter(s) {', '.join(bad)}: {self}")
        return self

    def snr(self) -> float:
        return self.P * self.c / (self.sigma2 * self.d * self.d)


@dataclass(frozen=True)
class OffloadRequest:
    D_k: float
    C_k: float = 0.0

    def __post_init__(self):
        if not self.D_k > 0:
            raise ValueError(f"D_k must be positive, got {self.D_k}")
        if not self.C_k >= 0:
            raise ValueError(f"C_k must be non-negative, got {self.C_k}")


@dataclass(frozen=True)
class ServerSpec:
    f_c: float
    db_capacity: Optional[int] = None

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError(f"f_c must be positive, got {self.f_c}")


@dataclass(frozen=True)
class LatencyBreakdown:
    per_hop_rates: tuple
    T_k: float
    T_p: float
    T: float

    @property
    def hop_count(self) -> int:
        return len(self.per_hop_rates)


def achievable_rate(link: LinkSpec) -> float:
    """Shannon rate of one hop in bits/s."""
    link.validate()
    # log1p keeps precision when the SNR is small
    return link.B * math.log1p(link.snr()) / math.log(2.0)


def transmission_latency(req: OffloadRequest, rates: Sequence[float]) -> float:
    """Store-and-forward transmission time of ``req`` over ``rates``."""
    if len(rates) == 0:
        raise ValueError("route has no hops")
    inv = 0.0
    for j, r in enumerate(rates):
        if not r > 0:
            raise ZeroRateHop(f"hop {j} has rate {r}")
        inv += 1.0 / r
    return req.D_k * inv


def processing_latency(req: OffloadRequest, server: ServerSpec) -> float:
    return req.C_k / server.f_c


def total_latency(req: OffloadRequest, rates: Sequence[float],
                  server: ServerSpec) -> LatencyBreakdown:
    rates = tuple(float(r) for r in rates)
    t_k = transmission_latency(req, rates)
    t_p = processing_latency(req, server)
    return LatencyBreakdown(rates, t_k, t_p, t_k + t_p)


# ---------------------------------------------------------------------------
# topology and routing

def fish_node(fish_id) -> str:
    return f"fish:{fish_id}"


def node_key(node: str):
    """Sort key that orders ``fish:2`` before ``fish:10``."""
    head, _, tail = node.partition(":")
    return (head, int(tail)) if tail.isdigit() else (head, -1, node)


def _dist(a, b) -> float:
    return math.dist(a, b)


def _hdist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class WapSpec:
    """Surface access point; coverage is a horizontal radius."""

    wap_id: str
    position: tuple
    radius: float
    mec_id: str

    def covers(self, pos) -> bool:
        return _hdist(self.position, pos) <= self.radius


@dataclass
class Topology:
    """Immutable-by-convention snapshot of node positions and link classes.

    ``radio`` holds the fish radio parameters; its ``d`` field is ignored
    and replaced by the geometric distance of each wireless hop.
    """

    fish_positions: Mapping[str, tuple]
    waps: Sequence[WapSpec]
    radio: LinkSpec
    d2d_range: float
    wap_mec: LinkSpec
    mec_bs: LinkSpec
    bs_cloud: LinkSpec
    fish_area: Mapping[str, str] = field(default_factory=dict)
    wap_area: Mapping[str, str] = field(default_factory=dict)

    def radio_link(self, a, b) -> LinkSpec:
        return LinkSpec(self.radio.B, self.radio.P, self.radio.sigma2,
                        max(_dist(a, b), 1e-3), self.radio.c)


@dataclass(frozen=True)
class Route:
    nodes: tuple
    links: tuple

    @property
    def hop_count(self) -> int:
        return len(self.links)

    @property
    def wap(self) -> str:
        return next(n for n in self.nodes if not n.startswith("fish:"))

    @property
    def mec(self) -> str:
        return self.nodes[self.nodes.index(self.wap) + 1]

    def rates(self):
        return [achievable_rate(l) for l in self.links]

    def to_mec(self) -> "Route":
        """The part of this route that ends at its MEC server."""
        end = self.nodes.index(self.mec)
        return Route(self.nodes[:end + 1], self.links[:end])


def _candidate_waps(src: str, dst: str, topo: Topology):
    area = topo.fish_area.get(src)
    waps = [w for w in topo.waps
            if area is None or topo.wap_area.get(w.wap_id, area) == area]
    if dst != CLOUD:
        waps = [w for w in waps if w.mec_id == dst]
    return sorted(waps, key=lambda w: w.wap_id)


def _d2d_chain(src: str, exits: set, topo: Topology):
    """Fewest-hop fish chain from ``src`` to any fish in ``exits``.

    Among equal-length chains each step goes to the nearest eligible
    neighbour, lowest id on ties.
    """
    pos = topo.fish_positions
    ids = sorted(pos, key=node_key)
    area = topo.fish_area.get
    nbrs = {a: [b for b in ids if b != a and area(a) == area(b)
                and _dist(pos[a], pos[b]) <= topo.d2d_range]
            for a in ids}
    # hop distance to the exit set, by BFS from all exits at once
    depth = {e: 0 for e in exits}
    q = deque(sorted(exits, key=node_key))
    while q:
        a = q.popleft()
        for b in nbrs[a]:
            if b not in depth:
                depth[b] = depth[a] + 1
                q.append(b)
    if src not in depth:
        return None
    chain = [src]
    cur = src
    while depth[cur] > 0:
        step = [b for b in nbrs[cur] if depth.get(b) == depth[cur] - 1]
        cur = min(step, key=lambda b: (_dist(pos[chain[-1]], pos[b]), node_key(b)))
        chain.append(cur)
    return chain


def route(src: str, dst: str, topology: Topology) -> Route:
    """Ordered hops from fish ``src`` to MEC ``dst`` or to :data:`CLOUD`.

    Raises :class:`Unreachable` when no chain of fish reaches a WAP that
    serves the destination.
    """
    topo = topology
    if src not in topo.fish_positions:
        raise KeyError(f"unknown source node {src!r}")
    waps = _candidate_waps(src, dst, topo)
    if not waps:
        raise Unreachable(f"no access point serves {dst!r} for {src}")
    pos = topo.fish_positions
    exits = {f for f, p in pos.items() if any(w.covers(p) for w in waps)
             and topo.fish_area.get(f) == topo.fish_area.get(src)}
    chain = _d2d_chain(src, exits, topo)
    if chain is None:
        raise Unreachable(f"{src} has no relay chain into access-point coverage")
    last = pos[chain[-1]]
    wap = min((w for w in waps if w.covers(last)),
              key=lambda w: (_dist(w.position, last), w.wap_id))
    links = [topo.radio_link(pos[a], pos[b]) for a, b in zip(chain, chain[1:])]
    links.append(topo.radio_link(last, wap.position))
    links.append(topo.wap_mec)
    nodes = list(chain) + [wap.wap_id, wap.mec_id]
    if dst == CLOUD:
        links += [topo.mec_bs, topo.bs_cloud]
        nodes += [BS, CLOUD]
    return Route(tuple(nodes), tuple(links))
