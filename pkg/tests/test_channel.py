import itertools
import math
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquaclean import channel
from aquaclean.channel import (
    CLOUD,
    InvalidLink,
    LinkSpec,
    OffloadRequest,
    ServerSpec,
    Topology,
    Unreachable,
    WapSpec,
    ZeroRateHop,
    fish_node,
)

mpmath.mp.dps = 50


def mp_rate(link):
    snr = mpmath.mpf(link.P) * link.c / (mpmath.mpf(link.sigma2) * mpmath.mpf(link.d) ** 2)
    return link.B * mpmath.log(1 + snr) / mpmath.log(2)


def pairwise_sum(xs):
    xs = list(xs)
    if len(xs) == 1:
        return xs[0]
    mid = len(xs) // 2
    return pairwise_sum(xs[:mid]) + pairwise_sum(xs[mid:])


RADIO = LinkSpec(110e6, 0.1, 1e-9, 1.0)
WIRED = LinkSpec(100e6, 1.0, 1e-9, 200.0)


def topo(positions, waps, d2d=30.0, areas=None):
    fish = {fish_node(i): p for i, p in positions.items()}
    fa = {fish_node(i): (areas or {}).get(i, "A") for i in positions}
    return Topology(fish, waps, RADIO, d2d, WIRED, LinkSpec(20e6, 10, 1e-10, 2000), LinkSpec(10e6, 1, 1e-9, 1000),
                    fish_area=fa, wap_area={w.wap_id: "A" for w in waps})


WAP = WapSpec("w1", (0.0, 0.0, 0.0), 50.0, "m1")


class TestRate:
    def test_zero_power(self):
        assert channel.achievable_rate(LinkSpec(1e6, 0.0, 1e-9, 10)) == 0.0

    def test_unit_snr_gives_bandwidth(self):
        assert channel.achievable_rate(LinkSpec(5e6, 1e-9 * 16, 1e-9, 4)) == pytest.approx(5e6, rel=1e-15)

    def test_band_midpoint_against_mpmath(self):
        link = LinkSpec(110e6, 1.0, 1e-9, 50.0)
        assert channel.achievable_rate(link) == pytest.approx(float(mp_rate(link)), rel=1e-13)

    @pytest.mark.parametrize("field,value", [("B", 0), ("P", -1), ("sigma2", 0), ("d", 0), ("c", 0)])
    def test_invalid(self, field, value):
        kw = dict(B=1e6, P=1.0, sigma2=1e-9, d=10.0, c=1.0)
        kw[field] = value
        with pytest.raises(InvalidLink, match=field):
            channel.achievable_rate(LinkSpec(**kw))

    @given(st.floats(1e3, 1e9), st.floats(1e-6, 100), st.floats(1e-15, 1e-3), st.floats(0.1, 1e4))
    def test_mpmath_property(self, B, P, s2, d):
        link = LinkSpec(B, P, s2, d)
        assert channel.achievable_rate(link) == pytest.approx(float(mp_rate(link)), rel=1e-12)

    @given(st.floats(1.0, 1e3), st.floats(1.001, 2.0))
    def test_decreases_with_distance(self, d, f):
        r = lambda x: channel.achievable_rate(LinkSpec(1e6, 1.0, 1e-9, x))
        assert r(d * f) < r(d)

    @given(st.floats(1e-3, 10), st.floats(1.001, 2.0))
    def test_increases_with_power_and_bandwidth(self, P, f):
        r = lambda B, P: channel.achievable_rate(LinkSpec(B, P, 1e-9, 100))
        assert r(1e6, P * f) > r(1e6, P)
        assert r(1e6 * f, P) > r(1e6, P)


class TestLatency:
    def test_one_hop_one_second(self):
        assert channel.transmission_latency(OffloadRequest(1e6), [1e6]) == 1.0

    def test_equal_hops(self):
        assert channel.transmission_latency(OffloadRequest(3e5), [1e6, 1e6]) == pytest.approx(0.6, rel=1e-15)

    def test_zero_rate(self):
        with pytest.raises(ZeroRateHop):
            channel.transmission_latency(OffloadRequest(1.0), [1e6, 0.0])

    def test_empty(self):
        with pytest.raises(ValueError):
            channel.transmission_latency(OffloadRequest(1.0), [])

    def test_random_hops_against_pairwise_sum(self):
        rng = random.Random(3)
        for _ in range(200):
            rates = [rng.uniform(1e5, 1e9) for _ in range(rng.randint(3, 6))]
            D = rng.uniform(1, 1e7)
            oracle = D * pairwise_sum([1.0 / r for r in rates[::-1]])
            assert channel.transmission_latency(OffloadRequest(D), rates) == pytest.approx(oracle, rel=1e-12)

    def test_processing(self):
        assert channel.processing_latency(OffloadRequest(1, 0), ServerSpec(1e9)) == 0.0
        assert channel.processing_latency(OffloadRequest(1, 2e9), ServerSpec(2e9)) == 1.0
        t = channel.processing_latency(OffloadRequest(1, 3.3e9), ServerSpec(2.2e9))
        assert Fraction(t) == pytest.approx(Fraction(33, 22), rel=1e-15)
        assert t == 1.5

    def test_total_single_hop_no_compute(self):
        bd = channel.total_latency(OffloadRequest(1e6), [2e6], ServerSpec(1e9))
        assert bd.T == bd.T_k == 0.5 and bd.T_p == 0.0 and bd.hop_count == 1

    def test_total_tends_to_processing(self):
        bd = channel.total_latency(OffloadRequest(1.0, 5e9), [1e12], ServerSpec(1e9))
        assert bd.T == pytest.approx(bd.T_p, rel=1e-11)

    @given(st.lists(st.floats(1e3, 1e10), min_size=1, max_size=8), st.floats(1, 1e8), st.floats(0, 1e12),
           st.floats(1e6, 1e11))
    def test_recomposition(self, rates, D, C, f):
        bd = channel.total_latency(OffloadRequest(D, C), rates, ServerSpec(f))
        exact_k = Fraction(D) * sum(Fraction(1) / Fraction(r) for r in rates)
        exact_p = Fraction(C) / Fraction(f)
        assert bd.T_k == pytest.approx(float(exact_k), rel=1e-12)
        assert bd.T_p == pytest.approx(float(exact_p), rel=1e-12)
        assert bd.T == bd.T_k + bd.T_p
        assert bd.hop_count == len(rates)

    @given(st.lists(st.floats(1e3, 1e10), min_size=1, max_size=6), st.floats(1e3, 1e10), st.floats(1, 1e8))
    def test_appended_hop_increases(self, rates, extra, D):
        req = OffloadRequest(D)
        assert channel.transmission_latency(req, rates + [extra]) > channel.transmission_latency(req, rates)

    @given(st.lists(st.floats(1e3, 1e10), min_size=1, max_size=6), st.floats(1, 1e6), st.integers(2, 9))
    def test_linear_in_payload(self, rates, D, n):
        t1 = channel.transmission_latency(OffloadRequest(D), rates)
        tn = channel.transmission_latency(OffloadRequest(D * n), rates)
        assert tn == pytest.approx(n * t1, rel=1e-12)

    @pytest.mark.parametrize("kw", [dict(D_k=0), dict(D_k=1, C_k=-1)])
    def test_request_invariants(self, kw):
        with pytest.raises(ValueError):
            OffloadRequest(**kw)

    def test_server_invariant(self):
        with pytest.raises(ValueError):
            ServerSpec(0.0)


def brute_hops(positions, src, waps, d2d):
    """Shortest fish->MEC hop count by enumerating every simple d2d path."""
    ids = list(positions)
    best = None
    others = [i for i in ids if i != src]
    for n in range(len(others) + 1):
        for path in itertools.permutations(others, n):
            chain = (src,) + path
            if any(math.dist(positions[a], positions[b]) > d2d for a, b in zip(chain, chain[1:])):
                continue
            if any(w.covers(positions[chain[-1]]) for w in waps):
                hops = len(chain) - 1 + 2
                best = hops if best is None else min(best, hops)
        if best is not None:
            return best
    return best


class TestRoute:
    def test_covered_fish_two_hops(self):
        t = topo({0: (10.0, 0.0, -5.0)}, [WAP])
        r = channel.route(fish_node(0), "m1", t)
        assert r.hop_count == 2
        assert r.nodes == ("fish:0", "w1", "m1")
        assert r.links[1] == WIRED
        assert r.links[0].d == pytest.approx(math.dist((10, 0, -5), (0, 0, 0)))

    def test_cloud_route_appends_fixed_hops(self):
        t = topo({0: (10.0, 0.0, -5.0)}, [WAP])
        r = channel.route(fish_node(0), CLOUD, t)
        assert r.nodes == ("fish:0", "w1", "m1", "bs", "cloud")
        assert r.to_mec() == channel.route(fish_node(0), "m1", t)

    def test_isolated_fish(self):
        t = topo({0: (200.0, 0.0, -5.0)}, [WAP])
        with pytest.raises(Unreachable):
            channel.route(fish_node(0), "m1", t)

    def test_unknown_mec(self):
        t = topo({0: (10.0, 0.0, -5.0)}, [WAP])
        with pytest.raises(Unreachable):
            channel.route(fish_node(0), "nope", t)

    def test_one_relay_against_enumeration(self):
        pos = {0: (75.0, 0.0, -5.0), 1: (46.0, 5.0, -5.0), 2: (80.0, 60.0, -5.0),
               3: (150.0, 0.0, -5.0), 4: (10.0, 0.0, -5.0)}
        t = topo(pos, [WAP])
        r = channel.route(fish_node(0), "m1", t)
        assert r.hop_count == 3 == brute_hops(pos, 0, [WAP], 30.0)
        assert r.nodes[:2] == ("fish:0", "fish:1")

    def test_greedy_picks_nearest_then_lowest_id(self):
        # fish 1 and 2 are both one hop from coverage; 2 is nearer
        pos = {0: (75.0, 0.0, -5.0), 1: (48.0, 8.0, -5.0), 2: (49.0, 0.0, -5.0)}
        r = channel.route(fish_node(0), "m1", topo(pos, [WAP]))
        assert r.nodes[1] == "fish:2"
        # equidistant relays: lowest id wins
        pos = {0: (75.0, 0.0, -5.0), 5: (50.0, 3.0, -5.0), 3: (50.0, -3.0, -5.0)}
        r = channel.route(fish_node(0), "m1", topo(pos, [WapSpec("w1", (0.0, 0.0, 0.0), 51.0, "m1")]))
        assert r.nodes[1] == "fish:3"

    def test_relay_restricted_to_own_area(self):
        pos = {0: (75.0, 0.0, -5.0), 1: (45.0, 0.0, -5.0)}
        t = topo(pos, [WAP], areas={0: "A", 1: "B"})
        with pytest.raises(Unreachable):
            channel.route(fish_node(0), "m1", t)

    def test_wap_ties_resolve_by_distance_then_id(self):
        waps = [WapSpec("w2", (20.0, 0.0, 0.0), 50, "m1"), WapSpec("w1", (-20.0, 0.0, 0.0), 50, "m1"),
                WapSpec("w3", (5.0, 0.0, 0.0), 50, "m1")]
        r = channel.route(fish_node(0), "m1", topo({0: (0.0, 0.0, -1.0)}, waps))
        assert r.wap == "w3"
        r = channel.route(fish_node(0), "m1", topo({0: (0.0, 0.0, -1.0)}, waps[:2]))
        assert r.wap == "w1"

    @settings(max_examples=150, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_optimal_hop_count_on_toy_graphs(self, n, seed):
        rng = random.Random(seed)
        pos = {i: (rng.uniform(-10, 140), rng.uniform(-40, 40), -2.0) for i in range(n)}
        t = topo(pos, [WAP], d2d=35.0)
        expect = brute_hops(pos, 0, [WAP], 35.0)
        if expect is None:
            with pytest.raises(Unreachable):
                channel.route(fish_node(0), "m1", t)
        else:
            r = channel.route(fish_node(0), "m1", t)
            assert r.hop_count == expect
            chain = r.nodes[: r.hop_count - 1]
            assert all(math.dist(t.fish_positions[a], t.fish_positions[b]) <= 35.0
                       for a, b in zip(chain, chain[1:]))
            assert WAP.covers(t.fish_positions[chain[-1]])

    def test_node_key_orders_numerically(self):
        assert sorted(["fish:10", "fish:2", "fish:1"], key=channel.node_key) == ["fish:1", "fish:2", "fish:10"]
