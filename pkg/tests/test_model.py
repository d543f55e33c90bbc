"""Model math: likelihood values against an arbitrary-precision oracle,
priors, and the model's structural invariants."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netfault.model import (ModelParams, flow_log_likelihood,
                            flow_log_likelihood_terms, hypothesis_log_likelihood,
                            parse_params, prior_log_odds, write_params)
from netfault.telemetry import FlowRecord
from netfault.topology import PathSet, build_fat_tree

mpmath.mp.dps = 60


def mp_log_likelihood(r, t, w, b, p_g, p_b):
    """Eq-style oracle: normalized likelihood evaluated at 60 decimal digits."""
    pg, pb = mpmath.mpf(p_g), mpmath.mpf(p_b)
    bad = pb ** r * (1 - pb) ** (t - r)
    good = pg ** r * (1 - pg) ** (t - r)
    val = (b * bad + (w - b) * good) / (w * good)
    return float(mpmath.log(val))


PARAMS = ModelParams(p_g=0.01, p_b=0.1, rho_link=0.001)


class TestFlowLikelihood:
    def test_untouched_flow_contributes_zero(self):
        assert flow_log_likelihood_terms(5, 100, 4, 0, PARAMS) == 0.0

    def test_single_bad_path_single_packet(self):
        # one path, one packet, one drop: evidence ratio is exactly p_b/p_g
        val = flow_log_likelihood_terms(1, 1, 1, 1, PARAMS)
        assert val == pytest.approx(math.log(10), abs=1e-12)

    def test_two_paths_clean_flow(self):
        val = flow_log_likelihood_terms(0, 10, 2, 1, PARAMS)
        oracle = mp_log_likelihood(0, 10, 2, 1, 0.01, 0.1)
        assert val == pytest.approx(oracle, abs=1e-12)
        assert val == pytest.approx(-0.3670, abs=1e-4)

    def test_bounds_checked(self):
        with pytest.raises(ValueError):
            flow_log_likelihood_terms(0, 1, 2, 3, PARAMS)

    def test_stability_against_oracle(self):
        # large t and small p_g must stay finite and accurate
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(1000):
            p_g = 10 ** rng.uniform(-6, -1.5)
            p_b = p_g * 10 ** rng.uniform(0.3, 2.0)
            if p_b >= 1.0:
                continue
            t = int(10 ** rng.uniform(0, 6))
            r = int(rng.integers(0, t + 1))
            w = int(rng.integers(1, 33))
            b = int(rng.integers(0, w + 1))
            params = ModelParams(p_g=p_g, p_b=p_b, rho_link=1e-3)
            got = flow_log_likelihood_terms(r, t, w, b, params)
            assert math.isfinite(got)
            want = mp_log_likelihood(r, t, w, b, p_g, p_b)
            if want != 0:
                worst = max(worst, abs(got - want) / abs(want))
            else:
                assert got == 0.0
        assert worst <= 1e-9

    @given(st.integers(1, 6), st.integers(0, 200), st.integers(1, 200))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_bad_packets(self, w, r, extra):
        t = r + extra
        b = max(1, w // 2)
        lo = flow_log_likelihood_terms(r, t + 1, w, b, PARAMS)
        hi = flow_log_likelihood_terms(r + 1, t + 1, w, b, PARAMS)
        assert hi > lo

    @given(st.integers(2, 5), st.integers(0, 20), st.integers(0, 30))
    @settings(max_examples=40, deadline=None)
    def test_exchangeability_only_count_matters(self, w, r, extra):
        # permuting paths changes nothing: the value is a function of b alone
        t = r + extra
        paths = [tuple(range(3 * i, 3 * i + 3)) for i in range(w)]
        rec = FlowRecord(0, 1, t, r, "app", None, None)
        h = {0, 3}  # fails paths 0 and 1
        fwd = PathSet(0, 1, paths)
        rev = PathSet(0, 1, list(reversed(paths)))
        assert flow_log_likelihood(rec, fwd, h, PARAMS) == pytest.approx(
            flow_log_likelihood(rec, rev, h, PARAMS), abs=1e-15)


class TestPriors:
    def test_link_log_odds(self):
        topo = build_fat_tree(2, 1)
        link = sorted(topo.links)[0]
        assert prior_log_odds(link, topo, PARAMS) == pytest.approx(-6.9068, abs=1e-4)

    def test_device_factor_multiplies_penalty(self):
        topo = build_fat_tree(2, 1)
        dev = 0
        assert prior_log_odds(dev, topo, PARAMS) == pytest.approx(5 * -6.90675, abs=1e-3)
        flat = ModelParams(p_g=0.01, p_b=0.1, rho_link=0.001, device_prior_log_factor=1.0)
        link = sorted(topo.links)[0]
        assert prior_log_odds(dev, topo, flat) == pytest.approx(
            prior_log_odds(link, topo, flat), abs=1e-12)

    def test_host_is_not_a_component(self):
        topo = build_fat_tree(2, 1)
        with pytest.raises(ValueError):
            prior_log_odds(topo.hosts[0], topo, PARAMS)


class TestHypothesisLikelihood:
    def test_empty_hypothesis_is_zero(self, fat4):
        h = fat4.hosts
        rec = FlowRecord(h[0], h[1], 100, 3, "app", None, None)
        flows = [(rec, fat4.ecmp_paths(h[0], h[1]))]
        assert hypothesis_log_likelihood(flows, set(), fat4, PARAMS) == 0.0

    def test_prior_only_when_no_intersection(self, fat4):
        h = fat4.hosts
        flows = [(FlowRecord(h[0], h[1], 100, 0, "app", None, None),
                  fat4.ecmp_paths(h[0], h[1]))]
        far_link = fat4.host_uplink(h[-1])
        val = hypothesis_log_likelihood(flows, {far_link}, fat4, PARAMS)
        assert val == pytest.approx(math.log(0.001 / 0.999), abs=1e-9)

    def test_additive_over_disjoint_flow_lists(self, fat4):
        h = fat4.hosts
        f1 = [(FlowRecord(h[0], h[1], 50, 2, "app", None, None),
               fat4.ecmp_paths(h[0], h[1]))]
        f2 = [(FlowRecord(h[0], h[-1], 70, 1, "app", None, None),
               fat4.ecmp_paths(h[0], h[-1]))]
        hyp = {fat4.host_uplink(h[0])}
        a = hypothesis_log_likelihood(f1, hyp, fat4, PARAMS)
        b = hypothesis_log_likelihood(f2, hyp, fat4, PARAMS)
        both = hypothesis_log_likelihood(f1 + f2, hyp, fat4, PARAMS)
        prior = prior_log_odds(fat4.host_uplink(h[0]), fat4, PARAMS)
        assert both == pytest.approx(a + b - prior, abs=1e-9)


class TestParamsFile:
    def test_round_trip(self, tmp_path):
        p = ModelParams(p_g=1.5e-4, p_b=2.5e-3, rho_link=5e-3,
                        device_prior_log_factor=4.0, rtt_threshold_ms=12.5)
        path = tmp_path / "params.txt"
        write_params(p, path)
        q = parse_params(path)
        assert q == p

    def test_invalid_ordering_rejected(self):
        with pytest.raises(ValueError):
            ModelParams(p_g=0.2, p_b=0.1)
        with pytest.raises(ValueError):
            ModelParams(rho_link=0.7)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "params.txt"
        path.write_text("p_g=0.001\nbogus=1\n")
        with pytest.raises(ValueError, match="unknown key"):
            parse_params(path)
