"""Scoring rules (device accounting, class mode), hypothesis files, bench."""

import numpy as np
import pytest

from conftest import random_instance
from netfault.evalbench import (BenchReport, bench, parse_hypothesis, score,
                                write_bench_csv, write_hypothesis)
from netfault.model import ModelParams
from netfault.simulator import (SimConfig, TrafficPattern, random_device_failure,
                                random_silent_drops, simulate)
from netfault.topology import build_two_tier


class TestScore:
    def test_empty_vs_empty(self, fat4):
        rep = score([], [], fat4)
        assert (rep.precision, rep.recall, rep.fscore) == (1.0, 1.0, 1.0)

    def test_half_recall(self, fat4):
        l1, l2 = fat4.inter_switch_links()[:2]
        rep = score([l1], [(l1, 0.01), (l2, 0.02)], fat4)
        assert rep.precision == 1.0
        assert rep.recall == 0.5
        assert rep.fscore == pytest.approx(2 / 3)

    def test_device_partial_link_recall(self, fat4):
        # device with 4 failed links; predicting 2 of them scores recall 0.5
        dev = next(d for d, t in fat4.devices.items() if t == "agg")
        links = fat4.links_of_device(dev)[:4]
        truth = [(dev, 0.01)] + [(l, 0.01) for l in links]
        rep = score(links[:2], truth, fat4)
        assert rep.precision == 1.0
        assert rep.recall == 0.5

    def test_predicting_device_gives_full_recall(self, fat4):
        dev = next(d for d, t in fat4.devices.items() if t == "agg")
        links = fat4.links_of_device(dev)[:2]
        truth = [(dev, 0.01)] + [(l, 0.01) for l in links]
        rep = score([dev], truth, fat4)
        assert rep.recall == 1.0
        assert rep.precision == 1.0

    def test_any_link_of_failed_device_is_precise(self, fat4):
        # the device failed on half its links; predicting a non-failed link of
        # the same device still counts for precision, not for recall
        dev = next(d for d, t in fat4.devices.items() if t == "agg")
        links = fat4.links_of_device(dev)
        truth = [(dev, 0.01)] + [(l, 0.01) for l in links[:2]]
        rep = score([links[3]], truth, fat4)
        assert rep.precision == 1.0
        assert rep.recall == 0.0

    def test_empty_prediction_with_failures(self, fat4):
        l1 = fat4.inter_switch_links()[0]
        rep = score([], [(l1, 0.01)], fat4)
        assert rep.precision == 1.0 and rep.recall == 0.0 and rep.fscore == 0.0

    def test_nonempty_prediction_zero_failures(self, fat4):
        l1 = fat4.inter_switch_links()[0]
        rep = score([l1], [], fat4)
        assert rep.precision == 0.0 and rep.recall == 1.0

    def test_unknown_id_rejected(self, fat4):
        with pytest.raises(ValueError):
            score([99999], [], fat4)

    def test_relabeling_invariance(self, fat4):
        # scores depend on set relations, not on which ids are involved
        links = fat4.inter_switch_links()
        a = score([links[0], links[1]], [(links[1], 0.01), (links[2], 0.01)], fat4)
        b = score([links[5], links[6]], [(links[6], 0.01), (links[7], 0.01)], fat4)
        assert (a.precision, a.recall, a.fscore) == (b.precision, b.recall, b.fscore)

    def test_fscore_monotonicity(self, fat4):
        links = fat4.inter_switch_links()
        truth = [(links[0], 0.01), (links[1], 0.01)]
        base = score([links[0]], truth, fat4)
        plus_tp = score([links[0], links[1]], truth, fat4)
        plus_fp = score([links[0], links[5]], truth, fat4)
        assert plus_tp.fscore >= base.fscore
        assert plus_fp.precision <= base.precision

    def test_class_level_metrics(self, fat4):
        classes = fat4.equivalence_classes()
        cls = next(c for c in classes if len(c) == 2)
        true_link = min(cls)
        rep = score(list(cls), [(true_link, 0.01)], fat4, predicted_classes=[cls])
        assert rep.class_precision == 1.0
        assert rep.class_recall == 1.0
        assert rep.precision == 0.5  # one of the two members truly failed


class TestHypothesisFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "hyp.txt"
        write_hypothesis([5, 3, 9], path, classes=[frozenset({3, 9})])
        assert parse_hypothesis(path) == [3, 5, 9]

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "hyp.txt"
        path.write_text("fail xyz\n")
        with pytest.raises(ValueError):
            parse_hypothesis(path)


@pytest.fixture(scope="module")
def small_setup():
    topo = build_two_tier(2, 4, 2)
    scen = random_silent_drops(topo, 1, seed=3, rate_range=(0.01, 0.01))
    trace = simulate(topo, scen, TrafficPattern(fixed_flow_packets=300),
                     SimConfig(n_app_flows=2000, seed=4))
    return topo, trace


class TestBench:

    def test_all_schemes_report_rows(self, small_setup):
        topo, trace = small_setup
        params = ModelParams(p_g=1e-4, p_b=5e-3, rho_link=1e-3)
        report = bench(topo, [trace], ["INT"], params, repeats=1, warmup=False)
        schemes = {r.scheme for r in report.rows}
        assert schemes == {"flock", "flock-naive", "sherlock", "sherlock-naive",
                           "vote007"}
        for r in report.rows:
            assert r.wall_time_s > 0

    def test_scanned_deterministic_across_runs(self, small_setup):
        topo, trace = small_setup
        params = ModelParams(p_g=1e-4, p_b=5e-3, rho_link=1e-3)
        a = bench(topo, [trace], ["INT"], params, schemes=("flock", "sherlock"),
                  repeats=2, warmup=False)
        b = bench(topo, [trace], ["INT"], params, schemes=("flock", "sherlock"),
                  repeats=2, warmup=False)
        assert [r.hypotheses_scanned for r in a.rows] == \
            [r.hypotheses_scanned for r in b.rows]

    def test_budget_exceeded_estimates(self, small_setup):
        topo, trace = small_setup
        params = ModelParams(p_g=1e-4, p_b=5e-3, rho_link=1e-3)
        report = bench(topo, [trace], ["INT"], params, schemes=("sherlock-naive",),
                       repeats=1, warmup=False, scan_budget=10)
        (row,) = report.rows
        assert row.estimated
        assert row.hypotheses_scanned > 10
        assert row.wall_time_s > 0

    def test_csv_output(self, small_setup, tmp_path):
        topo, trace = small_setup
        params = ModelParams(p_g=1e-4, p_b=5e-3, rho_link=1e-3)
        report = bench(topo, [trace], ["INT"], params, schemes=("flock",),
                       repeats=1, warmup=False)
        out = tmp_path / "bench.csv"
        write_bench_csv(report, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "# schema-version 1"
        assert lines[1].startswith("trace,kind,scheme")
        assert len(lines) == 3
