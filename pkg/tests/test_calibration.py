"""Grid search, Pareto frontier, operating-point selection."""

import numpy as np
import pytest

from netfault.calibration import (ParamGrid, ParetoPoint, choose_operating_point,
                                  default_grid, grid_search, pareto_frontier,
                                  write_frontier_csv)
from netfault.model import ModelParams
from netfault.simulator import SimConfig, TrafficPattern, random_silent_drops, simulate
from netfault.topology import build_two_tier


@pytest.fixture(scope="module")
def training_set():
    topo = build_two_tier(2, 4, 2)
    out = []
    for seed in range(3):
        scen = random_silent_drops(topo, 1, seed=40 + seed, rate_range=(0.005, 0.01))
        trace = simulate(topo, scen, TrafficPattern(fixed_flow_packets=300),
                         SimConfig(n_app_flows=3000, seed=50 + seed))
        out.append((trace, topo))
    return out


class TestGridSearch:
    def test_single_point_gives_singleton_frontier(self, training_set):
        grid = ParamGrid(p_g=[1e-4], p_b=[5e-3], rho=[1e-3])
        frontier = grid_search("flock", grid, training_set, "INT")
        assert len(frontier) == 1
        assert isinstance(frontier[0].params, ModelParams)

    def test_frontier_is_non_dominated(self, training_set):
        grid = ParamGrid(p_g=[1e-5, 1e-4, 1e-3], p_b=[1e-3, 1e-2, 5e-2],
                         rho=[1e-3, 1e-2])
        frontier = grid_search("flock", grid, training_set, "INT")
        assert frontier
        for a in frontier:
            for b in frontier:
                if a is not b:
                    assert not (b.precision >= a.precision and b.recall > a.recall)
                    assert not (b.precision > a.precision and b.recall >= a.recall)
        precs = [p.precision for p in frontier]
        assert precs == sorted(precs, reverse=True)

    def test_good_point_reaches_high_accuracy(self, training_set):
        grid = ParamGrid(p_g=[1e-4], p_b=[2e-3, 5e-3], rho=[1e-3])
        frontier = grid_search("flock", grid, training_set, "INT")
        best = max(frontier, key=lambda p: p.recall)
        assert best.precision >= 0.9 and best.recall >= 0.9

    def test_vote007_grid(self, training_set):
        frontier = grid_search("vote007", default_grid("vote007"), training_set, "A2")
        assert frontier
        assert all(isinstance(p.params, float) for p in frontier)

    def test_sherlock_grid(self, training_set):
        grid = ParamGrid(p_g=[1e-4], p_b=[5e-3], rho=[1e-3])
        frontier = grid_search("sherlock", grid, training_set, "INT", sherlock_k=2)
        assert len(frontier) == 1

    def test_empty_training_rejected(self):
        with pytest.raises(ValueError):
            grid_search("flock", default_grid("flock"), [], "INT")

    def test_deterministic(self, training_set):
        grid = ParamGrid(p_g=[1e-4, 1e-3], p_b=[5e-3], rho=[1e-3])
        a = grid_search("flock", grid, training_set, "INT")
        b = grid_search("flock", grid, training_set, "INT")
        assert [(p.precision, p.recall) for p in a] == \
            [(p.precision, p.recall) for p in b]


class TestChooseOperatingPoint:
    def test_rule_at_default_floor(self):
        frontier = [ParetoPoint(None, 0.99, 0.8), ParetoPoint(None, 0.95, 0.95)]
        point, floor = choose_operating_point(frontier)
        assert (point.precision, point.recall) == (0.99, 0.8)
        assert floor == pytest.approx(0.98)

    def test_one_step_reduction(self):
        frontier = [ParetoPoint(None, 0.97, 0.9)]
        point, floor = choose_operating_point(frontier)
        assert (point.precision, point.recall) == (0.97, 0.9)
        assert floor == pytest.approx(0.93)

    def test_all_zero_recall_warns(self):
        frontier = [ParetoPoint(None, 1.0, 0.0)]
        with pytest.warns(UserWarning):
            point, floor = choose_operating_point(frontier)
        assert point.recall == 0.0

    def test_chosen_point_on_frontier(self):
        frontier = pareto_frontier([ParetoPoint(None, 0.9, 0.5),
                                    ParetoPoint(None, 0.7, 0.9),
                                    ParetoPoint(None, 0.6, 0.4)])
        point, _ = choose_operating_point(frontier, p_start=0.85)
        assert point in frontier

    def test_monotone_in_start_floor(self):
        frontier = [ParetoPoint(None, 0.99, 0.3), ParetoPoint(None, 0.9, 0.6),
                    ParetoPoint(None, 0.5, 0.99)]
        hi, _ = choose_operating_point(frontier, p_start=0.98)
        lo, _ = choose_operating_point(frontier, p_start=0.85)
        assert hi.precision >= lo.precision


def test_frontier_csv(tmp_path):
    frontier = [ParetoPoint(ModelParams(p_g=1e-4, p_b=1e-2, rho_link=1e-3), 0.9, 0.8),
                ParetoPoint(0.5, 0.7, 0.9)]
    out = tmp_path / "frontier.csv"
    write_frontier_csv(frontier, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "# schema-version 1"
    assert lines[1] == "precision,recall,p_g,p_b,rho_link,threshold"
    assert len(lines) == 4
