"""Hyperparameter calibration by grid search on labeled training traces.

Every grid point is scored over all training traces (mean precision and
recall); the non-dominated frontier is kept.  The operating point is chosen
by fixing a precision floor P (0.98 to start), taking the highest-recall
point above it, and lowering P in 0.05 steps while nothing qualifies or the
best recall stays under 25%.

For passive-only input (kind P) the training score is class-level: that is
the finest granularity the input can resolve, so calibrating on expanded
member links would only reward the impossible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import telemetry
from .baselines import sherlock_search, vote_table
from .evalbench import score
from .inference import build_flow_index, greedy_search
from .model import ModelParams, prior_vector
from .topology import Topology, reduced_topology

SCHEMES = ("flock", "sherlock", "vote007")


@dataclass
class ParamGrid:
    p_g: list[float] = field(default_factory=list)
    p_b: list[float] = field(default_factory=list)
    rho: list[float] = field(default_factory=list)
    vote_thresholds: list[float] = field(default_factory=list)


def default_grid(scheme: str) -> ParamGrid:
    if scheme == "vote007":
        return ParamGrid(vote_thresholds=[round(x, 2) for x in np.linspace(0.1, 1.0, 10)])
    return ParamGrid(
        p_g=[float(x) for x in np.geomspace(1e-5, 2e-2, 8)],
        p_b=[float(x) for x in np.geomspace(1e-3, 2e-1, 8)],
        rho=[1e-4, 1e-3, 1e-2],
    )


@dataclass
class ParetoPoint:
    params: object  # ModelParams for the model schemes, float threshold for vote007
    precision: float
    recall: float

    def dominates(self, other: "ParetoPoint") -> bool:
        ge = self.precision >= other.precision and self.recall >= other.recall
        gt = self.precision > other.precision or self.recall > other.recall
        return ge and gt


def pareto_frontier(points: list[ParetoPoint]) -> list[ParetoPoint]:
    frontier = [p for p in points
                if not any(q.dominates(p) for q in points)]
    seen, unique = set(), []
    for p in sorted(frontier, key=lambda p: (-p.precision, -p.recall)):
        key = (round(p.precision, 12), round(p.recall, 12))
        if key not in seen:
            seen.add(key)
            unique.append(p)
    return unique


def grid_search(scheme: str, grid: ParamGrid, training, kind: str,
                sherlock_k: int = 2) -> list[ParetoPoint]:
    """training: list of (TraceFile, Topology) pairs with ground truth."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not training:
        raise ValueError("empty training set")
    prepared = [_prepare(trace, topo, kind) for trace, topo in training]
    points: list[ParetoPoint] = []
    if scheme == "vote007":
        if not grid.vote_thresholds:
            raise ValueError("vote007 grid needs thresholds")
        for thr in grid.vote_thresholds:
            pr, rc = [], []
            for prep in prepared:
                table = prep["votes"]
                if table is None:
                    raise ValueError("vote007 needs flows with known paths; "
                                     f"kind {kind!r} does not provide them")
                table.threshold = thr
                rep = score(table.winners(), prep["truth"], prep["topo"])
                pr.append(rep.precision)
                rc.append(rep.recall)
            points.append(ParetoPoint(float(thr), float(np.mean(pr)), float(np.mean(rc))))
        return pareto_frontier(points)

    if not (grid.p_g and grid.p_b and grid.rho):
        raise ValueError("model grid needs p_g, p_b and rho axes")
    for pg in grid.p_g:
        for pb in grid.p_b:
            if pb <= pg:
                continue
            for rho in grid.rho:
                params = ModelParams(p_g=pg, p_b=pb, rho_link=rho)
                pr, rc = [], []
                for prep in prepared:
                    rep = _score_model(scheme, prep, params, sherlock_k)
                    pr.append(rep[0])
                    rc.append(rep[1])
                points.append(ParetoPoint(params, float(np.mean(pr)), float(np.mean(rc))))
    return pareto_frontier(points)


def _prepare(trace, topo, kind):
    kinds = telemetry.parse_kind(kind)
    prep = {"topo": topo, "truth": trace.ground_truth, "reduced": None}
    selected = telemetry.select_input(trace, kind, topo)
    if kinds == ("P",):
        red, members = reduced_topology(topo)
        if any(len(c) > 1 for c in red.classes):
            reduced_sel = [(rec, red.reduce_path_set(ps)) for rec, ps in selected]
            prep["reduced"] = red
            prep["members"] = members
            prep["index"] = build_flow_index_reduced(reduced_sel, red)
            prep["votes"] = None
            return prep
    prep["index"] = build_flow_index(selected, topo)
    prep["votes"] = _maybe_votes(selected, topo)
    return prep


def _maybe_votes(selected, topo):
    try:
        return vote_table(selected, topo)
    except ValueError:
        return None


def build_flow_index_reduced(reduced_selected, red):
    from .engine import FlowIndex
    mask = np.ones(red.n_classes, dtype=bool)
    return FlowIndex.build(reduced_selected, red.n_classes, mask)


def _score_model(scheme, prep, params, sherlock_k):
    topo = prep["topo"]
    if prep["reduced"] is not None:
        red = prep["reduced"]
        link_odds = float(np.log(params.rho_link) - np.log1p(-params.rho_link))
        prior = np.full(red.n_classes, link_odds)
        if scheme == "flock":
            res = greedy_search(prep["index"], params, prior, use_jle=True)
            found = res.hypothesis
        else:
            res = sherlock_search(prep["index"], params, prior, sherlock_k, use_jle=True)
            found = res.hypothesis
        classes = [prep["members"][c] for c in found]
        comps = [c for cls in classes for c in cls]
        rep = score(comps, prep["truth"], topo, predicted_classes=classes)
        return rep.class_precision, rep.class_recall
    prior = prior_vector(topo, params)
    if scheme == "flock":
        res = greedy_search(prep["index"], params, prior, use_jle=True)
    else:
        res = sherlock_search(prep["index"], params, prior, sherlock_k, use_jle=True)
    rep = score(res.hypothesis, prep["truth"], topo)
    return rep.precision, rep.recall


def choose_operating_point(frontier: list[ParetoPoint], p_start: float = 0.98,
                           min_recall: float = 0.25, step: float = 0.05):
    """Highest-recall frontier point with precision above a floor that starts
    at p_start and drops by `step` until something qualifies.

    Returns (point, floor_used). If even a non-positive floor leaves recall
    under min_recall, the max-recall point is returned with a warning.
    """
    if not frontier:
        raise ValueError("empty frontier")
    p = p_start
    while True:
        qualifying = [pt for pt in frontier if pt.precision > p]
        if qualifying:
            best = max(qualifying, key=lambda pt: pt.recall)
            if best.recall >= min_recall:
                return best, p
        if p <= 0:
            best = max(frontier, key=lambda pt: pt.recall)
            warnings.warn("no operating point reaches the minimum recall; "
                          "returning the max-recall point")
            return best, p
        p -= step


FRONTIER_CSV_HEADER = "precision,recall,p_g,p_b,rho_link,threshold"


def write_frontier_csv(frontier: list[ParetoPoint], path) -> None:
    with open(path, "w") as f:
        f.write("# schema-version 1\n")
        f.write(FRONTIER_CSV_HEADER + "\n")
        for pt in frontier:
            if isinstance(pt.params, ModelParams):
                f.write(f"{pt.precision!r},{pt.recall!r},{pt.params.p_g!r},"
                        f"{pt.params.p_b!r},{pt.params.rho_link!r},\n")
            else:
                f.write(f"{pt.precision!r},{pt.recall!r},,,,{pt.params!r}\n")
