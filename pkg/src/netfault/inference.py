"""Greedy maximum-likelihood search over failure hypotheses.

The search starts from the no-failure hypothesis and adds the component with
the largest prior-inclusive delta while that delta is positive.  Two execution
paths produce identical results:

  use_jle=True   maintains the delta array incrementally, touching only the
                 groups whose paths contain the component just added;
  use_jle=False  re-derives LL(H + {l}) from scratch for every candidate in
                 every iteration (the reference and benchmark path).

Ties break toward the smallest component id (see engine.select_best).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import telemetry
from .engine import DeltaState, Engine, FlowIndex, select_best
from .model import ModelParams, prior_vector
from .topology import Topology, reduced_topology


@dataclass
class IterationRecord:
    iteration: int
    component: int
    delta: float
    cumulative_ll: float
    elapsed_us: int
    hypotheses_scanned: int


@dataclass
class SearchResult:
    hypothesis: list[int]
    iterations: list[IterationRecord]
    wall_time_s: float
    hypotheses_scanned: int
    n: int = 0
    m: int = 0
    stat_T: int = 0
    stat_D: int = 0

    @property
    def as_set(self) -> frozenset[int]:
        return frozenset(self.hypothesis)


ITERATION_CSV_HEADER = "iteration,component_id,delta,cumulative_ll,elapsed_us,hypotheses_scanned"


def write_iteration_csv(result: SearchResult, path) -> None:
    with open(path, "w") as f:
        f.write("# schema-version 1\n")
        f.write(ITERATION_CSV_HEADER + "\n")
        for it in result.iterations:
            f.write(f"{it.iteration},{it.component},{it.delta!r},{it.cumulative_ll!r},"
                    f"{it.elapsed_us},{it.hypotheses_scanned}\n")


def build_flow_index(selected, topo: Topology) -> FlowIndex:
    return FlowIndex.build(selected, topo.n_ids, topo.component_mask())


def compute_initial_delta(index: FlowIndex, params: ModelParams,
                          prior: np.ndarray) -> DeltaState:
    """Delta array for the first iteration, one linear pass over the flows."""
    return Engine(index, params, prior).initial_state()


def update_delta(engine: Engine, state: DeltaState, l_star: int) -> DeltaState:
    """Incremental delta update for adding l_star (in place; returns state)."""
    engine.apply_add(state, l_star)
    return state


def greedy_search(index: FlowIndex, params: ModelParams, prior: np.ndarray,
                  use_jle: bool = True) -> SearchResult:
    engine = Engine(index, params, prior)
    t0 = time.perf_counter()
    iters: list[IterationRecord] = []
    scanned = 0
    if use_jle:
        state = engine.initial_state()
        while True:
            it_start = time.perf_counter()
            scanned += int((index.component_mask & ~state.in_hyp).sum())
            comp, _ = select_best(state.delta, state.in_hyp, index.component_mask)
            if comp is None:
                break
            gain = float(state.delta[comp])
            engine.apply_add(state, comp)
            state.ll += gain
            iters.append(IterationRecord(
                iteration=len(iters) + 1, component=comp, delta=gain,
                cumulative_ll=state.ll,
                elapsed_us=int((time.perf_counter() - it_start) * 1e6),
                hypotheses_scanned=scanned))
        hyp = state.hypothesis
    else:
        hyp = []
        in_hyp = np.zeros(index.n_ids, dtype=bool)
        ll_h = 0.0
        while True:
            it_start = time.perf_counter()
            cand = np.flatnonzero(index.component_mask & ~in_hyp)
            scanned += len(cand)
            ll_h = engine.ll_from_scratch(hyp)
            values = np.zeros(index.n_ids)
            for l in cand:
                values[l] = engine.ll_from_scratch(hyp + [int(l)]) - ll_h
            comp, _ = select_best(values, in_hyp, index.component_mask)
            if comp is None:
                break
            gain = float(values[comp])
            hyp.append(comp)
            in_hyp[comp] = True
            iters.append(IterationRecord(
                iteration=len(iters) + 1, component=comp, delta=gain,
                cumulative_ll=ll_h + gain,
                elapsed_us=int((time.perf_counter() - it_start) * 1e6),
                hypotheses_scanned=scanned))
    return SearchResult(hypothesis=list(hyp), iterations=iters,
                        wall_time_s=time.perf_counter() - t0,
                        hypotheses_scanned=scanned,
                        n=int(index.component_mask.sum()), m=index.m,
                        stat_T=index.stat_T, stat_D=index.stat_D)


@dataclass
class InferResult:
    components: frozenset[int]
    added_order: list[int]
    search: SearchResult
    class_findings: list[frozenset[int]] = field(default_factory=list)
    reduced: bool = False


def infer(trace: telemetry.TraceFile, topo: Topology, kind: str, params: ModelParams,
          use_jle: bool = True, per_flow: bool = False) -> InferResult:
    """Select input of the given kind and run the greedy search.

    Passive-only input (kind P) on a topology with non-trivial link
    equivalence classes runs on the reduced space; each found class is
    expanded to its member links and reported as a class-level finding.
    """
    selected = telemetry.select_input(trace, kind, topo)
    if per_flow:
        recs = telemetry.per_flow_binarize([r for r, _ in selected], params.rtt_threshold_ms)
        selected = list(zip(recs, (ps for _, ps in selected)))
    if not selected:
        return InferResult(components=frozenset(), added_order=[],
                           search=SearchResult([], [], 0.0, 0))
    kinds = telemetry.parse_kind(kind)
    if kinds == ("P",):
        red, members = reduced_topology(topo)
        if any(len(c) > 1 for c in red.classes):
            reduced_sel = [(rec, red.reduce_path_set(ps)) for rec, ps in selected]
            mask = np.ones(red.n_classes, dtype=bool)
            index = FlowIndex.build(reduced_sel, red.n_classes, mask)
            link_odds = float(np.log(params.rho_link) - np.log1p(-params.rho_link))
            prior = np.full(red.n_classes, link_odds)
            result = greedy_search(index, params, prior, use_jle=use_jle)
            findings = [members[c] for c in result.hypothesis]
            comps = frozenset(c for f in findings for c in f)
            return InferResult(components=comps, added_order=list(result.hypothesis),
                               search=result, class_findings=findings, reduced=True)
    index = build_flow_index(selected, topo)
    prior = prior_vector(topo, params)
    result = greedy_search(index, params, prior, use_jle=use_jle)
    return InferResult(components=frozenset(result.hypothesis),
                       added_order=list(result.hypothesis), search=result)
