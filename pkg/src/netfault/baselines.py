"""Comparison schemes: bounded-K exhaustive MLE search and link voting.

sherlock_search scans every hypothesis of size <= K over the same model the
greedy search uses.  With use_jle=True it carries the delta array down the
recursion (likelihood of a child hypothesis is parent likelihood plus the
parent's delta entry); with use_jle=False it recomputes every hypothesis
likelihood from scratch.  Both return the same canonical argmax: higher
likelihood first, then fewer components, then lexicographically smallest.

vote007 is a deliberately simple scoring baseline: every flow with at least
one bad packet spreads one vote evenly over the links of its (known) path,
and links scoring at least threshold * max_score are returned.  It
approximates the published scoring family of rank-based localizers; it is not
a reimplementation of any of them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .engine import TIE_EPS, Engine, FlowIndex, select_best
from .model import ModelParams
from .topology import Topology


class BudgetExceeded(RuntimeError):
    def __init__(self, estimate: int, budget: int):
        super().__init__(
            f"estimated scan of {estimate} hypotheses exceeds budget {budget}")
        self.estimate = estimate
        self.budget = budget


def scan_estimate(n: int, k: int) -> int:
    return sum(math.comb(n, i) for i in range(0, k + 1))


@dataclass
class SherlockResult:
    hypothesis: list[int]
    log_likelihood: float
    hypotheses_scanned: int
    wall_time_s: float

    @property
    def as_set(self) -> frozenset[int]:
        return frozenset(self.hypothesis)


def sherlock_search(index: FlowIndex, params: ModelParams, prior: np.ndarray,
                    k_max: int, use_jle: bool = True,
                    scan_budget: int = 10 ** 8) -> SherlockResult:
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    cand = np.flatnonzero(index.component_mask)
    estimate = scan_estimate(len(cand), k_max)
    if estimate > scan_budget:
        raise BudgetExceeded(estimate, scan_budget)
    engine = Engine(index, params, prior)
    t0 = time.perf_counter()
    best: dict = {"q": None, "hyp": (), "ll": 0.0, "scanned": 0}

    def consider(ll: float, hyp: tuple[int, ...]):
        best["scanned"] += 1
        q = int(np.rint(ll / TIE_EPS))
        cur = best["q"]
        if (cur is None or q > cur
                or (q == cur and (len(hyp), hyp) < (len(best["hyp"]), best["hyp"]))):
            best["q"], best["hyp"], best["ll"] = q, hyp, ll

    if use_jle:
        def explore(state, ll: float, last: int, depth: int):
            consider(ll, tuple(sorted(state.hypothesis)))
            if depth == k_max:
                return
            for comp in cand[np.searchsorted(cand, last + 1):]:
                comp = int(comp)
                child_ll = ll + float(state.delta[comp])
                if depth + 1 == k_max:
                    consider(child_ll, tuple(sorted(state.hypothesis + [comp])))
                else:
                    child = state.clone()
                    engine.apply_add(child, comp)
                    explore(child, child_ll, comp, depth + 1)

        explore(engine.initial_state(), 0.0, -1, 0)
    else:
        for size in range(0, k_max + 1):
            for combo in combinations(cand.tolist(), size):
                consider(engine.ll_from_scratch(list(combo)), combo)

    return SherlockResult(hypothesis=list(best["hyp"]), log_likelihood=best["ll"],
                          hypotheses_scanned=best["scanned"],
                          wall_time_s=time.perf_counter() - t0)


@dataclass
class VoteTable:
    scores: dict[int, float]
    threshold: float
    flagged_flows: int = 0

    def winners(self) -> frozenset[int]:
        if not self.scores:
            return frozenset()
        top = max(self.scores.values())
        if top <= 0:
            return frozenset()
        return frozenset(l for l, s in self.scores.items()
                         if s >= self.threshold * top)


def vote_table(selected, topo: Topology) -> VoteTable:
    """Accumulate votes; thresholding happens later so one table serves a
    whole calibration sweep."""
    scores: dict[int, float] = {}
    flagged = 0
    for rec, ps in selected:
        if ps.width != 1:
            raise ValueError("voting requires flows with a single known path")
        if rec.r < 1:
            continue
        flagged += 1
        links = [c for c in ps.paths[0] if topo.is_link(c)]
        if not links:
            continue
        share = 1.0 / len(links)
        for l in links:
            scores[l] = scores.get(l, 0.0) + share
    return VoteTable(scores=scores, threshold=1.0, flagged_flows=flagged)


def vote007(selected, threshold: float, topo: Topology) -> frozenset[int]:
    """Links whose vote score reaches threshold * max_score."""
    table = vote_table(selected, topo)
    table.threshold = threshold
    return table.winners()
