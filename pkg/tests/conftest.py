"""Shared fixtures and random-instance generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from netfault.engine import TIE_EPS
from netfault.model import ModelParams, flow_log_likelihood_terms
from netfault.telemetry import FlowRecord
from netfault.topology import PathSet, build_fat_tree


@pytest.fixture(scope="session")
def fat4():
    return build_fat_tree(4, 2)


@pytest.fixture(scope="session")
def fat8():
    return build_fat_tree(8, 1)


# -- synthetic engine-level instances -----------------------------------------


def random_instance(seed, n_range=(8, 12), m_range=(30, 80), max_failures=3,
                    rate_range=(0.03, 0.08), noise_max=0.001,
                    t_range=(500, 4000), path_len=(2, 3), w_max=3):
    """A random inference instance over an abstract component universe.

    Paths are short random component subsets (dense enough to entangle
    components, sparse enough to resemble routed paths); drop rates follow
    the silent-drop regime (failures well above noise); packet counts are
    binomial over the true path. Returns (selected, truth_ids, params, n).
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    k_true = int(rng.integers(0, max_failures + 1))
    failed = sorted(rng.choice(n, size=k_true, replace=False).tolist())
    p = rng.uniform(0.0, noise_max, size=n)
    for c, rate in zip(failed, rng.uniform(*rate_range, size=k_true)):
        p[c] = rate

    m = int(rng.integers(m_range[0], m_range[1] + 1))
    selected = []
    for _ in range(m):
        w = int(rng.integers(1, w_max + 1))
        paths = []
        for _ in range(w):
            plen = int(rng.integers(path_len[0], path_len[1] + 1))
            path = tuple(sorted(rng.choice(n, size=min(plen, n), replace=False).tolist()))
            if path not in paths:
                paths.append(path)
        paths.sort()
        true_path = paths[int(rng.integers(0, len(paths)))]
        q = 1.0 - float(np.prod([1.0 - p[c] for c in true_path]))
        t = int(rng.integers(*t_range))
        r = int(rng.binomial(t, q))
        ps = PathSet(src=0, dst=1, paths=paths, group_key=tuple(paths))
        selected.append((FlowRecord(src=0, dst=1, t=t, r=r, kind="app",
                                    path=true_path, rtt_ms=None), ps))
    params = ModelParams(p_g=2e-3, p_b=3e-2, rho_link=1e-2)
    return selected, failed, params, n


def oracle_ll(selected, hypothesis, params, prior_odds_per_comp):
    """Independent log-likelihood: direct per-flow evaluation, no pooling."""
    h = set(hypothesis)
    total = len(h) * prior_odds_per_comp
    for rec, ps in selected:
        b = sum(1 for path in ps.paths if not h.isdisjoint(path))
        total += flow_log_likelihood_terms(rec.r, rec.t, ps.width, b, params)
    return total


def oracle_best_hypothesis(selected, params, prior_odds, n, k_max):
    """Exhaustive MLE over all hypotheses of size <= k_max, canonical order:
    higher quantized likelihood, then smaller size, then lexicographic."""
    from itertools import combinations

    best = None
    for size in range(0, k_max + 1):
        for combo in combinations(range(n), size):
            ll = oracle_ll(selected, combo, params, prior_odds)
            q = int(np.rint(ll / TIE_EPS))
            key = (-q, len(combo), combo)
            if best is None or key < best[0]:
                best = (key, combo, ll)
    return set(best[1]), best[2]


def link_prior_odds(params: ModelParams) -> float:
    return float(np.log(params.rho_link) - np.log1p(-params.rho_link))
