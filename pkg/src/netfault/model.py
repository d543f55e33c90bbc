"""Probabilistic failure model: per-flow likelihoods and component priors.

A hypothesis is a set of failed components (links and/or devices).  A path is
failed iff it contains at least one hypothesis member.  For a flow that sent t
packets and saw r bad ones over a path set of width w with b failed paths, the
log-likelihood normalized against the no-failure hypothesis is

    ln( (b * exp(LR) + (w - b)) / w ),
    LR = r * ln(p_b / p_g) + (t - r) * ln((1 - p_b) / (1 - p_g))

which is exactly 0 when b = 0, so untouched flows drop out of every sum.
Priors enter as a per-added-component log-odds penalty: ln(rho / (1 - rho))
for links, multiplied by device_prior_log_factor for devices.  The absolute
prior differs from this odds form only by a hypothesis-independent constant,
so no argmax ever changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .topology import PathSet, Topology


@dataclass
class ModelParams:
    p_g: float = 4e-4
    p_b: float = 5e-3
    rho_link: float = 1e-3
    device_prior_log_factor: float = 5.0
    rtt_threshold_ms: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.p_g < self.p_b < 1.0):
            raise ValueError(f"need 0 < p_g < p_b < 1, got p_g={self.p_g}, p_b={self.p_b}")
        if not (0.0 < self.rho_link < 0.5):
            raise ValueError(f"need 0 < rho_link < 0.5, got {self.rho_link}")

    # log(p_b/p_g) and log((1-p_b)/(1-p_g)); every likelihood reduces to these
    @property
    def log_bad_ratio(self) -> float:
        return math.log(self.p_b) - math.log(self.p_g)

    @property
    def log_good_ratio(self) -> float:
        return math.log1p(-self.p_b) - math.log1p(-self.p_g)

    def log_ratio(self, r: int, t: int) -> float:
        return r * self.log_bad_ratio + (t - r) * self.log_good_ratio


def prior_log_odds(component: int, topo: Topology, params: ModelParams) -> float:
    """Log-odds penalty for adding one component to a hypothesis."""
    base = math.log(params.rho_link) - math.log1p(-params.rho_link)
    if topo.is_device_component(component):
        return params.device_prior_log_factor * base
    if topo.is_link(component):
        return base
    raise ValueError(f"id {component} is not a link or a non-host device")


def prior_vector(topo: Topology, params: ModelParams) -> np.ndarray:
    """Per-id prior log-odds over the full id range; non-components get NaN."""
    base = math.log(params.rho_link) - math.log1p(-params.rho_link)
    out = np.full(topo.n_ids, np.nan)
    for c in topo.component_ids():
        out[c] = base * (params.device_prior_log_factor if topo.is_device_component(c) else 1.0)
    return out


def failed_path_count(path_set: PathSet, hypothesis) -> int:
    h = hypothesis if isinstance(hypothesis, (set, frozenset)) else set(hypothesis)
    if not h:
        return 0
    return sum(1 for p in path_set.paths if not h.isdisjoint(p))


def flow_log_likelihood_terms(r: int, t: int, w: int, b: int, params: ModelParams) -> float:
    """Normalized flow log-likelihood from the failed-path count b."""
    if not 0 <= b <= w or w < 1:
        raise ValueError(f"need 0 <= b <= w and w >= 1, got b={b}, w={w}")
    if b == 0:
        return 0.0
    lr = params.log_ratio(r, t)
    if b == w:
        return lr
    return np.logaddexp(math.log(b) + lr, math.log(w - b)) - math.log(w)


def flow_log_likelihood(record, path_set: PathSet, hypothesis, params: ModelParams) -> float:
    """ln P[flow | H] - ln P[flow | no failure] for one flow."""
    b = failed_path_count(path_set, hypothesis)
    return flow_log_likelihood_terms(record.r, record.t, path_set.width, b, params)


def hypothesis_log_likelihood(flows, hypothesis, topo: Topology, params: ModelParams) -> float:
    """Posterior log-likelihood of a hypothesis over selected flows,
    normalized so the empty hypothesis scores exactly 0.

    ``flows`` is a list of (record, path_set) pairs as produced by
    telemetry.select_input.
    """
    h = set(hypothesis)
    total = sum(prior_log_odds(c, topo, params) for c in h)
    for rec, ps in flows:
        total += flow_log_likelihood(rec, ps, h, params)
    return total


# -- params file ---------------------------------------------------------------

_PARAM_FIELDS = ("p_g", "p_b", "rho_link", "device_prior_log_factor", "rtt_threshold_ms")


def write_params(params: ModelParams, path) -> None:
    with open(path, "w") as f:
        for name in _PARAM_FIELDS:
            f.write(f"{name}={getattr(params, name)!r}\n")


def parse_params(path) -> ModelParams:
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"params line {lineno}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _PARAM_FIELDS:
                raise ValueError(f"params line {lineno}: unknown key {key!r}")
            values[key] = float(val)
    return ModelParams(**values)
