"""Flow-level failure simulator: traffic generation, drop sampling, traces.

Packets are dropped per flow with one Bernoulli trial per packet against the
whole-path drop probability 1 - prod(1 - p_link); queuing, congestion control
and latency dynamics are out of scope.  Every non-failed link carries an
independent uniform noise drop rate in [0, noise_drop_max].  Device failures
are realized on a sampled subset of the device's links; the device itself
contributes no extra drop term.

Flow sizes follow a Pareto distribution with shape 1.05 and the scale solved
from the configured mean, truncated below at one packet.  Sizes are also
capped (default 10^6 packets): with shape this close to 1 the sample mass is
otherwise dominated by astronomically rare giant flows, which makes finite
traffic matrices unusable for repeatable experiments.

All sampling comes from one seeded generator in a fixed order, so a given
(topology, scenario, pattern, config) produces a byte-identical trace.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams
from .telemetry import KIND_APP, KIND_PROBE, FlowRecord, TraceFile
from .topology import TIER_CORE, TIER_TOR, Topology

SILENT_LINK_DROPS = "silent_link_drops"
DEVICE_FAILURE = "device_failure"


class ScenarioError(ValueError):
    pass


class CertificateError(RuntimeError):
    """A guarantee-condition certificate could not be satisfied."""

    def __init__(self, condition: str, detail: str):
        super().__init__(f"certificate condition not met ({condition}): {detail}")
        self.condition = condition


@dataclass
class FailureScenario:
    kind: str
    failures: list[tuple[int, float]]
    device_link_fraction: float = 1.0

    def __post_init__(self):
        if self.kind not in (SILENT_LINK_DROPS, DEVICE_FAILURE):
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        for cid, rate in self.failures:
            if not 0.0 < rate < 1.0:
                raise ScenarioError(f"drop rate {rate} for {cid} outside (0,1)")
        if not 0.0 < self.device_link_fraction <= 1.0:
            raise ScenarioError("device_link_fraction must be in (0, 1]")


@dataclass
class TrafficPattern:
    kind: str = "uniform"  # uniform | skewed
    skew_hot_rack_fraction: float = 0.05
    skew_traffic_fraction: float = 0.5
    mean_flow_bytes: float = 200_000.0
    pareto_shape: float = 1.05
    packet_size_bytes: int = 1000
    max_flow_packets: int = 1_000_000
    # equal-size flows (packets per flow); bypasses the Pareto draw. Heavy
    # tails keep pairwise traffic skew from converging, so harnesses that
    # need certified low skew use this.
    fixed_flow_packets: int | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "skewed"):
            raise ScenarioError(f"unknown traffic pattern {self.kind!r}")
        if not 0.0 < self.skew_hot_rack_fraction < 1.0:
            raise ScenarioError("skew_hot_rack_fraction must be in (0,1)")
        if not 0.0 < self.skew_traffic_fraction < 1.0:
            raise ScenarioError("skew_traffic_fraction must be in (0,1)")
        if self.pareto_shape <= 1.0:
            raise ScenarioError("pareto_shape must exceed 1 for a finite mean")


@dataclass
class SimConfig:
    n_app_flows: int = 10_000
    probe_rate: float = 0.0  # probes per host per window
    probe_packets: int = 100
    noise_drop_max: float = 1e-4
    seed: int = 0
    t_min_packets: int | None = None

    def __post_init__(self):
        if self.n_app_flows < 0 or self.probe_rate < 0 or self.noise_drop_max < 0:
            raise ScenarioError("simulation config values must be nonnegative")


def realize_failures(scenario: FailureScenario, topo: Topology,
                     rng: np.random.Generator):
    """Per-link drop rates for the failed set, plus trace ground truth.

    Device failures list the device and each realized member link in the
    ground truth so scoring can apply device accounting.
    """
    rates: dict[int, float] = {}
    truth: list[tuple[int, float]] = []
    if scenario.kind == SILENT_LINK_DROPS:
        for cid, rate in scenario.failures:
            if cid not in topo.links:
                raise ScenarioError(f"silent-drop target {cid} is not a link")
            rates[cid] = rate
            truth.append((cid, rate))
    else:
        for dev, rate in scenario.failures:
            if not topo.is_device_component(dev):
                raise ScenarioError(f"device-failure target {dev} is not a switch")
            links = topo.links_of_device(dev)
            n_fail = int(math.ceil(scenario.device_link_fraction * len(links)))
            chosen = sorted(rng.choice(len(links), size=n_fail, replace=False).tolist())
            truth.append((dev, rate))
            for i in chosen:
                rates[links[i]] = rate
                truth.append((links[i], rate))
    return rates, truth


def simulate(topo: Topology, scenario: FailureScenario, pattern: TrafficPattern,
             config: SimConfig) -> TraceFile:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    fail_rates, truth = realize_failures(scenario, topo, rng)
    if fail_rates and config.noise_drop_max >= min(r for r in fail_rates.values()):
        warnings.warn("noise_drop_max is not below the smallest failed drop rate; "
                      "failures may be indistinguishable from noise")

    drop = np.zeros(topo.n_ids)
    good_links = np.array([l for l in sorted(topo.links) if l not in fail_rates])
    if len(good_links):
        drop[good_links] = rng.uniform(0.0, config.noise_drop_max, size=len(good_links))
    for l, r in fail_rates.items():
        drop[l] = r

    hosts = np.asarray(topo.hosts)
    records: list[FlowRecord] = []
    path_q_cache: dict[int, np.ndarray] = {}

    def q_of(ps) -> np.ndarray:
        arr = path_q_cache.get(id(ps))
        if arr is None:
            arr = np.array([
                1.0 - math.exp(sum(math.log1p(-drop[c]) for c in p if topo.is_link(c)))
                for p in ps.paths])
            path_q_cache[id(ps)] = arr
        return arr

    n = config.n_app_flows
    if n > 0:
        if len(hosts) < 2:
            raise ScenarioError("need at least two hosts to generate flows")
        src_i, dst_i = _draw_endpoints(topo, pattern, hosts, n, rng)
        if pattern.fixed_flow_packets is not None:
            t_arr = np.full(n, pattern.fixed_flow_packets, dtype=np.int64)
        else:
            x_m = pattern.mean_flow_bytes * (pattern.pareto_shape - 1.0) / pattern.pareto_shape
            flow_bytes = x_m * (1.0 + rng.pareto(pattern.pareto_shape, size=n))
            t_arr = np.clip(np.rint(flow_bytes / pattern.packet_size_bytes),
                            1, pattern.max_flow_packets).astype(np.int64)
        u = rng.random(n)
        paths: list[tuple[int, ...]] = []
        q_arr = np.empty(n)
        for i in range(n):
            ps = topo.ecmp_paths(int(hosts[src_i[i]]), int(hosts[dst_i[i]]))
            j = min(int(u[i] * ps.width), ps.width - 1)
            paths.append(ps.paths[j])
            q_arr[i] = q_of(ps)[j]
        r_arr = rng.binomial(t_arr, q_arr)
        for i in range(n):
            records.append(FlowRecord(src=int(hosts[src_i[i]]), dst=int(hosts[dst_i[i]]),
                                      t=int(t_arr[i]), r=int(r_arr[i]), kind=KIND_APP,
                                      path=paths[i], rtt_ms=None))

    n_probes = int(round(config.probe_rate * len(hosts)))
    if n_probes > 0:
        cores = sorted(d for d, t in topo.devices.items() if t == TIER_CORE)
        if not cores:
            raise ScenarioError("probe generation needs core-tier switches")
        probe_path_cache: dict[tuple[int, int], list] = {}
        hs = rng.integers(0, len(hosts), size=n_probes)
        cs = rng.integers(0, len(cores), size=n_probes)
        u = rng.random(n_probes)
        ppaths, pq = [], np.empty(n_probes)
        for i in range(n_probes):
            key = (int(hosts[hs[i]]), cores[int(cs[i])])
            plist = probe_path_cache.get(key)
            if plist is None:
                plist = topo.probe_paths(*key)
                probe_path_cache[key] = plist
            j = min(int(u[i] * len(plist)), len(plist) - 1)
            p = plist[j]
            ppaths.append(p)
            pq[i] = 1.0 - math.exp(sum(math.log1p(-drop[c]) for c in p if topo.is_link(c)))
        pr = rng.binomial(config.probe_packets, pq)
        for i in range(n_probes):
            records.append(FlowRecord(src=int(hosts[hs[i]]), dst=cores[int(cs[i])],
                                      t=config.probe_packets, r=int(pr[i]),
                                      kind=KIND_PROBE, path=ppaths[i], rtt_ms=None))

    return TraceFile(topo_checksum=topo.checksum(), seed=config.seed,
                     scenario=scenario.kind, ground_truth=truth, records=records)


def _draw_endpoints(topo, pattern, hosts, n, rng):
    nh = len(hosts)
    if pattern.kind == "uniform":
        src = rng.integers(0, nh, size=n)
    else:
        racks = sorted(d for d, t in topo.devices.items() if t == TIER_TOR)
        n_hot = max(1, int(round(pattern.skew_hot_rack_fraction * len(racks))))
        hot_racks = set(np.asarray(racks)[
            rng.choice(len(racks), size=n_hot, replace=False)].tolist())
        hot_pos = np.flatnonzero(np.array([topo.tor_of(int(h)) in hot_racks for h in hosts]))
        if len(hot_pos) == 0:
            raise ScenarioError("skewed pattern found no hosts under the hot racks")
        hot_mask = rng.random(n) < pattern.skew_traffic_fraction
        src = rng.integers(0, nh, size=n)
        hot_src = hot_pos[rng.integers(0, len(hot_pos), size=n)]
        src = np.where(hot_mask, hot_src, src)
    d = rng.integers(0, nh - 1, size=n)
    dst = d + (d >= src)
    swap = rng.random(n) < 0.5
    src2 = np.where(swap, dst, src)
    dst2 = np.where(swap, src, dst)
    return src2, dst2


# -- skew measurement -----------------------------------------------------------


def measure_skew(trace: TraceFile, topo: Topology) -> float:
    """Largest fraction of one link's packets shared with any other link.

    Exact and packet-weighted: epsilon = max over link pairs of
    T({l1,l2}) / min(T(l1), T(l2)), over pairs that share traffic.
    """
    per_path: Counter = Counter()
    for rec in trace.records:
        if rec.path is None:
            raise ValueError("skew measurement needs the true path of every flow")
        per_path[rec.path] += rec.t
    t_link: Counter = Counter()
    t_pair: Counter = Counter()
    for path, t in per_path.items():
        links = [c for c in path if topo.is_link(c)]
        for l in links:
            t_link[l] += t
        for i, a in enumerate(links):
            for b in links[i + 1:]:
                t_pair[(a, b) if a < b else (b, a)] += t
    eps = 0.0
    for (a, b), shared in t_pair.items():
        eps = max(eps, shared / min(t_link[a], t_link[b]))
    return eps


def link_packet_coverage(trace: TraceFile, topo: Topology) -> dict[int, int]:
    """Packets crossing each link (zero-filled for uncovered links)."""
    cov = {l: 0 for l in topo.links}
    per_path: Counter = Counter()
    for rec in trace.records:
        if rec.path is not None:
            per_path[rec.path] += rec.t
    for path, t in per_path.items():
        for c in path:
            if c in cov:
                cov[c] += t
    return cov


# -- guarantee-condition instances ------------------------------------------------


def make_theorem2_instance(topo: Topology, n_failures: int, params: ModelParams,
                           seed: int, t_min: int = 400, base_flows: int = 20_000,
                           max_rounds: int = 6):
    """Build a trace certified to satisfy the exact-recovery conditions:
    parameters with 5*p_g < p_b < 0.05, good-link rates below p_g, failed-link
    rates above p_b, at most alpha/2 failures for (1/alpha)-skewed traffic,
    and at least t_min packets on every link (traffic is densified until the
    coverage holds or the retry budget runs out).
    """
    if not (5.0 * params.p_g < params.p_b < 0.05):
        raise ValueError(
            f"guarantee conditions need 5*p_g < p_b < 0.05, "
            f"got p_g={params.p_g}, p_b={params.p_b}")
    rng = np.random.Generator(np.random.PCG64(seed))
    candidates = topo.inter_switch_links()
    if n_failures > len(candidates):
        raise ValueError("more failures requested than inter-switch links")
    chosen = sorted(rng.choice(len(candidates), size=n_failures, replace=False).tolist())
    hi = min(3.0 * params.p_b, 0.12)
    rates = rng.uniform(1.2 * params.p_b, hi, size=n_failures)
    scenario = FailureScenario(
        kind=SILENT_LINK_DROPS,
        failures=[(candidates[i], float(r)) for i, r in zip(chosen, rates)])
    noise_max = params.p_g / 4.0

    trace = None
    n_flows = base_flows
    min_cov = 0
    pattern = TrafficPattern(kind="uniform", fixed_flow_packets=200)
    for round_no in range(max_rounds):
        config = SimConfig(n_app_flows=n_flows, probe_rate=0.0,
                           noise_drop_max=noise_max, seed=seed * 7919 + round_no)
        trace = simulate(topo, scenario, pattern, config)
        cov = link_packet_coverage(trace, topo)
        min_cov = min(cov.values())
        if min_cov >= t_min:
            break
        n_flows *= 2
    else:
        raise CertificateError(
            "coverage", f"min per-link packets {min_cov} < {t_min} after "
                        f"{max_rounds} densification rounds")

    eps = measure_skew(trace, topo)
    alpha = math.inf if eps == 0 else 1.0 / eps
    if n_failures > alpha / 2.0:
        raise CertificateError(
            "skew", f"{n_failures} failures exceed alpha/2 = {alpha / 2.0:.2f} "
                    f"(epsilon = {eps:.3f})")
    certificate = {
        "epsilon": eps,
        "alpha": alpha,
        "n_failures": n_failures,
        "t_min_required": t_min,
        "t_min_observed": min_cov,
        "n_flows": n_flows,
        "p_g": params.p_g,
        "p_b": params.p_b,
        "noise_max": noise_max,
        "failures": scenario.failures,
    }
    return trace, certificate


# -- harness helpers and scenario files -------------------------------------------


def random_silent_drops(topo: Topology, n_failures: int, seed: int,
                        rate_range: tuple[float, float] = (0.001, 0.01)) -> FailureScenario:
    """Silent-drop scenario with rates drawn uniformly from rate_range."""
    rng = np.random.Generator(np.random.PCG64(seed))
    candidates = topo.inter_switch_links()
    chosen = sorted(rng.choice(len(candidates), size=n_failures, replace=False).tolist())
    rates = rng.uniform(rate_range[0], rate_range[1], size=n_failures)
    return FailureScenario(kind=SILENT_LINK_DROPS,
                           failures=[(candidates[i], float(r)) for i, r in zip(chosen, rates)])


def random_device_failure(topo: Topology, n_devices: int, seed: int,
                          link_fraction: float,
                          rate_range: tuple[float, float] = (0.001, 0.01)) -> FailureScenario:
    rng = np.random.Generator(np.random.PCG64(seed))
    switches = sorted(d for d in topo.devices
                      if topo.is_device_component(d) and topo.links_of_device(d))
    chosen = sorted(rng.choice(len(switches), size=n_devices, replace=False).tolist())
    rates = rng.uniform(rate_range[0], rate_range[1], size=n_devices)
    return FailureScenario(kind=DEVICE_FAILURE,
                           failures=[(switches[i], float(r)) for i, r in zip(chosen, rates)],
                           device_link_fraction=link_fraction)


def write_scenario(scenario: FailureScenario, path) -> None:
    with open(path, "w") as f:
        f.write(f"kind {scenario.kind}\n")
        if scenario.kind == DEVICE_FAILURE:
            f.write(f"link_fraction {scenario.device_link_fraction!r}\n")
        for cid, rate in scenario.failures:
            f.write(f"fail {cid} {rate!r}\n")


def parse_scenario(path) -> FailureScenario:
    kind = None
    failures: list[tuple[int, float]] = []
    fraction = 1.0
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "kind" and len(tok) == 2:
                kind = tok[1]
            elif tok[0] == "link_fraction" and len(tok) == 2:
                fraction = float(tok[1])
            elif tok[0] == "fail" and len(tok) == 3:
                failures.append((int(tok[1]), float(tok[2])))
            else:
                raise ScenarioError(f"scenario line {lineno}: unrecognized {line!r}")
    if kind is None:
        raise ScenarioError("scenario file missing 'kind' line")
    return FailureScenario(kind=kind, failures=failures, device_link_fraction=fraction)
