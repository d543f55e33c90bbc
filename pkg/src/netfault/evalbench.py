"""Scoring with device accounting, runtime benchmarking, shared file formats.

Precision counts a predicted link as correct when it truly failed or when any
of its endpoint devices truly failed.  Recall gives each truly failed device
one unit of mass, earned fully by predicting the device itself or fractionally
as (predicted member links) / (its failed links); independently failed links
carry one unit each.  An empty prediction has precision 1; a trace with no
failures has recall 1.

Ground truth encodes device failures as the device id plus one line per
realized member link, so a trace alone carries everything scoring needs.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import telemetry
from .baselines import BudgetExceeded, sherlock_search, vote_table
from .engine import Engine
from .inference import build_flow_index, greedy_search
from .model import ModelParams, prior_vector
from .topology import Topology


@dataclass
class EvalReport:
    precision: float
    recall: float
    fscore: float
    true_positives: float
    false_positives: float
    predicted: int
    truth_count: int
    class_precision: float | None = None
    class_recall: float | None = None


def _fscore(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def score(predicted, ground_truth, topo: Topology,
          predicted_classes: list[frozenset[int]] | None = None) -> EvalReport:
    """Score a predicted component set against trace ground truth.

    predicted_classes, when given (passive-only inference), adds class-level
    precision/recall: a predicted class is correct iff it contains a truly
    failed link.
    """
    pred = set(int(c) for c in predicted)
    for c in pred:
        if c not in topo.links and c not in topo.devices:
            raise ValueError(f"predicted id {c} is not in the topology")
    truth_ids = [cid for cid, _ in ground_truth]
    for c in truth_ids:
        if c not in topo.links and c not in topo.devices:
            raise ValueError(f"ground truth id {c} is not in the topology")
    truth_devices = {c for c in truth_ids if topo.is_device_component(c)}
    truth_links = {c for c in truth_ids if topo.is_link(c)}
    members = {d: set() for d in truth_devices}
    independent_links = set()
    for l in truth_links:
        a, b = topo.links[l]
        owners = [d for d in (a, b) if d in truth_devices]
        if owners:
            for d in owners:
                members[d].add(l)
        else:
            independent_links.add(l)

    tp = 0.0
    for c in pred:
        if c in truth_devices or c in truth_links:
            tp += 1.0
        elif topo.is_link(c) and any(d in truth_devices for d in topo.links[c]):
            tp += 1.0
    precision = 1.0 if not pred else tp / len(pred)

    denom = len(truth_devices) + len(independent_links)
    mass = 0.0
    for d in truth_devices:
        if d in pred:
            mass += 1.0
        elif members[d]:
            mass += len(pred & members[d]) / len(members[d])
    mass += sum(1.0 for l in independent_links if l in pred)
    recall = 1.0 if denom == 0 else mass / denom

    report = EvalReport(precision=precision, recall=recall,
                        fscore=_fscore(precision, recall),
                        true_positives=tp, false_positives=len(pred) - tp,
                        predicted=len(pred), truth_count=denom)
    if predicted_classes is not None:
        hits = sum(1 for cls in predicted_classes if cls & truth_links)
        report.class_precision = 1.0 if not predicted_classes else hits / len(predicted_classes)
        covered = set().union(*predicted_classes) if predicted_classes else set()
        report.class_recall = (1.0 if not truth_links
                               else len(truth_links & covered) / len(truth_links))
    return report


# -- hypothesis files --------------------------------------------------------------


def write_hypothesis(components, path, classes=None) -> None:
    with open(path, "w") as f:
        if classes:
            for i, cls in enumerate(classes):
                f.write(f"# class {i}: {' '.join(str(c) for c in sorted(cls))}\n")
        for c in sorted(int(x) for x in components):
            f.write(f"fail {c}\n")


def parse_hypothesis(path) -> list[int]:
    out = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] != "fail" or len(tok) != 2:
                raise ValueError(f"hypothesis line {lineno}: expected 'fail <id>'")
            out.append(int(tok[1]))
    return out


# -- benchmarking -------------------------------------------------------------------

BENCH_SCHEMES = ("flock", "flock-naive", "sherlock", "sherlock-naive", "vote007")


@dataclass
class BenchRow:
    trace: str
    kind: str
    scheme: str
    wall_time_s: float
    runs: list[float]
    hypotheses_scanned: int
    hypothesis_size: int
    estimated: bool = False
    n: int = 0
    m: int = 0
    stat_T: int = 0
    stat_D: int = 0


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    threads: int = 1


def bench(topo: Topology, traces, kinds, params: ModelParams,
          schemes=BENCH_SCHEMES, repeats: int = 3, warmup: bool = True,
          sherlock_k: int = 2, scan_budget: int = 10 ** 8,
          vote_threshold: float = 0.5, trace_names=None) -> BenchReport:
    """Wall-time each scheme on each (trace, kind); the reported time is the
    median over `repeats` runs after an excluded warm-up run (the default
    protocol). A scheme whose scan estimate exceeds the budget is not run: its
    time is extrapolated from a small sample and flagged estimated."""
    report = BenchReport()
    names = trace_names or [f"trace{i}" for i in range(len(traces))]
    for tname, trace in zip(names, traces):
        for kind in kinds:
            selected = telemetry.select_input(trace, kind, topo)
            prior = prior_vector(topo, params)
            for scheme in schemes:
                row = _bench_one(scheme, selected, topo, params, prior, repeats,
                                 warmup, sherlock_k, scan_budget, vote_threshold)
                row.trace, row.kind = tname, kind
                report.rows.append(row)
    return report


def _bench_one(scheme, selected, topo, params, prior, repeats, warmup,
               sherlock_k, scan_budget, vote_threshold) -> BenchRow:
    def run_once():
        index = build_flow_index(selected, topo)
        if scheme == "flock":
            res = greedy_search(index, params, prior, use_jle=True)
            return res.wall_time_s, res.hypotheses_scanned, len(res.hypothesis), index
        if scheme == "flock-naive":
            res = greedy_search(index, params, prior, use_jle=False)
            return res.wall_time_s, res.hypotheses_scanned, len(res.hypothesis), index
        if scheme == "sherlock":
            res = sherlock_search(index, params, prior, sherlock_k, use_jle=True,
                                  scan_budget=scan_budget)
            return res.wall_time_s, res.hypotheses_scanned, len(res.hypothesis), index
        if scheme == "sherlock-naive":
            res = sherlock_search(index, params, prior, sherlock_k, use_jle=False,
                                  scan_budget=scan_budget)
            return res.wall_time_s, res.hypotheses_scanned, len(res.hypothesis), index
        if scheme == "vote007":
            t0 = time.perf_counter()
            winners = vote007_run(selected, vote_threshold, topo)
            return time.perf_counter() - t0, len(winners), len(winners), None
        raise ValueError(f"unknown scheme {scheme!r}")

    try:
        runs = []
        scanned = size = 0
        index = None
        total = repeats + (1 if warmup else 0)
        for i in range(total):
            t0 = time.perf_counter()
            _, scanned, size, index = run_once()
            runs.append(time.perf_counter() - t0)
        timed = runs[1:] if warmup and len(runs) > 1 else runs
        row = BenchRow(trace="", kind="", scheme=scheme,
                       wall_time_s=statistics.median(timed), runs=runs,
                       hypotheses_scanned=scanned, hypothesis_size=size)
        if index is not None:
            row.n = int(index.component_mask.sum())
            row.m = index.m
            row.stat_T = index.stat_T
            row.stat_D = index.stat_D
        return row
    except BudgetExceeded as e:
        # time a small prefix of the scan and extrapolate
        index = build_flow_index(selected, topo)
        engine = Engine(index, params, prior)
        cand = np.flatnonzero(index.component_mask)[:200]
        t0 = time.perf_counter()
        for c in cand:
            engine.ll_from_scratch([int(c)])
        per_hyp = (time.perf_counter() - t0) / max(len(cand), 1)
        return BenchRow(trace="", kind="", scheme=scheme,
                        wall_time_s=per_hyp * e.estimate, runs=[],
                        hypotheses_scanned=e.estimate, hypothesis_size=0,
                        estimated=True, n=int(index.component_mask.sum()),
                        m=index.m, stat_T=index.stat_T, stat_D=index.stat_D)


def vote007_run(selected, threshold, topo):
    table = vote_table(selected, topo)
    table.threshold = threshold
    return table.winners()


BENCH_CSV_HEADER = ("trace,kind,scheme,wall_time_s,hypotheses_scanned,"
                    "hypothesis_size,estimated,n,m,T,D")


def write_bench_csv(report: BenchReport, path) -> None:
    with open(path, "w") as f:
        f.write("# schema-version 1\n")
        f.write(BENCH_CSV_HEADER + "\n")
        for r in report.rows:
            f.write(f"{r.trace},{r.kind},{r.scheme},{r.wall_time_s!r},"
                    f"{r.hypotheses_scanned},{r.hypothesis_size},"
                    f"{int(r.estimated)},{r.n},{r.m},{r.stat_T},{r.stat_D}\n")
