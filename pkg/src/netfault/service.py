"""HTTP service exposing the toolkit: one endpoint per pipeline stage.

Heavy payloads (topologies, traces, hypotheses) stay on the filesystem; the
endpoints exchange paths plus small summaries, so a long-running deployment
can be driven by thin clients without shipping multi-hundred-MB traces over
the wire.  The bundled CLI is such a client; it mounts this app in-process by
default and targets a remote instance via --server.
"""

from __future__ import annotations

import glob as globmod
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, calibration, evalbench, inference, simulator, telemetry
from .model import ModelParams, parse_params, write_params
from .topology import (TopologyError, build_fat_tree, build_two_tier, omit_links,
                       parse_topology, write_topology)

app = FastAPI(title="netfault", version=__version__)


class HealthResponse(BaseModel):
    status: str
    version: str


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def _data_error(exc: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


def _load_topology(path: str):
    try:
        return parse_topology(path)
    except (OSError, TopologyError) as e:
        raise _data_error(e)


def _load_params(path: Optional[str], inline: Optional[dict]) -> ModelParams:
    try:
        if inline is not None:
            return ModelParams(**inline)
        if path is not None:
            return parse_params(path)
        return ModelParams()
    except (OSError, ValueError, TypeError) as e:
        raise _data_error(e)


# -- topology ------------------------------------------------------------------


class TopoGenRequest(BaseModel):
    kind: Literal["fat-tree", "two-tier"]
    k: int = 4
    hosts_per_tor: int = 1
    spines: int = 2
    leaves: int = 8
    hosts_per_leaf: int = 6
    omit_fraction: float = 0.0
    seed: int = 0
    out_path: str


class TopoGenResponse(BaseModel):
    out_path: str
    checksum: str
    devices: int
    hosts: int
    links: int


@app.post("/topology/generate", response_model=TopoGenResponse)
def topology_generate(req: TopoGenRequest) -> TopoGenResponse:
    try:
        if req.kind == "fat-tree":
            topo = build_fat_tree(req.k, req.hosts_per_tor)
        else:
            topo = build_two_tier(req.spines, req.leaves, req.hosts_per_leaf)
        if req.omit_fraction > 0:
            topo = omit_links(topo, req.omit_fraction, req.seed)
        checksum = write_topology(topo, req.out_path)
    except (TopologyError, OSError) as e:
        raise _data_error(e)
    return TopoGenResponse(out_path=req.out_path, checksum=checksum,
                           devices=len(topo.devices) - len(topo.hosts),
                           hosts=len(topo.hosts), links=len(topo.links))


# -- simulation ------------------------------------------------------------------


class ScenarioSpec(BaseModel):
    kind: Literal["silent_link_drops", "device_failure"]
    failures: list[tuple[int, float]]
    device_link_fraction: float = 1.0


class SimulateRequest(BaseModel):
    topo_path: str
    scenario_path: Optional[str] = None
    scenario: Optional[ScenarioSpec] = None
    pattern: Literal["uniform", "skewed"] = "uniform"
    flows: int = Field(default=10000, ge=0)
    probes: float = Field(default=0.0, ge=0.0)
    probe_packets: int = 100
    noise_drop_max: float = 1e-4
    seed: int = 0
    out_path: str


class SimulateResponse(BaseModel):
    out_path: str
    records: int
    app_flows: int
    probes: int
    failed_components: int


@app.post("/simulate", response_model=SimulateResponse)
def simulate_endpoint(req: SimulateRequest) -> SimulateResponse:
    topo = _load_topology(req.topo_path)
    try:
        if req.scenario is not None:
            scenario = simulator.FailureScenario(
                kind=req.scenario.kind, failures=list(req.scenario.failures),
                device_link_fraction=req.scenario.device_link_fraction)
        elif req.scenario_path is not None:
            scenario = simulator.parse_scenario(req.scenario_path)
        else:
            raise ValueError("either scenario or scenario_path is required")
        config = simulator.SimConfig(
            n_app_flows=req.flows, probe_rate=req.probes,
            probe_packets=req.probe_packets, noise_drop_max=req.noise_drop_max,
            seed=req.seed)
        trace = simulator.simulate(topo, scenario,
                                   simulator.TrafficPattern(kind=req.pattern), config)
        telemetry.write_trace(trace, req.out_path)
    except (ValueError, OSError) as e:
        raise _data_error(e)
    n_probe = sum(1 for r in trace.records if r.kind == telemetry.KIND_PROBE)
    return SimulateResponse(out_path=req.out_path, records=len(trace.records),
                            app_flows=len(trace.records) - n_probe, probes=n_probe,
                            failed_components=len(trace.ground_truth))


# -- inference ---------------------------------------------------------------------


class InferRequest(BaseModel):
    trace_path: str
    topo_path: str
    kind: str = "INT"
    params_path: Optional[str] = None
    params: Optional[dict] = None
    scheme: Literal["flock", "sherlock", "vote007"] = "flock"
    use_jle: bool = True
    sherlock_k: int = 2
    vote_threshold: float = 0.5
    per_flow: bool = False
    out_path: Optional[str] = None
    iterations_csv_path: Optional[str] = None


class InferResponse(BaseModel):
    components: list[int]
    added_order: list[int]
    class_findings: list[list[int]] = []
    reduced: bool = False
    iterations: int = 0
    hypotheses_scanned: int = 0
    wall_time_s: float = 0.0
    out_path: Optional[str] = None


@app.post("/infer", response_model=InferResponse)
def infer_endpoint(req: InferRequest) -> InferResponse:
    topo = _load_topology(req.topo_path)
    params = _load_params(req.params_path, req.params)
    try:
        trace = telemetry.parse_trace(req.trace_path, topo)
        if req.scheme == "flock":
            result = inference.infer(trace, topo, req.kind, params,
                                     use_jle=req.use_jle, per_flow=req.per_flow)
            comps = sorted(result.components)
            resp = InferResponse(
                components=comps, added_order=result.added_order,
                class_findings=[sorted(c) for c in result.class_findings],
                reduced=result.reduced, iterations=len(result.search.iterations),
                hypotheses_scanned=result.search.hypotheses_scanned,
                wall_time_s=result.search.wall_time_s)
            if req.iterations_csv_path:
                inference.write_iteration_csv(result.search, req.iterations_csv_path)
            classes = result.class_findings
        elif req.scheme == "sherlock":
            from .baselines import sherlock_search
            from .model import prior_vector
            selected = telemetry.select_input(trace, req.kind, topo)
            index = inference.build_flow_index(selected, topo)
            res = sherlock_search(index, params, prior_vector(topo, params),
                                  req.sherlock_k, use_jle=req.use_jle)
            comps = sorted(res.hypothesis)
            resp = InferResponse(components=comps, added_order=list(res.hypothesis),
                                 hypotheses_scanned=res.hypotheses_scanned,
                                 wall_time_s=res.wall_time_s)
            classes = None
        else:
            from .baselines import vote007
            selected = telemetry.select_input(trace, req.kind, topo)
            winners = vote007(selected, req.vote_threshold, topo)
            comps = sorted(winners)
            resp = InferResponse(components=comps, added_order=comps)
            classes = None
        if req.out_path:
            evalbench.write_hypothesis(comps, req.out_path, classes=classes)
            resp.out_path = req.out_path
    except (ValueError, OSError) as e:
        raise _data_error(e)
    return resp


# -- evaluation ---------------------------------------------------------------------


class EvaluateRequest(BaseModel):
    trace_path: str
    topo_path: str
    pred_path: Optional[str] = None
    components: Optional[list[int]] = None
    class_level: bool = False


class EvaluateResponse(BaseModel):
    precision: float
    recall: float
    fscore: float
    true_positives: float
    false_positives: float
    predicted: int
    truth_count: int
    class_precision: Optional[float] = None
    class_recall: Optional[float] = None


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate_endpoint(req: EvaluateRequest) -> EvaluateResponse:
    topo = _load_topology(req.topo_path)
    try:
        trace = telemetry.parse_trace(req.trace_path, topo)
        if req.components is not None:
            pred = list(req.components)
        elif req.pred_path is not None:
            pred = evalbench.parse_hypothesis(req.pred_path)
        else:
            raise ValueError("either components or pred_path is required")
        predicted_classes = None
        if req.class_level:
            classes = topo.equivalence_classes()
            class_of = {l: cls for cls in classes for l in cls}
            predicted_classes = sorted({class_of[c] for c in pred if c in class_of},
                                       key=min)
        rep = evalbench.score(pred, trace.ground_truth, topo,
                              predicted_classes=predicted_classes)
    except (ValueError, OSError) as e:
        raise _data_error(e)
    return EvaluateResponse(**rep.__dict__)


# -- calibration ---------------------------------------------------------------------


class GridSpec(BaseModel):
    p_g: list[float] = []
    p_b: list[float] = []
    rho: list[float] = []
    vote_thresholds: list[float] = []


class CalibrateRequest(BaseModel):
    scheme: Literal["flock", "sherlock", "vote007"]
    train_glob: str
    kind: str
    topo_path: str
    grid: Optional[GridSpec] = None
    sherlock_k: int = 2
    p_start: float = 0.98
    min_recall: float = 0.25
    out_params_path: Optional[str] = None
    frontier_csv_path: Optional[str] = None


class CalibrateResponse(BaseModel):
    params: Optional[dict] = None
    threshold: Optional[float] = None
    precision: float
    recall: float
    precision_floor: float
    frontier_size: int
    out_params_path: Optional[str] = None


@app.post("/calibrate", response_model=CalibrateResponse)
def calibrate_endpoint(req: CalibrateRequest) -> CalibrateResponse:
    topo = _load_topology(req.topo_path)
    try:
        paths = sorted(globmod.glob(req.train_glob))
        if not paths:
            raise ValueError(f"no training traces match {req.train_glob!r}")
        training = [(telemetry.parse_trace(p, topo), topo) for p in paths]
        if req.grid is not None and any(
                [req.grid.p_g, req.grid.p_b, req.grid.rho, req.grid.vote_thresholds]):
            grid = calibration.ParamGrid(p_g=req.grid.p_g, p_b=req.grid.p_b,
                                         rho=req.grid.rho,
                                         vote_thresholds=req.grid.vote_thresholds)
        else:
            grid = calibration.default_grid(req.scheme)
        frontier = calibration.grid_search(req.scheme, grid, training, req.kind,
                                           sherlock_k=req.sherlock_k)
        point, floor = calibration.choose_operating_point(
            frontier, p_start=req.p_start, min_recall=req.min_recall)
        if req.frontier_csv_path:
            calibration.write_frontier_csv(frontier, req.frontier_csv_path)
        resp = CalibrateResponse(precision=point.precision, recall=point.recall,
                                 precision_floor=floor, frontier_size=len(frontier))
        if isinstance(point.params, ModelParams):
            resp.params = {k: getattr(point.params, k) for k in
                           ("p_g", "p_b", "rho_link", "device_prior_log_factor",
                            "rtt_threshold_ms")}
            if req.out_params_path:
                write_params(point.params, req.out_params_path)
                resp.out_params_path = req.out_params_path
        else:
            resp.threshold = float(point.params)
    except (ValueError, OSError) as e:
        raise _data_error(e)
    return resp


# -- benchmarking -------------------------------------------------------------------


class BenchRequest(BaseModel):
    topo_path: str
    trace_paths: list[str]
    kinds: list[str] = ["INT"]
    params_path: Optional[str] = None
    params: Optional[dict] = None
    schemes: list[str] = list(evalbench.BENCH_SCHEMES)
    repeats: int = 3
    warmup: bool = True
    sherlock_k: int = 2
    scan_budget: int = 10 ** 8
    vote_threshold: float = 0.5
    out_csv_path: Optional[str] = None


class BenchRowModel(BaseModel):
    trace: str
    kind: str
    scheme: str
    wall_time_s: float
    hypotheses_scanned: int
    hypothesis_size: int
    estimated: bool
    n: int
    m: int
    stat_T: int
    stat_D: int


class BenchResponse(BaseModel):
    rows: list[BenchRowModel]
    out_csv_path: Optional[str] = None


@app.post("/bench", response_model=BenchResponse)
def bench_endpoint(req: BenchRequest) -> BenchResponse:
    topo = _load_topology(req.topo_path)
    params = _load_params(req.params_path, req.params)
    try:
        traces = [telemetry.parse_trace(p, topo) for p in req.trace_paths]
        report = evalbench.bench(topo, traces, req.kinds, params,
                                 schemes=tuple(req.schemes), repeats=req.repeats,
                                 warmup=req.warmup, sherlock_k=req.sherlock_k,
                                 scan_budget=req.scan_budget,
                                 vote_threshold=req.vote_threshold,
                                 trace_names=req.trace_paths)
        if req.out_csv_path:
            evalbench.write_bench_csv(report, req.out_csv_path)
    except (ValueError, OSError) as e:
        raise _data_error(e)
    rows = [BenchRowModel(trace=r.trace, kind=r.kind, scheme=r.scheme,
                          wall_time_s=r.wall_time_s,
                          hypotheses_scanned=r.hypotheses_scanned,
                          hypothesis_size=r.hypothesis_size, estimated=r.estimated,
                          n=r.n, m=r.m, stat_T=r.stat_T, stat_D=r.stat_D)
            for r in report.rows]
    return BenchResponse(rows=rows, out_csv_path=req.out_csv_path)
