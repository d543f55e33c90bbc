"""Flow-observation traces: file format, validation, and input-kind selection.

A trace is a plain text file:

    topo_checksum <hex>
    seed <int>
    scenario <tag>
    fail <component-id> <drop-rate>          # ground truth, one per failure
    flow <src> <dst> <t> <r> <probe|app> [rtt=<ms>] [path= <id> <id> ...]

``path=`` records the route the flow actually took (known for probes and for
path-traced telemetry); when absent, the ECMP set derived from the topology is
the only path information.  Ground truth lives in its own section so that
evaluation needs no side channel; inference code only ever sees the records
returned by ``select_input`` and cannot reach the ``fail`` lines.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .topology import PathSet, Topology, singleton_path_set

KIND_PROBE = "probe"
KIND_APP = "app"

BASE_KINDS = ("A1", "A2", "P", "INT")


class TraceError(ValueError):
    """Malformed trace content; the message carries the offending line."""


class NoUsableInput(ValueError):
    """The requested input kind needs data this trace does not carry."""


@dataclass(slots=True)
class FlowRecord:
    src: int
    dst: int
    t: int
    r: int
    kind: str
    path: tuple[int, ...] | None
    rtt_ms: float | None

    def flagged(self) -> bool:
        return self.r >= 1


@dataclass
class TraceFile:
    topo_checksum: str
    seed: int
    scenario: str
    ground_truth: list[tuple[int, float]] = field(default_factory=list)
    records: list[FlowRecord] = field(default_factory=list)


def parse_kind(kind: str) -> tuple[str, ...]:
    """Normalize an input-kind spec ("A2", "A1+P", ...) to base kinds."""
    parts = tuple(p.strip().upper() for p in kind.split("+") if p.strip())
    if not parts:
        raise ValueError("empty input kind")
    for p in parts:
        if p not in BASE_KINDS:
            raise ValueError(f"unknown input kind {p!r} (expected A1, A2, P or INT)")
    if "INT" in parts and len(parts) > 1:
        raise ValueError("INT cannot be combined with other kinds")
    return parts


def write_trace(trace: TraceFile, path) -> None:
    with open(path, "w") as f:
        f.write(format_trace(trace))


def format_trace(trace: TraceFile) -> str:
    lines = [
        f"topo_checksum {trace.topo_checksum}",
        f"seed {trace.seed}",
        f"scenario {trace.scenario}",
    ]
    for cid, rate in trace.ground_truth:
        lines.append(f"fail {cid} {rate!r}")
    for rec in trace.records:
        parts = [f"flow {rec.src} {rec.dst} {rec.t} {rec.r} {rec.kind}"]
        if rec.rtt_ms is not None:
            parts.append(f"rtt={rec.rtt_ms!r}")
        if rec.path is not None:
            parts.append("path= " + " ".join(str(c) for c in rec.path))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_trace(path, topo: Topology | None = None, validate_paths: bool = True) -> TraceFile:
    with open(path) as f:
        text = f.read()
    return parse_trace_text(text, topo, validate_paths=validate_paths)


def parse_trace_text(text: str, topo: Topology | None = None,
                     validate_paths: bool = True) -> TraceFile:
    """Parse and validate a trace. With a topology, component ids, r <= t and
    recorded paths are all checked; app-flow paths must be ECMP members."""
    header = {"topo_checksum": None, "seed": 0, "scenario": ""}
    truth: list[tuple[int, float]] = []
    records: list[FlowRecord] = []
    ecmp_members: dict[tuple[int, int], set] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "topo_checksum" and len(tok) == 2:
                header["topo_checksum"] = tok[1]
            elif tok[0] == "seed" and len(tok) == 2:
                header["seed"] = int(tok[1])
            elif tok[0] == "scenario" and len(tok) >= 2:
                header["scenario"] = " ".join(tok[1:])
            elif tok[0] == "fail" and len(tok) == 3:
                cid, rate = int(tok[1]), float(tok[2])
                if topo is not None and cid not in topo.devices and cid not in topo.links:
                    raise TraceError(f"line {lineno}: unknown component id {cid}")
                if not 0.0 < rate < 1.0:
                    raise TraceError(f"line {lineno}: drop rate {rate} outside (0,1)")
                truth.append((cid, rate))
            elif tok[0] == "flow":
                records.append(_parse_flow(tok, lineno, topo, ecmp_members, validate_paths))
            else:
                raise TraceError(f"line {lineno}: unrecognized record {tok[0]!r}")
        except TraceError:
            raise
        except ValueError as e:
            raise TraceError(f"line {lineno}: {e}") from None
    if header["topo_checksum"] is None:
        raise TraceError("missing topo_checksum header")
    if topo is not None and header["topo_checksum"] != topo.checksum():
        raise TraceError("trace topo_checksum does not match the loaded topology")
    return TraceFile(topo_checksum=header["topo_checksum"], seed=header["seed"],
                     scenario=header["scenario"], ground_truth=truth, records=records)


def _parse_flow(tok, lineno, topo, ecmp_members, validate_paths) -> FlowRecord:
    if len(tok) < 6:
        raise TraceError(f"line {lineno}: truncated flow record")
    src, dst, t, r = int(tok[1]), int(tok[2]), int(tok[3]), int(tok[4])
    kind = tok[5]
    if kind not in (KIND_PROBE, KIND_APP):
        raise TraceError(f"line {lineno}: flow kind must be probe or app, got {kind!r}")
    if t < 0 or r < 0:
        raise TraceError(f"line {lineno}: negative packet count")
    if r > t:
        raise TraceError(f"line {lineno}: bad packets {r} exceed packets sent {t}")
    rtt = None
    path = None
    i = 6
    while i < len(tok):
        if tok[i].startswith("rtt="):
            rtt = float(tok[i][4:])
            if rtt < 0:
                raise TraceError(f"line {lineno}: negative rtt")
            i += 1
        elif tok[i] == "path=":
            path = tuple(int(x) for x in tok[i + 1:])
            i = len(tok)
        else:
            raise TraceError(f"line {lineno}: unrecognized field {tok[i]!r}")
    if kind == KIND_PROBE and path is None:
        raise TraceError(f"line {lineno}: probe record without a recorded path")
    if topo is not None:
        for d in (src, dst):
            if d not in topo.devices:
                raise TraceError(f"line {lineno}: unknown endpoint {d}")
        if path is not None and validate_paths:
            _validate_path(src, dst, kind, path, topo, lineno, ecmp_members)
    return FlowRecord(src=src, dst=dst, t=t, r=r, kind=kind, path=path, rtt_ms=rtt)


def _validate_path(src, dst, kind, path, topo, lineno, ecmp_members):
    for c in path:
        if c not in topo.links and c not in topo.devices:
            raise TraceError(f"line {lineno}: unknown component id {c} on path")
    if kind == KIND_APP:
        key = (src, dst)
        members = ecmp_members.get(key)
        if members is None:
            members = set(topo.ecmp_paths(src, dst).paths)
            ecmp_members[key] = members
        if path not in members:
            raise TraceError(f"line {lineno}: recorded path is not an ECMP path of ({src},{dst})")
    else:
        # probes may target switches; check the walk is structurally sound
        at = src
        expect_link = True
        for c in path:
            if expect_link:
                if c not in topo.links:
                    raise TraceError(f"line {lineno}: probe path expects a link at {c}")
                a, b = topo.links[c]
                if at not in (a, b):
                    raise TraceError(f"line {lineno}: probe path link {c} does not touch {at}")
                at = b if at == a else a
            else:
                if c != at:
                    raise TraceError(f"line {lineno}: probe path device {c} out of sequence")
            expect_link = not expect_link
        if at != dst:
            raise TraceError(f"line {lineno}: probe path does not end at {dst}")


# -- selection ----------------------------------------------------------------


def select_input(trace: TraceFile, kind: str, topo: Topology) -> list[tuple[FlowRecord, PathSet]]:
    """Pair records with the path knowledge the given monitoring kind provides.

    A1:  active probes only, exact recorded paths.
    A2:  application flows with >= 1 bad packet, exact recorded paths.
    P:   all application flows, full ECMP path set (recorded path suppressed).
    INT: every record with its exact recorded path.

    Compound kinds ("A1+P", "A2+P", "A1+A2+P") take the union; a record picked
    with an exact path by one selection is not re-added with the diffuse ECMP
    set by P, so no flow's packets are counted twice.
    """
    kinds = parse_kind(kind)
    out: list[tuple[FlowRecord, PathSet]] = []
    if kinds == ("INT",):
        for rec in trace.records:
            out.append((rec, _known_path_set(rec, trace)))
        return out

    want_a1 = "A1" in kinds
    want_a2 = "A2" in kinds
    want_p = "P" in kinds
    if want_a1:
        probes = [r for r in trace.records if r.kind == KIND_PROBE]
        if not probes:
            raise NoUsableInput("kind A1 requested but the trace has no probe records")
        out.extend((r, _known_path_set(r, trace)) for r in probes)
    for rec in trace.records:
        if rec.kind != KIND_APP:
            continue
        if want_a2 and rec.flagged():
            out.append((rec, _known_path_set(rec, trace)))
        elif want_p:
            out.append((rec, topo.ecmp_paths(rec.src, rec.dst)))
    if want_p and not any(r.kind == KIND_APP for r in trace.records) and trace.records:
        raise NoUsableInput("kind P requested but the trace has no application records")
    return out


def _known_path_set(rec: FlowRecord, trace: TraceFile) -> PathSet:
    if rec.path is None:
        raise NoUsableInput(
            f"record ({rec.src}->{rec.dst}) has no recorded path; "
            "this trace cannot serve a path-traced input kind")
    return singleton_path_set(rec.src, rec.dst, rec.path)


def per_flow_binarize(records: list[FlowRecord], rtt_threshold_ms: float) -> list[FlowRecord]:
    """Rewrite records for per-flow analysis: t=1, r=1 iff rtt exceeds the
    threshold (strictly)."""
    out = []
    for rec in records:
        if rec.rtt_ms is None:
            raise TraceError("per-flow analysis requires rtt_ms on every record")
        out.append(replace(rec, t=1, r=1 if rec.rtt_ms > rtt_threshold_ms else 0))
    return out


def downsample(trace: TraceFile, fraction: float, seed: int) -> TraceFile:
    """Uniform random record filter, applied before selection."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = rng.random(len(trace.records)) < fraction
    records = [r for r, k in zip(trace.records, keep) if k]
    return TraceFile(topo_checksum=trace.topo_checksum, seed=trace.seed,
                     scenario=trace.scenario, ground_truth=list(trace.ground_truth),
                     records=records)
