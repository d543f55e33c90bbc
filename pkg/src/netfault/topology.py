"""Data-center topologies: Clos generators, ECMP path sets, link equivalence classes.

Components live in a single dense integer id namespace shared by devices and
links.  Hosts are devices too, but they are observation points rather than
failure suspects, so they are excluded from the component set that inference
ranges over.  Paths are ordered component sequences: the source host's uplink,
then alternating transit devices and links, ending at the destination host's
uplink (endpoint hosts themselves never appear on a path).

Generated id layout (documented because trace/topology files depend on it):

  fat_tree(k, hosts_per_tor):
      cores            0 .. (k/2)^2 - 1
      aggs (pod-major) then tors (pod-major) then hosts (tor-major)
      links: tor->agg (pod, tor, agg order), agg->core (pod, agg, core order),
             host uplinks (host order)

  two_tier(spines, leaves, hosts_per_leaf):
      spines (tier core), leaves (tier tor), hosts; links: leaf->spine
      (leaf-major), then host uplinks.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

TIER_HOST = "host"
TIER_TOR = "tor"
TIER_AGG = "agg"
TIER_CORE = "core"
TIERS = (TIER_HOST, TIER_TOR, TIER_AGG, TIER_CORE)


class TopologyError(ValueError):
    """Malformed topology input or an operation violating its preconditions."""


@dataclass
class PathSet:
    """All equal-cost paths between one pair of endpoints.

    ``paths`` is canonically ordered (lexicographic by component-id sequence)
    so the path count w and path indices are stable across runs.  ``group_key``
    is a cheap hashable identity used to pool identical path sets: path sets
    of the two directions of one host pair carry the same key because their
    component membership is identical.
    """

    src: int
    dst: int
    paths: list[tuple[int, ...]]
    group_key: tuple = None

    @property
    def width(self) -> int:
        return len(self.paths)

    def member_set(self) -> frozenset[int]:
        return frozenset(c for p in self.paths for c in p)


def singleton_path_set(src: int, dst: int, path: tuple[int, ...]) -> PathSet:
    """A one-path set for telemetry that recorded the exact route."""
    rev = tuple(reversed(path))
    key = ("path", min(path, rev))
    return PathSet(src=src, dst=dst, paths=[tuple(path)], group_key=key)


class Topology:
    """Immutable after construction; safe to share read-only across threads."""

    def __init__(self, devices: dict[int, str], links: dict[int, tuple[int, int]]):
        self.devices = dict(devices)
        self.links = dict(links)
        self._validate()
        self.hosts = sorted(d for d, t in self.devices.items() if t == TIER_HOST)
        self.n_ids = 1 + max(max(self.devices, default=0), max(self.links, default=0))
        # adjacency: device -> sorted [(link_id, peer_device)]
        adj: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for lid, (a, b) in self.links.items():
            adj[a].append((lid, b))
            adj[b].append((lid, a))
        self.adjacency = {d: sorted(e, key=lambda x: (x[1], x[0])) for d, e in adj.items()}
        self._dist_cache: dict[int, np.ndarray] = {}
        self._path_cache: dict[tuple[int, int], PathSet] = {}
        self._class_cache: list[frozenset[int]] | None = None

    def _validate(self):
        dup = set(self.devices) & set(self.links)
        if dup:
            raise TopologyError(f"ids used for both a device and a link: {sorted(dup)[:5]}")
        for lid, (a, b) in self.links.items():
            if a == b:
                raise TopologyError(f"link {lid} is a self-loop on device {a}")
            if a not in self.devices or b not in self.devices:
                raise TopologyError(f"link {lid} references unknown device")
        for d, t in self.devices.items():
            if t not in TIERS:
                raise TopologyError(f"device {d} has unknown tier {t!r}")

    # -- component helpers -------------------------------------------------

    def is_link(self, cid: int) -> bool:
        return cid in self.links

    def is_device_component(self, cid: int) -> bool:
        return cid in self.devices and self.devices[cid] != TIER_HOST

    def component_ids(self) -> list[int]:
        """Links plus non-host devices, sorted. The inference search space."""
        comps = [d for d, t in self.devices.items() if t != TIER_HOST]
        comps.extend(self.links)
        return sorted(comps)

    def component_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_ids, dtype=bool)
        mask[self.component_ids()] = True
        return mask

    def device_kind_mask(self) -> np.ndarray:
        """True where the id is a (non-host) device, over the full id range."""
        mask = np.zeros(self.n_ids, dtype=bool)
        for d, t in self.devices.items():
            if t != TIER_HOST:
                mask[d] = True
        return mask

    def host_uplink(self, host: int) -> int:
        edges = self.adjacency.get(host, [])
        if len(edges) != 1:
            raise TopologyError(f"host {host} has {len(edges)} links, expected exactly 1")
        return edges[0][0]

    def tor_of(self, host: int) -> int:
        edges = self.adjacency.get(host, [])
        if not edges:
            raise TopologyError(f"host {host} has no uplink")
        return edges[0][1]

    def links_of_device(self, dev: int) -> list[int]:
        return sorted(l for l, _ in self.adjacency.get(dev, []))

    def inter_switch_links(self) -> list[int]:
        return sorted(
            l
            for l, (a, b) in self.links.items()
            if self.devices[a] != TIER_HOST and self.devices[b] != TIER_HOST
        )

    # -- serialization -----------------------------------------------------

    def serialize(self) -> str:
        lines = ["# netfault topology v1"]
        for d in sorted(self.devices):
            if self.devices[d] != TIER_HOST:
                lines.append(f"device {d} {self.devices[d]}")
        for h in self.hosts:
            lines.append(f"host {h} {self.adjacency[h][0][1] if self.adjacency.get(h) else -1}")
        for l in sorted(self.links):
            a, b = self.links[l]
            lines.append(f"link {l} {a} {b}")
        return "\n".join(lines) + "\n"

    def checksum(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    # -- routing -----------------------------------------------------------

    def _bfs(self, root: int) -> np.ndarray:
        cached = self._dist_cache.get(root)
        if cached is not None:
            return cached
        dist = np.full(self.n_ids, -1, dtype=np.int32)
        dist[root] = 0
        frontier = [root]
        while frontier:
            nxt = []
            for u in frontier:
                du = dist[u]
                for _, v in self.adjacency.get(u, []):
                    if dist[v] < 0:
                        dist[v] = du + 1
                        nxt.append(v)
            frontier = nxt
        self._dist_cache[root] = dist
        return dist

    def shortest_paths(self, src: int, dst: int, include_dst_device: bool) -> list[tuple[int, ...]]:
        """All shortest paths src->dst as component sequences.

        Endpoint hosts are excluded from the sequence; a non-host destination
        (e.g. a probed core switch) is included when include_dst_device is set.
        Parallel links yield distinct paths.
        """
        dist_s = self._bfs(src)
        dist_d = self._bfs(dst)
        total = dist_s[dst]
        if total < 0:
            raise TopologyError(f"no path between {src} and {dst}")
        paths: list[tuple[int, ...]] = []
        comps: list[int] = []

        def extend(u: int, depth: int):
            if u == dst:
                paths.append(tuple(comps))
                return
            for lid, v in self.adjacency[u]:
                if dist_s[v] == depth + 1 and dist_d[v] == total - depth - 1:
                    comps.append(lid)
                    is_endpoint = v == dst
                    if not is_endpoint or include_dst_device:
                        comps.append(v)
                        extend(v, depth + 1)
                        comps.pop()
                    else:
                        extend(v, depth + 1)
                    comps.pop()

        extend(src, 0)
        paths.sort()
        return paths

    def ecmp_paths(self, src: int, dst: int) -> PathSet:
        """ECMP path set between two hosts (cached per ordered pair)."""
        cached = self._path_cache.get((src, dst))
        if cached is not None:
            return cached
        if src == dst:
            raise TopologyError("src and dst must differ")
        if self.devices.get(src) != TIER_HOST or self.devices.get(dst) != TIER_HOST:
            raise TopologyError("ecmp_paths endpoints must be hosts")
        paths = self.shortest_paths(src, dst, include_dst_device=False)
        ps = PathSet(src=src, dst=dst, paths=paths,
                     group_key=("ecmp", min(src, dst), max(src, dst)))
        self._path_cache[(src, dst)] = ps
        return ps

    def probe_paths(self, host: int, core: int) -> list[tuple[int, ...]]:
        """Shortest up-paths host->switch used by active probing; the probed
        switch itself is part of the sequence (it is a suspect like any
        transit device)."""
        if self.devices.get(host) != TIER_HOST:
            raise TopologyError("probe source must be a host")
        if self.devices.get(core) == TIER_HOST:
            raise TopologyError("probe target must be a switch")
        return self.shortest_paths(host, core, include_dst_device=True)

    # -- equivalence classes -------------------------------------------------

    def equivalence_classes(self) -> list[frozenset[int]]:
        """Partition links by how they appear across all host-pair path sets.

        The signature records, per path set, how many of its paths carry the
        link; two links are interchangeable to a passive observer only if
        those profiles agree everywhere.  (Pure membership is not enough: with
        one host per rack the host uplink lies on every path where a ToR
        uplink lies on a fraction, and they must not share a class.)  Links no
        path set covers stay in singleton classes: sharing a class would imply
        shared evidence where there is none.
        """
        if self._class_cache is not None:
            return self._class_cache
        sig: dict[int, list[tuple[int, int]]] = defaultdict(list)
        hosts = self.hosts
        pair_idx = 0
        for i, a in enumerate(hosts):
            for b in hosts[i + 1:]:
                counts: dict[int, int] = defaultdict(int)
                for path in self.ecmp_paths(a, b).paths:
                    for c in set(path):
                        if c in self.links:
                            counts[c] += 1
                for c, k in counts.items():
                    sig[c].append((pair_idx, k))
                pair_idx += 1
        groups: dict[tuple, list[int]] = defaultdict(list)
        for l in self.links:
            s = sig.get(l)
            key = tuple(s) if s else ("uncovered", l)
            groups[key].append(l)
        classes = [frozenset(v) for v in groups.values()]
        classes.sort(key=min)
        self._class_cache = classes
        return classes


@dataclass
class ReducedTopology:
    """Link equivalence classes collapsed to one reduced link each.

    Reduced paths keep only link classes (transit devices are dropped: on a
    symmetric Clos they would otherwise keep collapsed paths distinct, while
    passive path-set-only evidence cannot tell them apart).  A hypothesis over
    reduced links reads as "at least one member of the class failed";
    conservatively it is expanded as a single-link failure per class.
    """

    classes: list[frozenset[int]]
    class_of: dict[int, int]
    base_checksum: str

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def reduce_path(self, path: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(self.class_of[c] for c in path if c in self.class_of)

    def reduce_path_set(self, ps: PathSet) -> PathSet:
        seen, reduced = set(), []
        for p in ps.paths:
            rp = self.reduce_path(p)
            if rp not in seen:
                seen.add(rp)
                reduced.append(rp)
        reduced.sort()
        key = ("reduced",) + (ps.group_key if ps.group_key else (ps.src, ps.dst))
        return PathSet(src=ps.src, dst=ps.dst, paths=reduced, group_key=key)

    def expand(self, class_index: int) -> frozenset[int]:
        return self.classes[class_index]


def reduced_topology(topo: Topology) -> tuple[ReducedTopology, dict[int, frozenset[int]]]:
    """Reduced inference space plus the class-index -> member-links mapping."""
    classes = topo.equivalence_classes()
    class_of = {l: i for i, cls in enumerate(classes) for l in cls}
    red = ReducedTopology(classes=classes, class_of=class_of, base_checksum=topo.checksum())
    return red, {i: cls for i, cls in enumerate(classes)}


# -- generators -------------------------------------------------------------


def build_fat_tree(k: int, hosts_per_tor: int) -> Topology:
    """Standard 3-tier k-ary fat-tree with hosts_per_tor hosts per ToR.

    Oversubscription is modeled purely through hosts_per_tor; the switch
    wiring is the textbook full fat-tree.
    """
    if k < 2 or k % 2 != 0:
        raise TopologyError(f"fat-tree degree k must be even and >= 2, got {k}")
    if hosts_per_tor < 1:
        raise TopologyError("hosts_per_tor must be >= 1")
    half = k // 2
    n_core = half * half
    n_agg = k * half
    n_tor = k * half

    devices: dict[int, str] = {}
    for c in range(n_core):
        devices[c] = TIER_CORE
    agg0 = n_core
    for i in range(n_agg):
        devices[agg0 + i] = TIER_AGG
    tor0 = agg0 + n_agg
    for i in range(n_tor):
        devices[tor0 + i] = TIER_TOR
    host0 = tor0 + n_tor
    for i in range(n_tor * hosts_per_tor):
        devices[host0 + i] = TIER_HOST

    links: dict[int, tuple[int, int]] = {}
    lid = host0 + n_tor * hosts_per_tor
    for p in range(k):
        for t in range(half):
            tor = tor0 + p * half + t
            for a in range(half):
                links[lid] = (tor, agg0 + p * half + a)
                lid += 1
    for p in range(k):
        for a in range(half):
            agg = agg0 + p * half + a
            for j in range(half):
                links[lid] = (agg, a * half + j)
                lid += 1
    for t in range(n_tor):
        for h in range(hosts_per_tor):
            links[lid] = (host0 + t * hosts_per_tor + h, tor0 + t)
            lid += 1
    return Topology(devices, links)


def build_two_tier(spines: int, leaves: int, hosts_per_leaf: int) -> Topology:
    """2-tier Clos: every leaf wired to every spine."""
    if spines < 1 or leaves < 1 or hosts_per_leaf < 1:
        raise TopologyError("two-tier arguments must all be >= 1")
    devices: dict[int, str] = {}
    for s in range(spines):
        devices[s] = TIER_CORE
    leaf0 = spines
    for l in range(leaves):
        devices[leaf0 + l] = TIER_TOR
    host0 = leaf0 + leaves
    for h in range(leaves * hosts_per_leaf):
        devices[host0 + h] = TIER_HOST
    links: dict[int, tuple[int, int]] = {}
    lid = host0 + leaves * hosts_per_leaf
    for l in range(leaves):
        for s in range(spines):
            links[lid] = (leaf0 + l, s)
            lid += 1
    for l in range(leaves):
        for h in range(hosts_per_leaf):
            links[lid] = (host0 + l * hosts_per_leaf + h, leaf0 + l)
            lid += 1
    return Topology(devices, links)


def omit_links(topo: Topology, fraction: float, seed: int, max_tries: int = 200) -> Topology:
    """Remove floor(fraction * inter-switch links) links uniformly at random.

    Host uplinks are never removed; samples that would disconnect any host
    from the rest are redrawn.  Removed link ids simply disappear; surviving
    ids are unchanged so traces stay interpretable across the mutation.
    """
    if not 0.0 <= fraction <= 1.0:
        raise TopologyError("fraction must be in [0, 1]")
    candidates = topo.inter_switch_links()
    n_remove = int(np.floor(fraction * len(candidates)))
    if n_remove == 0:
        return Topology(topo.devices, topo.links)
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(max_tries):
        drop = set(rng.choice(len(candidates), size=n_remove, replace=False).tolist())
        keep = {l: ab for l, ab in topo.links.items()
                if l not in {candidates[i] for i in drop}}
        if _hosts_connected(topo, keep):
            return Topology(topo.devices, keep)
    raise TopologyError(
        f"could not remove {n_remove} links without disconnecting a host "
        f"after {max_tries} samples")


def _hosts_connected(topo: Topology, links: dict[int, tuple[int, int]]) -> bool:
    if len(topo.hosts) <= 1:
        return True
    adj = defaultdict(list)
    for a, b in links.values():
        adj[a].append(b)
        adj[b].append(a)
    seen = {topo.hosts[0]}
    stack = [topo.hosts[0]]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return all(h in seen for h in topo.hosts)


# -- file format --------------------------------------------------------------


def write_topology(topo: Topology, path) -> str:
    text = topo.serialize()
    with open(path, "w") as f:
        f.write(text)
    return hashlib.sha256(text.encode()).hexdigest()


def parse_topology(path) -> Topology:
    with open(path) as f:
        text = f.read()
    return parse_topology_text(text)


def parse_topology_text(text: str) -> Topology:
    devices: dict[int, str] = {}
    links: dict[int, tuple[int, int]] = {}
    host_tor: dict[int, int] = {}
    seen_ids: set[int] = set()

    def claim(i: int, lineno: int):
        if i < 0:
            raise TopologyError(f"line {lineno}: negative id {i}")
        if i in seen_ids:
            raise TopologyError(f"line {lineno}: duplicate id {i}")
        seen_ids.add(i)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "device" and len(tok) == 3:
                i = int(tok[1])
                claim(i, lineno)
                if tok[2] not in TIERS or tok[2] == TIER_HOST:
                    raise TopologyError(f"line {lineno}: bad tier {tok[2]!r}")
                devices[i] = tok[2]
            elif tok[0] == "host" and len(tok) == 3:
                i = int(tok[1])
                claim(i, lineno)
                devices[i] = TIER_HOST
                host_tor[i] = int(tok[2])
            elif tok[0] == "link" and len(tok) == 4:
                i = int(tok[1])
                claim(i, lineno)
                links[i] = (int(tok[2]), int(tok[3]))
            else:
                raise TopologyError(f"line {lineno}: unrecognized record {tok[0]!r}")
        except ValueError as e:
            raise TopologyError(f"line {lineno}: {e}") from None
    topo = Topology(devices, links)
    for h, t in host_tor.items():
        if t >= 0 and t not in topo.devices:
            raise TopologyError(f"host {h} names unknown tor {t}")
    return topo
