"""Network description, validation and the integer structure matrices.

All matrices are indexed in file order: inner nodes as listed, pipes as
listed, sources as listed.  Structure matrices are stored as ``int64``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class NetworkError(ValueError):
    """Raised when a network violates the structural assumptions."""


@dataclass(frozen=True)
class FluidProperties:
    rho: float = 998.5986
    eta: float = 1.0526e-3
    g: float = 9.81

    def __post_init__(self):
        for name in ("rho", "eta", "g"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise NetworkError(f"fluid property {name} must be positive, got {value!r}")


@dataclass(frozen=True)
class InnerNode:
    id: str
    elevation: float = 0.0


@dataclass(frozen=True)
class SourceNode:
    id: str


@dataclass(frozen=True)
class Pipe:
    id: str
    from_node: str
    to_node: str
    length: float
    diameter: float
    roughness: float | None = None
    minor_loss: float = 0.0


@dataclass(frozen=True)
class TopologyMatrices:
    """Incidence ``A`` (inner x pipes), cycle basis ``S`` and source incidence ``C_s``."""

    A: np.ndarray
    S: np.ndarray
    C_s: np.ndarray


@dataclass(frozen=True)
class Network:
    inner_nodes: tuple[InnerNode, ...]
    source_nodes: tuple[SourceNode, ...]
    pipes: tuple[Pipe, ...]
    fluid: FluidProperties = field(default_factory=FluidProperties)

    def __post_init__(self):
        object.__setattr__(self, "inner_nodes", tuple(self.inner_nodes))
        object.__setattr__(self, "source_nodes", tuple(self.source_nodes))
        object.__setattr__(self, "pipes", tuple(self.pipes))

    @property
    def n_j(self) -> int:
        return len(self.inner_nodes)

    @property
    def n_s(self) -> int:
        return len(self.source_nodes)

    @property
    def n_pipes(self) -> int:
        return len(self.pipes)

    @cached_property
    def inner_index(self) -> dict[str, int]:
        return {node.id: i for i, node in enumerate(self.inner_nodes)}

    @cached_property
    def source_index(self) -> dict[str, int]:
        return {node.id: i for i, node in enumerate(self.source_nodes)}

    @cached_property
    def pipe_index(self) -> dict[str, int]:
        return {pipe.id: i for i, pipe in enumerate(self.pipes)}

    @property
    def inner_ids(self) -> list[str]:
        return [n.id for n in self.inner_nodes]

    @property
    def source_ids(self) -> list[str]:
        return [n.id for n in self.source_nodes]

    @property
    def pipe_ids(self) -> list[str]:
        return [p.id for p in self.pipes]

    @cached_property
    def elevations(self) -> np.ndarray:
        return np.array([n.elevation for n in self.inner_nodes], dtype=float)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([p.length for p in self.pipes], dtype=float)

    @cached_property
    def diameters(self) -> np.ndarray:
        return np.array([p.diameter for p in self.pipes], dtype=float)

    @property
    def roughness(self) -> np.ndarray:
        """Pipe roughness in m; raises if any pipe has none."""
        missing = [p.id for p in self.pipes if p.roughness is None]
        if missing:
            raise NetworkError(f"pipes without roughness: {', '.join(missing)}")
        return np.array([p.roughness for p in self.pipes], dtype=float)

    def neighbors(self, node_id: str) -> list[str]:
        """Adjacent node ids (inner or source), in pipe order, without duplicates."""
        out: list[str] = []
        for p in self.pipes:
            other = None
            if p.from_node == node_id:
                other = p.to_node
            elif p.to_node == node_id:
                other = p.from_node
            if other is not None and other not in out:
                out.append(other)
        return out

    def with_roughness(self, roughness) -> Network:
        rough = np.asarray(roughness, dtype=float)
        if rough.shape != (self.n_pipes,):
            raise NetworkError(f"expected {self.n_pipes} roughness values, got {rough.shape}")
        pipes = tuple(
            Pipe(p.id, p.from_node, p.to_node, p.length, p.diameter, float(r), p.minor_loss)
            for p, r in zip(self.pipes, rough)
        )
        return Network(self.inner_nodes, self.source_nodes, pipes, self.fluid)

    @cached_property
    def topology(self) -> TopologyMatrices:
        A, C_s = build_incidence(self)
        return TopologyMatrices(A=A, S=build_cycle_basis(self, A), C_s=C_s)


@dataclass(frozen=True)
class SensorConfig:
    """Pressure sensors at an ordered subset of the inner nodes."""

    measured_nodes: tuple[str, ...]
    unmeasured_nodes: tuple[str, ...]
    C_h: np.ndarray
    C_h_bar: np.ndarray

    @property
    def n_p(self) -> int:
        return len(self.measured_nodes)

    @property
    def measured_idx(self) -> np.ndarray:
        return np.argmax(self.C_h, axis=1)

    @property
    def unmeasured_idx(self) -> np.ndarray:
        return np.argmax(self.C_h_bar, axis=1)


def sensor_config(net: Network, measured) -> SensorConfig:
    measured = tuple(str(m) for m in measured)
    index = net.inner_index
    unknown = [m for m in measured if m not in index]
    if unknown:
        raise NetworkError(f"sensor nodes are not inner nodes: {', '.join(unknown)}")
    if len(set(measured)) != len(measured):
        raise NetworkError("duplicate sensor node")
    if not measured:
        raise NetworkError("at least one pressure sensor is required")
    if len(measured) >= net.n_j:
        raise NetworkError(
            f"{len(measured)} sensors on {net.n_j} inner nodes: at least one node must be unmeasured"
        )
    unmeasured = tuple(n for n in net.inner_ids if n not in measured)
    C_h = np.zeros((len(measured), net.n_j), dtype=np.int64)
    for row, node in enumerate(measured):
        C_h[row, index[node]] = 1
    C_h_bar = np.zeros((len(unmeasured), net.n_j), dtype=np.int64)
    for row, node in enumerate(unmeasured):
        C_h_bar[row, index[node]] = 1
    return SensorConfig(measured, unmeasured, C_h, C_h_bar)


def validate_network(net: Network) -> list[str]:
    """Return human-readable violations; an empty list means the network is usable."""
    problems: list[str] = []
    inner = [n.id for n in net.inner_nodes]
    sources = [n.id for n in net.source_nodes]
    all_ids = inner + sources
    if len(set(inner)) != len(inner) or len(set(sources)) != len(sources):
        problems.append("duplicate node id")
    overlap = set(inner) & set(sources)
    if overlap:
        problems.append(f"node ids both inner and source: {', '.join(sorted(overlap))}")
    if not sources:
        problems.append("no source node (at least one fixed-head source is required)")
    if not inner:
        problems.append("no inner node")
    pipe_ids = [p.id for p in net.pipes]
    if len(set(pipe_ids)) != len(pipe_ids):
        problems.append("duplicate pipe id")

    known = set(all_ids)
    for p in net.pipes:
        for end in (p.from_node, p.to_node):
            if end not in known:
                problems.append(f"pipe {p.id}: unknown node {end!r}")
        if p.from_node == p.to_node:
            problems.append(f"pipe {p.id}: self-loop at node {p.from_node!r}")
        if not (p.length > 0 and math.isfinite(p.length)):
            problems.append(f"pipe {p.id}: length must be positive")
        if not (p.diameter > 0 and math.isfinite(p.diameter)):
            problems.append(f"pipe {p.id}: diameter must be positive")
        if p.roughness is not None and not (p.roughness >= 0 and math.isfinite(p.roughness)):
            problems.append(f"pipe {p.id}: roughness must be non-negative")
        if p.minor_loss != 0:
            problems.append(f"pipe {p.id}: minor losses are not supported (must be 0)")

    if all_ids and not any("unknown node" in m for m in problems):
        adj: dict[str, set[str]] = {n: set() for n in all_ids}
        for p in net.pipes:
            adj[p.from_node].add(p.to_node)
            adj[p.to_node].add(p.from_node)
        seen = {all_ids[0]}
        queue = deque([all_ids[0]])
        while queue:
            for nxt in adj[queue.popleft()]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        if len(seen) != len(known):
            rest = sorted(known - seen)
            problems.append(f"network is disconnected (unreachable: {', '.join(rest)})")
    return problems


def _require_valid(net: Network) -> None:
    problems = validate_network(net)
    if problems:
        raise NetworkError("; ".join(problems))


def build_incidence(net: Network) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A, C_s)``.

    ``A[k, j] = +1`` if pipe ``j`` flows into inner node ``k`` and ``-1`` if it
    leaves it; ``C_s[j, s] = +1`` if pipe ``j`` leaves source ``s``.
    """
    _require_valid(net)
    A = np.zeros((net.n_j, net.n_pipes), dtype=np.int64)
    C_s = np.zeros((net.n_pipes, net.n_s), dtype=np.int64)
    inner, src = net.inner_index, net.source_index
    for j, p in enumerate(net.pipes):
        if p.to_node in inner:
            A[inner[p.to_node], j] = 1
        else:
            C_s[j, src[p.to_node]] = -1
        if p.from_node in inner:
            A[inner[p.from_node], j] = -1
        else:
            C_s[j, src[p.from_node]] = 1
    return A, C_s


_SUPER = object()


def build_cycle_basis(net: Network, A: np.ndarray | None = None) -> np.ndarray:
    """Fundamental cycles of a BFS spanning tree with all sources merged into one vertex.

    Each non-tree pipe yields one row; paths between two sources show up as
    cycles through the merged vertex.  Row entries are +1 where the cycle runs
    along the pipe direction and -1 against it.
    """
    _require_valid(net)

    def vertex(node_id):
        return _SUPER if node_id in net.source_index else node_id

    adj: dict[object, list[tuple[object, int]]] = {_SUPER: []}
    for n in net.inner_ids:
        adj[n] = []
    for j, p in enumerate(net.pipes):
        a, b = vertex(p.from_node), vertex(p.to_node)
        if a is b:
            continue  # source-to-source pipe, always a chord
        adj[a].append((b, j))
        adj[b].append((a, j))

    parent: dict[object, tuple[object, int] | None] = {_SUPER: None}
    depth = {_SUPER: 0}
    queue = deque([_SUPER])
    tree = set()
    while queue:
        u = queue.popleft()
        for v, j in adj[u]:
            if v not in parent:
                parent[v] = (u, j)
                depth[v] = depth[u] + 1
                tree.add(j)
                queue.append(v)

    rows = []
    for j, p in enumerate(net.pipes):
        if j in tree:
            continue
        row = np.zeros(net.n_pipes, dtype=np.int64)
        a, b = vertex(p.from_node), vertex(p.to_node)
        row[j] = 1  # traverse the chord a -> b, then return b -> a through the tree
        if a is not b:
            u, w = b, a
            # climb both ends to their lowest common ancestor
            while u is not w:
                if depth[u] >= depth[w]:
                    up, jj = parent[u]
                    row[jj] += 1 if vertex(net.pipes[jj].from_node) == u else -1
                    u = up
                else:
                    up, jj = parent[w]
                    row[jj] -= 1 if vertex(net.pipes[jj].from_node) == w else -1
                    w = up
        rows.append(row)
    if not rows:
        return np.zeros((0, net.n_pipes), dtype=np.int64)
    return np.vstack(rows)


def min_measurement_sets(n_pipes: int, n_sensors: int) -> int:
    """Smallest number of loading conditions giving at least as many equations as unknowns."""
    if n_sensors < 1:
        raise ValueError("at least one pressure sensor is required")
    return -(-int(n_pipes) // int(n_sensors))
