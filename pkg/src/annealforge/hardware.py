"""Chimera and Pegasus hardware graphs, defect injection and native spin glasses.

Linear node ids follow the usual coordinate conventions:

* Chimera ``C_m``: ``(i, j, u, k)`` -> ``8 (m i + j) + 4 u + k`` where
  ``(i, j)`` is the cell row/column, ``u`` the shore (0 vertical,
  1 horizontal) and ``k`` the index within the shore.
* Pegasus ``P_m``: ``(u, w, k, z)`` -> ``z + (m - 1) (k + 12 (w + m u))``
  where ``u`` is the orientation, ``w`` the perpendicular offset, ``k`` the
  track and ``z`` the position along the qubit's line.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import InvalidDefectCount, ProblemFormatError
from .ising import IsingModel

__all__ = [
    "Topology",
    "HardwareGraph",
    "PrecisionSpec",
    "chimera",
    "chimera_index",
    "pegasus",
    "pegasus_index",
    "PEGASUS_OFFSETS",
    "inject_defects",
    "spin_glass",
    "dumps_graph",
    "loads_graph",
    "read_graph",
    "write_graph",
    "degree_histogram",
]

# shift of each track's qubit along its line, for vertical (u=0) and horizontal (u=1) qubits
PEGASUS_OFFSETS = (
    (2, 2, 2, 2, 10, 10, 10, 10, 6, 6, 6, 6),
    (6, 6, 6, 6, 2, 2, 2, 2, 10, 10, 10, 10),
)


class Topology(str, enum.Enum):
    CHIMERA = "chimera"
    PEGASUS = "pegasus"


@dataclass(frozen=True, eq=False)
class HardwareGraph:
    """Qubit ids and couplers of a (possibly defective) hardware lattice."""

    topology: Topology
    m: int
    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    defect_seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(sorted({int(v) for v in self.nodes}))
        node_set = set(nodes)
        edges = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if a not in node_set or b not in node_set:
                raise ValueError(f"edge ({a}, {b}) touches a missing node")
            edges.add((a, b) if a < b else (b, a))
        object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(sorted(edges)))

    def __eq__(self, other):
        if not isinstance(other, HardwareGraph):
            return NotImplemented
        return (self.topology, self.m, self.nodes, self.edges) == \
            (other.topology, other.m, other.nodes, other.edges)

    def __repr__(self):
        return (f"HardwareGraph({self.topology.value}({self.m}), nodes={len(self.nodes)}, "
                f"edges={len(self.edges)}, defect_seed={self.defect_seed})")

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def degrees(self) -> dict[int, int]:
        deg = dict.fromkeys(self.nodes, 0)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g


def chimera_index(m: int, i: int, j: int, u: int, k: int) -> int:
    return 8 * (m * i + j) + 4 * u + k


def chimera(m: int) -> HardwareGraph:
    """Ideal ``C_m``: an ``m x m`` grid of ``K_{4,4}`` cells.

    Vertical qubits (``u = 0``) couple to the same qubit in the cell below;
    horizontal qubits (``u = 1``) to the same qubit in the cell to the right.
    """
    if m < 1:
        raise ValueError(f"chimera size must be >= 1, got {m}")
    c = chimera_index
    edges = []
    for i in range(m):
        for j in range(m):
            edges += [(c(m, i, j, 0, k), c(m, i, j, 1, kk)) for k in range(4) for kk in range(4)]
            if i + 1 < m:
                edges += [(c(m, i, j, 0, k), c(m, i + 1, j, 0, k)) for k in range(4)]
            if j + 1 < m:
                edges += [(c(m, i, j, 1, k), c(m, i, j + 1, 1, k)) for k in range(4)]
    return HardwareGraph(Topology.CHIMERA, m, tuple(range(8 * m * m)), tuple(edges))


def pegasus_index(m: int, u: int, w: int, k: int, z: int) -> int:
    return z + (m - 1) * (k + 12 * (w + m * u))


def pegasus(m: int, fabric_only: bool = True) -> HardwareGraph:
    """Ideal ``P_m`` with internal, external and odd couplers.

    ``fabric_only`` drops the boundary qubits that have no internal couplers
    (tracks ``k < 2`` at ``w = 0`` and ``k >= 10`` at ``w = m - 1``); the full
    lattice has ``24 m (m - 1)`` qubits.
    """
    if m < 2:
        raise ValueError(f"pegasus size must be >= 2, got {m}")
    off0, off1 = PEGASUS_OFFSETS
    m1 = m - 1
    p = lambda u, w, k, z: pegasus_index(m, u, w, k, z)  # noqa: E731

    edges = []
    for u in (0, 1):
        for w in range(m):
            for k in range(12):
                edges += [(p(u, w, k, z), p(u, w, k, z + 1)) for z in range(m1 - 1)]
                if k % 2 == 0:
                    edges += [(p(u, w, k, z), p(u, w, k + 1, z)) for z in range(m1)]
    # a vertical qubit crosses a horizontal one in the next row when its track
    # sits above the horizontal qubit's offset, and one column back otherwise
    for w in range(m):
        for k in range(12):
            for kk in range(12):
                for z in range(m1):
                    w_h = z + (kk < off0[k])
                    z_h = w - (k < off1[kk])
                    if 0 <= z_h < m1:
                        edges.append((p(0, w, k, z), p(1, w_h, kk, z_h)))

    nodes = set(range(24 * m * m1))
    if fabric_only:
        lo, hi = min(off1), 12 - max(off1)
        dangling = {p(u, w, k, z) for u in (0, 1) for z in range(m1)
                    for w, ks in ((0, range(lo)), (m1, range(12 - hi, 12))) for k in ks}
        nodes -= dangling
        edges = [e for e in edges if e[0] in nodes and e[1] in nodes]
    g = HardwareGraph(Topology.PEGASUS, m, tuple(nodes), tuple(edges))
    g.metadata["fabric_only"] = fabric_only
    return g


def inject_defects(g: HardwareGraph, n_nodes: int, n_edges: int, seed: int) -> HardwareGraph:
    """Remove ``n_nodes`` random qubits (with their couplers), then ``n_edges`` random couplers."""
    if n_nodes < 0 or n_edges < 0:
        raise InvalidDefectCount("defect counts must be non-negative")
    if n_nodes > g.num_nodes:
        raise InvalidDefectCount(f"cannot remove {n_nodes} of {g.num_nodes} nodes")
    rng = np.random.default_rng(seed)
    dead = set(np.asarray(g.nodes)[rng.choice(g.num_nodes, n_nodes, replace=False)].tolist()) \
        if n_nodes else set()
    nodes = tuple(v for v in g.nodes if v not in dead)
    edges = [e for e in g.edges if e[0] not in dead and e[1] not in dead]
    if n_edges > len(edges):
        raise InvalidDefectCount(f"cannot remove {n_edges} of {len(edges)} remaining edges")
    if n_edges:
        drop = set(rng.choice(len(edges), n_edges, replace=False).tolist())
        edges = [e for idx, e in enumerate(edges) if idx not in drop]
    out = HardwareGraph(g.topology, g.m, nodes, tuple(edges), defect_seed=seed)
    out.metadata.update(g.metadata, defect_seed=seed, removed_nodes=n_nodes, removed_edges=n_edges)
    return out


@dataclass(frozen=True)
class PrecisionSpec:
    """``levels`` linearly spaced coupler weights on ``[low, high]``."""

    levels: int
    low: float = -1.0
    high: float = 1.0
    exclude_zero: bool = True

    def __post_init__(self):
        if self.levels < 2 or not self.low < self.high:
            raise ValueError(f"need levels >= 2 and low < high, got {self}")
        if self.exclude_zero and 0.0 in self.weights():
            raise ValueError(f"{self.levels} levels on [{self.low}, {self.high}] include 0")

    def weights(self) -> np.ndarray:
        return np.linspace(self.low, self.high, self.levels)


def spin_glass(g: HardwareGraph, spec: PrecisionSpec, seed: int) -> IsingModel:
    """Uniform random couplers from ``spec`` on every edge of ``g``; no linear terms.

    Variables are the graph's nodes relabelled ``0..n-1`` in increasing id
    order, so variable ``i`` is qubit ``g.nodes[i]``.
    """
    rng = np.random.default_rng(seed)
    w = spec.weights()[rng.integers(0, spec.levels, size=g.num_edges)]
    label = {v: i for i, v in enumerate(g.nodes)}
    quad = {(label[a], label[b]): float(x) for (a, b), x in zip(g.edges, w)}
    return IsingModel(g.num_nodes, {}, quad)


# -- graph file format --------------------------------------------------------

def dumps_graph(g: HardwareGraph, vertex_weights: dict | None = None,
                edge_weights: dict | None = None) -> str:
    """``node i`` / ``edge i j [w]`` lines with an optional ``w i value`` per vertex."""
    lines = [f"# topology {g.topology.value} {g.m}"]
    if g.defect_seed is not None:
        lines.append(f"# defect_seed {g.defect_seed}")
    lines += [f"node {v}" for v in g.nodes]
    for a, b in g.edges:
        suffix = f" {edge_weights[(a, b)]!r}" if edge_weights else ""
        lines.append(f"edge {a} {b}{suffix}")
    if vertex_weights:
        lines += [f"w {v} {vertex_weights[v]!r}" for v in sorted(vertex_weights)]
    return "\n".join(lines) + "\n"


def _parse_graph_lines(text: str) -> tuple[dict, list, dict, dict]:
    header: dict = {}
    nodes, edges, ew, vw = [], [], {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            tok = line[1:].split()
            if len(tok) == 3 and tok[0] == "topology":
                header["topology"], header["m"] = tok[1], int(tok[2])
            elif len(tok) == 2 and tok[0] == "defect_seed":
                header["defect_seed"] = int(tok[1])
            continue
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "node" and len(tok) == 2:
                nodes.append(int(tok[1]))
            elif tok[0] == "edge" and len(tok) in (3, 4):
                e = (int(tok[1]), int(tok[2]))
                edges.append(e)
                if len(tok) == 4:
                    ew[e] = float(tok[3])
            elif tok[0] == "w" and len(tok) == 3:
                vw[int(tok[1])] = float(tok[2])
            else:
                raise ValueError(f"unrecognised line {raw!r}")
        except ValueError as exc:
            raise ProblemFormatError(f"line {lineno}: {exc}") from None
    header["nodes"] = nodes
    return header, edges, ew, vw


def loads_graph(text: str) -> HardwareGraph:
    header, edges, _, _ = _parse_graph_lines(text)
    if "topology" not in header:
        raise ProblemFormatError("hardware graph file needs a '# topology <name> <m>' header")
    return HardwareGraph(header["topology"], header["m"], tuple(header["nodes"]), tuple(edges),
                         header.get("defect_seed"))


def read_graph(path) -> HardwareGraph:
    return loads_graph(Path(path).read_text())


def write_graph(g: HardwareGraph, path) -> None:
    Path(path).write_text(dumps_graph(g))


def degree_histogram(g: HardwareGraph) -> dict[int, int]:
    hist: dict[int, int] = {}
    for d in g.degrees.values():
        hist[d] = hist.get(d, 0) + 1
    return dict(sorted(hist.items()))
