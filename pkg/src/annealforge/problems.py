"""Max-Cut and Max-Clique instances on Erdos-Renyi graphs, scoring and baselines.

Both problems are minimised as spin-domain Ising models. Assignments are
read the same way in both domains: a vertex is "selected" (or on the ``+``
side of a cut) exactly when its value is ``1``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Mapping, Protocol

import numpy as np

from .errors import InvalidWeight, ProblemFormatError
from .ising import Domain, IsingModel, SampleSet, convert
from .schedules import forward

__all__ = [
    "WeightedGraph",
    "Baseline",
    "Sampler",
    "DENSITIES",
    "erdos_renyi",
    "er_instances",
    "max_cut_ising",
    "max_clique_qubo",
    "max_clique_ising",
    "score_cut",
    "score_clique",
    "is_clique",
    "cut_from_energy",
    "compute_baseline",
    "save_baselines",
    "load_baselines",
    "dumps_weighted_graph",
    "loads_weighted_graph",
]

DENSITIES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

Distribution = Callable[[np.random.Generator, int], np.ndarray]


def uniform_edge_weights(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size)


def uniform_vertex_weights(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.uniform(0.001, 1.0, size)


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph on ``0..n-1`` with edge weights and optional vertex weights."""

    n: int
    edges: Mapping[tuple[int, int], float]
    vertex_weights: Mapping[int, float] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = {}
        for (i, j), w in self.edges.items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) outside [0, {self.n})")
            if not np.isfinite(w):
                raise InvalidWeight(f"edge ({i}, {j}) weight {w} is not finite")
            key = (i, j) if i < j else (j, i)
            if key in edges:
                raise ValueError(f"duplicate edge {key}")
            edges[key] = float(w)
        object.__setattr__(self, "edges", MappingProxyType(dict(sorted(edges.items()))))
        if self.vertex_weights is not None:
            vw = {int(v): float(w) for v, w in self.vertex_weights.items()}
            if set(vw) != set(range(self.n)):
                raise ValueError("vertex_weights must cover every vertex")
            if not all(np.isfinite(w) for w in vw.values()):
                raise InvalidWeight("vertex weights must be finite")
            object.__setattr__(self, "vertex_weights", MappingProxyType(dict(sorted(vw.items()))))

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        vw = lambda g: None if g.vertex_weights is None else dict(g.vertex_weights)  # noqa: E731
        return self.n == other.n and dict(self.edges) == dict(other.edges) and vw(self) == vw(other)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def total_weight(self) -> float:
        return float(sum(self.edges.values()))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    def complement_edges(self) -> list[tuple[int, int]]:
        a = self.adjacency()
        return [(i, j) for i in range(self.n) for j in range(i + 1, self.n) if not a[i, j]]


def erdos_renyi(n: int, p: float, seed: int, edge_w: Distribution | None = uniform_edge_weights,
                vertex_w: Distribution | None = uniform_vertex_weights) -> WeightedGraph:
    """``G(n, p)`` with random weights.

    Pairs ``i < j`` are visited in lexicographic order; each is kept with
    probability ``p``. Defaults draw edge weights from ``U(-1, 1)`` and vertex
    weights from ``U(0.001, 1)``. Pass ``None`` to get unit weights / none.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    iu, ju = iu[keep], ju[keep]
    w = edge_w(rng, len(iu)) if edge_w is not None else np.ones(len(iu))
    edges = {(int(i), int(j)): float(x) for i, j, x in zip(iu, ju, w)}
    vw = None
    if vertex_w is not None:
        vw = {i: float(x) for i, x in enumerate(vertex_w(rng, n))}
    return WeightedGraph(n, edges, vw, {"generator": "erdos_renyi", "n": n, "p": p, "seed": seed})


def er_instances(n: int = 65, densities=DENSITIES, graphs_per_density: int = 10,
                 seed: int = 0) -> dict[float, list[WeightedGraph]]:
    """The benchmark family: ``graphs_per_density`` graphs at each density.

    Each graph gets its own seed spawned from ``seed`` so that adding a
    density does not change the others.
    """
    out = {}
    for d_idx, p in enumerate(densities):
        children = np.random.SeedSequence([seed, d_idx]).spawn(graphs_per_density)
        out[p] = [erdos_renyi(n, p, int(c.generate_state(1)[0])) for c in children]
    return out


def max_cut_ising(g: WeightedGraph) -> IsingModel:
    """``Q(x) = sum_{(i,j) in E} w_ij x_i x_j``, which equals ``W - 2 cut(x)``."""
    return IsingModel(g.n, {}, dict(g.edges))


def _check_vertex_weights(g: WeightedGraph) -> np.ndarray:
    if g.vertex_weights is None:
        raise InvalidWeight("max-clique needs vertex weights")
    w = np.array([g.vertex_weights[i] for i in range(g.n)])
    if np.any(w <= 0):
        raise InvalidWeight(f"vertex weights must be positive, got min {w.min()}")
    return w


def max_clique_qubo(g: WeightedGraph) -> IsingModel:
    """Binary ``-sum w_i b_i + 2 sum_{(i,j) not in E} max(w_i, w_j) b_i b_j``."""
    w = _check_vertex_weights(g)
    lin = {i: -float(w[i]) for i in range(g.n)}
    quad = {(i, j): 2.0 * max(w[i], w[j]) for i, j in g.complement_edges()}
    return IsingModel(g.n, lin, quad, Domain.BINARY)


def max_clique_ising(g: WeightedGraph) -> IsingModel:
    """Spin-domain form of :func:`max_clique_qubo` (energies preserved via the offset)."""
    return convert(max_clique_qubo(g), Domain.SPIN)


def _selected(g: WeightedGraph, a) -> np.ndarray:
    a = np.asarray(a)
    if a.shape != (g.n,):
        raise ValueError(f"assignment length {a.shape} does not match {g.n} vertices")
    return a == 1


def score_cut(g: WeightedGraph, a) -> float:
    """Total weight of edges whose endpoints lie on different sides."""
    side = _selected(g, a)
    return float(sum(w for (i, j), w in g.edges.items() if side[i] != side[j]))


def is_clique(g: WeightedGraph, a) -> bool:
    sel = np.flatnonzero(_selected(g, a))
    adj = g.adjacency()
    sub = adj[np.ix_(sel, sel)]
    return bool(np.all(sub | np.eye(len(sel), dtype=bool)))


def score_clique(g: WeightedGraph, a) -> float | None:
    """Weight of the selected vertices, or ``None`` when they do not form a clique."""
    w = _check_vertex_weights(g)
    if not is_clique(g, a):
        return None
    return float(w[_selected(g, a)].sum())


def cut_from_energy(g: WeightedGraph, energy: float) -> float:
    return (g.total_weight - energy) / 2.0


# -- baselines ----------------------------------------------------------------

class Sampler(Protocol):
    """Anything with the simulator's calling convention."""

    def __call__(self, model: IsingModel, ra, hg=None, init=None, *, num_reads: int) -> SampleSet: ...


@dataclass(frozen=True)
class Baseline:
    problem_id: str
    best_value: float | None
    best_energy: float
    num_anneals: int
    anneal_time_us: float
    best_state: tuple[int, ...] = ()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Baseline":
        d = json.loads(text)
        d["best_state"] = tuple(d.get("best_state", ()))
        return cls(**d)


def compute_baseline(model: IsingModel, sampler: Sampler, n_anneals: int = 1000,
                     anneal_time_us: float = 1.0, problem_id: str = "",
                     scorer: Callable[[np.ndarray], float | None] | None = None) -> Baseline:
    """Best forward-anneal sample of one batch.

    ``scorer`` maps the winning state to the problem value (cut or clique
    weight); ties in energy go to the earliest read.
    """
    samples = sampler(model, forward(anneal_time_us), num_reads=n_anneals)
    state, e = samples.first
    value = scorer(state) if scorer is not None else None
    return Baseline(problem_id, value, e, n_anneals, anneal_time_us, tuple(int(v) for v in state))


def save_baselines(baselines, path) -> None:
    """One JSON record per line."""
    Path(path).write_text("".join(b.to_json() + "\n" for b in baselines))


def load_baselines(path) -> list[Baseline]:
    return [Baseline.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


# -- file format --------------------------------------------------------------

def dumps_weighted_graph(g: WeightedGraph) -> str:
    """Graph file: ``vertices n``, ``edge i j w`` and optional ``w i value`` lines."""
    lines = [f"vertices {g.n}"]
    lines += [f"edge {i} {j} {w!r}" for (i, j), w in g.edges.items()]
    if g.vertex_weights is not None:
        lines += [f"w {i} {w!r}" for i, w in g.vertex_weights.items()]
    return "\n".join(lines) + "\n"


def loads_weighted_graph(text: str) -> WeightedGraph:
    n = None
    edges, vw = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "vertices" and len(tok) == 2:
                n = int(tok[1])
            elif tok[0] == "node" and len(tok) == 2:
                n = max(n or 0, int(tok[1]) + 1)
            elif tok[0] == "edge" and len(tok) in (3, 4):
                edges[(int(tok[1]), int(tok[2]))] = float(tok[3]) if len(tok) == 4 else 1.0
            elif tok[0] == "w" and len(tok) == 3:
                vw[int(tok[1])] = float(tok[2])
            else:
                raise ValueError(f"unrecognised line {raw!r}")
        except ValueError as exc:
            raise ProblemFormatError(f"line {lineno}: {exc}") from None
    if n is None:
        raise ProblemFormatError("graph file needs a 'vertices N' line or node lines")
    return WeightedGraph(n, edges, vw or None)
