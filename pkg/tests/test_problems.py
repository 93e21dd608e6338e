import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealforge.errors import InvalidWeight, ProblemFormatError
from annealforge.ising import Domain, IsingModel, SampleSet, brute_force, energies, energy
from annealforge.problems import (
    DENSITIES,
    Baseline,
    WeightedGraph,
    compute_baseline,
    cut_from_energy,
    dumps_weighted_graph,
    er_instances,
    erdos_renyi,
    is_clique,
    load_baselines,
    loads_weighted_graph,
    max_clique_ising,
    max_clique_qubo,
    max_cut_ising,
    save_baselines,
    score_clique,
    score_cut,
)

from conftest import all_spins


def best_clique_weight(g):
    """Maximum clique weight by enumerating maximal cliques with networkx."""
    G = nx.Graph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(g.edges)
    w = g.vertex_weights
    return max(sum(w[v] for v in c) for c in nx.find_cliques(G))


class TestGenerator:
    def test_deterministic(self):
        assert erdos_renyi(20, 0.4, 7) == erdos_renyi(20, 0.4, 7)
        assert erdos_renyi(20, 0.4, 7) != erdos_renyi(20, 0.4, 8)

    def test_weight_ranges(self):
        g = erdos_renyi(65, 0.5, 1)
        w = np.array(list(g.edges.values()))
        vw = np.array(list(g.vertex_weights.values()))
        assert np.all((w > -1) & (w < 1))
        assert np.all((vw >= 0.001) & (vw < 1))

    def test_density_statistics(self):
        g = erdos_renyi(65, 0.3, 2)
        pairs = 65 * 64 // 2
        assert abs(g.num_edges - 0.3 * pairs) < 4 * np.sqrt(pairs * 0.3 * 0.7)

    def test_extremes(self):
        assert erdos_renyi(10, 0.0, 0).num_edges == 0
        assert erdos_renyi(10, 1.0, 0).num_edges == 45

    def test_bad_p(self):
        with pytest.raises(ValueError):
            erdos_renyi(5, 1.5, 0)

    def test_benchmark_family(self):
        fam = er_instances(n=12, graphs_per_density=3, seed=4)
        assert sorted(fam) == list(DENSITIES)
        assert all(len(v) == 3 for v in fam.values())
        # adding densities does not change the others
        assert er_instances(12, (0.1,), 3, 4)[0.1] == fam[0.1]

    def test_graph_validation(self):
        with pytest.raises(ValueError):
            WeightedGraph(3, {(1, 1): 1.0})
        with pytest.raises(ValueError):
            WeightedGraph(3, {(0, 1): 1.0, (1, 0): 2.0})
        with pytest.raises(InvalidWeight):
            WeightedGraph(3, {(0, 1): float("nan")})


class TestMaxCut:
    @pytest.mark.parametrize("seed", range(5))
    def test_identity_exhaustive(self, seed):
        g = erdos_renyi(9, 0.5, seed)
        m = max_cut_ising(g)
        X = all_spins(9)
        cuts = np.array([score_cut(g, x) for x in X])
        np.testing.assert_allclose(energies(m, X), g.total_weight - 2 * cuts, atol=1e-12)

    def test_argmin_is_max_cut(self):
        g = erdos_renyi(10, 0.6, 3)
        e, states = brute_force(max_cut_ising(g))
        best = max(score_cut(g, x) for x in all_spins(10))
        assert all(score_cut(g, s) == pytest.approx(best) for s in states)
        assert cut_from_energy(g, e) == pytest.approx(best)

    def test_square(self):
        g = WeightedGraph(4, {(0, 1): 1.0, (1, 2): 1.0, (2, 3): 1.0, (0, 3): 1.0})
        assert score_cut(g, [1, -1, 1, -1]) == 4.0
        assert score_cut(g, [1, 1, 1, 1]) == 0.0


class TestMaxClique:
    def test_qubo_edges_are_complement(self):
        g = erdos_renyi(12, 0.7, 1)
        q = max_clique_qubo(g)
        assert len(q.quadratic) == len(g.complement_edges()) == 66 - g.num_edges
        assert q.domain is Domain.BINARY

    @pytest.mark.parametrize("seed", range(5))
    def test_argmin_is_max_weight_clique(self, seed):
        g = erdos_renyi(11, 0.5, 100 + seed)
        e, states = brute_force(max_clique_ising(g))
        best = best_clique_weight(g)
        for s in states:
            assert is_clique(g, s)
            assert score_clique(g, s) == pytest.approx(best)
        assert -e == pytest.approx(best)

    def test_spin_preserves_qubo_energy(self):
        g = erdos_renyi(8, 0.4, 3)
        X = all_spins(8)
        np.testing.assert_allclose(energies(max_clique_ising(g), X),
                                   energies(max_clique_qubo(g), (X + 1) // 2), atol=1e-12)

    def test_non_clique_is_absent(self):
        g = WeightedGraph(3, {(0, 1): 1.0}, {0: 0.5, 1: 0.5, 2: 0.5})
        assert score_clique(g, [1, 1, -1]) == 1.0
        assert score_clique(g, [1, -1, 1]) is None

    def test_empty_selection_is_clique(self):
        g = erdos_renyi(5, 0.5, 0)
        assert score_clique(g, [-1] * 5) == 0.0

    def test_needs_positive_weights(self):
        with pytest.raises(InvalidWeight):
            max_clique_qubo(WeightedGraph(2, {}, {0: 1.0, 1: -0.5}))
        with pytest.raises(InvalidWeight):
            max_clique_qubo(WeightedGraph(2, {}))

    @given(st.integers(0, 10**6), st.floats(0.1, 0.9))
    @settings(max_examples=15, deadline=None)
    def test_energy_equals_minus_weight_on_cliques(self, seed, p):
        g = erdos_renyi(8, p, seed)
        m = max_clique_ising(g)
        for x in all_spins(8)[::7]:
            w = score_clique(g, x)
            if w is not None:
                assert energy(m, x) == pytest.approx(-w, abs=1e-12)
            else:
                assert energy(m, x) > -sum(g.vertex_weights[i] for i in range(8) if x[i] == 1)


class StubSampler:
    def __init__(self, state):
        self.state = np.asarray(state, dtype=np.int8)
        self.calls = []

    def __call__(self, model, ra, hg=None, init=None, *, num_reads, seed=None):
        self.calls.append((ra, num_reads))
        return SampleSet.from_reads(model, np.tile(self.state, (num_reads, 1)))


class TestBaseline:
    def test_stub(self):
        g = erdos_renyi(6, 0.5, 1)
        x = np.array([1, -1, 1, -1, 1, -1])
        sampler = StubSampler(x)
        b = compute_baseline(max_cut_ising(g), sampler, 50, 1.0, "g0", lambda s: score_cut(g, s))
        assert b.best_value == score_cut(g, x)
        assert b.best_state == tuple(x)
        assert sampler.calls[0][1] == 50
        assert sampler.calls[0][0].points == ((0.0, 0.0), (1.0, 1.0))

    def test_json_lines(self, tmp_path):
        bs = [Baseline("a", 1.5, -2.0, 1000, 1.0, (1, -1)), Baseline("b", None, 0.5, 10, 2.0, ())]
        p = tmp_path / "b.jsonl"
        save_baselines(bs, p)
        assert load_baselines(p) == bs


class TestGraphFile:
    def test_round_trip(self):
        g = erdos_renyi(10, 0.5, 3)
        assert loads_weighted_graph(dumps_weighted_graph(g)) == g

    def test_bad(self):
        with pytest.raises(ProblemFormatError):
            loads_weighted_graph("edge 0 1 x\n")
