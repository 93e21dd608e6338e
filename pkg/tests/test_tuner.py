import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealforge.ising import SampleSet
from annealforge.problems import Baseline, erdos_renyi, score_clique, score_cut
from annealforge.schedules import DEVICES, ScheduleKind, validate
from annealforge.tuner import (
    FAILURE_PENALTY,
    DEFAULT_BO_SETTINGS,
    FitnessContext,
    GaussianProcess,
    SearchSpace,
    Stage,
    TunedConfig,
    bayes_optimize,
    clique_fitness,
    cut_fitness,
    decode_point,
    expected_improvement,
    grid_scan,
    heatmap,
    heatmap_csv,
    schedule_dims,
    stage_space,
    tune_pipeline,
)

DW = DEVICES["dw2000q"]


class FixedStub:
    """Returns ``states[graph_index]`` for every read, optionally with a slack column."""

    def __init__(self, states, slack=None):
        self.states = [np.asarray(s, dtype=np.int8) for s in states]
        self.slack = slack
        self.k = 0

    def __call__(self, model, ra, hg=None, init=None, *, num_reads, seed=None):
        x = self.states[self.k % len(self.states)]
        self.k += 1
        if model.num_vars == len(x) + 1:
            x = np.append(x, self.slack)
        return SampleSet.from_reads(model, np.tile(x, (num_reads, 1)))


def cut_context(n_graphs=3, n=8, states=None, baseline_delta=0.0, **kw):
    graphs = [erdos_renyi(n, 0.5, 50 + i) for i in range(n_graphs)]
    rng = np.random.default_rng(0)
    x = [rng.choice([-1, 1], n) for _ in graphs]
    baselines = [Baseline(f"g{i}", score_cut(g, s) - baseline_delta, 0.0, 10, 1.0, tuple(s))
                 for i, (g, s) in enumerate(zip(graphs, x))]
    return FitnessContext("max-cut", graphs, baselines, DW, num_reads=10,
                          sampler=FixedStub(states or x), **kw)


class TestSearchSpace:
    def test_unit_round_trip(self):
        sp = SearchSpace((("a", 0.1, 0.9), ("b", -2, 2)))
        x = np.array([0.5, 1.0])
        np.testing.assert_allclose(sp.from_unit(sp.to_unit(x)), x)
        assert sp.names == ["a", "b"]

    @pytest.mark.parametrize("dims", [(), (("a", 1, 0),), (("a", 0, float("inf")),), (("a", 0, 1), ("a", 0, 2))])
    def test_invalid(self, dims):
        with pytest.raises(ValueError):
            SearchSpace(dims)


class TestGaussianProcess:
    def test_interpolates_at_tiny_noise(self):
        rng = np.random.default_rng(1)
        X = rng.random((25, 2))
        y = np.sin(3 * X[:, 0]) + np.cos(2 * X[:, 1])
        gp = GaussianProcess(noise_alpha=1e-8).fit(X, y)
        np.testing.assert_allclose(gp.predict(X, return_var=False), y, atol=1e-4)

    @given(st.integers(0, 10**6))
    @settings(max_examples=20, deadline=None)
    def test_variance_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.random((8, 2))
        gp = GaussianProcess(1e-6).fit(X, rng.normal(size=8))
        _, var = gp.predict(np.vstack([X, rng.random((50, 2))]))
        assert np.all(var >= 0)

    def test_negative_noise(self):
        with pytest.raises(ValueError):
            GaussianProcess(noise_alpha=-1)


class TestExpectedImprovement:
    @given(st.floats(-10, 10), st.floats(0, 10), st.floats(-10, 10))
    @settings(max_examples=200)
    def test_nonnegative(self, mu, var, best):
        assert expected_improvement(np.array([mu]), np.array([var]), best)[0] >= 0

    def test_zero_variance(self):
        assert expected_improvement(np.array([2.0]), np.array([0.0]), 1.0)[0] == 0.0


class TestBayesOptimize:
    def test_one_dimensional_optimum(self):
        sp = SearchSpace((("x", 0, 1),))
        res = bayes_optimize(lambda p: -(p["x"] - 0.3) ** 2, sp, 20, 40, noise_alpha=1e-6, seed=0)
        assert abs(res.best_point["x"] - 0.3) < 0.05

    def test_history_length_and_constant(self):
        sp = SearchSpace((("x", 0, 1), ("y", 0, 1)))
        res = bayes_optimize(lambda p: 1.0, sp, 5, 7, seed=2)
        assert len(res.history) == 12
        assert [o.phase for o in res.history].count("bo") == 7

    def test_failures_recorded(self):
        sp = SearchSpace((("x", 0, 1),))

        def f(p):
            if p["x"] > 0.5:
                raise RuntimeError("boom")
            return p["x"]

        res = bayes_optimize(f, sp, 6, 6, seed=1, failure_penalty=-1000.0)
        assert len(res.history) == 12
        assert all(o.value == -1000.0 for o in res.history if o.failed)
        assert res.best_value <= 0.5

    def test_failures_abort_without_penalty(self):
        sp = SearchSpace((("x", 0, 1),))
        with pytest.raises(RuntimeError):
            bayes_optimize(lambda p: (_ for _ in ()).throw(RuntimeError()), sp, 2, 0)

    def test_best_is_observed_argmax(self):
        sp = SearchSpace((("x", 0, 1),))
        res = bayes_optimize(lambda p: np.sin(6 * p["x"]), sp, 4, 4, seed=3)
        assert res.best_value == max(o.value for o in res.history)

    def test_warm_start_first(self):
        sp = SearchSpace((("x", 0, 1),))
        res = bayes_optimize(lambda p: p["x"], sp, 3, 1, initial_points=[{"x": 0.42}])
        assert res.history[0].point == {"x": pytest.approx(0.42)} and res.history[0].phase == "warm"

    def test_seeded(self):
        sp = SearchSpace((("x", 0, 1),))
        a = bayes_optimize(lambda p: -p["x"] ** 2, sp, 4, 3, seed=9)
        b = bayes_optimize(lambda p: -p["x"] ** 2, sp, 4, 3, seed=9)
        assert [o.point for o in a.history] == [o.point for o in b.history]

    def test_published_settings(self):
        assert DEFAULT_BO_SETTINGS == {"init_points": 100, "n_iter": 200, "alpha": 0.01}


class TestFitness:
    def test_baseline_state_gives_zero(self):
        ctx = cut_context()
        assert cut_fitness({"alpha1": 0.5, "t_mid_frac": 0.5, "g_mid": 1.0}, ctx) == 0.0

    def test_plus_one(self):
        ctx = cut_context(baseline_delta=1.0)
        assert cut_fitness({"alpha1": 0.5}, ctx) == pytest.approx(1.0)

    def test_clique_all_minus_z_is_penalty(self):
        graphs = [erdos_renyi(6, 0.5, i) for i in range(2)]
        x = np.full(6, -1)
        baselines = [Baseline(f"g{i}", 0.0, 0.0, 10, 1.0, tuple(x)) for i in range(2)]
        ctx = FitnessContext("max-clique", graphs, baselines, DW, num_reads=5,
                             sampler=FixedStub([x], slack=-1))
        assert clique_fitness({"alpha1": 0.5, "alpha2": 0.5}, ctx) == FAILURE_PENALTY

    def test_clique_improvement(self):
        g = erdos_renyi(6, 0.6, 3)
        a, b = next(iter(g.edges))
        x = -np.ones(6, dtype=int)
        x[[a, b]] = 1
        base = Baseline("g", 0.0, 0.0, 10, 1.0, tuple(-np.ones(6, dtype=int)))
        ctx = FitnessContext("max-clique", [g], [base], DW, num_reads=5, sampler=FixedStub([x], slack=1))
        assert clique_fitness({}, ctx) == pytest.approx(score_clique(g, x))

    def test_invalid_schedule_is_penalty_for_clique(self):
        graphs = [erdos_renyi(6, 0.5, 0)]
        base = [Baseline("g", 0.0, 0.0, 10, 1.0, tuple([-1] * 6))]
        ctx = FitnessContext("max-clique", graphs, base, DW, method="RA", anneal_time_us=3000.0,
                             num_reads=5, sampler=FixedStub([[-1] * 6], slack=1))
        assert clique_fitness({}, ctx) == FAILURE_PENALTY

    def test_ra_passes_baseline_as_init(self):
        seen = []

        def sampler(model, ra, hg=None, init=None, *, num_reads, seed=None):
            seen.append((ra.kind, init))
            return SampleSet.from_reads(model, np.tile(init, (num_reads, 1)))

        ctx = cut_context(method="RA", anneal_time_us=100.0)
        ctx.sampler = sampler
        assert cut_fitness({"p1": 0.3, "p2": 0.4}, ctx) == 0.0
        assert all(kind is ScheduleKind.REVERSE and init is not None for kind, init in seen)


class TestDecoding:
    @given(st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(0.01, 0.99), st.floats(0, 1),
           st.sampled_from(["dw2000q", "adv4", "adv6"]))
    @settings(max_examples=100, deadline=None)
    def test_in_space_points_are_valid(self, p1, p2, t, gfrac, device):
        dev = DEVICES[device]
        point = {"p1": p1, "p2": p2, "t_mid_frac": t, "g_mid": gfrac * dev.g_max}
        for method, T in (("RA", 100.0), ("HG", 1.0), ("RA_HG", 100.0)):
            ctx = FitnessContext("max-cut", [], [], dev, method=method, anneal_time_us=T)
            ra, hg, _, _ = decode_point(point, ctx)
            assert validate(ra, dev) == []
            if hg is not None:
                assert validate(hg, dev) == []
                assert hg.points[0][1] == dev.g_max

    def test_density_defaults_fill_alphas(self):
        ctx = FitnessContext("max-clique", [], [], DW, density=0.5)
        _, _, a1, a2 = decode_point({}, ctx)
        assert (a1, a2) == (0.3467, 0.2473)

    def test_schedule_dims(self):
        assert [d[0] for d in schedule_dims("RA_HG", DW)] == ["p1", "p2", "t_mid_frac", "g_mid"]


class TestPipeline:
    def test_grid_argmax(self):
        best, rows = grid_scan(lambda p: -abs(p["alpha1"] - 0.41))
        assert best == 0.41 and len(rows) == 100
        assert rows[0][0] == 0.01 and rows[-1][0] == 1.0

    def test_stage_spaces(self):
        ctx = FitnessContext("max-clique", [], [], DW, method="RA")
        assert stage_space(ctx, Stage.SCALING_AND_SCHEDULE).names == ["alpha1", "alpha2", "t_mid_frac", "g_mid"]
        assert stage_space(ctx, Stage.SCHEDULE_ONLY).names == ["p1", "p2"]
        assert stage_space(ctx, Stage.SCALING_REFIT).names == ["alpha1", "alpha2"]

    def test_joint_stage_with_grid_check(self):
        ctx = cut_context(n_graphs=1)
        tuned = tune_pipeline(ctx, Stage.SCALING_AND_SCHEDULE, init_points=3, n_iter=1, seed=0)
        assert tuned.method == "HG" and tuned.stage == "ScalingAndSchedule"
        assert tuned.settings["grid_check"]["points"] == 100
        assert tuned.settings["init_points"] == 3 and tuned.settings["alpha"] == 0.01
        assert json.loads(tuned.to_json())["anneal_time_us"] == 1.0

    def test_refit_warm_starts(self, monkeypatch):
        import annealforge.tuner as tuner
        ctx = cut_context(n_graphs=1)
        prev = TunedConfig("max-cut", 0.5, "HG", 0.37, 0.0, [[0, 0], [1, 1]], [[0, 5], [0.5, 1], [1, 0]],
                           1.0, "ScalingAndSchedule", 0.0, {"alpha1": 0.37, "t_mid_frac": 0.5, "g_mid": 1.0})
        seen = {}
        real = tuner.bayes_optimize

        def spy(*args, **kwargs):
            res = real(*args, **kwargs)
            seen["history"] = res.history
            return res

        monkeypatch.setattr(tuner, "bayes_optimize", spy)
        tune_pipeline(ctx, Stage.SCALING_REFIT, prev, init_points=2, n_iter=1)
        assert seen["history"][0].point == {"alpha1": pytest.approx(0.37)}

    def test_refit_needs_previous(self):
        with pytest.raises(ValueError):
            tune_pipeline(cut_context(n_graphs=1), Stage.SCALING_REFIT, None, 1, 0)


class TestHeatmap:
    def test_grid_and_csv(self):
        sp = SearchSpace((("x", 0, 1), ("y", 0, 2)))
        res = bayes_optimize(lambda p: -(p["x"] - 0.5) ** 2 - p["y"], sp, 6, 2, seed=0)
        rows = heatmap(res, "x", "y", resolution=5)
        assert len(rows) == 25
        assert all(r[3] >= 0 for r in rows)
        text = heatmap_csv(rows)
        assert text.splitlines()[0] == "x,y,posterior_mean,posterior_variance"
        assert len(text.splitlines()) == 26


class TestPublishedDefaults:
    def test_full_default_run(self):
        sp = SearchSpace((("x", 0, 1), ("y", 0, 1)))
        res = bayes_optimize(lambda p: -(p["x"] - 0.5) ** 2 - (p["y"] - 0.5) ** 2, sp, seed=0)
        assert len(res.history) == 300
        assert {k: res.settings[k] for k in DEFAULT_BO_SETTINGS} == DEFAULT_BO_SETTINGS
