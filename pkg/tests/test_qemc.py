import numpy as np
import pytest

from annealforge.errors import InvalidSchedule
from annealforge.hardware import PrecisionSpec, chimera, spin_glass
from annealforge.ising import IsingModel, SampleSet, energy
from annealforge.qemc import (
    Method,
    QemcConfig,
    combined_grid,
    initial_seed,
    method_schedules,
    ra_grid,
    run_qemc,
    state_hash,
    sweep,
    with_reads,
)
from annealforge.schedules import DEVICES, ScheduleKind, validate
from annealforge.sim import Annealer, SimParams

DEV = DEVICES["adv4"]


class RandomStub:
    """Returns uniformly random states; records every call."""

    def __init__(self):
        self.calls = []

    def __call__(self, model, ra, hg=None, init=None, *, num_reads, seed=None):
        self.calls.append({"model": model, "ra": ra, "hg": hg, "init": init, "seed": seed})
        rng = np.random.default_rng(seed)
        return SampleSet.from_reads(model, rng.choice([-1, 1], (num_reads, model.num_vars)))


class MinusZStub(RandomStub):
    def __call__(self, model, ra, hg=None, init=None, *, num_reads, seed=None):
        ss = super().__call__(model, ra, hg, init, num_reads=num_reads, seed=seed)
        if init is None and hg is None:
            return ss
        states = np.array(ss.expanded())
        states[:, -1] = -1
        return SampleSet.from_reads(model, states)


@pytest.fixture
def glass():
    return spin_glass(chimera(1), PrecisionSpec(10), 4)


class TestConfig:
    def test_defaults(self):
        c = QemcConfig()
        assert (c.iterations, c.reads_per_iter, c.anneal_time_us) == (20, 1000, 100.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            QemcConfig(iterations=0)

    def test_g0_defaults(self):
        assert QemcConfig(Method.HG).resolved_g0(DEV) == 3.0
        assert QemcConfig(Method.RA_HG).resolved_g0(DEV) == 2.0

    def test_ra_grid(self):
        grid = ra_grid()
        assert [c.s_pause for c in grid] == [0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8]

    def test_with_reads(self):
        assert all(c.reads_per_iter == 10 for c in with_reads(ra_grid(), 10))


class TestSchedules:
    def test_ra(self):
        ra, hg = method_schedules(QemcConfig(Method.RA, s_pause=0.4), DEV)
        assert ra.points == ((0, 1), (10, 0.4), (90, 0.4), (100, 1)) and hg is None

    def test_hg(self):
        ra, hg = method_schedules(QemcConfig(Method.HG, h_mid=0.5), DEV)
        assert ra.kind is ScheduleKind.FORWARD
        assert hg.points == ((0, 3.0), (10, 0.5), (100, 0))

    def test_ra_hg_reaches_zero_when_ramp_starts(self):
        ra, hg = method_schedules(QemcConfig(Method.RA_HG, s_pause=0.5, h_mid=1.0), DEV)
        t_b = ra.points[2][0]
        assert hg(t_b) == 0.0 and hg(t_b - 1e-6) > 0.0
        assert ra.kind is ScheduleKind.REVERSE

    def test_fa_pause_hg(self):
        ra, hg = method_schedules(QemcConfig(Method.FA_PAUSE_HG), DEV)
        assert ra.kind is ScheduleKind.FORWARD_PAUSE and hg(90.0) == 0.0

    @pytest.mark.parametrize("device", ["dw2000q", "adv4", "adv6"])
    @pytest.mark.parametrize("method", [Method.RA_HG, Method.FA_PAUSE_HG])
    def test_combined_grid_valid_everywhere(self, device, method):
        dev = DEVICES[device]
        for c in combined_grid(method):
            ra, hg = method_schedules(c, dev)
            assert validate(ra, dev) == [] and validate(hg, dev) == []

    def test_ra_grid_valid(self):
        for c in ra_grid():
            assert validate(method_schedules(c, DEVICES["dw2000q"])[0], DEVICES["dw2000q"]) == []

    def test_invalid_g0_aborts(self, glass):
        with pytest.raises(InvalidSchedule) as err:
            run_qemc(glass, QemcConfig(Method.HG, g0=5.1, iterations=1), DEV, 0, RandomStub())
        assert err.value.violations


class TestContract:
    @pytest.mark.parametrize("method", list(Method))
    def test_chaining_and_monotone_best(self, glass, method):
        stub = RandomStub()
        tr = run_qemc(glass, QemcConfig(method, iterations=6, reads_per_iter=20), DEV, 3, stub)
        assert len(tr) == 6
        for prev, nxt in zip(tr.records, tr.records[1:]):
            assert np.array_equal(nxt.seed_state, prev.best_state)
        gb = tr.global_best_energies
        assert np.all(np.diff(gb) <= 0)
        assert tr.global_best[1] == tr.min_energies.min()
        for r in tr.records:
            assert r.min_energy == energy(glass, r.best_state)

    def test_same_schedule_every_iteration(self, glass):
        stub = RandomStub()
        run_qemc(glass, QemcConfig(Method.HG, iterations=4, reads_per_iter=5, alpha1=0.0), DEV, 0, stub)
        calls = stub.calls[1:]
        assert all(c["ra"] == calls[0]["ra"] and c["hg"] == calls[0]["hg"] for c in calls)
        assert all(c["init"] is None for c in calls)

    def test_ra_passes_seed_as_init(self, glass):
        stub = RandomStub()
        tr = run_qemc(glass, QemcConfig(Method.RA, iterations=3, reads_per_iter=5), DEV, 0, stub)
        for call, rec in zip(stub.calls[1:], tr.records):
            assert np.array_equal(call["init"], rec.seed_state)

    def test_slack_init_is_plus_one(self):
        m = IsingModel(3, {0: 0.5}, {(0, 1): 1.0, (1, 2): -1.0})
        stub = RandomStub()
        run_qemc(m, QemcConfig(Method.RA_HG, iterations=2, reads_per_iter=5), DEV, 0, stub)
        assert all(c["init"][-1] == 1 and len(c["init"]) == 4 for c in stub.calls[1:])

    def test_empty_iteration_keeps_seed(self):
        m = IsingModel(3, {0: 0.5}, {(0, 1): 1.0})
        tr = run_qemc(m, QemcConfig(Method.RA_HG, iterations=3, reads_per_iter=5), DEV, 0, MinusZStub())
        assert all(r.num_valid_reads == 0 and r.min_energy == np.inf for r in tr.records)
        assert all(np.array_equal(r.seed_state, tr.initial_state) for r in tr.records)

    def test_iterations_one(self, glass):
        tr = run_qemc(glass, QemcConfig(Method.RA, iterations=1, reads_per_iter=5), DEV, 0, RandomStub())
        assert len(tr) == 1 and tr.global_best[1] == tr.records[0].min_energy

    def test_csv(self, glass):
        tr = run_qemc(glass, QemcConfig(Method.RA, iterations=2, reads_per_iter=5), DEV, 0, RandomStub())
        lines = tr.to_csv().splitlines()
        assert lines[0] == "iteration,min_energy,global_best_energy,seed_hash"
        assert len(lines) == 3
        assert lines[1].split(",")[3] == state_hash(tr.records[0].seed_state)


class TestSweep:
    def test_shared_initial_state(self, glass):
        configs = [QemcConfig(Method.RA, iterations=2, reads_per_iter=5, s_pause=s) for s in (0.3, 0.6)]
        traces = sweep(glass, configs, DEV, 1, RandomStub())
        assert np.array_equal(traces[0].initial_state, traces[1].initial_state)
        assert np.array_equal(traces[0].records[0].seed_state, traces[1].records[0].seed_state)

    def test_empty(self, glass):
        assert sweep(glass, [], DEV, 0, RandomStub()) == []

    def test_initial_seed_is_best_forward_sample(self, glass):
        stub = RandomStub()
        x = initial_seed(glass, DEV, 5, stub, num_reads=50)
        assert stub.calls[0]["ra"].kind is ScheduleKind.FORWARD
        rng_states = SampleSet.from_reads(glass, np.random.default_rng(stub.calls[0]["seed"]).choice([-1, 1], (50, 8)))
        assert energy(glass, x) == rng_states.first[1]


def test_strong_bias_never_worse_than_seed():
    m = spin_glass(chimera(1), PrecisionSpec(10), 11)
    cfg = QemcConfig(Method.HG, iterations=5, reads_per_iter=100, alpha1=5.0, autoscale=False,
                     g0=5.0, t_hg_zero_us=10.0)
    tr = run_qemc(m, cfg, DEVICES["dw2000q"], 2, Annealer(SimParams()))
    assert all(r.min_energy <= r.seed_energy + 1e-12 for r in tr.records)
