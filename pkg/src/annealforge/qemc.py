"""Iterated initial-state encoding (QEMC).

Every iteration encodes the best sample of the previous iteration as the
initial state of the next anneal. Iteration 0 is seeded with the best
sample of a plain forward-anneal batch. Four seeding methods are offered:

* ``RA``: reverse anneal with a symmetric pause at ``s_pause``.
* ``HG``: forward anneal with the state in the linear field under a
  three-point h-gain schedule ``(0, g0) -> (t_hg_zero, h_mid) -> (T, 0)``.
* ``RA_HG``: the ``RA`` schedule plus an h-gain schedule that starts at
  ``g0``, passes ``h_mid`` at ``t_hg_zero`` and reaches 0 when the pause ends.
* ``FA_PAUSE_HG``: as ``RA_HG`` but with a paused forward anneal.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .encoding import encode
from .errors import InvalidSchedule
from .ising import IsingModel, SampleSet, autoscale, energy
from .schedules import (
    DeviceProfile,
    fa_pause,
    forward,
    hg_aligned,
    hg_three_point,
    ra_pause,
    validate,
)
from .sim import Annealer

__all__ = [
    "Method",
    "QemcConfig",
    "IterationRecord",
    "QemcTrace",
    "run_qemc",
    "sweep",
    "initial_seed",
    "method_schedules",
    "state_hash",
    "ra_grid",
    "combined_grid",
    "with_reads",
]


class Method(str, enum.Enum):
    RA = "RA"
    HG = "HG"
    RA_HG = "RA_HG"
    FA_PAUSE_HG = "FA_PAUSE_HG"

    @property
    def uses_bias(self) -> bool:
        return self is not Method.RA

    @property
    def uses_reverse(self) -> bool:
        return self in (Method.RA, Method.RA_HG)


@dataclass(frozen=True)
class QemcConfig:
    """One QEMC run.

    ``g0 = None`` means the device maximum for ``HG`` and 2 (valid on every
    shipped device) for the combined methods. ``t_a``/``t_b`` bound the
    pause; the ramps therefore last ``t_a`` and ``T - t_b``.
    """

    method: Method = Method.RA
    iterations: int = 20
    reads_per_iter: int = 1000
    anneal_time_us: float = 100.0
    s_pause: float = 0.5
    h_mid: float = 0.0
    g0: float | None = None
    t_hg_zero_us: float = 10.0
    t_a: float = 10.0
    t_b: float = 90.0
    alpha1: float = 1.0
    alpha2: float = 0.0
    autoscale: bool = True
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.iterations < 1 or self.reads_per_iter < 1:
            raise ValueError("iterations and reads_per_iter must be >= 1")

    def resolved_g0(self, device: DeviceProfile) -> float:
        if self.g0 is not None:
            return float(self.g0)
        return device.g_max if self.method is Method.HG else 2.0

    def name(self) -> str:
        if self.label:
            return self.label
        m = self.method
        if m is Method.RA:
            return f"RA_s{self.s_pause:g}"
        if m is Method.HG:
            return f"HG_h{self.h_mid:g}"
        return f"{m.value}_s{self.s_pause:g}_h{self.h_mid:g}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d


def method_schedules(config: QemcConfig, device: DeviceProfile):
    """``(anneal_schedule, hgain_schedule_or_None)`` for one iteration."""
    T, m = config.anneal_time_us, config.method
    if m is Method.RA:
        return ra_pause(T, config.s_pause, config.t_a, config.t_b), None
    g0 = config.resolved_g0(device)
    if m is Method.HG:
        return forward(T), hg_three_point(T, config.t_hg_zero_us / T, config.h_mid, g0)
    hg = hg_aligned(T, config.t_hg_zero_us, config.h_mid, g0, config.t_b)
    if m is Method.RA_HG:
        return ra_pause(T, config.s_pause, config.t_a, config.t_b), hg
    return fa_pause(T, config.s_pause, config.t_a, config.t_b), hg


def state_hash(x) -> str:
    return hashlib.sha256(np.asarray(x, dtype=np.int8).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    seed_state: np.ndarray
    seed_energy: float
    min_energy: float
    best_state: np.ndarray
    num_valid_reads: int
    mean_energy: float


@dataclass
class QemcTrace:
    config: QemcConfig
    initial_state: np.ndarray
    initial_energy: float
    records: list[IterationRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def min_energies(self) -> np.ndarray:
        return np.array([r.min_energy for r in self.records])

    @property
    def global_best_energies(self) -> np.ndarray:
        """Best energy over iterations ``0..k`` for every ``k``."""
        return np.minimum.accumulate(self.min_energies)

    @property
    def global_best(self) -> tuple[np.ndarray, float]:
        k = int(np.argmin(self.min_energies))
        return self.records[k].best_state.copy(), float(self.records[k].min_energy)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "min_energy", "global_best_energy", "seed_hash"])
        for r, gb in zip(self.records, self.global_best_energies):
            w.writerow([r.iteration, repr(float(r.min_energy)), repr(float(gb)), state_hash(r.seed_state)])
        return buf.getvalue()


def _iteration_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def initial_seed(model: IsingModel, device: DeviceProfile, seed: int, sampler=None,
                 num_reads: int = 1000, anneal_time_us: float = 100.0) -> np.ndarray:
    """Best state of a plain forward-anneal batch (ties to the earliest read)."""
    sampler = sampler or Annealer()
    scaled = autoscale(model, device)[0]
    samples = sampler(scaled, forward(anneal_time_us), num_reads=num_reads, seed=_iteration_seed(seed, 0))
    return SampleSet.from_records(model, samples.states, samples.num_occurrences,
                                  samples.first_read).first[0]


def _check(sched, device):
    if sched is None:
        return []
    return validate(sched, device)


def run_qemc(model: IsingModel, config: QemcConfig, device: DeviceProfile, seed: int,
             sampler=None, seed_state=None) -> QemcTrace:
    """Run ``config.iterations`` QEMC steps on ``model``.

    Energies are always those of ``model``. The anneals themselves see the
    model after encoding and (if ``config.autoscale``) uniform scaling onto
    the device ranges. Iteration ``k + 1`` is seeded with iteration ``k``'s
    best state, even when that is worse than an earlier one.
    """
    sampler = sampler or Annealer()
    ra, hg = method_schedules(config, device)
    violations = _check(ra, device) + _check(hg, device)
    if violations:
        raise InvalidSchedule(f"{config.name()}: schedule violates {device.name} limits", violations)

    if seed_state is None:
        seed_state = initial_seed(model, device, seed, sampler)
    x = np.asarray(seed_state, dtype=np.int8).copy()
    trace = QemcTrace(config, x.copy(), energy(model, x),
                      metadata={"device": device.name, "seed": seed,
                                "anneal_schedule": [list(p) for p in ra.points],
                                "hgain_schedule": None if hg is None else [list(p) for p in hg.points]})
    for k in range(config.iterations):
        if config.method.uses_bias:
            ep = encode(model, x, config.alpha1, config.alpha2)
            target, init, slack = ep.model, ep.init_state(), ep.slack_index
        else:
            target, init, slack = model, x, None
        scale = 1.0
        if config.autoscale:
            target, scale = autoscale(target, device)
        raw = sampler(target, ra, hg, init if config.method.uses_reverse else None,
                      num_reads=config.reads_per_iter, seed=_iteration_seed(seed, k + 1))
        states, occ, first = raw.states, raw.num_occurrences, raw.first_read
        if slack is not None:
            keep = states[:, slack] == 1
            states = np.delete(states[keep], slack, axis=1)
            occ, first = occ[keep], first[keep]
        samples = SampleSet.from_records(model, states, occ, first)
        if samples.empty:
            best, e_min, mean = x.copy(), np.inf, np.nan
        else:
            best, e_min = samples.first
            mean = float(np.average(samples.energies, weights=samples.num_occurrences))
        trace.records.append(IterationRecord(k, x.copy(), energy(model, x), e_min, best,
                                             samples.num_reads, mean))
        trace.metadata.setdefault("scales", []).append(scale)
        x = best
    return trace


def sweep(model: IsingModel, configs, device: DeviceProfile, seed: int, sampler=None,
          seed_state=None) -> list[QemcTrace]:
    """Run every config from the same iteration-0 seed state."""
    configs = list(configs)
    if not configs:
        return []
    sampler = sampler or Annealer()
    if seed_state is None:
        seed_state = initial_seed(model, device, seed, sampler)
    return [run_qemc(model, c, device, seed, sampler, seed_state) for c in configs]


def ra_grid(s_values=None, **kwargs) -> list[QemcConfig]:
    """RA configs for the pause grid ``s in {0.2, 0.25, ..., 0.8}``."""
    if s_values is None:
        s_values = np.round(np.arange(0.2, 0.8 + 1e-9, 0.05), 2)
    return [QemcConfig(Method.RA, s_pause=float(s), **kwargs) for s in s_values]


def combined_grid(method: Method, s_values=(0.3, 0.4, 0.5, 0.6, 0.7),
                  h_values=(0.0, 0.5, 1.0, 1.5, 2.0), **kwargs) -> list[QemcConfig]:
    return [QemcConfig(Method(method), s_pause=float(s), h_mid=float(h), **kwargs)
            for s in s_values for h in h_values]


def with_reads(configs, reads: int) -> list[QemcConfig]:
    return [replace(c, reads_per_iter=reads) for c in configs]
