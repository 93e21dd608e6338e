"""Rotor (spin-vector) Monte Carlo surrogate for schedule-driven anneals.

Every variable is an angle ``theta in [0, pi]`` with ``cos theta`` standing
in for the spin and ``sin theta`` for its transverse component. At anneal
time ``t`` the classical energy is::

    E(theta) = -A(s)/2 sum_i sin theta_i
               + B(s)/2 [g(t) sum_i h_i cos theta_i + sum_{i<j} J_ij cos theta_i cos theta_j]

with ``s = s(t)`` from the anneal schedule and ``g = 1`` without an h-gain
schedule. One sweep proposes a uniform new angle for every variable and
applies the Metropolis rule at inverse temperature ``beta``. Variables of
one graph colour class do not interact and are updated together; reads are
vectorised but each read draws its random numbers from its own stream.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Sequence

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .errors import InvalidSchedule, MissingInitialState
from .ising import Domain, IsingModel, SampleSet
from .schedules import AnnealingFunctions, AnnealSchedule, HGainSchedule, ScheduleKind

__all__ = [
    "SimParams",
    "Annealer",
    "anneal",
    "batch",
    "rotor_energy",
    "delta_energy",
    "color_classes",
    "readout",
]

DENSE_LIMIT = 512
_CHUNK_BYTES = 32 * 2**20


@dataclass(frozen=True)
class SimParams:
    """Monte Carlo settings.

    ``reinitialize_state`` only matters for reverse anneals: when it is off,
    each read starts from the previous read's final state instead of ``init``.
    """

    sweeps_per_us: float = 10.0
    beta: float = 10.0
    rng_seed: int = 0
    num_reads: int = 1000
    reinitialize_state: bool = True

    def __post_init__(self):
        if not (self.sweeps_per_us > 0 and self.beta > 0 and self.num_reads >= 1 and self.rng_seed >= 0):
            raise ValueError(f"invalid simulator parameters: {self}")


def color_classes(model: IsingModel) -> list[np.ndarray]:
    """Colour classes of the coupling graph, one sorted index array per colour.

    A few deterministic greedy strategies are tried and the one with the
    fewest colours wins (earlier strategies on ties).
    """
    g = nx.Graph()
    g.add_nodes_from(range(model.num_vars))
    g.add_edges_from(model.quadratic)
    best = None
    for strategy in ("largest_first", "smallest_last", "DSATUR"):
        colors = nx.greedy_color(g, strategy=strategy)
        k = max(colors.values(), default=-1) + 1
        if best is None or k < best[0]:
            best = (k, colors)
    k, colors = best
    return [np.array(sorted(v for v, c in colors.items() if c == ci), dtype=np.intp) for ci in range(k)]


def rotor_energy(theta, model: IsingModel, A: float, B: float, g: float = 1.0) -> np.ndarray:
    """Classical rotor energy of one state (1-D) or a batch of states (rows)."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    rows, cols, vals = model.edge_arrays
    quad = (c[..., rows] * c[..., cols] * vals).sum(axis=-1)
    return -A / 2 * s.sum(axis=-1) + B / 2 * (g * (c * model.h).sum(axis=-1) + quad)


def _metropolis_delta(cos_old, sin_old, cos_new, sin_new, field, A):
    # field already carries B/2 (g h_i + sum_j J_ij cos theta_j)
    return -A / 2 * (sin_new - sin_old) + field * (cos_new - cos_old)


def delta_energy(theta, i: int, theta_new: float, model: IsingModel, A: float, B: float,
                 g: float = 1.0) -> float:
    """Energy change of moving variable ``i`` to ``theta_new``, as the sampler computes it."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)
    local = model.coupling_matrix()[i] @ c
    field = B / 2 * (g * model.h[i] + local)
    return float(_metropolis_delta(c[i], np.sin(theta[i]), np.cos(theta_new), np.sin(theta_new), field, A))


def readout(theta: np.ndarray, coins: np.ndarray) -> np.ndarray:
    """``sign(cos theta)`` with ``theta == pi/2`` settled by ``coins`` (uniform in [0, 1))."""
    spins = np.where(theta < np.pi / 2, 1, -1).astype(np.int8)
    tie = theta == np.pi / 2
    spins[tie] = np.where(coins[tie] < 0.5, 1, -1)
    return spins


class _Couplings:
    """Coupling blocks in colour-sorted variable order.

    Variables are permuted so that every colour class is a contiguous slice;
    blocks are dense for small models and CSR otherwise.
    """

    def __init__(self, model: IsingModel, classes: list[np.ndarray]):
        self.perm = np.concatenate(classes) if classes else np.zeros(0, dtype=np.intp)
        bounds = np.cumsum([0] + [len(c) for c in classes])
        self.slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        n = model.num_vars
        h = model.h[self.perm]
        self.h = [h[sl].copy() for sl in self.slices]
        inv = np.empty(n, dtype=np.intp)
        inv[self.perm] = np.arange(n)
        rows, cols, vals = model.edge_arrays
        r, c = inv[rows], inv[cols]
        J = sp.coo_matrix((np.r_[vals, vals], (np.r_[r, c], np.r_[c, r])), shape=(n, n)).tocsr()
        self.dense = n <= DENSE_LIMIT
        if self.dense:
            Jd = J.toarray()
            self.blocks = [np.ascontiguousarray(Jd[sl]) for sl in self.slices]
        else:
            self.blocks = [J[sl].tocsr() for sl in self.slices]

    def local(self, ci: int, cos: np.ndarray) -> np.ndarray:
        """Local fields ``sum_j J_ij cos theta_j`` of colour ``ci``; ``cos`` is (n x reads)."""
        if self.dense:
            return self.blocks[ci] @ cos
        return np.asarray(self.blocks[ci] @ cos)


def _time_grid(ra: AnnealSchedule, sweeps_per_us: float, t_stop: float | None):
    T = ra.duration
    K = max(1, int(round(T * sweeps_per_us)))
    t = (np.arange(K) + 0.5) * T / K
    if t_stop is not None:
        t = t[t < t_stop]
    return t


def _initial_angles(ra: AnnealSchedule, init, n: int, reads: int) -> np.ndarray:
    if ra.kind is ScheduleKind.REVERSE:
        theta0 = np.where(np.asarray(init) == 1, 0.0, np.pi)
        return np.tile(theta0, (reads, 1))
    return np.full((reads, n), np.pi / 2)


def _run(theta: np.ndarray, couplings: _Couplings, streams: Sequence[np.random.Generator],
         A: np.ndarray, B: np.ndarray, G: np.ndarray, beta: float) -> np.ndarray:
    """Sweep ``theta`` (reads x n) through the per-sweep envelopes ``A, B, G``.

    Each read draws ``(sweeps, 2, n)`` uniforms per chunk from its own
    stream: proposal fractions of ``pi`` and Metropolis thresholds. A move
    is accepted when ``beta * dE < -log(u)``, which is the Metropolis rule.
    Internally the state is held as (variables x reads) so that a colour
    class is one contiguous block.
    """
    reads, n = theta.shape
    perm = couplings.perm
    th = np.ascontiguousarray(theta[:, perm].T)
    cos, sin = np.cos(th), np.sin(th)
    K = len(A)
    per_sweep = max(1, _CHUNK_BYTES // (reads * 2 * n * 8))
    with np.errstate(divide="ignore"):
        for start in range(0, K, per_sweep):
            stop = min(K, start + per_sweep)
            buf = np.empty((reads, stop - start, 2, n))
            for r, rng in enumerate(streams):
                rng.random(out=buf[r])
            rnd = np.ascontiguousarray(buf.transpose(1, 2, 3, 0)[:, :, perm, :])
            prop = np.pi * rnd[:, 0]
            c_prop = np.cos(prop)
            s_prop = np.sqrt(1.0 - c_prop * c_prop)  # sin >= 0 on [0, pi]
            thresh = -np.log(rnd[:, 1])
            for k in range(start, stop):
                j = k - start
                a, bh, gk = A[k], B[k] / 2, G[k]
                for ci, sl in enumerate(couplings.slices):
                    c_new, s_new = c_prop[j, sl], s_prop[j, sl]
                    field = bh * (gk * couplings.h[ci][:, None] + couplings.local(ci, cos))
                    dE = _metropolis_delta(cos[sl], sin[sl], c_new, s_new, field, a)
                    acc = beta * dE < thresh[j, sl]
                    np.copyto(th[sl], prop[j, sl], where=acc)
                    np.copyto(cos[sl], c_new, where=acc)
                    np.copyto(sin[sl], s_new, where=acc)
    theta[:, perm] = th.T
    return theta


def _check_inputs(model, ra, hg, init):
    if model.domain is not Domain.SPIN:
        raise ValueError("the simulator needs a spin-domain model")
    if hg is not None and not np.isclose(hg.duration, ra.duration, rtol=1e-12, atol=0.0):
        raise InvalidSchedule(f"h-gain schedule lasts {hg.duration} us, anneal lasts {ra.duration} us")
    if ra.kind is ScheduleKind.REVERSE:
        if init is None:
            raise MissingInitialState("reverse anneals need an initial state")
        init = np.asarray(init)
        if init.shape != (model.num_vars,) or not np.all(np.isin(init, (-1, 1))):
            raise InvalidSchedule(f"initial state must be {model.num_vars} spins of -1/+1")


def anneal(model: IsingModel, ra: AnnealSchedule, hg: HGainSchedule | None = None, init=None,
           params: SimParams = SimParams(), functions: AnnealingFunctions | None = None,
           t_stop: float | None = None) -> SampleSet:
    """Sample ``params.num_reads`` read-outs of one anneal.

    Sweep ``k`` of ``K = round(T * sweeps_per_us)`` is evaluated at
    ``t_k = (k + 1/2) T / K``; ``t_stop`` truncates the anneal before the
    first sweep at or after it. Forward anneals start every rotor at
    ``pi/2``; reverse anneals start at ``0`` / ``pi`` for spins ``+1`` /
    ``-1`` of ``init`` (which forward anneals ignore). Returned energies are
    those of ``model`` itself.
    """
    _check_inputs(model, ra, hg, init)
    functions = functions or AnnealingFunctions()
    n, R = model.num_vars, params.num_reads
    t = _time_grid(ra, params.sweeps_per_us, t_stop)
    s = ra(t)
    A, B = functions.A(s), functions.B(s)
    G = hg(t) if hg is not None else np.ones_like(t)

    streams = [np.random.default_rng(c) for c in np.random.SeedSequence(params.rng_seed).spawn(R)]
    couplings = _Couplings(model, color_classes(model))
    if ra.kind is ScheduleKind.REVERSE and not params.reinitialize_state:
        theta = np.empty((R, n))
        state = np.asarray(init)
        for r in range(R):
            th = _run(_initial_angles(ra, state, n, 1), couplings, streams[r:r + 1], A, B, G, params.beta)
            theta[r] = th[0]
            state = readout(th[0], np.full(n, 0.5))
    else:
        theta = _run(_initial_angles(ra, init, n, R), couplings, streams, A, B, G, params.beta)
    coins = np.stack([rng.random(n) for rng in streams])
    spins = readout(theta, coins)

    meta = {
        "params": asdict(params),
        "anneal_schedule": [list(p) for p in ra.points],
        "anneal_kind": ra.kind.value,
        "hgain_schedule": None if hg is None else [list(p) for p in hg.points],
        "num_sweeps": len(t),
        "t_stop": t_stop,
        # device timing options without a surrogate analogue
        "readout_thermalization_us": 0.0,
        "programming_thermalization_us": 0.0,
    }
    return SampleSet.from_reads(model, spins, params.rng_seed, meta)


def batch(model: IsingModel, schedules: Sequence[tuple[AnnealSchedule, HGainSchedule | None]],
          inits: Sequence | None = None, params: SimParams = SimParams(),
          functions: AnnealingFunctions | None = None) -> list[SampleSet]:
    """Run several independent anneal jobs; job ``j`` is seeded from ``(rng_seed, j)``."""
    inits = list(inits) if inits is not None else [None] * len(schedules)
    if len(inits) != len(schedules):
        raise ValueError("need one initial state (or None) per schedule")
    out = []
    for j, ((ra, hg), init) in enumerate(zip(schedules, inits)):
        seed = int(np.random.SeedSequence([params.rng_seed, j]).generate_state(1)[0])
        out.append(anneal(model, ra, hg, init, replace(params, rng_seed=seed), functions))
    return out


class Annealer:
    """Sampler object with a fixed parameter set, callable like :func:`anneal`.

    Each call may override ``num_reads`` and ``seed``; everything else
    comes from ``params``.
    """

    def __init__(self, params: SimParams = SimParams(), functions: AnnealingFunctions | None = None):
        self.params = params
        self.functions = functions

    def __call__(self, model: IsingModel, ra: AnnealSchedule, hg: HGainSchedule | None = None,
                 init=None, *, num_reads: int | None = None, seed: int | None = None) -> SampleSet:
        changes = {}
        if num_reads is not None:
            changes["num_reads"] = num_reads
        if seed is not None:
            changes["rng_seed"] = seed
        return anneal(model, ra, hg, init, replace(self.params, **changes), self.functions)
