"""Bayesian optimisation of scaling constants and schedule parameters.

A Gaussian process with a squared-exponential (ARD) kernel models the
fitness over a box-shaped search space; new points maximise expected
improvement. Inputs are mapped to the unit cube, targets are mean-centred,
and ``noise_alpha`` is the observation-noise variance in fitness units.

The fitness functions score an encoding method on a fixed set of graphs as
the mean improvement of the best sampled cut/clique over a forward-anneal
baseline.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm
from sklearn.exceptions import ConvergenceWarning
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import RBF, ConstantKernel

from .encoding import SCALING_DEFAULTS, default_scaling, encode
from .errors import InvalidSchedule
from .ising import SampleSet, autoscale
from .problems import (
    Baseline,
    WeightedGraph,
    max_clique_ising,
    max_cut_ising,
    score_clique,
    score_cut,
)
from .schedules import (
    DeviceProfile,
    forward,
    hg_three_point,
    ra_from_search,
    ra_pause,
    validate,
)
from .sim import Annealer

__all__ = [
    "SearchSpace",
    "GaussianProcess",
    "expected_improvement",
    "Observation",
    "BayesResult",
    "bayes_optimize",
    "FitnessContext",
    "cut_fitness",
    "clique_fitness",
    "decode_point",
    "grid_scan",
    "Stage",
    "TunedConfig",
    "tune_pipeline",
    "heatmap",
    "heatmap_csv",
    "SCALING_DEFAULTS",
    "DEFAULT_BO_SETTINGS",
    "FAILURE_PENALTY",
]

DEFAULT_BO_SETTINGS = {"init_points": 100, "n_iter": 200, "alpha": 0.01}
FAILURE_PENALTY = -1000.0


@dataclass(frozen=True)
class SearchSpace:
    """Box of named real intervals."""

    dims: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        dims = tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.dims)
        if not dims:
            raise ValueError("search space needs at least one dimension")
        for n, lo, hi in dims:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"bad bounds for {n}: [{lo}, {hi}]")
        if len({n for n, _, _ in dims}) != len(dims):
            raise ValueError("duplicate dimension names")
        object.__setattr__(self, "dims", dims)

    @property
    def names(self) -> list[str]:
        return [n for n, _, _ in self.dims]

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for _, lo, _ in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, _, hi in self.dims])

    def __len__(self):
        return len(self.dims)

    def to_unit(self, x) -> np.ndarray:
        span = np.where(self.upper > self.lower, self.upper - self.lower, 1.0)
        return (np.asarray(x, dtype=float) - self.lower) / span

    def from_unit(self, u) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)

    def as_dict(self, x) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, x)}

    def as_array(self, point) -> np.ndarray:
        if isinstance(point, dict):
            return np.array([point[n] for n in self.names], dtype=float)
        return np.asarray(point, dtype=float)

    def describe(self) -> list[dict]:
        return [{"name": n, "low": lo, "high": hi} for n, lo, hi in self.dims]


class GaussianProcess:
    """GP regression on centred targets with kernel ``c * exp(-|x - x'|^2_ell / 2)``.

    Thin wrapper over scikit-learn's regressor: ``c`` and one length-scale
    per input maximise the log marginal likelihood under box bounds, with a
    few random restarts. ``noise_alpha + jitter`` is added to the diagonal.
    """

    def __init__(self, noise_alpha: float = 0.01, jitter: float = 1e-9,
                 length_bounds: tuple[float, float] = (0.5, 10.0),
                 amplitude_bounds: tuple[float, float] = (0.1, 10.0), restarts: int = 2,
                 seed: int = 0):
        if noise_alpha < 0:
            raise ValueError("noise_alpha must be non-negative")
        self.noise_alpha = float(noise_alpha)
        self.jitter = float(jitter)
        self.length_bounds = length_bounds
        self.amplitude_bounds = amplitude_bounds
        self.restarts = restarts
        self.seed = seed
        self._gpr: GaussianProcessRegressor | None = None

    def fit(self, X, y) -> "GaussianProcess":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        yc = y - self.y_mean
        var = max(float(yc.var()), self.noise_alpha, 1e-10)
        lo, hi = self.amplitude_bounds
        kernel = (ConstantKernel(var, (var * lo, var * hi))
                  * RBF(np.full(X.shape[1], 0.3), self.length_bounds))
        self._gpr = GaussianProcessRegressor(kernel, alpha=self.noise_alpha + self.jitter,
                                             n_restarts_optimizer=self.restarts,
                                             random_state=self.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            self._gpr.fit(X, yc)
        return self

    def predict(self, Xs, return_var: bool = True):
        """Posterior mean and latent-function variance (clipped at 0) at ``Xs``."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        if not return_var:
            return self._gpr.predict(Xs) + self.y_mean
        mu, sd = self._gpr.predict(Xs, return_std=True)
        return mu + self.y_mean, np.maximum(sd * sd, 0.0)

    @property
    def length_scales(self) -> np.ndarray:
        return np.atleast_1d(self._gpr.kernel_.k2.length_scale)

    @property
    def amplitude(self) -> float:
        return float(self._gpr.kernel_.k1.constant_value)


def expected_improvement(mu, var, best: float, xi: float = 0.0) -> np.ndarray:
    """EI for maximisation; exactly 0 where the posterior variance vanishes."""
    sigma = np.sqrt(np.maximum(var, 0.0))
    imp = mu - best - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, imp / sigma, 0.0)
        ei = np.where(sigma > 0, imp * norm.cdf(z) + sigma * norm.pdf(z), 0.0)
    return np.maximum(ei, 0.0)


@dataclass(frozen=True)
class Observation:
    point: dict[str, float]
    value: float
    phase: str  # "init" | "warm" | "bo"
    failed: bool = False


@dataclass
class BayesResult:
    best_point: dict[str, float]
    best_value: float
    history: list[Observation]
    space: SearchSpace
    gp: GaussianProcess | None = None
    settings: dict = field(default_factory=dict)

    def recommended_point(self) -> dict[str, float]:
        """Observed point with the highest posterior mean (robust to lucky noise)."""
        X = np.array([self.space.to_unit(self.space.as_array(o.point)) for o in self.history])
        mu = self.gp.predict(X, return_var=False)
        return dict(self.history[int(np.argmax(mu))].point)

    def values(self) -> np.ndarray:
        return np.array([o.value for o in self.history])


def _maximize_acquisition(gp: GaussianProcess, best: float, d: int, rng: np.random.Generator,
                          n_random: int = 2000, n_starts: int = 5, xi: float = 0.0,
                          rounds: int = 25, pop: int = 32) -> np.ndarray:
    """Random screening, then a shrinking-step local search from the best few candidates."""

    def ei(u):
        mu, var = gp.predict(u)
        return expected_improvement(mu, var, best, xi)

    cand = rng.random((n_random, d))
    vals = ei(cand)
    top = np.argsort(-vals, kind="stable")[:n_starts]
    x, fx = cand[top].copy(), vals[top].copy()
    k = len(x)
    step = 0.05
    for _ in range(rounds):
        trial = np.clip(x[:, None, :] + step * rng.normal(size=(k, pop, d)), 0.0, 1.0)
        tv = ei(trial.reshape(-1, d)).reshape(k, pop)
        j = np.argmax(tv, axis=1)
        better = tv[np.arange(k), j] > fx
        x[better] = trial[np.arange(k), j][better]
        fx[better] = tv[np.arange(k), j][better]
        step *= 0.85
    return x[int(np.argmax(fx))]


def bayes_optimize(fitness: Callable[[dict], float], space: SearchSpace, init_points: int = 100,
                   n_iter: int = 200, noise_alpha: float = 0.01, seed: int = 0,
                   initial_points: Sequence | None = None, failure_penalty: float | None = None,
                   xi: float = 0.0) -> BayesResult:
    """Maximise ``fitness`` over ``space``.

    ``init_points`` evaluations seed the model (any ``initial_points`` are
    evaluated first and count towards them, the rest are uniform random);
    ``n_iter`` further points maximise expected improvement. A fitness call
    that raises is recorded as ``failure_penalty`` when one is given and
    re-raised otherwise. ``best_point`` is the observed argmax.
    """
    if init_points < 1 and not initial_points:
        raise ValueError("need at least one initial point")
    rng = np.random.default_rng(seed)
    d = len(space)
    history: list[Observation] = []
    U: list[np.ndarray] = []

    def evaluate(u, phase):
        x = space.from_unit(u)
        point = space.as_dict(x)
        failed = False
        try:
            value = float(fitness(point))
        except Exception:
            if failure_penalty is None:
                raise
            value, failed = float(failure_penalty), True
        history.append(Observation(point, value, phase, failed))
        U.append(np.asarray(u, dtype=float))

    warm = [space.to_unit(space.as_array(p)) for p in (initial_points or [])]
    for u in warm:
        evaluate(np.clip(u, 0.0, 1.0), "warm")
    for _ in range(max(0, init_points - len(warm))):
        evaluate(rng.random(d), "init")

    gp = GaussianProcess(noise_alpha, seed=seed)
    for _ in range(n_iter):
        y = np.array([o.value for o in history])
        gp.fit(np.array(U), y)
        incumbent = float(np.max(gp.predict(np.array(U), return_var=False)))
        evaluate(_maximize_acquisition(gp, incumbent, d, rng, xi=xi), "bo")
    y = np.array([o.value for o in history])
    gp.fit(np.array(U), y)
    k = int(np.argmax(y))
    settings = {"init_points": init_points, "n_iter": n_iter, "alpha": noise_alpha, "seed": seed,
                "acquisition": "expected_improvement", "xi": xi, "kernel": "squared_exponential_ard"}
    return BayesResult(dict(history[k].point), float(y[k]), history, space, gp, settings)


# -- fitness functions --------------------------------------------------------

@dataclass
class FitnessContext:
    """Everything a fitness evaluation needs besides the search point.

    ``sampler`` follows the simulator's calling convention so tests can
    substitute stubs. ``fixed`` supplies values for parameters that are not
    search dimensions (``alpha1``, ``alpha2``, ``p1``, ``p2``,
    ``t_mid_frac``, ``g_mid``).
    """

    problem_class: str  # "max-cut" | "max-clique"
    graphs: list[WeightedGraph]
    baselines: list[Baseline]
    device: DeviceProfile
    method: str = "HG"  # "RA" | "HG" | "RA_HG"
    anneal_time_us: float = 1.0
    num_reads: int = 1000
    sampler: Callable = field(default_factory=Annealer)
    fixed: dict = field(default_factory=dict)
    seed: int = 0
    failure_penalty: float = FAILURE_PENALTY
    density: float | None = None

    def __post_init__(self):
        if len(self.graphs) != len(self.baselines):
            raise ValueError("graphs and baselines must be aligned")
        if self.method not in ("RA", "HG", "RA_HG"):
            raise ValueError(f"unknown method {self.method!r}")

    def model(self, i: int):
        g = self.graphs[i]
        return max_cut_ising(g) if self.problem_class == "max-cut" else max_clique_ising(g)


def decode_point(point: dict, ctx: FitnessContext):
    """``(anneal_schedule, hgain_or_None, alpha1, alpha2)`` for a search point."""
    p = {**ctx.fixed, **point}
    T = ctx.anneal_time_us
    d_alpha = default_scaling(ctx.problem_class, ctx.density) if ctx.density is not None else (1.0, 0.0)
    alpha1 = float(p.get("alpha1", d_alpha[0]))
    alpha2 = float(p.get("alpha2", d_alpha[1]))
    hg = None
    if ctx.method in ("HG", "RA_HG"):
        g_max = ctx.device.g_max
        hg = hg_three_point(T, float(p.get("t_mid_frac", 0.5)), float(p.get("g_mid", g_max / 2)),
                            g_max, g_max=g_max)
    if ctx.method == "HG":
        ra = forward(T)
    elif "p1" in p or "p2" in p:
        ra = ra_from_search(T, float(p.get("p1", 0.5)), float(p.get("p2", 0.5)))
    else:
        ra = ra_pause(T, 0.25, 0.25 * T, 0.75 * T)
    return ra, hg, alpha1, alpha2


def _instance_seed(ctx: FitnessContext, i: int) -> int:
    return int(np.random.SeedSequence([ctx.seed, i]).generate_state(1)[0])


def _best_values(point: dict, ctx: FitnessContext, scorer) -> list[float | None]:
    ra, hg, alpha1, alpha2 = decode_point(point, ctx)
    violations = validate(ra, ctx.device) + (validate(hg, ctx.device) if hg is not None else [])
    if violations:
        raise InvalidSchedule("decoded schedule violates device limits", violations)
    out = []
    for i, (g, base) in enumerate(zip(ctx.graphs, ctx.baselines)):
        model = ctx.model(i)
        x0 = np.array(base.best_state, dtype=np.int8)
        if ctx.method == "RA":
            target, init, slack = model, x0, None
        else:
            ep = encode(model, x0, alpha1, alpha2)
            target, init, slack = ep.model, ep.init_state(), ep.slack_index
        target = autoscale(target, ctx.device)[0]
        raw = ctx.sampler(target, ra, hg, init if ctx.method != "HG" else None,
                          num_reads=ctx.num_reads, seed=_instance_seed(ctx, i))
        states, occ, first = raw.states, raw.num_occurrences, raw.first_read
        if slack is not None:
            keep = states[:, slack] == 1
            states, occ, first = np.delete(states[keep], slack, axis=1), occ[keep], first[keep]
        samples = SampleSet.from_records(model, states, occ, first)
        values = [scorer(g, s) for s in samples.states]
        values = [v for v in values if v is not None]
        out.append(max(values) if values else None)
    return out


def cut_fitness(point: dict, ctx: FitnessContext) -> float:
    """Mean over instances of (best sampled cut - baseline cut)."""
    best = _best_values(point, ctx, score_cut)
    return float(np.mean([b - base.best_value for b, base in zip(best, ctx.baselines)]))


def clique_fitness(point: dict, ctx: FitnessContext) -> float:
    """Mean clique-weight improvement; the failure penalty if any instance has no valid clique.

    A baseline without a valid clique counts as weight 0.
    """
    try:
        best = _best_values(point, ctx, score_clique)
    except InvalidSchedule:
        return ctx.failure_penalty
    if any(b is None for b in best):
        return ctx.failure_penalty
    return float(np.mean([b - (base.best_value or 0.0) for b, base in zip(best, ctx.baselines)]))


def _fitness_for(ctx: FitnessContext) -> Callable[[dict], float]:
    f = cut_fitness if ctx.problem_class == "max-cut" else clique_fitness
    return lambda point: f(point, ctx)


def grid_scan(fitness: Callable[[dict], float], name: str = "alpha1", lo: float = 0.01,
              hi: float = 1.0, step: float = 0.01, fixed: dict | None = None) -> tuple[float, list]:
    """Evaluate ``fitness`` on ``lo, lo + step, ..., hi``; return (argmax, [(value, fitness)])."""
    grid = np.round(np.arange(lo, hi + step / 2, step), 10)
    rows = [(float(v), float(fitness({**(fixed or {}), name: float(v)}))) for v in grid]
    k = int(np.argmax([r[1] for r in rows]))
    return rows[k][0], rows


# -- staged tuning ------------------------------------------------------------

class Stage(str, enum.Enum):
    SCALING_AND_SCHEDULE = "ScalingAndSchedule"
    SCHEDULE_ONLY = "ScheduleOnly"
    SCALING_REFIT = "ScalingRefit"


@dataclass
class TunedConfig:
    problem_class: str
    density: float | None
    method: str
    alpha1: float
    alpha2: float
    anneal_schedule: list
    hgain_schedule: list | None
    anneal_time_us: float
    stage: str
    best_fitness: float
    point: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _scaling_dims(problem_class: str) -> list[tuple[str, float, float]]:
    dims = [("alpha1", 0.01, 1.0)]
    if problem_class == "max-clique":
        dims.append(("alpha2", 0.01, 1.0))
    return dims


def schedule_dims(method: str, device: DeviceProfile) -> list[tuple[str, float, float]]:
    dims = []
    if method in ("RA", "RA_HG"):
        dims += [("p1", 0.1, 0.9), ("p2", 0.1, 0.9)]
    if method in ("HG", "RA_HG"):
        dims += [("t_mid_frac", 0.01, 0.99), ("g_mid", 0.0, device.g_max)]
    return dims


def stage_space(ctx: FitnessContext, stage: Stage) -> SearchSpace:
    stage = Stage(stage)
    if stage is Stage.SCALING_AND_SCHEDULE:
        return SearchSpace(tuple(_scaling_dims(ctx.problem_class) + schedule_dims("HG", ctx.device)))
    if stage is Stage.SCHEDULE_ONLY:
        return SearchSpace(tuple(schedule_dims(ctx.method, ctx.device)))
    return SearchSpace(tuple(_scaling_dims(ctx.problem_class)))


def tune_pipeline(ctx: FitnessContext, stage: Stage, previous: TunedConfig | None = None,
                  init_points: int = 100, n_iter: int = 200, noise_alpha: float = 0.01,
                  seed: int = 0, grid_check: bool = True) -> TunedConfig:
    """One stage of the staged tuning workflow.

    ``ScalingAndSchedule`` fits the scaling constants jointly with the
    three-point HG midpoint (method forced to HG); for Max-Cut the best
    ``alpha1`` is then cross-checked on the grid ``0.01..1`` with the
    schedule fixed. ``ScheduleOnly`` fits the schedule of ``ctx.method``
    with the scaling constants fixed (from ``previous`` or ``ctx``).
    ``ScalingRefit`` fixes ``previous``'s schedule and refits the scaling
    constants, warm-started at ``previous``'s values.
    """
    stage = Stage(stage)
    if stage is Stage.SCALING_AND_SCHEDULE:
        ctx = replace(ctx, method="HG")
    fixed = dict(ctx.fixed)
    warm = None
    if previous is not None:
        fixed.update(previous.point)
        fixed.setdefault("alpha1", previous.alpha1)
        fixed.setdefault("alpha2", previous.alpha2)
    space = stage_space(ctx, stage)
    for n in space.names:
        fixed.pop(n, None)
    if stage is Stage.SCALING_REFIT:
        if previous is None:
            raise ValueError("ScalingRefit needs the previous stage's result")
        warm = [{n: (previous.alpha1 if n == "alpha1" else previous.alpha2) for n in space.names}]
    ctx = replace(ctx, fixed=fixed)
    fit = _fitness_for(ctx)
    res = bayes_optimize(fit, space, init_points, n_iter, noise_alpha, seed, initial_points=warm,
                         failure_penalty=ctx.failure_penalty)
    point, value = dict(res.best_point), res.best_value
    settings = dict(res.settings)
    if stage is Stage.SCALING_AND_SCHEDULE and ctx.problem_class == "max-cut" and grid_check:
        sched = {k: v for k, v in point.items() if k != "alpha1"}
        a1, rows = grid_scan(fit, "alpha1", fixed=sched)
        point["alpha1"] = a1
        value = max(r[1] for r in rows)
        settings["grid_check"] = {"alpha1": a1, "points": len(rows)}
    ra, hg, alpha1, alpha2 = decode_point(point, ctx)
    if ctx.problem_class == "max-cut":
        alpha2 = 0.0
    return TunedConfig(ctx.problem_class, ctx.density, ctx.method, alpha1, alpha2,
                       [list(p) for p in ra.points], None if hg is None else [list(p) for p in hg.points],
                       ctx.anneal_time_us, stage.value, float(value), point, settings)


# -- heatmaps -----------------------------------------------------------------

def heatmap(result: BayesResult, x: str, y: str, resolution: int = 50,
            fixed: dict | None = None) -> list[tuple[float, float, float, float]]:
    """Posterior mean and variance on a ``resolution x resolution`` grid over dims ``x``, ``y``.

    Other dimensions are held at ``fixed`` values or the best observed point.
    """
    space = result.space
    base = {**result.best_point, **(fixed or {})}
    xi, yi = space.names.index(x), space.names.index(y)
    gx = np.linspace(space.lower[xi], space.upper[xi], resolution)
    gy = np.linspace(space.lower[yi], space.upper[yi], resolution)
    pts = np.tile(space.as_array(base), (resolution * resolution, 1))
    XX, YY = np.meshgrid(gx, gy, indexing="ij")
    pts[:, xi], pts[:, yi] = XX.ravel(), YY.ravel()
    mu, var = result.gp.predict(space.to_unit(pts))
    return [(float(a), float(b), float(m), float(v)) for a, b, m, v in zip(pts[:, xi], pts[:, yi], mu, var)]


def heatmap_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "posterior_mean", "posterior_variance"])
    w.writerows([[repr(v) for v in r] for r in rows])
    return buf.getvalue()
