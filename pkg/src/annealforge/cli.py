"""``annealforge`` command-line interface.

Every subcommand resolves a flat run configuration from built-in defaults,
an optional ``--config`` JSON file and explicit flags (in increasing
priority; ``ANNEALFORGE_SEED`` sits between the file and the flags). The
resolved configuration is written to ``<out>/run_config.json`` and its
SHA-256 is embedded in the first line of every output file. Outputs are
only ever written inside ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .encoding import encode, write_encoded
from .errors import AnnealForgeError, InvalidSchedule
from .hardware import PrecisionSpec, chimera, dumps_graph, inject_defects, pegasus, spin_glass
from .ising import SampleSet, autoscale, dumps_problem, read_problem
from .problems import (
    compute_baseline,
    dumps_weighted_graph,
    er_instances,
    erdos_renyi,
    max_clique_ising,
    max_cut_ising,
    score_clique,
    score_cut,
)
from .qemc import Method, QemcConfig, combined_grid, ra_grid, sweep
from .schedules import get_device, read_schedules, validate
from .sim import Annealer, SimParams
from .tuner import (
    DEFAULT_BO_SETTINGS,
    FitnessContext,
    Stage,
    TunedConfig,
    stage_space,
    tune_pipeline,
)

SEED_ENV = "ANNEALFORGE_SEED"

# per-command defaults; keys double as config-file keys
DEFAULTS: dict[str, dict] = {
    "generate": {"kind": "er-graph", "n": 65, "p": 0.5, "count": 1, "m": 2, "precision": 10,
                 "fabric_only": True, "defect_nodes": 0, "defect_edges": 0},
    "anneal": {"problem": None, "schedule": None, "hgain": None, "init": None, "reads": 1000,
               "sweeps_per_us": 10.0, "beta": 10.0, "autoscale": False},
    "encode": {"problem": None, "init": None, "alpha1": 1.0, "alpha2": 0.0},
    "qemc": {"problem": None, "method": "RA", "grid": None, "iterations": 20, "reads": 1000,
             "anneal_time_us": 100.0, "s_pause": 0.5, "h_mid": 0.0, "g0": None, "t_hg_zero_us": 10.0,
             "alpha1": 1.0, "alpha2": 0.0, "sweeps_per_us": 10.0, "beta": 10.0,
             "emit_plotdata": False},
    "tune": {"problem_class": "max-cut", "density": 0.5, "stage": "ScalingAndSchedule",
             "method": "HG", "n": 65, "graphs": 10, "reads": 1000, "baseline_reads": 1000,
             "anneal_time_us": 1.0, "init_points": DEFAULT_BO_SETTINGS["init_points"],
             "n_iter": DEFAULT_BO_SETTINGS["n_iter"], "alpha": DEFAULT_BO_SETTINGS["alpha"],
             "previous": None, "dry_run": False, "sweeps_per_us": 10.0, "beta": 10.0},
    "plotdata": {"sweep": None},
    "validate-schedule": {"schedule": None},
}
COMMON = {"seed": 0, "device": "dw2000q", "out": None, "threads": 1}
# keys that never influence numeric outputs and so stay out of the hash
UNHASHED = ("out", "threads", "config")


class UsageError(Exception):
    pass


# -- configuration -------------------------------------------------------------

def resolve_config(command: str, args: argparse.Namespace, environ=os.environ) -> dict:
    cfg = {"command": command, **COMMON, **DEFAULTS[command]}
    path = getattr(args, "config", None)
    if path:
        loaded = json.loads(Path(path).read_text())
        unknown = set(loaded) - set(cfg) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    if environ.get(SEED_ENV):
        cfg["seed"] = int(environ[SEED_ENV])
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    writes = command != "validate-schedule" and not cfg.get("dry_run")
    if cfg["out"] is None and writes:
        raise UsageError("--out is required")
    if int(cfg["seed"]) < 0:
        raise UsageError("seed must be non-negative")
    cfg["seed"] = int(cfg["seed"])
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in UNHASHED}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


class OutDir:
    """Writes files under one directory and refuses paths that escape it."""

    def __init__(self, path, cfg: dict):
        self.root = Path(path).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.written: list[Path] = []

    def _target(self, name: str) -> Path:
        p = (self.root / name).resolve()
        if self.root not in p.parents:
            raise UsageError(f"refusing to write {name!r} outside {self.root}")
        return p

    def write(self, name: str, text: str, comment: str = "#") -> Path:
        p = self._target(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(f"{comment} config_sha256 {self.hash}\n{text}")
        self.written.append(p)
        return p

    def write_json(self, name: str, obj: dict) -> Path:
        p = self._target(name)
        p.write_text(json.dumps({"config_sha256": self.hash, **obj}, indent=2, sort_keys=True) + "\n")
        self.written.append(p)
        return p

    def write_run_config(self) -> None:
        body = {k: v for k, v in self.cfg.items() if k not in UNHASHED}
        self.write_json("run_config.json", {"config": body, "version": __version__})


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v))


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required parameter(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _read_state(path) -> np.ndarray:
    vals = [int(v) for v in Path(path).read_text().replace(",", " ").split() if not v.startswith("#")]
    return np.array(vals, dtype=np.int8)


def _sim_params(cfg) -> SimParams:
    return SimParams(sweeps_per_us=float(cfg["sweeps_per_us"]), beta=float(cfg["beta"]),
                     rng_seed=cfg["seed"], num_reads=int(cfg.get("reads", 1000)))


def _raise_violations(label: str, violations) -> None:
    if violations:
        raise InvalidSchedule(f"{label} violates device limits", violations)


# -- commands ------------------------------------------------------------------

def cmd_generate(cfg: dict) -> int:
    out = OutDir(cfg["out"], cfg)
    kind, seed = cfg["kind"], cfg["seed"]
    if kind == "er-graph":
        n, p = int(cfg["n"]), float(cfg["p"])
        if n < 1:
            raise UsageError("n must be >= 1")
        children = np.random.SeedSequence(seed).spawn(int(cfg["count"]))
        for idx, c in enumerate(children):
            g = erdos_renyi(n, p, int(c.generate_state(1)[0]))
            stem = f"er_n{n}_p{p:g}_{idx:03d}"
            out.write(f"{stem}.graph", dumps_weighted_graph(g))
            out.write(f"{stem}.maxcut.problem", dumps_problem(max_cut_ising(g)))
            out.write(f"{stem}.maxclique.problem", dumps_problem(max_clique_ising(g)))
    elif kind in ("chimera-glass", "pegasus-glass"):
        m = int(cfg["m"])
        g = chimera(m) if kind == "chimera-glass" else pegasus(m, fabric_only=bool(cfg["fabric_only"]))
        if cfg["defect_nodes"] or cfg["defect_edges"]:
            g = inject_defects(g, int(cfg["defect_nodes"]), int(cfg["defect_edges"]), seed)
        spec = PrecisionSpec(int(cfg["precision"]))
        model = spin_glass(g, spec, seed)
        stem = f"{kind.split('-')[0]}_m{m}_prec{spec.levels}"
        out.write(f"{stem}.graph", dumps_graph(g))
        out.write(f"{stem}.problem", dumps_problem(model, [f"qubits {' '.join(map(str, g.nodes))}"]))
    else:
        raise UsageError(f"unknown kind {kind!r}")
    out.write_run_config()
    return 0


def samples_csv(samples) -> str:
    n = samples.num_vars
    rows = [[*map(int, s), _fmt(e), int(c)] for s, e, c in samples.records()]
    return _csv(rows, [f"spin_{i}" for i in range(n)] + ["energy", "occurrences"])


def cmd_anneal(cfg: dict) -> int:
    _require(cfg, "problem", "schedule")
    device = get_device(cfg["device"])
    model = read_problem(cfg["problem"])
    ra, hg = read_schedules(cfg["schedule"])
    if cfg["hgain"]:
        hg = read_schedules(cfg["hgain"])[1]
    if ra is None:
        raise UsageError("schedule file has no anneal lines")
    _raise_violations("anneal schedule", validate(ra, device))
    if hg is not None:
        _raise_violations("h-gain schedule", validate(hg, device))
    init = _read_state(cfg["init"]) if cfg["init"] else None
    target = autoscale(model, device)[0] if cfg["autoscale"] else model
    out = OutDir(cfg["out"], cfg)
    samples = Annealer(_sim_params(cfg))(target, ra, hg, init)
    if cfg["autoscale"]:
        samples = SampleSet.from_records(model, samples.states, samples.num_occurrences,
                                         samples.first_read, samples.rng_seed, samples.metadata)
    out.write("samples.csv", samples_csv(samples))
    out.write_run_config()
    return 0


def cmd_encode(cfg: dict) -> int:
    _require(cfg, "problem", "init")
    model = read_problem(cfg["problem"])
    ep = encode(model, _read_state(cfg["init"]), float(cfg["alpha1"]), float(cfg["alpha2"]),
                source_id=Path(cfg["problem"]).name)
    out = OutDir(cfg["out"], cfg)
    target = out._target("encoded.problem")
    write_encoded(ep, target)
    # prepend the hash to both files
    for p in (target, Path(str(target) + ".json")):
        if p.suffix == ".json":
            side = json.loads(p.read_text())
            p.write_text(json.dumps({"config_sha256": out.hash, **side}, indent=2, sort_keys=True) + "\n")
        else:
            p.write_text(f"# config_sha256 {out.hash}\n" + p.read_text())
    out.write_run_config()
    return 0


def qemc_configs(cfg: dict) -> list[QemcConfig]:
    common = {"iterations": int(cfg["iterations"]), "reads_per_iter": int(cfg["reads"]),
              "anneal_time_us": float(cfg["anneal_time_us"]), "alpha1": float(cfg["alpha1"]),
              "alpha2": float(cfg["alpha2"]), "t_hg_zero_us": float(cfg["t_hg_zero_us"]),
              "g0": None if cfg["g0"] is None else float(cfg["g0"])}
    grid = cfg["grid"]
    if grid is None:
        return [QemcConfig(Method(cfg["method"]), s_pause=float(cfg["s_pause"]),
                           h_mid=float(cfg["h_mid"]), **common)]
    if grid == "ra":
        return ra_grid(**common)
    if grid in ("ra_hg", "fa_pause_hg"):
        return combined_grid(Method(grid.upper()), **common)
    raise UsageError(f"unknown grid {grid!r}")


def cmd_qemc(cfg: dict) -> int:
    _require(cfg, "problem")
    device = get_device(cfg["device"])
    model = read_problem(cfg["problem"])
    configs = qemc_configs(cfg)
    sampler = Annealer(_sim_params(cfg))
    out = OutDir(cfg["out"], cfg)
    traces = sweep(model, configs, device, cfg["seed"], sampler)
    for tr in traces:
        out.write(f"trace_{tr.config.name()}.csv", tr.to_csv())
        if cfg["emit_plotdata"]:
            out.write(f"plotdata/{tr.config.name()}.csv", _series(tr.to_csv()))
    out.write_run_config()
    return 0


def _series(trace_csv: str) -> str:
    rows = list(csv.DictReader(line for line in trace_csv.splitlines() if not line.startswith("#")))
    return _csv([[r["iteration"], r["min_energy"]] for r in rows], ["iteration", "min_energy"])


def cmd_plotdata(cfg: dict) -> int:
    _require(cfg, "sweep")
    traces = sorted(Path(cfg["sweep"]).glob("trace_*.csv"))
    if not traces:
        raise UsageError(f"no trace_*.csv files under {cfg['sweep']}")
    out = OutDir(cfg["out"], cfg)
    for p in traces:
        out.write(f"series_{p.stem[len('trace_'):]}.csv", _series(p.read_text()))
    out.write_run_config()
    return 0


def rescoring_sampler(sampler, device):
    """Sampler that anneals the autoscaled model but reports energies of the original."""

    def run(model, ra, hg=None, init=None, *, num_reads, seed=None):
        raw = sampler(autoscale(model, device)[0], ra, hg, init, num_reads=num_reads, seed=seed)
        return SampleSet.from_records(model, raw.states, raw.num_occurrences, raw.first_read,
                                      raw.rng_seed, raw.metadata)

    return run


def _tune_context(cfg: dict, device, with_instances: bool) -> FitnessContext:
    sampler = Annealer(_sim_params(cfg))
    density = float(cfg["density"])
    cut = cfg["problem_class"] == "max-cut"
    graphs, baselines = [], []
    if with_instances:
        graphs = er_instances(int(cfg["n"]), (density,), int(cfg["graphs"]), cfg["seed"])[density]
        run = rescoring_sampler(sampler, device)
        for i, g in enumerate(graphs):
            model = max_cut_ising(g) if cut else max_clique_ising(g)
            seed = int(np.random.SeedSequence([cfg["seed"], 10_000 + i]).generate_state(1)[0])
            scorer = (lambda s, g=g: score_cut(g, s)) if cut else (lambda s, g=g: score_clique(g, s))
            baselines.append(compute_baseline(
                model, lambda m, ra, seed=seed, **kw: run(m, ra, seed=seed, **kw),
                int(cfg["baseline_reads"]), float(cfg["anneal_time_us"]), f"g{i}", scorer))
    return FitnessContext(cfg["problem_class"], graphs, baselines, device, cfg["method"],
                          float(cfg["anneal_time_us"]), int(cfg["reads"]), sampler,
                          seed=cfg["seed"], density=density)


def cmd_tune(cfg: dict) -> int:
    device = get_device(cfg["device"])
    stage = Stage(cfg["stage"])
    if cfg["problem_class"] not in ("max-cut", "max-clique"):
        raise UsageError(f"unknown problem class {cfg['problem_class']!r}")
    ctx = _tune_context(cfg, device, with_instances=not cfg["dry_run"])
    space = stage_space(ctx, stage)
    if cfg["dry_run"]:
        print(json.dumps({"stage": stage.value, "method": ctx.method if stage is not
                          Stage.SCALING_AND_SCHEDULE else "HG", "space": space.describe(),
                          "init_points": cfg["init_points"], "n_iter": cfg["n_iter"],
                          "alpha": cfg["alpha"]}, indent=2))
        return 0
    previous = None
    if cfg["previous"]:
        d = json.loads(Path(cfg["previous"]).read_text())
        d.pop("config_sha256", None)
        previous = TunedConfig(**d)
    out = OutDir(cfg["out"], cfg)
    tuned = tune_pipeline(ctx, stage, previous, int(cfg["init_points"]), int(cfg["n_iter"]),
                          float(cfg["alpha"]), cfg["seed"])
    out.write_json("tuned.json", json.loads(tuned.to_json()))
    out.write_run_config()
    return 0


def cmd_validate_schedule(cfg: dict) -> int:
    _require(cfg, "schedule")
    device = get_device(cfg["device"])
    ra, hg = read_schedules(cfg["schedule"])
    violations = (validate(ra, device) if ra is not None else []) + \
                 (validate(hg, device) if hg is not None else [])
    _raise_violations(f"{cfg['schedule']}", violations)
    print(f"ok: schedule valid on {device.name}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "anneal": cmd_anneal,
    "encode": cmd_encode,
    "qemc": cmd_qemc,
    "tune": cmd_tune,
    "plotdata": cmd_plotdata,
    "validate-schedule": cmd_validate_schedule,
}


# -- argument parsing ----------------------------------------------------------

def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {v!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annealforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help, argument_default=None)
        p.add_argument("--config", help="JSON file with flat parameter overrides")
        p.add_argument("--seed", type=int)
        p.add_argument("--device", help="dw2000q | adv4 | adv6 | custom:<path>")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="cap on numeric library threads")
        return p

    p = add("generate", "write problem instances")
    p.add_argument("kind", nargs="?", choices=["er-graph", "chimera-glass", "pegasus-glass"])
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--precision", type=int)
    p.add_argument("--fabric-only", dest="fabric_only", type=_bool)
    p.add_argument("--defect-nodes", dest="defect_nodes", type=int)
    p.add_argument("--defect-edges", dest="defect_edges", type=int)

    p = add("anneal", "sample a problem with the simulated annealer")
    p.add_argument("--problem")
    p.add_argument("--schedule")
    p.add_argument("--hgain")
    p.add_argument("--init")
    p.add_argument("--reads", type=int)
    p.add_argument("--sweeps-per-us", dest="sweeps_per_us", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--autoscale", type=_bool)

    p = add("encode", "encode an initial state into a problem")
    p.add_argument("--problem")
    p.add_argument("--init")
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)

    p = add("qemc", "run iterated state encoding")
    p.add_argument("--problem")
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--grid", choices=["ra", "ra_hg", "fa_pause_hg"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--reads", type=int)
    p.add_argument("--anneal-time-us", dest="anneal_time_us", type=float)
    p.add_argument("--s-pause", dest="s_pause", type=float)
    p.add_argument("--h-mid", dest="h_mid", type=float)
    p.add_argument("--g0", type=float)
    p.add_argument("--t-hg-zero-us", dest="t_hg_zero_us", type=float)
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--sweeps-per-us", dest="sweeps_per_us", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--emit-plotdata", dest="emit_plotdata", action="store_const", const=True)

    p = add("tune", "Bayesian optimisation of scaling and schedule parameters")
    p.add_argument("--problem-class", dest="problem_class", choices=["max-cut", "max-clique"])
    p.add_argument("--density", type=float)
    p.add_argument("--stage", choices=[s.value for s in Stage])
    p.add_argument("--method", choices=["RA", "HG", "RA_HG"])
    p.add_argument("--n", type=int)
    p.add_argument("--graphs", type=int)
    p.add_argument("--reads", type=int)
    p.add_argument("--baseline-reads", dest="baseline_reads", type=int)
    p.add_argument("--anneal-time-us", dest="anneal_time_us", type=float)
    p.add_argument("--init-points", dest="init_points", type=int)
    p.add_argument("--n-iter", dest="n_iter", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--previous", help="tuned.json from an earlier stage")
    p.add_argument("--dry-run", dest="dry_run", action="store_const", const=True)
    p.add_argument("--sweeps-per-us", dest="sweeps_per_us", type=float)
    p.add_argument("--beta", type=float)

    p = add("plotdata", "reshape QEMC traces into plot series")
    p.add_argument("--sweep", help="directory holding trace_*.csv files")

    p = add("validate-schedule", "check a schedule file against a device profile")
    p.add_argument("--schedule")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        with threadpool_limits(limits=max(1, int(cfg["threads"]))):
            return COMMANDS[args.command](cfg)
    except InvalidSchedule as exc:
        print(f"error: {exc}", file=sys.stderr)
        for v in exc.violations or []:
            print(f"  {v.kind}: {v.message}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (AnnealForgeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
