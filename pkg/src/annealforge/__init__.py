"""Desk-scale toolkit for initial-state encoding in quantum annealing."""

from .encoding import EncodedProblem, default_scaling, encode, row_norm_bound
from .errors import AnnealForgeError, InvalidSchedule
from .hardware import HardwareGraph, chimera, pegasus, spin_glass
from .ising import IsingModel, SampleSet, autoscale, brute_force, energies, energy
from .problems import erdos_renyi, max_clique_ising, max_cut_ising, score_clique, score_cut
from .qemc import Method, QemcConfig, run_qemc, sweep
from .schedules import DEVICES, effective_gain, forward, hg_three_point, ra_pause, validate
from .sim import Annealer
from .tuner import Stage, bayes_optimize, tune_pipeline

__version__ = "0.1.0"

__all__ = [
    "AnnealForgeError", "InvalidSchedule",
    "IsingModel", "SampleSet", "energy", "energies", "autoscale", "brute_force",
    "HardwareGraph", "chimera", "pegasus", "spin_glass",
    "erdos_renyi", "max_cut_ising", "max_clique_ising", "score_cut", "score_clique",
    "EncodedProblem", "encode", "default_scaling", "row_norm_bound",
    "DEVICES", "forward", "ra_pause", "hg_three_point", "validate", "effective_gain",
    "Annealer",
    "Method", "QemcConfig", "run_qemc", "sweep",
    "Stage", "bayes_optimize", "tune_pipeline",
]
