"""Initial-state encoding through a linear bias term.

A model ``Q(x) = sum h_i x_i + sum J_ij x_i x_j`` is first made purely
quadratic with a slack spin ``z`` (``Q'(x, z) = sum h_i x_i z + ...``), which
frees the linear field to carry the bias towards ``x0``::

    Q_final(x, z) = alpha1 * sum(-x0_i x_i) - alpha2 * z + Q'(x, z)

Samples with ``z = -1`` are discarded and the rest re-scored on ``Q``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidAssignment, InvalidScale
from .ising import Domain, IsingModel, SampleSet, energies, read_problem, write_problem

__all__ = [
    "EncodedProblem",
    "SCALING_DEFAULTS",
    "default_scaling",
    "homogenize",
    "bias_term",
    "encode",
    "filter_slack",
    "row_norm_bound",
    "write_encoded",
    "read_encoded",
]

# best (alpha1, alpha2) per problem class and graph density for HG state encoding
SCALING_DEFAULTS: dict[str, dict[float, tuple[float, float]]] = {
    "max-cut": {
        0.1: (0.16, 0.0), 0.2: (0.23, 0.0), 0.3: (0.51, 0.0), 0.4: (0.48, 0.0), 0.5: (0.41, 0.0),
        0.6: (0.48, 0.0), 0.7: (0.63, 0.0), 0.8: (0.93, 0.0), 0.9: (0.33, 0.0),
    },
    "max-clique": {
        0.1: (0.3271, 0.2997), 0.2: (0.2709, 0.8897), 0.3: (0.1997, 0.5401),
        0.4: (0.1542, 0.9246), 0.5: (0.3467, 0.2473), 0.6: (0.2602, 0.7586),
        0.7: (0.0292, 0.7455), 0.8: (0.0334, 0.0210), 0.9: (0.0370, 0.5121),
    },
}


def default_scaling(problem_class: str, density: float) -> tuple[float, float]:
    """``(alpha1, alpha2)`` for a tabulated density (rounded to one decimal)."""
    try:
        return SCALING_DEFAULTS[problem_class][round(float(density), 1)]
    except KeyError:
        raise KeyError(f"no scaling default for {problem_class!r} at density {density}") from None


@dataclass(frozen=True, eq=False)
class EncodedProblem:
    """``Q_final`` together with what is needed to decode its samples."""

    model: IsingModel
    slack_index: int | None
    alpha1: float
    alpha2: float
    x0: tuple[int, ...]
    source: IsingModel
    source_id: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def num_original(self) -> int:
        return self.source.num_vars

    def init_state(self) -> np.ndarray:
        """``x0`` extended with ``z = +1`` when a slack spin is present."""
        x = np.array(self.x0, dtype=np.int8)
        return np.append(x, np.int8(1)) if self.slack_index is not None else x

    def decode(self, samples: SampleSet) -> SampleSet:
        return filter_slack(samples, self.slack_index, self.source, self.model)

    def sidecar(self) -> dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2, "slack_index": self.slack_index,
                "x0": list(self.x0), "source_id": self.source_id}


def homogenize(model: IsingModel) -> tuple[IsingModel, int | None]:
    """Move every ``h_i`` onto a coupler ``J_{i,z}`` with a new last spin ``z``.

    Returns ``(Q', slack_index)``; models without linear terms come back
    unchanged with ``slack_index = None``.
    """
    if model.domain is not Domain.SPIN:
        raise ValueError("homogenize needs a spin-domain model")
    if not model.has_linear:
        return model.replace(), None
    z = model.num_vars
    quad = dict(model.quadratic)
    quad.update({(i, z): h for i, h in model.linear.items() if h != 0.0})
    return IsingModel(z + 1, {}, quad, Domain.SPIN, model.offset), z


def _spin_vector(x0) -> np.ndarray:
    x = np.asarray(x0)
    if x.ndim != 1 or not np.all(np.isin(x, (-1, 1))):
        raise InvalidAssignment("initial state must be a vector of -1/+1 spins")
    return x.astype(np.int8)


def bias_term(x0) -> np.ndarray:
    """Linear coefficients ``-x0``: ``sum h_i x_i`` is ``-n`` exactly at ``x = x0``."""
    return -_spin_vector(x0).astype(float)


def row_norm_bound(model: IsingModel) -> float:
    """Largest ``|h_i| + sum_j |J_ij|``.

    Any ``alpha1`` strictly above it makes ``x0`` the unique minimiser of
    ``Q_final`` on the ``z = +1`` slice: flipping a set ``S`` of spins gains
    ``2 alpha1 |S|`` of bias but changes ``Q`` by at most twice the sum of
    the row norms over ``S``.
    """
    return float(model.row_norms().max(initial=0.0))


def encode(model: IsingModel, x0, alpha1: float, alpha2: float = 0.0,
           source_id: str = "") -> EncodedProblem:
    """Build ``Q_final`` for ``x0``.

    When ``model`` has no linear terms no slack spin is added and ``alpha2``
    is recorded as 0.
    """
    if alpha1 < 0 or alpha2 < 0:
        raise InvalidScale(f"scaling constants must be non-negative, got {alpha1}, {alpha2}")
    x = _spin_vector(x0)
    if len(x) != model.num_vars:
        raise InvalidAssignment(f"initial state has {len(x)} spins, model has {model.num_vars}")
    homog, slack = homogenize(model)
    lin = {i: alpha1 * b for i, b in enumerate(bias_term(x)) if alpha1 != 0.0}
    if slack is None:
        alpha2 = 0.0
    elif alpha2 != 0.0:
        lin[slack] = -float(alpha2)
    final = IsingModel(homog.num_vars, lin, dict(homog.quadratic), Domain.SPIN, homog.offset)
    return EncodedProblem(final, slack, float(alpha1), float(alpha2), tuple(int(v) for v in x),
                          model, source_id)


def filter_slack(samples: SampleSet, slack_index: int | None, original: IsingModel,
                 encoded: IsingModel | None = None) -> SampleSet:
    """Keep ``z = +1`` records, drop the slack column and re-score on ``original``.

    An empty result is flagged with ``metadata["empty"] = True``. When
    ``encoded`` is given, the encoded energies of the kept records are stored
    under ``metadata["encoded_energies"]`` in the output's record order.
    """
    states = samples.states
    occ, first = samples.num_occurrences, samples.first_read
    if slack_index is not None:
        if not 0 <= slack_index < samples.num_vars:
            raise ValueError(f"slack index {slack_index} outside {samples.num_vars} columns")
        keep = states[:, slack_index] == 1
        states = np.delete(states[keep], slack_index, axis=1)
        occ, first = occ[keep], first[keep]
    meta = dict(samples.metadata)
    meta["discarded_reads"] = samples.num_reads - int(occ.sum())
    out = SampleSet.from_records(original, states, occ, first, samples.rng_seed, meta)
    out.metadata["empty"] = out.empty
    if encoded is not None and not out.empty:
        full = out.states
        if slack_index is not None:
            full = np.insert(full, slack_index, np.int8(1), axis=1)
        out.metadata["encoded_energies"] = energies(encoded, full).tolist()
    return out


def write_encoded(ep: EncodedProblem, path) -> None:
    """Problem file at ``path`` plus a ``<path>.json`` sidecar."""
    path = Path(path)
    write_problem(ep.model, path, comments=[f"encoded {ep.source_id}".rstrip()])
    Path(str(path) + ".json").write_text(json.dumps(ep.sidecar(), sort_keys=True, indent=2) + "\n")


def read_encoded(path, source: IsingModel) -> EncodedProblem:
    path = Path(path)
    side = json.loads(Path(str(path) + ".json").read_text())
    return EncodedProblem(read_problem(path), side["slack_index"], side["alpha1"], side["alpha2"],
                          tuple(side["x0"]), source, side.get("source_id", ""))
