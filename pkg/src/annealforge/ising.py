"""Ising/QUBO models, energy evaluation, domain conversion and exact search.

A model stores ``h_i`` (linear) and ``J_ij`` (quadratic, ``i < j``) terms
together with a constant ``offset`` so that energies stay comparable after
converting between the spin (``-1/+1``) and binary (``0/1``) domains::

    E(x) = sum_i h_i x_i + sum_{i<j} J_ij x_i x_j + offset
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidAssignment, ProblemFormatError, TooLarge

__all__ = [
    "Domain",
    "IsingModel",
    "SampleSet",
    "energy",
    "energies",
    "convert",
    "autoscale",
    "brute_force",
    "validate_assignment",
    "dumps_problem",
    "loads_problem",
    "read_problem",
    "write_problem",
]

# rows * terms processed per chunk in batched energy evaluation
_ENERGY_CHUNK = 1 << 22


class Domain(str, enum.Enum):
    SPIN = "spin"
    BINARY = "binary"

    @property
    def values(self) -> tuple[int, int]:
        return (-1, 1) if self is Domain.SPIN else (0, 1)


def _canonical_pair(i: int, j: int) -> tuple[int, int]:
    i, j = int(i), int(j)
    if i == j:
        raise ValueError(f"quadratic term on a single variable ({i}, {j})")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True, eq=False)
class IsingModel:
    """An immutable quadratic model over ``num_vars`` variables.

    ``quadratic`` may be given with either key order; ``(i, j)`` and
    ``(j, i)`` entries are summed into one canonical ``(min, max)`` entry.
    Coefficients are stored in sorted key order so every evaluation visits
    terms deterministically.
    """

    num_vars: int
    linear: Mapping[int, float] = field(default_factory=dict)
    quadratic: Mapping[tuple[int, int], float] = field(default_factory=dict)
    domain: Domain = Domain.SPIN
    offset: float = 0.0

    def __post_init__(self):
        n = int(self.num_vars)
        if n < 0:
            raise ValueError("num_vars must be non-negative")
        lin: dict[int, float] = {}
        for i, v in self.linear.items():
            i = int(i)
            if not 0 <= i < n:
                raise ValueError(f"linear index {i} outside [0, {n})")
            lin[i] = lin.get(i, 0.0) + float(v)
        quad: dict[tuple[int, int], float] = {}
        for (i, j), v in self.quadratic.items():
            key = _canonical_pair(i, j)
            if not (0 <= key[0] and key[1] < n):
                raise ValueError(f"quadratic index {key} outside [0, {n})")
            quad[key] = quad.get(key, 0.0) + float(v)
        object.__setattr__(self, "num_vars", n)
        object.__setattr__(self, "linear", MappingProxyType(dict(sorted(lin.items()))))
        object.__setattr__(self, "quadratic", MappingProxyType(dict(sorted(quad.items()))))
        object.__setattr__(self, "domain", Domain(self.domain))
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_arrays(cls, h: Sequence[float], J: np.ndarray, domain=Domain.SPIN, offset=0.0) -> "IsingModel":
        """Build from a dense field vector and a (upper-triangular or symmetric) coupling matrix.

        Only the strict upper triangle of ``J`` is read.
        """
        h = np.asarray(h, dtype=float)
        J = np.asarray(J, dtype=float)
        n = len(h)
        rows, cols = np.nonzero(np.triu(J, 1))
        quad = {(int(i), int(j)): float(J[i, j]) for i, j in zip(rows, cols)}
        lin = {i: float(v) for i, v in enumerate(h) if v != 0.0}
        return cls(n, lin, quad, domain, offset)

    def __repr__(self):
        return (f"IsingModel(num_vars={self.num_vars}, domain={self.domain.value}, "
                f"linear={len(self.linear)}, quadratic={len(self.quadratic)}, offset={self.offset!r})")

    def __eq__(self, other):
        if not isinstance(other, IsingModel):
            return NotImplemented
        return (self.num_vars == other.num_vars and self.domain == other.domain
                and self.offset == other.offset
                and dict(self.linear) == dict(other.linear)
                and dict(self.quadratic) == dict(other.quadratic))

    __hash__ = None

    @cached_property
    def h(self) -> np.ndarray:
        """Dense linear coefficients (read-only)."""
        h = np.zeros(self.num_vars)
        for i, v in self.linear.items():
            h[i] = v
        h.setflags(write=False)
        return h

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(rows, cols, values)`` of the quadratic terms in canonical order."""
        m = len(self.quadratic)
        rows = np.fromiter((k[0] for k in self.quadratic), dtype=np.intp, count=m)
        cols = np.fromiter((k[1] for k in self.quadratic), dtype=np.intp, count=m)
        vals = np.fromiter(self.quadratic.values(), dtype=float, count=m)
        for a in (rows, cols, vals):
            a.setflags(write=False)
        return rows, cols, vals

    @property
    def has_linear(self) -> bool:
        return any(v != 0.0 for v in self.linear.values())

    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric ``J`` with zero diagonal."""
        M = np.zeros((self.num_vars, self.num_vars))
        rows, cols, vals = self.edge_arrays
        M[rows, cols] = vals
        M[cols, rows] = vals
        return M

    def row_norms(self) -> np.ndarray:
        """``sum_j |J_ij| + |h_i|`` for every variable."""
        return np.abs(self.coupling_matrix()).sum(axis=1) + np.abs(self.h)

    def quadratic_only(self) -> "IsingModel":
        return IsingModel(self.num_vars, {}, self.quadratic, self.domain, self.offset)

    def replace(self, **changes) -> "IsingModel":
        fields = dict(num_vars=self.num_vars, linear=self.linear, quadratic=self.quadratic,
                      domain=self.domain, offset=self.offset)
        fields.update(changes)
        return IsingModel(**fields)

    def scaled(self, factor: float) -> "IsingModel":
        """Every coefficient and the offset multiplied by ``factor``."""
        return IsingModel(
            self.num_vars,
            {i: v * factor for i, v in self.linear.items()},
            {k: v * factor for k, v in self.quadratic.items()},
            self.domain,
            self.offset * factor,
        )


def validate_assignment(model: IsingModel, states) -> np.ndarray:
    """Return ``states`` as a 2-D int8 array, raising InvalidAssignment on mismatch."""
    x = np.asarray(states)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.num_vars:
        raise InvalidAssignment(
            f"expected assignments of length {model.num_vars}, got shape {np.shape(states)}")
    lo, hi = model.domain.values
    if x.size and not np.all((x == lo) | (x == hi)):
        raise InvalidAssignment(f"entries must be in {{{lo}, {hi}}} for the {model.domain.value} domain")
    return x.astype(np.int8, copy=False)


def energies(model: IsingModel, states) -> np.ndarray:
    """Energies of a batch of assignments, one per row."""
    x = validate_assignment(model, states)
    rows, cols, vals = model.edge_arrays
    h = model.h
    out = np.empty(len(x))
    step = max(1, _ENERGY_CHUNK // max(1, len(vals) + model.num_vars))
    for a in range(0, len(x), step):
        xf = x[a:a + step].astype(float)
        # cumsum accumulates left to right in every row, whatever the batch
        # shape, unlike sum(axis=1) whose order depends on the array layout
        terms = np.concatenate([xf * h, xf[:, rows] * xf[:, cols] * vals], axis=1)
        total = np.cumsum(terms, axis=1)[:, -1] if terms.shape[1] else np.zeros(len(xf))
        out[a:a + step] = total + model.offset
    return out


def energy(model: IsingModel, a) -> float:
    """Energy of one assignment.

    Shares the batched code path so batch and single evaluations agree bitwise.
    """
    a = np.asarray(a)
    if a.ndim != 1:
        raise InvalidAssignment("energy() takes a single assignment; use energies() for batches")
    return float(energies(model, a)[0])


def convert(model: IsingModel, target: Domain | str) -> IsingModel:
    """Re-express ``model`` in ``target`` domain, keeping every energy via the offset.

    spin <- binary uses ``b = (x + 1) / 2``; binary <- spin uses ``x = 2b - 1``.
    """
    target = Domain(target)
    if target == model.domain:
        return model.replace()
    lin: dict[int, float] = {}
    quad: dict[tuple[int, int], float] = {}
    offset = model.offset
    if target is Domain.SPIN:
        for i, a in model.linear.items():
            lin[i] = lin.get(i, 0.0) + a / 2
            offset += a / 2
        for (i, j), q in model.quadratic.items():
            quad[(i, j)] = q / 4
            lin[i] = lin.get(i, 0.0) + q / 4
            lin[j] = lin.get(j, 0.0) + q / 4
            offset += q / 4
    else:
        for i, a in model.linear.items():
            lin[i] = lin.get(i, 0.0) + 2 * a
            offset -= a
        for (i, j), q in model.quadratic.items():
            quad[(i, j)] = 4 * q
            lin[i] = lin.get(i, 0.0) - 2 * q
            lin[j] = lin.get(j, 0.0) - 2 * q
            offset += q
    return IsingModel(model.num_vars, lin, quad, target, offset)


def autoscale(model: IsingModel, profile) -> tuple[IsingModel, float]:
    """Divide the whole model by one factor so that ``|J| <= 1`` and ``|h| <= h_range``.

    ``profile`` is a DeviceProfile or a bare ``h_range`` number. Models already
    inside the ranges come back unchanged with scale 1; the argmin set is
    untouched because the divisor is uniform and positive.
    """
    h_range = float(getattr(profile, "h_range", profile))
    j_max = max((abs(v) for v in model.quadratic.values()), default=0.0)
    h_max = max((abs(v) for v in model.linear.values()), default=0.0)
    scale = max(j_max, h_max / h_range)
    if scale <= 1.0:
        return model.replace(), 1.0
    return model.scaled(1.0 / scale), scale


def _enumerate_chunk(start: int, stop: int, n: int, domain: Domain) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)
    return 2 * bits - 1 if domain is Domain.SPIN else bits


def brute_force(model: IsingModel, max_vars: int = 24) -> tuple[float, list[np.ndarray]]:
    """Exact minimum energy and every assignment attaining it.

    Assignment ``k`` of the enumeration sets variable ``i`` from bit ``i`` of
    ``k``; ground states are returned in that order.
    """
    n = model.num_vars
    if n > max_vars:
        raise TooLarge(f"{n} variables exceeds the brute-force cap of {max_vars}")
    total = 1 << n
    best = np.inf
    kept_states, kept_e = [], []
    for start in range(0, total, 1 << 16):
        states = _enumerate_chunk(start, min(total, start + (1 << 16)), n, model.domain)
        e = energies(model, states)
        best = min(best, float(e.min()))
        keep = e <= best + 1e-9 * max(1.0, abs(best))
        kept_states.append(states[keep])
        kept_e.append(e[keep])
    e = np.concatenate(kept_e)
    states = np.concatenate(kept_states)
    winners = list(states[e <= best + 1e-9 * max(1.0, abs(best))])
    return float(best), winners


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Distinct read-out assignments with energies and occurrence counts.

    Records are sorted by energy; equal energies keep the order in which the
    state was first read out (``first_read``), so ``states[0]`` is the
    lowest-energy state with the lowest read index.
    """

    states: np.ndarray
    energies: np.ndarray
    num_occurrences: np.ndarray
    first_read: np.ndarray
    rng_seed: int | None = None
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, model: IsingModel, states, occurrences, first_read,
                     rng_seed=None, metadata=None) -> "SampleSet":
        x = validate_assignment(model, states) if len(np.asarray(states)) else \
            np.zeros((0, model.num_vars), dtype=np.int8)
        occurrences = np.asarray(occurrences, dtype=np.int64)
        first_read = np.asarray(first_read, dtype=np.int64)
        if len(x):
            uniq, inverse = np.unique(x, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            occ = np.zeros(len(uniq), dtype=np.int64)
            np.add.at(occ, inverse, occurrences)
            first = np.full(len(uniq), np.iinfo(np.int64).max)
            np.minimum.at(first, inverse, first_read)
            e = energies(model, uniq)
            order = np.lexsort((first, e))
            x, e, occ, first = uniq[order], e[order], occ[order], first[order]
        else:
            e = np.zeros(0)
            occ = np.zeros(0, dtype=np.int64)
            first = np.zeros(0, dtype=np.int64)
        for a in (x, e, occ, first):
            a.setflags(write=False)
        return cls(x, e, occ, first, rng_seed, dict(metadata or {}))

    @classmethod
    def from_reads(cls, model: IsingModel, reads, rng_seed=None, metadata=None) -> "SampleSet":
        reads = np.asarray(reads)
        k = len(reads)
        return cls.from_records(model, reads, np.ones(k, dtype=np.int64), np.arange(k),
                                rng_seed, metadata)

    def __len__(self):
        return len(self.states)

    @property
    def num_vars(self) -> int:
        return self.states.shape[1]

    @property
    def num_reads(self) -> int:
        return int(self.num_occurrences.sum())

    @property
    def empty(self) -> bool:
        return len(self.states) == 0

    @property
    def first(self) -> tuple[np.ndarray, float]:
        if self.empty:
            raise ValueError("empty SampleSet has no first record")
        return self.states[0].copy(), float(self.energies[0])

    def records(self) -> Iterable[tuple[np.ndarray, float, int]]:
        for s, e, c in zip(self.states, self.energies, self.num_occurrences):
            yield s, float(e), int(c)

    def expanded(self) -> np.ndarray:
        """One row per read, grouped by record (read order is not retained)."""
        rows = np.repeat(np.arange(len(self)), self.num_occurrences)
        return self.states[rows]


# -- problem file format ------------------------------------------------------

def dumps_problem(model: IsingModel, comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(f"vars {model.num_vars} domain {model.domain.value}")
    if model.offset != 0.0:
        lines.append(f"offset {model.offset!r}")
    lines += [f"h {i} {v!r}" for i, v in model.linear.items()]
    lines += [f"J {i} {j} {v!r}" for (i, j), v in model.quadratic.items()]
    return "\n".join(lines) + "\n"


def loads_problem(text: str) -> IsingModel:
    header = None
    linear: dict[int, float] = {}
    quadratic: dict[tuple[int, int], float] = {}
    offset = 0.0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "vars" and len(tok) == 4 and tok[2] == "domain":
                header = (int(tok[1]), Domain(tok[3]))
            elif tok[0] == "h" and len(tok) == 3:
                i = int(tok[1])
                linear[i] = linear.get(i, 0.0) + float(tok[2])
            elif tok[0] == "J" and len(tok) == 4:
                key = _canonical_pair(int(tok[1]), int(tok[2]))
                quadratic[key] = quadratic.get(key, 0.0) + float(tok[3])
            elif tok[0] == "offset" and len(tok) == 2:
                offset += float(tok[1])
            else:
                raise ValueError(f"unrecognised line {raw!r}")
        except ValueError as exc:
            raise ProblemFormatError(f"line {lineno}: {exc}") from None
    if header is None:
        raise ProblemFormatError("missing 'vars N domain {spin|binary}' header")
    try:
        return IsingModel(header[0], linear, quadratic, header[1], offset)
    except ValueError as exc:
        raise ProblemFormatError(str(exc)) from None


def read_problem(path) -> IsingModel:
    return loads_problem(Path(path).read_text())


def write_problem(model: IsingModel, path, comments: Sequence[str] = ()) -> None:
    Path(path).write_text(dumps_problem(model, comments))
