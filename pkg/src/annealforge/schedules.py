"""Anneal-fraction and h-gain schedules, device limits, and the A(s)/B(s) envelope.

Schedules are immutable piecewise-linear value objects. Construction only
checks structural ordering; device limits are checked separately by
:func:`validate`, so simulator experiments can exceed a device on purpose.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InvalidAnnealTime, InvalidSchedule, ProblemFormatError

__all__ = [
    "ScheduleKind",
    "AnnealSchedule",
    "HGainSchedule",
    "DeviceProfile",
    "DEVICES",
    "get_device",
    "Violation",
    "AnnealingFunctions",
    "forward",
    "ra_pause",
    "fa_pause",
    "ra_from_search",
    "hg_three_point",
    "hg_aligned",
    "validate",
    "effective_gain",
    "dumps_schedules",
    "loads_schedules",
    "read_schedules",
    "write_schedules",
]

# relative slack on slope comparisons; boundary schedules sit exactly on the cap
_SLOPE_RTOL = 1e-9
MIN_SEARCH_ANNEAL_TIME_US = 100.0


class ScheduleKind(str, enum.Enum):
    FORWARD = "forward"
    REVERSE = "reverse"
    FORWARD_PAUSE = "forward_pause"


def _as_points(points) -> tuple[tuple[float, float], ...]:
    pts = tuple((float(t), float(v)) for t, v in points)
    if len(pts) < 2:
        raise InvalidSchedule("a schedule needs at least two points")
    ts = [t for t, _ in pts]
    if ts[0] != 0.0:
        raise InvalidSchedule(f"schedule must start at t=0, got t={ts[0]}")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise InvalidSchedule(f"schedule times must be strictly increasing: {ts}")
    if not all(np.isfinite(v) for _, v in pts):
        raise InvalidSchedule("schedule values must be finite")
    return pts


class _PiecewiseLinear:
    points: tuple[tuple[float, float], ...]

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.points])

    @property
    def duration(self) -> float:
        return self.points[-1][0]

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.times)


@dataclass(frozen=True)
class AnnealSchedule(_PiecewiseLinear):
    """Anneal fraction ``s(t)`` with ``t`` in microseconds."""

    points: tuple[tuple[float, float], ...]
    kind: ScheduleKind = ScheduleKind.FORWARD

    def __post_init__(self):
        pts = _as_points(self.points)
        kind = ScheduleKind(self.kind)
        s = [v for _, v in pts]
        if any(v < 0.0 or v > 1.0 for v in s):
            raise InvalidSchedule(f"anneal fraction outside [0, 1]: {s}")
        start = 1.0 if kind is ScheduleKind.REVERSE else 0.0
        if s[0] != start:
            raise InvalidSchedule(f"{kind.value} schedule must start at s={start:g}")
        if s[-1] != 1.0:
            raise InvalidSchedule("schedule must end at s=1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "kind", kind)


@dataclass(frozen=True)
class HGainSchedule(_PiecewiseLinear):
    """Gain ``g(t)`` applied to every linear term."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    g_max: float
    g_slope_max: float
    s_slope_max: float
    max_points: int
    t_range_us: tuple[float, float]
    h_range: float

    def __post_init__(self):
        object.__setattr__(self, "t_range_us", tuple(float(t) for t in self.t_range_us))
        limits = [self.g_max, self.g_slope_max, self.s_slope_max, self.max_points, self.h_range,
                  *self.t_range_us]
        if any(not v > 0 for v in limits):
            raise ValueError(f"device limits must be positive: {self}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DeviceProfile":
        d = json.loads(text)
        return cls(d["name"], d["g_max"], d["g_slope_max"], d["s_slope_max"],
                   int(d["max_points"]), tuple(d["t_range_us"]), d["h_range"])


DEVICES: dict[str, DeviceProfile] = {
    "dw2000q": DeviceProfile("DW_2000Q", 5.0, 500.0, 1.0, 20, (1.0, 2000.0), 2.0),
    "adv4": DeviceProfile("Advantage_system4.1", 3.0, 500.0, 1.0, 20, (0.5, 2000.0), 4.0),
    "adv6": DeviceProfile("Advantage_system6.1", 4.0, 500.0, 1.0, 20, (0.5, 2000.0), 4.0),
}


def get_device(spec: str) -> DeviceProfile:
    """Resolve ``dw2000q``, ``adv4``, ``adv6`` or ``custom:<path-to-json>``."""
    if spec.startswith("custom:"):
        return DeviceProfile.from_json(Path(spec[len("custom:"):]).read_text())
    try:
        return DEVICES[spec]
    except KeyError:
        raise ValueError(f"unknown device {spec!r}; choose from {sorted(DEVICES)} or custom:<path>") from None


# -- constructors -------------------------------------------------------------

def forward(T: float) -> AnnealSchedule:
    """Default linear forward anneal ``s(t) = t / T``."""
    return AnnealSchedule(((0.0, 0.0), (T, 1.0)), ScheduleKind.FORWARD)


def _check_pause_times(T, t_a, t_b):
    if not 0.0 < t_a <= t_b < T:
        raise InvalidSchedule(f"need 0 < t_a <= t_b < T, got t_a={t_a}, t_b={t_b}, T={T}")


def _pause_points(start, T, s_pause, t_a, t_b):
    pts = [(0.0, start), (t_a, s_pause)]
    if t_b > t_a:
        pts.append((t_b, s_pause))
    pts.append((T, 1.0))
    return pts


def ra_pause(T: float, s_inv: float, t_a: float, t_b: float) -> AnnealSchedule:
    """Reverse anneal 1 -> ``s_inv`` by ``t_a``, hold until ``t_b``, back to 1 at ``T``.

    ``t_a == t_b`` gives a V-shaped schedule with the repeated point dropped.
    """
    _check_pause_times(T, t_a, t_b)
    if not 0.0 <= s_inv < 1.0:
        raise InvalidSchedule(f"s_inv must lie in [0, 1), got {s_inv}")
    return AnnealSchedule(_pause_points(1.0, T, s_inv, t_a, t_b), ScheduleKind.REVERSE)


def fa_pause(T: float, s_pause: float, t_a: float, t_b: float) -> AnnealSchedule:
    """Forward anneal 0 -> ``s_pause`` by ``t_a``, hold until ``t_b``, up to 1 at ``T``."""
    _check_pause_times(T, t_a, t_b)
    if not 0.0 <= s_pause <= 1.0:
        raise InvalidSchedule(f"s_pause must lie in [0, 1], got {s_pause}")
    return AnnealSchedule(_pause_points(0.0, T, s_pause, t_a, t_b), ScheduleKind.FORWARD_PAUSE)


def ra_from_search(T: float, p1: float, p2: float) -> AnnealSchedule:
    """Symmetric reverse anneal with a pause from two search reals in ``[0.1, 0.9]``.

    ``p1`` is the turning anneal fraction. ``p2`` is the pause length as a
    fraction of the time left once the pause begins. With equal ramps of
    length ``r`` and pause ``P``: ``P = p2 * (T - r)`` and ``2r + P = T``,
    so ``r = T (1 - p2) / (2 - p2)``.
    """
    for name, p in (("p1", p1), ("p2", p2)):
        if not 0.1 <= p <= 0.9:
            raise InvalidSchedule(f"{name} must lie in [0.1, 0.9], got {p}")
    if T < MIN_SEARCH_ANNEAL_TIME_US:
        raise InvalidAnnealTime(
            f"search-parameterised reverse anneals need T >= {MIN_SEARCH_ANNEAL_TIME_US:g} us, got {T}")
    ramp = T * (1.0 - p2) / (2.0 - p2)
    return ra_pause(T, p1, ramp, T - ramp)


def hg_three_point(T: float, t_mid_frac: float, g_mid: float, g0: float,
                   g_max: float | None = None) -> HGainSchedule:
    """``[(0, g0), (t_mid_frac * T, g_mid), (T, 0)]``."""
    if not 0.01 <= t_mid_frac <= 0.99:
        raise InvalidSchedule(f"t_mid_frac must lie in [0.01, 0.99], got {t_mid_frac}")
    top = np.inf if g_max is None else g_max
    for name, g in (("g_mid", g_mid), ("g0", g0)):
        if not 0.0 <= g <= top:
            raise InvalidSchedule(f"{name}={g} outside [0, {top}]")
    return HGainSchedule(((0.0, g0), (t_mid_frac * T, g_mid), (T, 0.0)))


def hg_aligned(T: float, t_mid: float, g_mid: float, g0: float, t_zero: float) -> HGainSchedule:
    """Decreasing gain ``g0 -> g_mid`` at ``t_mid``, reaching 0 at ``t_zero`` and held to ``T``.

    Used to switch the bias off exactly when an anneal leaves its pause.
    """
    if not 0.0 < t_mid < t_zero <= T:
        raise InvalidSchedule(f"need 0 < t_mid < t_zero <= T, got {t_mid}, {t_zero}, {T}")
    if not 0.0 <= g_mid <= g0:
        raise InvalidSchedule(f"need 0 <= g_mid <= g0, got g_mid={g_mid}, g0={g0}")
    pts = [(0.0, g0), (t_mid, g_mid), (t_zero, 0.0)]
    if t_zero < T:
        pts.append((T, 0.0))
    return HGainSchedule(pts)


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str  # "points" | "range" | "slope" | "duration"
    message: str
    index: int | None = None

    def __str__(self):
        return f"{self.kind}: {self.message}"


Schedule = Union[AnnealSchedule, HGainSchedule]


def validate(sched: Schedule, profile: DeviceProfile) -> list[Violation]:
    """Every way ``sched`` breaks ``profile``; empty when it can run on the device."""
    out: list[Violation] = []
    label = "anneal" if isinstance(sched, AnnealSchedule) else "h-gain"
    if len(sched.points) > profile.max_points:
        out.append(Violation("points", f"{len(sched.points)} {label} points exceed the limit of {profile.max_points}"))
    lo_t, hi_t = profile.t_range_us
    if not lo_t <= sched.duration <= hi_t:
        out.append(Violation("duration", f"total time {sched.duration:g} us outside [{lo_t:g}, {hi_t:g}]"))
    if isinstance(sched, AnnealSchedule):
        lo, hi, cap = 0.0, 1.0, profile.s_slope_max
    else:
        lo, hi, cap = -profile.g_max, profile.g_max, profile.g_slope_max
    for i, (t, v) in enumerate(sched.points):
        if not lo <= v <= hi:
            out.append(Violation("range", f"{label} value {v:g} at t={t:g} outside [{lo:g}, {hi:g}]", i))
    for i, slope in enumerate(sched.slopes()):
        if abs(slope) > cap * (1 + _SLOPE_RTOL):
            out.append(Violation("slope", f"{label} segment {i} slope {abs(slope):g}/us exceeds {cap:g}/us", i))
    return out


# -- A(s), B(s) and effective gain --------------------------------------------

@dataclass(frozen=True)
class AnnealingFunctions:
    """Transverse (``A``) and problem (``B``) envelopes of the anneal fraction.

    The default is the analytic pair ``A = E0 (1 - s)^2``, ``B = E0 s^2``;
    :meth:`from_table` interpolates tabulated device curves instead.
    """

    scale: float = 5.0
    table: tuple | None = field(default=None, repr=False)

    def A(self, s):
        if self.table is not None:
            return np.interp(s, self.table[0], self.table[1])
        return self.scale * (1.0 - np.asarray(s, dtype=float)) ** 2

    def B(self, s):
        if self.table is not None:
            return np.interp(s, self.table[0], self.table[2])
        return self.scale * np.asarray(s, dtype=float) ** 2

    @classmethod
    def from_table(cls, s, A, B) -> "AnnealingFunctions":
        s, A, B = (np.asarray(a, dtype=float) for a in (s, A, B))
        if not (len(s) == len(A) == len(B) >= 2) or np.any(np.diff(s) <= 0):
            raise ValueError("table needs >= 2 rows with strictly increasing s")
        return cls(scale=float(B[-1]), table=(tuple(s), tuple(A), tuple(B)))

    @classmethod
    def read_csv(cls, path) -> "AnnealingFunctions":
        """CSV with header ``s,A,B``."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh)]
        return cls.from_table([float(r["s"]) for r in rows], [float(r["A"]) for r in rows],
                              [float(r["B"]) for r in rows])


def effective_gain(ra: AnnealSchedule, hg: HGainSchedule, B: Callable | None = None,
                   samples: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Realised linear-bias weight ``B(s(t)) * g(t) / 2`` on a uniform time grid.

    Returns ``(times, values)``. ``B`` defaults to the analytic envelope.
    """
    if not np.isclose(ra.duration, hg.duration, rtol=1e-12, atol=0.0):
        raise InvalidSchedule(f"anneal ({ra.duration}) and h-gain ({hg.duration}) durations differ")
    B = B or AnnealingFunctions().B
    t = np.linspace(0.0, ra.duration, samples)
    return t, B(ra(t)) * hg(t) / 2.0


# -- schedule file format -----------------------------------------------------

def dumps_schedules(anneal: AnnealSchedule | None = None, hgain: HGainSchedule | None = None) -> str:
    lines = []
    if anneal is not None:
        lines.append(f"# kind {anneal.kind.value}")
        lines += [f"anneal {t!r} {s!r}" for t, s in anneal.points]
    if hgain is not None:
        lines += [f"hgain {t!r} {g!r}" for t, g in hgain.points]
    return "\n".join(lines) + "\n"


def loads_schedules(text: str) -> tuple[AnnealSchedule | None, HGainSchedule | None]:
    """Parse ``anneal t s`` / ``hgain t g`` lines; ``# kind <k>`` sets the anneal kind."""
    anneal_pts, hg_pts, kind = [], [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            tok = stripped[1:].split()
            if len(tok) == 2 and tok[0] == "kind":
                kind = ScheduleKind(tok[1])
            continue
        if not stripped:
            continue
        tok = stripped.split()
        try:
            if tok[0] == "anneal" and len(tok) == 3:
                anneal_pts.append((float(tok[1]), float(tok[2])))
            elif tok[0] == "hgain" and len(tok) == 3:
                hg_pts.append((float(tok[1]), float(tok[2])))
            else:
                raise ValueError(f"unrecognised line {raw!r}")
        except ValueError as exc:
            raise ProblemFormatError(f"line {lineno}: {exc}") from None
    anneal = None
    if anneal_pts:
        if kind is None:
            kind = ScheduleKind.REVERSE if anneal_pts[0][1] == 1.0 else ScheduleKind.FORWARD
        anneal = AnnealSchedule(anneal_pts, kind)
    return anneal, (HGainSchedule(hg_pts) if hg_pts else None)


def read_schedules(path):
    return loads_schedules(Path(path).read_text())


def write_schedules(path, anneal=None, hgain=None) -> None:
    Path(path).write_text(dumps_schedules(anneal, hgain))
