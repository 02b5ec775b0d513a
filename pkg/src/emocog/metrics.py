"""Evaluation quantities computed from run logs: involution, DTW consistency, acceptance and desire mixes."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .domain import DIMENSIONS


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class SeriesPoint:
    day: int
    value: float


@dataclass(frozen=True)
class InvolutionInputs:
    """Per-rider money and walking distance at one point in time."""

    incomes: tuple[float, ...]
    distances: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "incomes", tuple(float(x) for x in self.incomes))
        object.__setattr__(self, "distances", tuple(float(x) for x in self.distances))
        if len(self.incomes) != len(self.distances):
            raise MetricError("incomes and distances must have equal length")
        if len(self.incomes) < 2:
            raise MetricError("need at least two riders")


def involution(inp: InvolutionInputs) -> float:
    """Mean distance times the coefficient of variation of money (population std)."""
    inc = np.asarray(inp.incomes, dtype=float)
    mu = float(inc.mean())
    if mu == 0:
        raise MetricError("undefined involution: mean income is zero")
    theta = float(inc.std())
    return float(np.mean(inp.distances)) * theta / mu


def involution_series(daily: Iterable[Mapping]) -> list[SeriesPoint]:
    """Involution at the end of each day from cumulative income and distance.

    Days where no rider has earned anything yet are skipped (the metric is undefined there).
    """
    by_day: dict[int, list[tuple[float, float]]] = defaultdict(list)
    for row in daily:
        by_day[int(row["day"])].append((float(row["cumulative_income"]), float(row["cumulative_distance"])))
    out = []
    for day in sorted(by_day):
        inc, dist = zip(*by_day[day])
        if sum(inc) == 0:
            continue
        out.append(SeriesPoint(day, involution(InvolutionInputs(inc, dist))))
    return out


# ---------------------------------------------------------------------------
# dynamic time warping
# ---------------------------------------------------------------------------


def dtw(x: Sequence[float], y: Sequence[float]) -> float:
    """Full DTW recursion with absolute local cost and the three-predecessor minimum."""
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise MetricError("dtw needs non-empty series")
    D = np.full((n, m), np.inf)
    for i in range(n):
        for j in range(m):
            cost = abs(float(x[i]) - float(y[j]))
            if i == 0 and j == 0:
                D[i, j] = cost
                continue
            best = math.inf
            if i > 0:
                best = min(best, D[i - 1, j])
            if j > 0:
                best = min(best, D[i, j - 1])
            if i > 0 and j > 0:
                best = min(best, D[i - 1, j - 1])
            D[i, j] = cost + best
    return float(D[n - 1, m - 1])


def znormalize(x: Sequence[float]) -> np.ndarray:
    """Zero mean, unit population std; a constant series maps to zeros."""
    a = np.asarray(x, dtype=float)
    sd = a.std()
    if a.size == 0 or np.ptp(a) == 0 or not np.isfinite(sd):
        return np.zeros_like(a)
    return (a - a.mean()) / sd


@dataclass
class ConsistencyRow:
    agent: int
    policy: str
    days: int
    dtw_z: float
    dtw_raw: float


@dataclass
class ConsistencyReport:
    rows: list[ConsistencyRow]
    by_type: dict[str, float] = field(default_factory=dict)
    by_type_raw: dict[str, float] = field(default_factory=dict)


def _daily_series(daily: Iterable[Mapping]) -> dict[int, tuple[str, list[tuple[int, float, float]]]]:
    series: dict[int, tuple[str, list]] = {}
    for row in daily:
        a = int(row["agent"])
        pol, pts = series.setdefault(a, (str(row["policy"]), []))
        pts.append((int(row["day"]), float(row["income"]), float(row["happiness_fraction"])))
    for _, pts in series.values():
        pts.sort()
    return series


def consistency_report(daily: Iterable[Mapping], agents: Iterable[int] | None = None) -> ConsistencyReport:
    """Per-agent DTW between daily income and daily happiness fraction, plus per-type means."""
    series = _daily_series(daily)
    wanted = set(agents) if agents is not None else None
    rows = []
    for a in sorted(series):
        if wanted is not None and a not in wanted:
            continue
        pol, pts = series[a]
        if len(pts) < 2:
            raise MetricError(f"agent {a}: need at least 2 days, have {len(pts)}")
        inc = [p[1] for p in pts]
        hap = [p[2] for p in pts]
        rows.append(ConsistencyRow(a, pol, len(pts), dtw(znormalize(inc), znormalize(hap)), dtw(inc, hap)))
    if not rows:
        raise MetricError("no agents with daily data")
    report = ConsistencyReport(rows)
    for pol in sorted({r.policy for r in rows}):
        sel = [r for r in rows if r.policy == pol]
        report.by_type[pol] = float(np.mean([r.dtw_z for r in sel]))
        report.by_type_raw[pol] = float(np.mean([r.dtw_raw for r in sel]))
    return report


# ---------------------------------------------------------------------------
# event-log recounts
# ---------------------------------------------------------------------------


def policy_of_agents(events: Iterable[Mapping]) -> dict[int, str]:
    """Agent -> policy type, read off the decision events."""
    out: dict[int, str] = {}
    for e in events:
        if e.get("kind") == "decision":
            out.setdefault(int(e["agent"]), e["policy"])
    return out


def acceptance_counts(events: Sequence[Mapping], policy: str, assignment: Mapping[int, str] | None = None) -> tuple[int, int]:
    assignment = assignment if assignment is not None else policy_of_agents(events)
    members = {a for a, p in assignment.items() if p == policy}
    offers = sum(1 for e in events if e.get("kind") == "offer" and e["agent"] in members)
    accepts = sum(
        1 for e in events if e.get("kind") == "decision" and e["agent"] in members and e.get("action") == "accept"
    )
    return accepts, offers


def acceptance_rate(events: Sequence[Mapping], policy: str, assignment: Mapping[int, str] | None = None) -> float:
    """Accepted offers over offers made to riders running ``policy``."""
    accepts, offers = acceptance_counts(events, policy, assignment)
    if offers == 0:
        raise MetricError(f"no offers for policy {policy!r}")
    return accepts / offers


def desire_distribution(
    events: Sequence[Mapping],
    policy: str = "framework",
    ticks_per_day: int = 1440,
    n_days: int | None = None,
    assignment: Mapping[int, str] | None = None,
) -> list[tuple[int, dict[str, float]]]:
    """Per-day share of desire-update samples whose focus is income, health or rank.

    A day without samples repeats the previous day's shares; days before the first
    sample are not reported.
    """
    assignment = assignment if assignment is not None else policy_of_agents(events)
    members = {a for a, p in assignment.items() if p == policy}
    counts: dict[int, Counter] = defaultdict(Counter)
    for e in events:
        if e.get("kind") == "desire_update" and e["agent"] in members:
            counts[e["tick"] // ticks_per_day + 1][e["focus"]] += 1
    if not counts:
        raise MetricError(f"no desire_update events for policy {policy!r}")
    last_day = n_days or max(counts)
    out = []
    prev = None
    for day in range(min(counts), last_day + 1):
        c = counts.get(day)
        if c:
            total = sum(c.values())
            prev = {d: c.get(d, 0) / total for d in DIMENSIONS}
        out.append((day, dict(prev)))
    return out
