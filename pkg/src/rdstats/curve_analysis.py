"""Rate-distortion curves traced by slope sweeps.

A sweep solves the codebook search independently at each slope.  From the
achieved (D, R) pairs two convexity bounds follow: tangent lines give a lower
bound on the rate-distortion function and chords between achieved pairs give
an upper bound.  Comparing the bounds of two bearing models tells where one
of them compresses provably better.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codebook_search import RdSolution, SearchConfig, search
from .errors import InsufficientPoints, RdStatsError
from .geodesy import BearingModel, GeoPoint, angular_distance, model_label

log = logging.getLogger(__name__)


@dataclass
class RdCurvePoint:
    slope: float
    rate_nats: float = math.nan
    distortion: float = math.nan
    codebook_size: int = 0
    solution: RdSolution | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def sweep(source, model: BearingModel, slopes: Sequence[float], config: SearchConfig,
          frozen_points: Sequence[GeoPoint] = ()) -> list[RdCurvePoint]:
    """Solve every slope independently with the same seed policy."""
    points = []
    for s in slopes:
        if s > 0:
            raise ValueError(f"slopes must be <= 0, got {s}")
        cfg = dataclasses.replace(config, slope=float(s))
        try:
            sol = search(source, model, cfg, frozen_points)
        except RdStatsError as exc:
            log.warning("slope %s failed: %s", s, exc)
            points.append(RdCurvePoint(float(s), error=f"{type(exc).__name__}: {exc}"))
            continue
        points.append(RdCurvePoint(float(s), sol.rate, sol.mean_distortion, len(sol), sol))
    return points


@dataclass
class CurveBounds:
    """Piecewise-linear bounds on R(D).

    ``tangents`` holds ``(slope, intercept)`` pairs of the supporting lines
    ``R = intercept + slope * D``; ``achieved`` the (D, R) pairs behind the
    chords.  The vertex lists are what gets exported and plotted.
    """

    tangents: list[tuple[float, float]]
    achieved: list[tuple[float, float]]
    lower_vertices: list[tuple[float, float]]
    upper_vertices: list[tuple[float, float]]

    @property
    def domain(self) -> tuple[float, float]:
        return self.upper_vertices[0][0], self.upper_vertices[-1][0]

    def lower(self, d):
        d = np.asarray(d, dtype=float)
        out = np.zeros_like(d)
        for slope, intercept in self.tangents:
            out = np.maximum(out, intercept + slope * d)
        return out

    def upper(self, d):
        """Chord interpolation; flat beyond the largest achieved distortion."""
        d = np.asarray(d, dtype=float)
        xs, ys = np.array(self.upper_vertices).T
        out = np.interp(d, xs, ys)
        out = np.where(d > xs[-1], ys.min(), out)
        return np.where(d < xs[0], np.inf, out)

    def distortion_lower(self, rate: float) -> float:
        """Smallest distortion the lower bound allows at ``rate``."""
        best = 0.0
        for slope, intercept in self.tangents:
            if slope < 0:
                best = max(best, (intercept - rate) / -slope)
            elif intercept > rate:
                return math.inf
        return best

    def distortion_upper(self, rate: float) -> float:
        """Smallest distortion the chords certify as achievable at ``rate``."""
        xs, ys = np.array(self.upper_vertices).T
        if ys[0] <= rate:
            return float(xs[0])
        for (x0, y0), (x1, y1) in zip(self.upper_vertices, self.upper_vertices[1:]):
            if y1 <= rate < y0:
                return float(x0 + (y0 - rate) * (x1 - x0) / (y0 - y1))
        return math.inf


def _achieved(points: Sequence[RdCurvePoint]):
    good = [p for p in points if p.ok and math.isfinite(p.rate_nats)]
    return good


def _build_bounds(points: Sequence[RdCurvePoint]) -> CurveBounds:
    good = _achieved(points)
    if not good:
        raise InsufficientPoints("no successfully solved slopes")
    pairs = [(p.distortion, p.rate_nats) for p in good]
    # best achieved Lagrangian at each slope: every achieved pair lies above each line
    tangents = []
    for s in sorted({p.slope for p in good}):
        intercept = min(r - s * d for d, r in pairs)
        tangents.append((s, intercept))
    # one (D, R) per distinct distortion, lowest rate wins
    by_d: dict[float, float] = {}
    for d, r in pairs:
        by_d[d] = min(r, by_d.get(d, math.inf))
    upper = sorted(by_d.items())
    lo, hi = upper[0][0], upper[-1][0]
    xs = {lo, hi} | {d for d, _ in upper}
    for (s1, c1), (s2, c2) in itertools.combinations(tangents, 2):
        if s1 != s2:
            x = (c2 - c1) / (s1 - s2)
            if lo < x < hi:
                xs.add(x)
    for s, c in tangents:
        if s < 0:
            x = -c / s
            if lo < x < hi:
                xs.add(x)
    tmp = CurveBounds(tangents, pairs, [], upper)
    lower = [(x, float(tmp.lower(x))) for x in sorted(xs)]
    return CurveBounds(tangents, pairs, lower, upper)


def bounds(points: Sequence[RdCurvePoint]) -> CurveBounds:
    """Tangent lower bound and chord upper bound from a sweep."""
    good = _achieved(points)
    if len({p.distortion for p in good}) < 2:
        raise InsufficientPoints("need at least two solved slopes with distinct distortions")
    return _build_bounds(good)


@dataclass
class ModelComparison:
    model_a: str
    model_b: str
    verdict: str
    a_better: list[tuple[float, float]]
    b_better: list[tuple[float, float]]
    inconclusive: list[tuple[float, float]]
    curve_a: list[RdCurvePoint] = field(repr=False, default_factory=list)
    curve_b: list[RdCurvePoint] = field(repr=False, default_factory=list)
    bounds_a: CurveBounds | None = field(repr=False, default=None)
    bounds_b: CurveBounds | None = field(repr=False, default=None)


def _runs(grid, mask) -> list[tuple[float, float]]:
    out = []
    start = None
    for r, m in zip(grid, mask):
        if m and start is None:
            start = r
        if m:
            end = r
        elif start is not None:
            out.append((float(start), float(end)))
            start = None
    if start is not None:
        out.append((float(start), float(end)))
    return out


def compare_bounds(ba: CurveBounds, bb: CurveBounds, n_grid: int = 201):
    """Rate intervals where one model's achievable distortion beats the other's floor."""
    r_max = max(r for _, r in ba.achieved + bb.achieved)
    grid = np.linspace(0.0, r_max, n_grid) if r_max > 0 else np.zeros(1)
    a_up = np.array([ba.distortion_upper(r) for r in grid])
    a_lo = np.array([ba.distortion_lower(r) for r in grid])
    b_up = np.array([bb.distortion_upper(r) for r in grid])
    b_lo = np.array([bb.distortion_lower(r) for r in grid])
    a_wins = a_up < b_lo
    b_wins = b_up < a_lo
    return grid, _runs(grid, a_wins), _runs(grid, b_wins), _runs(grid, ~(a_wins | b_wins))


def _length(intervals) -> float:
    return sum(b - a for a, b in intervals) + 1e-12 * len(intervals)


def compare_models(source, model_a: BearingModel, model_b: BearingModel,
                   slopes: Sequence[float], config: SearchConfig) -> ModelComparison:
    """Pick the bearing model that compresses better, if the bounds can tell."""
    curve_a = sweep(source, model_a, slopes, config)
    curve_b = curve_a if model_b == model_a else sweep(source, model_b, slopes, config)
    ba = _build_bounds(curve_a)
    bb = _build_bounds(curve_b)
    _, a_better, b_better, unclear = compare_bounds(ba, bb)
    la, lb = _length(a_better), _length(b_better)
    name_a, name_b = model_label(model_a), model_label(model_b)
    if la > lb:
        verdict = name_a
    elif lb > la:
        verdict = name_b
    else:
        verdict = "inconclusive"
    return ModelComparison(name_a, name_b, verdict, a_better, b_better, unclear,
                           curve_a, curve_b, ba, bb)


@dataclass
class SlopeStructure:
    slope: float
    codebook_size: int
    min_separation: float | None
    min_weight: float | None
    flagged: bool = False


@dataclass
class BifurcationReport:
    rows: list[SlopeStructure]
    geo_delta: float
    weight_cap: float
    curve: list[RdCurvePoint] = field(repr=False, default_factory=list)

    @property
    def flagged_slopes(self) -> list[float]:
        return [r.slope for r in self.rows if r.flagged]


def _new_points(prev: Sequence[GeoPoint], cur: Sequence[GeoPoint]) -> tuple[list[int], list[int]]:
    """Match previous points to current ones greedily by distance.

    Returns (matched indices, unmatched indices) into ``cur``.
    """
    pairs = sorted((angular_distance(a, b), i, j)
                   for i, a in enumerate(prev) for j, b in enumerate(cur))
    used_prev, used_cur = set(), set()
    for _, i, j in pairs:
        if i not in used_prev and j not in used_cur:
            used_prev.add(i)
            used_cur.add(j)
    return sorted(used_cur), [j for j in range(len(cur)) if j not in used_cur]


def detect_bifurcations(curve: Sequence[RdCurvePoint], geo_delta: float = 1.0,
                        weight_cap: float = 0.01) -> list[SlopeStructure]:
    rows = []
    prev = None
    for pt in curve:
        if not pt.ok:
            rows.append(SlopeStructure(pt.slope, 0, None, None))
            continue
        sol = pt.solution
        cb = sol.codebook.points
        weights = sol.weights
        seps = [angular_distance(a, b) for a, b in itertools.combinations(cb, 2)]
        row = SlopeStructure(pt.slope, len(cb), min(seps) if seps else None, float(weights.min()))
        if prev is not None and len(cb) > len(prev.codebook.points):
            survivors, new = _new_points(prev.codebook.points, cb)
            near = all(min(angular_distance(cb[j], cb[k]) for k in survivors) <= geo_delta
                       for j in new)
            light = any(weights[j] < weight_cap for j in new)
            row.flagged = bool(new) and near and light
        rows.append(row)
        prev = sol
    return rows


def bifurcation_scan(source, model: BearingModel, slopes: Sequence[float], config: SearchConfig,
                     geo_delta: float = 1.0, weight_cap: float = 0.01,
                     frozen_points: Sequence[GeoPoint] = ()) -> BifurcationReport:
    """Flag slopes where a light reconstruction point splits off next to an existing one.

    Slopes are scanned from mild to steep (descending order).
    """
    ordered = sorted(slopes, reverse=True)
    curve = sweep(source, model, ordered, config, frozen_points)
    return BifurcationReport(detect_bifurcations(curve, geo_delta, weight_cap),
                             geo_delta, weight_cap, curve)
