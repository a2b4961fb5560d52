"""Adaptive codebook search over a continuous reconstruction alphabet.

The search alternates between a finite-codebook Blahut-Arimoto solve and a
Nelder-Mead relocation of each reconstruction point:

1. draw random site weightings from a Dirichlet distribution;
2. find the optimal point for each weighting (initial codebook);
3. run Blahut-Arimoto on the current codebook;
4. prune points whose weight is close to zero;
5. drop one of any two points whose site posteriors nearly coincide;
6. move every free point to the optimum of its joint-weighted objective
   and return to 3 until the Lagrangian stops improving.

Frozen points take part in step 3 only.  With ``removal_check`` set, a final
pass also drops free points whose removal lowers the Lagrangian; this clears
light near-duplicate points left in local optima, which is exactly the noise
splitting a bifurcation scan looks for, so it is off by default.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .dataset import SourceDistribution, uniform_distribution
from .errors import EmptyCodebook
from .geodesy import (RHUMB, BearingModel, GeoPoint, angular_distance, destination,
                      separation_rad)
from .rd_engine import Codebook, Coupling, blahut_arimoto, distortion_columns

log = logging.getLogger(__name__)

LAT_LIMIT = 89.999
DEDUP_DEG = 1e-3


@dataclass(frozen=True)
class SearchConfig:
    slope: float = -80.0
    n_init: int = 64
    dirichlet_alpha: float = 1.0
    outer_tol: float = 1e-6
    prune_weight: float = 1e-4
    merge_distance: float = 0.05
    max_outer_iters: int = 500
    seed: int = 0
    simplex_step: float = 0.5
    simplex_ftol: float = 1e-12
    simplex_maxiter: int = 500
    removal_check: bool = False

    def __post_init__(self):
        if not self.slope <= 0:
            raise ValueError("slope must be <= 0")
        if self.n_init < 0:
            raise ValueError("n_init must be non-negative")
        if self.dirichlet_alpha <= 0:
            raise ValueError("dirichlet_alpha must be positive")
        if self.outer_tol <= 0:
            raise ValueError("outer_tol must be positive")
        if not 0 < self.prune_weight < 1:
            raise ValueError("prune_weight must lie in (0, 1)")
        if not 0 < self.merge_distance <= 1:
            raise ValueError("merge_distance must lie in (0, 1]")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def inner_tol(self) -> float:
        return self.outer_tol / 10.0


@dataclass(frozen=True)
class PointFit:
    point: GeoPoint
    value: float
    converged: bool
    n_iter: int


@dataclass
class RdSolution:
    codebook: Codebook
    coupling: Coupling
    distortion: np.ndarray = field(repr=False)
    model: BearingModel = RHUMB
    converged: bool = True
    outer_iters: int = 0
    lagrangian_history: list[float] = field(default_factory=list, repr=False)
    warnings: list[str] = field(default_factory=list)
    source: SourceDistribution | None = field(default=None, repr=False)

    @property
    def weights(self) -> np.ndarray:
        return self.coupling.marginal

    @property
    def point_distortions(self) -> np.ndarray:
        return self.coupling.point_distortions(self.distortion)

    @property
    def rate(self) -> float:
        return self.coupling.rate_nats

    @property
    def mean_distortion(self) -> float:
        return self.coupling.mean_distortion

    @property
    def slope(self) -> float:
        return self.coupling.slope

    def __len__(self):
        return len(self.codebook)


def _as_source(sites) -> SourceDistribution:
    if isinstance(sites, SourceDistribution):
        return sites
    return uniform_distribution(list(sites))


def _clamp(lat: float, lon: float) -> tuple[float, float]:
    return min(LAT_LIMIT, max(-LAT_LIMIT, lat)), lon


def make_objective(lat, lon, ori, weights, model: BearingModel):
    """Weighted mean distortion as a function of a (lat, lon) pair in degrees."""
    w = np.asarray(weights, dtype=float)
    live = w > 0
    lat, lon, ori, w = lat[live], lon[live], ori[live], w[live]

    def f(x):
        plat, plon = _clamp(float(x[0]), float(x[1]))
        d = distortion_columns(lat, lon, ori, math.radians(plat), math.radians(plon), model)
        return float(w @ d[:, 0])

    return f


def optimal_point(sites, weights, model: BearingModel, start: GeoPoint, *,
                  step: float = 0.5, ftol: float = 1e-12, maxiter: int = 500,
                  _arrays=None) -> PointFit:
    """Nelder-Mead search for the point minimizing weighted versine distortion.

    The simplex works directly in (latitude, longitude) degrees; latitude is
    clamped just short of the poles when evaluating and longitude wraps.
    Hitting ``maxiter`` leaves ``converged`` False and returns the best vertex.
    """
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        raise ValueError("weights must have positive sum")
    lat, lon, ori = _arrays if _arrays is not None else _as_source(sites).arrays()
    if len(w) != len(lat):
        raise ValueError("one weight per site required")
    f = make_objective(lat, lon, ori, w, model)
    x0 = np.array(_clamp(start.lat, start.lon))
    simplex = np.array([x0, x0 + [step, 0.0], x0 + [0.0, step]])
    res = optimize.minimize(f, x0, method="Nelder-Mead",
                            options={"initial_simplex": simplex, "xatol": np.inf,
                                     "fatol": ftol, "maxiter": maxiter, "adaptive": False})
    plat, plon = _clamp(*res.x)
    best = GeoPoint(plat, plon)
    value = f((best.lat, best.lon))
    f0 = f(x0)
    if value > f0:
        # keep the contract f(result) <= f(start) even after normalization
        best, value = GeoPoint(*x0), f0
    return PointFit(best, value, res.nit < maxiter, int(res.nit))


def _start_scale(lat, lon, p) -> float:
    """Typical inter-site distance in degrees, used to place initial guesses."""
    idx = np.flatnonzero(p > 0)[:200]
    if len(idx) < 2:
        return 1.0
    a, b = np.triu_indices(len(idx), k=1)
    sep = separation_rad(lat[idx][a], lon[idx][a], lat[idx][b], lon[idx][b])
    return float(np.clip(np.degrees(np.median(sep)), 1.0, 45.0))


def _start_for(weights, lat, lon, ori, scale) -> GeoPoint:
    # a point on the orientation ray of the most heavily weighted site
    j = int(np.argmax(weights))
    site = GeoPoint(math.degrees(lat[j]), math.degrees(lon[j]))
    return destination(site, math.degrees(ori[j]), scale)


def _total_variation(a, b) -> float:
    return 0.5 * float(np.abs(a - b).sum())


def _select(coupling: Coupling, frozen: Sequence[bool], config: SearchConfig) -> np.ndarray:
    """Mask of points surviving pruning and merging."""
    q = coupling.marginal
    frozen = np.asarray(frozen, dtype=bool)
    keep = frozen | (q >= config.prune_weight)
    if not keep.any():
        raise EmptyCodebook("pruning removed every reconstruction point")
    post = coupling.posterior()
    order = sorted(range(len(q)), key=lambda j: (not frozen[j], -q[j], j))
    kept: list[int] = []
    for j in order:
        if not keep[j]:
            continue
        if not frozen[j] and any(
                _total_variation(post[:, j], post[:, k]) < config.merge_distance for k in kept):
            keep[j] = False
            continue
        kept.append(j)
    return keep


def _dedupe(points: list[GeoPoint], frozen: list[bool], tol_deg: float = DEDUP_DEG):
    """Drop free points within ``tol_deg`` of an earlier (or frozen) point."""
    order = sorted(range(len(points)), key=lambda j: (not frozen[j], j))
    kept: list[int] = []
    for j in order:
        if not frozen[j] and any(angular_distance(points[j], points[k]) < tol_deg for k in kept):
            continue
        kept.append(j)
    kept.sort()
    return [points[j] for j in kept], [frozen[j] for j in kept], kept


def initial_codebook(source: SourceDistribution, model: BearingModel, config: SearchConfig,
                     frozen_points: Sequence[GeoPoint] = (),
                     initial_points: Sequence[GeoPoint] = ()) -> tuple[Codebook, int]:
    """Steps 1-2: optimal points for random Dirichlet weightings of the sites.

    ``initial_points`` are extra free points placed before the random draws.
    Returns the codebook (frozen points first) and the number of draws whose
    simplex search hit its iteration cap.
    """
    lat, lon, ori = arrays = source.arrays()
    p = source.probabilities
    rng = np.random.default_rng(config.seed)
    n = len(p)
    points = list(frozen_points) + list(initial_points)
    frozen = [True] * len(frozen_points) + [False] * len(initial_points)
    capped = 0
    if config.n_init:
        draws = rng.dirichlet(np.full(n, config.dirichlet_alpha), size=config.n_init) \
            if n > 1 else np.ones((config.n_init, 1))
        scale = _start_scale(lat, lon, p)
        for draw in draws:
            w = draw * p
            if w.sum() <= 0:
                continue
            w = w / w.sum()
            fit = optimal_point(None, w, model, _start_for(w, lat, lon, ori, scale),
                                step=config.simplex_step, ftol=config.simplex_ftol,
                                maxiter=config.simplex_maxiter, _arrays=arrays)
            capped += not fit.converged
            points.append(fit.point)
            frozen.append(False)
    if not points:
        raise EmptyCodebook("no frozen points and n_init = 0")
    points, frozen, _ = _dedupe(points, frozen)
    return Codebook(tuple(points), tuple(frozen)), capped


@dataclass
class _State:
    codebook: Codebook
    coupling: Coupling
    distortion: np.ndarray
    converged: bool
    iters: int
    history: list[float]

    @property
    def value(self) -> float:
        return self.coupling.lagrangian


def _subset(codebook: Codebook, idx) -> Codebook:
    return Codebook(tuple(codebook.points[j] for j in idx),
                    tuple(codebook.frozen[j] for j in idx))


def _refine(codebook: Codebook, marginal, arrays, p, model, config: SearchConfig) -> _State:
    """Steps 3-6 until the Lagrangian improves by less than ``outer_tol``."""
    lat, lon, ori = arrays
    previous = math.inf
    history: list[float] = []
    for outer in range(1, config.max_outer_iters + 1):
        plat, plon = codebook.radians()
        dmat = distortion_columns(lat, lon, ori, plat, plon, model)
        coupling = blahut_arimoto(p, dmat, config.slope, tol=config.inner_tol,
                                  init_marginal=marginal)
        keep = _select(coupling, codebook.frozen, config)
        if not keep.all():
            codebook = _subset(codebook, np.flatnonzero(keep))
            marginal = coupling.marginal[keep]
            continue
        value = coupling.lagrangian
        history.append(value)
        if previous - value < config.outer_tol:
            return _State(codebook, coupling, dmat, coupling.converged, outer, history)
        previous = value

        joint = p[:, None] * coupling.conditional
        points = list(codebook.points)
        for j, frozen in enumerate(codebook.frozen):
            if frozen or joint[:, j].sum() <= 0:
                continue
            points[j] = optimal_point(None, joint[:, j], model, points[j],
                                      step=config.simplex_step, ftol=config.simplex_ftol,
                                      maxiter=config.simplex_maxiter, _arrays=arrays).point
        # two free points may land on the same spot; keep the heavier one
        weights = coupling.marginal
        order = sorted(range(len(points)),
                       key=lambda j: (not codebook.frozen[j], -weights[j], j))
        _, _, kept = _dedupe([points[j] for j in order],
                             [codebook.frozen[j] for j in order], 1e-7)
        idx = sorted(order[k] for k in kept)
        codebook = Codebook(tuple(points[j] for j in idx),
                            tuple(codebook.frozen[j] for j in idx))
        marginal = weights[idx]

    plat, plon = codebook.radians()
    dmat = distortion_columns(lat, lon, ori, plat, plon, model)
    coupling = blahut_arimoto(p, dmat, config.slope, tol=config.inner_tol,
                              init_marginal=marginal)
    history.append(coupling.lagrangian)
    return _State(codebook, coupling, dmat, False, config.max_outer_iters, history)


def _removal_pass(state: _State, arrays, p, model, config: SearchConfig) -> tuple[_State, int]:
    """Drop free points whose removal lowers the Lagrangian.

    Catches codebooks stuck with a superfluous point.  Candidates are tried
    lightest first; a removal is kept only when the refined Lagrangian
    without the point is strictly lower, so light points that pay for
    themselves survive.
    """
    iters = 0
    changed = True
    while changed and len(state.codebook) > 1:
        changed = False
        weights = state.coupling.marginal
        free = [j for j in np.argsort(weights, kind="stable") if not state.codebook.frozen[j]]
        for j in free:
            idx = [k for k in range(len(state.codebook)) if k != j]
            trial = _refine(_subset(state.codebook, idx), weights[idx], arrays, p, model, config)
            iters += trial.iters
            if trial.value < state.value:
                state = trial
                changed = True
                break
    return state, iters


def search(source, model: BearingModel, config: SearchConfig,
           frozen_points: Sequence[GeoPoint] = (),
           initial_points: Sequence[GeoPoint] = ()) -> RdSolution:
    """Run the adaptive codebook algorithm at ``config.slope``.

    ``initial_points`` seed the codebook with free points in addition to the
    ``config.n_init`` random draws (warm starts).
    """
    source = _as_source(source)
    arrays = source.arrays()
    p = source.probabilities
    warnings: list[str] = []

    codebook, capped = initial_codebook(source, model, config, frozen_points,
                                       initial_points)
    if capped:
        warnings.append(f"{capped} initial simplex searches hit the iteration cap")
    state = _refine(codebook, None, arrays, p, model, config)
    history = list(state.history)
    iters = state.iters
    if config.removal_check:
        state, extra = _removal_pass(state, arrays, p, model, config)
        iters += extra
        history.append(state.value)

    if not state.converged:
        warnings.append(f"outer loop did not settle within {config.max_outer_iters} iterations")
    if not state.coupling.converged:
        warnings.append("Blahut-Arimoto hit its iteration cap")
    for w in warnings:
        log.warning(w)
    return RdSolution(state.codebook, state.coupling, state.distortion, model,
                      state.converged and state.coupling.converged, iters, history, warnings,
                      source)


def search_with_frozen(source, model: BearingModel, config: SearchConfig,
                       frozen_points: Sequence[GeoPoint],
                       initial_points: Sequence[GeoPoint] = ()) -> RdSolution:
    """Search with anchors that are never moved, pruned or merged."""
    frozen_points = list(frozen_points)
    for i, a in enumerate(frozen_points):
        for b in frozen_points[i + 1:]:
            if angular_distance(a, b) < math.degrees(1e-9):
                raise ValueError("frozen points must be pairwise distinct")
    return search(source, model, config, frozen_points, initial_points)
