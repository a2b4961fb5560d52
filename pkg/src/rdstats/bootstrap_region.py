"""Bootstrap clouds of optimal reconstruction points and their 95% ellipses.

Each replicate reweights the sites by multinomial multiplicities, relocates
the reconstruction point from the full-data optimum, and records where it
lands.  A Gaussian fitted to the cloud gives the descriptive confidence
region.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .codebook_search import SearchConfig, optimal_point, search
from .dataset import SourceDistribution, uniform_distribution
from .errors import DegenerateCovariance, InsufficientPoints, RdStatsError, TooManyFailures
from .geodesy import BearingModel, GeoPoint

log = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 10_000
MAX_FAILURE_RATE = 0.01
EIGEN_FLOOR = 1e-12


def resample_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    """Multiplicities of ``n`` draws with replacement from ``n`` sites."""
    if n < 1:
        raise ValueError("n must be positive")
    return rng.multinomial(n, np.full(n, 1.0 / n))


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one replicate, independent of evaluation order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


@dataclass
class BootstrapCloud:
    replicates: list[GeoPoint]
    indices: list[int]
    n_resamples: int
    seed: int
    start: GeoPoint
    failures: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.replicates)

    def coordinates(self) -> np.ndarray:
        """``(n, 2)`` array of (lat, lon) in degrees."""
        return np.array([[p.lat, p.lon] for p in self.replicates], dtype=float).reshape(-1, 2)


def _as_source(sites) -> SourceDistribution:
    if isinstance(sites, SourceDistribution):
        return sites
    return uniform_distribution(list(sites))


def full_data_point(source: SourceDistribution, model: BearingModel, config: SearchConfig,
                    frozen_points: Sequence[GeoPoint] = ()) -> GeoPoint:
    """Optimal free point on the unresampled data.

    Without frozen points this is the single point minimizing mean
    distortion (zero-slope search); with them it is the heaviest free point
    of the search at ``config.slope``.
    """
    if not frozen_points:
        sol = search(source, model, dataclasses.replace(config, slope=0.0))
        return sol.codebook.points[0]
    sol = search(source, model, config, frozen_points)
    free = _heaviest_free(sol)
    if free is None:
        raise InsufficientPoints("full-data search kept no free point")
    return free


def _heaviest_free(sol) -> GeoPoint | None:
    free = [j for j, f in enumerate(sol.codebook.frozen) if not f]
    if not free:
        return None
    j = max(free, key=lambda k: (sol.weights[k], -k))
    return sol.codebook.points[j]


def bootstrap_cloud(sites, model: BearingModel, config: SearchConfig,
                    n_resamples: int = DEFAULT_RESAMPLES, *, seed: int | None = None,
                    frozen_points: Sequence[GeoPoint] = (),
                    start: GeoPoint | None = None) -> BootstrapCloud:
    """Optimal reconstruction point for each of ``n_resamples`` bootstrap resamples.

    Parameters
    ----------
    sites : sequence of Site or SourceDistribution
        Multiplicities multiply the site probabilities.
    config : SearchConfig
        Simplex settings; with ``frozen_points`` also the slope and the
        search tolerances.  ``config.seed`` is the master seed unless
        ``seed`` is given.
    frozen_points : sequence of GeoPoint, optional
        Fixed anchors; each replicate then runs a frozen search warm-started
        at the full-data free point and keeps the heaviest free point.
    start : GeoPoint, optional
        Full-data optimum, computed when omitted.

    Raises
    ------
    TooManyFailures
        When more than 1% of the replicates fail.
    """
    source = _as_source(sites)
    n = len(source)
    if n < 2:
        raise InsufficientPoints("bootstrap needs at least two sites")
    if n_resamples < 1:
        raise ValueError("n_resamples must be positive")
    seed = config.seed if seed is None else int(seed)
    frozen_points = list(frozen_points)
    if start is None:
        start = full_data_point(source, model, config, frozen_points)
    arrays = source.arrays()
    p = source.probabilities
    warm = dataclasses.replace(config, n_init=0, removal_check=False)

    points, indices, failures = [], [], []
    for idx in range(n_resamples):
        counts = resample_weights(n, replicate_rng(seed, idx))
        w = counts * p
        try:
            if frozen_points:
                sol = search(source.reweighted(counts), model, warm, frozen_points, [start])
                point = _heaviest_free(sol)
                if point is None:
                    raise InsufficientPoints("free point pruned")
                ok = sol.converged
            else:
                fit = optimal_point(None, w / w.sum(), model, start, step=config.simplex_step,
                                    ftol=config.simplex_ftol, maxiter=config.simplex_maxiter,
                                    _arrays=arrays)
                point, ok = fit.point, fit.converged
        except RdStatsError as exc:
            failures.append((idx, f"{type(exc).__name__}: {exc}"))
            continue
        if not ok:
            failures.append((idx, "did not converge"))
            continue
        points.append(point)
        indices.append(idx)
    if len(failures) > MAX_FAILURE_RATE * n_resamples:
        raise TooManyFailures(f"{len(failures)} of {n_resamples} resamples failed")
    if failures:
        log.warning("%d of %d resamples failed", len(failures), n_resamples)
    return BootstrapCloud(points, indices, n_resamples, seed, start, failures)


def chi2_quantile(level: float, df: int = 2) -> float:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(stats.chi2.ppf(level, df))


@dataclass
class GaussianRegion:
    """Level set of a fitted Gaussian in any dimension."""

    mean: np.ndarray
    covariance: np.ndarray
    level: float
    quantile: float

    def mahalanobis2(self, x) -> np.ndarray:
        d = np.atleast_2d(np.asarray(x, dtype=float)) - self.mean
        sol = np.linalg.solve(self.covariance, d.T).T
        return np.sum(d * sol, axis=1)

    def contains(self, x) -> np.ndarray:
        return self.mahalanobis2(x) <= self.quantile


def fit_gaussian(samples, level: float = 0.95, weights=None, ddof: int = 1) -> GaussianRegion:
    """Mean, covariance and chi-square quantile of ``(n, d)`` samples.

    ``weights`` are frequency weights; ``ddof=1`` gives the usual sample
    covariance, ``ddof=0`` the moments of an exactly enumerated distribution.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, dim = x.shape
    if n < dim + 1:
        raise InsufficientPoints(f"need at least {dim + 1} samples, got {n}")
    cov = np.cov(x, rowvar=False, ddof=ddof, fweights=weights)
    cov = np.atleast_2d(cov)
    mean = np.average(x, axis=0, weights=weights)
    return GaussianRegion(mean, 0.5 * (cov + cov.T), level, chi2_quantile(level, dim))


@dataclass
class ConfidenceEllipse:
    center: GeoPoint
    covariance: np.ndarray
    level: float
    quantile: float
    boundary: np.ndarray = field(repr=False)

    @property
    def semi_axes(self) -> tuple[float, float]:
        """Major and minor semi-axis lengths in degrees."""
        vals = np.clip(np.linalg.eigvalsh(self.covariance), 0.0, None)
        return math.sqrt(self.quantile * vals[1]), math.sqrt(self.quantile * vals[0])

    @property
    def orientation(self) -> float:
        """Direction of the major axis, degrees clockwise from north, in [0, 180)."""
        vals, vecs = np.linalg.eigh(self.covariance)
        dlat, dlon = vecs[:, 1]
        return math.degrees(math.atan2(dlon, dlat)) % 180.0

    def quadratic_form(self, points) -> np.ndarray:
        d = np.atleast_2d(np.asarray(points, dtype=float)) - [self.center.lat, self.center.lon]
        sol = np.linalg.solve(self.covariance, d.T).T
        return np.sum(d * sol, axis=1)

    def contains(self, points) -> np.ndarray:
        return self.quadratic_form(points) <= self.quantile


def _sqrtm(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(cov)
    root = vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return root, vals


def fit_ellipse(cloud, level: float = 0.95, n_vertices: int = 128) -> ConfidenceEllipse:
    """Fit a 2D Gaussian to the cloud in (lat, lon) degrees and trace its level set.

    Raises
    ------
    DegenerateCovariance
        When the covariance has an eigenvalue below 1e-12; the degenerate
        ellipse (a segment or a point) is attached as ``exc.ellipse``.
    """
    if n_vertices < 64:
        raise ValueError("at least 64 boundary vertices required")
    coords = cloud.coordinates() if isinstance(cloud, BootstrapCloud) else \
        np.asarray(cloud, dtype=float).reshape(-1, 2)
    if len(coords) < 3:
        raise InsufficientPoints("need at least 3 replicates")
    region = fit_gaussian(coords, level)
    cov = region.covariance
    root, vals = _sqrtm(cov)
    theta = np.linspace(0.0, 2.0 * math.pi, n_vertices, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    boundary = region.mean + math.sqrt(region.quantile) * circle @ root.T
    center = GeoPoint(float(region.mean[0]), float(region.mean[1]))
    ellipse = ConfidenceEllipse(center, cov, level, region.quantile, boundary)
    if vals.min() < EIGEN_FLOOR:
        exc = DegenerateCovariance(f"covariance eigenvalue {vals.min():.3g} below {EIGEN_FLOOR}")
        exc.ellipse = ellipse
        raise exc
    return ellipse
