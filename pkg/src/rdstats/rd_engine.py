"""Slope-parametrized Blahut-Arimoto solver for a finite codebook.

The exposed parameter ``slope`` is the slope of the rate-distortion curve
(negative in normal use).  For a fixed codebook the solver minimizes the
Lagrangian ``F = I(X;Y) - slope * D`` over test channels ``q(y|x)``.
Rates are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from .dataset import SourceDistribution
from .errors import EmptyCodebook, NonFiniteValue
from .geodesy import COINCIDENCE_TOL_RAD, BearingModel, GeoPoint, separation_rad

COINCIDENT_DISTORTION = 2.0
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class Codebook:
    points: tuple[GeoPoint, ...]
    frozen: tuple[bool, ...] = ()

    def __post_init__(self):
        points = tuple(self.points)
        frozen = tuple(bool(f) for f in self.frozen) or (False,) * len(points)
        if not points:
            raise EmptyCodebook("codebook must contain at least one point")
        if len(frozen) != len(points):
            raise ValueError("one frozen flag per point required")
        lat = np.radians([p.lat for p in points])
        lon = np.radians([p.lon for p in points])
        sep = separation_rad(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
        np.fill_diagonal(sep, np.inf)
        if np.any(sep < COINCIDENCE_TOL_RAD):
            raise ValueError("codebook points must be pairwise distinct")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "frozen", frozen)

    def __len__(self):
        return len(self.points)

    def radians(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.radians([p.lat for p in self.points]),
                np.radians([p.lon for p in self.points]))


@dataclass(frozen=True)
class DistortionMatrix:
    entries: np.ndarray
    model: BearingModel


def distortion_columns(lat, lon, ori, pt_lat, pt_lon, model: BearingModel) -> np.ndarray:
    """Versine distortion from sites (radian arrays) to points (radian arrays).

    Returns an ``(n_sites, n_points)`` array.  Site/point pairs that coincide,
    or whose bearing is undefined, get the maximal distortion 2.
    """
    lat = np.asarray(lat)[:, None]
    lon = np.asarray(lon)[:, None]
    ori = np.asarray(ori)[:, None]
    pt_lat = np.atleast_1d(pt_lat)[None, :]
    pt_lon = np.atleast_1d(pt_lon)[None, :]
    with np.errstate(invalid="ignore"):
        b = model.bearings_rad(lat, lon, pt_lat, pt_lon)
        b = np.broadcast_to(b, (lat.shape[0], pt_lat.shape[1]))
        d = 2.0 * np.sin((ori - b) / 2.0) ** 2
    bad = ~np.isfinite(d)
    bad |= separation_rad(lat, lon, pt_lat, pt_lon) < COINCIDENCE_TOL_RAD
    if np.any(bad):
        d = np.where(bad, COINCIDENT_DISTORTION, d)
    return d


def build_distortion_matrix(source: SourceDistribution, codebook: Codebook,
                            model: BearingModel) -> DistortionMatrix:
    lat, lon, ori = source.arrays()
    plat, plon = codebook.radians()
    return DistortionMatrix(distortion_columns(lat, lon, ori, plat, plon, model), model)


@dataclass
class Coupling:
    conditional: np.ndarray
    marginal: np.ndarray
    source: np.ndarray
    rate_nats: float
    mean_distortion: float
    slope: float
    n_iter: int = 0
    converged: bool = True
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def lagrangian(self) -> float:
        return self.rate_nats - self.slope * self.mean_distortion

    def posterior(self) -> np.ndarray:
        """p(x|y): column ``y`` is the distribution of sites given point ``y``."""
        joint = self.source[:, None] * self.conditional
        with np.errstate(invalid="ignore", divide="ignore"):
            post = joint / joint.sum(axis=0, keepdims=True)
        return np.nan_to_num(post)

    def point_distortions(self, dmat: np.ndarray) -> np.ndarray:
        """Mean distortion of the sites mapped to each point."""
        return np.sum(self.posterior() * dmat, axis=0)


def _rate_and_distortion(p, cond, dmat):
    marginal = p @ cond
    with np.errstate(divide="ignore", invalid="ignore"):
        live = (cond > 0) & (marginal[None, :] > 0)
        terms = np.where(live, cond * np.log(np.where(live, cond / marginal[None, :], 1.0)), 0.0)
    rate = float(p @ terms.sum(axis=1))
    dist = float(p @ np.sum(cond * dmat, axis=1))
    return marginal, max(rate, 0.0), dist


def _channel(marginal, s_d):
    # s_d = slope * d shifted per row, so the largest exponent is exactly 0
    with np.errstate(divide="ignore"):
        logits = np.log(marginal)[None, :] + s_d
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def blahut_arimoto(source, dmat, slope: float, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER,
                   init_marginal: np.ndarray | None = None) -> Coupling:
    """Minimize ``R - slope*D`` over channels for a fixed distortion matrix.

    Parameters
    ----------
    source : SourceDistribution or array of site probabilities
    dmat : DistortionMatrix or ``(n_sites, n_points)`` array
    slope : float
        Slope of the rate-distortion curve, ``<= 0``.
    tol : float
        Stop once a sweep lowers the Lagrangian by less than this (nats).
    init_marginal : array, optional
        Starting output marginal; uniform when omitted.

    Returns
    -------
    Coupling
        ``converged`` is False when ``max_iter`` sweeps were exhausted.
    """
    if slope > 0:
        raise ValueError("slope must be <= 0")
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = np.asarray(getattr(source, "probabilities", source), dtype=float)
    d = np.asarray(getattr(dmat, "entries", dmat), dtype=float)
    if d.ndim != 2 or d.shape[0] != p.shape[0]:
        raise ValueError(f"distortion matrix shape {d.shape} does not match {p.shape[0]} sites")
    m = d.shape[1]
    if init_marginal is None:
        marginal = np.full(m, 1.0 / m)
    else:
        marginal = np.asarray(init_marginal, dtype=float)
        marginal = marginal / marginal.sum()
    if slope == 0:
        # zero-rate endpoint: the limit s -> 0- puts all mass on the best single point
        best = int(np.argmin(p @ d))
        cond = np.zeros_like(d)
        cond[:, best] = 1.0
        marginal, rate, dist = _rate_and_distortion(p, cond, d)
        return Coupling(cond, marginal, p, 0.0, dist, 0.0, 1, True, [0.0])
    s_d = slope * d

    history = []
    previous = math.inf
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        cond = _channel(marginal, s_d)
        marginal, rate, dist = _rate_and_distortion(p, cond, d)
        value = rate - slope * dist
        if not (math.isfinite(value) and np.all(np.isfinite(cond))):
            raise NonFiniteValue(f"non-finite Lagrangian at sweep {n_iter}")
        history.append(value)
        if previous - value < tol:
            converged = True
            break
        previous = value
    return Coupling(cond, marginal, p, rate, dist, float(slope), n_iter, converged, history)


@dataclass(frozen=True)
class HardAssignment:
    assignment: np.ndarray
    weights: np.ndarray
    point_distortions: np.ndarray
    mean_distortion: float
    rate_nats: float = 0.0


def evaluate_fixed(source, dmat) -> HardAssignment:
    """Assign every site to its least-distorted point (lowest index on ties).

    This is the zero-temperature limit used to score fixed candidate models.
    The reported rate is 0: a fixed model carries no information about the
    sites beyond the model itself.
    """
    p = np.asarray(getattr(source, "probabilities", source), dtype=float)
    d = np.asarray(getattr(dmat, "entries", dmat), dtype=float)
    assign = np.argmin(d, axis=1)
    m = d.shape[1]
    chosen = d[np.arange(d.shape[0]), assign]
    weights = np.bincount(assign, weights=p, minlength=m)
    sums = np.bincount(assign, weights=p * chosen, minlength=m)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_point = np.where(weights > 0, sums / weights, 0.0)
    return HardAssignment(assign, weights, per_point, float(p @ chosen))
