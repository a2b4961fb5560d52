"""Synthetic oriented sites with known target points, for testing."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .circular import kappa_for_sigma
from .dataset import Site
from .geodesy import RHUMB, BearingModel, GeoPoint, angular_distance


def generate_sites(anchors: Sequence[GeoPoint], per_anchor: int, sigma_deg: float,
                   box, model: BearingModel = RHUMB,
                   seed: int = 0, year_ce: int | None = None,
                   min_distance: float = 0.01, max_distance: float = math.inf) -> list[Site]:
    """Sites placed uniformly in ``box`` and oriented towards their anchor.

    ``box`` is ``(lat_min, lat_max, lon_min, lon_max)`` in degrees, or a
    sequence of such boxes, one per anchor.  Sites closer than
    ``min_distance`` or farther than ``max_distance`` degrees from their
    anchor are redrawn.  The orientation
    error is von Mises with circular standard deviation ``sigma_deg``.
    """
    if sigma_deg <= 0:
        raise ValueError("sigma_deg must be positive")
    boxes = [tuple(box)] * len(anchors) if np.ndim(box) == 1 else [tuple(b) for b in box]
    if len(boxes) != len(anchors):
        raise ValueError("one box per anchor required")
    for lat_min, lat_max, lon_min, lon_max in boxes:
        if not (-90 <= lat_min < lat_max <= 90 and lon_min < lon_max):
            raise ValueError(f"invalid box {box}")
    rng = np.random.default_rng(seed)
    kappa = kappa_for_sigma(sigma_deg)
    sites = []
    for i, (anchor, (lat_min, lat_max, lon_min, lon_max)) in enumerate(zip(anchors, boxes)):
        for k in range(per_anchor):
            while True:
                loc = GeoPoint(rng.uniform(lat_min, lat_max), rng.uniform(lon_min, lon_max))
                if min_distance < angular_distance(loc, anchor) <= max_distance:
                    break
            noise = math.degrees(rng.vonmises(0.0, kappa))
            ori = (model.bearing(loc, anchor) + noise) % 360.0
            sites.append(Site(f"a{i}-{k:03d}", f"anchor {i} site {k}", loc, ori, year_ce))
    return sites
