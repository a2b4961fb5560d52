"""Serialization of results to CSV, JSON and GeoJSON.

Everything here returns strings or plain dicts; floats are written with
``repr`` precision so repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .bootstrap_region import BootstrapCloud, ConfidenceEllipse
from .circular import variance_to_sigma
from .codebook_search import RdSolution
from .curve_analysis import BifurcationReport, CurveBounds, ModelComparison, RdCurvePoint
from .diagnostics import OutlierReport, point_labels
from .geodesy import model_label


def _num(x):
    """JSON-safe float: non-finite values become None."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _sigma(v: float):
    try:
        return variance_to_sigma(float(v))
    except ValueError:
        return None


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_text(path: str | Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def solution_doc(sol: RdSolution, labels=None) -> dict:
    labels = labels or point_labels(len(sol))
    pts = []
    for label, pt, w, d, frozen in zip(labels, sol.codebook.points, sol.weights,
                                       sol.point_distortions, sol.codebook.frozen):
        pts.append({"id": label, "lat": pt.lat, "lon": pt.lon, "weight": float(w),
                    "distortion": float(d), "sigma_deg": _sigma(d), "frozen": bool(frozen)})
    return {
        "model": model_label(sol.model),
        "slope": float(sol.slope),
        "n_sites": len(sol.coupling.source),
        "rate_nats": float(sol.rate),
        "mean_distortion": float(sol.mean_distortion),
        "sigma_deg": _sigma(sol.mean_distortion),
        "lagrangian": float(sol.coupling.lagrangian),
        "converged": bool(sol.converged),
        "warnings": list(sol.warnings),
        "points": pts,
    }


def points_geojson(sol: RdSolution, labels=None) -> dict:
    labels = labels or point_labels(len(sol))
    feats = []
    for label, pt, w, d, frozen in zip(labels, sol.codebook.points, sol.weights,
                                       sol.point_distortions, sol.codebook.frozen):
        feats.append({"type": "Feature",
                      "geometry": {"type": "Point", "coordinates": [pt.lon, pt.lat]},
                      "properties": {"id": label, "weight": float(w),
                                     "distortion": float(d), "frozen": bool(frozen)}})
    return {"type": "FeatureCollection", "features": feats}


def outliers_doc(report: OutlierReport) -> dict:
    return {
        "support_threshold": report.support_threshold,
        "max_support_count": report.max_support_count,
        "points": [{"id": p.label, "supporters": list(p.supporters),
                    "support_mass": p.support_mass, "top_sites": list(p.top_sites),
                    "top_mass": p.top_mass, "flagged": p.flagged} for p in report.points],
        "flagged": [p.label for p in report.flagged],
        "candidates": report.candidates,
    }


CURVE_HEADER = ["slope", "rate_nats", "distortion", "codebook_size"]


def curve_csv(points: list[RdCurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for p in points:
        if p.ok:
            writer.writerow([repr(p.slope), repr(p.rate_nats), repr(p.distortion), p.codebook_size])
        else:
            writer.writerow([repr(p.slope), "", "", 0])
    return buf.getvalue()


def curve_points_doc(points: list[RdCurvePoint]) -> list[dict]:
    return [{"slope": p.slope, "rate_nats": _num(p.rate_nats), "distortion": _num(p.distortion),
             "codebook_size": p.codebook_size, "error": p.error} for p in points]


def bounds_doc(b: CurveBounds, model: str | None = None) -> dict:
    return {
        "model": model,
        "achieved": [[d, r] for d, r in b.achieved],
        "tangents": [{"slope": s, "intercept": c} for s, c in b.tangents],
        "lower": [[d, r] for d, r in b.lower_vertices],
        "upper": [[d, r] for d, r in b.upper_vertices],
    }


def bifurcations_doc(report: BifurcationReport) -> dict:
    return {
        "geo_delta": report.geo_delta,
        "weight_cap": report.weight_cap,
        "slopes": [{"slope": r.slope, "codebook_size": r.codebook_size,
                    "min_separation": _num(r.min_separation), "min_weight": _num(r.min_weight),
                    "flagged": r.flagged} for r in report.rows],
        "flagged_slopes": report.flagged_slopes,
    }


def verdict_doc(cmp: ModelComparison) -> dict:
    def iv(xs):
        return [[a, b] for a, b in xs]

    return {
        "model_a": cmp.model_a,
        "model_b": cmp.model_b,
        "verdict": cmp.verdict,
        "a_better": iv(cmp.a_better),
        "b_better": iv(cmp.b_better),
        "inconclusive": iv(cmp.inconclusive),
    }


def cloud_csv(cloud: BootstrapCloud) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["replicate", "lat", "lon"])
    for idx, p in zip(cloud.indices, cloud.replicates):
        writer.writerow([idx, repr(p.lat), repr(p.lon)])
    return buf.getvalue()


def ellipse_geojson(ell: ConfidenceEllipse) -> dict:
    ring = [[float(lon), float(lat)] for lat, lon in ell.boundary]
    ring.append(ring[0])
    return {"type": "FeatureCollection", "features": [
        {"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [ring]},
         "properties": {"kind": "ellipse", "level": ell.level, "quantile": ell.quantile}},
        {"type": "Feature",
         "geometry": {"type": "Point", "coordinates": [ell.center.lon, ell.center.lat]},
         "properties": {"kind": "center"}},
    ]}


def bootstrap_summary(cloud: BootstrapCloud, ell: ConfidenceEllipse | None,
                      degenerate: bool = False) -> dict:
    doc = {
        "n_resamples": cloud.n_resamples,
        "n_replicates": len(cloud),
        "n_failures": len(cloud.failures),
        "seed": cloud.seed,
        "start": {"lat": cloud.start.lat, "lon": cloud.start.lon},
        "degenerate": degenerate,
    }
    if ell is not None:
        major, minor = ell.semi_axes
        doc.update({
            "center": {"lat": ell.center.lat, "lon": ell.center.lon},
            "covariance": np.asarray(ell.covariance, dtype=float).tolist(),
            "level": ell.level,
            "quantile": ell.quantile,
            "semi_axes_deg": {"major": major, "minor": minor},
            "orientation_deg": ell.orientation,
        })
    return doc
