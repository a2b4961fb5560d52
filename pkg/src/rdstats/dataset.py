"""Site records: CSV ingestion, filtering, exclusion lists and weighting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DuplicateId, EmptyDataset, ParseError, ValidationError
from .geodesy import GeoPoint

HEADER = ["id", "name", "latitude", "longitude", "orientation", "year_ce"]


@dataclass(frozen=True)
class Site:
    id: str
    name: str
    location: GeoPoint
    orientation: float
    year_ce: int | None = None
    weight: float = 1.0

    def __post_init__(self):
        if not (self.weight >= 0 and math.isfinite(self.weight)):
            raise ValidationError(f"site {self.id}: weight must be non-negative")


@dataclass(frozen=True)
class SourceDistribution:
    sites: tuple[Site, ...]
    probabilities: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (len(self.sites),):
            raise ValueError("one probability per site required")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    def __len__(self):
        return len(self.sites)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Latitude, longitude and orientation of the sites, in radians."""
        lat = np.radians([s.location.lat for s in self.sites])
        lon = np.radians([s.location.lon for s in self.sites])
        ori = np.radians([s.orientation for s in self.sites])
        return lat, lon, ori

    def reweighted(self, weights) -> "SourceDistribution":
        w = np.asarray(weights, dtype=float) * self.probabilities
        total = w.sum()
        if total <= 0:
            raise EmptyDataset("weights sum to zero")
        return SourceDistribution(self.sites, _normalized(w))


def _normalized(w: np.ndarray) -> np.ndarray:
    p = w / w.sum()
    # push the rounding residue onto the largest entry so the sum is exact
    p[np.argmax(p)] += 1.0 - p.sum()
    return p


def uniform_distribution(sites: Sequence[Site]) -> SourceDistribution:
    if len(sites) == 0:
        raise EmptyDataset("no sites")
    n = len(sites)
    return SourceDistribution(tuple(sites), np.full(n, 1.0 / n))


def weighted_distribution(sites: Sequence[Site]) -> SourceDistribution:
    """Probabilities proportional to each site's ``weight``."""
    if len(sites) == 0:
        raise EmptyDataset("no sites")
    w = np.array([s.weight for s in sites], dtype=float)
    if w.sum() <= 0:
        raise EmptyDataset("site weights sum to zero")
    return SourceDistribution(tuple(sites), _normalized(w))


def _parse_float(text: str, what: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{what} {text!r} is not a number", row) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} {text!r} is not finite", row)
    return value


def parse_row(record: dict, row: int) -> Site:
    site_id = (record.get("id") or "").strip()
    if not site_id:
        raise ParseError("missing id", row)
    lat = _parse_float(record["latitude"], "latitude", row)
    lon = _parse_float(record["longitude"], "longitude", row)
    ori = _parse_float(record["orientation"], "orientation", row)
    if not -90.0 <= lat <= 90.0:
        raise ValidationError(f"latitude {lat} outside [-90, 90]", row)
    if not -180.0 <= lon <= 360.0:
        raise ValidationError(f"longitude {lon} outside [-180, 360]", row)
    if not 0.0 <= ori <= 360.0:
        raise ValidationError(f"orientation {ori} outside [0, 360]", row)
    year_text = (record.get("year_ce") or "").strip()
    year = None
    if year_text:
        try:
            year = int(year_text)
        except ValueError:
            raise ParseError(f"year_ce {year_text!r} is not an integer", row) from None
    return Site(site_id, record.get("name") or "", GeoPoint(lat, lon), ori % 360.0, year)


def read_sites(path: str | Path) -> list[Site]:
    """Parse and validate a site CSV; row numbers in errors count the header as 1."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return []
        header = [h.strip() for h in header]
        if header != HEADER:
            raise ParseError(f"header must be {','.join(HEADER)}", 1)
        sites = []
        seen = set()
        for row, values in enumerate(reader, start=2):
            if not values or all(not v.strip() for v in values):
                continue
            if len(values) != len(HEADER):
                raise ParseError(f"expected {len(HEADER)} fields, got {len(values)}", row)
            site = parse_row(dict(zip(HEADER, values)), row)
            if site.id in seen:
                raise DuplicateId(f"row {row}: duplicate id {site.id!r}")
            seen.add(site.id)
            sites.append(site)
    return sites


def read_exclusions(path: str | Path) -> set[str]:
    ids = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                ids.add(line)
    return ids


def year_before(limit: int) -> Callable[[Site], bool]:
    """Predicate keeping dated sites with ``year_ce < limit``; undated sites fail."""
    return lambda site: site.year_ce is not None and site.year_ce < limit


def filter_sites(sites: Iterable[Site], predicate: Callable[[Site], bool] | None = None,
                 exclude: Iterable[str] = ()) -> list[Site]:
    exclude = set(exclude)
    return [s for s in sites
            if s.id not in exclude and (predicate is None or predicate(s))]


def load_sites(path: str | Path, predicate: Callable[[Site], bool] | None = None,
               exclude: Iterable[str] | str | Path | None = None) -> list[Site]:
    """Read, validate and filter sites.

    ``exclude`` is either a collection of ids or the path of an exclusion
    file (one id per line, ``#`` comments).
    """
    sites = read_sites(path)
    if isinstance(exclude, (str, Path)):
        exclude = read_exclusions(exclude)
    return filter_sites(sites, predicate, exclude or ())


def _format_float(x: float) -> str:
    return repr(float(x))


def write_sites(sites: Iterable[Site], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for s in sites:
            writer.writerow([s.id, s.name, _format_float(s.location.lat),
                             _format_float(s.location.lon), _format_float(s.orientation),
                             "" if s.year_ce is None else str(s.year_ce)])
