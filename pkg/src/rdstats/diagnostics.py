"""Soft classification of sites and screening for dominated reconstruction points."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codebook_search import RdSolution


def _sites(solution: RdSolution):
    if solution.source is None:
        raise ValueError("solution carries no site list")
    return solution.source.sites


def point_labels(n: int) -> list[str]:
    return [f"P{k + 1}" for k in range(n)]


@dataclass(frozen=True)
class ClassificationTable:
    """Conditional distribution of reconstruction points given each site."""

    site_ids: tuple[str, ...]
    site_names: tuple[str, ...]
    point_ids: tuple[str, ...]
    probabilities: np.ndarray

    @property
    def percent(self) -> np.ndarray:
        return 100.0 * self.probabilities

    def row_sums(self) -> np.ndarray:
        return self.probabilities.sum(axis=1)

    def to_csv(self, decimals: int = 1) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "name", *self.point_ids])
        for sid, name, row in zip(self.site_ids, self.site_names, self.percent):
            writer.writerow([sid, name, *(f"{v:.{decimals}f}" for v in row)])
        return buf.getvalue()

    def to_text(self, decimals: int = 1) -> str:
        """Aligned columns, one site per line, probabilities in percent."""
        names = [n or i for i, n in zip(self.site_ids, self.site_names)]
        cells = [[f"{v:.{decimals}f}" for v in row] for row in self.percent]
        w0 = max([len("Site")] + [len(n) for n in names])
        widths = [max([len(p)] + [len(r[j]) for r in cells]) for j, p in enumerate(self.point_ids)]
        lines = ["  ".join(["Site".ljust(w0)] + [p.rjust(w) for p, w in zip(self.point_ids, widths)])]
        for name, row in zip(names, cells):
            lines.append("  ".join([name.ljust(w0)] + [c.rjust(w) for c, w in zip(row, widths)]))
        return "\n".join(lines) + "\n"


def classify(solution: RdSolution, point_ids: Sequence[str] | None = None) -> ClassificationTable:
    """Rows are q(y|x) in site order, columns in codebook order."""
    cond = np.array(solution.coupling.conditional, dtype=float)
    ids = tuple(point_ids) if point_ids is not None else tuple(point_labels(cond.shape[1]))
    if len(ids) != cond.shape[1]:
        raise ValueError("one label per reconstruction point required")
    sites = _sites(solution)
    return ClassificationTable(tuple(s.id for s in sites), tuple(s.name for s in sites), ids, cond)


@dataclass(frozen=True)
class PointSupport:
    point: int
    label: str
    supporters: tuple[str, ...]
    support_mass: float
    top_sites: tuple[str, ...]
    top_mass: float
    flagged: bool


@dataclass(frozen=True)
class OutlierReport:
    support_threshold: float
    max_support_count: int
    points: tuple[PointSupport, ...]

    @property
    def flagged(self) -> list[PointSupport]:
        return [p for p in self.points if p.flagged]

    @property
    def candidates(self) -> list[str]:
        """Sites dominating a flagged point, in first-seen order."""
        seen: dict[str, None] = {}
        for p in self.flagged:
            for sid in p.top_sites:
                seen.setdefault(sid, None)
        return list(seen)


def screen_outliers(solution: RdSolution, support_threshold: float = 0.90,
                    max_support_count: int = 2,
                    point_ids: Sequence[str] | None = None) -> OutlierReport:
    """Flag reconstruction points carried by at most a couple of sites.

    A point is flagged when its ``max_support_count`` heaviest sites under
    p(x|y) hold at least ``support_threshold`` of its mass; the fewest of
    them that do are reported as its dominating sites.  Supporters are
    the sites whose individual share reaches ``1 - support_threshold``.
    Removal is left to the caller.
    """
    if not 0 < support_threshold < 1:
        raise ValueError("support_threshold must lie in (0, 1)")
    if max_support_count < 1:
        raise ValueError("max_support_count must be positive")
    post = solution.coupling.posterior()
    sites = _sites(solution)
    ids = [s.id for s in sites]
    labels = list(point_ids) if point_ids is not None else point_labels(post.shape[1])
    floor = 1.0 - support_threshold
    rows = []
    for j in range(post.shape[1]):
        col = post[:, j]
        # sort by mass, ties broken by id so the result does not depend on site order
        order = sorted(range(len(col)), key=lambda i: (-col[i], ids[i]))
        # shortest heaviest-first prefix reaching the threshold, capped at the count
        cum = np.cumsum(col[order[:max_support_count]])
        k = int(np.searchsorted(cum, support_threshold)) + 1
        top = order[:min(k, max_support_count)]
        top_mass = float(min(1.0, col[top].sum()))
        support = [i for i in order if col[i] >= floor]
        rows.append(PointSupport(
            j, labels[j], tuple(ids[i] for i in support),
            float(min(1.0, col[support].sum())) if support else 0.0,
            tuple(ids[i] for i in top), top_mass,
            bool(top_mass >= support_threshold and len(col) > max_support_count)))
    return OutlierReport(support_threshold, max_support_count, tuple(rows))
