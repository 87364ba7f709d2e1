"""
Pareto dominance, rank-0 front extraction, objective normalization and the
front-quality indicators (hypervolume, IGD) for two minimized objectives:
normalized error and normalized latency.
"""
from dataclasses import dataclass, asdict
from typing import Iterable, NamedTuple, Sequence
import math

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'ObjectivePoint',
    'NormalizedPoint',
    'NormalizationBounds',
    'FrontMember',
    'FrontSet',
    'HypervolumeResult',
    'MetricsReport',
    'REFERENCE_POINT',
    'dominates',
    'non_dominated_sort',
    'normalize',
    'normalize_pairs',
    'hypervolume',
    'igd',
    'spearman',
    'compute_metrics',
]


@dataclass(frozen=True)
class ObjectivePoint:
    """
    Raw objectives of one architecture.

    Parameters
    ----------
    accuracy : float
        Top-1 accuracy in percent, higher is better.
    latency : float
        Device latency in milliseconds, lower is better.
    """
    accuracy : float
    latency : float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"accuracy must be in [0, 100], got {self.accuracy}")
        if not self.latency > 0.0:
            raise ValueError(f"latency must be > 0, got {self.latency}")


class NormalizedPoint(NamedTuple):
    """
    Normalized error ``f1`` and latency ``f2``, both minimized.
    """
    f1 : float
    f2 : float


REFERENCE_POINT = NormalizedPoint(1.0, 1.0)


@dataclass(frozen=True)
class NormalizationBounds:
    """
    Per-axis min/max used to map raw objectives into ``[0, 1]``.
    """
    acc_min : float
    acc_max : float
    lat_min : float
    lat_max : float

    def __post_init__(self):
        if not self.acc_max > self.acc_min:
            raise ValueError(f"Degenerate accuracy bounds: min={self.acc_min}, max={self.acc_max}")
        if not self.lat_max > self.lat_min:
            raise ValueError(f"Degenerate latency bounds: min={self.lat_min}, max={self.lat_max}")

    @classmethod
    def from_arrays(cls, accuracy : Sequence[float], latency : Sequence[float]) -> 'NormalizationBounds':
        acc = np.asarray(accuracy, dtype=float)
        lat = np.asarray(latency, dtype=float)
        if acc.size == 0 or lat.size == 0:
            raise ValueError("Cannot derive normalization bounds from an empty set of points.")
        return cls(float(acc.min()), float(acc.max()), float(lat.min()), float(lat.max()))

    @classmethod
    def from_points(cls, points : Iterable[ObjectivePoint]) -> 'NormalizationBounds':
        points = list(points)
        return cls.from_arrays([p.accuracy for p in points], [p.latency for p in points])

    @classmethod
    def parse(cls, text : str) -> 'NormalizationBounds':
        """
        Parse ``"acc_min,acc_max,lat_min,lat_max"``.
        """
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"Bounds must be 'acc_min,acc_max,lat_min,lat_max', got {text!r}")
        return cls(*(float(p) for p in parts))

    def to_dict(self) -> dict:
        return asdict(self)


class FrontMember(NamedTuple):
    arch : str | None
    point : NormalizedPoint


@dataclass(frozen=True)
class FrontSet:
    """
    A mutually non-dominated set of normalized points, each optionally tagged
    with an architecture id. Members are ordered by ascending ``f1``.
    """
    members : tuple[FrontMember, ...] = ()

    @property
    def points(self) -> list[NormalizedPoint]:
        return [m.point for m in self.members]

    @property
    def arch_ids(self) -> list[str | None]:
        return [m.arch for m in self.members]

    def is_mutually_non_dominated(self) -> bool:
        pts = self.points
        return not any(
            dominates(a, b)
            for i, a in enumerate(pts)
            for j, b in enumerate(pts)
            if i != j
        )

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


class HypervolumeResult(NamedTuple):
    """
    Hypervolume value plus the number of points excluded because they did
    not dominate the reference point.
    """
    value : float
    excluded : int = 0

    def __float__(self):
        return self.value


def dominates(a : Sequence[float], b : Sequence[float]) -> bool:
    """
    True if ``a`` Pareto-dominates ``b`` under minimization.
    """
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def _as_points(points) -> list[NormalizedPoint]:
    if isinstance(points, FrontSet):
        return points.points
    return [NormalizedPoint(float(p[0]), float(p[1])) for p in points]


def non_dominated_sort(
    points : Iterable[Sequence[float]] | FrontSet,
    ids : Sequence[str] | None = None,
) -> FrontSet:
    """
    Extract the rank-0 front of a finite multiset of 2-D points.

    Exact duplicates collapse onto the first occurrence in input order.

    Parameters
    ----------
    points : Iterable[Sequence[float]] | FrontSet
        Points ``(f1, f2)`` to filter, both minimized.
    ids : Sequence[str] | None
        Optional architecture ids aligned with ``points``.

    Returns
    -------
    FrontSet
        The non-dominated members, sorted by ascending ``f1``.
    """
    if isinstance(points, FrontSet):
        ids = points.arch_ids if ids is None else ids
    pts = _as_points(points)
    if ids is not None and len(ids) != len(pts):
        raise ValueError(f"Got {len(ids)} ids for {len(pts)} points")
    order = sorted(range(len(pts)), key=lambda i: (pts[i].f1, pts[i].f2, i))
    members = []
    best_f2 = math.inf
    for i in order:
        if pts[i].f2 < best_f2:
            members.append(FrontMember(ids[i] if ids is not None else None, pts[i]))
            best_f2 = pts[i].f2
    return FrontSet(tuple(members))


def normalize_pairs(
    accuracy : Sequence[float],
    latency : Sequence[float],
    bounds : NormalizationBounds,
) -> list[NormalizedPoint]:
    """
    Vectorized `normalize` over parallel accuracy and latency sequences.
    """
    acc = np.asarray(accuracy, dtype=float)
    lat = np.asarray(latency, dtype=float)
    f1 = np.clip((bounds.acc_max - acc) / (bounds.acc_max - bounds.acc_min), 0.0, 1.0)
    f2 = np.clip((lat - bounds.lat_min) / (bounds.lat_max - bounds.lat_min), 0.0, 1.0)
    return [NormalizedPoint(float(a), float(b)) for a, b in zip(f1, f2)]


def normalize(points : Iterable[ObjectivePoint], bounds : NormalizationBounds) -> list[NormalizedPoint]:
    """
    Map raw objectives to normalized error and latency, clamped to ``[0, 1]``.

    ``f1 = (acc_max - acc) / (acc_max - acc_min)`` and
    ``f2 = (lat - lat_min) / (lat_max - lat_min)``.
    """
    points = list(points)
    return normalize_pairs(
        [p.accuracy for p in points],
        [p.latency for p in points],
        bounds,
    )


def hypervolume(
    front : Iterable[Sequence[float]] | FrontSet,
    ref : Sequence[float] = REFERENCE_POINT,
) -> HypervolumeResult:
    """
    Exact 2-D hypervolume: the area of the union of boxes ``[s1, r1] x [s2, r2]``.

    Points are clamped to ``[0, 1]`` first; points that still do not
    dominate ``ref`` componentwise are excluded and counted. Input order and
    duplicates do not affect the result.
    """
    r1, r2 = float(ref[0]), float(ref[1])
    pts = [
        NormalizedPoint(min(max(p.f1, 0.0), 1.0), min(max(p.f2, 0.0), 1.0))
        for p in _as_points(front)
    ]
    kept = [p for p in pts if p.f1 <= r1 and p.f2 <= r2]
    excluded = len(pts) - len(kept)
    if excluded:
        logger.warning(f"{excluded} point(s) do not dominate the reference point {ref} and were excluded.")
    area = 0.0
    prev_f2 = r2
    for p in non_dominated_sort(kept).points:
        area += (r1 - p.f1) * (prev_f2 - p.f2)
        prev_f2 = p.f2
    return HypervolumeResult(area, excluded)


def igd(
    found : Iterable[Sequence[float]] | FrontSet,
    truth : Iterable[Sequence[float]] | FrontSet,
) -> float:
    """
    Inverted generational distance: mean over truth points of the Euclidean
    distance to the nearest found point.

    Raises
    ------
    ValueError
        If either set is empty.
    """
    f = np.asarray(_as_points(found), dtype=float)
    t = np.asarray(_as_points(truth), dtype=float)
    if len(t) == 0:
        raise ValueError("IGD is undefined for an empty reference front.")
    if len(f) == 0:
        raise ValueError("IGD is undefined for an empty found front.")
    return float(cdist(t, f).min(axis=1).mean())


def spearman(xs : Sequence[float], ys : Sequence[float]) -> float:
    """
    Spearman rank correlation with average ranks for ties.

    Raises
    ------
    ValueError
        On length mismatch, fewer than two values, or a constant input.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"spearman needs two 1-D sequences of equal length, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ValueError("spearman needs at least 2 values.")
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sx = float(np.dot(rx, rx))
    sy = float(np.dot(ry, ry))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("spearman is undefined for a constant input vector.")
    rho = float(np.dot(rx, ry)) / math.sqrt(sx * sy)
    return min(1.0, max(-1.0, rho))


@dataclass
class MetricsReport:
    """
    Front-quality metrics with everything needed to reproduce them.
    """
    hv : float
    igd : float | None
    bounds : NormalizationBounds
    reference : NormalizedPoint = REFERENCE_POINT
    excluded : int = 0
    n_found : int = 0
    n_truth : int = 0
    hv_truth : float | None = None

    def to_dict(self) -> dict:
        return {
            'hv': self.hv,
            'igd': self.igd,
            'hv_truth': self.hv_truth,
            'n_found': self.n_found,
            'n_truth': self.n_truth,
            'excluded': self.excluded,
            'ref_f1': self.reference.f1,
            'ref_f2': self.reference.f2,
            **self.bounds.to_dict(),
        }

    def to_text(self) -> str:
        """
        Flat ``key=value`` block, one metric per line.
        """
        lines = []
        for key, value in self.to_dict().items():
            if value is None:
                value = 'NA'
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def compute_metrics(
    found : FrontSet,
    truth : FrontSet | None,
    bounds : NormalizationBounds,
    ref : NormalizedPoint = REFERENCE_POINT,
) -> MetricsReport:
    """
    HV of ``found`` and, when a truth front is given, IGD and the truth HV.
    """
    hv = hypervolume(found, ref)
    report = MetricsReport(
        hv=hv.value,
        igd=None,
        bounds=bounds,
        reference=NormalizedPoint(*ref),
        excluded=hv.excluded,
        n_found=len(found),
    )
    if truth is not None:
        report.igd = igd(found, truth)
        report.hv_truth = hypervolume(truth, ref).value
        report.n_truth = len(truth)
    return report
