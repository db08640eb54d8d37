"""
Locality of an ordering: how far apart 6-adjacent voxels land in the sequence.

For every unordered pair of face-sharing voxels ``(u, v)`` the distance is
``|linear_to_seq[u] - linear_to_seq[v]|``. Percentiles use nearest rank.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .exceptions import ContractError
from .ordering import build_ordering

CSV_COLUMNS = ['scheme', 'w', 'h', 'd', 'mean', 'max', 'p50', 'p95', 'pairs']
AXIS_COLUMNS = ['mean_x', 'mean_y', 'mean_z']


@dataclass(frozen=True)
class LocalityReport:
    scheme: str
    w: int
    h: int
    d: int
    mean: float
    max: int
    p50: int
    p95: int
    pairs: int
    mean_x: float = 0.0
    mean_y: float = 0.0
    mean_z: float = 0.0

    def as_row(self, per_axis=False):
        row = asdict(self)
        columns = CSV_COLUMNS + (AXIS_COLUMNS if per_axis else [])
        return {key: row[key] for key in columns}


def expected_pair_count(w, h, d):
    return 3 * w * h * d - w * h - h * d - w * d


def nearest_rank(sorted_values, percent):
    """Nearest-rank percentile of an ascending array (0 for an empty one)."""
    n = len(sorted_values)
    if n == 0:
        return 0
    rank = max(1, math.ceil(percent / 100.0 * n))
    return int(sorted_values[rank - 1])


def axis_distances(ordering):
    """Sequence distances of adjacent pairs along x, y and z (in that order)."""
    pos = ordering.linear_to_seq.reshape(ordering.dims.shape)
    return (
        np.abs(np.diff(pos, axis=2)).ravel(),
        np.abs(np.diff(pos, axis=1)).ravel(),
        np.abs(np.diff(pos, axis=0)).ravel(),
    )


def neighbor_distance_stats(ordering):
    """Aggregate 6-adjacency sequence distances of ``ordering`` into a report."""
    dims = ordering.dims
    per_axis = axis_distances(ordering)
    distances = np.sort(np.concatenate(per_axis))
    pairs = int(distances.size)
    if pairs != expected_pair_count(dims.w, dims.h, dims.d):
        raise ContractError(f"enumerated {pairs} pairs on {dims}, expected "
                            f"{expected_pair_count(dims.w, dims.h, dims.d)}")

    def _mean(values):
        return float(values.mean()) if values.size else 0.0

    return LocalityReport(
        scheme=str(ordering.scheme),
        w=dims.w,
        h=dims.h,
        d=dims.d,
        mean=_mean(distances),
        max=int(distances[-1]) if pairs else 0,
        p50=nearest_rank(distances, 50),
        p95=nearest_rank(distances, 95),
        pairs=pairs,
        mean_x=_mean(per_axis[0]),
        mean_y=_mean(per_axis[1]),
        mean_z=_mean(per_axis[2]),
    )


def compare_schemes(dims, schemes):
    """One :class:`LocalityReport` per scheme, all over the same ``dims``."""
    if not schemes:
        raise ContractError("compare_schemes needs at least one scheme")
    return [neighbor_distance_stats(build_ordering(scheme, dims)) for scheme in schemes]


def reports_frame(reports, per_axis=False):
    """Tabulate reports with the CSV column layout."""
    columns = CSV_COLUMNS + (AXIS_COLUMNS if per_axis else [])
    return pd.DataFrame([r.as_row(per_axis) for r in reports], columns=columns)


def reports_csv(reports, per_axis=False):
    return reports_frame(reports, per_axis).to_csv(index=False, lineterminator='\n', float_format='%.6f')
