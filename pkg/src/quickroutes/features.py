"""Per-climb feature extraction from segmented sample windows.

Each clipped position contributes a sub-vector of 13 statistics over the
x/y/z acceleration series and their per-sample magnitude, plus the three
pairwise Pearson correlations (55 entries per position). A temporal block
derived from clip times follows: consecutive clip-to-clip deltas, deltas
from the climb start (position 2) to later positions, the climb duration,
and summary statistics of the consecutive deltas.

Conventions are fixed here once: population variance (windows are the
complete set of transmitted samples, which also makes rms^2 = var + mean^2
exact), Fisher excess kurtosis and Fisher-Pearson skew in population form
with 0 for constant series, linearly interpolated percentiles, and peaks
as strict local maxima with a prominence floor of twice the quantizer
resolution to ignore one-count chatter.

The first and the last quickdraws are excluded from the assembled vector:
the bottom sensor mostly measures the belayer, the top one the lowering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import MissingClipError, ValidationError
from .ingest import ClimbRecord, LineConfig
from .sensor import SensorConfig, counts_to_g

STAT_NAMES = (
    "mean",
    "min",
    "max",
    "variance",
    "std",
    "rms",
    "p5",
    "p25",
    "p75",
    "p95",
    "kurtosis",
    "skew",
    "n_peaks",
)

AXIS_SOURCES = ("x", "y", "z", "g")

DEFAULT_PEAK_PROMINENCE_G = 2 * SensorConfig().resolution_g


def magnitude(x: float, y: float, z: float) -> float:
    """Euclidean norm of one sample's axis accelerations."""
    return float(np.sqrt(x * x + y * y + z * z))


def count_peaks(series: Sequence[float], min_prominence: float = 0.0) -> int:
    """Strict local maxima (s[k-1] < s[k] > s[k+1]) with enough prominence.

    Prominence of a peak is its height above the higher of the two lowest
    points separating it from higher terrain (or the series edge).
    """
    s = np.asarray(series, dtype=float)
    n = s.size
    count = 0
    for k in range(1, n - 1):
        if not (s[k - 1] < s[k] > s[k + 1]):
            continue
        left_min = s[k]
        j = k - 1
        while j >= 0 and s[j] < s[k]:
            left_min = min(left_min, s[j])
            j -= 1
        right_min = s[k]
        j = k + 1
        while j < n and s[j] < s[k]:
            right_min = min(right_min, s[j])
            j += 1
        if s[k] - max(left_min, right_min) >= min_prominence:
            count += 1
    return count


def stat_features(
    series: Sequence[float], peak_prominence: float = DEFAULT_PEAK_PROMINENCE_G
) -> dict[str, float]:
    """The 13 named statistics of one series, in STAT_NAMES order."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValidationError("cannot compute statistics of an empty series")
    mean = float(x.mean())
    constant = bool(x.max() == x.min())
    var = 0.0 if constant else float(x.var())  # population; exact 0 when degenerate
    std = float(np.sqrt(var))
    rms = float(np.sqrt(np.mean(x * x)))
    p5, p25, p75, p95 = (float(v) for v in np.percentile(x, [5, 25, 75, 95]))
    if var == 0.0:
        skew = 0.0
        kurt = 0.0
    else:
        z = (x - mean) / std  # standardize first so tiny variances cannot underflow
        skew = float(np.mean(z**3))
        kurt = float(np.mean(z**4)) - 3.0
    return {
        "mean": mean,
        "min": float(x.min()),
        "max": float(x.max()),
        "variance": var,
        "std": std,
        "rms": rms,
        "p5": p5,
        "p25": p25,
        "p75": p75,
        "p95": p95,
        "kurtosis": kurt,
        "skew": skew,
        "n_peaks": float(count_peaks(x, peak_prominence)),
    }


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0.0:
        return 0.0  # zero-variance convention
    return float((da * db).sum() / denom)


def cross_correlations(
    x: Sequence[float], y: Sequence[float], z: Sequence[float]
) -> tuple[float, float, float]:
    """Pearson correlations (r_xy, r_xz, r_yz); 0 when a series is constant."""
    ax, ay, az = (np.asarray(v, dtype=float) for v in (x, y, z))
    if not (ax.size == ay.size == az.size):
        raise ValidationError("correlation series must have equal lengths")
    if ax.size < 2:
        raise ValidationError("correlations need at least 2 samples")
    return (_pearson(ax, ay), _pearson(ax, az), _pearson(ay, az))


@dataclass(frozen=True)
class AxisSets:
    """The four per-window series (x, y, z accelerations and magnitudes), in g."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    g: np.ndarray

    @property
    def n(self) -> int:
        return int(self.x.size)


def axis_sets(window, cfg: SensorConfig) -> AxisSets:
    """Convert a window of transmitted events to acceleration series in g."""
    if not window:
        raise ValidationError("empty sample window")
    x = np.array([counts_to_g(e.x_counts, cfg) for e in window])
    y = np.array([counts_to_g(e.y_counts, cfg) for e in window])
    z = np.array([counts_to_g(e.z_counts, cfg) for e in window])
    g = np.sqrt(x * x + y * y + z * z)
    return AxisSets(x=x, y=y, z=z, g=g)


@dataclass(frozen=True)
class TemporalSet:
    """Clip-time deltas of one climb.

    ``short`` pairs positions (i, i+1) for i = 2..ie-2; ``long`` runs from
    position 2 to j for j = 4..ie-2; ``duration`` is clip(ie-1) - clip(2).
    """

    short: tuple[float, ...]
    short_pairs: tuple[tuple[int, int], ...]
    long: tuple[float, ...]
    long_targets: tuple[int, ...]
    duration: float
    short_stats: dict[str, float]


def temporal_features(
    clips: Union[ClimbRecord, Mapping[int, float]], ie: int
) -> TemporalSet:
    """Temporal deltas from clip times; needs positions 2..ie-1 clipped."""
    if isinstance(clips, ClimbRecord):
        clip_times = clips.clip_times
        climb_id = clips.climb_id
    else:
        clip_times = clips
        climb_id = -1
    for position in range(2, ie):
        if position not in clip_times:
            raise MissingClipError(climb_id, position)

    short_pairs = tuple((i, i + 1) for i in range(2, ie - 1))
    short = tuple(clip_times[i + 1] - clip_times[i] for i, _ in short_pairs)
    long_targets = tuple(range(4, ie - 1))
    long = tuple(clip_times[j] - clip_times[2] for j in long_targets)
    duration = clip_times[ie - 1] - clip_times[2]

    s = np.asarray(short)
    stats = {
        "min": float(s.min()),
        "max": float(s.max()),
        "mean": float(s.mean()),
        "std": float(s.std()),  # population, as everywhere
    }
    return TemporalSet(
        short=short,
        short_pairs=short_pairs,
        long=long,
        long_targets=long_targets,
        duration=duration,
        short_stats=stats,
    )


@dataclass(frozen=True)
class FeatureVector:
    climb_id: int
    names: tuple[str, ...]
    values: np.ndarray
    label: Optional[str] = None


def feature_names(ie: int) -> tuple[str, ...]:
    """Deterministic column naming; carries (position, source, statistic)."""
    names: list[str] = []
    for position in range(2, ie):
        for source in AXIS_SOURCES:
            for stat in STAT_NAMES:
                names.append(f"p{position}.{source}.{stat}")
        names.append(f"p{position}.cross.r_xy")
        names.append(f"p{position}.cross.r_xz")
        names.append(f"p{position}.cross.r_yz")
    for i in range(2, ie - 1):
        names.append(f"t.dts.p{i}_p{i + 1}")
    for j in range(4, ie - 1):
        names.append(f"t.dtl.p2_p{j}")
    names.append("t.dtc")
    for stat in ("min", "max", "mean", "std"):
        names.append(f"t.dts.{stat}")
    return tuple(names)


def assemble(
    climb: ClimbRecord,
    line: LineConfig,
    cfg: Optional[SensorConfig] = None,
) -> FeatureVector:
    """The full feature vector of one climb (positions 2..ie-1, then time)."""
    cfg = cfg or SensorConfig()
    prominence = 2 * cfg.resolution_g
    values: list[float] = []
    for position in range(2, line.ie):
        window = climb.windows.get(position)
        if not window:
            raise MissingClipError(climb.climb_id, position)
        sets = axis_sets(window, cfg)
        for series in (sets.x, sets.y, sets.z, sets.g):
            stats = stat_features(series, peak_prominence=prominence)
            values.extend(stats[name] for name in STAT_NAMES)
        values.extend(cross_correlations(sets.x, sets.y, sets.z))

    temporal = temporal_features(climb, line.ie)
    values.extend(temporal.short)
    values.extend(temporal.long)
    values.append(temporal.duration)
    values.extend(temporal.short_stats[s] for s in ("min", "max", "mean", "std"))

    names = feature_names(line.ie)
    out = np.asarray(values, dtype=float)
    if out.size != len(names):
        raise ValidationError(
            f"assembled {out.size} values for {len(names)} feature names"
        )
    return FeatureVector(
        climb_id=climb.climb_id,
        names=names,
        values=out,
        label=climb.ground_truth_route,
    )


@dataclass
class FeatureMatrix:
    """Rows = climbs, columns = named features, optional route labels."""

    names: tuple[str, ...]
    values: np.ndarray
    climb_ids: tuple[int, ...]
    labels: Optional[tuple[str, ...]] = None

    @property
    def n_climbs(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(
            names=tuple(names),
            values=self.values[:, idx],
            climb_ids=self.climb_ids,
            labels=self.labels,
        )


def build_feature_matrix(
    records: Sequence[ClimbRecord],
    line: LineConfig,
    cfg: Optional[SensorConfig] = None,
) -> FeatureMatrix:
    if not records:
        raise ValidationError("no climbs to featurize")
    vectors = [assemble(record, line, cfg) for record in records]
    names = vectors[0].names
    labels = tuple(v.label for v in vectors)
    return FeatureMatrix(
        names=names,
        values=np.vstack([v.values for v in vectors]),
        climb_ids=tuple(v.climb_id for v in vectors),
        labels=labels if all(l is not None for l in labels) else None,
    )


def write_feature_matrix(target, matrix: FeatureMatrix) -> None:
    """Delimited export: header of feature names, one row per climb.

    A ``route`` sidecar column carries the ground-truth label when known.
    Floats are written with shortest exact repr so a read-back round-trips.
    """
    own = isinstance(target, str)
    fh = open(target, "w", encoding="utf-8") if own else target
    try:
        head = ["climb_id"]
        if matrix.labels is not None:
            head.append("route")
        head.extend(matrix.names)
        fh.write("\t".join(head) + "\n")
        for row_idx in range(matrix.n_climbs):
            row = [str(matrix.climb_ids[row_idx])]
            if matrix.labels is not None:
                row.append(matrix.labels[row_idx])
            row.extend(repr(float(v)) for v in matrix.values[row_idx])
            fh.write("\t".join(row) + "\n")
    finally:
        if own:
            fh.close()


def read_feature_matrix(source) -> FeatureMatrix:
    own = isinstance(source, str)
    fh = open(source, "r", encoding="utf-8") if own else source
    try:
        header = fh.readline().rstrip("\n").split("\t")
        if not header or header[0] != "climb_id":
            raise ValidationError("feature matrix must start with a climb_id column")
        has_labels = len(header) > 1 and header[1] == "route"
        first_feature = 2 if has_labels else 1
        names = tuple(header[first_feature:])
        ids, labels, rows = [], [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise ValidationError(
                    f"line {lineno}: {len(parts)} fields, expected {len(header)}"
                )
            ids.append(int(parts[0]))
            if has_labels:
                labels.append(parts[1])
            rows.append([float(v) for v in parts[first_feature:]])
        if not rows:
            raise ValidationError("feature matrix has no rows")
        return FeatureMatrix(
            names=names,
            values=np.asarray(rows, dtype=float),
            climb_ids=tuple(ids),
            labels=tuple(labels) if has_labels else None,
        )
    finally:
        if own:
            fh.close()
