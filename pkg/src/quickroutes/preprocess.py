"""Feature scaling and supervised univariate selection.

Scaling maps each column through its empirical CDF onto a standard
normal, which spreads frequent values and caps the leverage of outliers;
without it the long-segment time deltas would dominate every Euclidean
distance. Selection scores each scaled column with a one-way ANOVA
F-ratio against the ground-truth route labels and keeps the top k.
Selection is supervised while the downstream clustering is not; pipelines
record that labels were consumed here so reports can disclose it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO, Union

import numpy as np
from scipy.special import ndtri

from .errors import ValidationError
from .features import FeatureMatrix

SCALER_FORMAT = "quickroutes-scaler v1"


@dataclass
class QuantileScaler:
    """Per-column empirical distributions frozen at fit time.

    Transform sends a value through the mid-rank empirical CDF of the fit
    data (linear interpolation between fit points, clipped away from 0 and
    1 by half a rank) and then through the standard normal quantile
    function. Monotone non-decreasing per column; constant columns are
    flagged and always map to 0.
    """

    names: tuple[str, ...]
    references: list[np.ndarray]  # sorted ascending, one per column
    n_fit: int

    @property
    def lo(self) -> float:
        return 1.0 / (2.0 * self.n_fit)

    @property
    def hi(self) -> float:
        return 1.0 - 1.0 / (2.0 * self.n_fit)

    def is_constant(self, col: int) -> bool:
        ref = self.references[col]
        return bool(ref[0] == ref[-1])

    def _transform_column(self, col: int, v: np.ndarray) -> np.ndarray:
        ref = self.references[col]
        if self.is_constant(col):
            return np.zeros_like(v, dtype=float)
        # mid-rank ECDF knots at the distinct fit values
        distinct, first, counts = np.unique(ref, return_index=True, return_counts=True)
        q = (first + (first + counts)) / (2.0 * self.n_fit)
        ecdf = np.interp(v, distinct, q)
        ecdf = np.clip(ecdf, self.lo, self.hi)
        ecdf = np.where(v < distinct[0], self.lo, ecdf)
        ecdf = np.where(v > distinct[-1], self.hi, ecdf)
        return ndtri(ecdf)

    def transform(self, matrix: FeatureMatrix) -> FeatureMatrix:
        if matrix.names != self.names:
            raise ValidationError("matrix columns do not match the fitted scaler")
        out = np.empty_like(matrix.values, dtype=float)
        for col in range(len(self.names)):
            out[:, col] = self._transform_column(col, matrix.values[:, col])
        return FeatureMatrix(
            names=matrix.names,
            values=out,
            climb_ids=matrix.climb_ids,
            labels=matrix.labels,
        )

    def transform_values(self, values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] != len(self.names):
            raise ValidationError("value width does not match the fitted scaler")
        out = np.empty_like(values)
        for col in range(values.shape[1]):
            out[:, col] = self._transform_column(col, values[:, col])
        return out

    def save(self, target: Union[TextIO, str]) -> None:
        own = isinstance(target, str)
        fh = open(target, "w", encoding="utf-8") if own else target
        try:
            fh.write(f"# {SCALER_FORMAT}\n")
            fh.write(f"n_fit\t{self.n_fit}\n")
            for name, ref in zip(self.names, self.references):
                fh.write(name + "\t" + "\t".join(repr(float(v)) for v in ref) + "\n")
        finally:
            if own:
                fh.close()

    @classmethod
    def load(cls, source: Union[TextIO, str]) -> "QuantileScaler":
        own = isinstance(source, str)
        fh = open(source, "r", encoding="utf-8") if own else source
        try:
            head = fh.readline().strip()
            if head != f"# {SCALER_FORMAT}":
                raise ValidationError(f"not a scaler file (header {head!r})")
            tag, n_fit = fh.readline().split("\t")
            if tag != "n_fit":
                raise ValidationError("scaler file missing n_fit")
            names, refs = [], []
            for line in fh:
                parts = line.rstrip("\n").split("\t")
                names.append(parts[0])
                refs.append(np.array([float(v) for v in parts[1:]]))
            return cls(names=tuple(names), references=refs, n_fit=int(n_fit))
        finally:
            if own:
                fh.close()


def fit_quantile(matrix: FeatureMatrix) -> QuantileScaler:
    """Freeze each column's sorted values as the scaling reference."""
    if matrix.n_climbs < 2:
        raise ValidationError("quantile scaling needs at least 2 rows")
    references = [np.sort(matrix.values[:, col]) for col in range(matrix.n_features)]
    return QuantileScaler(
        names=matrix.names, references=references, n_fit=matrix.n_climbs
    )


@dataclass(frozen=True)
class FeatureScore:
    name: str
    f: float  # >= 0, math.inf when within-group variance vanishes


def anova_f(column: Sequence[float], labels: Sequence) -> float:
    """One-way ANOVA F ratio of between- to within-group mean squares.

    Zero within-group variance yields the +inf sentinel when group means
    differ and 0 when they do not.
    """
    x = np.asarray(column, dtype=float)
    y = list(labels)
    if x.size != len(y):
        raise ValidationError("column and labels must have equal length")
    groups: dict = {}
    for value, label in zip(x, y):
        groups.setdefault(label, []).append(value)
    k = len(groups)
    n = x.size
    if k < 2:
        raise ValidationError("ANOVA needs at least 2 groups")
    if n <= k:
        raise ValidationError("ANOVA needs more samples than groups")
    grand = x.mean()
    ssb = 0.0
    ssw = 0.0
    for values in groups.values():
        g = np.asarray(values)
        ssb += g.size * (g.mean() - grand) ** 2
        ssw += float(((g - g.mean()) ** 2).sum())
    if ssw == 0.0:
        return math.inf if ssb > 0.0 else 0.0
    return float((ssb / (k - 1)) / (ssw / (n - k)))


def score_features(matrix: FeatureMatrix, labels: Optional[Sequence] = None) -> list[FeatureScore]:
    """ANOVA F score per column; constant columns score 0."""
    if labels is None:
        labels = matrix.labels
    if labels is None:
        raise ValidationError("feature scoring needs ground-truth labels")
    scores = []
    for col, name in enumerate(matrix.names):
        column = matrix.values[:, col]
        if column.min() == column.max():
            scores.append(FeatureScore(name, 0.0))
        else:
            scores.append(FeatureScore(name, anova_f(column, labels)))
    return scores


def select_k_best(scores: Sequence[FeatureScore], k: int) -> list[str]:
    """Names of the k highest-scoring columns, best first.

    Ties keep the original column order; +inf sorts above everything.
    """
    if not 1 <= k <= len(scores):
        raise ValidationError(f"k={k} outside 1..{len(scores)}")
    ranked = sorted(enumerate(scores), key=lambda it: (-it[1].f, it[0]))
    return [score.name for _, score in ranked[:k]]
