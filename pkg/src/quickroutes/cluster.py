"""Clustering machinery: Lloyd's K-Means with repeated restarts, rand-index
statistics, the feature-count sweep, PCA reduction, a full-covariance
Gaussian mixture fitted by EM, and silhouette scoring.

Everything is Euclidean and deterministic: each stochastic operation is a
pure function of its inputs and an integer seed, restarts use consecutive
seeds, and results are merged in seed order so running restarts in
parallel could never change the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericError, ValidationError
from .preprocess import FeatureScore, select_k_best

DEFAULT_RESTARTS = 100
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6
DEFAULT_GMM_TOL = 1e-8
DEFAULT_GMM_REG = 1e-6


# ---------------------------------------------------------------------------
# K-Means
# ---------------------------------------------------------------------------

@dataclass
class KMeansResult:
    assignments: np.ndarray  # cluster id per point
    centers: np.ndarray      # (k, d)
    inertia: float           # sum of squared distances to assigned centers
    iterations: int
    seed: int
    inertia_history: list[float] = field(default_factory=list)


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans(
    points,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> KMeansResult:
    """Lloyd's algorithm from k distinct data points picked by the seed.

    Assignment ties break toward the lowest cluster index. If a cluster
    empties, the point currently farthest from its center becomes that
    cluster's new singleton center, keeping k fixed. Stops when no center
    moves more than ``tol`` or after ``max_iter`` rounds.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside 1..n={n}")
    rng = np.random.default_rng(seed)
    centers = X[rng.choice(n, size=k, replace=False)].astype(float).copy()

    history: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _squared_distances(X, centers)
        assign = np.argmin(d2, axis=1)

        # keep k clusters populated: hand the farthest point to each empty one
        for _ in range(k):
            sizes = np.bincount(assign, minlength=k)
            empties = np.flatnonzero(sizes == 0)
            if empties.size == 0:
                break
            j = int(empties[0])
            point_d2 = d2[np.arange(n), assign]
            farthest = int(np.argmax(point_d2))
            centers[j] = X[farthest]
            d2 = _squared_distances(X, centers)
            assign = np.argmin(d2, axis=1)

        history.append(float(d2[np.arange(n), assign].sum()))
        new_centers = centers.copy()
        for j in range(k):
            members = X[assign == j]
            if members.size:
                new_centers[j] = members.mean(axis=0)
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break

    d2 = _squared_distances(X, centers)
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    return KMeansResult(
        assignments=assign,
        centers=centers,
        inertia=inertia,
        iterations=iterations,
        seed=seed,
        inertia_history=history,
    )


def best_kmeans(
    points,
    k: int,
    restarts: int = DEFAULT_RESTARTS,
    seed0: int = 0,
    **kwargs,
) -> KMeansResult:
    """Lowest-inertia run over consecutive seeds; ties keep the lowest seed."""
    best: Optional[KMeansResult] = None
    for seed in range(seed0, seed0 + restarts):
        result = kmeans(points, k, seed=seed, **kwargs)
        if best is None or result.inertia < best.inertia:
            best = result
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Rand index
# ---------------------------------------------------------------------------

def _contingency(a: Sequence, b: Sequence) -> dict:
    table: dict = {}
    for la, lb in zip(a, b):
        table[(la, lb)] = table.get((la, lb), 0) + 1
    return table


def rand_index(a: Sequence, b: Sequence, adjusted: bool = True) -> float:
    """Pair-counting similarity of two labelings, ignoring permutations.

    Unadjusted: fraction of point pairs the two labelings agree on.
    Adjusted: chance-corrected via the standard contingency-table formula,
    1 for identical partitions, ~0 in expectation for random ones.
    """
    if len(a) != len(b):
        raise ValidationError("labelings must have equal length")
    n = len(a)
    if n < 2:
        raise ValidationError("rand index needs at least 2 points")
    table = _contingency(a, b)
    sizes_a: dict = {}
    sizes_b: dict = {}
    for (la, lb), count in table.items():
        sizes_a[la] = sizes_a.get(la, 0) + count
        sizes_b[lb] = sizes_b.get(lb, 0) + count
    sum_ij = sum(math.comb(c, 2) for c in table.values())
    sum_a = sum(math.comb(c, 2) for c in sizes_a.values())
    sum_b = sum(math.comb(c, 2) for c in sizes_b.values())
    pairs = math.comb(n, 2)
    if not adjusted:
        agreements = pairs + 2 * sum_ij - sum_a - sum_b
        return agreements / pairs
    expected = sum_a * sum_b / pairs
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        return 1.0  # both partitions degenerate and identical in structure
    return (sum_ij - expected) / (maximum - expected)


@dataclass
class RandStats:
    """Min/mean/max of the rand index over repeated clustering restarts."""

    minimum: float
    mean: float
    maximum: float
    values: tuple[float, ...]
    adjusted: bool
    seed0: int


def repeated_kmeans(
    points,
    truth: Sequence,
    k: int,
    restarts: int = DEFAULT_RESTARTS,
    seed0: int = 0,
    adjusted: bool = True,
    **kwargs,
) -> RandStats:
    """Rand-index statistics of ``restarts`` independent K-Means runs.

    Seeds are seed0..seed0+restarts-1, so the whole sweep is reproducible
    from a single integer.
    """
    values = []
    for seed in range(seed0, seed0 + restarts):
        result = kmeans(points, k, seed=seed, **kwargs)
        values.append(rand_index(truth, result.assignments.tolist(), adjusted=adjusted))
    arr = np.asarray(values)
    return RandStats(
        minimum=float(arr.min()),
        mean=float(arr.mean()),
        maximum=float(arr.max()),
        values=tuple(values),
        adjusted=adjusted,
        seed0=seed0,
    )


# ---------------------------------------------------------------------------
# Feature-count sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepEntry:
    n_features: int
    columns: tuple[str, ...]
    stats: RandStats


@dataclass
class SweepCurve:
    entries: list[SweepEntry]
    chosen_k: int  # smallest feature count reaching the best minimum rand

    @property
    def chosen_entry(self) -> SweepEntry:
        for entry in self.entries:
            if entry.n_features == self.chosen_k:
                return entry
        raise ValidationError(f"sweep has no entry for k={self.chosen_k}")


def sweep_feature_count(
    values: np.ndarray,
    names: Sequence[str],
    truth: Sequence,
    scores: Sequence[FeatureScore],
    n_clusters: int = 3,
    restarts: int = DEFAULT_RESTARTS,
    seed0: int = 0,
    adjusted: bool = True,
    max_features: Optional[int] = None,
) -> SweepCurve:
    """Clustering quality as a function of how many top-scored columns stay.

    For each feature count k the top-k columns (by ANOVA F, ties by column
    order) feed ``repeated_kmeans``; the preferred operating point is the
    smallest k whose minimum rand index over restarts is maximal — the
    worst case is what must be good.
    """
    values = np.asarray(values, dtype=float)
    names = list(names)
    if len(scores) != len(names):
        raise ValidationError("scores must cover every column")
    by_name = {s.name: i for i, s in enumerate(scores)}
    if set(by_name) != set(names):
        raise ValidationError("score names do not match matrix columns")
    limit = len(names) if max_features is None else min(max_features, len(names))
    # one ranking serves every k: top-k is a prefix of it
    ranking = select_k_best(scores, len(names))
    col_idx = [names.index(n) for n in ranking]

    entries = []
    for k in range(1, limit + 1):
        subset = values[:, col_idx[:k]]
        stats = repeated_kmeans(
            subset, truth, n_clusters, restarts=restarts, seed0=seed0, adjusted=adjusted
        )
        entries.append(
            SweepEntry(n_features=k, columns=tuple(ranking[:k]), stats=stats)
        )
    best_min = max(entry.stats.minimum for entry in entries)
    chosen = next(e.n_features for e in entries if e.stats.minimum == best_min)
    return SweepCurve(entries=entries, chosen_k=chosen)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray           # (dims, d), orthonormal rows
    explained_variance: np.ndarray   # descending


def pca_fit(points, dims: int) -> PcaModel:
    """Top eigenvectors of the sample covariance of centered data."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = X.shape
    if not 1 <= dims <= min(n - 1, d):
        raise ValidationError(f"dims={dims} outside 1..min(n-1, d)={min(n - 1, d)}")
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False, ddof=1).reshape(d, d)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:dims]
    components = eigvecs[:, order].T.copy()
    # deterministic sign: largest-magnitude coefficient is positive
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=eigvals[order].copy(),
    )


def pca_project(model: PcaModel, points) -> np.ndarray:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    return (X - model.mean) @ model.components.T


# ---------------------------------------------------------------------------
# Gaussian mixture via EM
# ---------------------------------------------------------------------------

@dataclass
class GmmResult:
    weights: np.ndarray           # (k,), sums to 1
    means: np.ndarray             # (k, d)
    covariances: np.ndarray       # (k, d, d), symmetric positive-definite
    responsibilities: np.ndarray  # (n, k), rows sum to 1
    log_likelihood: float
    ll_history: list[float]
    iterations: int
    converged: bool


def _log_gaussians(X: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    n, d = X.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for j in range(k):
        try:
            chol = np.linalg.cholesky(covs[j])
        except np.linalg.LinAlgError as exc:
            raise NumericError(
                f"component {j}: covariance singular beyond regularization "
                f"(min diagonal {covs[j].diagonal().min():.3e})"
            ) from exc
        diff = (X - means[j]).T
        y = solve_triangular(chol, diff, lower=True)
        maha = np.einsum("dn,dn->n", y, y)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        out[:, j] = -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)
    return out


def gmm_em(
    points,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_GMM_TOL,
    reg: float = DEFAULT_GMM_REG,
) -> GmmResult:
    """Full-covariance Gaussian mixture fitted by EM.

    Initialized from a K-Means run with the same seed (means = centers,
    weights = cluster fractions, covariances = within-cluster scatter plus
    ``reg`` on the diagonal). The total log-likelihood is non-decreasing
    every iteration; EM stops when its gain drops below ``tol``.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = X.shape
    if n <= k:
        raise ValidationError(f"need more than k={k} points, got {n}")

    init = kmeans(X, k, seed=seed)
    weights = np.bincount(init.assignments, minlength=k).astype(float) / n
    means = init.centers.copy()
    covs = np.empty((k, d, d))
    for j in range(k):
        members = X[init.assignments == j]
        centered = members - members.mean(axis=0)
        covs[j] = centered.T @ centered / max(len(members), 1) + reg * np.eye(d)

    history: list[float] = []
    resp = np.full((n, k), 1.0 / k)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        log_prob = _log_gaussians(X, means, covs) + np.log(weights)[None, :]
        log_norm = _logsumexp_rows(log_prob)
        ll = float(log_norm.sum())
        resp = np.exp(log_prob - log_norm[:, None])

        history.append(ll)
        if len(history) >= 2 and ll - history[-2] < tol:
            converged = True
            break

        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 10 * np.finfo(float).eps)
        weights = nk / n
        means = (resp.T @ X) / nk[:, None]
        for j in range(k):
            diff = X - means[j]
            covs[j] = (resp[:, j][:, None] * diff).T @ diff / nk[j] + reg * np.eye(d)
            covs[j] = 0.5 * (covs[j] + covs[j].T)

    return GmmResult(
        weights=weights,
        means=means,
        covariances=covs,
        responsibilities=resp,
        log_likelihood=history[-1],
        ll_history=history,
        iterations=iterations,
        converged=converged,
    )


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


# ---------------------------------------------------------------------------
# Silhouette
# ---------------------------------------------------------------------------

@dataclass
class SilhouetteResult:
    scores: np.ndarray                     # per point, in [-1, 1]
    profiles: dict[int, np.ndarray]        # per cluster, sorted descending
    mean: float


def silhouette(points, assignments) -> SilhouetteResult:
    """Per-point silhouette scores plus per-cluster sorted profiles.

    s = (b - a) / max(a, b) with a the mean distance to the point's own
    cluster (excluding itself) and b the smallest mean distance to another
    cluster. Points in singleton clusters score 0 by convention.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(assignments)
    if labels.shape[0] != X.shape[0]:
        raise ValidationError("assignments must match points")
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise ValidationError("silhouette needs at least 2 clusters")

    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt(np.einsum("nmd,nmd->nm", diff, diff))
    n = X.shape[0]
    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        same = (labels == own)
        own_size = int(same.sum())
        if own_size <= 1:
            scores[i] = 0.0
            continue
        a = dist[i, same].sum() / (own_size - 1)
        b = min(
            dist[i, labels == other].mean() for other in clusters if other != own
        )
        top = max(a, b)
        scores[i] = 0.0 if top == 0.0 else (b - a) / top

    profiles = {
        int(c): np.sort(scores[labels == c])[::-1].copy() for c in clusters
    }
    return SilhouetteResult(scores=scores, profiles=profiles, mean=float(scores.mean()))


# ---------------------------------------------------------------------------
# Label matching
# ---------------------------------------------------------------------------

def count_misassigned(truth: Sequence, predicted: Sequence) -> int:
    """Disagreements under the best one-to-one cluster-to-route matching."""
    import itertools

    if len(truth) != len(predicted):
        raise ValidationError("labelings must have equal length")
    truth_ids = {label: i for i, label in enumerate(dict.fromkeys(truth))}
    pred_ids = {label: i for i, label in enumerate(dict.fromkeys(predicted))}
    t = [truth_ids[l] for l in truth]
    p = [pred_ids[l] for l in predicted]
    n_t, n_p = len(truth_ids), len(pred_ids)
    size = max(n_t, n_p)
    agree = np.zeros((size, size), dtype=int)
    for ti, pi in zip(t, p):
        agree[pi, ti] += 1
    best = max(
        sum(agree[j, perm[j]] for j in range(size))
        for perm in itertools.permutations(range(size))
    )
    return len(truth) - int(best)
