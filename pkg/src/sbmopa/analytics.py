"""Clustering of weight frontiers, validity indices, ANOVA and sensitivity flags."""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from sklearn.metrics import calinski_harabasz_score, davies_bouldin_score, silhouette_score

log = logging.getLogger(__name__)


class AnalyticsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# one-way ANOVA


@dataclass(frozen=True)
class AnovaResult:
    F: float
    p: float
    capped: bool = False  # zero within-group variance: F is +inf


def anova_f(values: Sequence[float], labels: Sequence[int]) -> AnovaResult:
    """One-way ANOVA F with (k-1, n-k) degrees of freedom."""
    x = np.asarray(values, dtype=float)
    lab = np.asarray(labels)
    if x.shape != lab.shape:
        raise AnalyticsError("values and labels differ in length")
    groups = [x[lab == g] for g in np.unique(lab)]
    k, n = len(groups), len(x)
    if k < 2:
        raise AnalyticsError("ANOVA needs at least two non-empty groups")
    if any(len(g) == 0 for g in groups):  # pragma: no cover - unique() never yields empty groups
        raise AnalyticsError("empty group")
    grand = x.mean()
    ssb = math.fsum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = math.fsum(float(((g - g.mean()) ** 2).sum()) for g in groups)
    if n - k <= 0:
        raise AnalyticsError("ANOVA needs more observations than groups")
    scale = max(1.0, float(np.abs(x).max()) ** 2) * n * 1e-24
    if ssb <= scale:
        return AnovaResult(0.0, 1.0)
    if ssw <= scale:
        return AnovaResult(math.inf, 0.0, capped=True)
    F = (ssb / (k - 1)) / (ssw / (n - k))
    return AnovaResult(F, float(stats.f.sf(F, k - 1, n - k)))


# ---------------------------------------------------------------------------
# K-means


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def farthest_first(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Seeded first centre, then repeatedly the point farthest from the chosen centres."""
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(len(X)))]
    d = _sq_dists(X, X[chosen]).min(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


@dataclass(frozen=True)
class KMeansFit:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    reseeds: int


def lloyd(X: np.ndarray, k: int, seed: int, max_iter: int = 300) -> KMeansFit:
    n = len(X)
    if not 1 <= k <= n:
        raise AnalyticsError(f"k must be in 1..{n}, got {k}")
    C = farthest_first(X, k, seed)
    labels = np.full(n, -1)
    reseeds = 0
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(X, C), axis=1)
        for c in range(k):
            members = new == c
            if members.any():
                C[c] = X[members].mean(axis=0)
        # an empty cluster takes the point farthest from its own centroid
        for c in range(k):
            if not (new == c).any():
                own = ((X - C[new]) ** 2).sum(axis=1)
                if own.max() <= 0:
                    break
                far = int(np.argmax(own))
                new[far] = c
                C[c] = X[far]
                reseeds += 1
                for cc in range(k):
                    if (new == cc).any():
                        C[cc] = X[new == cc].mean(axis=0)
        if np.array_equal(new, labels):
            break
        labels = new
    inertia = float(((X - C[labels]) ** 2).sum())
    # relabel clusters by first appearance so labels do not depend on the seed path
    order = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    for c in range(k):
        order.setdefault(c, len(order))
    remap = np.array([order[c] for c in range(k)])
    C2 = np.zeros_like(C)
    C2[remap] = C
    return KMeansFit(remap[labels], C2, inertia, it, reseeds)


@dataclass
class FeatureSummary:
    feature: str
    means: list[float]
    stds: list[float]
    anova: AnovaResult | None


@dataclass
class ClusterReport:
    k: int
    ids: list[str]
    assignments: dict[str, int]
    centroids: np.ndarray
    sizes: list[int]
    inertia: float
    features: list[FeatureSummary]
    silhouette: float | None
    davies_bouldin: float | None
    calinski_harabasz: float | None
    benchmarks: dict[int, str] = field(default_factory=dict)
    mean_efficiency: dict[int, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def partition(self) -> set[frozenset[str]]:
        groups: dict[int, set[str]] = {}
        for dmu, c in self.assignments.items():
            groups.setdefault(c, set()).add(dmu)
        return {frozenset(g) for g in groups.values()}


def kmeans(
    matrix: np.ndarray,
    k: int,
    seed: int = 0,
    ids: Sequence[str] | None = None,
    features: Sequence[str] | None = None,
    scores: Mapping[str, float] | None = None,
    standardize: bool = False,
) -> ClusterReport:
    """Cluster rows of ``matrix`` (DMUs x weights) and summarize the partition.

    ``scores`` (downstream efficiency per DMU) enables benchmark selection:
    the best-scoring DMU of each cluster, ties broken by smallest id.
    """
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise AnalyticsError("weight matrix must be a non-empty 2-D array")
    n, d = X.shape
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    features = list(features) if features is not None else [f"f{j}" for j in range(d)]
    if len(ids) != n or len(features) != d:
        raise AnalyticsError("ids/features do not match the matrix shape")
    Xf = X
    if standardize:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        Xf = (X - X.mean(axis=0)) / sd

    fit = lloyd(Xf, k, seed)
    labels = fit.labels
    warnings = []
    used = sorted(set(labels.tolist()))
    distinct_rows = len(np.unique(Xf, axis=0))
    sil = dbi = ch = None
    if k == 1:
        warnings.append("k = 1: validity indices not applicable")
    elif distinct_rows < 2 or len(used) < 2:
        warnings.append("degenerate partition (zero dispersion): validity indices not applicable")
    elif len(used) > n - 1:
        warnings.append("every DMU is its own cluster: validity indices not applicable")
    else:
        sil = float(silhouette_score(Xf, labels))
        dbi = float(davies_bouldin_score(Xf, labels))
        ch = float(calinski_harabasz_score(Xf, labels))
    if len(used) < k:
        warnings.append(f"only {len(used)} of {k} clusters are non-empty")
    for w in warnings:
        log.warning(w)

    feats = []
    for j, name in enumerate(features):
        col = X[:, j]
        means = [float(col[labels == c].mean()) if (labels == c).any() else math.nan for c in range(k)]
        sds = [float(col[labels == c].std()) if (labels == c).any() else math.nan for c in range(k)]
        an = anova_f(col, labels) if len(used) >= 2 and n > len(used) else None
        feats.append(FeatureSummary(name, means, sds, an))

    benchmarks, mean_eff = {}, {}
    if scores is not None:
        for c in used:
            members = [ids[i] for i in range(n) if labels[i] == c]
            best = min(members, key=lambda m: (-scores[m], m))
            benchmarks[c] = best
            mean_eff[c] = statistics.fmean(scores[m] for m in members)

    centroids = np.array([X[labels == c].mean(axis=0) if (labels == c).any() else np.full(d, math.nan) for c in range(k)])
    return ClusterReport(
        k=k,
        ids=ids,
        assignments={ids[i]: int(labels[i]) for i in range(n)},
        centroids=centroids,
        sizes=[int((labels == c).sum()) for c in range(k)],
        inertia=fit.inertia,
        features=feats,
        silhouette=sil,
        davies_bouldin=dbi,
        calinski_harabasz=ch,
        benchmarks=benchmarks,
        mean_efficiency=mean_eff,
        warnings=warnings,
    )


@dataclass(frozen=True)
class ElbowResult:
    ks: list[int]
    inertias: list[float]
    suggested: int
    low_confidence: bool


def elbow(matrix: np.ndarray, k_range: Sequence[int], seed: int = 0, min_explained: float = 0.5) -> ElbowResult:
    """Inertia curve over ``k_range`` and the max-curvature suggestion.

    Curvature is the discrete second difference ``I[k-1] - 2 I[k] + I[k+1]``
    over interior points. If the suggested k removes less than
    ``min_explained`` of the first inertia the data show no cluster
    structure: the first k of the range is suggested instead. Either way the
    suggestion is advisory; it is flagged low-confidence in that case and
    whenever its curvature is under twice the runner-up's.
    """
    ks = sorted(set(int(k) for k in k_range))
    X = np.asarray(matrix, dtype=float)
    if not ks:
        raise AnalyticsError("empty k range")
    if ks[0] < 1 or ks[-1] > len(X):
        raise AnalyticsError(f"k range must lie within 1..{len(X)}")
    if ks != list(range(ks[0], ks[-1] + 1)):
        raise AnalyticsError("k range must be contiguous")
    inertias = [lloyd(X, k, seed).inertia for k in ks]
    if len(ks) == 1:
        return ElbowResult(ks, inertias, ks[0], False)
    if len(ks) == 2 or inertias[0] <= 0:
        return ElbowResult(ks, inertias, ks[0], True)
    d2 = [inertias[i - 1] - 2 * inertias[i] + inertias[i + 1] for i in range(1, len(ks) - 1)]
    best = int(np.argmax(d2))
    suggested = ks[best + 1]
    if 1.0 - inertias[best + 1] / inertias[0] < min_explained:
        return ElbowResult(ks, inertias, ks[0], True)
    ordered = sorted(d2, reverse=True)
    low = ordered[0] <= 1e-12 * inertias[0] or (len(d2) > 1 and ordered[0] < 2 * max(ordered[1], 0.0))
    return ElbowResult(ks, inertias, suggested, bool(low))


# ---------------------------------------------------------------------------
# sensitivity


@dataclass(frozen=True)
class SensitivitySummary:
    mean: float
    std: float
    threshold: float
    flagged: list[str]


def sensitivity_stats(etas: Mapping[str, float]) -> SensitivitySummary:
    """Mean, population std, and DMUs strictly above mean + 2 std."""
    if not etas:
        raise AnalyticsError("no sensitivities given")
    finite = {d: e for d, e in etas.items() if math.isfinite(e)}
    vals = list(finite.values())
    mean = statistics.fmean(vals) if vals else math.nan
    std = statistics.pstdev(vals) if vals else math.nan
    threshold = mean + 2 * std
    flagged = sorted(d for d, e in etas.items() if e > threshold or math.isinf(e))
    return SensitivitySummary(mean, std, threshold, flagged)
