"""Accessibility and transferability scores, taxonomy, and nestedness.

Accessibility and transferability are the fitness and inverse complexity of
the fitness-complexity fixed point computed on the transition matrix with
self-loops removed: rows (destinations) carry fitness, columns (origins)
carry complexity.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .flowmatrix import SELF_LOOPS_EXCLUDED, TransitionMatrix


@dataclass
class AccessTransferScores:
    """Per-occupation scores aligned with ``occupations``.

    Occupations without inflow have NaN accessibility and occupations
    without outflow have NaN complexity/transferability; they are listed in
    ``no_inflow`` and ``no_outflow``.
    """

    occupations: tuple[str, ...]
    accessibility: np.ndarray
    complexity: np.ndarray
    iterations: int
    converged: bool
    rank_stable_at: int
    no_inflow: tuple[str, ...] = ()
    no_outflow: tuple[str, ...] = ()
    fitness_history: np.ndarray | None = field(default=None, repr=False)
    complexity_history: np.ndarray | None = field(default=None, repr=False)

    @property
    def transferability(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.complexity

    def as_dict(self, name: str) -> dict[str, float]:
        values = {"accessibility": self.accessibility,
                  "complexity": self.complexity,
                  "transferability": self.transferability}[name]
        return dict(zip(self.occupations, values.tolist()))


def fitness_complexity(Pt: TransitionMatrix, n_iter: int = 200,
                       keep_history: bool = False) -> AccessTransferScores:
    """Iterate the coupled fitness/complexity maps ``n_iter`` times.

    Starting from all-ones, each iteration computes::

        F~_i = sum_j P_ij Q_j          Q~_j = 1 / sum_i (P_ij / F_i)
        F = F~ / sum(F~)               Q = Q~ / sum(Q~)

    using the previous iteration's ``F`` and ``Q`` on both sides. The run
    counts as converged when the rank orders of both vectors stop changing
    before the last iteration.
    """
    if Pt.self_loops != SELF_LOOPS_EXCLUDED:
        raise ValueError("fitness_complexity expects the matrix without self-loops")
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    P = np.asarray(Pt.probs, dtype=float)
    rows = P.sum(axis=1) > 0
    cols = P.sum(axis=0) > 0
    if not rows.any():
        raise ValueError("matrix has no off-diagonal flow")
    M = P[np.ix_(rows, cols)]
    F = np.ones(M.shape[0])
    Q = np.ones(M.shape[1])
    f_hist = np.empty((n_iter, M.shape[0])) if keep_history else None
    q_hist = np.empty((n_iter, M.shape[1])) if keep_history else None
    orders = []
    for n in range(n_iter):
        F_new = M @ Q
        Q_new = 1.0 / ((1.0 / F) @ M)
        F = F_new / F_new.sum()
        Q = Q_new / Q_new.sum()
        if keep_history:
            f_hist[n] = F
            q_hist[n] = Q
        orders.append((np.argsort(-F, kind="stable"), np.argsort(Q, kind="stable")))
    stable_at = n_iter
    final = orders[-1]
    for n in range(n_iter - 1, -1, -1):
        if np.array_equal(orders[n][0], final[0]) and np.array_equal(orders[n][1], final[1]):
            stable_at = n + 1
        else:
            break
    accessibility = np.full(Pt.n, np.nan)
    accessibility[rows] = F
    complexity = np.full(Pt.n, np.nan)
    complexity[cols] = Q
    codes = Pt.codes
    return AccessTransferScores(
        occupations=codes,
        accessibility=accessibility,
        complexity=complexity,
        iterations=n_iter,
        converged=stable_at < n_iter,
        rank_stable_at=stable_at,
        no_inflow=tuple(c for c, r in zip(codes, rows) if not r),
        no_outflow=tuple(c for c, k in zip(codes, cols) if not k),
        fitness_history=f_hist,
        complexity_history=q_hist,
    )


class UndefinedThresholdError(ValueError):
    """Mean-shift found fewer than two clusters."""


@dataclass(frozen=True)
class MeanShiftResult:
    modes: np.ndarray  # cluster modes in raw units, ascending
    labels: np.ndarray  # cluster index per input value (-1 for NaN input)
    sizes: np.ndarray
    threshold: float  # raw units
    log_threshold: float


def mean_shift_1d(values, bandwidth: float = 3.0, tol: float = 1e-7,
                  max_iter: int = 10_000) -> MeanShiftResult:
    """Flat-kernel mean-shift on log10 values and the boundary between the
    two largest clusters.

    ``bandwidth`` is the full width of the flat window, so points within
    ``bandwidth / 2`` (in decades) of the current estimate are averaged.
    Converged modes closer than ``bandwidth / 2`` are merged. The threshold
    is the log-space midpoint between the facing edges of the two largest
    clusters. NaN inputs are ignored.

    Raises :class:`UndefinedThresholdError` when only one cluster exists.
    """
    values = np.asarray(values, dtype=float)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    ok = ~np.isnan(values)
    if ok.sum() < 2:
        raise ValueError("need at least two values")
    if np.any(values[ok] <= 0):
        raise ValueError("mean-shift runs on log10 values; all values must be positive")
    x = np.log10(values[ok])
    radius = bandwidth / 2.0
    modes = x.copy()
    active = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        m = modes[active]
        window = np.abs(x[None, :] - m[:, None]) <= radius
        shifted = (window * x[None, :]).sum(axis=1) / window.sum(axis=1)
        moved = np.abs(shifted - m)
        modes[active] = shifted
        still = moved >= tol
        idx = np.flatnonzero(active)
        active[idx[~still]] = False
    order = np.argsort(modes, kind="stable")
    cluster = np.empty(len(x), dtype=np.int64)
    c = 0
    cluster[order[0]] = 0
    for a, b in itertools.pairwise(order):
        if modes[b] - modes[a] > radius:
            c += 1
        cluster[b] = c
    n_clusters = c + 1
    sizes = np.bincount(cluster, minlength=n_clusters)
    log_modes = np.array([modes[cluster == k].mean() for k in range(n_clusters)])
    labels = np.full(len(values), -1, dtype=np.int64)
    labels[ok] = cluster
    if n_clusters < 2:
        raise UndefinedThresholdError(
            f"single mean-shift cluster at {10 ** log_modes[0]:.6g}; supply a threshold")
    big = sorted(np.argsort(-sizes, kind="stable")[:2])
    lower_edge = x[cluster == big[0]].max()
    upper_edge = x[cluster == big[1]].min()
    log_t = 0.5 * (lower_edge + upper_edge)
    return MeanShiftResult(10 ** log_modes, labels, sizes, float(10 ** log_t), float(log_t))


class Taxon(str, enum.Enum):
    HUB = "Hub"
    CONDENSER = "Condenser"
    DIFFUSER = "Diffuser"
    CHANNEL = "Channel"


TAXA = (Taxon.HUB, Taxon.CONDENSER, Taxon.DIFFUSER, Taxon.CHANNEL)


def taxon_for(a: float, t: float, theta_a: float, theta_t: float) -> Taxon | None:
    if math.isnan(a) or math.isnan(t):
        return None
    high_a = a >= theta_a
    high_t = t >= theta_t
    if high_a:
        return Taxon.HUB if high_t else Taxon.CONDENSER
    return Taxon.DIFFUSER if high_t else Taxon.CHANNEL


@dataclass(frozen=True)
class TaxonomyLabels:
    labels: dict[str, Taxon | None]
    theta_A: float
    theta_T: float

    def counts(self) -> dict[Taxon, int]:
        out = {t: 0 for t in TAXA}
        for lab in self.labels.values():
            if lab is not None:
                out[lab] += 1
        return out


def classify_taxonomy(scores: AccessTransferScores, theta_A: float,
                      theta_T: float) -> TaxonomyLabels:
    """Label occupations Hub / Condenser / Diffuser / Channel.

    High means at or above the threshold. Occupations lacking either score
    are labelled ``None``.
    """
    if theta_A <= 0 or theta_T <= 0:
        raise ValueError("thresholds must be positive")
    T = scores.transferability
    labels = {
        code: taxon_for(float(a), float(t), theta_A, theta_T)
        for code, a, t in zip(scores.occupations, scores.accessibility, T)
    }
    return TaxonomyLabels(labels, float(theta_A), float(theta_T))


def taxonomy_thresholds(scores: AccessTransferScores, bandwidth: float = 3.0
                        ) -> tuple[MeanShiftResult, MeanShiftResult]:
    """Mean-shift thresholds for accessibility and transferability, each
    axis clustered on its own."""
    return (mean_shift_1d(scores.accessibility, bandwidth),
            mean_shift_1d(scores.transferability, bandwidth))


def binarize_for_nestedness(Pt, cutoff: float = 1e-2) -> np.ndarray:
    """Binary support ``P > cutoff`` (int8, same orientation as ``P``)."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    probs = Pt.probs if isinstance(Pt, TransitionMatrix) else np.asarray(Pt, dtype=float)
    return (probs > cutoff).astype(np.int8)


def _paired_sum(B: np.ndarray) -> float:
    """Sum of paired-overlap percentages over all row pairs of ``B``."""
    fill = B.sum(axis=1)
    overlap = B @ B.T
    lo = np.minimum(fill[:, None], fill[None, :])
    iu = np.triu_indices(B.shape[0], k=1)
    differ = fill[:, None] != fill[None, :]
    use = differ[iu] & (lo[iu] > 0)
    return float((100.0 * overlap[iu][use] / lo[iu][use]).sum())


def nodf(M) -> float:
    """NODF nestedness in ``[0, 100]``.

    Every pair of rows (and of columns) with different fills contributes
    the percentage of the sparser line's ones that the denser line shares;
    equal fills or an empty sparser line contribute zero. The sum is
    divided by the number of row pairs plus column pairs. The result does
    not depend on row or column order.
    """
    B = (np.asarray(M) != 0).astype(np.int64)
    n, m = B.shape
    pairs = n * (n - 1) / 2 + m * (m - 1) / 2
    if pairs == 0 or not B.any():
        return 0.0
    return (_paired_sum(B) + _paired_sum(B.T)) / pairs


@dataclass(frozen=True)
class BlockNodf:
    per_block: dict[int, float]
    mean: float


def per_block_nodf(M, communities, codes) -> BlockNodf:
    """NODF of each community's diagonal block; singletons give NaN and are
    left out of the (unweighted) mean."""
    membership = getattr(communities, "membership", communities)
    labels = np.array([membership[c] for c in codes])
    B = np.asarray(M)
    out = {}
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        out[c] = math.nan if len(idx) < 2 else nodf(B[np.ix_(idx, idx)])
    defined = [v for v in out.values() if not math.isnan(v)]
    return BlockNodf(out, float(np.mean(defined)) if defined else math.nan)


def nested_ordering(M, scores: AccessTransferScores) -> tuple[np.ndarray, np.ndarray]:
    """Row and column permutations revealing the nested structure.

    Rows (destinations) by descending accessibility, columns (origins) by
    ascending transferability, ties by occupation code, missing scores
    last. Apply as ``M[rows][:, cols]``.
    """
    M = np.asarray(M)
    codes = scores.occupations
    if M.shape != (len(codes), len(codes)):
        raise ValueError("matrix and scores are not aligned")
    A = scores.accessibility
    T = scores.transferability

    def key(values, sign):
        return lambda k: (math.isnan(values[k]), sign * values[k] if not math.isnan(values[k]) else 0.0,
                          codes[k])

    rows = np.array(sorted(range(len(codes)), key=key(A, -1.0)), dtype=np.int64)
    cols = np.array(sorted(range(len(codes)), key=key(T, 1.0)), dtype=np.int64)
    return rows, cols


@dataclass(frozen=True)
class TaxonomyConfusion:
    """Counts of occupations labelled ``classes[r]`` in ``a`` and
    ``classes[c]`` in ``b``; ``off_diagonal`` has the diagonal zeroed."""

    matrix: np.ndarray
    off_diagonal: np.ndarray
    classes: tuple[Taxon, ...] = TAXA


def taxonomy_confusion(a: TaxonomyLabels, b: TaxonomyLabels) -> TaxonomyConfusion:
    diff = set(a.labels) ^ set(b.labels)
    if diff:
        raise ValueError(f"occupation sets differ: {sorted(diff)}")
    pos = {t: k for k, t in enumerate(TAXA)}
    C = np.zeros((4, 4), dtype=np.int64)
    for code in sorted(a.labels):
        la, lb = a.labels[code], b.labels[code]
        if la is not None and lb is not None:
            C[pos[la], pos[lb]] += 1
    off = C.copy()
    np.fill_diagonal(off, 0)
    return TaxonomyConfusion(C, off)
