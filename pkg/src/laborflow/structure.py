"""Network-structure and skill diagnostics for accessibility/transferability.

Centralities run on the directed graph with an edge ``j -> i`` wherever
``P[i, j] > 0`` and edge length ``-ln p``, so the shortest path is the most
probable chain of moves. Probabilities are clamped to ``[1e-12, 1 - 1e-12]``
before the log so that certain moves still have a positive length.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .complexity import AccessTransferScores, Taxon, TaxonomyLabels

P_MIN = 1e-12
P_MAX = 1.0 - 1e-12
DISTANCE_TRANSFORM = "d = -ln(clip(p, 1e-12, 1 - 1e-12))"
# relative tolerance for treating two path lengths as equal
TIE_RTOL = 1e-12


def _probs(Pt) -> np.ndarray:
    probs = getattr(Pt, "probs", Pt)
    return np.asarray(probs, dtype=float)


def edge_lengths(Pt) -> np.ndarray:
    """``L[origin, dest] = -ln p`` for existing edges, ``inf`` otherwise.
    Self-loops never count as edges."""
    P = _probs(Pt).T
    L = np.full(P.shape, np.inf)
    has = P > 0
    L[has] = -np.log(np.clip(P[has], P_MIN, P_MAX))
    np.fill_diagonal(L, np.inf)
    return L


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(a, b)


def _dijkstra(L: np.ndarray, s: int):
    """Single-source shortest paths with path counting.

    Returns nodes in order of settlement, predecessor lists, shortest path
    counts and distances.
    """
    n = L.shape[0]
    dist = np.full(n, np.inf)
    sigma = np.zeros(n)
    preds: list[list[int]] = [[] for _ in range(n)]
    dist[s] = 0.0
    sigma[s] = 1.0
    order = []
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, s)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v] or d > dist[v]:
            continue
        done[v] = True
        order.append(v)
        for w in np.flatnonzero(np.isfinite(L[v])):
            if done[w]:
                continue
            nd = d + L[v, w]
            if math.isinf(dist[w]) or (nd < dist[w] and not _same(nd, dist[w])):
                dist[w] = nd
                sigma[w] = sigma[v]
                preds[w] = [v]
                heapq.heappush(heap, (nd, w))
            elif _same(nd, dist[w]):
                sigma[w] += sigma[v]
                preds[w].append(v)
    return order, preds, sigma, dist


def betweenness(Pt, normalized: bool = True) -> np.ndarray:
    """Directed weighted betweenness (Brandes accumulation).

    Normalized by ``(n - 1)(n - 2)``, the number of ordered pairs not
    involving the node. Unreachable pairs contribute nothing.
    """
    L = edge_lengths(Pt)
    n = L.shape[0]
    bc = np.zeros(n)
    for s in range(n):
        order, preds, sigma, _ = _dijkstra(L, s)
        delta = np.zeros(n)
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    if normalized and n > 2:
        bc /= (n - 1) * (n - 2)
    return bc


def shortest_distances(Pt) -> np.ndarray:
    """All-pairs shortest path lengths ``D[source, target]``."""
    L = edge_lengths(Pt)
    return np.array([_dijkstra(L, s)[3] for s in range(L.shape[0])])


def closeness(Pt) -> np.ndarray:
    """Outward closeness: reachable count over summed distance to the
    reachable nodes; zero when nothing is reachable."""
    D = shortest_distances(Pt)
    np.fill_diagonal(D, np.inf)
    out = np.zeros(D.shape[0])
    for s, row in enumerate(D):
        reach = np.isfinite(row)
        if reach.any():
            out[s] = reach.sum() / row[reach].sum()
    return out


def harmonic_closeness(Pt) -> np.ndarray:
    """Mean of ``1 / d`` over all other nodes (unreachable count as zero)."""
    D = shortest_distances(Pt)
    n = D.shape[0]
    np.fill_diagonal(D, np.inf)
    if n < 2:
        return np.zeros(n)
    return (1.0 / D).sum(axis=1) / (n - 1)


@dataclass(frozen=True)
class CentralityReport:
    occupations: tuple[str, ...]
    betweenness: np.ndarray
    closeness: np.ndarray
    harmonic_closeness: np.ndarray
    distance_transform: str = DISTANCE_TRANSFORM


def centrality_report(Pt) -> CentralityReport:
    return CentralityReport(
        tuple(Pt.codes), betweenness(Pt), closeness(Pt), harmonic_closeness(Pt))


def rankdata(x) -> np.ndarray:
    """Fractional (average) ranks starting at 1."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties.

    NaN pairs are dropped; returns NaN when either rank vector is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if len(x) < 2:
        raise ValueError("need at least two paired values")
    rx = rankdata(x) - (len(x) + 1) / 2.0
    ry = rankdata(y) - (len(y) + 1) / 2.0
    sxx = rx @ rx
    syy = ry @ ry
    if sxx == 0 or syy == 0:
        return math.nan
    return float(np.clip(rx @ ry / math.sqrt(sxx * syy), -1.0, 1.0))


@dataclass(frozen=True)
class SkillMatrix:
    occupations: tuple[str, ...]
    skills: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        if W.shape != (len(self.occupations), len(self.skills)):
            raise ValueError("weights must be occupations x skills")
        if W.size and W.min() < 0:
            raise ValueError("skill weights must be nonnegative")
        object.__setattr__(self, "weights", W)

    @property
    def empty_rows(self) -> tuple[str, ...]:
        return tuple(c for c, r in zip(self.occupations, self.weights) if not r.any())

    def row(self, code: str) -> np.ndarray:
        try:
            return self.weights[self.occupations.index(code)]
        except ValueError:
            raise KeyError(f"no skill vector for occupation {code!r}") from None

    def subset(self, codes: Sequence[str]) -> SkillMatrix:
        idx = [self.occupations.index(c) for c in codes]
        return SkillMatrix(tuple(codes), self.skills, self.weights[idx])


def skill_similarity(S: SkillMatrix, i: str, j: str) -> float:
    """Cosine similarity of two occupations' skill vectors."""
    a, b = S.row(i), S.row(j)
    for code, v in ((i, a), (j, b)):
        if not v.any():
            raise ValueError(f"occupation {code!r} has an all-zero skill vector")
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def similarity_matrix(S: SkillMatrix) -> np.ndarray:
    """Pairwise cosine similarities; unit diagonal."""
    if S.empty_rows:
        raise ValueError(f"all-zero skill vectors: {list(S.empty_rows)}")
    U = S.weights / np.linalg.norm(S.weights, axis=1, keepdims=True)
    D = np.clip(U @ U.T, 0.0, 1.0)
    np.fill_diagonal(D, 1.0)
    return D


def rome_to_pcs(skill_rows: Mapping[str, Sequence[float]],
                mapping: Mapping[str, Iterable[str]],
                skills: Sequence[str] | None = None) -> SkillMatrix:
    """Aggregate source-classification skill vectors onto target codes.

    Each target row is the element-wise mean of the rows of its mapped
    sources.
    """
    rows = []
    targets = sorted(mapping)
    for t in targets:
        sources = sorted(set(mapping[t]))
        if not sources:
            raise ValueError(f"target {t!r} has no mapped source")
        missing = [s for s in sources if s not in skill_rows]
        if missing:
            raise ValueError(f"target {t!r} maps to unknown sources {missing}")
        rows.append(np.mean([np.asarray(skill_rows[s], dtype=float) for s in sources], axis=0))
    W = np.array(rows)
    if skills is None:
        skills = tuple(str(k) for k in range(W.shape[1]))
    return SkillMatrix(tuple(targets), tuple(skills), W)


@dataclass(frozen=True)
class InterIntra:
    d_intra: float
    d_inter: float
    d_p: float
    d_r: float


def inter_intra_scores(S: SkillMatrix, communities) -> dict[str, InterIntra]:
    """Mean skill similarity to same-community and other-community
    occupations, with their product ``d_p`` and ratio ``d_r``.

    Singleton communities give NaN ``d_intra``; a zero ``d_inter`` gives
    NaN ``d_r``.
    """
    membership = getattr(communities, "membership", communities)
    missing = [c for c in S.occupations if c not in membership]
    if missing:
        raise ValueError(f"occupations without a community: {missing[:10]}")
    labels = np.array([membership[c] for c in S.occupations])
    D = similarity_matrix(S)
    out = {}
    for k, code in enumerate(S.occupations):
        same = labels == labels[k]
        same[k] = False
        other = labels != labels[k]
        intra = float(D[k, same].mean()) if same.any() else math.nan
        inter = float(D[k, other].mean()) if other.any() else math.nan
        d_p = intra * inter
        d_r = intra / inter if inter > 0 else math.nan
        out[code] = InterIntra(intra, inter, d_p, d_r)
    return out


def _filter(codes, labels: TaxonomyLabels | None, only: Taxon | None):
    if labels is None or only is None:
        return np.ones(len(codes), dtype=bool)
    return np.array([labels.labels.get(c) == only for c in codes])


@dataclass(frozen=True)
class SizeCorrelations:
    rho_A_size: float
    rho_T_size: float


def size_correlations(scores: AccessTransferScores, sizes, labels: TaxonomyLabels | None = None,
                      only: Taxon | None = None) -> SizeCorrelations:
    """Spearman correlation of occupation size with accessibility and with
    transferability, optionally restricted to one taxon."""
    sizes = np.asarray(sizes, dtype=float)
    keep = _filter(scores.occupations, labels, only)
    return SizeCorrelations(
        spearman(scores.accessibility[keep], sizes[keep]),
        spearman(scores.transferability[keep], sizes[keep]),
    )


def correlate(x, y, codes, labels: TaxonomyLabels | None = None,
              only: Taxon | None = None) -> float:
    """Spearman correlation of two aligned vectors, optionally restricted to
    occupations carrying one taxonomy label."""
    keep = _filter(codes, labels, only)
    return spearman(np.asarray(x, dtype=float)[keep], np.asarray(y, dtype=float)[keep])


def read_skill_csv(path: str | Path) -> SkillMatrix:
    """Read ``occupation,skill,weight`` rows into a :class:`SkillMatrix`."""
    path = Path(path)
    entries: dict[tuple[str, str], float] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"occupation", "skill", "weight"} - set(reader.fieldnames):
            raise ValueError(f"{path}: expected header occupation,skill,weight")
        for line, row in enumerate(reader, start=2):
            try:
                w = float(row["weight"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{line}: bad weight {row['weight']!r}") from None
            if w < 0 or math.isnan(w):
                raise ValueError(f"{path}:{line}: weight must be nonnegative")
            entries[(row["occupation"].strip(), row["skill"].strip())] = w
    occs = sorted({o for o, _ in entries})
    skills = sorted({s for _, s in entries})
    oi = {o: k for k, o in enumerate(occs)}
    si = {s: k for k, s in enumerate(skills)}
    W = np.zeros((len(occs), len(skills)))
    for (o, s), w in entries.items():
        W[oi[o], si[s]] = w
    return SkillMatrix(tuple(occs), tuple(skills), W)


def read_mapping_csv(path: str | Path) -> dict[str, set[str]]:
    """Read ``source,target`` rows into ``target -> {sources}``."""
    path = Path(path)
    out: dict[str, set[str]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"source", "target"} - set(reader.fieldnames):
            raise ValueError(f"{path}: expected header source,target")
        for row in reader:
            out.setdefault(row["target"].strip(), set()).add(row["source"].strip())
    return out


def write_skill_csv(S: SkillMatrix, path: str | Path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occupation", "skill", "weight"])
        for code, row in zip(S.occupations, S.weights):
            for skill, v in zip(S.skills, row):
                if v:
                    w.writerow([code, skill, repr(float(v))])
