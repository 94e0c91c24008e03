"""Bipartite (Barber) modularity and BRIM community detection.

The directed flow network is lifted to a bipartite graph: every occupation
appears once as an origin (row side) and once as a destination (column
side), and the biadjacency matrix ``M[origin, destination]`` carries the
flow weights. A community label is assigned to each side separately during
optimization and reconciled to one label per occupation at the end.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flowmatrix import FlowCounts, TransitionMatrix


def flow_weights(flows, include_self_loops: bool = False) -> tuple[np.ndarray, tuple[str, ...]]:
    """Biadjacency ``M[origin, destination]`` and the occupation codes.

    Accepts :class:`FlowCounts`, :class:`TransitionMatrix` or a square
    ``(destination, origin)`` array. Stayers are dropped unless
    ``include_self_loops``; they dominate raw counts and would make any
    partition look modular.
    """
    if isinstance(flows, (FlowCounts, TransitionMatrix)):
        W = flows.counts if isinstance(flows, FlowCounts) else flows.probs
        codes = flows.codes
    else:
        W = np.asarray(flows)
        codes = tuple(f"{k:04d}" for k in range(W.shape[0]))
    M = np.array(W, dtype=float).T
    if not include_self_loops:
        np.fill_diagonal(M, 0.0)
    return M, codes


def _labels(membership, codes) -> np.ndarray:
    if isinstance(membership, Mapping):
        missing = [c for c in codes if c not in membership]
        if missing:
            raise ValueError(f"membership missing occupations: {missing[:10]}")
        return np.array([membership[c] for c in codes], dtype=np.int64)
    labels = np.asarray(membership, dtype=np.int64)
    if labels.shape != (len(codes),):
        raise ValueError("membership must assign every occupation")
    return labels


def bipartite_modularity(M: np.ndarray, row_labels, col_labels) -> float:
    """Barber modularity of a biadjacency matrix with separate side labels.

    ``Q = (1/E) sum_{i,a} (M_ia - k_i d_a / E) [g_i == h_a]``.
    """
    E = float(M.sum())
    if E <= 0:
        raise ValueError("total link weight must be positive")
    g = np.asarray(row_labels)
    h = np.asarray(col_labels)
    k = M.sum(axis=1)
    d = M.sum(axis=0)
    q = 0.0
    for c in np.union1d(g, h):
        rows = g == c
        cols = h == c
        q += M[np.ix_(rows, cols)].sum() - k[rows].sum() * d[cols].sum() / E
    return q / E


def barber_modularity(flows, membership, include_self_loops: bool = False) -> float:
    """Barber modularity of a one-label-per-occupation partition."""
    M, codes = flow_weights(flows, include_self_loops)
    labels = _labels(membership, codes)
    return bipartite_modularity(M, labels, labels)


@dataclass
class CommunityAssignment:
    membership: dict[str, int]
    modularity: float
    n_communities: int
    # per half-step modularity of the winning BRIM restart
    history: list[float] = field(default_factory=list, repr=False)

    @classmethod
    def from_membership(cls, flows, membership, include_self_loops: bool = False):
        M, codes = flow_weights(flows, include_self_loops)
        labels = _compact(_labels(membership, codes))
        q = bipartite_modularity(M, labels, labels)
        return cls(dict(zip(codes, labels.tolist())), q, int(labels.max()) + 1)

    def labels(self, codes: Sequence[str]) -> np.ndarray:
        return _labels(self.membership, codes)

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for code, c in sorted(self.membership.items()):
            out.setdefault(c, []).append(code)
        return dict(sorted(out.items()))

    def to_dict(self) -> dict:
        return {
            "membership": dict(sorted(self.membership.items())),
            "modularity": self.modularity,
            "n_communities": self.n_communities,
        }


def _compact(labels: np.ndarray) -> np.ndarray:
    """Relabel to 0..c-1 in order of first appearance."""
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for k, lab in enumerate(labels.tolist()):
        out[k] = mapping.setdefault(lab, len(mapping))
    return out


@dataclass
class BrimRun:
    row_labels: np.ndarray
    col_labels: np.ndarray
    modularity: float
    history: list[float]
    sweeps: int


def brim_run(M: np.ndarray, n_labels: int, rng: np.random.Generator,
             max_sweeps: int = 1000, tol: float = 1e-12) -> BrimRun:
    """One BRIM optimization from random destination-side labels.

    Alternating sweeps run until modularity stops improving by more than
    ``tol``. BRIM alone often stalls with a dense block split into two
    halves whose origin and destination labels are crossed; a greedy merge
    of label pairs (applied to both sides, only on strict gain) followed by
    further sweeps escapes those optima without ever lowering modularity.
    """
    E = float(M.sum())
    k = M.sum(axis=1)
    d = M.sum(axis=0)
    h = rng.integers(0, n_labels, size=M.shape[1])
    g = None
    history: list[float] = []
    q_prev = -math.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        g = _respond(M, k, d, h, n_labels, E, g)
        history.append(bipartite_modularity(M, g, h))
        h = _respond(M.T, d, k, g, n_labels, E, h)
        q = bipartite_modularity(M, g, h)
        history.append(q)
        if q - q_prev > tol:
            q_prev = q
            continue
        merged = _merge_best_pair(M, g, h, n_labels, E, tol)
        if merged is None:
            break
        g, h = merged
        q_prev = bipartite_modularity(M, g, h)
        history.append(q_prev)
    return BrimRun(g, h, history[-1], history, sweeps)


def _merge_best_pair(M, g, h, n_labels, E, tol):
    """Merge the two labels whose union raises modularity the most."""
    R = np.zeros((len(g), n_labels))
    R[np.arange(len(g)), g] = 1.0
    T = np.zeros((len(h), n_labels))
    T[np.arange(len(h)), h] = 1.0
    C = R.T @ M @ T
    K = M.sum(axis=1) @ R
    D = M.sum(axis=0) @ T
    gain = C + C.T - (np.outer(K, D) + np.outer(D, K)) / E
    np.fill_diagonal(gain, -np.inf)
    a, b = np.unravel_index(np.argmax(gain), gain.shape)
    if gain[a, b] / E <= tol:
        return None
    a, b = min(a, b), max(a, b)
    return np.where(g == b, a, g), np.where(h == b, a, h)


def _respond(M, strength, other_side_strength, other_labels, n_labels, E, current):
    """Optimal labels for the row side of ``M`` given the column labels.

    A node keeps its current label when that label is among the maxima so
    that a half-step never lowers modularity; otherwise the lowest
    maximizing label wins.
    """
    onehot = np.zeros((len(other_labels), n_labels))
    onehot[np.arange(len(other_labels)), other_labels] = 1.0
    community_strength = other_side_strength @ onehot
    score = M @ onehot - np.outer(strength, community_strength) / E
    best = score.argmax(axis=1)
    if current is not None:
        rows = np.arange(len(best))
        keep = score[rows, current] >= score[rows, best]
        best = np.where(keep, current, best)
    return best


def label_budgets(c_max: int, n_restarts: int) -> list[int]:
    """Label counts tried by successive restarts, spread geometrically over
    ``[2, c_max]`` so that both coarse and fine starting partitions occur."""
    if c_max < 2:
        return [1] * n_restarts
    if n_restarts == 1:
        return [c_max]
    return [int(b) for b in np.round(np.geomspace(2, c_max, n_restarts))]


def reconcile(M: np.ndarray, row_labels, col_labels) -> np.ndarray:
    """One label per occupation: the label of its stronger role, origin on
    ties, compacted to ``0..c-1``."""
    out_strength = M.sum(axis=1)
    in_strength = M.sum(axis=0)
    labels = np.where(out_strength >= in_strength, row_labels, col_labels)
    return _compact(np.asarray(labels))


def merge_labels(M: np.ndarray, labels, tol: float = 1e-12) -> np.ndarray:
    """Greedily merge pairs of a one-label-per-occupation partition while
    that strictly raises modularity; reconciliation can leave splits that
    only paid off while the two roles carried different labels."""
    labels = _compact(np.asarray(labels))
    E = float(M.sum())
    while labels.max() > 0:
        merged = _merge_best_pair(M, labels, labels, int(labels.max()) + 1, E, tol)
        if merged is None:
            break
        labels = _compact(merged[0])
    return labels


def move_nodes(M: np.ndarray, labels, tol: float = 1e-12, max_sweeps: int = 100,
               max_labels: int | None = None) -> np.ndarray:
    """Move single occupations (both roles at once) to the community, or a
    fresh singleton, that raises modularity the most; sweep in index order
    until no move gains more than ``tol``. A singleton is only opened while
    fewer than ``max_labels`` communities exist.

    BRIM only ever relabels one side at a time, so an occupation whose
    origin and destination roles both belong elsewhere can stay stranded.
    """
    labels = _compact(np.asarray(labels)).copy()
    E = float(M.sum())
    k = M.sum(axis=1)
    d = M.sum(axis=0)
    n = len(labels)
    for _ in range(max_sweeps):
        moved = False
        for i in range(n):
            c_count = int(labels.max()) + 1
            onehot = np.zeros((n, c_count + 1))
            onehot[np.arange(n), labels] = 1.0
            onehot[i] = 0.0
            link = M[i] @ onehot + M[:, i] @ onehot
            K = k @ onehot
            D = d @ onehot
            gain = link + M[i, i] - (k[i] * D + d[i] * K + k[i] * d[i]) / E
            if max_labels is not None and c_count >= max_labels:
                gain[c_count] = -np.inf
            best = int(np.argmax(gain))
            if (gain[best] - gain[labels[i]]) / E > tol:
                labels[i] = best
                labels = _compact(labels)
                moved = True
        if not moved:
            break
    return labels


def refine(M: np.ndarray, labels, max_labels: int | None = None) -> np.ndarray:
    """Alternate :func:`merge_labels` and :func:`move_nodes` until neither
    changes the partition; modularity never decreases."""
    labels = _compact(np.asarray(labels))
    while True:
        new = move_nodes(M, merge_labels(M, labels), max_labels=max_labels)
        if np.array_equal(new, labels):
            return labels
        labels = new


def brim(flows, c_max: int = 24, seed: int = 0, max_sweeps: int = 1000,
         n_restarts: int = 16, include_self_loops: bool = False) -> CommunityAssignment:
    """Maximize Barber modularity with BRIM over several seeded restarts.

    Restart ``r`` draws random destination-side labels from a budget of
    :func:`label_budgets` labels (at most ``c_max``) and runs
    :func:`brim_run`. Each result is reconciled to one label per occupation,
    polished by :func:`refine`, and the restart with the highest
    resulting modularity wins (earliest on ties). Unused labels are dropped.
    """
    if c_max < 1:
        raise ValueError("c_max must be at least 1")
    M, codes = flow_weights(flows, include_self_loops)
    if M.sum() <= 0:
        raise ValueError("total link weight must be positive")
    budgets = label_budgets(min(c_max, len(codes)), n_restarts)
    best = None
    for r, n_labels in enumerate(budgets):
        run = brim_run(M, n_labels, np.random.default_rng([seed, r]), max_sweeps)
        labels = refine(M, reconcile(M, run.row_labels, run.col_labels), c_max)
        q = bipartite_modularity(M, labels, labels)
        if best is None or q > best[0]:
            best = (q, labels, run)
    q, labels, run = best
    return CommunityAssignment(dict(zip(codes, labels.tolist())), q,
                               int(labels.max()) + 1, history=run.history)


@dataclass(frozen=True)
class InterCommunityShare:
    inter_share: float
    outside_outflow_share: dict[str, float]
    outside_inflow_share: dict[str, float]


def inter_community_share(P: TransitionMatrix, communities) -> InterCommunityShare:
    """Cross-community share of the off-diagonal transition mass.

    Per occupation, ``outside_outflow_share`` is the fraction of its
    outgoing mass (stayers excluded) that leaves its community and
    ``outside_inflow_share`` the fraction of its incoming mass that comes
    from another community. Occupations without moves get NaN.
    """
    probs = np.array(P.probs, dtype=float)
    np.fill_diagonal(probs, 0.0)
    labels = _labels(getattr(communities, "membership", communities), P.codes)
    cross = labels[:, None] != labels[None, :]
    total = probs.sum()
    inter = float(probs[cross].sum() / total) if total > 0 else math.nan
    out_tot = probs.sum(axis=0)
    out_cross = np.where(cross, probs, 0.0).sum(axis=0)
    in_tot = probs.sum(axis=1)
    in_cross = np.where(cross, probs, 0.0).sum(axis=1)

    def ratio(a, b):
        return {c: (float(x / y) if y > 0 else math.nan)
                for c, x, y in zip(P.codes, a, b)}

    return InterCommunityShare(inter, ratio(out_cross, out_tot), ratio(in_cross, in_tot))


def write_membership_csv(communities: CommunityAssignment, path: str | Path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occupation", "community"])
        for code, c in sorted(communities.membership.items()):
            w.writerow([code, c])


def read_membership_csv(path: str | Path) -> dict[str, int]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"occupation", "community"} - set(reader.fieldnames):
            raise ValueError(f"{path}: expected header occupation,community")
        out = {}
        for line, row in enumerate(reader, start=2):
            try:
                out[row["occupation"].strip()] = int(row["community"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{line}: bad community {row['community']!r}") from None
    return out
