"""Retraining-policy link additions and random-walk coverage.

A policy adds, for each origin occupation, one new link of weight ``delta``
to a destination it currently has no flow to, then renormalizes the
origin's column. The skills-only strategy picks the most skill-similar
destination; the informed strategy picks, among highly similar
destinations, the one with the highest transferability.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .complexity import AccessTransferScores, fitness_complexity
from .flowmatrix import SELF_LOOPS_INCLUDED, TransitionMatrix, strip_self_loops
from .structure import SkillMatrix, similarity_matrix, spearman

SKILLS_ONLY = "skills_only"
INFORMED = "informed"


@dataclass(frozen=True)
class AddedLink:
    origin: str
    destination: str
    delta: float
    induced: float  # probability after renormalization


@dataclass(frozen=True)
class MetricStability:
    rho_accessibility: float
    rho_transferability: float


@dataclass
class PolicyOutcome:
    modified: TransitionMatrix
    added_links: list[AddedLink]
    strategy: str
    skipped: tuple[str, ...] = ()
    similarity_threshold: float | None = None
    coverage_before: np.ndarray | None = field(default=None, repr=False)
    coverage_after: np.ndarray | None = field(default=None, repr=False)
    metric_stability: MetricStability | None = None


def _similarity(P: TransitionMatrix, D) -> np.ndarray:
    if isinstance(D, SkillMatrix):
        missing = [c for c in P.codes if c not in D.occupations]
        if missing:
            raise ValueError(f"occupations without skills: {missing[:10]}")
        D = similarity_matrix(D.subset(P.codes))
    D = np.asarray(D, dtype=float)
    if D.shape != (P.n, P.n):
        raise ValueError("similarity matrix must match the transition matrix")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise ValueError("similarity matrix must be symmetric")
    if not np.allclose(np.diag(D), 1.0, rtol=0, atol=1e-12):
        raise ValueError("similarity matrix must have a unit diagonal")
    return D


def _check_delta(delta: float):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _unlinked(P: np.ndarray, j: int) -> np.ndarray:
    cand = np.flatnonzero(P[:, j] == 0)
    return cand[cand != j]


def _apply(P: TransitionMatrix, choices: dict[int, int], delta: float, strategy: str,
           skipped, threshold=None) -> PolicyOutcome:
    probs = np.array(P.probs, dtype=float)
    codes = P.codes
    links = []
    for j, i in sorted(choices.items()):
        col = probs[:, j]
        col[i] = delta
        col /= col.sum()
        links.append(AddedLink(codes[j], codes[i], delta, float(col[i])))
    degenerate = tuple(c for c in P.degenerate if P.index()[c] not in choices)
    modified = P.with_probs(probs, degenerate=degenerate)
    return PolicyOutcome(modified, links, strategy, tuple(codes[j] for j in skipped), threshold)


def skills_only_strategy(P: TransitionMatrix, D, delta: float = 0.005) -> PolicyOutcome:
    """Link every origin to its most skill-similar unlinked destination
    (ties to the lowest code)."""
    _check_delta(delta)
    D = _similarity(P, D)
    probs = np.asarray(P.probs)
    codes = P.codes
    choices, skipped = {}, []
    for j in range(P.n):
        cand = _unlinked(probs, j)
        if len(cand) == 0:
            skipped.append(j)
            continue
        choices[j] = min(cand, key=lambda i: (-D[i, j], codes[i]))
    return _apply(P, choices, delta, SKILLS_ONLY, skipped)


def similarity_percentile(D: np.ndarray, percentile: float) -> float:
    """Quantile of the pairwise (off-diagonal, unordered) similarities."""
    iu = np.triu_indices(D.shape[0], k=1)
    return float(np.quantile(D[iu], percentile))


def informed_strategy(P: TransitionMatrix, D, T, delta: float = 0.005,
                      percentile: float = 0.98, top_n: int = 5) -> PolicyOutcome:
    """Link every origin to the most transferable of its highly similar
    unlinked destinations.

    Candidates are unlinked destinations whose similarity exceeds the
    ``percentile`` quantile of all pairwise similarities; when there are
    none, the ``top_n`` most similar unlinked destinations are used. The
    candidate with the highest transferability wins, then the most similar,
    then the lowest code. Missing transferability ranks last.
    """
    _check_delta(delta)
    if not 0.0 < percentile < 1.0:
        raise ValueError("percentile must lie in (0, 1)")
    if top_n < 1:
        raise ValueError("top_n must be at least 1")
    D = _similarity(P, D)
    if isinstance(T, AccessTransferScores):
        T = T.transferability
    T = np.asarray(T, dtype=float)
    if T.shape != (P.n,):
        raise ValueError("transferability vector must match the matrix")
    T = np.where(np.isnan(T), -np.inf, T)
    threshold = similarity_percentile(D, percentile)
    probs = np.asarray(P.probs)
    codes = P.codes
    choices, skipped = {}, []
    for j in range(P.n):
        cand = _unlinked(probs, j)
        if len(cand) == 0:
            skipped.append(j)
            continue
        high = cand[D[cand, j] > threshold]
        if len(high) == 0:
            high = sorted(cand, key=lambda i: (-D[i, j], codes[i]))[:top_n]
        choices[j] = min(high, key=lambda i: (-T[i], -D[i, j], codes[i]))
    return _apply(P, choices, delta, INFORMED, skipped, threshold)


def _code_key(code: str) -> int:
    return int.from_bytes(hashlib.blake2b(code.encode("utf-8"), digest_size=8).digest(), "little")


def walker_uniforms(codes, steps: int, n_seeds: int, seed0: int = 0) -> np.ndarray:
    """Uniform draws ``U[seed, walker, step]``.

    Each walker has its own stream keyed by ``(seed0, seed index, hash of
    its start code)``, so results do not depend on evaluation order and the
    same walker sees the same draws on every matrix it is run on.
    """
    U = np.empty((n_seeds, len(codes), steps))
    keys = [_code_key(c) for c in codes]
    for s in range(n_seeds):
        for w, key in enumerate(keys):
            ss = np.random.SeedSequence([seed0 & 0xFFFFFFFFFFFFFFFF, s, key])
            U[s, w] = np.random.default_rng(ss).random(steps)
    return U


def walk_matrix(P: TransitionMatrix, with_self_loops: bool = False) -> np.ndarray:
    if not with_self_loops and P.self_loops == SELF_LOOPS_INCLUDED:
        P = strip_self_loops(P)
    return np.asarray(P.probs, dtype=float)


def random_walk_coverage(P: TransitionMatrix, steps: int = 5, n_seeds: int = 500,
                         seed0: int = 0, starts=None, with_self_loops: bool = False,
                         count_starts: bool = False, uniforms: np.ndarray | None = None
                         ) -> np.ndarray:
    """Fraction of occupations visited per seed by simultaneous walkers.

    One walker starts on every occupation (or on ``starts``) and takes
    ``steps`` probability-weighted moves; a walker on an occupation with
    no outflow stays put. By default an occupation counts as visited when
    some walker arrives there by a move; ``count_starts=True`` also counts
    the start positions. Walks use the matrix without self-loops unless
    ``with_self_loops``. Pass ``uniforms`` from :func:`walker_uniforms` to
    reuse draws across matrices.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    codes = P.codes
    if starts is None:
        start_idx = np.arange(P.n)
    else:
        pos = P.index()
        start_idx = np.array([pos[c] for c in starts], dtype=np.int64)
    if uniforms is None:
        uniforms = walker_uniforms([codes[k] for k in start_idx], steps, n_seeds, seed0)
    if uniforms.shape != (n_seeds, len(start_idx), steps):
        raise ValueError("uniforms do not match seeds/walkers/steps")
    probs = walk_matrix(P, with_self_loops)
    cum = np.cumsum(probs, axis=0)
    total = cum[-1]
    n = P.n
    cur = np.broadcast_to(start_idx, (n_seeds, len(start_idx))).copy()
    visited = np.zeros((n_seeds, n), dtype=bool)
    seed_rows = np.arange(n_seeds)[:, None]
    if count_starts:
        visited[seed_rows, cur] = True
    for t in range(steps):
        flat_cur = cur.ravel()
        flat_u = uniforms[:, :, t].ravel()
        flat_next = flat_cur.copy()
        moved = np.zeros(flat_cur.shape, dtype=bool)
        for node in np.unique(flat_cur):
            if total[node] <= 0:
                continue  # no outflow: the walker halts here
            sel = flat_cur == node
            idx = np.searchsorted(cum[:, node], flat_u[sel] * total[node], side="right")
            flat_next[sel] = np.minimum(idx, n - 1)
            moved[sel] = True
        cur = flat_next.reshape(cur.shape)
        visited[np.broadcast_to(seed_rows, cur.shape)[moved.reshape(cur.shape)],
                cur[moved.reshape(cur.shape)]] = True
    return visited.sum(axis=1) / n


def metric_stability(before: AccessTransferScores, after: AccessTransferScores) -> MetricStability:
    """Rank correlations of scores before and after a perturbation."""
    if tuple(before.occupations) != tuple(after.occupations):
        diff = set(before.occupations) ^ set(after.occupations)
        if diff:
            raise ValueError(f"occupation sets differ: {sorted(diff)}")
        order = {c: k for k, c in enumerate(after.occupations)}
        idx = [order[c] for c in before.occupations]
        a_acc, a_tr = after.accessibility[idx], after.transferability[idx]
    else:
        a_acc, a_tr = after.accessibility, after.transferability
    return MetricStability(
        spearman(before.accessibility, a_acc),
        spearman(before.transferability, a_tr),
    )


def evaluate_policy(P: TransitionMatrix, outcome: PolicyOutcome, steps: int = 5,
                    n_seeds: int = 500, seed0: int = 0, n_iter: int = 200,
                    before: AccessTransferScores | None = None,
                    uniforms: np.ndarray | None = None) -> PolicyOutcome:
    """Fill in coverage before/after (matched draws) and metric stability."""
    if uniforms is None:
        uniforms = walker_uniforms(P.codes, steps, n_seeds, seed0)
    outcome.coverage_before = random_walk_coverage(P, steps, n_seeds, seed0, uniforms=uniforms)
    outcome.coverage_after = random_walk_coverage(outcome.modified, steps, n_seeds, seed0,
                                                  uniforms=uniforms)
    if before is None:
        before = fitness_complexity(strip_self_loops(P), n_iter)
    after = fitness_complexity(strip_self_loops(outcome.modified), n_iter)
    outcome.metric_stability = metric_stability(before, after)
    return outcome


def coverage_summary(coverage: np.ndarray) -> dict[str, float]:
    return {
        "mean": float(np.mean(coverage)),
        "std": float(np.std(coverage)),
        "min": float(np.min(coverage)),
        "max": float(np.max(coverage)),
    } if len(coverage) else {"mean": math.nan, "std": math.nan, "min": math.nan, "max": math.nan}
