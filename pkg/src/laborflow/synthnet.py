"""Synthetic flow networks: test fixtures, demos and null models.

Every generator is a pure function of its arguments and seed. Occupation
codes are zero-padded indices (``"0000"``, ``"0001"``, ...).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .community import CommunityAssignment
from .flowmatrix import FlowCounts
from .structure import SkillMatrix

KINDS = ("planted_blocks", "nested", "degree_preserving_null", "uniform", "condensation")


def _codes(n: int) -> tuple[str, ...]:
    return tuple(f"{k:04d}" for k in range(n))


def _check_prob(name: str, p: float):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def _with_stayers(W: np.ndarray, stay_share: float) -> np.ndarray:
    """Put ``stay_share`` of each origin's total outflow on the diagonal."""
    W = W.copy()
    np.fill_diagonal(W, 0)
    if stay_share > 0:
        moves = W.sum(axis=0)
        stay = np.rint(moves * stay_share / (1.0 - stay_share)).astype(np.int64)
        W[np.diag_indices_from(W)] = np.where(moves > 0, stay, 1)
    return W


def block_labels(n: int, c: int) -> np.ndarray:
    """Contiguous planted block of each occupation, ``k * c // n``."""
    return np.arange(n) * c // n


def planted_blocks(n: int, c: int, p_in: float, p_out: float, seed: int = 0,
                   max_weight: int = 20, stay_share: float = 0.0) -> FlowCounts:
    """Directed counts with planted communities.

    Each ordered pair of distinct occupations is linked with probability
    ``p_in`` inside a block and ``p_out`` across blocks, with an integer
    weight drawn uniformly from ``1..max_weight``. Blocks are contiguous,
    see :func:`block_labels`.
    """
    if c < 1 or c > n:
        raise ValueError(f"need 1 <= c <= n, got c={c}, n={n}")
    _check_prob("p_in", p_in)
    _check_prob("p_out", p_out)
    if c > 1 and not p_in > p_out:
        raise ValueError("p_in must exceed p_out")
    rng = np.random.default_rng(seed)
    lab = block_labels(n, c)
    prob = np.where(lab[:, None] == lab[None, :], p_in, p_out)
    linked = rng.random((n, n)) < prob
    W = np.where(linked, rng.integers(1, max_weight + 1, size=(n, n)), 0)
    return FlowCounts.from_matrix(_codes(n), _with_stayers(W, stay_share))


def uniform_flow(n: int, seed: int = 0, max_weight: int = 20,
                 stay_share: float = 0.0) -> FlowCounts:
    """Complete directed graph with random integer weights."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    W = rng.integers(1, max_weight + 1, size=(n, n))
    return FlowCounts.from_matrix(_codes(n), _with_stayers(W, stay_share))


@dataclass(frozen=True)
class NestedLayout:
    """Positions behind :func:`nested_flow`.

    Occupation ``k`` belongs to block ``block[k]`` and sits at
    ``dest_rank[k]`` among the destinations and ``origin_rank[k]`` among
    the origins of its block; origin rank ``r`` reaches the destination
    ranks ``>= r`` of the same block.
    """
    block: np.ndarray
    dest_rank: np.ndarray
    origin_rank: np.ndarray


def nested_layout(n: int, seed: int = 0, shuffle: bool = True, n_blocks: int = 1) -> NestedLayout:
    if not 1 <= n_blocks <= n:
        raise ValueError(f"need 1 <= n_blocks <= n, got {n_blocks}")
    rng = np.random.default_rng([seed, 1])
    block = block_labels(n, n_blocks)
    dest = np.empty(n, dtype=np.int64)
    orig = np.empty(n, dtype=np.int64)
    for b in range(n_blocks):
        idx = np.flatnonzero(block == b)
        m = len(idx)
        if shuffle:
            dest[idx] = rng.permutation(m)
            orig[idx] = rng.permutation(m)
        else:
            dest[idx] = orig[idx] = np.arange(m)
    return NestedLayout(block, dest, orig)


def nested_flow(n: int = 40, gamma: float = 8.0, seed: int = 0, shuffle: bool = True,
                n_blocks: int = 1, min_weight: int = 8, max_weight: int = 12,
                stay_share: float = 0.3) -> FlowCounts:
    """Nested (triangular) flow counts.

    Origin at rank ``r`` reaches the destinations at rank ``>= r``, so the
    occupation with the lowest origin rank has the widest set of options
    and every narrower set is contained in a wider one. The boundary is
    soft: a pair at rank offset ``s = dest_rank - origin_rank`` is linked
    with probability ``1 / (1 + exp(-gamma * (s + 1/2) / sqrt(m)))`` for a
    block of ``m`` occupations, which becomes the exact triangle as
    ``gamma`` grows. With ``shuffle`` the destination and origin ranks are
    independent permutations, so accessibility and transferability are
    unrelated and all four taxonomy classes occur; without it occupation
    ``k`` has both ranks equal to its position. With ``n_blocks > 1`` the
    occupations form contiguous blocks, each nested on its own and with no
    flows between blocks. Weights are uniform integers in
    ``[min_weight, max_weight]``; stayers make up ``stay_share`` of the
    outflow of occupations whose own diagonal cell is linked. For finite
    ``gamma`` an origin left without moves gets one link to the top-ranked
    destination of its block.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    lay = nested_layout(n, seed, shuffle, n_blocks)
    rng = np.random.default_rng([seed, 2])
    same = lay.block[:, None] == lay.block[None, :]
    s = lay.dest_rank[:, None] - lay.origin_rank[None, :]  # [dest, origin]
    size = np.bincount(lay.block)[lay.block][None, :]
    if math.isinf(gamma):
        linked = same & (s >= 0)
    else:
        z = np.clip(gamma * (s + 0.5) / np.sqrt(size), -50, 50)
        linked = same & (rng.random((n, n)) < 1.0 / (1.0 + np.exp(-z)))
    W = np.where(linked, rng.integers(min_weight, max_weight + 1, size=(n, n)), 0)
    stays = np.diag(linked).copy()
    np.fill_diagonal(W, 0)
    # keep every origin of a multi-occupation block mobile; the exact
    # triangle is left as is, its last origin only stays
    for j in np.flatnonzero(W.sum(axis=0) == 0) if not math.isinf(gamma) else ():
        peers = np.flatnonzero(same[:, j] & (np.arange(n) != j))
        if len(peers):
            W[peers[np.argmax(lay.dest_rank[peers])], j] = min_weight
    # stayers only where the triangle covers the diagonal, so the full
    # support stays nested
    W = _with_stayers(W, stay_share)
    W[np.diag_indices(n)] *= stays
    return FlowCounts.from_matrix(_codes(n), W)


def _swap_support(S: np.ndarray, n_swaps: int, rng: np.random.Generator,
                  max_tries: int) -> tuple[np.ndarray, int]:
    """Directed double-edge swaps on a boolean support ``S[dest, origin]``.

    Edges ``a->b`` and ``c->d`` become ``a->d`` and ``c->b`` when that
    creates neither a self-loop nor a duplicate edge. Returns the new
    support and the number of swaps performed.
    """
    dest, orig = np.nonzero(S)
    edges = list(zip(orig.tolist(), dest.tolist()))
    present = set(edges)
    m = len(edges)
    done = tries = 0
    while done < n_swaps and tries < max_tries:
        batch = rng.integers(0, m, size=(min(4096, max_tries - tries), 2)).tolist()
        for x, y in batch:
            tries += 1
            a, b = edges[x]
            c, d = edges[y]
            if a == c or b == d or a == d or c == b:
                continue
            if (a, d) in present or (c, b) in present:
                continue
            present.difference_update(((a, b), (c, d)))
            present.update(((a, d), (c, b)))
            edges[x] = (a, d)
            edges[y] = (c, b)
            done += 1
            if done == n_swaps:
                break
    out = np.zeros_like(S, dtype=bool)
    for a, b in edges:
        out[b, a] = True
    return out, done


def degree_preserving_null(counts: FlowCounts, n_swaps: int, seed: int = 0,
                           max_tries: int | None = None) -> FlowCounts:
    """Rewire the mobility links keeping every in- and out-degree.

    The off-diagonal support is randomized with directed double-edge swaps;
    each origin's off-diagonal total is then spread uniformly over its new
    destinations (integer remainders go to the lowest indices), so column
    totals are preserved too. Stayers, entries and exits are kept.

    At most ``max_tries`` (default ``20 * n_swaps + 1000``) swaps are
    attempted. Strongly nested supports admit few swaps; a warning reports
    how many were made when the budget runs out first.
    """
    if n_swaps < 0:
        raise ValueError("n_swaps must be nonnegative")
    C = np.array(counts.counts)
    S = C > 0
    np.fill_diagonal(S, False)
    if S.sum() < 2:
        warnings.warn("fewer than two links: nothing to swap", RuntimeWarning, stacklevel=2)
        return counts
    if max_tries is None:
        max_tries = 20 * n_swaps + 1000
    new_S, done = _swap_support(S, n_swaps, np.random.default_rng(seed), max_tries)
    if done < n_swaps:
        warnings.warn(f"only {done} of {n_swaps} swaps were possible", RuntimeWarning,
                      stacklevel=2)
    off = C.copy()
    np.fill_diagonal(off, 0)
    total = off.sum(axis=0)
    W = np.zeros_like(C)
    for j in range(C.shape[1]):
        rows = np.flatnonzero(new_S[:, j])
        if len(rows) == 0:
            continue
        q, r = divmod(int(total[j]), len(rows))
        W[rows, j] = q
        W[rows[:r], j] += 1
    W[np.diag_indices_from(W)] = np.diag(C)
    return FlowCounts(counts.occupations, W, counts.entry_counts, counts.exit_counts)


def degree_sequences(counts: FlowCounts) -> tuple[np.ndarray, np.ndarray]:
    """``(in_degree, out_degree)`` of the off-diagonal support."""
    S = np.array(counts.counts) > 0
    np.fill_diagonal(S, False)
    return S.sum(axis=1), S.sum(axis=0)


# Roles in the condensation fixture.
CONDENSER = "condenser"
CHANNEL = "channel"
BRIDGE = "bridge"


@dataclass(frozen=True)
class CondensationFixture:
    flows: FlowCounts
    skills: SkillMatrix
    communities: dict[str, int]
    roles: dict[str, str]

    def codes_with_role(self, role: str) -> tuple[str, ...]:
        return tuple(c for c in self.flows.codes if self.roles[c] == role)

    def assignment(self) -> CommunityAssignment:
        """The planted communities with their modularity."""
        return CommunityAssignment.from_membership(self.flows, self.communities)


def condensation_fixture(n_communities: int = 4, n_condensers: int = 9, n_channels: int = 3,
                         n_bridges: int = 3, seed: int = 0) -> CondensationFixture:
    """Communities in which workers pile up in a few accessible occupations.

    Every community has three kinds of occupation:

    * condensers: large, reached from the whole community, with only a
      couple of exits to other condensers;
    * channels: small, fed only by bridges, leading back to condensers;
    * bridges: small and rarely entered, but with evenly spread exits to
      every condenser and channel of their own community and to the
      bridges of the next community.

    Skills follow the roles: condensers are most similar to channels, then
    to bridges, then to each other, so that the most similar unlinked
    destination of a condenser is a channel while a bridge is among its
    close alternatives.
    """
    rng = np.random.default_rng(seed)
    size = n_condensers + n_channels + n_bridges
    n = n_communities * size
    codes = _codes(n)
    role_of = ([CONDENSER] * n_condensers + [CHANNEL] * n_channels
               + [BRIDGE] * n_bridges) * n_communities
    comm = np.repeat(np.arange(n_communities), size)
    members = {(k, r): [i for i in range(n) if comm[i] == k and role_of[i] == r]
               for k in range(n_communities) for r in (CONDENSER, CHANNEL, BRIDGE)}
    W = np.zeros((n, n), dtype=np.int64)  # [dest, origin]

    def link(dest, origin, lo, hi):
        W[dest, origin] = rng.integers(lo, hi + 1)

    for k in range(n_communities):
        cond, chan, brid = (members[k, r] for r in (CONDENSER, CHANNEL, BRIDGE))
        for pos, j in enumerate(cond):
            for step in (1, 2):
                link(cond[(pos + step) % len(cond)], j, 40, 60)
        for pos, j in enumerate(chan):
            for step in (0, 1):
                link(cond[(pos * 3 + step) % len(cond)], j, 20, 30)
        nxt = (k + 1) % n_communities
        for j in brid:
            for i in cond + chan:
                link(i, j, 6, 8)
            if nxt != k:
                for i in members[nxt, BRIDGE]:
                    link(i, j, 6, 8)
    W = _with_stayers(W, 0.5)
    flows = FlowCounts.from_matrix(codes, W)

    skill_names = ([f"core{k}" for k in range(n_communities)]
                   + ["task_condenser", "task_bridge"] + [f"own{i:04d}" for i in range(n)])
    S = np.zeros((n, len(skill_names)))
    profile = {CONDENSER: (1.0, 0.0, 0.5), CHANNEL: (1.2, 0.0, 0.1), BRIDGE: (1.0, 0.4, 0.1)}
    for i in range(n):
        task_c, task_b, own = profile[role_of[i]]
        S[i, comm[i]] = 1.0
        S[i, n_communities] = task_c
        S[i, n_communities + 1] = task_b
        S[i, n_communities + 2 + i] = own * (1.0 + 0.01 * rng.random())
    skills = SkillMatrix(codes, tuple(skill_names), S)
    return CondensationFixture(flows, skills, dict(zip(codes, comm.tolist())),
                               dict(zip(codes, role_of)))


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n: int
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; choose from {KINDS}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        for key in ("p_in", "p_out"):
            if key in self.params:
                _check_prob(key, self.params[key])

    def generate(self, base: FlowCounts | None = None) -> FlowCounts:
        p = dict(self.params)
        if self.kind == "planted_blocks":
            return planted_blocks(self.n, p.pop("c", 2), p.pop("p_in", 0.9),
                                  p.pop("p_out", 0.05), self.seed, **p)
        if self.kind == "nested":
            return nested_flow(self.n, p.pop("gamma", 8.0), self.seed, **p)
        if self.kind == "uniform":
            return uniform_flow(self.n, self.seed, **p)
        if self.kind == "condensation":
            return condensation_fixture(seed=self.seed, **p).flows
        if base is None:
            base = nested_flow(self.n, seed=self.seed)
        return degree_preserving_null(base, p.pop("n_swaps", 10 * self.n), self.seed)


def random_skills(codes, n_skills: int = 30, density: float = 0.3, seed: int = 0) -> SkillMatrix:
    """Binary skill vectors with independent entries; every occupation gets
    at least one skill."""
    _check_prob("density", density)
    rng = np.random.default_rng(seed)
    codes = tuple(codes)
    S = (rng.random((len(codes), n_skills)) < density).astype(float)
    for k in np.flatnonzero(~S.any(axis=1)):
        S[k, rng.integers(n_skills)] = 1.0
    return SkillMatrix(codes, tuple(f"s{j:03d}" for j in range(n_skills)), S)
