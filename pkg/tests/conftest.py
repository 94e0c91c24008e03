"""Shared fixtures and small independent oracles for the test suite."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from laborflow.flowmatrix import TransitionMatrix


def random_stochastic(n: int, rng: np.random.Generator, density: float = 1.0,
                      self_loops: bool = True) -> np.ndarray:
    """Random column-stochastic matrix; every column keeps some support."""
    M = rng.random((n, n))
    if density < 1.0:
        M *= rng.random((n, n)) < density
    if not self_loops:
        np.fill_diagonal(M, 0.0)
    for j in range(n):
        if M[:, j].sum() == 0:
            i = (j + 1) % n if not self_loops else j
            M[i, j] = 1.0
    return M / M.sum(axis=0)


def as_matrix(probs, self_loops: str = "included") -> TransitionMatrix:
    return TransitionMatrix.from_array(probs, self_loops=self_loops)


def dense_stationary(P: np.ndarray) -> np.ndarray:
    """Oracle: eigenvector of the eigenvalue closest to 1."""
    w, v = np.linalg.eig(P)
    k = int(np.argmin(np.abs(w - 1.0)))
    x = np.real(v[:, k])
    return x / x.sum()


def dense_lambda2(P: np.ndarray) -> float:
    """Oracle: second-largest eigenvalue modulus."""
    mods = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
    return float(mods[1])


def strict_triangle(n: int) -> np.ndarray:
    """Binary upper-left triangle: row k has ``n - k`` ones."""
    return (np.add.outer(np.arange(n), np.arange(n)) < n).astype(int)


def nodf_oracle(M) -> float:
    """Brute force over all row and column pairs, larger fill first."""
    B = (np.asarray(M) != 0).astype(int)
    total = 0.0

    def lines(X):
        nonlocal total
        for a, b in itertools.combinations(range(X.shape[0]), 2):
            fa, fb = X[a].sum(), X[b].sum()
            if fa == fb:
                continue
            hi, lo = (a, b) if fa > fb else (b, a)
            if X[lo].sum() == 0:
                continue
            shared = sum(1 for k in range(X.shape[1]) if X[lo, k] and X[hi, k])
            total += 100.0 * shared / X[lo].sum()

    lines(B)
    lines(B.T)
    n, m = B.shape
    return total / (n * (n - 1) / 2 + m * (m - 1) / 2)


DYADIC = [Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(3, 8)]


def random_dyadic_graph(n: int, rng) -> list[list[Fraction]]:
    """``P[dest][origin]`` with probabilities from a small dyadic set, so
    that path probabilities are exact and ties really occur."""
    P = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < 0.45:
                P[i][j] = DYADIC[rng.integers(len(DYADIC))]
    return P


def simple_paths(P, s, t):
    n = len(P)
    stack = [(s, [s])]
    while stack:
        v, path = stack.pop()
        for w in range(n):
            if P[w][v] and w not in path:
                if w == t:
                    yield path + [w]
                else:
                    stack.append((w, path + [w]))


def path_prob(P, path) -> Fraction:
    out = Fraction(1)
    for a, b in itertools.pairwise(path):
        out *= P[b][a]
    return out


def brute_force_centrality(P):
    """Betweenness and closeness by enumerating every simple path; the
    shortest path is the most probable one, decided in exact arithmetic."""
    n = len(P)
    bc = [Fraction(0)] * n
    dist = np.full((n, n), np.inf)
    for s, t in itertools.permutations(range(n), 2):
        paths = list(simple_paths(P, s, t))
        if not paths:
            continue
        probs = [path_prob(P, p) for p in paths]
        best = max(probs)
        shortest = [p for p, q in zip(paths, probs) if q == best]
        dist[s, t] = -math.log(float(best))
        for v in range(n):
            through = sum(1 for p in shortest if v in p[1:-1])
            bc[v] += Fraction(through, len(shortest))
    norm = (n - 1) * (n - 2) if n > 2 else 1
    bc = np.array([float(b / norm) for b in bc])
    close = np.zeros(n)
    for s in range(n):
        reach = np.isfinite(dist[s])
        if reach.any():
            close[s] = reach.sum() / dist[s, reach].sum()
    return bc, close


def to_array(P) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in P])


def rank_oracle(x):
    return np.array([1 + sum(v < xi for v in x) + (sum(v == xi for v in x) - 1) / 2 for xi in x])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one (name, passed) entry per acceptance criterion, printed after the run
CRITERIA: list[tuple[str, bool]] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, ok in CRITERIA:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}")
