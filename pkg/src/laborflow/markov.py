"""Steady-state analysis of a column-stochastic transition matrix."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .flowmatrix import SELF_LOOPS_INCLUDED, TransitionMatrix


class ConvergenceWarning(RuntimeWarning):
    pass


class ReducibleChainWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class StationaryResult:
    vector: np.ndarray
    iterations: int
    converged: bool
    closed_classes: tuple[tuple[str, ...], ...]


def _as_probs(P) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(P, TransitionMatrix):
        if P.self_loops != SELF_LOOPS_INCLUDED:
            raise ValueError("steady-state analysis needs the matrix with self-loops")
        return np.asarray(P.probs, dtype=float), P.codes
    probs = np.asarray(P, dtype=float)
    return probs, tuple(f"{k:04d}" for k in range(probs.shape[0]))


def closed_classes(probs: np.ndarray, codes) -> tuple[tuple[str, ...], ...]:
    """Closed communicating classes of the chain (``probs[dest, origin]``).

    A stationary distribution is unique exactly when there is one.
    """
    adj = (probs.T > 0).astype(np.int8)  # adj[origin, dest]
    ncomp, comp = connected_components(adj, directed=True, connection="strong")
    leaves = np.ones(ncomp, dtype=bool)
    src, dst = np.nonzero(adj)
    leaves[comp[src][comp[src] != comp[dst]]] = False
    return tuple(
        tuple(codes[k] for k in np.flatnonzero(comp == c))
        for c in range(ncomp) if leaves[c]
    )


def power_iteration(P, tol: float = 1e-12, max_iter: int = 10**6) -> StationaryResult:
    """Lazy power iteration ``x <- (x + P x) / 2`` from the uniform vector.

    The lazy chain has the same stationary vector as ``P`` but no periodic
    eigenvalues on the unit circle other than 1, so it also converges on
    periodic chains. Iteration stops once the max-norm change is below
    ``tol`` and a geometric extrapolation of the remaining error is too.
    """
    probs, codes = _as_probs(P)
    n = probs.shape[0]
    x = np.full(n, 1.0 / n)
    prev_change = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y = 0.5 * (x + probs @ x)
        y /= y.sum()
        change = float(np.max(np.abs(y - x)))
        x = y
        if change < tol:
            rate = min(change / prev_change, 1.0 - 1e-6) if prev_change else 0.0
            if change * rate / (1.0 - rate) < tol:
                converged = True
                break
        prev_change = change
    return StationaryResult(x, it, converged, closed_classes(probs, codes))


def stationary_distribution(P, tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """Stationary distribution of ``P`` (sums to one).

    Warns with :class:`ConvergenceWarning` when the iteration cap is hit and
    with :class:`ReducibleChainWarning` when the chain has several closed
    classes, in which case the result depends on the uniform start.
    """
    res = power_iteration(P, tol=tol, max_iter=max_iter)
    if not res.converged:
        warnings.warn(f"power iteration did not converge in {res.iterations} steps",
                      ConvergenceWarning, stacklevel=2)
    if len(res.closed_classes) > 1:
        blocks = "; ".join(",".join(b) for b in res.closed_classes)
        warnings.warn(f"reducible chain with closed classes: {blocks}",
                      ReducibleChainWarning, stacklevel=2)
    return res.vector


def second_eigenvalue_modulus(P, stationary: np.ndarray | None = None, *,
                              block: int = 10, tol: float = 1e-14,
                              max_iter: int = 200_000) -> float:
    """``|lambda_2|`` by deflated subspace iteration.

    Deflation removes the unit eigenvalue: with ``x`` the stationary vector
    and ``1`` the left unit eigenvector, ``B = P - x 1^T`` keeps every other
    eigenvalue of ``P``. Orthogonal iteration on a small block of vectors
    followed by Rayleigh-Ritz handles complex-conjugate pairs, which a
    single-vector power iteration cannot resolve. Two-state chains use the
    closed form ``|1 - P[1, 0] - P[0, 1]|``.
    """
    probs, _ = _as_probs(P)
    n = probs.shape[0]
    if n == 1:
        return 0.0
    if n == 2:  # the eigenvalues are 1 and the trace minus 1
        return float(abs(1.0 - probs[1, 0] - probs[0, 1]))
    if stationary is None:
        stationary = power_iteration(P).vector
    B = probs - np.outer(stationary, np.ones(n))
    p = min(n, block)
    rng = np.random.default_rng(0)
    V, _ = np.linalg.qr(rng.standard_normal((n, p)))
    prev, stable = None, 0
    radius = 0.0
    for _ in range(max_iter):
        V, _ = np.linalg.qr(B @ V)
        H = V.T @ B @ V
        radius = float(np.max(np.abs(np.linalg.eigvals(H))))
        if prev is not None and abs(radius - prev) <= tol * max(1.0, radius):
            stable += 1
            if stable >= 3:
                break
        else:
            stable = 0
        prev = radius
    return min(radius, 1.0)


def halftime(lambda2_modulus: float) -> float:
    """Convergence half-time ``1 / (1 - |lambda_2|)`` in periods."""
    if lambda2_modulus >= 1.0 - 1e-12:
        return math.inf
    return 1.0 / (1.0 - lambda2_modulus)


def spectral_gap(P, stationary: np.ndarray | None = None) -> tuple[float, float]:
    """Return ``(|lambda_2|, halftime)``; halftime is infinite when
    ``|lambda_2|`` is within 1e-12 of one."""
    lam = second_eigenvalue_modulus(P, stationary)
    if lam >= 1.0 - 1e-12:
        lam = 1.0
    return lam, halftime(lam)


@dataclass(frozen=True)
class SteadyStateReport:
    occupations: tuple[str, ...]
    stationary: np.ndarray
    observed: np.ndarray
    lambda2_modulus: float
    halftime: float
    deviations: np.ndarray
    share_exceeding_10pct: float
    converged: bool
    closed_classes: tuple[tuple[str, ...], ...]

    def to_dict(self) -> dict:
        return {
            "occupations": list(self.occupations),
            "stationary": self.stationary.tolist(),
            "observed": self.observed.tolist(),
            "lambda2": self.lambda2_modulus,
            "halftime": self.halftime,
            "deviations": self.deviations.tolist(),
            "share_exceeding_10pct": self.share_exceeding_10pct,
            "converged": self.converged,
            "closed_classes": [list(c) for c in self.closed_classes],
        }


def percent_deviation(observed, stationary) -> np.ndarray:
    """``100 (x - xbar) / xbar``, NaN where ``xbar`` is zero."""
    observed = np.asarray(observed, dtype=float)
    stationary = np.asarray(stationary, dtype=float)
    out = np.full(observed.shape, np.nan)
    ok = stationary != 0
    out[ok] = 100.0 * (observed[ok] - stationary[ok]) / stationary[ok]
    return out


def deviation_report(observed_shares, P) -> SteadyStateReport:
    """Compare observed occupation shares with the implied steady state."""
    observed = np.asarray(observed_shares, dtype=float)
    if abs(observed.sum() - 1.0) > 1e-9:
        raise ValueError(f"observed shares sum to {observed.sum()}, not 1")
    probs, codes = _as_probs(P)
    if observed.shape != (probs.shape[0],):
        raise ValueError("observed shares must have one entry per occupation")
    res = power_iteration(P)
    if len(res.closed_classes) > 1:
        blocks = "; ".join(",".join(b) for b in res.closed_classes)
        warnings.warn(f"reducible chain with closed classes: {blocks}",
                      ReducibleChainWarning, stacklevel=2)
    lam, half = spectral_gap(P, res.vector)
    dev = percent_deviation(observed, res.vector)
    defined = ~np.isnan(dev)
    share = float(np.mean(np.abs(dev[defined]) > 10.0)) if defined.any() else math.nan
    return SteadyStateReport(codes, res.vector, observed, lam, half, dev, share,
                             res.converged, res.closed_classes)


def observed_shares(flows) -> np.ndarray:
    """Employment shares at the end of the period: workers arriving in or
    staying in each occupation, normalized to one."""
    size = np.asarray(flows.counts, dtype=float).sum(axis=1)
    return size / size.sum()
