"""Flow-count ingestion, transition-matrix construction and flow statistics.

Orientation convention used throughout the package: matrices are indexed
``(destination, origin)``, so entry ``[i, j]`` is the flow (or probability)
of moving from occupation ``j`` into occupation ``i`` and every column of a
transition matrix with any support sums to one.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Hashable, Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from .community import CommunityAssignment

ENTRY = "ENTRY"
EXIT = "EXIT"
SENTINELS = frozenset({ENTRY, EXIT})

SELF_LOOPS_INCLUDED = "included"
SELF_LOOPS_EXCLUDED = "excluded"


class IngestError(ValueError):
    """A flow record could not be ingested.

    ``row`` is the zero-based record index (or the line number when reading
    a CSV file, see :func:`read_flow_csv`).
    """

    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


@dataclass(frozen=True, order=True)
class OccupationId:
    code: str
    label: str | None = field(default=None, compare=False)

    def __str__(self) -> str:
        return self.code


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FlowCounts:
    """Raw transition counts between occupations.

    ``counts[i, j]`` is the number of workers moving from occupation ``j``
    to occupation ``i``; the diagonal holds stayers. ``entry_counts`` and
    ``exit_counts`` are flows from and to outside the occupational network.
    """

    occupations: tuple[OccupationId, ...]
    counts: np.ndarray
    entry_counts: np.ndarray
    exit_counts: np.ndarray
    tags: Mapping[str, FlowCounts] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.occupations)
        counts = np.asarray(self.counts)
        if counts.shape != (n, n):
            raise ValueError(f"counts must be {n}x{n}, got {counts.shape}")
        for name in ("counts", "entry_counts", "exit_counts"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.size and arr.min() < 0:
                raise ValueError(f"{name} must be nonnegative")
            object.__setattr__(self, name, _freeze(arr))
        if self.entry_counts.shape != (n,) or self.exit_counts.shape != (n,):
            raise ValueError("entry/exit counts must have one entry per occupation")
        codes = self.codes
        if len(set(codes)) != n:
            raise ValueError("occupation codes must be unique")
        if SENTINELS & set(codes):
            raise ValueError("ENTRY/EXIT are reserved codes")

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(o.code for o in self.occupations)

    @property
    def n(self) -> int:
        return len(self.occupations)

    def index(self) -> dict[str, int]:
        return {c: k for k, c in enumerate(self.codes)}

    @classmethod
    def from_matrix(cls, codes: Iterable[str], counts, entry_counts=None,
                    exit_counts=None) -> FlowCounts:
        occupations = tuple(OccupationId(str(c)) for c in codes)
        n = len(occupations)
        zeros = np.zeros(n, dtype=np.int64)
        return cls(
            occupations=occupations,
            counts=np.asarray(counts, dtype=np.int64),
            entry_counts=zeros if entry_counts is None else entry_counts,
            exit_counts=zeros if exit_counts is None else exit_counts,
        )


@dataclass(frozen=True)
class TransitionMatrix:
    """Column-stochastic transition probabilities, ``probs[dest, origin]``.

    ``dangling`` lists origins that had no outflow left after filtering and
    were made absorbing. ``degenerate`` lists origins whose column became
    all-zero when self-loops were stripped.
    """

    occupations: tuple[OccupationId, ...]
    probs: np.ndarray
    theta: float = 0.0
    self_loops: str = SELF_LOOPS_INCLUDED
    dangling_policy: str = "absorbing"
    dangling: tuple[str, ...] = ()
    degenerate: tuple[str, ...] = ()

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        n = len(self.occupations)
        if probs.shape != (n, n):
            raise ValueError(f"probs must be {n}x{n}, got {probs.shape}")
        if self.self_loops not in (SELF_LOOPS_INCLUDED, SELF_LOOPS_EXCLUDED):
            raise ValueError(f"unknown self_loops mode {self.self_loops!r}")
        object.__setattr__(self, "probs", _freeze(probs))

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(o.code for o in self.occupations)

    @property
    def n(self) -> int:
        return len(self.occupations)

    def index(self) -> dict[str, int]:
        return {c: k for k, c in enumerate(self.codes)}

    def column_sums(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def with_probs(self, probs, **changes) -> TransitionMatrix:
        fields = {
            "occupations": self.occupations, "theta": self.theta,
            "self_loops": self.self_loops, "dangling_policy": self.dangling_policy,
            "dangling": self.dangling, "degenerate": self.degenerate,
        }
        fields.update(changes)
        return TransitionMatrix(probs=probs, **fields)

    @classmethod
    def from_array(cls, probs, codes: Iterable[str] | None = None,
                   self_loops: str | None = None) -> TransitionMatrix:
        """Wrap an existing probability array (no renormalization)."""
        probs = np.asarray(probs, dtype=float)
        if codes is None:
            codes = [f"{k:04d}" for k in range(probs.shape[0])]
        if self_loops is None:
            self_loops = (SELF_LOOPS_EXCLUDED if not np.any(np.diag(probs))
                          else SELF_LOOPS_INCLUDED)
        return cls(tuple(OccupationId(str(c)) for c in codes), probs,
                   self_loops=self_loops)


def _parse_row(idx: int, row) -> tuple[str, str, int, str | None]:
    if isinstance(row, Mapping):
        try:
            origin, dest, count = row["origin"], row["destination"], row["count"]
        except KeyError as exc:
            raise IngestError(idx, f"missing field {exc.args[0]!r}") from None
        group = row.get("group") or None
    else:
        row = tuple(row)
        if len(row) not in (3, 4):
            raise IngestError(idx, f"expected 3 or 4 fields, got {len(row)}")
        origin, dest, count = row[:3]
        group = row[3] if len(row) == 4 and row[3] not in ("", None) else None
    origin = "" if origin is None else str(origin).strip()
    dest = "" if dest is None else str(dest).strip()
    if not origin or not dest:
        raise IngestError(idx, "empty occupation code")
    try:
        if isinstance(count, str):
            count = count.strip()
            value = int(count)
        elif isinstance(count, (int, np.integer)) or (
                isinstance(count, float) and count.is_integer()):
            value = int(count)
        else:
            raise ValueError
    except (TypeError, ValueError):
        raise IngestError(idx, f"count {count!r} is not an integer") from None
    if value < 0:
        raise IngestError(idx, f"negative count {value}")
    if origin == EXIT or dest == ENTRY:
        raise IngestError(idx, "EXIT may only be a destination and ENTRY only an origin")
    if origin == ENTRY and dest == EXIT:
        raise IngestError(idx, "ENTRY -> EXIT flow does not touch the network")
    return origin, dest, value, None if group is None else str(group)


def ingest_counts(rows: Iterable, *, start: int = 0) -> FlowCounts:
    """Aggregate ``(origin, destination, count[, group])`` records.

    Records may be tuples or mappings with the same keys. Flows from
    ``ENTRY`` and to ``EXIT`` are routed to the entry/exit tallies. Grouped
    records are additionally tallied per group into ``tags``; every tag
    shares the full occupation set. ``start`` offsets the row index used in
    error messages.
    """
    parsed = [_parse_row(start + k, row) for k, row in enumerate(rows)]
    codes = sorted({c for o, d, _, _ in parsed for c in (o, d)} - SENTINELS)
    if not codes:
        raise IngestError(start, "no occupations found")
    pos = {c: k for k, c in enumerate(codes)}
    n = len(codes)

    def tally(records):
        counts = np.zeros((n, n), dtype=np.int64)
        entry = np.zeros(n, dtype=np.int64)
        exit_ = np.zeros(n, dtype=np.int64)
        for origin, dest, value, _ in records:
            if origin == ENTRY:
                entry[pos[dest]] += value
            elif dest == EXIT:
                exit_[pos[origin]] += value
            else:
                counts[pos[dest], pos[origin]] += value
        return counts, entry, exit_

    occupations = tuple(OccupationId(c) for c in codes)
    groups = sorted({g for *_, g in parsed if g is not None})
    tags = {}
    for g in groups:
        c, e, x = tally(r for r in parsed if r[3] == g)
        tags[g] = FlowCounts(occupations, c, e, x)
    counts, entry, exit_ = tally(parsed)
    return FlowCounts(occupations, counts, entry, exit_, tags)


def read_flow_csv(path: str | Path) -> FlowCounts:
    """Read a flow CSV with header ``origin,destination,count[,group]``.

    Errors report the 1-based line number of the offending row.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(1, f"{path}: empty file") from None
        if header[:3] != ["origin", "destination", "count"] or len(header) > 4 \
                or (len(header) == 4 and header[3] != "group"):
            raise IngestError(1, f"{path}: bad header {','.join(header)!r}")
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    return ingest_counts(rows, start=2)


def write_flow_csv(flows: FlowCounts, path: str | Path, *, with_groups: bool = False):
    """Write flows back in the ingest format (rows in code order)."""
    codes = flows.codes
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if with_groups and flows.tags:
            w.writerow(["origin", "destination", "count", "group"])
            parts = sorted(flows.tags.items())
        else:
            w.writerow(["origin", "destination", "count"])
            parts = [(None, flows)]
        for group, f in parts:
            extra = [] if group is None else [group]
            for j, origin in enumerate(codes):
                for i, dest in enumerate(codes):
                    if f.counts[i, j]:
                        w.writerow([origin, dest, int(f.counts[i, j]), *extra])
            for k, code in enumerate(codes):
                if f.entry_counts[k]:
                    w.writerow([ENTRY, code, int(f.entry_counts[k]), *extra])
                if f.exit_counts[k]:
                    w.writerow([code, EXIT, int(f.exit_counts[k]), *extra])


def build_transition_matrix(counts: FlowCounts, theta: float = 0.01) -> TransitionMatrix:
    """Filter weak links and normalize columns to transition probabilities.

    A link ``j -> i`` is dropped when its count is below ``theta`` times the
    total outflow of ``j`` (stayers included). Origins left without any
    outflow become absorbing (unit self-loop) and are listed in
    ``dangling``.
    """
    if counts.n == 0:
        raise ValueError("empty occupation set")
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    raw = counts.counts.astype(float)
    outflow = raw.sum(axis=0)
    kept = np.where(raw >= theta * outflow[None, :], raw, 0.0)
    remaining = kept.sum(axis=0)
    dangling = remaining == 0
    probs = np.divide(kept, remaining[None, :], out=np.zeros_like(kept),
                      where=~dangling[None, :])
    idx = np.flatnonzero(dangling)
    probs[idx, idx] = 1.0
    return TransitionMatrix(
        occupations=counts.occupations,
        probs=probs,
        theta=float(theta),
        self_loops=SELF_LOOPS_INCLUDED,
        dangling=tuple(counts.codes[k] for k in idx),
    )


def strip_self_loops(P: TransitionMatrix) -> TransitionMatrix:
    """Condition on moving: zero the diagonal and renormalize each column.

    Columns that carried only self-loop mass become all-zero and are
    reported in ``degenerate``. Already-stripped matrices are returned
    unchanged.
    """
    if P.self_loops == SELF_LOOPS_EXCLUDED:
        return P
    probs = np.array(P.probs, dtype=float)
    np.fill_diagonal(probs, 0.0)
    sums = probs.sum(axis=0)
    empty = sums == 0
    probs = np.divide(probs, sums[None, :], out=np.zeros_like(probs),
                      where=~empty[None, :])
    return P.with_probs(
        probs,
        self_loops=SELF_LOOPS_EXCLUDED,
        degenerate=tuple(c for c, e in zip(P.codes, empty) if e),
    )


@dataclass(frozen=True)
class EntryExitShare:
    community: int
    inflow_from_outside_share: float
    outflow_to_outside_share: float
    entries: int
    exits: int
    arrivals: int
    departures: int


def entry_exit_shares(counts: FlowCounts, communities: CommunityAssignment
                      ) -> dict[int, EntryExitShare]:
    """Share of each community's arrivals (departures) that come from
    (go to) outside the occupational network.

    Arrivals are all occupation-to-occupation moves into a member, whether
    from inside or outside the community; stayers are not transitions and
    are left out. Communities with no flow get NaN shares.
    """
    labels = _labels_for(counts.codes, communities)
    moves = np.array(counts.counts, dtype=np.int64)
    np.fill_diagonal(moves, 0)
    arrivals_per = moves.sum(axis=1)
    departures_per = moves.sum(axis=0)
    out = {}
    for c in sorted(set(labels.tolist())):
        mask = labels == c
        entries = int(counts.entry_counts[mask].sum())
        exits = int(counts.exit_counts[mask].sum())
        arrivals = int(arrivals_per[mask].sum())
        departures = int(departures_per[mask].sum())
        inflow = entries / (entries + arrivals) if entries + arrivals else math.nan
        outflow = exits / (exits + departures) if exits + departures else math.nan
        out[c] = EntryExitShare(c, inflow, outflow, entries, exits, arrivals, departures)
    return out


def _labels_for(codes, communities) -> np.ndarray:
    membership = getattr(communities, "membership", communities)
    missing = [c for c in codes if c not in membership]
    if missing:
        raise ValueError(f"occupations without a community: {missing[:10]}")
    return np.array([membership[c] for c in codes], dtype=np.int64)


@dataclass(frozen=True)
class StabilityFit:
    alpha: float
    beta: float
    n_points: int


@dataclass
class StabilityCoefficients:
    """OLS fits of year-``t`` transition rates on base-year rates.

    ``fits`` is keyed by ``(occupation code, year)``; pairs where no fit was
    possible are listed in ``flagged`` with a reason.
    """

    base_year: Hashable
    fits: dict[tuple[str, Hashable], StabilityFit]
    flagged: list[tuple[str, Hashable, str]]

    def betas(self, year: Hashable) -> dict[str, float]:
        return {code: f.beta for (code, t), f in self.fits.items() if t == year}


def temporal_stability(matrices: Mapping[Hashable, TransitionMatrix],
                       base_year: Hashable) -> StabilityCoefficients:
    """Regress each occupation's yearly inflow rates on the base year.

    For destination ``i`` and year ``t`` the points are ``(P_base[i, j],
    P_t[i, j])`` over all origins ``j`` linked to ``i`` in either year.
    """
    if base_year not in matrices:
        raise KeyError(f"base year {base_year!r} not in matrices")
    base = matrices[base_year]
    for year, m in matrices.items():
        if m.codes != base.codes:
            raise ValueError(f"year {year!r} has a different occupation set")
    fits, flagged = {}, []
    X = base.probs
    for year, m in matrices.items():
        if year == base_year:
            continue
        Y = m.probs
        for i, code in enumerate(base.codes):
            mask = (X[i] != 0) | (Y[i] != 0)
            x, y = X[i, mask], Y[i, mask]
            npts = int(mask.sum())
            if npts < 2:
                flagged.append((code, year, f"only {npts} linked origin(s)"))
                continue
            dx = x - x.mean()
            sxx = float(dx @ dx)
            if sxx == 0.0:
                flagged.append((code, year, "base-year rates are constant"))
                continue
            beta = float(dx @ (y - y.mean())) / sxx
            alpha = float(y.mean() - beta * x.mean())
            fits[(code, year)] = StabilityFit(alpha, beta, npts)
    return StabilityCoefficients(base_year, fits, flagged)


def write_matrix_csv(P: TransitionMatrix, path: str | Path):
    """Write ``probs`` with one row per destination and a JSON sidecar."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["destination", *P.codes])
        for code, row in zip(P.codes, P.probs):
            w.writerow([code, *(repr(float(v)) for v in row)])
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(matrix_metadata(P), indent=2, sort_keys=True) + "\n")
    return sidecar


def matrix_metadata(P: TransitionMatrix) -> dict[str, Any]:
    return {
        "occupations": list(P.codes),
        "theta": P.theta,
        "self_loops": P.self_loops,
        "dangling_policy": P.dangling_policy,
        "dangling_columns": list(P.dangling),
        "degenerate_columns": list(P.degenerate),
    }


def read_matrix_csv(path: str | Path) -> TransitionMatrix:
    """Inverse of :func:`write_matrix_csv` (the sidecar is optional)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    codes = rows[0][1:]
    if [r[0] for r in rows[1:]] != codes:
        raise ValueError(f"{path}: row labels do not match column labels")
    probs = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    meta = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return TransitionMatrix(
        occupations=tuple(OccupationId(c) for c in codes),
        probs=probs,
        theta=meta.get("theta", 0.0),
        self_loops=meta.get("self_loops", SELF_LOOPS_INCLUDED),
        dangling=tuple(meta.get("dangling_columns", ())),
        degenerate=tuple(meta.get("degenerate_columns", ())),
    )
