import math

import numpy as np
import pytest
from conftest import as_matrix, random_stochastic
from hypothesis import given, settings
from hypothesis import strategies as st

from laborflow.community import CommunityAssignment
from laborflow.flowmatrix import (
    ENTRY,
    EXIT,
    SELF_LOOPS_EXCLUDED,
    FlowCounts,
    IngestError,
    TransitionMatrix,
    build_transition_matrix,
    entry_exit_shares,
    ingest_counts,
    read_flow_csv,
    read_matrix_csv,
    strip_self_loops,
    temporal_stability,
    write_flow_csv,
    write_matrix_csv,
)

# ---------------------------------------------------------------- ingestion

def test_ingest_aggregates_repeated_pairs():
    flows = ingest_counts([("A", "B", 5), ("A", "B", 3)])
    idx = flows.index()
    assert flows.counts[idx["B"], idx["A"]] == 8
    assert flows.counts.sum() == 8


def test_ingest_routes_sentinels():
    flows = ingest_counts([(ENTRY, "A", 4)])
    assert flows.codes == ("A",)
    assert flows.entry_counts.tolist() == [4]
    assert flows.counts.sum() == 0
    flows = ingest_counts([("A", EXIT, 2), ("A", "B", 1)])
    assert flows.exit_counts[flows.index()["A"]] == 2


def test_ingest_three_occupation_fixture_matches_hand_table(tmp_path):
    path = tmp_path / "flows.csv"
    path.write_text(
        "origin,destination,count\n"
        "A,A,10\n"
        "A,B,3\n"
        "B,C,4\n"
        "C,A,2\n"
        "B,C,1\n"
        "ENTRY,C,7\n"
    )
    flows = read_flow_csv(path)
    assert flows.codes == ("A", "B", "C")
    # rows = destination, columns = origin
    expected = np.array([[10, 0, 2],
                         [3, 0, 0],
                         [0, 5, 0]])
    np.testing.assert_array_equal(flows.counts, expected)
    assert flows.entry_counts.tolist() == [0, 0, 7]
    assert flows.exit_counts.tolist() == [0, 0, 0]


@pytest.mark.parametrize("row, fragment", [
    (("A", "B", -1), "negative"),
    (("A", "B"), "expected 3 or 4"),
    (("A", "B", "x"), "not an integer"),
    (("", "B", 1), "empty"),
    ((EXIT, "B", 1), "EXIT"),
])
def test_ingest_rejects_bad_rows_with_index(row, fragment):
    with pytest.raises(IngestError) as err:
        ingest_counts([("A", "B", 1), row])
    assert err.value.row == 1
    assert fragment in str(err.value)


def test_read_flow_csv_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("origin,destination,count\nA,B,1\nA,B,-3\n")
    with pytest.raises(IngestError) as err:
        read_flow_csv(path)
    assert err.value.row == 3


def test_reserved_codes_rejected_as_occupations():
    with pytest.raises(ValueError):
        FlowCounts.from_matrix(["A", "ENTRY"], np.zeros((2, 2)))


def test_groups_are_tallied_separately():
    flows = ingest_counts([("A", "B", 2, "2019"), ("A", "B", 5, "2020"), ("B", "A", 1, "2020")])
    assert sorted(flows.tags) == ["2019", "2020"]
    assert flows.tags["2019"].counts.sum() == 2
    assert flows.tags["2020"].counts.sum() == 6
    assert flows.counts.sum() == 8


def test_flow_csv_round_trip(tmp_path):
    flows = ingest_counts([("A", "B", 2, "g1"), ("B", "A", 5, "g2"), (ENTRY, "A", 3, "g1"),
                           ("B", EXIT, 4, "g2"), ("A", "A", 7, "g1")])
    path = tmp_path / "f.csv"
    write_flow_csv(flows, path, with_groups=True)
    back = read_flow_csv(path)
    np.testing.assert_array_equal(back.counts, flows.counts)
    np.testing.assert_array_equal(back.entry_counts, flows.entry_counts)
    np.testing.assert_array_equal(back.exit_counts, flows.exit_counts)
    assert sorted(back.tags) == ["g1", "g2"]


rows_strategy = st.lists(
    st.tuples(st.sampled_from(["A", "B", "C", "D", ENTRY]),
              st.sampled_from(["A", "B", "C", "D", EXIT]),
              st.integers(0, 50)).filter(lambda r: not (r[0] == ENTRY and r[1] == EXIT)),
    min_size=1, max_size=30)


@settings(max_examples=60, deadline=None)
@given(rows=rows_strategy, data=st.data())
def test_ingest_is_order_independent(rows, data):
    if all(o == ENTRY and d == EXIT for o, d, _ in rows):
        return
    perm = data.draw(st.permutations(rows))
    a, b = ingest_counts(rows), ingest_counts(perm)
    assert a.codes == b.codes
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.entry_counts, b.entry_counts)
    np.testing.assert_array_equal(a.exit_counts, b.exit_counts)


# ------------------------------------------------------- matrix construction

def test_theta_zero_is_pure_normalization():
    counts = np.array([[4, 5], [6, 15]])  # column sums 10, 20
    P = build_transition_matrix(FlowCounts.from_matrix("AB", counts), theta=0.0)
    np.testing.assert_allclose(P.probs, counts / np.array([10, 20]), rtol=0, atol=1e-15)
    assert P.theta == 0.0
    assert P.dangling_policy == "absorbing"


def test_default_theta_is_one_percent():
    counts = np.array([[990, 0], [1, 10]])  # 1 of 991 < 1% of the outflow
    P = build_transition_matrix(FlowCounts.from_matrix("AB", counts))
    assert P.theta == 0.01
    assert P.probs[1, 0] == 0.0 and P.probs[0, 0] == 1.0


def _filter_oracle(counts, theta):
    counts = np.asarray(counts, dtype=float)
    n = counts.shape[0]
    out = np.zeros_like(counts)
    for j in range(n):
        total = sum(counts[i, j] for i in range(n))
        keep = [i for i in range(n) if counts[i, j] >= theta * total and counts[i, j] > 0]
        s = sum(counts[i, j] for i in keep)
        if s == 0:
            out[j, j] = 1.0
            continue
        for i in keep:
            out[i, j] = counts[i, j] / s
    return out


def test_four_node_filter_matches_brute_force():
    counts = np.array([[4, 1, 0, 0],
                       [2, 6, 3, 0],   # the weight-2 link out of A (outflow 10) is dropped
                       [3, 2, 5, 0],
                       [1, 0, 2, 0]])  # D has no outflow at all
    flows = FlowCounts.from_matrix("ABCD", counts)
    P = build_transition_matrix(flows, theta=0.25)
    assert P.probs[1, 0] == 0.0
    np.testing.assert_allclose(P.probs, _filter_oracle(counts, 0.25), rtol=0, atol=1e-15)
    assert P.dangling == ("D",)
    assert P.probs[3, 3] == 1.0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), theta=st.floats(0.0, 0.5))
def test_build_is_column_stochastic_and_matches_oracle(seed, theta):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 20, size=(6, 6)) * (rng.random((6, 6)) < 0.6)
    P = build_transition_matrix(FlowCounts.from_matrix("ABCDEF", counts), theta)
    assert np.max(np.abs(P.column_sums() - 1.0)) < 1e-12
    assert P.probs.min() >= 0 and P.probs.max() <= 1
    np.testing.assert_allclose(P.probs, _filter_oracle(counts, theta), rtol=0, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), t1=st.floats(0.0, 0.9), t2=st.floats(0.0, 0.9))
def test_raising_theta_never_adds_links(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    rng = np.random.default_rng(seed)
    flows = FlowCounts.from_matrix("ABCDE", rng.integers(0, 30, size=(5, 5)))

    def off_diag_links(theta):
        M = build_transition_matrix(flows, theta).probs.copy()
        np.fill_diagonal(M, 0)
        return np.count_nonzero(M)

    assert off_diag_links(hi) <= off_diag_links(lo)


def test_empty_occupation_set_rejected():
    with pytest.raises(ValueError):
        build_transition_matrix(FlowCounts.from_matrix([], np.zeros((0, 0))), 0.0)


def test_theta_out_of_range_rejected():
    flows = FlowCounts.from_matrix("AB", [[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        build_transition_matrix(flows, 1.0)


# ----------------------------------------------------------- self-loop strip

def test_strip_identity_reports_degenerate_columns():
    P = strip_self_loops(as_matrix(np.eye(2), "included"))
    assert np.all(P.probs == 0)
    assert P.degenerate == ("0000", "0001")
    assert P.self_loops == SELF_LOOPS_EXCLUDED


def test_strip_renormalizes_half_self_column():
    P = strip_self_loops(as_matrix([[0.5, 0.0], [0.5, 1.0]], "included"))
    np.testing.assert_array_equal(P.probs[:, 0], [0.0, 1.0])


def test_strip_matches_dense_recompute(rng):
    M = random_stochastic(5, rng)
    P = strip_self_loops(as_matrix(M, "included"))
    oracle = M.copy()
    for j in range(5):
        oracle[j, j] = 0.0
        oracle[:, j] = oracle[:, j] / oracle[:, j].sum()
    assert np.max(np.abs(P.probs - oracle)) <= 1e-15
    assert np.all(np.diag(P.probs) == 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_strip_is_idempotent(seed):
    M = random_stochastic(6, np.random.default_rng(seed), density=0.5)
    once = strip_self_loops(as_matrix(M, "included"))
    twice = strip_self_loops(once)
    np.testing.assert_array_equal(once.probs, twice.probs)
    forced = strip_self_loops(once.with_probs(once.probs, self_loops="included"))
    np.testing.assert_allclose(forced.probs, once.probs, rtol=0, atol=1e-15)


def test_matrix_csv_round_trip(tmp_path, rng):
    P = build_transition_matrix(FlowCounts.from_matrix("ABC", rng.integers(1, 9, (3, 3))), 0.1)
    sidecar = write_matrix_csv(P, tmp_path / "m.csv")
    assert sidecar.exists()
    back = read_matrix_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.probs, P.probs)
    assert back.theta == P.theta and back.codes == P.codes


# ------------------------------------------------------------- entry / exit

def _assignment(flows, labels):
    return CommunityAssignment.from_membership(flows, dict(zip(flows.codes, labels)))


def test_single_community_all_from_entry():
    flows = FlowCounts.from_matrix("AB", [[5, 0], [0, 5]], entry_counts=[3, 4])
    shares = entry_exit_shares(flows, {"A": 0, "B": 0})
    assert shares[0].inflow_from_outside_share == 1.0


def test_inflow_share_tuned_to_headline_value():
    # 473 entries against 527 network arrivals gives 47.3% from outside.
    counts = np.array([[100, 300], [227, 50]])
    flows = FlowCounts.from_matrix("AB", counts, entry_counts=[200, 273])
    shares = entry_exit_shares(flows, {"A": 0, "B": 0})
    assert abs(shares[0].inflow_from_outside_share - 0.473) <= 1e-12


def test_entry_exit_random_fixture_matches_hand_ratios(rng):
    counts = rng.integers(0, 40, size=(6, 6))
    entry = rng.integers(0, 30, size=6)
    exit_ = rng.integers(0, 30, size=6)
    flows = FlowCounts.from_matrix("ABCDEF", counts, entry, exit_)
    labels = [0, 0, 1, 1, 1, 2]
    shares = entry_exit_shares(flows, _assignment(flows, labels))
    for c in (0, 1, 2):
        members = [k for k, lab in enumerate(labels) if lab == c]
        arrivals = sum(counts[i, j] for i in members for j in range(6) if i != j)
        departures = sum(counts[i, j] for j in members for i in range(6) if i != j)
        ent = sum(entry[k] for k in members)
        ex = sum(exit_[k] for k in members)
        assert shares[c].inflow_from_outside_share == pytest.approx(ent / (ent + arrivals), abs=1e-15)
        assert shares[c].outflow_to_outside_share == pytest.approx(ex / (ex + departures), abs=1e-15)


def test_entry_exit_zero_flow_community_is_undefined():
    flows = FlowCounts.from_matrix("AB", [[3, 0], [0, 0]])
    shares = entry_exit_shares(flows, {"A": 0, "B": 1})
    assert math.isnan(shares[1].inflow_from_outside_share)
    assert math.isnan(shares[1].outflow_to_outside_share)


def test_entry_exit_requires_total_membership():
    flows = FlowCounts.from_matrix("AB", [[3, 0], [0, 0]])
    with pytest.raises(ValueError):
        entry_exit_shares(flows, {"A": 0})


# --------------------------------------------------------- temporal stability

def test_identical_years_give_zero_intercept_unit_slope(rng):
    P = as_matrix(random_stochastic(7, rng))
    res = temporal_stability({2018: P, 2019: P}, 2018)
    assert len(res.fits) == 7
    for fit in res.fits.values():
        assert abs(fit.alpha) <= 1e-12 and abs(fit.beta - 1) <= 1e-12


def test_exact_linear_map_gives_slope_two(rng):
    M = random_stochastic(5, rng)
    base = as_matrix(M, "included")
    doubled = TransitionMatrix.from_array(2 * M, codes=base.codes, self_loops="included")
    res = temporal_stability({0: base, 1: doubled}, 0)
    for fit in res.fits.values():
        assert fit.beta == pytest.approx(2.0, abs=1e-12)
        assert fit.alpha == pytest.approx(0.0, abs=1e-12)


def test_noisy_pair_matches_closed_form_ols(rng):
    M = random_stochastic(8, rng, density=0.6)
    noisy = np.clip(M + rng.normal(0, 0.02, M.shape) * (M > 0), 0, None)
    noisy[0, 1] = 0.05 if M[0, 1] == 0 else noisy[0, 1]  # a link present in one year only
    base = as_matrix(M, "included")
    other = TransitionMatrix.from_array(noisy, codes=base.codes, self_loops="included")
    res = temporal_stability({"a": base, "b": other}, "a")
    for i, code in enumerate(base.codes):
        pts = [(M[i, j], noisy[i, j]) for j in range(8) if M[i, j] or noisy[i, j]]
        if len(pts) < 2:
            continue
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        n = len(x)
        beta = (n * np.sum(x * y) - x.sum() * y.sum()) / (n * np.sum(x * x) - x.sum() ** 2)
        alpha = (y.sum() - beta * x.sum()) / n
        fit = res.fits[(code, "b")]
        assert fit.n_points == n
        assert abs(fit.beta - beta) <= 1e-10 and abs(fit.alpha - alpha) <= 1e-10


def test_too_few_points_are_flagged():
    M = np.array([[1.0, 0.0], [0.0, 1.0]])
    P = as_matrix(M, "included")
    res = temporal_stability({0: P, 1: P}, 0)
    assert res.fits == {}
    assert len(res.flagged) == 2


def test_missing_base_year_rejected(rng):
    P = as_matrix(random_stochastic(3, rng))
    with pytest.raises(KeyError):
        temporal_stability({1: P}, 0)
