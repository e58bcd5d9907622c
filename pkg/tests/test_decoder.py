import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import Instance, desk_params
from pooldec.decoder import (
    DecoderState,
    Thresholds,
    classify,
    compartment_scores,
    decode,
    expectation_estimate,
    expectation_formula,
    score,
    threshold_values,
    thresholds,
    unexplained_sum,
    unexplained_sums,
)
from pooldec.design import DesignParams, Overrides, PoolingDesign, build_design, derive_params, stream
from pooldec.signal import make_signal, measure, sample_signal


def one_pool_design(labels, members):
    n = len(labels)
    p = DesignParams(n=n, counts=(1, 1), c=1, overrides=Overrides(ell=1, s=1, m=1, gamma=len(members)))
    D = PoolingDesign(p, derive_params(p), np.array([sorted(members)]))
    return p, D, make_signal(D, np.array(labels))


# -- thresholds and classification -------------------------------------------------


def test_threshold_values_quarter():
    th = threshold_values(theta=0.25, c=6, log_s=1.0, d=2)
    # sqrt(2*6*3) = 6, 1 - alpha = 2/3
    assert th.base == pytest.approx(6.0)
    assert th.t01 == pytest.approx(4.0)
    assert th.steps == pytest.approx((9.0,))


def test_single_weight_has_no_steps():
    th = threshold_values(0.5, 30, math.log(3), d=1)
    assert th.steps == ()
    assert len(th.values) == 1


def test_thresholds_need_window_of_two():
    p = DesignParams(n=12, counts=(2,), c=1, overrides=Overrides(ell=2, s=1, m=2, gamma=1))
    with pytest.raises(ValueError):
        thresholds(derive_params(p), 1)


@settings(max_examples=200)
@given(theta=st.floats(0.01, 0.99), c=st.floats(0.01, 1e3), log_s=st.floats(0.01, 10), d=st.integers(1, 8))
def test_thresholds_strictly_increasing(theta, c, log_s, d):
    v = threshold_values(theta, c, log_s, d).values
    assert np.all(v > 0)
    assert np.all(np.diff(v) > 0)


def test_classify_boundaries():
    th = threshold_values(0.25, 6, 1.0, d=2)
    assert classify(th.t01 - 1e-9, th) == 0
    assert classify(th.t01, th) == 1
    assert classify(9.0, th) == 2
    assert classify(-50.0, th) == 0 and classify(1e9, th) == 2
    th3 = Thresholds(4.0, (9.0, 15.0, 21.0), 6.0)
    assert classify(12.0, th3) == 2
    assert classify(np.array([0.0, 4.0, 12.0, 30.0]), th3).tolist() == [0, 1, 2, 4]


# -- unexplained sums and expectation estimates --------------------------------------


def test_unexplained_sum_by_hand():
    p, D, sig = one_pool_design([1, 0, 2], [0, 1, 2])
    y = measure(D, sig)
    assert y.tolist() == [3]
    state = DecoderState(D, y, np.zeros(0, dtype=np.int8))
    state.commit(0, np.array([1, 0, 0], dtype=np.int8))
    assert unexplained_sum(1, 0, D, state) == 2


def test_truth_estimate_explains_everything(small):
    D = small.design
    state = DecoderState(D, small.y, small.signal.seed_labels)
    for i in D.bulk_compartments:
        state.commit(i, small.signal.labels[D.items(i)])
    assert not state.residual.any()
    for x in (D.n_seed, D.n_items - 1):
        assert all(unexplained_sum(x, j, D, state) == 0 for j in range(D.s))


def test_vectorised_sums_match_scalar(small):
    D = small.design
    state = DecoderState(D, small.y, small.signal.seed_labels)
    i = D.s - 1
    for j in range(D.s):
        vec = unexplained_sums(D, state.residual, i, j)
        for x in range(D.bounds[i], D.bounds[i] + 15):
            assert vec[x - D.bounds[i]] == unexplained_sum(x, j, D, state)


def test_expectation_formula_by_hand():
    # d = 1, k/n = 1/8, u = 1, Delta* * Gamma/s = 20, Delta = 2
    assert expectation_formula((1,), 8, 20, 2, 1, 1) == pytest.approx(2.25)
    assert expectation_formula((0, 0), 8, 20, 2, 1, 3) == 0


def test_scalar_score_matches_compartment_scores(small):
    D, p = small.design, small.params
    state = DecoderState(D, small.y, small.signal.seed_labels)
    i = D.s - 1
    vec = compartment_scores(D, p, state, i)
    for x in range(D.bounds[i], D.bounds[i] + 10):
        assert score(x, D, p, state) == pytest.approx(vec[x - D.bounds[i]], rel=1e-12, abs=1e-12)


def test_single_offset_score():
    p = DesignParams(n=30, counts=(3,), c=1, rng_seed=4, overrides=Overrides(ell=3, s=1, m=6, gamma=4))
    D = build_design(p)
    sig = sample_signal(p, D, stream(4, 1))
    state = DecoderState(D, measure(D, sig), sig.seed_labels)
    x = 0
    U = unexplained_sum(x, 0, D, state)
    M = expectation_estimate(x, 0, D, p, 1)
    assert score(x, D, p, state) == pytest.approx((U - M) / 3**0.05)


def test_unexplained_count_drops_seed_and_committed(small):
    D = small.design
    state = DecoderState(D, small.y, small.signal.seed_labels)
    i = D.s - 1
    assert [state.unexplained_count(i, j) for j in range(D.s)] == list(range(1, D.s + 1))
    last = D.L - 1
    assert [state.unexplained_count(last, j) for j in range(D.s)] == list(range(D.s, 0, -1))
    for r in range(D.s - 1, last):
        state.commit(r, small.signal.labels[D.items(r)])
    # once everything before it is decoded, wrapped windows hold only seed beyond it
    assert [state.unexplained_count(last, j) for j in range(D.s)] == [1] * D.s


# -- the sweep ------------------------------------------------------------------------


def test_residuals_stay_consistent(small):
    D = small.design

    def check(i, state):
        assert np.array_equal(state.residual, state.recomputed_residual())

    th = thresholds(small.derived, small.params.d)
    decode(D, small.y, small.params, th, small.signal.seed_labels, on_commit=check)


def test_seed_estimate_is_the_seed(small):
    th = thresholds(small.derived, small.params.d)
    r = decode(small.design, small.y, small.params, th, small.signal.seed_labels)
    assert np.array_equal(r.estimate[:small.design.n_seed], small.signal.seed_labels)


def test_mismatches_match_direct_comparison(small):
    D = small.design
    th = thresholds(small.derived, small.params.d)
    r = decode(D, small.y, small.params, th, small.signal.seed_labels, truth=small.signal.labels, trace=True)
    wrong = r.estimate != small.signal.labels
    assert r.total_errors == int(wrong.sum())
    assert r.mismatches_per_compartment == [int(wrong[D.items(i)].sum()) for i in D.bulk_compartments]
    assert sum(r.histogram) == D.n
    assert set(json.loads(r.to_json())) == {"histogram", "mismatches_per_compartment", "total_errors", "runtime_ms"}
    lines = r.trace_csv().splitlines()
    assert lines[0] == "item,compartment,score,label_true,label_est"
    assert len(lines) == D.n + 1


def test_zero_signal_decodes_to_zero():
    p = DesignParams(n=200, counts=(0,), c=1, overrides=Overrides(ell=4, s=2, m=20, gamma=10))
    D = build_design(p)
    sig = sample_signal(p, D, stream(0, 1))
    r = decode(D, measure(D, sig), p, thresholds(D.derived, 1), sig.seed_labels, truth=sig.labels)
    assert not r.estimate.any()
    assert r.success


def _permute_compartment(D: PoolingDesign, i: int, perm: np.ndarray) -> PoolingDesign:
    lo = D.bounds[i]
    relabel = np.arange(D.n_items)
    relabel[lo:lo + len(perm)] = lo + perm
    members = relabel[D.members]
    for b in range(D.s):
        members[:, b * D.g:(b + 1) * D.g].sort(axis=1)
    return PoolingDesign(D.params, D.derived, members)


@pytest.mark.parametrize("which", [0, -1])
def test_order_inside_a_compartment_does_not_matter(small, which):
    D, sig = small.design, small.signal
    i = list(D.bulk_compartments)[which]
    perm = np.random.default_rng(5).permutation(int(D.sizes[i]))
    E = _permute_compartment(D, i, perm)
    labels = sig.labels.copy()
    lo = D.bounds[i]
    labels[lo + perm] = sig.labels[lo:lo + len(perm)]
    sig2 = make_signal(E, labels)
    y2 = measure(E, sig2)
    assert np.array_equal(np.sort(y2), np.sort(small.y))
    th = thresholds(small.derived, small.params.d)
    a = decode(D, small.y, small.params, th, sig.seed_labels).estimate
    b = decode(E, y2, small.params, th, sig.seed_labels).estimate
    expect = a.copy()
    expect[lo + perm] = a[lo:lo + len(perm)]
    assert np.array_equal(b, expect)


def test_weight_one_score_mean_matches_centre():
    """Mean score of weight-1 items in the first bulk compartment sits at sum_j Delta_x[j]/((j+1) k^eps)."""
    scores, centres = [], []
    for seed in range(4):
        inst = Instance(desk_params(seed))
        D, p = inst.design, inst.params
        i = D.s - 1
        rows = D.items(i)
        sc = compartment_scores(D, p, DecoderState(D, inst.y, inst.signal.seed_labels), i)
        ones = inst.signal.labels[rows] == 1
        j = np.arange(D.s)
        ctr = (D.degree[rows] / ((j + 1) * p.k**p.eps_design)).sum(axis=1)
        scores.append(sc[ones])
        centres.append(ctr[ones])
    sc, ctr = np.concatenate(scores), np.concatenate(centres)
    assert len(sc) > 40
    se = sc.std(ddof=1) / math.sqrt(len(sc))
    assert abs(sc.mean() - ctr.mean()) <= 3 * se


def test_fixed_instance_regression():
    """Pinned outcome for one seed at n = 1e5, k = 316, c = 1.2 c_min."""
    inst = Instance(desk_params(seed=2024))
    th = thresholds(inst.derived, 1)
    r = decode(inst.design, inst.y, inst.params, th, inst.signal.seed_labels, truth=inst.signal.labels)
    again = decode(inst.design, inst.y, inst.params, th, inst.signal.seed_labels, truth=inst.signal.labels)
    assert np.array_equal(r.estimate, again.estimate)
    # exact recovery is not reached here; see the recovery criteria in test_acceptance.py
    assert r.mismatches_per_compartment == [2, 1, 1, 0, 0, 0, 0, 2, 0, 1, 0, 0, 0, 0]
