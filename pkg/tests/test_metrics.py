import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import normalized_mutual_info_score

from vbrecon.metrics import (DegenerateMetricWarning, LabeledPartition, average_nmi,
                             cohesion_index, evaluate, mean_cohesion, nmf_communities,
                             nmf_partitions, nmi, strength_error, symmetric_nmf, tpr_tnr)
from vbrecon.network import GeneratorSpec, WeightedNetwork, generate_ba


def _net(n=8, seed=0):
    return generate_ba(GeneratorSpec(n_nodes=n, seed=seed))


# TPR / TNR

def test_rates_identical():
    net = _net()
    assert tpr_tnr(net, net) == (1.0, 1.0)


def test_rates_complement():
    net = _net()
    comp = (net.weights == 0).astype(float)
    np.fill_diagonal(comp, 0.0)
    tpr, tnr = tpr_tnr(net, comp)
    # the diagonal stays a true negative, so TNR is N / (number of negatives)
    assert tpr == 0.0
    assert tnr == pytest.approx(8 / np.sum(net.weights == 0))


def test_rates_complement_off_diagonal_zero():
    # with a full off-diagonal truth the only negatives are the diagonal
    truth = np.ones((3, 3)) - np.eye(3)
    tpr, tnr = tpr_tnr(truth, np.zeros((3, 3)))
    assert (tpr, tnr) == (0.0, 1.0)


def _brute_force(truth, est):
    tp = fn = tn = fp = 0
    n = truth.shape[0]
    for i, j in itertools.product(range(n), range(n)):
        if truth[i, j] != 0:
            tp += est[i, j] != 0
            fn += est[i, j] == 0
        else:
            tn += est[i, j] == 0
            fp += est[i, j] != 0
    return tp / (tp + fn), tn / (tn + fp)


def test_rates_three_node_example():
    truth = np.zeros((3, 3))
    truth[0, 1] = truth[1, 2] = truth[2, 0] = 1.0
    est = np.zeros((3, 3))
    est[0, 1] = est[1, 2] = est[1, 0] = 1.0
    tpr, tnr = tpr_tnr(truth, est)
    assert tpr == pytest.approx(2 / 3)
    assert (tpr, tnr) == pytest.approx(_brute_force(truth, est))
    assert tnr == pytest.approx(5 / 6)


def test_rates_empty_class_nan():
    tpr, tnr = tpr_tnr(np.zeros((3, 3)), np.zeros((3, 3)))
    assert math.isnan(tpr) and tnr == 1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rates_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    t = (rng.uniform(size=(7, 7)) < 0.3) * 1.0
    e = (rng.uniform(size=(7, 7)) < 0.3) * 1.0
    np.fill_diagonal(t, 0)
    np.fill_diagonal(e, 0)
    perm = rng.permutation(7)
    assert tpr_tnr(t, e) == pytest.approx(tpr_tnr(t[np.ix_(perm, perm)], e[np.ix_(perm, perm)]),
                                          nan_ok=True)
    if t.any():
        assert tpr_tnr(t, e) == pytest.approx(_brute_force(t, e))


def test_rates_shape_mismatch():
    with pytest.raises(ValueError):
        tpr_tnr(np.zeros((3, 3)), np.zeros((4, 4)))


# Error

def test_error_examples():
    w = _net().weights
    assert strength_error(w, w) == 0.0
    assert strength_error(w, np.zeros_like(w)) == 1.0
    assert strength_error(w, 2 * w) == pytest.approx(1.0, abs=1e-15)
    assert math.isnan(strength_error(np.zeros((3, 3)), np.ones((3, 3))))


def test_error_scale_covariance():
    rng = np.random.default_rng(1)
    w, west = _net().weights, rng.uniform(size=(8, 8))
    for c in (0.5, 3.0):
        assert strength_error(c * w, west) == pytest.approx(strength_error(w, west / c), rel=1e-12)


# cohesion

def _star(labels_of_leaves, same):
    n = len(labels_of_leaves) + 1
    w = np.zeros((n, n))
    w[0, 1:] = w[1:, 0] = 1.0
    return w, [same] + list(labels_of_leaves)


def test_ci_all_different():
    w, lab = _star(["b", "c", "d"], "a")
    assert cohesion_index(w, lab)[0] == 0.0


def test_ci_two_same_one_different():
    w, lab = _star(["a", "a", "b"], "a")
    assert cohesion_index(w, lab)[0] == 2.0


def test_ci_directed_edge_counts_either_way():
    w = np.zeros((3, 3))
    w[0, 1] = 1.0
    w[2, 0] = 1.0
    ci = cohesion_index(w, ["x", "x", "y"])
    assert ci[0] == 1.0


def test_ci_isolated_and_all_same():
    w = np.zeros((4, 4))
    w[0, 1] = w[1, 0] = 1.0
    ci = cohesion_index(w, [0, 0, 1, 1])
    assert ci[0] == math.inf and ci[1] == math.inf
    assert math.isnan(ci[2]) and math.isnan(ci[3])
    mean, excluded = mean_cohesion(ci)
    assert math.isnan(mean) and excluded == 4


def test_mean_cohesion_excludes():
    mean, excluded = mean_cohesion([1.0, 3.0, math.inf, math.nan])
    assert mean == 2.0 and excluded == 2


def test_ci_label_count_mismatch():
    with pytest.raises(ValueError):
        cohesion_index(np.zeros((3, 3)), [0, 1])


# NMI

def test_nmi_identical():
    assert nmi([0, 0, 1, 1, 2], [5, 5, 7, 7, 9]) == pytest.approx(1.0)


def test_nmi_constant_vs_balanced():
    assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0


def test_nmi_independent_two_by_two():
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-15)


def test_nmi_both_single_label():
    with pytest.warns(DegenerateMetricWarning):
        assert nmi([1, 1, 1], ["a", "a", "a"]) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=40), st.integers(0, 10_000))
def test_nmi_matches_sklearn(a, seed):
    b = np.random.default_rng(seed).integers(0, 3, size=len(a)).tolist()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateMetricWarning)
        ours = nmi(a, b)
    assert 0.0 <= ours <= 1.0
    assert ours == pytest.approx(nmi(b, a), abs=1e-12)
    if len(set(a)) > 1 or len(set(b)) > 1:
        ref = normalized_mutual_info_score(a, b, average_method="arithmetic")
        assert ours == pytest.approx(ref, abs=1e-10)
    relabel = {v: 10 - v for v in set(a)}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateMetricWarning)
        assert nmi([relabel[v] for v in a], b) == pytest.approx(ours, abs=1e-12)


def test_nmi_length_mismatch():
    with pytest.raises(ValueError):
        nmi([0, 1], [0, 1, 1])


# NMF

def _two_cliques(n1=5, n2=6):
    n = n1 + n2
    w = np.zeros((n, n))
    w[:n1, :n1] = 1.0
    w[n1:, n1:] = 1.0
    np.fill_diagonal(w, 0.0)
    return WeightedNetwork(w)


def test_nmf_separates_cliques():
    net = _two_cliques()
    components = [0] * 5 + [1] * 6
    for seed in range(5):
        part = nmf_communities(net, 2, restarts=1, seed=seed)
        assert nmi(part, components) == pytest.approx(1.0)
    assert average_nmi(net, components, restarts=20) == pytest.approx(1.0)


def test_nmf_k_one():
    parts = nmf_partitions(_two_cliques(), 1, restarts=3)
    assert all(set(p.labels) == {0} for p, _ in parts)


def test_nmf_all_zero_flagged():
    with pytest.warns(DegenerateMetricWarning):
        parts = nmf_partitions(np.zeros((4, 4)), 2, restarts=2)
    assert all(p.degenerate and set(p.labels) == {0} for p, _ in parts)


def test_nmf_deterministic_per_restart():
    net = _net(20, seed=3)
    a = nmf_partitions(net, 3, restarts=4, seed=9)
    b = nmf_partitions(net, 3, restarts=4, seed=9)
    assert [p.labels for p, _ in a] == [p.labels for p, _ in b]
    # restart r does not depend on how many restarts were requested
    assert nmf_partitions(net, 3, restarts=2, seed=9)[1][0].labels == a[1][0].labels


@pytest.mark.parametrize("seed", range(5))
def test_nmf_objective_monotone(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(size=(15, 15))
    S = 0.5 * (A + A.T)
    _, trace = symmetric_nmf(S, 3, rng, max_iters=300, tol=0.0)
    diffs = np.diff(trace)
    assert np.all(diffs <= 1e-8 * np.asarray(trace[:-1]))


def test_partition_validation():
    with pytest.raises(ValueError):
        LabeledPartition([])
    assert LabeledPartition(["b", "a", "b"]).codes().tolist() == [1, 0, 1]


def test_evaluate_report():
    net = _net()
    rep = evaluate(net, net, runtime_seconds=0.5)
    assert rep.as_row() == {"tpr": 1.0, "tnr": 1.0, "error": 0.0, "runtime_seconds": 0.5,
                            "mean_ci": None, "nmi": None}
