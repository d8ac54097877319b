import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devforge.corpus import RoleLabel
from devforge.errors import (
    DimensionMismatch,
    EmptyVocabulary,
    NonFiniteFeature,
    SingleClass,
    TooFewPerClass,
    UnknownLabel,
    ZeroVector,
)
from devforge.evaluation import (
    LogRegModel,
    MajorityClassifier,
    SoftmaxRegression,
    SplitPlan,
    TfidfBagOfWords,
    evaluate_classifier,
    inter_intra_matrix,
    macro_weighted_metrics,
    majority_baseline,
    predict,
    split,
    split_sizes,
    tfidf_vectorize,
    train_logreg,
    write_matrix_csv,
)

B, F, M, D, S = RoleLabel


# -- splitting ----------------------------------------------------------------


def test_split_sizes_1272():
    assert split_sizes(1272, (0.8, 0.1, 0.1)) == (1017, 127, 128)


def test_split_plan_validation():
    with pytest.raises(ValueError):
        SplitPlan((0.8, 0.1, 0.0))
    with pytest.raises(ValueError):
        SplitPlan((0.7, 0.1, 0.1))
    with pytest.raises(ValueError):
        SplitPlan((0.5, 0.5))


def _population(sizes):
    roles = list(RoleLabel)
    return {f"{roles[c].value}-{i:04d}": roles[c] for c, n in enumerate(sizes) for i in range(n)}


def test_split_1272_developers():
    sizes = [300, 520, 200, 177, 75]
    devs = _population(sizes)
    parts = split(devs, SplitPlan((0.8, 0.1, 0.1), seed=3))
    assert tuple(map(len, parts)) == (1017, 127, 128)
    for part, ratio in zip(parts, (0.8, 0.1, 0.1)):
        got = Counter(devs[d] for d in part)
        for role, n in zip(RoleLabel, sizes):
            assert abs(got[role] - ratio * n) < 1


def test_small_population_bound():
    # 16 developers: totals 12/1/3, test quota 1.6, so a role must overshoot
    devs = _population([7, 9])
    parts = split(devs, SplitPlan((0.8, 0.1, 0.1), seed=0))
    assert tuple(map(len, parts)) == (12, 1, 3)
    assert sorted(Counter(devs[d] for d in parts[2]).values()) == [1, 2]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(3, 60), min_size=2, max_size=5), st.integers(0, 2**16))
def test_split_properties(sizes, seed):
    devs = _population(sizes)
    plan = SplitPlan((0.8, 0.1, 0.1), seed=seed)
    parts = split(devs, plan)
    ids = [d for p in parts for d in p]
    assert sorted(ids) == sorted(devs) and len(set(ids)) == len(ids)
    assert tuple(len(p) for p in parts) == split_sizes(len(devs), plan.ratios)
    # when every split total is within one member of its quota, each role lands
    # within one member of its share; otherwise the floor/floor/remainder totals
    # can force up to (but under) two
    sizes_by_role = Counter(devs.values())
    tight = all(abs(len(p) - r * len(devs)) < 1 for p, r in zip(parts, plan.ratios))
    for part, ratio in zip(parts, plan.ratios):
        got = Counter(devs[d] for d in part)
        for role, n in sizes_by_role.items():
            dev = abs(got.get(role, 0) - ratio * n)
            assert dev < 1 - 1e-12 if tight else dev < 2

    shuffled = dict(sorted(devs.items(), reverse=True))
    assert split(shuffled, plan) == parts


def test_split_unstratified_is_deterministic():
    devs = _population([5, 5])
    plan = SplitPlan((0.6, 0.2, 0.2), seed=1, stratified=False)
    assert split(devs, plan) == split(list(devs.items())[::-1], plan)
    assert tuple(map(len, split(devs, plan))) == (6, 2, 2)


def test_split_too_few_per_class():
    with pytest.raises(TooFewPerClass):
        split(_population([10, 2]), SplitPlan())


def test_split_requires_labels():
    with pytest.raises(ValueError):
        split({"a": None, "b": F}, SplitPlan())


# -- logistic regression ------------------------------------------------------


def test_separable_toy_set():
    X = np.array([[0, 0], [0, 1], [1, 0], [0.5, 0.5], [3, 3], [3, 4], [4, 3], [3.5, 3.5]])
    y = [B] * 4 + [F] * 4
    model = train_logreg(X, y)
    assert predict(model, X) == y


def test_loss_non_increasing():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 5))
    y = [list(RoleLabel)[i] for i in rng.integers(0, 3, 40)]
    model = train_logreg(X, y, lr=50.0, max_iters=200)
    assert np.all(np.diff(model.loss_history) <= 0)


def test_zero_weights_uniform_and_first_class():
    m = LogRegModel(np.zeros((3, 2)), np.zeros(3), [M, D, S])
    assert np.allclose(m.predict_proba(np.array([[5.0, -2.0]])), 1 / 3)
    assert predict(m, np.array([1.0, 1.0])) is M


@given(st.floats(-100, 100, allow_nan=False))
def test_bias_shift_invariance(c):
    rng = np.random.default_rng(1)
    m = LogRegModel(rng.normal(size=(4, 3)), rng.normal(size=4), [B, F, M, D])
    X = rng.normal(size=(10, 3))
    shifted = LogRegModel(m.weights, m.bias + c, m.classes)
    assert predict(m, X) == predict(shifted, X)
    assert np.allclose(m.predict_proba(X).sum(axis=1), 1.0, atol=1e-9)


def test_logreg_errors():
    X = np.ones((4, 2))
    with pytest.raises(SingleClass):
        train_logreg(X, [B] * 4)
    with pytest.raises(NonFiniteFeature):
        train_logreg(np.array([[np.nan, 1], [1, 1]]), [B, F])
    with pytest.raises(DimensionMismatch):
        predict(train_logreg(X, [B, F, B, F]), np.ones(3))


def test_sklearn_estimator():
    rng = np.random.default_rng(2)
    X = np.vstack([rng.normal(-2, 1, (20, 3)), rng.normal(2, 1, (20, 3))])
    y = [B] * 20 + [S] * 20
    clf = SoftmaxRegression().fit(X, y)
    assert clf.score(X, y) == 1.0
    assert list(clf.classes_) == [B, S]


# -- baseline and metrics -----------------------------------------------------


def test_majority_baseline():
    clf = majority_baseline([F] * 41 + [B] * 30 + [M] * 29)
    assert list(clf.predict(range(3))) == [F, F, F]
    assert majority_baseline([D]).label_ is D
    # ties go to the lowest class index
    assert majority_baseline([S, B, S, B]).label_ is B


def test_majority_baseline_reference_row():
    y_true = [F] * 4328 + [B] * 5672
    r = macro_weighted_metrics(y_true, [F] * len(y_true))
    p, rec, f = r.macro_weighted
    assert round(100 * p, 2) == 18.73 and round(100 * rec, 2) == 43.28 and round(100 * f, 2) == 26.15
    assert abs(p - 0.4328**2) < 1e-12
    assert abs(f - 0.4328 * (2 * 0.4328 / 1.4328)) < 1e-12


def test_worked_example():
    r = macro_weighted_metrics([B, B, F], [B, F, F], [B, F])
    assert r.per_class[B][:3] == pytest.approx((1.0, 0.5, 2 / 3))
    assert r.per_class[F][:3] == pytest.approx((0.5, 1.0, 2 / 3))
    assert r.macro_weighted == pytest.approx((1 * 2 / 3 + 0.5 / 3, 2 / 3, 2 / 3))


def test_perfect_predictions():
    y = [B, F, M, D, S, S]
    r = macro_weighted_metrics(y, y)
    assert r.macro_weighted == (1.0, 1.0, 1.0)
    assert np.array_equal(r.confusion, np.diag(np.diag(r.confusion)))


def test_unknown_label():
    with pytest.raises(UnknownLabel):
        macro_weighted_metrics([B], ["Designer"])
    with pytest.raises(ValueError):
        macro_weighted_metrics([], [])


@given(st.lists(st.tuples(st.sampled_from(list(RoleLabel)), st.sampled_from(list(RoleLabel))), min_size=1, max_size=50))
def test_report_invariants(pairs):
    y_true, y_pred = zip(*pairs)
    r = macro_weighted_metrics(y_true, y_pred)
    assert sum(m[3] for m in r.per_class.values()) == r.n == len(pairs)
    assert r.confusion.sum(axis=1).tolist() == [r.per_class[c][3] for c in r.classes]
    assert all(0.0 <= x <= 1.0 for m in r.per_class.values() for x in m[:3])
    assert all(0.0 <= x <= 1.0 + 1e-12 for x in r.macro_weighted)


def test_report_dict_percentages():
    d = macro_weighted_metrics([B, B, F], [B, F, F], [B, F]).to_dict("demo")
    assert d["name"] == "demo" and d["macro_weighted"]["precision"] == 83.33
    assert d["macro_weighted_full"]["precision"] == pytest.approx(5 / 6)


def test_evaluate_classifier_with_majority():
    r = evaluate_classifier(MajorityClassifier(), np.zeros((5, 1)), [F, F, F, B, B], np.zeros((3, 1)), [F, B, B])
    assert r.macro_weighted[1] == pytest.approx(1 / 3)


# -- tf-idf -------------------------------------------------------------------


def test_idf_values():
    vec = TfidfBagOfWords(top_k=10).fit([["a", "b"], ["a"]])
    idf = dict(zip(vec.vocabulary_, vec.idf_))
    assert idf["a"] == 1.0
    assert idf["b"] == pytest.approx(math.log(3 / 2) + 1)
    assert round(idf["b"], 4) == 1.4055


def test_tfidf_rows_and_selection():
    train = [["x", "x", "y"], ["x", "z"], ["x", "y", "w"]]
    A, Bm = tfidf_vectorize(train, [["y", "unseen"], ["unseen"]], top_k=2)
    assert A.shape == (3, 2) and Bm.shape == (2, 2)
    assert np.allclose(np.linalg.norm(A, axis=1), 1.0)
    assert np.allclose(Bm[0], [0.0, 1.0]) and np.all(Bm[1] == 0)


def test_tfidf_errors():
    with pytest.raises(EmptyVocabulary):
        TfidfBagOfWords().fit([[], []])
    with pytest.raises(ValueError):
        TfidfBagOfWords(top_k=0).fit([["a"]])


def test_default_top_k():
    assert TfidfBagOfWords().top_k == 1471


# -- inter / intra ------------------------------------------------------------


def test_single_role_identical_members():
    roles, Mx = inter_intra_matrix({B: [[1.0, 2.0], [1.0, 2.0]]})
    assert roles == [B] and np.allclose(Mx, [[1.0]])


def test_orthogonal_roles():
    _, Mx = inter_intra_matrix({B: [[1, 0, 0]] * 3, F: [[0, 2, 0]] * 2})
    assert np.allclose(Mx, np.eye(2), atol=1e-9)


def test_gaussian_clusters_diagonal_dominant():
    rng = np.random.default_rng(3)
    centers = rng.normal(size=(5, 20)) * 5
    groups = {r: centers[i] + rng.normal(size=(15, 20)) for i, r in enumerate(RoleLabel)}
    _, Mx = inter_intra_matrix(groups)
    for i in range(5):
        assert all(Mx[i, i] > Mx[i, j] for j in range(5) if j != i)


def test_zero_vectors():
    with pytest.raises(ZeroVector):
        inter_intra_matrix({B: [[0.0, 0.0]]})
    with pytest.raises(ZeroVector):
        inter_intra_matrix({B: [[1.0, 0.0], [-1.0, 0.0]]})


def test_matrix_csv(tmp_path):
    roles, Mx = inter_intra_matrix({B: [[1, 0]], F: [[0, 1]]})
    write_matrix_csv(tmp_path / "m.csv", roles, Mx)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "role,Backend,Frontend"
    assert lines[1].startswith("Backend,1.0,")


def test_plain_labels_work_with_sklearn_scoring():
    X = np.array([[0.0, 1.0], [1.0, 0.0], [0.1, 0.9], [0.9, 0.1]])
    y = [0, 1, 0, 1]
    clf = SoftmaxRegression().fit(X, y)
    assert clf.predict(X).dtype.kind == "i"
    assert clf.score(X, y) == 1.0
