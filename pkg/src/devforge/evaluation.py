"""Role-classification harness: splits, classifiers, metrics, baselines and
the inter/intra role similarity matrix."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .corpus import ROLES
from .errors import (
    DimensionMismatch,
    EmptyVocabulary,
    NonFiniteFeature,
    SingleClass,
    TooFewPerClass,
    UnknownLabel,
    ZeroVector,
)

# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitPlan:
    ratios: tuple = (0.8, 0.1, 0.1)
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        ratios = tuple(float(r) for r in self.ratios)
        if len(ratios) != 3:
            raise ValueError("ratios must be (train, val, test)")
        if not all(0.0 < r < 1.0 for r in ratios):
            raise ValueError(f"each ratio must lie in (0, 1): {ratios}")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
        object.__setattr__(self, "ratios", ratios)


def split_sizes(n, ratios):
    """floor(train), floor(val), remainder to test."""
    n_train = math.floor(n * ratios[0] + 1e-9)
    n_val = math.floor(n * ratios[1] + 1e-9)
    return n_train, n_val, n - n_train - n_val


def _apportion(class_sizes, ratios, totals):
    """Integer split counts per class whose row sums are the class sizes and
    whose column sums hit ``totals``, each within one of ``ratio * size``.

    Cells are filled in phases (up to the floor, then the ceiling, then one
    beyond) so allocations stay as close to the quotas as the totals allow.
    """
    sizes = np.asarray(class_sizes, dtype=int)
    quotas = np.outer(sizes, ratios)
    lo = np.maximum(0, np.ceil(quotas - 1 - 1e-9)).astype(int)
    floor = np.floor(quotas + 1e-9).astype(int)
    ceil = np.ceil(quotas - 1e-9).astype(int)
    hi = np.minimum(sizes[:, None], np.floor(quotas + 1 + 1e-9)).astype(int)
    alloc = lo.copy()
    left = sizes - alloc.sum(axis=1)
    need = np.asarray(totals, dtype=int) - alloc.sum(axis=0)
    frac = quotas - floor
    cells = sorted(np.ndindex(alloc.shape), key=lambda cs: (-frac[cs], cs))
    for upper in (floor, ceil, hi):
        for c, s in cells:
            take = min(left[c], need[s], upper[c, s] - alloc[c, s])
            if take > 0:
                alloc[c, s] += take
                left[c] -= take
                need[s] -= take
        for c in range(len(sizes)):
            while left[c] > 0 and _augment(c, alloc, lo, upper, need):
                left[c] -= 1
    # infeasible corner cases: give up the one-member bound
    for c, s in cells:
        take = min(left[c], need[s])
        alloc[c, s] += take
        left[c] -= take
        need[s] -= take
    return alloc


def _augment(start, alloc, lo, upper, need):
    """Move one member of class ``start`` into a split with spare capacity,
    shifting other classes between splits along the way if needed."""
    parent = {("c", start): None}
    queue = deque([("c", start)])
    while queue:
        node = queue.popleft()
        kind, i = node
        if kind == "c":
            nxt = [("s", s) for s in range(alloc.shape[1]) if alloc[i, s] < upper[i, s]]
        elif need[i] > 0:
            need[i] -= 1
            while parent[node] is not None:
                prev = parent[node]
                if prev[0] == "c":
                    alloc[prev[1], node[1]] += 1
                else:
                    alloc[node[1], prev[1]] -= 1
                node = prev
            return True
        else:
            nxt = [("c", c) for c in range(alloc.shape[0]) if alloc[c, i] > lo[c, i]]
        for n in nxt:
            if n not in parent:
                parent[n] = node
                queue.append(n)
    return False


def split(developers, plan: SplitPlan):
    """Partition labelled developers into (train, val, test) id lists.

    ``developers`` maps developer id to role label (or is a sequence of
    ``(id, label)`` pairs). The result depends only on the set of pairs and
    the seed, not on input order.
    """
    pairs = sorted(dict(developers).items(), key=lambda kv: kv[0])
    if any(label is None for _, label in pairs):
        raise ValueError("every developer needs a role label to be split")
    rng = np.random.default_rng(plan.seed)
    totals = split_sizes(len(pairs), plan.ratios)
    if not plan.stratified:
        ids = [d for d, _ in pairs]
        perm = [ids[i] for i in rng.permutation(len(ids))]
        a, b = totals[0], totals[0] + totals[1]
        return perm[:a], perm[a:b], perm[b:]

    by_class: dict = {}
    for dev, label in pairs:
        by_class.setdefault(label, []).append(dev)
    classes = sorted(by_class, key=str)
    small = {str(c): len(by_class[c]) for c in classes if len(by_class[c]) < 3}
    if small:
        raise TooFewPerClass(f"stratified split needs >= 3 developers per role: {small}")
    alloc = _apportion([len(by_class[c]) for c in classes], plan.ratios, totals)
    out = ([], [], [])
    for ci, c in enumerate(classes):
        members = by_class[c]
        members = [members[i] for i in rng.permutation(len(members))]
        start = 0
        for s in range(3):
            out[s].extend(members[start:start + alloc[ci, s]])
            start += alloc[ci, s]
    return tuple(sorted(part) for part in out)


# --------------------------------------------------------------------------
# multinomial logistic regression


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_loss_and_grad(weights, bias, X, Y, l2):
    """Mean cross-entropy plus (l2/2)*||weights||^2 and its gradients.

    ``Y`` is one-hot (N x C); ``weights`` is C x d."""
    logits = X @ weights.T + bias
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = X.shape[0]
    loss = -np.sum(Y * log_p) / n + 0.5 * l2 * np.sum(weights * weights)
    diff = (np.exp(log_p) - Y) / n
    return loss, diff.T @ X + l2 * weights, diff.sum(axis=0)


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: np.ndarray
    classes: list
    l2: float = 1e-4
    lr: float = 0.5
    max_iters: int = 2000
    tol: float = 1e-6
    loss_history: list = field(default_factory=list, repr=False)
    n_iter: int = 0

    def logits(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.weights.shape[1]:
            raise DimensionMismatch(f"expected {self.weights.shape[1]} features, got {X.shape[-1]}")
        return X @ self.weights.T + self.bias

    def predict_proba(self, X):
        return _softmax(np.atleast_2d(self.logits(X)))


def train_logreg(X, y, l2=1e-4, lr=0.5, max_iters=2000, tol=1e-6, classes=None) -> LogRegModel:
    """Full-batch gradient descent from zero weights, halving the step when
    the objective would increase."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("X must be N x d")
    if not np.isfinite(X).all():
        raise NonFiniteFeature("features contain NaN or Inf")
    y = list(y)
    if len(y) != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {len(y)} labels")
    present = set(y)
    if len(present) < 2:
        raise SingleClass(f"training labels cover a single class: {present}")
    if classes is None:
        order = {r: i for i, r in enumerate(ROLES)}
        classes = sorted(present, key=lambda c: (order.get(c, len(order)), str(c)))
    classes = list(classes)
    unknown = present - set(classes)
    if unknown:
        raise UnknownLabel(f"labels not in classes: {sorted(map(str, unknown))}")
    if X.shape[0] < len(classes):
        raise ValueError("need at least as many examples as classes")

    index = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((X.shape[0], len(classes)))
    Y[np.arange(X.shape[0]), [index[c] for c in y]] = 1.0
    W = np.zeros((len(classes), X.shape[1]))
    b = np.zeros(len(classes))
    loss, gW, gb = softmax_loss_and_grad(W, b, X, Y, l2)
    history = [loss]
    it = 0
    for it in range(1, max_iters + 1):
        if max(np.abs(gW).max(), np.abs(gb).max()) <= tol:
            it -= 1
            break
        step = lr
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, new_gW, new_gb = softmax_loss_and_grad(W_new, b_new, X, Y, l2)
            if new_loss <= loss or step < 1e-12:
                break
            step *= 0.5
        if new_loss > loss:
            break
        W, b, loss, gW, gb = W_new, b_new, new_loss, new_gW, new_gb
        history.append(loss)
    return LogRegModel(W, b, classes, l2, lr, max_iters, tol, history, it)


def predict(model: LogRegModel, x):
    """Most probable class; ties go to the earliest class in ``model.classes``."""
    x = np.asarray(x, dtype=np.float64)
    logits = np.atleast_2d(model.logits(x))
    labels = [model.classes[i] for i in np.argmax(logits, axis=1)]
    return labels[0] if x.ndim == 1 else labels


def _label_array(labels):
    # plain scalars keep a native dtype so sklearn metrics can type the target
    labels = list(labels)
    if labels and all(type(v) in (int, float, str, np.int64, np.str_) for v in labels):
        return np.asarray(labels)
    out = np.empty(len(labels), dtype=object)
    out[:] = labels
    return out


class SoftmaxRegression(ClassifierMixin, BaseEstimator):
    def __init__(self, l2=1e-4, lr=0.5, max_iters=2000, tol=1e-6):
        self.l2 = l2
        self.lr = lr
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64, ensure_all_finite=False)
        self.model_ = train_logreg(X, y, self.l2, self.lr, self.max_iters, self.tol)
        self.classes_ = _label_array(self.model_.classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_proba(check_array(X, dtype=np.float64))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return _label_array(predict(self.model_, check_array(X, dtype=np.float64)))


class MajorityClassifier(ClassifierMixin, BaseEstimator):
    """Always predicts the most frequent training label."""

    def __init__(self, classes=None):
        self.classes = classes

    def fit(self, X, y):
        y = list(y)
        if not y:
            raise ValueError("majority baseline needs at least one training label")
        self.label_ = majority_label(y, self.classes)
        self.classes_ = _label_array(sorted(set(y), key=str))
        return self

    def predict(self, X):
        check_is_fitted(self, "label_")
        return _label_array([self.label_] * len(X))


def majority_label(labels, classes=None):
    counts = Counter(labels)
    if classes is None:
        order = {r: i for i, r in enumerate(ROLES)}
        classes = sorted(counts, key=lambda c: (order.get(c, len(order)), str(c)))
    best = max(counts.values())
    return next(c for c in classes if counts.get(c, 0) == best)


def majority_baseline(train_labels, classes=None):
    return MajorityClassifier(classes).fit([None] * len(list(train_labels)), list(train_labels))


# --------------------------------------------------------------------------
# metrics


@dataclass
class EvalReport:
    classes: list
    per_class: dict
    macro_weighted: tuple
    confusion: np.ndarray
    n: int

    def to_dict(self, name=None):
        pct = lambda x: round(100.0 * x, 2)
        p, r, f = self.macro_weighted
        out = {
            "n": self.n,
            "classes": [str(c) for c in self.classes],
            "macro_weighted": {"precision": pct(p), "recall": pct(r), "f1": pct(f)},
            "macro_weighted_full": {"precision": p, "recall": r, "f1": f},
            "per_class": {
                str(c): {"precision": pct(m[0]), "recall": pct(m[1]), "f1": pct(m[2]), "support": m[3],
                         "precision_full": m[0], "recall_full": m[1], "f1_full": m[2]}
                for c, m in self.per_class.items()
            },
            "confusion": self.confusion.tolist(),
        }
        if name is not None:
            out = {"name": name, **out}
        return out


def macro_weighted_metrics(y_true, y_pred, classes=ROLES) -> EvalReport:
    """Per-class precision/recall/F1 and their support-weighted averages.

    A class that is never predicted has precision 0; F1 is 0 when precision
    and recall are both 0.
    """
    y_true, y_pred, classes = list(y_true), list(y_pred), list(classes)
    if len(y_true) != len(y_pred) or not y_true:
        raise ValueError("y_true and y_pred must have the same non-zero length")
    index = {c: i for i, c in enumerate(classes)}
    unknown = {y for y in y_true + y_pred if y not in index}
    if unknown:
        raise UnknownLabel(f"labels outside classes: {sorted(map(str, unknown))}")
    C = len(classes)
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, ([index[y] for y in y_true], [index[y] for y in y_pred]), 1)
    n = len(y_true)
    per_class = {}
    wp = wr = wf = 0.0
    for i, c in enumerate(classes):
        tp = int(confusion[i, i])
        predicted = int(confusion[:, i].sum())
        support = int(confusion[i, :].sum())
        p = tp / predicted if predicted else 0.0
        r = tp / support if support else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        per_class[c] = (p, r, f, support)
        w = support / n
        wp += w * p
        wr += w * r
        wf += w * f
    return EvalReport(classes, per_class, (wp, wr, wf), confusion, n)


def evaluate_classifier(clf, X_train, y_train, X_test, y_test, classes=ROLES) -> EvalReport:
    """Fit any estimator with fit/predict on train and score it on test."""
    clf.fit(X_train, list(y_train))
    return macro_weighted_metrics(list(y_test), list(clf.predict(X_test)), classes)


# --------------------------------------------------------------------------
# tf-idf bag of words

DEFAULT_TOP_K = 1471


class TfidfBagOfWords(TransformerMixin, BaseEstimator):
    """Bag-of-words over the ``top_k`` train tokens by document frequency,
    weighted by raw count times smoothed idf, rows L2-normalised."""

    def __init__(self, top_k=DEFAULT_TOP_K):
        self.top_k = top_k

    def fit(self, X, y=None):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        docs = [list(_tokens(d)) for d in X]
        df = Counter()
        for toks in docs:
            df.update(set(toks))
        if not df:
            raise EmptyVocabulary("training documents contain no tokens")
        ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[: self.top_k]
        self.vocabulary_ = {t: i for i, (t, _) in enumerate(ranked)}
        n = len(docs)
        self.idf_ = np.array([math.log((1 + n) / (1 + c)) + 1.0 for _, c in ranked])
        return self

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        docs = [list(_tokens(d)) for d in X]
        out = np.zeros((len(docs), len(self.vocabulary_)))
        for r, toks in enumerate(docs):
            for tok in toks:
                j = self.vocabulary_.get(tok)
                if j is not None:
                    out[r, j] += 1.0
        out *= self.idf_
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 0)
        return out


def _tokens(doc):
    return doc.tokens if hasattr(doc, "tokens") else doc


def tfidf_vectorize(train_docs, test_docs, top_k=DEFAULT_TOP_K):
    vec = TfidfBagOfWords(top_k).fit(train_docs)
    return vec.transform(train_docs), vec.transform(test_docs)


# --------------------------------------------------------------------------
# inter / intra role similarity


def inter_intra_matrix(groups) -> tuple[list, np.ndarray]:
    """``M[r, c]`` is the mean cosine between members of role ``r`` and the
    centroid of role ``c``. ``groups`` maps role to an (n_r x d) array."""
    roles = list(groups)
    mats = []
    for role in roles:
        m = np.atleast_2d(np.asarray(groups[role], dtype=np.float64))
        if m.shape[0] == 0:
            raise ValueError(f"role {role} has no members")
        norms = np.linalg.norm(m, axis=1)
        if np.any(norms == 0):
            raise ZeroVector(f"role {role} has a zero-norm member")
        mats.append(m / norms[:, None])
    centroids = np.array([np.asarray(groups[r], dtype=np.float64).reshape(len(m), -1).mean(axis=0)
                          for r, m in zip(roles, mats)])
    cnorm = np.linalg.norm(centroids, axis=1)
    if np.any(cnorm == 0):
        raise ZeroVector(f"zero-norm centroid for role {roles[int(np.argmin(cnorm))]}")
    unit_centroids = centroids / cnorm[:, None]
    M = np.array([(m @ unit_centroids.T).mean(axis=0) for m in mats])
    return roles, M


def write_matrix_csv(path, roles, M):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["role"] + [str(r) for r in roles])
        for r, row in zip(roles, M):
            w.writerow([str(r)] + [repr(float(x)) for x in row])


def write_report(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
