"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import filecmp
import itertools
import json
import warnings

import numpy as np
import pytest
from sklearn.model_selection import train_test_split

from devforge.cli import run_command
from devforge.corpus import RoleLabel
from devforge.errors import RankDeficient
from devforge.evaluation import (
    majority_baseline,
    macro_weighted_metrics,
    softmax_loss_and_grad,
    train_logreg,
)
from devforge.imports import LanguageId, extract_imports
from devforge.pipelines import embed_apis, lookup_model, pca_fit, pca_inverse_transform, pca_transform
from devforge.pv import Hyperparams, infer, read_header, sgd_step_gradients, train
from synthetic import topic_corpus

ROLES = list(RoleLabel)
FE = RoleLabel.Frontend


# -- helpers -----------------------------------------------------------------


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _ns_loss(h, u_target, u_negs):
    return -np.log(_sigmoid(u_target @ h)) - np.sum(np.log(_sigmoid(-(u_negs @ h))))


def _central_diff(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def _rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def _doc_vectors(docs, model, seed):
    return np.array([infer(model, d.tokens, rng=[seed, i]) for i, d in enumerate(docs)])


def _synthetic_f1(docs, labels, seed=0):
    """Train DBOW on the 80% split, infer the 20% split, score logistic regression."""
    idx = np.arange(len(docs))
    tr, te = train_test_split(idx, test_size=0.2, stratify=labels, random_state=seed)
    hyper = Hyperparams(vector_size=50, window=5, min_count=1, algorithm="DBOW", negative=5, epochs=40, seed=seed)
    model = train([docs[i] for i in tr], hyper)
    X_tr = model.D.astype(np.float64)
    X_te = _doc_vectors([docs[i] for i in te], model, seed)
    y_tr = [labels[i] for i in tr]
    y_te = [labels[i] for i in te]
    clf = train_logreg(X_tr, y_tr, classes=sorted(set(labels)))
    pred = [clf.classes[j] for j in np.argmax(clf.logits(X_te), axis=1)]
    return macro_weighted_metrics(y_te, pred, sorted(set(labels))).macro_weighted[2], model


@pytest.fixture(scope="module")
def synthetic():
    return topic_corpus(seed=0)


# -- criteria ----------------------------------------------------------------


def test_1_baseline_arithmetic(criterion):
    with criterion("1", "majority baseline reproduces 18.73 / 43.28 / 26.15", 1.0) as c:
        # train set with a 41% Frontend plurality
        train_labels = [FE] * 41 + [RoleLabel.Backend] * 30 + [RoleLabel.Mobile] * 15 + \
            [RoleLabel.DevOps] * 8 + [RoleLabel.DataScientist] * 6
        clf = majority_baseline(train_labels)
        n = 10_000
        others = [RoleLabel.Backend] * 2600 + [RoleLabel.Mobile] * 1600 + [RoleLabel.DevOps] * 900 + \
            [RoleLabel.DataScientist] * 572
        y_true = [FE] * 4328 + others
        assert len(y_true) == n
        y_pred = list(clf.predict(np.zeros((n, 1))))
        assert set(y_pred) == {FE}
        p, r, f = (100 * x for x in macro_weighted_metrics(y_true, y_pred, ROLES).macro_weighted)
        c.detail = f"P/R/F1 = {p:.4f} / {r:.4f} / {f:.4f}"
        assert abs(p - 18.73) <= 0.01
        assert abs(r - 43.28) <= 0.01
        assert abs(f - 26.15) <= 0.01


def test_2_default_model_wiring(criterion, mini_fixtures, tmp_path):
    with criterion("2", "default train builds the three reference models; RIAs dim 580", 300.0) as c:
        out = tmp_path / "run"
        base = ["--fixtures", str(mini_fixtures), "--out", str(out)]
        for stage in ("mine", "ingest", "train", "embed", "concat"):
            assert run_command([stage, *base]) == 0, stage
        expected = {
            "repos": (230, "DM", 5, 15),
            "issues": (150, "DM", 5, 20),
            "apis": (200, "DBOW", 20, 10),
        }
        for name, (dim, algo, neg, epochs) in expected.items():
            header = read_header(out / "models" / f"{name}.model")
            h = header["hyper"]
            assert (h["vector_size"], h["algorithm"], h["negative"], h["epochs"]) == (dim, algo, neg, epochs), name
        dims = {json.loads(line)["dim"] for line in (out / "models" / "rias.jsonl").read_text().splitlines()}
        assert dims == {580}
        c.detail = "230/150/200 DM/DM/DBOW neg 5/5/20 epochs 15/20/10, RIAs 580"


def test_3a_synthetic_separability(criterion, synthetic):
    docs, labels = synthetic
    with criterion("3a", "synthetic topics: PV-DBOW + logistic regression F1 >= 0.90", 60.0) as c:
        f1, _ = _synthetic_f1(docs, labels)
        c.detail = f"F1 = {f1:.3f}"
        assert f1 >= 0.90


def test_3b_shuffled_label_gap(criterion, synthetic):
    docs, labels = synthetic
    with criterion("3b", "informative source beats shuffled-label copy by >= 0.3 F1", 120.0) as c:
        informative, _ = _synthetic_f1(docs, labels)
        shuffled = list(np.random.default_rng(1).permutation(labels))
        uninformative, _ = _synthetic_f1(docs, shuffled)
        c.detail = f"F1 {informative:.3f} vs {uninformative:.3f}"
        assert informative > uninformative
        assert informative - uninformative >= 0.3


def test_4_gradient_oracles(criterion):
    with criterion("4", "negative-sampling and softmax gradients match central differences", 10.0) as c:
        rng = np.random.default_rng(4)
        worst_ns = 0.0
        for _ in range(100):
            d, V, k = rng.integers(3, 12), 30, rng.integers(1, 6)
            h = rng.normal(size=d)
            W_out = rng.normal(scale=0.7, size=(V, d))
            picks = rng.choice(V, size=k + 1, replace=False)
            target, negs = int(picks[0]), picks[1:]
            g_h, g_t, g_n = sgd_step_gradients(h, target, negs, W_out)
            u_t, u_n = W_out[target].copy(), W_out[negs].copy()
            loss = lambda: _ns_loss(h, u_t, u_n)
            worst_ns = max(worst_ns,
                           _rel_err(g_h, _central_diff(loss, h)),
                           _rel_err(g_t, _central_diff(loss, u_t)),
                           _rel_err(g_n, _central_diff(loss, u_n)))

        worst_sm = 0.0
        for _ in range(100):
            n, d, C = rng.integers(3, 15), rng.integers(2, 6), rng.integers(2, 5)
            X = rng.normal(size=(n, d))
            Y = np.eye(C)[rng.integers(0, C, n)]
            W, b = rng.normal(size=(C, d)), rng.normal(size=C)
            l2 = float(rng.choice([0.0, 1e-4, 0.1]))

            def loss():
                z = X @ W.T + b
                z = z - z.max(axis=1, keepdims=True)
                logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
                return -(Y * logp).sum() / n + 0.5 * l2 * (W * W).sum()

            _, gW, gb = softmax_loss_and_grad(W, b, X, Y, l2)
            worst_sm = max(worst_sm, _rel_err(gW, _central_diff(loss, W)), _rel_err(gb, _central_diff(loss, b)))
        c.detail = f"max rel err NS {worst_ns:.1e}, softmax {worst_sm:.1e}"
        assert worst_ns < 1e-4
        assert worst_sm < 1e-4


def _brute_force(y_true, y_pred, classes):
    n = len(y_true)
    wp = wr = wf = 0.0
    for c in classes:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        w = (tp + fn) / n
        wp += w * prec
        wr += w * rec
        wf += w * f1
    return wp, wr, wf


def test_5_metrics_oracle(criterion):
    with criterion("5", "macro-weighted metrics equal a brute-force tally on 1000 pairs", 5.0) as c:
        rng = np.random.default_rng(5)
        for _ in range(1000):
            C = int(rng.integers(1, 6))
            n = int(rng.integers(1, 51))
            classes = ROLES[:C]
            y_true = [classes[i] for i in rng.integers(0, C, n)]
            y_pred = [classes[i] for i in rng.integers(0, C, n)]
            got = macro_weighted_metrics(y_true, y_pred, classes).macro_weighted
            assert got == _brute_force(y_true, y_pred, classes), (y_true, y_pred)
        c.detail = "1000/1000 exact"


def test_6_inference_contract(criterion, synthetic):
    docs, _ = synthetic
    hyper = Hyperparams(vector_size=50, window=5, min_count=1, algorithm="DBOW", negative=5, epochs=40, seed=6)
    model = train(docs, hyper)
    with criterion("6", "OOV tokens do not change inference; seeds agree (cos >= 0.8)", 10.0) as c:
        known = list(docs[0].tokens)
        assert "UNSEEN" not in model.vocab
        base = infer(model, known, rng=123)
        for pos in (0, len(known) // 2, len(known)):
            with_oov = known[:pos] + ["UNSEEN"] + known[pos:]
            assert np.array_equal(infer(model, with_oov, rng=123), base)
        assert np.array_equal(infer(model, ["UNSEEN", known[0]], rng=9), infer(model, [known[0]], rng=9))

        vecs = [infer(model, known, rng=s) for s in range(10)]
        cos = min(float(a @ b / np.linalg.norm(a) / np.linalg.norm(b)) for a, b in itertools.combinations(vecs, 2))
        c.detail = f"min pairwise cosine {cos:.3f}"
        assert cos >= 0.8


def test_7_pca_properties(criterion):
    with criterion("7", "PCA orthonormal, sorted variances, k=D round trip, sweep", 30.0) as c:
        rng = np.random.default_rng(7)
        # RIAs-like blocks with different scales
        X = np.hstack([rng.normal(scale=s, size=(200, d)) for s, d in ((0.05, 230), (0.01, 150), (0.3, 200))])
        X += rng.normal(size=(1, 580))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficient)
            full = pca_fit(X, 580)
        P = full.components
        ortho = np.abs(P @ P.T - np.eye(580)).max()
        ev = full.explained_variance
        back = pca_inverse_transform(full, pca_transform(full, X))
        recon = np.abs(back - X).max()
        assert ortho <= 1e-8
        assert np.all(np.diff(ev) <= 1e-12)
        assert recon <= 1e-6
        for k in (50, 100, 200, 250, 300):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RankDeficient)
                m = pca_fit(X, k)
            Z = pca_transform(m, X)
            assert Z.shape == (200, k)
            assert np.abs(m.components @ m.components.T - np.eye(k)).max() <= 1e-8
        c.detail = f"orthonormality {ortho:.1e}, round trip {recon:.1e}"


def test_8_import_fixtures(criterion, import_fixtures):
    with criterion("8", "import extraction matches checked-in lists for all 17 languages", 5.0) as c:
        expected = json.loads((import_fixtures / "expected.json").read_text())
        assert set(expected) == {lang.value for lang in LanguageId}
        for lang, entry in expected.items():
            content = (import_fixtures / entry["file"]).read_text(encoding="utf-8")
            assert extract_imports(content, lang) == entry["imports"], lang
        c.detail = f"{len(expected)} languages"


def test_9_api_averaging(criterion):
    with criterion("9", "weighted API average is (2/3, 1) and scale invariant", 1.0) as c:
        model = lookup_model({"a": [1.0, 0.0], "b": [0.0, 3.0]})
        v = embed_apis(model, {"a": 2, "b": 1}).values
        v7 = embed_apis(model, {"a": 14, "b": 7}).values
        assert np.abs(v - np.array([2 / 3, 1.0])).max() <= 1e-12
        assert np.abs(v7 - v).max() <= 1e-12
        c.detail = f"{v.tolist()}"


def test_10_determinism(criterion, mini_fixtures, tmp_path):
    with criterion("10", "two deterministic full runs are byte-identical", 600.0) as c:
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            argv = ["all", "--fixtures", str(mini_fixtures), "--deterministic", "--seed", "7", "--out", str(out)]
            assert run_command(argv) == 0
        a, b = (o / "reports" / "report.json" for o in outs)
        assert a.read_bytes() == b.read_bytes()
        models = sorted(p.name for p in (outs[0] / "models").glob("*.model"))
        assert len(models) >= 8
        match, mismatch, errors = filecmp.cmpfiles(outs[0] / "models", outs[1] / "models", models, shallow=False)
        assert not mismatch and not errors, mismatch + errors
        c.detail = f"report.json + {len(match)} model files identical"
