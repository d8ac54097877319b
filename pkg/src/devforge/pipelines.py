"""Expertise vectors from the three evidence sources, their concatenation,
and PCA reduction of the concatenated vectors."""

from __future__ import annotations

import enum
import logging
import warnings
import zlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DimensionMismatch, MissingSource, OOVOnly, RankDeficient
from .jsonl import read_jsonl, write_jsonl
from .pv import infer, train
from .pv.io import read_container, write_container

logger = logging.getLogger(__name__)


class Source(str, enum.Enum):
    Repos = "Repos"
    Issues = "Issues"
    APIs = "APIs"
    RIAs = "RIAs"
    RIAsPca = "RIAsPca"

    def __str__(self):
        return self.value


RIAS_ORDER = (Source.Repos, Source.Issues, Source.APIs)


@dataclass(frozen=True)
class ExpertiseVector:
    developer_id: str
    source: Source
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DimensionMismatch("expertise vector must be a non-empty 1-d array")
        if not np.isfinite(values).all():
            raise ValueError(f"non-finite values in {self.source} vector of {self.developer_id}")
        values.flags.writeable = False
        object.__setattr__(self, "source", Source(self.source))
        object.__setattr__(self, "values", values)

    @property
    def dim(self):
        return self.values.shape[0]

    def to_dict(self):
        # float -> repr round-trips exactly
        return {"developer_id": self.developer_id, "source": self.source.value, "dim": self.dim,
                "values": [float(x) for x in self.values]}

    @classmethod
    def from_dict(cls, d):
        vec = cls(d["developer_id"], d["source"], d["values"])
        if vec.dim != d["dim"]:
            raise DimensionMismatch(f"dim field {d['dim']} != {vec.dim} values")
        return vec


def write_vectors(path, vectors, append=False):
    return write_jsonl(path, (v.to_dict() for v in vectors), append=append)


def read_vectors(path, source=None) -> list[ExpertiseVector]:
    vecs = (ExpertiseVector.from_dict(r) for r in read_jsonl(path))
    if source is None:
        return list(vecs)
    source = Source(source)
    return [v for v in vecs if v.source is source]


# --------------------------------------------------------------------------
# text sources


@dataclass
class TextEmbedding:
    model: object
    train: list
    test: list
    skipped: list


def embed_text_source(train_docs, test_docs, hyper, source=Source.Repos, infer_epochs=None) -> TextEmbedding:
    """Train on ``train_docs``; train vectors are the learned document rows,
    test vectors are inferred. Test developers with no in-vocabulary token
    are reported in ``skipped``."""
    source = Source(source)
    train_docs, test_docs = list(train_docs), list(test_docs)
    overlap = {d.tag for d in train_docs} & {d.tag for d in test_docs}
    if overlap:
        raise ValueError(f"train and test share developers: {sorted(overlap)[:5]}")
    model = train(train_docs, hyper)
    train_vecs = [ExpertiseVector(tag, source, model.D[i]) for i, tag in enumerate(model.tags)]
    test_vecs, skipped = infer_source_vectors(model, test_docs, source, infer_epochs)
    return TextEmbedding(model, train_vecs, test_vecs, skipped)


def infer_source_vectors(model, docs, source, infer_epochs=None):
    """Inferred vectors for ``docs``; each developer's RNG stream is derived
    from the model seed and its tag, so results do not depend on order."""
    vecs, skipped = [], []
    for doc in docs:
        rng = np.random.default_rng([model.hyper.seed, _stable_hash(doc.tag)])
        try:
            vec = infer(model, doc.tokens, infer_epochs, rng)
        except OOVOnly:
            skipped.append(doc.tag)
            logger.warning("%s: no in-vocabulary tokens for %s; skipped", source, doc.tag)
            continue
        vecs.append(ExpertiseVector(doc.tag, source, vec))
    return vecs, skipped


def _stable_hash(text):
    return zlib.crc32(text.encode("utf-8"))


# --------------------------------------------------------------------------
# APIs


def embed_apis(api_model, counts, developer_id="", weighted=True) -> ExpertiseVector:
    """Count-weighted mean of the word vectors of in-vocabulary imports.

    ``api_model`` is an EmbeddingModel or any mapping-like object with
    ``vocab.index`` and ``W_in``. With ``weighted=False`` each distinct
    import counts once.
    """
    index = api_model.vocab.index
    W_in = api_model.W_in
    rows, weights = [], []
    for name, count in counts.items():
        if count <= 0:
            raise ValueError(f"import count must be positive: {name}={count}")
        i = index.get(name)
        if i is None:
            continue
        rows.append(i)
        weights.append(float(count) if weighted else 1.0)
    if not rows:
        raise OOVOnly(f"none of the {len(counts)} imports is in the API vocabulary")
    w = np.asarray(weights)
    vec = w @ np.asarray(W_in, dtype=np.float64)[rows] / w.sum()
    return ExpertiseVector(developer_id, Source.APIs, vec)


class _Lookup:
    """Minimal model stand-in: a vocabulary index plus input vectors."""

    def __init__(self, tokens, W_in):
        self.vocab = type("V", (), {"index": {t: i for i, t in enumerate(tokens)}})()
        self.W_in = np.asarray(W_in, dtype=np.float64)


def lookup_model(vectors: dict):
    """Wrap ``{name: vector}`` so :func:`embed_apis` can average it."""
    names = list(vectors)
    return _Lookup(names, np.array([vectors[n] for n in names], dtype=np.float64))


def embed_api_source(train_docs, counts, hyper, weighted=True, prefer_doc_vectors=False):
    """Train the API model on ``train_docs`` and embed every developer in
    ``counts``. With ``prefer_doc_vectors`` a developer whose tag is in the
    model gets its trained document row instead of the import average."""
    model = train(list(train_docs), hyper)
    vecs, skipped = [], []
    for dev, c in counts.items():
        if prefer_doc_vectors and dev in model.tag_index:
            vecs.append(ExpertiseVector(dev, Source.APIs, model.doc_vector(dev)))
            continue
        try:
            vecs.append(embed_apis(model, c, dev, weighted=weighted))
        except OOVOnly:
            skipped.append(dev)
    return model, vecs, skipped


# --------------------------------------------------------------------------
# RIAs


def concat_rias(v_r, v_i, v_a) -> ExpertiseVector:
    """Repos || Issues || APIs, in that order."""
    parts = dict(zip(RIAS_ORDER, (v_r, v_i, v_a)))
    missing = [s.value for s, v in parts.items() if v is None]
    if missing:
        raise MissingSource(missing)
    for expected, vec in parts.items():
        if vec.source is not expected:
            raise ValueError(f"expected a {expected} vector, got {vec.source}")
    ids = {v.developer_id for v in parts.values()}
    if len(ids) != 1:
        raise ValueError(f"vectors belong to different developers: {sorted(ids)}")
    return ExpertiseVector(ids.pop(), Source.RIAs, np.concatenate([v.values for v in parts.values()]))


def concat_all(vectors) -> tuple[list[ExpertiseVector], list[str]]:
    """RIAs vectors for every developer having all three sources, plus the
    ids of developers that lack at least one."""
    by_dev: dict[str, dict] = {}
    for v in vectors:
        if v.source in RIAS_ORDER:
            by_dev.setdefault(v.developer_id, {})[v.source] = v
    out, incomplete = [], []
    for dev, parts in by_dev.items():
        try:
            out.append(concat_rias(*(parts.get(s) for s in RIAS_ORDER)))
        except MissingSource:
            incomplete.append(dev)
    return out, incomplete


# --------------------------------------------------------------------------
# PCA


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self):
        return self.components.shape[0]

    @property
    def n_features(self):
        return self.components.shape[1]


def pca_fit(vectors, k) -> PcaModel:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("expected an N x D matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two vectors")
    if not 1 <= k <= d:
        raise ValueError(f"k={k} outside [1, D={d}]")
    mean = X.mean(axis=0)
    # beyond the data rank the basis is completed with zero-variance directions
    _, s, vt = np.linalg.svd(X - mean, full_matrices=k > min(n, d))
    # deterministic signs: largest-magnitude loading of each component is positive
    signs = np.sign(vt[np.arange(vt.shape[0]), np.argmax(np.abs(vt), axis=1)])
    signs[signs == 0] = 1.0
    vt *= signs[:, None]
    s = np.concatenate([s, np.zeros(vt.shape[0] - s.shape[0])])
    variance = s**2 / (n - 1)
    components, explained = vt[:k], variance[:k]
    if explained[-1] < 1e-12:
        warnings.warn(f"component {k} explains variance {explained[-1]:.3g}", RankDeficient, stacklevel=2)
    return PcaModel(mean, components, explained)


def pca_transform(model: PcaModel, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.n_features:
        raise DimensionMismatch(f"expected {model.n_features} features, got {v.shape[-1]}")
    return (v - model.mean) @ model.components.T


def pca_inverse_transform(model: PcaModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.n_components:
        raise DimensionMismatch(f"expected {model.n_components} components, got {z.shape[-1]}")
    return z @ model.components + model.mean


def save_pca(model: PcaModel, path):
    write_container(path, {"kind": "pca"}, {
        "mean": model.mean[None, :],
        "components": model.components,
        "explained_variance": model.explained_variance[None, :],
    })


def load_pca(path) -> PcaModel:
    header, m = read_container(path)
    if header.get("kind") != "pca":
        raise ValueError(f"{path} is not a PCA model")
    return PcaModel(m["mean"][0].astype(np.float64), m["components"].astype(np.float64),
                    m["explained_variance"][0].astype(np.float64))


class PCA(TransformerMixin, BaseEstimator):
    """Principal component projection via SVD of the centred data."""

    def __init__(self, n_components=50):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        self.model_ = pca_fit(X, self.n_components)
        self.mean_ = self.model_.mean
        self.components_ = self.model_.components
        self.explained_variance_ = self.model_.explained_variance
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return pca_transform(self.model_, X)

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        return pca_inverse_transform(self.model_, check_array(Z, dtype=np.float64))


def reduce_rias(train_vectors, test_vectors, k):
    """Fit PCA on train RIAs vectors only, project train and test."""
    X = np.array([v.values for v in train_vectors])
    model = pca_fit(X, k)
    project = lambda vs: [ExpertiseVector(v.developer_id, Source.RIAsPca, pca_transform(model, v.values)) for v in vs]
    return model, project(train_vectors), project(test_vectors)

