"""Paragraph vectors (PV-DM and PV-DBOW) trained with negative sampling."""

from __future__ import annotations

import enum
import hashlib
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from ..errors import DuplicateTag, EmptyVocabulary, OOVOnly
from . import _kernels

logger = logging.getLogger(__name__)

NOISE_EXPONENT = 0.75


class Algorithm(str, enum.Enum):
    DM = "DM"
    DBOW = "DBOW"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Hyperparams:
    vector_size: int = 100
    window: int = 5
    min_count: int = 5
    algorithm: Algorithm = Algorithm.DM
    negative: int = 5
    epochs: int = 10
    alpha_initial: float = 0.025
    alpha_final: float = 1e-4
    seed: int = 0
    workers: int = 1
    train_word_vectors: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        for name in ("vector_size", "window", "min_count", "negative", "epochs", "workers"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive int, got {value!r}")
        if self.vector_size < 2:
            raise ValueError("vector_size must be >= 2")
        if not self.alpha_final < self.alpha_initial:
            raise ValueError("alpha_final must be smaller than alpha_initial")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    def to_dict(self):
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Vocabulary:
    tokens: list
    counts: np.ndarray
    min_count: int
    index: dict = field(init=False, repr=False)
    noise_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        weights = self.counts.astype(np.float64) ** NOISE_EXPONENT
        table = np.cumsum(weights) / weights.sum()
        table[-1] = 1.0
        self.noise_table = table

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    @property
    def total_count(self):
        return int(self.counts.sum())

    def count(self, token):
        return int(self.counts[self.index[token]])

    def encode(self, tokens):
        """Indices of in-vocabulary tokens; OOV tokens are dropped."""
        idx = self.index
        return np.array([idx[t] for t in tokens if t in idx], dtype=np.int32)


def _tokens_of(doc):
    return doc.tokens if hasattr(doc, "tokens") else doc


def build_vocabulary(docs, min_count) -> Vocabulary:
    """Count tokens over ``docs`` and keep those seen at least ``min_count`` times.

    Indices are ordered by descending frequency, ties broken lexically.
    """
    if not docs:
        raise EmptyVocabulary("no documents")
    counts = Counter()
    for doc in docs:
        counts.update(_tokens_of(doc))
    kept = sorted(((t, c) for t, c in counts.items() if c >= min_count), key=lambda tc: (-tc[1], tc[0]))
    if not kept:
        raise EmptyVocabulary(f"no token occurs at least {min_count} times")
    return Vocabulary([t for t, _ in kept], [c for _, c in kept], min_count)


def learning_rate(alpha_initial, alpha_final, fraction):
    """Linearly decayed rate after ``fraction`` of all updates."""
    return alpha_initial + fraction * (alpha_final - alpha_initial)


def sample_negatives(vocab, k, target_index, rng) -> np.ndarray:
    """Draw ``k`` noise indices from the count**0.75 distribution, never ``target_index``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(vocab) < 2:
        raise ValueError("negative sampling needs at least two vocabulary entries")
    out = np.empty(k, dtype=np.int64)
    filled = 0
    while filled < k:
        draws = np.searchsorted(vocab.noise_table, rng.random(k - filled), side="right")
        draws = np.minimum(draws, len(vocab) - 1)
        draws = draws[draws != target_index]
        out[filled:filled + len(draws)] = draws
        filled += len(draws)
    return out


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def negative_sampling_loss(h, target_index, negative_indices, W_out):
    u = np.asarray(W_out)
    pos = u[target_index] @ h
    neg = u[np.asarray(negative_indices)] @ h
    return -np.log(_sigmoid(pos)) - np.sum(np.log(_sigmoid(-neg)))


def sgd_step_gradients(h, target_index, negative_indices, model):
    """Analytic gradients of the negative-sampling loss.

    ``model`` is an EmbeddingModel or the output matrix itself. Returns
    ``(grad_h, grad_u_target, grad_u_negs)``; ``grad_u_negs`` has one row per
    negative index.
    """
    W_out = model.W_out if isinstance(model, EmbeddingModel) else np.asarray(model)
    h = np.asarray(h)
    negative_indices = np.asarray(negative_indices, dtype=np.int64)
    u_w = W_out[target_index]
    u_neg = W_out[negative_indices]
    s_pos = _sigmoid(u_w @ h)
    s_neg = _sigmoid(u_neg @ h)
    grad_u_target = (s_pos - 1.0) * h
    grad_u_negs = s_neg[:, None] * h[None, :]
    grad_h = (s_pos - 1.0) * u_w + s_neg @ u_neg
    return grad_h, grad_u_target, grad_u_negs


@dataclass
class EmbeddingModel:
    hyper: Hyperparams
    vocab: Vocabulary
    W_in: np.ndarray
    W_out: np.ndarray
    D: np.ndarray
    tags: list
    tag_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.tag_index = {t: i for i, t in enumerate(self.tags)}
        if len(self.tag_index) != len(self.tags):
            raise DuplicateTag("document tags must be unique")

    @property
    def vector_size(self):
        return self.hyper.vector_size

    def doc_vector(self, tag):
        return self.D[self.tag_index[tag]]

    def word_vector(self, token):
        return self.W_in[self.vocab.index[token]]

    def is_finite(self):
        return all(np.isfinite(m).all() for m in (self.W_in, self.W_out, self.D))

    def fingerprint(self):
        """SHA-256 over parameters, vocabulary, tags and hyperparameters."""
        h = hashlib.sha256()
        h.update(repr(sorted(self.hyper.to_dict().items())).encode())
        h.update("\0".join(self.vocab.tokens).encode())
        h.update(self.vocab.counts.tobytes())
        h.update("\0".join(self.tags).encode())
        for m in (self.W_in, self.W_out, self.D):
            h.update(np.ascontiguousarray(m).tobytes())
        return h.hexdigest()


def _flatten(encoded):
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    np.cumsum([len(e) for e in encoded], out=offsets[1:])
    flat = np.concatenate(encoded) if encoded else np.zeros(0, dtype=np.int32)
    return flat.astype(np.int32), offsets


def _run_epoch(workers, *args):
    if workers > 1:
        numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
        _kernels.run_epoch_parallel(*args)
    else:
        _kernels.run_epoch_serial(*args)


def probe_loss(model, docs, rng=None, k=None):
    """Mean negative-sampling loss of DBOW-style (doc -> word) pairs on ``docs``;
    a cheap finite-ness probe, not the training objective of DM."""
    rng = np.random.default_rng(0) if rng is None else rng
    k = k or model.hyper.negative
    losses = []
    for doc in docs:
        tag = doc.tag
        if tag not in model.tag_index:
            continue
        h = model.D[model.tag_index[tag]].astype(np.float64)
        for t in model.vocab.encode(doc.tokens)[:50]:
            negs = sample_negatives(model.vocab, k, int(t), rng)
            losses.append(negative_sampling_loss(h, int(t), negs, model.W_out.astype(np.float64)))
    return float(np.mean(losses)) if losses else 0.0


def train(docs, hyper: Hyperparams, callbacks=()) -> EmbeddingModel:
    """Train document (and word) vectors on tagged documents.

    ``callbacks`` are called as ``cb(model, epoch)`` after every epoch.
    With ``workers=1`` training is bit-for-bit reproducible for a seed.
    """
    docs = list(docs)
    tags = [d.tag for d in docs]
    if len(set(tags)) != len(tags):
        dupes = sorted(t for t, c in Counter(tags).items() if c > 1)
        raise DuplicateTag(f"duplicate document tags: {dupes[:5]}")
    vocab = build_vocabulary(docs, hyper.min_count)
    if len(vocab) < 2:
        raise EmptyVocabulary("negative sampling needs at least two vocabulary entries")

    d = hyper.vector_size
    rng = np.random.default_rng(hyper.seed)
    scale = 0.5 / d
    W_in = rng.uniform(-scale, scale, (len(vocab), d)).astype(np.float32)
    W_out = np.zeros((len(vocab), d), dtype=np.float32)
    D = rng.uniform(-scale, scale, (len(docs), d)).astype(np.float32)
    model = EmbeddingModel(hyper, vocab, W_in, W_out, D, tags)

    flat, offsets = _flatten([vocab.encode(doc.tokens) for doc in docs])
    rows = np.arange(len(docs), dtype=np.int64)
    n = len(flat)
    if n == 0:
        raise EmptyVocabulary("no in-vocabulary tokens to train on")
    dm = hyper.algorithm is Algorithm.DM
    # DM always learns word vectors; DBOW only when asked
    learn_words = dm or hyper.train_word_vectors
    for epoch in range(hyper.epochs):
        _run_epoch(
            hyper.workers, flat, offsets, rows, D, W_in, W_out, vocab.noise_table, dm,
            hyper.window, hyper.negative, hyper.alpha_initial, hyper.alpha_final,
            epoch * n, hyper.epochs * n, hyper.seed, epoch, True, learn_words, True,
        )
        if not model.is_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch + 1}")
        for cb in callbacks:
            cb(model, epoch)
    logger.info("trained %s model: %d docs, %d words, d=%d", hyper.algorithm, len(docs), len(vocab), d)
    return model


def infer(model: EmbeddingModel, tokens, infer_epochs=None, rng=None) -> np.ndarray:
    """Infer a vector for an unseen document with all model weights frozen.

    OOV tokens are removed before ``rng`` is touched, so they cannot change
    the result.
    """
    encoded = model.vocab.encode(tokens)
    if len(encoded) == 0:
        raise OOVOnly("no token of the document is in the model vocabulary")
    hyper = model.hyper
    epochs = hyper.epochs if infer_epochs is None else infer_epochs
    if epochs < 1:
        raise ValueError("infer_epochs must be >= 1")
    rng = np.random.default_rng(rng)
    d = hyper.vector_size
    vec = rng.uniform(-0.5 / d, 0.5 / d, (1, d)).astype(np.float32)
    seed = int(rng.integers(0, 2**63 - 1))

    offsets = np.array([0, len(encoded)], dtype=np.int64)
    rows = np.zeros(1, dtype=np.int64)
    n = len(encoded)
    dm = hyper.algorithm is Algorithm.DM
    for epoch in range(epochs):
        _kernels.run_epoch_serial(
            encoded, offsets, rows, vec, model.W_in, model.W_out, model.vocab.noise_table, dm,
            hyper.window, hyper.negative, hyper.alpha_initial, hyper.alpha_final,
            epoch * n, epochs * n, seed, epoch, True, False, False,
        )
    return vec[0]


