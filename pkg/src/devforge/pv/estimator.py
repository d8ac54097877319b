"""scikit-learn style wrapper around paragraph-vector training."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..corpus import TaggedDocument
from .model import Hyperparams, infer, train


def as_tagged(X):
    """Accept TaggedDocuments or plain token lists (tagged by position)."""
    docs = []
    for i, doc in enumerate(X):
        if isinstance(doc, TaggedDocument):
            docs.append(doc)
        elif isinstance(doc, str):
            raise TypeError("expected token sequences, got a string; tokenize first")
        else:
            docs.append(TaggedDocument(str(i), doc))
    return docs


class ParagraphVectors(TransformerMixin, BaseEstimator):
    """Learn one vector per document.

    ``fit_transform`` returns the trained document vectors; ``transform``
    infers vectors for new documents against the frozen model.
    """

    def __init__(self, vector_size=100, window=5, min_count=5, algorithm="DM", negative=5,
                 epochs=10, alpha_initial=0.025, alpha_final=1e-4, seed=0, workers=1,
                 train_word_vectors=False, infer_epochs=None):
        self.vector_size = vector_size
        self.window = window
        self.min_count = min_count
        self.algorithm = algorithm
        self.negative = negative
        self.epochs = epochs
        self.alpha_initial = alpha_initial
        self.alpha_final = alpha_final
        self.seed = seed
        self.workers = workers
        self.train_word_vectors = train_word_vectors
        self.infer_epochs = infer_epochs

    def _hyper(self):
        params = self.get_params()
        params.pop("infer_epochs")
        return Hyperparams(**params)

    def fit(self, X, y=None):
        self.model_ = train(as_tagged(X), self._hyper())
        self.tags_ = list(self.model_.tags)
        self.n_features_out_ = self.vector_size
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).model_.D.astype(np.float64)

    def transform(self, X):
        check_is_fitted(self, "model_")
        docs = as_tagged(X)
        out = np.empty((len(docs), self.vector_size))
        for i, doc in enumerate(docs):
            rng = np.random.default_rng([self.seed, i])
            out[i] = infer(self.model_, doc.tokens, self.infer_epochs, rng)
        return out
