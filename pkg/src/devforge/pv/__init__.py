from .estimator import ParagraphVectors
from .io import load, read_header, save
from .model import (
    Algorithm,
    EmbeddingModel,
    Hyperparams,
    Vocabulary,
    build_vocabulary,
    infer,
    learning_rate,
    negative_sampling_loss,
    sample_negatives,
    sgd_step_gradients,
    train,
)

__all__ = [
    "Algorithm", "EmbeddingModel", "Hyperparams", "ParagraphVectors", "Vocabulary",
    "build_vocabulary", "infer", "learning_rate", "load", "negative_sampling_loss", "read_header",
    "sample_negatives", "save", "sgd_step_gradients", "train",
]
