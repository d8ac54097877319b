"""Developer expertise embeddings learned from GitHub evidence."""

__version__ = "0.1.0"
