"""Hierarchical-decoder semantic parsing with semantic anchor supervision."""

__version__ = "0.1.0"

__all__ = [
    "tensor",
    "nn",
    "schema",
    "logical_form",
    "anchors",
    "executor",
    "vocab",
    "corpus",
    "datagen",
    "wikisql",
    "model",
    "decoding",
    "optim",
    "training",
    "analysis",
    "config",
    "manifest",
    "cli",
]
