"""Weakly supervised dot-detection networks: autograd engine, model zoo,
attention maps, synthetic grid datasets, training, and detection evaluation."""

__version__ = "0.1.0"
