"""Teacher-guided one-shot pruning with context-aware distillation."""

__version__ = "0.1.0"
