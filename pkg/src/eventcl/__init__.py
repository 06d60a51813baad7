"""Event representation learning with prompt-template contrastive training."""

__version__ = "0.1.0"
