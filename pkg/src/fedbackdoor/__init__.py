"""Deterministic simulator of federated averaging under independent
multi-adversary backdoor attacks, with norm-clipping and Gaussian-noise
defenses."""

__version__ = "0.1.0"
