"""Policy search for decentralized multi-robot planning with macro-actions."""

__version__ = "0.1.0"
