"""Plan-guided potential-based reward shaping for sparse-reward gridworlds."""

__version__ = "0.1.0"
