"""Two-level O-RAN resource slicing for URLLC offloading with double DQN agents."""

__version__ = "0.1.0"


class ConfigError(ValueError):
    """Invalid configuration or an instance too large for the requested operation."""
