"""Generate and evaluate synthetic flow-based network traffic with WGAN-GP."""

__version__ = "0.1.0"
