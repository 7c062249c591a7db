"""Massive MIMO uplink simulator with autoencoder-compressed fronthaul."""

__version__ = "0.1.0"
