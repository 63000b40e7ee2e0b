"""Sparse superposition coding for the AWGN channel.

Partitioned-dictionary encoder, adaptive successive-threshold decoder,
analytical reliability bounds, a Reed-Solomon outer layer, and a Monte
Carlo harness tying them together.
"""

from .model import ChannelParams, CodeParams, c_tilde, derive_channel

__all__ = [
    "ChannelParams",
    "CodeParams",
    "c_tilde",
    "derive_channel",
]

__version__ = "1.0.0"
