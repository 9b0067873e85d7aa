"""Uplink cloud-RAN backhaul compression: rates, quantization optimizers,
constant-gap certificates and a system-level simulator."""

__version__ = "0.1.0"

from .rates import ChannelState, QuantizationProfile, sum_rate, weighted_sum_rate  # noqa: E402,F401
