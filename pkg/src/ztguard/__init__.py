"""Zero-trust, zero-touch IoT DDoS detection simulator."""

__version__ = "0.1.0"
