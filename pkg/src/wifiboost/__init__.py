"""Event-driven simulator of an enterprise LTE + Wi-Fi network with Wi-Fi Boost link management."""

__version__ = "0.1.0"
