"""FANET routing-attack simulation and federated few-shot intrusion detection."""

__version__ = "0.1.0"
