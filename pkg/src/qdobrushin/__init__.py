"""Quantum Dobrushin laboratory: balanced Lindbladians, Wasserstein-1 transport
and cluster-expansion update matrices for high-temperature Gibbs sampling."""

__version__ = "0.1.0"
