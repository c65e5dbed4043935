"""Clustering backends over the divergence matrix."""
