"""Synthetic data-generating processes and federated splits."""
