"""Experiments app: configuration, run orchestration and result persistence."""
