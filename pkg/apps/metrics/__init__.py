"""Clustering agreement and classification scores."""
