"""Federated training loops with one-shot and baseline clustering."""
