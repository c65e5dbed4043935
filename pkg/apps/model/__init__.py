"""Small feed-forward classifier, client optimizers and FedOpt aggregation."""
