"""Saliency maps and insertion/deletion evaluation."""
