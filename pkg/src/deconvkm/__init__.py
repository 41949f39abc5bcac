"""Deconvolution empirical risk minimisation for k-means on noisy data."""
