"""Few-shot metric-learning toolkit: small neural nets, Siamese training,
embedding analysis (PCA, t-SNE, K-Means, GMM) and classification metrics."""

__version__ = "0.1.0"
