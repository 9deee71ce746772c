"""Unsupervised bot detection from daily tweet-activity time series.

The pipeline turns per-user tweet timelines into daily multivariate time
series, compresses them with an LSTM autoencoder, clusters the latent
representations, and labels clusters to separate bots from genuine users
(and bot types from each other).
"""

__version__ = "0.1.0"
