"""Phoneme-level emotion strength modeling.

Learns a relative-attribute ranking function (emotional vs. neutral speech),
turns fragment scores into normalized phoneme strengths, resamples them for
transfer, predicts them from phoneme sequences, and scores synthesis output
with DTW-aligned mel-cepstral distortion.
"""

__version__ = "0.1.0"
