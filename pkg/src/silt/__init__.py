"""Scheduled interleaved speech-text training at desk scale.

End-to-end pipeline over synthetic parallel corpora: discrete unit
extraction (k-means), CTC word alignment, word-level speech-text
interleaving with a decaying text ratio, chain-of-thought sequence
assembly, and a small trainable autoregressive LM with evaluation
and analysis tooling.
"""

__version__ = "0.1.0"
