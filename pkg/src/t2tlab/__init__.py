"""Desk-scale laboratory for cross-lingual text-to-text pretraining.

Pipeline: cipher corpora with gold alignments -> span-corruption task
builders (SC/MT/TPSC/TSC) -> grouped partially non-autoregressive training
of a small encoder-decoder transformer -> constrained text-to-text
fine-tuning -> retrieval / alignment / overlap metrics with figures.
"""

__version__ = "0.1.0"
