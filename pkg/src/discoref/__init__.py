"""Discourse-informed mention-ranking coreference at desk scale.

Submodules: corpus_io (CoNLL files), rst_tree (discourse trees), features,
scorer (pair network and training), decoder, metrics, analysis, synth, cli.
"""

__version__ = "0.1.0"
