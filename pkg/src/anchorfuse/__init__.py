"""Anchor-space fusion of frozen encoder embeddings.

Source encoders are mapped into a designated anchor space with ridge
regression, aggregated there, and read out with a small MLP. The package
also ships the diagnostics used to explain where fusion helps.
"""

__version__ = "0.1.0"
