"""Entity-aware Transformer-XL encoder-decoder summarizer.

A desk-scale, verification-first implementation: a float64 autodiff core,
vanilla and relative-position attention with segment recurrence, TransE
knowledge-graph embeddings, a dual-channel (token + entity) encoder-decoder,
beam-search decoding, and a self-contained ROUGE scorer.
"""

__version__ = "0.1.0"

from .tensor import Tensor, Rng, ShapeError, MaskError, finite_diff_check

__all__ = ["Tensor", "Rng", "ShapeError", "MaskError", "finite_diff_check", "__version__"]
