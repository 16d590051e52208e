"""Restoration toolkit for damaged inscription corpora.

Submodules:

- ``corpus`` — raw-record normalization pipeline and split assignment
- ``vocab`` — character alphabet, capped word vocabulary, text encoding
- ``autodiff`` — reverse-mode differentiation core, Adam, clipping
- ``model`` — character(+word) seq2seq restoration model with attention
- ``trainer`` — example sampling and the training loop with checkpointing
- ``beam`` — beam-search hypothesis ranking and attention scaling
- ``evaluator`` — CER / Top-k metrics, evaluation protocol, full-text restoration
- ``lm`` — character-level recurrent language model baseline
- ``checkpoint`` — named-tensor checkpoint serialization
- ``service`` — HTTP restoration service with persistent sessions
"""

__version__ = "0.1.0"
