from .decoder import CaptionDecoder, DecoderBlock
from .losses import (DEFAULT_BETA, DEFAULT_EPSILON, DEFAULT_LAMBDA, LossReport, signal_loss,
                     smoothed_targets, sparse_mask_loss, training_losses)
from .vocab import (BOS_ID, EOS_ID, PAD_ID, SPECIALS, UNK_ID, TokenSeq, Vocab, VocabError,
                    detokenize, normalise, tokenize, tokenize_batch)

__all__ = [
    "CaptionDecoder", "DecoderBlock", "DEFAULT_BETA", "DEFAULT_EPSILON", "DEFAULT_LAMBDA",
    "LossReport", "signal_loss", "smoothed_targets", "sparse_mask_loss", "training_losses",
    "BOS_ID", "EOS_ID", "PAD_ID", "SPECIALS", "UNK_ID", "TokenSeq", "Vocab", "VocabError",
    "detokenize", "normalise", "tokenize", "tokenize_batch",
]
