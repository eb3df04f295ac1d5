from .captions import (BLEU_SMOOTHING, CIDER_SCALE, ROUGE_BETA, MetricError, align_exact, bleu,
                       cider, count_chunks, meteor_lite, modified_precision, ngrams, report,
                       rouge_l, to_corpus)

__all__ = [
    "BLEU_SMOOTHING", "CIDER_SCALE", "ROUGE_BETA", "MetricError", "align_exact", "bleu", "cider",
    "count_chunks", "meteor_lite", "modified_precision", "ngrams", "report", "rouge_l",
    "to_corpus",
]
