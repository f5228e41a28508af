"""Content models: topic HMMs for sentence ordering and extractive summarization."""

__version__ = "0.1.0"

from .clustering import Clustering, CompleteLinkClustering, complete_link_cluster, merge_small_clusters
from .content_model import BigramBaseline, ContentModel, forward_logprob, viterbi_decode
from .corpus import Corpus, Document, Sentence, Vocabulary, load_corpus, split_sentences, tokenize_and_mask
from .ordering import PermutationCap, evaluate_ordering, kendall_tau, rank_oso
from .summarization import (AlignedPair, ContentSummarizer, SummaryModel, align_summary, extraction_accuracy,
                            lead_baseline, summarize, train_summarizer)
from .synth import PlantedSpec, generate_corpus
from .training import ContentModelEstimator, ConvergenceWarning, TrainConfig, build_content_model, tune_parameters

__all__ = [
    "AlignedPair", "BigramBaseline", "Clustering", "CompleteLinkClustering", "ContentModel",
    "ContentModelEstimator", "ContentSummarizer", "ConvergenceWarning", "Corpus", "Document",
    "PermutationCap", "PlantedSpec", "Sentence", "SummaryModel", "TrainConfig", "Vocabulary",
    "align_summary", "build_content_model", "complete_link_cluster", "evaluate_ordering",
    "extraction_accuracy", "forward_logprob", "generate_corpus", "kendall_tau", "lead_baseline",
    "load_corpus", "merge_small_clusters", "rank_oso", "split_sentences", "summarize",
    "tokenize_and_mask", "train_summarizer", "tune_parameters", "viterbi_decode",
]
