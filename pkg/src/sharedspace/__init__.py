"""Denoise word embeddings by averaging independently trained runs in a shared space.

Typical use::

    from sharedspace import align_vocabularies, load_embeddings, ssea

    ensemble = align_vocabularies([load_embeddings(p) for p in paths])
    fused, fit = ssea(ensemble)
"""

__version__ = "0.1.0"

from .embedding_store import (
    EmbeddingEnsemble,
    EmbeddingSet,
    align_vocabularies,
    center_and_normalize,
    load_embeddings,
    load_frequency_table,
    save_embeddings,
)
from .errors import ParseError, ValidationError
from .lexical_eval import (
    AnalogyDataset,
    EvalResult,
    SimilarityDataset,
    eval_analogy,
    eval_similarity,
    load_analogy_dataset,
    load_similarity_dataset,
    naive_average,
    spearman,
)
from .procrustes import (
    CrossCorrelationCache,
    FusedEmbedding,
    GpaConfig,
    TransformSet,
    alignment_score,
    compute_cross_correlations,
    compute_fused,
    gpa_fit,
    orthogonal_project,
    procrustes_align,
    ssea,
)
from .stability import (
    BinnedCurve,
    StabilityReport,
    average_stability,
    frequency_binned_mse,
    pairwise_mse,
    per_word_discrepancy,
)
from .synthetic import SynthConfig, generate_ensemble, random_orthogonal, recovery_error
